//! Training configuration: hyperparameters and model-variant flags.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which parts of the model a run uses. The defaults give the full model;
/// each flag switches one piece off for comparison runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    /// Drop the exclusivity loss term.
    pub no_ex: bool,
    /// Drop the semantic similarity loss term.
    pub no_se: bool,
    /// Skip edge denoising; attention runs over all edges with ζ = w.
    pub no_denoise: bool,
    /// Substitutable branch only; fused item embedding = that branch's output.
    pub sub_only: bool,
    /// Complementary branch only.
    pub comp_only: bool,
    /// Single branch over the union of both graphs' edges.
    pub mix_graphs: bool,
    /// Keep the two branches fully decoupled (θ terms dropped).
    pub no_integration: bool,
}

impl AblationFlags {
    /// True when only one attention branch runs (single graph or merged).
    pub fn single_branch(self) -> bool {
        self.sub_only || self.comp_only || self.mix_graphs
    }

    /// Canonical variant name used in reports and checkpoint metadata.
    pub fn variant_name(self) -> &'static str {
        if self.mix_graphs {
            "mix"
        } else if self.sub_only {
            "sub-only"
        } else if self.comp_only {
            "comp-only"
        } else if self.no_denoise {
            "no-denoise"
        } else if self.no_integration {
            "no-integration"
        } else if self.no_ex && self.no_se {
            "rec-loss-only"
        } else if self.no_ex {
            "no-ex"
        } else if self.no_se {
            "no-se"
        } else {
            "full"
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub d0: usize,
    pub d1: usize,
    /// Attention heads per graph branch.
    pub k_m: usize,
    /// Stacked attention layers per branch (1 unless experimenting).
    pub wgat_layers: usize,
    /// Edges kept per node after denoising, self-loop excluded.
    pub k_zeta: usize,
    /// Gumbel-Softmax temperature, fixed unless `tau_anneal` < 1.
    pub tau: f64,
    /// Per-epoch multiplicative temperature decay; 1.0 disables annealing.
    pub tau_anneal: f64,
    pub lr: f64,
    pub l2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Irrelevant items drawn per anchor for the semantic loss.
    pub n_neg: usize,
    /// Early-stop patience in epochs without a validation MRR@10 improvement.
    pub patience: usize,
    /// Item/session filter sweeps during ingestion.
    pub filter_passes: usize,
    pub seed: u64,
    pub ablation: AblationFlags,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d0: 128,
            d1: 128,
            k_m: 2,
            wgat_layers: 1,
            k_zeta: 4,
            tau: 0.01,
            tau_anneal: 1.0,
            lr: 0.001,
            l2: 1e-7,
            gamma1: 0.2,
            gamma2: 0.3,
            batch_size: 100,
            epochs: 30,
            n_neg: 1,
            patience: 5,
            filter_passes: 1,
            seed: 42,
            ablation: AblationFlags::default(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config field {0} must be positive")]
    NonPositive(&'static str),
    #[error("config field {field} is not finite: {value}")]
    NotFinite { field: &'static str, value: f64 },
    #[error("conflicting variant flags: {0}")]
    ConflictingFlags(String),
}

impl TrainConfig {
    /// Validate ranges and flag combinations, and force the loss flags
    /// implied by single-branch variants (no separated embeddings exist for
    /// the auxiliary losses to act on).
    pub fn validated(mut self) -> Result<Self, ConfigError> {
        for (name, v) in [
            ("d0", self.d0),
            ("d1", self.d1),
            ("k_m", self.k_m),
            ("wgat_layers", self.wgat_layers),
            ("k_zeta", self.k_zeta),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("filter_passes", self.filter_passes),
        ] {
            if v == 0 {
                return Err(ConfigError::NonPositive(name));
            }
        }
        for (name, v) in [
            ("tau", self.tau),
            ("tau_anneal", self.tau_anneal),
            ("lr", self.lr),
        ] {
            if !(v > 0.0) {
                return Err(ConfigError::NonPositive(name));
            }
        }
        for (name, v) in [
            ("l2", self.l2),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(ConfigError::NotFinite { field: name, value: v });
            }
        }
        let f = self.ablation;
        let exclusive = [f.sub_only, f.comp_only, f.mix_graphs];
        if exclusive.iter().filter(|&&b| b).count() > 1 {
            return Err(ConfigError::ConflictingFlags(
                "sub_only, comp_only and mix_graphs are mutually exclusive".into(),
            ));
        }
        if f.single_branch() && f.no_integration {
            return Err(ConfigError::ConflictingFlags(
                "no_integration is meaningless with a single branch".into(),
            ));
        }
        if f.single_branch() {
            self.ablation.no_ex = true;
            self.ablation.no_se = true;
        }
        Ok(self)
    }
}
