//! Variant sweep: trains every model variant over several seeds and
//! tabulates test-split metrics for comparison.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{AblationFlags, TrainConfig};
use crate::eval::{evaluate, EvalError, MetricCell, ModelScorer};
use crate::graphs::RelationGraph;
use crate::ingest::DatasetSplit;
use crate::model::forward::PreparedGraphs;
use crate::train::{train, TrainError};

#[derive(Debug, Error)]
pub enum AblateError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// The full model plus the seven single-switch variants.
pub fn standard_variants() -> Vec<AblationFlags> {
    let base = AblationFlags::default();
    vec![
        base,
        AblationFlags { no_ex: true, ..base },
        AblationFlags { no_se: true, ..base },
        AblationFlags { no_denoise: true, ..base },
        AblationFlags { sub_only: true, ..base },
        AblationFlags { comp_only: true, ..base },
        AblationFlags { mix_graphs: true, ..base },
        AblationFlags { no_integration: true, ..base },
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: String,
    /// Test-split metrics at the report cutoff, one cell per seed.
    pub per_seed: Vec<MetricCell>,
    pub mean: MetricCell,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub k: usize,
    pub seeds: Vec<u64>,
    pub results: Vec<VariantResult>,
}

impl AblationReport {
    pub fn result(&self, variant: &str) -> Option<&VariantResult> {
        self.results.iter().find(|r| r.variant == variant)
    }

    /// Fixed-width comparison table, one row per variant.
    pub fn table(&self) -> String {
        let k = self.k;
        let mut out = format!(
            "{:<16} {:>8} {:>8} {:>8}\n",
            "variant",
            format!("HR@{k}"),
            format!("MRR@{k}"),
            format!("NDCG@{k}")
        );
        for r in &self.results {
            out.push_str(&format!(
                "{:<16} {:>8.4} {:>8.4} {:>8.4}\n",
                r.variant, r.mean.hr, r.mean.mrr, r.mean.ndcg
            ));
        }
        out
    }
}

fn mean_cell(cells: &[MetricCell]) -> MetricCell {
    let n = cells.len() as f64;
    MetricCell {
        hr: cells.iter().map(|c| c.hr).sum::<f64>() / n,
        mrr: cells.iter().map(|c| c.mrr).sum::<f64>() / n,
        ndcg: cells.iter().map(|c| c.ndcg).sum::<f64>() / n,
    }
}

/// Train and evaluate every standard variant for each seed. `base` supplies
/// all hyperparameters except the variant flags and seed.
pub fn run_ablation(
    sub: &RelationGraph,
    comp: &RelationGraph,
    split: &DatasetSplit,
    base: &TrainConfig,
    seeds: &[u64],
    k: usize,
) -> Result<AblationReport, AblateError> {
    let mut results = Vec::new();
    for flags in standard_variants() {
        let mut per_seed = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let cfg = TrainConfig {
                ablation: flags,
                seed,
                ..base.clone()
            };
            let graphs = PreparedGraphs::new(sub.clone(), comp.clone(), flags);
            let outcome = train(&graphs, split, &cfg)?;
            let scorer = ModelScorer::new(&outcome.params, &graphs, cfg.k_zeta, cfg.tau);
            let table = evaluate(&scorer, &split.test.prefixes, &[k])?;
            per_seed.push(table.per_k[&k]);
            log::info!(
                "ablation {} seed {seed}: MRR@{k} {:.4} (best epoch {})",
                flags.variant_name(),
                per_seed.last().unwrap().mrr,
                outcome.best_epoch
            );
        }
        results.push(VariantResult {
            variant: flags.variant_name().to_string(),
            mean: mean_cell(&per_seed),
            per_seed,
        });
    }
    Ok(AblationReport {
        k,
        seeds: seeds.to_vec(),
        results,
    })
}
