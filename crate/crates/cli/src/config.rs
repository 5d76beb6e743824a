//! Run configuration: one flat struct covering every knob a command reads,
//! loadable from a `key = value` file and overridable per flag.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use scrm_core::config::{AblationFlags, TrainConfig};
use scrm_core::synth::SynthConfig;

/// Every setting a run can depend on. The `key = value` serialization lists
/// fields in declaration order; writing a config and loading it back yields
/// an identical struct, so a saved effective config reproduces its run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // model and training
    pub d0: usize,
    pub d1: usize,
    pub k_m: usize,
    pub wgat_layers: usize,
    pub k_zeta: usize,
    pub tau: f64,
    pub tau_anneal: f64,
    pub lr: f64,
    pub l2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub n_neg: usize,
    pub patience: usize,
    pub filter_passes: usize,
    pub seed: u64,
    /// Variant switches as a comma list (`no_denoise,sub_only`), or `full`.
    pub ablate: String,
    // paths
    pub events_in: PathBuf,
    pub graphs_out: PathBuf,
    pub checkpoint: PathBuf,
    pub report_out: PathBuf,
    // dataset preparation
    pub min_item_support: u64,
    pub min_session_len: usize,
    pub n_valid: usize,
    pub n_test: usize,
    // synthetic corpus
    pub n_items: usize,
    pub n_sub_clusters: usize,
    pub n_comp_pairs: usize,
    pub n_sessions: usize,
    pub session_len_range: (usize, usize),
    pub noise_rate: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let s = SynthConfig::default();
        RunConfig {
            d0: t.d0,
            d1: t.d1,
            k_m: t.k_m,
            wgat_layers: t.wgat_layers,
            k_zeta: t.k_zeta,
            tau: t.tau,
            tau_anneal: t.tau_anneal,
            lr: t.lr,
            l2: t.l2,
            gamma1: t.gamma1,
            gamma2: t.gamma2,
            batch_size: t.batch_size,
            epochs: t.epochs,
            n_neg: t.n_neg,
            patience: t.patience,
            filter_passes: t.filter_passes,
            seed: t.seed,
            ablate: "full".into(),
            events_in: "events.csv".into(),
            graphs_out: "graphs".into(),
            checkpoint: "model.ckpt".into(),
            report_out: "report.json".into(),
            min_item_support: 5,
            min_session_len: 2,
            n_valid: 300,
            n_test: 300,
            n_items: s.n_items,
            n_sub_clusters: s.n_sub_clusters,
            n_comp_pairs: s.n_comp_pairs,
            n_sessions: s.n_sessions,
            session_len_range: s.len_range,
            noise_rate: s.noise_rate,
        }
    }
}

pub fn parse_len_range(s: &str) -> Result<(usize, usize)> {
    let (lo, hi) = s
        .split_once('-')
        .ok_or_else(|| anyhow!("expected lo-hi, got {s:?}"))?;
    Ok((
        lo.trim().parse().with_context(|| format!("bad range start {lo:?}"))?,
        hi.trim().parse().with_context(|| format!("bad range end {hi:?}"))?,
    ))
}

impl RunConfig {
    /// Apply one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse()
                .map_err(|e| anyhow!("bad value for {key}: {value:?} ({e})"))
        }
        match key {
            "d0" => self.d0 = num(key, value)?,
            "d1" => self.d1 = num(key, value)?,
            "k_m" => self.k_m = num(key, value)?,
            "wgat_layers" => self.wgat_layers = num(key, value)?,
            "k_zeta" => self.k_zeta = num(key, value)?,
            "tau" => self.tau = num(key, value)?,
            "tau_anneal" => self.tau_anneal = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "l2" => self.l2 = num(key, value)?,
            "gamma1" => self.gamma1 = num(key, value)?,
            "gamma2" => self.gamma2 = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "n_neg" => self.n_neg = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "filter_passes" => self.filter_passes = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "ablate" => self.ablate = value.to_string(),
            "events_in" => self.events_in = value.into(),
            "graphs_out" => self.graphs_out = value.into(),
            "checkpoint" => self.checkpoint = value.into(),
            "report_out" => self.report_out = value.into(),
            "min_item_support" => self.min_item_support = num(key, value)?,
            "min_session_len" => self.min_session_len = num(key, value)?,
            "n_valid" => self.n_valid = num(key, value)?,
            "n_test" => self.n_test = num(key, value)?,
            "n_items" => self.n_items = num(key, value)?,
            "n_sub_clusters" => self.n_sub_clusters = num(key, value)?,
            "n_comp_pairs" => self.n_comp_pairs = num(key, value)?,
            "n_sessions" => self.n_sessions = num(key, value)?,
            "session_len_range" => {
                self.session_len_range =
                    parse_len_range(value).with_context(|| format!("bad value for {key}"))?
            }
            "noise_rate" => self.noise_rate = num(key, value)?,
            _ => bail!("unknown config key {key:?}"),
        }
        Ok(())
    }

    /// Apply a whole config file: one `key = value` per line, `#` comments
    /// and blank lines ignored, later assignments winning.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (ix, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value, got {line:?}", ix + 1))?;
            self.set(key.trim(), value.trim())
                .with_context(|| format!("line {}", ix + 1))?;
        }
        Ok(())
    }

    /// Serialize in the flat file format; `apply_file` on the result
    /// reproduces the struct exactly.
    pub fn to_file_string(&self) -> String {
        let mut out = String::from("# scrm run configuration\n");
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            writeln!(out, "{k} = {v}").expect("string write cannot fail")
        };
        kv("d0", &self.d0);
        kv("d1", &self.d1);
        kv("k_m", &self.k_m);
        kv("wgat_layers", &self.wgat_layers);
        kv("k_zeta", &self.k_zeta);
        kv("tau", &self.tau);
        kv("tau_anneal", &self.tau_anneal);
        kv("lr", &self.lr);
        kv("l2", &self.l2);
        kv("gamma1", &self.gamma1);
        kv("gamma2", &self.gamma2);
        kv("batch_size", &self.batch_size);
        kv("epochs", &self.epochs);
        kv("n_neg", &self.n_neg);
        kv("patience", &self.patience);
        kv("filter_passes", &self.filter_passes);
        kv("seed", &self.seed);
        kv("ablate", &self.ablate);
        kv("events_in", &self.events_in.display());
        kv("graphs_out", &self.graphs_out.display());
        kv("checkpoint", &self.checkpoint.display());
        kv("report_out", &self.report_out.display());
        kv("min_item_support", &self.min_item_support);
        kv("min_session_len", &self.min_session_len);
        kv("n_valid", &self.n_valid);
        kv("n_test", &self.n_test);
        kv("n_items", &self.n_items);
        kv("n_sub_clusters", &self.n_sub_clusters);
        kv("n_comp_pairs", &self.n_comp_pairs);
        kv("n_sessions", &self.n_sessions);
        kv(
            "session_len_range",
            &format!("{}-{}", self.session_len_range.0, self.session_len_range.1),
        );
        kv("noise_rate", &self.noise_rate);
        out
    }

    /// Parse the `ablate` switch list into variant flags.
    pub fn ablation(&self) -> Result<AblationFlags> {
        let mut flags = AblationFlags::default();
        let switches = self.ablate.trim();
        if switches.is_empty() || switches == "full" {
            return Ok(flags);
        }
        for raw in switches.split(',') {
            let switch = raw.trim().replace('-', "_");
            match switch.as_str() {
                "no_ex" => flags.no_ex = true,
                "no_se" => flags.no_se = true,
                "no_denoise" => flags.no_denoise = true,
                "sub_only" => flags.sub_only = true,
                "comp_only" => flags.comp_only = true,
                "mix_graphs" => flags.mix_graphs = true,
                "no_integration" => flags.no_integration = true,
                _ => bail!(
                    "unknown ablation switch {raw:?} (expected no_ex, no_se, no_denoise, \
                     sub_only, comp_only, mix_graphs or no_integration)"
                ),
            }
        }
        Ok(flags)
    }

    /// Validated training configuration for this run.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            d0: self.d0,
            d1: self.d1,
            k_m: self.k_m,
            wgat_layers: self.wgat_layers,
            k_zeta: self.k_zeta,
            tau: self.tau,
            tau_anneal: self.tau_anneal,
            lr: self.lr,
            l2: self.l2,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            batch_size: self.batch_size,
            epochs: self.epochs,
            n_neg: self.n_neg,
            patience: self.patience,
            filter_passes: self.filter_passes,
            seed: self.seed,
            ablation: self.ablation()?,
        };
        Ok(cfg.validated()?)
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_items: self.n_items,
            n_sub_clusters: self.n_sub_clusters,
            n_comp_pairs: self.n_comp_pairs,
            n_sessions: self.n_sessions,
            len_range: self.session_len_range,
            noise_rate: self.noise_rate,
            seed: self.seed,
        }
    }
}

/// Per-flag overrides shared by every subcommand; unset flags leave the
/// config-file (or default) value in place.
#[derive(Debug, Default, clap::Args)]
pub struct Overrides {
    /// Flat `key = value` config file applied before any flags.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Raw item embedding width.
    #[arg(long)]
    pub d0: Option<usize>,
    /// Attention output width.
    #[arg(long)]
    pub d1: Option<usize>,
    /// Attention heads per graph branch.
    #[arg(long)]
    pub k_m: Option<usize>,
    /// Stacked attention layers per branch.
    #[arg(long)]
    pub wgat_layers: Option<usize>,
    /// Edges kept per node after denoising.
    #[arg(long)]
    pub k_zeta: Option<usize>,
    /// Gumbel-Softmax temperature.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Per-epoch temperature decay factor.
    #[arg(long)]
    pub tau_anneal: Option<f64>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// L2 weight decay.
    #[arg(long)]
    pub l2: Option<f64>,
    /// Exclusivity loss weight.
    #[arg(long)]
    pub gamma1: Option<f64>,
    /// Semantic loss weight.
    #[arg(long)]
    pub gamma2: Option<f64>,
    /// Prefixes per mini-batch.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Maximum training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Negative items per semantic-loss anchor.
    #[arg(long)]
    pub n_neg: Option<usize>,
    /// Early-stop patience in epochs.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Support-filter sweeps during ingestion.
    #[arg(long)]
    pub filter_passes: Option<usize>,
    /// Seed for init, shuffling, sampling and synthesis.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma list of variant switches (e.g. no_denoise), or `full`.
    #[arg(long)]
    pub ablate: Option<String>,
    /// Behavior-event CSV to read (or write, for synth).
    #[arg(long, value_name = "FILE")]
    pub events_in: Option<PathBuf>,
    /// Directory for graph TSVs and stats.
    #[arg(long, value_name = "DIR")]
    pub graphs_out: Option<PathBuf>,
    /// Model checkpoint path.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Metric or ablation report path.
    #[arg(long, value_name = "FILE")]
    pub report_out: Option<PathBuf>,
    /// Drop items seen fewer times than this.
    #[arg(long)]
    pub min_item_support: Option<u64>,
    /// Drop sessions shorter than this after item filtering.
    #[arg(long)]
    pub min_session_len: Option<usize>,
    /// Validation sessions taken from the recent end.
    #[arg(long)]
    pub n_valid: Option<usize>,
    /// Test sessions taken from the most recent end.
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Synthetic catalog size.
    #[arg(long)]
    pub n_items: Option<usize>,
    /// Interchangeable-item clusters in the synthetic catalog.
    #[arg(long)]
    pub n_sub_clusters: Option<usize>,
    /// Planted cross-cluster complement pairs.
    #[arg(long)]
    pub n_comp_pairs: Option<usize>,
    /// Synthetic sessions to generate.
    #[arg(long)]
    pub n_sessions: Option<usize>,
    /// Inclusive events-per-session range, as lo-hi.
    #[arg(long, value_name = "LO-HI")]
    pub session_len_range: Option<String>,
    /// Probability of inserting a random event after each step.
    #[arg(long)]
    pub noise_rate: Option<f64>,
}

impl Overrides {
    /// Defaults, then the config file, then explicit flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            cfg.apply_file(&text)
                .with_context(|| format!("config file {}", path.display()))?;
        }
        macro_rules! take {
            ($($field:ident),* $(,)?) => {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone(); })*
            };
        }
        take!(
            d0, d1, k_m, wgat_layers, k_zeta, tau, tau_anneal, lr, l2, gamma1, gamma2,
            batch_size, epochs, n_neg, patience, filter_passes, seed, ablate, events_in,
            graphs_out, checkpoint, report_out, min_item_support, min_session_len, n_valid,
            n_test, n_items, n_sub_clusters, n_comp_pairs, n_sessions, noise_rate,
        );
        if let Some(r) = &self.session_len_range {
            cfg.session_len_range = parse_len_range(r).context("--session-len-range")?;
        }
        cfg.ablation()?;
        Ok(cfg)
    }
}
