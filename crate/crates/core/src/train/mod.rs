//! Mini-batch training: batch gradient assembly and the Adam epoch loop.

pub mod adam;
pub mod losses;
pub mod sampling;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, TrainConfig};
use crate::eval::{evaluate, ModelScorer};
use crate::ingest::{DatasetSplit, LabeledPrefix};
use crate::math::add_outer;
use crate::model::denoise::DenoiseMode;
use crate::model::forward::{
    item_pipeline, pipeline_backward, predict_scores, session_backward, session_forward,
    PreparedGraphs,
};
use crate::model::{ModelDims, ModelError, ModelParams};

pub use adam::AdamState;
pub use losses::{LossTerms, RelationSample};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("training split has no prefixes")]
    EmptyTrain,
    #[error("non-finite gradient in {tensor} (epoch {epoch}, batch {batch})")]
    NonFiniteGradient {
        tensor: String,
        epoch: usize,
        batch: usize,
    },
}

/// Multipliers each loss term enters the objective with. Training uses
/// (1, γ1, γ2) with disabled terms zeroed; gradient checks isolate terms by
/// zeroing the others.
#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub rec: f64,
    pub ex: f64,
    pub se: f64,
}

/// Pre-drawn partners for the auxiliary losses, so a batch evaluation is a
/// deterministic function of parameters once the survivor sets are fixed.
#[derive(Debug, Clone, Default)]
pub struct BatchSamples {
    pub ex_pairs: Vec<(usize, usize)>,
    pub se_samples: Vec<RelationSample>,
}

/// Forward + backward over one batch. Returns the raw loss terms and the
/// gradient of `weights · losses` for every parameter.
///
/// `fixed_keep` pins the denoising survivor sets (see `item_pipeline`); with
/// it and `DenoiseMode::Deterministic` the result is rng-independent.
#[allow(clippy::too_many_arguments)]
pub fn compute_batch<R: Rng>(
    params: &ModelParams,
    graphs: &PreparedGraphs,
    prefixes: &[&LabeledPrefix],
    samples: &BatchSamples,
    weights: &LossWeights,
    k_zeta: usize,
    tau: f64,
    mode: DenoiseMode,
    rng: &mut R,
    fixed_keep: Option<(&[Vec<usize>], &[Vec<usize>])>,
) -> (LossTerms, ModelParams) {
    let pipe = item_pipeline(params, graphs, k_zeta, tau, mode, rng, fixed_keep);
    let n = pipe.x.nrows();
    let d1 = params.dims.d1;
    let mut grads = params.zeros_like();
    let mut d_x = Array2::zeros((n, d1));

    let mut l_r = 0.0;
    if !prefixes.is_empty() {
        let scale = weights.rec / prefixes.len() as f64;
        for p in prefixes {
            let items: Vec<usize> = p.input.iter().map(|&(item, _)| item).collect();
            let sess = session_forward(&pipe.x, &items, params);
            let (_, yhat) = predict_scores(&sess.s, &pipe.x);
            l_r += losses::loss_rec(&yhat, p.target);
            if weights.rec != 0.0 {
                let d_scores = losses::loss_rec_backward(&yhat, p.target, scale);
                // scores = X s ⇒ d_s = Xᵀ d_scores, d_X += d_scores sᵀ
                let d_s = pipe.x.t().dot(&d_scores);
                add_outer(&mut d_x, d_scores.view(), sess.s.view());
                session_backward(&pipe.x, params, &sess, &d_s, &mut d_x, &mut grads);
            }
        }
        l_r /= prefixes.len() as f64;
    }

    let mut l_ex = 0.0;
    let mut d_xs_extra = None;
    let mut d_xc_extra = None;
    if weights.ex != 0.0 && !samples.ex_pairs.is_empty() {
        let xs = pipe.xs.as_ref().expect("exclusivity needs both branches");
        let xc = pipe.xc.as_ref().expect("exclusivity needs both branches");
        l_ex = losses::loss_exclusive(&samples.ex_pairs, xs, xc);
        let mut dxs = Array2::zeros((n, d1));
        let mut dxc = Array2::zeros((n, d1));
        losses::loss_exclusive_backward(&samples.ex_pairs, xs, xc, weights.ex, &mut dxs, &mut dxc);
        d_xs_extra = Some(dxs);
        d_xc_extra = Some(dxc);
    }

    let mut l_se = 0.0;
    if weights.se != 0.0 {
        if samples.se_samples.is_empty() {
            log::warn!("no relation samples in batch; semantic loss contributes 0");
        } else {
            l_se = losses::loss_semantic(&samples.se_samples, &pipe.x);
            losses::loss_semantic_backward(&samples.se_samples, &pipe.x, weights.se, &mut d_x);
        }
    }

    pipeline_backward(params, &pipe, d_x, d_xs_extra, d_xc_extra, &mut grads);

    (
        LossTerms {
            l_r,
            l_ex,
            l_se,
            w_rec: weights.rec,
            w_ex: weights.ex,
            w_se: weights.se,
        },
        grads,
    )
}

/// One line of the training log, serialized as JSONL by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    #[serde(rename = "L_r")]
    pub l_r: f64,
    #[serde(rename = "L_ex")]
    pub l_ex: f64,
    #[serde(rename = "L_se")]
    pub l_se: f64,
    pub total: f64,
    #[serde(rename = "valid_HR@10")]
    pub valid_hr10: f64,
    #[serde(rename = "valid_MRR@10")]
    pub valid_mrr10: f64,
    #[serde(rename = "valid_NDCG@10")]
    pub valid_ndcg10: f64,
    pub wall_ms: u64,
}

pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation MRR@10 (final epoch
    /// when the validation split is empty).
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Full training run: seeded init, shuffled mini-batches with stochastic
/// denoising, Adam updates, per-epoch deterministic validation, early
/// stopping on validation MRR@10.
pub fn train(
    graphs: &PreparedGraphs,
    split: &DatasetSplit,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    let cfg = cfg.clone().validated()?;
    if split.train.prefixes.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    let dims = ModelDims {
        n_items: graphs.primary.num_items,
        d0: cfg.d0,
        d1: cfg.d1,
        k_m: cfg.k_m,
        wgat_layers: cfg.wgat_layers,
    };
    let mut params = ModelParams::init_gaussian(dims, cfg.seed)?;
    let mut adam = AdamState::new(&params, cfg.lr, cfg.l2);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let weights = LossWeights {
        rec: 1.0,
        ex: if cfg.ablation.no_ex { 0.0 } else { cfg.gamma1 },
        se: if cfg.ablation.no_se { 0.0 } else { cfg.gamma2 },
    };

    let mut order: Vec<usize> = (0..split.train.prefixes.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut since_best = 0usize;

    for epoch in 0..cfg.epochs {
        let started = std::time::Instant::now();
        let tau_e = cfg.tau * cfg.tau_anneal.powi(epoch as i32);
        order.shuffle(&mut rng);

        let mut sums = (0.0, 0.0, 0.0, 0.0);
        let mut seen = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&LabeledPrefix> =
                chunk.iter().map(|&i| &split.train.prefixes[i]).collect();
            let items = sampling::batch_items(&batch);
            let mut samples = BatchSamples::default();
            if weights.ex != 0.0 {
                samples.ex_pairs = sampling::sample_exclusive_pairs(&items, &mut rng);
            }
            if weights.se != 0.0 {
                let comp = graphs
                    .secondary
                    .as_ref()
                    .expect("semantic loss needs both relation graphs");
                samples.se_samples = sampling::sample_relation_triples(
                    &items,
                    &graphs.primary,
                    comp,
                    dims.n_items,
                    cfg.n_neg,
                    &mut rng,
                );
            }
            let (terms, grads) = compute_batch(
                &params,
                graphs,
                &batch,
                &samples,
                &weights,
                cfg.k_zeta,
                tau_e,
                DenoiseMode::Stochastic,
                &mut rng,
                None,
            );
            if let Some(tensor) = params_first_non_finite(&grads) {
                return Err(TrainError::NonFiniteGradient {
                    tensor,
                    epoch,
                    batch: batch_idx,
                });
            }
            adam.step(&mut params, &grads);
            let w = chunk.len() as f64;
            sums.0 += w * terms.l_r;
            sums.1 += w * terms.l_ex;
            sums.2 += w * terms.l_se;
            sums.3 += w * terms.total();
            seen += chunk.len();
        }
        let denom = seen as f64;

        let (hr, mrr, ndcg) = if split.valid.prefixes.is_empty() {
            (0.0, 0.0, 0.0)
        } else {
            let scorer = ModelScorer::new(&params, graphs, cfg.k_zeta, cfg.tau);
            let table = evaluate(&scorer, &split.valid.prefixes, &[10])
                .expect("validation split is non-empty");
            let cell = &table.per_k[&10];
            (cell.hr, cell.mrr, cell.ndcg)
        };

        log.push(EpochLog {
            epoch,
            l_r: sums.0 / denom,
            l_ex: sums.1 / denom,
            l_se: sums.2 / denom,
            total: sums.3 / denom,
            valid_hr10: hr,
            valid_mrr10: mrr,
            valid_ndcg10: ndcg,
            wall_ms: started.elapsed().as_millis() as u64,
        });

        // No validation split means nothing to select on: keep the final
        // parameters and never stop early.
        if !split.valid.prefixes.is_empty() {
            let improved = best.as_ref().is_none_or(|(b, _, _)| mrr > *b);
            if improved {
                best = Some((mrr, epoch, params.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if cfg.patience > 0 && since_best >= cfg.patience {
                    log::info!("early stop at epoch {epoch} (no improvement for {since_best})");
                    break;
                }
            }
        }
    }

    let (best_epoch, best_params) = match best {
        Some((_, e, p)) if !split.valid.prefixes.is_empty() => (e, p),
        _ => (log.len() - 1, params),
    };
    Ok(TrainOutcome {
        params: best_params,
        log,
        best_epoch,
    })
}

fn params_first_non_finite(grads: &ModelParams) -> Option<String> {
    for (name, t) in grads.visit() {
        if t.as_slice().iter().any(|x| !x.is_finite()) {
            return Some(name);
        }
    }
    None
}
