//! Learned edge denoising: per-node edge scores from a two-layer MLP, chained
//! softmaxes (score → β → π), Gumbel-Softmax sampling ζ, and top-K pruning
//! with a mandatory self-loop.
//!
//! The MLP score for edge (i, j) is w2·(W1[xᵢ;xⱼ] + μ1) + μ2, which splits as
//! aᵢ + bⱼ + const with per-node vectors a and b; both the forward and the
//! backward pass exploit that to stay O(d) per edge instead of O(d²).

use ndarray::{s, Array1, Array2};
use rand::Rng;

use crate::graphs::RelationGraph;
use crate::math::add_outer;
use crate::model::DenoiseParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenoiseMode {
    /// Gumbel noise on; used during training.
    Stochastic,
    /// ε = 0; reproducible forward passes for evaluation.
    Deterministic,
}

/// Edge subset the attention layers actually see.
#[derive(Debug, Clone)]
pub struct DenoisedGraph {
    pub num_items: usize,
    /// Per node: surviving (neighbor, ζ) entries ascending by neighbor index,
    /// with the self-loop (i, 1.0) appended last.
    pub survivors: Vec<Vec<(usize, f64)>>,
}

impl DenoisedGraph {
    /// Count of non-self survivors for node `i`.
    pub fn degree(&self, i: usize) -> usize {
        self.survivors[i].len() - 1
    }
}

/// Intermediates for one denoising pass, indexed like the graph's full
/// (pre-pruning) neighbor lists.
#[derive(Debug, Clone)]
pub struct DenoiseCache {
    pub neighbors: Vec<Vec<usize>>,
    /// MLP scalar per directed edge (pre-softmax).
    pub m: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub pi: Vec<Vec<f64>>,
    pub zeta: Vec<Vec<f64>>,
    /// Positions within `neighbors[i]` that survived pruning, ascending.
    pub kept: Vec<Vec<usize>>,
    pub tau: f64,
}

/// β, π, ζ for one node's neighborhood given MLP scores `m`, edge weights
/// `w`, Gumbel noise `eps`, and temperature `tau`.
pub(crate) fn edge_distributions(
    m: &[f64],
    w: &[f64],
    eps: &[f64],
    tau: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut beta = m.to_vec();
    crate::math::softmax_inplace(&mut beta);
    let mut pi: Vec<f64> = beta.iter().zip(w).map(|(b, wi)| b + wi).collect();
    crate::math::softmax_inplace(&mut pi);
    let mut zeta: Vec<f64> = pi
        .iter()
        .zip(eps)
        .map(|(p, e)| (p.ln() + e) / tau)
        .collect();
    crate::math::softmax_inplace(&mut zeta);
    (beta, pi, zeta)
}

/// Run the denoiser over a graph. `fixed_keep` (neighbor ids per node)
/// overrides top-K selection; the finite-difference harness uses it to hold
/// the discrete survivor sets constant while parameters move.
#[allow(clippy::too_many_arguments)]
pub fn denoise<R: Rng>(
    graph: &RelationGraph,
    x0: &Array2<f64>,
    dn: &DenoiseParams,
    k_zeta: usize,
    tau: f64,
    mode: DenoiseMode,
    rng: &mut R,
    fixed_keep: Option<&[Vec<usize>]>,
) -> (DenoisedGraph, DenoiseCache) {
    let n = graph.num_items;
    let d0 = x0.ncols();
    let va = dn.w1.slice(s![.., ..d0]).t().dot(&dn.w2);
    let vb = dn.w1.slice(s![.., d0..]).t().dot(&dn.w2);
    let bias = dn.w2.dot(&dn.mu1) + dn.mu2;
    let a_scores = x0.dot(&va);
    let b_scores = x0.dot(&vb);

    let mut survivors = Vec::with_capacity(n);
    let mut cache = DenoiseCache {
        neighbors: Vec::with_capacity(n),
        m: Vec::with_capacity(n),
        beta: Vec::with_capacity(n),
        pi: Vec::with_capacity(n),
        zeta: Vec::with_capacity(n),
        kept: Vec::with_capacity(n),
        tau,
    };

    for i in 0..n {
        let nbrs = graph.neighbors(i).to_vec();
        let mut ms = Vec::with_capacity(nbrs.len());
        let mut ws = Vec::with_capacity(nbrs.len());
        for &j in &nbrs {
            ms.push(a_scores[i] + b_scores[j] + bias);
            ws.push(graph.weight(i, j).expect("adjacency consistent with edges"));
        }
        let eps: Vec<f64> = match mode {
            DenoiseMode::Deterministic => vec![0.0; nbrs.len()],
            DenoiseMode::Stochastic => nbrs
                .iter()
                .map(|_| {
                    let q: f64 = rng.random::<f64>().max(1e-300);
                    -(-q.ln()).ln()
                })
                .collect(),
        };
        let (beta, pi, zeta) = edge_distributions(&ms, &ws, &eps, tau);

        let mut kept: Vec<usize> = match fixed_keep {
            Some(keep) => keep[i]
                .iter()
                .map(|j| nbrs.binary_search(j).expect("fixed survivor must be a neighbor"))
                .collect(),
            None => {
                let mut idx: Vec<usize> = (0..nbrs.len()).collect();
                idx.sort_by(|&a, &b| {
                    zeta[b]
                        .partial_cmp(&zeta[a])
                        .expect("ζ is finite")
                        .then(nbrs[a].cmp(&nbrs[b]))
                });
                idx.truncate(k_zeta);
                idx
            }
        };
        kept.sort_unstable();

        let mut surv: Vec<(usize, f64)> = kept.iter().map(|&p| (nbrs[p], zeta[p])).collect();
        surv.push((i, 1.0));
        survivors.push(surv);

        cache.neighbors.push(nbrs);
        cache.m.push(ms);
        cache.beta.push(beta);
        cache.pi.push(pi);
        cache.zeta.push(zeta);
        cache.kept.push(kept);
    }
    (
        DenoisedGraph {
            num_items: n,
            survivors,
        },
        cache,
    )
}

/// Denoiser bypass: keep every edge with ζ = its normalized weight, plus the
/// self-loop. Used by the variant that trains without the denoising layer.
pub fn passthrough(graph: &RelationGraph) -> DenoisedGraph {
    let survivors = (0..graph.num_items)
        .map(|i| {
            let mut surv: Vec<(usize, f64)> = graph
                .neighbors(i)
                .iter()
                .map(|&j| (j, graph.weight(i, j).unwrap()))
                .collect();
            surv.push((i, 1.0));
            surv
        })
        .collect();
    DenoisedGraph {
        num_items: graph.num_items,
        survivors,
    }
}

/// Reverse-mode pass: `d_zeta_surv` is aligned with `survivors` (the self-loop
/// slot is ignored — its ζ is the constant 1). Gradients accumulate into
/// `grad_dn` and `grad_x0`.
pub fn denoise_backward(
    x0: &Array2<f64>,
    dn: &DenoiseParams,
    cache: &DenoiseCache,
    d_zeta_surv: &[Vec<f64>],
    grad_dn: &mut DenoiseParams,
    grad_x0: &mut Array2<f64>,
) {
    let n = cache.neighbors.len();
    let d0 = x0.ncols();
    // m_ij touches x0 only through a_scores[i] and b_scores[j], so per-edge
    // gradients collapse into per-node sums before hitting the parameters.
    let mut s_out = Array1::<f64>::zeros(n);
    let mut s_in = Array1::<f64>::zeros(n);
    let mut dm_total = 0.0;
    let mut any_dm = false;

    for i in 0..n {
        let nbrs = &cache.neighbors[i];
        if nbrs.is_empty() {
            continue;
        }
        let l = nbrs.len();
        let kept = &cache.kept[i];
        let zeta = &cache.zeta[i];
        let pi = &cache.pi[i];
        let beta = &cache.beta[i];

        // Scatter surviving-edge gradients into the full neighborhood.
        let mut d_zeta = vec![0.0; l];
        let mut any = false;
        for (slot, &pos) in kept.iter().enumerate() {
            let g = d_zeta_surv[i][slot];
            if g != 0.0 {
                any = true;
            }
            d_zeta[pos] = g;
        }
        if !any {
            continue;
        }

        // ζ = softmax(g) where g = (ln π + ε)/τ.
        let dot_z: f64 = d_zeta.iter().zip(zeta).map(|(d, z)| d * z).sum();
        let d_g: Vec<f64> = d_zeta
            .iter()
            .zip(zeta)
            .map(|(d, z)| z * (d - dot_z))
            .collect();
        let d_pi: Vec<f64> = d_g
            .iter()
            .zip(pi)
            .map(|(dg, p)| dg / (cache.tau * p))
            .collect();

        // π = softmax(z), z = β + w (w constant).
        let dot_p: f64 = d_pi.iter().zip(pi).map(|(d, p)| d * p).sum();
        let d_beta: Vec<f64> = d_pi.iter().zip(pi).map(|(d, p)| p * (d - dot_p)).collect();

        // β = softmax(m).
        let dot_b: f64 = d_beta.iter().zip(beta).map(|(d, b)| d * b).sum();
        let d_m: Vec<f64> = d_beta
            .iter()
            .zip(beta)
            .map(|(d, b)| b * (d - dot_b))
            .collect();

        for (pos, &j) in nbrs.iter().enumerate() {
            let dm = d_m[pos];
            if dm == 0.0 {
                continue;
            }
            any_dm = true;
            s_out[i] += dm;
            s_in[j] += dm;
            dm_total += dm;
        }
    }
    if !any_dm {
        return;
    }

    let a_half = dn.w1.slice(s![.., ..d0]);
    let b_half = dn.w1.slice(s![.., d0..]);
    let t_out = x0.t().dot(&s_out);
    let t_in = x0.t().dot(&s_in);

    grad_dn.w2 += &a_half.dot(&t_out);
    grad_dn.w2 += &b_half.dot(&t_in);
    grad_dn.w2.scaled_add(dm_total, &dn.mu1);
    grad_dn.mu2 += dm_total;
    grad_dn.mu1.scaled_add(dm_total, &dn.w2);
    add_outer(grad_dn.w1.slice_mut(s![.., ..d0]), dn.w2.view(), t_out.view());
    add_outer(grad_dn.w1.slice_mut(s![.., d0..]), dn.w2.view(), t_in.view());
    add_outer(&mut *grad_x0, s_out.view(), a_half.t().dot(&dn.w2).view());
    add_outer(&mut *grad_x0, s_in.view(), b_half.t().dot(&dn.w2).view());
}
