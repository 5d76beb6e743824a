//! Forward pipeline from item embeddings to next-item probabilities, with
//! cached intermediates for the reverse pass.
//!
//! Dual-branch flow: denoise each graph → attention per graph → integrate the
//! two embeddings → fuse → session attention → softmax scores. Variant flags
//! can bypass denoising, drop integration, or collapse to a single branch.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::Rng;

use crate::config::AblationFlags;
use crate::graphs::{merge_union, RelationGraph};
use crate::math::{lrelu, lrelu_grad, softmax_inplace};
use crate::model::denoise::{denoise, denoise_backward, passthrough, DenoiseCache, DenoiseMode, DenoisedGraph};
use crate::model::wgat::{branch_forward, branch_backward, LayerCache};
use crate::model::{BranchParams, ModelParams};

/// Graphs arranged for a variant: `primary` drives the substitutable branch
/// (or the only branch, for single-branch variants), `secondary` the
/// complementary branch when both run.
#[derive(Debug, Clone)]
pub struct PreparedGraphs {
    pub primary: RelationGraph,
    pub secondary: Option<RelationGraph>,
    pub flags: AblationFlags,
}

impl PreparedGraphs {
    pub fn new(sub: RelationGraph, comp: RelationGraph, flags: AblationFlags) -> Self {
        if flags.mix_graphs {
            PreparedGraphs {
                primary: merge_union(&sub, &comp),
                secondary: None,
                flags,
            }
        } else if flags.sub_only {
            PreparedGraphs {
                primary: sub,
                secondary: None,
                flags,
            }
        } else if flags.comp_only {
            PreparedGraphs {
                primary: comp,
                secondary: None,
                flags,
            }
        } else {
            PreparedGraphs {
                primary: sub,
                secondary: Some(comp),
                flags,
            }
        }
    }

    pub fn num_items(&self) -> usize {
        self.primary.num_items
    }
}

/// One branch's denoise + attention run.
#[derive(Debug, Clone)]
pub struct BranchRun {
    pub den: DenoisedGraph,
    pub den_cache: Option<DenoiseCache>,
    pub layers: Vec<LayerCache>,
}

impl BranchRun {
    pub fn output(&self) -> &Array2<f64> {
        &self.layers.last().expect("at least one layer").output
    }

    /// Surviving non-self neighbor ids per node, for pinning the discrete
    /// selection across finite-difference evaluations.
    pub fn kept_ids(&self) -> Vec<Vec<usize>> {
        self.den
            .survivors
            .iter()
            .enumerate()
            .map(|(i, surv)| {
                surv.iter()
                    .map(|&(j, _)| j)
                    .filter(|&j| j != i)
                    .collect()
            })
            .collect()
    }
}

/// Item-side cache: everything up to the fused embeddings X, shared by all
/// prefixes of a batch.
#[derive(Debug, Clone)]
pub struct PipelineCache {
    pub flags: AblationFlags,
    pub primary: BranchRun,
    pub secondary: Option<BranchRun>,
    /// Pre-activation integrated embeddings (dual-branch mode only).
    pub pre_xs: Option<Array2<f64>>,
    pub pre_xc: Option<Array2<f64>>,
    pub xs: Option<Array2<f64>>,
    pub xc: Option<Array2<f64>>,
    /// Final per-item embeddings used by scoring and the session module.
    pub x: Array2<f64>,
}

fn run_branch<R: Rng>(
    graph: &RelationGraph,
    x0: &Array2<f64>,
    branch: &BranchParams,
    k_zeta: usize,
    tau: f64,
    flags: AblationFlags,
    mode: DenoiseMode,
    rng: &mut R,
    fixed_keep: Option<&[Vec<usize>]>,
) -> BranchRun {
    let (den, den_cache) = if flags.no_denoise {
        (passthrough(graph), None)
    } else {
        let (den, cache) = denoise(
            graph,
            x0,
            &branch.denoise,
            k_zeta,
            tau,
            mode,
            rng,
            fixed_keep,
        );
        (den, Some(cache))
    };
    let layers = branch_forward(&den, x0, &branch.layers);
    BranchRun {
        den,
        den_cache,
        layers,
    }
}

/// Compute fused item embeddings X for the whole catalog.
#[allow(clippy::too_many_arguments)]
pub fn item_pipeline<R: Rng>(
    params: &ModelParams,
    graphs: &PreparedGraphs,
    k_zeta: usize,
    tau: f64,
    mode: DenoiseMode,
    rng: &mut R,
    fixed_keep: Option<(&[Vec<usize>], &[Vec<usize>])>,
) -> PipelineCache {
    let flags = graphs.flags;
    let primary_params = if flags.comp_only { &params.comp } else { &params.sub };
    let primary = run_branch(
        &graphs.primary,
        &params.x0,
        primary_params,
        k_zeta,
        tau,
        flags,
        mode,
        rng,
        fixed_keep.map(|(p, _)| p),
    );

    if let Some(secondary_graph) = &graphs.secondary {
        let secondary = run_branch(
            secondary_graph,
            &params.x0,
            &params.comp,
            k_zeta,
            tau,
            flags,
            mode,
            rng,
            fixed_keep.map(|(_, s)| s),
        );
        let xs1 = primary.output();
        let xc1 = secondary.output();
        let (t1, t2) = if flags.no_integration {
            (0.0, 0.0)
        } else {
            (params.theta1, params.theta2)
        };
        let pre_xs = xs1 + &xc1.mapv(|v| v * t1);
        let pre_xc = xc1 + &xs1.mapv(|v| v * t2);
        let xs = pre_xs.mapv(lrelu);
        let xc = pre_xc.mapv(lrelu);

        let d1 = params.dims.d1;
        let a = params.w6.slice(s![.., ..d1]);
        let b = params.w6.slice(s![.., d1..]);
        let mut x = xs.dot(&a.t()) + xc.dot(&b.t());
        x += &params.mu3;

        PipelineCache {
            flags,
            primary,
            secondary: Some(secondary),
            pre_xs: Some(pre_xs),
            pre_xc: Some(pre_xc),
            xs: Some(xs),
            xc: Some(xc),
            x,
        }
    } else {
        // Single-branch variants use the branch output directly.
        let x = primary.output().clone();
        PipelineCache {
            flags,
            primary,
            secondary: None,
            pre_xs: None,
            pre_xc: None,
            xs: None,
            xc: None,
            x,
        }
    }
}

/// Session-side cache for one prefix.
#[derive(Debug, Clone)]
pub struct SessionCache {
    pub items: Vec<usize>,
    /// Pre-activation attention inputs r_k = W7 x_l + W8 x_k + μ4.
    pub rvec: Vec<Array1<f64>>,
    /// Raw (unnormalized) attention weights α_k = qᵀ lrelu(r_k).
    pub alpha: Vec<f64>,
    pub s_g: Array1<f64>,
    pub s: Array1<f64>,
}

/// Session representation from the fused item embeddings: attention of every
/// prefix item against the last one, weighted sum, then projection of
/// [last; global].
pub fn session_forward(x: &Array2<f64>, items: &[usize], params: &ModelParams) -> SessionCache {
    assert!(!items.is_empty(), "prefix must be non-empty");
    let d1 = params.dims.d1;
    let last = *items.last().unwrap();
    let w7xl = params.w7.dot(&x.row(last));
    let mut rvec = Vec::with_capacity(items.len());
    let mut alpha = Vec::with_capacity(items.len());
    let mut s_g = Array1::zeros(d1);
    for &k in items {
        let r = &w7xl + &params.w8.dot(&x.row(k)) + &params.mu4;
        let a = params.q.dot(&r.mapv(lrelu));
        s_g.scaled_add(a, &x.row(k));
        rvec.push(r);
        alpha.push(a);
    }
    let cat = concatenate![Axis(0), x.row(last), s_g.view()];
    let s = params.w9.dot(&cat);
    SessionCache {
        items: items.to_vec(),
        rvec,
        alpha,
        s_g,
        s,
    }
}

/// Scores Sᵀx_j and their softmax (max-subtracted).
pub fn predict_scores(s: &Array1<f64>, x: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
    let scores = x.dot(s);
    let mut yhat = scores.to_vec();
    softmax_inplace(&mut yhat);
    (scores, Array1::from(yhat))
}

/// Backward through session attention. `d_s` is the loss gradient at S;
/// item-embedding gradients accumulate into `d_x`, parameter gradients into
/// `grads`.
pub fn session_backward(
    x: &Array2<f64>,
    params: &ModelParams,
    cache: &SessionCache,
    d_s: &Array1<f64>,
    d_x: &mut Array2<f64>,
    grads: &mut ModelParams,
) {
    let d1 = params.dims.d1;
    let last = *cache.items.last().unwrap();

    // S = W9 [x_l; S_g]
    let cat = concatenate![Axis(0), x.row(last), cache.s_g.view()];
    crate::math::add_outer(&mut grads.w9, d_s.view(), cat.view());
    let d_cat = params.w9.t().dot(d_s);
    let mut d_xl = d_cat.slice(s![..d1]).to_owned();
    let d_sg = d_cat.slice(s![d1..]).to_owned();

    // S_g = Σ α_k x_k; α_k = qᵀ lrelu(r_k); r_k = W7 x_l + W8 x_k + μ4
    for (pos, &k) in cache.items.iter().enumerate() {
        let d_alpha = d_sg.dot(&x.row(k));
        d_x.row_mut(k).scaled_add(cache.alpha[pos], &d_sg);

        let r = &cache.rvec[pos];
        let act = r.mapv(lrelu);
        grads.q.scaled_add(d_alpha, &act);
        let d_r: Array1<f64> = params
            .q
            .iter()
            .zip(r.iter())
            .map(|(&qv, &rv)| d_alpha * qv * lrelu_grad(rv))
            .collect();
        crate::math::add_outer(&mut grads.w7, d_r.view(), x.row(last));
        crate::math::add_outer(&mut grads.w8, d_r.view(), x.row(k));
        grads.mu4 += &d_r;
        d_xl += &params.w7.t().dot(&d_r);
        d_x.row_mut(k).scaled_add(1.0, &params.w8.t().dot(&d_r));
    }
    d_x.row_mut(last).scaled_add(1.0, &d_xl);
}

/// Backward from fused embeddings to every upstream parameter. `d_x` is the
/// total gradient at X; `d_xs`/`d_xc` carry extra gradient injected directly
/// at the integrated embeddings (from the exclusivity loss).
pub fn pipeline_backward(
    params: &ModelParams,
    cache: &PipelineCache,
    d_x: Array2<f64>,
    d_xs_extra: Option<Array2<f64>>,
    d_xc_extra: Option<Array2<f64>>,
    grads: &mut ModelParams,
) {
    let flags = cache.flags;
    if let Some(secondary) = &cache.secondary {
        let d1 = params.dims.d1;
        let xs = cache.xs.as_ref().unwrap();
        let xc = cache.xc.as_ref().unwrap();

        // X = Xs Aᵀ + Xc Bᵀ + μ3 with W6 = [A | B]
        let a = params.w6.slice(s![.., ..d1]);
        let b = params.w6.slice(s![.., d1..]);
        grads.w6.slice_mut(s![.., ..d1]).scaled_add(1.0, &d_x.t().dot(xs));
        grads.w6.slice_mut(s![.., d1..]).scaled_add(1.0, &d_x.t().dot(xc));
        grads.mu3 += &d_x.sum_axis(Axis(0));
        let mut d_xs = d_x.dot(&a);
        let mut d_xc = d_x.dot(&b);
        if let Some(extra) = d_xs_extra {
            d_xs += &extra;
        }
        if let Some(extra) = d_xc_extra {
            d_xc += &extra;
        }

        // Xs = lrelu(Xs1 + θ1 Xc1), Xc = lrelu(Xc1 + θ2 Xs1)
        let pre_xs = cache.pre_xs.as_ref().unwrap();
        let pre_xc = cache.pre_xc.as_ref().unwrap();
        let d_pre_xs = ndarray::Zip::from(&d_xs)
            .and(pre_xs)
            .map_collect(|&d, &p| d * lrelu_grad(p));
        let d_pre_xc = ndarray::Zip::from(&d_xc)
            .and(pre_xc)
            .map_collect(|&d, &p| d * lrelu_grad(p));

        let xs1 = cache.primary.output();
        let xc1 = secondary.output();
        let (t1, t2) = if flags.no_integration {
            (0.0, 0.0)
        } else {
            (params.theta1, params.theta2)
        };
        let mut d_xs1 = d_pre_xs.clone();
        d_xs1.scaled_add(t2, &d_pre_xc);
        let mut d_xc1 = d_pre_xc.clone();
        d_xc1.scaled_add(t1, &d_pre_xs);
        if !flags.no_integration {
            grads.theta1 += (&d_pre_xs * xc1).sum();
            grads.theta2 += (&d_pre_xc * xs1).sum();
        }

        backward_branch(params, &params.sub, cache, true, d_xs1, grads);
        backward_branch(params, &params.comp, cache, false, d_xc1, grads);
    } else {
        // Single branch: X is the branch output itself, cached in the
        // primary slot whichever parameter branch it used.
        let branch_params = if flags.comp_only { &params.comp } else { &params.sub };
        backward_branch(params, branch_params, cache, true, d_x, grads);
    }
}

fn backward_branch(
    params: &ModelParams,
    branch_params: &BranchParams,
    cache: &PipelineCache,
    is_primary_slot: bool,
    d_out: Array2<f64>,
    grads: &mut ModelParams,
) {
    let run = if is_primary_slot {
        &cache.primary
    } else {
        cache.secondary.as_ref().expect("secondary run present")
    };
    // Grads route to the parameter branch actually used in the forward pass.
    let use_comp_params = std::ptr::eq(branch_params, &params.comp);
    let mut d_zeta: Vec<Vec<f64>> = run
        .den
        .survivors
        .iter()
        .map(|s| vec![0.0; s.len()])
        .collect();
    {
        let grad_branch = if use_comp_params { &mut grads.comp } else { &mut grads.sub };
        branch_backward(
            &run.den,
            &params.x0,
            &branch_params.layers,
            &run.layers,
            d_out,
            &mut grad_branch.layers,
            &mut grads.x0,
            &mut d_zeta,
        );
    }
    if let Some(den_cache) = &run.den_cache {
        let grad_branch = if use_comp_params { &mut grads.comp } else { &mut grads.sub };
        denoise_backward(
            &params.x0,
            &branch_params.denoise,
            den_cache,
            &d_zeta,
            &mut grad_branch.denoise,
            &mut grads.x0,
        );
    }
}
