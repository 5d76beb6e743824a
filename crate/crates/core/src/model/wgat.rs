//! Weighted graph attention over a denoised graph: per-head edge scores from
//! projected endpoint embeddings plus the edge's ζ weight, softmax-normalized
//! within each node's surviving neighborhood, heads averaged.

use ndarray::{Array2, ArrayView1};

use crate::math::{lrelu, lrelu_grad};
use crate::model::denoise::DenoisedGraph;
use crate::model::{AttnHead, AttnLayer};

#[derive(Debug, Clone)]
pub struct HeadCache {
    /// Score-side projections W3·h per node.
    pub p: Array2<f64>,
    /// Value projections W5·h per node.
    pub v: Array2<f64>,
    /// Attention logits per survivor slot, before the LeakyReLU.
    pub pre: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<f64>>,
    /// Aggregated neighborhood values, before the output LeakyReLU.
    pub agg: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    pub heads: Vec<HeadCache>,
    pub output: Array2<f64>,
}

fn head_forward(den: &DenoisedGraph, input: &Array2<f64>, head: &AttnHead) -> HeadCache {
    let n = den.num_items;
    let d1 = head.w3.nrows();
    let p = input.dot(&head.w3.t());
    let v = input.dot(&head.w5.t());
    let (wa, rest) = head.w4.view().split_at(ndarray::Axis(0), d1);
    let (wb, wz) = rest.split_at(ndarray::Axis(0), d1);
    let wz = wz[0];

    let mut pre = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    let mut agg = Array2::zeros((n, d1));
    for i in 0..n {
        let pi_dot = wa.dot(&p.row(i));
        let mut logits: Vec<f64> = den.survivors[i]
            .iter()
            .map(|&(j, zeta)| pi_dot + wb.dot(&p.row(j)) + wz * zeta)
            .collect();
        pre.push(logits.clone());
        for x in &mut logits {
            *x = lrelu(*x);
        }
        crate::math::softmax_inplace(&mut logits);
        let mut row = agg.row_mut(i);
        for (&(j, _), &a) in den.survivors[i].iter().zip(&logits) {
            row.scaled_add(a, &v.row(j));
        }
        alpha.push(logits);
    }
    HeadCache {
        p,
        v,
        pre,
        alpha,
        agg,
    }
}

/// One attention layer: run every head on `input`, average head outputs.
pub fn layer_forward(den: &DenoisedGraph, input: &Array2<f64>, layer: &AttnLayer) -> LayerCache {
    let heads: Vec<HeadCache> = layer
        .heads
        .iter()
        .map(|h| head_forward(den, input, h))
        .collect();
    let n = den.num_items;
    let d1 = heads[0].agg.ncols();
    let scale = 1.0 / heads.len() as f64;
    let mut output = Array2::zeros((n, d1));
    for h in &heads {
        output.zip_mut_with(&h.agg, |o, &a| *o += scale * lrelu(a));
    }
    LayerCache { heads, output }
}

/// Stacked layers; layer 0 reads `x0`, deeper layers read the previous output.
pub fn branch_forward(den: &DenoisedGraph, x0: &Array2<f64>, layers: &[AttnLayer]) -> Vec<LayerCache> {
    let mut caches: Vec<LayerCache> = Vec::with_capacity(layers.len());
    for (l, layer) in layers.iter().enumerate() {
        let cache = if l == 0 {
            layer_forward(den, x0, layer)
        } else {
            layer_forward(den, &caches[l - 1].output, layer)
        };
        caches.push(cache);
    }
    caches
}

#[allow(clippy::too_many_arguments)]
fn head_backward(
    den: &DenoisedGraph,
    input: &Array2<f64>,
    head: &AttnHead,
    cache: &HeadCache,
    d_head_out: &Array2<f64>, // gradient at lrelu(agg), already head-scaled
    grad: &mut AttnHead,
    d_input: &mut Array2<f64>,
    d_zeta: &mut [Vec<f64>],
) {
    let n = den.num_items;
    let d1 = head.w3.nrows();
    let (wa, rest) = head.w4.view().split_at(ndarray::Axis(0), d1);
    let (wb, wz_v) = rest.split_at(ndarray::Axis(0), d1);
    let wz = wz_v[0];

    let mut d_p = Array2::<f64>::zeros(cache.p.raw_dim());
    let mut d_v = Array2::<f64>::zeros(cache.v.raw_dim());

    for i in 0..n {
        let surv = &den.survivors[i];
        let alpha = &cache.alpha[i];
        let pre = &cache.pre[i];

        // out_i = lrelu(agg_i)
        let d_agg: Vec<f64> = cache
            .agg
            .row(i)
            .iter()
            .zip(d_head_out.row(i).iter())
            .map(|(&a, &d)| d * lrelu_grad(a))
            .collect();
        let d_agg = ArrayView1::from(&d_agg);

        // agg_i = Σ α_ij v_j
        let mut d_alpha = vec![0.0; surv.len()];
        for (slot, &(j, _)) in surv.iter().enumerate() {
            d_alpha[slot] = d_agg.dot(&cache.v.row(j));
            d_v.row_mut(j).scaled_add(alpha[slot], &d_agg);
        }

        // α = softmax(e), e = lrelu(pre)
        let dot: f64 = d_alpha.iter().zip(alpha).map(|(d, a)| d * a).sum();
        for (slot, &(j, zeta)) in surv.iter().enumerate() {
            let d_e = alpha[slot] * (d_alpha[slot] - dot);
            let d_pre = d_e * lrelu_grad(pre[slot]);
            if d_pre == 0.0 {
                continue;
            }
            // pre = wa·p_i + wb·p_j + wz·ζ
            grad.w4
                .slice_mut(ndarray::s![..d1])
                .scaled_add(d_pre, &cache.p.row(i));
            grad.w4
                .slice_mut(ndarray::s![d1..2 * d1])
                .scaled_add(d_pre, &cache.p.row(j));
            grad.w4[2 * d1] += d_pre * zeta;
            d_p.row_mut(i).scaled_add(d_pre, &wa);
            d_p.row_mut(j).scaled_add(d_pre, &wb);
            if j != i {
                d_zeta[i][slot] += d_pre * wz;
            }
        }
    }

    // p = input·W3ᵀ, v = input·W5ᵀ
    grad.w3 += &d_p.t().dot(input);
    grad.w5 += &d_v.t().dot(input);
    *d_input += &d_p.dot(&head.w3);
    *d_input += &d_v.dot(&head.w5);
}

/// Backward through the full stack. `d_out` is the gradient at the last
/// layer's output; gradients accumulate into `grad_layers` (shape mirror of
/// the parameters), `d_x0`, and `d_zeta` (aligned with `den.survivors`).
pub fn branch_backward(
    den: &DenoisedGraph,
    x0: &Array2<f64>,
    layers: &[AttnLayer],
    caches: &[LayerCache],
    d_out: Array2<f64>,
    grad_layers: &mut [AttnLayer],
    d_x0: &mut Array2<f64>,
    d_zeta: &mut [Vec<f64>],
) {
    let mut d_current = d_out;
    for l in (0..layers.len()).rev() {
        let input = if l == 0 { x0 } else { &caches[l - 1].output };
        let scale = 1.0 / layers[l].heads.len() as f64;
        let mut d_input = Array2::zeros(input.raw_dim());
        for (h, head) in layers[l].heads.iter().enumerate() {
            let d_head_out = d_current.mapv(|d| d * scale);
            head_backward(
                den,
                input,
                head,
                &caches[l].heads[h],
                &d_head_out,
                &mut grad_layers[l].heads[h],
                &mut d_input,
                d_zeta,
            );
        }
        d_current = d_input;
    }
    *d_x0 += &d_current;
}
