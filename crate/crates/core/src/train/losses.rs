//! The three loss terms and their gradients.
//!
//! Recommendation loss is binary cross-entropy over the softmax scores;
//! the exclusivity loss pushes substitutable and complementary similarities
//! of sampled item pairs apart; the semantic loss orders similarity as
//! substitute > complement > irrelevant on sampled triples.

use ndarray::{Array1, Array2};

use crate::math::logistic;

pub const PROB_CLAMP: f64 = 1e-12;

/// Raw per-term values plus the weights they entered the total with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub l_r: f64,
    pub l_ex: f64,
    pub l_se: f64,
    pub w_rec: f64,
    pub w_ex: f64,
    pub w_se: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.w_rec * self.l_r + self.w_ex * self.l_ex + self.w_se * self.l_se
    }
}

/// Anchor with its sampled relation partners. `substitute` may be absent and
/// `irrelevant` may be empty; at least one of the two loss terms must be
/// supported or the sample is never constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationSample {
    pub anchor: usize,
    pub substitute: Option<usize>,
    pub complement: usize,
    pub irrelevant: Vec<usize>,
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Binary cross-entropy against a one-hot target, probabilities clamped away
/// from {0, 1} before the logs.
pub fn loss_rec(yhat: &Array1<f64>, target: usize) -> f64 {
    let mut loss = 0.0;
    for (j, &p) in yhat.iter().enumerate() {
        let p = clamp_prob(p);
        if j == target {
            loss -= p.ln();
        } else {
            loss -= (1.0 - p).ln();
        }
    }
    loss
}

/// Gradient of `scale · loss_rec(softmax(scores), target)` w.r.t. the scores.
/// The clamp zeroes the gradient of any saturated probability.
pub fn loss_rec_backward(yhat: &Array1<f64>, target: usize, scale: f64) -> Array1<f64> {
    let n = yhat.len();
    let mut d_yhat = Array1::zeros(n);
    for j in 0..n {
        let p = yhat[j];
        if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
            continue;
        }
        d_yhat[j] = if j == target {
            -scale / p
        } else {
            scale / (1.0 - p)
        };
    }
    // scores → softmax jacobian
    let dot: f64 = d_yhat.iter().zip(yhat.iter()).map(|(d, y)| d * y).sum();
    Array1::from_iter(
        yhat.iter()
            .zip(d_yhat.iter())
            .map(|(&y, &d)| y * (d - dot)),
    )
}

/// Mean over pairs of −σ((xsᵢ·xsⱼ − xcᵢ·xcⱼ)²).
pub fn loss_exclusive(pairs: &[(usize, usize)], xs: &Array2<f64>, xc: &Array2<f64>) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for &(i, j) in pairs {
        let gap = xs.row(i).dot(&xs.row(j)) - xc.row(i).dot(&xc.row(j));
        sum -= logistic(gap * gap);
    }
    sum / pairs.len() as f64
}

/// Gradients of `weight · loss_exclusive` w.r.t. the integrated embeddings.
pub fn loss_exclusive_backward(
    pairs: &[(usize, usize)],
    xs: &Array2<f64>,
    xc: &Array2<f64>,
    weight: f64,
    d_xs: &mut Array2<f64>,
    d_xc: &mut Array2<f64>,
) {
    if pairs.is_empty() {
        return;
    }
    let scale = weight / pairs.len() as f64;
    for &(i, j) in pairs {
        let gap = xs.row(i).dot(&xs.row(j)) - xc.row(i).dot(&xc.row(j));
        let sig = logistic(gap * gap);
        // d(−σ(g²))/dg = −σ′(g²)·2g
        let d_gap = -scale * sig * (1.0 - sig) * 2.0 * gap;
        let (xs_i, xs_j) = (xs.row(i).to_owned(), xs.row(j).to_owned());
        d_xs.row_mut(i).scaled_add(d_gap, &xs_j);
        d_xs.row_mut(j).scaled_add(d_gap, &xs_i);
        let (xc_i, xc_j) = (xc.row(i).to_owned(), xc.row(j).to_owned());
        d_xc.row_mut(i).scaled_add(-d_gap, &xc_j);
        d_xc.row_mut(j).scaled_add(-d_gap, &xc_i);
    }
}

/// Mean over samples of −σ(xᵢ·(xⱼ−xₖ)) − mean_t σ(xᵢ·(xₖ−xₜ)); each side is
/// present only when the sample carries the partners it needs.
pub fn loss_semantic(samples: &[RelationSample], x: &Array2<f64>) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for s in samples {
        let xi = x.row(s.anchor);
        let xk = x.row(s.complement);
        if let Some(j) = s.substitute {
            sum -= logistic(xi.dot(&x.row(j)) - xi.dot(&xk));
        }
        if !s.irrelevant.is_empty() {
            let inner: f64 = s
                .irrelevant
                .iter()
                .map(|&t| logistic(xi.dot(&xk) - xi.dot(&x.row(t))))
                .sum();
            sum -= inner / s.irrelevant.len() as f64;
        }
    }
    sum / samples.len() as f64
}

/// Gradients of `weight · loss_semantic` w.r.t. the fused embeddings.
pub fn loss_semantic_backward(
    samples: &[RelationSample],
    x: &Array2<f64>,
    weight: f64,
    d_x: &mut Array2<f64>,
) {
    if samples.is_empty() {
        return;
    }
    let scale = weight / samples.len() as f64;
    for s in samples {
        let i = s.anchor;
        let k = s.complement;
        let xi = x.row(i).to_owned();
        let xk = x.row(k).to_owned();
        if let Some(j) = s.substitute {
            let xj = x.row(j).to_owned();
            let u = xi.dot(&xj) - xi.dot(&xk);
            let sig = logistic(u);
            let c = -scale * sig * (1.0 - sig);
            // u = xᵢ·(xⱼ − xₖ)
            let diff = &xj - &xk;
            d_x.row_mut(i).scaled_add(c, &diff);
            d_x.row_mut(j).scaled_add(c, &xi);
            d_x.row_mut(k).scaled_add(-c, &xi);
        }
        if !s.irrelevant.is_empty() {
            let tscale = scale / s.irrelevant.len() as f64;
            for &t in &s.irrelevant {
                let xt = x.row(t).to_owned();
                let v = xi.dot(&xk) - xi.dot(&xt);
                let sig = logistic(v);
                let c = -tscale * sig * (1.0 - sig);
                let diff = &xk - &xt;
                d_x.row_mut(i).scaled_add(c, &diff);
                d_x.row_mut(k).scaled_add(c, &xi);
                d_x.row_mut(t).scaled_add(-c, &xi);
            }
        }
    }
}
