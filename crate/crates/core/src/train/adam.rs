//! Adam optimizer over the full parameter set.

use crate::model::ModelParams;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// First/second moment estimates shaped like the parameters, plus the step
/// counter for bias correction.
pub struct AdamState {
    m: ModelParams,
    v: ModelParams,
    t: u64,
    pub lr: f64,
    pub l2: f64,
}

impl AdamState {
    pub fn new(template: &ModelParams, lr: f64, l2: f64) -> Self {
        Self {
            m: template.zeros_like(),
            v: template.zeros_like(),
            t: 0,
            lr,
            l2,
        }
    }

    /// One update. L2 decay is folded into the gradient before the moment
    /// updates, so it is adapted like the rest of the gradient.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        let p_it = params.visit_mut().into_iter();
        let g_it = grads.visit().into_iter();
        let m_it = self.m.visit_mut().into_iter();
        let v_it = self.v.visit_mut().into_iter();
        for (((p, g), m), v) in p_it.zip(g_it).zip(m_it).zip(v_it) {
            debug_assert_eq!(p.0, g.0);
            let p = p.1.into_slice();
            let g = g.1.as_slice();
            let m = m.1.into_slice();
            let v = v.1.into_slice();
            for idx in 0..p.len() {
                let grad = g[idx] + self.l2 * p[idx];
                m[idx] = BETA1 * m[idx] + (1.0 - BETA1) * grad;
                v[idx] = BETA2 * v[idx] + (1.0 - BETA2) * grad * grad;
                let m_hat = m[idx] / bc1;
                let v_hat = v[idx] / bc2;
                p[idx] -= self.lr * m_hat / (v_hat.sqrt() + EPS);
            }
        }
    }
}
