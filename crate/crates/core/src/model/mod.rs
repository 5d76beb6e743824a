//! Model parameters and the forward pipeline.
//!
//! Every learnable tensor lives in [`ModelParams`]; the visitor API exposes
//! them as named flat slices in one canonical order so initialization, the
//! optimizer, checkpoints, and gradient checks all traverse identically.

pub mod checkpoint;
pub mod denoise;
pub mod forward;
pub mod wgat;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub const INIT_STD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub n_items: usize,
    pub d0: usize,
    pub d1: usize,
    pub k_m: usize,
    pub wgat_layers: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("dimension {name} must be ≥ 1, got {value}")]
    InvalidDim { name: &'static str, value: usize },
}

/// Two-layer MLP scoring one edge from the concatenated endpoint embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseParams {
    pub w1: Array2<f64>,  // 2d0 × 2d0
    pub mu1: Array1<f64>, // 2d0
    pub w2: Array1<f64>,  // 2d0
    pub mu2: f64,
}

/// One attention head: projections for the score (w3, w4) and the value (w5).
#[derive(Debug, Clone, PartialEq)]
pub struct AttnHead {
    pub w3: Array2<f64>, // d1 × d_in
    pub w4: Array1<f64>, // 2d1 + 1
    pub w5: Array2<f64>, // d1 × d_in
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttnLayer {
    pub heads: Vec<AttnHead>,
}

/// Per-graph parameters: the edge denoiser plus stacked attention layers.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchParams {
    pub denoise: DenoiseParams,
    pub layers: Vec<AttnLayer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub x0: Array2<f64>, // N × d0
    pub sub: BranchParams,
    pub comp: BranchParams,
    pub theta1: f64,
    pub theta2: f64,
    pub w6: Array2<f64>,  // d1 × 2d1
    pub mu3: Array1<f64>, // d1
    pub q: Array1<f64>,   // d1
    pub w7: Array2<f64>,  // d1 × d1
    pub w8: Array2<f64>,  // d1 × d1
    pub mu4: Array1<f64>, // d1
    pub w9: Array2<f64>,  // d1 × 2d1
}

pub enum TensorRef<'a> {
    Mat(&'a Array2<f64>),
    Vec1(&'a Array1<f64>),
    Scalar(&'a f64),
}

pub enum TensorMut<'a> {
    Mat(&'a mut Array2<f64>),
    Vec1(&'a mut Array1<f64>),
    Scalar(&'a mut f64),
}

impl<'a> TensorRef<'a> {
    pub fn as_slice(&self) -> &[f64] {
        match self {
            TensorRef::Mat(m) => m.as_slice().expect("owned arrays are contiguous"),
            TensorRef::Vec1(v) => v.as_slice().expect("owned arrays are contiguous"),
            TensorRef::Scalar(s) => std::slice::from_ref(s),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        match self {
            TensorRef::Mat(m) => m.shape().to_vec(),
            TensorRef::Vec1(v) => vec![v.len()],
            TensorRef::Scalar(_) => vec![],
        }
    }
}

impl<'a> TensorMut<'a> {
    pub fn into_slice(self) -> &'a mut [f64] {
        match self {
            TensorMut::Mat(m) => m.as_slice_mut().expect("owned arrays are contiguous"),
            TensorMut::Vec1(v) => v.as_slice_mut().expect("owned arrays are contiguous"),
            TensorMut::Scalar(s) => std::slice::from_mut(s),
        }
    }
}

fn branch_zero(prefix_dims: &ModelDims) -> BranchParams {
    let ModelDims {
        d0, d1, k_m, wgat_layers, ..
    } = *prefix_dims;
    let layers = (0..wgat_layers)
        .map(|l| {
            let d_in = if l == 0 { d0 } else { d1 };
            AttnLayer {
                heads: (0..k_m)
                    .map(|_| AttnHead {
                        w3: Array2::zeros((d1, d_in)),
                        w4: Array1::zeros(2 * d1 + 1),
                        w5: Array2::zeros((d1, d_in)),
                    })
                    .collect(),
            }
        })
        .collect();
    BranchParams {
        denoise: DenoiseParams {
            w1: Array2::zeros((2 * d0, 2 * d0)),
            mu1: Array1::zeros(2 * d0),
            w2: Array1::zeros(2 * d0),
            mu2: 0.0,
        },
        layers,
    }
}

impl ModelParams {
    /// All-zero parameters with the given dimensions.
    pub fn zeros(dims: ModelDims) -> Result<Self, ModelError> {
        for (name, value) in [
            ("n_items", dims.n_items),
            ("d0", dims.d0),
            ("d1", dims.d1),
            ("k_m", dims.k_m),
            ("wgat_layers", dims.wgat_layers),
        ] {
            if value == 0 {
                return Err(ModelError::InvalidDim { name, value });
            }
        }
        let d1 = dims.d1;
        Ok(ModelParams {
            dims,
            x0: Array2::zeros((dims.n_items, dims.d0)),
            sub: branch_zero(&dims),
            comp: branch_zero(&dims),
            theta1: 0.0,
            theta2: 0.0,
            w6: Array2::zeros((d1, 2 * d1)),
            mu3: Array1::zeros(d1),
            q: Array1::zeros(d1),
            w7: Array2::zeros((d1, d1)),
            w8: Array2::zeros((d1, d1)),
            mu4: Array1::zeros(d1),
            w9: Array2::zeros((d1, 2 * d1)),
        })
    }

    /// Seeded Gaussian(0, 0.1) initialization; identical seeds give
    /// bit-identical parameters (tensors are filled in visitor order).
    pub fn init_gaussian(dims: ModelDims, seed: u64) -> Result<Self, ModelError> {
        let mut params = Self::zeros(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        for (_, t) in params.visit_mut() {
            for x in t.into_slice() {
                *x = normal.sample(&mut rng);
            }
        }
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims).expect("dims already validated")
    }

    /// Named tensors in canonical order.
    pub fn visit(&self) -> Vec<(String, TensorRef<'_>)> {
        let mut out: Vec<(String, TensorRef)> = vec![("x0".into(), TensorRef::Mat(&self.x0))];
        for (tag, branch) in [("sub", &self.sub), ("comp", &self.comp)] {
            out.push((format!("{tag}.dn.w1"), TensorRef::Mat(&branch.denoise.w1)));
            out.push((format!("{tag}.dn.mu1"), TensorRef::Vec1(&branch.denoise.mu1)));
            out.push((format!("{tag}.dn.w2"), TensorRef::Vec1(&branch.denoise.w2)));
            out.push((format!("{tag}.dn.mu2"), TensorRef::Scalar(&branch.denoise.mu2)));
            for (l, layer) in branch.layers.iter().enumerate() {
                for (h, head) in layer.heads.iter().enumerate() {
                    out.push((format!("{tag}.l{l}.h{h}.w3"), TensorRef::Mat(&head.w3)));
                    out.push((format!("{tag}.l{l}.h{h}.w4"), TensorRef::Vec1(&head.w4)));
                    out.push((format!("{tag}.l{l}.h{h}.w5"), TensorRef::Mat(&head.w5)));
                }
            }
        }
        out.push(("theta1".into(), TensorRef::Scalar(&self.theta1)));
        out.push(("theta2".into(), TensorRef::Scalar(&self.theta2)));
        out.push(("w6".into(), TensorRef::Mat(&self.w6)));
        out.push(("mu3".into(), TensorRef::Vec1(&self.mu3)));
        out.push(("q".into(), TensorRef::Vec1(&self.q)));
        out.push(("w7".into(), TensorRef::Mat(&self.w7)));
        out.push(("w8".into(), TensorRef::Mat(&self.w8)));
        out.push(("mu4".into(), TensorRef::Vec1(&self.mu4)));
        out.push(("w9".into(), TensorRef::Mat(&self.w9)));
        out
    }

    /// Mutable variant of [`visit`](Self::visit), same order and names.
    pub fn visit_mut(&mut self) -> Vec<(String, TensorMut<'_>)> {
        let mut out: Vec<(String, TensorMut)> = vec![("x0".into(), TensorMut::Mat(&mut self.x0))];
        for (tag, branch) in [("sub", &mut self.sub), ("comp", &mut self.comp)] {
            out.push((format!("{tag}.dn.w1"), TensorMut::Mat(&mut branch.denoise.w1)));
            out.push((format!("{tag}.dn.mu1"), TensorMut::Vec1(&mut branch.denoise.mu1)));
            out.push((format!("{tag}.dn.w2"), TensorMut::Vec1(&mut branch.denoise.w2)));
            out.push((format!("{tag}.dn.mu2"), TensorMut::Scalar(&mut branch.denoise.mu2)));
            for (l, layer) in branch.layers.iter_mut().enumerate() {
                for (h, head) in layer.heads.iter_mut().enumerate() {
                    out.push((format!("{tag}.l{l}.h{h}.w3"), TensorMut::Mat(&mut head.w3)));
                    out.push((format!("{tag}.l{l}.h{h}.w4"), TensorMut::Vec1(&mut head.w4)));
                    out.push((format!("{tag}.l{l}.h{h}.w5"), TensorMut::Mat(&mut head.w5)));
                }
            }
        }
        out.push(("theta1".into(), TensorMut::Scalar(&mut self.theta1)));
        out.push(("theta2".into(), TensorMut::Scalar(&mut self.theta2)));
        out.push(("w6".into(), TensorMut::Mat(&mut self.w6)));
        out.push(("mu3".into(), TensorMut::Vec1(&mut self.mu3)));
        out.push(("q".into(), TensorMut::Vec1(&mut self.q)));
        out.push(("w7".into(), TensorMut::Mat(&mut self.w7)));
        out.push(("w8".into(), TensorMut::Mat(&mut self.w8)));
        out.push(("mu4".into(), TensorMut::Vec1(&mut self.mu4)));
        out.push(("w9".into(), TensorMut::Mat(&mut self.w9)));
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.visit().iter().map(|(_, t)| t.as_slice().len()).sum()
    }

    /// True when every parameter is finite.
    pub fn all_finite(&self) -> bool {
        self.visit()
            .iter()
            .all(|(_, t)| t.as_slice().iter().all(|x| x.is_finite()))
    }
}
