//! The noise-prediction network: a three-layer perceptron over
//! `[latent ‖ time embedding ‖ conditioning]` with SiLU activations and a
//! bias-free output layer. Forward and backward passes operate on whole
//! batches as matrix products.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::gaussian;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserShape {
    pub latent_dim: usize,
    pub time_dim: usize,
    pub cond_dim: usize,
    pub hidden: usize,
}

impl Default for DenoiserShape {
    fn default() -> Self {
        Self {
            latent_dim: 256,
            time_dim: 32,
            cond_dim: 64,
            hidden: 256,
        }
    }
}

impl DenoiserShape {
    pub fn input_dim(&self) -> usize {
        self.latent_dim + self.time_dim + self.cond_dim
    }

    pub fn parameter_count(&self) -> usize {
        let (i, h, o) = (self.input_dim(), self.hidden, self.latent_dim);
        i * h + h + h * h + h + h * o
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
}

pub type DenoiserGrads = Denoiser;

/// Activations cached for the backward pass.
#[derive(Debug, Clone)]
pub struct DenoiserTrace {
    x: Array2<f64>,
    a1: Array2<f64>,
    h1: Array2<f64>,
    a2: Array2<f64>,
    h2: Array2<f64>,
}

fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

fn silu(a: f64) -> f64 {
    a * sigmoid(a)
}

fn silu_grad(a: f64) -> f64 {
    let s = sigmoid(a);
    s * (1.0 + a * (1.0 - s))
}

impl Denoiser {
    pub fn random<R: Rng + ?Sized>(shape: DenoiserShape, rng: &mut R) -> Self {
        let (i, h, o) = (shape.input_dim(), shape.hidden, shape.latent_dim);
        let s1 = (1.0 / i as f64).sqrt();
        let s2 = (1.0 / h as f64).sqrt();
        Self {
            w1: Array2::from_shape_fn((i, h), |_| s1 * gaussian(rng)),
            b1: Array1::zeros(h),
            w2: Array2::from_shape_fn((h, h), |_| s2 * gaussian(rng)),
            b2: Array1::zeros(h),
            w3: Array2::from_shape_fn((h, o), |_| s2 * gaussian(rng)),
        }
    }

    pub fn zeros(shape: DenoiserShape) -> Self {
        let (i, h, o) = (shape.input_dim(), shape.hidden, shape.latent_dim);
        Self {
            w1: Array2::zeros((i, h)),
            b1: Array1::zeros(h),
            w2: Array2::zeros((h, h)),
            b2: Array1::zeros(h),
            w3: Array2::zeros((h, o)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array1::zeros(self.b1.raw_dim()),
            w2: Array2::zeros(self.w2.raw_dim()),
            b2: Array1::zeros(self.b2.raw_dim()),
            w3: Array2::zeros(self.w3.raw_dim()),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w3.ncols()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn tensors(&self) -> [(&'static str, &[f64]); 5] {
        [
            ("denoiser.w1", self.w1.as_slice().unwrap()),
            ("denoiser.b1", self.b1.as_slice().unwrap()),
            ("denoiser.w2", self.w2.as_slice().unwrap()),
            ("denoiser.b2", self.b2.as_slice().unwrap()),
            ("denoiser.w3", self.w3.as_slice().unwrap()),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 5] {
        [
            ("denoiser.w1", self.w1.as_slice_mut().unwrap()),
            ("denoiser.b1", self.b1.as_slice_mut().unwrap()),
            ("denoiser.w2", self.w2.as_slice_mut().unwrap()),
            ("denoiser.b2", self.b2.as_slice_mut().unwrap()),
            ("denoiser.w3", self.w3.as_slice_mut().unwrap()),
        ]
    }

    /// Batched forward pass over rows of `x` (`[B × input_dim]`).
    pub fn forward(&self, x: Array2<f64>) -> Result<(Array2<f64>, DenoiserTrace)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::domain(format!(
                "denoiser input has width {}, expected {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let a1 = x.dot(&self.w1) + &self.b1;
        let h1 = a1.mapv(silu);
        let a2 = h1.dot(&self.w2) + &self.b2;
        let h2 = a2.mapv(silu);
        let out = h2.dot(&self.w3);
        Ok((out, DenoiserTrace { x, a1, h1, a2, h2 }))
    }

    pub fn predict(&self, x: Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(x)?.0)
    }

    /// Backward pass. Accumulates parameter gradients into `grads` when
    /// given and returns the gradient with respect to the input rows when
    /// `want_input` is set.
    pub fn backward(
        &self,
        trace: &DenoiserTrace,
        d_out: &Array2<f64>,
        grads: Option<&mut DenoiserGrads>,
        want_input: bool,
    ) -> Option<Array2<f64>> {
        let d_h2 = d_out.dot(&self.w3.t());
        let d_a2 = d_h2 * trace.a2.mapv(silu_grad);
        let d_h1 = d_a2.dot(&self.w2.t());
        let d_a1 = d_h1 * trace.a1.mapv(silu_grad);
        if let Some(g) = grads {
            g.w3 += &trace.h2.t().dot(d_out);
            g.w2 += &trace.h1.t().dot(&d_a2);
            g.b2 += &d_a2.sum_axis(Axis(0));
            g.w1 += &trace.x.t().dot(&d_a1);
            g.b1 += &d_a1.sum_axis(Axis(0));
        }
        want_input.then(|| d_a1.dot(&self.w1.t()))
    }
}

/// Stack `[z ‖ time_emb ‖ cond]` rows into a denoiser input matrix.
pub fn assemble_input(latents: &[&[f64]], time_embs: &[Vec<f64>], conds: &[&Array1<f64>]) -> Array2<f64> {
    let b = latents.len();
    let (dz, dt, dc) = (latents[0].len(), time_embs[0].len(), conds[0].len());
    let mut x = Array2::zeros((b, dz + dt + dc));
    for i in 0..b {
        let mut row = x.row_mut(i);
        row.slice_mut(s![..dz]).assign(&ndarray::ArrayView1::from(latents[i]));
        row.slice_mut(s![dz..dz + dt])
            .assign(&ndarray::ArrayView1::from(&time_embs[i][..]));
        row.slice_mut(s![dz + dt..]).assign(conds[i]);
    }
    x
}
