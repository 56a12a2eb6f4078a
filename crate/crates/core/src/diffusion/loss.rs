use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2};

use super::denoiser::{assemble_input, DenoiserGrads};
use super::model::{row_name, ModelState, Trainable};
use super::schedule::{forward_noise, time_embedding};
use crate::error::{Error, Result};
use crate::text::{TextEncoderGrads, TextTrace};

/// One `(z0, prompt ids, t, ε)` tuple. Empty `ids` means the null
/// (all-zero) conditioning used for guidance dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub z0: Vec<f64>,
    pub ids: Vec<usize>,
    pub t: usize,
    pub eps: Vec<f64>,
}

/// Gradient buffers for the trainable subset only.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub denoiser: Option<DenoiserGrads>,
    pub text: Option<TextEncoderGrads>,
    pub rows: BTreeMap<usize, Array1<f64>>,
}

impl GradientSet {
    pub fn zeros(model: &ModelState, trainable: &Trainable) -> Self {
        Self {
            denoiser: trainable.denoiser.then(|| model.denoiser.zeros_like()),
            text: trainable.text_encoder.then(|| model.text.zeros_like()),
            rows: trainable
                .rows
                .iter()
                .map(|&r| (r, Array1::zeros(model.table.dim())))
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        if let Some(d) = &mut self.denoiser {
            for (_, t) in d.tensors_mut() {
                t.fill(0.0);
            }
        }
        if let Some(d) = &mut self.text {
            for (_, t) in d.tensors_mut() {
                t.fill(0.0);
            }
        }
        for r in self.rows.values_mut() {
            r.fill(0.0);
        }
    }

    /// Named flat views of every buffer, in a stable order.
    pub fn named(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        if let Some(d) = &self.denoiser {
            out.extend(d.tensors().into_iter().map(|(n, t)| (n.to_string(), t)));
        }
        if let Some(d) = &self.text {
            out.extend(d.tensors().into_iter().map(|(n, t)| (n.to_string(), t)));
        }
        for (r, g) in &self.rows {
            out.push((row_name(*r), g.as_slice().unwrap()));
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.named()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

impl Error {
    /// Attach a step index to a numeric error.
    pub fn at_step(self, step: usize) -> Self {
        match self {
            Error::Numeric { detail, .. } => Error::Numeric { step, detail },
            other => other,
        }
    }
}

/// Conditioning vectors and text traces for each example.
fn conditions(model: &ModelState, batch: &[TrainingExample]) -> Result<Vec<(Array1<f64>, Option<TextTrace>)>> {
    batch
        .iter()
        .map(|ex| {
            if ex.ids.is_empty() {
                Ok((Array1::zeros(model.cond_dim()), None))
            } else {
                let (c, tr) = model.text.forward(&model.table, &ex.ids)?;
                Ok((c, Some(tr)))
            }
        })
        .collect()
}

/// Denoising loss `mean_b ‖ε − ε̂(z_t, t, c(y))‖²` and its gradients with
/// respect to the trainable subset.
pub fn ldm_loss_and_grads(
    model: &ModelState,
    batch: &[TrainingExample],
    trainable: &Trainable,
) -> Result<(f64, GradientSet)> {
    let mut grads = GradientSet::zeros(model, trainable);
    let loss = accumulate_loss_and_grads(model, batch, trainable, 1.0, &mut grads)?;
    Ok((loss, grads))
}

/// As [`ldm_loss_and_grads`] but adds `weight ×` the gradients into an
/// existing set. Returns the unweighted loss.
pub fn accumulate_loss_and_grads(
    model: &ModelState,
    batch: &[TrainingExample],
    trainable: &Trainable,
    weight: f64,
    grads: &mut GradientSet,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::domain("empty training batch"));
    }
    let n = model.n_steps();
    let dz = model.latent_dim();
    for ex in batch {
        if ex.t == 0 || ex.t > n {
            return Err(Error::domain(format!("training step {} outside 1..={n}", ex.t)));
        }
        if ex.z0.len() != dz || ex.eps.len() != dz {
            return Err(Error::domain("training example has the wrong latent width"));
        }
    }
    let conds = conditions(model, batch)?;
    let zts: Vec<Vec<f64>> = batch
        .iter()
        .map(|ex| forward_noise(&ex.z0, ex.t, &ex.eps, &model.schedule))
        .collect::<Result<_>>()?;
    let tembs: Vec<Vec<f64>> = batch
        .iter()
        .map(|ex| time_embedding(ex.t, n, model.config.time_dim))
        .collect();
    let zt_refs: Vec<&[f64]> = zts.iter().map(|z| z.as_slice()).collect();
    let cond_refs: Vec<&Array1<f64>> = conds.iter().map(|(c, _)| c).collect();
    let x = assemble_input(&zt_refs, &tembs, &cond_refs);
    let (mut out, trace) = model.denoiser.forward(x)?;

    let b = batch.len() as f64;
    let mut eps = Array2::zeros((batch.len(), dz));
    let mut out_scale = Array1::zeros(batch.len());
    for (i, ex) in batch.iter().enumerate() {
        eps.row_mut(i).assign(&ndarray::ArrayView1::from(&ex.eps[..]));
        let (skip, scale) = model.eps_coefficients(ex.t);
        out_scale[i] = scale;
        let mut row = out.row_mut(i);
        row *= scale;
        row.scaled_add(skip, &ndarray::ArrayView1::from(&zts[i][..]));
    }
    let diff = &out - &eps;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / b;
    if !loss.is_finite() {
        return Err(Error::Numeric {
            step: 0,
            detail: format!("loss is {loss}"),
        });
    }
    let d_out = diff * &(out_scale * (2.0 * weight / b)).insert_axis(ndarray::Axis(1));
    let d_x = model
        .denoiser
        .backward(&trace, &d_out, grads.denoiser.as_mut(), trainable.needs_input_grad());
    if let Some(d_x) = d_x {
        let c0 = dz + model.config.time_dim;
        for (i, (_, tr)) in conds.iter().enumerate() {
            let Some(tr) = tr else { continue };
            let d_cond = d_x.slice(s![i, c0..]).to_owned();
            let d_pooled = model.text.backward(tr, &d_cond, grads.text.as_mut());
            let share = 1.0 / tr.ids.len() as f64;
            for id in &tr.ids {
                if let Some(g) = grads.rows.get_mut(id) {
                    g.scaled_add(share, &d_pooled);
                }
            }
        }
    }
    Ok(loss)
}

/// Loss only, without gradients.
pub fn ldm_loss(model: &ModelState, batch: &[TrainingExample]) -> Result<f64> {
    let mut grads = GradientSet::zeros(model, &Trainable::nothing());
    accumulate_loss_and_grads(model, batch, &Trainable::nothing(), 1.0, &mut grads)
}
