use ndarray::{Array1, Array2};
use rand::Rng;

use super::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::rng::gaussian;

/// Parameters of the text encoder: mean-pooled embeddings through a
/// two-layer tanh projection.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoder {
    /// `[d_e × hidden]`
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `[hidden × d_c]`
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Gradient buffers congruent with [`TextEncoder`].
pub type TextEncoderGrads = TextEncoder;

/// Cached activations from [`TextEncoder::forward`].
#[derive(Debug, Clone)]
pub struct TextTrace {
    pub ids: Vec<usize>,
    pub pooled: Array1<f64>,
    pub hidden: Array1<f64>,
}

impl TextEncoder {
    pub fn random<R: Rng + ?Sized>(d_e: usize, hidden: usize, d_c: usize, rng: &mut R) -> Self {
        let s1 = (1.0 / d_e as f64).sqrt();
        let s2 = (1.0 / hidden as f64).sqrt();
        Self {
            w1: Array2::from_shape_fn((d_e, hidden), |_| s1 * gaussian(rng)),
            b1: Array1::zeros(hidden),
            w2: Array2::from_shape_fn((hidden, d_c), |_| s2 * gaussian(rng)),
            b2: Array1::zeros(d_c),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array1::zeros(self.b1.raw_dim()),
            w2: Array2::zeros(self.w2.raw_dim()),
            b2: Array1::zeros(self.b2.raw_dim()),
        }
    }

    pub fn d_e(&self) -> usize {
        self.w1.nrows()
    }

    pub fn d_c(&self) -> usize {
        self.w2.ncols()
    }

    pub fn tensors(&self) -> [(&'static str, &[f64]); 4] {
        [
            ("text.w1", self.w1.as_slice().unwrap()),
            ("text.b1", self.b1.as_slice().unwrap()),
            ("text.w2", self.w2.as_slice().unwrap()),
            ("text.b2", self.b2.as_slice().unwrap()),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 4] {
        [
            ("text.w1", self.w1.as_slice_mut().unwrap()),
            ("text.b1", self.b1.as_slice_mut().unwrap()),
            ("text.w2", self.w2.as_slice_mut().unwrap()),
            ("text.b2", self.b2.as_slice_mut().unwrap()),
        ]
    }

    /// Conditioning vector and the trace needed for backprop.
    pub fn forward(&self, table: &EmbeddingTable, ids: &[usize]) -> Result<(Array1<f64>, TextTrace)> {
        if ids.is_empty() {
            return Err(Error::domain("cannot encode an empty token sequence"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= table.rows()) {
            return Err(Error::domain(format!("token id {bad} outside embedding table")));
        }
        if table.dim() != self.d_e() {
            return Err(Error::domain("embedding width does not match text encoder"));
        }
        // Sorted so the sum, and hence the encoding, ignores token order.
        let mut sorted = ids.to_vec();
        sorted.sort_unstable();
        let mut pooled = Array1::zeros(table.dim());
        for &i in &sorted {
            pooled += &table.vectors.row(i);
        }
        pooled /= ids.len() as f64;
        let hidden = (pooled.dot(&self.w1) + &self.b1).mapv(f64::tanh);
        let cond = hidden.dot(&self.w2) + &self.b2;
        Ok((
            cond,
            TextTrace {
                ids: ids.to_vec(),
                pooled,
                hidden,
            },
        ))
    }

    /// Backpropagate `d_cond`. Encoder gradients accumulate into `grads`
    /// when given; the gradient with respect to the pooled embedding is
    /// returned (each token row receives it divided by the token count).
    pub fn backward(
        &self,
        trace: &TextTrace,
        d_cond: &Array1<f64>,
        grads: Option<&mut TextEncoderGrads>,
    ) -> Array1<f64> {
        let d_hidden = self.w2.dot(d_cond);
        let d_pre = &d_hidden * &trace.hidden.mapv(|h| 1.0 - h * h);
        if let Some(g) = grads {
            outer_acc(&mut g.w2, &trace.hidden, d_cond);
            g.b2 += d_cond;
            outer_acc(&mut g.w1, &trace.pooled, &d_pre);
            g.b1 += &d_pre;
        }
        self.w1.dot(&d_pre)
    }
}

pub(crate) fn outer_acc(m: &mut Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) {
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let mut row = m.row_mut(i);
        row.scaled_add(ai, b);
    }
}

/// Conditioning vector for a token sequence.
pub fn encode_text(tau: &TextEncoder, table: &EmbeddingTable, ids: &[usize]) -> Result<Array1<f64>> {
    Ok(tau.forward(table, ids)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn setup() -> (TextEncoder, EmbeddingTable) {
        let mut rng = rng_from_seed(11);
        let table = EmbeddingTable::random(6, 8, 1.0, &mut rng);
        let tau = TextEncoder::random(8, 12, 5, &mut rng);
        (tau, table)
    }

    #[test]
    fn empty_sequence_rejected() {
        let (tau, table) = setup();
        assert!(encode_text(&tau, &table, &[]).is_err());
    }

    #[test]
    fn order_invariant() {
        let (tau, table) = setup();
        let a = encode_text(&tau, &table, &[1, 2, 3]).unwrap();
        let b = encode_text(&tau, &table, &[3, 1, 2]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_token_is_projection_of_its_row() {
        let (tau, table) = setup();
        let c = encode_text(&tau, &table, &[4]).unwrap();
        let h = (table.row(4).dot(&tau.w1) + &tau.b1).mapv(f64::tanh);
        let expect = h.dot(&tau.w2) + &tau.b2;
        assert_eq!(c, expect);
    }

    #[test]
    fn bounded_inputs_stay_finite() {
        let (tau, mut table) = setup();
        table.vectors.fill(10.0);
        let c = encode_text(&tau, &table, &[0, 1, 2]).unwrap();
        assert!(c.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gradient_wrt_row_matches_finite_differences() {
        let (tau, table) = setup();
        let ids = [2, 5, 5];
        let probe = Array1::from_shape_fn(5, |i| 0.3 + i as f64 * 0.1);
        let (_, trace) = tau.forward(&table, &ids).unwrap();
        let d_pooled = tau.backward(&trace, &probe, None);
        // Row 5 appears twice.
        let analytic = d_pooled.mapv(|v| v * 2.0 / 3.0);
        let h = 1e-4;
        for j in 0..table.dim() {
            let mut plus = table.clone();
            plus.vectors[[5, j]] += h;
            let mut minus = table.clone();
            minus.vectors[[5, j]] -= h;
            let fp = encode_text(&tau, &plus, &ids).unwrap().dot(&probe);
            let fm = encode_text(&tau, &minus, &ids).unwrap().dot(&probe);
            let fd = (fp - fm) / (2.0 * h);
            let rel = (fd - analytic[j]).abs() / fd.abs().max(analytic[j].abs()).max(1e-8);
            assert!(rel < 1e-4, "dim {j}: fd {fd} vs {}", analytic[j]);
        }
    }
}
