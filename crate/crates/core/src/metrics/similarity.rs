use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A set of embedding vectors of uniform width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub vectors: Vec<Vec<f64>>,
    pub source: String,
}

impl EmbeddingSet {
    pub fn new(vectors: Vec<Vec<f64>>, source: impl Into<String>) -> Result<Self> {
        if let Some(first) = vectors.first() {
            let d = first.len();
            if vectors.iter().any(|v| v.len() != d) {
                return Err(Error::domain("embedding set has mixed dimensions"));
            }
            if vectors.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::domain("embedding set has non-finite entries"));
            }
        }
        Ok(Self {
            vectors,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.vectors.first().map(Vec::len)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::domain(format!("dimension mismatch: {} vs {}", a.len(), b.len())));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::domain("cosine of a zero vector"));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

fn check_pair(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("similarity needs two non-empty sets"));
    }
    if a.dim() != b.dim() {
        return Err(Error::domain("embedding sets differ in dimension"));
    }
    Ok(())
}

/// Mean cosine similarity over every (generated, training) pair.
pub fn clap_a(gen: &EmbeddingSet, train: &EmbeddingSet) -> Result<f64> {
    check_pair(gen, train)?;
    let mut total = 0.0;
    for g in &gen.vectors {
        for t in &train.vectors {
            total += cosine(g, t)?;
        }
    }
    Ok(total / (gen.len() * train.len()) as f64)
}

/// Mean cosine similarity between each generated vector and the prompt.
pub fn clap_t(gen: &EmbeddingSet, prompt: &[f64]) -> Result<f64> {
    let p = EmbeddingSet::new(vec![prompt.to_vec()], "prompt")?;
    clap_a(gen, &p)
}

/// Mean cosine over distinct pairs within one set; `None` with fewer than
/// two vectors.
pub fn mean_pairwise_within(set: &EmbeddingSet) -> Result<Option<f64>> {
    let n = set.len();
    if n < 2 {
        return Ok(None);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            total += cosine(&set.vectors[i], &set.vectors[j])?;
            count += 1;
        }
    }
    Ok(Some(total / count as f64))
}
