use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::Vocab;
use crate::error::{Error, Result};
use crate::rng::gaussian;

/// How to initialize a new placeholder row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceholderInit {
    /// Mean of every base-vocabulary row.
    Baseline,
    /// Mean of the rows of the given class-noun words.
    MeanWord(String),
}

/// Word-embedding rows with a per-row trainable flag.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub vectors: Array2<f64>,
    pub trainable: Vec<bool>,
}

impl EmbeddingTable {
    pub fn random<R: Rng + ?Sized>(rows: usize, dim: usize, scale: f64, rng: &mut R) -> Self {
        let vectors = Array2::from_shape_fn((rows, dim), |_| scale * gaussian(rng));
        Self {
            vectors,
            trainable: vec![false; rows],
        }
    }

    pub fn rows(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn row(&self, id: usize) -> Array1<f64> {
        self.vectors.row(id).to_owned()
    }

    pub fn trainable_rows(&self) -> Vec<usize> {
        (0..self.rows()).filter(|&i| self.trainable[i]).collect()
    }

    pub fn set_all_trainable(&mut self, flag: bool) {
        self.trainable.iter_mut().for_each(|t| *t = flag);
    }

    fn push_row(&mut self, row: Array1<f64>) {
        self.vectors.push_row(row.view()).expect("row width matches");
        self.trainable.push(false);
    }
}

/// Register `s_star` as a placeholder and append its embedding row,
/// initialized per `init`. Only the new row is left trainable.
pub fn add_placeholder(
    table: &mut EmbeddingTable,
    vocab: &mut Vocab,
    s_star: &str,
    init: &PlaceholderInit,
) -> Result<usize> {
    if table.rows() != vocab.len() {
        return Err(Error::Precondition(format!(
            "embedding table has {} rows but vocabulary has {} tokens",
            table.rows(),
            vocab.len()
        )));
    }
    if vocab.id(s_star).is_some() {
        return Err(Error::Conflict(format!("{s_star:?} is already in the vocabulary")));
    }
    let ids: Vec<usize> = match init {
        PlaceholderInit::Baseline => vocab.base_ids().collect(),
        PlaceholderInit::MeanWord(noun) => {
            let ids: Vec<usize> = vocab
                .tokenize(noun)
                .into_iter()
                .filter(|&i| i != super::vocab::UNK_ID && !vocab.is_placeholder(i))
                .collect();
            if ids.is_empty() {
                return Err(Error::domain(format!("class noun {noun:?} has no known words")));
            }
            ids
        }
    };
    if ids.is_empty() {
        return Err(Error::DegenerateInput("vocabulary has no base words".into()));
    }
    let picked = table.vectors.select(Axis(0), &ids);
    let row = picked.mean_axis(Axis(0)).expect("non-empty selection");
    let id = vocab
        .push_placeholder(s_star)
        .ok_or_else(|| Error::Conflict(format!("{s_star:?} is already in the vocabulary")))?;
    table.push_row(row);
    table.set_all_trainable(false);
    table.trainable[id] = true;
    Ok(id)
}
