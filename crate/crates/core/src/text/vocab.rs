use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub const UNK: &str = "<unk>";
pub const UNK_ID: usize = 0;

/// A closed word vocabulary plus reserved placeholder tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabData")]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    placeholder_ids: BTreeSet<usize>,
}

#[derive(Deserialize)]
struct VocabData {
    tokens: Vec<String>,
    placeholder_ids: BTreeSet<usize>,
}

impl From<VocabData> for Vocab {
    fn from(d: VocabData) -> Self {
        let mut v = Vocab {
            tokens: d.tokens,
            index: HashMap::new(),
            placeholder_ids: d.placeholder_ids,
        };
        v.reindex();
        v
    }
}

impl Vocab {
    /// Build from words; duplicates are dropped, first occurrence wins.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Vocab {
            tokens: vec![UNK.to_string()],
            index: HashMap::new(),
            placeholder_ids: BTreeSet::new(),
        };
        v.index.insert(UNK.to_string(), UNK_ID);
        for w in words {
            for piece in split_words(w.as_ref()) {
                if !v.index.contains_key(&piece) {
                    v.index.insert(piece.clone(), v.tokens.len());
                    v.tokens.push(piece);
                }
            }
        }
        v
    }

    fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(&word.to_lowercase()).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn is_placeholder(&self, id: usize) -> bool {
        self.placeholder_ids.contains(&id)
    }

    pub fn placeholder_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.placeholder_ids.iter().copied()
    }

    /// Ids of ordinary words (neither UNK nor placeholders).
    pub fn base_ids(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.tokens.len()).filter(move |&i| i != UNK_ID && !self.placeholder_ids.contains(&i))
    }

    /// Reserve a new placeholder token; returns `None` if the string exists.
    pub(crate) fn push_placeholder(&mut self, s: &str) -> Option<usize> {
        let key = s.to_lowercase();
        if self.index.contains_key(&key) {
            return None;
        }
        let id = self.tokens.len();
        self.index.insert(key.clone(), id);
        self.tokens.push(key);
        self.placeholder_ids.insert(id);
        Some(id)
    }

    /// Lowercase, split on whitespace and punctuation; whole
    /// whitespace-delimited chunks that name a placeholder map to it.
    pub fn tokenize(&self, prompt: &str) -> Vec<usize> {
        let mut ids = Vec::new();
        for chunk in prompt.split_whitespace() {
            let lowered = chunk.to_lowercase();
            let trimmed = lowered.trim_end_matches(['.', ',', ';', ':', '!', '?', '"', '\'']);
            let trimmed = trimmed.trim_start_matches(['"', '\'', '(']);
            if let Some(&id) = self.index.get(trimmed) {
                if self.placeholder_ids.contains(&id) {
                    ids.push(id);
                    continue;
                }
            }
            for w in split_words(&lowered) {
                ids.push(self.index.get(&w).copied().unwrap_or(UNK_ID));
            }
        }
        ids
    }
}

/// Lowercased alphanumeric runs.
pub fn split_words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholder_prompt_tokenizes() {
        let mut v = Vocab::from_words(["a recording of"]);
        let s = v.push_placeholder("S_*").unwrap();
        let ids = v.tokenize("A recording of a S_*");
        let a = v.id("a").unwrap();
        assert_eq!(ids, vec![a, v.id("recording").unwrap(), v.id("of").unwrap(), a, s]);
        assert_eq!(v.tokenize("a S_*."), vec![a, s]);
    }

    #[test]
    fn empty_and_unknown() {
        let v = Vocab::from_words(["drum"]);
        assert!(v.tokenize("").is_empty());
        assert_eq!(v.tokenize("banjo"), vec![UNK_ID]);
        assert_eq!(v.tokenize("Drum, banjo!"), vec![v.id("drum").unwrap(), UNK_ID]);
    }

    #[test]
    fn placeholders_disjoint_from_base() {
        let mut v = Vocab::from_words(["x y z"]);
        assert!(v.push_placeholder("y").is_none());
        let p = v.push_placeholder("<new>").unwrap();
        assert!(v.is_placeholder(p));
        assert!(!v.base_ids().any(|i| i == p));
        assert_eq!(v.base_ids().count(), 3);
    }
}
