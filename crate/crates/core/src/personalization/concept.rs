use super::config::Method;
use crate::audio::AudioClip;
use crate::corpus::IDENTIFIER;
use crate::error::{Error, Result};

/// A few-shot concept to personalize on.
#[derive(Debug, Clone, PartialEq)]
pub struct Concept {
    pub name: String,
    pub class_noun: String,
    pub clips: Vec<AudioClip>,
    /// Placeholder token used by textual inversion.
    pub placeholder: String,
}

impl Concept {
    pub fn new(name: impl Into<String>, class_noun: impl Into<String>, clips: Vec<AudioClip>) -> Result<Self> {
        let name = name.into();
        let class_noun = class_noun.into();
        if clips.is_empty() {
            return Err(Error::domain(format!("concept {name:?} has no clips")));
        }
        if let Some(c) = clips.iter().find(|c| c.duration() < 1.0 - 1e-9) {
            return Err(Error::domain(format!(
                "concept {name:?} has a {:.3} s clip; at least 1 s is required",
                c.duration()
            )));
        }
        let placeholder = format!(
            "<{}>",
            name.to_lowercase().split_whitespace().collect::<Vec<_>>().join("-")
        );
        Ok(Self {
            name,
            class_noun,
            clips,
            placeholder,
        })
    }

    /// The phrase standing for the concept in prompts: the placeholder token
    /// for textual inversion, `identifier class-noun` for DreamBooth.
    pub fn phrase(&self, method: Method) -> String {
        match method {
            Method::Ti => self.placeholder.clone(),
            Method::Db => format!("{IDENTIFIER} {}", self.class_noun),
        }
    }

    /// The first `n` clips (all of them if fewer).
    pub fn first_clips(&self, n: usize) -> &[AudioClip] {
        &self.clips[..n.min(self.clips.len())]
    }
}
