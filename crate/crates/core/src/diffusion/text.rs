//! Deterministic bag-of-tokens prompt encoder.
//!
//! Each vocabulary token owns a fixed Gaussian embedding drawn from its own
//! seeded stream, so the table never has to be stored and adding a token
//! leaves every other embedding unchanged. A prompt embeds to the L2-normalized
//! mean of its token embeddings; tokens outside the vocabulary share one UNK
//! embedding.

use std::collections::BTreeSet;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng;

pub const TEXT_DIM: usize = 512;
pub const UNK: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEncoder {
    pub vocab: BTreeSet<String>,
    pub dim: usize,
    pub seed: u64,
}

fn token_key(token: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in token.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Lowercase and split on anything that is not alphanumeric.
pub fn tokenize(prompt: &str) -> Vec<String> {
    prompt
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

impl TextEncoder {
    pub fn build<'a>(prompts: impl IntoIterator<Item = &'a str>, dim: usize, seed: u64) -> Self {
        let vocab = prompts.into_iter().flat_map(tokenize).collect();
        TextEncoder { vocab, dim, seed }
    }

    fn token_embedding(&self, token: &str) -> Vec<f64> {
        let mut rng = rng::indexed(self.seed, rng::TEXT, token_key(token));
        (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    /// `None` for prompts without tokens: the null condition, identical to
    /// masked text.
    pub fn encode(&self, prompt: &str) -> Option<Vec<f64>> {
        let mut tokens: Vec<&str> = Vec::new();
        let toks = tokenize(prompt);
        for t in &toks {
            tokens.push(if self.vocab.contains(t) { t } else { UNK });
        }
        if tokens.is_empty() {
            return None;
        }
        // summation order fixed so permuted prompts embed bit-identically
        tokens.sort_unstable();
        let mut sum = vec![0.0; self.dim];
        for t in &tokens {
            for (s, e) in sum.iter_mut().zip(self.token_embedding(t)) {
                *s += e;
            }
        }
        let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
        Some(sum.into_iter().map(|v| v / norm).collect())
    }

    pub fn encode_opt(&self, prompt: Option<&str>) -> Option<Vec<f64>> {
        prompt.and_then(|p| self.encode(p))
    }
}
