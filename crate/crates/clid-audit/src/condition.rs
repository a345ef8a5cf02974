//! Token sequences, conditions, and the frozen condition embedder.
//!
//! A condition is normally a short token sequence; the embedding-noise
//! reduction strategy additionally produces raw embedding vectors, so
//! [`Condition`] covers both. The embedder is a frozen random table with a
//! zero row for the pad token; sequences embed as the mean of their token
//! rows and the empty sequence embeds as the zero vector.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

pub type TokenId = u32;

/// Token id reserved for padding; its embedding row is pinned to zero.
pub const PAD_TOKEN: TokenId = 0;

/// A short caption analog: a sequence of token ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq(pub Vec<TokenId>);

impl TokenSeq {
    pub fn new(tokens: Vec<TokenId>) -> Self {
        TokenSeq(tokens)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.0
    }
}

/// A conditioning input: either a token sequence or a raw embedding vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Condition {
    Tokens(TokenSeq),
    Embedding(Vec<f64>),
}

impl Condition {
    pub fn tokens(seq: Vec<TokenId>) -> Self {
        Condition::Tokens(TokenSeq::new(seq))
    }

    /// True for the empty token sequence (the null condition).
    pub fn is_null(&self) -> bool {
        matches!(self, Condition::Tokens(s) if s.is_empty())
    }
}

impl From<TokenSeq> for Condition {
    fn from(seq: TokenSeq) -> Self {
        Condition::Tokens(seq)
    }
}

/// The empty text condition; embeds to the zero vector.
pub fn null_condition() -> Condition {
    Condition::Tokens(TokenSeq::default())
}

/// Frozen mean-pooling token embedder, the toy stand-in for a text encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionEmbedder {
    vocabulary_size: usize,
    embedding_dim: usize,
    pad_token: TokenId,
    /// Row-major `[vocabulary_size x embedding_dim]`.
    table: Vec<f64>,
}

impl ConditionEmbedder {
    /// Build a frozen random table; standard normal entries, pad row zeroed.
    pub fn random(vocabulary_size: usize, embedding_dim: usize, seed: u64) -> Result<Self> {
        if vocabulary_size < 2 || embedding_dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "embedder needs vocabulary_size >= 2 and embedding_dim >= 1, got {vocabulary_size}/{embedding_dim}"
            )));
        }
        let mut rng = rng_from_seed(seed);
        let mut table = vec![0.0; vocabulary_size * embedding_dim];
        for (token, row) in table.chunks_mut(embedding_dim).enumerate() {
            if token as TokenId == PAD_TOKEN {
                continue; // pad row stays zero
            }
            for v in row.iter_mut() {
                *v = rng.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(ConditionEmbedder {
            vocabulary_size,
            embedding_dim,
            pad_token: PAD_TOKEN,
            table,
        })
    }

    /// Build an embedder from an explicit table (used by tests and persistence).
    pub fn from_table(table: Vec<f64>, vocabulary_size: usize, embedding_dim: usize) -> Result<Self> {
        if table.len() != vocabulary_size * embedding_dim {
            return Err(Error::DimensionMismatch(format!(
                "embedder table has {} entries, expected {}",
                table.len(),
                vocabulary_size * embedding_dim
            )));
        }
        Ok(ConditionEmbedder {
            vocabulary_size,
            embedding_dim,
            pad_token: PAD_TOKEN,
            table,
        })
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocabulary_size
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn pad_token(&self) -> TokenId {
        self.pad_token
    }

    pub fn row(&self, token: TokenId) -> Result<&[f64]> {
        let t = token as usize;
        if t >= self.vocabulary_size {
            return Err(Error::InvalidArgument(format!(
                "token id {token} out of vocabulary (size {})",
                self.vocabulary_size
            )));
        }
        Ok(&self.table[t * self.embedding_dim..(t + 1) * self.embedding_dim])
    }

    /// Mean of the token rows; the empty sequence embeds as the zero vector.
    pub fn embed_tokens(&self, seq: &TokenSeq) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.embedding_dim];
        if seq.is_empty() {
            return Ok(out);
        }
        for &token in seq.tokens() {
            let row = self.row(token)?;
            for (o, r) in out.iter_mut().zip(row) {
                *o += r;
            }
        }
        let inv = 1.0 / seq.len() as f64;
        for o in out.iter_mut() {
            *o *= inv;
        }
        Ok(out)
    }

    /// Resolve any condition to an embedding vector.
    pub fn embed(&self, cond: &Condition) -> Result<Vec<f64>> {
        match cond {
            Condition::Tokens(seq) => self.embed_tokens(seq),
            Condition::Embedding(e) => {
                if e.len() != self.embedding_dim {
                    return Err(Error::DimensionMismatch(format!(
                        "raw condition embedding has dim {}, embedder expects {}",
                        e.len(),
                        self.embedding_dim
                    )));
                }
                Ok(e.clone())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pad_token_embeds_to_zero() {
        let emb = ConditionEmbedder::random(8, 4, 3).unwrap();
        assert!(emb.row(PAD_TOKEN).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn null_condition_embeds_to_zero() {
        let emb = ConditionEmbedder::random(8, 4, 3).unwrap();
        let e = emb.embed(&null_condition()).unwrap();
        assert_eq!(e, vec![0.0; 4]);
        assert_eq!(null_condition(), Condition::tokens(vec![]));
        assert!(null_condition().is_null());
    }

    #[test]
    fn embedding_is_mean_of_rows_and_deterministic() {
        let emb = ConditionEmbedder::random(8, 4, 3).unwrap();
        let seq = TokenSeq::new(vec![1, 2]);
        let e = emb.embed_tokens(&seq).unwrap();
        let r1 = emb.row(1).unwrap();
        let r2 = emb.row(2).unwrap();
        for i in 0..4 {
            assert!((e[i] - 0.5 * (r1[i] + r2[i])).abs() < 1e-15);
        }
        assert_eq!(e, emb.embed_tokens(&seq).unwrap());
    }

    #[test]
    fn out_of_vocabulary_token_is_rejected() {
        let emb = ConditionEmbedder::random(8, 4, 3).unwrap();
        assert!(emb.embed_tokens(&TokenSeq::new(vec![99])).is_err());
    }
}
