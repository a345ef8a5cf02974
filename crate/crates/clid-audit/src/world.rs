//! Synthetic conditional data with known generative structure.
//!
//! A world is a Gaussian mixture whose components each carry a unique
//! canonical token sequence; the sequence plays the role of a caption and
//! deterministically identifies the component. Token ids are laid out as:
//! pad = 0, component/filler tokens in `[1, vocab/2)`, and the upper half
//! reserved for the synonym tokens the rephrase defense maps into.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::condition::{ConditionEmbedder, TokenId, TokenSeq};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub mean: Vec<f64>,
    pub stddev: f64,
    pub tokens: TokenSeq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureWorld {
    pub dim: usize,
    pub components: Vec<MixtureComponent>,
    pub rng_seed: u64,
}

/// One dataset record: a data vector paired with its caption analog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub x: Vec<f64>,
    pub c: TokenSeq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyDataset {
    pub points: Vec<DataPoint>,
}

impl ToyDataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// View of the dataset restricted to `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> ToyDataset {
        ToyDataset {
            points: indices.iter().map(|&i| self.points[i].clone()).collect(),
        }
    }
}

/// Disjoint member / hold-out / auxiliary index sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub member: Vec<usize>,
    pub holdout: Vec<usize>,
    pub aux_member: Vec<usize>,
    pub aux_holdout: Vec<usize>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for set in [&self.member, &self.holdout, &self.aux_member, &self.aux_holdout] {
            for &i in set.iter() {
                if i >= dataset_len {
                    return Err(Error::InvalidArgument(format!(
                        "split index {i} out of range for dataset of {dataset_len}"
                    )));
                }
                if !seen.insert(i) {
                    return Err(Error::InvalidArgument(format!(
                        "split index {i} appears in more than one set"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl GaussianMixtureWorld {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Index of the component whose canonical sequence is `c`, if any.
    pub fn component_of(&self, c: &TokenSeq) -> Option<usize> {
        self.components.iter().position(|comp| &comp.tokens == c)
    }
}

/// First token id reserved for synonyms given a vocabulary size.
pub fn synonym_base(vocabulary_size: usize) -> TokenId {
    (vocabulary_size / 2) as TokenId
}

/// Build a mixture world with unique canonical captions.
///
/// Component means are uniform on `[-3, 3]^dim`. Each caption has length
/// 3..=6 with one component-identifying token placed at a random position
/// and filler tokens elsewhere.
pub fn generate_world(
    seed: u64,
    n_components: usize,
    dim: usize,
    stddev: f64,
    vocab: &ConditionEmbedder,
) -> Result<GaussianMixtureWorld> {
    if n_components == 0 || dim == 0 {
        return Err(Error::InvalidArgument(
            "n_components and dim must be positive".into(),
        ));
    }
    if stddev <= 0.0 {
        return Err(Error::InvalidArgument("stddev must be positive".into()));
    }
    let content_end = synonym_base(vocab.vocabulary_size()) as usize;
    // token 0 is pad; identifying tokens then fillers fill [1, content_end)
    if n_components + 2 > content_end {
        return Err(Error::InvalidArgument(format!(
            "vocabulary too small: {} components need at least {} non-reserved tokens",
            n_components,
            n_components + 2
        )));
    }
    let filler_pool: Vec<TokenId> = ((n_components + 1) as TokenId..content_end as TokenId).collect();
    let mut rng = rng_from_seed(seed);
    let mut components = Vec::with_capacity(n_components);
    for comp in 0..n_components {
        let mean: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let len = rng.gen_range(3..=6usize);
        let id_pos = rng.gen_range(0..len);
        let id_token = (comp + 1) as TokenId;
        let tokens: Vec<TokenId> = (0..len)
            .map(|p| {
                if p == id_pos {
                    id_token
                } else {
                    *filler_pool.choose(&mut rng).expect("filler pool non-empty")
                }
            })
            .collect();
        components.push(MixtureComponent {
            mean,
            stddev,
            tokens: TokenSeq::new(tokens),
        });
    }
    Ok(GaussianMixtureWorld {
        dim,
        components,
        rng_seed: seed,
    })
}

/// Draw `per_component` points per component; order is by component.
pub fn sample_dataset(
    world: &GaussianMixtureWorld,
    per_component: usize,
    seed: u64,
) -> Result<ToyDataset> {
    if per_component == 0 {
        return Err(Error::InvalidArgument("per_component must be >= 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut points = Vec::with_capacity(world.n_components() * per_component);
    for comp in &world.components {
        for _ in 0..per_component {
            let x: Vec<f64> = comp
                .mean
                .iter()
                .map(|&m| m + comp.stddev * rng.sample::<f64, _>(StandardNormal))
                .collect();
            points.push(DataPoint {
                x,
                c: comp.tokens.clone(),
            });
        }
    }
    Ok(ToyDataset { points })
}

/// Uniform random disjoint assignment of dataset indices into the four sets.
pub fn split_dataset(
    dataset: &ToyDataset,
    seed: u64,
    member_n: usize,
    holdout_n: usize,
    aux_member_n: usize,
    aux_holdout_n: usize,
) -> Result<SplitSpec> {
    let total = member_n + holdout_n + aux_member_n + aux_holdout_n;
    if total > dataset.len() {
        return Err(Error::InvalidArgument(format!(
            "split sizes sum to {total} but dataset has {} points",
            dataset.len()
        )));
    }
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    let mut rng: ChaCha12Rng = rng_from_seed(seed);
    indices.shuffle(&mut rng);
    let take = |n: usize, cursor: &mut usize| -> Vec<usize> {
        let out = indices[*cursor..*cursor + n].to_vec();
        *cursor += n;
        out
    };
    let mut cursor = 0;
    let spec = SplitSpec {
        member: take(member_n, &mut cursor),
        holdout: take(holdout_n, &mut cursor),
        aux_member: take(aux_member_n, &mut cursor),
        aux_holdout: take(aux_holdout_n, &mut cursor),
        seed,
    };
    spec.validate(dataset.len())?;
    Ok(spec)
}

/// Toy captioner: canonical sequence of the nearest component mean,
/// ties broken by the lowest component index.
pub fn pseudo_caption(x: &[f64], world: &GaussianMixtureWorld) -> TokenSeq {
    debug_assert!(!world.components.is_empty());
    let mut best = 0usize;
    let mut best_d2 = f64::INFINITY;
    for (i, comp) in world.components.iter().enumerate() {
        let d2: f64 = comp
            .mean
            .iter()
            .zip(x)
            .map(|(m, v)| (m - v) * (m - v))
            .sum();
        if d2 < best_d2 {
            best_d2 = d2;
            best = i;
        }
    }
    world.components[best].tokens.clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn embedder() -> ConditionEmbedder {
        ConditionEmbedder::random(32, 8, 5).unwrap()
    }

    #[test]
    fn worlds_are_deterministic_and_unique() {
        let v = embedder();
        let a = generate_world(11, 8, 8, 0.5, &v).unwrap();
        let b = generate_world(11, 8, 8, 0.5, &v).unwrap();
        assert_eq!(a, b);
        for i in 0..8 {
            for j in (i + 1)..8 {
                assert_ne!(a.components[i].tokens, a.components[j].tokens);
                let d2: f64 = a.components[i]
                    .mean
                    .iter()
                    .zip(&a.components[j].mean)
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum();
                assert!(d2 > 0.0);
            }
        }
    }

    #[test]
    fn world_rejects_tiny_vocabulary() {
        let v = ConditionEmbedder::random(8, 4, 1).unwrap();
        // content tokens are 1..4, so at most 1 component fits
        assert!(generate_world(1, 3, 4, 0.5, &v).is_err());
    }

    #[test]
    fn dataset_counts_and_captions() {
        let v = embedder();
        let w = generate_world(3, 3, 4, 0.5, &v).unwrap();
        let d = sample_dataset(&w, 1, 9).unwrap();
        assert_eq!(d.len(), 3);
        for p in &d.points {
            assert!(w.component_of(&p.c).is_some());
            assert_eq!(p.x.len(), 4);
        }
    }

    #[test]
    fn dataset_component_means_match() {
        let v = embedder();
        let w = generate_world(3, 2, 4, 0.5, &v).unwrap();
        let d = sample_dataset(&w, 10_000, 9).unwrap();
        for comp in 0..2 {
            let pts: Vec<&DataPoint> = d
                .points
                .iter()
                .filter(|p| p.c == w.components[comp].tokens)
                .collect();
            assert_eq!(pts.len(), 10_000);
            for coord in 0..4 {
                let mean: f64 =
                    pts.iter().map(|p| p.x[coord]).sum::<f64>() / pts.len() as f64;
                let se = 0.5 / (pts.len() as f64).sqrt();
                assert!(
                    (mean - w.components[comp].mean[coord]).abs() < 3.0 * se,
                    "empirical mean off by more than 3 standard errors"
                );
            }
        }
    }

    #[test]
    fn split_is_exact_partition_when_sizes_cover() {
        let v = embedder();
        let w = generate_world(3, 4, 4, 0.5, &v).unwrap();
        let d = sample_dataset(&w, 50, 9).unwrap(); // 200 points
        let s = split_dataset(&d, 1, 50, 50, 50, 50).unwrap();
        let mut all: Vec<usize> = s
            .member
            .iter()
            .chain(&s.holdout)
            .chain(&s.aux_member)
            .chain(&s.aux_holdout)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..200).collect::<Vec<_>>());
    }

    #[test]
    fn split_boundaries_and_determinism() {
        let v = embedder();
        let w = generate_world(3, 4, 4, 0.5, &v).unwrap();
        let d = sample_dataset(&w, 10, 9).unwrap();
        let s = split_dataset(&d, 1, 0, 5, 5, 5).unwrap();
        assert!(s.member.is_empty());
        assert_eq!(s, split_dataset(&d, 1, 0, 5, 5, 5).unwrap());
        assert!(split_dataset(&d, 1, 20, 20, 20, 20).is_err());
    }

    #[test]
    fn pseudo_caption_recovers_components() {
        let v = embedder();
        let w = generate_world(3, 4, 8, 0.5, &v).unwrap();
        for (i, comp) in w.components.iter().enumerate() {
            assert_eq!(pseudo_caption(&comp.mean, &w), w.components[i].tokens);
        }
    }

    #[test]
    fn pseudo_caption_ties_break_low() {
        let w = GaussianMixtureWorld {
            dim: 1,
            components: vec![
                MixtureComponent { mean: vec![0.0], stddev: 1.0, tokens: TokenSeq::new(vec![1]) },
                MixtureComponent { mean: vec![-1.0], stddev: 1.0, tokens: TokenSeq::new(vec![2]) },
                MixtureComponent { mean: vec![1.0], stddev: 1.0, tokens: TokenSeq::new(vec![3]) },
                MixtureComponent { mean: vec![2.0], stddev: 1.0, tokens: TokenSeq::new(vec![4]) },
            ],
        // component 0 at 0.0 and component 2 at 1.0 are equidistant from 0.5
            rng_seed: 0,
        };
        assert_eq!(pseudo_caption(&[0.5], &w), TokenSeq::new(vec![1]));
    }

    #[test]
    fn pseudo_caption_statistical_recovery() {
        let v = embedder();
        let w = generate_world(13, 4, 8, 1.0, &v).unwrap();
        let mut min_d = f64::INFINITY;
        for i in 0..4 {
            for j in (i + 1)..4 {
                let d: f64 = w.components[i]
                    .mean
                    .iter()
                    .zip(&w.components[j].mean)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                min_d = min_d.min(d);
            }
        }
        let sigma = 0.1 * min_d;
        let mut rng = rng_from_seed(77);
        let mut hits = 0usize;
        let n = 10_000usize;
        for i in 0..n {
            let comp = i % 4;
            let x: Vec<f64> = w.components[comp]
                .mean
                .iter()
                .map(|&m| m + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            if pseudo_caption(&x, &w) == w.components[comp].tokens {
                hits += 1;
            }
        }
        assert!(hits as f64 / n as f64 >= 0.99);
    }
}
