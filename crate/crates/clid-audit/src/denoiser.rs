//! Conditional MLP noise predictor.
//!
//! The network consumes `[x_t | sinusoidal(t) | condition embedding]` and
//! predicts the noise vector. Parameters live in one flat array so
//! checkpoints, the Adam step, and finite-difference checks all address the
//! same storage. Backpropagation is hand-rolled; the network is small
//! enough that a tape would be overkill.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use rand::Rng;
use rand_distr::StandardNormal;

/// Architecture description: data, time-encoding, and condition dims plus
/// hidden widths. The input layer is their concatenation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetArch {
    pub data_dim: usize,
    pub time_embed_dim: usize,
    pub cond_dim: usize,
    pub hidden_widths: Vec<usize>,
}

impl NetArch {
    pub fn input_dim(&self) -> usize {
        self.data_dim + self.time_embed_dim + self.cond_dim
    }

    /// Full layer widths `[input, hidden..., data_dim]`.
    pub fn layer_widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend_from_slice(&self.hidden_widths);
        w.push(self.data_dim);
        w
    }

    pub fn validate(&self) -> Result<()> {
        if self.data_dim == 0 {
            return Err(Error::InvalidArgument("data_dim must be positive".into()));
        }
        if self.time_embed_dim == 0 || self.time_embed_dim % 2 != 0 {
            return Err(Error::InvalidArgument(
                "time_embed_dim must be positive and even".into(),
            ));
        }
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidArgument("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

/// One linear layer's location inside the flat parameter array.
#[derive(Clone, Copy, Debug)]
pub struct LayerSlice {
    pub weight_offset: usize,
    pub bias_offset: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenoiserNet {
    pub arch: NetArch,
    /// Flat parameters: per layer, weights (out x in, row-major) then biases.
    pub params: Vec<f64>,
}

/// Scratch produced by a cached forward pass, consumed by backprop.
pub struct ForwardCache {
    /// Activations per layer boundary; `[0]` is the input vector.
    activations: Vec<Vec<f64>>,
    /// Pre-activation values for every non-final layer.
    pre_activations: Vec<Vec<f64>>,
}

fn silu(z: f64) -> f64 {
    z / (1.0 + (-z).exp())
}

fn silu_derivative(z: f64) -> f64 {
    let s = 1.0 / (1.0 + (-z).exp());
    s * (1.0 + z * (1.0 - s))
}

/// Standard sinusoidal encoding of an integer timestep.
pub fn sinusoidal_time_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let freq = (10_000f64).powf(-(i as f64) / half as f64);
        let arg = t as f64 * freq;
        out.push(arg.sin());
        out.push(arg.cos());
    }
    out
}

impl DenoiserNet {
    /// He-style initialization: weights `N(0, 2/fan_in)`, biases zero.
    pub fn init(arch: NetArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = rng_from_seed(seed);
        let widths = arch.layer_widths();
        let mut params = Vec::new();
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(scale * rng.sample::<f64, _>(StandardNormal));
            }
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Ok(DenoiserNet { arch, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn layer_widths(&self) -> Vec<usize> {
        self.arch.layer_widths()
    }

    /// Offsets of every layer inside the flat parameter array.
    pub fn layer_slices(&self) -> Vec<LayerSlice> {
        let widths = self.arch.layer_widths();
        let mut slices = Vec::with_capacity(widths.len() - 1);
        let mut offset = 0;
        for w in widths.windows(2) {
            let (in_dim, out_dim) = (w[0], w[1]);
            slices.push(LayerSlice {
                weight_offset: offset,
                bias_offset: offset + in_dim * out_dim,
                in_dim,
                out_dim,
            });
            offset += in_dim * out_dim + out_dim;
        }
        slices
    }

    /// Concatenate `[x_t | time encoding | condition embedding]`, checking dims.
    pub fn assemble_input(&self, x_t: &[f64], t: usize, c_embed: &[f64]) -> Result<Vec<f64>> {
        if x_t.len() != self.arch.data_dim {
            return Err(Error::DimensionMismatch(format!(
                "x_t has dim {}, net expects {}",
                x_t.len(),
                self.arch.data_dim
            )));
        }
        if c_embed.len() != self.arch.cond_dim {
            return Err(Error::DimensionMismatch(format!(
                "condition embedding has dim {}, net expects {}",
                c_embed.len(),
                self.arch.cond_dim
            )));
        }
        let mut input = Vec::with_capacity(self.arch.input_dim());
        input.extend_from_slice(x_t);
        input.extend(sinusoidal_time_embedding(t, self.arch.time_embed_dim));
        input.extend_from_slice(c_embed);
        Ok(input)
    }

    fn forward_from_input(&self, input: &[f64]) -> Vec<f64> {
        let slices = self.layer_slices();
        let last = slices.len() - 1;
        let mut current = input.to_vec();
        for (li, s) in slices.iter().enumerate() {
            let mut next = Vec::with_capacity(s.out_dim);
            for j in 0..s.out_dim {
                let row = &self.params[s.weight_offset + j * s.in_dim..s.weight_offset + (j + 1) * s.in_dim];
                let mut z = self.params[s.bias_offset + j];
                for (w, a) in row.iter().zip(&current) {
                    z += w * a;
                }
                next.push(if li == last { z } else { silu(z) });
            }
            current = next;
        }
        current
    }

    /// Forward pass retaining intermediates for backprop.
    pub fn forward_cached(&self, input: &[f64]) -> (Vec<f64>, ForwardCache) {
        let slices = self.layer_slices();
        let last = slices.len() - 1;
        let mut activations = vec![input.to_vec()];
        let mut pre_activations = Vec::with_capacity(last);
        for (li, s) in slices.iter().enumerate() {
            let current = activations.last().unwrap();
            let mut pre = Vec::with_capacity(s.out_dim);
            for j in 0..s.out_dim {
                let row = &self.params[s.weight_offset + j * s.in_dim..s.weight_offset + (j + 1) * s.in_dim];
                let mut z = self.params[s.bias_offset + j];
                for (w, a) in row.iter().zip(current) {
                    z += w * a;
                }
                pre.push(z);
            }
            let act: Vec<f64> = if li == last {
                pre.clone()
            } else {
                pre.iter().map(|&z| silu(z)).collect()
            };
            if li != last {
                pre_activations.push(pre);
            }
            activations.push(act);
        }
        let output = activations.last().unwrap().clone();
        (output, ForwardCache { activations, pre_activations })
    }

    /// Accumulate parameter gradients for one sample given `dL/d output`.
    pub fn backward(&self, cache: &ForwardCache, d_output: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let slices = self.layer_slices();
        let last = slices.len() - 1;
        let mut delta = d_output.to_vec();
        for li in (0..slices.len()).rev() {
            let s = &slices[li];
            let input = &cache.activations[li];
            // d/d pre-activation
            if li != last {
                let pre = &cache.pre_activations[li];
                for (d, &z) in delta.iter_mut().zip(pre) {
                    *d *= silu_derivative(z);
                }
            }
            for j in 0..s.out_dim {
                let dj = delta[j];
                let row = &mut grad[s.weight_offset + j * s.in_dim..s.weight_offset + (j + 1) * s.in_dim];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += dj * a;
                }
                grad[s.bias_offset + j] += dj;
            }
            if li > 0 {
                let mut prev = vec![0.0; s.in_dim];
                for j in 0..s.out_dim {
                    let dj = delta[j];
                    let row = &self.params[s.weight_offset + j * s.in_dim..s.weight_offset + (j + 1) * s.in_dim];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += dj * w;
                    }
                }
                delta = prev;
            }
        }
    }
}

/// Read-only noise-prediction interface; lets test doubles stand in for a
/// trained network inside the estimators and the sampler.
pub trait NoisePredictor: Sync {
    fn data_dim(&self) -> usize;
    fn predict(&self, x_t: &[f64], t: usize, c_embed: &[f64]) -> Vec<f64>;
}

impl NoisePredictor for DenoiserNet {
    fn data_dim(&self) -> usize {
        self.arch.data_dim
    }

    fn predict(&self, x_t: &[f64], t: usize, c_embed: &[f64]) -> Vec<f64> {
        let input = self
            .assemble_input(x_t, t, c_embed)
            .expect("caller validated dimensions");
        self.forward_from_input(&input)
    }
}

/// Evaluate the noise predictor with dimension checks.
pub fn predict_eps(
    net: &DenoiserNet,
    x_t: &[f64],
    t: usize,
    c_embed: &[f64],
) -> Result<Vec<f64>> {
    let input = net.assemble_input(x_t, t, c_embed)?;
    Ok(net.forward_from_input(&input))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arch() -> NetArch {
        NetArch {
            data_dim: 3,
            time_embed_dim: 4,
            cond_dim: 2,
            hidden_widths: vec![8, 8],
        }
    }

    #[test]
    fn zeroed_final_layer_outputs_zero() {
        let mut net = DenoiserNet::init(small_arch(), 1).unwrap();
        let s = *net.layer_slices().last().unwrap();
        for p in net.params[s.weight_offset..s.bias_offset + s.out_dim].iter_mut() {
            *p = 0.0;
        }
        let out = predict_eps(&net, &[0.3, -1.0, 2.0], 2, &[0.5, 0.5]).unwrap();
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn forward_is_deterministic_and_finite() {
        let net = DenoiserNet::init(small_arch(), 7).unwrap();
        let a = predict_eps(&net, &[0.1, 0.2, 0.3], 5, &[1.0, -1.0]).unwrap();
        let b = predict_eps(&net, &[0.1, 0.2, 0.3], 5, &[1.0, -1.0]).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()));
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let net = DenoiserNet::init(small_arch(), 7).unwrap();
        assert!(predict_eps(&net, &[0.1, 0.2], 5, &[1.0, -1.0]).is_err());
        assert!(predict_eps(&net, &[0.1, 0.2, 0.3], 5, &[1.0]).is_err());
    }

    #[test]
    fn cached_forward_matches_plain_forward() {
        let net = DenoiserNet::init(small_arch(), 11).unwrap();
        let input = net.assemble_input(&[0.4, 0.5, -0.2], 9, &[0.1, 0.9]).unwrap();
        let (out, _) = net.forward_cached(&input);
        assert_eq!(out, net.forward_from_input(&input));
    }

    #[test]
    fn time_embedding_shape_and_range() {
        let e = sinusoidal_time_embedding(45, 16);
        assert_eq!(e.len(), 16);
        assert!(e.iter().all(|v| v.abs() <= 1.0));
    }
}
