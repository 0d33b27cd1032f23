//! Small fully connected network with tanh hidden layers, a linear output
//! layer and hand-written backpropagation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// Layer widths including input and output.
    pub sizes: Vec<usize>,
    /// Per layer: weights (row-major, out x in) followed by biases.
    pub params: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct Cache {
    activations: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("non-empty cache")
    }
}

impl Mlp {
    /// Uniform Glorot initialization; the output layer is scaled by `output_scale`.
    pub fn new(sizes: &[usize], seed: u64, output_scale: f64) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output widths");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(Self::count(sizes));
        for l in 0..sizes.len() - 1 {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            let scale = if l == sizes.len() - 2 {
                output_scale
            } else {
                1.0
            };
            for _ in 0..n_in * n_out {
                params.push(rng.random_range(-limit..limit) * scale);
            }
            params.extend(std::iter::repeat_n(0.0, n_out));
        }
        Self {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.sizes.last().expect("non-empty sizes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 2 || self.params.len() != Self::count(&self.sizes) {
            return Err(Error::Config(
                "network parameter count does not match its layer sizes".into(),
            ));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence("non-finite network parameters".into()));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.forward_cached(input)
            .activations
            .pop()
            .expect("non-empty cache")
    }

    pub fn forward_cached(&self, input: &[f64]) -> Cache {
        debug_assert_eq!(input.len(), self.sizes[0]);
        let layers = self.sizes.len() - 1;
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(input.to_vec());
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let x = &activations[l];
            let mut y = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut s = b[o];
                for i in 0..n_in {
                    s += row[i] * x[i];
                }
                y.push(if l + 1 < layers { s.tanh() } else { s });
            }
            activations.push(y);
            offset += n_in * n_out + n_out;
        }
        Cache { activations }
    }

    /// Accumulates into `grad` the gradient of a scalar loss whose gradient
    /// with respect to the network output is `d_out`.
    pub fn backward(&self, cache: &Cache, d_out: &[f64], grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for l in 0..layers {
            offsets.push(offset);
            offset += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = d_out.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let x = &cache.activations[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let g = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for i in 0..n_in {
                    g[i] += d * x[i];
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let w = &self.params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &w[o * n_in..(o + 1) * n_in];
                    for i in 0..n_in {
                        prev[i] += row[i] * d;
                    }
                }
                // tanh'(z) = 1 - tanh(z)^2, and x holds tanh(z).
                for i in 0..n_in {
                    prev[i] *= 1.0 - x[i] * x[i];
                }
                delta = prev;
            }
        }
    }
}

/// Adam optimizer over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Applies one descent step along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Scales `grad` down so its Euclidean norm is at most `max_norm`.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Softmax over the unmasked entries; masked entries get probability 0.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(l, &m)| if m { (l - max).exp() } else { 0.0 })
        .collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_matches_finite_differences() {
        let net = Mlp::new(&[4, 5, 3, 2], 3, 1.0);
        let x = [0.3, -0.7, 1.1, 0.05];
        let w = [0.6, -1.3];
        let loss = |n: &Mlp| {
            n.forward(&x)
                .iter()
                .zip(&w)
                .map(|(o, w)| o * w)
                .sum::<f64>()
        };
        let cache = net.forward_cached(&x);
        let mut grad = vec![0.0; net.params.len()];
        net.backward(&cache, &w, &mut grad);
        let h = 1e-6;
        for i in 0..net.params.len() {
            let mut p = net.clone();
            p.params[i] += h;
            let up = loss(&p);
            p.params[i] -= 2.0 * h;
            let down = loss(&p);
            let fd = (up - down) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() <= 1e-7 + 1e-5 * fd.abs(),
                "param {i}: {fd} vs {}",
                grad[i]
            );
        }
    }

    #[test]
    fn softmax_masks_and_normalizes() {
        let p = masked_softmax(&[1.0, 2.0, 3.0, 100.0], &[true, true, true, false]);
        assert_eq!(p[3], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
