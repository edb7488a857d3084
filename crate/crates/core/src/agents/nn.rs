//! Dense feed-forward network with hand-written backpropagation.
//!
//! Hidden layers use `tanh` so finite-difference checks are smooth; the
//! output layer is linear. Parameters live in one flat vector laid out per
//! layer as the `out x in` weight matrix (row-major) followed by the biases.

use serde::{Deserialize, Serialize};

use crate::features::FeatureVector;
use crate::rng::GameRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Activations of every layer from one forward pass; `acts[0]` is the input.
#[derive(Debug, Clone)]
pub struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("non-empty trace")
    }
}

impl Mlp {
    /// `sizes = [input, hidden..., output]`. Weights and biases are uniform
    /// in `+-1/sqrt(fan_in)`.
    pub fn new(sizes: &[usize], rng: &mut GameRng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let count: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let mut params = Vec::with_capacity(count);
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] + w[1] {
                params.push((rng.unit() * 2.0 - 1.0) * bound);
            }
        }
        Mlp {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().expect("sizes")
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn forward(&self, input: &[f64]) -> Trace {
        assert_eq!(input.len(), self.input_size(), "input length");
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(input.to_vec());
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let x = &acts[l];
            let mut z: Vec<f64> = (0..n_out)
                .map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            if l + 1 < layers {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
            offset += n_in * n_out + n_out;
        }
        Trace { acts }
    }

    /// Adds `d(output . dout)/d(params)` into `grad`.
    pub fn backward(&self, trace: &Trace, dout: &[f64], grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = dout.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < layers {
                for (d, a) in delta.iter_mut().zip(&trace.acts[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let base = offsets[l];
            let x = &trace.acts[l];
            for o in 0..n_out {
                let row = &mut grad[base + o * n_in..base + (o + 1) * n_in];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += delta[o] * xi;
                }
                grad[base + n_in * n_out + o] += delta[o];
            }
            if l > 0 {
                let w = &self.params[base..base + n_in * n_out];
                delta = (0..n_in)
                    .map(|i| (0..n_out).map(|o| w[o * n_in + i] * delta[o]).sum())
                    .collect();
            }
        }
    }

    pub fn sgd_step(&mut self, grad: &[f64], learning_rate: f64) {
        for (p, g) in self.params.iter_mut().zip(grad) {
            *p -= learning_rate * g;
        }
    }
}

/// Scores each choice of an observation with one shared network.
///
/// The input for choice `i` is `[h_i, h_i * c]` where `c` is the hint block
/// (zeros without a hint); the elementwise product lets even a linear head
/// score how well a choice matches the hint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceScorer {
    pub dim: usize,
    pub net: Mlp,
}

impl ChoiceScorer {
    pub fn new(dim: usize, hidden: &[usize], rng: &mut GameRng) -> Self {
        let mut sizes = vec![2 * dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        ChoiceScorer {
            dim,
            net: Mlp::new(&sizes, rng),
        }
    }

    pub fn choice_input(&self, fv: &FeatureVector, i: usize) -> Vec<f64> {
        let h = fv.choice(i);
        let mut x = Vec::with_capacity(2 * self.dim);
        x.extend_from_slice(h);
        match fv.hint() {
            Some(c) => x.extend(h.iter().zip(c).map(|(a, b)| a * b)),
            None => x.extend(std::iter::repeat_n(0.0, self.dim)),
        }
        x
    }

    /// One score per choice.
    pub fn scores(&self, fv: &FeatureVector) -> Vec<f64> {
        (0..fv.layout.num_choices)
            .map(|i| self.net.forward(&self.choice_input(fv, i)).output()[0])
            .collect()
    }

    /// Adds `sum_i dscores[i] * d(score_i)/d(params)` into `grad`.
    pub fn backward(&self, fv: &FeatureVector, dscores: &[f64], grad: &mut [f64]) {
        for (i, &d) in dscores.iter().enumerate() {
            if d != 0.0 {
                let trace = self.net.forward(&self.choice_input(fv, i));
                self.net.backward(&trace, &[d], grad);
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_net_is_an_affine_map() {
        let mut rng = GameRng::new(1);
        let mut net = Mlp::new(&[3, 1], &mut rng);
        net.params = vec![1.0, 2.0, 3.0, 0.5];
        assert_eq!(net.forward(&[1.0, 1.0, 1.0]).output(), &[6.5]);
        let mut g = vec![0.0; 4];
        net.backward(&net.forward(&[1.0, -1.0, 2.0]), &[2.0], &mut g);
        assert_eq!(g, vec![2.0, -2.0, 4.0, 2.0]);
    }

    #[test]
    fn init_is_bounded() {
        let mut rng = GameRng::new(2);
        let net = Mlp::new(&[16, 8, 1], &mut rng);
        assert_eq!(net.param_count(), 16 * 8 + 8 + 8 + 1);
        assert!(net.params[..136].iter().all(|p| p.abs() <= 0.25));
        assert!(net.params[136..].iter().all(|p| p.abs() <= 1.0 / 8f64.sqrt()));
    }
}
