use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Layer widths from input to output. Hidden layers use `tanh`, the output
/// layer is linear. Parameters are stored per layer as a row-major
/// `out × in` weight block followed by the `out` biases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub sizes: Vec<usize>,
}

impl MlpSpec {
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output widths");
        Self { sizes }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Offset of layer `l`'s weight block within the flat vector.
    fn layer_offset(&self, l: usize) -> usize {
        self.sizes[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn max_width(&self) -> usize {
        *self.sizes.iter().max().expect("non-empty")
    }

    /// Writes an orthogonal-style initialization into `params`: each weight
    /// block has orthonormal rows or columns (whichever are fewer) scaled by
    /// the layer gain; biases are zero.
    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], hidden_gain: f64, output_gain: f64, rng: &mut R) {
        assert_eq!(params.len(), self.param_count());
        for l in 0..self.n_layers() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let gain = if l + 1 == self.n_layers() { output_gain } else { hidden_gain };
            let off = self.layer_offset(l);
            let w = orthogonal(fan_out, fan_in, rng);
            for (dst, src) in params[off..off + fan_in * fan_out].iter_mut().zip(&w) {
                *dst = gain * src;
            }
            params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out].fill(0.0);
        }
    }
}

fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let mut m: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    // Orthonormalize the shorter side with modified Gram-Schmidt.
    let (count, len, stride_vec, stride_elem) = if rows <= cols {
        (rows, cols, cols, 1)
    } else {
        (cols, rows, 1, cols)
    };
    for a in 0..count {
        for b in 0..a {
            let dot: f64 = (0..len)
                .map(|k| m[a * stride_vec + k * stride_elem] * m[b * stride_vec + k * stride_elem])
                .sum();
            for k in 0..len {
                m[a * stride_vec + k * stride_elem] -= dot * m[b * stride_vec + k * stride_elem];
            }
        }
        let norm = (0..len)
            .map(|k| m[a * stride_vec + k * stride_elem].powi(2))
            .sum::<f64>()
            .sqrt()
            .max(1e-12);
        for k in 0..len {
            m[a * stride_vec + k * stride_elem] /= norm;
        }
    }
    m
}

/// Per-layer activations retained for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl MlpCache {
    pub fn new(spec: &MlpSpec) -> Self {
        Self {
            acts: spec.sizes.iter().map(|&s| vec![0.0; s]).collect(),
            delta: vec![0.0; spec.max_width()],
            delta_prev: vec![0.0; spec.max_width()],
        }
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("non-empty")
    }
}

/// Evaluates the network, leaving every activation in `cache`.
pub fn forward<'c>(spec: &MlpSpec, params: &[f64], input: &[f64], cache: &'c mut MlpCache) -> &'c [f64] {
    debug_assert_eq!(params.len(), spec.param_count());
    cache.acts[0].copy_from_slice(input);
    let mut off = 0;
    let last = spec.n_layers() - 1;
    for l in 0..spec.n_layers() {
        let (fan_in, fan_out) = (spec.sizes[l], spec.sizes[l + 1]);
        let (w, rest) = params[off..].split_at(fan_in * fan_out);
        let b = &rest[..fan_out];
        let (lo, hi) = cache.acts.split_at_mut(l + 1);
        let x = &lo[l];
        let y = &mut hi[0];
        for o in 0..fan_out {
            let row = &w[o * fan_in..(o + 1) * fan_in];
            let z = b[o] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
            y[o] = if l == last { z } else { z.tanh() };
        }
        off += fan_in * fan_out + fan_out;
    }
    cache.output()
}

/// Accumulates `∂L/∂params` into `grad` given `∂L/∂output` for the input
/// last passed to [`forward`] with the same cache.
pub fn backward(spec: &MlpSpec, params: &[f64], cache: &mut MlpCache, d_output: &[f64], grad: &mut [f64]) {
    let n = spec.n_layers();
    let MlpCache { acts, delta, delta_prev } = cache;
    delta[..d_output.len()].copy_from_slice(d_output);
    let mut off_end = spec.param_count();
    for l in (0..n).rev() {
        let (fan_in, fan_out) = (spec.sizes[l], spec.sizes[l + 1]);
        let off = off_end - (fan_in * fan_out + fan_out);
        let x = &acts[l];
        let (gw, gb) = grad[off..off_end].split_at_mut(fan_in * fan_out);
        for o in 0..fan_out {
            let d = delta[o];
            if d == 0.0 {
                continue;
            }
            gb[o] += d;
            for (g, xi) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(x) {
                *g += d * xi;
            }
        }
        if l > 0 {
            let w = &params[off..off + fan_in * fan_out];
            let dp = &mut delta_prev[..fan_in];
            dp.fill(0.0);
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (acc, wi) in dp.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                    *acc += d * wi;
                }
            }
            // Through tanh: d/dz tanh(z) = 1 - tanh²(z).
            for (i, acc) in dp.iter_mut().enumerate() {
                let a = x[i];
                *acc *= 1.0 - a * a;
            }
            delta[..fan_in].copy_from_slice(dp);
        }
        off_end = off;
    }
}
