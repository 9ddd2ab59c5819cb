//! Minimal dense-layer arithmetic on f64 slices: forward products,
//! gradient accumulation, and orthogonal initialization. Everything is
//! deliberately allocation-light and loop-based; the networks here are
//! small enough that clarity beats vectorization tricks.

use rand::Rng;
use rand_distr::StandardNormal;

/// Fully connected layer computing `y = W x + b`, with `W` stored row-major
/// as `w[row * in_dim + col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, w: vec![0.0; in_dim * out_dim], b: vec![0.0; out_dim] }
    }

    /// Random-orthogonal weights scaled by `gain`, zero bias.
    pub fn orthogonal<R: Rng>(in_dim: usize, out_dim: usize, gain: f64, rng: &mut R) -> Self {
        let mut layer = Self::zeros(in_dim, out_dim);
        layer.w = orthogonal_matrix(out_dim, in_dim, gain, rng);
        layer
    }

    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        for (row, o) in out.iter_mut().enumerate() {
            let ws = &self.w[row * self.in_dim..(row + 1) * self.in_dim];
            let mut acc = self.b[row];
            for (wi, xi) in ws.iter().zip(x) {
                acc += wi * xi;
            }
            *o = acc;
        }
    }

    pub fn forward_alloc(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim];
        self.forward(x, &mut out);
        out
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Gradient accumulator matching a [`Dense`] layer's shape.
#[derive(Debug, Clone)]
pub struct DenseGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl DenseGrad {
    pub fn zeros_like(layer: &Dense) -> Self {
        Self { w: vec![0.0; layer.w.len()], b: vec![0.0; layer.b.len()] }
    }

    pub fn reset(&mut self) {
        self.w.iter_mut().for_each(|g| *g = 0.0);
        self.b.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn scale(&mut self, s: f64) {
        self.w.iter_mut().for_each(|g| *g *= s);
        self.b.iter_mut().for_each(|g| *g *= s);
    }
}

/// Accumulate `dL/dW += dy x^T`, `dL/db += dy`, and optionally propagate
/// `dx = W^T dy` for the layer that produced `x`.
pub fn dense_backward(
    layer: &Dense,
    x: &[f64],
    dy: &[f64],
    grad: &mut DenseGrad,
    mut dx: Option<&mut [f64]>,
) {
    debug_assert_eq!(x.len(), layer.in_dim);
    debug_assert_eq!(dy.len(), layer.out_dim);
    if let Some(dx) = dx.as_deref_mut() {
        dx.iter_mut().for_each(|d| *d = 0.0);
    }
    for (row, &dyr) in dy.iter().enumerate() {
        let base = row * layer.in_dim;
        grad.b[row] += dyr;
        for col in 0..layer.in_dim {
            grad.w[base + col] += dyr * x[col];
        }
        if let Some(dx) = dx.as_deref_mut() {
            for col in 0..layer.in_dim {
                dx[col] += layer.w[base + col] * dyr;
            }
        }
    }
}

pub fn tanh_inplace(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.tanh());
}

/// Given post-activation values `h = tanh(z)` and upstream gradient `dh`,
/// rewrite `dh` into `dz = dh * (1 - h^2)`.
pub fn tanh_backward(h: &[f64], dh: &mut [f64]) {
    for (d, &hv) in dh.iter_mut().zip(h) {
        *d *= 1.0 - hv * hv;
    }
}

/// Row-major `rows x cols` matrix with orthonormal rows (or columns,
/// whichever side is smaller), scaled by `gain`. Built by modified
/// Gram-Schmidt on a Gaussian draw.
pub fn orthogonal_matrix<R: Rng>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (n, k) = (rows.max(cols), rows.min(cols));
    // n x k Gaussian matrix whose k columns get orthonormalized.
    let mut m: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    for j in 0..k {
        for i in 0..j {
            let dot: f64 = m[j].iter().zip(&m[i]).map(|(a, b)| a * b).sum();
            let (mi, mj) = {
                let (head, tail) = m.split_at_mut(j);
                (&head[i], &mut tail[0])
            };
            for (vj, vi) in mj.iter_mut().zip(mi) {
                *vj -= dot * vi;
            }
        }
        let norm: f64 = m[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        // A Gaussian draw is degenerate with probability zero; guard anyway.
        let inv = if norm > 1e-12 { 1.0 / norm } else { 0.0 };
        m[j].iter_mut().for_each(|v| *v *= inv);
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            // Columns of the tall matrix are orthonormal; transpose when
            // the output is wide.
            let v = if rows >= cols { m[c][r] } else { m[r][c] };
            out[r * cols + c] = gain * v;
        }
    }
    out
}
