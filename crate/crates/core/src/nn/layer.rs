//! Layer kinds and their batched forward/backward kernels.
//!
//! Activations are laid out example-major; spatial tensors are HWC within an
//! example. Convolution is a valid (unpadded) stride-1 cross-correlation done
//! as im2col followed by a GEMM against a `(kh*kw*cin) x cout` weight matrix.

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::real::{gemm, MatRef};
use super::{NnError, Real, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    /// Over the last axis (units, or channels of each pixel).
    Softmax,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv2d {
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        activation: Activation,
    },
    Maxpool2d {
        pool_h: usize,
        pool_w: usize,
        stride: usize,
    },
    Flatten,
    Dense {
        out_units: usize,
        activation: Activation,
    },
    Dropout {
        rate: f64,
    },
}

impl LayerSpec {
    pub fn conv(out_channels: usize, kernel_h: usize, kernel_w: usize, activation: Activation) -> Self {
        LayerSpec::Conv2d {
            out_channels,
            kernel_h,
            kernel_w,
            activation,
        }
    }

    pub fn maxpool(pool_h: usize, pool_w: usize, stride: usize) -> Self {
        LayerSpec::Maxpool2d { pool_h, pool_w, stride }
    }

    pub fn dense(out_units: usize, activation: Activation) -> Self {
        LayerSpec::Dense { out_units, activation }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Maxpool2d { .. } => "maxpool2d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
        }
    }

    pub fn activation(&self) -> Activation {
        match *self {
            LayerSpec::Conv2d { activation, .. } | LayerSpec::Dense { activation, .. } => activation,
            _ => Activation::None,
        }
    }

    /// Output shape for `input`, or why the layer cannot follow it.
    pub fn output_shape(&self, index: usize, input: Shape) -> Result<Shape, NnError> {
        let err = |message: String| NnError::Shape { layer: index, message };
        match (*self, input) {
            (
                LayerSpec::Conv2d {
                    out_channels,
                    kernel_h,
                    kernel_w,
                    ..
                },
                Shape::Spatial { h, w, .. },
            ) => {
                if out_channels == 0 || kernel_h == 0 || kernel_w == 0 {
                    return Err(err("conv2d sizes must be positive".into()));
                }
                if h < kernel_h || w < kernel_w {
                    return Err(err(format!("{kernel_h}x{kernel_w} kernel does not fit a {input} input")));
                }
                Ok(Shape::Spatial {
                    h: h - kernel_h + 1,
                    w: w - kernel_w + 1,
                    c: out_channels,
                })
            }
            (LayerSpec::Maxpool2d { pool_h, pool_w, stride }, Shape::Spatial { h, w, c }) => {
                if pool_h == 0 || pool_w == 0 || stride == 0 {
                    return Err(err("maxpool2d sizes must be positive".into()));
                }
                if h < pool_h || w < pool_w {
                    return Err(err(format!("{pool_h}x{pool_w} pool does not fit a {input} input")));
                }
                Ok(Shape::Spatial {
                    h: (h - pool_h) / stride + 1,
                    w: (w - pool_w) / stride + 1,
                    c,
                })
            }
            (LayerSpec::Flatten, s) => Ok(Shape::Flat(s.size())),
            (LayerSpec::Dense { out_units, .. }, Shape::Flat(_)) => {
                if out_units == 0 {
                    return Err(err("dense needs at least one unit".into()));
                }
                Ok(Shape::Flat(out_units))
            }
            (LayerSpec::Dropout { rate }, s) => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(err(format!("dropout rate {rate} outside [0, 1)")));
                }
                Ok(s)
            }
            (spec, s) => Err(err(format!("{} cannot follow a {s} activation", spec.kind()))),
        }
    }

    /// Weight and bias tensor shapes, if the layer has parameters.
    pub fn param_shapes(&self, input: Shape) -> Option<(Vec<usize>, Vec<usize>)> {
        match (*self, input) {
            (
                LayerSpec::Conv2d {
                    out_channels,
                    kernel_h,
                    kernel_w,
                    ..
                },
                Shape::Spatial { c, .. },
            ) => Some((vec![kernel_h, kernel_w, c, out_channels], vec![out_channels])),
            (LayerSpec::Dense { out_units, .. }, Shape::Flat(n)) => Some((vec![n, out_units], vec![out_units])),
            _ => None,
        }
    }
}

// ---- activations ---------------------------------------------------------

/// Applies `act` in place; `width` is the softmax axis length.
pub fn activate<T: Real>(act: Activation, x: &mut [T], width: usize) {
    match act {
        Activation::None => {}
        Activation::Relu => x.iter_mut().for_each(|v| *v = v.max(T::zero())),
        Activation::Sigmoid => x.iter_mut().for_each(|v| *v = T::one() / (T::one() + (-*v).exp())),
        Activation::Softmax => {
            for row in x.chunks_mut(width) {
                let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
                let mut sum = T::zero();
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                row.iter_mut().for_each(|v| *v = *v / sum);
            }
        }
    }
}

/// Turns `grad` (w.r.t. the activated output `out`) into the gradient w.r.t.
/// the pre-activation, in place.
pub fn activation_backward<T: Real>(act: Activation, out: &[T], grad: &mut [T], width: usize) {
    match act {
        Activation::None => {}
        Activation::Relu => grad.iter_mut().zip(out).for_each(|(g, &a)| {
            if a <= T::zero() {
                *g = T::zero();
            }
        }),
        Activation::Sigmoid => grad.iter_mut().zip(out).for_each(|(g, &a)| *g *= a * (T::one() - a)),
        Activation::Softmax => {
            for (g, a) in grad.chunks_mut(width).zip(out.chunks(width)) {
                let dot: T = g.iter().zip(a).map(|(&x, &y)| x * y).sum();
                g.iter_mut().zip(a).for_each(|(gi, &ai)| *gi = ai * (*gi - dot));
            }
        }
    }
}

// ---- convolution ---------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct ConvGeometry {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
}

impl ConvGeometry {
    pub fn out_h(&self) -> usize {
        self.h - self.kh + 1
    }
    pub fn out_w(&self) -> usize {
        self.w - self.kw + 1
    }
    fn rows(&self) -> usize {
        self.out_h() * self.out_w()
    }
    fn k(&self) -> usize {
        self.kh * self.kw * self.cin
    }
    fn in_size(&self) -> usize {
        self.h * self.w * self.cin
    }
    fn out_size(&self) -> usize {
        self.rows() * self.cout
    }
}

fn im2col<T: Real>(g: &ConvGeometry, x: &[T], col: &mut [T]) {
    let seg = g.kw * g.cin;
    let k = g.k();
    let ow = g.out_w();
    for i in 0..g.out_h() {
        for j in 0..ow {
            let row = &mut col[(i * ow + j) * k..(i * ow + j + 1) * k];
            for di in 0..g.kh {
                let src = ((i + di) * g.w + j) * g.cin;
                row[di * seg..(di + 1) * seg].copy_from_slice(&x[src..src + seg]);
            }
        }
    }
}

fn col2im_add<T: Real>(g: &ConvGeometry, col: &[T], dx: &mut [T]) {
    let seg = g.kw * g.cin;
    let k = g.k();
    let ow = g.out_w();
    for i in 0..g.out_h() {
        for j in 0..ow {
            let row = &col[(i * ow + j) * k..(i * ow + j + 1) * k];
            for di in 0..g.kh {
                let dst = ((i + di) * g.w + j) * g.cin;
                for (d, &s) in dx[dst..dst + seg].iter_mut().zip(&row[di * seg..(di + 1) * seg]) {
                    *d += s;
                }
            }
        }
    }
}

/// Valid stride-1 convolution over a batch; returns activated outputs.
pub fn conv2d_forward<T: Real>(g: &ConvGeometry, input: &[T], weights: &[T], bias: &[T], act: Activation) -> Vec<T> {
    let batch = input.len() / g.in_size();
    let mut out = vec![T::zero(); batch * g.out_size()];
    out.par_chunks_mut(g.out_size())
        .zip(input.par_chunks(g.in_size()))
        .for_each(|(o, x)| {
            let mut col = vec![T::zero(); g.rows() * g.k()];
            im2col(g, x, &mut col);
            for row in o.chunks_mut(g.cout) {
                row.copy_from_slice(bias);
            }
            gemm(MatRef::new(&col, g.rows(), g.k()), MatRef::new(weights, g.k(), g.cout), T::one(), o);
            activate(act, o, g.cout);
        });
    out
}

/// Gradients of a convolution given the pre-activation gradient `dz`.
/// Returns `(dW, db, dX)`; `dX` is empty when `need_dx` is false.
pub fn conv2d_backward<T: Real>(g: &ConvGeometry, input: &[T], weights: &[T], dz: &[T], need_dx: bool) -> (Vec<T>, Vec<T>, Vec<T>) {
    let per_example: Vec<(Vec<T>, Vec<T>)> = input
        .par_chunks(g.in_size())
        .zip(dz.par_chunks(g.out_size()))
        .map(|(x, d)| {
            let mut col = vec![T::zero(); g.rows() * g.k()];
            im2col(g, x, &mut col);
            let mut dw = vec![T::zero(); g.k() * g.cout];
            gemm(MatRef::new(&col, g.rows(), g.k()).t(), MatRef::new(d, g.rows(), g.cout), T::zero(), &mut dw);
            let mut dx = Vec::new();
            if need_dx {
                // reuse the column buffer for d(col)
                gemm(MatRef::new(d, g.rows(), g.cout), MatRef::new(weights, g.k(), g.cout).t(), T::zero(), &mut col);
                dx = vec![T::zero(); g.in_size()];
                col2im_add(g, &col, &mut dx);
            }
            (dw, dx)
        })
        .collect();

    // fixed-order reduction keeps results independent of scheduling
    let mut dw = vec![T::zero(); g.k() * g.cout];
    let mut dx = Vec::with_capacity(if need_dx { input.len() } else { 0 });
    for (w, x) in per_example {
        dw.iter_mut().zip(&w).for_each(|(a, &b)| *a += b);
        dx.extend(x);
    }
    let mut db = vec![T::zero(); g.cout];
    for row in dz.chunks(g.cout) {
        db.iter_mut().zip(row).for_each(|(a, &b)| *a += b);
    }
    (dw, db, dx)
}

// ---- pooling ---------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct PoolGeometry {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub ph: usize,
    pub pw: usize,
    pub stride: usize,
}

impl PoolGeometry {
    pub fn out_h(&self) -> usize {
        (self.h - self.ph) / self.stride + 1
    }
    pub fn out_w(&self) -> usize {
        (self.w - self.pw) / self.stride + 1
    }
    fn in_size(&self) -> usize {
        self.h * self.w * self.c
    }
    fn out_size(&self) -> usize {
        self.out_h() * self.out_w() * self.c
    }
}

/// Max pooling. Also returns, per output cell, the index (within its
/// example) of the input cell that won; ties go to the first in row-major
/// window order.
pub fn maxpool2d_forward<T: Real>(g: &PoolGeometry, input: &[T]) -> (Vec<T>, Vec<u32>) {
    let batch = input.len() / g.in_size();
    let mut out = vec![T::zero(); batch * g.out_size()];
    let mut arg = vec![0u32; batch * g.out_size()];
    let (oh, ow) = (g.out_h(), g.out_w());
    for b in 0..batch {
        let x = &input[b * g.in_size()..(b + 1) * g.in_size()];
        let o = &mut out[b * g.out_size()..(b + 1) * g.out_size()];
        let a = &mut arg[b * g.out_size()..(b + 1) * g.out_size()];
        for i in 0..oh {
            for j in 0..ow {
                for ch in 0..g.c {
                    let mut best_idx = ((i * g.stride) * g.w + j * g.stride) * g.c + ch;
                    let mut best = x[best_idx];
                    for di in 0..g.ph {
                        for dj in 0..g.pw {
                            let idx = ((i * g.stride + di) * g.w + j * g.stride + dj) * g.c + ch;
                            if x[idx] > best {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let oi = (i * ow + j) * g.c + ch;
                    o[oi] = best;
                    a[oi] = best_idx as u32;
                }
            }
        }
    }
    (out, arg)
}

pub fn maxpool2d_backward<T: Real>(g: &PoolGeometry, argmax: &[u32], grad: &[T]) -> Vec<T> {
    let batch = grad.len() / g.out_size();
    let mut dx = vec![T::zero(); batch * g.in_size()];
    for b in 0..batch {
        let base = b * g.in_size();
        for k in b * g.out_size()..(b + 1) * g.out_size() {
            dx[base + argmax[k] as usize] += grad[k];
        }
    }
    dx
}

// ---- dense -------------------------------------------------------------------

/// `y = act(x W + b)` for a batch of row vectors.
pub fn dense_forward<T: Real>(input: &[T], n_in: usize, weights: &[T], bias: &[T], act: Activation) -> Vec<T> {
    let n_out = bias.len();
    let batch = input.len() / n_in;
    let mut out = Vec::with_capacity(batch * n_out);
    for _ in 0..batch {
        out.extend_from_slice(bias);
    }
    gemm(MatRef::new(input, batch, n_in), MatRef::new(weights, n_in, n_out), T::one(), &mut out);
    activate(act, &mut out, n_out);
    out
}

/// Returns `(dW, db, dX)` given the pre-activation gradient.
pub fn dense_backward<T: Real>(input: &[T], n_in: usize, weights: &[T], dz: &[T], need_dx: bool) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n_out = weights.len() / n_in;
    let batch = input.len() / n_in;
    let mut dw = vec![T::zero(); n_in * n_out];
    gemm(MatRef::new(input, batch, n_in).t(), MatRef::new(dz, batch, n_out), T::zero(), &mut dw);
    let mut db = vec![T::zero(); n_out];
    for row in dz.chunks(n_out) {
        db.iter_mut().zip(row).for_each(|(a, &b)| *a += b);
    }
    let mut dx = Vec::new();
    if need_dx {
        dx = vec![T::zero(); batch * n_in];
        gemm(MatRef::new(dz, batch, n_out), MatRef::new(weights, n_in, n_out).t(), T::zero(), &mut dx);
    }
    (dw, db, dx)
}

// ---- dropout -----------------------------------------------------------------

/// Inverted dropout. Returns the output and the per-unit scale (0 or
/// `1 / (1 - rate)`), which the backward pass multiplies by.
pub fn dropout_forward<T: Real>(input: &[T], rate: f64, rng: &mut dyn RngCore) -> (Vec<T>, Vec<T>) {
    if rate == 0.0 {
        return (input.to_vec(), vec![T::one(); input.len()]);
    }
    let keep = T::from_f64(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..input.len())
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect();
    let out = input.iter().zip(&mask).map(|(&x, &m)| x * m).collect();
    (out, mask)
}
