//! Layer graph with forward passes and hand-written backward passes.
//!
//! Parameters live in a flat store (`&[Vec<f64>]`) addressed by slot index;
//! layers only hold slot ids and hyper-parameters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tensor::{gemm, Tensor, View};

pub type SlotId = usize;

pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight: SlotId,
    pub bias: Option<SlotId>,
}

impl Conv2d {
    pub fn out_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        pooled(h, w, self.kernel, self.stride, self.padding)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm2d {
    pub channels: usize,
    pub gamma: SlotId,
    pub beta: SlotId,
    pub running_mean: SlotId,
    pub running_var: SlotId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: SlotId,
    pub bias: SlotId,
}

/// `relu(branch(x) + shortcut(x))`; an empty shortcut is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub branch: Vec<Layer>,
    pub shortcut: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Conv(Conv2d),
    BatchNorm(BatchNorm2d),
    Relu,
    MaxPool(MaxPool2d),
    GlobalAvgPool,
    Flatten,
    Linear(Linear),
    Residual(Residual),
}

fn pooled(h: usize, w: usize, k: usize, s: usize, p: usize) -> Option<(usize, usize)> {
    let dim = |x: usize| (x + 2 * p).checked_sub(k).map(|v| v / s + 1);
    Some((dim(h)?, dim(w)?))
}

/// Per-layer state saved by a training-mode forward pass.
#[derive(Debug)]
pub(crate) enum Cache {
    Conv {
        input_shape: [usize; 4],
        cols: Vec<f64>,
    },
    BatchNorm {
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_mean: Vec<f64>,
        batch_var_unbiased: Vec<f64>,
    },
    Relu {
        mask: Vec<bool>,
    },
    MaxPool {
        input_shape: [usize; 4],
        argmax: Vec<usize>,
    },
    GlobalAvgPool {
        input_shape: [usize; 4],
    },
    Flatten {
        input_shape: [usize; 4],
    },
    Linear {
        input: Tensor,
    },
    Residual {
        branch: Vec<Cache>,
        shortcut: Vec<Cache>,
        mask: Vec<bool>,
    },
}

/// Batch-norm statistics observed during a training step, keyed by the
/// running-stat slots they update.
#[derive(Debug, Clone)]
pub(crate) struct BnStats {
    pub mean_slot: SlotId,
    pub var_slot: SlotId,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl Layer {
    /// Output shape `[c, h, w]` for an input of shape `[c, h, w]`, or `None`
    /// when the input is too small or has the wrong channel count.
    pub fn out_shape(&self, s: [usize; 3]) -> Option<[usize; 3]> {
        let [c, h, w] = s;
        match self {
            Layer::Conv(conv) => {
                if c != conv.in_channels {
                    return None;
                }
                let (oh, ow) = conv.out_hw(h, w)?;
                (oh > 0 && ow > 0).then_some([conv.out_channels, oh, ow])
            }
            Layer::BatchNorm(bn) => (bn.channels == c).then_some(s),
            Layer::Relu => Some(s),
            Layer::MaxPool(p) => {
                let (oh, ow) = pooled(h, w, p.kernel, p.stride, p.padding)?;
                (oh > 0 && ow > 0).then_some([c, oh, ow])
            }
            Layer::GlobalAvgPool => Some([c, 1, 1]),
            Layer::Flatten => Some([c * h * w, 1, 1]),
            Layer::Linear(l) => (c * h * w == l.in_features).then_some([l.out_features, 1, 1]),
            Layer::Residual(r) => {
                let b = r.branch.iter().try_fold(s, |acc, l| l.out_shape(acc))?;
                let sc = r.shortcut.iter().try_fold(s, |acc, l| l.out_shape(acc))?;
                (b == sc).then_some(b)
            }
        }
    }

    /// Forward pass. With a tape the layer runs in training mode (batch
    /// statistics for batch norm) and records what backward needs.
    pub(crate) fn forward(
        &self,
        x: Tensor,
        params: &[Vec<f64>],
        tape: Option<&mut Vec<Cache>>,
    ) -> Tensor {
        match self {
            Layer::Conv(conv) => conv_forward(conv, x, params, tape),
            Layer::BatchNorm(bn) => bn_forward(bn, x, params, tape),
            Layer::Relu => {
                let mut x = x;
                let mask: Vec<bool> = x.data.iter().map(|&v| v > 0.0).collect();
                for (v, &m) in x.data.iter_mut().zip(&mask) {
                    if !m {
                        *v = 0.0;
                    }
                }
                if let Some(t) = tape {
                    t.push(Cache::Relu { mask });
                }
                x
            }
            Layer::MaxPool(p) => maxpool_forward(p, x, tape),
            Layer::GlobalAvgPool => {
                let [n, c, h, w] = x.shape;
                let hw = h * w;
                let data = x
                    .data
                    .chunks_exact(hw)
                    .map(|plane| plane.iter().sum::<f64>() / hw as f64)
                    .collect();
                if let Some(t) = tape {
                    t.push(Cache::GlobalAvgPool { input_shape: x.shape });
                }
                Tensor {
                    shape: [n, c, 1, 1],
                    data,
                }
            }
            Layer::Flatten => {
                let input_shape = x.shape;
                if let Some(t) = tape {
                    t.push(Cache::Flatten { input_shape });
                }
                Tensor {
                    shape: [input_shape[0], x.sample_len(), 1, 1],
                    data: x.data,
                }
            }
            Layer::Linear(l) => linear_forward(l, x, params, tape),
            Layer::Residual(r) => {
                let (mut branch_tape, mut short_tape) = (Vec::new(), Vec::new());
                let training = tape.is_some();
                let mut b = x.clone();
                for layer in &r.branch {
                    b = layer.forward(b, params, training.then_some(&mut branch_tape));
                }
                let mut s = x;
                for layer in &r.shortcut {
                    s = layer.forward(s, params, training.then_some(&mut short_tape));
                }
                let mut mask = Vec::with_capacity(if training { b.data.len() } else { 0 });
                for (v, &sv) in b.data.iter_mut().zip(&s.data) {
                    *v += sv;
                    if *v <= 0.0 {
                        *v = 0.0;
                    }
                    if training {
                        mask.push(*v > 0.0);
                    }
                }
                if let Some(t) = tape {
                    t.push(Cache::Residual {
                        branch: branch_tape,
                        shortcut: short_tape,
                        mask,
                    });
                }
                b
            }
        }
    }

    /// Backward pass: consumes this layer's cache, accumulates parameter
    /// gradients into `grads` and returns the gradient w.r.t. the input.
    pub(crate) fn backward(
        &self,
        cache: Cache,
        dy: Tensor,
        params: &[Vec<f64>],
        grads: &mut [Vec<f64>],
    ) -> Tensor {
        match (self, cache) {
            (Layer::Conv(conv), Cache::Conv { input_shape, cols }) => {
                conv_backward(conv, input_shape, &cols, dy, params, grads)
            }
            (
                Layer::BatchNorm(bn),
                Cache::BatchNorm {
                    xhat, inv_std, ..
                },
            ) => bn_backward(bn, &xhat, &inv_std, dy, params, grads),
            (Layer::Relu, Cache::Relu { mask }) => {
                let mut dy = dy;
                for (g, m) in dy.data.iter_mut().zip(mask) {
                    if !m {
                        *g = 0.0;
                    }
                }
                dy
            }
            (Layer::MaxPool(_), Cache::MaxPool { input_shape, argmax }) => {
                let mut dx = Tensor::zeros(input_shape);
                for (g, idx) in dy.data.iter().zip(argmax) {
                    dx.data[idx] += g;
                }
                dx
            }
            (Layer::GlobalAvgPool, Cache::GlobalAvgPool { input_shape }) => {
                let hw = input_shape[2] * input_shape[3];
                let mut dx = Tensor::zeros(input_shape);
                for (plane, g) in dx.data.chunks_exact_mut(hw).zip(&dy.data) {
                    plane.fill(g / hw as f64);
                }
                dx
            }
            (Layer::Flatten, Cache::Flatten { input_shape }) => Tensor {
                shape: input_shape,
                data: dy.data,
            },
            (Layer::Linear(l), Cache::Linear { input }) => {
                linear_backward(l, &input, dy, params, grads)
            }
            (
                Layer::Residual(r),
                Cache::Residual {
                    branch,
                    shortcut,
                    mask,
                },
            ) => {
                let mut dsum = dy;
                for (g, m) in dsum.data.iter_mut().zip(mask) {
                    if !m {
                        *g = 0.0;
                    }
                }
                let mut db = dsum.clone();
                for (layer, c) in r.branch.iter().zip(branch).rev() {
                    db = layer.backward(c, db, params, grads);
                }
                let mut ds = dsum;
                for (layer, c) in r.shortcut.iter().zip(shortcut).rev() {
                    ds = layer.backward(c, ds, params, grads);
                }
                for (a, b) in db.data.iter_mut().zip(&ds.data) {
                    *a += b;
                }
                db
            }
            (layer, cache) => unreachable!("cache {cache:?} does not belong to {layer:?}"),
        }
    }

    /// Visits this layer and any nested layers in forward order.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Layer)) {
        f(self);
        if let Layer::Residual(r) = self {
            for l in r.branch.iter().chain(&r.shortcut) {
                l.visit(f);
            }
        }
    }

    /// Parameter and buffer slots owned by this layer (and nested layers).
    pub fn slots(&self) -> Vec<SlotId> {
        let mut out = Vec::new();
        self.visit(&mut |l| match l {
            Layer::Conv(c) => {
                out.push(c.weight);
                out.extend(c.bias);
            }
            Layer::BatchNorm(b) => {
                out.extend([b.gamma, b.beta, b.running_mean, b.running_var]);
            }
            Layer::Linear(l) => out.extend([l.weight, l.bias]),
            _ => {}
        });
        out
    }
}

pub(crate) fn collect_bn_stats(layers: &[Layer], tape: &[Cache], out: &mut Vec<BnStats>) {
    for (layer, cache) in layers.iter().zip(tape) {
        match (layer, cache) {
            (
                Layer::BatchNorm(bn),
                Cache::BatchNorm {
                    batch_mean,
                    batch_var_unbiased,
                    ..
                },
            ) => out.push(BnStats {
                mean_slot: bn.running_mean,
                var_slot: bn.running_var,
                mean: batch_mean.clone(),
                var: batch_var_unbiased.clone(),
            }),
            (
                Layer::Residual(r),
                Cache::Residual {
                    branch, shortcut, ..
                },
            ) => {
                collect_bn_stats(&r.branch, branch, out);
                collect_bn_stats(&r.shortcut, shortcut, out);
            }
            _ => {}
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn im2col(
    x: &[f64],
    (c, h, w): (usize, usize, usize),
    k: usize,
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
    cols: &mut [f64],
) {
    let p = oh * ow;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * p;
                for oy in 0..oh {
                    let dst = &mut cols[row + oy * ow..row + (oy + 1) * ow];
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &x[(ci * h + iy as usize) * w..(ci * h + iy as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        *d = if ix >= 0 && ix < w as isize {
                            src[ix as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im(
    cols: &[f64],
    (c, h, w): (usize, usize, usize),
    k: usize,
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
    dx: &mut [f64],
) {
    let p = oh * ow;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * p;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = (ci * h + iy as usize) * w;
                    let src = &cols[row + oy * ow..row + (oy + 1) * ow];
                    for (ox, &g) in src.iter().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dx[base + ix as usize] += g;
                        }
                    }
                }
            }
        }
    }
}

fn conv_forward(
    conv: &Conv2d,
    x: Tensor,
    params: &[Vec<f64>],
    tape: Option<&mut Vec<Cache>>,
) -> Tensor {
    let [n, c, h, w] = x.shape;
    let (oh, ow) = conv.out_hw(h, w).expect("shape checked at build time");
    let (kk, p, oc) = (c * conv.kernel * conv.kernel, oh * ow, conv.out_channels);
    let weight = &params[conv.weight];
    let bias = conv.bias.map(|b| params[b].as_slice());
    let mut out = vec![0.0; n * oc * p];
    let in_len = c * h * w;

    let run = |xin: &[f64], cols: &mut [f64], o: &mut [f64]| {
        im2col(xin, (c, h, w), conv.kernel, conv.stride, conv.padding, (oh, ow), cols);
        gemm(oc, kk, p, View::rows(weight, kk), View::rows(cols, p), 0.0, o);
        if let Some(b) = bias {
            for (row, &bv) in o.chunks_exact_mut(p).zip(b) {
                row.iter_mut().for_each(|v| *v += bv);
            }
        }
    };

    match tape {
        Some(t) => {
            let mut cols = vec![0.0; n * kk * p];
            out.par_chunks_mut(oc * p)
                .zip(cols.par_chunks_mut(kk * p))
                .zip(x.data.par_chunks(in_len))
                .for_each(|((o, cl), xin)| run(xin, cl, o));
            t.push(Cache::Conv {
                input_shape: x.shape,
                cols,
            });
        }
        None => {
            out.par_chunks_mut(oc * p)
                .zip(x.data.par_chunks(in_len))
                .for_each_init(
                    || vec![0.0; kk * p],
                    |cl, (o, xin)| run(xin, cl, o),
                );
        }
    }
    Tensor {
        shape: [n, oc, oh, ow],
        data: out,
    }
}

fn conv_backward(
    conv: &Conv2d,
    input_shape: [usize; 4],
    cols: &[f64],
    dy: Tensor,
    params: &[Vec<f64>],
    grads: &mut [Vec<f64>],
) -> Tensor {
    let [n, c, h, w] = input_shape;
    let [_, oc, oh, ow] = dy.shape;
    let (kk, p) = (c * conv.kernel * conv.kernel, oh * ow);

    {
        let dw = &mut grads[conv.weight];
        for i in 0..n {
            let dyi = &dy.data[i * oc * p..(i + 1) * oc * p];
            let ci = &cols[i * kk * p..(i + 1) * kk * p];
            gemm(oc, p, kk, View::rows(dyi, p), View::transposed(ci, p), 1.0, dw);
        }
    }
    if let Some(b) = conv.bias {
        let db = &mut grads[b];
        for i in 0..n {
            for (o, g) in db.iter_mut().enumerate() {
                let s = (i * oc + o) * p;
                *g += dy.data[s..s + p].iter().sum::<f64>();
            }
        }
    }

    let weight = &params[conv.weight];
    let mut dx = vec![0.0; n * c * h * w];
    dx.par_chunks_mut(c * h * w)
        .zip(dy.data.par_chunks(oc * p))
        .for_each_init(
            || vec![0.0; kk * p],
            |dcols, (dxi, dyi)| {
                gemm(kk, oc, p, View::transposed(weight, kk), View::rows(dyi, p), 0.0, dcols);
                col2im(dcols, (c, h, w), conv.kernel, conv.stride, conv.padding, (oh, ow), dxi);
            },
        );
    Tensor {
        shape: input_shape,
        data: dx,
    }
}

fn bn_forward(
    bn: &BatchNorm2d,
    mut x: Tensor,
    params: &[Vec<f64>],
    tape: Option<&mut Vec<Cache>>,
) -> Tensor {
    let [n, c, h, w] = x.shape;
    let hw = h * w;
    let gamma = &params[bn.gamma];
    let beta = &params[bn.beta];
    let plane = |i: usize, ch: usize| (i * c + ch) * hw..(i * c + ch + 1) * hw;

    match tape {
        None => {
            let (rm, rv) = (&params[bn.running_mean], &params[bn.running_var]);
            for i in 0..n {
                for ch in 0..c {
                    let scale = gamma[ch] / (rv[ch] + BN_EPS).sqrt();
                    let shift = beta[ch] - rm[ch] * scale;
                    x.data[plane(i, ch)]
                        .iter_mut()
                        .for_each(|v| *v = *v * scale + shift);
                }
            }
            x
        }
        Some(t) => {
            let m = (n * hw) as f64;
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ch in 0..c {
                let mut s = 0.0;
                for i in 0..n {
                    s += x.data[plane(i, ch)].iter().sum::<f64>();
                }
                mean[ch] = s / m;
                let mut sq = 0.0;
                for i in 0..n {
                    sq += x.data[plane(i, ch)]
                        .iter()
                        .map(|v| (v - mean[ch]).powi(2))
                        .sum::<f64>();
                }
                var[ch] = sq / m;
            }
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
            let mut xhat = vec![0.0; x.data.len()];
            for i in 0..n {
                for ch in 0..c {
                    let r = plane(i, ch);
                    for (xh, v) in xhat[r.clone()].iter_mut().zip(&mut x.data[r]) {
                        *xh = (*v - mean[ch]) * inv_std[ch];
                        *v = gamma[ch] * *xh + beta[ch];
                    }
                }
            }
            let unbiased = if m > 1.0 {
                var.iter().map(|v| v * m / (m - 1.0)).collect()
            } else {
                var.clone()
            };
            t.push(Cache::BatchNorm {
                xhat,
                inv_std,
                batch_mean: mean,
                batch_var_unbiased: unbiased,
            });
            x
        }
    }
}

fn bn_backward(
    bn: &BatchNorm2d,
    xhat: &[f64],
    inv_std: &[f64],
    mut dy: Tensor,
    params: &[Vec<f64>],
    grads: &mut [Vec<f64>],
) -> Tensor {
    let [n, c, h, w] = dy.shape;
    let hw = h * w;
    let m = (n * hw) as f64;
    let gamma = &params[bn.gamma];
    let plane = |i: usize, ch: usize| (i * c + ch) * hw..(i * c + ch + 1) * hw;
    for ch in 0..c {
        let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
        for i in 0..n {
            let r = plane(i, ch);
            for (g, xh) in dy.data[r.clone()].iter().zip(&xhat[r]) {
                sum_dy += g;
                sum_dy_xhat += g * xh;
            }
        }
        grads[bn.gamma][ch] += sum_dy_xhat;
        grads[bn.beta][ch] += sum_dy;
        let k = gamma[ch] * inv_std[ch] / m;
        for i in 0..n {
            let r = plane(i, ch);
            for (g, xh) in dy.data[r.clone()].iter_mut().zip(&xhat[r]) {
                *g = k * (m * *g - sum_dy - xh * sum_dy_xhat);
            }
        }
    }
    dy
}

fn maxpool_forward(p: &MaxPool2d, x: Tensor, tape: Option<&mut Vec<Cache>>) -> Tensor {
    let [n, c, h, w] = x.shape;
    let (oh, ow) = pooled(h, w, p.kernel, p.stride, p.padding).expect("shape checked at build time");
    let mut out = vec![f64::NEG_INFINITY; n * c * oh * ow];
    let mut argmax = vec![0usize; out.len()];
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let o = (plane * oh + oy) * ow + ox;
                for ky in 0..p.kernel {
                    let iy = (oy * p.stride + ky) as isize - p.padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..p.kernel {
                        let ix = (ox * p.stride + kx) as isize - p.padding as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let idx = base + iy as usize * w + ix as usize;
                        if x.data[idx] > out[o] {
                            out[o] = x.data[idx];
                            argmax[o] = idx;
                        }
                    }
                }
            }
        }
    }
    if let Some(t) = tape {
        t.push(Cache::MaxPool {
            input_shape: x.shape,
            argmax,
        });
    }
    Tensor {
        shape: [n, c, oh, ow],
        data: out,
    }
}

fn linear_forward(
    l: &Linear,
    x: Tensor,
    params: &[Vec<f64>],
    tape: Option<&mut Vec<Cache>>,
) -> Tensor {
    let n = x.batch();
    let mut out = vec![0.0; n * l.out_features];
    for row in out.chunks_exact_mut(l.out_features) {
        row.copy_from_slice(&params[l.bias]);
    }
    gemm(
        n,
        l.in_features,
        l.out_features,
        View::rows(&x.data, l.in_features),
        View::transposed(&params[l.weight], l.in_features),
        1.0,
        &mut out,
    );
    if let Some(t) = tape {
        t.push(Cache::Linear { input: x });
    }
    Tensor {
        shape: [n, l.out_features, 1, 1],
        data: out,
    }
}

fn linear_backward(
    l: &Linear,
    input: &Tensor,
    dy: Tensor,
    params: &[Vec<f64>],
    grads: &mut [Vec<f64>],
) -> Tensor {
    let n = input.batch();
    let (fi, fo) = (l.in_features, l.out_features);
    gemm(
        fo,
        n,
        fi,
        View::transposed(&dy.data, fo),
        View::rows(&input.data, fi),
        1.0,
        &mut grads[l.weight],
    );
    for row in dy.data.chunks_exact(fo) {
        for (g, d) in grads[l.bias].iter_mut().zip(row) {
            *g += d;
        }
    }
    let mut dx = vec![0.0; n * fi];
    gemm(
        n,
        fo,
        fi,
        View::rows(&dy.data, fo),
        View::rows(&params[l.weight], fi),
        0.0,
        &mut dx,
    );
    Tensor {
        shape: input.shape,
        data: dx,
    }
}
