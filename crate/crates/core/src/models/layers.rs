//! Layers with explicit forward caches and backward passes.
//!
//! Activations are NCHW `Array4<f32>` or `[batch, features]` `Array2<f32>`.
//! A forward call in [`Mode::Train`] stores what the matching backward call needs.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array4, ArrayView2};
use serde::{Deserialize, Serialize};

use super::param::{join, Module, Param};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    #[default]
    Batch,
    Group,
}

fn std_layout(x: &Array4<f32>) -> &[f32] {
    x.as_slice().expect("activations are in standard layout")
}

fn conv_out(n: usize, k: usize, stride: usize, pad: usize) -> usize {
    (n + 2 * pad - k) / stride + 1
}

struct ConvCache {
    cols: Array2<f32>,
    in_dim: (usize, usize, usize, usize),
}

pub struct Conv2d {
    pub weight: Param,
    pub bias: Option<Param>,
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    cache: Option<ConvCache>,
}

impl Conv2d {
    /// Kaiming-normal init (fan-in, ReLU gain).
    pub fn new(name: &str, cin: usize, cout: usize, k: usize, stride: usize, bias: bool, seed: u64) -> Self {
        let fan_in = (cin * k * k) as f32;
        Conv2d {
            weight: Param::normal(&[cout, cin, k, k], (2.0 / fan_in).sqrt(), seed, &join(name, "weight")),
            bias: bias.then(|| Param::filled(&[cout], 0.0, true)),
            cin,
            cout,
            k,
            stride,
            pad: k / 2,
            cache: None,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (conv_out(h, self.k, self.stride, self.pad), conv_out(w, self.k, self.stride, self.pad))
    }

    fn im2col(&self, x: &Array4<f32>) -> Array2<f32> {
        let (b, c, h, w) = x.dim();
        let (ho, wo) = self.out_hw(h, w);
        let (k, s, p) = (self.k, self.stride, self.pad);
        let plane = ho * wo;
        let src = std_layout(x);
        let mut cols = Array2::<f32>::zeros((c * k * k, b * plane));
        let dst = cols.as_slice_mut().unwrap();
        let row_len = b * plane;
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let out_row = &mut dst[row * row_len..(row + 1) * row_len];
                    for bi in 0..b {
                        let base = (bi * c + ci) * h * w;
                        for oy in 0..ho {
                            let iy = (oy * s + ky) as isize - p as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let src_row = &src[base + iy as usize * w..base + (iy as usize + 1) * w];
                            let o = bi * plane + oy * wo;
                            for ox in 0..wo {
                                let ix = (ox * s + kx) as isize - p as isize;
                                if ix >= 0 && ix < w as isize {
                                    out_row[o + ox] = src_row[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &Array2<f32>, dim: (usize, usize, usize, usize)) -> Array4<f32> {
        let (b, c, h, w) = dim;
        let (ho, wo) = self.out_hw(h, w);
        let (k, s, p) = (self.k, self.stride, self.pad);
        let plane = ho * wo;
        let mut dx = Array4::<f32>::zeros(dim);
        let dst = dx.as_slice_mut().unwrap();
        let src = cols.as_slice().unwrap();
        let row_len = b * plane;
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let in_row = &src[row * row_len..(row + 1) * row_len];
                    for bi in 0..b {
                        let base = (bi * c + ci) * h * w;
                        for oy in 0..ho {
                            let iy = (oy * s + ky) as isize - p as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let drow = base + iy as usize * w;
                            let o = bi * plane + oy * wo;
                            for ox in 0..wo {
                                let ix = (ox * s + kx) as isize - p as isize;
                                if ix >= 0 && ix < w as isize {
                                    dst[drow + ix as usize] += in_row[o + ox];
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    fn weight_matrix(&self) -> ArrayView2<'_, f32> {
        ArrayView2::from_shape((self.cout, self.cin * self.k * self.k), &self.weight.value).unwrap()
    }

    pub fn forward(&mut self, x: &Array4<f32>, mode: Mode) -> Array4<f32> {
        let (b, c, h, w) = x.dim();
        assert_eq!(c, self.cin, "conv expects {} input channels", self.cin);
        let (ho, wo) = self.out_hw(h, w);
        let plane = ho * wo;
        let cols = self.im2col(x);
        let mut out = Array2::<f32>::zeros((self.cout, b * plane));
        general_mat_mul(1.0, &self.weight_matrix(), &cols, 0.0, &mut out);
        let mut y = Array4::<f32>::zeros((b, self.cout, ho, wo));
        {
            let ys = y.as_slice_mut().unwrap();
            let os = out.as_slice().unwrap();
            for co in 0..self.cout {
                let bias = self.bias.as_ref().map_or(0.0, |p| p.value[co]);
                for bi in 0..b {
                    let from = &os[co * b * plane + bi * plane..co * b * plane + (bi + 1) * plane];
                    let to = &mut ys[(bi * self.cout + co) * plane..(bi * self.cout + co + 1) * plane];
                    for (t, f) in to.iter_mut().zip(from) {
                        *t = f + bias;
                    }
                }
            }
        }
        self.cache = (mode == Mode::Train).then_some(ConvCache {
            cols,
            in_dim: (b, c, h, w),
        });
        y
    }

    /// Accumulates parameter gradients; returns the input gradient when `need_dx`.
    pub fn backward(&mut self, dy: &Array4<f32>, need_dx: bool) -> Option<Array4<f32>> {
        let cache = self.cache.take().expect("conv backward without a train-mode forward");
        let (b, cout, ho, wo) = dy.dim();
        let plane = ho * wo;
        let mut dym = Array2::<f32>::zeros((cout, b * plane));
        {
            let ds = std_layout(dy);
            let ms = dym.as_slice_mut().unwrap();
            for bi in 0..b {
                for co in 0..cout {
                    let from = &ds[(bi * cout + co) * plane..(bi * cout + co + 1) * plane];
                    ms[co * b * plane + bi * plane..co * b * plane + (bi + 1) * plane].copy_from_slice(from);
                }
            }
        }
        {
            let k = self.cin * self.k * self.k;
            let mut dw = ndarray::ArrayViewMut2::from_shape((cout, k), &mut self.weight.grad).unwrap();
            general_mat_mul(1.0, &dym, &cache.cols.t(), 1.0, &mut dw);
        }
        if let Some(bias) = self.bias.as_mut() {
            for (co, g) in bias.grad.iter_mut().enumerate() {
                *g += dym.row(co).sum();
            }
        }
        if !need_dx {
            return None;
        }
        let mut dcols = Array2::<f32>::zeros(cache.cols.raw_dim());
        general_mat_mul(1.0, &self.weight_matrix().t(), &dym, 0.0, &mut dcols);
        Some(self.col2im(&dcols, cache.in_dim))
    }
}

impl Module for Conv2d {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}

struct NormCache {
    xhat: Array4<f32>,
    inv_std: Vec<f32>,
}

/// Batch or group normalisation over NCHW activations.
pub struct Norm {
    kind: NormKind,
    groups: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    momentum: f32,
    eps: f32,
    cache: Option<NormCache>,
}

/// Largest divisor of `channels` that is at most 8.
fn group_count(channels: usize) -> usize {
    (1..=8.min(channels)).rev().find(|g| channels.is_multiple_of(*g)).unwrap_or(1)
}

impl Norm {
    pub fn new(kind: NormKind, channels: usize) -> Self {
        Norm {
            kind,
            groups: group_count(channels),
            gamma: Param::filled(&[channels], 1.0, true),
            beta: Param::filled(&[channels], 0.0, true),
            running_mean: Param::filled(&[channels], 0.0, false),
            running_var: Param::filled(&[channels], 1.0, false),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f32>, mode: Mode) -> Array4<f32> {
        match (self.kind, mode) {
            (NormKind::Batch, Mode::Eval) => self.batch_eval(x),
            (NormKind::Batch, Mode::Train) => self.batch_train(x),
            (NormKind::Group, _) => self.group(x, mode),
        }
    }

    fn batch_eval(&self, x: &Array4<f32>) -> Array4<f32> {
        let (b, c, h, w) = x.dim();
        let plane = h * w;
        let mut y = x.clone();
        let ys = y.as_slice_mut().unwrap();
        for ch in 0..c {
            let inv = 1.0 / (self.running_var.value[ch] + self.eps).sqrt();
            let scale = self.gamma.value[ch] * inv;
            let shift = self.beta.value[ch] - self.running_mean.value[ch] * scale;
            for bi in 0..b {
                for v in &mut ys[(bi * c + ch) * plane..(bi * c + ch + 1) * plane] {
                    *v = *v * scale + shift;
                }
            }
        }
        y
    }

    fn batch_train(&mut self, x: &Array4<f32>) -> Array4<f32> {
        let (b, c, h, w) = x.dim();
        let plane = h * w;
        let count = (b * plane) as f32;
        let xs = std_layout(x);
        let mut xhat = Array4::<f32>::zeros(x.raw_dim());
        let mut y = Array4::<f32>::zeros(x.raw_dim());
        let mut inv_std = vec![0.0; c];
        {
            let hs = xhat.as_slice_mut().unwrap();
            let ys = y.as_slice_mut().unwrap();
            for ch in 0..c {
                let chunks = || (0..b).map(move |bi| (bi * c + ch) * plane..(bi * c + ch + 1) * plane);
                let mean = chunks().map(|r| xs[r].iter().map(|&v| v as f64).sum::<f64>()).sum::<f64>() / count as f64;
                let var = chunks()
                    .map(|r| xs[r].iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>())
                    .sum::<f64>()
                    / count as f64;
                let inv = 1.0 / (var as f32 + self.eps).sqrt();
                inv_std[ch] = inv;
                let (g, bt) = (self.gamma.value[ch], self.beta.value[ch]);
                for r in chunks() {
                    for i in r {
                        let xh = (xs[i] - mean as f32) * inv;
                        hs[i] = xh;
                        ys[i] = g * xh + bt;
                    }
                }
                let m = self.momentum;
                let unbiased = if count > 1.0 { var as f32 * count / (count - 1.0) } else { var as f32 };
                self.running_mean.value[ch] = (1.0 - m) * self.running_mean.value[ch] + m * mean as f32;
                self.running_var.value[ch] = (1.0 - m) * self.running_var.value[ch] + m * unbiased;
            }
        }
        self.cache = Some(NormCache { xhat, inv_std });
        y
    }

    fn group(&mut self, x: &Array4<f32>, mode: Mode) -> Array4<f32> {
        let (b, c, h, w) = x.dim();
        let per = c / self.groups * h * w;
        let xs = std_layout(x);
        let mut xhat = Array4::<f32>::zeros(x.raw_dim());
        let mut y = Array4::<f32>::zeros(x.raw_dim());
        let mut inv_std = vec![0.0; b * self.groups];
        {
            let hs = xhat.as_slice_mut().unwrap();
            let ys = y.as_slice_mut().unwrap();
            let plane = h * w;
            for (gi, chunk) in xs.chunks(per).enumerate() {
                let mean = chunk.iter().map(|&v| v as f64).sum::<f64>() / per as f64;
                let var = chunk.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / per as f64;
                let inv = 1.0 / (var as f32 + self.eps).sqrt();
                inv_std[gi] = inv;
                for (j, &v) in chunk.iter().enumerate() {
                    let i = gi * per + j;
                    let ch = (i / plane) % c;
                    let xh = (v - mean as f32) * inv;
                    hs[i] = xh;
                    ys[i] = self.gamma.value[ch] * xh + self.beta.value[ch];
                }
            }
        }
        if mode == Mode::Train {
            self.cache = Some(NormCache { xhat, inv_std });
        }
        y
    }

    pub fn backward(&mut self, dy: &Array4<f32>) -> Array4<f32> {
        let cache = self.cache.take().expect("norm backward without a train-mode forward");
        let (b, c, h, w) = dy.dim();
        let plane = h * w;
        let ds = std_layout(dy);
        let hs = cache.xhat.as_slice().unwrap();
        let mut dx = Array4::<f32>::zeros(dy.raw_dim());
        let dxs = dx.as_slice_mut().unwrap();
        for ch in 0..c {
            let (mut dg, mut db) = (0.0f32, 0.0f32);
            for bi in 0..b {
                for i in (bi * c + ch) * plane..(bi * c + ch + 1) * plane {
                    dg += ds[i] * hs[i];
                    db += ds[i];
                }
            }
            self.gamma.grad[ch] += dg;
            self.beta.grad[ch] += db;
        }
        // dx = inv/M · (M·dxhat − Σdxhat − xhat·Σ(dxhat·xhat)) over each statistics group
        let reduce = |idx: &mut dyn Iterator<Item = usize>, inv: f32, dxs: &mut [f32], gamma: &[f32]| {
            let idx: Vec<usize> = idx.collect();
            let m = idx.len() as f32;
            let (mut s1, mut s2) = (0.0f32, 0.0f32);
            for &i in &idx {
                let dxh = ds[i] * gamma[(i / plane) % c];
                s1 += dxh;
                s2 += dxh * hs[i];
            }
            for &i in &idx {
                let dxh = ds[i] * gamma[(i / plane) % c];
                dxs[i] = inv / m * (m * dxh - s1 - hs[i] * s2);
            }
        };
        match self.kind {
            NormKind::Batch => {
                for ch in 0..c {
                    let mut it = (0..b).flat_map(|bi| (bi * c + ch) * plane..(bi * c + ch + 1) * plane);
                    reduce(&mut it, cache.inv_std[ch], dxs, &self.gamma.value);
                }
            }
            NormKind::Group => {
                let per = c / self.groups * plane;
                for gi in 0..b * self.groups {
                    let mut it = gi * per..(gi + 1) * per;
                    reduce(&mut it, cache.inv_std[gi], dxs, &self.gamma.value);
                }
            }
        }
        dx
    }
}

impl Module for Norm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
        if self.kind == NormKind::Batch {
            f(&join(prefix, "running_mean"), &self.running_mean);
            f(&join(prefix, "running_var"), &self.running_var);
        }
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
        if self.kind == NormKind::Batch {
            f(&join(prefix, "running_mean"), &mut self.running_mean);
            f(&join(prefix, "running_var"), &mut self.running_var);
        }
    }
}

#[derive(Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn forward4(&mut self, x: Array4<f32>, mode: Mode) -> Array4<f32> {
        let mut x = x;
        x.mapv_inplace(|v| v.max(0.0));
        if mode == Mode::Train {
            self.mask = Some(x.iter().map(|&v| v > 0.0).collect());
        }
        x
    }

    pub fn forward2(&mut self, x: Array2<f32>, mode: Mode) -> Array2<f32> {
        let mut x = x;
        x.mapv_inplace(|v| v.max(0.0));
        if mode == Mode::Train {
            self.mask = Some(x.iter().map(|&v| v > 0.0).collect());
        }
        x
    }

    pub fn backward4(&mut self, mut dy: Array4<f32>) -> Array4<f32> {
        let mask = self.mask.take().expect("relu backward without forward");
        dy.iter_mut().zip(mask).for_each(|(g, m)| {
            if !m {
                *g = 0.0
            }
        });
        dy
    }

    pub fn backward2(&mut self, mut dy: Array2<f32>) -> Array2<f32> {
        let mask = self.mask.take().expect("relu backward without forward");
        dy.iter_mut().zip(mask).for_each(|(g, m)| {
            if !m {
                *g = 0.0
            }
        });
        dy
    }
}

/// 3×3 max pooling, stride 2, padding 1.
#[derive(Default)]
pub struct MaxPool {
    argmax: Option<(Vec<usize>, (usize, usize, usize, usize))>,
}

impl MaxPool {
    pub fn out_hw(h: usize, w: usize) -> (usize, usize) {
        (conv_out(h, 3, 2, 1), conv_out(w, 3, 2, 1))
    }

    pub fn forward(&mut self, x: &Array4<f32>, mode: Mode) -> Array4<f32> {
        let (b, c, h, w) = x.dim();
        let (ho, wo) = Self::out_hw(h, w);
        let xs = std_layout(x);
        let mut y = Array4::<f32>::zeros((b, c, ho, wo));
        let mut arg = vec![0usize; b * c * ho * wo];
        let ys = y.as_slice_mut().unwrap();
        for plane in 0..b * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = f32::NEG_INFINITY;
                    let mut at = base;
                    for ky in 0..3 {
                        let iy = (oy * 2 + ky) as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = (ox * 2 + kx) as isize - 1;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let i = base + iy as usize * w + ix as usize;
                            if xs[i] > best {
                                best = xs[i];
                                at = i;
                            }
                        }
                    }
                    let o = (plane * ho + oy) * wo + ox;
                    ys[o] = best;
                    arg[o] = at;
                }
            }
        }
        if mode == Mode::Train {
            self.argmax = Some((arg, (b, c, h, w)));
        }
        y
    }

    pub fn backward(&mut self, dy: &Array4<f32>) -> Array4<f32> {
        let (arg, dim) = self.argmax.take().expect("pool backward without forward");
        let mut dx = Array4::<f32>::zeros(dim);
        let dxs = dx.as_slice_mut().unwrap();
        for (g, &i) in std_layout(dy).iter().zip(&arg) {
            dxs[i] += g;
        }
        dx
    }
}

/// Nearest-neighbour resize to an explicit size.
#[derive(Default)]
pub struct Upsample {
    in_dim: Option<(usize, usize, usize, usize)>,
}

fn nearest_index(o: usize, n_in: usize, n_out: usize) -> usize {
    (o * n_in / n_out).min(n_in - 1)
}

impl Upsample {
    pub fn forward(&mut self, x: &Array4<f32>, out_h: usize, out_w: usize, mode: Mode) -> Array4<f32> {
        let (b, c, h, w) = x.dim();
        let xs = std_layout(x);
        let cols: Vec<usize> = (0..out_w).map(|ox| nearest_index(ox, w, out_w)).collect();
        let mut y = Array4::<f32>::zeros((b, c, out_h, out_w));
        let ys = y.as_slice_mut().unwrap();
        for plane in 0..b * c {
            for oy in 0..out_h {
                let src = &xs[(plane * h + nearest_index(oy, h, out_h)) * w..][..w];
                let dst = &mut ys[(plane * out_h + oy) * out_w..][..out_w];
                for (d, &ix) in dst.iter_mut().zip(&cols) {
                    *d = src[ix];
                }
            }
        }
        if mode == Mode::Train {
            self.in_dim = Some((b, c, h, w));
        }
        y
    }

    pub fn backward(&mut self, dy: &Array4<f32>) -> Array4<f32> {
        let dim = self.in_dim.take().expect("upsample backward without forward");
        let (b, c, h, w) = dim;
        let (_, _, oh, ow) = dy.dim();
        let cols: Vec<usize> = (0..ow).map(|ox| nearest_index(ox, w, ow)).collect();
        let ds = std_layout(dy);
        let mut dx = Array4::<f32>::zeros(dim);
        let dxs = dx.as_slice_mut().unwrap();
        for plane in 0..b * c {
            for oy in 0..oh {
                let src = &ds[(plane * oh + oy) * ow..][..ow];
                let dst = &mut dxs[(plane * h + nearest_index(oy, h, oh)) * w..][..w];
                for (g, &ix) in src.iter().zip(&cols) {
                    dst[ix] += g;
                }
            }
        }
        dx
    }
}

/// Global average pooling NCHW → [N, C].
pub fn global_avg_pool(x: &Array4<f32>) -> Array2<f32> {
    let (b, c, h, w) = x.dim();
    let xs = std_layout(x);
    let plane = h * w;
    Array2::from_shape_fn((b, c), |(bi, ch)| {
        xs[(bi * c + ch) * plane..(bi * c + ch + 1) * plane].iter().sum::<f32>() / plane as f32
    })
}

pub fn global_avg_pool_backward(dy: &Array2<f32>, h: usize, w: usize) -> Array4<f32> {
    let (b, c) = dy.dim();
    let scale = 1.0 / (h * w) as f32;
    Array4::from_shape_fn((b, c, h, w), |(bi, ch, _, _)| dy[[bi, ch]] * scale)
}

pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    pub in_dim: usize,
    pub out_dim: usize,
    input: Option<Array2<f32>>,
}

impl Linear {
    /// Uniform init in ±1/√in.
    pub fn new(name: &str, in_dim: usize, out_dim: usize, seed: u64) -> Self {
        let bound = 1.0 / (in_dim as f32).sqrt();
        Linear {
            weight: Param::uniform(&[out_dim, in_dim], bound, seed, &join(name, "weight")),
            bias: Param::uniform(&[out_dim], bound, seed, &join(name, "bias")),
            in_dim,
            out_dim,
            input: None,
        }
    }

    fn w(&self) -> ArrayView2<'_, f32> {
        ArrayView2::from_shape((self.out_dim, self.in_dim), &self.weight.value).unwrap()
    }

    pub fn forward(&mut self, x: &Array2<f32>, mode: Mode) -> Array2<f32> {
        assert_eq!(x.ncols(), self.in_dim, "linear expects {} features", self.in_dim);
        let mut y = x.dot(&self.w().t());
        for mut row in y.outer_iter_mut() {
            row.iter_mut().zip(&self.bias.value).for_each(|(v, b)| *v += b);
        }
        if mode == Mode::Train {
            self.input = Some(x.clone());
        }
        y
    }

    pub fn backward(&mut self, dy: &Array2<f32>) -> Array2<f32> {
        let x = self.input.take().expect("linear backward without a train-mode forward");
        {
            let mut dw = ndarray::ArrayViewMut2::from_shape((self.out_dim, self.in_dim), &mut self.weight.grad).unwrap();
            general_mat_mul(1.0, &dy.t(), &x, 1.0, &mut dw);
        }
        for row in dy.outer_iter() {
            self.bias.grad.iter_mut().zip(row).for_each(|(g, d)| *g += d);
        }
        dy.dot(&self.w())
    }
}

impl Module for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}
