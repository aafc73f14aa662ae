//! Layer kinds with forward kernels and exact analytic backward passes.
//!
//! Convolutions use per-example im2col + GEMM; the column matrix is rebuilt
//! in the backward pass instead of being cached.

use std::fmt;

use crate::error::{invalid, Error, Result};
use crate::nn::tensor::{Scalar, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Declarative layer description.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Input {
        channels: usize,
    },
    Conv1d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Weight layout `(in_ch, out_ch, kernel)`.
    ConvT1d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Non-overlapping window; trailing samples that do not fill a window are dropped.
    MaxPool1d {
        kernel: usize,
    },
    Relu,
    Sigmoid,
    BatchNorm1d {
        channels: usize,
    },
    /// Rank-3 inputs are flattened per example.
    Linear {
        in_features: usize,
        out_features: usize,
    },
    /// Global average over length: `(B, C, L) -> (B, C)`.
    AdaptiveAvgPool1d,
    /// Inputs `[decoder, skip]`; the decoder is right-trimmed or zero-padded to
    /// the skip length and placed first.
    ConcatSkip,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Input { .. } => "input",
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::ConvT1d { .. } => "convt1d",
            LayerSpec::MaxPool1d { .. } => "maxpool1d",
            LayerSpec::Relu => "relu",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::BatchNorm1d { .. } => "batchnorm1d",
            LayerSpec::Linear { .. } => "linear",
            LayerSpec::AdaptiveAvgPool1d => "adaptiveavgpool1d",
            LayerSpec::ConcatSkip => "concatskip",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            LayerSpec::Input { .. } => 0,
            LayerSpec::ConcatSkip => 2,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LayerSpec::Input { channels } => channels > 0,
            LayerSpec::Conv1d { in_ch, out_ch, kernel, stride, .. } | LayerSpec::ConvT1d { in_ch, out_ch, kernel, stride, .. } => {
                in_ch > 0 && out_ch > 0 && kernel > 0 && stride > 0
            }
            LayerSpec::MaxPool1d { kernel } => kernel > 0,
            LayerSpec::BatchNorm1d { channels } => channels > 0,
            LayerSpec::Linear { in_features, out_features } => in_features > 0 && out_features > 0,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("non-positive hyperparameter in {self:?}"))
        }
    }

    /// Trainable parameter shapes, `(suffix, shape)`.
    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            LayerSpec::Conv1d { in_ch, out_ch, kernel, .. } => {
                vec![("weight", vec![out_ch, in_ch, kernel]), ("bias", vec![out_ch])]
            }
            LayerSpec::ConvT1d { in_ch, out_ch, kernel, .. } => {
                vec![("weight", vec![in_ch, out_ch, kernel]), ("bias", vec![out_ch])]
            }
            LayerSpec::BatchNorm1d { channels } => vec![("gamma", vec![channels]), ("beta", vec![channels])],
            LayerSpec::Linear { in_features, out_features } => {
                vec![("weight", vec![out_features, in_features]), ("bias", vec![out_features])]
            }
            _ => Vec::new(),
        }
    }

    /// Non-trainable state shapes (batch-norm running statistics).
    pub fn buffer_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            LayerSpec::BatchNorm1d { channels } => vec![("running_mean", vec![channels]), ("running_var", vec![channels])],
            _ => Vec::new(),
        }
    }

    /// Fan-in used by Kaiming-uniform initialization.
    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv1d { in_ch, kernel, .. } => in_ch * kernel,
            LayerSpec::ConvT1d { in_ch, kernel, stride, .. } => (in_ch * kernel / stride).max(1),
            LayerSpec::Linear { in_features, .. } => in_features,
            _ => 1,
        }
    }

    /// Output length for an input length, where defined.
    pub fn out_len(&self, l: usize) -> Result<usize> {
        match *self {
            LayerSpec::Conv1d { kernel, stride, padding, .. } => {
                let span = l + 2 * padding;
                if span < kernel {
                    return invalid(format!("conv kernel {kernel} longer than padded input {span}"));
                }
                Ok((span - kernel) / stride + 1)
            }
            LayerSpec::ConvT1d { kernel, stride, padding, .. } => {
                let full = (l - 1) * stride + kernel;
                if full <= 2 * padding {
                    return invalid("transposed conv padding removes every output sample");
                }
                Ok(full - 2 * padding)
            }
            LayerSpec::MaxPool1d { kernel } => {
                if l < kernel {
                    return invalid(format!("pool window {kernel} longer than input {l}"));
                }
                Ok(l / kernel)
            }
            _ => Ok(l),
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Input { channels } => write!(f, "input channels={channels}"),
            LayerSpec::Conv1d { in_ch, out_ch, kernel, stride, padding } => {
                write!(f, "conv1d in={in_ch} out={out_ch} k={kernel} s={stride} p={padding}")
            }
            LayerSpec::ConvT1d { in_ch, out_ch, kernel, stride, padding } => {
                write!(f, "convt1d in={in_ch} out={out_ch} k={kernel} s={stride} p={padding}")
            }
            LayerSpec::MaxPool1d { kernel } => write!(f, "maxpool1d k={kernel}"),
            LayerSpec::BatchNorm1d { channels } => write!(f, "batchnorm1d channels={channels}"),
            LayerSpec::Linear { in_features, out_features } => write!(f, "linear in={in_features} out={out_features}"),
            other => write!(f, "{}", other.kind()),
        }
    }
}

/// Per-layer state saved by the forward pass for backward.
#[derive(Clone, Debug)]
pub enum Aux<T> {
    None,
    Argmax(Vec<u32>),
    BatchNorm { xhat: Vec<T>, inv_std: Vec<T> },
}

/// Gathers `col[c*k + j, t] = x[c, t*s + j - p]` (zero outside).
fn im2col<T: Scalar>(x: &[T], c: usize, l: usize, k: usize, s: usize, p: usize, lout: usize, col: &mut [T]) {
    for ci in 0..c {
        let xrow = &x[ci * l..(ci + 1) * l];
        for j in 0..k {
            let row = &mut col[(ci * k + j) * lout..(ci * k + j + 1) * lout];
            let off = j as isize - p as isize;
            if s == 1 {
                let lo = (-off).clamp(0, lout as isize) as usize;
                let hi = (l as isize - off).clamp(lo as isize, lout as isize) as usize;
                row[..lo].fill(T::zero());
                row[hi..].fill(T::zero());
                if hi > lo {
                    let start = (lo as isize + off) as usize;
                    row[lo..hi].copy_from_slice(&xrow[start..start + hi - lo]);
                }
            } else {
                for (t, r) in row.iter_mut().enumerate() {
                    let idx = (t * s) as isize + off;
                    *r = if idx >= 0 && (idx as usize) < l { xrow[idx as usize] } else { T::zero() };
                }
            }
        }
    }
}

/// Scatter-adds `col[c*k + j, t]` into `x[c, t*s + j - p]`.
fn col2im<T: Scalar>(col: &[T], c: usize, l: usize, k: usize, s: usize, p: usize, lout: usize, x: &mut [T]) {
    for ci in 0..c {
        let xrow = &mut x[ci * l..(ci + 1) * l];
        for j in 0..k {
            let row = &col[(ci * k + j) * lout..(ci * k + j + 1) * lout];
            let off = j as isize - p as isize;
            for (t, &v) in row.iter().enumerate() {
                let idx = (t * s) as isize + off;
                if idx >= 0 && (idx as usize) < l {
                    xrow[idx as usize] = xrow[idx as usize] + v;
                }
            }
        }
    }
}

pub(crate) fn conv_forward<T: Scalar>(spec: &LayerSpec, x: &Tensor<T>, w: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let LayerSpec::Conv1d { in_ch, out_ch, kernel: k, stride: s, padding: p } = *spec else { unreachable!() };
    let (b, c, l) = x.dims3()?;
    if c != in_ch {
        return Err(Error::Shape(format!("conv expects {in_ch} channels, got {c}")));
    }
    let lout = spec.out_len(l)?;
    let ck = c * k;
    let mut col = vec![T::zero(); ck * lout];
    let mut y = Tensor::zeros(&[b, out_ch, lout]);
    for bi in 0..b {
        im2col(x.item(bi), c, l, k, s, p, lout, &mut col);
        let yb = &mut y.data_mut()[bi * out_ch * lout..(bi + 1) * out_ch * lout];
        for (o, row) in yb.chunks_mut(lout).enumerate() {
            row.fill(bias.data()[o]);
        }
        T::gemm(out_ch, ck, lout, T::one(), w.data(), ck as isize, 1, &col, lout as isize, 1, T::one(), yb, lout as isize, 1);
    }
    Ok(y)
}

pub(crate) fn conv_backward<T: Scalar>(
    spec: &LayerSpec,
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    dw: &mut Tensor<T>,
    db: &mut Tensor<T>,
) -> Result<Tensor<T>> {
    let LayerSpec::Conv1d { out_ch, kernel: k, stride: s, padding: p, .. } = *spec else { unreachable!() };
    let (b, c, l) = x.dims3()?;
    let lout = dy.dims3()?.2;
    let ck = c * k;
    let mut col = vec![T::zero(); ck * lout];
    let mut dcol = vec![T::zero(); ck * lout];
    let mut dx = Tensor::zeros(x.shape());
    for bi in 0..b {
        let dyb = dy.item(bi);
        im2col(x.item(bi), c, l, k, s, p, lout, &mut col);
        T::gemm(out_ch, lout, ck, T::one(), dyb, lout as isize, 1, &col, 1, lout as isize, T::one(), dw.data_mut(), ck as isize, 1);
        for (o, row) in dyb.chunks(lout).enumerate() {
            let sum: T = row.iter().copied().sum();
            db.data_mut()[o] = db.data()[o] + sum;
        }
        T::gemm(ck, out_ch, lout, T::one(), w.data(), 1, ck as isize, dyb, lout as isize, 1, T::zero(), &mut dcol, lout as isize, 1);
        col2im(&dcol, c, l, k, s, p, lout, &mut dx.data_mut()[bi * c * l..(bi + 1) * c * l]);
    }
    Ok(dx)
}

pub(crate) fn convt_forward<T: Scalar>(spec: &LayerSpec, x: &Tensor<T>, w: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let LayerSpec::ConvT1d { in_ch, out_ch, kernel: k, stride: s, padding: p } = *spec else { unreachable!() };
    let (b, c, l) = x.dims3()?;
    if c != in_ch {
        return Err(Error::Shape(format!("transposed conv expects {in_ch} channels, got {c}")));
    }
    let lout = spec.out_len(l)?;
    let ok = out_ch * k;
    let mut col = vec![T::zero(); ok * l];
    let mut y = Tensor::zeros(&[b, out_ch, lout]);
    for bi in 0..b {
        T::gemm(ok, in_ch, l, T::one(), w.data(), 1, ok as isize, x.item(bi), l as isize, 1, T::zero(), &mut col, l as isize, 1);
        let yb = &mut y.data_mut()[bi * out_ch * lout..(bi + 1) * out_ch * lout];
        for (o, row) in yb.chunks_mut(lout).enumerate() {
            row.fill(bias.data()[o]);
        }
        col2im(&col, out_ch, lout, k, s, p, l, yb);
    }
    Ok(y)
}

pub(crate) fn convt_backward<T: Scalar>(
    spec: &LayerSpec,
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    dw: &mut Tensor<T>,
    db: &mut Tensor<T>,
) -> Result<Tensor<T>> {
    let LayerSpec::ConvT1d { in_ch, out_ch, kernel: k, stride: s, padding: p } = *spec else { unreachable!() };
    let (b, _, l) = x.dims3()?;
    let lout = dy.dims3()?.2;
    let ok = out_ch * k;
    let mut dcol = vec![T::zero(); ok * l];
    let mut dx = Tensor::zeros(x.shape());
    for bi in 0..b {
        let dyb = dy.item(bi);
        for (o, row) in dyb.chunks(lout).enumerate() {
            let sum: T = row.iter().copied().sum();
            db.data_mut()[o] = db.data()[o] + sum;
        }
        im2col(dyb, out_ch, lout, k, s, p, l, &mut dcol);
        let dxb = &mut dx.data_mut()[bi * in_ch * l..(bi + 1) * in_ch * l];
        T::gemm(in_ch, ok, l, T::one(), w.data(), ok as isize, 1, &dcol, l as isize, 1, T::zero(), dxb, l as isize, 1);
        T::gemm(in_ch, l, ok, T::one(), x.item(bi), l as isize, 1, &dcol, 1, l as isize, T::one(), dw.data_mut(), ok as isize, 1);
    }
    Ok(dx)
}

pub(crate) fn maxpool_forward<T: Scalar>(k: usize, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let (b, c, l) = x.dims3()?;
    let lout = LayerSpec::MaxPool1d { kernel: k }.out_len(l)?;
    let mut y = Tensor::zeros(&[b, c, lout]);
    let mut arg = Vec::with_capacity(b * c * lout);
    for (row, out) in x.data().chunks(l).zip(y.data_mut().chunks_mut(lout)) {
        for (t, o) in out.iter_mut().enumerate() {
            let mut best = t * k;
            for i in t * k + 1..t * k + k {
                if row[i] > row[best] {
                    best = i;
                }
            }
            *o = row[best];
            arg.push(best as u32);
        }
    }
    Ok((y, arg))
}

pub(crate) fn maxpool_backward<T: Scalar>(x_shape: &[usize], arg: &[u32], dy: &Tensor<T>) -> Tensor<T> {
    let l = x_shape[2];
    let lout = dy.shape()[2];
    let mut dx = Tensor::zeros(x_shape);
    for (r, (drow, arow)) in dy.data().chunks(lout).zip(arg.chunks(lout)).enumerate() {
        let base = r * l;
        for (&g, &a) in drow.iter().zip(arow) {
            let i = base + a as usize;
            dx.data_mut()[i] = dx.data()[i] + g;
        }
    }
    dx
}

pub(crate) fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
    y
}

pub(crate) fn relu_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = dy.clone();
    dx.data_mut().iter_mut().zip(x.data()).for_each(|(d, &v)| {
        if v <= T::zero() {
            *d = T::zero();
        }
    });
    dx
}

pub(crate) fn sigmoid_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| {
        *v = if *v >= T::zero() {
            T::one() / (T::one() + (-*v).exp())
        } else {
            let e = v.exp();
            e / (T::one() + e)
        }
    });
    y
}

pub(crate) fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = dy.clone();
    dx.data_mut().iter_mut().zip(y.data()).for_each(|(d, &s)| *d = *d * s * (T::one() - s));
    dx
}

pub(crate) struct BnStats<T> {
    pub mean: Vec<T>,
    pub var_unbiased: Vec<T>,
}

pub(crate) fn batchnorm_forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    mode: Mode,
) -> Result<(Tensor<T>, Aux<T>, Option<BnStats<T>>)> {
    let (b, c, l) = x.dims3()?;
    if c != gamma.len() {
        return Err(Error::Shape(format!("batch norm expects {} channels, got {c}", gamma.len())));
    }
    let eps = T::from_f64(BN_EPS);
    let mut y = Tensor::zeros(x.shape());
    let n = b * l;
    let (mean, var) = match mode {
        Mode::Eval => (running_mean.data().to_vec(), running_var.data().to_vec()),
        Mode::Train => {
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for ci in 0..c {
                let mut s = 0.0;
                for bi in 0..b {
                    s += x.item(bi)[ci * l..(ci + 1) * l].iter().map(|v| v.as_f64()).sum::<f64>();
                }
                let m = s / n as f64;
                let mut q = 0.0;
                for bi in 0..b {
                    q += x.item(bi)[ci * l..(ci + 1) * l].iter().map(|v| (v.as_f64() - m).powi(2)).sum::<f64>();
                }
                mean[ci] = T::from_f64(m);
                var[ci] = T::from_f64(q / n as f64);
            }
            (mean, var)
        }
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = vec![T::zero(); x.len()];
    for bi in 0..b {
        for ci in 0..c {
            let off = (bi * c + ci) * l;
            for t in 0..l {
                let h = (x.data()[off + t] - mean[ci]) * inv_std[ci];
                xhat[off + t] = h;
                y.data_mut()[off + t] = gamma.data()[ci] * h + beta.data()[ci];
            }
        }
    }
    let stats = match mode {
        Mode::Train => {
            let corr = if n > 1 { n as f64 / (n - 1) as f64 } else { 1.0 };
            Some(BnStats { mean, var_unbiased: var.iter().map(|&v| v * T::from_f64(corr)).collect() })
        }
        Mode::Eval => None,
    };
    Ok((y, Aux::BatchNorm { xhat, inv_std }, stats))
}

pub(crate) fn batchnorm_backward<T: Scalar>(
    x_shape: &[usize],
    xhat: &[T],
    inv_std: &[T],
    gamma: &Tensor<T>,
    dy: &Tensor<T>,
    dgamma: &mut Tensor<T>,
    dbeta: &mut Tensor<T>,
    mode: Mode,
) -> Tensor<T> {
    let (b, c, l) = (x_shape[0], x_shape[1], x_shape[2]);
    let n = T::from_f64((b * l) as f64);
    let mut dx = Tensor::zeros(x_shape);
    for ci in 0..c {
        let (mut sdy, mut sdyx) = (T::zero(), T::zero());
        for bi in 0..b {
            let off = (bi * c + ci) * l;
            for t in 0..l {
                sdy = sdy + dy.data()[off + t];
                sdyx = sdyx + dy.data()[off + t] * xhat[off + t];
            }
        }
        dgamma.data_mut()[ci] = dgamma.data()[ci] + sdyx;
        dbeta.data_mut()[ci] = dbeta.data()[ci] + sdy;
        let g = gamma.data()[ci] * inv_std[ci];
        for bi in 0..b {
            let off = (bi * c + ci) * l;
            for t in 0..l {
                let d = dy.data()[off + t];
                dx.data_mut()[off + t] = match mode {
                    Mode::Train => g / n * (n * d - sdy - xhat[off + t] * sdyx),
                    Mode::Eval => g * d,
                };
            }
        }
    }
    dx
}

fn flat_dims<T: Scalar>(x: &Tensor<T>) -> (usize, usize) {
    let b = x.shape()[0];
    (b, x.len() / b)
}

pub(crate) fn linear_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, f) = flat_dims(x);
    let (out, inf) = (w.shape()[0], w.shape()[1]);
    if f != inf {
        return Err(Error::Shape(format!("linear expects {inf} features, got {f} from {:?}", x.shape())));
    }
    let mut y = Tensor::zeros(&[b, out]);
    for row in y.data_mut().chunks_mut(out) {
        row.copy_from_slice(bias.data());
    }
    T::gemm(b, f, out, T::one(), x.data(), f as isize, 1, w.data(), 1, f as isize, T::one(), y.data_mut(), out as isize, 1);
    Ok(y)
}

pub(crate) fn linear_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    dw: &mut Tensor<T>,
    db: &mut Tensor<T>,
) -> Tensor<T> {
    let (b, f) = flat_dims(x);
    let out = w.shape()[0];
    T::gemm(out, b, f, T::one(), dy.data(), 1, out as isize, x.data(), f as isize, 1, T::one(), dw.data_mut(), f as isize, 1);
    for row in dy.data().chunks(out) {
        for (d, &g) in db.data_mut().iter_mut().zip(row) {
            *d = *d + g;
        }
    }
    let mut dx = Tensor::zeros(x.shape());
    T::gemm(b, out, f, T::one(), dy.data(), out as isize, 1, w.data(), f as isize, 1, T::zero(), dx.data_mut(), f as isize, 1);
    dx
}

pub(crate) fn avgpool_forward<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, l) = x.dims3()?;
    let inv = T::from_f64(1.0 / l as f64);
    let data = x.data().chunks(l).map(|row| row.iter().copied().sum::<T>() * inv).collect();
    Tensor::new(vec![b, c], data)
}

pub(crate) fn avgpool_backward<T: Scalar>(x_shape: &[usize], dy: &Tensor<T>) -> Tensor<T> {
    let l = x_shape[2];
    let inv = T::from_f64(1.0 / l as f64);
    let mut dx = Tensor::zeros(x_shape);
    for (row, &g) in dx.data_mut().chunks_mut(l).zip(dy.data()) {
        row.fill(g * inv);
    }
    dx
}

pub(crate) fn concat_forward<T: Scalar>(dec: &Tensor<T>, skip: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, cd, ld) = dec.dims3()?;
    let (bs, cs, ls) = skip.dims3()?;
    if b != bs {
        return Err(Error::Shape(format!("skip batch {bs} differs from decoder batch {b}")));
    }
    let keep = ld.min(ls);
    let mut y = Tensor::zeros(&[b, cd + cs, ls]);
    for bi in 0..b {
        let yb = &mut y.data_mut()[bi * (cd + cs) * ls..(bi + 1) * (cd + cs) * ls];
        for (ci, row) in dec.item(bi).chunks(ld).enumerate() {
            yb[ci * ls..ci * ls + keep].copy_from_slice(&row[..keep]);
        }
        yb[cd * ls..].copy_from_slice(skip.item(bi));
    }
    Ok(y)
}

pub(crate) fn concat_backward<T: Scalar>(dec_shape: &[usize], skip_shape: &[usize], dy: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let (b, cd, ld) = (dec_shape[0], dec_shape[1], dec_shape[2]);
    let (cs, ls) = (skip_shape[1], skip_shape[2]);
    let keep = ld.min(ls);
    let mut ddec = Tensor::zeros(dec_shape);
    let mut dskip = Tensor::zeros(skip_shape);
    for bi in 0..b {
        let g = dy.item(bi);
        for ci in 0..cd {
            ddec.data_mut()[(bi * cd + ci) * ld..(bi * cd + ci) * ld + keep].copy_from_slice(&g[ci * ls..ci * ls + keep]);
        }
        dskip.data_mut()[bi * cs * ls..(bi + 1) * cs * ls].copy_from_slice(&g[cd * ls..]);
    }
    (ddec, dskip)
}
