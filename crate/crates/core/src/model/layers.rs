//! Layer descriptors and their forward/backward kernels.
//!
//! Kernels work on one sample at a time; batching and parallelism live in the
//! model wrapper. Dot products accumulate in f64 and are stored back as f32.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One entry of a sequential network description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerDesc {
    Conv2d { out_channels: usize, kernel: usize, stride: usize, pad: usize },
    Relu,
    MaxPool { k: usize },
    Flatten,
    Dense { out: usize },
}

/// Shape of the value flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerShape {
    Map { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl LayerShape {
    pub fn len(&self) -> usize {
        match *self {
            LayerShape::Map { c, h, w } => c * h * w,
            LayerShape::Flat(n) => n,
        }
    }
}

/// Output shape of `desc` applied to `input`, or a shape error for `layer_idx`.
pub fn output_shape(desc: &LayerDesc, input: LayerShape, layer_idx: usize) -> Result<LayerShape> {
    match (desc, input) {
        (LayerDesc::Conv2d { out_channels, kernel, stride, pad }, LayerShape::Map { h, w, .. }) => {
            if *kernel == 0 || *stride == 0 {
                return Err(Error::shape_at(layer_idx, "conv kernel and stride must be positive"));
            }
            if h + 2 * pad < *kernel || w + 2 * pad < *kernel {
                return Err(Error::shape_at(
                    layer_idx,
                    format!("conv kernel {kernel} larger than padded input {h}x{w}"),
                ));
            }
            let oh = (h + 2 * pad - kernel) / stride + 1;
            let ow = (w + 2 * pad - kernel) / stride + 1;
            Ok(LayerShape::Map { c: *out_channels, h: oh, w: ow })
        }
        (LayerDesc::Conv2d { .. }, LayerShape::Flat(_)) => {
            Err(Error::shape_at(layer_idx, "conv2d expects a feature map, got a flat vector"))
        }
        (LayerDesc::Relu, shape) => Ok(shape),
        (LayerDesc::MaxPool { k }, LayerShape::Map { c, h, w }) => {
            if *k == 0 || h < *k || w < *k {
                return Err(Error::shape_at(layer_idx, format!("maxpool k={k} does not fit {h}x{w}")));
            }
            Ok(LayerShape::Map { c, h: h / k, w: w / k })
        }
        (LayerDesc::MaxPool { .. }, LayerShape::Flat(_)) => {
            Err(Error::shape_at(layer_idx, "maxpool expects a feature map"))
        }
        (LayerDesc::Flatten, LayerShape::Map { c, h, w }) => Ok(LayerShape::Flat(c * h * w)),
        (LayerDesc::Flatten, LayerShape::Flat(n)) => Ok(LayerShape::Flat(n)),
        (LayerDesc::Dense { out }, LayerShape::Flat(_)) => Ok(LayerShape::Flat(*out)),
        (LayerDesc::Dense { .. }, LayerShape::Map { .. }) => {
            Err(Error::shape_at(layer_idx, "dense expects a flat vector; insert flatten first"))
        }
    }
}

/// x: [ci,h,w], weight: [co,ci,k,k], bias: [co], out: [co,oh,ow].
#[allow(clippy::too_many_arguments)]
pub fn conv_forward(
    x: &[f32],
    ci: usize,
    h: usize,
    w: usize,
    weight: &[f32],
    bias: &[f32],
    co: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    out: &mut [f32],
    scratch: &mut Vec<f64>,
) {
    scratch.clear();
    scratch.resize(oh * ow, 0.0);
    for oc in 0..co {
        let b = bias[oc] as f64;
        for v in scratch.iter_mut() {
            *v = b;
        }
        for ic in 0..ci {
            let x_plane = &x[ic * h * w..(ic + 1) * h * w];
            let w_base = ((oc * ci) + ic) * k * k;
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weight[w_base + ky * k + kx] as f64;
                    if wv == 0.0 {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let x_row = &x_plane[iy as usize * w..(iy as usize + 1) * w];
                        let dst = &mut scratch[oy * ow..(oy + 1) * ow];
                        // valid ox range so that 0 <= ox*stride + kx - pad < w
                        let (lo, hi) = valid_ox_range(ow, stride, kx, pad, w);
                        for ox in lo..hi {
                            let ix = ox * stride + kx - pad;
                            dst[ox] += wv * x_row[ix] as f64;
                        }
                    }
                }
            }
        }
        let out_plane = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
        for (o, v) in out_plane.iter_mut().zip(scratch.iter()) {
            *o = *v as f32;
        }
    }
}

/// ox values for which ix = ox*stride + kx - pad lands inside [0, w).
#[inline]
fn valid_ox_range(ow: usize, stride: usize, kx: usize, pad: usize, w: usize) -> (usize, usize) {
    // lowest ox with ox*stride + kx >= pad
    let lo = if kx >= pad { 0 } else { (pad - kx).div_ceil(stride) };
    // lowest ox with ox*stride + kx - pad >= w, everything below is valid
    let hi = if w + pad > kx { ((w + pad - kx - 1) / stride + 1).min(ow) } else { 0 };
    (lo.min(hi), hi)
}

/// Gradient w.r.t. the conv input. g: [co,oh,ow] -> dx: [ci,h,w].
#[allow(clippy::too_many_arguments)]
pub fn conv_backward_input(
    g: &[f32],
    weight: &[f32],
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    dx: &mut [f32],
    scratch: &mut Vec<f64>,
) {
    scratch.clear();
    scratch.resize(ci * h * w, 0.0);
    for oc in 0..co {
        let g_plane = &g[oc * oh * ow..(oc + 1) * oh * ow];
        for ic in 0..ci {
            let w_base = ((oc * ci) + ic) * k * k;
            let dx_plane = &mut scratch[ic * h * w..(ic + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weight[w_base + ky * k + kx] as f64;
                    if wv == 0.0 {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let g_row = &g_plane[oy * ow..(oy + 1) * ow];
                        let dx_row = &mut dx_plane[iy as usize * w..(iy as usize + 1) * w];
                        let (lo, hi) = valid_ox_range(ow, stride, kx, pad, w);
                        for ox in lo..hi {
                            let ix = ox * stride + kx - pad;
                            dx_row[ix] += wv * g_row[ox] as f64;
                        }
                    }
                }
            }
        }
    }
    for (o, v) in dx.iter_mut().zip(scratch.iter()) {
        *o = *v as f32;
    }
}

/// Gradients w.r.t. conv weight and bias, accumulated into f64 buffers.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward_params(
    x: &[f32],
    g: &[f32],
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    dw: &mut [f64],
    db: &mut [f64],
) {
    for oc in 0..co {
        let g_plane = &g[oc * oh * ow..(oc + 1) * oh * ow];
        let mut bias_acc = 0.0f64;
        for gv in g_plane {
            bias_acc += *gv as f64;
        }
        db[oc] += bias_acc;
        for ic in 0..ci {
            let x_plane = &x[ic * h * w..(ic + 1) * h * w];
            let w_base = ((oc * ci) + ic) * k * k;
            for ky in 0..k {
                for kx in 0..k {
                    let mut acc = 0.0f64;
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let g_row = &g_plane[oy * ow..(oy + 1) * ow];
                        let x_row = &x_plane[iy as usize * w..(iy as usize + 1) * w];
                        let (lo, hi) = valid_ox_range(ow, stride, kx, pad, w);
                        for ox in lo..hi {
                            let ix = ox * stride + kx - pad;
                            acc += g_row[ox] as f64 * x_row[ix] as f64;
                        }
                    }
                    dw[w_base + ky * k + kx] += acc;
                }
            }
        }
    }
}

/// out = W x + b with W: [co, ci].
pub fn dense_forward(x: &[f32], weight: &[f32], bias: &[f32], co: usize, ci: usize, out: &mut [f32]) {
    for o in 0..co {
        let row = &weight[o * ci..(o + 1) * ci];
        let mut acc = bias[o] as f64;
        for (wv, xv) in row.iter().zip(x) {
            acc += *wv as f64 * *xv as f64;
        }
        out[o] = acc as f32;
    }
}

pub fn dense_backward_input(g: &[f32], weight: &[f32], co: usize, ci: usize, dx: &mut [f32]) {
    let mut acc = vec![0.0f64; ci];
    for o in 0..co {
        let gv = g[o] as f64;
        if gv == 0.0 {
            continue;
        }
        let row = &weight[o * ci..(o + 1) * ci];
        for (a, wv) in acc.iter_mut().zip(row) {
            *a += gv * *wv as f64;
        }
    }
    for (d, a) in dx.iter_mut().zip(acc) {
        *d = a as f32;
    }
}

pub fn dense_backward_params(x: &[f32], g: &[f32], co: usize, ci: usize, dw: &mut [f64], db: &mut [f64]) {
    for o in 0..co {
        let gv = g[o] as f64;
        db[o] += gv;
        if gv == 0.0 {
            continue;
        }
        let row = &mut dw[o * ci..(o + 1) * ci];
        for (d, xv) in row.iter_mut().zip(x) {
            *d += gv * *xv as f64;
        }
    }
}

pub fn relu_forward(x: &[f32], out: &mut [f32]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o = v.max(0.0);
    }
}

/// Backward through relu using the cached output (grad 0 where output is 0).
pub fn relu_backward(g: &[f32], out: &[f32], dx: &mut [f32]) {
    for i in 0..g.len() {
        dx[i] = if out[i] > 0.0 { g[i] } else { 0.0 };
    }
}

/// Non-overlapping k-by-k max pooling; ties take the first index scanned.
pub fn maxpool_forward(x: &[f32], c: usize, h: usize, w: usize, k: usize, out: &mut [f32]) {
    let oh = h / k;
    let ow = w / k;
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        let out_plane = &mut out[ch * oh * ow..(ch + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f32::NEG_INFINITY;
                for ky in 0..k {
                    for kx in 0..k {
                        let v = plane[(oy * k + ky) * w + ox * k + kx];
                        if v > best {
                            best = v;
                        }
                    }
                }
                out_plane[oy * ow + ox] = best;
            }
        }
    }
}

pub fn maxpool_backward(g: &[f32], x: &[f32], c: usize, h: usize, w: usize, k: usize, dx: &mut [f32]) {
    let oh = h / k;
    let ow = w / k;
    dx.fill(0.0);
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        let g_plane = &g[ch * oh * ow..(ch + 1) * oh * ow];
        let dx_plane = &mut dx[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f32::NEG_INFINITY;
                let mut best_idx = 0;
                for ky in 0..k {
                    for kx in 0..k {
                        let idx = (oy * k + ky) * w + ox * k + kx;
                        let v = plane[idx];
                        if v > best {
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                dx_plane[best_idx] += g_plane[oy * ow + ox];
            }
        }
    }
}
