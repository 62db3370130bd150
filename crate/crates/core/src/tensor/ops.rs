//! Reference kernels. Each forward op has a `*_backward` companion.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

fn expect_rank<T: Scalar>(op: &'static str, t: &Tensor<T>, rank: usize) -> Result<()> {
    if t.shape().len() != rank {
        return Err(Error::dim(op, t.shape(), &vec![0; rank]));
    }
    Ok(())
}

/// `a[r×k] · b[k×c]`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::dim("matmul", a.shape(), b.shape()));
    }
    let (r, k, c) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![T::zero(); r * c];
    for i in 0..r {
        let row = &mut out[i * c..(i + 1) * c];
        for p in 0..k {
            let av = ad[i * k + p];
            let brow = &bd[p * c..(p + 1) * c];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![r, c], out)
}

/// Returns `(d a, d b)` for `out = a · b`.
pub fn matmul_backward<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, dout: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let (r, k) = (a.shape()[0], a.shape()[1]);
    let c = b.shape()[1];
    if dout.shape() != [r, c] {
        return Err(Error::dim("matmul_backward", dout.shape(), &[r, c]));
    }
    let (ad, bd, gd) = (a.data(), b.data(), dout.data());
    let mut da = vec![T::zero(); r * k];
    let mut db = vec![T::zero(); k * c];
    for i in 0..r {
        let grow = &gd[i * c..(i + 1) * c];
        for p in 0..k {
            let brow = &bd[p * c..(p + 1) * c];
            let mut acc = T::zero();
            for (&g, &bv) in grow.iter().zip(brow) {
                acc += g * bv;
            }
            da[i * k + p] = acc;
            let av = ad[i * k + p];
            for (d, &g) in db[p * c..(p + 1) * c].iter_mut().zip(grow) {
                *d += av * g;
            }
        }
    }
    Ok((Tensor::new(vec![r, k], da)?, Tensor::new(vec![k, c], db)?))
}

pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub f: usize,
    pub kh: usize,
    pub kw: usize,
    pub oh: usize,
    pub ow: usize,
    pub stride: usize,
}

pub(crate) fn conv_geometry<T: Scalar>(x: &Tensor<T>, k: &Tensor<T>, stride: usize) -> Result<ConvGeom> {
    expect_rank("conv2d", x, 3)?;
    expect_rank("conv2d", k, 4)?;
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (f, kc, kh, kw) = (k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]);
    if kc != c || kh > h || kw > w || stride == 0 {
        return Err(Error::dim("conv2d", x.shape(), k.shape()));
    }
    Ok(ConvGeom {
        c,
        h,
        w,
        f,
        kh,
        kw,
        oh: (h - kh) / stride + 1,
        ow: (w - kw) / stride + 1,
        stride,
    })
}

/// Valid cross-correlation of `x[C×H×W]` with `k[F×C×kh×kw]`.
pub fn conv2d<T: Scalar>(x: &Tensor<T>, k: &Tensor<T>, stride: usize) -> Result<Tensor<T>> {
    let g = conv_geometry(x, k, stride)?;
    let (xd, kd) = (x.data(), k.data());
    let mut out = vec![T::zero(); g.f * g.oh * g.ow];
    for f in 0..g.f {
        let plane = &mut out[f * g.oh * g.ow..(f + 1) * g.oh * g.ow];
        for c in 0..g.c {
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let wv = kd[((f * g.c + c) * g.kh + ky) * g.kw + kx];
                    for oy in 0..g.oh {
                        let xrow = (c * g.h + oy * g.stride + ky) * g.w + kx;
                        let orow = &mut plane[oy * g.ow..(oy + 1) * g.ow];
                        if g.stride == 1 {
                            for (o, &xv) in orow.iter_mut().zip(&xd[xrow..xrow + g.ow]) {
                                *o += wv * xv;
                            }
                        } else {
                            for (ox, o) in orow.iter_mut().enumerate() {
                                *o += wv * xd[xrow + ox * g.stride];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![g.f, g.oh, g.ow], out)
}

/// Gradient of `conv2d` with respect to its input only.
pub fn conv2d_backward_input<T: Scalar>(
    x_shape: &[usize],
    k: &Tensor<T>,
    stride: usize,
    dout: &Tensor<T>,
) -> Result<Tensor<T>> {
    let probe = Tensor::<T>::zeros(x_shape);
    let g = conv_geometry(&probe, k, stride)?;
    if dout.shape() != [g.f, g.oh, g.ow] {
        return Err(Error::dim("conv2d_backward", dout.shape(), &[g.f, g.oh, g.ow]));
    }
    let (kd, gd) = (k.data(), dout.data());
    let mut dx = vec![T::zero(); g.c * g.h * g.w];
    for f in 0..g.f {
        let plane = &gd[f * g.oh * g.ow..(f + 1) * g.oh * g.ow];
        for c in 0..g.c {
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let wv = kd[((f * g.c + c) * g.kh + ky) * g.kw + kx];
                    for oy in 0..g.oh {
                        let xrow = (c * g.h + oy * g.stride + ky) * g.w + kx;
                        let grow = &plane[oy * g.ow..(oy + 1) * g.ow];
                        if g.stride == 1 {
                            for (d, &gv) in dx[xrow..xrow + g.ow].iter_mut().zip(grow) {
                                *d += wv * gv;
                            }
                        } else {
                            for (ox, &gv) in grow.iter().enumerate() {
                                dx[xrow + ox * g.stride] += wv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(x_shape.to_vec(), dx)
}

/// Gradient of `conv2d` with respect to the kernel only.
pub fn conv2d_backward_kernel<T: Scalar>(
    x: &Tensor<T>,
    k_shape: &[usize],
    stride: usize,
    dout: &Tensor<T>,
) -> Result<Tensor<T>> {
    let probe = Tensor::<T>::zeros(k_shape);
    let g = conv_geometry(x, &probe, stride)?;
    if dout.shape() != [g.f, g.oh, g.ow] {
        return Err(Error::dim("conv2d_backward", dout.shape(), &[g.f, g.oh, g.ow]));
    }
    let (xd, gd) = (x.data(), dout.data());
    let mut dk = vec![T::zero(); g.f * g.c * g.kh * g.kw];
    for f in 0..g.f {
        let plane = &gd[f * g.oh * g.ow..(f + 1) * g.oh * g.ow];
        for c in 0..g.c {
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let mut acc = T::zero();
                    for oy in 0..g.oh {
                        let xrow = (c * g.h + oy * g.stride + ky) * g.w + kx;
                        let grow = &plane[oy * g.ow..(oy + 1) * g.ow];
                        if g.stride == 1 {
                            for (&xv, &gv) in xd[xrow..xrow + g.ow].iter().zip(grow) {
                                acc += xv * gv;
                            }
                        } else {
                            for (ox, &gv) in grow.iter().enumerate() {
                                acc += xd[xrow + ox * g.stride] * gv;
                            }
                        }
                    }
                    dk[((f * g.c + c) * g.kh + ky) * g.kw + kx] = acc;
                }
            }
        }
    }
    Tensor::new(k_shape.to_vec(), dk)
}

/// Returns `(d x, d k)` for `out = conv2d(x, k, stride)`.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    stride: usize,
    dout: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    Ok((
        conv2d_backward_input(x.shape(), k, stride, dout)?,
        conv2d_backward_kernel(x, k.shape(), stride, dout)?,
    ))
}

/// Adds `b[F]` to every spatial position of channel `F` of `x[F×...]`.
pub fn add_channel_bias<T: Scalar>(x: &mut Tensor<T>, b: &Tensor<T>) -> Result<()> {
    let f = x.shape()[0];
    if b.shape() != [f] {
        return Err(Error::dim("add_channel_bias", x.shape(), b.shape()));
    }
    let plane = x.len() / f;
    for (ch, chunk) in x.data_mut().chunks_mut(plane).enumerate() {
        let bv = b.data()[ch];
        for v in chunk {
            *v += bv;
        }
    }
    Ok(())
}

pub fn add_channel_bias_backward<T: Scalar>(dout: &Tensor<T>) -> Tensor<T> {
    let f = dout.shape()[0];
    let plane = dout.len() / f;
    Tensor::from_vec(dout.data().chunks(plane).map(|c| c.iter().copied().sum()).collect())
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_backward<T: Scalar>(x: &Tensor<T>, dout: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != dout.shape() {
        return Err(Error::dim("relu_backward", x.shape(), dout.shape()));
    }
    let data = x
        .data()
        .iter()
        .zip(dout.data())
        .map(|(&xv, &g)| if xv > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// 2×2 average pooling with stride 2; odd trailing rows/columns are dropped.
pub fn avg_pool2<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    expect_rank("avg_pool2", x, 3)?;
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if h < 2 || w < 2 {
        return Err(Error::dim("avg_pool2", x.shape(), &[c, 2, 2]));
    }
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::from_f64(0.25);
    let xd = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = (ch * h + 2 * oy) * w + 2 * ox;
                let s = xd[base] + xd[base + 1] + xd[base + w] + xd[base + w + 1];
                out.push(s * quarter);
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

pub fn avg_pool2_backward<T: Scalar>(x_shape: &[usize], dout: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = (x_shape[0], x_shape[1], x_shape[2]);
    let (oh, ow) = (h / 2, w / 2);
    if dout.shape() != [c, oh, ow] {
        return Err(Error::dim("avg_pool2_backward", dout.shape(), &[c, oh, ow]));
    }
    let quarter = T::from_f64(0.25);
    let mut dx = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = dout.data()[(ch * oh + oy) * ow + ox] * quarter;
                let base = (ch * h + 2 * oy) * w + 2 * ox;
                for off in [0, 1, w, w + 1] {
                    dx[base + off] = g;
                }
            }
        }
    }
    Tensor::new(x_shape.to_vec(), dx)
}

/// Mean over spatial dims: `[C×H×W] → [C]`.
pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    expect_rank("global_avg_pool", x, 3)?;
    let c = x.shape()[0];
    let plane = x.len() / c;
    let inv = T::one() / T::from_f64(plane as f64);
    Ok(Tensor::from_vec(
        x.data()
            .chunks(plane)
            .map(|p| p.iter().copied().sum::<T>() * inv)
            .collect(),
    ))
}

pub fn global_avg_pool_backward<T: Scalar>(x_shape: &[usize], dout: &Tensor<T>) -> Result<Tensor<T>> {
    let c = x_shape[0];
    if dout.shape() != [c] {
        return Err(Error::dim("global_avg_pool_backward", dout.shape(), &[c]));
    }
    let plane: usize = x_shape[1..].iter().product();
    let inv = T::one() / T::from_f64(plane as f64);
    let mut dx = Vec::with_capacity(c * plane);
    for &g in dout.data() {
        dx.extend(std::iter::repeat_n(g * inv, plane));
    }
    Tensor::new(x_shape.to_vec(), dx)
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let max = logits.data().iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.data().iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Tensor::from_vec(exps.into_iter().map(|e| e / total).collect())
}

/// Cross-entropy of `softmax(logits)` against `label`.
pub fn softmax_ce<T: Scalar>(logits: &Tensor<T>, label: usize) -> Result<T> {
    let k = logits.len();
    if label >= k {
        return Err(Error::Index {
            what: "class label",
            index: label,
            len: k,
        });
    }
    let max = logits.data().iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.data().iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
    Ok(lse - logits.data()[label])
}

pub fn softmax_ce_backward<T: Scalar>(logits: &Tensor<T>, label: usize) -> Result<Tensor<T>> {
    if label >= logits.len() {
        return Err(Error::Index {
            what: "class label",
            index: label,
            len: logits.len(),
        });
    }
    let mut p = softmax(logits);
    p.data_mut()[label] = p.data()[label] - T::one();
    Ok(p)
}
