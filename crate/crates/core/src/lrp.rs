//! Layer-wise relevance propagation.
//!
//! Relevance starts as the target logit on its output neuron and flows back
//! one layer at a time. Every linear-like layer (dense, conv, both pooling
//! kinds) splits the relevance of each output neuron over its inputs in
//! proportion to their contributions `a_mn`, with `a_n = Σ_m a_mn` taken over
//! incoming neurons only. Bias terms receive no relevance. When
//! `|a_n| ≤ ε` the neuron's relevance is absorbed (all messages are zero),
//! otherwise the denominator is stabilized to `a_n + ε·sign(a_n)`.

use crate::error::{Error, Result};
use crate::network::{ForwardTrace, LayerSpec, LayerStack};
use crate::tensor::{Scalar, Tensor};

/// Default stabilizer.
pub const DEFAULT_EPS: f64 = 1e-6;

/// Relevance of every neuron at one layer-output index.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMap<T = f32> {
    /// Layer-output index (0 = input, L = logits).
    pub layer: usize,
    pub relevance: Tensor<T>,
    pub target_class: usize,
    pub sample_id: Option<usize>,
    pub eps: f64,
}

/// Messages `R_{m←n}` from one neuron to its inputs.
pub fn lrp_linear_messages<T: Scalar>(contribs: &[T], relevance: T, eps: T) -> Vec<T> {
    let mut out = vec![T::zero(); contribs.len()];
    accumulate_messages(contribs, relevance, eps, &mut out);
    out
}

/// Adds the messages of one neuron into `acc` (same length as `contribs`).
/// Returns the stabilized denominator, or `None` when absorbed.
fn accumulate_messages<T: Scalar>(contribs: &[T], relevance: T, eps: T, acc: &mut [T]) -> Option<T> {
    let mut a_n = T::zero();
    for &a in contribs {
        a_n += a;
    }
    if a_n.abs() <= eps {
        return None;
    }
    let denom = a_n + eps * a_n.signum();
    for (r, &a) in acc.iter_mut().zip(contribs) {
        *r += a / denom * relevance;
    }
    Some(denom)
}

/// Runs relevance propagation for `target_class` and returns one map per
/// layer-output index, ordered from the input (index 0) to the logits.
pub fn lrp_backward<T: Scalar>(
    model: &LayerStack<T>,
    trace: &ForwardTrace<T>,
    target_class: usize,
    eps: f64,
) -> Result<Vec<RelevanceMap<T>>> {
    lrp_down_to(model, trace, target_class, eps, 0)
}

/// Like [`lrp_backward`] but stops once layer-output index `lowest` is
/// reached; the result holds maps `lowest..=L` in that order.
pub fn lrp_down_to<T: Scalar>(
    model: &LayerStack<T>,
    trace: &ForwardTrace<T>,
    target_class: usize,
    eps: f64,
    lowest: usize,
) -> Result<Vec<RelevanceMap<T>>> {
    if trace.len() != model.layers.len() {
        return Err(Error::dim("lrp trace", &[trace.len()], &[model.layers.len()]));
    }
    let k = model.num_classes();
    if target_class >= k {
        return Err(Error::Index {
            what: "target class",
            index: target_class,
            len: k,
        });
    }
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::Config(format!("lrp eps must be ≥ 0, got {eps}")));
    }
    let eps_t = T::from_f64(eps);
    let logits = trace.logits();
    let mut r = Tensor::<T>::zeros(logits.shape());
    r.data_mut()[target_class] = logits.data()[target_class];

    let n_layers = model.layers.len();
    if lowest > n_layers {
        return Err(Error::Index {
            what: "relevance layer",
            index: lowest,
            len: n_layers + 1,
        });
    }
    let mut maps = Vec::with_capacity(n_layers + 1 - lowest);
    maps.push(r.clone());
    for i in (lowest..n_layers).rev() {
        let layer = &model.layers[i];
        let x = trace.layer_input(i);
        let y = trace.layer_output(i);
        if y.shape() != r.shape() {
            return Err(Error::dim("lrp layer", y.shape(), r.shape()));
        }
        r = match layer.spec {
            LayerSpec::Dense { inputs, outputs, .. } => {
                dense_relevance(x, &layer.params[0], &r, inputs, outputs, eps_t)?
            }
            LayerSpec::Conv { .. } => conv_relevance(x, &layer.params[0], &r, eps_t)?,
            LayerSpec::Relu => {
                let data = y
                    .data()
                    .iter()
                    .zip(r.data())
                    .map(|(&out, &rv)| if out > T::zero() { rv } else { T::zero() })
                    .collect();
                Tensor::new(x.shape().to_vec(), data)?
            }
            LayerSpec::AvgPool2 => avg_pool_relevance(x, &r, eps_t)?,
            LayerSpec::GlobalAvgPool => global_pool_relevance(x, &r, eps_t)?,
            LayerSpec::Flatten => r.reshape(x.shape())?,
        };
        r.ensure_finite("relevance propagation")?;
        maps.push(r.clone());
    }
    maps.reverse();
    Ok(maps
        .into_iter()
        .enumerate()
        .map(|(i, relevance)| RelevanceMap {
            layer: lowest + i,
            relevance,
            target_class,
            sample_id: None,
            eps,
        })
        .collect())
}

fn dense_relevance<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    r: &Tensor<T>,
    inputs: usize,
    outputs: usize,
    eps: T,
) -> Result<Tensor<T>> {
    let (xd, wd) = (x.data(), w.data());
    let mut out = vec![T::zero(); inputs];
    let mut contribs = vec![T::zero(); inputs];
    for n in 0..outputs {
        for m in 0..inputs {
            contribs[m] = xd[m] * wd[m * outputs + n];
        }
        accumulate_messages(&contribs, r.data()[n], eps, &mut out);
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Unrolls every output window and applies the message rule per neuron.
fn conv_relevance<T: Scalar>(x: &Tensor<T>, k: &Tensor<T>, r: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (f, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let (xd, kd, rd) = (x.data(), k.data(), r.data());
    let window = c * kh * kw;
    let mut contribs = vec![T::zero(); window];
    let mut msgs = vec![T::zero(); window];
    let mut out = vec![T::zero(); c * h * w];
    for fi in 0..f {
        let kbase = fi * window;
        for oy in 0..oh {
            for ox in 0..ow {
                let rv = rd[(fi * oh + oy) * ow + ox];
                let mut j = 0;
                for ci in 0..c {
                    for ky in 0..kh {
                        let xrow = (ci * h + oy + ky) * w + ox;
                        for kx in 0..kw {
                            contribs[j] = xd[xrow + kx] * kd[kbase + j];
                            j += 1;
                        }
                    }
                }
                msgs.iter_mut().for_each(|m| *m = T::zero());
                if accumulate_messages(&contribs, rv, eps, &mut msgs).is_none() {
                    continue;
                }
                let mut j = 0;
                for ci in 0..c {
                    for ky in 0..kh {
                        let xrow = (ci * h + oy + ky) * w + ox;
                        for kx in 0..kw {
                            out[xrow + kx] += msgs[j];
                            j += 1;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

fn avg_pool_relevance<T: Scalar>(x: &Tensor<T>, r: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::from_f64(0.25);
    let xd = x.data();
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = (ch * h + 2 * oy) * w + 2 * ox;
                let idx = [base, base + 1, base + w, base + w + 1];
                let contribs = idx.map(|i| xd[i] * quarter);
                let mut msgs = [T::zero(); 4];
                accumulate_messages(&contribs, r.data()[(ch * oh + oy) * ow + ox], eps, &mut msgs);
                for (&i, &m) in idx.iter().zip(&msgs) {
                    out[i] += m;
                }
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

fn global_pool_relevance<T: Scalar>(x: &Tensor<T>, r: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    let c = x.shape()[0];
    let plane = x.len() / c;
    let inv = T::one() / T::from_f64(plane as f64);
    let mut out = vec![T::zero(); x.len()];
    let mut contribs = vec![T::zero(); plane];
    for ch in 0..c {
        let src = &x.data()[ch * plane..(ch + 1) * plane];
        for (a, &v) in contribs.iter_mut().zip(src) {
            *a = v * inv;
        }
        accumulate_messages(&contribs, r.data()[ch], eps, &mut out[ch * plane..(ch + 1) * plane]);
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// The cached map at layer-output index `layer`.
pub fn relevance_at_layer<T: Scalar>(maps: &[RelevanceMap<T>], layer: usize) -> Result<&RelevanceMap<T>> {
    maps.iter().find(|m| m.layer == layer).ok_or(Error::Index {
        what: "relevance layer",
        index: layer,
        len: maps.len(),
    })
}

/// Channel-summed input relevance at image resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
    pub min: f32,
    pub max: f32,
}

impl Heatmap {
    pub fn from_values(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::dim("heatmap", &[values.len()], &[height, width]));
        }
        let min = values.iter().copied().fold(f32::INFINITY, f32::min);
        let max = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        Ok(Heatmap {
            height,
            width,
            values,
            min,
            max,
        })
    }

    pub fn max_abs(&self) -> f32 {
        self.min.abs().max(self.max.abs())
    }

    /// Fraction of the positive relevance mass that falls on `mask` pixels.
    pub fn positive_mass_fraction(&self, mask: &[u8]) -> f64 {
        let mut inside = 0.0f64;
        let mut total = 0.0f64;
        for (&v, &m) in self.values.iter().zip(mask) {
            if v > 0.0 {
                total += v as f64;
                if m != 0 {
                    inside += v as f64;
                }
            }
        }
        if total > 0.0 {
            inside / total
        } else {
            0.0
        }
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::new(vec![self.height, self.width], self.values.clone()).expect("shape checked")
    }
}

pub fn input_heatmap<T: Scalar>(maps: &[RelevanceMap<T>]) -> Result<Heatmap> {
    let input = relevance_at_layer(maps, 0)?;
    let shape = input.relevance.shape();
    if shape.len() != 3 {
        return Err(Error::dim("input heatmap", shape, &[0, 0, 0]));
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let data = input.relevance.data();
    let mut values = vec![0.0f32; h * w];
    for ch in 0..c {
        for (v, &r) in values.iter_mut().zip(&data[ch * h * w..(ch + 1) * h * w]) {
            *v += r.as_f64() as f32;
        }
    }
    Heatmap::from_values(h, w, values)
}
