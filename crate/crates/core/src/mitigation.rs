//! Relevance-guided fine-tuning against a detected shortcut.
//!
//! Each spurious-positive sample contributes a relevance vector `r_i` at the
//! regularized layer, computed from its masked input. The activations of
//! class samples are multiplied by the rectified relevance (their own `r_i`
//! for positives, the mean `r̄` for everybody else in the class) and the ℓ1
//! norm of that product is added to the cross-entropy.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detection::SpuriousPositiveSet;
use crate::error::{Error, Result};
use crate::lrp::{lrp_down_to, relevance_at_layer, DEFAULT_EPS};
use crate::metrics;
use crate::network::{Gradients, LabeledSet, LayerStack, Sgd, PATCHNET_PENULTIMATE};
use crate::synth::{derive_seed, GroupedDataset};
use crate::tensor::{ops, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegMode {
    /// Paired term for positives plus the mean-relevance term for the rest
    /// of the class.
    #[serde(alias = "both")]
    BothTerms,
    #[serde(alias = "positive")]
    PositiveOnly,
    None,
}

impl FromStr for RegMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" | "both-terms" => Ok(RegMode::BothTerms),
            "positive" | "positive-only" => Ok(RegMode::PositiveOnly),
            "none" => Ok(RegMode::None),
            other => Err(Error::Config(format!("unknown regularizer mode {other:?}"))),
        }
    }
}

/// How the regularizer enters the batch loss: summed over the batch, or
/// divided by the batch size like the cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegReduction {
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub alpha: f32,
    pub epochs: usize,
    pub ft_size: usize,
    /// Layer-output indices to regularize.
    pub layers: Vec<usize>,
    pub learning_rate: f32,
    pub batch_size: usize,
    pub momentum: f32,
    pub weight_decay: f32,
    pub seed: u64,
    pub mode: RegMode,
    pub reduction: RegReduction,
    pub eps: f64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            alpha: 0.05,
            epochs: 20,
            ft_size: 1000,
            layers: vec![PATCHNET_PENULTIMATE],
            learning_rate: 0.01,
            batch_size: 32,
            momentum: 0.9,
            weight_decay: 1e-4,
            seed: 0,
            mode: RegMode::BothTerms,
            reduction: RegReduction::Mean,
            eps: DEFAULT_EPS,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be ≥ 0, got {}", self.alpha)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("bad learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::Config("no layers to regularize".into()));
        }
        if self.eps.is_nan() || self.eps < 0.0 {
            return Err(Error::Config(format!("bad lrp eps {}", self.eps)));
        }
        Ok(())
    }

    fn regularizes(&self) -> bool {
        self.mode != RegMode::None && self.alpha > 0.0
    }
}

/// Relevance of the regularized layers for `class_id` on a masked input, one
/// tensor per entry of `layers`.
pub fn spurious_relevance(
    model: &LayerStack<f32>,
    masked: &Tensor<f32>,
    class_id: usize,
    layers: &[usize],
    eps: f64,
) -> Result<Vec<Tensor<f32>>> {
    let lowest = *layers.iter().min().ok_or(Error::EmptySelection)?;
    let trace = model.forward(masked)?;
    let maps = lrp_down_to(model, &trace, class_id, eps, lowest)?;
    layers
        .iter()
        .map(|&l| Ok(relevance_at_layer(&maps, l)?.relevance.clone()))
        .collect()
}

/// Elementwise mean, summed in the given order.
pub fn average_relevance(vectors: &[&Tensor<f32>]) -> Result<Tensor<f32>> {
    let first = vectors.first().ok_or(Error::EmptySelection)?;
    let mut acc = Tensor::<f32>::zeros(first.shape());
    for v in vectors {
        acc.add_assign(v)?;
    }
    acc.scale(1.0 / vectors.len() as f32);
    Ok(acc)
}

/// `f ⊙ ReLU(r)`.
pub fn contribution_embedding(activation: &Tensor<f32>, relevance: &Tensor<f32>) -> Result<Tensor<f32>> {
    if activation.shape() != relevance.shape() {
        return Err(Error::dim(
            "contribution embedding",
            activation.shape(),
            relevance.shape(),
        ));
    }
    let data = activation
        .data()
        .iter()
        .zip(relevance.data())
        .map(|(&f, &r)| f * r.max(0.0))
        .collect();
    Tensor::new(activation.shape().to_vec(), data)
}

pub fn l1(t: &Tensor<f32>) -> f64 {
    t.data().iter().map(|v| v.abs() as f64).sum()
}

/// Per-positive relevance vectors and their mean, for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct SpuriousRelevance {
    pub class_id: usize,
    pub layers: Vec<usize>,
    /// `[positive][layer]`.
    pub per_positive: Vec<Vec<Tensor<f32>>>,
    /// `[layer]`.
    pub mean: Vec<Tensor<f32>>,
}

impl SpuriousRelevance {
    pub fn compute(
        model: &LayerStack<f32>,
        positives: &SpuriousPositiveSet,
        layers: &[usize],
        eps: f64,
    ) -> Result<Self> {
        if positives.is_empty() {
            return Err(Error::EmptySelection);
        }
        let per_positive = positives
            .masked
            .iter()
            .map(|m| spurious_relevance(model, m, positives.class_id, layers, eps))
            .collect::<Result<Vec<_>>>()?;
        let mut state = SpuriousRelevance {
            class_id: positives.class_id,
            layers: layers.to_vec(),
            per_positive,
            mean: Vec::new(),
        };
        state.refresh_mean()?;
        Ok(state)
    }

    /// Recomputes `r_i` for the listed positive indices from the current model.
    pub fn refresh(
        &mut self,
        model: &LayerStack<f32>,
        positives: &SpuriousPositiveSet,
        which: &[usize],
        eps: f64,
    ) -> Result<()> {
        for &p in which {
            let masked = positives.masked.get(p).ok_or(Error::Index {
                what: "positive sample",
                index: p,
                len: positives.len(),
            })?;
            self.per_positive[p] = spurious_relevance(model, masked, self.class_id, &self.layers, eps)?;
        }
        self.refresh_mean()
    }

    pub fn refresh_mean(&mut self) -> Result<()> {
        self.mean = (0..self.layers.len())
            .map(|l| {
                let column: Vec<&Tensor<f32>> = self.per_positive.iter().map(|v| &v[l]).collect();
                average_relevance(&column)
            })
            .collect::<Result<_>>()?;
        Ok(())
    }
}

/// One batch member as seen by the regularizer.
#[derive(Debug, Clone, Copy)]
pub struct RegItem<'a> {
    pub y: usize,
    /// Index into the positive set when the sample is a spurious positive.
    pub positive: Option<usize>,
    /// Activations at the regularized layers, in `SpuriousRelevance::layers`
    /// order.
    pub activations: &'a [Tensor<f32>],
}

/// The two sums of the regularizer, kept apart.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RegTerms {
    pub positive: f64,
    pub average: f64,
}

impl RegTerms {
    pub fn value(&self, mode: RegMode) -> f64 {
        match mode {
            RegMode::BothTerms => self.positive + self.average,
            RegMode::PositiveOnly => self.positive,
            RegMode::None => 0.0,
        }
    }
}

/// Whether the item is a spurious positive, with the relevance vectors that
/// weight its activations.
type Weighting<'s> = (bool, &'s [Tensor<f32>]);

/// Relevance vectors that weight `item`'s activations, if any.
fn relevance_for<'s>(item: &RegItem<'_>, state: &'s SpuriousRelevance) -> Result<Option<Weighting<'s>>> {
    if item.y != state.class_id {
        return Ok(None);
    }
    match item.positive {
        Some(p) => {
            let r = state.per_positive.get(p).ok_or(Error::Index {
                what: "positive relevance",
                index: p,
                len: state.per_positive.len(),
            })?;
            Ok(Some((true, r)))
        }
        None => Ok(Some((false, &state.mean))),
    }
}

pub fn regularizer_terms(items: &[RegItem<'_>], state: &SpuriousRelevance) -> Result<RegTerms> {
    let mut terms = RegTerms::default();
    for item in items {
        let Some((is_positive, rel)) = relevance_for(item, state)? else {
            continue;
        };
        if item.activations.len() != rel.len() {
            return Err(Error::dim(
                "regularizer layers",
                &[item.activations.len()],
                &[rel.len()],
            ));
        }
        for (f, r) in item.activations.iter().zip(rel) {
            let norm = l1(&contribution_embedding(f, r)?);
            if is_positive {
                terms.positive += norm;
            } else {
                terms.average += norm;
            }
        }
    }
    Ok(terms)
}

pub fn regularizer(items: &[RegItem<'_>], state: &SpuriousRelevance, mode: RegMode) -> Result<f64> {
    Ok(regularizer_terms(items, state)?.value(mode))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FtSample {
    pub sample_id: usize,
    pub y: usize,
    pub image: Tensor<f32>,
    pub positive: Option<usize>,
}

/// Class-balanced fine-tuning set holding the spurious positives.
#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneSet {
    pub samples: Vec<FtSample>,
    pub positives: SpuriousPositiveSet,
    pub num_classes: usize,
}

impl LabeledSet for FinetuneSet {
    fn len(&self) -> usize {
        self.samples.len()
    }
    fn input(&self, i: usize) -> &Tensor<f32> {
        &self.samples[i].image
    }
    fn label(&self, i: usize) -> usize {
        self.samples[i].y
    }
}

impl FinetuneSet {
    pub fn with_positives(&self, positives: SpuriousPositiveSet) -> Result<FinetuneSet> {
        if positives.sample_ids != self.positives.sample_ids {
            return Err(Error::Config("replacement positive set has different samples".into()));
        }
        Ok(FinetuneSet {
            positives,
            ..self.clone()
        })
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for s in &self.samples {
            counts[s.y] += 1;
        }
        counts
    }
}

/// Number of extra samples drawn per class: `ft_size / K` minus the
/// positives already present in that class.
pub fn draw_counts(ft_size: usize, num_classes: usize, positive_class: usize, positives: usize) -> Result<Vec<usize>> {
    let per_class = ft_size / num_classes;
    if positives > per_class {
        return Err(Error::Config(format!(
            "{positives} positives exceed the per-class fine-tuning budget {per_class}"
        )));
    }
    Ok((0..num_classes)
        .map(|y| {
            if y == positive_class {
                per_class - positives
            } else {
                per_class
            }
        })
        .collect())
}

pub fn build_finetune_set(
    train: &GroupedDataset,
    positives: &SpuriousPositiveSet,
    ft_size: usize,
    seed: u64,
) -> Result<FinetuneSet> {
    let k = train.spec.num_classes;
    let draws = draw_counts(ft_size, k, positives.class_id, positives.len())?;
    let mut samples = Vec::with_capacity(ft_size);
    for (p, &id) in positives.sample_ids.iter().enumerate() {
        let s = train.by_id(id).ok_or(Error::UnknownIds(vec![id]))?;
        if s.y != positives.class_id {
            return Err(Error::Config(format!(
                "positive {id} is not of class {}",
                positives.class_id
            )));
        }
        samples.push(FtSample {
            sample_id: id,
            y: s.y,
            image: s.image.clone(),
            positive: Some(p),
        });
    }
    for (y, &n) in draws.iter().enumerate() {
        let mut pool: Vec<usize> = train
            .class_ids(y)
            .into_iter()
            .filter(|id| !positives.sample_ids.contains(id))
            .collect();
        if pool.len() < n {
            return Err(Error::Config(format!(
                "class {y} has {} samples available, fine-tuning set needs {n}",
                pool.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("ft/draw/{y}")));
        pool.shuffle(&mut rng);
        for &id in &pool[..n] {
            let s = train.by_id(id).expect("pool ids come from the dataset");
            samples.push(FtSample {
                sample_id: id,
                y,
                image: s.image.clone(),
                positive: None,
            });
        }
    }
    Ok(FinetuneSet {
        samples,
        positives: positives.clone(),
        num_classes: k,
    })
}

/// Per-class shuffles interleaved round-robin, then cut into batches, so
/// every batch of a balanced set carries each class in equal share.
pub fn balanced_batches(
    labels: &[usize],
    num_classes: usize,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        per_class[y].push(i);
    }
    for c in &mut per_class {
        c.shuffle(rng);
    }
    let longest = per_class.iter().map(Vec::len).max().unwrap_or(0);
    let mut order = Vec::with_capacity(labels.len());
    for j in 0..longest {
        for c in &per_class {
            if let Some(&i) = c.get(j) {
                order.push(i);
            }
        }
    }
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochCurve {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch.
    pub ce: f64,
    /// Mean per-batch regularizer value (under the configured mode).
    pub reg: f64,
    /// Mean `‖f ⊙ ReLU(r̄)‖₁` over the epoch's class samples.
    pub zbar_l1: f64,
    pub wga_val: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneOutcome {
    pub curves: Vec<EpochCurve>,
    pub relevance: SpuriousRelevance,
}

struct BatchStats {
    ce: f64,
    reg: f64,
    zbar: f64,
    zbar_n: usize,
}

fn batch_step(
    model: &LayerStack<f32>,
    set: &FinetuneSet,
    state: &SpuriousRelevance,
    cfg: &FinetuneConfig,
    batch: &[usize],
) -> Result<(BatchStats, Gradients<f32>)> {
    let inv = 1.0 / batch.len() as f32;
    let reg_scale = match cfg.reduction {
        RegReduction::Sum => cfg.alpha,
        RegReduction::Mean => cfg.alpha * inv,
    };
    let mut grads = Gradients::zeros_like(model);
    let mut terms = RegTerms::default();
    let mut stats = BatchStats {
        ce: 0.0,
        reg: 0.0,
        zbar: 0.0,
        zbar_n: 0,
    };
    for &i in batch {
        let sample = &set.samples[i];
        let trace = model.forward(&sample.image)?;
        stats.ce += ops::softmax_ce(trace.logits(), sample.y)? as f64;
        let mut dlogits = ops::softmax_ce_backward(trace.logits(), sample.y)?;
        dlogits.scale(inv);

        let activations: Vec<Tensor<f32>> = cfg.layers.iter().map(|&l| trace.activations[l].clone()).collect();
        let item = RegItem {
            y: sample.y,
            positive: sample.positive,
            activations: &activations,
        };
        let t = regularizer_terms(&[item], state)?;
        terms.positive += t.positive;
        terms.average += t.average;
        if sample.y == state.class_id {
            for (f, r) in activations.iter().zip(&state.mean) {
                stats.zbar += l1(&contribution_embedding(f, r)?);
            }
            stats.zbar_n += 1;
        }

        let mut injections = Vec::new();
        if cfg.regularizes() {
            let weighted = match (sample.positive, cfg.mode) {
                (Some(_), RegMode::BothTerms | RegMode::PositiveOnly) => relevance_for(&item, state)?,
                (None, RegMode::BothTerms) => relevance_for(&item, state)?,
                _ => None,
            };
            if let Some((_, rel)) = weighted {
                for ((&l, f), r) in cfg.layers.iter().zip(&activations).zip(rel) {
                    // d‖f ⊙ ReLU(r)‖₁ / df = sign(f) ⊙ ReLU(r)
                    let g: Vec<f32> = f
                        .data()
                        .iter()
                        .zip(r.data())
                        .map(|(&fv, &rv)| {
                            let sign = if fv > 0.0 {
                                1.0
                            } else if fv < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                            reg_scale * sign * rv.max(0.0)
                        })
                        .collect();
                    injections.push((l, Tensor::new(f.shape().to_vec(), g)?));
                }
            }
        }
        let (g, _) = model.backward(&trace, &dlogits, &injections)?;
        grads.add_assign(&g)?;
    }
    stats.ce /= batch.len() as f64;
    stats.reg = terms.value(cfg.mode);
    Ok((stats, grads))
}

/// Fine-tunes `model` in place on `set`. `val` is evaluated after every
/// epoch when given.
pub fn finetune_score(
    model: &mut LayerStack<f32>,
    set: &FinetuneSet,
    cfg: &FinetuneConfig,
    val: Option<&GroupedDataset>,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if set.samples.is_empty() {
        return Err(Error::Config("fine-tuning set is empty".into()));
    }
    let positives = &set.positives;
    let mut state = SpuriousRelevance::compute(model, positives, &cfg.layers, cfg.eps)?;
    let mut sgd = Sgd::new(cfg.learning_rate, cfg.momentum, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "ft/batches"));
    let labels: Vec<usize> = set.samples.iter().map(|s| s.y).collect();
    let mut curves = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let batches = balanced_batches(&labels, set.num_classes, cfg.batch_size, &mut rng);
        let (mut ce, mut reg, mut zbar, mut zbar_n) = (0.0, 0.0, 0.0, 0usize);
        for (it, batch) in batches.iter().enumerate() {
            let in_batch: Vec<usize> = batch.iter().filter_map(|&i| set.samples[i].positive).collect();
            if !in_batch.is_empty() {
                state.refresh(model, positives, &in_batch, cfg.eps)?;
            }
            let (stats, grads) = batch_step(model, set, &state, cfg, batch)?;
            if !stats.ce.is_finite() || !stats.reg.is_finite() || !grads.is_finite() {
                return Err(Error::numeric(format!(
                    "fine-tuning loss at epoch {epoch}, iteration {it}"
                )));
            }
            sgd.step(model, &grads);
            ce += stats.ce * batch.len() as f64;
            reg += stats.reg;
            zbar += stats.zbar;
            zbar_n += stats.zbar_n;
        }
        curves.push(EpochCurve {
            epoch,
            ce: ce / set.samples.len() as f64,
            reg: reg / batches.len() as f64,
            zbar_l1: if zbar_n > 0 { zbar / zbar_n as f64 } else { 0.0 },
            wga_val: match val {
                Some(v) => Some(metrics::evaluate(model, v)?.wga),
                None => None,
            },
        });
    }
    Ok(FinetuneOutcome {
        curves,
        relevance: state,
    })
}

/// As [`finetune_score`], with masked inputs built from ground-truth masks.
pub fn finetune_with_gt_masks(
    model: &mut LayerStack<f32>,
    set: &FinetuneSet,
    train: &GroupedDataset,
    cfg: &FinetuneConfig,
    val: Option<&GroupedDataset>,
) -> Result<FinetuneOutcome> {
    let gt = set.with_positives(set.positives.with_gt_masks(train)?)?;
    finetune_score(model, &gt, cfg, val)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f32]) -> Tensor<f32> {
        Tensor::from_vec(v.to_vec())
    }

    #[test]
    fn embedding_examples() {
        let z = contribution_embedding(&t(&[2., 0., 3.]), &t(&[-1., 4., 0.5])).unwrap();
        assert_eq!(z.data(), &[0., 0., 1.5]);
        assert_eq!(l1(&z), 1.5);
        let z = contribution_embedding(&t(&[2., 1., 3.]), &t(&[-1., -4., -0.5])).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        assert!(contribution_embedding(&t(&[1.]), &t(&[1., 2.])).is_err());
    }

    #[test]
    fn average_examples() {
        let a = t(&[1., 0.]);
        let b = t(&[0., 1.]);
        assert_eq!(average_relevance(&[&a]).unwrap(), a);
        assert_eq!(average_relevance(&[&a, &b]).unwrap().data(), &[0.5, 0.5]);
        assert!(matches!(average_relevance(&[]), Err(Error::EmptySelection)));
    }

    fn state() -> SpuriousRelevance {
        SpuriousRelevance {
            class_id: 0,
            layers: vec![6],
            per_positive: vec![vec![t(&[1., 0.])], vec![t(&[0., 1.])]],
            mean: vec![t(&[0.5, 0.5])],
        }
    }

    #[test]
    fn regularizer_examples() {
        let s = state();
        let a1 = [t(&[1.5, 7.])];
        let a2 = [t(&[9., 2.5])];
        let a3 = [t(&[1., 1.])];
        let a4 = [t(&[100., 100.])];
        let items = [
            RegItem {
                y: 0,
                positive: Some(0),
                activations: &a1,
            },
            RegItem {
                y: 0,
                positive: Some(1),
                activations: &a2,
            },
            RegItem {
                y: 0,
                positive: None,
                activations: &a3,
            },
            RegItem {
                y: 1,
                positive: None,
                activations: &a4,
            },
        ];
        assert_eq!(regularizer(&items, &s, RegMode::BothTerms).unwrap(), 5.0);
        assert_eq!(regularizer(&items, &s, RegMode::PositiveOnly).unwrap(), 4.0);
        assert_eq!(regularizer(&items, &s, RegMode::None).unwrap(), 0.0);
        assert_eq!(regularizer(&items[3..], &s, RegMode::BothTerms).unwrap(), 0.0);
        let missing = [RegItem {
            y: 0,
            positive: Some(5),
            activations: &a1,
        }];
        assert!(regularizer(&missing, &s, RegMode::BothTerms).is_err());
    }

    #[test]
    fn draw_count_examples() {
        assert_eq!(draw_counts(1000, 2, 0, 50).unwrap(), vec![450, 500]);
        assert_eq!(draw_counts(1000, 2, 0, 500).unwrap(), vec![0, 500]);
        assert_eq!(draw_counts(300, 2, 0, 25).unwrap(), vec![125, 150]);
        assert!(draw_counts(300, 2, 0, 151).is_err());
    }

    #[test]
    fn batches_are_class_balanced() {
        let labels: Vec<usize> = (0..64).map(|i| i % 2).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batches = balanced_batches(&labels, 2, 8, &mut rng);
        assert_eq!(batches.len(), 8);
        for b in &batches {
            assert_eq!(b.iter().filter(|&&i| labels[i] == 0).count(), 4);
        }
        let mut all: Vec<usize> = batches.concat();
        all.sort();
        assert_eq!(all, (0..64).collect::<Vec<_>>());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("both".parse::<RegMode>().unwrap(), RegMode::BothTerms);
        assert_eq!("positive-only".parse::<RegMode>().unwrap(), RegMode::PositiveOnly);
        assert!("x".parse::<RegMode>().is_err());
    }
}
