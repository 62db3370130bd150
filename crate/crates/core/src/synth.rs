//! Synthetic grouped shortcut datasets.
//!
//! Each image shows a faint class shape (disc, square, ...) on a noisy dark
//! background. With probability `p(s=1|y)` a saturated colour patch is stamped
//! into a fixed corner; the patch pixels form the sample's ground-truth
//! spurious mask. Groups are `(y, s)`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::network::{LabeledSet, IMAGE_SHAPE};
use crate::tensor::{io, Tensor};

pub const SIDE: usize = 32;

/// `(y, s)`: class label and spurious attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Group(pub usize, pub u8);

impl Group {
    pub fn y(self) -> usize {
        self.0
    }
    pub fn s(self) -> u8 {
        self.1
    }
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(y={}, s={})", self.0, self.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corner {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub size: usize,
    pub corner: Corner,
    pub color: [f32; 3],
}

impl PatchSpec {
    fn origin(&self) -> (usize, usize) {
        let far = SIDE - self.size;
        match self.corner {
            Corner::TopLeft => (0, 0),
            Corner::TopRight => (0, far),
            Corner::BottomLeft => (far, 0),
            Corner::BottomRight => (far, far),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    /// Classes follow the prior, attributes follow `p(s=1|y)`.
    Natural,
    /// Every `(y, s)` group gets an equal share.
    GroupBalanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub size: usize,
    pub composition: Composition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub num_classes: usize,
    pub class_prior: Vec<f64>,
    /// `p(s=1 | y)` per class.
    pub p_spurious: Vec<f64>,
    /// Brightness the class shape adds over the background.
    pub shape_contrast: f32,
    pub noise: f32,
    pub background: f32,
    /// Disc radius; other shapes are scaled to a similar area.
    pub shape_radius: f32,
    pub patch: PatchSpec,
    pub seed: u64,
    pub train: SplitSpec,
    pub val: SplitSpec,
    pub test: SplitSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Wb95,
    Wb100,
    IsicLike,
    KneeLike,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wb95" => Ok(Preset::Wb95),
            "wb100" => Ok(Preset::Wb100),
            "isic-like" | "isic" => Ok(Preset::IsicLike),
            "knee-like" | "knee" => Ok(Preset::KneeLike),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Wb95 => "wb95",
            Preset::Wb100 => "wb100",
            Preset::IsicLike => "isic-like",
            Preset::KneeLike => "knee-like",
        }
    }

    pub const ALL: [Preset; 4] = [Preset::Wb95, Preset::Wb100, Preset::IsicLike, Preset::KneeLike];
}

/// Correlation regimes. For the waterbird-style presets the attribute marks
/// the cue aligned with class 0, so `p(aligned | y) = q` for both classes
/// becomes `p(s=1|y=0) = q` and `p(s=1|y=1) = 1 - q`.
pub fn preset(which: Preset, seed: u64) -> DatasetSpec {
    let (prior, p, train) = match which {
        Preset::Wb95 => (vec![0.5, 0.5], vec![0.95, 0.05], 2000),
        Preset::Wb100 => (vec![0.5, 0.5], vec![1.0, 0.0], 2000),
        Preset::IsicLike => (vec![0.88, 0.12], vec![0.47, 0.0], 4500),
        Preset::KneeLike => (vec![0.5, 0.5], vec![0.50, 0.03], 2000),
    };
    DatasetSpec {
        name: which.name().to_string(),
        num_classes: 2,
        class_prior: prior,
        p_spurious: p,
        shape_contrast: 0.35,
        noise: 0.12,
        background: 0.1,
        shape_radius: 6.0,
        patch: PatchSpec {
            size: 8,
            corner: Corner::TopLeft,
            color: [1.0, 0.1, 0.1],
        },
        seed,
        train: SplitSpec {
            size: train,
            composition: Composition::Natural,
        },
        val: SplitSpec {
            size: 400,
            composition: Composition::GroupBalanced,
        },
        test: SplitSpec {
            size: 800,
            composition: Composition::GroupBalanced,
        },
    }
}

impl DatasetSpec {
    pub fn split(&self, split: Split) -> SplitSpec {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_classes;
        if !(2..=MAX_CLASSES).contains(&k) {
            return Err(Error::Config(format!("num_classes must be in 2..={MAX_CLASSES}")));
        }
        if self.class_prior.len() != k || self.p_spurious.len() != k {
            return Err(Error::Config(
                "class_prior and p_spurious need one entry per class".into(),
            ));
        }
        let probs = self.class_prior.iter().chain(&self.p_spurious);
        if probs.clone().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("probabilities must lie in [0, 1]".into()));
        }
        if (self.class_prior.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("class_prior must sum to 1".into()));
        }
        if self.patch.size == 0 || self.patch.size > SIDE {
            return Err(Error::Config(format!("patch size must be in 1..={SIDE}")));
        }
        if !(self.shape_radius > 0.0 && self.shape_radius < SIDE as f32 / 2.0 - 1.0) {
            return Err(Error::Config("shape_radius out of range".into()));
        }
        for split in [Split::Train, Split::Val, Split::Test] {
            let sp = self.split(split);
            if sp.size == 0 {
                return Err(Error::Config(format!("{} split is empty", split.name())));
            }
            for (y, n) in self.group_plan(split).iter().enumerate() {
                if n.iter().sum::<usize>() == 0 {
                    return Err(Error::Config(format!(
                        "{} split has no samples of class {y}",
                        split.name()
                    )));
                }
            }
        }
        if self.test.composition == Composition::GroupBalanced {
            if self.test.size < 2 * k {
                return Err(Error::Config("test split too small to hold every group".into()));
            }
        } else if self.p_spurious.iter().any(|&p| p == 0.0 || p == 1.0) {
            return Err(Error::Config(
                "natural test split cannot contain every group for degenerate p(s|y)".into(),
            ));
        }
        Ok(())
    }

    /// Class counts for a natural split (largest-remainder rounding).
    pub fn class_counts(&self, total: usize) -> Vec<usize> {
        let raw: Vec<f64> = self.class_prior.iter().map(|p| p * total as f64).collect();
        let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
        let mut rest = total - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = raw[a] - raw[a].floor();
            let fb = raw[b] - raw[b].floor();
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        for &i in &order {
            if rest == 0 {
                break;
            }
            counts[i] += 1;
            rest -= 1;
        }
        counts
    }

    /// `[class][s]` sample counts for a split. Natural splits draw the
    /// attribute count per class from a seeded binomial.
    pub fn group_plan(&self, split: Split) -> Vec<[usize; 2]> {
        let sp = self.split(split);
        let k = self.num_classes;
        match sp.composition {
            Composition::Natural => self
                .class_counts(sp.size)
                .into_iter()
                .enumerate()
                .map(|(y, n)| {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &format!("{}/attr/{y}", split.name())));
                    let patched = Binomial::new(n as u64, self.p_spurious[y])
                        .map(|b| b.sample(&mut rng) as usize)
                        .unwrap_or(0);
                    [n - patched, patched]
                })
                .collect(),
            Composition::GroupBalanced => {
                let groups = 2 * k;
                let (base, extra) = (sp.size / groups, sp.size % groups);
                (0..k)
                    .map(|y| [base + usize::from(2 * y < extra), base + usize::from(2 * y + 1 < extra)])
                    .collect()
            }
        }
    }
}

const MAX_CLASSES: usize = 4;

/// Deterministic child seed for a named stream.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, then a splitmix64 finalizer
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupedSample {
    pub id: usize,
    pub y: usize,
    pub s: u8,
    /// `[3, 32, 32]` in `[0, 1]`.
    pub image: Tensor<f32>,
    /// `32 × 32` row-major, 1 on stamped patch pixels.
    pub gt_mask: Vec<u8>,
}

impl GroupedSample {
    pub fn group(&self) -> Group {
        Group(self.y, self.s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    pub spec: DatasetSpec,
    pub split: Split,
    pub samples: Vec<GroupedSample>,
}

impl LabeledSet for GroupedDataset {
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

impl GroupedDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn by_id(&self, id: usize) -> Option<&GroupedSample> {
        // ids are dense and ordered for generated splits; filtered views
        // fall back to a search
        match self.samples.get(id) {
            Some(s) if s.id == id => Some(s),
            _ => self
                .samples
                .binary_search_by_key(&id, |s| s.id)
                .ok()
                .map(|i| &self.samples[i]),
        }
    }

    pub fn class_ids(&self, y: usize) -> Vec<usize> {
        self.samples.iter().filter(|s| s.y == y).map(|s| s.id).collect()
    }
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Disc,
    Square,
    Diamond,
    Ring,
}

impl Shape {
    fn for_class(y: usize) -> Shape {
        [Shape::Disc, Shape::Square, Shape::Diamond, Shape::Ring][y]
    }

    fn contains(self, dx: f32, dy: f32, r: f32) -> bool {
        match self {
            Shape::Disc => dx * dx + dy * dy <= r * r,
            // side r·sqrt(pi) matches the disc area
            Shape::Square => {
                let half = 0.5 * r * std::f32::consts::PI.sqrt();
                dx.abs() <= half && dy.abs() <= half
            }
            Shape::Diamond => dx.abs() + dy.abs() <= r * 1.25,
            Shape::Ring => {
                let d2 = dx * dx + dy * dy;
                d2 <= (1.2 * r).powi(2) && d2 >= (0.7 * r).powi(2)
            }
        }
    }
}

fn render(spec: &DatasetSpec, y: usize, s: u8, rng: &mut ChaCha8Rng) -> (Tensor<f32>, Vec<u8>) {
    let plane = SIDE * SIDE;
    let r = spec.shape_radius;
    let margin = (1.3 * r).ceil();
    let cx: f32 = rng.random_range(margin..SIDE as f32 - margin);
    let cy: f32 = rng.random_range(margin..SIDE as f32 - margin);
    let shape = Shape::for_class(y);
    let noise = Normal::new(0.0f32, spec.noise.max(0.0)).expect("finite σ");
    let mut data = vec![0.0f32; 3 * plane];
    for py in 0..SIDE {
        for px in 0..SIDE {
            let inside = shape.contains(px as f32 + 0.5 - cx, py as f32 + 0.5 - cy, r);
            let base = spec.background + if inside { spec.shape_contrast } else { 0.0 };
            for c in 0..3 {
                let v = base + noise.sample(rng);
                data[c * plane + py * SIDE + px] = v.clamp(0.0, 1.0);
            }
        }
    }
    let mut mask = vec![0u8; plane];
    if s == 1 {
        let (oy, ox) = spec.patch.origin();
        for py in oy..oy + spec.patch.size {
            for px in ox..ox + spec.patch.size {
                mask[py * SIDE + px] = 1;
                for c in 0..3 {
                    data[c * plane + py * SIDE + px] = spec.patch.color[c].clamp(0.0, 1.0);
                }
            }
        }
    }
    (Tensor::new(IMAGE_SHAPE.to_vec(), data).expect("static shape"), mask)
}

/// Generates one split. Pure function of `(spec, split)`.
pub fn generate_split(spec: &DatasetSpec, split: Split) -> Result<GroupedDataset> {
    spec.validate()?;
    let plan = spec.group_plan(split);
    let mut groups = Vec::with_capacity(spec.split(split).size);
    for (y, counts) in plan.iter().enumerate() {
        for (s, &n) in counts.iter().enumerate() {
            groups.extend(std::iter::repeat_n((y, s as u8), n));
        }
    }
    let mut order_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &format!("{}/order", split.name())));
    groups.shuffle(&mut order_rng);
    let mut render_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &format!("{}/render", split.name())));
    let samples = groups
        .into_iter()
        .enumerate()
        .map(|(id, (y, s))| {
            let (image, gt_mask) = render(spec, y, s, &mut render_rng);
            GroupedSample {
                id,
                y,
                s,
                image,
                gt_mask,
            }
        })
        .collect();
    Ok(GroupedDataset {
        spec: spec.clone(),
        split,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: GroupedDataset,
    pub val: GroupedDataset,
    pub test: GroupedDataset,
}

pub fn generate(spec: &DatasetSpec) -> Result<Splits> {
    Ok(Splits {
        train: generate_split(spec, Split::Train)?,
        val: generate_split(spec, Split::Val)?,
        test: generate_split(spec, Split::Test)?,
    })
}

/// Exact count per `(y, s)` group, including empty groups of the spec.
pub fn group_counts(dataset: &GroupedDataset) -> BTreeMap<Group, usize> {
    let mut counts = BTreeMap::new();
    for y in 0..dataset.spec.num_classes {
        for s in 0..2u8 {
            counts.insert(Group(y, s), 0);
        }
    }
    for sample in &dataset.samples {
        *counts.entry(sample.group()).or_insert(0) += 1;
    }
    counts
}

/// Samples without the spurious attribute, in original order with ids kept.
pub fn spurious_free_view(dataset: &GroupedDataset) -> GroupedDataset {
    GroupedDataset {
        spec: dataset.spec.clone(),
        split: dataset.split,
        samples: dataset.samples.iter().filter(|s| s.s == 0).cloned().collect(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleMeta {
    id: usize,
    y: usize,
    s: u8,
    g: Group,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    split: Split,
    spec: DatasetSpec,
    group_counts: Vec<(Group, usize)>,
    samples: Vec<SampleMeta>,
}

/// Writes `images.scr1`, `masks.scr1` and `meta.json` into `dir`.
pub fn save_dataset(dataset: &GroupedDataset, dir: &Path) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::Config("refusing to save an empty dataset".into()));
    }
    let n = dataset.len();
    let mut images = Vec::with_capacity(n * 3 * SIDE * SIDE);
    let mut masks = Vec::with_capacity(n * SIDE * SIDE);
    for s in &dataset.samples {
        images.extend_from_slice(s.image.data());
        masks.extend(s.gt_mask.iter().map(|&m| m as f32));
    }
    io::save(&Tensor::new(vec![n, 3, SIDE, SIDE], images)?, &dir.join("images.scr1"))?;
    io::save(&Tensor::new(vec![n, SIDE, SIDE], masks)?, &dir.join("masks.scr1"))?;
    let meta = Meta {
        split: dataset.split,
        spec: dataset.spec.clone(),
        group_counts: group_counts(dataset).into_iter().collect(),
        samples: dataset
            .samples
            .iter()
            .map(|s| SampleMeta {
                id: s.id,
                y: s.y,
                s: s.s,
                g: s.group(),
            })
            .collect(),
    };
    fsutil::write_json(&dir.join("meta.json"), &meta)
}

pub fn load_dataset(dir: &Path) -> Result<GroupedDataset> {
    let meta: Meta = fsutil::read_json(&dir.join("meta.json"))?;
    let images: Tensor<f32> = io::load(&dir.join("images.scr1"))?;
    let masks: Tensor<f32> = io::load(&dir.join("masks.scr1"))?;
    let n = meta.samples.len();
    if images.shape() != [n, 3, SIDE, SIDE] || masks.shape() != [n, SIDE, SIDE] {
        return Err(Error::Format(format!(
            "dataset tensors {:?}/{:?} do not match {n} samples",
            images.shape(),
            masks.shape()
        )));
    }
    let per_image = 3 * SIDE * SIDE;
    let per_mask = SIDE * SIDE;
    let samples = meta
        .samples
        .iter()
        .enumerate()
        .map(|(i, m)| {
            Ok(GroupedSample {
                id: m.id,
                y: m.y,
                s: m.s,
                image: Tensor::new(
                    IMAGE_SHAPE.to_vec(),
                    images.data()[i * per_image..(i + 1) * per_image].to_vec(),
                )?,
                gt_mask: masks.data()[i * per_mask..(i + 1) * per_mask]
                    .iter()
                    .map(|&v| u8::from(v != 0.0))
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GroupedDataset {
        spec: meta.spec,
        split: meta.split,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(p0: f64, p1: f64, n: usize) -> DatasetSpec {
        let mut spec = preset(Preset::Wb95, 7);
        spec.p_spurious = vec![p0, p1];
        spec.train.size = n;
        spec.val.size = 8;
        spec.test.size = 8;
        spec
    }

    #[test]
    fn degenerate_probabilities() {
        let mut spec = tiny(1.0, 1.0, 200);
        let train = generate_split(&spec, Split::Train).unwrap();
        let class0: Vec<_> = train.samples.iter().filter(|s| s.y == 0).collect();
        assert_eq!(class0.len(), 100);
        assert!(class0.iter().all(|s| s.s == 1 && s.gt_mask.contains(&1)));

        spec.p_spurious = vec![0.0, 0.0];
        let train = generate_split(&spec, Split::Train).unwrap();
        assert!(train.samples.iter().all(|s| s.gt_mask.iter().all(|&m| m == 0)));
    }

    #[test]
    fn attribute_count_matches_seeded_binomial() {
        let spec = tiny(0.95, 0.05, 2000);
        let train = generate_split(&spec, Split::Train).unwrap();
        let patched = train.samples.iter().filter(|s| s.y == 0 && s.s == 1).count();
        // independent replay of the attribute stream
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(7, "train/attr/0"));
        let expected = Binomial::new(1000, 0.95).unwrap().sample(&mut rng) as usize;
        assert_eq!(patched, expected);
        assert_eq!(generate_split(&spec, Split::Train).unwrap(), train);
    }

    #[test]
    fn empirical_rate_within_three_sigma() {
        for (p, seed) in [(0.95, 1u64), (0.47, 2), (0.03, 3), (0.5, 4)] {
            let mut spec = tiny(p, 0.5, 4000);
            spec.seed = seed;
            let train = generate_split(&spec, Split::Train).unwrap();
            let n = train.samples.iter().filter(|s| s.y == 0).count() as f64;
            let k = train.samples.iter().filter(|s| s.y == 0 && s.s == 1).count() as f64;
            let sigma = (n * p * (1.0 - p)).sqrt();
            assert!((k - n * p).abs() <= 3.0 * sigma, "p={p}: {k} of {n}");
        }
    }

    #[test]
    fn mask_is_exactly_the_patch() {
        let spec = tiny(0.5, 0.5, 60);
        let train = generate_split(&spec, Split::Train).unwrap();
        let color = spec.patch.color;
        for s in &train.samples {
            let on = s.gt_mask.iter().filter(|&&m| m == 1).count();
            assert_eq!(on, if s.s == 1 { 64 } else { 0 });
            assert!(s.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
            for (i, &m) in s.gt_mask.iter().enumerate() {
                if m == 1 {
                    for (c, &want) in color.iter().enumerate() {
                        assert_eq!(s.image.data()[c * SIDE * SIDE + i], want);
                    }
                }
            }
        }
    }

    #[test]
    fn presets_follow_table_regimes() {
        let wb100 = generate_split(&preset(Preset::Wb100, 0), Split::Train).unwrap();
        let c = group_counts(&wb100);
        assert_eq!(c[&Group(0, 0)], 0);
        assert_eq!(c[&Group(1, 1)], 0);
        let isic = generate_split(&preset(Preset::IsicLike, 0), Split::Train).unwrap();
        assert_eq!(group_counts(&isic)[&Group(1, 1)], 0);
        assert_eq!(preset(Preset::KneeLike, 0).p_spurious[1], 0.03);
        for which in Preset::ALL {
            let test = generate_split(&preset(which, 3), Split::Test).unwrap();
            assert!(group_counts(&test).values().all(|&n| n == 200), "{which:?}");
        }
        assert!("nope".parse::<Preset>().is_err());
        assert_eq!("WB100".parse::<Preset>().unwrap(), Preset::Wb100);
    }

    #[test]
    fn counts_and_spurious_free_view() {
        let spec = tiny(0.5, 0.5, 40);
        let mut ds = generate_split(&spec, Split::Test).unwrap();
        ds.samples.clear();
        for (id, (y, s)) in [(0, 0u8), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
            let (image, gt_mask) = render(&spec, y, s, &mut ChaCha8Rng::seed_from_u64(id as u64));
            ds.samples.push(GroupedSample {
                id,
                y,
                s,
                image,
                gt_mask,
            });
        }
        assert!(group_counts(&ds).values().all(|&n| n == 1));
        let free = spurious_free_view(&ds);
        assert_eq!(free.samples.iter().map(|s| s.id).collect::<Vec<_>>(), vec![0, 2]);

        let all_patched = generate_split(&tiny(1.0, 1.0, 20), Split::Train).unwrap();
        assert!(spurious_free_view(&all_patched).is_empty());
    }

    #[test]
    fn empty_class_is_a_config_error() {
        let mut spec = tiny(0.5, 0.5, 10);
        spec.class_prior = vec![1.0, 0.0];
        assert!(matches!(generate_split(&spec, Split::Train), Err(Error::Config(_))));
        let mut spec = tiny(0.5, 0.5, 10);
        spec.test.composition = Composition::Natural;
        spec.p_spurious = vec![1.0, 0.0];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn disk_roundtrip() {
        let spec = tiny(0.5, 0.5, 12);
        let ds = generate_split(&spec, Split::Train).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);
        let bytes = std::fs::read(dir.path().join("images.scr1")).unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        assert_eq!(std::fs::read(dir.path().join("images.scr1")).unwrap(), bytes);
    }
}
