//! Baselines and experiment orchestration.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detection::{
    detect, oracle_select, DetectionRun, DEFAULT_MASK_QUANTILE, DEFAULT_N_REF, DEFAULT_TAU, DEFAULT_T_MAX,
};
use crate::error::{Error, Result};
use crate::fsutil::{read_json, write_atomic, write_json};
use crate::metrics::{evaluate, GroupReport};
use crate::mitigation::{
    build_finetune_set, finetune_score, finetune_with_gt_masks, EpochCurve, FinetuneConfig, RegMode,
};
use crate::network::{build_patchnet, train_erm, LayerSpec, LayerStack, TrainConfig};
use crate::synth::{
    derive_seed, generate, group_counts, preset, spurious_free_view, DatasetSpec, Group, GroupedDataset, Preset, Splits,
};
use crate::tensor::Tensor;

/// Up to `per_group` samples from every non-empty group, balanced to the
/// smallest non-empty group when `per_group` is `None`.
pub fn group_balanced_subset(dataset: &GroupedDataset, per_group: Option<usize>, seed: u64) -> Result<GroupedDataset> {
    let counts = group_counts(dataset);
    let available: Vec<Group> = counts.iter().filter(|(_, &n)| n > 0).map(|(&g, _)| g).collect();
    for y in 0..dataset.spec.num_classes {
        if !available.iter().any(|g| g.0 == y) {
            return Err(Error::Config(format!("balanced subset has no samples of class {y}")));
        }
    }
    let smallest = available.iter().map(|g| counts[g]).min().unwrap_or(0);
    let take = per_group.unwrap_or(smallest).min(smallest);
    let mut ids = Vec::new();
    for g in &available {
        let mut pool: Vec<usize> = dataset
            .samples
            .iter()
            .filter(|s| s.group() == *g)
            .map(|s| s.id)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("balanced/{}/{}", g.0, g.1)));
        pool.shuffle(&mut rng);
        ids.extend_from_slice(&pool[..take]);
    }
    ids.sort_unstable();
    Ok(GroupedDataset {
        spec: dataset.spec.clone(),
        split: dataset.split,
        samples: ids
            .iter()
            .map(|&id| dataset.by_id(id).expect("ids from dataset").clone())
            .collect(),
    })
}

/// Retrains only the final dense layer on `subset` with cross-entropy.
/// Earlier layers are frozen, so their penultimate features are computed
/// once and the head is fit on them directly.
pub fn baseline_last_layer_retrain(
    model: &LayerStack<f32>,
    subset: &GroupedDataset,
    cfg: &TrainConfig,
) -> Result<LayerStack<f32>> {
    let k = model.num_classes();
    for y in 0..k {
        if !subset.samples.iter().any(|s| s.y == y) {
            return Err(Error::Config(format!("retraining subset is missing class {y}")));
        }
    }
    let last = model.layers.len() - 1;
    let head_spec = model.layers[last].spec.clone();
    let LayerSpec::Dense { inputs, .. } = head_spec else {
        return Err(Error::Config("final layer is not dense".into()));
    };
    let features: Vec<(Tensor<f32>, usize)> = subset
        .samples
        .iter()
        .map(|s| {
            let trace = model.forward(&s.image)?;
            Ok((trace.activations[last].clone(), s.y))
        })
        .collect::<Result<_>>()?;
    let mut head = LayerStack::from_specs(&[inputs], vec![head_spec], 0)?;
    head.layers[0] = model.layers[last].clone();
    train_erm(&mut head, &features, cfg)?;
    let mut out = model.clone();
    out.layers[last] = head.layers[0].clone();
    Ok(out)
}

/// Training view restricted to `s = 0`; errors when a class disappears.
pub fn spurious_free_train(train: &GroupedDataset) -> Result<GroupedDataset> {
    let view = spurious_free_view(train);
    for y in 0..train.spec.num_classes {
        if !view.samples.iter().any(|s| s.y == y) {
            return Err(Error::Unavailable(y));
        }
    }
    Ok(view)
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(MeanStd { mean, std, n })
}

pub fn summarize(per_seed: &BTreeMap<String, Vec<f64>>) -> BTreeMap<String, MeanStd> {
    per_seed
        .iter()
        .filter_map(|(k, v)| mean_std(v).map(|m| (k.clone(), m)))
        .collect()
}

/// Where the fine-tuning masks come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskSource {
    #[default]
    Lrp,
    GroundTruth,
}

/// One fine-tuning arm of an experiment. Unset fields fall back to the
/// recipe's detection and fine-tuning settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    #[serde(default = "default_mode")]
    pub mode: RegMode,
    #[serde(default)]
    pub masks: MaskSource,
    #[serde(default)]
    pub t_max: Option<usize>,
    #[serde(default)]
    pub n_ref: Option<usize>,
    #[serde(default)]
    pub alpha: Option<f32>,
    #[serde(default)]
    pub ft_size: Option<usize>,
}

fn default_mode() -> RegMode {
    RegMode::BothTerms
}

impl Variant {
    pub fn new(name: &str, mode: RegMode) -> Self {
        Variant {
            name: name.to_string(),
            mode,
            masks: MaskSource::Lrp,
            t_max: None,
            n_ref: None,
            alpha: None,
            ft_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectSettings {
    pub class_id: usize,
    pub n_ref: usize,
    pub mask_quantile: f64,
    pub tau: f64,
    pub t_max: usize,
}

impl Default for DetectSettings {
    fn default() -> Self {
        DetectSettings {
            class_id: 0,
            n_ref: DEFAULT_N_REF,
            mask_quantile: DEFAULT_MASK_QUANTILE,
            tau: DEFAULT_TAU,
            t_max: DEFAULT_T_MAX,
        }
    }
}

/// Full description of an experiment: one dataset regime, several seeds,
/// an ERM model per seed and the arms evaluated against it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    pub name: String,
    pub preset: Preset,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub erm: TrainConfig,
    #[serde(default)]
    pub detect: DetectSettings,
    #[serde(default)]
    pub finetune: FinetuneConfig,
    #[serde(default)]
    pub variants: Vec<Variant>,
    /// Head retraining on a group-balanced subset of the training split.
    #[serde(default)]
    pub last_layer_retrain: bool,
    #[serde(default)]
    pub spurious_free: bool,
    #[serde(default)]
    pub data: DataOverrides,
    /// Split that detection and the fine-tuning set draw from.
    #[serde(default)]
    pub finetune_split: FinetuneSplit,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinetuneSplit {
    #[default]
    Train,
    Val,
}

/// Generator knobs a recipe may change relative to the preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataOverrides {
    pub shape_contrast: Option<f32>,
    pub noise: Option<f32>,
    pub background: Option<f32>,
    pub shape_radius: Option<f32>,
    pub train_size: Option<usize>,
}

impl DataOverrides {
    pub fn apply(&self, spec: &mut DatasetSpec) {
        if let Some(v) = self.shape_contrast {
            spec.shape_contrast = v;
        }
        if let Some(v) = self.noise {
            spec.noise = v;
        }
        if let Some(v) = self.background {
            spec.background = v;
        }
        if let Some(v) = self.shape_radius {
            spec.shape_radius = v;
        }
        if let Some(v) = self.train_size {
            spec.train.size = v;
        }
    }
}

pub const DEFAULT_SEEDS: usize = 5;
pub const QUICK_SEEDS: usize = 3;
pub const LAST_LAYER_EPOCHS: usize = 100;

fn default_seeds() -> Vec<u64> {
    (0..DEFAULT_SEEDS as u64).collect()
}

impl Recipe {
    pub fn new(name: &str, preset: Preset) -> Self {
        Recipe {
            name: name.to_string(),
            preset,
            seeds: default_seeds(),
            erm: TrainConfig::default(),
            detect: DetectSettings::default(),
            finetune: FinetuneConfig::default(),
            variants: Vec::new(),
            last_layer_retrain: false,
            spurious_free: false,
            data: DataOverrides::default(),
            finetune_split: FinetuneSplit::Train,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("recipe has no seeds".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for v in &self.variants {
            if v.name == ERM || v.name == LAST_LAYER || v.name == SPURIOUS_FREE {
                return Err(Error::Config(format!("variant name {:?} is reserved", v.name)));
            }
            if !names.insert(&v.name) {
                return Err(Error::Config(format!("duplicate variant {:?}", v.name)));
            }
        }
        self.erm.validate()?;
        self.finetune.validate()
    }
}

/// The comparison each preset is run with: ERM, the applicable baselines,
/// the three regularizer modes on WB100, ground-truth masks everywhere, and
/// positive-set sizes on the knee-like preset.
pub fn suite_recipe(which: Preset, seeds: usize) -> Recipe {
    let mut r = Recipe::new(which.name(), which);
    r.seeds = (0..seeds as u64).collect();
    r.variants.push(Variant::new(SCORE, RegMode::BothTerms));
    r.variants.push(Variant {
        masks: MaskSource::GroundTruth,
        ..Variant::new(GT_MASKS, RegMode::BothTerms)
    });
    match which {
        Preset::Wb95 | Preset::Wb100 => {
            r.last_layer_retrain = true;
            r.variants.push(Variant::new(POSITIVE_ONLY, RegMode::PositiveOnly));
            r.variants.push(Variant::new(NO_REG, RegMode::None));
        }
        Preset::IsicLike => {
            r.last_layer_retrain = true;
            r.spurious_free = true;
        }
        Preset::KneeLike => {
            r.spurious_free = true;
            r.variants.push(Variant {
                t_max: Some(25),
                ..Variant::new(T25, RegMode::BothTerms)
            });
            r.variants.push(Variant {
                t_max: Some(200),
                n_ref: Some(200),
                ..Variant::new(T200, RegMode::BothTerms)
            });
        }
    }
    r
}

pub const SCORE: &str = "score";
pub const GT_MASKS: &str = "score-gt-masks";
pub const POSITIVE_ONLY: &str = "score-positive-only";
pub const NO_REG: &str = "finetune-no-reg";
pub const T25: &str = "score-t25";
pub const T200: &str = "score-t200";

pub const ERM: &str = "erm";
pub const LAST_LAYER: &str = "last-layer";
pub const SPURIOUS_FREE: &str = "spurious-free";

/// Test-set report of one method on one seed, or the reason it is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub report: Option<GroupReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub positives: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub curves: Vec<EpochCurve>,
}

impl ArmResult {
    fn ok(report: GroupReport) -> Self {
        ArmResult {
            report: Some(report),
            error: None,
            positives: None,
            curves: Vec::new(),
        }
    }

    fn failed(err: &Error) -> Self {
        ArmResult {
            report: None,
            error: Some(err.to_string()),
            positives: None,
            curves: Vec::new(),
        }
    }

    pub fn wga(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.wga)
    }

    pub fn avg(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.avg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Set when the seed aborted before any arm could run.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    pub arms: BTreeMap<String, ArmResult>,
}

impl SeedResult {
    pub fn wga(&self, arm: &str) -> Option<f64> {
        self.arms.get(arm).and_then(ArmResult::wga)
    }

    pub fn avg(&self, arm: &str) -> Option<f64> {
        self.arms.get(arm).and_then(ArmResult::avg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub wga: Option<MeanStd>,
    pub avg: Option<MeanStd>,
    pub completed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub recipe: Recipe,
    pub seeds: Vec<SeedResult>,
    pub summary: BTreeMap<String, ArmSummary>,
    /// True when any arm failed on any seed.
    pub partial: bool,
}

/// Arm names in report order.
pub fn arm_names(recipe: &Recipe) -> Vec<String> {
    let mut names = vec![ERM.to_string()];
    if recipe.last_layer_retrain {
        names.push(LAST_LAYER.to_string());
    }
    if recipe.spurious_free {
        names.push(SPURIOUS_FREE.to_string());
    }
    names.extend(recipe.variants.iter().map(|v| v.name.clone()));
    names
}

/// Aggregates per-seed results. Pure in its inputs, so a report rebuilt from
/// stored seed results is identical to the original.
pub fn aggregate(recipe: &Recipe, seeds: Vec<SeedResult>) -> ExperimentReport {
    let mut summary = BTreeMap::new();
    let mut partial = false;
    for name in arm_names(recipe) {
        let mut wga = Vec::new();
        let mut avg = Vec::new();
        let mut failed = 0;
        for s in &seeds {
            match s.arms.get(&name).and_then(|a| a.report.as_ref()) {
                Some(r) => {
                    wga.push(r.wga);
                    avg.push(r.avg);
                }
                None => failed += 1,
            }
        }
        partial |= failed > 0;
        summary.insert(
            name,
            ArmSummary {
                wga: mean_std(&wga),
                avg: mean_std(&avg),
                completed: wga.len(),
                failed,
            },
        );
    }
    ExperimentReport {
        recipe: recipe.clone(),
        seeds,
        summary,
        partial,
    }
}

/// PatchNet (with biases) trained by plain cross-entropy.
pub fn train_erm_model(train: &GroupedDataset, cfg: &TrainConfig) -> Result<LayerStack<f32>> {
    let mut model = build_patchnet::<f32>(train.spec.num_classes, cfg.seed)?;
    train_erm(&mut model, train, cfg)?;
    Ok(model)
}

/// Fine-tunes a copy of `model` for one variant on samples of `source` and
/// evaluates it on `test`.
#[allow(clippy::too_many_arguments)]
pub fn run_variant(
    model: &LayerStack<f32>,
    splits: &Splits,
    source: &GroupedDataset,
    run: &DetectionRun,
    detect: &DetectSettings,
    base: &FinetuneConfig,
    variant: &Variant,
    seed: u64,
) -> Result<ArmResult> {
    let positives = oracle_select(run, source, detect.tau, variant.t_max.unwrap_or(detect.t_max))?;
    let cfg = FinetuneConfig {
        mode: variant.mode,
        alpha: variant.alpha.unwrap_or(base.alpha),
        ft_size: variant.ft_size.unwrap_or(base.ft_size),
        seed,
        ..base.clone()
    };
    let set = build_finetune_set(source, &positives, cfg.ft_size, seed)?;
    let mut tuned = model.clone();
    let outcome = match variant.masks {
        MaskSource::Lrp => finetune_score(&mut tuned, &set, &cfg, Some(&splits.val))?,
        MaskSource::GroundTruth => finetune_with_gt_masks(&mut tuned, &set, source, &cfg, Some(&splits.val))?,
    };
    Ok(ArmResult {
        report: Some(evaluate(&tuned, &splits.test)?),
        error: None,
        positives: Some(positives.len()),
        curves: outcome.curves,
    })
}

/// Every arm of `recipe` for one seed. Arm failures are recorded, not raised.
pub fn run_seed(recipe: &Recipe, seed: u64) -> SeedResult {
    run_seed_with(recipe, seed, &mut |_, _| {})
}

/// As [`run_seed`], handing every detection run and its dataset to `observe`.
pub fn run_seed_with(
    recipe: &Recipe,
    seed: u64,
    observe: &mut dyn FnMut(&DetectionRun, &GroupedDataset),
) -> SeedResult {
    let mut arms = BTreeMap::new();
    let mut spec = preset(recipe.preset, seed);
    recipe.data.apply(&mut spec);
    let splits = match spec.validate().and_then(|_| generate(&spec)) {
        Ok(s) => s,
        Err(e) => {
            return SeedResult {
                seed,
                error: Some(format!("generate: {e}")),
                arms,
            }
        }
    };
    let erm_cfg = TrainConfig {
        seed,
        ..recipe.erm.clone()
    };
    let model = match train_erm_model(&splits.train, &erm_cfg) {
        Ok(m) => m,
        Err(e) => {
            return SeedResult {
                seed,
                error: Some(format!("erm: {e}")),
                arms,
            }
        }
    };
    let record = |r: Result<ArmResult>| r.unwrap_or_else(|e| ArmResult::failed(&e));
    arms.insert(
        ERM.to_string(),
        record(evaluate(&model, &splits.test).map(ArmResult::ok)),
    );
    if recipe.last_layer_retrain {
        let cfg = TrainConfig {
            epochs: LAST_LAYER_EPOCHS,
            ..erm_cfg.clone()
        };
        let r = group_balanced_subset(&splits.train, None, seed)
            .and_then(|sub| baseline_last_layer_retrain(&model, &sub, &cfg))
            .and_then(|m| evaluate(&m, &splits.test))
            .map(ArmResult::ok);
        arms.insert(LAST_LAYER.to_string(), record(r));
    }
    if recipe.spurious_free {
        let r = spurious_free_train(&splits.train)
            .and_then(|view| train_erm_model(&view, &erm_cfg))
            .and_then(|m| evaluate(&m, &splits.test))
            .map(ArmResult::ok);
        arms.insert(SPURIOUS_FREE.to_string(), record(r));
    }
    let source = match recipe.finetune_split {
        FinetuneSplit::Train => &splits.train,
        FinetuneSplit::Val => &splits.val,
    };
    let mut runs: BTreeMap<usize, Result<DetectionRun>> = BTreeMap::new();
    let mut observed = std::collections::BTreeSet::new();
    for v in &recipe.variants {
        let n_ref = v.n_ref.unwrap_or(recipe.detect.n_ref);
        let run = runs.entry(n_ref).or_insert_with(|| {
            detect(
                &model,
                source,
                recipe.detect.class_id,
                n_ref,
                recipe.detect.mask_quantile,
                format!("{}-s{seed}-n{n_ref}", recipe.name),
            )
        });
        if let Ok(run) = run {
            if !observed.contains(&n_ref) {
                observe(run, source);
                observed.insert(n_ref);
            }
        }
        let r = match run {
            Ok(run) => run_variant(&model, &splits, source, run, &recipe.detect, &recipe.finetune, v, seed),
            Err(e) => Err(Error::Config(format!("detect: {e}"))),
        };
        arms.insert(v.name.clone(), record(r));
    }
    SeedResult {
        seed,
        error: None,
        arms,
    }
}

pub fn run_experiment(recipe: &Recipe) -> Result<ExperimentReport> {
    recipe.validate()?;
    let seeds = recipe.seeds.iter().map(|&s| run_seed(recipe, s)).collect();
    Ok(aggregate(recipe, seeds))
}

fn fmt_cell(m: Option<&MeanStd>) -> String {
    match m {
        Some(m) => format!("{:5.1} ± {:4.1}", 100.0 * m.mean, 100.0 * m.std),
        None => format!("{:>12}", "n/a"),
    }
}

/// Plain-text table with AVG and WGA (percent, mean ± std) per arm.
pub fn render_table(report: &ExperimentReport) -> String {
    let mut out = format!(
        "{} ({}, {} seeds{})\n",
        report.recipe.name,
        report.recipe.preset.name(),
        report.recipe.seeds.len(),
        if report.partial { ", partial" } else { "" }
    );
    let width = arm_names(&report.recipe)
        .iter()
        .map(String::len)
        .max()
        .unwrap_or(0)
        .max(6);
    out.push_str(&format!("{:width$}  {:>12}  {:>12}  runs\n", "method", "AVG", "WGA"));
    for name in arm_names(&report.recipe) {
        let s = &report.summary[&name];
        out.push_str(&format!(
            "{name:width$}  {}  {}  {}/{}\n",
            fmt_cell(s.avg.as_ref()),
            fmt_cell(s.wga.as_ref()),
            s.completed,
            s.completed + s.failed
        ));
    }
    for seed in &report.seeds {
        if let Some(e) = &seed.error {
            out.push_str(&format!("seed {}: {e}\n", seed.seed));
        }
        for (name, arm) in &seed.arms {
            if let Some(e) = &arm.error {
                out.push_str(&format!("seed {} {name}: {e}\n", seed.seed));
            }
        }
    }
    out
}

pub const REPORT_FILE: &str = "report.json";
pub const TABLE_FILE: &str = "report.txt";

pub fn save_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(REPORT_FILE), report)?;
    write_atomic(&dir.join(TABLE_FILE), render_table(report).as_bytes())
}

/// Rebuilds a report from the per-seed results stored in `report.json`.
pub fn regenerate_report(dir: &Path) -> Result<ExperimentReport> {
    let stored: ExperimentReport = read_json(&dir.join(REPORT_FILE))?;
    Ok(aggregate(&stored.recipe, stored.seeds))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arm(wga: Option<f64>) -> ArmResult {
        match wga {
            Some(w) => ArmResult::ok(GroupReport {
                group_accuracy: BTreeMap::new(),
                group_counts: BTreeMap::new(),
                class_accuracy: vec![],
                wga: w,
                avg: w + 0.1,
            }),
            None => ArmResult::failed(&Error::NoCandidates(0.5)),
        }
    }

    #[test]
    fn mean_std_matches_hand_values() {
        let m = mean_std(&[0.2, 0.4, 0.6]).unwrap();
        assert!((m.mean - 0.4).abs() < 1e-12);
        assert!((m.std - 0.2).abs() < 1e-12);
        assert_eq!(mean_std(&[0.3]).unwrap().std, 0.0);
        assert!(mean_std(&[]).is_none());
    }

    #[test]
    fn aggregate_marks_partial_runs() {
        let mut recipe = Recipe::new("t", Preset::Wb100);
        recipe.variants.push(Variant::new("score", RegMode::BothTerms));
        let seeds = vec![
            SeedResult {
                seed: 0,
                error: None,
                arms: [(ERM.to_string(), arm(Some(0.1))), ("score".to_string(), arm(Some(0.5)))].into(),
            },
            SeedResult {
                seed: 1,
                error: None,
                arms: [(ERM.to_string(), arm(Some(0.3))), ("score".to_string(), arm(None))].into(),
            },
        ];
        let report = aggregate(&recipe, seeds);
        assert!(report.partial);
        let erm = &report.summary[ERM];
        assert_eq!((erm.completed, erm.failed), (2, 0));
        assert!((erm.wga.unwrap().mean - 0.2).abs() < 1e-12);
        assert_eq!(report.summary["score"].failed, 1);
        let table = render_table(&report);
        assert!(table.contains("partial"));
        assert!(table.contains("seed 1 score"));
    }

    #[test]
    fn recipe_rejects_reserved_and_duplicate_names() {
        let mut r = Recipe::new("t", Preset::Wb100);
        r.variants.push(Variant::new(ERM, RegMode::None));
        assert!(r.validate().is_err());
        r.variants = vec![Variant::new("a", RegMode::None), Variant::new("a", RegMode::BothTerms)];
        assert!(r.validate().is_err());
        r.seeds.clear();
        r.variants.clear();
        assert!(r.validate().is_err());
    }

    #[test]
    fn recipe_json_roundtrip() {
        let mut r = Recipe::new("t", Preset::KneeLike);
        r.variants.push(Variant {
            masks: MaskSource::GroundTruth,
            n_ref: Some(200),
            ..Variant::new("gt", RegMode::BothTerms)
        });
        r.finetune_split = FinetuneSplit::Val;
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains(r#""finetune_split":"val""#));
        assert_eq!(serde_json::from_str::<Recipe>(&json).unwrap(), r);
        let minimal: Recipe = serde_json::from_str(r#"{"name":"m","preset":"wb100"}"#).unwrap();
        assert_eq!(minimal.finetune_split, FinetuneSplit::Train);
    }

    #[test]
    fn validation_split_drives_finetuning() {
        let mut r = Recipe::new("v", Preset::Wb95);
        r.seeds = vec![1];
        r.data.train_size = Some(120);
        r.erm.epochs = 1;
        r.detect.tau = 0.01;
        r.detect.t_max = 4;
        r.finetune.epochs = 1;
        r.finetune.ft_size = 40;
        r.finetune_split = FinetuneSplit::Val;
        r.variants.push(Variant::new("score", RegMode::BothTerms));
        let mut seen = Vec::new();
        let result = run_seed_with(&r, 1, &mut |_, data| seen.push(data.split));
        assert_eq!(seen, vec![crate::synth::Split::Val]);
        assert!(result.arms.contains_key("score"));
    }

    #[test]
    fn spurious_free_is_unavailable_for_wb100() {
        let mut spec = preset(Preset::Wb100, 0);
        spec.train.size = 40;
        let train = crate::synth::generate_split(&spec, crate::synth::Split::Train).unwrap();
        assert!(matches!(spurious_free_train(&train), Err(Error::Unavailable(0))));
    }

    #[test]
    fn balanced_subset_uses_available_groups_only() {
        let mut spec = preset(Preset::Wb95, 3);
        spec.train.size = 400;
        let train = crate::synth::generate_split(&spec, crate::synth::Split::Train).unwrap();
        let sub = group_balanced_subset(&train, None, 0).unwrap();
        let counts = group_counts(&sub);
        let sizes: Vec<usize> = counts.values().copied().filter(|&n| n > 0).collect();
        assert_eq!(sizes.len(), 4);
        assert!(sizes.windows(2).all(|w| w[0] == w[1]));
        let sub2 = group_balanced_subset(&train, None, 0).unwrap();
        assert_eq!(
            sub.samples.iter().map(|s| s.id).collect::<Vec<_>>(),
            sub2.samples.iter().map(|s| s.id).collect::<Vec<_>>()
        );
    }
}
