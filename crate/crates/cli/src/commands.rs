//! Subcommands. Each one reads its `[section]` of the config file, lets
//! flags override it and runs one pipeline stage against the store.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use score_core::detection::{self, SelectionSource};
use score_core::eval::{self, MaskSource, Recipe};
use score_core::metrics::{evaluate, GroupReport};
use score_core::mitigation::{self, EpochCurve, FinetuneConfig, RegMode};
use score_core::network::{self, checkpoint_bytes, load_checkpoint, TrainConfig};
use score_core::synth::{self, DatasetSpec, GroupedDataset, Preset, Split};
use score_core::{fsutil, Error as CoreError};

use crate::config::{ConfigError, ConfigFile};
use crate::store::{RunStore, SelectionRequest, StoreError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{0}")]
    Usage(String),
    #[error("serve: {0}")]
    Serve(std::io::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "score-lab", version, about = "Shortcut detection and mitigation lab")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags every subcommand accepts.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Common {
    /// Seed for data generation, training, selection draws and fine-tuning.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file with one section per subcommand and an optional `[common]`.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Artifact directory of this command (defaults to a store location).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Store root; falls back to `$SCORE_LAB_ROOT`, then `./score-lab`.
    #[arg(long, global = true)]
    pub root: Option<PathBuf>,
}

/// Declares an option struct parsed from both flags and a config section,
/// plus `or`, which keeps flag values and fills gaps from the file.
macro_rules! options {
    ($(#[$meta:meta])* $name:ident { $($(#[$fmeta:meta])* $field:ident : $ty:ty),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Default, Args, Deserialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct $name {
            $($(#[$fmeta])* #[arg(long)] pub $field: Option<$ty>,)*
        }

        impl $name {
            pub fn or(self, file: Self) -> Self {
                Self { $($field: self.$field.or(file.$field),)* }
            }
        }
    };
}

options!(GenDataOpts {
    /// `wb95`, `wb100`, `isic-like` or `knee-like`.
    preset: Preset,
    /// Training split size override.
    train_size: usize,
    /// Dataset name under `datasets/` (default `<preset>-s<seed>`).
    name: String,
});

options!(TrainOpts {
    /// Dataset name or directory.
    data: String,
    /// Passes over the training split.
    epochs: usize,
    /// SGD step size.
    learning_rate: f32,
    /// Samples per minibatch.
    batch_size: usize,
    /// L2 penalty coefficient.
    weight_decay: f32,
    /// SGD momentum.
    momentum: f32,
    /// Model name under `models/` (default `<dataset>-erm-s<seed>`).
    name: String,
});

options!(DetectOpts {
    /// Dataset name or directory.
    data: String,
    /// Model name, directory or checkpoint file.
    model: String,
    /// Class whose top-activated samples are ranked.
    class: usize,
    /// Number of ranked samples.
    n_ref: usize,
    /// Fraction of positive-relevance pixels kept in a masked input.
    mask_quantile: f64,
    /// Run name under `runs/`.
    run_id: String,
});

options!(SelectOpts {
    /// Detection run id or directory.
    run: String,
    /// Select by ground-truth heatmap mass instead of explicit ids.
    #[arg(num_args = 0..=1, default_missing_value = "true")]
    oracle: bool,
    /// Minimum fraction of positive heatmap mass inside the ground-truth mask.
    tau: f64,
    /// Maximum number of selected samples.
    t_max: usize,
    /// Dataset the run was computed on (oracle only).
    data: String,
    /// Selection JSON file, `{"sample_ids": [...]}` with optional `run_id` and `class_id`.
    file: PathBuf,
    /// Comma-separated sample ids.
    ids: String,
});

options!(ServeOpts {
    /// Bind address (default 127.0.0.1).
    host: String,
    /// Port (default 8080).
    port: u16,
});

options!(FinetuneOpts {
    /// Dataset name or directory.
    data: String,
    /// Model name, directory or checkpoint file.
    model: String,
    /// Detection run holding the selection.
    run: String,
    /// Penalty weight.
    alpha: f32,
    /// Fine-tuning epochs.
    epochs: usize,
    /// Size of the class-balanced fine-tuning set.
    ft_size: usize,
    /// `both`, `positive` or `none`.
    mode: RegMode,
    /// `lrp` or `gt`.
    masks: String,
    /// SGD step size.
    learning_rate: f32,
    /// Samples per class-balanced minibatch.
    batch_size: usize,
    /// L2 penalty coefficient.
    weight_decay: f32,
    /// Comma-separated layer indices to regularize.
    layers: String,
    /// Output name under `finetunes/`.
    name: String,
});

options!(EvalOpts {
    /// Dataset name or directory.
    data: String,
    /// Model name, directory or checkpoint file.
    model: String,
    /// `train`, `val` or `test`.
    split: String,
});

options!(ReportOpts {
    /// Preset whose comparison suite is run.
    preset: Preset,
    /// Number of seeds, counted from `--seed` (default 5).
    seeds: usize,
    /// Three seeds.
    #[arg(num_args = 0..=1, default_missing_value = "true")]
    quick: bool,
    /// Recipe TOML file; replaces the preset suite.
    recipe: PathBuf,
    /// Rebuild aggregates from an existing report directory.
    regenerate: PathBuf,
    /// Report name under `reports/`.
    name: String,
});

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (train, val and test splits).
    GenData(GenDataOpts),
    /// Train a PatchNet by plain cross-entropy.
    Train(TrainOpts),
    /// Rank top-activated samples, compute heatmaps and export a review bundle.
    Detect(DetectOpts),
    /// Record spurious-positive samples for a detection run.
    Select(SelectOpts),
    /// Serve review bundles and accept selections over HTTP.
    Serve(ServeOpts),
    /// Fine-tune with the spurious-contribution penalty.
    Finetune(FinetuneOpts),
    /// Group accuracies of a model on a dataset split.
    Eval(EvalOpts),
    /// Run a multi-seed experiment and write report.json and report.txt.
    Report(ReportOpts),
}

impl Command {
    fn section(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::Detect(_) => "detect",
            Command::Select(_) => "select",
            Command::Serve(_) => "serve",
            Command::Finetune(_) => "finetune",
            Command::Eval(_) => "eval",
            Command::Report(_) => "report",
        }
    }
}

struct Ctx {
    store: RunStore,
    seed: u64,
    out: Option<PathBuf>,
}

impl Ctx {
    fn out_or(&self, default: PathBuf) -> PathBuf {
        self.out.clone().unwrap_or(default)
    }
}

/// Runs the parsed command and returns a one-line summary for stdout.
pub fn run(cli: Cli) -> CliResult<String> {
    let file = match &cli.common.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let file_common: Common = file.section("common")?;
    let ctx = Ctx {
        store: RunStore::resolve(cli.common.root.as_deref().or(file_common.root.as_deref())),
        seed: cli.common.seed.or(file_common.seed).unwrap_or(0),
        out: cli.common.out.or(file_common.out),
    };
    let section = cli.command.section();
    match cli.command {
        Command::GenData(o) => gen_data(&ctx, o.or(file.section(section)?)),
        Command::Train(o) => train(&ctx, o.or(file.section(section)?)),
        Command::Detect(o) => detect(&ctx, o.or(file.section(section)?)),
        Command::Select(o) => select(&ctx, o.or(file.section(section)?)),
        Command::Serve(o) => serve(&ctx, o.or(file.section(section)?)),
        Command::Finetune(o) => finetune(&ctx, o.or(file.section(section)?)),
        Command::Eval(o) => eval_cmd(&ctx, o.or(file.section(section)?)),
        Command::Report(o) => report(&ctx, o.or(file.section(section)?)),
    }
}

fn required<T>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::Usage(format!("missing --{flag}")))
}

fn dir_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into())
}

fn datasets_dir(store: &RunStore) -> PathBuf {
    store.root().join("datasets")
}

fn models_dir(store: &RunStore) -> PathBuf {
    store.root().join("models")
}

fn finetunes_dir(store: &RunStore) -> PathBuf {
    store.root().join("finetunes")
}

fn reports_dir(store: &RunStore) -> PathBuf {
    store.root().join("reports")
}

pub const SPEC_FILE: &str = "spec.json";
pub const MODEL_FILE: &str = "model.ckpt";
pub const TRAIN_LOG: &str = "train.json";
pub const CURVES_FILE: &str = "curves.json";
pub const CONFIG_ECHO: &str = "config.json";

/// A dataset directory (holding `spec.json`) or a name under `datasets/`.
fn resolve_dataset(store: &RunStore, data: &str) -> CliResult<PathBuf> {
    let direct = PathBuf::from(data);
    if direct.join(SPEC_FILE).is_file() {
        return Ok(direct);
    }
    let named = datasets_dir(store).join(data);
    if named.join(SPEC_FILE).is_file() {
        return Ok(named);
    }
    Err(CliError::Usage(format!("no dataset {data:?} (looked for {SPEC_FILE})")))
}

fn load_split(dir: &Path, split: Split) -> CliResult<GroupedDataset> {
    Ok(synth::load_dataset(&dir.join(split.name()))?)
}

/// A checkpoint file, a directory holding `model.ckpt`, or a name under
/// `models/` or `finetunes/`.
fn resolve_model(store: &RunStore, model: &str) -> CliResult<PathBuf> {
    let direct = PathBuf::from(model);
    if direct.is_file() {
        return Ok(direct);
    }
    for candidate in [
        direct.join(MODEL_FILE),
        models_dir(store).join(model).join(MODEL_FILE),
        finetunes_dir(store).join(model).join(MODEL_FILE),
    ] {
        if candidate.is_file() {
            return Ok(candidate);
        }
    }
    Err(CliError::Usage(format!("no model {model:?}")))
}

fn gen_data(ctx: &Ctx, o: GenDataOpts) -> CliResult<String> {
    let which = required(o.preset, "preset")?;
    let mut spec = synth::preset(which, ctx.seed);
    if let Some(n) = o.train_size {
        spec.train.size = n;
    }
    spec.validate()?;
    let name = o.name.unwrap_or_else(|| format!("{}-s{}", which.name(), ctx.seed));
    let dir = ctx.out_or(datasets_dir(&ctx.store).join(&name));
    let splits = synth::generate(&spec)?;
    for (split, data) in [
        (Split::Train, &splits.train),
        (Split::Val, &splits.val),
        (Split::Test, &splits.test),
    ] {
        synth::save_dataset(data, &dir.join(split.name()))?;
    }
    fsutil::write_json(&dir.join(SPEC_FILE), &spec)?;
    Ok(format!(
        "dataset {} ({} train / {} val / {} test)",
        dir.display(),
        splits.train.len(),
        splits.val.len(),
        splits.test.len()
    ))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainLog {
    pub dataset: String,
    pub config: TrainConfig,
    pub loss_curve: Vec<f64>,
}

fn train(ctx: &Ctx, o: TrainOpts) -> CliResult<String> {
    let data = required(o.data, "data")?;
    let data_dir = resolve_dataset(&ctx.store, &data)?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        learning_rate: o.learning_rate.unwrap_or(defaults.learning_rate),
        batch_size: o.batch_size.unwrap_or(defaults.batch_size),
        epochs: o.epochs.unwrap_or(defaults.epochs),
        seed: ctx.seed,
        weight_decay: o.weight_decay.unwrap_or(defaults.weight_decay),
        momentum: o.momentum.unwrap_or(defaults.momentum),
    };
    cfg.validate()?;
    let train = load_split(&data_dir, Split::Train)?;
    let mut model = network::build_patchnet::<f32>(train.spec.num_classes, ctx.seed)?;
    let outcome = network::train_erm(&mut model, &train, &cfg)?;
    let name = o
        .name
        .unwrap_or_else(|| format!("{}-erm-s{}", dir_name(&data_dir), ctx.seed));
    let dir = ctx.out_or(models_dir(&ctx.store).join(&name));
    fsutil::write_atomic(&dir.join(MODEL_FILE), &checkpoint_bytes(&model)?)?;
    fsutil::write_json(
        &dir.join(TRAIN_LOG),
        &TrainLog {
            dataset: dir_name(&data_dir),
            config: cfg,
            loss_curve: outcome.loss_curve.iter().map(|&l| l as f64).collect(),
        },
    )?;
    Ok(format!("model {}", dir.join(MODEL_FILE).display()))
}

fn detect(ctx: &Ctx, o: DetectOpts) -> CliResult<String> {
    let data_dir = resolve_dataset(&ctx.store, &required(o.data, "data")?)?;
    let model_name = required(o.model, "model")?;
    let model = load_checkpoint::<f32>(&resolve_model(&ctx.store, &model_name)?)?;
    let class_id = o.class.unwrap_or(0);
    let run_id = o
        .run_id
        .unwrap_or_else(|| format!("{}-c{class_id}", dir_name(Path::new(&model_name))));
    let dir = match &ctx.out {
        Some(d) => d.clone(),
        None => ctx.store.run_path(&run_id)?,
    };
    let train = load_split(&data_dir, Split::Train)?;
    let run = detection::detect(
        &model,
        &train,
        class_id,
        o.n_ref.unwrap_or(detection::DEFAULT_N_REF),
        o.mask_quantile.unwrap_or(detection::DEFAULT_MASK_QUANTILE),
        run_id.clone(),
    )?;
    detection::save_run(&run, &dir)?;
    detection::export_review_bundle(&run, &train, &dir)?;
    Ok(format!(
        "run {run_id}: {} entries in {}",
        run.entries.len(),
        dir.display()
    ))
}

fn parse_ids(text: &str) -> CliResult<Vec<usize>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| CliError::Usage(format!("bad sample id {s:?}"))))
        .collect()
}

fn select(ctx: &Ctx, o: SelectOpts) -> CliResult<String> {
    let run_id = required(o.run, "run")?;
    let run_dir = ctx.store.run_dir(&run_id)?;
    let request = if o.oracle.unwrap_or(false) {
        let data_dir = resolve_dataset(&ctx.store, &required(o.data, "data")?)?;
        let run = detection::load_run(&run_dir)?;
        let train = load_split(&data_dir, Split::Train)?;
        let set = detection::oracle_select(
            &run,
            &train,
            o.tau.unwrap_or(detection::DEFAULT_TAU),
            o.t_max.unwrap_or(detection::DEFAULT_T_MAX),
        )?;
        SelectionRequest {
            run_id: Some(run.run_id),
            class_id: Some(run.class_id),
            sample_ids: set.sample_ids,
            source: Some(SelectionSource::Oracle),
        }
    } else if let Some(path) = o.file {
        let request: SelectionRequest = fsutil::read_json(&path)?;
        SelectionRequest {
            source: Some(SelectionSource::File),
            ..request
        }
    } else if let Some(ids) = o.ids {
        SelectionRequest {
            run_id: None,
            class_id: None,
            sample_ids: parse_ids(&ids)?,
            source: Some(SelectionSource::Human),
        }
    } else {
        return Err(CliError::Usage("select needs --oracle, --file or --ids".into()));
    };
    let stored = ctx.store.write_selection(&run_id, request)?;
    if let Some(out) = &ctx.out {
        fsutil::write_json(&out.join(crate::store::SELECTION_FILE), &stored.selection())?;
    }
    Ok(format!(
        "run {run_id}: {} samples selected (revision {})",
        stored.sample_ids.len(),
        stored.revision
    ))
}

fn serve(ctx: &Ctx, o: ServeOpts) -> CliResult<String> {
    let host = o.host.unwrap_or_else(|| "127.0.0.1".into());
    let addr: SocketAddr = format!("{host}:{}", o.port.unwrap_or(8080))
        .parse()
        .map_err(|e| CliError::Usage(format!("bad address: {e}")))?;
    let rt = tokio::runtime::Runtime::new().map_err(CliError::Serve)?;
    rt.block_on(crate::service::serve(ctx.store.clone(), addr))
        .map_err(CliError::Serve)?;
    Ok("server stopped".into())
}

/// Inputs and effective settings of a fine-tuning run.
#[derive(Debug, Serialize, Deserialize)]
pub struct FinetuneEcho {
    pub dataset: String,
    pub model: String,
    pub run_id: String,
    pub masks: MaskSource,
    pub positives: Vec<usize>,
    pub config: FinetuneConfig,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CurvePoint {
    pub ce: f64,
    pub reg: f64,
    pub zbar_l1: f64,
    pub wga_val: Option<f64>,
}

/// `curves.json`: epoch → losses and validation WGA.
pub fn curves_json(curves: &[EpochCurve]) -> std::collections::BTreeMap<usize, CurvePoint> {
    curves
        .iter()
        .map(|c| {
            (
                c.epoch,
                CurvePoint {
                    ce: c.ce,
                    reg: c.reg,
                    zbar_l1: c.zbar_l1,
                    wga_val: c.wga_val,
                },
            )
        })
        .collect()
}

fn finetune(ctx: &Ctx, o: FinetuneOpts) -> CliResult<String> {
    let data_dir = resolve_dataset(&ctx.store, &required(o.data, "data")?)?;
    let model_name = required(o.model, "model")?;
    let mut model = load_checkpoint::<f32>(&resolve_model(&ctx.store, &model_name)?)?;
    let run_id = required(o.run, "run")?;
    let run_dir = ctx.store.run_dir(&run_id)?;
    let run = detection::load_run(&run_dir)?;
    let stored = ctx
        .store
        .selection(&run_id)?
        .ok_or_else(|| CliError::Usage(format!("run {run_id} has no selection; run `select` first")))?;
    let masks = match o.masks.as_deref().unwrap_or("lrp") {
        "lrp" => MaskSource::Lrp,
        "gt" | "ground-truth" => MaskSource::GroundTruth,
        other => return Err(CliError::Usage(format!("unknown mask source {other:?}"))),
    };
    let defaults = FinetuneConfig::default();
    let cfg = FinetuneConfig {
        alpha: o.alpha.unwrap_or(defaults.alpha),
        epochs: o.epochs.unwrap_or(defaults.epochs),
        ft_size: o.ft_size.unwrap_or(defaults.ft_size),
        layers: match &o.layers {
            Some(l) => parse_ids(l)?,
            None => defaults.layers.clone(),
        },
        learning_rate: o.learning_rate.unwrap_or(defaults.learning_rate),
        batch_size: o.batch_size.unwrap_or(defaults.batch_size),
        weight_decay: o.weight_decay.unwrap_or(defaults.weight_decay),
        mode: o.mode.unwrap_or(defaults.mode),
        seed: ctx.seed,
        ..defaults
    };
    cfg.validate()?;
    let train = load_split(&data_dir, Split::Train)?;
    let val = load_split(&data_dir, Split::Val)?;
    let positives = detection::ingest_selection(&run, &train, &stored.selection())?;
    let set = mitigation::build_finetune_set(&train, &positives, cfg.ft_size, ctx.seed)?;
    let outcome = match masks {
        MaskSource::Lrp => mitigation::finetune_score(&mut model, &set, &cfg, Some(&val))?,
        MaskSource::GroundTruth => mitigation::finetune_with_gt_masks(&mut model, &set, &train, &cfg, Some(&val))?,
    };
    let name = o.name.unwrap_or_else(|| {
        format!(
            "{run_id}-{}-s{}",
            serde_json::to_value(cfg.mode)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            ctx.seed
        )
    });
    let dir = ctx.out_or(finetunes_dir(&ctx.store).join(&name));
    fsutil::write_atomic(&dir.join(MODEL_FILE), &checkpoint_bytes(&model)?)?;
    fsutil::write_json(&dir.join(CURVES_FILE), &curves_json(&outcome.curves))?;
    fsutil::write_json(
        &dir.join(CONFIG_ECHO),
        &FinetuneEcho {
            dataset: dir_name(&data_dir),
            model: model_name,
            run_id,
            masks,
            positives: positives.sample_ids.clone(),
            config: cfg,
        },
    )?;
    let last = outcome.curves.last();
    Ok(format!(
        "fine-tuned {} epochs, val WGA {}, saved to {}",
        outcome.curves.len(),
        last.and_then(|c| c.wga_val)
            .map_or("n/a".to_string(), |w| format!("{w:.3}")),
        dir.display()
    ))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalRecord {
    pub dataset: String,
    pub model: String,
    pub split: Split,
    pub report: GroupReport,
}

fn eval_cmd(ctx: &Ctx, o: EvalOpts) -> CliResult<String> {
    let data_dir = resolve_dataset(&ctx.store, &required(o.data, "data")?)?;
    let model_name = required(o.model, "model")?;
    let model_path = resolve_model(&ctx.store, &model_name)?;
    let model = load_checkpoint::<f32>(&model_path)?;
    let split = match o.split.as_deref().unwrap_or("test") {
        "train" => Split::Train,
        "val" => Split::Val,
        "test" => Split::Test,
        other => return Err(CliError::Usage(format!("unknown split {other:?}"))),
    };
    let data = load_split(&data_dir, split)?;
    let report = evaluate(&model, &data)?;
    let default_dir = model_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let path = ctx.out_or(default_dir).join(format!("eval-{}.json", split.name()));
    let line = format!(
        "WGA {:.3} AVG {:.3} ({} samples) -> {}",
        report.wga,
        report.avg,
        data.len(),
        path.display()
    );
    fsutil::write_json(
        &path,
        &EvalRecord {
            dataset: dir_name(&data_dir),
            model: model_name,
            split,
            report,
        },
    )?;
    Ok(line)
}

fn report(ctx: &Ctx, o: ReportOpts) -> CliResult<String> {
    if let Some(dir) = o.regenerate {
        let rebuilt = eval::regenerate_report(&dir)?;
        let out = ctx.out_or(dir);
        eval::save_report(&rebuilt, &out)?;
        return Ok(eval::render_table(&rebuilt));
    }
    let mut recipe: Recipe = match (&o.recipe, o.preset) {
        (Some(path), _) => {
            let file = ConfigFile::load(path)?;
            file.section::<Option<Recipe>>("recipe")?
                .ok_or_else(|| CliError::Usage(format!("{} has no [recipe] section", path.display())))?
        }
        (None, Some(preset)) => {
            let n = o.seeds.unwrap_or(if o.quick.unwrap_or(false) {
                eval::QUICK_SEEDS
            } else {
                eval::DEFAULT_SEEDS
            });
            let mut r = eval::suite_recipe(preset, n);
            r.seeds = (ctx.seed..ctx.seed + n as u64).collect();
            r
        }
        (None, None) => return Err(CliError::Usage("report needs --preset or --recipe".into())),
    };
    if let Some(name) = o.name {
        recipe.name = name;
    }
    let report = eval::run_experiment(&recipe)?;
    let dir = ctx.out_or(reports_dir(&ctx.store).join(&recipe.name));
    eval::save_report(&report, &dir)?;
    Ok(eval::render_table(&report))
}

/// Spec of a stored dataset, for callers that need generator settings.
pub fn dataset_spec(dir: &Path) -> CliResult<DatasetSpec> {
    Ok(fsutil::read_json(&dir.join(SPEC_FILE))?)
}
