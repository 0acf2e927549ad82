//! Command-line front end.
//!
//! Exit codes: 0 success, 2 input contract violation (bad flags, mismatched
//! dimensions, unpaired files), 3 file format error, 4 internal error.
//!
//! Settings resolve as command-line flag, then `--config` TOML file, then
//! built-in default. The effective settings are echoed into a `meta.json`
//! next to every output. Worker count never influences outputs and is not
//! recorded.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use crate::coarse::{
    apply_refinement, coarse_map_from_queries, refinement_mask, DEFAULT_CONF_THRESHOLD,
    DEFAULT_MASK_THRESHOLD,
};
use crate::corpus::{self, ClutterHost, SynthConfig};
use crate::error::{Error, FormatError};
use crate::io;
use crate::mbp::{MbpConfig, MbpMode};
use crate::metrics::{aggregate, evaluate, EvalConfig, GroundTruth, MetricReport};
use crate::oasc::{MaskOrder, OascConfig};
use crate::pipeline::{refine, RefineConfig, Stages};
use crate::score_map::ScoreMap;
use crate::synth::Shape;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONTRACT: i32 = 2;
pub const EXIT_FORMAT: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Contract(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Contract(_) => EXIT_CONTRACT,
            CliError::Format(_) => EXIT_FORMAT,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Contract(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "objectomaly", version, about = "Refine and evaluate anomaly score maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate a coarse map with instance masks and sharpen boundaries.
    Refine(RefineCmd),
    /// Score predicted maps against ground truth.
    Eval(EvalCmd),
    /// Generate a seeded synthetic corpus.
    Synth(SynthCmd),
    /// Corpus -> every stage combination -> evaluation -> ablation table.
    Pipeline(PipelineCmd),
    /// Coarse map from serialized mask-classification query outputs.
    ScoreQueries(ScoreQueriesCmd),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Enhance,
    Literal,
    Smooth,
}

impl From<ModeArg> for MbpMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Enhance => MbpMode::Enhance,
            ModeArg::Literal => MbpMode::Literal,
            ModeArg::Smooth => MbpMode::Smooth,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OrderArg {
    Desc,
    Asc,
}

impl From<OrderArg> for MaskOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::Desc => MaskOrder::DescendingArea,
            OrderArg::Asc => MaskOrder::AscendingArea,
        }
    }
}

#[derive(Debug, Clone, Args, Default)]
pub struct CommonArgs {
    /// TOML file with default settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads for image-level parallelism.
    #[arg(long, env = "OBJECTOMALY_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct RefineArgs {
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum)]
    pub mbp_mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub oasc_order: Option<OrderArg>,
    #[arg(long)]
    pub no_oasc: bool,
    #[arg(long)]
    pub no_mbp: bool,
}

#[derive(Debug, Clone, Args, Default)]
pub struct EvalArgs {
    #[arg(long)]
    pub tau_match: Option<f64>,
    /// Comma-separated binarization thresholds.
    #[arg(long, value_delimiter = ',')]
    pub tau_bins: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct SynthArgs {
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub n_ood: Option<usize>,
    #[arg(long)]
    pub n_distractors: Option<usize>,
    #[arg(long)]
    pub min_semi_axis: Option<usize>,
    #[arg(long)]
    pub max_semi_axis: Option<usize>,
    #[arg(long)]
    pub blur_sigma: Option<f64>,
    #[arg(long)]
    pub ramp: Option<f64>,
    #[arg(long)]
    pub clutter_count: Option<usize>,
    #[arg(long)]
    pub clutter_amplitude: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long, value_enum)]
    pub clutter_on: Option<ClutterHost>,
    #[arg(long)]
    pub mu_ood: Option<f64>,
    #[arg(long)]
    pub mu_bg: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub dilate_erode: Option<i64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub spurious: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RefineCmd {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub masks: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub refine: RefineArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct EvalCmd {
    /// Predicted map (FMAP) or directory of maps.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground truth (PGM) or directory.
    #[arg(long)]
    pub gt: PathBuf,
    /// Output directory for metrics.json and metrics.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub eval: EvalArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct SynthCmd {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub n: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub synth: SynthArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct PipelineCmd {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Use an existing corpus instead of generating one under `<out>/corpus`.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub n: u64,
    #[command(flatten)]
    pub synth: SynthArgs,
    #[command(flatten)]
    pub refine: RefineArgs,
    #[command(flatten)]
    pub eval: EvalArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ScoreQueriesCmd {
    /// QJSON document.
    pub queries: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Gate the map with the confidence-filtered query masks.
    #[arg(long)]
    pub apply_refinement_mask: bool,
    #[arg(long)]
    pub conf_threshold: Option<f64>,
    #[arg(long)]
    pub mask_threshold: Option<f64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    workers: Option<usize>,
    #[serde(default)]
    refine: RefineSection,
    #[serde(default)]
    eval: EvalSection,
    #[serde(default)]
    scoring: ScoringSection,
    #[serde(default)]
    synth: SynthSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RefineSection {
    oasc: Option<bool>,
    mbp: Option<bool>,
    sigma: Option<f64>,
    lambda: Option<f64>,
    mbp_mode: Option<MbpMode>,
    oasc_order: Option<MaskOrder>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalSection {
    tau_match: Option<f64>,
    tau_bins: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoringSection {
    conf_threshold: Option<f64>,
    mask_threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthSection {
    width: Option<usize>,
    height: Option<usize>,
    n_ood: Option<usize>,
    n_distractors: Option<usize>,
    shapes: Option<Vec<Shape>>,
    min_semi_axis: Option<usize>,
    max_semi_axis: Option<usize>,
    blur_sigma: Option<f64>,
    ramp: Option<f64>,
    clutter_count: Option<usize>,
    clutter_amplitude: Option<f64>,
    noise_sigma: Option<f64>,
    clutter_on: Option<ClutterHost>,
    mu_ood: Option<f64>,
    mu_bg: Option<f64>,
    dilate_erode: Option<i64>,
    dropout: Option<f64>,
    spurious: Option<usize>,
}

fn load_config(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    toml::from_str(&text)
        .map_err(|e| FormatError::Invalid(format!("{}: {e}", path.display())).into())
}

fn resolve_workers(common: &CommonArgs, file: &FileConfig) -> CliResult<usize> {
    let n = common
        .workers
        .or(file.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if n == 0 {
        return Err(CliError::Contract("--workers must be at least 1".into()));
    }
    Ok(n)
}

fn resolve_refine(args: &RefineArgs, file: &FileConfig) -> CliResult<RefineConfig> {
    let sec = &file.refine;
    let defaults = MbpConfig::default();
    let cfg = RefineConfig {
        stages: Stages {
            oasc: !args.no_oasc && sec.oasc.unwrap_or(true),
            mbp: !args.no_mbp && sec.mbp.unwrap_or(true),
        },
        oasc: OascConfig {
            order: args
                .oasc_order
                .map(Into::into)
                .or(sec.oasc_order)
                .unwrap_or_default(),
        },
        mbp: MbpConfig {
            sigma: args.sigma.or(sec.sigma).unwrap_or(defaults.sigma),
            lambda: args.lambda.or(sec.lambda).unwrap_or(defaults.lambda),
            mode: args.mbp_mode.map(Into::into).or(sec.mbp_mode).unwrap_or_default(),
        },
    };
    cfg.mbp.validate()?;
    Ok(cfg)
}

fn resolve_eval(args: &EvalArgs, file: &FileConfig) -> CliResult<EvalConfig> {
    let defaults = EvalConfig::default();
    let cfg = EvalConfig {
        tau_bins: args
            .tau_bins
            .clone()
            .or_else(|| file.eval.tau_bins.clone())
            .unwrap_or(defaults.tau_bins),
        tau_match: args.tau_match.or(file.eval.tau_match).unwrap_or(defaults.tau_match),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_synth(args: &SynthArgs, file: &FileConfig) -> CliResult<SynthConfig> {
    let sec = &file.synth;
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        scene: crate::synth::SceneSpec {
            seed: 0,
            width: args.width.or(sec.width).unwrap_or(d.scene.width),
            height: args.height.or(sec.height).unwrap_or(d.scene.height),
            n_ood_objects: args.n_ood.or(sec.n_ood).unwrap_or(d.scene.n_ood_objects),
            n_id_distractors: args
                .n_distractors
                .or(sec.n_distractors)
                .unwrap_or(d.scene.n_id_distractors),
            shapes: sec.shapes.clone().unwrap_or(d.scene.shapes),
            min_semi_axis: args.min_semi_axis.or(sec.min_semi_axis).unwrap_or(d.scene.min_semi_axis),
            max_semi_axis: args.max_semi_axis.or(sec.max_semi_axis).unwrap_or(d.scene.max_semi_axis),
            gap: d.scene.gap,
            max_retries: d.scene.max_retries,
        },
        corruption: crate::synth::CorruptionSpec {
            boundary_blur_sigma: args
                .blur_sigma
                .or(sec.blur_sigma)
                .unwrap_or(d.corruption.boundary_blur_sigma),
            intra_object_ramp: args.ramp.or(sec.ramp).unwrap_or(d.corruption.intra_object_ramp),
            clutter_count: args
                .clutter_count
                .or(sec.clutter_count)
                .unwrap_or(d.corruption.clutter_count),
            clutter_amplitude: args
                .clutter_amplitude
                .or(sec.clutter_amplitude)
                .unwrap_or(d.corruption.clutter_amplitude),
            pixel_noise_sigma: args
                .noise_sigma
                .or(sec.noise_sigma)
                .unwrap_or(d.corruption.pixel_noise_sigma),
            mu_ood: args.mu_ood.or(sec.mu_ood).unwrap_or(d.corruption.mu_ood),
            mu_bg: args.mu_bg.or(sec.mu_bg).unwrap_or(d.corruption.mu_bg),
        },
        perturb: crate::synth::MaskPerturbSpec {
            dilate_erode_radius: args
                .dilate_erode
                .or(sec.dilate_erode)
                .unwrap_or(d.perturb.dilate_erode_radius),
            dropout_probability: args.dropout.or(sec.dropout).unwrap_or(d.perturb.dropout_probability),
            spurious_mask_count: args.spurious.or(sec.spurious).unwrap_or(d.perturb.spurious_mask_count),
        },
        clutter_host: args.clutter_on.or(sec.clutter_on).unwrap_or(d.clutter_host),
    };
    cfg.corruption.validate()?;
    cfg.perturb.validate()?;
    Ok(cfg)
}

fn resolve_scoring(cmd: &ScoreQueriesCmd, file: &FileConfig) -> (f64, f64) {
    (
        cmd.conf_threshold
            .or(file.scoring.conf_threshold)
            .unwrap_or(DEFAULT_CONF_THRESHOLD),
        cmd.mask_threshold
            .or(file.scoring.mask_threshold)
            .unwrap_or(DEFAULT_MASK_THRESHOLD),
    )
}

fn thread_pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| FormatError::io(parent, e))?;
    }
    std::fs::write(path, text + "\n").map_err(|e| FormatError::io(path, e).into())
}

/// `dir/name.fmap` -> `dir/name.meta.json`
fn meta_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.meta.json"))
}

fn refine_meta(cfg: &RefineConfig) -> serde_json::Value {
    json!({ "stages": cfg.stages, "oasc": cfg.oasc, "mbp": cfg.mbp })
}

fn cmd_refine(cmd: &RefineCmd) -> CliResult<()> {
    let file = load_config(cmd.common.config.as_deref())?;
    let cfg = resolve_refine(&cmd.refine, &file)?;
    let init = io::read_fmap(&cmd.scores)?;
    let masks = match &cmd.masks {
        Some(path) => Some(io::read_mask_document(path)?),
        None if cfg.stages.oasc => {
            return Err(CliError::Contract("--masks is required unless --no-oasc is given".into()))
        }
        None => None,
    };
    if let Some(m) = &masks {
        if m.dims() != init.dims() {
            return Err(CliError::Contract(format!(
                "scores are {}x{} but masks are {}x{}",
                init.width(),
                init.height(),
                m.width(),
                m.height()
            )));
        }
    }
    let out = refine(&init, masks.as_ref(), &cfg)?;
    io::write_fmap(&out, &cmd.out)?;
    write_json(
        &meta_path(&cmd.out),
        &json!({
            "command": "refine",
            "scores": cmd.scores,
            "masks": cmd.masks,
            "refine": refine_meta(&cfg),
        }),
    )
}

/// Maps a prediction or ground-truth path to `stem -> file`. Directories may
/// hold `<stem>.<ext>` files or `<stem>/<nested>` sample folders.
fn collect_inputs(path: &Path, ext: &str, nested: &str) -> CliResult<BTreeMap<String, PathBuf>> {
    let mut found = BTreeMap::new();
    if path.is_file() {
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        found.insert(stem, path.to_path_buf());
        return Ok(found);
    }
    let entries = std::fs::read_dir(path).map_err(|e| FormatError::io(path, e))?;
    for entry in entries {
        let p = entry.map_err(|e| FormatError::io(path, e))?.path();
        if p.is_file() && p.extension().is_some_and(|e| e == ext) {
            let stem = p.file_stem().unwrap().to_string_lossy().into_owned();
            found.insert(stem, p);
        } else if p.is_dir() && p.join(nested).is_file() {
            let stem = p.file_name().unwrap().to_string_lossy().into_owned();
            found.insert(stem, p.join(nested));
        }
    }
    Ok(found)
}

fn evaluate_pairs(
    pairs: &[(String, ScoreMap, GroundTruth)],
    cfg: &EvalConfig,
    pool: &rayon::ThreadPool,
) -> CliResult<(Vec<(String, MetricReport)>, MetricReport)> {
    let reports: Vec<Result<(String, MetricReport), Error>> = pool.install(|| {
        pairs
            .par_iter()
            .map(|(id, pred, gt)| Ok((id.clone(), evaluate(pred, gt, cfg)?)))
            .collect()
    });
    let reports = reports.into_iter().collect::<Result<Vec<_>, _>>()?;
    let pooled: Vec<MetricReport> = reports.iter().map(|(_, r)| r.clone()).collect();
    let agg = aggregate(&pooled)?;
    Ok((reports, agg))
}

fn cmd_eval(cmd: &EvalCmd) -> CliResult<()> {
    let file = load_config(cmd.common.config.as_deref())?;
    let cfg = resolve_eval(&cmd.eval, &file)?;
    let workers = resolve_workers(&cmd.common, &file)?;
    let preds = collect_inputs(&cmd.pred, "fmap", corpus::COARSE_FILE)?;
    let gts = collect_inputs(&cmd.gt, "pgm", corpus::GT_FILE)?;
    if cmd.pred.is_file() && cmd.gt.is_file() {
        // a single explicit pair needs no stem matching
    } else {
        let unmatched: Vec<&String> = preds
            .keys()
            .filter(|k| !gts.contains_key(*k))
            .chain(gts.keys().filter(|k| !preds.contains_key(*k)))
            .collect();
        if !unmatched.is_empty() {
            return Err(CliError::Contract(format!(
                "unmatched prediction/ground-truth stems: {}",
                unmatched.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            )));
        }
    }
    if preds.is_empty() {
        return Err(CliError::Contract("no predictions found".into()));
    }
    let mut pairs = Vec::with_capacity(preds.len());
    for ((id, pred_path), gt_path) in preds.iter().zip(gts.values()) {
        let pred = io::read_fmap(pred_path)?;
        let gt = io::read_gt_pgm(gt_path)?;
        if pred.dims() != gt.dims() {
            return Err(CliError::Contract(format!(
                "{id}: prediction is {}x{}, ground truth is {}x{}",
                pred.width(),
                pred.height(),
                gt.width(),
                gt.height()
            )));
        }
        pairs.push((id.clone(), pred, gt));
    }
    let pool = thread_pool(workers)?;
    let (reports, agg) = evaluate_pairs(&pairs, &cfg, &pool)?;
    io::write_metrics(&cmd.out, &reports, &agg, &json!({ "eval": cfg }))?;
    Ok(())
}

fn generate_corpus(
    root: &Path,
    seeds: std::ops::Range<u64>,
    cfg: &SynthConfig,
    pool: &rayon::ThreadPool,
) -> CliResult<()> {
    let seeds: Vec<u64> = seeds.collect();
    let results: Vec<CliResult<()>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let sample = corpus::synthesize(cfg, seed)?;
                let mut spec = cfg.clone();
                spec.scene.seed = seed;
                corpus::write_sample(root, &sample, &json!({ "seed": seed, "synth": spec }))?;
                Ok(())
            })
            .collect()
    });
    results.into_iter().collect()
}

fn cmd_synth(cmd: &SynthCmd) -> CliResult<()> {
    let file = load_config(cmd.common.config.as_deref())?;
    let cfg = resolve_synth(&cmd.synth, &file)?;
    let workers = resolve_workers(&cmd.common, &file)?;
    let end = cmd
        .seed
        .checked_add(cmd.n)
        .ok_or_else(|| CliError::Contract("seed range overflows".into()))?;
    generate_corpus(&cmd.out, cmd.seed..end, &cfg, &thread_pool(workers)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

fn cmd_pipeline(cmd: &PipelineCmd) -> CliResult<()> {
    let file = load_config(cmd.common.config.as_deref())?;
    let refine_cfg = resolve_refine(&cmd.refine, &file)?;
    let eval_cfg = resolve_eval(&cmd.eval, &file)?;
    let workers = resolve_workers(&cmd.common, &file)?;
    let pool = thread_pool(workers)?;

    let (corpus_root, corpus_meta) = match &cmd.corpus {
        Some(dir) => (dir.clone(), json!({ "corpus": dir })),
        None => {
            let synth_cfg = resolve_synth(&cmd.synth, &file)?;
            let root = cmd.out.join("corpus");
            let end = cmd
                .seed
                .checked_add(cmd.n)
                .ok_or_else(|| CliError::Contract("seed range overflows".into()))?;
            generate_corpus(&root, cmd.seed..end, &synth_cfg, &pool)?;
            (root, json!({ "seed": cmd.seed, "n": cmd.n, "synth": synth_cfg }))
        }
    };

    let dirs = corpus::list_samples(&corpus_root)?;
    if dirs.is_empty() {
        return Err(CliError::Contract(format!(
            "no samples under {}",
            corpus_root.display()
        )));
    }
    let samples: Vec<CliResult<corpus::Sample>> = pool.install(|| {
        dirs.par_iter()
            .map(|d| {
                let s = corpus::read_sample(d)?;
                if s.coarse.dims() != s.gt.dims() || s.masks.dims() != s.gt.dims() {
                    return Err(CliError::Contract(format!("{}: dimension mismatch", d.display())));
                }
                Ok(s)
            })
            .collect()
    });
    let samples = samples.into_iter().collect::<CliResult<Vec<_>>>()?;

    let mut table = String::from(
        "stage,oasc,mbp,auprc,fpr95,mean_f1,image_mean_auprc,image_mean_fpr95\n",
    );
    for stages in Stages::ABLATION {
        let cfg = RefineConfig { stages, ..refine_cfg };
        let refined: Vec<CliResult<(String, ScoreMap, GroundTruth)>> = pool.install(|| {
            samples
                .par_iter()
                .map(|s| {
                    let out = refine(&s.coarse, Some(&s.masks), &cfg)?;
                    let path = cmd.out.join("refined").join(stages.name()).join(format!("{}.fmap", s.id));
                    io::write_fmap(&out, path)?;
                    // score what a reader of the written file would see
                    let stored = io::decode_fmap(&io::encode_fmap(&out))?;
                    Ok((s.id.clone(), stored, s.gt.clone()))
                })
                .collect()
        });
        let refined = refined.into_iter().collect::<CliResult<Vec<_>>>()?;
        let (reports, agg) = evaluate_pairs(&refined, &eval_cfg, &pool)?;
        io::write_metrics(
            cmd.out.join("eval").join(stages.name()),
            &reports,
            &agg,
            &json!({ "eval": eval_cfg, "refine": refine_meta(&cfg) }),
        )?;
        table.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            stages.name(),
            stages.oasc,
            stages.mbp,
            fmt_opt(agg.auprc),
            fmt_opt(agg.fpr95),
            fmt_opt(agg.mean_f1),
            fmt_opt(mean_of(reports.iter().map(|(_, r)| r.auprc))),
            fmt_opt(mean_of(reports.iter().map(|(_, r)| r.fpr95))),
        ));
    }
    let path = cmd.out.join("ablation.csv");
    std::fs::write(&path, table).map_err(|e| FormatError::io(&path, e))?;
    write_json(
        &cmd.out.join("meta.json"),
        &json!({
            "command": "pipeline",
            "corpus": corpus_meta,
            "refine": { "oasc": refine_cfg.oasc, "mbp": refine_cfg.mbp },
            "eval": eval_cfg,
        }),
    )
}

fn cmd_score_queries(cmd: &ScoreQueriesCmd) -> CliResult<()> {
    let file = load_config(cmd.common.config.as_deref())?;
    let (conf, mask) = resolve_scoring(cmd, &file);
    let q = io::read_queries(&cmd.queries)?;
    let mut map = coarse_map_from_queries(&q)?;
    if cmd.apply_refinement_mask {
        let r = refinement_mask(&q, conf, mask)?;
        map = apply_refinement(&map, &r)?;
    }
    io::write_fmap(&map, &cmd.out)?;
    write_json(
        &meta_path(&cmd.out),
        &json!({
            "command": "score-queries",
            "queries": cmd.queries,
            "apply_refinement_mask": cmd.apply_refinement_mask,
            "conf_threshold": conf,
            "mask_threshold": mask,
        }),
    )
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Refine(c) => cmd_refine(c),
        Command::Eval(c) => cmd_eval(c),
        Command::Synth(c) => cmd_synth(c),
        Command::Pipeline(c) => cmd_pipeline(c),
        Command::ScoreQueries(c) => cmd_score_queries(c),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONTRACT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
