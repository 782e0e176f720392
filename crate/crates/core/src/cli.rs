//! Command-line front end. Every command validates its flags and inputs before
//! doing any work and writes its artifacts atomically, so a failed run leaves
//! nothing behind.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{PipelineConfig, Preset};
use crate::data::{export_dataset, import_dataset, load_meter_csv, simulate_house, ColumnMap, GapPolicy, HouseDataset, SimConfig};
use crate::detect::{DetectorConfig, MIN_ESTIMATE_SAMPLES};
use crate::knn::KnnModel;
use crate::lstm::{load_checkpoint, save_checkpoint, LstmModel, TrainReport};
use crate::metrics::DisaggregationReport;
use crate::pipeline::{
    detect_or_empty, evaluate, infer, label_dataset, reconstruct_from_bits, reconstruct_house, BaselineNets, Inference, IterativeChain, ParallelNet, Phase2Model,
    PipelineKind, TrainedPipeline,
};
use crate::preprocess::{label_water, split_train_test};
use crate::types::{Registry, SampledSeries, SeriesKind};

pub const MODEL_FORMAT_VERSION: &str = "nilm-model/1";
const MODEL_MANIFEST: &str = "model.json";

/// Threshold used by `detect` when no `--sigma-g` is given and the series is
/// too short to estimate one: three times the simulator's 5 W noise.
pub const FALLBACK_SIGMA_G: f64 = 15.0;

#[derive(Debug, Parser)]
#[command(name = "nilm", version, about = "Event-based power and water disaggregation")]
pub struct Cli {
    /// Print a machine-readable JSON summary instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// Cap on worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic house and write it as a dataset directory.
    Simulate(SimulateArgs),
    /// Detect aggregate power events and write them as CSV.
    Detect(DetectArgs),
    /// Label events and water samples from the sub-metered channels.
    Preprocess(PreprocessArgs),
    /// Train a pipeline on the training split of a dataset.
    Train(TrainArgs),
    /// Run a trained pipeline on the test split of a dataset.
    Infer(InferArgs),
    /// Score a trained pipeline on the test split of a dataset.
    Evaluate(EvaluateArgs),
    /// Render a report written by `evaluate`.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 30)]
    pub days: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Disable aggregate measurement noise.
    #[arg(long)]
    pub noiseless: bool,
    /// Output dataset directory.
    #[arg(long, env = "NILM_DATA_DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    /// Dataset directory whose aggregate power is scanned.
    #[arg(long, env = "NILM_DATA_DIR", conflicts_with = "csv", required_unless_present = "csv")]
    pub dataset: Option<PathBuf>,
    /// Meter CSV file instead of a dataset.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value = "timestamp", requires = "csv")]
    pub timestamp_col: String,
    #[arg(long, default_value = "value", requires = "csv")]
    pub value_col: String,
    /// Grid-noise threshold in watts; estimated from the series when absent.
    #[arg(long)]
    pub sigma_g: Option<f64>,
    /// Events CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    #[arg(long, value_enum, default_value_t = PresetArg::Desk)]
    pub preset: PresetArg,
    /// TOML configuration file; overrides the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Desk,
    Full,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Desk => Preset::Desk,
            PresetArg::Full => Preset::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PipelineArg {
    KnnOnly,
    Parallel,
    Iterative,
    Baseline,
}

impl From<PipelineArg> for PipelineKind {
    fn from(p: PipelineArg) -> Self {
        match p {
            PipelineArg::KnnOnly => PipelineKind::KnnOnly,
            PipelineArg::Parallel => PipelineKind::Parallel,
            PipelineArg::Iterative => PipelineKind::Iterative,
            PipelineArg::Baseline => PipelineKind::Baseline,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PreprocessArgs {
    #[arg(long, env = "NILM_DATA_DIR")]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Also export the train and test splits as datasets.
    #[arg(long)]
    pub split: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, env = "NILM_DATA_DIR")]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = PipelineArg::Iterative)]
    pub pipeline: PipelineArg,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Train on the whole dataset instead of its training split.
    #[arg(long)]
    pub no_split: bool,
    /// Model directory to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, env = "NILM_DATA_DIR")]
    pub dataset: PathBuf,
    /// Use the whole dataset instead of its test split.
    #[arg(long)]
    pub no_split: bool,
    /// Sigmoid threshold for ON bits; the model's setting when absent.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Predictions directory to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, env = "NILM_DATA_DIR")]
    pub dataset: PathBuf,
    #[arg(long)]
    pub no_split: bool,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Report JSON to write; a CSV table is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Report JSON written by `evaluate`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    pub format: ReportFormat,
}

/// What a command did: a one-line text summary, a JSON summary, and any text
/// the command renders to standard output.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub summary: String,
    pub json: serde_json::Value,
    pub stdout: Option<String>,
}

/// Evaluation artifact: the report plus the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationFile {
    pub report: DisaggregationReport,
    pub config: PipelineConfig,
}

/// Parses the process arguments, runs the command and maps errors to exit codes.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let json = cli.json;
    match run(cli) {
        Ok(out) => {
            if let Some(text) = &out.stdout {
                print!("{text}");
            }
            if json {
                println!("{}", out.json);
            } else if out.stdout.is_none() {
                println!("{}", out.summary);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            if json {
                let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
                eprintln!("{}", json!({ "error": chain }));
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::FAILURE
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<Outcome> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        // A pool set up earlier in the process (tests run several commands) stays in place.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Detect(a) => cmd_detect(&a),
        Command::Preprocess(a) => cmd_preprocess(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Infer(a) => cmd_infer(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn sibling_tmp(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let tmp = sibling_tmp(path);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

/// Fills a fresh staging directory and moves it to `dest` only when `fill` succeeds.
fn write_dir_atomic(dest: &Path, fill: impl FnOnce(&Path) -> anyhow::Result<()>) -> anyhow::Result<()> {
    if let Some(parent) = dest.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let tmp = sibling_tmp(dest);
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    if let Err(e) = fill(&tmp) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if dest.exists() {
        fs::remove_dir_all(dest).with_context(|| format!("replacing {}", dest.display()))?;
    }
    fs::rename(&tmp, dest).with_context(|| format!("renaming into {}", dest.display()))
}

fn load_dataset(dir: &Path) -> anyhow::Result<HouseDataset> {
    if !dir.is_dir() {
        bail!("dataset directory {} does not exist", dir.display());
    }
    import_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn resolve_config(args: &ConfigArgs, pipeline: PipelineKind) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let mut c = PipelineConfig::load(path).with_context(|| format!("loading config {}", path.display()))?;
            c.pipeline = pipeline;
            c
        }
        None => PipelineConfig::preset(args.preset.into(), pipeline),
    };
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The (train, test) pair selected by the configured split, or the whole dataset twice.
fn split(ds: &HouseDataset, cfg: &PipelineConfig, whole: bool) -> anyhow::Result<(HouseDataset, HouseDataset)> {
    if whole {
        return Ok((ds.clone(), ds.clone()));
    }
    split_train_test(ds, cfg.split.train_days, cfg.split.test_days)
        .with_context(|| format!("splitting {} training + {} test days (pass --no-split to use the whole dataset)", cfg.split.train_days, cfg.split.test_days))
}

pub fn cmd_simulate(a: &SimulateArgs) -> anyhow::Result<Outcome> {
    if a.days == 0 {
        bail!("--days must be at least 1");
    }
    let registry = Registry::bundled();
    let mut cfg = SimConfig::new(&registry, a.days, a.seed);
    if a.noiseless {
        cfg = cfg.noiseless();
    }
    let ds = simulate_house(&cfg, &registry)?;
    write_dir_atomic(&a.out, |dir| Ok(export_dataset(&ds, dir)?))?;
    Ok(Outcome {
        summary: format!("wrote {} days ({} samples) to {}", a.days, ds.len(), a.out.display()),
        json: json!({ "command": "simulate", "out": a.out, "days": a.days, "seed": a.seed, "samples": ds.len() }),
        stdout: None,
    })
}

fn detect_input(a: &DetectArgs) -> anyhow::Result<SampledSeries> {
    match (&a.csv, &a.dataset) {
        (Some(path), _) => load_meter_csv(path, &ColumnMap::new(&a.timestamp_col, &a.value_col), SeriesKind::Power, GapPolicy::Reject)
            .with_context(|| format!("reading meter file {}", path.display())),
        (None, Some(dir)) => Ok(load_dataset(dir)?.aggregate_power),
        (None, None) => bail!("either --dataset or --csv is required"),
    }
}

pub fn cmd_detect(a: &DetectArgs) -> anyhow::Result<Outcome> {
    if let Some(g) = a.sigma_g {
        DetectorConfig::new(g)?;
    }
    let series = detect_input(a)?;
    let (sigma_g, source) = match a.sigma_g {
        Some(g) => (g, "flag"),
        None if series.len() < MIN_ESTIMATE_SAMPLES => (FALLBACK_SIGMA_G, "fallback"),
        None => (crate::detect::SigmaEstimator::default().sigma_g(&series)?, "estimated"),
    };
    let det = DetectorConfig::new(sigma_g)?;
    let detection = detect_or_empty(&series, &det)?;
    let mut out = format!("# nilm detect: sigma_g={sigma_g} ({source}), window={}\n", det.window);
    out.push_str("index,timestamp,delta_w,pre_level_w\n");
    for (e, pre) in detection.events.events.iter().zip(detection.pre_levels()) {
        let _ = writeln!(out, "{},{},{},{}", e.index, series.timestamp(e.index), e.delta, pre);
    }
    write_atomic(&a.out, out.as_bytes())?;
    let n = detection.events.len();
    Ok(Outcome {
        summary: format!("{n} events (sigma_g {sigma_g:.3} W, {source}) written to {}", a.out.display()),
        json: json!({ "command": "detect", "out": a.out, "events": n, "sigma_g": sigma_g, "sigma_source": source }),
        stdout: None,
    })
}

pub fn cmd_preprocess(a: &PreprocessArgs) -> anyhow::Result<Outcome> {
    let cfg = resolve_config(&a.config, PipelineKind::KnnOnly)?;
    let ds = load_dataset(&a.dataset)?;
    let splits = if a.split { Some(split(&ds, &cfg, false)?) } else { None };
    let det = cfg.detector.resolve(&ds.aggregate_power)?;
    let (detection, labels) = label_dataset(&ds, &det, &cfg.phase1.matching)?;

    let mut events = format!("# nilm preprocess: sigma_g={}\n", det.sigma_g);
    events.push_str("index,timestamp,delta_w,pre_level_w,appliance,from_mode,to_mode,ambiguous\n");
    for (i, pre) in detection.pre_levels().into_iter().enumerate() {
        let idx = labels.indices[i];
        let (app, from, to) = match &labels.labels[i] {
            Some(l) => (l.appliance.as_str(), l.transition.from_mode().to_string(), l.transition.to_mode().to_string()),
            None => ("UNKNOWN", String::new(), String::new()),
        };
        let _ = writeln!(events, "{idx},{},{},{pre},{app},{from},{to},{}", ds.aggregate_power.timestamp(idx), labels.features[i][0], u8::from(labels.ambiguous[i]));
    }

    let water: Vec<(String, Vec<u8>)> = ds
        .appliance_water
        .iter()
        .map(|(id, s)| Ok((id.clone(), label_water(s, cfg.phase2.water_threshold)?.labels)))
        .collect::<crate::Result<_>>()?;
    let mut water_csv = String::from("timestamp");
    for (id, _) in &water {
        let _ = write!(water_csv, ",{id}");
    }
    water_csv.push('\n');
    for t in 0..ds.len() {
        let _ = write!(water_csv, "{}", ds.aggregate_power.timestamp(t));
        for (_, bits) in &water {
            let _ = write!(water_csv, ",{}", bits[t]);
        }
        water_csv.push('\n');
    }

    write_dir_atomic(&a.out, |dir| {
        fs::write(dir.join("labeled_events.csv"), &events)?;
        fs::write(dir.join("water_labels.csv"), &water_csv)?;
        fs::write(dir.join("config.toml"), cfg.to_toml())?;
        if let Some((train, test)) = &splits {
            export_dataset(train, &dir.join("train"))?;
            export_dataset(test, &dir.join("test"))?;
        }
        Ok(())
    })?;
    Ok(Outcome {
        summary: format!("{} events ({} unknown) labelled into {}", labels.len(), labels.unknown_count(), a.out.display()),
        json: json!({ "command": "preprocess", "out": a.out, "events": labels.len(), "unknown": labels.unknown_count(), "split": a.split }),
        stdout: None,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkEntry {
    role: String,
    file: String,
    report: TrainReport,
}

#[derive(Debug, Serialize, Deserialize)]
struct Phase2Entry {
    appliance: String,
    kind: PipelineKind,
    networks: Vec<NetworkEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelManifest {
    version: String,
    config: PipelineConfig,
    detector: DetectorConfig,
    overlap: Vec<String>,
    knn: KnnModel,
    phase2: Vec<Phase2Entry>,
}

fn roles(m: &Phase2Model) -> Vec<(&'static str, &LstmModel, &TrainReport)> {
    match m {
        Phase2Model::Parallel(n) => vec![("parallel", &n.model, &n.report)],
        Phase2Model::Iterative(c) => vec![("stage1", &c.stages[0], &c.reports[0]), ("stage2", &c.stages[1], &c.reports[1]), ("stage3", &c.stages[2], &c.reports[2])],
        Phase2Model::Baseline(b) => vec![("power", &b.power, &b.reports[0]), ("water", &b.water, &b.reports[1])],
    }
}

/// Writes a trained pipeline and its effective configuration into `dir`.
pub fn save_model(pipeline: &TrainedPipeline, cfg: &PipelineConfig, dir: &Path) -> anyhow::Result<()> {
    let mut phase2 = Vec::new();
    for m in &pipeline.phase2 {
        let mut networks = Vec::new();
        for (role, model, report) in roles(m) {
            let file = format!("{}_{role}.ckpt", m.appliance());
            save_checkpoint(model, &dir.join(&file))?;
            networks.push(NetworkEntry { role: role.into(), file, report: report.clone() });
        }
        phase2.push(Phase2Entry { appliance: m.appliance().into(), kind: pipeline.kind, networks });
    }
    let manifest = ModelManifest {
        version: MODEL_FORMAT_VERSION.into(),
        config: cfg.clone(),
        detector: pipeline.detector,
        overlap: pipeline.overlap.iter().cloned().collect(),
        knn: pipeline.knn.clone(),
        phase2,
    };
    fs::write(dir.join(MODEL_MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(())
}

/// Reads a model directory written by [`save_model`].
pub fn load_model(dir: &Path) -> anyhow::Result<(TrainedPipeline, PipelineConfig)> {
    let path = dir.join(MODEL_MANIFEST);
    let text = fs::read_to_string(&path).with_context(|| format!("reading model {}", path.display()))?;
    let raw: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let found = raw.get("version").and_then(|v| v.as_str()).unwrap_or("<missing>");
    if found != MODEL_FORMAT_VERSION {
        bail!(crate::NilmError::VersionMismatch { path, expected: MODEL_FORMAT_VERSION.into(), found: found.into() });
    }
    let m: ModelManifest = serde_json::from_value(raw).with_context(|| format!("parsing {}", path.display()))?;
    m.config.validate()?;
    let mut phase2 = Vec::new();
    for e in m.phase2 {
        let mut nets = Vec::new();
        for n in &e.networks {
            let p = dir.join(&n.file);
            nets.push((load_checkpoint(&p).with_context(|| format!("loading {}", p.display()))?, n.report.clone()));
        }
        let appliance = e.appliance.clone();
        let count = nets.len();
        let mut it = nets.into_iter();
        let mut next = || it.next().expect("count checked");
        phase2.push(match (e.kind, count) {
            (PipelineKind::Parallel, 1) => {
                let (model, report) = next();
                Phase2Model::Parallel(ParallelNet { appliance, model, report })
            }
            (PipelineKind::Iterative, 3) => {
                let (a, b, c) = (next(), next(), next());
                Phase2Model::Iterative(IterativeChain { appliance, stages: [a.0, b.0, c.0], reports: [a.1, b.1, c.1] })
            }
            (PipelineKind::Baseline, 2) => {
                let (p, w) = (next(), next());
                Phase2Model::Baseline(BaselineNets { appliance, power: p.0, water: w.0, reports: [p.1, w.1] })
            }
            (kind, n) => bail!("model lists {n} networks for a {kind} pipeline"),
        });
    }
    let pipeline = TrainedPipeline { kind: m.config.pipeline, detector: m.detector, knn: m.knn, overlap: m.overlap.into_iter().collect(), phase2 };
    Ok((pipeline, m.config))
}

pub fn cmd_train(a: &TrainArgs) -> anyhow::Result<Outcome> {
    let cfg = resolve_config(&a.config, a.pipeline.into())?;
    let ds = load_dataset(&a.dataset)?;
    let (train, _) = split(&ds, &cfg, a.no_split)?;
    let pipeline = crate::pipeline::train_pipeline(&train, &cfg)?;
    write_dir_atomic(&a.out, |dir| save_model(&pipeline, &cfg, dir))?;
    let nets: Vec<&str> = pipeline.phase2.iter().map(Phase2Model::appliance).collect();
    Ok(Outcome {
        summary: format!("trained {} pipeline on {} days ({} KNN points, Phase-2 appliances {:?}) into {}", cfg.pipeline, train.days(), pipeline.knn.labels.len(), nets, a.out.display()),
        json: json!({
            "command": "train", "out": a.out, "pipeline": cfg.pipeline, "days": train.days(),
            "sigma_g": pipeline.detector.sigma_g, "knn_points": pipeline.knn.labels.len(), "phase2": nets,
        }),
        stdout: None,
    })
}

fn run_inference(model: &Path, dataset: &Path, whole: bool, threshold: Option<f64>) -> anyhow::Result<(TrainedPipeline, PipelineConfig, HouseDataset, Inference)> {
    if let Some(t) = threshold {
        if !(0.0..=1.0).contains(&t) {
            bail!("--threshold must be in [0, 1], got {t}");
        }
    }
    if !model.is_dir() {
        bail!("model directory {} does not exist", model.display());
    }
    let (pipeline, mut cfg) = load_model(model)?;
    if let Some(t) = threshold {
        cfg.phase2.threshold = t;
    }
    let ds = load_dataset(dataset)?;
    let (_, test) = split(&ds, &cfg, whole)?;
    let inference = infer(&pipeline, &test, &cfg.phase2.window, cfg.phase2.threshold)?;
    Ok((pipeline, cfg, test, inference))
}

pub fn cmd_infer(a: &InferArgs) -> anyhow::Result<Outcome> {
    let (_, cfg, test, inf) = run_inference(&a.model, &a.dataset, a.no_split, a.threshold)?;
    let ts = |i: usize| test.aggregate_power.timestamp(i);

    let mut events = String::from("index,timestamp,delta_w,appliance,from_mode,to_mode,ambiguous\n");
    let ambiguous: std::collections::BTreeSet<usize> = inf.phase1.ambiguous.iter().map(|e| e.index).collect();
    for e in &inf.phase1.all {
        let _ = writeln!(
            events,
            "{},{},{},{},{},{},{}",
            e.index,
            ts(e.index),
            e.delta,
            e.label.appliance,
            e.label.transition.from_mode(),
            e.label.transition.to_mode(),
            u8::from(ambiguous.contains(&e.index))
        );
    }

    // Phase-1 profiles, with Phase-2 appliances replaced by their bit profiles.
    let recon = reconstruct_house(&inf.phase1.detection, &inf.phase1.all, &test.registry, &test.aggregate_power)?;
    let mut power_cols: Vec<(String, Vec<f64>)> = recon.profiles.iter().map(|(id, r)| (id.clone(), r.profile.values.clone())).collect();
    let mut water_cols = Vec::new();
    let mut bits_csv = String::from("timestamp");
    for p in &inf.phase2 {
        let spec = test.registry.get(&p.appliance).ok_or_else(|| crate::NilmError::UnknownAppliance(p.appliance.clone()))?;
        let (pw, ww) = reconstruct_from_bits(&p.power_bits, &p.water_bits, spec, &test.aggregate_power)?;
        match power_cols.iter_mut().find(|(id, _)| *id == p.appliance) {
            Some(col) => col.1 = pw.values,
            None => power_cols.push((p.appliance.clone(), pw.values)),
        }
        water_cols.push((p.appliance.clone(), ww.values));
        let _ = write!(bits_csv, ",{0}_power_prob,{0}_power_bit,{0}_water_prob,{0}_water_bit", p.appliance);
    }
    bits_csv.push('\n');
    if !inf.phase2.is_empty() {
        for t in 0..test.len() {
            let _ = write!(bits_csv, "{}", ts(t));
            for p in &inf.phase2 {
                let _ = write!(bits_csv, ",{},{},{},{}", p.power_prob[t], p.power_bits[t], p.water_prob[t], p.water_bits[t]);
            }
            bits_csv.push('\n');
        }
    }
    power_cols.sort_by(|a, b| a.0.cmp(&b.0));
    let mut profiles = String::from("timestamp");
    for (id, _) in &power_cols {
        let _ = write!(profiles, ",power_{id}");
    }
    for (id, _) in &water_cols {
        let _ = write!(profiles, ",water_{id}");
    }
    profiles.push_str(",residual\n");
    for t in 0..test.len() {
        let _ = write!(profiles, "{}", ts(t));
        for (_, v) in power_cols.iter().chain(&water_cols) {
            let _ = write!(profiles, ",{}", v[t]);
        }
        let _ = writeln!(profiles, ",{}", recon.residual[t]);
    }

    write_dir_atomic(&a.out, |dir| {
        fs::write(dir.join("events.csv"), &events)?;
        if !inf.phase2.is_empty() {
            fs::write(dir.join("phase2.csv"), &bits_csv)?;
        }
        fs::write(dir.join("profiles.csv"), &profiles)?;
        fs::write(dir.join("config.toml"), cfg.to_toml())?;
        Ok(())
    })?;
    Ok(Outcome {
        summary: format!("{} events, {} ambiguous, {} Phase-2 appliances written to {}", inf.phase1.all.len(), inf.phase1.ambiguous.len(), inf.phase2.len(), a.out.display()),
        json: json!({ "command": "infer", "out": a.out, "events": inf.phase1.all.len(), "ambiguous": inf.phase1.ambiguous.len(), "phase2": inf.phase2.iter().map(|p| &p.appliance).collect::<Vec<_>>() }),
        stdout: None,
    })
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> anyhow::Result<Outcome> {
    let (pipeline, cfg, test, inf) = run_inference(&a.model, &a.dataset, a.no_split, a.threshold)?;
    let report = evaluate(&pipeline, &inf, &test, &cfg)?;
    let file = EvaluationFile { report, config: cfg };
    let csv_path = a.out.with_extension("csv");
    if csv_path == a.out {
        bail!("--out must not end in .csv; the CSV table is written next to the JSON report");
    }
    write_atomic(&csv_path, file.report.to_csv().as_bytes())?;
    write_atomic(&a.out, (serde_json::to_string_pretty(&file)? + "\n").as_bytes())?;
    Ok(Outcome {
        summary: format!("{} pipeline: average F {:.4} over {} rows, report in {}", file.report.pipeline, file.report.average_f, file.report.rows.len(), a.out.display()),
        json: json!({ "command": "evaluate", "out": a.out, "csv": csv_path, "pipeline": file.report.pipeline, "average_f": file.report.average_f }),
        stdout: None,
    })
}

/// Fixed-width table of a report.
pub fn render_table(r: &DisaggregationReport) -> String {
    let mut out = format!("pipeline {}  (config {})\n", r.pipeline, &r.config_fingerprint[..r.config_fingerprint.len().min(12)]);
    let _ = writeln!(out, "{:<16} {:<6} {:<9} {:>6} {:>6} {:>6}", "appliance", "signal", "level", "P", "R", "F");
    for row in &r.rows {
        let level = match row.granularity {
            crate::metrics::Granularity::Event => "event",
            crate::metrics::Granularity::Timestep => "timestep",
        };
        let _ = writeln!(out, "{:<16} {:<6} {:<9} {:>6.3} {:>6.3} {:>6.3}", row.appliance, row.signal, level, row.precision, row.recall, row.f_measure);
    }
    let _ = writeln!(out, "{:<16} {:<6} {:<9} {:>6} {:>6} {:>6.3}", "average", "power", "", "", "", r.average_f);
    out
}

pub fn cmd_report(a: &ReportArgs) -> anyhow::Result<Outcome> {
    let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let file: EvaluationFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", a.input.display()))?;
    let r = &file.report;
    let rendered = match a.format {
        ReportFormat::Table => render_table(r),
        ReportFormat::Csv => r.to_csv(),
        ReportFormat::Json => r.to_json(),
    };
    Ok(Outcome {
        summary: format!("{} pipeline, average F {:.4}", r.pipeline, r.average_f),
        json: json!({ "command": "report", "pipeline": r.pipeline, "average_f": r.average_f, "rows": r.rows }),
        stdout: Some(rendered),
    })
}
