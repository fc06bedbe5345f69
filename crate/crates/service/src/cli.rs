//! `knitpad` command line. Machine-readable results go to files, a short
//! human summary to standard output. Usage errors exit with 2, failures
//! with 1.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use knitpad::eval::{self, CvOptions, HoldoutReport, DEFAULT_AVERAGE_LAST};
use knitpad::gesture::{self, path_for_class, sample_trajectory, GestureClass, SubjectProfile};
use knitpad::mesh::{percent_delta_r, GainModel, MeshConfig, WashDryRecord, CORNER_PAIRS};
use knitpad::nn::{self, ModelParams, ModelSpec, TrainConfig};
use knitpad::signal::{FilterSpec, GainSeries};
use serde::{Deserialize, Serialize};

use crate::bench::bench_latency;
use crate::classify::{synthesize_stroke, trajectory_events, ClassifyRequest, ClassifyResponse, Classifier, PointerEvent, CAPTURE_SECONDS, DEFAULT_TOUCH_CAP, FRAME_RATE};
use crate::server;

#[derive(Debug, Parser)]
#[command(name = "knitpad", version, about = "Knitted touchpad simulator and gesture classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a labelled dataset and write it with a manifest.
    GenDataset(GenDatasetArgs),
    /// Train one model on every sample of a dataset.
    Train(TrainArgs),
    /// Leave-one-subject-out cross-validation; keeps the fold models.
    Cv(CvArgs),
    /// Evaluate cross-validation models on held-out subjects.
    Eval(EvalArgs),
    /// Classify one capture or pointer trajectory.
    Classify(ClassifyArgs),
    /// Measure cold-start and steady-state classification latency.
    Bench(BenchArgs),
    /// Resistance change table for a wash/dry record.
    Washdry(WashdryArgs),
    /// Run the HTTP and websocket service.
    Serve(ServeArgs),
    /// Render a gesture or pointer trajectory into a gain capture.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    CnnLstm,
    LstmOnly,
}

impl VariantArg {
    fn spec(self) -> ModelSpec {
        match self {
            VariantArg::CnnLstm => ModelSpec::cnn_lstm(),
            VariantArg::LstmOnly => ModelSpec::lstm_only(),
        }
    }
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    /// Pad description in TOML; defaults to the 32x32 benchtop pad.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
}

impl MeshArgs {
    fn load(&self) -> anyhow::Result<MeshConfig> {
        match &self.mesh {
            Some(p) => MeshConfig::load(p).with_context(|| format!("reading {}", p.display())),
            None => Ok(MeshConfig::default()),
        }
    }
}

#[derive(Debug, Args)]
pub struct GenDatasetArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub subjects: usize,
    /// Subject ids are this prefix followed by 0, 1, ...
    #[arg(long, default_value = "S")]
    pub prefix: String,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Capture on the worn pad.
    #[arg(long)]
    pub worn: bool,
    #[command(flatten)]
    pub mesh: MeshArgs,
}

#[derive(Debug, Args)]
pub struct TrainingArgs {
    #[arg(long, value_enum, default_value = "cnn-lstm")]
    pub variant: VariantArg,
    /// TOML training configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl TrainingArgs {
    fn config(&self) -> anyhow::Result<TrainConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => TrainConfig::default(),
        };
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.learning_rate {
            c.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.dropout {
            c.dropout = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset manifest.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch history CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Report directory; fold models are saved as `fold<k>.bin`.
    #[arg(long)]
    pub out: PathBuf,
    /// Epochs averaged into each fold's accuracy.
    #[arg(long, default_value_t = DEFAULT_AVERAGE_LAST)]
    pub average_last: usize,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory written by `cv`.
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Require worn captures.
    #[arg(long)]
    pub worn: bool,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Gain CSV capture.
    #[arg(long, conflicts_with = "trajectory", required_unless_present = "trajectory")]
    pub sample: Option<PathBuf>,
    /// Touch-free capture from the same sitting.
    #[arg(long, requires = "sample")]
    pub baseline: Option<PathBuf>,
    /// JSON array of pointer events `{t, u, v, down}`.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    #[arg(long)]
    pub worn: bool,
    /// Touch capacitance in farads for trajectories.
    #[arg(long, default_value_t = DEFAULT_TOUCH_CAP)]
    pub touch_cap: f64,
    /// Write the full response as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub mesh: MeshArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Capture to classify; defaults to a simulated canonical `O`.
    #[arg(long)]
    pub sample: Option<PathBuf>,
    #[arg(long, requires = "sample")]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub mesh: MeshArgs,
}

#[derive(Debug, Args)]
pub struct WashdryArgs {
    #[arg(long)]
    pub record: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Listen address; falls back to $KNITPAD_BIND, then 127.0.0.1:7878.
    #[arg(long)]
    pub bind: Option<String>,
    #[command(flatten)]
    pub mesh: MeshArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Gesture to draw.
    #[arg(long, value_parser = parse_class, conflicts_with = "trajectory", required_unless_present = "trajectory")]
    pub class: Option<GestureClass>,
    /// Draw with a synthetic subject of this seed instead of tracing the
    /// canonical glyph exactly.
    #[arg(long)]
    pub subject_seed: Option<u64>,
    /// JSON array of pointer events to render instead of a gesture.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Output gain CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the touch-free capture.
    #[arg(long)]
    pub baseline_out: Option<PathBuf>,
    /// Also write the drawn gesture as pointer events.
    #[arg(long, requires = "class")]
    pub events_out: Option<PathBuf>,
    #[arg(long)]
    pub worn: bool,
    #[arg(long, default_value_t = DEFAULT_TOUCH_CAP)]
    pub touch_cap: f64,
    #[command(flatten)]
    pub mesh: MeshArgs,
}

fn parse_class(s: &str) -> Result<GestureClass, String> {
    GestureClass::parse(s).ok_or_else(|| format!("unknown gesture `{s}`; expected one of 3 5 I J L M O S V W Z ?"))
}

/// Written by `cv` next to the fold models and read back by `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSet {
    pub training_subjects: Vec<String>,
    pub models: Vec<String>,
}

pub const MODEL_SET_FILE: &str = "models.json";

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

pub fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::GenDataset(a) => gen_dataset(a),
        Command::Train(a) => train(a),
        Command::Cv(a) => cv(a),
        Command::Eval(a) => evaluate(a),
        Command::Classify(a) => classify(a),
        Command::Bench(a) => bench(a),
        Command::Washdry(a) => washdry(a),
        Command::Serve(a) => serve(a),
        Command::Simulate(a) => simulate(a),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_prepared(manifest: &Path) -> anyhow::Result<Vec<eval::Prepared>> {
    let samples = gesture::read_manifest(manifest).with_context(|| format!("reading {}", manifest.display()))?;
    if samples.is_empty() {
        bail!("{} lists no samples", manifest.display());
    }
    Ok(eval::prepare(&samples, &FilterSpec::default())?)
}

fn gen_dataset(a: GenDatasetArgs) -> anyhow::Result<()> {
    let mut mesh = a.mesh.load()?;
    if a.worn {
        mesh = mesh.worn();
    }
    let subjects = SubjectProfile::cohort(&a.prefix, a.subjects, a.seed);
    let samples = gesture::synth_dataset(&mesh, &subjects, a.trials)?;
    let manifest = gesture::write_dataset(&a.out, &samples)?;
    println!("{} samples from {} subjects -> {}", samples.len(), subjects.len(), manifest.display());
    Ok(())
}

fn print_epoch(prefix: &str, r: &nn::EpochRecord) {
    let val = r.validation_accuracy.map(|v| format!(" val {v:.3}")).unwrap_or_default();
    println!("{prefix}epoch {:>3} loss {:.4} train {:.3}{val}", r.epoch + 1, r.train_loss, r.train_accuracy);
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let config = a.training.config()?;
    let data = load_prepared(&a.data)?;
    let balanced = eval::oversample_balance(&data, config.seed)?;
    let examples = eval::examples(&balanced)?;
    let outcome = nn::train_with(&examples, None, &a.training.variant.spec(), &config, |r| print_epoch("", r))?;
    outcome.params.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(path) = &a.history {
        let mut w = csv::Writer::from_path(path)?;
        for r in &outcome.history {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    println!("saved {} ({} parameters)", a.out.display(), outcome.params.parameter_count());
    Ok(())
}

fn cv(a: CvArgs) -> anyhow::Result<()> {
    let config = a.training.config()?;
    let data = load_prepared(&a.data)?;
    let spec = a.training.variant.spec();
    let options = CvOptions { average_last: a.average_last, seed: config.seed };
    let (report, models) = eval::run_loso_cv(&data, &spec, &config, &options, |fold, r| print_epoch(&format!("fold {fold} "), r))?;
    eval::write_cv_report(&a.out, &report)?;
    let mut names = Vec::new();
    for (k, m) in models.iter().enumerate() {
        let name = format!("fold{k}.bin");
        m.save(a.out.join(&name))?;
        names.push(name);
    }
    write_json(&a.out.join(MODEL_SET_FILE), &ModelSet { training_subjects: eval::subjects_of(&data), models: names })?;
    for f in &report.folds {
        println!("fold {} ({}): {:.3}", f.plan.fold_index, f.plan.validation_subject, f.accuracy);
    }
    println!("{} mean accuracy {:.3}", report.variant.as_str(), report.mean_accuracy);
    Ok(())
}

fn evaluate(a: EvalArgs) -> anyhow::Result<()> {
    let set: ModelSet = read_json(&a.models.join(MODEL_SET_FILE))?;
    let models = set
        .models
        .iter()
        .map(|n| ModelParams::<f32>::load(a.models.join(n)).with_context(|| format!("loading {n}")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let data = load_prepared(&a.data)?;
    let report: HoldoutReport = if a.worn {
        eval::evaluate_worn(&models, &data, &set.training_subjects)?
    } else {
        eval::evaluate_holdout(&models, &data, &set.training_subjects)?
    };
    eval::write_holdout_report(&a.out, &report)?;
    let m = report.metrics;
    println!(
        "accuracy {:.3} (pair mean {:.3}) macro precision {:.3} recall {:.3} f1 {:.3}",
        m.accuracy, report.mean_pair_accuracy, m.macro_precision, m.macro_recall, m.macro_f1
    );
    Ok(())
}

fn read_series(path: &Path) -> anyhow::Result<GainSeries> {
    GainSeries::read_csv(path).with_context(|| format!("reading {}", path.display()))
}

fn classify(a: ClassifyArgs) -> anyhow::Result<()> {
    let classifier = Classifier::load(&a.model, &a.mesh.load()?).with_context(|| format!("loading {}", a.model.display()))?;
    let response: ClassifyResponse = match (&a.sample, &a.trajectory) {
        (Some(sample), _) => {
            let baseline = a.baseline.as_deref().map(read_series).transpose()?;
            classifier.classify_series(&read_series(sample)?, baseline.as_ref(), a.worn)?
        }
        (None, Some(traj)) => {
            let events: Vec<PointerEvent> = read_json(traj)?;
            classifier.classify_stroke(&events, a.touch_cap, a.worn)?.0
        }
        (None, None) => bail!("give --sample or --trajectory"),
    };
    println!("predicted: {}", response.predicted);
    for (class, lp) in GestureClass::ALL.iter().zip(&response.log_probs) {
        println!("  {class} {lp:.6}");
    }
    if let Some(path) = &a.json {
        write_json(path, &response)?;
    }
    Ok(())
}

/// Noise-free capture of the canonical glyph traced by an exact subject.
fn canonical_capture(model: &GainModel, class: GestureClass, seed: u64) -> knitpad::Result<GainSeries> {
    let trajectory = sample_trajectory(&path_for_class(class), &SubjectProfile::identity("canonical", seed), CAPTURE_SECONDS, FRAME_RATE);
    model.simulate(&trajectory, FRAME_RATE, CAPTURE_SECONDS)
}

fn bench(a: BenchArgs) -> anyhow::Result<()> {
    let mesh = a.mesh.load()?;
    let request = match &a.sample {
        Some(s) => {
            let baseline = a.baseline.as_deref().map(read_series).transpose()?;
            ClassifyRequest::from_gains(&read_series(s)?, baseline.as_ref())
        }
        None => ClassifyRequest::from_gains(&canonical_capture(&GainModel::new(&mesh)?, GestureClass::O, 0)?, None),
    };
    let report = bench_latency(&a.model, &mesh, &request, a.trials)?;
    println!("first trial   {:>9.3} ms (load + first classification)", report.first_trial * 1e3);
    println!("steady mean   {:>9.3} ms over {} trials", report.steady_mean * 1e3, report.trials);
    println!("steady p95    {:>9.3} ms", report.steady_p95 * 1e3);
    if let Some(path) = &a.json {
        write_json(path, &report)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct WashDryRow {
    cycle: usize,
    per_pair: Vec<(String, f64)>,
    cumulative: f64,
}

fn washdry(a: WashdryArgs) -> anyhow::Result<()> {
    let record = WashDryRecord::load(&a.record).with_context(|| format!("reading {}", a.record.display()))?;
    let names: Vec<String> = CORNER_PAIRS.iter().map(|(i, j)| format!("{i}{j}")).collect();
    let mut rows = Vec::new();
    println!("cycle {}  cumulative", names.iter().map(|n| format!("{n:>9}")).collect::<String>());
    for cycle in 1..=record.after_cycle.len() {
        let d = percent_delta_r(&record, cycle)?;
        let cells: String = d.per_pair.iter().map(|v| format!("{:>+8.4}%", v * 100.0)).collect();
        println!("d{cycle:<4} {cells}  {:>+8.4}%", d.cumulative * 100.0);
        rows.push(WashDryRow { cycle, per_pair: names.iter().cloned().zip(d.per_pair).collect(), cumulative: d.cumulative });
    }
    if let Some(path) = &a.json {
        write_json(path, &rows)?;
    }
    Ok(())
}

fn serve(a: ServeArgs) -> anyhow::Result<()> {
    let addr = server::bind_address(a.bind.as_deref()).context("bad bind address")?;
    let classifier = Arc::new(Classifier::load(&a.model, &a.mesh.load()?).with_context(|| format!("loading {}", a.model.display()))?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        println!("model {} listening on http://{}", classifier.version(), listener.local_addr()?);
        tokio::select! {
            r = server::serve(classifier, listener) => r.context("server failed"),
            _ = tokio::signal::ctrl_c() => Ok(()),
        }
    })
}

fn simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let mut mesh = a.mesh.load()?;
    if a.worn {
        mesh = mesh.worn();
    }
    let model = GainModel::new(&mesh)?;
    let series = match (a.class, &a.trajectory) {
        (Some(class), _) => {
            let profile = match a.subject_seed {
                Some(seed) => SubjectProfile::synthetic("sim", seed),
                None => SubjectProfile { c_t_mean: a.touch_cap, ..SubjectProfile::identity("canonical", 0) },
            };
            let trajectory = sample_trajectory(&path_for_class(class), &profile, CAPTURE_SECONDS, FRAME_RATE);
            if let Some(path) = &a.events_out {
                write_json(path, &trajectory_events(&trajectory))?;
            }
            model.simulate(&trajectory, FRAME_RATE, CAPTURE_SECONDS)?
        }
        (None, Some(traj)) => synthesize_stroke(&model, &read_json::<Vec<PointerEvent>>(traj)?, a.touch_cap)?,
        (None, None) => bail!("give --class or --trajectory"),
    };
    series.write_csv(&a.out)?;
    if let Some(path) = &a.baseline_out {
        let idle = GainSeries::new(vec![model.no_touch_gains(); series.len()], FRAME_RATE)?;
        idle.write_csv(path)?;
    }
    println!("{} frames -> {}", series.len(), a.out.display());
    Ok(())
}
