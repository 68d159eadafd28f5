//! Command-line front end. Every command writes a JSON manifest holding its
//! fully resolved arguments, seeds and input hashes; `replay` reruns a
//! command from such a manifest.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{expand_dataset, AugmentConfig, ExpandedDataset, Radii};
use crate::datakit::{self, FeatureScaler, LabeledDataset, SplitSpec, DEFAULT_LABEL_COLUMN};
use crate::dfo::DfoConfig;
use crate::geometry::DistanceKind;
use crate::model::{MlpSpec, Model};
use crate::objective::LossConfig;
use crate::seeding::derive_seed;
use crate::signedgraph::{self, GraphConfig};
use crate::trainer::{self, OptimizerKind, TrainConfig, TrainReport};
use crate::{Error, Result};

pub const MANIFEST_FORMAT: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "diagnet", version, about = "Adversarial neighbor augmentation and signed-graph regularized classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic labeled dataset.
    GenData(GenDataArgs),
    /// Stratified train/test split of a labeled CSV.
    Split(SplitArgs),
    /// Add positive and negative neighbors to every class.
    Augment(AugmentArgs),
    /// Build the signed graph and train a classifier.
    Train(TrainArgs),
    /// Sweep graph degrees and lambda over several seeds.
    Grid(GridArgs),
    /// Score a trained model on a labeled CSV.
    Eval(EvalArgs),
    /// Rerun a command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    TwoAnnuli,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceArg {
    Angular,
    Euclidean,
}

impl From<DistanceArg> for DistanceKind {
    fn from(d: DistanceArg) -> Self {
        match d {
            DistanceArg::Angular => DistanceKind::AngularCosine,
            DistanceArg::Euclidean => DistanceKind::Euclidean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerArg {
    Sgd,
    Momentum,
}

impl From<OptimizerArg> for OptimizerKind {
    fn from(o: OptimizerArg) -> Self {
        match o {
            OptimizerArg::Sgd => OptimizerKind::Sgd,
            OptimizerArg::Momentum => OptimizerKind::Momentum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GenDataArgs {
    #[arg(long, value_enum)]
    pub kind: DataKind,
    /// Samples per class.
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    pub inner_radius: f64,
    #[arg(long, default_value_t = 2.0)]
    pub outer_radius: f64,
    #[arg(long, default_value_t = 0.5)]
    pub thickness: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub test_out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub train_fraction: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = DEFAULT_LABEL_COLUMN)]
    pub label_column: String,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AugmentArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1e-2)]
    pub gamma: f64,
    /// Optimizer evaluations per generated neighbor.
    #[arg(long, default_value_t = 200)]
    pub budget: usize,
    #[arg(long, default_value_t = 0.2)]
    pub pos_frac: f64,
    #[arg(long, default_value_t = 0.2)]
    pub neg_frac: f64,
    /// Radii override; give all three or none.
    #[arg(long, requires_all = ["r2", "r3"])]
    pub r1: Option<f64>,
    #[arg(long, requires_all = ["r1", "r3"])]
    pub r2: Option<f64>,
    #[arg(long, requires_all = ["r1", "r2"])]
    pub r3: Option<f64>,
    #[arg(long, default_value_t = 20)]
    pub population: usize,
    #[arg(long, value_enum, default_value_t = DistanceArg::Angular)]
    pub distance: DistanceArg,
    /// Search in raw feature units instead of standardized ones.
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long, default_value = DEFAULT_LABEL_COLUMN)]
    pub label_column: String,
}

/// Graph and optimization flags shared by `train` and `grid`.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainOpts {
    #[arg(long, default_value_t = 1.0)]
    pub margin: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [64, 32])]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_nodes: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_edges: usize,
    #[arg(long)]
    pub full_batch: bool,
    #[arg(long, default_value_t = 1e-2)]
    pub learning_rate: f64,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Momentum)]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = 10)]
    pub eval_every: usize,
    /// Distance for both the input-space graph and the embedding loss.
    #[arg(long, value_enum, default_value_t = DistanceArg::Angular)]
    pub distance: DistanceArg,
    /// Sum the graph term over edges instead of averaging.
    #[arg(long)]
    pub raw_graph_sum: bool,
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long, default_value = DEFAULT_LABEL_COLUMN)]
    pub label_column: String,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Expanded (or plain) labeled CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1)]
    pub n_plus: usize,
    #[arg(long, default_value_t = 4)]
    pub n_minus: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub opts: TrainOpts,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GridArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Base seed; repeat k trains with seed + k.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 3)]
    pub repeats: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [0, 1])]
    pub n_plus: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0, 4])]
    pub n_minus: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0])]
    pub lambda: Vec<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub opts: TrainOpts,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value = DEFAULT_LABEL_COLUMN)]
    pub label_column: String,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded locations.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// What every command leaves next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub version: String,
    pub command: Command,
    pub seeds: BTreeMap<String, u64>,
    /// Input path to hex sha256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    /// Library-level configuration the arguments resolved to.
    pub config: serde_json::Value,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text)?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Format {
                path: path.into(),
                message: format!("unsupported manifest format {}", m.format),
            });
        }
        Ok(m)
    }

    fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn require_seed(seed: Option<u64>, command: &str) -> Result<u64> {
    seed.ok_or_else(|| Error::invalid(format!("{command} requires an explicit --seed for reproducibility")))
}

/// `<file>.manifest.json` beside an output file.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

fn absolute(path: &Path) -> Result<PathBuf> {
    std::path::absolute(path).map_err(|e| Error::io(path, e))
}

fn redirect(path: &mut PathBuf, dir: &Path) {
    if let Some(name) = path.file_name() {
        *path = dir.join(name);
    }
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

struct ManifestBuilder {
    command: Command,
    seeds: BTreeMap<String, u64>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    config: serde_json::Value,
}

impl ManifestBuilder {
    fn new(command: Command) -> Self {
        Self {
            command,
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            config: serde_json::Value::Null,
        }
    }

    fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.into(), value);
        self
    }

    fn input(mut self, path: &Path) -> Result<Self> {
        self.inputs.insert(display(path), sha256_file(path)?);
        Ok(self)
    }

    fn output(mut self, path: &Path) -> Self {
        self.outputs.push(display(path));
        self
    }

    fn config(mut self, value: serde_json::Value) -> Self {
        self.config = value;
        self
    }

    fn write(self, path: &Path) -> Result<Manifest> {
        let m = Manifest {
            format: MANIFEST_FORMAT,
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs: self.outputs,
            config: self.config,
        };
        m.write(path)?;
        Ok(m)
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

/// Parses arguments and runs. On failure prints one JSON line on stderr and
/// returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            report_error("usage", &e.to_string());
            return 2;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            1
        }
    }
}

fn report_error(kind: &str, message: &str) {
    let first_lines: Vec<&str> = message.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let line = serde_json::json!({ "error": kind, "message": first_lines.join(" ") });
    let _ = writeln!(std::io::stderr(), "{line}");
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData(a) => gen_data(a),
        Command::Split(a) => split(a),
        Command::Augment(a) => augment(a),
        Command::Train(a) => train(a),
        Command::Grid(a) => grid(a),
        Command::Eval(a) => eval(a),
        Command::Replay(a) => replay(a),
    }
}

fn gen_data(mut a: GenDataArgs) -> Result<()> {
    let seed = require_seed(a.seed, "gen-data")?;
    a.output = absolute(&a.output)?;
    let ds = match a.kind {
        DataKind::TwoAnnuli => {
            datakit::generate_two_annuli(a.n, a.inner_radius, a.outer_radius, a.thickness, a.noise, seed)?
        }
    };
    ensure_parent(&a.output)?;
    ds.write_csv(&a.output)?;
    log::info!("wrote {} rows to {}", ds.len(), a.output.display());
    let out = a.output.clone();
    ManifestBuilder::new(Command::GenData(a))
        .seed("data", seed)
        .output(&out)
        .write(&manifest_path_for(&out))?;
    Ok(())
}

fn split(mut a: SplitArgs) -> Result<()> {
    let seed = require_seed(a.seed, "split")?;
    a.input = absolute(&a.input)?;
    a.train_out = absolute(&a.train_out)?;
    a.test_out = absolute(&a.test_out)?;
    let ds = datakit::load_csv(&a.input, &a.label_column)?;
    let spec = SplitSpec {
        train_fraction: a.train_fraction,
        rng_seed: seed,
    };
    let (train, test) = datakit::split(&ds, spec)?;
    ensure_parent(&a.train_out)?;
    ensure_parent(&a.test_out)?;
    train.write_csv(&a.train_out)?;
    test.write_csv(&a.test_out)?;
    let (tr, te, input) = (a.train_out.clone(), a.test_out.clone(), a.input.clone());
    ManifestBuilder::new(Command::Split(a))
        .seed("split", seed)
        .input(&input)?
        .output(&tr)
        .output(&te)
        .config(serde_json::to_value(spec)?)
        .write(&manifest_path_for(&tr))?;
    Ok(())
}

/// Library configuration an `augment` invocation resolves to.
pub fn augment_configs(a: &AugmentArgs, seed: u64) -> Result<(AugmentConfig, DfoConfig)> {
    let radii = match (a.r1, a.r2, a.r3) {
        (Some(r1), Some(r2), Some(r3)) => Some(Radii { r1, r2, r3 }),
        (None, None, None) => None,
        _ => return Err(Error::invalid("--r1, --r2 and --r3 must be given together")),
    };
    let cfg = AugmentConfig {
        gamma: a.gamma,
        radii,
        budget_t: a.budget,
        positive_fraction: a.pos_frac,
        negative_fraction: a.neg_frac,
        rng_seed: seed,
        distance: a.distance.into(),
        ..AugmentConfig::default()
    };
    let dfo = DfoConfig {
        budget: a.budget,
        population: a.population.min(a.budget),
        rng_seed: derive_seed(seed, &[0xDF]),
        ..DfoConfig::default()
    };
    cfg.validate()?;
    dfo.validate()?;
    Ok((cfg, dfo))
}

fn augment(mut a: AugmentArgs) -> Result<()> {
    let seed = require_seed(a.seed, "augment")?;
    a.input = absolute(&a.input)?;
    a.output = absolute(&a.output)?;
    let (cfg, dfo) = augment_configs(&a, seed)?;
    let raw = datakit::load_csv(&a.input, &a.label_column)?;
    let expanded = if a.no_normalize {
        expand_dataset(&raw, &cfg, &dfo)?
    } else {
        // search in standardized units, report in the input's units
        let scaler = FeatureScaler::fit(&raw.samples)?;
        let mut ex = expand_dataset(&scaler.apply_dataset(&raw)?, &cfg, &dfo)?;
        for (c, class) in ex.classes.iter_mut().enumerate() {
            class.originals = raw.class_samples(c);
            for x in class.positives.iter_mut().chain(class.negatives.iter_mut()) {
                *x = scaler.invert(x);
            }
        }
        ex
    };
    ensure_parent(&a.output)?;
    expanded.write_csv(&a.output)?;
    log::info!("wrote {} rows to {}", expanded.len(), a.output.display());
    let config = serde_json::json!({ "augment": cfg, "dfo": dfo, "normalize": !a.no_normalize });
    let (out, input) = (a.output.clone(), a.input.clone());
    ManifestBuilder::new(Command::Augment(a))
        .seed("augment", cfg.rng_seed)
        .seed("dfo", dfo.rng_seed)
        .input(&input)?
        .output(&out)
        .config(config)
        .write(&manifest_path_for(&out))?;
    Ok(())
}

/// Everything one training run needs, resolved from flags.
#[derive(Debug, Clone, Serialize)]
pub struct TrainPlan {
    pub graph: GraphConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub weight_decay: f64,
    pub normalize: bool,
    pub regularizer_enabled: bool,
}

pub fn train_plan(opts: &TrainOpts, lambda: f64, n_plus: usize, n_minus: usize, seed: u64) -> Result<TrainPlan> {
    let distance: DistanceKind = opts.distance.into();
    let graph = GraphConfig {
        n_plus,
        n_minus,
        distance,
    };
    let loss = LossConfig {
        lambda,
        margin_m: opts.margin,
        embedding_distance: distance,
        normalize_graph_term: !opts.raw_graph_sum,
    };
    loss.validate()?;
    let train = TrainConfig {
        epochs: opts.epochs,
        batch_nodes: opts.batch_nodes,
        batch_edges: opts.batch_edges,
        full_batch: opts.full_batch,
        learning_rate: opts.learning_rate,
        optimizer: opts.optimizer.into(),
        init_seed: derive_seed(seed, &[0x1417]),
        rng_seed: derive_seed(seed, &[0x7EA]),
        eval_every: opts.eval_every,
    };
    train.validate()?;
    Ok(TrainPlan {
        graph,
        loss,
        train,
        hidden: opts.hidden.clone(),
        dropout: opts.dropout,
        weight_decay: opts.weight_decay,
        normalize: !opts.no_normalize,
        regularizer_enabled: lambda > 0.0 && !graph.is_vacuous(),
    })
}

/// Output of [`run_training`].
pub struct TrainOutcome {
    pub model: Model,
    pub graph: signedgraph::SignedGraph,
    pub report: TrainReport,
}

/// Standardizes on the originals, builds the graph and trains.
pub fn run_training(
    expanded: &ExpandedDataset,
    test: Option<&LabeledDataset>,
    plan: &TrainPlan,
) -> Result<TrainOutcome> {
    let scaler = if plan.normalize {
        let originals: Vec<_> = expanded.classes.iter().flat_map(|c| c.originals.iter().cloned()).collect();
        Some(FeatureScaler::fit(&originals)?)
    } else {
        None
    };
    let scaled = match &scaler {
        Some(s) => {
            let mut ex = expanded.clone();
            for class in &mut ex.classes {
                for x in class
                    .originals
                    .iter_mut()
                    .chain(class.positives.iter_mut())
                    .chain(class.negatives.iter_mut())
                {
                    *x = s.apply(x);
                }
            }
            ex
        }
        None => expanded.clone(),
    };
    let test_scaled = match (test, &scaler) {
        (Some(t), Some(s)) => Some(s.apply_dataset(t)?),
        (Some(t), None) => Some(t.clone()),
        (None, _) => None,
    };
    let graph = signedgraph::build(&scaled, &plan.graph)?;
    let spec = MlpSpec {
        input_dim: scaled.dim(),
        hidden_dims: plan.hidden.clone(),
        class_count: scaled.class_count(),
        dropout_rate: plan.dropout,
        weight_decay: plan.weight_decay,
    };
    let (params, report) = trainer::fit(&scaled, &graph, &spec, &plan.loss, &plan.train, test_scaled.as_ref())?;
    Ok(TrainOutcome {
        model: Model { spec, params, scaler },
        graph,
        report,
    })
}

fn load_test(path: Option<&Path>, label_column: &str, class_count: usize) -> Result<Option<LabeledDataset>> {
    let Some(p) = path else { return Ok(None) };
    let t = datakit::load_csv(p, label_column)?;
    if t.class_count > class_count {
        return Err(Error::invalid(format!(
            "test set has {} classes, training data {}",
            t.class_count, class_count
        )));
    }
    Ok(Some(LabeledDataset::with_names(
        t.feature_names,
        t.samples,
        t.labels,
        class_count,
    )?))
}

fn train(mut a: TrainArgs) -> Result<()> {
    let seed = require_seed(a.seed, "train")?;
    if a.lambda > 0.0 && a.n_plus == 0 && a.n_minus == 0 {
        return Err(Error::invalid(
            "vacuous regularizer: lambda > 0 needs --n-plus or --n-minus above 0",
        ));
    }
    a.input = absolute(&a.input)?;
    a.test = a.test.as_deref().map(absolute).transpose()?;
    a.out_dir = absolute(&a.out_dir)?;
    let plan = train_plan(&a.opts, a.lambda, a.n_plus, a.n_minus, seed)?;
    let expanded = ExpandedDataset::read_csv(&a.input, &a.opts.label_column)?;
    let test = load_test(a.test.as_deref(), &a.opts.label_column, expanded.class_count())?;
    let outcome = run_training(&expanded, test.as_ref(), &plan)?;

    ensure_dir(&a.out_dir)?;
    let model_path = a.out_dir.join("model.txt");
    let report_path = a.out_dir.join("report.csv");
    let edges_path = a.out_dir.join("graph.edges");
    let nodes_path = a.out_dir.join("graph.nodes.csv");
    let summary_path = a.out_dir.join("summary.json");
    outcome.model.save(&model_path)?;
    outcome.report.write_csv(&report_path)?;
    outcome.graph.write_edges(&edges_path)?;
    outcome.graph.write_nodes(&nodes_path)?;
    let summary = serde_json::json!({
        "final": outcome.report.final_record(),
        "config": &plan,
        "seeds": { "train": seed, "init": plan.train.init_seed, "batches": plan.train.rng_seed },
        "nodes": outcome.graph.node_count,
        "edges": outcome.graph.edges.len(),
        "wall_clock_seconds": outcome.report.wall_clock_seconds,
    });
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")
        .map_err(|e| Error::io(&summary_path, e))?;
    if let Some(r) = outcome.report.final_record() {
        log::info!(
            "epoch {}: J_l {:.4} J_g {:.4} train acc {:.4} test acc {:?}",
            r.epoch,
            r.loss.j_l,
            r.loss.j_g,
            r.train_accuracy,
            r.test_accuracy
        );
    }

    let mut mb = ManifestBuilder::new(Command::Train(a.clone()))
        .seed("train", seed)
        .seed("init", plan.train.init_seed)
        .seed("batches", plan.train.rng_seed)
        .input(&a.input)?;
    if let Some(t) = &a.test {
        mb = mb.input(t)?;
    }
    mb.output(&model_path)
        .output(&report_path)
        .output(&edges_path)
        .output(&nodes_path)
        .config(serde_json::to_value(&plan)?)
        .write(&a.out_dir.join("manifest.json"))?;
    Ok(())
}

/// One row of the grid CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub n_plus: usize,
    pub n_minus: usize,
    pub lambda: f64,
    pub seed: u64,
    pub accuracy: f64,
    pub auc: Option<f64>,
}

fn grid(mut a: GridArgs) -> Result<()> {
    let base = require_seed(a.seed, "grid")?;
    if a.repeats == 0 || a.n_plus.is_empty() || a.n_minus.is_empty() || a.lambda.is_empty() {
        return Err(Error::invalid("grid axes and --repeats must be non-empty"));
    }
    a.input = absolute(&a.input)?;
    a.test = absolute(&a.test)?;
    a.output = absolute(&a.output)?;
    let expanded = ExpandedDataset::read_csv(&a.input, &a.opts.label_column)?;
    let test = load_test(Some(&a.test), &a.opts.label_column, expanded.class_count())?.expect("test set given");
    let mut rows = Vec::new();
    for &n_plus in &a.n_plus {
        for &n_minus in &a.n_minus {
            for &lambda in &a.lambda {
                if lambda > 0.0 && n_plus == 0 && n_minus == 0 {
                    log::warn!("n_plus = n_minus = 0 with lambda {lambda}: the graph term is empty");
                }
                for k in 0..a.repeats {
                    let seed = base + k;
                    let plan = train_plan(&a.opts, lambda, n_plus, n_minus, seed)?;
                    let outcome = run_training(&expanded, None, &plan)?;
                    let e = trainer::evaluate_model(&outcome.model, &test)?;
                    log::info!("n+={n_plus} n-={n_minus} lambda={lambda} seed={seed}: acc {:.4}", e.accuracy);
                    rows.push(GridRow {
                        n_plus,
                        n_minus,
                        lambda,
                        seed,
                        accuracy: e.accuracy,
                        auc: e.auc,
                    });
                }
            }
        }
    }
    ensure_parent(&a.output)?;
    write_grid(&rows, &a.output)?;
    let (out, input, test_path) = (a.output.clone(), a.input.clone(), a.test.clone());
    ManifestBuilder::new(Command::Grid(a))
        .seed("base", base)
        .input(&input)?
        .input(&test_path)?
        .output(&out)
        .write(&manifest_path_for(&out))?;
    Ok(())
}

fn write_grid(rows: &[GridRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["n_plus", "n_minus", "lambda", "seed", "accuracy", "auc"])?;
    for r in rows {
        w.write_record([
            r.n_plus.to_string(),
            r.n_minus.to_string(),
            r.lambda.to_string(),
            r.seed.to_string(),
            r.accuracy.to_string(),
            r.auc.map_or_else(String::new, |v| v.to_string()),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn eval(mut a: EvalArgs) -> Result<()> {
    a.model = absolute(&a.model)?;
    a.input = absolute(&a.input)?;
    a.output = absolute(&a.output)?;
    let model = Model::load(&a.model)?;
    let ds = datakit::load_csv(&a.input, &a.label_column)?;
    if ds.class_count > model.spec.class_count {
        return Err(Error::invalid(format!(
            "data has {} classes, model {}",
            ds.class_count, model.spec.class_count
        )));
    }
    let ds = LabeledDataset::with_names(ds.feature_names, ds.samples, ds.labels, model.spec.class_count)?;
    let e = trainer::evaluate_model(&model, &ds)?;
    let line = serde_json::to_string(&serde_json::json!({ "accuracy": e.accuracy, "auc": e.auc }))?;
    println!("{line}");
    ensure_parent(&a.output)?;
    std::fs::write(&a.output, format!("{line}\n")).map_err(|e| Error::io(&a.output, e))?;
    let (out, model_path, input) = (a.output.clone(), a.model.clone(), a.input.clone());
    ManifestBuilder::new(Command::Eval(a))
        .input(&model_path)?
        .input(&input)?
        .output(&out)
        .write(&manifest_path_for(&out))?;
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<()> {
    let m = Manifest::load(&a.manifest)?;
    for (path, hash) in &m.inputs {
        let now = sha256_file(Path::new(path))?;
        if &now != hash {
            return Err(Error::Format {
                path: path.into(),
                message: "input changed since the manifest was written".into(),
            });
        }
    }
    let mut command = m.command;
    if let Some(dir) = &a.out_dir {
        ensure_dir(dir)?;
        match &mut command {
            Command::GenData(c) => redirect(&mut c.output, dir),
            Command::Split(c) => {
                redirect(&mut c.train_out, dir);
                redirect(&mut c.test_out, dir);
            }
            Command::Augment(c) => redirect(&mut c.output, dir),
            Command::Train(c) => c.out_dir = dir.clone(),
            Command::Grid(c) => redirect(&mut c.output, dir),
            Command::Eval(c) => redirect(&mut c.output, dir),
            Command::Replay(_) => {}
        }
    }
    if matches!(command, Command::Replay(_)) {
        return Err(Error::invalid("a manifest cannot record a replay"));
    }
    run(command)
}
