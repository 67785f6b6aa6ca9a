//! `texcode` command-line driver.

mod config;
mod runlog;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use texcode::classify::{evaluate, train_classifier, TrainConfig};
use texcode::features::{PoolingConfig, Reducer};
use texcode::io::dataset::{load_dataset, Layout, LabeledDataset, Split, SplitPolicy};
use texcode::io::synth::{synth_generate, Jitter, SynthSpec};
use texcode::io::viz::viz_filters;
use texcode::io::ModelFile;
use texcode::lbp::{LbpConfig, LbpVariant};
use texcode::pipeline::{encode_images, lbp_features, FeatureSet};
use texcode::registry::{ClassifierRegistry, LearnConfig, ModelRegistry};
use texcode::s3c::{BetaMode, S3cCode};
use texcode::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "texcode", version, about = "Unsupervised feature learning for texture recognition")]
#[command(args_override_self = true)]
struct Cli {
    /// Newline-delimited JSON file that receives one record per run.
    #[arg(long, global = true, default_value = "runs.ndjson")]
    log: PathBuf,
    /// Do not write a run record.
    #[arg(long, global = true)]
    no_log: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic texture corpus.
    Synth(SynthArgs),
    /// Learn a dictionary from training images.
    Learn(LearnArgs),
    /// Encode and pool the images of one split.
    Encode(EncodeArgs),
    /// Train a classifier on stored features.
    Train(TrainArgs),
    /// Score a classifier on stored features.
    Eval(EvalArgs),
    /// Learn on one corpus, then encode, train and test on another.
    Transfer(TransferArgs),
    /// Write a montage of a model's filters.
    Viz(VizArgs),
    /// Learn, encode, train and test on one corpus.
    Run(RunArgs),
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// Texture index of class 0; use different offsets for unrelated corpora.
    #[arg(long, default_value_t = 0)]
    class_offset: usize,
    #[arg(long, default_value_t = 48)]
    side: usize,
    #[arg(long, default_value_t = 50)]
    train_per_class: usize,
    #[arg(long, default_value_t = 50)]
    test_per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train on small scales and test on larger ones.
    #[arg(long)]
    disjoint_scale: bool,
    #[arg(long, default_value_t = 0.03)]
    noise: f64,
}

#[derive(Args, Debug, Serialize, Clone)]
struct DataArgs {
    /// Dataset root directory.
    #[arg(long)]
    data: PathBuf,
    /// manifest, kth-tips2, fmd or flat.
    #[arg(long, default_value = "manifest")]
    layout: String,
    /// Instances assigned to training for kth-tips2.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    train_instances: Vec<u32>,
    /// Seed of the fmd half split.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// Keep only these scale indices in the training split.
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<u8>>,
}

impl DataArgs {
    fn load(&self) -> Result<LabeledDataset> {
        let policy = SplitPolicy {
            train_instances: self.train_instances.clone(),
            seed: self.split_seed,
        };
        load_dataset(&self.data, Layout::parse(&self.layout)?, &policy, self.scales.as_deref())
    }
}

#[derive(Args, Debug, Serialize, Clone)]
struct ModelArgs {
    /// km, sc, ae, s3c, s4c or ms4c.
    #[arg(long, default_value = "s3c")]
    model: String,
    #[arg(long, default_value_t = 12)]
    patch: usize,
    #[arg(long, default_value_t = 64)]
    dict_size: usize,
    /// Number of random training patches.
    #[arg(long, default_value_t = 10_000)]
    patches: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Learn single-scale models on RGB patches.
    #[arg(long)]
    color: bool,
    #[arg(long)]
    whiten: bool,
    #[arg(long, default_value_t = 50)]
    km_iters: usize,
    /// triangle or hard.
    #[arg(long, default_value = "triangle")]
    km_encoding: String,
    #[arg(long, default_value_t = 1.0)]
    sc_beta: f64,
    #[arg(long, default_value_t = 10)]
    sc_iters: usize,
    #[arg(long, default_value_t = 0.1)]
    ae_lr: f64,
    #[arg(long, default_value_t = 20)]
    ae_epochs: usize,
    /// EM epochs of the spike-and-slab models.
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    /// spikes or spike-slab.
    #[arg(long, default_value = "spikes")]
    s3c_code: String,
    #[arg(long)]
    diagonal_beta: bool,
    /// Blur widths of s4c.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    sigmas: Vec<f64>,
    /// Pyramid levels of ms4c.
    #[arg(long, default_value_t = 3)]
    levels: usize,
    /// Share one dictionary across s4c scales.
    #[arg(long)]
    tied: bool,
    /// Add a base-scale RGB coder to ms4c.
    #[arg(long)]
    ms4c_color: bool,
}

impl ModelArgs {
    fn learn_config(&self) -> Result<LearnConfig> {
        let mut cfg = LearnConfig {
            patch: self.patch,
            dict_size: self.dict_size,
            patches: self.patches,
            seed: self.seed,
            color: self.color,
            ..Default::default()
        };
        cfg.preprocess.whiten = self.whiten;
        cfg.km.iters = self.km_iters;
        cfg.km.encoding = serde_json::from_value(json!(self.km_encoding))
            .map_err(|_| Error::Config(format!("unknown K-means encoding '{}'", self.km_encoding)))?;
        cfg.sc.beta = self.sc_beta;
        cfg.sc.iters = self.sc_iters;
        cfg.ae.lr = self.ae_lr;
        cfg.ae.epochs = self.ae_epochs;
        cfg.s3c.epochs = self.epochs;
        cfg.s3c.code = serde_json::from_value::<S3cCode>(json!(self.s3c_code))
            .map_err(|_| Error::Config(format!("unknown code '{}'", self.s3c_code)))?;
        cfg.s3c.learn.beta_mode = if self.diagonal_beta { BetaMode::Diagonal } else { BetaMode::Scalar };
        cfg.multiscale.sigmas = self.sigmas.clone();
        cfg.multiscale.levels = self.levels;
        cfg.multiscale.tied = self.tied;
        cfg.multiscale.color = self.ms4c_color;
        Ok(cfg)
    }
}

#[derive(Args, Debug, Serialize, Clone)]
struct PoolArgs {
    /// Pooling cells per side: 1, 2 or 3.
    #[arg(long, default_value_t = 2)]
    grid: usize,
    /// mean or max.
    #[arg(long, default_value = "mean")]
    reducer: String,
    /// Patch stride; half the patch side by default.
    #[arg(long)]
    stride: Option<usize>,
    /// Skip the final L2 normalization.
    #[arg(long)]
    no_l2: bool,
}

impl PoolArgs {
    fn config(&self) -> Result<PoolingConfig> {
        let reducer = match self.reducer.as_str() {
            "mean" => Reducer::Mean,
            "max" => Reducer::Max,
            other => return Err(Error::Config(format!("unknown reducer '{other}'"))),
        };
        let cfg = PoolingConfig {
            grid: self.grid,
            reducer,
            stride: self.stride,
            l2_normalize: !self.no_l2,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug, Serialize, Clone)]
struct ClassifierArgs {
    /// linear, exp-chi2 or knn3.
    #[arg(long, default_value = "linear")]
    classifier: String,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// exp-chi2 width; inverse mean chi2 distance when unset.
    #[arg(long)]
    gamma: Option<f64>,
    /// Choose C from the grid by cross-validation.
    #[arg(long)]
    cv: bool,
    #[arg(long, value_delimiter = ',', default_value = "0.1,1,10")]
    c_grid: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    train_seed: u64,
}

impl ClassifierArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            c: self.c,
            gamma: self.gamma,
            seed: self.train_seed,
            cross_validate: self.cv,
            c_grid: self.c_grid.clone(),
            ..Default::default()
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct LearnArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EncodeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// train or test.
    #[arg(long, default_value = "train")]
    split: String,
    /// Learned model file.
    #[arg(long, conflicts_with = "lbp", required_unless_present = "lbp")]
    model_file: Option<PathBuf>,
    /// LBP baseline instead of a model: plain, uniform, ri, ri-uniform or mlbp.
    #[arg(long)]
    lbp: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    lbp_radius: f64,
    #[arg(long, default_value_t = 8)]
    lbp_samples: usize,
    #[command(flatten)]
    pool: PoolArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[command(flatten)]
    classifier: ClassifierArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    #[arg(long)]
    features: PathBuf,
    /// Classifier file written by `train`.
    #[arg(long)]
    classifier_file: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct TransferArgs {
    /// Corpus the dictionary is learned on.
    #[arg(long)]
    source: PathBuf,
    #[arg(long, default_value = "manifest")]
    source_layout: String,
    /// Corpus that is encoded and classified.
    #[command(flatten)]
    target: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    pool: PoolArgs,
    #[command(flatten)]
    classifier: ClassifierArgs,
}

#[derive(Args, Debug, Serialize)]
struct VizArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    pool: PoolArgs,
    #[command(flatten)]
    classifier: ClassifierArgs,
    /// Also save the learned model here.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

fn lbp_config(a: &EncodeArgs, name: &str) -> Result<LbpConfig> {
    if name == "mlbp" {
        return Ok(LbpConfig::mlbp());
    }
    Ok(LbpConfig::single(LbpVariant::parse(name)?, a.lbp_radius, a.lbp_samples))
}

fn learn_model(ds: &LabeledDataset, m: &ModelArgs) -> Result<Box<dyn texcode::FeatureModel>> {
    let images = ds.load_images(Split::Train)?;
    ModelRegistry::with_builtin().learn(&m.model, &images, &m.learn_config()?)
}

/// Runs a command and returns the metrics to log.
fn execute(command: &Command) -> Result<serde_json::Value> {
    match command {
        Command::Synth(a) => {
            let spec = SynthSpec {
                classes: a.classes,
                class_offset: a.class_offset,
                textures: None,
                side: a.side,
                train_per_class: a.train_per_class,
                test_per_class: a.test_per_class,
                jitter: Jitter {
                    noise: a.noise,
                    ..Default::default()
                },
                disjoint_scale: a.disjoint_scale,
                seed: a.seed,
            };
            let ds = synth_generate(&spec, &a.out)?;
            Ok(json!({
                "train_images": ds.split(Split::Train).len(),
                "test_images": ds.split(Split::Test).len(),
            }))
        }
        Command::Learn(a) => {
            let ds = a.data.load()?;
            let model = learn_model(&ds, &a.model)?;
            model.to_file()?.save(&a.out)?;
            let g = model.geometry();
            Ok(json!({ "kind": model.kind().name(), "dim": g.dim, "units": g.units, "code_dim": model.code_dim() }))
        }
        Command::Encode(a) => {
            let ds = a.data.load()?;
            let split = Split::parse(&a.split)?;
            let images = ds.load_images(split)?;
            let features = match (&a.model_file, &a.lbp) {
                (_, Some(name)) => lbp_features(&images, &lbp_config(a, name)?)?,
                (Some(path), None) => {
                    let model = ModelRegistry::with_builtin().load(&ModelFile::load(path)?)?;
                    encode_images(model.as_ref(), &images, &a.pool.config()?)?
                }
                (None, None) => return Err(Error::Config("give --model-file or --lbp".into())),
            };
            let set = FeatureSet::new(features, ds.labels(split), ds.classes.len())?;
            set.to_file()?.save(&a.out)?;
            Ok(json!({ "images": set.features.len(), "dim": set.dim() }))
        }
        Command::Train(a) => {
            let set = FeatureSet::from_file(&ModelFile::load(&a.features)?)?;
            let registry = ClassifierRegistry::with_builtin();
            let clf = train_classifier(
                registry.get(&a.classifier.classifier)?,
                &set.features,
                &set.labels,
                &a.classifier.config(),
            )?;
            clf.to_file()?.save(&a.out)?;
            let e = evaluate(clf.as_ref(), &set.features, &set.labels)?;
            Ok(json!({ "train_accuracy": e.accuracy }))
        }
        Command::Eval(a) => {
            let set = FeatureSet::from_file(&ModelFile::load(&a.features)?)?;
            let clf = ClassifierRegistry::with_builtin().load(&ModelFile::load(&a.classifier_file)?)?;
            let e = evaluate(clf.as_ref(), &set.features, &set.labels)?;
            println!("accuracy {:.4}", e.accuracy);
            Ok(json!({ "accuracy": e.accuracy, "confusion": e.confusion }))
        }
        Command::Transfer(a) => {
            let source = load_dataset(
                &a.source,
                Layout::parse(&a.source_layout)?,
                &SplitPolicy::default(),
                None,
            )?;
            let model = learn_model(&source, &a.model)?;
            let target = a.target.load()?;
            score(model.as_ref(), &target, &a.pool, &a.classifier)
        }
        Command::Viz(a) => {
            let model = ModelRegistry::with_builtin().load(&ModelFile::load(&a.model_file)?)?;
            let img = viz_filters(&model.filters(), &a.out)?;
            Ok(json!({ "width": img.width(), "height": img.height() }))
        }
        Command::Run(a) => {
            let ds = a.data.load()?;
            let model = learn_model(&ds, &a.model)?;
            if let Some(path) = &a.model_out {
                model.to_file()?.save(path)?;
            }
            score(model.as_ref(), &ds, &a.pool, &a.classifier)
        }
    }
}

fn score(model: &dyn texcode::FeatureModel, ds: &LabeledDataset, pool: &PoolArgs, c: &ClassifierArgs) -> Result<serde_json::Value> {
    let pooling = pool.config()?;
    let xtr = encode_images(model, &ds.load_images(Split::Train)?, &pooling)?;
    let xte = encode_images(model, &ds.load_images(Split::Test)?, &pooling)?;
    let (ytr, yte) = (ds.labels(Split::Train), ds.labels(Split::Test));
    let registry = ClassifierRegistry::with_builtin();
    let clf = train_classifier(registry.get(&c.classifier)?, &xtr, &ytr, &c.config())?;
    let train = evaluate(clf.as_ref(), &xtr, &ytr)?;
    let test = evaluate(clf.as_ref(), &xte, &yte)?;
    println!("train accuracy {:.4}, test accuracy {:.4}", train.accuracy, test.accuracy);
    Ok(json!({
        "train_accuracy": train.accuracy,
        "accuracy": test.accuracy,
        "confusion": test.confusion,
    }))
}

fn command_parts(c: &Command) -> (&'static str, serde_json::Value) {
    let v = |x: &dyn erased::Echo| x.echo();
    match c {
        Command::Synth(a) => ("synth", v(a)),
        Command::Learn(a) => ("learn", v(a)),
        Command::Encode(a) => ("encode", v(a)),
        Command::Train(a) => ("train", v(a)),
        Command::Eval(a) => ("eval", v(a)),
        Command::Transfer(a) => ("transfer", v(a)),
        Command::Viz(a) => ("viz", v(a)),
        Command::Run(a) => ("run", v(a)),
    }
}

mod erased {
    pub trait Echo {
        fn echo(&self) -> serde_json::Value;
    }
    impl<T: serde::Serialize> Echo for T {
        fn echo(&self) -> serde_json::Value {
            serde_json::to_value(self).unwrap_or_default()
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv = match config::expand_args(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(argv);
    let (name, echo) = command_parts(&cli.command);
    match execute(&cli.command) {
        Ok(metrics) => {
            if !cli.no_log {
                if let Err(e) = runlog::append(Path::new(&cli.log), name, echo, metrics) {
                    eprintln!("error: cannot write run log {}: {e}", cli.log.display());
                    return ExitCode::FAILURE;
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
