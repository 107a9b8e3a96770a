//! Experiment orchestration: preset configurations, repetition management
//! with the low-accuracy retry rule, random-label prefitting, and binned
//! estimation with run-wide ReLU bounds.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{shuffle_labels, split, stream, Dataset, DatasetConfig, SplitDataset};
use crate::error::{Error, Result};
use crate::infoplane::{
    aggregate_runs, mi_binned, mi_exact, CurvePoint, Estimator, InfoPoint, InfoTrajectory,
    LayerMi, RunAggregate,
};
use crate::qnet::{
    detect_dead_layer, evaluate, init_network, record_states, recorded_layer_names, train_epoch,
    Activation, LayerSpec, NetworkSpec, QuantBits, QuantState, RecordOptions, Shape, StateRecord,
};
use crate::rng::derive_seed;

/// Which mutual-information estimators a run computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiMode {
    /// Exact state counting on the quantized codes.
    Exact,
    /// Post-hoc uniform binning of the observed activations.
    Binned { bins: u32 },
    /// Both estimators side by side.
    Both { bins: u32 },
}

impl MiMode {
    pub fn wants_exact(self) -> bool {
        matches!(self, MiMode::Exact | MiMode::Both { .. })
    }

    pub fn bins(self) -> Option<u32> {
        match self {
            MiMode::Exact => None,
            MiMode::Binned { bins } | MiMode::Both { bins } => Some(bins),
        }
    }
}

/// A full experiment: dataset, architecture, schedule, measurement mode,
/// retry policy, and seeds. Serializes field-for-field as the JSON config
/// file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetConfig,
    pub network: NetworkSpec,
    pub epochs: u64,
    pub repetitions: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::train_fraction")]
    pub train_fraction: f64,
    pub mi: MiMode,
    #[serde(default = "defaults::mi_stride")]
    pub mi_stride: u64,
    /// Epochs of training on label-shuffled data before the main schedule
    /// (0 disables prefitting).
    #[serde(default)]
    pub prefit_epochs: u64,
    /// Repetitions whose final test accuracy falls below this are discarded
    /// and rerun with a fresh derived seed.
    #[serde(default = "defaults::retry_threshold")]
    pub retry_threshold: f64,
    #[serde(default = "defaults::retry_budget")]
    pub retry_budget: u32,
    pub master_seed: u64,
    /// Acknowledges binning the activations of a quantized run.
    #[serde(default)]
    pub bin_quantized: bool,
    /// Desk-scaling factor already applied to this config.
    #[serde(default = "defaults::scale")]
    pub scale: f64,
}

mod defaults {
    pub fn batch_size() -> usize {
        256
    }
    pub fn learning_rate() -> f64 {
        1e-4
    }
    pub fn train_fraction() -> f64 {
        0.8
    }
    pub fn mi_stride() -> u64 {
        1
    }
    pub fn retry_threshold() -> f64 {
        0.55
    }
    pub fn retry_budget() -> u32 {
        10
    }
    pub fn scale() -> f64 {
        1.0
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.mi_stride == 0 {
            return Err(Error::InvalidConfig("mi_stride must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig("train_fraction must be in (0, 1)".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be finite and >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.retry_threshold) {
            return Err(Error::InvalidConfig("retry_threshold must be in [0, 1]".into()));
        }
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(Error::InvalidConfig("scale must be in (0, 1]".into()));
        }
        let quant_on = self.network.quant_bits.is_on();
        match self.mi {
            MiMode::Exact | MiMode::Both { .. } if !quant_on => {
                return Err(Error::InvalidConfig(
                    "exact MI needs quantization on (discrete states); use binned mode".into(),
                ));
            }
            MiMode::Binned { bins } | MiMode::Both { bins } if bins == 0 => {
                return Err(Error::InvalidConfig("bins must be >= 1".into()));
            }
            MiMode::Binned { .. } if quant_on && !self.bin_quantized => {
                return Err(Error::InvalidConfig(
                    "binned MI on a quantized run requires bin_quantized: true".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<ExperimentConfig> {
        let json = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&json)
    }
}

/// Catalog of the named experiment configurations.
pub const PRESET_NAMES: &[&str] = &[
    "SYN-TANH-8BIT",
    "SYN-RELU-8BIT",
    "SYN-TANH-4BIT",
    "SYN-RELU-4BIT",
    "SYN-TANH-32BIT",
    "SYN-RELU-32BIT",
    "SYN-TANH-BINS-30",
    "SYN-TANH-BINS-100",
    "SYN-TANH-BINS-256",
    "SYN-RELU-BINS-30",
    "SYN-RELU-BINS-100",
    "SYN-RELU-BINS-256",
    "SYN-TANH-PREFIT",
    "SYN-RELU-PREFIT",
    "MNIST-BN2",
    "MNIST-BN4",
    "MNIST-HOURGLASS",
    "MNIST-4x10",
    "MNIST-CONV",
];

pub fn preset_names() -> &'static [&'static str] {
    PRESET_NAMES
}

/// Default location of the MNIST IDX files for the MNIST presets; override
/// the directory when building the config (the CLI exposes `--mnist-dir`).
pub const DEFAULT_MNIST_DIR: &str = "data/mnist";

/// Synthetic dataset seed shared by the synthetic presets; the master seed
/// drives everything per repetition.
const SYNTHETIC_DATA_SEED: u64 = 1;
const DEFAULT_MASTER_SEED: u64 = 1;

fn synthetic_standard(
    name: &str,
    activation: Activation,
    quant_bits: QuantBits,
    repetitions: usize,
    epochs: u64,
) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        dataset: DatasetConfig::Synthetic {
            seed: SYNTHETIC_DATA_SEED,
        },
        network: NetworkSpec::dense(12, &[10, 7, 5, 4, 3], activation, 2, quant_bits, 0),
        epochs,
        repetitions,
        batch_size: defaults::batch_size(),
        learning_rate: defaults::learning_rate(),
        train_fraction: defaults::train_fraction(),
        mi: MiMode::Exact,
        mi_stride: 1,
        prefit_epochs: 0,
        retry_threshold: defaults::retry_threshold(),
        retry_budget: defaults::retry_budget(),
        master_seed: DEFAULT_MASTER_SEED,
        bin_quantized: false,
        scale: 1.0,
    }
}

fn mnist_dataset(mnist_dir: &str) -> DatasetConfig {
    let dir = PathBuf::from(mnist_dir);
    DatasetConfig::Mnist {
        images: vec![
            dir.join("train-images-idx3-ubyte"),
            dir.join("t10k-images-idx3-ubyte"),
        ],
        labels: vec![
            dir.join("train-labels-idx1-ubyte"),
            dir.join("t10k-labels-idx1-ubyte"),
        ],
    }
}

fn mnist_standard(name: &str, hidden: &[usize], mnist_dir: &str) -> ExperimentConfig {
    let mut cfg = synthetic_standard(name, Activation::Relu, QuantBits::Bits(8), 20, 3000);
    cfg.dataset = mnist_dataset(mnist_dir);
    cfg.network = NetworkSpec::dense(784, hidden, Activation::Relu, 10, QuantBits::Bits(8), 0);
    cfg
}

/// Look up a named preset, resolving MNIST file paths under `mnist_dir`.
pub fn preset_with_mnist_dir(name: &str, mnist_dir: &str) -> Result<ExperimentConfig> {
    use Activation::{Relu, Tanh};
    let cfg = match name {
        "SYN-TANH-8BIT" => synthetic_standard(name, Tanh, QuantBits::Bits(8), 50, 8000),
        "SYN-RELU-8BIT" => synthetic_standard(name, Relu, QuantBits::Bits(8), 50, 8000),
        "SYN-TANH-4BIT" => synthetic_standard(name, Tanh, QuantBits::Bits(4), 30, 8000),
        "SYN-RELU-4BIT" => synthetic_standard(name, Relu, QuantBits::Bits(4), 30, 8000),
        "SYN-TANH-32BIT" => synthetic_standard(name, Tanh, QuantBits::Bits(32), 30, 8000),
        "SYN-RELU-32BIT" => synthetic_standard(name, Relu, QuantBits::Bits(32), 30, 8000),
        "SYN-TANH-BINS-30" | "SYN-TANH-BINS-100" | "SYN-TANH-BINS-256" | "SYN-RELU-BINS-30"
        | "SYN-RELU-BINS-100" | "SYN-RELU-BINS-256" => {
            let activation = if name.contains("TANH") { Tanh } else { Relu };
            let bins: u32 = name.rsplit('-').next().unwrap().parse().unwrap();
            let mut cfg = synthetic_standard(name, activation, QuantBits::Off, 50, 8000);
            cfg.mi = MiMode::Binned { bins };
            cfg
        }
        "SYN-TANH-PREFIT" | "SYN-RELU-PREFIT" => {
            let activation = if name.contains("TANH") { Tanh } else { Relu };
            let mut cfg = synthetic_standard(name, activation, QuantBits::Bits(8), 20, 8000);
            cfg.prefit_epochs = 1000;
            cfg
        }
        "MNIST-BN2" => mnist_standard(name, &[16, 8, 4, 2], mnist_dir),
        "MNIST-BN4" => mnist_standard(name, &[16, 12, 8, 4], mnist_dir),
        "MNIST-HOURGLASS" => mnist_standard(name, &[16, 8, 4, 2, 4, 8], mnist_dir),
        "MNIST-4x10" => mnist_standard(name, &[10, 10, 10, 10], mnist_dir),
        "MNIST-CONV" => {
            let mut cfg = mnist_standard(name, &[], mnist_dir);
            cfg.network = NetworkSpec {
                input_shape: Shape::Image { h: 28, w: 28, c: 1 },
                layers: vec![
                    LayerSpec::Conv {
                        kernel_h: 3,
                        kernel_w: 3,
                        channels: 2,
                        activation: Relu,
                    },
                    LayerSpec::MaxPool { h: 2, w: 2 },
                    LayerSpec::Conv {
                        kernel_h: 3,
                        kernel_w: 3,
                        channels: 2,
                        activation: Relu,
                    },
                    LayerSpec::MaxPool { h: 2, w: 2 },
                    LayerSpec::Flatten,
                    LayerSpec::Dense {
                        width: 20,
                        activation: Relu,
                    },
                    LayerSpec::Dense {
                        width: 10,
                        activation: Activation::Softmax,
                    },
                ],
                quant_bits: QuantBits::Bits(8),
                seed: 0,
            };
            cfg
        }
        _ => return Err(Error::UnknownPreset(name.into())),
    };
    debug_assert!(cfg.validate().is_ok(), "preset {name} must validate");
    Ok(cfg)
}

/// Look up a named preset with MNIST paths under [`DEFAULT_MNIST_DIR`].
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    preset_with_mnist_dir(name, DEFAULT_MNIST_DIR)
}

/// Scale repetitions and epochs down by `factor` (minimum 1 each) for a
/// reduced-cost rehearsal of a preset; everything else stays intact and the
/// applied factor is recorded in the config.
pub fn desk_scale(config: &ExperimentConfig, factor: f64) -> Result<ExperimentConfig> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "desk-scale factor must be in (0, 1], got {factor}"
        )));
    }
    let scale_count = |x: u64| -> u64 {
        if x == 0 {
            0
        } else {
            ((x as f64 * factor).floor() as u64).max(1)
        }
    };
    let mut scaled = config.clone();
    scaled.repetitions = scale_count(config.repetitions as u64) as usize;
    scaled.epochs = scale_count(config.epochs);
    scaled.prefit_epochs = scale_count(config.prefit_epochs);
    scaled.scale = config.scale * factor;
    Ok(scaled)
}

/// One discarded repetition attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryEvent {
    pub repetition: usize,
    /// 0 is the first attempt; retries count up from 1.
    pub attempt: u32,
    pub test_accuracy: f64,
    pub reason: String,
    pub seed: u64,
}

/// Trajectories and aggregate of one estimator across all repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSet {
    pub estimator: Estimator,
    pub runs: Vec<InfoTrajectory>,
    pub aggregate: RunAggregate,
}

/// Everything a finished experiment produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub config: ExperimentConfig,
    pub layer_names: Vec<String>,
    pub exact: Option<EstimatorSet>,
    pub binned: Option<EstimatorSet>,
    pub retries: Vec<RetryEvent>,
    pub dataset_name: String,
    pub dataset_size: usize,
    pub num_classes: usize,
}

impl RunArtifacts {
    /// The estimator set every mode provides (exact when present, binned
    /// otherwise).
    pub fn primary(&self) -> &EstimatorSet {
        self.exact
            .as_ref()
            .or(self.binned.as_ref())
            .expect("a run always has at least one estimator")
    }
}

/// Per-logged-epoch instrumentation hook: sees the raw state record and the
/// measured MI before the record is discarded.
pub struct EpochAudit<'a> {
    pub repetition: usize,
    pub epoch: u64,
    pub record: &'a StateRecord,
    pub dataset: &'a Dataset,
    pub exact: Option<&'a [LayerMi]>,
    pub binned: Option<&'a [LayerMi]>,
}

type AuditHook = Arc<dyn Fn(&EpochAudit<'_>) + Send + Sync>;

/// Execution knobs that do not affect results (except the audit hook, which
/// can panic a run).
#[derive(Default, Clone)]
pub struct RunOptions {
    /// Worker pool size; defaults to `IBQ_WORKERS` or the number of CPUs,
    /// capped at the repetition count.
    pub workers: Option<usize>,
    pub epoch_audit: Option<AuditHook>,
}

/// Resolve the worker count: explicit option, then `IBQ_WORKERS`, then CPUs.
pub fn resolve_workers(explicit: Option<usize>, repetitions: usize) -> usize {
    let requested = explicit
        .or_else(|| {
            std::env::var("IBQ_WORKERS")
                .ok()
                .and_then(|v| v.parse::<usize>().ok())
        })
        .filter(|&w| w > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(std::num::NonZeroUsize::get)
                .unwrap_or(1)
        });
    requested.clamp(1, repetitions.max(1))
}

struct PassMeasurements {
    exact_points: Vec<Vec<InfoPoint>>,
    binned_points: Vec<Vec<InfoPoint>>,
    train_curve: Vec<CurvePoint>,
    test_curve: Vec<CurvePoint>,
    layer_max: Vec<f64>,
    final_test_accuracy: f64,
    dead_layers: Vec<usize>,
}

/// Run the full training schedule once for one repetition.
///
/// `binned_bounds` switches the pass role: `None` trains and (for binned
/// modes) only tracks each layer's run-wide maximum activation; `Some`
/// re-runs the identical schedule and bins against the supplied bounds.
#[allow(clippy::too_many_arguments)]
fn run_pass(
    config: &ExperimentConfig,
    dataset: &Dataset,
    split_data: &SplitDataset,
    rep: usize,
    rep_seed: u64,
    n_layers: usize,
    binned_bounds: Option<&[(f64, f64)]>,
    audit: Option<&AuditHook>,
) -> Result<PassMeasurements> {
    let mut net = init_network(&config.network, rep_seed)?;
    let mut quant = QuantState::new(&config.network);
    let wants_exact = config.mi.wants_exact();
    let wants_binned = config.mi.bins().is_some();
    let measure_binned = binned_bounds.is_some();
    let record_options = RecordOptions {
        keep_codes: wants_exact,
        keep_activations: wants_binned,
    };

    let prefit_train = (config.prefit_epochs > 0)
        .then(|| shuffle_labels(&split_data.train, rep_seed));

    let total_epochs = config.prefit_epochs + config.epochs;
    let mut m = PassMeasurements {
        exact_points: vec![Vec::new(); n_layers],
        binned_points: vec![Vec::new(); n_layers],
        train_curve: Vec::with_capacity(total_epochs as usize),
        test_curve: Vec::with_capacity(total_epochs as usize),
        layer_max: vec![f64::NEG_INFINITY; n_layers],
        final_test_accuracy: 0.0,
        dead_layers: Vec::new(),
    };

    for epoch in 1..=total_epochs {
        let train_set: &Dataset = match &prefit_train {
            Some(shuffled) if epoch <= config.prefit_epochs => shuffled,
            _ => &split_data.train,
        };
        let shuffle_seed = derive_seed(rep_seed, &[stream::EPOCH_SHUFFLE, epoch]);
        let stats = train_epoch(
            &mut net,
            &mut quant,
            train_set,
            config.batch_size,
            config.learning_rate,
            shuffle_seed,
        )?;
        m.train_curve.push(CurvePoint {
            epoch,
            accuracy: stats.accuracy,
            loss: stats.loss,
        });
        let (test_acc, test_loss) = evaluate(&mut net, &split_data.test, &quant)?;
        m.test_curve.push(CurvePoint {
            epoch,
            accuracy: test_acc,
            loss: test_loss,
        });

        if epoch % config.mi_stride == 0 || epoch == total_epochs {
            let record = record_states(&mut net, dataset, &quant, epoch, record_options)?;
            // MI always refers to the true labels, also during prefit.
            let exact = wants_exact
                .then(|| mi_exact(&record, &dataset.labels, dataset.num_classes))
                .transpose()?;
            let binned = match (measure_binned, config.mi.bins()) {
                (true, Some(bins)) => Some(mi_binned(
                    &record,
                    &dataset.labels,
                    dataset.num_classes,
                    bins,
                    binned_bounds.unwrap(),
                )?),
                _ => None,
            };
            if wants_binned && !measure_binned {
                for (layer_max, layer) in m.layer_max.iter_mut().zip(&record.layers) {
                    let acts = layer.activations.as_ref().expect("activations kept");
                    if let Some((_, hi)) = acts.min_max() {
                        *layer_max = layer_max.max(hi);
                    }
                }
            }
            if let Some(points) = &exact {
                for (l, mi) in points.iter().enumerate() {
                    m.exact_points[l].push(InfoPoint {
                        epoch,
                        layer: l,
                        i_xt: mi.i_xt,
                        i_ty: mi.i_ty,
                    });
                }
            }
            if let Some(points) = &binned {
                for (l, mi) in points.iter().enumerate() {
                    m.binned_points[l].push(InfoPoint {
                        epoch,
                        layer: l,
                        i_xt: mi.i_xt,
                        i_ty: mi.i_ty,
                    });
                }
            }
            if let Some(hook) = audit {
                hook(&EpochAudit {
                    repetition: rep,
                    epoch,
                    record: &record,
                    dataset,
                    exact: exact.as_deref(),
                    binned: binned.as_deref(),
                });
            }
            if epoch == total_epochs {
                m.dead_layers = detect_dead_layer(&record);
            }
        }
    }
    m.final_test_accuracy = m.test_curve.last().map_or(0.0, |c| c.accuracy);
    Ok(m)
}

/// Per-layer binning bounds: tanh in [-1, 1], softmax in [0, 1], ReLU-like
/// (including pooled ReLU) in [0, max activation observed across the run's
/// logged epochs].
fn binning_bounds(spec: &NetworkSpec, layer_max: &[f64]) -> Vec<(f64, f64)> {
    let mut bounds = Vec::with_capacity(layer_max.len());
    let mut recorded = 0usize;
    let mut last_activation = Activation::Relu;
    for layer in &spec.layers {
        match layer {
            LayerSpec::Dense { activation, .. } | LayerSpec::Conv { activation, .. } => {
                last_activation = *activation;
            }
            LayerSpec::MaxPool { .. } => {}
            LayerSpec::Flatten => continue,
        }
        let b = match last_activation {
            Activation::Tanh => (-1.0, 1.0),
            Activation::Softmax => (0.0, 1.0),
            Activation::Relu => (0.0, layer_max[recorded].max(0.0)),
        };
        bounds.push(b);
        recorded += 1;
    }
    bounds
}

struct RepetitionOutcome {
    exact: Option<InfoTrajectory>,
    binned: Option<InfoTrajectory>,
    retries: Vec<RetryEvent>,
}

fn run_repetition(
    config: &ExperimentConfig,
    dataset: &Dataset,
    layer_names: &[String],
    rep: usize,
    audit: Option<&AuditHook>,
) -> Result<RepetitionOutcome> {
    let mut retries = Vec::new();
    for attempt in 0..=config.retry_budget {
        let rep_seed = derive_seed(
            config.master_seed,
            &[stream::REPETITION, rep as u64, stream::RETRY * attempt as u64],
        );
        let split_data = split(dataset, config.train_fraction, rep_seed)?;
        let n_layers = layer_names.len();

        let first = run_pass(
            config,
            dataset,
            &split_data,
            rep,
            rep_seed,
            n_layers,
            None,
            audit,
        )?;
        let needs_second_pass = config.mi.bins().is_some();
        let m = if needs_second_pass {
            let bounds = binning_bounds(&config.network, &first.layer_max);
            run_pass(
                config,
                dataset,
                &split_data,
                rep,
                rep_seed,
                n_layers,
                Some(&bounds),
                audit,
            )?
        } else {
            first
        };

        if m.final_test_accuracy < config.retry_threshold {
            let reason = if m.dead_layers.is_empty() {
                "accuracy below retry threshold".to_string()
            } else {
                format!(
                    "accuracy below retry threshold; dead ReLU layer(s) at {:?}",
                    m.dead_layers
                )
            };
            log::warn!(
                "repetition {rep} attempt {attempt}: test accuracy {:.4} < {:.2}, retrying ({reason})",
                m.final_test_accuracy,
                config.retry_threshold
            );
            retries.push(RetryEvent {
                repetition: rep,
                attempt,
                test_accuracy: m.final_test_accuracy,
                reason,
                seed: rep_seed,
            });
            continue;
        }

        let trajectory = |estimator: Estimator, layers: Vec<Vec<InfoPoint>>| InfoTrajectory {
            run_id: rep,
            seed: rep_seed,
            estimator,
            layer_names: layer_names.to_vec(),
            layers,
            train_curve: m.train_curve.clone(),
            test_curve: m.test_curve.clone(),
        };
        return Ok(RepetitionOutcome {
            exact: config
                .mi
                .wants_exact()
                .then(|| trajectory(Estimator::Exact, m.exact_points.clone())),
            binned: config
                .mi
                .bins()
                .map(|bins| trajectory(Estimator::Binned { bins }, m.binned_points.clone())),
            retries,
        });
    }
    Err(Error::RetryBudgetExhausted {
        repetition: rep,
        budget: config.retry_budget,
        last_accuracy: retries.last().map_or(0.0, |r| r.test_accuracy),
    })
}

/// Run every repetition of an experiment (in parallel workers), discarding
/// and rerunning low-accuracy repetitions, and aggregate the results.
pub fn run_experiment(config: &ExperimentConfig, options: &RunOptions) -> Result<RunArtifacts> {
    config.validate()?;
    let dataset = config.dataset.load()?;
    let layer_names = recorded_layer_names(&config.network);
    let workers = resolve_workers(options.workers, config.repetitions);
    log::info!(
        "{}: {} repetitions x {} epochs on {} ({} samples), {} worker(s)",
        config.name,
        config.repetitions,
        config.epochs,
        dataset.name,
        dataset.len(),
        workers
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    let done = AtomicUsize::new(0);
    let audit = options.epoch_audit.as_ref();
    let outcomes: Vec<RepetitionOutcome> = pool.install(|| {
        (0..config.repetitions)
            .into_par_iter()
            .map(|rep| {
                let outcome = run_repetition(config, &dataset, &layer_names, rep, audit)?;
                let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                log::info!("{}: repetition {rep} done ({n}/{})", config.name, config.repetitions);
                Ok(outcome)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let retries: Vec<RetryEvent> = outcomes.iter().flat_map(|o| o.retries.clone()).collect();
    let collect_set = |pick: fn(&RepetitionOutcome) -> Option<&InfoTrajectory>,
                       estimator: Estimator|
     -> Result<Option<EstimatorSet>> {
        let runs: Vec<InfoTrajectory> = outcomes.iter().filter_map(pick).cloned().collect();
        if runs.is_empty() {
            return Ok(None);
        }
        let aggregate = aggregate_runs(&runs)?;
        Ok(Some(EstimatorSet {
            estimator,
            runs,
            aggregate,
        }))
    };
    let exact = collect_set(|o| o.exact.as_ref(), Estimator::Exact)?;
    let binned = match config.mi.bins() {
        Some(bins) => collect_set(|o| o.binned.as_ref(), Estimator::Binned { bins })?,
        None => None,
    };

    Ok(RunArtifacts {
        config: config.clone(),
        layer_names,
        exact,
        binned,
        retries,
        dataset_name: dataset.name.clone(),
        dataset_size: dataset.len(),
        num_classes: dataset.num_classes,
    })
}

/// Train a network on a label-shuffled copy of a dataset; the returned
/// network has seen `epochs` epochs of random labels.
pub fn prefit_random_labels(
    net: &mut crate::qnet::Network,
    quant: &mut QuantState,
    dataset: &Dataset,
    epochs: u64,
    batch_size: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<()> {
    if epochs == 0 {
        return Ok(());
    }
    let shuffled = shuffle_labels(dataset, seed);
    for epoch in 1..=epochs {
        let shuffle_seed = derive_seed(seed, &[stream::EPOCH_SHUFFLE, epoch]);
        train_epoch(net, quant, &shuffled, batch_size, learning_rate, shuffle_seed)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        let mut cfg = synthetic_standard("TINY", Activation::Tanh, QuantBits::Bits(8), 1, 1);
        cfg.network = NetworkSpec::dense(12, &[5, 3], Activation::Tanh, 2, QuantBits::Bits(8), 0);
        cfg.retry_threshold = 0.0;
        cfg
    }

    #[test]
    fn preset_catalog_round_trips_through_json() {
        for name in preset_names() {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            let json = cfg.to_json_pretty().unwrap();
            let back = ExperimentConfig::from_json(&json).unwrap();
            assert_eq!(cfg, back, "preset {name} did not round-trip");
        }
        assert!(matches!(preset("nope"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn preset_catalog_matches_protocol() {
        let cfg = preset("SYN-TANH-8BIT").unwrap();
        assert_eq!(cfg.repetitions, 50);
        assert_eq!(cfg.epochs, 8000);
        assert_eq!(cfg.network.quant_bits, QuantBits::Bits(8));
        assert_eq!(cfg.batch_size, 256);
        assert_eq!(cfg.learning_rate, 1e-4);
        assert_eq!(cfg.mi, MiMode::Exact);

        let cfg = preset("SYN-RELU-BINS-30").unwrap();
        assert_eq!(cfg.mi, MiMode::Binned { bins: 30 });
        assert_eq!(cfg.network.quant_bits, QuantBits::Off);
        assert_eq!(cfg.repetitions, 50);

        let cfg = preset("SYN-TANH-PREFIT").unwrap();
        assert_eq!(cfg.prefit_epochs, 1000);
        assert_eq!(cfg.epochs, 8000);
        assert_eq!(cfg.repetitions, 20);

        let cfg = preset("MNIST-BN2").unwrap();
        assert_eq!(cfg.repetitions, 20);
        assert_eq!(cfg.epochs, 3000);
        match &cfg.network.layers[..] {
            [LayerSpec::Dense { width: 16, .. }, LayerSpec::Dense { width: 8, .. }, LayerSpec::Dense { width: 4, .. }, LayerSpec::Dense { width: 2, .. }, LayerSpec::Dense { width: 10, activation: Activation::Softmax }] => {}
            other => panic!("unexpected MNIST-BN2 layers: {other:?}"),
        }

        let cfg = preset("MNIST-HOURGLASS").unwrap();
        let widths: Vec<usize> = cfg
            .network
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Dense { width, .. } => Some(*width),
                _ => None,
            })
            .collect();
        assert_eq!(widths, vec![16, 8, 4, 2, 4, 8, 10]);
    }

    #[test]
    fn desk_scale_examples() {
        let cfg = preset("SYN-TANH-8BIT").unwrap();
        let scaled = desk_scale(&cfg, 0.1).unwrap();
        assert_eq!(scaled.repetitions, 5);
        assert_eq!(scaled.epochs, 800);
        assert_eq!(scaled.scale, 0.1);
        assert_eq!(scaled.batch_size, cfg.batch_size);

        let identity = desk_scale(&cfg, 1.0).unwrap();
        assert_eq!(identity, cfg);

        assert!(desk_scale(&cfg, 0.0).is_err());
        assert!(desk_scale(&cfg, 1.5).is_err());

        // Tiny factors clamp to one, and zero prefit stays zero.
        let tiny = desk_scale(&cfg, 1e-6).unwrap();
        assert_eq!((tiny.repetitions, tiny.epochs, tiny.prefit_epochs), (1, 1, 0));
    }

    #[test]
    fn config_validation_rejects_inconsistent_modes() {
        let mut cfg = tiny_config();
        cfg.network.quant_bits = QuantBits::Off;
        cfg.mi = MiMode::Exact;
        assert!(cfg.validate().is_err());

        cfg.mi = MiMode::Binned { bins: 30 };
        cfg.validate().unwrap();

        cfg.network.quant_bits = QuantBits::Bits(8);
        assert!(cfg.validate().is_err(), "binning quantized runs needs consent");
        cfg.bin_quantized = true;
        cfg.validate().unwrap();

        cfg.mi = MiMode::Both { bins: 0 };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn single_repetition_structure() {
        let mut cfg = tiny_config();
        cfg.mi_stride = 1;
        let artifacts = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(artifacts.layer_names, vec!["tanh5", "tanh3", "softmax2"]);
        let set = artifacts.primary();
        assert_eq!(set.runs.len(), 1);
        let run = &set.runs[0];
        assert_eq!(run.layers.len(), 3);
        for layer in &run.layers {
            assert_eq!(layer.len(), 1, "one point per layer for one epoch");
        }
        assert_eq!(run.train_curve.len(), 1);
        assert!(artifacts.retries.is_empty());
    }

    #[test]
    fn run_experiment_is_deterministic() {
        let mut cfg = tiny_config();
        cfg.repetitions = 2;
        cfg.epochs = 3;
        let a = run_experiment(&cfg, &RunOptions::default()).unwrap();
        let b = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(a.exact, b.exact);
        assert_eq!(a.retries, b.retries);

        // A different master seed changes the trajectories.
        cfg.master_seed = 99;
        let c = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert_ne!(a.exact, c.exact);
    }

    #[test]
    fn retry_rule_triggers_and_logs() {
        let mut cfg = tiny_config();
        cfg.epochs = 1;
        cfg.retry_threshold = 1.0; // nothing reaches perfect accuracy in one epoch
        cfg.retry_budget = 2;
        match run_experiment(&cfg, &RunOptions::default()) {
            Err(Error::RetryBudgetExhausted {
                repetition, budget, ..
            }) => {
                assert_eq!(repetition, 0);
                assert_eq!(budget, 2);
            }
            other => panic!("expected retry exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn retried_repetitions_use_fresh_seeds() {
        let a = derive_seed(1, &[stream::REPETITION, 0, 0]);
        let b = derive_seed(1, &[stream::REPETITION, 0, stream::RETRY]);
        let c = derive_seed(1, &[stream::REPETITION, 1, 0]);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn prefit_epochs_extend_the_trajectory() {
        let mut cfg = tiny_config();
        cfg.prefit_epochs = 2;
        cfg.epochs = 3;
        let artifacts = run_experiment(&cfg, &RunOptions::default()).unwrap();
        let run = &artifacts.primary().runs[0];
        let epochs: Vec<u64> = run.layers[0].iter().map(|p| p.epoch).collect();
        assert_eq!(epochs, vec![1, 2, 3, 4, 5]);
        assert_eq!(run.train_curve.len(), 5);
    }

    #[test]
    fn prefit_zero_epochs_is_identity() {
        use crate::data::gen_synthetic;
        let data = gen_synthetic(1);
        let spec = NetworkSpec::dense(12, &[4], Activation::Tanh, 2, QuantBits::Bits(8), 0);
        let mut net = init_network(&spec, 3).unwrap();
        let before = net.clone();
        let mut quant = QuantState::new(&spec);
        prefit_random_labels(&mut net, &mut quant, &data, 0, 256, 1e-4, 5).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn binned_mode_produces_binned_trajectories() {
        let mut cfg = tiny_config();
        cfg.network.quant_bits = QuantBits::Off;
        cfg.network.seed = 0;
        cfg.mi = MiMode::Binned { bins: 8 };
        cfg.epochs = 2;
        let artifacts = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert!(artifacts.exact.is_none());
        let set = artifacts.binned.as_ref().unwrap();
        assert_eq!(set.estimator, Estimator::Binned { bins: 8 });
        // Capacity bound: a layer of width d binned into m bins holds at
        // most d*log2(m) bits.
        for (l, layer) in set.runs[0].layers.iter().enumerate() {
            let width = match l {
                0 => 5.0,
                1 => 3.0,
                _ => 2.0,
            };
            for p in layer {
                assert!(p.i_xt <= width * 3.0 + 1e-9);
            }
        }
    }

    #[test]
    fn both_mode_pairs_the_estimators() {
        let mut cfg = tiny_config();
        cfg.mi = MiMode::Both { bins: 256 };
        cfg.bin_quantized = true;
        cfg.epochs = 2;
        let artifacts = run_experiment(&cfg, &RunOptions::default()).unwrap();
        let exact = artifacts.exact.as_ref().unwrap();
        let binned = artifacts.binned.as_ref().unwrap();
        assert_eq!(exact.runs.len(), binned.runs.len());
        assert_eq!(exact.runs[0].train_curve, binned.runs[0].train_curve);
    }

    #[test]
    fn audit_hook_sees_every_logged_epoch() {
        use std::sync::Mutex;
        let mut cfg = tiny_config();
        cfg.epochs = 4;
        cfg.mi_stride = 2;
        let seen: Arc<Mutex<Vec<u64>>> = Arc::new(Mutex::new(Vec::new()));
        let seen_clone = Arc::clone(&seen);
        let options = RunOptions {
            workers: Some(1),
            epoch_audit: Some(Arc::new(move |audit: &EpochAudit<'_>| {
                assert_eq!(audit.record.n_samples, audit.dataset.len());
                assert!(audit.exact.is_some());
                seen_clone.lock().unwrap().push(audit.epoch);
            })),
        };
        run_experiment(&cfg, &options).unwrap();
        let mut epochs = seen.lock().unwrap().clone();
        epochs.sort_unstable();
        assert_eq!(epochs, vec![2, 4]);
    }
}
