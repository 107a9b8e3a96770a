//! Exact information-bottleneck analysis of quantized neural networks.
//!
//! The crate trains small fake-quantized networks, records the discrete
//! state of every layer over a full dataset, and measures per-layer mutual
//! information with the input and labels exactly by state counting — plus a
//! post-hoc binning estimator for comparison, experiment presets, CSV/JSON
//! logging, and SVG information-plane figures.

pub mod data;
pub mod error;
pub mod harness;
pub mod infoplane;
pub mod linalg;
pub mod qnet;
pub mod rng;

pub use data::{gen_synthetic, load_idx, shuffle_labels, split, Dataset, DatasetConfig, SplitDataset};
pub use error::{Error, Result};
pub use harness::{
    desk_scale, preset, preset_names, run_experiment, EpochAudit, ExperimentConfig, MiMode,
    RunArtifacts, RunOptions,
};
pub use infoplane::{
    aggregate_runs, bin_activations, check_dpi, conditional_entropy, detect_phases, entropy,
    mi_binned, mi_exact, Estimator, InfoPoint, InfoTrajectory, LayerMi,
};
pub use qnet::{
    evaluate, init_network, quantize_value, record_states, train_epoch, Activation, LayerSpec,
    Network, NetworkSpec, QuantBits, QuantState, StateRecord,
};
