//! Result persistence (CSV/JSON) and standalone SVG figures.

mod logs;
mod svg;

pub use logs::{read_artifacts, write_logs, METADATA_FILE};
pub use svg::{plot_accuracy, plot_mi_vs_epoch, plot_plane, write_plots, PlaneStyle};
