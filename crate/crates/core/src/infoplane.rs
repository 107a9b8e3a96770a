//! Exact and binned information measurements: discrete entropies, per-layer
//! I(X;T) and I(T;Y), the post-hoc binning estimator, DPI auditing, phase
//! detection, and cross-repetition aggregation.
//!
//! Everything is reported in bits. For a layer state T recorded over a full
//! dataset D, `I(X;T) = H(T)` because T is a deterministic function of the
//! input, and `I(T;Y) = H(T) - H(T|Y)`. State identity is exact byte
//! equality of code rows; no lossy hashing is involved anywhere.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::qnet::{CodeBlock, StateRecord};

/// One measured layer at one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoPoint {
    pub epoch: u64,
    pub layer: usize,
    /// I(X;T) in bits.
    pub i_xt: f64,
    /// I(T;Y) in bits.
    pub i_ty: f64,
}

/// Per-layer mutual information of one state record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerMi {
    pub i_xt: f64,
    pub i_ty: f64,
}

/// Which estimator produced a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Exact,
    Binned { bins: u32 },
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Estimator::Exact => write!(f, "exact"),
            Estimator::Binned { bins } => write!(f, "binned{bins}"),
        }
    }
}

/// Accuracy/loss at one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: u64,
    pub accuracy: f64,
    pub loss: f64,
}

/// One repetition's measurements: per-layer MI points at every logged epoch
/// plus per-epoch accuracy/loss curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoTrajectory {
    pub run_id: usize,
    /// Seed the repetition derived everything from.
    pub seed: u64,
    pub estimator: Estimator,
    pub layer_names: Vec<String>,
    /// `layers[l]` holds the ordered points of layer `l` (input side first).
    pub layers: Vec<Vec<InfoPoint>>,
    pub train_curve: Vec<CurvePoint>,
    pub test_curve: Vec<CurvePoint>,
}

/// Shannon entropy of a count vector, in bits.
///
/// `H = log2(n) - sum(c_i * log2(c_i)) / n` over positive counts. The counts
/// are sorted internally so the floating-point sum does not depend on input
/// order.
pub fn entropy(counts: &[u64]) -> Result<f64> {
    let mut sorted: Vec<u64> = counts.iter().copied().filter(|&c| c > 0).collect();
    if sorted.is_empty() {
        return Err(Error::InvalidArgument(
            "entropy needs at least one positive count".into(),
        ));
    }
    sorted.sort_unstable();
    Ok(entropy_sorted(&sorted))
}

/// Entropy of already-sorted positive counts.
fn entropy_sorted(sorted: &[u64]) -> f64 {
    let n: u64 = sorted.iter().sum();
    let mut acc = NeumaierSum::default();
    for &c in sorted {
        acc.add(c as f64 * (c as f64).log2());
    }
    ((n as f64).log2() - acc.total() / n as f64).max(0.0)
}

/// Compensated (Neumaier) summation; makes entropy sums insensitive to the
/// magnitude spread of their terms.
#[derive(Default)]
struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Conditional entropy `H(R|C)` of a joint count matrix whose rows index the
/// dependent variable and whose columns index the condition:
/// `sum_c P(c) * H(row counts in column c)`, in bits.
pub fn conditional_entropy(joint: &[Vec<u64>]) -> Result<f64> {
    let cols = joint.first().map_or(0, Vec::len);
    if joint.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidArgument("ragged joint count matrix".into()));
    }
    let total: u64 = joint.iter().flatten().sum();
    if total == 0 {
        return Err(Error::InvalidArgument(
            "conditional_entropy needs a positive total count".into(),
        ));
    }
    let mut acc = NeumaierSum::default();
    for c in 0..cols {
        let mut column: Vec<u64> = joint.iter().map(|r| r[c]).filter(|&v| v > 0).collect();
        if column.is_empty() {
            continue;
        }
        column.sort_unstable();
        let n_c: u64 = column.iter().sum();
        acc.add(n_c as f64 / total as f64 * entropy_sorted(&column));
    }
    Ok(acc.total())
}

/// Per-state class counts for one layer: the exact joint histogram of
/// (state, label) with states keyed by their code-row bytes.
fn state_class_counts<'a>(
    keys: impl Iterator<Item = &'a [u8]>,
    labels: &[usize],
    num_classes: usize,
) -> HashMap<&'a [u8], Vec<u32>> {
    let mut map: HashMap<&[u8], Vec<u32>> = HashMap::new();
    for (key, &label) in keys.zip(labels) {
        map.entry(key).or_insert_with(|| vec![0u32; num_classes])[label] += 1;
    }
    map
}

/// `(H(T), H(T) - H(T|Y))` from a state/class histogram.
fn mi_from_counts(map: &HashMap<&[u8], Vec<u32>>, labels_total: usize) -> LayerMi {
    let n = labels_total as u64;
    let mut totals: Vec<u64> = map
        .values()
        .map(|per_class| per_class.iter().map(|&c| c as u64).sum())
        .collect();
    totals.sort_unstable();
    debug_assert_eq!(totals.iter().sum::<u64>(), n);
    let h_t = entropy_sorted(&totals);

    let num_classes = map.values().next().map_or(0, Vec::len);
    let mut h_t_given_y = NeumaierSum::default();
    for y in 0..num_classes {
        let mut column: Vec<u64> = map
            .values()
            .map(|per_class| per_class[y] as u64)
            .filter(|&c| c > 0)
            .collect();
        if column.is_empty() {
            continue;
        }
        column.sort_unstable();
        let n_y: u64 = column.iter().sum();
        h_t_given_y.add(n_y as f64 / n as f64 * entropy_sorted(&column));
    }
    LayerMi {
        i_xt: h_t,
        i_ty: (h_t - h_t_given_y.total()).max(0.0),
    }
}

/// Exact per-layer mutual information of a state record: each sample's code
/// row is one discrete state, `I(X;T) = H(T)` and `I(T;Y) = H(T) - H(T|Y)`
/// over the empirical distribution.
pub fn mi_exact(record: &StateRecord, labels: &[usize], num_classes: usize) -> Result<Vec<LayerMi>> {
    if record.n_samples != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "record has {} samples, {} labels given",
            record.n_samples,
            labels.len()
        )));
    }
    record
        .layers
        .iter()
        .map(|layer| {
            let codes = layer.codes.as_ref().ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "layer {} has no discrete codes (quantization off?); use mi_binned",
                    layer.name
                ))
            })?;
            let map = state_class_counts(
                (0..codes.rows()).map(|i| codes.row_bytes(i)),
                labels,
                num_classes,
            );
            Ok(mi_from_counts(&map, labels.len()))
        })
        .collect()
}

/// Uniform binning: map `x` in `[b_l, b_u]` to the index of one of `m`
/// equal-width bins, clamping outside values and sending `x = b_u` to the
/// top bin.
pub fn bin_activations(values: &[f64], m: u32, b_l: f64, b_u: f64) -> Result<Vec<u32>> {
    if !(b_l < b_u) {
        return Err(Error::InvalidArgument(format!(
            "binning bounds must satisfy b_l < b_u, got [{b_l}, {b_u}]"
        )));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one bin".into()));
    }
    Ok(values.iter().map(|&x| bin_one(x, m, b_l, b_u)).collect())
}

fn bin_one(x: f64, m: u32, b_l: f64, b_u: f64) -> u32 {
    let t = (x.clamp(b_l, b_u) - b_l) / (b_u - b_l) * m as f64;
    (t.floor() as u32).min(m - 1)
}

fn bits_for_bins(m: u32) -> u32 {
    32 - m.saturating_sub(1).leading_zeros().min(31)
}

/// Binned per-layer mutual information: discretize each layer's recorded
/// activations into `m` uniform bins inside the given per-layer bounds, then
/// count states exactly as [`mi_exact`] does. A degenerate bound
/// (`lo >= hi`, e.g. a constant layer) collapses the layer to a single state.
pub fn mi_binned(
    record: &StateRecord,
    labels: &[usize],
    num_classes: usize,
    m: u32,
    bounds: &[(f64, f64)],
) -> Result<Vec<LayerMi>> {
    if record.n_samples != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "record has {} samples, {} labels given",
            record.n_samples,
            labels.len()
        )));
    }
    if bounds.len() != record.layers.len() {
        return Err(Error::InvalidArgument(format!(
            "{} bounds for {} layers",
            bounds.len(),
            record.layers.len()
        )));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one bin".into()));
    }
    record
        .layers
        .iter()
        .zip(bounds)
        .map(|(layer, &(lo, hi))| {
            let acts = layer.activations.as_ref().ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "layer {} has no recorded activations for binning",
                    layer.name
                ))
            })?;
            let mut block = CodeBlock::new(layer.width, bits_for_bins(m));
            for &x in acts.as_slice() {
                let code = if lo < hi { bin_one(x, m, lo, hi) } else { 0 };
                block.push(code as u64);
            }
            let map = state_class_counts(
                (0..block.rows()).map(|i| block.row_bytes(i)),
                labels,
                num_classes,
            );
            Ok(mi_from_counts(&map, labels.len()))
        })
        .collect()
}

/// Numerical slack when auditing the data processing inequality.
pub const DPI_TOLERANCE: f64 = 1e-9;

/// Which information quantity a DPI violation concerns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiKind {
    IXt,
    ITy,
}

/// An adjacent layer pair where an information quantity increased along the
/// processing chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpiViolation {
    pub kind: MiKind,
    /// Upstream layer position within the points slice.
    pub from: usize,
    /// Downstream layer position.
    pub to: usize,
    /// How far the downstream value exceeds the upstream value, in bits.
    pub increase: f64,
}

/// Audit one epoch's per-layer points (ordered input to output) against the
/// data processing inequality: neither I(X;T) nor I(T;Y) may grow along the
/// chain beyond [`DPI_TOLERANCE`].
pub fn check_dpi(points: &[InfoPoint]) -> Vec<DpiViolation> {
    let mut violations = Vec::new();
    for (i, pair) in points.windows(2).enumerate() {
        let (a, b) = (pair[0], pair[1]);
        if b.i_ty > a.i_ty + DPI_TOLERANCE {
            violations.push(DpiViolation {
                kind: MiKind::ITy,
                from: i,
                to: i + 1,
                increase: b.i_ty - a.i_ty,
            });
        }
        if b.i_xt > a.i_xt + DPI_TOLERANCE {
            violations.push(DpiViolation {
                kind: MiKind::IXt,
                from: i,
                to: i + 1,
                increase: b.i_xt - a.i_xt,
            });
        }
    }
    violations
}

/// Thresholds that operationalize the visual phase definitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseThresholds {
    /// Minimum rise of I(T;Y) over its initial value, in bits.
    pub fitting_bits: f64,
    /// Minimum drop of I(X;T) from its peak, as a fraction of the peak.
    pub compression_fraction: f64,
}

impl Default for PhaseThresholds {
    fn default() -> Self {
        PhaseThresholds {
            fitting_bits: 0.05,
            compression_fraction: 0.05,
        }
    }
}

/// Phase findings for one layer's trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    /// I(T;Y) rose at least `fitting_bits` above its initial value.
    pub fitting: bool,
    /// I(X;T) fell from its peak by at least `compression_fraction` of it.
    pub compression: bool,
    /// Epoch of maximal I(X;T), earliest on ties.
    pub peak_epoch: u64,
}

/// Classify fitting/compression phases in one layer's chronologically
/// ordered points.
pub fn detect_phases(points: &[InfoPoint], thresholds: PhaseThresholds) -> PhaseSummary {
    assert!(points.len() >= 2, "phase detection needs at least two points");
    let initial_ty = points[0].i_ty;
    let max_ty = points.iter().map(|p| p.i_ty).fold(f64::NEG_INFINITY, f64::max);
    let final_xt = points.last().unwrap().i_xt;
    let mut peak = points[0];
    for p in &points[1..] {
        if p.i_xt > peak.i_xt {
            peak = *p;
        }
    }
    PhaseSummary {
        fitting: max_ty - initial_ty >= thresholds.fitting_bits,
        compression: peak.i_xt - final_xt >= thresholds.compression_fraction * peak.i_xt
            && peak.i_xt > 0.0,
        peak_epoch: peak.epoch,
    }
}

/// Aggregated point: pointwise mean and variance across repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub epoch: u64,
    pub layer: usize,
    pub i_xt_mean: f64,
    pub i_xt_var: f64,
    pub i_ty_mean: f64,
    pub i_ty_var: f64,
}

/// Aggregated accuracy/loss at one epoch with a 95% normal-approximation
/// confidence half-width (`1.96 * sd / sqrt(n)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveAggregate {
    pub epoch: u64,
    pub accuracy_mean: f64,
    pub accuracy_ci95: f64,
    pub loss_mean: f64,
    pub loss_ci95: f64,
}

/// Mean trajectory, pointwise variance, and the median-deviating run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub layer_names: Vec<String>,
    pub layers: Vec<Vec<AggregatePoint>>,
    pub train: Vec<CurveAggregate>,
    pub test: Vec<CurveAggregate>,
    /// L2 distance of each run's concatenated (i_xt, i_ty) curves from the
    /// mean curves, indexed by run.
    pub distances: Vec<f64>,
    /// Run whose distance is the median (lower-middle for even counts);
    /// lowest run id among ties.
    pub median_run: usize,
}

impl RunAggregate {
    /// The mean trajectory of one layer as plain points, for phase detection
    /// and plotting.
    pub fn mean_layer_points(&self, layer: usize) -> Vec<InfoPoint> {
        self.layers[layer]
            .iter()
            .map(|a| InfoPoint {
                epoch: a.epoch,
                layer: a.layer,
                i_xt: a.i_xt_mean,
                i_ty: a.i_ty_mean,
            })
            .collect()
    }
}

fn mean_and_var(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss = values.map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, ss / (n - 1) as f64)
}

/// Pointwise mean/variance across repetitions plus the median-deviating run.
///
/// All trajectories must share epochs and layer structure.
pub fn aggregate_runs(runs: &[InfoTrajectory]) -> Result<RunAggregate> {
    let first = runs
        .first()
        .ok_or_else(|| Error::InvalidArgument("aggregate_runs needs at least one run".into()))?;
    for r in runs {
        let same_shape = r.layers.len() == first.layers.len()
            && r.layers
                .iter()
                .zip(&first.layers)
                .all(|(a, b)| {
                    a.len() == b.len()
                        && a.iter().zip(b).all(|(x, y)| x.epoch == y.epoch)
                })
            && r.train_curve.len() == first.train_curve.len()
            && r.test_curve.len() == first.test_curve.len();
        if !same_shape {
            return Err(Error::ShapeMismatch(format!(
                "run {} does not share the epoch/layer structure of run {}",
                r.run_id, first.run_id
            )));
        }
    }
    let n = runs.len();

    let mut layers = Vec::with_capacity(first.layers.len());
    for (l, base) in first.layers.iter().enumerate() {
        let mut points = Vec::with_capacity(base.len());
        for p in 0..base.len() {
            let (i_xt_mean, i_xt_var) =
                mean_and_var(runs.iter().map(|r| r.layers[l][p].i_xt), n);
            let (i_ty_mean, i_ty_var) =
                mean_and_var(runs.iter().map(|r| r.layers[l][p].i_ty), n);
            points.push(AggregatePoint {
                epoch: base[p].epoch,
                layer: l,
                i_xt_mean,
                i_xt_var,
                i_ty_mean,
                i_ty_var,
            });
        }
        layers.push(points);
    }

    let aggregate_curve = |get: fn(&InfoTrajectory) -> &Vec<CurvePoint>| -> Vec<CurveAggregate> {
        (0..get(first).len())
            .map(|e| {
                let (accuracy_mean, acc_var) =
                    mean_and_var(runs.iter().map(|r| get(r)[e].accuracy), n);
                let (loss_mean, loss_var) = mean_and_var(runs.iter().map(|r| get(r)[e].loss), n);
                let half_width = |var: f64| 1.96 * (var / n as f64).sqrt();
                CurveAggregate {
                    epoch: get(first)[e].epoch,
                    accuracy_mean,
                    accuracy_ci95: half_width(acc_var),
                    loss_mean,
                    loss_ci95: half_width(loss_var),
                }
            })
            .collect()
    };
    let train = aggregate_curve(|r| &r.train_curve);
    let test = aggregate_curve(|r| &r.test_curve);

    let distances: Vec<f64> = runs
        .iter()
        .map(|r| {
            let mut sq = 0.0;
            for (l, layer) in r.layers.iter().enumerate() {
                for (p, point) in layer.iter().enumerate() {
                    let agg = &layers[l][p];
                    sq += (point.i_xt - agg.i_xt_mean).powi(2)
                        + (point.i_ty - agg.i_ty_mean).powi(2);
                }
            }
            sq.sqrt()
        })
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        distances[a]
            .partial_cmp(&distances[b])
            .expect("distances are finite")
            .then(a.cmp(&b))
    });
    let median_distance = distances[order[(n - 1) / 2]];
    let median_run = (0..n)
        .find(|&r| distances[r] == median_distance)
        .expect("median distance exists");

    Ok(RunAggregate {
        layer_names: first.layer_names.clone(),
        layers,
        train,
        test,
        distances,
        median_run,
    })
}
