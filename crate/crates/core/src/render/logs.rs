//! CSV logs and JSON metadata, written with full-precision decimal floats
//! so re-parsing reproduces the in-memory values bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{EstimatorSet, ExperimentConfig, RetryEvent, RunArtifacts};
use crate::infoplane::{aggregate_runs, CurvePoint, Estimator, InfoPoint, InfoTrajectory};

pub const METADATA_FILE: &str = "metadata.json";

#[derive(Debug, Serialize, Deserialize)]
struct DatasetSummary {
    name: String,
    size: usize,
    num_classes: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct EstimatorMeta {
    estimator: Estimator,
    file_tag: String,
    median_run: usize,
    distances: Vec<f64>,
}

/// Everything `read_artifacts` needs that the CSVs do not carry.
#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    config: ExperimentConfig,
    layer_names: Vec<String>,
    dataset: DatasetSummary,
    repetition_seeds: Vec<u64>,
    retries: Vec<RetryEvent>,
    estimators: Vec<EstimatorMeta>,
}

fn estimator_tag(estimator: Estimator) -> &'static str {
    match estimator {
        Estimator::Exact => "exact",
        Estimator::Binned { .. } => "binned",
    }
}

fn write_file(dir: &Path, name: &str, contents: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

fn runs_csv(set: &EstimatorSet) -> String {
    let mut out = String::from("run_id,epoch,layer_index,i_xt_bits,i_ty_bits,train_acc,test_acc,loss\n");
    for run in &set.runs {
        let train: BTreeMap<u64, CurvePoint> =
            run.train_curve.iter().map(|c| (c.epoch, *c)).collect();
        let test: BTreeMap<u64, CurvePoint> =
            run.test_curve.iter().map(|c| (c.epoch, *c)).collect();
        let epochs: Vec<u64> = run.layers[0].iter().map(|p| p.epoch).collect();
        for (pi, &epoch) in epochs.iter().enumerate() {
            for (layer, points) in run.layers.iter().enumerate() {
                let p = points[pi];
                let tr = &train[&epoch];
                let te = &test[&epoch];
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    run.run_id, epoch, layer, p.i_xt, p.i_ty, tr.accuracy, te.accuracy, tr.loss
                );
            }
        }
    }
    out
}

fn aggregate_mi_csv(set: &EstimatorSet) -> String {
    let mut out = String::from("epoch,layer_index,i_xt_mean,i_xt_var,i_ty_mean,i_ty_var\n");
    let n_points = set.aggregate.layers[0].len();
    for pi in 0..n_points {
        for layer in &set.aggregate.layers {
            let a = layer[pi];
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                a.epoch, a.layer, a.i_xt_mean, a.i_xt_var, a.i_ty_mean, a.i_ty_var
            );
        }
    }
    out
}

fn accuracy_csv(runs: &[InfoTrajectory]) -> String {
    let mut out = String::from("run_id,epoch,train_acc,train_loss,test_acc,test_loss\n");
    for run in runs {
        for (tr, te) in run.train_curve.iter().zip(&run.test_curve) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                run.run_id, tr.epoch, tr.accuracy, tr.loss, te.accuracy, te.loss
            );
        }
    }
    out
}

fn aggregate_accuracy_csv(set: &EstimatorSet) -> String {
    let mut out = String::from(
        "epoch,train_acc_mean,train_acc_ci95,test_acc_mean,test_acc_ci95,train_loss_mean,test_loss_mean\n",
    );
    for (tr, te) in set.aggregate.train.iter().zip(&set.aggregate.test) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            tr.epoch,
            tr.accuracy_mean,
            tr.accuracy_ci95,
            te.accuracy_mean,
            te.accuracy_ci95,
            tr.loss_mean,
            te.loss_mean
        );
    }
    out
}

/// Write per-repetition and aggregate CSVs plus the JSON metadata document.
/// Returns the paths written.
pub fn write_logs(artifacts: &RunArtifacts, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let sets: Vec<&EstimatorSet> = [artifacts.exact.as_ref(), artifacts.binned.as_ref()]
        .into_iter()
        .flatten()
        .collect();
    for set in &sets {
        let tag = estimator_tag(set.estimator);
        write_file(dir, &format!("runs_{tag}.csv"), &runs_csv(set), &mut written)?;
        write_file(
            dir,
            &format!("aggregate_mi_{tag}.csv"),
            &aggregate_mi_csv(set),
            &mut written,
        )?;
    }
    let primary = artifacts.primary();
    write_file(dir, "accuracy.csv", &accuracy_csv(&primary.runs), &mut written)?;
    write_file(
        dir,
        "aggregate_accuracy.csv",
        &aggregate_accuracy_csv(primary),
        &mut written,
    )?;

    let metadata = Metadata {
        config: artifacts.config.clone(),
        layer_names: artifacts.layer_names.clone(),
        dataset: DatasetSummary {
            name: artifacts.dataset_name.clone(),
            size: artifacts.dataset_size,
            num_classes: artifacts.num_classes,
        },
        repetition_seeds: primary.runs.iter().map(|r| r.seed).collect(),
        retries: artifacts.retries.clone(),
        estimators: sets
            .iter()
            .map(|s| EstimatorMeta {
                estimator: s.estimator,
                file_tag: estimator_tag(s.estimator).to_string(),
                median_run: s.aggregate.median_run,
                distances: s.aggregate.distances.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&metadata)?;
    write_file(dir, METADATA_FILE, &json, &mut written)?;
    Ok(written)
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::parse(path, format!("line {line}: bad float {field:?}")))
}

fn parse_usize(path: &Path, line: usize, field: &str) -> Result<usize> {
    field
        .parse::<usize>()
        .map_err(|_| Error::parse(path, format!("line {line}: bad integer {field:?}")))
}

fn read_csv(path: &Path, expect_header: &str) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == expect_header => {}
        Some((_, header)) => {
            return Err(Error::parse(
                path,
                format!("unexpected header {header:?}, want {expect_header:?}"),
            ))
        }
        None => return Err(Error::parse(path, "empty file")),
    }
    Ok(lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(_, l)| l.split(',').map(str::to_string).collect())
        .collect())
}

/// Rebuild [`RunArtifacts`] from a log directory written by [`write_logs`].
///
/// Aggregates are recomputed from the parsed per-repetition values; since
/// the decimal serialization round-trips exactly and the aggregation order
/// is fixed, the result matches the original bit for bit.
pub fn read_artifacts(dir: &Path) -> Result<RunArtifacts> {
    let meta_path = dir.join(METADATA_FILE);
    let json = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let metadata: Metadata = serde_json::from_str(&json)?;
    let n_layers = metadata.layer_names.len();

    // Per-run curves.
    let acc_path = dir.join("accuracy.csv");
    let mut train_curves: BTreeMap<usize, Vec<CurvePoint>> = BTreeMap::new();
    let mut test_curves: BTreeMap<usize, Vec<CurvePoint>> = BTreeMap::new();
    for (i, row) in read_csv(&acc_path, "run_id,epoch,train_acc,train_loss,test_acc,test_loss")?
        .into_iter()
        .enumerate()
    {
        if row.len() != 6 {
            return Err(Error::parse(&acc_path, format!("line {}: want 6 fields", i + 2)));
        }
        let run = parse_usize(&acc_path, i + 2, &row[0])?;
        let epoch = parse_usize(&acc_path, i + 2, &row[1])? as u64;
        train_curves.entry(run).or_default().push(CurvePoint {
            epoch,
            accuracy: parse_f64(&acc_path, i + 2, &row[2])?,
            loss: parse_f64(&acc_path, i + 2, &row[3])?,
        });
        test_curves.entry(run).or_default().push(CurvePoint {
            epoch,
            accuracy: parse_f64(&acc_path, i + 2, &row[4])?,
            loss: parse_f64(&acc_path, i + 2, &row[5])?,
        });
    }

    let mut exact = None;
    let mut binned = None;
    for est in &metadata.estimators {
        let path = dir.join(format!("runs_{}.csv", est.file_tag));
        let rows = read_csv(
            &path,
            "run_id,epoch,layer_index,i_xt_bits,i_ty_bits,train_acc,test_acc,loss",
        )?;
        let mut by_run: BTreeMap<usize, Vec<Vec<InfoPoint>>> = BTreeMap::new();
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != 8 {
                return Err(Error::parse(&path, format!("line {}: want 8 fields", i + 2)));
            }
            let run = parse_usize(&path, i + 2, &row[0])?;
            let epoch = parse_usize(&path, i + 2, &row[1])? as u64;
            let layer = parse_usize(&path, i + 2, &row[2])?;
            if layer >= n_layers {
                return Err(Error::parse(&path, format!("line {}: layer out of range", i + 2)));
            }
            by_run.entry(run).or_insert_with(|| vec![Vec::new(); n_layers])[layer].push(
                InfoPoint {
                    epoch,
                    layer,
                    i_xt: parse_f64(&path, i + 2, &row[3])?,
                    i_ty: parse_f64(&path, i + 2, &row[4])?,
                },
            );
        }
        let runs: Vec<InfoTrajectory> = by_run
            .into_iter()
            .map(|(run_id, layers)| {
                Ok(InfoTrajectory {
                    run_id,
                    seed: *metadata.repetition_seeds.get(run_id).ok_or_else(|| {
                        Error::parse(&path, format!("run {run_id} missing from metadata seeds"))
                    })?,
                    estimator: est.estimator,
                    layer_names: metadata.layer_names.clone(),
                    layers,
                    train_curve: train_curves.get(&run_id).cloned().unwrap_or_default(),
                    test_curve: test_curves.get(&run_id).cloned().unwrap_or_default(),
                })
            })
            .collect::<Result<_>>()?;
        let aggregate = aggregate_runs(&runs)?;
        let set = EstimatorSet {
            estimator: est.estimator,
            runs,
            aggregate,
        };
        match est.estimator {
            Estimator::Exact => exact = Some(set),
            Estimator::Binned { .. } => binned = Some(set),
        }
    }

    Ok(RunArtifacts {
        config: metadata.config,
        layer_names: metadata.layer_names,
        exact,
        binned,
        retries: metadata.retries,
        dataset_name: metadata.dataset.name,
        dataset_size: metadata.dataset.size,
        num_classes: metadata.dataset.num_classes,
    })
}
