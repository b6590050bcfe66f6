//! CSV and JSON artifacts of a run, and the value-grid comparison.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use ipi_core::driver::{compare_value_grids, GridComparison, IterationLog, Problem};
use ipi_core::dynamics::{simulate, Trajectory};
use ipi_core::funcapprox::NetFile;
use ipi_core::policies::StationaryPolicy;
use ipi_core::{Matrix, Vector};
use serde::Serialize;

use crate::config::OutputConfig;
use crate::error::CliError;

/// Per-iteration parameter dump written to `theta_<i>.json`.
#[derive(Debug, Serialize)]
pub struct ThetaFile {
    pub iteration: usize,
    pub method: String,
    pub theta: Vec<f64>,
    pub value: Option<NetFile>,
    pub ad: Option<NetFile>,
    pub cfun: Option<NetFile>,
    /// Rows of `P_i` and `K_i` on LQR runs.
    pub p: Option<Vec<Vec<f64>>>,
    pub k: Option<Vec<Vec<f64>>>,
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn entry_names(prefix: &str, m: &Matrix) -> Vec<String> {
    let mut out = Vec::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(format!("{prefix}_{}_{}", i + 1, j + 1));
        }
    }
    out
}

fn entries(m: &Matrix) -> Vec<String> {
    let mut out = Vec::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)].to_string());
        }
    }
    out
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))
}

pub fn write_iterations(log: &IterationLog, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = [
        "iteration",
        "method",
        "residual_rms",
        "residual_max",
        "condition",
        "samples",
        "dropped",
        "theta_change",
        "rud_iterations",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    if let Some(l) = log.records.first().and_then(|r| r.lqr.as_ref()) {
        header.extend(entry_names("p", &l.p));
        header.extend(entry_names("k", &l.k));
    }
    w.write_record(&header)?;
    for r in &log.records {
        let mut row = vec![
            r.iteration.to_string(),
            log.method.clone(),
            r.residual.rms.to_string(),
            r.residual.max.to_string(),
            r.condition.to_string(),
            r.samples.to_string(),
            r.dropped.to_string(),
            r.theta_change.to_string(),
            r.rud_iterations.map(|n| n.to_string()).unwrap_or_default(),
        ];
        if let Some(l) = &r.lqr {
            row.extend(entries(&l.p));
            row.extend(entries(&l.k));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(path.display().to_string(), e))?;
    Ok(())
}

pub fn write_value_grid(points: &[Vector], values: &[f64], path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let n = points.first().map(|p| p.len()).unwrap_or(0);
    let mut header: Vec<String> = (1..=n).map(|d| format!("x{d}")).collect();
    header.push("v".into());
    w.write_record(&header)?;
    for (x, v) in points.iter().zip(values) {
        let mut row: Vec<String> = x.iter().map(|c| c.to_string()).collect();
        row.push(v.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(path.display().to_string(), e))?;
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

/// Rollout of the final policy used for `trajectory.csv`.
pub fn final_rollout(p: &Problem, policy: &StationaryPolicy, out: &OutputConfig) -> Result<Trajectory, CliError> {
    let n = p.env.state_dim();
    let x0 = match &out.x0 {
        Some(x) if x.len() != n => {
            return Err(CliError::Schema {
                path: "output.x0".into(),
                message: format!("expected {n} entries, got {}", x.len()),
            })
        }
        Some(x) => Vector::from_column_slice(x),
        None if p.lqr.is_none() => Vector::from_vec(vec![1.1 * PI, 0.0]),
        None => Vector::from_element(n, 1.0),
    };
    Ok(simulate(&p.env, policy, &x0, 0.0, out.horizon, out.substep)?)
}

pub fn write_trajectory(traj: &Trajectory, pendulum: bool, sample_every: f64, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let n = traj.first_state().len();
    let m = traj.actions[0].len();
    let header: Vec<String> = if pendulum {
        vec!["t".into(), "theta".into(), "theta_dot".into(), "u".into()]
    } else {
        let mut h = vec!["t".to_string()];
        h.extend((1..=n).map(|d| format!("x{d}")));
        if m == 1 {
            h.push("u".into());
        } else {
            h.extend((1..=m).map(|d| format!("u{d}")));
        }
        h
    };
    w.write_record(&header)?;
    let stride = ((sample_every / traj.step).round() as usize).max(1);
    for k in (0..traj.len()).step_by(stride) {
        let mut row = vec![traj.times[k].to_string()];
        row.extend(traj.states[k].iter().map(|c| c.to_string()));
        row.extend(traj.actions[k].iter().map(|c| c.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(path.display().to_string(), e))?;
    Ok(())
}

/// Writes every artifact of a finished run into `dir`.
pub fn write_run(p: &Problem, log: &IterationLog, out: &OutputConfig, dir: &Path) -> Result<(), CliError> {
    create_dir(dir)?;
    write_iterations(log, &dir.join("iterations.csv"))?;
    let points = log.grid_points();
    for r in &log.records {
        let ev = &r.evaluation;
        let file = ThetaFile {
            iteration: r.iteration,
            method: log.method.clone(),
            theta: r.theta.iter().copied().collect(),
            value: ev.value.as_ref().map(|n| n.to_file()),
            ad: ev.ad.as_ref().map(|n| n.to_file()),
            cfun: ev.cfun.as_ref().map(|n| n.to_file()),
            p: r.lqr.as_ref().map(|l| rows(&l.p)),
            k: r.lqr.as_ref().map(|l| rows(&l.k)),
        };
        write_json(&file, &dir.join(format!("theta_{}.json", r.iteration)))?;
        write_value_grid(&points, &r.value_samples, &dir.join(format!("value_grid_{}.csv", r.iteration)))?;
    }
    let traj = final_rollout(p, &log.final_policy, out)?;
    write_trajectory(&traj, p.lqr.is_none(), out.sample_every, &dir.join("trajectory.csv"))?;
    Ok(())
}

/// Points and values of a `value_grid_<i>.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueGrid {
    pub columns: Vec<String>,
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

pub fn read_value_grid(path: &Path) -> Result<ValueGrid, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    let columns: Vec<String> = r.headers()?.iter().map(|s| s.to_string()).collect();
    if columns.last().map(String::as_str) != Some("v") || columns.len() < 2 {
        return Err(CliError::GridMismatch(format!("{} is not a value grid (columns {columns:?})", path.display())));
    }
    let mut points = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let nums: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::GridMismatch(format!("{} row {}: {e}", path.display(), line + 1)))?;
        let (v, x) = nums.split_last().expect("header has at least two columns");
        points.push(x.to_vec());
        values.push(*v);
    }
    Ok(ValueGrid { columns, points, values })
}

/// Compares two value grids sampled on the same points.
pub fn compare_grids(a: &ValueGrid, b: &ValueGrid, rel_tol: f64) -> Result<GridComparison, CliError> {
    if a.columns != b.columns || a.points.len() != b.points.len() {
        return Err(CliError::GridMismatch(format!(
            "{} points over {:?} vs {} points over {:?}",
            a.points.len(),
            a.columns,
            b.points.len(),
            b.columns
        )));
    }
    for (k, (p, q)) in a.points.iter().zip(&b.points).enumerate() {
        if p.iter().zip(q).any(|(x, y)| (x - y).abs() > 1e-9 * (1.0 + x.abs())) {
            return Err(CliError::GridMismatch(format!("point {k} differs: {p:?} vs {q:?}")));
        }
    }
    Ok(compare_value_grids(&a.values, &b.values, rel_tol)?)
}
