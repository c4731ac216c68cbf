//! Artifact serialization: trajectory/report CSVs, cloud files, and JSON.
//!
//! Floats are written with 17 significant digits so artifacts round-trip
//! exactly and byte-compare across reruns.

use std::fs;
use std::path::Path;

use nalgebra::DVector;

use crate::cloud::WeightedPointCloud;
use crate::dae::DaeResidualReport;
use crate::dynamics::Trajectory;
use crate::error::{CoreError, Result};

/// 17 significant digits: exact round-trip for f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_row(out: &mut String, fields: &[String]) {
    out.push_str(&fields.join(","));
    out.push('\n');
}

/// Trajectory CSV: `t, y.., v.., energy, constraint_drift`, optionally
/// per-point position blocks and DAE residual columns.
pub fn trajectory_csv(
    traj: &Trajectory,
    write_points: bool,
    dae: Option<&[DaeResidualReport]>,
) -> String {
    let mut header: Vec<String> = vec!["t".into()];
    for i in 0..traj.dim_y {
        header.push(format!("y{i}"));
    }
    for i in 0..traj.dim_y {
        header.push(format!("v{i}"));
    }
    header.push("energy".into());
    header.push("constraint_drift".into());
    if dae.is_some() {
        header.push("newton_x_residual".into());
        header.push("newton_y_residual".into());
        header.push("constraint_residual".into());
        header.push("lambda_max_norm".into());
    }
    if write_points {
        for k in 0..traj.weights.len() {
            for i in 0..traj.dim_x {
                header.push(format!("p{k}_x{i}"));
            }
        }
    }

    let mut out = String::new();
    push_row(&mut out, &header);
    for r in 0..traj.len() {
        let mut row: Vec<String> = vec![fmt_f64(traj.times[r])];
        row.extend(traj.ys[r].iter().map(|&c| fmt_f64(c)));
        row.extend(traj.vs[r].iter().map(|&c| fmt_f64(c)));
        row.push(fmt_f64(traj.energies[r]));
        row.push(fmt_f64(traj.drifts[r]));
        if let Some(reports) = dae {
            let rep = &reports[r];
            let lambda_max = rep.lambda.iter().map(|l| l.norm()).fold(0.0, f64::max);
            row.push(fmt_f64(rep.newton_x_residual));
            row.push(fmt_f64(rep.newton_y_residual));
            row.push(fmt_f64(rep.constraint_residual));
            row.push(fmt_f64(lambda_max));
        }
        if write_points {
            for p in &traj.snapshots[r] {
                row.extend(p.iter().map(|&c| fmt_f64(c)));
            }
        }
        push_row(&mut out, &row);
    }
    out
}

/// Node snapshot CSV: one row per node per recorded time.
pub fn nodes_csv(traj: &Trajectory) -> String {
    let mut header: Vec<String> = vec!["t".into(), "node".into()];
    for i in 0..traj.dim_x {
        header.push(format!("x{i}"));
    }
    header.push("weight".into());

    let mut out = String::new();
    push_row(&mut out, &header);
    for r in 0..traj.len() {
        for (k, p) in traj.snapshots[r].iter().enumerate() {
            let mut row = vec![fmt_f64(traj.times[r]), k.to_string()];
            row.extend(p.iter().map(|&c| fmt_f64(c)));
            row.push(fmt_f64(traj.weights[k]));
            push_row(&mut out, &row);
        }
    }
    out
}

/// Cloud CSV: header `x0,..,x{d-1}[,w]`, one point per row. Weights default
/// to uniform; explicit weights are renormalized to unit mass after a
/// consistency check.
pub fn cloud_to_csv(cloud: &WeightedPointCloud) -> String {
    let mut header: Vec<String> = (0..cloud.dim()).map(|i| format!("x{i}")).collect();
    header.push("w".into());
    let mut out = String::new();
    push_row(&mut out, &header);
    for (p, &w) in cloud.points().iter().zip(cloud.weights()) {
        let mut row: Vec<String> = p.iter().map(|&c| fmt_f64(c)).collect();
        row.push(fmt_f64(w));
        push_row(&mut out, &row);
    }
    out
}

pub fn cloud_from_csv(text: &str) -> Result<WeightedPointCloud> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| CoreError::InvalidCloud("empty cloud file".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let has_weights = columns.last() == Some(&"w");
    let dim = columns.len() - usize::from(has_weights);
    if dim == 0 {
        return Err(CoreError::InvalidCloud(
            "cloud header must declare at least one coordinate column".into(),
        ));
    }
    for (i, c) in columns[..dim].iter().enumerate() {
        if *c != format!("x{i}") {
            return Err(CoreError::InvalidCloud(format!(
                "unexpected header column `{c}`, expected `x{i}`"
            )));
        }
    }

    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(CoreError::InvalidCloud(format!(
                "row {}: expected {} fields, got {}",
                lineno + 2,
                columns.len(),
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| CoreError::InvalidCloud(format!("row {}: bad number `{s}`", lineno + 2)))
        };
        let mut p = DVector::zeros(dim);
        for i in 0..dim {
            p[i] = parse(fields[i])?;
        }
        points.push(p);
        if has_weights {
            weights.push(parse(fields[dim])?);
        }
    }
    if points.is_empty() {
        return Err(CoreError::InvalidCloud("cloud file has no points".into()));
    }
    if !has_weights {
        return WeightedPointCloud::empirical(points);
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(CoreError::InvalidCloud(format!(
            "weights must sum to 1 within 1e-9, got {total}"
        )));
    }
    let weights = weights.into_iter().map(|w| w / total).collect();
    WeightedPointCloud::new(points, weights)
}

/// Stability grid CSV: time, measured separation, fitted envelope.
pub fn stability_csv(report: &crate::experiments::StabilityReport) -> String {
    let mut out = String::new();
    push_row(
        &mut out,
        &["t".into(), "lhs".into(), "envelope".into()],
    );
    for (&t, &l) in report.times.iter().zip(&report.lhs) {
        let envelope = report.fitted_c * (report.fitted_l * t).exp() * report.rhs0;
        push_row(&mut out, &[fmt_f64(t), fmt_f64(l), fmt_f64(envelope)]);
    }
    out
}

pub fn convergence_csv(report: &crate::experiments::ConvergenceReport) -> String {
    let mut out = String::new();
    push_row(
        &mut out,
        &[
            "n".into(),
            "rep".into(),
            "w1_init".into(),
            "w1_final".into(),
            "macro_err".into(),
        ],
    );
    for run in &report.runs {
        push_row(
            &mut out,
            &[
                run.n.to_string(),
                run.rep.to_string(),
                fmt_f64(run.w1_init),
                fmt_f64(run.w1_final),
                fmt_f64(run.macro_err),
            ],
        );
    }
    out
}

pub fn weak_form_csv(samples: &[crate::experiments::WeakFormSample]) -> String {
    let mut out = String::new();
    push_row(
        &mut out,
        &["bump".into(), "t".into(), "dt_fd".into(), "residual".into()],
    );
    for s in samples {
        push_row(
            &mut out,
            &[
                s.bump.to_string(),
                fmt_f64(s.t),
                fmt_f64(s.dt_fd),
                fmt_f64(s.residual),
            ],
        );
    }
    out
}

pub fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, content)?;
    Ok(())
}

pub fn to_json_pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    s.push('\n');
    s
}

/// Compact summary of a trajectory for the run's JSON artifact.
pub fn trajectory_summary(traj: &Trajectory) -> serde_json::Value {
    let last = traj.len() - 1;
    serde_json::json!({
        "records": traj.len(),
        "t_final": traj.times[last],
        "y_final": traj.ys[last].iter().copied().collect::<Vec<f64>>(),
        "v_final": traj.vs[last].iter().copied().collect::<Vec<f64>>(),
        "energy_initial": traj.energies[0],
        "energy_final": traj.energies[last],
        "energy_drift_rel": traj.energy_drift_rel(),
        "max_constraint_drift": traj.max_drift(),
        "max_speed": traj.max_speed(),
        "n_points": traj.weights.len(),
    })
}
