use std::fs;
use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, Figure};
use super::run::ExperimentReport;
use crate::analytics::{report_to_csv, RegretRow};
use crate::error::{Error, Result};

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn require(rows: &[RegretRow], figure: Figure, axis: &str, has: impl Fn(&RegretRow) -> bool) -> Result<()> {
    if rows.iter().all(has) {
        Ok(())
    } else {
        Err(Error::Emission(format!(
            "{} needs the {axis} sweep, which some rows lack",
            figure.name()
        )))
    }
}

fn has_axes(rows: &[RegretRow], figure: Figure) -> Result<()> {
    match figure {
        Figure::Fig4VsRho => require(rows, figure, "rho", |r| r.rho.is_some()),
        Figure::Fig5VsY0 => require(rows, figure, "y0", |r| r.y0.is_some()),
        Figure::Fig7PlTracking | Figure::Fig8Dynregret => require(rows, figure, "omega", |r| r.omega.is_some()),
        Figure::Fig3RegretVsT | Figure::Fig10Nmse => Ok(()),
    }
}

/// Tidy CSV for one figure. Values are copied from the rows unchanged.
pub fn emit_plotdata(rows: &[RegretRow], figure: Figure) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Emission(format!("no report rows to emit for {}", figure.name())));
    }
    has_axes(rows, figure)?;
    let (header, cells): (&[&str], Box<dyn Fn(&RegretRow) -> Vec<String>>) = match figure {
        Figure::Fig3RegretVsT => (
            &["T", "protocol", "avg_static_regret", "seed"],
            Box::new(|r| vec![r.horizon.to_string(), r.protocol.clone(), r.avg_regret.to_string(), r.seed.to_string()]),
        ),
        Figure::Fig4VsRho => (
            &["rho", "T", "protocol", "static_regret", "avg_static_regret", "seed"],
            Box::new(|r| {
                vec![
                    opt(r.rho),
                    r.horizon.to_string(),
                    r.protocol.clone(),
                    r.static_regret.to_string(),
                    r.avg_regret.to_string(),
                    r.seed.to_string(),
                ]
            }),
        ),
        Figure::Fig5VsY0 => (
            &["y0", "T", "protocol", "static_regret", "avg_static_regret", "seed"],
            Box::new(|r| {
                vec![
                    opt(r.y0),
                    r.horizon.to_string(),
                    r.protocol.clone(),
                    r.static_regret.to_string(),
                    r.avg_regret.to_string(),
                    r.seed.to_string(),
                ]
            }),
        ),
        Figure::Fig7PlTracking => (
            &["T", "omega", "protocol", "seed", "dynamic_regret", "avg_dynamic_regret", "pl", "scaled_pl"],
            Box::new(|r| {
                vec![
                    r.horizon.to_string(),
                    opt(r.omega),
                    r.protocol.clone(),
                    r.seed.to_string(),
                    r.dynamic_regret.to_string(),
                    r.avg_dynamic_regret.to_string(),
                    r.pl.to_string(),
                    r.scaled_pl.to_string(),
                ]
            }),
        ),
        Figure::Fig8Dynregret => (
            &["T", "omega", "protocol", "seed", "dynamic_regret", "avg_dynamic_regret", "bound"],
            Box::new(|r| {
                vec![
                    r.horizon.to_string(),
                    opt(r.omega),
                    r.protocol.clone(),
                    r.seed.to_string(),
                    r.dynamic_regret.to_string(),
                    r.avg_dynamic_regret.to_string(),
                    r.bound.to_string(),
                ]
            }),
        ),
        Figure::Fig10Nmse => (
            &["T", "protocol", "seed", "self_nmse", "cross_nmse"],
            Box::new(|r| {
                vec![
                    r.horizon.to_string(),
                    r.protocol.clone(),
                    r.seed.to_string(),
                    r.self_nmse.to_string(),
                    opt(r.cross_nmse),
                ]
            }),
        ),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    let em = |e: csv::Error| Error::Emission(e.to_string());
    w.write_record(header).map_err(em)?;
    for r in rows {
        w.write_record(cells(r)).map_err(em)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Emission(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Emission(e.to_string()))
}

/// Figures to write: the configured list, or every figure whose axes the
/// rows carry.
pub fn selected_figures(cfg: &ExperimentConfig, rows: &[RegretRow]) -> Vec<Figure> {
    match &cfg.figures {
        Some(list) => list.clone(),
        None => Figure::ALL.into_iter().filter(|f| has_axes(rows, *f).is_ok()).collect(),
    }
}

/// Writes `report.csv`, `report.meta.json` and one CSV per figure into
/// `dir`. Existing files are only replaced with `force`.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, report: &ExperimentReport, force: bool) -> Result<Vec<PathBuf>> {
    if report.rows.is_empty() {
        return Err(Error::Emission("the experiment produced no rows".into()));
    }
    let mut files: Vec<(PathBuf, String)> = vec![
        (dir.join("report.csv"), report_to_csv(&report.rows)?),
        (
            dir.join("report.meta.json"),
            serde_json::to_string_pretty(&report.metadata).map_err(|e| Error::Emission(e.to_string()))?,
        ),
    ];
    for f in selected_figures(cfg, &report.rows) {
        files.push((dir.join(format!("{}.csv", f.name())), emit_plotdata(&report.rows, f)?));
    }
    if !force {
        if let Some((p, _)) = files.iter().find(|(p, _)| p.exists()) {
            return Err(Error::Config(format!(
                "{} already exists; pass --force to overwrite",
                p.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (p, text) in &files {
        fs::write(p, text).map_err(|e| Error::io(p, e))?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
