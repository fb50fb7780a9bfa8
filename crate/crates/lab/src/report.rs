use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use livsic_core::livsic::Warning;
use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::{io_err, LabError, Result};

/// Wall-clock data. This is the only part of a report that differs between
/// two runs of the same config.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Timing {
    pub started_unix_ms: u128,
    pub stages_ms: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Status {
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub config: ExperimentConfig,
    pub status: Status,
    pub results: BTreeMap<String, Value>,
    /// Two-column plot data by name.
    pub series: BTreeMap<String, Vec<(f64, f64)>>,
    pub warnings: Vec<Warning>,
    pub timing: Timing,
}

impl RunReport {
    pub fn new(command: &str, config: ExperimentConfig) -> Self {
        let started_unix_ms = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        RunReport {
            command: command.to_string(),
            config,
            status: Status {
                exit_code: 0,
                message: None,
            },
            results: BTreeMap::new(),
            series: BTreeMap::new(),
            warnings: Vec::new(),
            timing: Timing {
                started_unix_ms,
                stages_ms: Vec::new(),
            },
        }
    }

    pub fn insert(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("reports serialize");
        self.results.insert(key.to_string(), v);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// The report as JSON with `timing` removed, for reproducibility checks.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("reports serialize");
        v.as_object_mut().unwrap().remove("timing");
        serde_json::to_string_pretty(&v).unwrap()
    }
}

/// Plot data files the driver knows how to write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// `n` against `log K(fⁿ)`.
    DistortionGrowth,
    /// Coverage radius against residual, sorted by coverage.
    ResidualVsCoverage,
    /// Coverage radius against recovery error.
    RecoveryVsCoverage,
    /// `n` against the SPD distance of propagated forms to the eigen-metric.
    FormDistance,
}

impl PlotKind {
    pub fn series(self) -> &'static str {
        match self {
            PlotKind::DistortionGrowth => "distortion_growth",
            PlotKind::ResidualVsCoverage => "residual_vs_coverage",
            PlotKind::RecoveryVsCoverage => "recovery_vs_coverage",
            PlotKind::FormDistance => "form_distance",
        }
    }

    pub fn all() -> [PlotKind; 4] {
        [
            PlotKind::DistortionGrowth,
            PlotKind::ResidualVsCoverage,
            PlotKind::RecoveryVsCoverage,
            PlotKind::FormDistance,
        ]
    }
}

/// Writes `<series>.dat` with one whitespace-separated pair per line.
pub fn emit_plot_data(report: &RunReport, kind: PlotKind, dir: &Path) -> Result<PathBuf> {
    let name = kind.series();
    let rows = report
        .series
        .get(name)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| LabError::MissingSeries(name.to_string()))?;
    let mut text = String::new();
    for (a, b) in rows {
        text.push_str(&format!("{a:e} {b:e}\n"));
    }
    let path = dir.join(format!("{name}.dat"));
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(path)
}

/// Writes every series present in the report.
pub fn emit_all_plot_data(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    PlotKind::all()
        .into_iter()
        .filter(|k| report.series.contains_key(k.series()))
        .map(|k| emit_plot_data(report, k, dir))
        .collect()
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(path)
}
