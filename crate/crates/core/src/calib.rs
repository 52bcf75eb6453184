//! Summaries of predicted aleatoric uncertainty against the injected truth.
//!
//! A prediction is *calibrated* when the mean of its σ_al distribution over
//! the test split lies within one standard deviation of the true σ_y,
//! boundary included. Desiderata checked over a 12-experiment grid:
//! σ_al scales with the injected noise, every experiment is calibrated, and
//! both hold across dimensionalities and injection types.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dimensionality, Injection, NoiseLevel};
use crate::error::{Error, Result};
use crate::train::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExperimentId {
    pub method: Method,
    pub dim: Dimensionality,
    pub injection: Injection,
    pub level: NoiseLevel,
}

impl ExperimentId {
    pub fn new(method: Method, dim: Dimensionality, injection: Injection, level: NoiseLevel) -> Self {
        Self {
            method,
            dim,
            injection,
            level,
        }
    }

    /// The 12 experiments of one method, ordered by dim, injection, level.
    pub fn grid(method: Method) -> Vec<ExperimentId> {
        let mut out = Vec::with_capacity(12);
        for dim in [Dimensionality::D0, Dimensionality::D2] {
            for injection in [Injection::Output, Injection::Input] {
                for level in NoiseLevel::ALL {
                    out.push(Self::new(method, dim, injection, level));
                }
            }
        }
        out
    }

    /// Directory name below the method directory, e.g. `0d_output_low`.
    pub fn dir_name(&self) -> String {
        format!("{}_{}_{}", self.dim, self.injection, self.level)
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.method, self.dir_name())
    }
}

/// Mean and sample standard deviation of a σ_al distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaSummary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub sigma_y_true: f64,
    pub calibrated: bool,
}

pub fn is_calibrated(mean: f64, std: f64, sigma_y_true: f64) -> bool {
    (mean - sigma_y_true).abs() <= std
}

/// Summarises test-split σ_al values; the standard deviation uses `n − 1`.
pub fn summarize(sigma_al: &[f64], sigma_y_true: f64) -> Result<SigmaSummary> {
    if sigma_al.is_empty() {
        return Err(Error::invalid("no σ_al values to summarise"));
    }
    if let Some(s) = sigma_al.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("σ_al value {s}")));
    }
    let n = sigma_al.len();
    let mean = sigma_al.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (sigma_al.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(SigmaSummary {
        n,
        mean,
        std,
        sigma_y_true,
        calibrated: is_calibrated(mean, std, sigma_y_true),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub id: ExperimentId,
    pub sigma_y_true: f64,
    pub mean_sigma_al: f64,
    pub std_sigma_al: f64,
    pub calibrated: bool,
    pub final_mse: f64,
    pub final_loss: f64,
}

pub const REPORT_HEADER: &str =
    "method,dim,injection,level,sigma_y_true,mean_sigma_al,std_sigma_al,calibrated,final_mse,final_loss";

impl UncertaintyReport {
    pub fn new(id: ExperimentId, summary: &SigmaSummary, final_mse: f64, final_loss: f64) -> Self {
        Self {
            id,
            sigma_y_true: summary.sigma_y_true,
            mean_sigma_al: summary.mean,
            std_sigma_al: summary.std,
            calibrated: summary.calibrated,
            final_mse,
            final_loss,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.id.method,
            self.id.dim,
            self.id.injection,
            self.id.level,
            self.sigma_y_true,
            self.mean_sigma_al,
            self.std_sigma_al,
            self.calibrated,
            self.final_mse,
            self.final_loss
        )
    }

    pub fn parse_row(row: &str) -> Result<Self> {
        let f: Vec<&str> = row.trim().split(',').collect();
        if f.len() != 10 {
            return Err(Error::format(format!("report row needs 10 fields, got {}: {row}", f.len())));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse()
                .map_err(|_| Error::format(format!("field {i} is not a number: {}", f[i])))
        };
        Ok(Self {
            id: ExperimentId::new(f[0].parse()?, f[1].parse()?, f[2].parse()?, f[3].parse()?),
            sigma_y_true: num(4)?,
            mean_sigma_al: num(5)?,
            std_sigma_al: num(6)?,
            calibrated: bool::from_str(f[7]).map_err(|_| Error::format(format!("bad flag {}", f[7])))?,
            final_mse: num(8)?,
            final_loss: num(9)?,
        })
    }
}

/// Header plus one row per report.
pub fn reports_to_csv(reports: &[UncertaintyReport]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn reports_from_csv(text: &str) -> Result<Vec<UncertaintyReport>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == REPORT_HEADER => {}
        other => return Err(Error::format(format!("unexpected report header {other:?}"))),
    }
    lines.map(UncertaintyReport::parse_row).collect()
}

/// True iff mean σ_al strictly increases Low → Medium → High. Reports are
/// matched by level, so their order does not matter.
pub fn check_scaling(reports: &[UncertaintyReport]) -> Result<bool> {
    let Some(first) = reports.first() else {
        return Err(Error::invalid("no reports to check for scaling"));
    };
    let mut by_level = BTreeMap::new();
    for r in reports {
        let (a, b) = (r.id, first.id);
        if (a.method, a.dim, a.injection) != (b.method, b.dim, b.injection) {
            return Err(Error::invalid(format!("scaling check mixes {a} and {b}")));
        }
        if by_level.insert(r.id.level, r.mean_sigma_al).is_some() {
            return Err(Error::invalid(format!("duplicate report for {a}")));
        }
    }
    let means: Vec<f64> = NoiseLevel::ALL
        .iter()
        .map(|l| {
            by_level
                .get(l)
                .copied()
                .ok_or_else(|| Error::invalid(format!("missing {l} level for {}", first.id)))
        })
        .collect::<Result<_>>()?;
    Ok(means.windows(2).all(|w| w[0] < w[1]))
}

pub fn mse_metric(predicted: &[f64], targets: &[f64]) -> Result<f64> {
    if predicted.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            predicted.len(),
            targets.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::invalid("MSE of an empty set"));
    }
    Ok(predicted.iter().zip(targets).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / predicted.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellVerdict {
    pub dim: Dimensionality,
    pub injection: Injection,
    pub scaling_ok: bool,
    pub n_calibrated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesiderataVerdict {
    pub method: Method,
    /// σ_al increases with the injected noise in all four cells.
    pub scaling_ok: bool,
    /// Every one of the 12 experiments is calibrated.
    pub calibration_ok: bool,
    /// Both of the above, across dimensionalities and injection types.
    pub universal_ok: bool,
    pub n_calibrated: usize,
    pub cells: Vec<CellVerdict>,
}

/// Evaluates the three desiderata over a complete grid of one method.
pub fn desiderata(reports: &[UncertaintyReport]) -> Result<DesiderataVerdict> {
    let Some(first) = reports.first() else {
        return Err(Error::IncompleteGrid(
            ExperimentId::grid(Method::De).iter().map(|id| id.to_string()).collect(),
        ));
    };
    let method = first.id.method;
    let mut by_id = BTreeMap::new();
    for r in reports {
        if r.id.method != method {
            return Err(Error::invalid(format!("grid mixes {} and {}", r.id, first.id)));
        }
        if by_id.insert(r.id, r).is_some() {
            return Err(Error::invalid(format!("duplicate report for {}", r.id)));
        }
    }
    let missing: Vec<String> = ExperimentId::grid(method)
        .into_iter()
        .filter(|id| !by_id.contains_key(id))
        .map(|id| id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteGrid(missing));
    }

    let mut cells = Vec::with_capacity(4);
    for dim in [Dimensionality::D0, Dimensionality::D2] {
        for injection in [Injection::Output, Injection::Input] {
            let cell: Vec<UncertaintyReport> = NoiseLevel::ALL
                .iter()
                .map(|&l| by_id[&ExperimentId::new(method, dim, injection, l)].clone())
                .collect();
            cells.push(CellVerdict {
                dim,
                injection,
                scaling_ok: check_scaling(&cell)?,
                n_calibrated: cell.iter().filter(|r| r.calibrated).count(),
            });
        }
    }
    let n_calibrated = reports.iter().filter(|r| r.calibrated).count();
    let scaling_ok = cells.iter().all(|c| c.scaling_ok);
    let calibration_ok = n_calibrated == reports.len();
    Ok(DesiderataVerdict {
        method,
        scaling_ok,
        calibration_ok,
        universal_ok: scaling_ok && calibration_ok,
        n_calibrated,
        cells,
    })
}
