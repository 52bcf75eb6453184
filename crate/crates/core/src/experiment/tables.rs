use std::fmt::Write as _;
use std::path::Path;

use super::write;
use crate::calib::{ExperimentId, UncertaintyReport};
use crate::data::{Dimensionality, Injection, NoiseLevel};
use crate::error::{Error, Result};
use crate::train::Method;

/// Column order of the final-epoch tables: dim, then injection, then method.
pub const TABLE_COLUMNS: [(Dimensionality, Injection, Method); 8] = [
    (Dimensionality::D0, Injection::Output, Method::De),
    (Dimensionality::D0, Injection::Output, Method::Der),
    (Dimensionality::D0, Injection::Input, Method::De),
    (Dimensionality::D0, Injection::Input, Method::Der),
    (Dimensionality::D2, Injection::Output, Method::De),
    (Dimensionality::D2, Injection::Output, Method::Der),
    (Dimensionality::D2, Injection::Input, Method::De),
    (Dimensionality::D2, Injection::Input, Method::Der),
];

/// Published final-epoch validation (MSE, loss) per column, low noise.
pub const REFERENCE_LOW_NOISE: [(f64, f64); 8] = [
    (0.0001, -0.0502),
    (0.0001, -3.0890),
    (0.0001, -0.0416),
    (0.0001, -2.9338),
    (0.0006, -0.0426),
    (0.0002, -2.7691),
    (0.0002, -0.0993),
    (0.0001, -3.0639),
];

/// Published final-epoch validation (MSE, loss) per column, high noise.
pub const REFERENCE_HIGH_NOISE: [(f64, f64); 8] = [
    (0.0098, -0.1724),
    (0.0097, -0.8728),
    (0.0091, -0.1678),
    (0.0092, -0.9018),
    (0.0099, -0.1767),
    (0.0086, -0.9202),
    (0.0047, -0.1330),
    (0.0042, -1.3358),
];

fn reference(level: NoiseLevel) -> Option<&'static [(f64, f64); 8]> {
    match level {
        NoiseLevel::Low => Some(&REFERENCE_LOW_NOISE),
        NoiseLevel::Medium => None,
        NoiseLevel::High => Some(&REFERENCE_HIGH_NOISE),
    }
}

/// CSV with rows `MSE Metric` and `Loss` over the eight (dim, injection,
/// method) columns at one noise level, followed by the published values
/// where they exist.
pub fn render_tables(reports: &[UncertaintyReport], level: NoiseLevel) -> Result<String> {
    let mut cells = Vec::with_capacity(8);
    let mut missing = Vec::new();
    for (dim, injection, method) in TABLE_COLUMNS {
        let id = ExperimentId::new(method, dim, injection, level);
        match reports.iter().find(|r| r.id == id) {
            Some(r) => cells.push(r),
            None => missing.push(id.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteGrid(missing));
    }
    let mut out = String::from("metric");
    for (dim, injection, method) in TABLE_COLUMNS {
        write!(out, ",{dim}_{injection}_{method}").unwrap();
    }
    out.push('\n');
    let row = |out: &mut String, name: &str, values: &mut dyn Iterator<Item = String>| {
        out.push_str(name);
        for v in values {
            out.push(',');
            out.push_str(&v);
        }
        out.push('\n');
    };
    row(&mut out, "MSE Metric", &mut cells.iter().map(|r| r.final_mse.to_string()));
    row(&mut out, "Loss", &mut cells.iter().map(|r| r.final_loss.to_string()));
    if let Some(reference) = reference(level) {
        row(&mut out, "MSE Metric (reference)", &mut reference.iter().map(|v| format!("{:.4}", v.0)));
        row(&mut out, "Loss (reference)", &mut reference.iter().map(|v| format!("{:.4}", v.1)));
    }
    Ok(out)
}

pub fn emit_tables(reports: &[UncertaintyReport], level: NoiseLevel, path: &Path) -> Result<()> {
    write(path, &render_tables(reports, level)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_reports(level: NoiseLevel) -> Vec<UncertaintyReport> {
        TABLE_COLUMNS
            .iter()
            .enumerate()
            .map(|(i, &(dim, injection, method))| UncertaintyReport {
                id: ExperimentId::new(method, dim, injection, level),
                sigma_y_true: level.sigma_y(),
                mean_sigma_al: 0.1,
                std_sigma_al: 0.01,
                calibrated: true,
                final_mse: i as f64 * 1e-4,
                final_loss: -(i as f64),
            })
            .collect()
    }

    #[test]
    fn table_layout() {
        let text = render_tables(&all_reports(NoiseLevel::High), NoiseLevel::High).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("metric,0d_output_de,0d_output_der,0d_input_de"));
        assert_eq!(lines[1].split(',').nth(3), Some("0.0002"));
        assert_eq!(lines[3].split(',').nth(1), Some("0.0098"));
        assert_eq!(lines[4].split(',').nth(2), Some("-0.8728"));
        let medium = render_tables(&all_reports(NoiseLevel::Medium), NoiseLevel::Medium).unwrap();
        assert_eq!(medium.lines().count(), 3);
    }

    #[test]
    fn reference_values() {
        assert_eq!(REFERENCE_LOW_NOISE[0].0, 0.0001);
        assert_eq!(REFERENCE_HIGH_NOISE[0].0, 0.0098);
        assert_eq!(REFERENCE_HIGH_NOISE[1].1, -0.8728);
    }

    #[test]
    fn missing_cells_are_listed() {
        let mut reports = all_reports(NoiseLevel::Low);
        reports.remove(5);
        reports.remove(0);
        match render_tables(&reports, NoiseLevel::Low) {
            Err(Error::IncompleteGrid(m)) => {
                assert_eq!(m, vec!["de/0d_output_low".to_string(), "der/2d_output_low".to_string()])
            }
            other => panic!("{other:?}"),
        }
    }
}
