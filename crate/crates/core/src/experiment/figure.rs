use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::write;
use crate::calib::{reports_from_csv, ExperimentId, UncertaintyReport};
use crate::data::{Dimensionality, Injection, NoiseLevel};
use crate::error::{Error, Result};
use crate::train::Method;

/// One experiment's report and its raw test-split σ_al values.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureCell {
    pub report: UncertaintyReport,
    pub sigma_al: Vec<f64>,
}

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 270.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_T: f64 = 60.0;
const GAP: f64 = 60.0;
const PLOT_PAD: f64 = 20.0;
const BINS: usize = 48;

const DIMS: [Dimensionality; 2] = [Dimensionality::D0, Dimensionality::D2];
const INJECTIONS: [Injection; 2] = [Injection::Output, Injection::Input];

fn colour(level: NoiseLevel) -> &'static str {
    match level {
        NoiseLevel::Low => "#1b9e77",
        NoiseLevel::Medium => "#d95f02",
        NoiseLevel::High => "#7570b3",
    }
}

fn level_row(level: NoiseLevel) -> usize {
    match level {
        NoiseLevel::Low => 0,
        NoiseLevel::Medium => 1,
        NoiseLevel::High => 2,
    }
}

/// Log-scale x axis shared by all panels.
struct Axis {
    lo: f64,
    hi: f64,
    width: f64,
}

impl Axis {
    fn x(&self, v: f64) -> f64 {
        let v = v.clamp(10f64.powf(self.lo), 10f64.powf(self.hi));
        (v.log10() - self.lo) / (self.hi - self.lo) * self.width
    }
}

/// Renders σ_al distributions as an SVG document: one panel per
/// (dimensionality, injection), one silhouette per noise level with a marker
/// at the mean and an error bar of ±std, and dashed lines at the true σ_y.
pub fn render_figure(cells: &[FigureCell]) -> Result<String> {
    if cells.is_empty() {
        return Err(Error::invalid("no experiments to plot"));
    }
    if let Some(c) = cells.iter().find(|c| c.sigma_al.is_empty()) {
        return Err(Error::invalid(format!("{} has no σ_al values", c.report.id)));
    }
    if let Some(v) = cells.iter().flat_map(|c| &c.sigma_al).find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::invalid(format!("σ_al values must be positive, got {v}")));
    }
    let methods: Vec<Method> = cells.iter().map(|c| c.report.id.method).collect();
    let title = if methods.iter().all(|m| *m == methods[0]) {
        format!("Predicted aleatoric uncertainty, {}", methods[0].as_str().to_uppercase())
    } else {
        "Predicted aleatoric uncertainty".to_string()
    };

    let all = cells.iter().flat_map(|c| c.sigma_al.iter().copied());
    let (min, max) = all.fold((0.005f64, 0.2f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let axis = Axis {
        lo: min.log10().floor(),
        hi: max.log10().ceil(),
        width: PANEL_W - 2.0 * PLOT_PAD,
    };

    let width = MARGIN_L + 2.0 * PANEL_W + GAP + 20.0;
    let height = MARGIN_T + 2.0 * PANEL_H + GAP + 40.0;
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#).unwrap();
    writeln!(svg, r#"<text x="{}" y="28" text-anchor="middle" font-size="16">{title}</text>"#, width / 2.0).unwrap();

    for (row, dim) in DIMS.iter().enumerate() {
        for (col, injection) in INJECTIONS.iter().enumerate() {
            let ox = MARGIN_L + col as f64 * (PANEL_W + GAP);
            let oy = MARGIN_T + row as f64 * (PANEL_H + GAP);
            let in_panel: Vec<&FigureCell> = cells
                .iter()
                .filter(|c| c.report.id.dim == *dim && c.report.id.injection == *injection)
                .collect();
            panel(&mut svg, &axis, ox, oy, *dim, *injection, &in_panel);
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn panel(
    svg: &mut String,
    axis: &Axis,
    ox: f64,
    oy: f64,
    dim: Dimensionality,
    injection: Injection,
    cells: &[&FigureCell],
) {
    let band = (PANEL_H - 2.0 * PLOT_PAD) / 3.0;
    let px = PLOT_PAD;
    writeln!(
        svg,
        r#"<g class="panel" data-dim="{dim}" data-injection="{injection}" transform="translate({ox},{oy})">"#
    )
    .unwrap();
    writeln!(svg, r##"<rect class="frame" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#444"/>"##).unwrap();
    writeln!(
        svg,
        r#"<text x="{}" y="-8" text-anchor="middle" font-size="13">{} data, {injection} injection</text>"#,
        PANEL_W / 2.0,
        dim.as_str().to_uppercase()
    )
    .unwrap();

    for decade in axis.lo as i32..=axis.hi as i32 {
        let x = PLOT_PAD + axis.x(10f64.powi(decade));
        writeln!(
            svg,
            r##"<line class="tick" x1="{x}" y1="{PANEL_H}" x2="{x}" y2="{}" stroke="#444"/><text x="{x}" y="{}" text-anchor="middle">1e{decade}</text>"##,
            PANEL_H + 5.0,
            PANEL_H + 18.0
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">σ_al</text>"#,
        PANEL_W / 2.0,
        PANEL_H + 34.0
    )
    .unwrap();

    for level in NoiseLevel::ALL {
        let x = PLOT_PAD + axis.x(level.sigma_y());
        writeln!(
            svg,
            r#"<line class="truth-line" data-sigma="{}" x1="{x}" y1="0" x2="{x}" y2="{PANEL_H}" stroke="{}" stroke-dasharray="6 4"/>"#,
            level.sigma_y(),
            colour(level)
        )
        .unwrap();
    }

    for cell in cells {
        let r = &cell.report;
        let level = r.id.level;
        let mid = PLOT_PAD + band * (level_row(level) as f64 + 0.5);
        let c = colour(level);

        let mut counts = [0usize; BINS];
        for &v in &cell.sigma_al {
            let b = (axis.x(v) / axis.width * BINS as f64) as usize;
            counts[b.min(BINS - 1)] += 1;
        }
        let peak = *counts.iter().max().expect("bins") as f64;
        let half = 0.45 * band;
        let bin_w = axis.width / BINS as f64;
        let mut path = format!("M {px:.2} {mid:.2}");
        let mut lower = Vec::with_capacity(BINS);
        for (b, &n) in counts.iter().enumerate() {
            let h = half * n as f64 / peak;
            let (x0, x1) = (ox_bin(px, bin_w, b), ox_bin(px, bin_w, b + 1));
            write!(path, " L {x0:.2} {:.2} L {x1:.2} {:.2}", mid - h, mid - h).unwrap();
            lower.push((x0, x1, mid + h));
        }
        for &(x0, x1, y) in lower.iter().rev() {
            write!(path, " L {x1:.2} {y:.2} L {x0:.2} {y:.2}").unwrap();
        }
        path.push_str(" Z");
        writeln!(
            svg,
            r#"<path class="silhouette" data-level="{level}" d="{path}" fill="{c}" fill-opacity="0.35" stroke="{c}"/>"#
        )
        .unwrap();

        let xm = px + axis.x(r.mean_sigma_al);
        let lo = r.mean_sigma_al - r.std_sigma_al;
        let x_lo = if lo > 0.0 { px + axis.x(lo) } else { px };
        let x_hi = px + axis.x(r.mean_sigma_al + r.std_sigma_al);
        writeln!(
            svg,
            r#"<line class="error-bar" data-level="{level}" data-mean="{}" data-std="{}" x1="{x_lo:.2}" y1="{mid:.2}" x2="{x_hi:.2}" y2="{mid:.2}" stroke="black" stroke-width="2"/>"#,
            r.mean_sigma_al, r.std_sigma_al
        )
        .unwrap();
        writeln!(
            svg,
            r#"<circle class="mean-marker" data-level="{level}" data-mean="{}" data-std="{}" data-calibrated="{}" cx="{xm:.2}" cy="{mid:.2}" r="4" fill="{c}" stroke="black"/>"#,
            r.mean_sigma_al, r.std_sigma_al, r.calibrated
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="8" y="{:.2}" font-size="11">σ_y = {}</text>"#,
            mid - half,
            r.sigma_y_true
        )
        .unwrap();
    }
    svg.push_str("</g>\n");
}

fn ox_bin(px: f64, bin_w: f64, b: usize) -> f64 {
    px + bin_w * b as f64
}

pub fn emit_figure(cells: &[FigureCell], path: &Path) -> Result<()> {
    write(path, &render_figure(cells)?)
}

/// Reads `report.csv` and `sigma_al.csv` of every finished experiment of
/// `method` under `out_dir`.
pub fn load_figure_cells(out_dir: &Path, method: Method) -> Result<Vec<FigureCell>> {
    let mut cells = Vec::new();
    for id in ExperimentId::grid(method) {
        let dir = out_dir.join(method.as_str()).join(id.dir_name());
        let (Ok(report), Ok(sigma)) = (
            fs::read_to_string(dir.join("report.csv")),
            fs::read_to_string(dir.join("sigma_al.csv")),
        ) else {
            continue;
        };
        let report = reports_from_csv(&report)?
            .into_iter()
            .next()
            .ok_or_else(|| Error::format(format!("{} has no report row", dir.display())))?;
        let mut lines = sigma.lines();
        if lines.next().map(str::trim) != Some("sigma_al") {
            return Err(Error::format(format!("{}/sigma_al.csv lacks its header", dir.display())));
        }
        let sigma_al = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse().map_err(|_| Error::format(format!("bad σ_al value '{l}'"))))
            .collect::<Result<_>>()?;
        cells.push(FigureCell { report, sigma_al });
    }
    if cells.is_empty() {
        return Err(Error::invalid(format!(
            "no finished {method} experiments under {}",
            out_dir.display()
        )));
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calib::{summarize, ExperimentId};

    fn cell(level: NoiseLevel, values: Vec<f64>) -> FigureCell {
        let id = ExperimentId::new(Method::De, Dimensionality::D0, Injection::Output, level);
        let s = summarize(&values, level.sigma_y()).unwrap();
        FigureCell {
            report: UncertaintyReport::new(id, &s, 1e-4, -0.05),
            sigma_al: values,
        }
    }

    fn count(doc: &roxmltree::Document, class: &str) -> usize {
        doc.descendants().filter(|n| n.attribute("class") == Some(class)).count()
    }

    #[test]
    fn three_levels_make_three_silhouettes() {
        let cells: Vec<FigureCell> = NoiseLevel::ALL
            .iter()
            .map(|&l| cell(l, (1..200).map(|i| l.sigma_y() * (0.8 + 0.002 * i as f64)).collect()))
            .collect();
        let svg = render_figure(&cells).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(count(&doc, "silhouette"), 3);
        assert_eq!(count(&doc, "mean-marker"), 3);
        assert_eq!(count(&doc, "error-bar"), 3);
        // three dashed truth lines in each of the four panels
        assert_eq!(count(&doc, "truth-line"), 12);
        assert_eq!(count(&doc, "panel"), 4);
        let bars: Vec<_> = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("error-bar"))
            .collect();
        for (bar, c) in bars.iter().zip(&cells) {
            assert_eq!(bar.attribute("data-mean").unwrap(), c.report.mean_sigma_al.to_string());
            assert_eq!(bar.attribute("data-std").unwrap(), c.report.std_sigma_al.to_string());
        }
    }

    #[test]
    fn degenerate_distribution_has_zero_length_bar() {
        let svg = render_figure(&[cell(NoiseLevel::Medium, vec![0.0625; 30])]).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let bar = doc
            .descendants()
            .find(|n| n.attribute("class") == Some("error-bar"))
            .unwrap();
        assert_eq!(bar.attribute("x1"), bar.attribute("x2"));
        assert_eq!(bar.attribute("data-std"), Some("0"));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(render_figure(&[]).is_err());
        let mut c = cell(NoiseLevel::Low, vec![0.01]);
        c.sigma_al.clear();
        assert!(render_figure(&[c]).is_err());
    }
}
