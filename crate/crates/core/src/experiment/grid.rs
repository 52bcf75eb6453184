use std::fmt::Write as _;
use std::fs;

use rayon::prelude::*;

use super::{emit_figure, run_experiment_logged, write, ExperimentConfig, ExperimentResult, FigureCell, LogSink};
use crate::calib::{desiderata, reports_to_csv, DesiderataVerdict, ExperimentId, UncertaintyReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub reports: Vec<UncertaintyReport>,
    pub verdict: DesiderataVerdict,
}

/// Runs all 12 (dim × injection × level) experiments of `template.method`,
/// at most `jobs` at a time, then writes `grid.csv`, `verdict.json` and the
/// σ_al figure next to the experiment directories. If any experiment fails
/// a `manifest.txt` lists what finished and what did not, and the error
/// names the missing experiments.
pub fn run_grid(template: &ExperimentConfig, jobs: usize, log: Option<LogSink>) -> Result<GridOutcome> {
    if jobs == 0 {
        return Err(Error::Config("jobs must be >= 1".into()));
    }
    let method_dir = template.out_dir.join(template.method.as_str());
    fs::create_dir_all(&method_dir)?;
    let ids = ExperimentId::grid(template.method);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
    let results: Vec<Result<ExperimentResult>> = pool.install(|| {
        ids.par_iter()
            .map(|id| run_experiment_logged(&template.with_cell(id.dim, id.injection, id.level), log))
            .collect()
    });

    if results.iter().any(|r| r.is_err()) {
        let mut manifest = String::new();
        let mut missing = Vec::new();
        for (id, r) in ids.iter().zip(&results) {
            match r {
                Ok(_) => writeln!(manifest, "done {id}").unwrap(),
                Err(e) => {
                    writeln!(manifest, "failed {id}: {e}").unwrap();
                    missing.push(id.to_string());
                }
            }
        }
        write(&method_dir.join("manifest.txt"), &manifest)?;
        return Err(Error::IncompleteGrid(missing));
    }

    let results: Vec<ExperimentResult> = results.into_iter().map(|r| r.expect("checked above")).collect();
    let reports: Vec<UncertaintyReport> = results.iter().map(|r| r.report.clone()).collect();
    let verdict = desiderata(&reports)?;
    write(&method_dir.join("grid.csv"), &reports_to_csv(&reports))?;
    write(&method_dir.join("verdict.json"), &(serde_json::to_string_pretty(&verdict)? + "\n"))?;
    let cells: Vec<FigureCell> = results
        .into_iter()
        .map(|r| FigureCell {
            report: r.report,
            sigma_al: r.predictions.sigma_al,
        })
        .collect();
    emit_figure(&cells, &method_dir.join(format!("figure2_{}.svg", template.method)))?;
    Ok(GridOutcome { reports, verdict })
}
