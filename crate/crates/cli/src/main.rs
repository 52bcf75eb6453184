use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use uqbench::calib::{reports_from_csv, ExperimentId, UncertaintyReport};
use uqbench::data::{save_splits, NoiseLevel};
use uqbench::experiment::{
    emit_figure, emit_tables, load_figure_cells, render_tables, run_experiment_logged, run_grid,
    verify_propagation, ConfigMap, ExperimentConfig,
};
use uqbench::train::Method;
use uqbench::Error;

#[derive(Parser)]
#[command(name = "uqbench", version, about = "Aleatoric uncertainty benchmark for deep ensembles and evidential regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one experiment.
    Run(Settings),
    /// Run all 12 experiments of one method and judge the desiderata.
    Grid {
        #[command(flatten)]
        settings: Settings,
        /// Experiments trained concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Compare analytic and Monte-Carlo noise propagation.
    VerifyPropagation {
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate and save the train/val/test splits of one experiment.
    Generate {
        #[command(flatten)]
        settings: Settings,
        /// Destination directory for the dataset files.
        #[arg(long)]
        data_dir: PathBuf,
    },
    /// Final-epoch MSE and loss table for one noise level, read from finished runs.
    Tables {
        #[arg(long, default_value = "runs")]
        out_dir: PathBuf,
        #[arg(long)]
        noise: NoiseLevel,
        /// Output CSV; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// σ_al distribution figure for one method, read from finished runs.
    Figure {
        #[arg(long, default_value = "runs")]
        out_dir: PathBuf,
        #[arg(long)]
        method: Method,
        /// Output SVG; defaults to `<out-dir>/<method>/figure2_<method>.svg`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Experiment settings: an optional key=value file, overridden by flags.
#[derive(Args)]
struct Settings {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    inject: Option<String>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    ensemble_size: Option<String>,
    #[arg(long)]
    scale: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    beta_weight: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
}

impl Settings {
    fn config_map(&self) -> Result<ConfigMap> {
        let mut map = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                ConfigMap::parse(&text)?
            }
            None => ConfigMap::new(),
        };
        let flags = [
            ("method", &self.method),
            ("dim", &self.dim),
            ("inject", &self.inject),
            ("noise", &self.noise),
            ("seed", &self.seed),
            ("epochs", &self.epochs),
            ("ensemble-size", &self.ensemble_size),
            ("scale", &self.scale),
            ("out-dir", &self.out_dir),
            ("lambda", &self.lambda),
            ("beta-weight", &self.beta_weight),
            ("batch-size", &self.batch_size),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                map.set(key, v)?;
            }
        }
        Ok(map)
    }

    fn resolve(&self) -> Result<ExperimentConfig> {
        Ok(self.config_map()?.resolve()?)
    }
}

fn print_line(line: &str) {
    let mut out = std::io::stdout().lock();
    // a closed pipe should not abort training
    let _ = writeln!(out, "{line}");
}

fn report_line(r: &UncertaintyReport) -> String {
    format!(
        "[{}] sigma_y_true {} mean_sigma_al {:.6} std_sigma_al {:.6} calibrated {} final_mse {:.6e} final_loss {:.6}",
        r.id, r.sigma_y_true, r.mean_sigma_al, r.std_sigma_al, r.calibrated, r.final_mse, r.final_loss
    )
}

fn run(settings: &Settings) -> Result<()> {
    let cfg = settings.resolve()?;
    let result = run_experiment_logged(&cfg, Some(&print_line))?;
    print_line(&report_line(&result.report));
    print_line(&format!("wrote {}", cfg.dir().display()));
    Ok(())
}

fn grid(settings: &Settings, jobs: usize) -> Result<()> {
    let mut map = settings.config_map()?;
    // the grid sweeps these; any cell resolves the shared settings
    for (key, placeholder) in [("dim", "0d"), ("inject", "output"), ("noise", "low")] {
        if map.get(key).is_none() {
            map.set(key, placeholder)?;
        }
    }
    let template = map.resolve()?;
    let outcome = run_grid(&template, jobs, Some(&print_line))?;
    for r in &outcome.reports {
        print_line(&report_line(r));
    }
    let v = &outcome.verdict;
    print_line(&format!(
        "{}: scaling_ok {} calibration_ok {} universal_ok {} ({} of 12 calibrated)",
        v.method, v.scaling_ok, v.calibration_ok, v.universal_ok, v.n_calibrated
    ));
    print_line(&format!("wrote {}", template.out_dir.join(template.method.as_str()).display()));
    Ok(())
}

fn verify(samples: usize, seed: u64) -> Result<bool> {
    let checks = verify_propagation(samples, seed)?;
    for c in &checks {
        print_line(&format!(
            "{:<36} analytic {:.6} monte_carlo {:.6} rel_error {:.2e} {}",
            c.name,
            c.analytic,
            c.monte_carlo,
            c.rel_error,
            if c.pass { "PASS" } else { "FAIL" }
        ));
    }
    Ok(checks.iter().all(|c| c.pass))
}

fn generate(settings: &Settings, data_dir: &Path) -> Result<()> {
    let mut map = settings.config_map()?;
    if map.get("method").is_none() {
        // data do not depend on the method
        map.set("method", "de")?;
    }
    let cfg = map.resolve()?;
    let splits = cfg.generate_data()?;
    save_splits(data_dir, &splits)?;
    print_line(&format!(
        "wrote {} ({} / {} / {} samples)",
        data_dir.display(),
        splits.train.len(),
        splits.val.len(),
        splits.test.len()
    ));
    Ok(())
}

/// Every finished report under `out_dir`, for both methods.
fn load_reports(out_dir: &Path) -> Result<Vec<UncertaintyReport>> {
    let mut reports = Vec::new();
    for method in Method::ALL {
        for id in ExperimentId::grid(method) {
            let path = out_dir.join(method.as_str()).join(id.dir_name()).join("report.csv");
            if let Ok(text) = fs::read_to_string(&path) {
                reports.extend(reports_from_csv(&text).with_context(|| path.display().to_string())?);
            }
        }
    }
    Ok(reports)
}

fn tables(out_dir: &Path, level: NoiseLevel, out: Option<&Path>) -> Result<()> {
    let reports = load_reports(out_dir)?;
    match out {
        Some(path) => {
            emit_tables(&reports, level, path)?;
            print_line(&format!("wrote {}", path.display()));
        }
        None => print!("{}", render_tables(&reports, level)?),
    }
    Ok(())
}

fn figure(out_dir: &Path, method: Method, out: Option<PathBuf>) -> Result<()> {
    let cells = load_figure_cells(out_dir, method)?;
    let path = out.unwrap_or_else(|| out_dir.join(method.as_str()).join(format!("figure2_{method}.svg")));
    emit_figure(&cells, &path)?;
    print_line(&format!("wrote {} ({} experiments)", path.display(), cells.len()));
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 2,
        Some(Error::Divergence { .. }) => 3,
        Some(Error::IncompleteGrid(_)) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(settings) => run(settings).map(|_| true),
        Command::Grid { settings, jobs } => grid(settings, *jobs).map(|_| true),
        Command::VerifyPropagation { samples, seed } => verify(*samples, *seed),
        Command::Generate { settings, data_dir } => generate(settings, data_dir).map(|_| true),
        Command::Tables { out_dir, noise, out } => tables(out_dir, *noise, out.as_deref()).map(|_| true),
        Command::Figure { out_dir, method, out } => figure(out_dir, *method, out.clone()).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
