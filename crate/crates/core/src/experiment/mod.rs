//! End-to-end experiments: configuration, data generation, training,
//! prediction, summaries, and everything written to disk.
//!
//! Output layout under `out_dir`:
//!
//! ```text
//! <method>/<dim>_<inject>_<level>/report.csv
//!                                 trace.csv
//!                                 sigma_al.csv
//!                                 checkpoints/
//! <method>/grid.csv, verdict.json, figure2_<method>.svg
//! ```

mod figure;
mod grid;
mod tables;
mod verify;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::calib::{reports_to_csv, summarize, ExperimentId, UncertaintyReport};
use crate::data::{
    generate, text_enum, DataSplits, Dimensionality, GenerateOptions, Injection, NoiseLevel, NoiseSpec,
    SplitSizes,
};
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::nn::{build_cnn_2d, build_mlp_0d, mve_heads, nig_heads, write_checkpoint, Network, NetworkSpec};
use crate::train::{
    default_batch_size, predict_de, predict_der, prediction_mse, train_de_observed, train_der_observed, EpochRecord,
    Method, PredictionSet, TrainConfig, TrainTrace,
};

pub use figure::{emit_figure, load_figure_cells, render_figure, FigureCell};
pub use grid::{run_grid, GridOutcome};
pub use tables::{emit_tables, render_tables, REFERENCE_HIGH_NOISE, REFERENCE_LOW_NOISE, TABLE_COLUMNS};
pub use verify::{verify_propagation, PropagationCheck};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scale {
    Paper,
    Desk,
}

text_enum!(Scale { Paper => "paper", Desk => "desk" });

impl Scale {
    pub fn split_sizes(self, dim: Dimensionality) -> SplitSizes {
        match self {
            Scale::Paper => SplitSizes::paper(dim),
            Scale::Desk => SplitSizes::desk(dim),
        }
    }

    pub fn epochs(self) -> usize {
        match self {
            Scale::Paper => 100,
            Scale::Desk => 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub dim: Dimensionality,
    pub injection: Injection,
    pub level: NoiseLevel,
    pub seed: u64,
    pub epochs: usize,
    pub ensemble_size: usize,
    pub scale: Scale,
    pub out_dir: PathBuf,
    pub lambda: f64,
    pub beta_weight: f64,
    pub batch_size: usize,
}

/// Recognised configuration keys; flags use the same names with `--`.
pub const CONFIG_KEYS: [&str; 12] = [
    "method",
    "dim",
    "inject",
    "noise",
    "seed",
    "epochs",
    "ensemble-size",
    "scale",
    "out-dir",
    "lambda",
    "beta-weight",
    "batch-size",
];

/// Ordered `key=value` settings; later entries override earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap(BTreeMap<String, String>);

impl ConfigMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses flat `key=value` text; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = Self::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected key=value, got '{line}'", n + 1)));
            };
            map.set(k, v)?;
        }
        Ok(map)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().to_ascii_lowercase().replace('_', "-");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("unknown configuration key '{key}'")));
        }
        self.0.insert(key, value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'")))
            })
            .transpose()
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.parsed(key)?
            .ok_or_else(|| Error::Config(format!("missing required setting '{key}'")))
    }

    /// Resolves defaults: desk scale, seed 0, 10 members, λ = 0.01, β = 0.5,
    /// epochs and batch size from the scale and dimensionality.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let scale = self.parsed("scale")?.unwrap_or(Scale::Desk);
        let dim = self.required("dim")?;
        let cfg = ExperimentConfig {
            method: self.required("method")?,
            dim,
            injection: self.required("inject")?,
            level: self.required("noise")?,
            seed: self.parsed("seed")?.unwrap_or(0),
            epochs: self.parsed("epochs")?.unwrap_or(scale.epochs()),
            ensemble_size: self.parsed("ensemble-size")?.unwrap_or(10),
            scale,
            out_dir: self.parsed("out-dir")?.unwrap_or_else(|| PathBuf::from("runs")),
            lambda: self.parsed("lambda")?.unwrap_or(LossConfig::default().lambda_reg),
            beta_weight: self.parsed("beta-weight")?.unwrap_or(LossConfig::default().beta_weight),
            batch_size: self.parsed("batch-size")?.unwrap_or(default_batch_size(dim)),
        };
        cfg.train_config().validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn id(&self) -> ExperimentId {
        ExperimentId::new(self.method, self.dim, self.injection, self.level)
    }

    /// The experiment directory, `out_dir/<method>/<dim>_<inject>_<level>`.
    pub fn dir(&self) -> PathBuf {
        self.out_dir.join(self.method.as_str()).join(self.id().dir_name())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            ensemble_size: self.ensemble_size,
            loss_config: LossConfig {
                beta_weight: self.beta_weight,
                lambda_reg: self.lambda,
                nll_const: 0.0,
            },
            ..TrainConfig::new(self.method, self.dim)
        }
    }

    pub fn network_spec(&self) -> NetworkSpec {
        let heads = match self.method {
            Method::De => mve_heads(),
            Method::Der => nig_heads(),
        };
        match self.dim {
            Dimensionality::D0 => build_mlp_0d(heads),
            Dimensionality::D2 => build_cnn_2d(heads),
        }
    }

    pub fn generate_data(&self) -> Result<DataSplits> {
        generate(
            self.dim,
            NoiseSpec::new(self.injection, self.level),
            self.seed,
            self.scale.split_sizes(self.dim),
            &GenerateOptions::default(),
        )
    }

    /// Same settings for another cell of the grid.
    pub fn with_cell(&self, dim: Dimensionality, injection: Injection, level: NoiseLevel) -> Self {
        let batch_size = if dim == self.dim {
            self.batch_size
        } else {
            default_batch_size(dim)
        };
        Self {
            dim,
            injection,
            level,
            batch_size,
            ..self.clone()
        }
    }
}

/// Everything a finished run produced, besides what went to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub report: UncertaintyReport,
    pub predictions: PredictionSet,
    pub trace: TrainTrace,
}

pub type LogSink<'a> = &'a (dyn Fn(&str) + Sync);

fn epoch_line(id: ExperimentId, r: &EpochRecord) -> String {
    let member = r.member.map(|k| format!(" member {k}")).unwrap_or_default();
    format!(
        "[{id}]{member} epoch {} train_loss {:.6} val_loss {:.6} val_mse {:.6e}",
        r.epoch, r.train_loss, r.val_loss, r.val_mse
    )
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

/// Generates data, trains, predicts on the test split and persists the
/// report, trace, σ_al values and checkpoints. Fully determined by `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<UncertaintyReport> {
    run_experiment_logged(cfg, None).map(|r| r.report)
}

pub fn run_experiment_logged(cfg: &ExperimentConfig, log: Option<LogSink>) -> Result<ExperimentResult> {
    let train_cfg = cfg.train_config();
    train_cfg.validate()?;
    let dir = cfg.dir();
    let ckpt_dir = dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", ckpt_dir.display())))
    })?;

    let id = cfg.id();
    let data = cfg.generate_data()?;
    let spec = cfg.network_spec();
    let network = Network::new(spec.clone())?;
    let observer = |r: &EpochRecord| {
        if let Some(log) = log {
            log(&epoch_line(id, r));
        }
    };

    let (predictions, trace, final_mse, final_loss) = match cfg.method {
        Method::De => {
            let (members, mut traces) = train_de_observed(&data.train, &data.val, &spec, &train_cfg, Some(&observer))?;
            for (k, (params, trace)) in members.iter().zip(traces.iter_mut()).enumerate() {
                let path = ckpt_dir.join(format!("member_{k:02}.ckpt"));
                write_checkpoint(&path, &network, params, cfg.seed.wrapping_add(k as u64))?;
                write(&ckpt_dir.join(format!("member_{k:02}_trace.csv")), &trace.to_csv())?;
                trace.checkpoints.push(path);
            }
            let val_mse = prediction_mse(&predict_de(&members, &spec, &data.val)?, &data.val)?;
            let final_loss = traces
                .iter()
                .map(|t| t.last().map_or(f64::NAN, |r| r.val_loss))
                .sum::<f64>()
                / traces.len() as f64;
            let preds = predict_de(&members, &spec, &data.test)?;
            (preds, TrainTrace::mean_of(&traces)?, val_mse, final_loss)
        }
        Method::Der => {
            let (params, mut trace) = train_der_observed(&data.train, &data.val, &spec, &train_cfg, Some(&observer))?;
            let path = ckpt_dir.join("der.ckpt");
            write_checkpoint(&path, &network, &params, cfg.seed)?;
            trace.checkpoints.push(path);
            let last = *trace.last().expect("at least one epoch");
            (predict_der(&params, &spec, &data.test)?, trace, last.val_mse, last.val_loss)
        }
    };

    let summary = summarize(&predictions.sigma_al, cfg.level.sigma_y())?;
    let report = UncertaintyReport::new(id, &summary, final_mse, final_loss);
    write(&dir.join("report.csv"), &reports_to_csv(std::slice::from_ref(&report)))?;
    write(&dir.join("trace.csv"), &trace.to_csv())?;
    write(&dir.join("sigma_al.csv"), &predictions.sigma_csv())?;
    Ok(ExperimentResult {
        report,
        predictions,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, &str)]) -> ConfigMap {
        let mut m = ConfigMap::new();
        for (k, v) in pairs {
            m.set(k, v).unwrap();
        }
        m
    }

    #[test]
    fn config_defaults_follow_scale_and_dim() {
        let cfg = map(&[("method", "de"), ("dim", "0d"), ("inject", "output"), ("noise", "high")])
            .resolve()
            .unwrap();
        assert_eq!(cfg.scale, Scale::Desk);
        assert_eq!(cfg.epochs, 40);
        assert_eq!(cfg.batch_size, 128);
        assert_eq!(cfg.ensemble_size, 10);
        assert_eq!(cfg.level.sigma_y(), 0.1);
        assert_eq!(cfg.scale.split_sizes(cfg.dim), SplitSizes::new(9000, 1000, 1000));

        let cfg = map(&[("method", "der"), ("dim", "2d"), ("inject", "input"), ("noise", "low"), ("scale", "paper")])
            .resolve()
            .unwrap();
        assert_eq!(cfg.epochs, 100);
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.scale.split_sizes(cfg.dim), SplitSizes::new(4500, 500, 500));
        assert_eq!(Scale::Desk.split_sizes(Dimensionality::D2), SplitSizes::new(1500, 200, 200));
    }

    #[test]
    fn config_text_and_overrides() {
        let mut m = ConfigMap::parse("# run\nmethod = der\ndim=0d\ninject=output\nnoise=medium\nbeta_weight=0.25\nepochs=3\n").unwrap();
        m.set("epochs", "5").unwrap();
        let cfg = m.resolve().unwrap();
        assert_eq!(cfg.epochs, 5);
        assert_eq!(cfg.beta_weight, 0.25);
        assert_eq!(cfg.dir(), PathBuf::from("runs/der/0d_output_medium"));
    }

    #[test]
    fn config_errors_are_config_errors() {
        assert!(matches!(ConfigMap::parse("colour=blue"), Err(Error::Config(_))));
        assert!(matches!(ConfigMap::parse("method"), Err(Error::Config(_))));
        let base = [("method", "de"), ("dim", "0d"), ("inject", "output"), ("noise", "high")];
        for (k, v) in [("method", "mc"), ("noise", "extreme"), ("epochs", "-1"), ("epochs", "0"), ("beta-weight", "2")] {
            let mut m = map(&base);
            m.set(k, v).unwrap();
            assert!(matches!(m.resolve(), Err(Error::Config(_))), "{k}={v}");
        }
        assert!(matches!(map(&base[..3]).resolve(), Err(Error::Config(_))));
    }
}
