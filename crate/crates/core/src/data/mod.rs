//! Synthetic regression datasets with controllable homoskedastic Gaussian noise.
//!
//! Two families are produced, both with clean targets uniform on `[0, 2]`:
//!
//! - **0D**: points on lines `y = m x`, fed to the model as `(m, x)`.
//! - **2D**: 32×32 Sérsic galaxy images whose target is the summed flux.
//!
//! Noise goes either on the target (`Output`) or on the input (`Input`). For
//! input injection the per-input noise is chosen so that, after first-order
//! propagation, the target picks up exactly the level's `σ_y`.

mod image;
mod io;
mod sersic;
mod zero_d;


use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use image::{finalize_targets, generate_2d, scale_targets, IMAGE_PIXELS, IMAGE_SIDE};
pub use io::{load_splits, save_splits};
pub(crate) use io::{parse_key_values, read_f64s, write_f64s};
pub use sersic::{render_sersic, SersicParams, ELLIPTICITY, SERSIC_B1};
pub use zero_d::generate_0d;

/// Clean targets live on `[0, TARGET_MAX]`.
pub const TARGET_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Injection {
    Output,
    Input,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseLevel {
    Low,
    Medium,
    High,
}

impl NoiseLevel {
    pub const ALL: [NoiseLevel; 3] = [NoiseLevel::Low, NoiseLevel::Medium, NoiseLevel::High];

    /// True output uncertainty σ_y for this level, in target units.
    pub fn sigma_y(self) -> f64 {
        match self {
            NoiseLevel::Low => 0.01,
            NoiseLevel::Medium => 0.05,
            NoiseLevel::High => 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dimensionality {
    #[serde(rename = "0d")]
    D0,
    #[serde(rename = "2d")]
    D2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub(crate) fn index(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }
}

macro_rules! text_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$variant => $text),+ }
            }
        }

        impl std::fmt::Display for $ty {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl std::str::FromStr for $ty {
            type Err = $crate::error::Error;

            fn from_str(s: &str) -> $crate::error::Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok($ty::$variant),)+
                    other => Err($crate::error::Error::Config(format!(
                        concat!("unknown ", stringify!($ty), " '{}'"), other
                    ))),
                }
            }
        }
    };
}
pub(crate) use text_enum;

text_enum!(Injection { Output => "output", Input => "input" });
text_enum!(NoiseLevel { Low => "low", Medium => "medium", High => "high" });
text_enum!(Dimensionality { D0 => "0d", D2 => "2d" });
text_enum!(Split { Train => "train", Val => "val", Test => "test" });

/// Where the noise goes and how large the resulting target uncertainty is.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub injection: Injection,
    pub level: NoiseLevel,
    pub sigma_y: f64,
}

impl NoiseSpec {
    pub fn new(injection: Injection, level: NoiseLevel) -> Self {
        Self {
            injection,
            level,
            sigma_y: level.sigma_y(),
        }
    }

    /// Overrides `σ_y` (for instance 0 for a noise-free control dataset).
    pub fn with_sigma(injection: Injection, level: NoiseLevel, sigma_y: f64) -> Result<Self> {
        if !(sigma_y.is_finite() && sigma_y >= 0.0) {
            return Err(Error::invalid(format!("sigma_y must be finite and >= 0, got {sigma_y}")));
        }
        Ok(Self {
            injection,
            level,
            sigma_y,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSizes {
    pub const PAPER_0D: SplitSizes = SplitSizes::new(90_000, 10_000, 10_000);
    pub const PAPER_2D: SplitSizes = SplitSizes::new(4_500, 500, 500);
    pub const DESK_0D: SplitSizes = SplitSizes::new(9_000, 1_000, 1_000);
    pub const DESK_2D: SplitSizes = SplitSizes::new(1_500, 200, 200);

    pub const fn new(train: usize, val: usize, test: usize) -> Self {
        Self { train, val, test }
    }

    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    pub fn paper(dim: Dimensionality) -> Self {
        match dim {
            Dimensionality::D0 => Self::PAPER_0D,
            Dimensionality::D2 => Self::PAPER_2D,
        }
    }

    pub fn desk(dim: Dimensionality) -> Self {
        match dim {
            Dimensionality::D0 => Self::DESK_0D,
            Dimensionality::D2 => Self::DESK_2D,
        }
    }
}

/// Knobs shared by both generators.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOptions {
    /// Accept split sizes other than the published ones.
    pub allow_custom_sizes: bool,
    /// Lower end of the 0D abscissa grid.
    pub x_min: f64,
    /// Number of points in the 0D abscissa grid.
    pub grid_points: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            allow_custom_sizes: false,
            x_min: 0.5,
            grid_points: 1000,
        }
    }
}

impl GenerateOptions {
    pub fn custom_sizes() -> Self {
        Self {
            allow_custom_sizes: true,
            ..Self::default()
        }
    }

    pub(crate) fn check_sizes(&self, dim: Dimensionality, sizes: SplitSizes) -> Result<()> {
        if sizes.train == 0 || sizes.val == 0 || sizes.test == 0 {
            return Err(Error::invalid(format!("split sizes must be positive, got {sizes:?}")));
        }
        if !self.allow_custom_sizes && sizes != SplitSizes::paper(dim) && sizes != SplitSizes::desk(dim) {
            return Err(Error::invalid(format!(
                "split sizes {sizes:?} are neither the full ({:?}) nor the desk ({:?}) sizes; set allow_custom_sizes",
                SplitSizes::paper(dim),
                SplitSizes::desk(dim)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample0D {
    pub m: f64,
    pub x: f64,
    pub y: f64,
    pub x_noisy: Option<f64>,
    pub y_noisy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    /// Clean image in target units, row-major 32×32.
    pub pixels: Vec<f64>,
    pub pixels_noisy: Option<Vec<f64>>,
    pub params: SersicParams,
    pub y: f64,
    pub y_noisy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    Line(Vec<Sample0D>),
    Image(Vec<ImageSample>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub noise: NoiseSpec,
    pub seed: u64,
    /// Raw-sum → target scale (1 for 0D).
    pub scale: f64,
    pub samples: Samples,
}

impl Dataset {
    pub fn dimensionality(&self) -> Dimensionality {
        match self.samples {
            Samples::Line(_) => Dimensionality::D0,
            Samples::Image(_) => Dimensionality::D2,
        }
    }

    pub fn len(&self) -> usize {
        match &self.samples {
            Samples::Line(s) => s.len(),
            Samples::Image(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Short tag naming the dataset, e.g. `0d_output_low/test seed=3`.
    pub fn identity(&self) -> String {
        format!(
            "{}_{}_{}/{} seed={}",
            self.dimensionality(),
            self.noise.injection,
            self.noise.level,
            self.split,
            self.seed
        )
    }

    /// Width of one model input row.
    pub fn input_width(&self) -> usize {
        match self.dimensionality() {
            Dimensionality::D0 => 2,
            Dimensionality::D2 => IMAGE_PIXELS,
        }
    }

    /// Model inputs, one row per sample: `(m, x)` or the flattened image,
    /// using the noisy input when noise was injected on the input.
    pub fn inputs(&self) -> Array2<f64> {
        let width = self.input_width();
        let mut out = Vec::with_capacity(self.len() * width);
        match &self.samples {
            Samples::Line(s) => {
                for p in s {
                    out.push(p.m);
                    out.push(p.x_noisy.unwrap_or(p.x));
                }
            }
            Samples::Image(s) => {
                for p in s {
                    out.extend_from_slice(p.pixels_noisy.as_deref().unwrap_or(&p.pixels));
                }
            }
        }
        Array2::from_shape_vec((self.len(), width), out).expect("row width is fixed")
    }

    /// The labels a model is trained on: noisy targets under output
    /// injection, clean targets under input injection.
    pub fn targets(&self) -> Vec<f64> {
        match &self.samples {
            Samples::Line(s) => s.iter().map(|p| p.y_noisy.unwrap_or(p.y)).collect(),
            Samples::Image(s) => s.iter().map(|p| p.y_noisy.unwrap_or(p.y)).collect(),
        }
    }

    pub fn clean_targets(&self) -> Vec<f64> {
        match &self.samples {
            Samples::Line(s) => s.iter().map(|p| p.y).collect(),
            Samples::Image(s) => s.iter().map(|p| p.y).collect(),
        }
    }

    /// Per-sample residual that carries the injected noise, expressed in
    /// target units after propagation: `y_noisy − y`, `m x_noisy − y`, or
    /// `Σ pixels_noisy − Σ pixels`.
    pub fn propagated_residuals(&self) -> Vec<f64> {
        match &self.samples {
            Samples::Line(s) => s
                .iter()
                .map(|p| match (p.y_noisy, p.x_noisy) {
                    (Some(yn), _) => yn - p.y,
                    (None, Some(xn)) => p.m * xn - p.y,
                    (None, None) => 0.0,
                })
                .collect(),
            Samples::Image(s) => s
                .iter()
                .map(|p| match (p.y_noisy, &p.pixels_noisy) {
                    (Some(yn), _) => yn - p.y,
                    (None, Some(noisy)) => {
                        noisy.iter().sum::<f64>() - p.pixels.iter().sum::<f64>()
                    }
                    (None, None) => 0.0,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSplits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl DataSplits {
    pub fn get(&self, split: Split) -> &Dataset {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn sizes(&self) -> SplitSizes {
        SplitSizes::new(self.train.len(), self.val.len(), self.test.len())
    }
}

/// Generates either family.
pub fn generate(
    dim: Dimensionality,
    noise: NoiseSpec,
    seed: u64,
    sizes: SplitSizes,
    opts: &GenerateOptions,
) -> Result<DataSplits> {
    match dim {
        Dimensionality::D0 => generate_0d(noise, seed, sizes, opts),
        Dimensionality::D2 => generate_2d(noise, seed, sizes, opts),
    }
}
