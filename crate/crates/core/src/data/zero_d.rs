use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{
    DataSplits, Dataset, Dimensionality, GenerateOptions, Injection, NoiseSpec, Sample0D, Samples,
    Split, SplitSizes, TARGET_MAX,
};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, DATA_NOISE, DATA_SAMPLES};

/// Upper end of the abscissa grid.
const X_MAX: f64 = 10.0;
/// Slopes below this magnitude are redrawn under input injection.
const MIN_SLOPE: f64 = 1e-6;

/// Lines `y = m x` with `y ~ U[0, 2]` and `x` from a linear grid on
/// `[x_min, 10]`; `m = y / x`.
pub fn generate_0d(
    noise: NoiseSpec,
    seed: u64,
    sizes: SplitSizes,
    opts: &GenerateOptions,
) -> Result<DataSplits> {
    opts.check_sizes(Dimensionality::D0, sizes)?;
    if !(opts.x_min > 0.0 && opts.x_min < X_MAX) {
        return Err(Error::invalid(format!(
            "x_min must lie in (0, {X_MAX}), got {}",
            opts.x_min
        )));
    }
    if opts.grid_points < 2 {
        return Err(Error::invalid("the abscissa grid needs at least two points"));
    }
    let split = |s: Split| Dataset {
        split: s,
        noise,
        seed,
        scale: 1.0,
        samples: Samples::Line(split_samples(noise, seed, s, sizes.get(s), opts)),
    };
    Ok(DataSplits {
        train: split(Split::Train),
        val: split(Split::Val),
        test: split(Split::Test),
    })
}

fn split_samples(
    noise: NoiseSpec,
    seed: u64,
    split: Split,
    n: usize,
    opts: &GenerateOptions,
) -> Vec<Sample0D> {
    let mut rng = stream_rng(seed, DATA_SAMPLES + split.index());
    let mut noise_rng = stream_rng(seed, DATA_NOISE + split.index());
    let step = (X_MAX - opts.x_min) / (opts.grid_points - 1) as f64;

    (0..n)
        .map(|_| {
            let (m, x, y) = loop {
                let y = TARGET_MAX * rng.random::<f64>();
                let x = opts.x_min + step * rng.random_range(0..opts.grid_points) as f64;
                let m = y / x;
                if noise.injection == Injection::Output || m.abs() >= MIN_SLOPE {
                    break (m, x, y);
                }
            };
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            match noise.injection {
                Injection::Output => Sample0D {
                    m,
                    x,
                    y,
                    x_noisy: None,
                    y_noisy: Some(y + noise.sigma_y * z),
                },
                Injection::Input => {
                    // |m| σ_x = σ_y
                    let sigma_x = noise.sigma_y / m.abs();
                    Sample0D {
                        m,
                        x,
                        y,
                        x_noisy: Some(x + sigma_x * z),
                        y_noisy: None,
                    }
                }
            }
        })
        .collect()
}
