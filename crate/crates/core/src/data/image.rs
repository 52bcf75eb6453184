//! 2D Sérsic-image datasets, uniform in summed flux.
//!
//! Parameters are drawn uniformly from their ranges and then thinned by
//! rejection so that the raw pixel sums become flat: a pilot sample fixes an
//! upper flux cap and a histogram of raw sums below it, and each candidate
//! is kept with probability `min_count / count(bin)`. A single scale then
//! maps raw sums of all three splits into `[0, 2]`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::sersic::{render_unchecked, SersicParams, AMPLITUDE_RANGE, ANGLE_RANGE, RADIUS_RANGE};
use super::{
    DataSplits, Dataset, Dimensionality, GenerateOptions, ImageSample, Injection, NoiseSpec,
    Samples, Split, SplitSizes, TARGET_MAX,
};
use crate::error::{Error, Result};
use crate::propagate::propagate_image_sum;
use crate::rng::{stream_rng, DATA_NOISE, DATA_PILOT, DATA_SAMPLES};

pub const IMAGE_SIDE: usize = 32;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

const PILOT_DRAWS: usize = 20_000;
/// Raw sums above this pilot quantile are always rejected.
const CAP_QUANTILE: f64 = 0.95;
const ENVELOPE_BINS: usize = 40;

/// Maps raw sums onto `[0, 2]` with one scale so the largest becomes 2.
pub fn finalize_targets(raw_sums: &[f64]) -> Result<(f64, Vec<f64>)> {
    if raw_sums.is_empty() {
        return Err(Error::Degenerate("no raw sums".into()));
    }
    if let Some(s) = raw_sums.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::invalid(format!("raw sums must be finite and >= 0, got {s}")));
    }
    let max = raw_sums.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::Degenerate("all raw sums are zero".into()));
    }
    let scale = TARGET_MAX / max;
    // dividing first keeps the largest target at exactly 2
    let targets = raw_sums.iter().map(|s| TARGET_MAX * (s / max)).collect();
    Ok((scale, targets))
}

/// Applies a given scale, refusing one that pushes a target above 2.
pub fn scale_targets(raw_sums: &[f64], scale: f64) -> Result<Vec<f64>> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::invalid(format!("scale must be positive, got {scale}")));
    }
    let targets: Vec<f64> = raw_sums.iter().map(|s| s * scale).collect();
    match targets.iter().find(|t| **t > TARGET_MAX) {
        Some(t) => Err(Error::invalid(format!(
            "scale {scale} maps a raw sum to {t} > {TARGET_MAX}"
        ))),
        None => Ok(targets),
    }
}

fn draw_params<R: Rng>(rng: &mut R) -> SersicParams {
    let mut uniform = |(lo, hi): (f64, f64)| lo + (hi - lo) * rng.random::<f64>();
    SersicParams {
        radius: uniform(RADIUS_RANGE),
        amplitude: uniform(AMPLITUDE_RANGE),
        angle: uniform(ANGLE_RANGE),
    }
}

fn raw_sum(params: &SersicParams) -> f64 {
    render_unchecked(params).iter().sum()
}

/// Accept/reject envelope that flattens the raw-sum distribution.
#[derive(Debug, Clone)]
struct FluxEnvelope {
    cap: f64,
    accept: Vec<f64>,
}

impl FluxEnvelope {
    fn from_pilot(seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, DATA_PILOT);
        let mut sums: Vec<f64> = (0..PILOT_DRAWS).map(|_| raw_sum(&draw_params(&mut rng))).collect();
        sums.sort_by(f64::total_cmp);
        let cap = sums[((PILOT_DRAWS as f64) * CAP_QUANTILE) as usize];
        if cap <= 0.0 {
            return Err(Error::Degenerate("pilot raw sums are all zero".into()));
        }
        let mut counts = vec![0usize; ENVELOPE_BINS];
        for s in sums.iter().take_while(|s| **s <= cap) {
            counts[Self::bin_of(*s, cap)] += 1;
        }
        let min = counts.iter().copied().filter(|c| *c > 0).min().unwrap_or(1) as f64;
        let accept = counts
            .iter()
            .map(|&c| if c == 0 { 1.0 } else { min / c as f64 })
            .collect();
        Ok(Self { cap, accept })
    }

    fn bin_of(s: f64, cap: f64) -> usize {
        (((s / cap) * ENVELOPE_BINS as f64) as usize).min(ENVELOPE_BINS - 1)
    }

    fn keeps<R: Rng>(&self, s: f64, rng: &mut R) -> bool {
        s <= self.cap && rng.random::<f64>() < self.accept[Self::bin_of(s, self.cap)]
    }
}

struct RawImage {
    params: SersicParams,
    pixels: Vec<f64>,
    sum: f64,
}

fn raw_split(envelope: &FluxEnvelope, seed: u64, split: Split, n: usize) -> Vec<RawImage> {
    let mut rng = stream_rng(seed, DATA_SAMPLES + split.index());
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let params = draw_params(&mut rng);
        let pixels = render_unchecked(&params);
        let sum = pixels.iter().sum();
        if envelope.keeps(sum, &mut rng) {
            out.push(RawImage { params, pixels, sum });
        }
    }
    out
}

/// Sérsic images whose summed flux is uniform on `[0, 2]`.
///
/// Input noise is added per pixel after rescaling, with
/// `σ_x = σ_y / sqrt(1024)`, so the summed target inherits exactly `σ_y`.
pub fn generate_2d(
    noise: NoiseSpec,
    seed: u64,
    sizes: SplitSizes,
    opts: &GenerateOptions,
) -> Result<DataSplits> {
    opts.check_sizes(Dimensionality::D2, sizes)?;
    let envelope = FluxEnvelope::from_pilot(seed)?;
    let raw: Vec<Vec<RawImage>> = Split::ALL
        .iter()
        .map(|&s| raw_split(&envelope, seed, s, sizes.get(s)))
        .collect();

    let all_sums: Vec<f64> = raw.iter().flatten().map(|r| r.sum).collect();
    let (scale, targets) = finalize_targets(&all_sums)?;
    let sigma_x = noise.sigma_y / propagate_image_sum(1.0, IMAGE_PIXELS);

    let mut targets = targets.into_iter();
    let mut datasets = raw.into_iter().zip(Split::ALL).map(|(images, split)| {
        let mut noise_rng = stream_rng(seed, DATA_NOISE + split.index());
        let samples = images
            .into_iter()
            .map(|r| {
                let pixels: Vec<f64> = r.pixels.iter().map(|p| p * scale).collect();
                let y = targets.next().expect("one target per image");
                let mut draw = || -> f64 { StandardNormal.sample(&mut noise_rng) };
                let (pixels_noisy, y_noisy) = match noise.injection {
                    Injection::Output => (None, Some(y + noise.sigma_y * draw())),
                    Injection::Input => {
                        (Some(pixels.iter().map(|p| p + sigma_x * draw()).collect()), None)
                    }
                };
                ImageSample {
                    pixels,
                    pixels_noisy,
                    params: r.params,
                    y,
                    y_noisy,
                }
            })
            .collect();
        Dataset {
            split,
            noise,
            seed,
            scale,
            samples: Samples::Image(samples),
        }
    });
    let train = datasets.next().expect("train");
    let val = datasets.next().expect("val");
    let test = datasets.next().expect("test");
    Ok(DataSplits { train, val, test })
}
