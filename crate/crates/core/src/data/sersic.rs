//! Elliptical Sérsic profiles rendered on a 32×32 pixel grid.
//!
//! `I(z) = A exp(−b_n (z^{1/n} − 1))` with `n = 1`, where `z` is the
//! elliptical radius in units of the effective radius. The image spans the
//! unit square centred on the origin and is sampled at pixel centres.

use super::image::{IMAGE_PIXELS, IMAGE_SIDE};
use crate::error::{Error, Result};

/// `b_n` for `n = 1`: solves `γ(2, b) = Γ(2) / 2`.
pub const SERSIC_B1: f64 = 1.678_346_990_016_661;
/// `1 − b/a` of the isophotes.
pub const ELLIPTICITY: f64 = 0.5;

pub const RADIUS_RANGE: (f64, f64) = (0.0, 0.01);
pub const AMPLITUDE_RANGE: (f64, f64) = (1.0, 10.0);
pub const ANGLE_RANGE: (f64, f64) = (-1.5, 1.5);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SersicParams {
    /// Effective radius in image units (the image is one unit across).
    pub radius: f64,
    pub amplitude: f64,
    /// Position angle of the major axis in radians.
    pub angle: f64,
}

fn check(name: &str, v: f64, (lo, hi): (f64, f64)) -> Result<()> {
    if v.is_finite() && (lo..=hi).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} {v} outside [{lo}, {hi}]")))
    }
}

impl SersicParams {
    pub fn new(radius: f64, amplitude: f64, angle: f64) -> Result<Self> {
        check("radius", radius, RADIUS_RANGE)?;
        check("amplitude", amplitude, AMPLITUDE_RANGE)?;
        check("angle", angle, ANGLE_RANGE)?;
        Ok(Self {
            radius,
            amplitude,
            angle,
        })
    }
}

/// Renders the profile without range checks on the angle, so symmetry
/// checks can rotate past ±1.5.
pub(crate) fn render_unchecked(params: &SersicParams) -> Vec<f64> {
    let mut img = vec![0.0; IMAGE_PIXELS];
    let a = params.radius;
    if a <= 0.0 {
        // all flux at the centre, which no pixel centre samples
        return img;
    }
    let b = a * (1.0 - ELLIPTICITY);
    let (sin, cos) = params.angle.sin_cos();
    let pixel = 1.0 / IMAGE_SIDE as f64;
    for row in 0..IMAGE_SIDE {
        let v = (row as f64 + 0.5) * pixel - 0.5;
        for col in 0..IMAGE_SIDE {
            let u = (col as f64 + 0.5) * pixel - 0.5;
            let major = u * cos + v * sin;
            let minor = -u * sin + v * cos;
            let z = ((major / a).powi(2) + (minor / b).powi(2)).sqrt();
            img[row * IMAGE_SIDE + col] = params.amplitude * (-SERSIC_B1 * (z - 1.0)).exp();
        }
    }
    img
}

/// Renders `params` as a row-major 32×32 grid of non-negative intensities.
pub fn render_sersic(params: &SersicParams) -> Result<Vec<f64>> {
    SersicParams::new(params.radius, params.amplitude, params.angle)?;
    Ok(render_unchecked(params))
}
