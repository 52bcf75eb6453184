//! On-disk dataset layout.
//!
//! ```text
//! <dir>/header.txt        key=value lines
//! <dir>/<split>.bin       rows of little-endian f64
//! <dir>/<split>.params.bin  (2D only) radius, amplitude, angle per row
//! ```
//!
//! Row layout for 0D is `m, x, [x_noisy], y, [y_noisy]`; for 2D it is the
//! 1024 clean pixels, `[1024 noisy pixels]`, `y`, `[y_noisy]`. Bracketed
//! columns are present only for the matching injection.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{
    DataSplits, Dataset, Dimensionality, ImageSample, Injection, NoiseLevel, NoiseSpec, Sample0D,
    Samples, SersicParams, Split, IMAGE_PIXELS,
};
use crate::error::{Error, Result};

const FORMAT_TAG: &str = "uqbench-dataset-v1";

pub(crate) fn write_f64s(buf: &mut Vec<u8>, values: impl IntoIterator<Item = f64>) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn read_f64s(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::format(format!("{} bytes is not a whole number of f64", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub(crate) fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(format!("line {}: expected key=value, got '{line}'", n + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn field<'a>(map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    map.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::format(format!("header is missing '{key}'")))
}

fn parse_field<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = field(map, key)?;
    raw.parse()
        .map_err(|_| Error::format(format!("header field {key}='{raw}' does not parse")))
}

pub fn save_splits(dir: &Path, splits: &DataSplits) -> Result<()> {
    fs::create_dir_all(dir)?;
    let train = &splits.train;
    let header = format!(
        "format={FORMAT_TAG}\ndimensionality={}\ninjection={}\nlevel={}\nsigma_y={}\nseed={}\nn_train={}\nn_val={}\nn_test={}\nscale={}\n",
        train.dimensionality(),
        train.noise.injection,
        train.noise.level,
        train.noise.sigma_y,
        train.seed,
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        train.scale,
    );
    fs::write(dir.join("header.txt"), header)?;

    for split in Split::ALL {
        let ds = splits.get(split);
        let mut rows = Vec::new();
        let mut params = Vec::new();
        match &ds.samples {
            Samples::Line(samples) => {
                for s in samples {
                    write_f64s(&mut rows, [s.m, s.x]);
                    write_f64s(&mut rows, s.x_noisy);
                    write_f64s(&mut rows, [s.y]);
                    write_f64s(&mut rows, s.y_noisy);
                }
            }
            Samples::Image(samples) => {
                for s in samples {
                    write_f64s(&mut rows, s.pixels.iter().copied());
                    if let Some(noisy) = &s.pixels_noisy {
                        write_f64s(&mut rows, noisy.iter().copied());
                    }
                    write_f64s(&mut rows, [s.y]);
                    write_f64s(&mut rows, s.y_noisy);
                    write_f64s(&mut params, [s.params.radius, s.params.amplitude, s.params.angle]);
                }
                fs::write(dir.join(format!("{split}.params.bin")), &params)?;
            }
        }
        fs::write(dir.join(format!("{split}.bin")), &rows)?;
    }
    Ok(())
}

pub fn load_splits(dir: &Path) -> Result<DataSplits> {
    let header = parse_key_values(&fs::read_to_string(dir.join("header.txt"))?)?;
    if field(&header, "format")? != FORMAT_TAG {
        return Err(Error::format("not a uqbench dataset header"));
    }
    let dim: Dimensionality = field(&header, "dimensionality")?.parse()?;
    let injection: Injection = field(&header, "injection")?.parse()?;
    let level: NoiseLevel = field(&header, "level")?.parse()?;
    let noise = NoiseSpec::with_sigma(injection, level, parse_field(&header, "sigma_y")?)?;
    let seed: u64 = parse_field(&header, "seed")?;
    let scale: f64 = parse_field(&header, "scale")?;

    let load = |split: Split| -> Result<Dataset> {
        let n: usize = parse_field(&header, &format!("n_{split}"))?;
        let values = read_f64s(&fs::read(dir.join(format!("{split}.bin")))?)?;
        let samples = match dim {
            Dimensionality::D0 => Samples::Line(decode_lines(&values, n, injection)?),
            Dimensionality::D2 => {
                let params = read_f64s(&fs::read(dir.join(format!("{split}.params.bin")))?)?;
                Samples::Image(decode_images(&values, &params, n, injection)?)
            }
        };
        Ok(Dataset {
            split,
            noise,
            seed,
            scale,
            samples,
        })
    };
    Ok(DataSplits {
        train: load(Split::Train)?,
        val: load(Split::Val)?,
        test: load(Split::Test)?,
    })
}

fn check_len(values: &[f64], rows: usize, width: usize) -> Result<()> {
    if values.len() != rows * width {
        return Err(Error::format(format!(
            "expected {rows} rows of {width} values, found {} values",
            values.len()
        )));
    }
    Ok(())
}

fn decode_lines(values: &[f64], n: usize, injection: Injection) -> Result<Vec<Sample0D>> {
    check_len(values, n, 4)?;
    Ok(values
        .chunks_exact(4)
        .map(|r| match injection {
            Injection::Input => Sample0D {
                m: r[0],
                x: r[1],
                x_noisy: Some(r[2]),
                y: r[3],
                y_noisy: None,
            },
            Injection::Output => Sample0D {
                m: r[0],
                x: r[1],
                x_noisy: None,
                y: r[2],
                y_noisy: Some(r[3]),
            },
        })
        .collect())
}

fn decode_images(
    values: &[f64],
    params: &[f64],
    n: usize,
    injection: Injection,
) -> Result<Vec<ImageSample>> {
    let width = match injection {
        Injection::Input => 2 * IMAGE_PIXELS + 1,
        Injection::Output => IMAGE_PIXELS + 2,
    };
    check_len(values, n, width)?;
    check_len(params, n, 3)?;
    Ok(values
        .chunks_exact(width)
        .zip(params.chunks_exact(3))
        .map(|(r, p)| {
            let pixels = r[..IMAGE_PIXELS].to_vec();
            let params = SersicParams {
                radius: p[0],
                amplitude: p[1],
                angle: p[2],
            };
            match injection {
                Injection::Input => ImageSample {
                    pixels,
                    pixels_noisy: Some(r[IMAGE_PIXELS..2 * IMAGE_PIXELS].to_vec()),
                    params,
                    y: r[2 * IMAGE_PIXELS],
                    y_noisy: None,
                },
                Injection::Output => ImageSample {
                    pixels,
                    pixels_noisy: None,
                    params,
                    y: r[IMAGE_PIXELS],
                    y_noisy: Some(r[IMAGE_PIXELS + 1]),
                },
            }
        })
        .collect())
}
