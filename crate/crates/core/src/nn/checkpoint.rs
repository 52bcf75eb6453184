//! Checkpoints: a text header terminated by a blank line, then the
//! parameters as little-endian f64.
//!
//! ```text
//! format=uqbench-checkpoint-v1
//! spec_hash=<sha256 of the canonical spec description>
//! layers=<canonical spec description>
//! param_count=<n>
//! seed=<init seed>
//!
//! <n × 8 bytes>
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::network::Network;
use super::params::ParamStore;
use crate::data::{parse_key_values, read_f64s, write_f64s};
use crate::error::{Error, Result};

const FORMAT_TAG: &str = "uqbench-checkpoint-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub seed: u64,
}

fn spec_hash(network: &Network) -> String {
    let digest = Sha256::digest(network.spec().describe().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_checkpoint(path: &Path, network: &Network, params: &ParamStore, seed: u64) -> Result<()> {
    if params.len() != network.param_count() {
        return Err(Error::Shape(format!(
            "{} parameters for a network of {}",
            params.len(),
            network.param_count()
        )));
    }
    let mut bytes = format!(
        "format={FORMAT_TAG}\nspec_hash={}\nlayers={}\nparam_count={}\nseed={seed}\n\n",
        spec_hash(network),
        network.spec().describe(),
        params.len(),
    )
    .into_bytes();
    write_f64s(&mut bytes, params.values.iter().copied());
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path, network: &Network) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let split = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::format("checkpoint header is not terminated"))?;
    let header = std::str::from_utf8(&bytes[..split])
        .map_err(|_| Error::format("checkpoint header is not UTF-8"))?;
    let fields = parse_key_values(header)?;
    let get = |k: &str| {
        fields
            .get(k)
            .cloned()
            .ok_or_else(|| Error::format(format!("checkpoint header is missing '{k}'")))
    };
    if get("format")? != FORMAT_TAG {
        return Err(Error::format("not a uqbench checkpoint"));
    }
    if get("spec_hash")? != spec_hash(network) {
        return Err(Error::format(format!(
            "checkpoint was written for '{}', not '{}'",
            get("layers")?,
            network.spec().describe()
        )));
    }
    let seed = get("seed")?
        .parse()
        .map_err(|_| Error::format("checkpoint seed does not parse"))?;
    let values = read_f64s(&bytes[split + 2..])?;
    let declared: usize = get("param_count")?
        .parse()
        .map_err(|_| Error::format("checkpoint param_count does not parse"))?;
    if values.len() != declared {
        return Err(Error::format(format!(
            "header declares {declared} parameters, payload has {}",
            values.len()
        )));
    }
    let mut params = network.zero_params();
    params.set_values(values)?;
    Ok(Checkpoint { params, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_mlp_0d, mve_heads, nig_heads};

    #[test]
    fn round_trip_and_spec_mismatch() {
        let net = Network::new(build_mlp_0d(mve_heads())).unwrap();
        let params = net.init_params(17);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        write_checkpoint(&path, &net, &params, 17).unwrap();
        let ck = read_checkpoint(&path, &net).unwrap();
        assert_eq!(ck.params.values, params.values);
        assert_eq!(ck.seed, 17);

        let other = Network::new(build_mlp_0d(nig_heads())).unwrap();
        assert!(matches!(read_checkpoint(&path, &other), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload() {
        let net = Network::new(build_mlp_0d(mve_heads())).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        write_checkpoint(&path, &net, &net.init_params(1), 1).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 8);
        fs::write(&path, bytes).unwrap();
        assert!(read_checkpoint(&path, &net).is_err());
    }
}
