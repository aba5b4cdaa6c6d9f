use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::RunConfig;

pub const TOOL: &str = "wavestyle";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub network: u64,
    pub init: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
    pub sample_rate: u32,
    pub samples: usize,
}

/// Everything needed to rerun a job: `wavestyle --config manifest.json`
/// reproduces `out.wav` byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub seeds: Seeds,
    pub inputs: Vec<InputDigest>,
    pub stage_seconds: BTreeMap<String, f64>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(config: RunConfig) -> Self {
        RunManifest {
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: Seeds {
                network: config.seed,
                init: config.seed,
            },
            config,
            inputs: Vec::new(),
            stage_seconds: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest is plain data")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::args::parse_args;

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let config = parse_args(["wavestyle", "--content", "a.wav", "--style", "b.wav", "--lr", "0.0031"]).unwrap();
        let mut m = RunManifest::new(config);
        m.stage_seconds.insert("stylizer".into(), 0.1 + 0.2);
        m.inputs.push(InputDigest {
            role: "content".into(),
            path: "a.wav".into(),
            sha256: sha256_hex(b"abc"),
            sample_rate: 8000,
            samples: 12,
        });
        m.outputs.push("out.wav".into());
        assert_eq!(RunManifest::from_json(&m.to_json()).unwrap(), m);
    }
}
