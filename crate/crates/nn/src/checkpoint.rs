//! Versioned single-file checkpoint container.
//!
//! Layout: magic `CSCK`, version `u8`, stage tag `u8`, preamble length `u32`
//! LE, JSON preamble, then every parameter's values as `f64` LE. Parameters
//! appear in ascending name order (the order of [`ParamStore::export`]),
//! each flattened row-major with the shape listed in the preamble.

use std::fmt;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamStore;

pub const MAGIC: &[u8; 4] = b"CSCK";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Codec,
    Btd,
    Atsp,
    Separator,
}

impl Stage {
    fn tag(self) -> u8 {
        match self {
            Stage::Codec => 1,
            Stage::Btd => 2,
            Stage::Atsp => 3,
            Stage::Separator => 4,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Stage::Codec),
            2 => Some(Stage::Btd),
            3 => Some(Stage::Atsp),
            4 => Some(Stage::Separator),
            _ => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Codec => "codec",
            Stage::Btd => "btd",
            Stage::Atsp => "atsp",
            Stage::Separator => "separator",
        })
    }
}

/// Position of a ChaCha8 stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// `u128` word position as a decimal string (JSON numbers are f64).
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self { seed: rng.get_seed(), stream: rng.get_stream(), word_pos: rng.get_word_pos().to_string() }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad RNG word position {:?}", self.word_pos)))?;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Preamble {
    config: serde_json::Value,
    step: u64,
    rng: Option<RngState>,
    params: Vec<ParamEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub stage: Stage,
    pub config: serde_json::Value,
    pub step: u64,
    pub rng: Option<RngState>,
    pub params: Vec<(String, Vec<usize>, Vec<f64>)>,
}

impl Checkpoint {
    pub fn capture<C: Serialize>(
        stage: Stage,
        config: &C,
        step: u64,
        rng: Option<&ChaCha8Rng>,
        params: &ParamStore,
    ) -> Result<Self> {
        Ok(Self {
            stage,
            config: serde_json::to_value(config)?,
            step,
            rng: rng.map(RngState::capture),
            params: params.export()?,
        })
    }

    /// Typed config, failing with a stage-tag error when `expected` differs.
    pub fn config_for<C: for<'de> Deserialize<'de>>(&self, expected: Stage) -> Result<C> {
        self.expect_stage(expected)?;
        Ok(serde_json::from_value(self.config.clone())?)
    }

    pub fn expect_stage(&self, expected: Stage) -> Result<()> {
        if self.stage != expected {
            return Err(Error::Checkpoint(format!("expected a {expected} checkpoint, found {}", self.stage)));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let preamble = Preamble {
            config: self.config.clone(),
            step: self.step,
            rng: self.rng.clone(),
            params: self.params.iter().map(|(n, s, _)| ParamEntry { name: n.clone(), shape: s.clone() }).collect(),
        };
        let json = serde_json::to_vec(&preamble)?;
        let values: usize = self.params.iter().map(|(_, _, v)| v.len()).sum();
        let mut out = Vec::with_capacity(10 + json.len() + 8 * values);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.stage.tag());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (name, shape, v) in &self.params {
            if shape.iter().product::<usize>() != v.len() {
                return Err(Error::Checkpoint(format!("parameter {name} does not match its shape")));
            }
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |offset: usize, what: &str| Error::Checkpoint(format!("corrupt checkpoint at byte {offset}: {what}"));
        if bytes.len() < 10 {
            return Err(corrupt(bytes.len(), "truncated header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(corrupt(0, "bad magic"));
        }
        if bytes[4] != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {} (expected {VERSION})", bytes[4])));
        }
        let stage = Stage::from_tag(bytes[5]).ok_or_else(|| corrupt(5, "unknown stage tag"))?;
        let len = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
        let body = 10usize.checked_add(len).filter(|&e| e <= bytes.len()).ok_or_else(|| corrupt(bytes.len(), "truncated preamble"))?;
        let preamble: Preamble = serde_json::from_slice(&bytes[10..body]).map_err(|e| corrupt(10, &e.to_string()))?;
        let mut offset = body;
        let mut params = Vec::with_capacity(preamble.params.len());
        for p in preamble.params {
            let n: usize = p.shape.iter().product();
            let end = n
                .checked_mul(8)
                .and_then(|b| offset.checked_add(b))
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| corrupt(bytes.len(), &format!("truncated values of {}", p.name)))?;
            let values = bytes[offset..end].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            params.push((p.name, p.shape, values));
            offset = end;
        }
        if offset != bytes.len() {
            return Err(corrupt(offset, "trailing bytes"));
        }
        Ok(Self { stage, config: preamble.config, step: preamble.step, rng: preamble.rng, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
