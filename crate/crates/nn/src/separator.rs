//! Waveform-domain two-source separators used by the cascade baselines.

use candle_core::{Tensor, D};
use codesep_core::signal::Waveform;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::TensorMdct;
use crate::error::{config, invalid, Result};
use crate::layers::{sigmoid, LayerNorm, Linear, ResidualConvBlock};
use crate::params::{tensor_from, Init, ParamStore};

pub trait Separator {
    /// `y → (x̂1, x̂2)`, both with the length and rate of `y`.
    fn separate(&self, y: &Waveform) -> Result<[Waveform; 2]>;
}

/// Returns the stored references; for exercising the cascade plumbing.
#[derive(Debug, Clone)]
pub struct OracleSeparator {
    sources: [Waveform; 2],
}

impl OracleSeparator {
    pub fn new(x1: Waveform, x2: Waveform) -> Self {
        Self { sources: [x1, x2] }
    }
}

impl Separator for OracleSeparator {
    fn separate(&self, y: &Waveform) -> Result<[Waveform; 2]> {
        for s in &self.sources {
            if s.sample_rate_hz() != y.sample_rate_hz() {
                return invalid("oracle sources and mixture differ in rate");
            }
        }
        Ok([self.sources[0].with_len(y.len()), self.sources[1].with_len(y.len())])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSeparatorConfig {
    pub sample_rate_hz: u32,
    pub mdct_frame_length: usize,
    pub width: usize,
    pub depth: usize,
    pub kernel: usize,
}

impl MaskSeparatorConfig {
    pub fn desk() -> Self {
        Self { sample_rate_hz: 8000, mdct_frame_length: 160, width: 128, depth: 4, kernel: 5 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate_hz == 0 || self.width == 0 || self.kernel == 0 {
            return config("rate, width and kernel must be positive");
        }
        if self.mdct_frame_length < 4 || self.mdct_frame_length % 2 != 0 {
            return config("MDCT frame length must be even and at least 4");
        }
        Ok(())
    }
}

/// Predicts two sigmoid masks over the mixture's MDCT coefficients from
/// log-magnitude features.
#[derive(Debug, Clone)]
pub struct MaskSeparator {
    config: MaskSeparatorConfig,
    params: ParamStore,
    mdct: TensorMdct,
    input: Linear,
    input_norm: LayerNorm,
    blocks: Vec<ResidualConvBlock>,
    output: Linear,
}

impl MaskSeparator {
    pub fn new(config: MaskSeparatorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mdct = TensorMdct::new(config.mdct_frame_length)?;
        let bins = mdct.hop();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let (input, input_norm, blocks, output) = {
            let mut root = params.init(&mut rng);
            let mut init: Init = root.sub("separator");
            (
                init.linear("input", bins, config.width)?,
                init.layer_norm("input_norm", config.width)?,
                (0..config.depth)
                    .map(|i| ResidualConvBlock::new(&mut init, &format!("block{i}"), config.width, config.kernel, 2))
                    .collect::<Result<Vec<_>>>()?,
                init.linear("output", config.width, 2 * bins)?,
            )
        };
        Ok(Self { config, params, mdct, input, input_norm, blocks, output })
    }

    pub fn config(&self) -> &MaskSeparatorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// `(B, n)` mixtures → two `(B, T, hop)` coefficient estimates plus the
    /// mixture coefficients.
    fn estimate(&self, y: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let coeffs = self.mdct.forward(y)?;
        let feats = (coeffs.abs()? + 1e-4)?.log()?;
        let mut h = self.input_norm.forward(&self.input.forward(&feats)?)?;
        for b in &self.blocks {
            h = b.forward(&h)?;
        }
        let masks = sigmoid(&self.output.forward(&h)?)?;
        let bins = self.mdct.hop();
        let m1 = masks.narrow(D::Minus1, 0, bins)?;
        let m2 = masks.narrow(D::Minus1, bins, bins)?;
        Ok(((&coeffs * m1)?, (&coeffs * m2)?, coeffs))
    }

    /// Utterance-level permutation-invariant MSE on MDCT coefficients,
    /// normalized by reference energy; `y`, `x1`, `x2` are `(B, n)`.
    pub fn training_loss(&self, y: &Tensor, x1: &Tensor, x2: &Tensor) -> Result<Tensor> {
        let (e1, e2, _) = self.estimate(y)?;
        let r1 = self.mdct.forward(x1)?;
        let r2 = self.mdct.forward(x2)?;
        let err = |a: &Tensor, b: &Tensor| -> Result<Tensor> { Ok((a - b)?.sqr()?.mean((1, 2))?) };
        let direct = (err(&e1, &r1)? + err(&e2, &r2)?)?;
        let swapped = (err(&e1, &r2)? + err(&e2, &r1)?)?;
        let energy = ((r1.sqr()?.mean((1, 2))? + r2.sqr()?.mean((1, 2))?)? + 1e-8)?;
        Ok(direct.minimum(&swapped)?.div(&energy)?.mean_all()?)
    }
}

impl Separator for MaskSeparator {
    fn separate(&self, y: &Waveform) -> Result<[Waveform; 2]> {
        if y.sample_rate_hz() != self.config.sample_rate_hz {
            return invalid(format!(
                "waveform rate {} Hz, separator expects {} Hz",
                y.sample_rate_hz(),
                self.config.sample_rate_hz
            ));
        }
        if y.is_empty() {
            return Ok([y.clone(), y.clone()]);
        }
        let n = y.len();
        let x = tensor_from(y.samples().to_vec(), &[1, n])?;
        let (e1, e2, _) = self.estimate(&x)?;
        let out = |e: &Tensor| -> Result<Waveform> {
            let s = self.mdct.inverse(e)?.narrow(1, 0, n)?.flatten_all()?.to_vec1::<f64>()?;
            Ok(Waveform::new(s, y.sample_rate_hz())?)
        };
        Ok([out(&e1)?, out(&e2)?])
    }
}
