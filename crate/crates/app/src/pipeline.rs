//! JSAC inference and the cascade baselines.

use codesep_core::bitstream::{bitrate_of, Bitrate, BitstreamHeader, TokenBitstream};
use codesep_core::rvq::ResidualQuantizer;
use codesep_core::signal::Waveform;
use codesep_nn::atsp::AtspModel;
use codesep_nn::btd::BtdModel;
use codesep_nn::codec::CodecModel;
use codesep_nn::separator::Separator;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Jsac,
    Fcts,
    Fstc,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Jsac => "jsac",
            Mode::Fcts => "fcts",
            Mode::Fstc => "fstc",
        }
    }
}

/// Frozen codec, BTD and ATSP models assembled for joint coding.
pub struct Jsac {
    codec: CodecModel,
    btd: BtdModel,
    atsp: AtspModel,
    quantizer: ResidualQuantizer,
}

impl Jsac {
    pub fn new(codec: CodecModel, btd: BtdModel, atsp: AtspModel) -> Result<Self> {
        let c = codec.config();
        let (b, a) = (btd.config(), atsp.config());
        if b.sample_rate_hz != c.sample_rate_hz || b.token_hop() != c.hop() || b.codebook_size != c.codebook_size {
            return config("BTD and codec disagree on rate, token hop or codebook size");
        }
        if a.stages != c.stages || a.codebook_size != c.codebook_size || a.latent_dim != c.latent_dim {
            return config("ATSP and codec disagree on stages, codebook size or latent dim");
        }
        let quantizer = codec.quantizer()?;
        Ok(Self { codec, btd, atsp, quantizer })
    }

    pub fn codec(&self) -> &CodecModel {
        &self.codec
    }

    fn header(&self, frames: usize) -> Result<BitstreamHeader> {
        let c = self.codec.config();
        Ok(BitstreamHeader {
            sample_rate_hz: c.sample_rate_hz,
            token_rate: c.token_rate()?,
            num_streams: 2,
            codebook_size: c.codebook_size as u32,
            num_frames: frames as u32,
        })
    }

    /// Transmitted rate: base tokens only, independent of the stage count.
    pub fn bitrate(&self) -> Result<Bitrate> {
        let c = self.codec.config();
        Ok(bitrate_of(c.token_rate()?, c.codebook_size as u32, 2, 1))
    }

    /// Mixture → two base-token streams.
    pub fn encode(&self, y: &Waveform) -> Result<TokenBitstream> {
        let rate = self.codec.config().sample_rate_hz;
        if y.sample_rate_hz() != rate {
            return config(format!("mixture is {} Hz, models expect {rate} Hz", y.sample_rate_hz()));
        }
        let (d1, d2) = self.btd.disentangle(&self.btd.analyze(y)?)?;
        Ok(TokenBitstream::new(self.header(d1.len())?, vec![d1, d2])?)
    }

    /// Base-token streams → two waveforms of `(T - 1) · hop` samples.
    pub fn decode(&self, bs: &TokenBitstream) -> Result<[Waveform; 2]> {
        let expected = self.header(bs.header.num_frames as usize)?;
        if bs.header != expected {
            return config(format!("bitstream header {:?} does not match the loaded models {expected:?}", bs.header));
        }
        let n = self.codec.config().stages;
        let mut out = Vec::with_capacity(2);
        for base in &bs.tokens {
            let frames = self.atsp.complete(base, &self.quantizer)?;
            let wave = if frames.is_empty() {
                Waveform::zeros(0, expected.sample_rate_hz)?
            } else {
                self.codec.decode_embeddings(&self.codec.dequantize(&frames, n)?)?
            };
            out.push(wave);
        }
        let b = out.pop().expect("two streams");
        let a = out.pop().expect("two streams");
        Ok([a, b])
    }

    pub fn separate(&self, y: &Waveform) -> Result<[Waveform; 2]> {
        let [a, b] = self.decode(&self.encode(y)?)?;
        Ok([a.with_len(y.len()), b.with_len(y.len())])
    }
}

/// Stage count whose rate is closest to `target_bps` (ties to fewer stages),
/// with the exact rate it gives.
pub fn plan_stages(target_bps: f64, codec: &CodecModel, streams: u32) -> Result<(usize, Bitrate)> {
    if !(target_bps > 0.0) {
        return config("baseline bitrate must be positive");
    }
    let c = codec.config();
    let rate = c.token_rate()?;
    let rates: Vec<Bitrate> =
        (1..=c.stages).map(|s| bitrate_of(rate, c.codebook_size as u32, streams, s as u32)).collect();
    let step = rates[0].total_bps;
    let (lo, hi) = (rates[0].total_bps - step / 2.0, rates[c.stages - 1].total_bps + step / 2.0);
    if target_bps < lo || target_bps > hi {
        return config(format!(
            "{target_bps} bps is unreachable: {streams} stream(s) span {:.0}..{:.0} bps",
            rates[0].total_bps,
            rates[c.stages - 1].total_bps
        ));
    }
    let best = (0..c.stages)
        .min_by(|&a, &b| {
            let da = (rates[a].total_bps - target_bps).abs();
            let db = (rates[b].total_bps - target_bps).abs();
            da.total_cmp(&db)
        })
        .expect("at least one stage");
    Ok((best + 1, rates[best]))
}

/// Compress the mixture with `stages` RVQ stages, then separate.
pub fn fcts(y: &Waveform, stages: usize, codec: &CodecModel, separator: &dyn Separator) -> Result<[Waveform; 2]> {
    let coded = codec.reconstruct(y, stages)?.with_len(y.len());
    Ok(separator.separate(&coded)?)
}

/// Separate, then compress each source with `stages` RVQ stages.
pub fn fstc(y: &Waveform, stages: usize, codec: &CodecModel, separator: &dyn Separator) -> Result<[Waveform; 2]> {
    let [a, b] = separator.separate(y)?;
    Ok([
        codec.reconstruct(&a, stages)?.with_len(y.len()),
        codec.reconstruct(&b, stages)?.with_len(y.len()),
    ])
}
