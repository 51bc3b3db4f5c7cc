//! Scoring a pipeline over a set of mixtures.

use codesep_core::bitstream::{bitrate_of, Bitrate};
use codesep_core::metrics::{score_utterance, EvalReport};
use codesep_core::signal::Waveform;
use codesep_nn::codec::CodecModel;
use codesep_nn::separator::Separator;

use crate::data::Mixture;
use crate::error::Result;
use crate::pipeline::{fcts, fstc, Jsac, Mode};

pub enum Backend<'a> {
    Jsac(&'a Jsac),
    Fcts { codec: &'a CodecModel, stages: usize, separator: &'a dyn Separator },
    Fstc { codec: &'a CodecModel, stages: usize, separator: &'a dyn Separator },
}

impl Backend<'_> {
    pub fn mode(&self) -> Mode {
        match self {
            Backend::Jsac(_) => Mode::Jsac,
            Backend::Fcts { .. } => Mode::Fcts,
            Backend::Fstc { .. } => Mode::Fstc,
        }
    }

    pub fn bitrate(&self) -> Result<Bitrate> {
        let of = |codec: &CodecModel, streams: u32, stages: usize| -> Result<Bitrate> {
            let c = codec.config();
            Ok(bitrate_of(c.token_rate()?, c.codebook_size as u32, streams, stages as u32))
        };
        match self {
            Backend::Jsac(j) => j.bitrate(),
            Backend::Fcts { codec, stages, .. } => of(codec, 1, *stages),
            Backend::Fstc { codec, stages, .. } => of(codec, 2, *stages),
        }
    }

    pub fn separate(&self, y: &Waveform) -> Result<[Waveform; 2]> {
        match self {
            Backend::Jsac(j) => j.separate(y),
            Backend::Fcts { codec, stages, separator } => fcts(y, *stages, codec, *separator),
            Backend::Fstc { codec, stages, separator } => fstc(y, *stages, codec, *separator),
        }
    }
}

pub fn evaluate(backend: &Backend<'_>, mixtures: &[Mixture]) -> Result<EvalReport> {
    let utterances = mixtures
        .iter()
        .map(|m| {
            let [a, b] = backend.separate(&m.mix)?;
            Ok(score_utterance(&m.id, [&a, &b], [&m.sources[0], &m.sources[1]], &m.mix)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::new(backend.mode().name(), Some(backend.bitrate()?), utterances))
}
