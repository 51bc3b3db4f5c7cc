//! Objective metrics for separated and decoded speech.
//!
//! `mel_distance` is a spectral proxy, not a perceptual quality score.

use serde::{Deserialize, Serialize};

use crate::bitstream::Bitrate;
use crate::error::{invalid, Result};
use crate::signal::{MelAnalyzer, Waveform};

pub const SI_SDR_CAP_DB: f64 = 60.0;

/// Scale-invariant SDR in dB, clamped to `±60` so that exact (or silent)
/// estimates keep aggregates finite.
pub fn si_sdr(est: &Waveform, reference: &Waveform) -> Result<f64> {
    if est.len() != reference.len() {
        return invalid(format!(
            "estimate has {} samples, reference {}",
            est.len(),
            reference.len()
        ));
    }
    si_sdr_samples(est.samples(), reference.samples())
}

pub fn si_sdr_samples(est: &[f64], reference: &[f64]) -> Result<f64> {
    let ref_energy: f64 = reference.iter().map(|r| r * r).sum();
    if ref_energy == 0.0 {
        return invalid("reference signal is all zeros");
    }
    let dot: f64 = est.iter().zip(reference).map(|(e, r)| e * r).sum();
    let alpha = dot / ref_energy;
    let (mut target, mut noise) = (0.0, 0.0);
    for (e, r) in est.iter().zip(reference) {
        let s = alpha * r;
        target += s * s;
        noise += (e - s) * (e - s);
    }
    if target == 0.0 {
        return Ok(-SI_SDR_CAP_DB);
    }
    if noise == 0.0 {
        return Ok(SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target / noise).log10()).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Permutation {
    /// estimate 1 ↔ reference 1, estimate 2 ↔ reference 2
    Identity,
    /// estimate 1 ↔ reference 2, estimate 2 ↔ reference 1
    Swapped,
}

/// Best mean SI-SDR over the two assignments; ties go to [`Permutation::Identity`].
pub fn pit_si_sdr(ests: [&Waveform; 2], refs: [&Waveform; 2]) -> Result<(f64, Permutation)> {
    let identity = 0.5 * (si_sdr(ests[0], refs[0])? + si_sdr(ests[1], refs[1])?);
    let swapped = 0.5 * (si_sdr(ests[0], refs[1])? + si_sdr(ests[1], refs[0])?);
    if swapped > identity {
        Ok((swapped, Permutation::Swapped))
    } else {
        Ok((identity, Permutation::Identity))
    }
}

/// Mel dimension used by [`mel_distance`].
pub const DISTANCE_MELS: usize = 40;

fn distance_analyzer(sample_rate_hz: u32) -> Result<MelAnalyzer> {
    let shift = (sample_rate_hz as usize / 100).max(1);
    MelAnalyzer::with_shift(sample_rate_hz, DISTANCE_MELS, shift)
}

/// Mean absolute difference of log-mel spectrograms (10 ms shift, 40 ms
/// window), over the frames both signals have.
pub fn mel_distance(a: &Waveform, b: &Waveform) -> Result<f64> {
    if a.sample_rate_hz() != b.sample_rate_hz() {
        return invalid(format!(
            "sample rates differ: {} vs {}",
            a.sample_rate_hz(),
            b.sample_rate_hz()
        ));
    }
    let n = a.len().min(b.len());
    let analyzer = distance_analyzer(a.sample_rate_hz())?;
    let ma = analyzer.analyze_samples(&a.samples()[..n]);
    let mb = analyzer.analyze_samples(&b.samples()[..n]);
    if ma.frames.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = ma
        .frames
        .iter()
        .zip(&mb.frames)
        .map(|(x, y)| (x - y).abs())
        .sum();
    Ok(total / ma.frames.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMetrics {
    pub id: String,
    /// PIT SI-SDR of the estimates.
    pub si_sdr_db: f64,
    /// PIT SI-SDR of the unprocessed mixture used as both estimates.
    pub mixture_si_sdr_db: f64,
    pub si_sdr_improvement_db: f64,
    /// Mean mel distance of the PIT-aligned estimates to their references.
    pub mel_distance: f64,
    pub permutation: Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub count: usize,
    pub si_sdr_db: f64,
    pub mixture_si_sdr_db: f64,
    pub si_sdr_improvement_db: f64,
    pub mel_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: String,
    pub bitrate: Option<Bitrate>,
    pub utterances: Vec<UtteranceMetrics>,
    pub aggregate: AggregateMetrics,
}

impl EvalReport {
    pub fn new(mode: impl Into<String>, bitrate: Option<Bitrate>, utterances: Vec<UtteranceMetrics>) -> Self {
        let n = utterances.len();
        let mean = |f: fn(&UtteranceMetrics) -> f64| {
            if n == 0 {
                0.0
            } else {
                utterances.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let aggregate = AggregateMetrics {
            count: n,
            si_sdr_db: mean(|u| u.si_sdr_db),
            mixture_si_sdr_db: mean(|u| u.mixture_si_sdr_db),
            si_sdr_improvement_db: mean(|u| u.si_sdr_improvement_db),
            mel_distance: mean(|u| u.mel_distance),
        };
        Self {
            mode: mode.into(),
            bitrate,
            utterances,
            aggregate,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Scores a pair of estimates against references and the mixture baseline.
/// Estimates are truncated or zero-extended to the reference length.
pub fn score_utterance(
    id: impl Into<String>,
    ests: [&Waveform; 2],
    refs: [&Waveform; 2],
    mixture: &Waveform,
) -> Result<UtteranceMetrics> {
    let n = refs[0].len();
    let e0 = ests[0].with_len(n);
    let e1 = ests[1].with_len(n);
    let mix = mixture.with_len(n);
    let (sdr, perm) = pit_si_sdr([&e0, &e1], refs)?;
    let (mix_sdr, _) = pit_si_sdr([&mix, &mix], refs)?;
    let (a, b) = match perm {
        Permutation::Identity => (&e0, &e1),
        Permutation::Swapped => (&e1, &e0),
    };
    let mel = 0.5 * (mel_distance(a, refs[0])? + mel_distance(b, refs[1])?);
    Ok(UtteranceMetrics {
        id: id.into(),
        si_sdr_db: sdr,
        mixture_si_sdr_db: mix_sdr,
        si_sdr_improvement_db: sdr - mix_sdr,
        mel_distance: mel,
        permutation: perm,
    })
}
