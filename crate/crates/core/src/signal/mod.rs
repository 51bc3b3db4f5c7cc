//! Deterministic signal primitives: waveforms, MDCT, log-mel analysis and WAV I/O.

mod mdct;
mod mel;
mod wav;

pub use mdct::{imdct, mdct, Mdct, MdctSpectrum};
pub use mel::{mel_spectrogram, MelAnalyzer, MelSpectrogram, LOG_FLOOR};
pub use wav::{read_wav, write_wav};

use crate::error::{invalid, Result};

/// Mono audio. Samples are nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return invalid("sample rate must be positive");
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return invalid(format!("sample {i} is not finite"));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn zeros(len: usize, sample_rate_hz: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate_hz)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(
            self.samples.iter().map(|s| s * gain).collect(),
            self.sample_rate_hz,
        )
    }

    /// Truncates or zero-extends to exactly `len` samples.
    pub fn with_len(&self, len: usize) -> Self {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        Self {
            samples,
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }
}

/// Sums two sources sample by sample, without renormalization.
pub fn mix(x1: &Waveform, x2: &Waveform) -> Result<Waveform> {
    if x1.sample_rate_hz != x2.sample_rate_hz {
        return invalid(format!(
            "sample rate mismatch: {} vs {}",
            x1.sample_rate_hz, x2.sample_rate_hz
        ));
    }
    if x1.len() != x2.len() {
        return invalid(format!("length mismatch: {} vs {}", x1.len(), x2.len()));
    }
    let samples = x1
        .samples
        .iter()
        .zip(&x2.samples)
        .map(|(a, b)| a + b)
        .collect();
    Waveform::new(samples, x1.sample_rate_hz)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wf(s: &[f64]) -> Waveform {
        Waveform::new(s.to_vec(), 8000).unwrap()
    }

    #[test]
    fn rejects_non_finite_and_zero_rate() {
        assert!(Waveform::new(vec![0.0, f64::NAN], 8000).is_err());
        assert!(Waveform::new(vec![0.0], 0).is_err());
        assert!(Waveform::new(vec![], 8000).unwrap().is_empty());
    }

    #[test]
    fn mix_identities() {
        let x = wf(&[0.1, -0.2, 0.3]);
        let y = wf(&[0.5, 0.25, -0.125]);
        let zero = wf(&[0.0; 3]);
        assert_eq!(mix(&x, &zero).unwrap(), x);
        assert_eq!(mix(&x, &y).unwrap(), mix(&y, &x).unwrap());
        let neg = x.scaled(-1.0).unwrap();
        assert!(mix(&x, &neg).unwrap().samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn mix_rejects_mismatch() {
        let x = wf(&[0.1, 0.2]);
        assert!(mix(&x, &wf(&[0.1])).is_err());
        let other_rate = Waveform::new(vec![0.0, 0.0], 16000).unwrap();
        assert!(mix(&x, &other_rate).is_err());
    }
}
