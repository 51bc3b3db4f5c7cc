//! Differentiable MDCT and log-mel analysis on batched tensors.

use candle_core::{DType, Tensor};
use codesep_core::signal::{Mdct, MelAnalyzer, LOG_FLOOR};

use crate::error::{invalid, Result};
use crate::params::tensor_from;

/// Batched MDCT with the same framing as [`codesep_core::signal::Mdct`].
#[derive(Debug, Clone)]
pub struct TensorMdct {
    inner: Mdct,
    window: Tensor,
    /// `frame_length × bins`
    basis: Tensor,
}

impl TensorMdct {
    pub fn new(frame_length: usize) -> Result<Self> {
        let inner = Mdct::new(frame_length)?;
        let window = tensor_from(inner.window().to_vec(), &[frame_length])?;
        let basis = tensor_from(inner.basis().to_vec(), &[frame_length, inner.hop()])?;
        Ok(Self { inner, window, basis })
    }

    pub fn hop(&self) -> usize {
        self.inner.hop()
    }

    pub fn frame_length(&self) -> usize {
        self.inner.frame_length()
    }

    pub fn num_frames(&self, num_samples: usize) -> usize {
        self.inner.num_frames(num_samples)
    }

    /// `(B, n)` samples → `(B, T, hop)` coefficients.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, n) = x.dims2()?;
        let t = self.num_frames(n);
        if t == 0 {
            return invalid("cannot transform an empty signal");
        }
        let hop = self.hop();
        let (front, back) = self.inner.padding(n);
        let blocks = x.pad_with_zeros(1, front, back)?.reshape((b, t + 1, hop))?;
        let frames = Tensor::cat(&[blocks.narrow(1, 0, t)?, blocks.narrow(1, 1, t)?], 2)?;
        let windowed = frames.broadcast_mul(&self.window)?;
        Ok(windowed.reshape((b * t, self.frame_length()))?.matmul(&self.basis)?.reshape((b, t, hop))?)
    }

    /// `(B, T, hop)` coefficients → `(B, (T - 1) * hop)` samples aligned with
    /// the start of the original signal.
    pub fn inverse(&self, coeffs: &Tensor) -> Result<Tensor> {
        let (b, t, bins) = coeffs.dims3()?;
        let hop = self.hop();
        if bins != hop {
            return invalid(format!("expected {hop} coefficients per frame, got {bins}"));
        }
        if t == 0 {
            return invalid("cannot invert zero frames");
        }
        let frames = coeffs
            .reshape((b * t, hop))?
            .matmul(&self.basis.t()?)?
            .reshape((b, t, self.frame_length()))?
            .broadcast_mul(&self.window)?;
        let first = frames.narrow(2, 0, hop)?.pad_with_zeros(1, 0, 1)?;
        let second = frames.narrow(2, hop, hop)?.pad_with_zeros(1, 1, 0)?;
        let out = (first + second)?.reshape((b, (t + 1) * hop))?;
        Ok(out.narrow(1, hop, (t - 1) * hop)?)
    }
}

/// Batched log-mel spectrogram, numerically matching
/// [`MelAnalyzer::analyze_samples`].
#[derive(Debug, Clone)]
pub struct TensorMel {
    window: usize,
    hop: usize,
    cos: Tensor,
    sin: Tensor,
    /// `bins × mels`
    filters: Tensor,
}

impl TensorMel {
    pub fn new(analyzer: &MelAnalyzer) -> Result<Self> {
        let w = analyzer.window_len();
        let bins = analyzer.num_bins();
        let mels = analyzer.num_mels();
        Ok(Self {
            window: w,
            hop: analyzer.hop(),
            cos: tensor_from(analyzer.cos_table().to_vec(), &[w, bins])?,
            sin: tensor_from(analyzer.sin_table().to_vec(), &[w, bins])?,
            filters: tensor_from(analyzer.filterbank().to_vec(), &[mels, bins])?.t()?.contiguous()?,
        })
    }

    /// `(B, n)` → `(B, F, mels)`; signals shorter than one window are
    /// zero-extended to a single frame.
    pub fn log_mel(&self, x: &Tensor) -> Result<Tensor> {
        let (b, n) = x.dims2()?;
        let x = if n < self.window {
            x.pad_with_zeros(1, 0, self.window - n)?
        } else {
            x.contiguous()?
        };
        let n = n.max(self.window);
        let frames = (n - self.window) / self.hop + 1;
        let idx: Vec<u32> = (0..frames)
            .flat_map(|f| (0..self.window).map(move |k| (f * self.hop + k) as u32))
            .collect();
        let idx = Tensor::from_vec(idx, frames * self.window, x.device())?;
        let segs = x.index_select(&idx, 1)?.reshape((b * frames, self.window))?;
        let re = segs.matmul(&self.cos)?;
        let im = segs.matmul(&self.sin)?;
        let mag = ((re.sqr()? + im.sqr()?)? + 1e-18)?.sqrt()?;
        let mel = mag.matmul(&self.filters)?;
        let mels = mel.dim(1)?;
        Ok((mel + LOG_FLOOR)?.log()?.reshape((b, frames, mels))?)
    }
}

/// Sum over resolutions of the mean absolute log-mel difference.
#[derive(Debug, Clone)]
pub struct MultiResolutionMelLoss {
    resolutions: Vec<TensorMel>,
}

impl MultiResolutionMelLoss {
    /// Windows of 256, 512 and 1024 samples at 16 kHz, scaled to the given
    /// rate; hop is a quarter window.
    pub fn new(sample_rate_hz: u32) -> Result<Self> {
        let resolutions = [256usize, 512, 1024]
            .iter()
            .map(|&base| {
                let window = (base * sample_rate_hz as usize / 16_000).max(16);
                let mels = (window / 4).min(64);
                TensorMel::new(&MelAnalyzer::new(sample_rate_hz, mels, window, window / 4)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { resolutions })
    }

    pub fn forward(&self, estimate: &Tensor, reference: &Tensor) -> Result<Tensor> {
        let mut total = Tensor::zeros((), DType::F64, estimate.device())?;
        for r in &self.resolutions {
            let d = (r.log_mel(estimate)? - r.log_mel(reference)?)?.abs()?.mean_all()?;
            total = (total + d)?;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use codesep_core::signal::{mdct, Waveform};

    fn signal(n: usize, seed: f64) -> Vec<f64> {
        (0..n).map(|i| (i as f64 * 0.37 + seed).sin() * 0.4 + (i as f64 * 0.011).cos() * 0.1).collect()
    }

    #[test]
    fn tensor_mdct_matches_core() {
        let n = 523;
        let s = signal(n, 0.3);
        let core = mdct(&Waveform::new(s.clone(), 8000).unwrap(), 32).unwrap();
        let t = TensorMdct::new(32).unwrap();
        let x = tensor_from(s.clone(), &[1, n]).unwrap();
        let c = t.forward(&x).unwrap();
        assert_eq!(c.dims(), &[1, core.num_frames, 16]);
        let flat = c.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        for (a, b) in flat.iter().zip(&core.frames) {
            assert!((a - b).abs() < 1e-12);
        }
        let back = t.inverse(&c).unwrap().narrow(1, 0, n).unwrap();
        let back = back.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        for (a, b) in back.iter().zip(&s) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn tensor_mel_matches_core() {
        let analyzer = MelAnalyzer::new(8000, 20, 64, 16).unwrap();
        let s = signal(400, 1.1);
        let core = analyzer.analyze_samples(&s);
        let m = TensorMel::new(&analyzer).unwrap();
        let out = m.log_mel(&tensor_from(s, &[1, 400]).unwrap()).unwrap();
        assert_eq!(out.dims(), &[1, core.num_frames, 20]);
        let flat = out.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        for (a, b) in flat.iter().zip(&core.frames) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn mel_loss_zero_on_identity_and_positive_otherwise() {
        let loss = MultiResolutionMelLoss::new(8000).unwrap();
        let a = tensor_from(signal(1200, 0.0), &[1, 1200]).unwrap();
        let b = tensor_from(signal(1200, 2.0), &[1, 1200]).unwrap();
        assert_eq!(loss.forward(&a, &a).unwrap().to_scalar::<f64>().unwrap(), 0.0);
        assert!(loss.forward(&a, &b).unwrap().to_scalar::<f64>().unwrap() > 0.0);
    }
}
