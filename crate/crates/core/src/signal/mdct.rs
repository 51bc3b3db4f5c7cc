use std::f64::consts::PI;

use super::Waveform;
use crate::error::{invalid, Result};

/// MDCT frames of a waveform. `frames` is row-major, `num_frames × num_bins`,
/// with `num_bins = frame_length / 2` and hop `frame_length / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MdctSpectrum {
    pub frames: Vec<f64>,
    pub num_frames: usize,
    pub frame_length: usize,
    pub sample_rate_hz: u32,
}

impl MdctSpectrum {
    pub fn new(
        frames: Vec<f64>,
        num_frames: usize,
        frame_length: usize,
        sample_rate_hz: u32,
    ) -> Result<Self> {
        check_frame_length(frame_length)?;
        if frames.len() != num_frames * frame_length / 2 {
            return invalid(format!(
                "{} coefficients do not form {num_frames} frames of {} bins",
                frames.len(),
                frame_length / 2
            ));
        }
        Ok(Self {
            frames,
            num_frames,
            frame_length,
            sample_rate_hz,
        })
    }

    pub fn num_bins(&self) -> usize {
        self.frame_length / 2
    }

    pub fn hop(&self) -> usize {
        self.frame_length / 2
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let f = self.num_bins();
        &self.frames[t * f..(t + 1) * f]
    }
}

fn check_frame_length(frame_length: usize) -> Result<()> {
    if frame_length < 4 || frame_length % 2 != 0 {
        return invalid(format!(
            "MDCT frame length must be even and at least 4, got {frame_length}"
        ));
    }
    Ok(())
}

/// Orthonormal MDCT with a sine window.
///
/// Framing: the signal is preceded by `hop` zeros and followed by `hop` zeros
/// plus whatever completes the last hop, so every original sample lies in the
/// overlap of two frames and is reconstructed exactly. For `n` samples this
/// gives `ceil(n / hop) + 1` frames.
#[derive(Debug, Clone)]
pub struct Mdct {
    frame_length: usize,
    window: Vec<f64>,
    /// `frame_length × bins`, already scaled by `sqrt(2 / bins)`.
    basis: Vec<f64>,
}

impl Mdct {
    pub fn new(frame_length: usize) -> Result<Self> {
        check_frame_length(frame_length)?;
        let bins = frame_length / 2;
        let window = (0..frame_length)
            .map(|n| (PI * (n as f64 + 0.5) / frame_length as f64).sin())
            .collect();
        let scale = (2.0 / bins as f64).sqrt();
        let mut basis = vec![0.0; frame_length * bins];
        for n in 0..frame_length {
            for k in 0..bins {
                let phase =
                    PI / bins as f64 * (n as f64 + 0.5 + bins as f64 / 2.0) * (k as f64 + 0.5);
                basis[n * bins + k] = scale * phase.cos();
            }
        }
        Ok(Self {
            frame_length,
            window,
            basis,
        })
    }

    pub fn frame_length(&self) -> usize {
        self.frame_length
    }

    pub fn hop(&self) -> usize {
        self.frame_length / 2
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Row-major `frame_length × bins` analysis matrix (synthesis uses its transpose).
    pub fn basis(&self) -> &[f64] {
        &self.basis
    }

    /// Frames produced for a signal of `num_samples` samples.
    pub fn num_frames(&self, num_samples: usize) -> usize {
        if num_samples == 0 {
            0
        } else {
            num_samples.div_ceil(self.hop()) + 1
        }
    }

    /// Zero padding placed before and after `num_samples` samples.
    pub fn padding(&self, num_samples: usize) -> (usize, usize) {
        let hop = self.hop();
        let frames = self.num_frames(num_samples);
        if frames == 0 {
            return (0, 0);
        }
        (hop, (frames + 1) * hop - hop - num_samples)
    }

    pub fn forward(&self, w: &Waveform) -> MdctSpectrum {
        let hop = self.hop();
        let bins = hop;
        let frames = self.num_frames(w.len());
        let (front, back) = self.padding(w.len());
        let mut padded = vec![0.0; front];
        padded.extend_from_slice(w.samples());
        padded.resize(padded.len() + back, 0.0);

        let mut out = vec![0.0; frames * bins];
        let mut windowed = vec![0.0; self.frame_length];
        for t in 0..frames {
            let seg = &padded[t * hop..t * hop + self.frame_length];
            for (dst, (s, win)) in windowed.iter_mut().zip(seg.iter().zip(&self.window)) {
                *dst = s * win;
            }
            let row = &mut out[t * bins..(t + 1) * bins];
            for (n, &v) in windowed.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let b = &self.basis[n * bins..(n + 1) * bins];
                for (acc, c) in row.iter_mut().zip(b) {
                    *acc += v * c;
                }
            }
        }
        MdctSpectrum {
            frames: out,
            num_frames: frames,
            frame_length: self.frame_length,
            sample_rate_hz: w.sample_rate_hz(),
        }
    }

    /// Windowed overlap-add synthesis. Returns `(num_frames - 1) * hop`
    /// samples aligned with the original signal (front padding removed);
    /// callers truncate to the original length.
    pub fn inverse(&self, s: &MdctSpectrum) -> Result<Waveform> {
        if s.frame_length != self.frame_length {
            return invalid(format!(
                "spectrum frame length {} does not match transform frame length {}",
                s.frame_length, self.frame_length
            ));
        }
        if s.frames.len() != s.num_frames * s.num_bins() {
            return invalid("coefficient count inconsistent with frame count");
        }
        let hop = self.hop();
        let bins = hop;
        if s.num_frames == 0 {
            return Waveform::new(Vec::new(), s.sample_rate_hz);
        }
        let mut out = vec![0.0; (s.num_frames + 1) * hop];
        for t in 0..s.num_frames {
            let coeffs = s.frame(t);
            let seg = &mut out[t * hop..t * hop + self.frame_length];
            for (n, dst) in seg.iter_mut().enumerate() {
                let b = &self.basis[n * bins..(n + 1) * bins];
                let v: f64 = b.iter().zip(coeffs).map(|(c, x)| c * x).sum();
                *dst += v * self.window[n];
            }
        }
        out.truncate(s.num_frames * hop);
        out.drain(..hop);
        Waveform::new(out, s.sample_rate_hz)
    }
}

pub fn mdct(w: &Waveform, frame_length: usize) -> Result<MdctSpectrum> {
    Ok(Mdct::new(frame_length)?.forward(w))
}

pub fn imdct(s: &MdctSpectrum) -> Result<Waveform> {
    Mdct::new(s.frame_length)?.inverse(s)
}
