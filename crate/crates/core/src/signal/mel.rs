use std::f64::consts::PI;

use super::Waveform;
use crate::error::{invalid, Result};

/// Floor added to mel energies before the logarithm.
pub const LOG_FLOOR: f64 = 1e-5;

/// Log-mel frames, row-major `num_frames × num_mels`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub frames: Vec<f64>,
    pub num_frames: usize,
    pub num_mels: usize,
    pub frame_shift: usize,
}

impl MelSpectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t * self.num_mels..(t + 1) * self.num_mels]
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Short-time magnitude spectrum followed by a triangular mel filterbank.
///
/// Frame `t` covers samples `[t * hop, t * hop + window)`; a trailing partial
/// window is dropped. A periodic Hann window is applied and the frame is
/// zero-padded to `n_fft`, the smallest power of two at least `window` for
/// which every filter touches at least one FFT bin. Filters are area
/// normalized and span 0 Hz to Nyquist on the HTK mel scale.
#[derive(Debug, Clone)]
pub struct MelAnalyzer {
    sample_rate_hz: u32,
    window_len: usize,
    hop: usize,
    n_fft: usize,
    num_mels: usize,
    /// `window_len × bins`, Hann window folded in.
    cos_table: Vec<f64>,
    sin_table: Vec<f64>,
    /// `num_mels × bins`.
    filterbank: Vec<f64>,
    peak_hz: Vec<f64>,
}

impl MelAnalyzer {
    pub fn new(sample_rate_hz: u32, num_mels: usize, window_len: usize, hop: usize) -> Result<Self> {
        if sample_rate_hz == 0 {
            return invalid("sample rate must be positive");
        }
        if num_mels == 0 {
            return invalid("mel dimension must be at least 1");
        }
        if hop == 0 || window_len == 0 {
            return invalid("window and frame shift must be at least 1");
        }
        let nyquist = sample_rate_hz as f64 / 2.0;
        let top = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..num_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (num_mels + 1) as f64))
            .collect();

        let mut n_fft = window_len.next_power_of_two();
        let filterbank = loop {
            let bins = n_fft / 2 + 1;
            let fb = build_filterbank(&edges, bins, n_fft, sample_rate_hz);
            let covered = fb.chunks(bins).all(|row| row.iter().any(|&w| w > 0.0));
            if covered {
                break fb;
            }
            if n_fft >= 1 << 20 {
                return invalid(format!(
                    "{num_mels} mel filters cannot all be resolved at {sample_rate_hz} Hz"
                ));
            }
            n_fft *= 2;
        };

        let bins = n_fft / 2 + 1;
        let mut cos_table = vec![0.0; window_len * bins];
        let mut sin_table = vec![0.0; window_len * bins];
        for n in 0..window_len {
            let hann = 0.5 - 0.5 * (2.0 * PI * n as f64 / window_len as f64).cos();
            for k in 0..bins {
                let arg = 2.0 * PI * (k * n % n_fft) as f64 / n_fft as f64;
                cos_table[n * bins + k] = hann * arg.cos();
                sin_table[n * bins + k] = -hann * arg.sin();
            }
        }

        Ok(Self {
            sample_rate_hz,
            window_len,
            hop,
            n_fft,
            num_mels,
            cos_table,
            sin_table,
            filterbank,
            peak_hz: edges[1..=num_mels].to_vec(),
        })
    }

    /// Analyzer with the default window of four frame shifts.
    pub fn with_shift(sample_rate_hz: u32, num_mels: usize, frame_shift: usize) -> Result<Self> {
        Self::new(sample_rate_hz, num_mels, 4 * frame_shift, frame_shift)
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn num_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn num_mels(&self) -> usize {
        self.num_mels
    }

    /// Windowed real DFT kernel, row-major `window_len × bins`.
    pub fn cos_table(&self) -> &[f64] {
        &self.cos_table
    }

    /// Windowed imaginary DFT kernel, row-major `window_len × bins`.
    pub fn sin_table(&self) -> &[f64] {
        &self.sin_table
    }

    /// Row-major `num_mels × bins`.
    pub fn filterbank(&self) -> &[f64] {
        &self.filterbank
    }

    pub fn filter(&self, m: usize) -> &[f64] {
        let bins = self.num_bins();
        &self.filterbank[m * bins..(m + 1) * bins]
    }

    /// Peak (center) frequency of every filter, ascending.
    pub fn peak_hz(&self) -> &[f64] {
        &self.peak_hz
    }

    pub fn num_frames(&self, num_samples: usize) -> usize {
        if num_samples < self.window_len {
            0
        } else {
            (num_samples - self.window_len) / self.hop + 1
        }
    }

    pub fn magnitude_frame(&self, segment: &[f64]) -> Vec<f64> {
        let bins = self.num_bins();
        let mut re = vec![0.0; bins];
        let mut im = vec![0.0; bins];
        for (n, &x) in segment.iter().enumerate().take(self.window_len) {
            if x == 0.0 {
                continue;
            }
            let c = &self.cos_table[n * bins..(n + 1) * bins];
            let s = &self.sin_table[n * bins..(n + 1) * bins];
            for k in 0..bins {
                re[k] += x * c[k];
                im[k] += x * s[k];
            }
        }
        re.iter()
            .zip(&im)
            .map(|(r, i)| (r * r + i * i).sqrt())
            .collect()
    }

    pub fn analyze(&self, w: &Waveform) -> Result<MelSpectrogram> {
        if w.sample_rate_hz() != self.sample_rate_hz {
            return invalid(format!(
                "waveform rate {} Hz does not match analyzer rate {} Hz",
                w.sample_rate_hz(),
                self.sample_rate_hz
            ));
        }
        Ok(self.analyze_samples(w.samples()))
    }

    pub fn analyze_samples(&self, samples: &[f64]) -> MelSpectrogram {
        let frames = self.num_frames(samples.len());
        let bins = self.num_bins();
        let mut out = Vec::with_capacity(frames * self.num_mels);
        for t in 0..frames {
            let mag = self.magnitude_frame(&samples[t * self.hop..t * self.hop + self.window_len]);
            for m in 0..self.num_mels {
                let row = &self.filterbank[m * bins..(m + 1) * bins];
                let e: f64 = row.iter().zip(&mag).map(|(w, a)| w * a).sum();
                out.push((e + LOG_FLOOR).ln());
            }
        }
        MelSpectrogram {
            frames: out,
            num_frames: frames,
            num_mels: self.num_mels,
            frame_shift: self.hop,
        }
    }
}

fn build_filterbank(edges: &[f64], bins: usize, n_fft: usize, sample_rate_hz: u32) -> Vec<f64> {
    let num_mels = edges.len() - 2;
    let mut fb = vec![0.0; num_mels * bins];
    for m in 0..num_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (hi - lo);
        for k in 0..bins {
            let f = k as f64 * sample_rate_hz as f64 / n_fft as f64;
            let rise = (f - lo) / (mid - lo);
            let fall = (hi - f) / (hi - mid);
            let w = rise.min(fall).max(0.0);
            fb[m * bins + k] = w * norm;
        }
    }
    fb
}

/// Log-mel spectrogram with a window of four frame shifts.
pub fn mel_spectrogram(w: &Waveform, num_mels: usize, frame_shift: usize) -> Result<MelSpectrogram> {
    MelAnalyzer::with_shift(w.sample_rate_hz(), num_mels, frame_shift)?.analyze(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_waveform_is_log_floor() {
        let w = Waveform::zeros(1000, 8000).unwrap();
        let m = mel_spectrogram(&w, 20, 10).unwrap();
        assert_eq!(m.num_frames, (1000 - 40) / 10 + 1);
        assert!(m.frames.iter().all(|&v| v == LOG_FLOOR.ln()));
    }

    #[test]
    fn short_waveform_has_no_frames() {
        let w = Waveform::zeros(39, 8000).unwrap();
        let m = mel_spectrogram(&w, 20, 10).unwrap();
        assert_eq!(m.num_frames, 0);
        assert!(m.frames.is_empty());
    }

    #[test]
    fn invalid_arguments() {
        let w = Waveform::zeros(100, 8000).unwrap();
        assert!(mel_spectrogram(&w, 0, 10).is_err());
        assert!(mel_spectrogram(&w, 20, 0).is_err());
    }

    #[test]
    fn filters_are_nonnegative_supported_and_ordered() {
        for &(rate, mels, shift) in &[(8000, 20, 10), (16000, 80, 80), (8000, 40, 80)] {
            let a = MelAnalyzer::with_shift(rate, mels, shift).unwrap();
            for m in 0..mels {
                let f = a.filter(m);
                assert!(f.iter().all(|&w| w >= 0.0));
                assert!(f.iter().any(|&w| w > 0.0), "filter {m} empty");
            }
            assert!(a.peak_hz().windows(2).all(|p| p[0] < p[1]));
            assert!(*a.peak_hz().last().unwrap() < rate as f64 / 2.0);
        }
    }

    #[test]
    fn magnitude_matches_direct_dft() {
        let a = MelAnalyzer::new(8000, 10, 24, 8).unwrap();
        let seg: Vec<f64> = (0..24).map(|i| ((i * 7 % 5) as f64 - 2.0) / 3.0).collect();
        let mag = a.magnitude_frame(&seg);
        for (k, &m) in mag.iter().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &x) in seg.iter().enumerate() {
                let hann = 0.5 - 0.5 * (2.0 * PI * n as f64 / 24.0).cos();
                let arg = 2.0 * PI * (k * n) as f64 / a.n_fft() as f64;
                re += hann * x * arg.cos();
                im -= hann * x * arg.sin();
            }
            assert!((m - (re * re + im * im).sqrt()).abs() < 1e-12);
        }
    }
}
