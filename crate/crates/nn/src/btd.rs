//! Base-token disentanglement: mixture log-mel → two per-speaker
//! distributions over first-stage codec tokens.

use candle_core::{Tensor, D};
use codesep_core::signal::{MelAnalyzer, MelSpectrogram};
use codesep_core::Waveform;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, invalid, Result};
use crate::layers::{gelu, sinusoidal_positions, CrossAttentionBlock, LayerNorm, Linear, SelfAttentionBlock, StridedConv1d};
use crate::params::{tensor_from, Dist, ParamStore};

/// Where the minimum over the two speaker assignments is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PermutationScope {
    #[default]
    Frame,
    Utterance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BtdConfig {
    pub sample_rate_hz: u32,
    pub num_mels: usize,
    /// Mel frame shift in samples; the analysis window is four shifts.
    pub mel_shift: usize,
    /// Number of strided downsampling convolutions.
    pub downsample_layers: usize,
    pub stride: usize,
    /// Model width.
    pub d_model: usize,
    pub heads: usize,
    pub intra_depth: usize,
    pub inter_depth: usize,
    pub ff_mult: usize,
    /// Output vocabulary `M`; must match the codec.
    pub codebook_size: usize,
    pub delta_std: f64,
    pub permutation: PermutationScope,
}

impl BtdConfig {
    pub fn desk() -> Self {
        Self {
            sample_rate_hz: 8000,
            num_mels: 32,
            mel_shift: 10,
            downsample_layers: 3,
            stride: 2,
            d_model: 64,
            heads: 4,
            intra_depth: 1,
            inter_depth: 1,
            ff_mult: 2,
            codebook_size: 64,
            delta_std: 0.02,
            permutation: PermutationScope::Frame,
        }
    }

    pub fn paper() -> Self {
        Self {
            sample_rate_hz: 16_000,
            num_mels: 80,
            mel_shift: 80,
            downsample_layers: 3,
            stride: 2,
            d_model: 256,
            heads: 4,
            intra_depth: 4,
            inter_depth: 4,
            ff_mult: 4,
            codebook_size: 1024,
            delta_std: 0.02,
            permutation: PermutationScope::Frame,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate_hz == 0 || self.num_mels == 0 || self.mel_shift == 0 {
            return config("sample rate, mel count and mel shift must be positive");
        }
        if self.stride < 2 || self.stride % 2 != 0 {
            return config(format!("downsampling stride {} must be even", self.stride));
        }
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return config(format!("d_model {} must be a positive multiple of {} heads", self.d_model, self.heads));
        }
        if self.d_model % 2 != 0 {
            return config("d_model must be even for sinusoidal positions");
        }
        if self.codebook_size < 2 {
            return config("codebook size must be at least 2");
        }
        if !(self.delta_std >= 0.0) {
            return config("delta std must be nonnegative");
        }
        Ok(())
    }

    pub fn mel_frames_per_token(&self) -> usize {
        self.stride.pow(self.downsample_layers as u32)
    }

    /// Samples per output token.
    pub fn token_hop(&self) -> usize {
        self.mel_shift * self.mel_frames_per_token()
    }

    pub fn mel_window(&self) -> usize {
        4 * self.mel_shift
    }
}

/// Two row-stochastic `T × M` matrices, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseDistributions {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub num_frames: usize,
    pub codebook_size: usize,
}

impl BaseDistributions {
    pub fn new(p1: Vec<f64>, p2: Vec<f64>, num_frames: usize, codebook_size: usize) -> Result<Self> {
        if p1.len() != num_frames * codebook_size || p2.len() != p1.len() {
            return invalid("distribution sizes do not match T × M");
        }
        Ok(Self {
            p1,
            p2,
            num_frames,
            codebook_size,
        })
    }

    /// Row `t` of source `i` (1 or 2).
    pub fn row(&self, source: usize, t: usize) -> &[f64] {
        let p = if source == 1 { &self.p1 } else { &self.p2 };
        &p[t * self.codebook_size..(t + 1) * self.codebook_size]
    }

    /// Per-frame argmax tokens (1-based), ties to the smallest index.
    pub fn argmax(&self) -> (Vec<u32>, Vec<u32>) {
        let pick = |i| (0..self.num_frames).map(|t| argmax_token(self.row(i, t))).collect();
        (pick(1), pick(2))
    }
}

/// 1-based index of the largest entry; the first one wins ties.
pub fn argmax_token(row: &[f64]) -> u32 {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best as u32 + 1
}

fn check_targets(d: &BaseDistributions, a: &[u32], b: &[u32]) -> Result<()> {
    if a.len() != d.num_frames || b.len() != d.num_frames {
        return invalid(format!(
            "targets have {} and {} frames, distributions {}",
            a.len(),
            b.len(),
            d.num_frames
        ));
    }
    let m = d.codebook_size as u32;
    if a.iter().chain(b).any(|&t| t == 0 || t > m) {
        return invalid(format!("targets must lie in 1..={m}"));
    }
    Ok(())
}

/// Permutation-invariant cross-entropy on probabilities; targets are 1-based.
pub fn pi_ce_loss(d: &BaseDistributions, a: &[u32], b: &[u32], scope: PermutationScope) -> Result<f64> {
    check_targets(d, a, b)?;
    if d.num_frames == 0 {
        return Ok(0.0);
    }
    let nll = |i: usize, t: usize, tok: u32| -d.row(i, t)[tok as usize - 1].ln();
    let straight: Vec<f64> = (0..d.num_frames).map(|t| nll(1, t, a[t]) + nll(2, t, b[t])).collect();
    let crossed: Vec<f64> = (0..d.num_frames).map(|t| nll(1, t, b[t]) + nll(2, t, a[t])).collect();
    let n = d.num_frames as f64;
    Ok(match scope {
        PermutationScope::Frame => straight.iter().zip(&crossed).map(|(x, y)| x.min(*y)).sum::<f64>() / n,
        PermutationScope::Utterance => (straight.iter().sum::<f64>() / n).min(crossed.iter().sum::<f64>() / n),
    })
}

/// Permutation-invariant cross-entropy on `(B, T, M)` logits with `(B, T)`
/// 0-based `u32` targets; averaged over the batch.
pub fn pi_ce_from_logits(
    l1: &Tensor,
    l2: &Tensor,
    a: &Tensor,
    b: &Tensor,
    scope: PermutationScope,
) -> Result<Tensor> {
    let (bs, t, _) = l1.dims3()?;
    if l2.dims3()? != l1.dims3()? || a.dims2()? != (bs, t) || b.dims2()? != (bs, t) {
        return invalid("logit and target shapes disagree");
    }
    let lp1 = candle_nn::ops::log_softmax(l1, D::Minus1)?;
    let lp2 = candle_nn::ops::log_softmax(l2, D::Minus1)?;
    let pick = |lp: &Tensor, tgt: &Tensor| -> Result<Tensor> { Ok(lp.gather(&tgt.unsqueeze(2)?, 2)?.squeeze(2)?) };
    let straight = (pick(&lp1, a)? + pick(&lp2, b)?)?.neg()?;
    let crossed = (pick(&lp1, b)? + pick(&lp2, a)?)?.neg()?;
    Ok(match scope {
        PermutationScope::Frame => straight.minimum(&crossed)?.mean_all()?,
        PermutationScope::Utterance => straight.mean(1)?.minimum(&crossed.mean(1)?)?.mean_all()?,
    })
}

#[derive(Debug, Clone)]
pub struct BtdModel {
    config: BtdConfig,
    params: ParamStore,
    analyzer: MelAnalyzer,
    input_norm: LayerNorm,
    downsample: Vec<StridedConv1d>,
    intra: Vec<SelfAttentionBlock>,
    delta1: Tensor,
    delta2: Tensor,
    inter: Vec<CrossAttentionBlock>,
    head_norm: LayerNorm,
    head: Linear,
}

impl BtdModel {
    pub fn new(config: BtdConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let analyzer = MelAnalyzer::with_shift(config.sample_rate_hz, config.num_mels, config.mel_shift)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let c = &config;
        let mut init = params.init(&mut rng);
        let input_norm = init.layer_norm("input_norm", c.num_mels)?;
        let downsample = (0..c.downsample_layers)
            .map(|i| {
                let input = if i == 0 { c.num_mels } else { c.d_model };
                StridedConv1d::new(&mut init, &format!("downsample{i}"), input, c.d_model, c.stride)
            })
            .collect::<Result<Vec<_>>>()?;
        let intra = (0..c.intra_depth)
            .map(|i| SelfAttentionBlock::new(&mut init, &format!("intra{i}"), c.d_model, c.heads, c.ff_mult))
            .collect::<Result<Vec<_>>>()?;
        let (delta1, delta2) = {
            let mut s = init.sub("acbg");
            (
                s.tensor("delta1", &[c.d_model], Dist::Normal(c.delta_std))?,
                s.tensor("delta2", &[c.d_model], Dist::Normal(c.delta_std))?,
            )
        };
        let inter = (0..c.inter_depth)
            .map(|i| CrossAttentionBlock::new(&mut init, &format!("inter{i}"), c.d_model, c.heads, c.ff_mult))
            .collect::<Result<Vec<_>>>()?;
        let head_norm = init.layer_norm("head_norm", c.d_model)?;
        let head = init.linear("head", c.d_model, c.codebook_size)?;
        Ok(Self {
            config,
            params,
            analyzer,
            input_norm,
            downsample,
            intra,
            delta1,
            delta2,
            inter,
            head_norm,
            head,
        })
    }

    pub fn config(&self) -> &BtdConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// Output frames for `n` input samples; identical to the codec frame
    /// count at the same hop.
    pub fn token_frames(&self, num_samples: usize) -> usize {
        if num_samples == 0 {
            0
        } else {
            num_samples.div_ceil(self.config.token_hop()) + 1
        }
    }

    /// Log-mel frames (`frames_per_token × T` rows) whose groups are centred
    /// on the corresponding codec frames.
    pub fn mel_input(&self, samples: &[f64]) -> MelSpectrogram {
        let c = &self.config;
        let t = self.token_frames(samples.len());
        let hop = c.token_hop();
        let front = hop / 2 + c.mel_window() / 2 - c.mel_shift / 2;
        let frames = t * c.mel_frames_per_token();
        let total = if frames == 0 { 0 } else { c.mel_shift * (frames - 1) + c.mel_window() };
        let mut padded = vec![0.0; total];
        for (i, &s) in samples.iter().enumerate() {
            if front + i < total {
                padded[front + i] = s;
            }
        }
        self.analyzer.analyze_samples(&padded)
    }

    pub fn analyze(&self, y: &Waveform) -> Result<MelSpectrogram> {
        if y.sample_rate_hz() != self.config.sample_rate_hz {
            return invalid(format!(
                "waveform rate {} Hz, model expects {} Hz",
                y.sample_rate_hz(),
                self.config.sample_rate_hz
            ));
        }
        Ok(self.mel_input(y.samples()))
    }

    /// `(B, frames_per_token × T, mels)` → two `(B, T, M)` logit tensors.
    pub fn logits(&self, mel: &Tensor) -> Result<(Tensor, Tensor)> {
        let (_, frames, mels) = mel.dims3()?;
        if mels != self.config.num_mels {
            return invalid(format!("mel dimension {mels}, model expects {}", self.config.num_mels));
        }
        let per = self.config.mel_frames_per_token();
        if frames == 0 || frames % per != 0 {
            return invalid(format!("{frames} mel frames is not a positive multiple of {per}"));
        }
        let mut h = self.input_norm.forward(mel)?;
        for (i, conv) in self.downsample.iter().enumerate() {
            h = conv.forward(&h)?;
            if i + 1 < self.downsample.len() {
                h = gelu(&h)?;
            }
        }
        let t = h.dim(1)?;
        h = h.broadcast_add(&sinusoidal_positions(t, self.config.d_model)?)?;
        for block in &self.intra {
            h = block.forward(&h)?;
        }
        let mut a = h.broadcast_add(&self.delta1)?;
        let mut b = h.broadcast_add(&self.delta2)?;
        for block in &self.inter {
            let na = block.forward(&a, &b)?;
            let nb = block.forward(&b, &a)?;
            (a, b) = (na, nb);
        }
        let head = |x: &Tensor| self.head.forward(&self.head_norm.forward(x)?);
        Ok((head(&a)?, head(&b)?))
    }

    fn mel_tensor(&self, mel: &MelSpectrogram) -> Result<Tensor> {
        if mel.num_mels != self.config.num_mels {
            return invalid(format!("mel dimension {}, model expects {}", mel.num_mels, self.config.num_mels));
        }
        tensor_from(mel.frames.clone(), &[1, mel.num_frames, mel.num_mels])
    }

    pub fn forward(&self, mel: &MelSpectrogram) -> Result<BaseDistributions> {
        let m = self.config.codebook_size;
        if mel.num_frames == 0 {
            return BaseDistributions::new(Vec::new(), Vec::new(), 0, m);
        }
        let (l1, l2) = self.logits(&self.mel_tensor(mel)?)?;
        let t = l1.dim(1)?;
        let probs = |l: &Tensor| -> Result<Vec<f64>> {
            Ok(candle_nn::ops::softmax(l, D::Minus1)?.flatten_all()?.to_vec1::<f64>()?)
        };
        BaseDistributions::new(probs(&l1)?, probs(&l2)?, t, m)
    }

    /// Argmax base tokens of both sources.
    pub fn disentangle(&self, mel: &MelSpectrogram) -> Result<(Vec<u32>, Vec<u32>)> {
        Ok(self.forward(mel)?.argmax())
    }

    pub fn deltas(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((self.delta1.to_vec1()?, self.delta2.to_vec1()?))
    }

    pub fn set_deltas(&self, d1: &[f64], d2: &[f64]) -> Result<()> {
        let dim = self.config.d_model;
        if d1.len() != dim || d2.len() != dim {
            return invalid(format!("bias vectors must have {dim} entries"));
        }
        for (name, v) in [("acbg.delta1", d1), ("acbg.delta2", d2)] {
            let var = self.params.get(name).expect("bias variable");
            var.set(&tensor_from(v.to_vec(), &[dim])?)?;
        }
        Ok(())
    }

    /// PI-CE for a batch of mel inputs and `(B, T)` 0-based targets.
    pub fn training_loss(&self, mel: &Tensor, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (l1, l2) = self.logits(mel)?;
        pi_ce_from_logits(&l1, &l2, a, b, self.config.permutation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let d = BaseDistributions::new(vec![0.7, 0.2, 0.1], vec![0.1, 0.2, 0.7], 1, 3).unwrap();
        let v = pi_ce_loss(&d, &[3], &[1], PermutationScope::Frame).unwrap();
        assert!((v - (-2.0 * 0.7f64.ln())).abs() < 1e-12);
        assert!((v - 0.7133).abs() < 1e-4);
    }

    #[test]
    fn argmax_row() {
        assert_eq!(argmax_token(&[0.1, 0.7, 0.2]), 2);
        assert_eq!(argmax_token(&[0.4, 0.4, 0.2]), 1);
    }

    #[test]
    fn mel_frames_align_with_tokens() {
        let m = BtdModel::new(BtdConfig::desk(), 0).unwrap();
        for n in [1usize, 79, 80, 81, 4000] {
            let mel = m.mel_input(&vec![0.1; n]);
            assert_eq!(mel.num_frames, 8 * m.token_frames(n));
        }
        let mel = m.mel_input(&vec![0.1; 800]);
        let d = m.forward(&mel).unwrap();
        assert_eq!(d.num_frames, 11);
        for t in 0..d.num_frames {
            for i in [1, 2] {
                assert!((d.row(i, t).iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn logits_loss_matches_probability_loss() {
        let m = BtdModel::new(BtdConfig::desk(), 1).unwrap();
        let samples: Vec<f64> = (0..400).map(|i| (i as f64 * 0.3).sin() * 0.2).collect();
        let mel = m.mel_input(&samples);
        let d = m.forward(&mel).unwrap();
        let t = d.num_frames;
        let a: Vec<u32> = (0..t as u32).map(|i| i % 64 + 1).collect();
        let b: Vec<u32> = (0..t as u32).map(|i| (i * 7) % 64 + 1).collect();
        let mt = tensor_from(mel.frames.clone(), &[1, mel.num_frames, mel.num_mels]).unwrap();
        let dev = crate::params::device();
        let ta = Tensor::from_vec(a.iter().map(|x| x - 1).collect::<Vec<_>>(), (1, t), &dev).unwrap();
        let tb = Tensor::from_vec(b.iter().map(|x| x - 1).collect::<Vec<_>>(), (1, t), &dev).unwrap();
        for scope in [PermutationScope::Frame, PermutationScope::Utterance] {
            let mut cfg_model = m.clone();
            cfg_model.config.permutation = scope;
            let lt = cfg_model.training_loss(&mt, &ta, &tb).unwrap().to_scalar::<f64>().unwrap();
            let lp = pi_ce_loss(&d, &a, &b, scope).unwrap();
            assert!((lt - lp).abs() < 1e-9, "{lt} vs {lp}");
        }
    }
}
