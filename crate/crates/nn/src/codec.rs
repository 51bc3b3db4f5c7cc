//! MDCT-domain neural codec: convolutional encoder, residual vector
//! quantizer and decoder.

use candle_core::{DType, Tensor, Var};
use codesep_core::bitstream::Rational;
use codesep_core::rvq::{init_codebooks_with, Codebook, KMeansConfig, ResidualQuantizer, TokenFrame, COMMITMENT_WEIGHT};
use codesep_core::Waveform;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{MultiResolutionMelLoss, TensorMdct};
use crate::error::{config, invalid, Result};
use crate::layers::{LayerNorm, Linear, ResidualConvBlock};
use crate::params::{device, tensor_from, Dist, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecConfig {
    pub sample_rate_hz: u32,
    pub mdct_frame_length: usize,
    /// Latent dimension `K`.
    pub latent_dim: usize,
    /// Quantizer stages `N`.
    pub stages: usize,
    /// Codebook size `M`.
    pub codebook_size: usize,
    pub width: usize,
    pub encoder_depth: usize,
    pub decoder_depth: usize,
    pub kernel: usize,
    /// Weight of the normalized MDCT-coefficient error added to the loss.
    pub mdct_loss_weight: f64,
}

impl CodecConfig {
    pub fn desk() -> Self {
        Self {
            sample_rate_hz: 8000,
            mdct_frame_length: 160,
            latent_dim: 8,
            stages: 4,
            codebook_size: 64,
            width: 64,
            encoder_depth: 2,
            decoder_depth: 2,
            kernel: 5,
            mdct_loss_weight: 10.0,
        }
    }

    pub fn paper() -> Self {
        Self {
            sample_rate_hz: 16_000,
            mdct_frame_length: 1280,
            latent_dim: 32,
            stages: 4,
            codebook_size: 1024,
            width: 256,
            encoder_depth: 4,
            decoder_depth: 4,
            kernel: 7,
            mdct_loss_weight: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate_hz == 0 {
            return config("sample rate must be positive");
        }
        if self.mdct_frame_length < 2 || self.mdct_frame_length % 2 != 0 {
            return config(format!("MDCT frame length {} must be even and >= 2", self.mdct_frame_length));
        }
        if self.stages < 2 {
            return config("the quantizer needs at least two stages");
        }
        if self.latent_dim == 0 || self.codebook_size < 2 || self.width == 0 || self.kernel == 0 {
            return config("latent dim, width and kernel must be positive and M >= 2");
        }
        if !(self.mdct_loss_weight >= 0.0) {
            return config("MDCT loss weight must be nonnegative");
        }
        Ok(())
    }

    pub fn hop(&self) -> usize {
        self.mdct_frame_length / 2
    }

    /// Frames per second as a reduced fraction.
    pub fn token_rate(&self) -> Result<Rational> {
        let (mut a, mut b) = (self.sample_rate_hz, self.hop() as u32);
        while b != 0 {
            (a, b) = (b, a % b);
        }
        Ok(Rational::new(self.sample_rate_hz / a, self.hop() as u32 / a)?)
    }
}

/// Pre-quantization latents, `T × K` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence {
    pub frames: Vec<f64>,
    pub num_frames: usize,
    pub dim: usize,
}

impl LatentSequence {
    pub fn new(frames: Vec<f64>, num_frames: usize, dim: usize) -> Result<Self> {
        if frames.len() != num_frames * dim {
            return invalid(format!("{} values cannot form {num_frames} × {dim}", frames.len()));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return invalid("latents must be finite");
        }
        Ok(Self { frames, num_frames, dim })
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t * self.dim..(t + 1) * self.dim]
    }

    fn from_tensor(t: &Tensor) -> Result<Self> {
        let (_, frames, dim) = t.dims3()?;
        Self::new(t.flatten_all()?.to_vec1::<f64>()?, frames, dim)
    }

    fn to_tensor(&self) -> Result<Tensor> {
        tensor_from(self.frames.clone(), &[1, self.num_frames, self.dim])
    }
}

/// Loss terms of one codec training batch.
#[derive(Debug, Clone)]
pub struct CodecLoss {
    pub total: Tensor,
    pub spectral: f64,
    pub quantization: f64,
    pub mdct: f64,
    /// Per stage: 0-based token of every frame in the batch.
    pub tokens: Vec<Vec<u32>>,
    /// Per stage: the residual each frame presented to that stage, `K` values per frame.
    pub stage_inputs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct Stack {
    input: Linear,
    blocks: Vec<ResidualConvBlock>,
    /// Only the encoder normalizes before its projection; the decoder must
    /// keep frame energy.
    norm: Option<LayerNorm>,
    output: Linear,
}

impl Stack {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = self.input.forward(x)?;
        for b in &self.blocks {
            h = b.forward(&h)?;
        }
        if let Some(n) = &self.norm {
            h = n.forward(&h)?;
        }
        self.output.forward(&h)
    }
}

#[derive(Debug, Clone)]
pub struct CodecModel {
    config: CodecConfig,
    params: ParamStore,
    mdct: TensorMdct,
    encoder: Stack,
    decoder: Stack,
    /// One `M × K` table per stage, backed by trainable variables.
    codebooks: Vec<Tensor>,
    mel_loss: MultiResolutionMelLoss,
}

impl CodecModel {
    pub fn new(config: CodecConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let bins = config.hop();
        let (encoder, decoder, codebooks) = {
            let mut init = params.init(&mut rng);
            let mut stack = |name: &str, input: usize, output: usize, depth: usize, norm: bool| -> Result<Stack> {
                let mut s = init.sub(name);
                Ok(Stack {
                    input: s.linear("input", input, config.width)?,
                    blocks: (0..depth)
                        .map(|i| ResidualConvBlock::new(&mut s, &format!("block{i}"), config.width, config.kernel, 2))
                        .collect::<Result<_>>()?,
                    norm: if norm { Some(s.layer_norm("norm", config.width)?) } else { None },
                    output: s.linear("output", config.width, output)?,
                })
            };
            let encoder = stack("encoder", bins, config.latent_dim, config.encoder_depth, true)?;
            let decoder = stack("decoder", config.latent_dim, bins, config.decoder_depth, false)?;
            let mut cb = init.sub("codebook");
            let codebooks = (1..=config.stages)
                .map(|n| {
                    cb.tensor(
                        &format!("stage{n}"),
                        &[config.codebook_size, config.latent_dim],
                        Dist::Normal(0.5f64.powi(n as i32 - 1)),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            (encoder, decoder, codebooks)
        };
        Ok(Self {
            mdct: TensorMdct::new(config.mdct_frame_length)?,
            mel_loss: MultiResolutionMelLoss::new(config.sample_rate_hz)?,
            config,
            params,
            encoder,
            decoder,
            codebooks,
        })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn num_frames(&self, num_samples: usize) -> usize {
        self.mdct.num_frames(num_samples)
    }

    fn check_rate(&self, w: &Waveform) -> Result<()> {
        if w.sample_rate_hz() != self.config.sample_rate_hz {
            return invalid(format!(
                "waveform rate {} Hz, codec expects {} Hz",
                w.sample_rate_hz(),
                self.config.sample_rate_hz
            ));
        }
        Ok(())
    }

    /// `(B, n)` samples → `(B, T, K)` latents.
    pub fn encode_batch(&self, x: &Tensor) -> Result<Tensor> {
        self.encoder.forward(&self.mdct.forward(x)?)
    }

    /// `(B, T, K)` embeddings → `(B, T, hop)` MDCT coefficients.
    pub fn decode_coefficients(&self, e: &Tensor) -> Result<Tensor> {
        if e.dim(2)? != self.config.latent_dim {
            return invalid(format!("embedding dim {} != K = {}", e.dim(2)?, self.config.latent_dim));
        }
        self.decoder.forward(e)
    }

    /// `(B, T, K)` embeddings → `(B, (T - 1) * hop)` samples.
    pub fn decode_batch(&self, e: &Tensor) -> Result<Tensor> {
        self.mdct.inverse(&self.decode_coefficients(e)?)
    }

    /// Snapshot of the current codebooks as a core quantizer.
    pub fn quantizer(&self) -> Result<ResidualQuantizer> {
        let books = self
            .codebooks
            .iter()
            .map(|t| {
                Ok(Codebook::new(
                    t.flatten_all()?.to_vec1::<f64>()?,
                    self.config.codebook_size,
                    self.config.latent_dim,
                )?)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ResidualQuantizer::new(books)?)
    }

    pub fn codebook_tensor(&self, stage: usize) -> &Tensor {
        &self.codebooks[stage - 1]
    }

    pub fn encode(&self, w: &Waveform) -> Result<LatentSequence> {
        self.check_rate(w)?;
        let x = tensor_from(w.samples().to_vec(), &[1, w.len()])?;
        LatentSequence::from_tensor(&self.encode_batch(&x)?)
    }

    /// Quantizes latents frame by frame.
    pub fn quantize(&self, latents: &LatentSequence) -> Result<Vec<TokenFrame>> {
        let q = self.quantizer()?;
        (0..latents.num_frames)
            .map(|t| Ok(q.quantize(latents.frame(t))?.tokens))
            .collect()
    }

    pub fn tokenize(&self, w: &Waveform) -> Result<Vec<TokenFrame>> {
        self.quantize(&self.encode(w)?)
    }

    /// Sum of the first `up_to` stage codevectors per frame.
    pub fn dequantize(&self, tokens: &[TokenFrame], up_to: usize) -> Result<LatentSequence> {
        let q = self.quantizer()?;
        let mut frames = Vec::with_capacity(tokens.len() * self.config.latent_dim);
        for f in tokens {
            frames.extend(q.dequantize(f, up_to)?);
        }
        LatentSequence::new(frames, tokens.len(), self.config.latent_dim)
    }

    pub fn decode_embeddings(&self, e: &LatentSequence) -> Result<Waveform> {
        if e.dim != self.config.latent_dim {
            return invalid(format!("embedding dim {} != K = {}", e.dim, self.config.latent_dim));
        }
        if e.num_frames == 0 {
            return Ok(Waveform::zeros(0, self.config.sample_rate_hz)?);
        }
        let out = self.decode_batch(&e.to_tensor()?)?;
        Ok(Waveform::new(out.flatten_all()?.to_vec1::<f64>()?, self.config.sample_rate_hz)?)
    }

    /// Tokenize, keep `up_to` stages, decode.
    pub fn reconstruct(&self, w: &Waveform, up_to: usize) -> Result<Waveform> {
        self.decode_embeddings(&self.dequantize(&self.tokenize(w)?, up_to)?)
    }

    /// Replaces the codebooks by residual k-means over the latents of `x`.
    pub fn init_codebooks(&self, x: &Tensor, kmeans: KMeansConfig) -> Result<()> {
        let z = self.encode_batch(x)?;
        let k = self.config.latent_dim;
        let flat = z.flatten_all()?.to_vec1::<f64>()?;
        let samples: Vec<Vec<f64>> = flat.chunks(k).map(<[f64]>::to_vec).collect();
        let q = init_codebooks_with(&samples, self.config.stages, self.config.codebook_size, kmeans)?;
        for (n, book) in q.codebooks().iter().enumerate() {
            let name = format!("codebook.stage{}", n + 1);
            let var: &Var = self.params.get(&name).expect("codebook variable");
            var.set(&tensor_from(book.as_slice().to_vec(), &[self.config.codebook_size, k])?)?;
        }
        Ok(())
    }

    /// Spectral, quantization and MDCT terms for a `(B, n)` batch, with a
    /// straight-through estimator around the quantizer.
    pub fn training_loss(&self, x: &Tensor) -> Result<CodecLoss> {
        self.loss(x, true)
    }

    /// Autoencoder loss with the quantizer bypassed, for warm-up before the
    /// codebooks are fitted.
    pub fn warmup_loss(&self, x: &Tensor) -> Result<CodecLoss> {
        self.loss(x, false)
    }

    fn loss(&self, x: &Tensor, quantize: bool) -> Result<CodecLoss> {
        let (b, n) = x.dims2()?;
        if b == 0 || n == 0 {
            return invalid("empty batch");
        }
        let coeffs = self.mdct.forward(x)?;
        let z = self.encoder.forward(&coeffs)?;
        let (_, t, k) = z.dims3()?;
        let z2 = z.reshape((b * t, k))?;

        if !quantize {
            let decoded = self.decoder.forward(&z)?;
            let y = self.mdct.inverse(&decoded)?.narrow(1, 0, n)?;
            let spectral = self.mel_loss.forward(&y, x)?;
            let energy = (coeffs.sqr()?.mean_all()? + 1e-8)?;
            let mdct = (decoded - &coeffs)?.sqr()?.mean_all()?.div(&energy)?;
            let total = (&spectral + (&mdct * self.config.mdct_loss_weight)?)?;
            return Ok(CodecLoss {
                spectral: spectral.to_scalar()?,
                quantization: 0.0,
                mdct: mdct.to_scalar()?,
                total,
                tokens: Vec::new(),
                stage_inputs: Vec::new(),
            });
        }
        let q = self.quantizer()?;
        let flat = z2.to_vec2::<f64>()?;
        let stages = self.config.stages;
        let mut idx = vec![Vec::with_capacity(b * t); stages];
        let mut stage_inputs = vec![Vec::with_capacity(b * t * k); stages];
        for frame in &flat {
            let r = q.quantize(frame)?;
            for (stage, &tok) in r.tokens.0.iter().enumerate() {
                idx[stage].push(tok - 1);
                stage_inputs[stage].extend_from_slice(&r.residuals[stage]);
            }
        }
        let tokens = idx.clone();

        let mut residual = z2.clone();
        let mut quantized = Tensor::zeros((b * t, k), DType::F64, &device())?;
        let mut quant_loss = Tensor::zeros((), DType::F64, &device())?;
        for (stage, ids) in idx.into_iter().enumerate() {
            let ids = Tensor::from_vec(ids, b * t, &device())?;
            let qn = self.codebooks[stage].index_select(&ids, 0)?;
            let codebook_term = (residual.detach() - &qn)?.sqr()?.sum(1)?.mean_all()?;
            let commit_term = (&residual - qn.detach())?.sqr()?.sum(1)?.mean_all()?;
            quant_loss = ((quant_loss + codebook_term)? + (commit_term * COMMITMENT_WEIGHT)?)?;
            residual = (residual - qn.detach())?;
            quantized = (quantized + qn)?;
        }
        let straight = (&z2 + (quantized - &z2)?.detach())?.reshape((b, t, k))?;
        let decoded = self.decoder.forward(&straight)?;
        let y = self.mdct.inverse(&decoded)?.narrow(1, 0, n)?;

        let spectral = self.mel_loss.forward(&y, x)?;
        let energy = (coeffs.sqr()?.mean_all()? + 1e-8)?;
        let mdct = (decoded - &coeffs)?.sqr()?.mean_all()?.div(&energy)?;
        let total = ((&spectral + &quant_loss)? + (&mdct * self.config.mdct_loss_weight)?)?;
        Ok(CodecLoss {
            spectral: spectral.to_scalar()?,
            quantization: quant_loss.to_scalar()?,
            mdct: mdct.to_scalar()?,
            total,
            tokens,
            stage_inputs,
        })
    }

    /// Overwrites codevector `index` (0-based) of `stage` (1-based).
    pub fn set_codevector(&self, stage: usize, index: usize, value: &[f64]) -> Result<()> {
        let (m, k) = (self.config.codebook_size, self.config.latent_dim);
        if value.len() != k || index >= m || stage == 0 || stage > self.config.stages {
            return invalid("codevector out of range");
        }
        let var = self.params.get(&format!("codebook.stage{stage}")).expect("codebook variable");
        let mut rows = var.as_tensor().flatten_all()?.to_vec1::<f64>()?;
        rows[index * k..(index + 1) * k].copy_from_slice(value);
        var.set(&tensor_from(rows, &[m, k])?)?;
        Ok(())
    }
}

/// Counts codebook usage over a window of training steps and re-seeds codes
/// that went unused with residuals drawn from the latest batch.
#[derive(Debug, Clone)]
pub struct DeadCodeMonitor {
    interval: usize,
    counts: Vec<Vec<usize>>,
    steps: usize,
}

impl DeadCodeMonitor {
    pub fn new(stages: usize, codebook_size: usize, interval: usize) -> Self {
        Self {
            interval,
            counts: vec![vec![0; codebook_size]; stages],
            steps: 0,
        }
    }

    /// Records one batch; at the end of each window restarts dead codes and
    /// returns how many were replaced.
    pub fn observe<R: rand::Rng>(&mut self, model: &CodecModel, loss: &CodecLoss, rng: &mut R) -> Result<usize> {
        for (counts, toks) in self.counts.iter_mut().zip(&loss.tokens) {
            for &t in toks {
                counts[t as usize] += 1;
            }
        }
        self.steps += 1;
        if self.interval == 0 || self.steps % self.interval != 0 {
            return Ok(0);
        }
        let k = model.config().latent_dim;
        let mut replaced = 0;
        for (stage, counts) in self.counts.iter_mut().enumerate() {
            let inputs = &loss.stage_inputs[stage];
            let frames = inputs.len() / k;
            if frames == 0 {
                continue;
            }
            for (code, c) in counts.iter_mut().enumerate() {
                if *c == 0 {
                    let f = rng.random_range(0..frames);
                    model.set_codevector(stage + 1, code, &inputs[f * k..(f + 1) * k])?;
                    replaced += 1;
                }
                *c = 0;
            }
        }
        Ok(replaced)
    }
}

/// Tokens of one stage (1-based) across frames.
pub fn stage_tokens(tokens: &[TokenFrame], stage: usize) -> Vec<u32> {
    tokens.iter().map(|f| f.0[stage - 1]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny() -> CodecConfig {
        CodecConfig {
            sample_rate_hz: 8000,
            mdct_frame_length: 16,
            latent_dim: 3,
            stages: 2,
            codebook_size: 4,
            width: 8,
            encoder_depth: 1,
            decoder_depth: 1,
            kernel: 3,
            mdct_loss_weight: 1.0,
        }
    }

    fn wave(n: usize) -> Waveform {
        Waveform::new((0..n).map(|i| (i as f64 * 0.21).sin() * 0.3).collect(), 8000).unwrap()
    }

    #[test]
    fn shapes_and_paths() {
        let m = CodecModel::new(tiny(), 3).unwrap();
        let w = wave(100);
        let z = m.encode(&w).unwrap();
        assert_eq!(z.num_frames, m.num_frames(100));
        assert_eq!(z.dim, 3);
        assert_eq!(m.encode(&w).unwrap(), z);
        let toks = m.tokenize(&w).unwrap();
        assert_eq!(toks.len(), z.num_frames);
        assert!(toks.iter().flat_map(|f| &f.0).all(|&t| (1..=4).contains(&t)));
        let direct = m.decode_embeddings(&m.dequantize(&toks, 2).unwrap()).unwrap();
        assert_eq!(direct, m.reconstruct(&w, 2).unwrap());
        assert_eq!(direct.len(), (z.num_frames - 1) * 8);
        let silent = m.encode(&Waveform::zeros(50, 8000).unwrap()).unwrap();
        assert!(silent.frames.iter().all(|v| v.is_finite()));
        assert!(m.encode(&Waveform::zeros(50, 16000).unwrap()).is_err());
    }

    #[test]
    fn token_rate_reduced() {
        let r = CodecConfig::desk().token_rate().unwrap();
        assert_eq!((r.num, r.den), (100, 1));
        let r = CodecConfig::paper().token_rate().unwrap();
        assert_eq!((r.num, r.den), (25, 1));
    }

    #[test]
    fn kmeans_init_sets_codebooks() {
        let m = CodecModel::new(tiny(), 3).unwrap();
        let x = tensor_from(wave(200).into_samples(), &[1, 200]).unwrap();
        let before = m.quantizer().unwrap();
        m.init_codebooks(&x, KMeansConfig::default()).unwrap();
        assert_ne!(before, m.quantizer().unwrap());
        let loss = m.training_loss(&x).unwrap();
        assert!(loss.total.to_scalar::<f64>().unwrap() >= 0.0);
    }
}
