//! Auxiliary-token serial prediction: base tokens → tokens of quantizer
//! stages 2..N, one sub-predictor per stage.

use candle_core::{Tensor, D};
use codesep_core::rvq::{ResidualQuantizer, TokenFrame};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::btd::argmax_token;
use crate::error::{config, invalid, Result};
use crate::layers::{ConformerBlock, LayerNorm, Linear, Lstm};
use crate::params::{device, tensor_from, Init, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtspConfig {
    /// Codec latent dimension `K`.
    pub latent_dim: usize,
    /// Codec stages `N`; there are `N - 1` sub-predictors.
    pub stages: usize,
    pub codebook_size: usize,
    pub d_model: usize,
    pub lstm_layers: usize,
    pub conformer_blocks: usize,
    pub heads: usize,
    pub ff_mult: usize,
    pub conv_kernel: usize,
}

impl AtspConfig {
    pub fn desk() -> Self {
        Self {
            latent_dim: 8,
            stages: 4,
            codebook_size: 64,
            d_model: 64,
            lstm_layers: 1,
            conformer_blocks: 1,
            heads: 4,
            ff_mult: 2,
            conv_kernel: 7,
        }
    }

    pub fn paper() -> Self {
        Self {
            latent_dim: 32,
            stages: 4,
            codebook_size: 1024,
            d_model: 256,
            lstm_layers: 2,
            conformer_blocks: 3,
            heads: 4,
            ff_mult: 4,
            conv_kernel: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages < 2 {
            return config("at least two quantizer stages are needed");
        }
        if self.latent_dim == 0 || self.codebook_size < 2 || self.conv_kernel == 0 {
            return config("latent dim, kernel must be positive and M >= 2");
        }
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return config(format!("d_model {} must be a positive multiple of {} heads", self.d_model, self.heads));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct SubPredictor {
    input: Linear,
    input_norm: LayerNorm,
    lstm: Vec<Lstm>,
    conformer: Vec<ConformerBlock>,
    head: Linear,
}

impl SubPredictor {
    fn new(init: &mut Init, name: &str, c: &AtspConfig) -> Result<Self> {
        let mut s = init.sub(name);
        Ok(Self {
            input: s.linear("input", c.latent_dim, c.d_model)?,
            input_norm: s.layer_norm("input_norm", c.d_model)?,
            lstm: (0..c.lstm_layers)
                .map(|i| Lstm::new(&mut s, &format!("lstm{i}"), c.d_model, c.d_model))
                .collect::<Result<_>>()?,
            conformer: (0..c.conformer_blocks)
                .map(|i| ConformerBlock::new(&mut s, &format!("conformer{i}"), c.d_model, c.heads, c.ff_mult, c.conv_kernel))
                .collect::<Result<_>>()?,
            head: s.linear("head", c.d_model, c.codebook_size)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = self.input_norm.forward(&self.input.forward(x)?)?;
        for l in &self.lstm {
            h = l.forward(&h)?;
        }
        for c in &self.conformer {
            h = c.forward(&h)?;
        }
        self.head.forward(&h)
    }
}

/// Input of sub-predictor `n` (1-based) for one frame: the base codevector
/// plus the codevectors of aux stages `1..n`.
pub fn sub_predictor_input(base: u32, prefix: &[u32], q: &ResidualQuantizer, n: usize) -> Result<Vec<f64>> {
    if n == 0 || n >= q.stages() {
        return invalid(format!("sub-predictor index {n} outside 1..{}", q.stages() - 1));
    }
    if prefix.len() != n - 1 {
        return invalid(format!("sub-predictor {n} needs {} prefix tokens, got {}", n - 1, prefix.len()));
    }
    let mut v = q.codebook(1).lookup(base)?.to_vec();
    for (i, &tok) in prefix.iter().enumerate() {
        for (acc, c) in v.iter_mut().zip(q.codebook(i + 2).lookup(tok)?) {
            *acc += c;
        }
    }
    Ok(v)
}

/// Teacher-forced cross-entropy from explicit per-stage distributions:
/// `probs[n]` is `T × M` (row-major) for aux stage `n + 1`, `tokens[t]` the
/// ground-truth frame `d_1..d_N`.
pub fn tf_ce_loss(probs: &[Vec<f64>], tokens: &[TokenFrame], codebook_size: usize) -> Result<f64> {
    let t = tokens.len();
    if t == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (n, p) in probs.iter().enumerate() {
        if p.len() != t * codebook_size {
            return invalid("distribution size does not match T × M");
        }
        for (f, frame) in tokens.iter().enumerate() {
            let target = *frame
                .0
                .get(n + 1)
                .ok_or_else(|| crate::Error::InvalidArgument("token frame shorter than stage count".into()))?;
            if target == 0 || target as usize > codebook_size {
                return invalid(format!("token {target} outside 1..={codebook_size}"));
            }
            total -= p[f * codebook_size + target as usize - 1].ln();
        }
    }
    Ok(total / t as f64)
}

#[derive(Debug, Clone)]
pub struct AtspModel {
    config: AtspConfig,
    params: ParamStore,
    subs: Vec<SubPredictor>,
}

impl AtspModel {
    pub fn new(config: AtspConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let subs = {
            let mut init = params.init(&mut rng);
            (1..config.stages)
                .map(|n| SubPredictor::new(&mut init, &format!("sub{n}"), &config))
                .collect::<Result<Vec<_>>>()?
        };
        Ok(Self { config, params, subs })
    }

    pub fn config(&self) -> &AtspConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    fn check_quantizer(&self, q: &ResidualQuantizer) -> Result<()> {
        let c = &self.config;
        if q.stages() != c.stages || q.codebook_size() != c.codebook_size || q.dim() != c.latent_dim {
            return config(format!(
                "quantizer is N={} M={} K={}, predictor expects N={} M={} K={}",
                q.stages(),
                q.codebook_size(),
                q.dim(),
                c.stages,
                c.codebook_size,
                c.latent_dim
            ));
        }
        Ok(())
    }

    /// Logits of sub-predictor `n` (1-based) for `(B, T, K)` inputs.
    pub fn stage_logits(&self, n: usize, inputs: &Tensor) -> Result<Tensor> {
        if n == 0 || n > self.subs.len() {
            return invalid(format!("sub-predictor index {n} outside 1..={}", self.subs.len()));
        }
        self.subs[n - 1].forward(inputs)
    }

    /// Per-frame probabilities of sub-predictor `n` on explicit inputs (`T × K`).
    pub fn stage_probs(&self, n: usize, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        let t = inputs.len();
        let k = self.config.latent_dim;
        let flat: Vec<f64> = inputs.iter().flatten().copied().collect();
        if flat.len() != t * k {
            return invalid("inputs must be K-dimensional");
        }
        let logits = self.stage_logits(n, &tensor_from(flat, &[1, t, k])?)?;
        Ok(candle_nn::ops::softmax(&logits, D::Minus1)?.flatten_all()?.to_vec1()?)
    }

    /// Serially predicts aux tokens of stages 2..N from base tokens; returns
    /// `(N - 1) × T`.
    pub fn predict_aux(&self, base: &[u32], q: &ResidualQuantizer) -> Result<Vec<Vec<u32>>> {
        self.check_quantizer(q)?;
        let m = self.config.codebook_size;
        if base.iter().any(|&t| t == 0 || t as usize > m) {
            return invalid(format!("base tokens must lie in 1..={m}"));
        }
        let mut aux: Vec<Vec<u32>> = Vec::with_capacity(self.subs.len());
        if base.is_empty() {
            return Ok(vec![Vec::new(); self.subs.len()]);
        }
        for n in 1..=self.subs.len() {
            let inputs = (0..base.len())
                .map(|t| {
                    let prefix: Vec<u32> = aux.iter().map(|s| s[t]).collect();
                    sub_predictor_input(base[t], &prefix, q, n)
                })
                .collect::<Result<Vec<_>>>()?;
            let probs = self.stage_probs(n, &inputs)?;
            aux.push(probs.chunks(m).map(argmax_token).collect());
        }
        Ok(aux)
    }

    /// Full token frames `(base, aux_1, ..)` for a base-token sequence.
    pub fn complete(&self, base: &[u32], q: &ResidualQuantizer) -> Result<Vec<TokenFrame>> {
        let aux = self.predict_aux(base, q)?;
        Ok((0..base.len())
            .map(|t| TokenFrame(std::iter::once(base[t]).chain(aux.iter().map(|s| s[t])).collect()))
            .collect())
    }

    /// Teacher-forced cross-entropy on a batch: `tokens` is `(B, T, N)`
    /// 0-based `u32`; the mean over frames of the summed stage losses.
    pub fn training_loss(&self, tokens: &Tensor, q: &ResidualQuantizer) -> Result<Tensor> {
        self.check_quantizer(q)?;
        let (b, t, n) = tokens.dims3()?;
        if n != self.config.stages {
            return invalid(format!("token tensor has {n} stages, expected {}", self.config.stages));
        }
        let k = self.config.latent_dim;
        let books = q
            .codebooks()
            .iter()
            .map(|c| tensor_from(c.as_slice().to_vec(), &[c.size(), k]))
            .collect::<Result<Vec<_>>>()?;
        let stage = |s: usize| -> Result<Tensor> { Ok(tokens.narrow(2, s, 1)?.squeeze(2)?.contiguous()?) };
        let lookup = |s: usize| -> Result<Tensor> {
            Ok(books[s].index_select(&stage(s)?.flatten_all()?, 0)?.reshape((b, t, k))?)
        };
        let mut inputs = lookup(0)?;
        let mut total = Tensor::zeros((), crate::DTYPE, &device())?;
        for sub in 1..n {
            let logits = self.stage_logits(sub, &inputs)?;
            let lp = candle_nn::ops::log_softmax(&logits, D::Minus1)?;
            let nll = lp.gather(&stage(sub)?.unsqueeze(2)?, 2)?.neg()?.mean_all()?;
            total = (total + nll)?;
            if sub + 1 < n {
                inputs = (inputs + lookup(sub)?)?;
            }
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use codesep_core::rvq::Codebook;

    fn k1_quantizer() -> ResidualQuantizer {
        ResidualQuantizer::new(vec![
            Codebook::from_rows(&[vec![-1.0], vec![1.0]]).unwrap(),
            Codebook::from_rows(&[vec![-0.25], vec![0.25]]).unwrap(),
            Codebook::from_rows(&[vec![-0.1], vec![0.1]]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn input_worked_example() {
        let q = k1_quantizer();
        let v = sub_predictor_input(2, &[1, 2], &q, 3);
        // n = 3 exceeds N - 1 = 2 for a three-stage quantizer
        assert!(v.is_err());
        let four = ResidualQuantizer::new(
            q.codebooks()
                .iter()
                .cloned()
                .chain(std::iter::once(Codebook::from_rows(&[vec![0.0], vec![0.0]]).unwrap()))
                .collect(),
        )
        .unwrap();
        let v = sub_predictor_input(2, &[1, 2], &four, 3).unwrap();
        assert!((v[0] - 0.85).abs() < 1e-12);
        assert_eq!(sub_predictor_input(2, &[], &four, 1).unwrap(), vec![1.0]);
        assert!(sub_predictor_input(2, &[1], &four, 1).is_err());
    }

    #[test]
    fn tf_ce_examples() {
        let toks = vec![TokenFrame(vec![1, 2])];
        let v = tf_ce_loss(&[vec![0.2, 0.5, 0.3]], &toks, 3).unwrap();
        assert!((v - 0.5f64.ln().abs()).abs() < 1e-12);
        let u = tf_ce_loss(&[vec![1.0 / 3.0; 3]], &toks, 3).unwrap();
        assert!((u - 3f64.ln()).abs() < 1e-12);
        assert_eq!(tf_ce_loss(&[vec![0.0, 1.0, 0.0]], &toks, 3).unwrap(), 0.0);
    }

    #[test]
    fn predict_shapes_and_loss_consistency() {
        let cfg = AtspConfig {
            latent_dim: 1,
            stages: 3,
            codebook_size: 2,
            d_model: 8,
            lstm_layers: 1,
            conformer_blocks: 1,
            heads: 2,
            ff_mult: 2,
            conv_kernel: 3,
        };
        let m = AtspModel::new(cfg, 5).unwrap();
        let q = k1_quantizer();
        let base = [1, 2, 2, 1, 2];
        let aux = m.predict_aux(&base, &q).unwrap();
        assert_eq!(aux.len(), 2);
        assert!(aux.iter().all(|s| s.len() == 5 && s.iter().all(|&t| t == 1 || t == 2)));
        assert_eq!(aux, m.predict_aux(&base, &q).unwrap());

        let frames: Vec<TokenFrame> = (0..5).map(|t| TokenFrame(vec![base[t], aux[0][t], 3 - aux[1][t]])).collect();
        let probs: Vec<Vec<f64>> = (1..=2)
            .map(|n| {
                let inputs: Vec<Vec<f64>> = frames
                    .iter()
                    .map(|f| sub_predictor_input(f.0[0], &f.0[1..n], &q, n).unwrap())
                    .collect();
                m.stage_probs(n, &inputs).unwrap()
            })
            .collect();
        let expected = tf_ce_loss(&probs, &frames, 2).unwrap();
        let flat: Vec<u32> = frames.iter().flat_map(|f| f.0.iter().map(|t| t - 1)).collect();
        let tokens = Tensor::from_vec(flat, (1, 5, 3), &device()).unwrap();
        let got = m.training_loss(&tokens, &q).unwrap().to_scalar::<f64>().unwrap();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }
}
