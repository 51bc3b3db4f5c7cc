//! Residual vector quantization.
//!
//! Tokens are 1-based in every public API: stage `n` emits an index in
//! `1..=M` selecting row `index - 1` of codebook `n`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Weight of the commitment term in [`quantization_loss`].
pub const COMMITMENT_WEIGHT: f64 = 1.0;

/// `M × K` codevectors of one quantizer stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    vectors: Vec<f64>,
    size: usize,
    dim: usize,
}

impl Codebook {
    pub fn new(vectors: Vec<f64>, size: usize, dim: usize) -> Result<Self> {
        if size < 2 {
            return invalid(format!("codebook size must be at least 2, got {size}"));
        }
        if dim == 0 {
            return invalid("codevector dimension must be at least 1");
        }
        if vectors.len() != size * dim {
            return invalid(format!(
                "{} values do not form a {size}x{dim} codebook",
                vectors.len()
            ));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return invalid("codebook entries must be finite");
        }
        Ok(Self { vectors, size, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return invalid("codebook rows have different lengths");
        }
        Self::new(rows.concat(), rows.len(), dim)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vectors
    }

    fn row(&self, index0: usize) -> &[f64] {
        &self.vectors[index0 * self.dim..(index0 + 1) * self.dim]
    }

    /// Codevector for a 1-based token.
    pub fn lookup(&self, token: u32) -> Result<&[f64]> {
        if token == 0 || token as usize > self.size {
            return invalid(format!("token {token} outside 1..={}", self.size));
        }
        Ok(self.row(token as usize - 1))
    }

    /// Nearest codevector to `v` (1-based), ties to the smallest index.
    pub fn nearest(&self, v: &[f64]) -> u32 {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for m in 0..self.size {
            let d = sq_dist(self.row(m), v);
            if d < best_d {
                best_d = d;
                best = m;
            }
        }
        best as u32 + 1
    }
}

pub fn lookup(token: u32, codebook: &Codebook) -> Result<&[f64]> {
    codebook.lookup(token)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Per-stage token indices of one frame, 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenFrame(pub Vec<u32>);

impl TokenFrame {
    pub fn stages(&self) -> usize {
        self.0.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationResult {
    pub tokens: TokenFrame,
    pub quantized: Vec<f64>,
    /// `r_1 = z`, `r_{n+1} = r_n - w_{n, tokens[n]}`; `N + 1` entries.
    pub residuals: Vec<Vec<f64>>,
}

impl QuantizationResult {
    pub fn final_residual(&self) -> &[f64] {
        self.residuals.last().expect("at least one residual")
    }
}

/// `N` codebooks with shared `M` and `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualQuantizer {
    codebooks: Vec<Codebook>,
}

impl ResidualQuantizer {
    pub fn new(codebooks: Vec<Codebook>) -> Result<Self> {
        if codebooks.len() < 2 {
            return invalid(format!(
                "a residual quantizer needs at least 2 stages, got {}",
                codebooks.len()
            ));
        }
        let (m, k) = (codebooks[0].size, codebooks[0].dim);
        if codebooks.iter().any(|c| c.size != m || c.dim != k) {
            return invalid("all codebooks must share size and dimension");
        }
        Ok(Self { codebooks })
    }

    pub fn stages(&self) -> usize {
        self.codebooks.len()
    }

    pub fn codebook_size(&self) -> usize {
        self.codebooks[0].size
    }

    pub fn dim(&self) -> usize {
        self.codebooks[0].dim
    }

    /// Codebook of stage `n` (1-based).
    pub fn codebook(&self, n: usize) -> &Codebook {
        &self.codebooks[n - 1]
    }

    pub fn codebooks(&self) -> &[Codebook] {
        &self.codebooks
    }

    pub fn quantize(&self, z: &[f64]) -> Result<QuantizationResult> {
        if z.len() != self.dim() {
            return invalid(format!(
                "vector of dimension {} given to a {}-dimensional quantizer",
                z.len(),
                self.dim()
            ));
        }
        let mut residuals = Vec::with_capacity(self.stages() + 1);
        let mut tokens = Vec::with_capacity(self.stages());
        let mut quantized = vec![0.0; self.dim()];
        let mut r = z.to_vec();
        for cb in &self.codebooks {
            let tok = cb.nearest(&r);
            let w = cb.row(tok as usize - 1);
            let next: Vec<f64> = r.iter().zip(w).map(|(a, b)| a - b).collect();
            for (q, c) in quantized.iter_mut().zip(w) {
                *q += c;
            }
            residuals.push(std::mem::replace(&mut r, next));
            tokens.push(tok);
        }
        residuals.push(r);
        Ok(QuantizationResult {
            tokens: TokenFrame(tokens),
            quantized,
            residuals,
        })
    }

    /// Sum of the first `up_to` stage codevectors.
    pub fn dequantize(&self, tokens: &TokenFrame, up_to: usize) -> Result<Vec<f64>> {
        if up_to == 0 || up_to > self.stages() {
            return invalid(format!("up_to {up_to} outside 1..={}", self.stages()));
        }
        if tokens.stages() < up_to {
            return invalid(format!(
                "token frame has {} stages, {up_to} requested",
                tokens.stages()
            ));
        }
        let mut out = vec![0.0; self.dim()];
        for (cb, &tok) in self.codebooks.iter().zip(&tokens.0).take(up_to) {
            for (o, c) in out.iter_mut().zip(cb.lookup(tok)?) {
                *o += c;
            }
        }
        Ok(out)
    }
}

/// Codebook term plus commitment term, summed over stages. Both terms share
/// the value `‖r_n - w_n‖²` in the forward pass; they differ only in which
/// side receives gradient during training.
pub fn quantization_loss(z: &[f64], result: &QuantizationResult) -> Result<f64> {
    if result.residuals.first().map(Vec::as_slice) != Some(z) {
        return invalid("quantization result does not belong to this vector");
    }
    Ok(result.residuals[1..]
        .iter()
        .map(|r| (1.0 + COMMITMENT_WEIGHT) * r.iter().map(|v| v * v).sum::<f64>())
        .sum())
}

#[derive(Debug, Clone, Copy)]
pub struct KMeansConfig {
    pub iterations: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            iterations: 50,
            seed: 0,
        }
    }
}

/// Stage-wise k-means: stage `n` is fit on the residuals left by stages `1..n`.
pub fn init_codebooks(samples: &[Vec<f64>], stages: usize, size: usize) -> Result<ResidualQuantizer> {
    init_codebooks_with(samples, stages, size, KMeansConfig::default())
}

pub fn init_codebooks_with(
    samples: &[Vec<f64>],
    stages: usize,
    size: usize,
    cfg: KMeansConfig,
) -> Result<ResidualQuantizer> {
    if samples.len() < size {
        return invalid(format!(
            "{} samples cannot seed {size} codevectors",
            samples.len()
        ));
    }
    let dim = samples[0].len();
    if dim == 0 || samples.iter().any(|s| s.len() != dim) {
        return invalid("samples must share a nonzero dimension");
    }
    let mut residuals: Vec<Vec<f64>> = samples.to_vec();
    let mut codebooks = Vec::with_capacity(stages);
    for stage in 0..stages {
        let seed = cfg.seed.wrapping_add(stage as u64);
        let cb = kmeans(&residuals, size, cfg.iterations, seed)?;
        for r in residuals.iter_mut() {
            let tok = cb.nearest(r);
            for (v, c) in r.iter_mut().zip(cb.row(tok as usize - 1)) {
                *v -= c;
            }
        }
        codebooks.push(cb);
    }
    ResidualQuantizer::new(codebooks)
}

fn kmeans(points: &[Vec<f64>], k: usize, iterations: usize, seed: u64) -> Result<Codebook> {
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<f64> = sample(&mut rng, points.len(), k)
        .into_iter()
        .flat_map(|i| points[i].iter().copied())
        .collect();
    let mut assign = vec![0usize; points.len()];
    for _ in 0..iterations {
        let cb = Codebook::new(centroids.clone(), k, dim)?;
        for (a, p) in assign.iter_mut().zip(points) {
            *a = cb.nearest(p) as usize - 1;
        }
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (&a, p) in assign.iter().zip(points) {
            counts[a] += 1;
            for (s, v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut taken = vec![false; points.len()];
        for c in 0..k {
            if counts[c] > 0 {
                for d in 0..dim {
                    centroids[c * dim + d] = sums[c * dim + d] / counts[c] as f64;
                }
            } else {
                // Empty cluster: move it onto the point worst served by its centroid.
                let worst = (0..points.len())
                    .filter(|&i| !taken[i])
                    .max_by(|&i, &j| {
                        let di = sq_dist(&points[i], &centroids[assign[i] * dim..(assign[i] + 1) * dim]);
                        let dj = sq_dist(&points[j], &centroids[assign[j] * dim..(assign[j] + 1) * dim]);
                        di.total_cmp(&dj).then(j.cmp(&i))
                    })
                    .expect("at least k points");
                taken[worst] = true;
                centroids[c * dim..(c + 1) * dim].copy_from_slice(&points[worst]);
            }
        }
    }
    Codebook::new(centroids, k, dim)
}
