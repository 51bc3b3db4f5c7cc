//! Training of the four independently trained models.

use std::path::{Path, PathBuf};

use candle_core::Tensor;
use codesep_core::rvq::KMeansConfig;
use codesep_core::synth::Split;
use codesep_nn::atsp::AtspModel;
use codesep_nn::btd::BtdModel;
use codesep_nn::checkpoint::{Checkpoint, Stage};
use codesep_nn::codec::{stage_tokens, CodecModel, DeadCodeMonitor};
use codesep_nn::params::{device, tensor_from, ParamStore};
use codesep_nn::separator::MaskSeparator;
use codesep_nn::train::Trainer;
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::{aligned_offset, load_mixtures, load_singles};
use crate::error::{config, Error, Result};
use crate::models::load_codec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
}

/// Summary written next to the checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub stage: Stage,
    pub steps: usize,
    /// Stage loss on a fixed batch of training crops before any update.
    pub probe_initial_loss: f64,
    /// Same batch and loss after the final update.
    pub probe_final_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub summary: TrainSummary,
    pub losses: Vec<LossRecord>,
    pub checkpoint: Checkpoint,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

pub fn loss_log_path(checkpoint: &Path) -> PathBuf {
    sibling(checkpoint, ".losses.jsonl")
}

pub fn summary_path(checkpoint: &Path) -> PathBuf {
    sibling(checkpoint, ".summary.json")
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_scalar::<f64>().map_err(codesep_nn::Error::from)?)
}

/// Draws crops for the probe batch from its own stream so the training
/// sequence does not depend on it.
fn probe_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

struct Run<'a> {
    cfg: &'a TrainConfig,
    losses: Vec<LossRecord>,
}

impl Run<'_> {
    fn record(
        &mut self,
        step: usize,
        loss: f64,
        rng: &ChaCha8Rng,
        model_config: &impl Serialize,
        params: &ParamStore,
    ) -> Result<()> {
        self.losses.push(LossRecord { step, loss });
        let done = step + 1;
        if self.cfg.log_interval > 0 && (step % self.cfg.log_interval == 0 || done == self.cfg.max_steps) {
            info!("{} step {step} loss {loss:.5}", self.cfg.stage);
        }
        let every = self.cfg.checkpoint_interval;
        if every > 0 && done % every == 0 && done < self.cfg.max_steps {
            let ck = Checkpoint::capture(self.cfg.stage, model_config, done as u64, Some(rng), params)?;
            ck.save(sibling(&self.cfg.output, &format!(".step{done}")))?;
        }
        Ok(())
    }

    fn finish(
        self,
        rng: &ChaCha8Rng,
        model_config: &impl Serialize,
        params: &ParamStore,
        probe: (f64, f64),
    ) -> Result<TrainReport> {
        let cfg = self.cfg;
        let checkpoint = Checkpoint::capture(cfg.stage, model_config, cfg.max_steps as u64, Some(rng), params)?;
        if let Some(dir) = cfg.output.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        checkpoint.save(&cfg.output)?;
        let log: String = self
            .losses
            .iter()
            .map(|r| serde_json::to_string(r).map(|s| s + "\n"))
            .collect::<std::result::Result<_, _>>()?;
        std::fs::write(loss_log_path(&cfg.output), log)?;
        let summary = TrainSummary {
            stage: cfg.stage,
            steps: cfg.max_steps,
            probe_initial_loss: probe.0,
            probe_final_loss: probe.1,
        };
        std::fs::write(summary_path(&cfg.output), serde_json::to_string_pretty(&summary)?)?;
        Ok(TrainReport { summary, losses: self.losses, checkpoint })
    }
}

/// Trains the stage named in `cfg` and writes the checkpoint, loss log and
/// summary.
pub fn train(cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if let Some(dir) = cfg.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    match cfg.stage {
        Stage::Codec => train_codec(cfg),
        Stage::Btd => train_btd(cfg),
        Stage::Atsp => train_atsp(cfg),
        Stage::Separator => train_separator(cfg),
    }
}

fn frozen_codec(cfg: &TrainConfig) -> Result<CodecModel> {
    let path = match &cfg.codec_checkpoint {
        Some(p) => p,
        None => return config(format!("the {} stage requires codec_checkpoint", cfg.stage)),
    };
    let codec = load_codec(path)?;
    if codec.config() != &cfg.codec {
        return config(format!("codec checkpoint {} does not match the codec settings", path.display()));
    }
    Ok(codec)
}

fn train_codec(cfg: &TrainConfig) -> Result<TrainReport> {
    let c = &cfg.codec;
    let model = CodecModel::new(c.clone(), cfg.seed)?;
    let data = load_singles(&cfg.data_dir, Split::Train, c.sample_rate_hz)?;
    let crop = cfg.crop_frames * c.hop();
    let batch = |rng: &mut ChaCha8Rng, b: usize| -> Result<Tensor> {
        let mut v = Vec::with_capacity(b * crop);
        for _ in 0..b {
            let w = &data[rng.random_range(0..data.len())].wave;
            let o = aligned_offset(w.len(), crop, c.hop(), rng)?;
            v.extend_from_slice(&w.samples()[o..o + crop]);
        }
        Ok(tensor_from(v, &[b, crop])?)
    };
    let probe = batch(&mut probe_rng(cfg.seed), cfg.batch_size)?;
    let initial = scalar(&model.training_loss(&probe)?.total)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trainer = Trainer::new(model.params().vars(), &cfg.optimizer)?;
    let schedule = &cfg.codec_schedule;
    let mut monitor = DeadCodeMonitor::new(c.stages, c.codebook_size, schedule.dead_code_interval);
    let mut run = Run { cfg, losses: Vec::new() };
    for step in 0..cfg.max_steps {
        let x = batch(&mut rng, cfg.batch_size)?;
        let loss = if step < schedule.warmup_steps {
            trainer.step(&model.warmup_loss(&x)?.total)?
        } else {
            if step == schedule.warmup_steps {
                let seeds = batch(&mut rng, schedule.kmeans_crops)?;
                model.init_codebooks(&seeds, KMeansConfig { iterations: schedule.kmeans_iterations, seed: cfg.seed })?;
            }
            let l = model.training_loss(&x)?;
            let v = trainer.step(&l.total)?;
            monitor.observe(&model, &l, &mut rng)?;
            v
        };
        run.record(step, loss, &rng, c, model.params())?;
    }
    let last = scalar(&model.training_loss(&probe)?.total)?;
    run.finish(&rng, c, model.params(), (initial, last))
}

fn train_btd(cfg: &TrainConfig) -> Result<TrainReport> {
    let codec = frozen_codec(cfg)?;
    let b = &cfg.btd;
    let model = BtdModel::new(b.clone(), cfg.seed)?;
    let fpt = b.mel_frames_per_token();
    let mels = b.num_mels;
    let hop = b.token_hop();
    let tc = cfg.crop_frames;
    let short = |n: usize| Error::Data(format!("an utterance has {n} frames, fewer than the {tc}-frame crop"));
    // Each example is a crop of mel frames plus the stage-1 tokens of both sources.
    let features = &model;
    let draw: Box<dyn Fn(&mut ChaCha8Rng) -> Result<(Vec<f64>, Vec<u32>, Vec<u32>)> + '_> = if cfg.dynamic_mixing {
        let singles = load_singles(&cfg.data_dir, Split::Train, b.sample_rate_hz)?;
        let tokens = singles
            .iter()
            .map(|u| Ok(stage_tokens(&codec.tokenize(&u.wave)?, 1)))
            .collect::<Result<Vec<_>>>()?;
        if let Some(u) = singles.iter().find(|u| u.wave.len() < tc * hop) {
            return Err(short(u.wave.len() / hop));
        }
        if singles.iter().all(|u| u.speaker == singles[0].speaker) {
            return Err(Error::Data("dynamic mixing needs at least two training speakers".into()));
        }
        Box::new(move |rng| {
            let i = rng.random_range(0..singles.len());
            let j = loop {
                let j = rng.random_range(0..singles.len());
                if singles[j].speaker != singles[i].speaker {
                    break j;
                }
            };
            let mut crop = vec![0.0; tc * hop];
            let mut targets = [Vec::new(), Vec::new()];
            for (k, t) in [i, j].into_iter().zip(&mut targets) {
                let o = aligned_offset(singles[k].wave.len(), tc * hop, hop, rng)?;
                for (c, v) in crop.iter_mut().zip(&singles[k].wave.samples()[o..o + tc * hop]) {
                    *c += v;
                }
                *t = tokens[k][o / hop..o / hop + tc].to_vec();
            }
            let mut mel = features.mel_input(&crop).frames;
            mel.truncate(tc * fpt * mels);
            let [a, bb] = targets;
            Ok((mel, a, bb))
        })
    } else {
        let mixtures = load_mixtures(&cfg.data_dir, Split::Train, b.sample_rate_hz)?;
        // Full-utterance features, cropped per batch on token boundaries.
        let feats = mixtures
            .iter()
            .map(|m| {
                let mel = model.mel_input(m.mix.samples());
                let t1 = stage_tokens(&codec.tokenize(&m.sources[0])?, 1);
                let t2 = stage_tokens(&codec.tokenize(&m.sources[1])?, 1);
                if t1.len() != model.token_frames(m.mix.len()) || mel.frames.len() != t1.len() * fpt * mels {
                    return Err(Error::Config(format!("{}: BTD and codec frame counts disagree", m.id)));
                }
                Ok((mel.frames, t1, t2))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some((_, t, _)) = feats.iter().find(|(_, t, _)| t.len() < tc) {
            return Err(short(t.len()));
        }
        Box::new(move |rng| {
            let (m, t1, t2) = &feats[rng.random_range(0..feats.len())];
            let o = rng.random_range(0..=t1.len() - tc);
            Ok((m[o * fpt * mels..(o + tc) * fpt * mels].to_vec(), t1[o..o + tc].to_vec(), t2[o..o + tc].to_vec()))
        })
    };
    let batch = |rng: &mut ChaCha8Rng, n: usize| -> Result<(Tensor, Tensor, Tensor)> {
        let (mut mel, mut a, mut bb) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n {
            let (m, t1, t2) = draw(rng)?;
            mel.extend(m);
            a.extend(t1.iter().map(|t| t - 1));
            bb.extend(t2.iter().map(|t| t - 1));
        }
        let dev = device();
        Ok((
            tensor_from(mel, &[n, tc * fpt, mels])?,
            Tensor::from_vec(a, (n, tc), &dev).map_err(codesep_nn::Error::from)?,
            Tensor::from_vec(bb, (n, tc), &dev).map_err(codesep_nn::Error::from)?,
        ))
    };
    let probe = batch(&mut probe_rng(cfg.seed), cfg.batch_size)?;
    let probe_loss = || -> Result<f64> { scalar(&model.training_loss(&probe.0, &probe.1, &probe.2)?) };
    let initial = probe_loss()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trainer = Trainer::new(model.params().vars(), &cfg.optimizer)?;
    let mut run = Run { cfg, losses: Vec::new() };
    for step in 0..cfg.max_steps {
        let (mel, a, bb) = batch(&mut rng, cfg.batch_size)?;
        let loss = trainer.step(&model.training_loss(&mel, &a, &bb)?)?;
        run.record(step, loss, &rng, b, model.params())?;
    }
    let last = probe_loss()?;
    run.finish(&rng, b, model.params(), (initial, last))
}

fn train_atsp(cfg: &TrainConfig) -> Result<TrainReport> {
    let codec = frozen_codec(cfg)?;
    let q = codec.quantizer()?;
    let a = &cfg.atsp;
    let model = AtspModel::new(a.clone(), cfg.seed)?;
    let data = load_singles(&cfg.data_dir, Split::Train, cfg.codec.sample_rate_hz)?;
    let tokens = data.iter().map(|u| codec.tokenize(&u.wave)).collect::<codesep_nn::Result<Vec<_>>>()?;
    let tc = cfg.crop_frames;
    let n = a.stages;
    if let Some(t) = tokens.iter().find(|t| t.len() < tc) {
        return Err(Error::Data(format!("an utterance has {} frames, fewer than the {tc}-frame crop", t.len())));
    }
    let batch = |rng: &mut ChaCha8Rng, b: usize| -> Result<Tensor> {
        let mut v = Vec::with_capacity(b * tc * n);
        for _ in 0..b {
            let t = &tokens[rng.random_range(0..tokens.len())];
            let o = rng.random_range(0..=t.len() - tc);
            v.extend(t[o..o + tc].iter().flat_map(|f| f.0.iter().map(|x| x - 1)));
        }
        Ok(Tensor::from_vec(v, (b, tc, n), &device()).map_err(codesep_nn::Error::from)?)
    };
    let probe = batch(&mut probe_rng(cfg.seed), cfg.batch_size)?;
    let initial = scalar(&model.training_loss(&probe, &q)?)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trainer = Trainer::new(model.params().vars(), &cfg.optimizer)?;
    let mut run = Run { cfg, losses: Vec::new() };
    for step in 0..cfg.max_steps {
        let x = batch(&mut rng, cfg.batch_size)?;
        let loss = trainer.step(&model.training_loss(&x, &q)?)?;
        run.record(step, loss, &rng, a, model.params())?;
    }
    let last = scalar(&model.training_loss(&probe, &q)?)?;
    run.finish(&rng, a, model.params(), (initial, last))
}

fn train_separator(cfg: &TrainConfig) -> Result<TrainReport> {
    let s = &cfg.separator;
    let model = MaskSeparator::new(s.clone(), cfg.seed)?;
    let data = load_mixtures(&cfg.data_dir, Split::Train, s.sample_rate_hz)?;
    let hop = s.mdct_frame_length / 2;
    let crop = cfg.crop_frames * hop;
    let batch = |rng: &mut ChaCha8Rng, b: usize| -> Result<[Tensor; 3]> {
        let mut v: [Vec<f64>; 3] = Default::default();
        for _ in 0..b {
            let m = &data[rng.random_range(0..data.len())];
            let o = aligned_offset(m.mix.len(), crop, hop, rng)?;
            for (dst, w) in v.iter_mut().zip([&m.mix, &m.sources[0], &m.sources[1]]) {
                dst.extend_from_slice(&w.samples()[o..o + crop]);
            }
        }
        let [y, x1, x2] = v;
        Ok([tensor_from(y, &[b, crop])?, tensor_from(x1, &[b, crop])?, tensor_from(x2, &[b, crop])?])
    };
    let probe = batch(&mut probe_rng(cfg.seed), cfg.batch_size)?;
    let initial = scalar(&model.training_loss(&probe[0], &probe[1], &probe[2])?)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trainer = Trainer::new(model.params().vars(), &cfg.optimizer)?;
    let mut run = Run { cfg, losses: Vec::new() };
    for step in 0..cfg.max_steps {
        let [y, x1, x2] = batch(&mut rng, cfg.batch_size)?;
        let loss = trainer.step(&model.training_loss(&y, &x1, &x2)?)?;
        run.record(step, loss, &rng, s, model.params())?;
    }
    let last = scalar(&model.training_loss(&probe[0], &probe[1], &probe[2])?)?;
    run.finish(&rng, s, model.params(), (initial, last))
}
