use std::path::{Path, PathBuf};

use codesep_nn::atsp::AtspConfig;
use codesep_nn::btd::BtdConfig;
use codesep_nn::checkpoint::Stage;
use codesep_nn::codec::CodecConfig;
use codesep_nn::separator::MaskSeparatorConfig;
use codesep_nn::train::OptimConfig;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

/// Codec-only schedule: unquantized warm-up, k-means codebook init, then
/// joint training with dead-code restarts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecSchedule {
    pub warmup_steps: usize,
    /// Crops whose latents seed the k-means codebook init.
    pub kmeans_crops: usize,
    pub kmeans_iterations: usize,
    /// Steps between dead-code checks; 0 disables restarts.
    pub dead_code_interval: usize,
}

impl Default for CodecSchedule {
    fn default() -> Self {
        Self { warmup_steps: 500, kmeans_crops: 64, kmeans_iterations: 50, dead_code_interval: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub stage: Stage,
    pub preset: Preset,
    /// Corpus root holding `ds.jsonl` (single speakers) and `dm.jsonl` (mixtures).
    pub data_dir: PathBuf,
    /// Checkpoint written at the end of training; the loss log goes next to it.
    pub output: PathBuf,
    /// Frozen codec required by the btd and atsp stages.
    pub codec_checkpoint: Option<PathBuf>,
    pub seed: u64,
    pub max_steps: usize,
    pub batch_size: usize,
    /// Training crop length in codec frames; crops start on frame boundaries.
    pub crop_frames: usize,
    /// Intermediate checkpoints every this many steps; 0 disables them.
    pub checkpoint_interval: usize,
    pub log_interval: usize,
    /// BTD only: mix fresh pairs of training utterances for every batch
    /// instead of cropping the fixed training mixtures.
    pub dynamic_mixing: bool,
    pub optimizer: OptimConfig,
    pub codec: CodecConfig,
    pub codec_schedule: CodecSchedule,
    pub btd: BtdConfig,
    pub atsp: AtspConfig,
    pub separator: MaskSeparatorConfig,
}

impl TrainConfig {
    pub fn preset(stage: Stage, preset: Preset, data_dir: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        let (codec, btd, atsp) = match preset {
            Preset::Desk => (CodecConfig::desk(), BtdConfig::desk(), AtspConfig::desk()),
            Preset::Paper => (CodecConfig::paper(), BtdConfig::paper(), AtspConfig::paper()),
        };
        let separator = MaskSeparatorConfig {
            sample_rate_hz: codec.sample_rate_hz,
            mdct_frame_length: codec.mdct_frame_length,
            ..MaskSeparatorConfig::desk()
        };
        let mut optimizer = OptimConfig::default();
        let mut batch_size = 16;
        let (max_steps, crop_frames) = match (preset, stage) {
            (Preset::Desk, Stage::Codec) => {
                optimizer.learning_rate = 1e-3;
                optimizer.grad_clip = None;
                (9000, 25)
            }
            (Preset::Desk, Stage::Btd) => {
                // Whole 1 s utterances: the model does not generalize to
                // positions beyond the training crop.
                optimizer.learning_rate = 1e-3;
                batch_size = 8;
                (3500, 100)
            }
            (Preset::Desk, Stage::Atsp) => {
                optimizer.learning_rate = 1e-3;
                (1500, 50)
            }
            (Preset::Desk, Stage::Separator) => {
                optimizer.learning_rate = 1e-3;
                (1500, 50)
            }
            (Preset::Paper, _) => (1_000_000, 100),
        };
        Self {
            stage,
            preset,
            data_dir: data_dir.into(),
            output: output.into(),
            codec_checkpoint: None,
            seed: 0,
            max_steps,
            batch_size,
            crop_frames,
            checkpoint_interval: 0,
            log_interval: 50,
            dynamic_mixing: true,
            optimizer,
            codec,
            codec_schedule: CodecSchedule::default(),
            btd,
            atsp,
            separator,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.codec.validate()?;
        self.btd.validate()?;
        self.atsp.validate()?;
        self.separator.validate()?;
        if self.batch_size == 0 || self.crop_frames == 0 {
            return config("batch_size and crop_frames must be positive");
        }
        if !(self.optimizer.learning_rate > 0.0) {
            return config("learning rate must be positive");
        }
        let c = &self.codec;
        let consistent = self.btd.sample_rate_hz == c.sample_rate_hz
            && self.btd.codebook_size == c.codebook_size
            && self.btd.token_hop() == c.hop()
            && self.atsp.codebook_size == c.codebook_size
            && self.atsp.stages == c.stages
            && self.atsp.latent_dim == c.latent_dim
            && self.separator.sample_rate_hz == c.sample_rate_hz;
        if !consistent {
            return config("codec, btd, atsp and separator settings disagree on rate, M, N, K or token hop");
        }
        if self.stage == Stage::Codec && self.codec_schedule.warmup_steps >= self.max_steps && self.max_steps > 0 {
            return config("codec warm-up must end before max_steps");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for stage in [Stage::Codec, Stage::Btd, Stage::Atsp, Stage::Separator] {
            for preset in [Preset::Desk, Preset::Paper] {
                let cfg = TrainConfig::preset(stage, preset, "data", "out.ckpt");
                cfg.validate().unwrap();
                assert_eq!(TrainConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg);
            }
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let cfg = TrainConfig::preset(Stage::Btd, Preset::Desk, "d", "o");
        let mut v: serde_json::Value = serde_json::from_str(&cfg.to_json().unwrap()).unwrap();
        v["bogus"] = 1.into();
        assert!(TrainConfig::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&cfg.to_json().unwrap()).unwrap();
        v["btd"]["bogus"] = 1.into();
        assert!(TrainConfig::from_json(&v.to_string()).is_err());
    }
}
