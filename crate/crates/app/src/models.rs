//! Restoring trained models from checkpoints.

use std::path::Path;

use codesep_nn::atsp::{AtspConfig, AtspModel};
use codesep_nn::btd::{BtdConfig, BtdModel};
use codesep_nn::checkpoint::{Checkpoint, Stage};
use codesep_nn::codec::{CodecConfig, CodecModel};
use codesep_nn::separator::{MaskSeparator, MaskSeparatorConfig};

use crate::error::{Error, Result};

fn read(path: &Path, stage: Stage) -> Result<Checkpoint> {
    if !path.is_file() {
        return Err(Error::Config(format!("{stage} checkpoint {} not found", path.display())));
    }
    let ck = Checkpoint::load(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    ck.expect_stage(stage).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(ck)
}

pub fn codec_from(ck: &Checkpoint) -> Result<CodecModel> {
    let model = CodecModel::new(ck.config_for::<CodecConfig>(Stage::Codec)?, 0)?;
    model.params().import(&ck.params)?;
    Ok(model)
}

pub fn btd_from(ck: &Checkpoint) -> Result<BtdModel> {
    let model = BtdModel::new(ck.config_for::<BtdConfig>(Stage::Btd)?, 0)?;
    model.params().import(&ck.params)?;
    Ok(model)
}

pub fn atsp_from(ck: &Checkpoint) -> Result<AtspModel> {
    let model = AtspModel::new(ck.config_for::<AtspConfig>(Stage::Atsp)?, 0)?;
    model.params().import(&ck.params)?;
    Ok(model)
}

pub fn separator_from(ck: &Checkpoint) -> Result<MaskSeparator> {
    let model = MaskSeparator::new(ck.config_for::<MaskSeparatorConfig>(Stage::Separator)?, 0)?;
    model.params().import(&ck.params)?;
    Ok(model)
}

pub fn load_codec(path: &Path) -> Result<CodecModel> {
    codec_from(&read(path, Stage::Codec)?)
}

pub fn load_btd(path: &Path) -> Result<BtdModel> {
    btd_from(&read(path, Stage::Btd)?)
}

pub fn load_atsp(path: &Path) -> Result<AtspModel> {
    atsp_from(&read(path, Stage::Atsp)?)
}

pub fn load_separator(path: &Path) -> Result<MaskSeparator> {
    separator_from(&read(path, Stage::Separator)?)
}
