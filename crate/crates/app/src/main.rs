use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use codesep::config::{Preset, TrainConfig};
use codesep::data::load_mixtures;
use codesep::error::{Error, Result};
use codesep::eval::{evaluate, Backend};
use codesep::models::{load_atsp, load_btd, load_codec, load_separator};
use codesep::pipeline::{plan_stages, Jsac, Mode};
use codesep::train::train;
use codesep_core::bitstream::{pack, unpack};
use codesep_core::signal::{read_wav, write_wav};
use codesep_core::synth::{build_datasets, CorpusConfig, Split};
use codesep_nn::checkpoint::Stage;

#[derive(Parser)]
#[command(name = "codesep", version, about = "Joint two-speaker separation and low-bitrate coding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum StageArg {
    Codec,
    Btd,
    Atsp,
    Separator,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::Codec => Stage::Codec,
            StageArg::Btd => Stage::Btd,
            StageArg::Atsp => Stage::Atsp,
            StageArg::Separator => Stage::Separator,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum PresetArg {
    Desk,
    Paper,
}

#[derive(clap::Args)]
struct ModelDir {
    /// Directory holding codec.ckpt, btd.ckpt, atsp.ckpt and separator.ckpt.
    #[arg(long, default_value = "models")]
    models: PathBuf,
}

impl ModelDir {
    fn path(&self, stage: Stage) -> PathBuf {
        self.models.join(format!("{stage}.ckpt"))
    }

    fn jsac(&self) -> Result<Jsac> {
        Jsac::new(
            load_codec(&self.path(Stage::Codec))?,
            load_btd(&self.path(Stage::Btd))?,
            load_atsp(&self.path(Stage::Atsp))?,
        )
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic single-speaker and mixture corpus.
    SynthData {
        #[arg(long)]
        out: PathBuf,
        /// Corpus settings as JSON; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print a training config for a stage and preset.
    InitConfig {
        #[arg(long, value_enum)]
        stage: StageArg,
        #[arg(long, value_enum, default_value = "desk")]
        preset: PresetArg,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train one stage.
    Train {
        #[arg(long, value_enum)]
        stage: StageArg,
        #[arg(long)]
        config: PathBuf,
    },
    /// Separate a mixture WAV into two source WAVs through the bitstream.
    Separate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        models: ModelDir,
    },
    /// Encode a mixture WAV into a token bitstream.
    Pack {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        models: ModelDir,
    },
    /// Decode a token bitstream into two source WAVs.
    Unpack {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        models: ModelDir,
    },
    /// Score one pipeline on the test mixtures.
    Eval {
        #[arg(long, value_enum)]
        mode: Mode,
        /// Total bitrate for the cascade baselines in bits/s (ignored by jsac).
        #[arg(long)]
        bitrate: Option<f64>,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[command(flatten)]
        models: ModelDir,
        /// Write the full JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compare JSAC with both cascades at JSAC's total bitrate.
    Baseline {
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[command(flatten)]
        models: ModelDir,
    },
}

fn write_pair(dir: &Path, pair: &[codesep_core::Waveform; 2]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, w) in pair.iter().enumerate() {
        write_wav(dir.join(format!("s{}.wav", i + 1)), w)?;
    }
    Ok(())
}

fn eval_mode(mode: Mode, bitrate: Option<f64>, data_dir: &Path, models: &ModelDir) -> Result<codesep_core::metrics::EvalReport> {
    let codec = load_codec(&models.path(Stage::Codec))?;
    let mixtures = load_mixtures(data_dir, Split::Test, codec.config().sample_rate_hz)?;
    match mode {
        Mode::Jsac => evaluate(&Backend::Jsac(&models.jsac()?), &mixtures),
        Mode::Fcts | Mode::Fstc => {
            let b = bitrate.ok_or_else(|| Error::Config("--bitrate is required for the cascade baselines".into()))?;
            let separator = load_separator(&models.path(Stage::Separator))?;
            let streams = if mode == Mode::Fcts { 1 } else { 2 };
            let (stages, _) = plan_stages(b, &codec, streams)?;
            let backend = if mode == Mode::Fcts {
                Backend::Fcts { codec: &codec, stages, separator: &separator }
            } else {
                Backend::Fstc { codec: &codec, stages, separator: &separator }
            };
            evaluate(&backend, &mixtures)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthData { out, config, seed } => {
            let mut cfg = match config {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(&p)?)?,
                None => CorpusConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let (ds, dm) = build_datasets(&out, &cfg)?;
            println!("{} utterances, {} mixtures under {}", ds.records.len(), dm.records.len(), out.display());
        }
        Command::InitConfig { stage, preset, data_dir, output } => {
            let stage = Stage::from(stage);
            let preset = match preset {
                PresetArg::Desk => Preset::Desk,
                PresetArg::Paper => Preset::Paper,
            };
            let output = output.unwrap_or_else(|| PathBuf::from(format!("models/{stage}.ckpt")));
            let mut cfg = TrainConfig::preset(stage, preset, data_dir, output);
            if matches!(stage, Stage::Btd | Stage::Atsp) {
                cfg.codec_checkpoint = Some(PathBuf::from("models/codec.ckpt"));
            }
            println!("{}", cfg.to_json()?);
        }
        Command::Train { stage, config } => {
            let cfg = TrainConfig::load(&config)?;
            if cfg.stage != Stage::from(stage) {
                return Err(Error::Config(format!("--stage disagrees with the config's stage {}", cfg.stage)));
            }
            let report = train(&cfg)?;
            println!(
                "{} trained for {} steps: probe loss {:.5} -> {:.5}; checkpoint {}",
                report.summary.stage,
                report.summary.steps,
                report.summary.probe_initial_loss,
                report.summary.probe_final_loss,
                cfg.output.display()
            );
        }
        Command::Separate { input, out_dir, models } => {
            let y = read_wav(&input)?;
            let jsac = models.jsac()?;
            let bs = jsac.encode(&y)?;
            std::fs::create_dir_all(&out_dir)?;
            std::fs::write(out_dir.join("tokens.cstk"), bs.to_bytes())?;
            let [a, b] = jsac.decode(&bs)?;
            write_pair(&out_dir, &[a.with_len(y.len()), b.with_len(y.len())])?;
        }
        Command::Pack { input, out, models } => {
            let y = read_wav(&input)?;
            let bs = models.jsac()?.encode(&y)?;
            std::fs::write(&out, pack(&bs.tokens, bs.header)?)?;
        }
        Command::Unpack { input, out_dir, models } => {
            let bs = unpack(&std::fs::read(&input)?)?;
            let pair = models.jsac()?.decode(&bs)?;
            write_pair(&out_dir, &pair)?;
        }
        Command::Eval { mode, bitrate, data_dir, models, report } => {
            let r = eval_mode(mode, bitrate, &data_dir, &models)?;
            let a = &r.aggregate;
            let rate = r.bitrate.map(|b| b.total_bps).unwrap_or(f64::NAN);
            println!(
                "{}: {} mixtures, {rate:.0} bps, SI-SDR {:.2} dB, SI-SDRi {:.2} dB, mel distance {:.4}",
                r.mode, a.count, a.si_sdr_db, a.si_sdr_improvement_db, a.mel_distance
            );
            if let Some(p) = report {
                std::fs::write(p, r.to_json()?)?;
            }
        }
        Command::Baseline { data_dir, models } => {
            let rate = models.jsac()?.bitrate()?.total_bps;
            println!("mode  bps     SI-SDRi(dB)  mel-distance");
            for mode in [Mode::Jsac, Mode::Fcts, Mode::Fstc] {
                let r = eval_mode(mode, Some(rate), &data_dir, &models)?;
                let bps = r.bitrate.map(|b| b.total_bps).unwrap_or(f64::NAN);
                println!(
                    "{:<5} {bps:<7.0} {:<12.2} {:.4}",
                    r.mode, r.aggregate.si_sdr_improvement_db, r.aggregate.mel_distance
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
