//! Toy speech corpora: parametric harmonic "speakers", single-speaker and
//! two-speaker mixture manifests, and loading of mix/s1/s2 WAV layouts.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signal::{mix, read_wav, write_wav, Waveform};

pub const PEAK_LEVEL: f64 = 0.5;

/// A harmonic source with a speaker-specific pitch range and spectral envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySpeakerSpec {
    pub id: String,
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    /// When positive, f0 is held on multiples of this step and only changes
    /// inside pauses; harmonics are phase-locked to absolute time. Zero gives
    /// a smooth vibrato contour instead.
    pub f0_grid_hz: f64,
    /// Harmonic `h` has base amplitude `h^-harmonic_decay`.
    pub harmonic_decay: f64,
    /// Gaussian envelope bumps as `(center Hz, bandwidth Hz, gain)`.
    pub formants: Vec<(f64, f64, f64)>,
    /// Syllable-like amplitude modulation rate.
    pub am_rate_hz: f64,
}

impl ToySpeakerSpec {
    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        let limit = sample_rate_hz as f64 / 16.0;
        let ordered = if self.f0_grid_hz > 0.0 {
            self.f0_min_hz <= self.f0_max_hz && !self.grid_values().is_empty()
        } else {
            self.f0_min_hz < self.f0_max_hz
        };
        if !(self.f0_min_hz > 0.0 && ordered && self.f0_max_hz < limit) {
            return invalid(format!(
                "speaker {}: f0 range [{}, {}] must lie in (0, {limit})",
                self.id, self.f0_min_hz, self.f0_max_hz
            ));
        }
        if self.f0_grid_hz < 0.0 {
            return invalid(format!("speaker {}: negative pitch grid", self.id));
        }
        if self.harmonic_decay < 0.0 || self.formants.iter().any(|f| f.2 < 0.0 || f.1 <= 0.0) {
            return invalid(format!("speaker {}: amplitudes must be nonnegative", self.id));
        }
        if self.am_rate_hz < 0.0 {
            return invalid(format!("speaker {}: negative modulation rate", self.id));
        }
        Ok(())
    }

    /// Grid pitches inside `[f0_min_hz, f0_max_hz]`.
    pub fn grid_values(&self) -> Vec<f64> {
        if self.f0_grid_hz <= 0.0 {
            return Vec::new();
        }
        let first = (self.f0_min_hz / self.f0_grid_hz - 1e-9).ceil() as usize;
        let last = (self.f0_max_hz / self.f0_grid_hz + 1e-9).floor() as usize;
        (first.max(1)..=last).map(|k| k as f64 * self.f0_grid_hz).collect()
    }

    fn envelope(&self, hz: f64) -> f64 {
        0.05 + self
            .formants
            .iter()
            .map(|&(c, bw, g)| g * (-0.5 * ((hz - c) / bw).powi(2)).exp())
            .sum::<f64>()
    }
}

/// Pitch grid used by [`speaker_bank`]: one period pattern per `rate / 160`
/// samples, so pitch periods line up with 10 ms frames at 8 kHz.
pub fn default_pitch_grid(sample_rate_hz: u32) -> f64 {
    sample_rate_hz as f64 / 160.0
}

/// A family of well-separated speakers on the default pitch grid. The grid
/// pitches below `rate / 16` (excluding the lowest) are split into disjoint
/// contiguous ranges; envelopes move upward with pitch.
pub fn speaker_bank(num_speakers: usize, sample_rate_hz: u32) -> Vec<ToySpeakerSpec> {
    let grid = default_pitch_grid(sample_rate_hz);
    let limit = sample_rate_hz as f64 / 16.0;
    let steps: Vec<f64> = (2..)
        .map(|k| k as f64 * grid)
        .take_while(|&f| f < limit)
        .collect();
    let nyquist = sample_rate_hz as f64 / 2.0;
    (0..num_speakers)
        .map(|i| {
            // contiguous chunks; speakers beyond the grid size share the top pitch
            let lo_idx = (i * steps.len() / num_speakers.max(1)).min(steps.len() - 1);
            let hi_idx = (((i + 1) * steps.len() / num_speakers.max(1)).max(lo_idx + 1) - 1).min(steps.len() - 1);
            let pos = (i as f64 + 0.5) / num_speakers as f64;
            let f1 = nyquist * (0.08 + 0.25 * pos);
            let f2 = nyquist * (0.35 + 0.4 * pos);
            ToySpeakerSpec {
                id: format!("spk{i:02}"),
                f0_min_hz: steps[lo_idx],
                f0_max_hz: steps[hi_idx],
                f0_grid_hz: grid,
                harmonic_decay: 0.6 + 0.3 * (i % 2) as f64,
                formants: vec![
                    (f1, nyquist * 0.06, 1.0),
                    (f2, nyquist * 0.08, 0.5 + 0.2 * (i % 3) as f64),
                ],
                am_rate_hz: 3.0 + (i % 4) as f64,
            }
        })
        .collect()
}

/// Deterministic utterance: random f0 contour, zero-phase harmonics shaped by
/// the speaker envelope, syllable modulation and one or two pauses,
/// peak-normalized to [`PEAK_LEVEL`].
pub fn synth_utterance(
    spec: &ToySpeakerSpec,
    seed: u64,
    duration_s: f64,
    sample_rate_hz: u32,
) -> Result<Waveform> {
    if duration_s <= 0.0 {
        return invalid("duration must be positive");
    }
    spec.validate(sample_rate_hz)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = sample_rate_hz as f64;
    let n = (duration_s * sr).round() as usize;
    let nyquist = sr / 2.0;

    let center = rng.random_range(spec.f0_min_hz..=spec.f0_max_hz);
    let span = 0.5 * (spec.f0_max_hz - spec.f0_min_hz);
    let vib: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.2..2.5),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.2..0.5),
            )
        })
        .collect();
    let am_phase = rng.random_range(0.0..2.0 * PI);
    let num_pauses = rng.random_range(1..=2usize);
    let mut pauses: Vec<(f64, f64)> = (0..num_pauses)
        .map(|_| {
            let len = rng.random_range(0.06..0.16) * duration_s.min(1.0);
            let start = rng.random_range(0.0..(duration_s - len).max(1e-3));
            (start, start + len)
        })
        .collect();
    pauses.sort_by(|a, b| a.0.total_cmp(&b.0));
    // one grid pitch per voiced segment; segments are delimited by pause midpoints
    let grid = spec.grid_values();
    let segment_f0: Vec<f64> = (0..=num_pauses)
        .map(|_| {
            if grid.is_empty() {
                0.0
            } else {
                grid[rng.random_range(0..grid.len())]
            }
        })
        .collect();
    let max_harmonic = (0.9 * nyquist / spec.f0_min_hz).floor().max(1.0) as usize;

    let mut phase = rng.random_range(0.0..2.0 * PI);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / sr;
        let f0 = if grid.is_empty() {
            let drift: f64 = vib
                .iter()
                .map(|&(f, p, a)| a * (2.0 * PI * f * t + p).sin())
                .sum();
            let f0 = (center + span * drift).clamp(spec.f0_min_hz, spec.f0_max_hz);
            phase += 2.0 * PI * f0 / sr;
            f0
        } else {
            let seg = pauses.iter().filter(|&&(a, b)| t >= 0.5 * (a + b)).count();
            let f0 = segment_f0[seg];
            phase = 2.0 * PI * f0 * t;
            f0
        };
        let mut v = 0.0;
        for h in 1..=max_harmonic {
            let hz = h as f64 * f0;
            if hz >= 0.9 * nyquist {
                break;
            }
            v += (h as f64).powf(-spec.harmonic_decay) * spec.envelope(hz) * (h as f64 * phase).cos();
        }
        let am = 0.55 + 0.45 * (2.0 * PI * spec.am_rate_hz * t + am_phase).sin();
        let gate = pauses
            .iter()
            .map(|&(a, b)| {
                let ramp = 0.01;
                if t <= a - ramp || t >= b + ramp {
                    1.0
                } else if t >= a && t <= b {
                    0.0
                } else if t < a {
                    (a - t) / ramp
                } else {
                    (t - b) / ramp
                }
            })
            .fold(1.0, f64::min);
        out.push(v * am * gate);
    }
    let peak = out.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        for s in out.iter_mut() {
            *s *= PEAK_LEVEL / peak;
        }
    }
    Waveform::new(out, sample_rate_hz)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

/// One single-speaker utterance record (paths relative to the corpus root).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    pub path: PathBuf,
    pub speaker: String,
    pub split: Split,
}

/// One two-speaker mixture record (paths relative to the corpus root).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixtureRecord {
    pub id: String,
    pub mix: PathBuf,
    pub s1: PathBuf,
    pub s2: PathBuf,
    pub speaker1: String,
    pub speaker2: String,
    pub split: Split,
}

/// Line-delimited JSON manifest rooted at a directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest<R> {
    pub root: PathBuf,
    pub records: Vec<R>,
}

pub type SingleManifest = Manifest<UtteranceRecord>;
pub type MixtureManifest = Manifest<MixtureRecord>;

impl<R: Serialize + for<'de> Deserialize<'de>> Manifest<R> {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        for r in &self.records {
            writeln!(f, "{}", serde_json::to_string(r)?)?;
        }
        Ok(())
    }

    /// Reads a manifest; relative record paths resolve against the manifest's directory.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let f = BufReader::new(fs::File::open(path)?);
        let mut records = Vec::new();
        for (i, line) in f.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r = serde_json::from_str(&line)
                .map_err(|e| Error::Manifest(format!("{}:{}: {e}", path.display(), i + 1)))?;
            records.push(r);
        }
        Ok(Self { root, records })
    }
}

impl<R> Manifest<R> {
    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }
}

impl SingleManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &UtteranceRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }
}

impl MixtureManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &MixtureRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub num_speakers: usize,
    pub utterances_per_speaker: usize,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    /// Mixtures drawn per utterance within its split.
    pub mixtures_per_utterance: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            num_speakers: 4,
            utterances_per_speaker: 50,
            duration_s: 1.0,
            sample_rate_hz: 8000,
            mixtures_per_utterance: 4,
            seed: 1234,
        }
    }
}

/// In-memory corpus produced by [`build_corpus`].
#[derive(Debug, Clone)]
pub struct Corpus {
    pub utterances: Vec<(UtteranceRecord, Waveform)>,
    /// Indices into `utterances` plus the mixture id and split.
    pub mixtures: Vec<(String, Split, usize, usize)>,
}

fn utterance_path(split: Split, id: &str) -> PathBuf {
    PathBuf::from(split.name()).join("single").join(format!("{id}.wav"))
}

fn mixture_paths(split: Split, id: &str) -> (PathBuf, PathBuf, PathBuf) {
    let base = PathBuf::from(split.name());
    let name = format!("{id}.wav");
    (base.join("mix").join(&name), base.join("s1").join(&name), base.join("s2").join(&name))
}

/// Generates utterances, assigns an 80/10/10 split per speaker and pairs
/// utterances of distinct speakers inside each split.
pub fn build_corpus(cfg: &CorpusConfig) -> Result<Corpus> {
    if cfg.num_speakers < 2 {
        return invalid("at least two speakers are needed for mixtures");
    }
    if cfg.utterances_per_speaker < 10 {
        return invalid("at least 10 utterances per speaker are needed for an 80/10/10 split");
    }
    let speakers = speaker_bank(cfg.num_speakers, cfg.sample_rate_hz);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut utterances = Vec::new();
    for spk in &speakers {
        let mut order: Vec<usize> = (0..cfg.utterances_per_speaker).collect();
        order.shuffle(&mut rng);
        let n = cfg.utterances_per_speaker;
        let n_test = (n as f64 * 0.1).round() as usize;
        let n_dev = (n as f64 * 0.1).round() as usize;
        for (rank, &u) in order.iter().enumerate() {
            let split = if rank < n - n_dev - n_test {
                Split::Train
            } else if rank < n - n_test {
                Split::Dev
            } else {
                Split::Test
            };
            let id = format!("{}-{u:04}", spk.id);
            let seed = rng.random::<u64>();
            let wave = synth_utterance(spk, seed, cfg.duration_s, cfg.sample_rate_hz)?;
            let record = UtteranceRecord {
                path: utterance_path(split, &id),
                id,
                speaker: spk.id.clone(),
                split,
            };
            utterances.push((record, wave));
        }
    }
    utterances.sort_by(|a, b| (a.0.split, &a.0.id).cmp(&(b.0.split, &b.0.id)));

    let mut mixtures = Vec::new();
    for split in Split::ALL {
        let members: Vec<usize> = (0..utterances.len())
            .filter(|&i| utterances[i].0.split == split)
            .collect();
        let mut seen = std::collections::BTreeSet::new();
        for &i in &members {
            let partners: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&j| utterances[j].0.speaker != utterances[i].0.speaker)
                .collect();
            if partners.is_empty() {
                return invalid(format!("split {} has a single speaker", split.name()));
            }
            for _ in 0..cfg.mixtures_per_utterance {
                let j = partners[rng.random_range(0..partners.len())];
                let key = (i.min(j), i.max(j));
                if !seen.insert(key) {
                    continue;
                }
                let id = format!("{}_{}", utterances[i].0.id, utterances[j].0.id);
                mixtures.push((id, split, i, j));
            }
        }
    }
    Ok(Corpus { utterances, mixtures })
}

impl Corpus {
    pub fn mixture_waves(&self, k: usize) -> Result<(Waveform, &Waveform, &Waveform)> {
        let (_, _, i, j) = &self.mixtures[k];
        let (x1, x2) = (&self.utterances[*i].1, &self.utterances[*j].1);
        Ok((mix(x1, x2)?, x1, x2))
    }

    pub fn single_manifest(&self, root: &Path) -> SingleManifest {
        Manifest {
            root: root.to_path_buf(),
            records: self.utterances.iter().map(|(r, _)| r.clone()).collect(),
        }
    }

    pub fn mixture_manifest(&self, root: &Path) -> MixtureManifest {
        let records = self
            .mixtures
            .iter()
            .map(|(id, split, i, j)| {
                let (m, s1, s2) = mixture_paths(*split, id);
                MixtureRecord {
                    id: id.clone(),
                    mix: m,
                    s1,
                    s2,
                    speaker1: self.utterances[*i].0.speaker.clone(),
                    speaker2: self.utterances[*j].0.speaker.clone(),
                    split: *split,
                }
            })
            .collect();
        Manifest { root: root.to_path_buf(), records }
    }

    /// Writes WAVs in a `<split>/{single,mix,s1,s2}/` layout plus `ds.jsonl` and `dm.jsonl`.
    pub fn write(&self, root: &Path) -> Result<(SingleManifest, MixtureManifest)> {
        for split in Split::ALL {
            for sub in ["single", "mix", "s1", "s2"] {
                fs::create_dir_all(root.join(split.name()).join(sub))?;
            }
        }
        for (r, w) in &self.utterances {
            write_wav(root.join(&r.path), w)?;
        }
        let dm = self.mixture_manifest(root);
        for (k, r) in dm.records.iter().enumerate() {
            let (y, x1, x2) = self.mixture_waves(k)?;
            write_wav(root.join(&r.mix), &y)?;
            write_wav(root.join(&r.s1), x1)?;
            write_wav(root.join(&r.s2), x2)?;
        }
        let ds = self.single_manifest(root);
        ds.write(root.join("ds.jsonl"))?;
        dm.write(root.join("dm.jsonl"))?;
        Ok((ds, dm))
    }
}

/// Generates a corpus and writes it under `root`.
pub fn build_datasets(root: &Path, cfg: &CorpusConfig) -> Result<(SingleManifest, MixtureManifest)> {
    build_corpus(cfg)?.write(root)
}

/// Result of scanning a mix/s1/s2 directory tree.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCorpus {
    pub manifest: MixtureManifest,
    /// Files excluded because `mix` differs from `s1 + s2` by more than the tolerance.
    pub rejected: Vec<(PathBuf, f64)>,
}

/// Additivity tolerance when loading external mixtures (absorbs 16-bit rounding and clipping).
pub const ADDITIVITY_TOLERANCE: f64 = 1e-3;

/// Loads every `<split>/{mix,s1,s2}` triple under `root`. Split directories
/// are `train`, `dev` and `test`; a root holding `mix/` directly is loaded as
/// the test split. Speaker ids follow the Libri2Mix naming
/// `<spk>-<utt>_<spk>-<utt>.wav` when present.
pub fn load_wav_corpus(root: &Path) -> Result<LoadedCorpus> {
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut layouts: Vec<(PathBuf, Split)> = Split::ALL
        .iter()
        .map(|s| (PathBuf::from(s.name()), *s))
        .filter(|(p, _)| root.join(p).join("mix").is_dir())
        .collect();
    if root.join("mix").is_dir() {
        layouts.push((PathBuf::new(), Split::Test));
    }
    for (base, split) in layouts {
        let mut names = BTreeMap::new();
        for entry in fs::read_dir(root.join(&base).join("mix"))? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.ends_with(".wav") {
                names.insert(name, ());
            }
        }
        for name in names.keys() {
            let rel_mix = base.join("mix").join(name);
            let rel_s1 = base.join("s1").join(name);
            let rel_s2 = base.join("s2").join(name);
            for rel in [&rel_s1, &rel_s2] {
                if !root.join(rel).is_file() {
                    return Err(Error::Manifest(format!(
                        "missing counterpart {} for {}",
                        rel.display(),
                        rel_mix.display()
                    )));
                }
            }
            let y = read_wav(root.join(&rel_mix))?;
            let x1 = read_wav(root.join(&rel_s1))?;
            let x2 = read_wav(root.join(&rel_s2))?;
            let err = additivity_error(&y, &x1, &x2);
            if err > ADDITIVITY_TOLERANCE {
                rejected.push((rel_mix, err));
                continue;
            }
            let id = name.trim_end_matches(".wav").to_string();
            let (speaker1, speaker2) = speakers_from_name(&id);
            records.push(MixtureRecord {
                id,
                mix: rel_mix,
                s1: rel_s1,
                s2: rel_s2,
                speaker1,
                speaker2,
                split,
            });
        }
    }
    Ok(LoadedCorpus {
        manifest: Manifest { root: root.to_path_buf(), records },
        rejected,
    })
}

fn additivity_error(y: &Waveform, x1: &Waveform, x2: &Waveform) -> f64 {
    if y.len() != x1.len() || y.len() != x2.len() || y.sample_rate_hz() != x1.sample_rate_hz() {
        return f64::INFINITY;
    }
    y.samples()
        .iter()
        .zip(x1.samples().iter().zip(x2.samples()))
        .map(|(m, (a, b))| {
            let sum = (a + b).clamp(-1.0, 32767.0 / 32768.0);
            (m - sum).abs()
        })
        .fold(0.0, f64::max)
}

fn speakers_from_name(id: &str) -> (String, String) {
    let mut halves = id.splitn(2, '_');
    let spk = |s: Option<&str>| {
        s.and_then(|h| h.split('-').next())
            .filter(|s| !s.is_empty())
            .unwrap_or("unknown")
            .to_string()
    };
    let a = spk(halves.next());
    let b = spk(halves.next());
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> CorpusConfig {
        CorpusConfig {
            num_speakers: 3,
            utterances_per_speaker: 10,
            duration_s: 0.25,
            sample_rate_hz: 8000,
            mixtures_per_utterance: 2,
            seed: 7,
        }
    }

    #[test]
    fn utterance_is_deterministic_and_normalized() {
        let spk = &speaker_bank(4, 8000)[1];
        let a = synth_utterance(spk, 42, 0.5, 8000).unwrap();
        let b = synth_utterance(spk, 42, 0.5, 8000).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4000);
        assert!((a.peak() - PEAK_LEVEL).abs() < 1e-6);
        let c = synth_utterance(spk, 43, 0.5, 8000).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_speaker_or_duration() {
        let mut spk = speaker_bank(2, 8000)[0].clone();
        assert!(synth_utterance(&spk, 0, 0.0, 8000).is_err());
        spk.f0_max_hz = 600.0;
        assert!(synth_utterance(&spk, 0, 0.5, 8000).is_err());
    }

    #[test]
    fn bank_pitch_ranges_disjoint() {
        let bank = speaker_bank(4, 8000);
        for w in bank.windows(2) {
            assert!(w[0].f0_max_hz < w[1].f0_min_hz);
        }
        assert_eq!(bank[0].grid_values(), vec![100.0, 150.0]);
        assert_eq!(bank[3].grid_values(), vec![400.0, 450.0]);
        for s in &bank {
            s.validate(8000).unwrap();
        }
    }

    #[test]
    fn corpus_splits_and_mixtures() {
        let c = build_corpus(&small_cfg()).unwrap();
        assert_eq!(c.utterances.len(), 30);
        let count = |s| c.utterances.iter().filter(|(r, _)| r.split == s).count();
        assert_eq!((count(Split::Train), count(Split::Dev), count(Split::Test)), (24, 3, 3));
        assert!(!c.mixtures.is_empty());
        for k in 0..c.mixtures.len() {
            let (_, split, i, j) = c.mixtures[k];
            assert_ne!(i, j);
            assert_ne!(c.utterances[i].0.speaker, c.utterances[j].0.speaker);
            assert_eq!(c.utterances[i].0.split, split);
            assert_eq!(c.utterances[j].0.split, split);
            let (y, x1, x2) = c.mixture_waves(k).unwrap();
            for ((m, a), b) in y.samples().iter().zip(x1.samples()).zip(x2.samples()) {
                assert_eq!(*m, a + b);
            }
        }
    }

    #[test]
    fn too_few_speakers_or_utterances() {
        let mut cfg = small_cfg();
        cfg.num_speakers = 1;
        assert!(build_corpus(&cfg).is_err());
        let mut cfg = small_cfg();
        cfg.utterances_per_speaker = 5;
        assert!(build_corpus(&cfg).is_err());
    }

    #[test]
    fn speaker_names_parsed() {
        assert_eq!(
            speakers_from_name("spk01-0003_spk04-0010"),
            ("spk01".to_string(), "spk04".to_string())
        );
        assert_eq!(speakers_from_name("weird"), ("weird".to_string(), "unknown".to_string()));
    }
}
