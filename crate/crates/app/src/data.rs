//! Loading the on-disk corpus and drawing frame-aligned training crops.

use std::path::Path;

use codesep_core::signal::{read_wav, Waveform};
use codesep_core::synth::{MixtureManifest, SingleManifest, Split};
use rand::Rng;

use crate::error::{Error, Result};

pub const SINGLE_MANIFEST: &str = "ds.jsonl";
pub const MIXTURE_MANIFEST: &str = "dm.jsonl";

#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub speaker: String,
    pub wave: Waveform,
}

#[derive(Debug, Clone)]
pub struct Mixture {
    pub id: String,
    pub mix: Waveform,
    pub sources: [Waveform; 2],
}

fn load(path: &Path) -> Result<Waveform> {
    read_wav(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn check_rate(w: &Waveform, rate: u32, what: &str) -> Result<()> {
    if w.sample_rate_hz() != rate {
        return Err(Error::Data(format!("{what} is {} Hz, expected {rate} Hz", w.sample_rate_hz())));
    }
    Ok(())
}

/// Single-speaker utterances of one split.
pub fn load_singles(root: &Path, split: Split, rate: u32) -> Result<Vec<Utterance>> {
    let manifest = SingleManifest::read(root.join(SINGLE_MANIFEST))
        .map_err(|e| Error::Data(format!("{}: {e}", root.join(SINGLE_MANIFEST).display())))?;
    let out = manifest
        .split(split)
        .map(|r| {
            let wave = load(&manifest.resolve(&r.path))?;
            check_rate(&wave, rate, &r.id)?;
            Ok(Utterance { id: r.id.clone(), speaker: r.speaker.clone(), wave })
        })
        .collect::<Result<Vec<_>>>()?;
    if out.is_empty() {
        return Err(Error::Data(format!("no {} utterances under {}", split.name(), root.display())));
    }
    Ok(out)
}

/// Two-speaker mixtures of one split.
pub fn load_mixtures(root: &Path, split: Split, rate: u32) -> Result<Vec<Mixture>> {
    let manifest = MixtureManifest::read(root.join(MIXTURE_MANIFEST))
        .map_err(|e| Error::Data(format!("{}: {e}", root.join(MIXTURE_MANIFEST).display())))?;
    let out = manifest
        .split(split)
        .map(|r| {
            let mix = load(&manifest.resolve(&r.mix))?;
            let s1 = load(&manifest.resolve(&r.s1))?;
            let s2 = load(&manifest.resolve(&r.s2))?;
            for w in [&mix, &s1, &s2] {
                check_rate(w, rate, &r.id)?;
            }
            if s1.len() != mix.len() || s2.len() != mix.len() {
                return Err(Error::Data(format!("{}: mixture and sources differ in length", r.id)));
            }
            Ok(Mixture { id: r.id.clone(), mix, sources: [s1, s2] })
        })
        .collect::<Result<Vec<_>>>()?;
    if out.is_empty() {
        return Err(Error::Data(format!("no {} mixtures under {}", split.name(), root.display())));
    }
    Ok(out)
}

/// Start sample of a random crop of `len` samples beginning on a multiple of `hop`.
pub fn aligned_offset<R: Rng>(total: usize, len: usize, hop: usize, rng: &mut R) -> Result<usize> {
    if total < len {
        return Err(Error::Data(format!("utterance of {total} samples is shorter than the {len}-sample crop")));
    }
    Ok(rng.random_range(0..=(total - len) / hop) * hop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn offsets_are_aligned_and_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let o = aligned_offset(1000, 320, 80, &mut rng).unwrap();
            assert_eq!(o % 80, 0);
            assert!(o + 320 <= 1000);
        }
        assert!(aligned_offset(100, 320, 80, &mut rng).is_err());
    }
}
