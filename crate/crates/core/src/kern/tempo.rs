use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::KernError;

/// Metronome markings for classical tempo annotations, in quarter notes
/// per minute.
pub const TEMPO_TABLE: [(&str, f64); 22] = [
    ("Largo Assai", 40.0),
    ("Largo", 50.0),
    ("Poco Largo", 60.0),
    ("Adagio", 71.0),
    ("Poco Adagio", 76.0),
    ("Andante", 92.0),
    ("Andantino", 100.0),
    ("Menuetto", 112.0),
    ("Moderato", 114.0),
    ("Poco Allegretto", 116.0),
    ("Allegretto", 118.0),
    ("Allegro Moderato", 120.0),
    ("Poco Allegro", 124.0),
    ("Allegro", 130.0),
    ("Molto Allegro", 134.0),
    ("Allegro Assai", 138.0),
    ("Vivace", 150.0),
    ("Allegro Vivace", 160.0),
    ("Allegro Vivace Assai", 170.0),
    ("Poco Presto", 180.0),
    ("Presto", 186.0),
    ("Presto Assai", 200.0),
];

/// Relative tempo jitter applied to every rendered sample.
pub const TEMPO_JITTER: f64 = 0.06;

#[derive(Debug, Clone, PartialEq)]
pub struct TempoMark {
    pub label: String,
    pub quarter_bpm: f64,
}

fn normalize(label: &str) -> String {
    label
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl TempoMark {
    /// Looks up the table value without jitter. Matching ignores case and
    /// collapses runs of whitespace.
    pub fn lookup(label: &str) -> Result<TempoMark, KernError> {
        let wanted = normalize(label);
        TEMPO_TABLE
            .iter()
            .find(|(name, _)| normalize(name) == wanted)
            .map(|&(name, bpm)| TempoMark {
                label: name.to_string(),
                quarter_bpm: bpm,
            })
            .ok_or_else(|| KernError::UnknownTempoLabel(label.to_string()))
    }
}

/// Table tempo scaled by a factor drawn uniformly from [0.94, 1.06].
pub fn assign_tempo(label: &str, rng_seed: u64) -> Result<TempoMark, KernError> {
    let mut mark = TempoMark::lookup(label)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let factor = rng.gen_range(1.0 - TEMPO_JITTER..=1.0 + TEMPO_JITTER);
    mark.quarter_bpm *= factor;
    Ok(mark)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        assert_eq!(TempoMark::lookup("Andante").unwrap().quarter_bpm, 92.0);
        assert_eq!(TempoMark::lookup("Presto").unwrap().quarter_bpm, 186.0);
        assert_eq!(TempoMark::lookup("  allegro   VIVACE ").unwrap().quarter_bpm, 160.0);
        assert!(matches!(
            TempoMark::lookup("Allegro con brio"),
            Err(KernError::UnknownTempoLabel(_))
        ));
    }

    #[test]
    fn jitter_range() {
        for seed in 0..1000 {
            let bpm = assign_tempo("Allegro", seed).unwrap().quarter_bpm;
            assert!((130.0 * 0.94..=130.0 * 1.06).contains(&bpm), "{seed}: {bpm}");
        }
        assert_eq!(assign_tempo("Allegro", 7), assign_tempo("Allegro", 7));
    }
}
