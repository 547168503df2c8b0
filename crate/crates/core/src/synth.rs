//! Additive synthesis of preprocessed scores.
//!
//! Every note is a sum of harmonics under an exponential decay. Tied
//! notes sound as one tone with a single attack. The mix of all spines is
//! scaled so its peak is 0.9.

use crate::dsp::{AudioClip, DspError, SAMPLE_RATE};
use crate::kern::{ticks_to_quarters, timeline, KernDocument, KernError, ScoreEvent, TempoMark};

pub const PEAK: f64 = 0.9;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("{spines} spines but {voices} voice specs")]
    VoiceCountMismatch { spines: usize, voices: usize },
    #[error("invalid voice spec: {0}")]
    InvalidVoice(String),
    #[error("tempo must be positive, got {0}")]
    InvalidTempo(f64),
    #[error(transparent)]
    Kern(#[from] KernError),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthVoiceSpec {
    /// Relative amplitude of harmonic `k + 1`.
    pub harmonic_amplitudes: Vec<f64>,
    /// Time constant of the amplitude envelope `e^(-t / decay_seconds)`.
    pub decay_seconds: f64,
}

impl Default for SynthVoiceSpec {
    fn default() -> Self {
        SynthVoiceSpec {
            harmonic_amplitudes: vec![1.0, 0.5, 0.25],
            decay_seconds: 1.5,
        }
    }
}

impl SynthVoiceSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let amps = &self.harmonic_amplitudes;
        if amps.is_empty() {
            return Err(SynthError::InvalidVoice("no harmonics".into()));
        }
        if amps.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(SynthError::InvalidVoice(format!("amplitudes {amps:?} outside [0, 1]")));
        }
        if !(self.decay_seconds > 0.0 && self.decay_seconds.is_finite()) {
            return Err(SynthError::InvalidVoice(format!("decay {}", self.decay_seconds)));
        }
        Ok(())
    }
}

/// A sounding tone after tied notes are merged, in ticks.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Tone {
    spine: usize,
    start: u32,
    end: u32,
    frequency: f64,
}

fn tones(score: &[Vec<ScoreEvent>], onsets: &[u32]) -> Vec<Tone> {
    let width = score.first().map_or(0, |r| r.len());
    let mut out: Vec<Tone> = Vec::new();
    // per spine: index in `out` of a tone whose tie is still open
    let mut open: Vec<Option<(usize, i32)>> = vec![None; width];
    for (row, &onset) in score.iter().zip(onsets) {
        for (s, event) in row.iter().enumerate() {
            let ScoreEvent::Note { duration, pitch, tie, .. } = event else {
                if matches!(event, ScoreEvent::Rest { .. }) {
                    open[s] = None;
                }
                continue;
            };
            let end = onset + duration.ticks();
            let continued = match open[s] {
                Some((i, midi)) if tie.closes() && midi == pitch.midi() && out[i].end == onset => {
                    out[i].end = end;
                    Some(i)
                }
                _ => None,
            };
            let index = continued.unwrap_or_else(|| {
                out.push(Tone {
                    spine: s,
                    start: onset,
                    end,
                    frequency: pitch.frequency(),
                });
                out.len() - 1
            });
            open[s] = tie.opens().then_some((index, pitch.midi()));
        }
    }
    out
}

/// Renders a preprocessed document at `tempo`, one voice spec per spine.
pub fn render(
    doc: &KernDocument,
    tempo: &TempoMark,
    voices: &[SynthVoiceSpec],
) -> Result<AudioClip, SynthError> {
    if voices.len() != doc.spines.len() {
        return Err(SynthError::VoiceCountMismatch {
            spines: doc.spines.len(),
            voices: voices.len(),
        });
    }
    for v in voices {
        v.validate()?;
    }
    if !(tempo.quarter_bpm > 0.0 && tempo.quarter_bpm.is_finite()) {
        return Err(SynthError::InvalidTempo(tempo.quarter_bpm));
    }
    let score = doc.score()?;
    let time = timeline(&score)?;
    let sr = SAMPLE_RATE as f64;
    let sample_at = |tick: u32| (ticks_to_quarters(tick) * 60.0 / tempo.quarter_bpm * sr).round() as usize;

    let mut buf = vec![0.0f64; sample_at(time.total)];
    for tone in tones(&score, &time.onsets) {
        let voice = &voices[tone.spine];
        let (start, end) = (sample_at(tone.start), sample_at(tone.end));
        let harmonics: Vec<(f64, f64)> = voice
            .harmonic_amplitudes
            .iter()
            .enumerate()
            .map(|(k, &a)| ((k + 1) as f64 * tone.frequency, a))
            .filter(|&(f, a)| f < sr / 2.0 && a > 0.0)
            .collect();
        for (n, out) in buf[start..end].iter_mut().enumerate() {
            let t = n as f64 / sr;
            let wave: f64 = harmonics
                .iter()
                .map(|&(f, a)| a * (2.0 * std::f64::consts::PI * f * t).sin())
                .sum();
            *out += wave * (-t / voice.decay_seconds).exp();
        }
    }

    let peak = buf.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let scale = PEAK / peak;
        buf.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(AudioClip::new(buf, SAMPLE_RATE)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{stft_logfreq, A4_BIN};
    use crate::kern::{parse_kern, preprocess};

    fn doc(text: &str) -> KernDocument {
        preprocess(&parse_kern(text).unwrap()).unwrap()
    }

    fn bpm(quarter_bpm: f64) -> TempoMark {
        TempoMark {
            label: "test".into(),
            quarter_bpm,
        }
    }

    #[test]
    fn quarter_at_sixty_is_one_second() {
        let clip = render(&doc("**kern\n4c\n*-\n"), &bpm(60.0), &[SynthVoiceSpec::default()]).unwrap();
        assert_eq!(clip.samples().len(), 22050);
        let peak = clip.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - PEAK).abs() < 1e-12);
    }

    #[test]
    fn a4_whole_note_spectrum() {
        let clip = render(&doc("**kern\n1a\n*-\n"), &bpm(120.0), &[SynthVoiceSpec::default()]).unwrap();
        let spec = stft_logfreq(&clip).unwrap();
        for row in spec.frames.rows() {
            let best = (0..row.len()).fold(0, |b, k| if row[k] > row[b] { k } else { b });
            assert_eq!(best, A4_BIN);
        }
    }

    #[test]
    fn tie_has_single_attack() {
        let voice = [SynthVoiceSpec::default()];
        // two half notes at 120 bpm: 2 s in total, joined at 1 s
        let tied = render(&doc("**kern\n[2a\n2a]\n*-\n"), &bpm(120.0), &voice).unwrap();
        let whole = render(&doc("**kern\n1a\n*-\n"), &bpm(120.0), &voice).unwrap();
        assert_eq!(tied.samples().len(), 2 * 22050);
        assert_eq!(tied, whole);
        let untied = render(&doc("**kern\n2a\n2a\n*-\n"), &bpm(120.0), &voice).unwrap();
        assert_ne!(untied, whole);
    }

    #[test]
    fn rests_are_silent() {
        let clip = render(&doc("**kern\n4r\n2r\n*-\n"), &bpm(100.0), &[SynthVoiceSpec::default()]).unwrap();
        assert!(clip.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn voice_count_must_match() {
        let d = doc("**kern\t**kern\n4c\t4e\n*-\t*-\n");
        assert!(matches!(
            render(&d, &bpm(60.0), &[SynthVoiceSpec::default()]),
            Err(SynthError::VoiceCountMismatch { spines: 2, voices: 1 })
        ));
    }

    #[test]
    fn voice_validation() {
        let bad = SynthVoiceSpec { harmonic_amplitudes: vec![], decay_seconds: 1.0 };
        assert!(bad.validate().is_err());
        let bad = SynthVoiceSpec { harmonic_amplitudes: vec![1.0, 2.0], decay_seconds: 1.0 };
        assert!(bad.validate().is_err());
    }
}
