//! The per-note token grammar of `**kern` data cells.

use std::fmt;

use super::{Accidental, Duration, Pitch, ScoreEvent, Step, Tie};

/// Written pitch as it appears in a token, before range and accidental checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RawPitch {
    pub step: Step,
    /// Net chromatic alteration: `#` counts +1, `-` counts -1.
    pub alter: i8,
    pub octave: i8,
}

impl RawPitch {
    pub fn midi(&self) -> i32 {
        12 * (self.octave as i32 + 1) + self.step.semitone() + self.alter as i32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sound {
    Rest,
    Pitch(RawPitch),
}

/// One note or rest inside a data cell, parsed leniently so that
/// preprocessing can decide what to keep and what to reject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernToken {
    /// Reciprocal duration and number of augmentation dots. `None` only for
    /// grace notes written without a duration.
    pub duration: Option<(u8, u8)>,
    pub sound: Sound,
    pub tie: Tie,
    pub fermata: bool,
    pub grace: bool,
    /// Ornament signifiers in source order (trills, mordents, turns).
    pub ornaments: String,
}

/// Why a token failed to parse. Line and spine are attached by the caller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenError(pub String);

const ORNAMENTS: &str = "TtMmWwS$RO";
// Visual and performance signifiers that carry nothing we transcribe:
// beams, stems, slurs, phrases, articulations, editorial marks.
const IGNORED: &str = "LJKk/\\(){}&'\"`~^:,vuzIoxXyY?<>|@+NiUjlZpP";

impl KernToken {
    pub fn parse(text: &str) -> Result<Self, TokenError> {
        let mut digits = String::new();
        let mut digits_done = false;
        let mut dots = 0u8;
        let mut letter: Option<char> = None;
        let mut letter_count = 0i8;
        let mut alter = 0i8;
        let mut rest = false;
        let mut tie_open = false;
        let mut tie_close = false;
        let mut tie_continue = false;
        let mut fermata = false;
        let mut grace = false;
        let mut ornaments = String::new();

        for c in text.chars() {
            match c {
                '0'..='9' => {
                    if digits_done {
                        return Err(TokenError(format!("two duration fields in `{text}`")));
                    }
                    digits.push(c);
                }
                '.' => dots += 1,
                'a'..='g' | 'A'..='G' => {
                    match letter {
                        None => letter = Some(c),
                        Some(prev) if prev == c => {}
                        Some(_) => {
                            return Err(TokenError(format!("mixed pitch letters in `{text}`")))
                        }
                    }
                    letter_count += 1;
                }
                'r' => rest = true,
                '#' => alter += 1,
                '-' => alter -= 1,
                'n' => {}
                '[' => tie_open = true,
                ']' => tie_close = true,
                '_' => tie_continue = true,
                ';' => fermata = true,
                'q' | 'Q' => grace = true,
                c if ORNAMENTS.contains(c) => ornaments.push(c),
                c if IGNORED.contains(c) => {}
                c => return Err(TokenError(format!("unexpected character `{c}` in `{text}`"))),
            }
            if !digits.is_empty() && !c.is_ascii_digit() {
                digits_done = true;
            }
        }

        let duration = if digits.is_empty() {
            if !grace {
                return Err(TokenError(format!("missing duration in `{text}`")));
            }
            None
        } else {
            let denom: u32 = digits
                .parse()
                .map_err(|_| TokenError(format!("bad duration in `{text}`")))?;
            if !Duration::is_canonical(denom) {
                return Err(TokenError(format!(
                    "wrong canonical duration {denom} in `{text}`"
                )));
            }
            Some((denom as u8, dots))
        };

        let sound = if rest {
            // Pitch letters on a rest only position it vertically.
            Sound::Rest
        } else {
            let c = letter.ok_or_else(|| TokenError(format!("no pitch or rest in `{text}`")))?;
            let step = Step::from_letter(c).expect("letter range checked above");
            let octave = if c.is_ascii_lowercase() {
                3 + letter_count
            } else {
                4 - letter_count
            };
            Sound::Pitch(RawPitch { step, alter, octave })
        };

        let tie = match (tie_open, tie_close, tie_continue) {
            (false, false, false) => Tie::None,
            (true, false, false) => Tie::Open,
            (false, true, false) => Tie::Close,
            (false, false, true) => Tie::Continue,
            _ => return Err(TokenError(format!("conflicting tie marks in `{text}`"))),
        };
        if rest && tie != Tie::None {
            return Err(TokenError(format!("tied rest `{text}`")));
        }

        Ok(KernToken {
            duration,
            sound,
            tie,
            fermata,
            grace,
            ornaments,
        })
    }

    /// Strict conversion to a [`ScoreEvent`]; the error names the first
    /// construct outside the supported notation subset.
    pub fn to_event(&self) -> Result<ScoreEvent, String> {
        if self.grace {
            return Err("grace note".into());
        }
        let (denom, dots) = self.duration.ok_or("missing duration")?;
        if dots > 1 {
            return Err("double dot".into());
        }
        let duration = Duration::new(denom, dots == 1).ok_or("wrong canonical duration")?;
        match self.sound {
            Sound::Rest => Ok(ScoreEvent::Rest {
                duration,
                fermata: self.fermata,
            }),
            Sound::Pitch(raw) => {
                let accidental = match raw.alter {
                    0 => Accidental::Natural,
                    1 => Accidental::Sharp,
                    -1 => Accidental::Flat,
                    a if a > 1 => return Err("double sharp".into()),
                    _ => return Err("double flat".into()),
                };
                if !(Pitch::MIN_OCTAVE as i8..=Pitch::MAX_OCTAVE as i8).contains(&raw.octave) {
                    return Err(format!("octave {} outside C2-B7", raw.octave));
                }
                Ok(ScoreEvent::Note {
                    duration,
                    pitch: Pitch::new(raw.step, accidental, raw.octave as u8),
                    tie: self.tie,
                    fermata: self.fermata,
                })
            }
        }
    }

    pub fn from_event(event: &ScoreEvent) -> Option<Self> {
        match *event {
            ScoreEvent::Note {
                duration,
                pitch,
                tie,
                fermata,
            } => Some(KernToken {
                duration: Some((duration.denom(), duration.dotted() as u8)),
                sound: Sound::Pitch(RawPitch {
                    step: pitch.step,
                    alter: pitch.accidental.alter(),
                    octave: pitch.octave as i8,
                }),
                tie,
                fermata,
                grace: false,
                ornaments: String::new(),
            }),
            ScoreEvent::Rest { duration, fermata } => Some(KernToken {
                duration: Some((duration.denom(), duration.dotted() as u8)),
                sound: Sound::Rest,
                tie: Tie::None,
                fermata,
                grace: false,
                ornaments: String::new(),
            }),
            ScoreEvent::Barline | ScoreEvent::Continuation => None,
        }
    }
}

pub(crate) fn pitch_letters(step: Step, octave: i32) -> String {
    let lower = step.letter();
    if octave >= 4 {
        std::iter::repeat(lower).take((octave - 3) as usize).collect()
    } else {
        let upper = lower.to_ascii_uppercase();
        std::iter::repeat(upper).take((4 - octave) as usize).collect()
    }
}

impl fmt::Display for KernToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.tie == Tie::Open {
            f.write_str("[")?;
        }
        if let Some((denom, dots)) = self.duration {
            write!(f, "{denom}")?;
            for _ in 0..dots {
                f.write_str(".")?;
            }
        }
        match self.sound {
            Sound::Rest => f.write_str("r")?,
            Sound::Pitch(p) => {
                f.write_str(&pitch_letters(p.step, p.octave as i32))?;
                let mark = if p.alter > 0 { "#" } else { "-" };
                for _ in 0..p.alter.unsigned_abs() {
                    f.write_str(mark)?;
                }
            }
        }
        f.write_str(&self.ornaments)?;
        if self.grace {
            f.write_str("q")?;
        }
        if self.fermata {
            f.write_str(";")?;
        }
        match self.tie {
            Tie::Close => f.write_str("]"),
            Tie::Continue => f.write_str("_"),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn note(text: &str) -> RawPitch {
        match KernToken::parse(text).unwrap().sound {
            Sound::Pitch(p) => p,
            Sound::Rest => panic!("expected a pitch"),
        }
    }

    #[test]
    fn octave_spelling() {
        assert_eq!(note("4c").octave, 4);
        assert_eq!(note("4cc").octave, 5);
        assert_eq!(note("4C").octave, 3);
        assert_eq!(note("4CC").octave, 2);
        assert_eq!(note("4a").midi(), 69);
        assert_eq!(note("4b-").midi(), 70);
    }

    #[test]
    fn ignores_visual_signifiers() {
        let t = KernToken::parse("8.ccL/'").unwrap();
        assert_eq!(t.duration, Some((8, 1)));
        assert_eq!(t.to_string(), "8.cc");
    }

    #[test]
    fn ties_fermata_and_rests() {
        let t = KernToken::parse("[4e-;").unwrap();
        assert_eq!(t.tie, Tie::Open);
        assert!(t.fermata);
        assert_eq!(t.to_string(), "[4e-;");
        assert_eq!(KernToken::parse("4ryy").unwrap().sound, Sound::Rest);
        assert_eq!(KernToken::parse("2GG_").unwrap().tie, Tie::Continue);
    }

    #[test]
    fn rejects_non_canonical_durations() {
        assert!(KernToken::parse("3c").is_err());
        assert!(KernToken::parse("0c").is_err());
        assert!(KernToken::parse("128c").is_err());
        assert!(KernToken::parse("c").is_err());
        assert!(KernToken::parse("4h").is_err());
    }

    #[test]
    fn strict_conversion_rejects_out_of_scope_notation() {
        for text in ["4..c", "4c##", "4c--", "4ccccc", "8cq", "4AAA"] {
            let t = KernToken::parse(text).unwrap();
            assert!(t.to_event().is_err(), "{text}");
        }
        assert!(KernToken::parse("4c#").unwrap().to_event().is_ok());
    }
}
