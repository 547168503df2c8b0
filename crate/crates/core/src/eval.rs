//! Word and character error rates.
//!
//! Both rates are edit distances divided by the reference length. A
//! "character" is one vocabulary symbol; a "word" is a maximal run of
//! non-separator symbols, so a misplaced tab or newline costs characters
//! but no words.

use std::fmt::Write as _;
use std::ops::AddAssign;

use serde::Serialize;

use crate::codec::{segment_words, split_words, Symbol, TokenSequence, Vocabulary};

#[derive(Debug, thiserror::Error, Clone, Copy, PartialEq, Eq)]
pub enum EvalError {
    #[error("reference is empty")]
    EmptyReference,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EditStats {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_length: usize,
}

impl EditStats {
    pub fn edits(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    pub fn rate(&self) -> Result<f64, EvalError> {
        if self.reference_length == 0 {
            return Err(EvalError::EmptyReference);
        }
        Ok(self.edits() as f64 / self.reference_length as f64)
    }
}

impl AddAssign for EditStats {
    fn add_assign(&mut self, rhs: EditStats) {
        self.substitutions += rhs.substitutions;
        self.insertions += rhs.insertions;
        self.deletions += rhs.deletions;
        self.reference_length += rhs.reference_length;
    }
}

/// Levenshtein alignment of `hypothesis` against `reference`. Among
/// minimal alignments the traceback takes the diagonal whenever it can,
/// so a mismatch counts as one substitution rather than an insertion and
/// a deletion.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditStats {
    let (n, m) = (reference.len(), hypothesis.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[i - 1][j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let mut stats = EditStats {
        reference_length: n,
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let differ = reference[i - 1] != hypothesis[j - 1];
            if d[i][j] == d[i - 1][j - 1] + usize::from(differ) {
                stats.substitutions += usize::from(differ);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            stats.deletions += 1;
            i -= 1;
        } else {
            stats.insertions += 1;
            j -= 1;
        }
    }
    stats
}

fn words(tokens: &TokenSequence, vocab: &Vocabulary) -> Vec<Vec<usize>> {
    segment_words(tokens, vocab)
        .into_iter()
        .map(|r| tokens.0[r].to_vec())
        .collect()
}

pub fn word_stats(reference: &TokenSequence, hypothesis: &TokenSequence, vocab: &Vocabulary) -> EditStats {
    edit_distance(&words(reference, vocab), &words(hypothesis, vocab))
}

pub fn char_stats(reference: &TokenSequence, hypothesis: &TokenSequence) -> EditStats {
    edit_distance(&reference.0, &hypothesis.0)
}

/// Word and character statistics of symbol sequences, for references
/// that may hold symbols outside the model's vocabulary.
pub fn symbol_stats(reference: &[Symbol], hypothesis: &[Symbol]) -> (EditStats, EditStats) {
    let words = |s: &[Symbol]| -> Vec<Vec<Symbol>> {
        split_words(s, Symbol::is_separator)
            .into_iter()
            .map(|r| s[r].to_vec())
            .collect()
    };
    (
        edit_distance(&words(reference), &words(hypothesis)),
        edit_distance(reference, hypothesis),
    )
}

pub fn wer(reference: &TokenSequence, hypothesis: &TokenSequence, vocab: &Vocabulary) -> Result<f64, EvalError> {
    word_stats(reference, hypothesis, vocab).rate()
}

pub fn cer(reference: &TokenSequence, hypothesis: &TokenSequence) -> Result<f64, EvalError> {
    char_stats(reference, hypothesis).rate()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleScore {
    pub id: String,
    pub words: EditStats,
    pub chars: EditStats,
    pub decodable: bool,
}

impl SampleScore {
    pub fn from_symbols(id: &str, reference: &[Symbol], hypothesis: &[Symbol], decodable: bool) -> Self {
        let (words, chars) = symbol_stats(reference, hypothesis);
        SampleScore {
            id: id.to_string(),
            words,
            chars,
            decodable,
        }
    }

    pub fn new(id: &str, reference: &TokenSequence, hypothesis: &TokenSequence, vocab: &Vocabulary, decodable: bool) -> Self {
        SampleScore {
            id: id.to_string(),
            words: word_stats(reference, hypothesis, vocab),
            chars: char_stats(reference, hypothesis),
            decodable,
        }
    }
}

/// Per-sample scores plus micro-averaged corpus totals.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub samples: Vec<SampleScore>,
    pub words: EditStats,
    pub chars: EditStats,
}

impl EvaluationReport {
    pub fn push(&mut self, sample: SampleScore) {
        self.words += sample.words;
        self.chars += sample.chars;
        self.samples.push(sample);
    }

    pub fn wer(&self) -> Result<f64, EvalError> {
        self.words.rate()
    }

    pub fn cer(&self) -> Result<f64, EvalError> {
        self.chars.rate()
    }

    pub fn decodable_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().filter(|s| s.decodable).count() as f64 / self.samples.len() as f64
    }

    pub fn to_text(&self) -> String {
        let fmt_rate = |r: Result<f64, EvalError>| r.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        let mut out = String::new();
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{}\twer={}\tcer={}\tS={}\tI={}\tD={}",
                s.id,
                fmt_rate(s.words.rate()),
                fmt_rate(s.chars.rate()),
                s.chars.substitutions,
                s.chars.insertions,
                s.chars.deletions
            );
        }
        let _ = writeln!(
            out,
            "corpus (micro-average)\twer={}\tcer={}\tsamples={}\tdecodable={:.4}",
            fmt_rate(self.wer()),
            fmt_rate(self.cer()),
            self.samples.len(),
            self.decodable_fraction()
        );
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "samples": self.samples,
            "corpus": {
                "wer": self.wer().ok(),
                "cer": self.cer().ok(),
                "words": self.words,
                "chars": self.chars,
                "decodable_fraction": self.decodable_fraction(),
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Symbol;
    use crate::kern::{Accidental, Duration, Pitch, Step};

    #[test]
    fn basic_counts() {
        let s = edit_distance(b"abc", b"abc");
        assert_eq!((s.substitutions, s.insertions, s.deletions, s.reference_length), (0, 0, 0, 3));
        let s = edit_distance(b"abc", b"axc");
        assert_eq!((s.substitutions, s.insertions, s.deletions), (1, 0, 0));
        let s = edit_distance(b"abc", b"");
        assert_eq!(s.deletions, 3);
        let s = edit_distance(b"", b"ab");
        assert_eq!(s.insertions, 2);
        assert_eq!(s.rate(), Err(EvalError::EmptyReference));
    }

    #[test]
    fn substitution_preferred() {
        let s = edit_distance(b"ab", b"ba");
        assert_eq!((s.substitutions, s.insertions, s.deletions), (2, 0, 0));
    }

    fn vocab() -> Vocabulary {
        let p = |s| Symbol::Pitch(Pitch::new(s, Accidental::Natural, 4));
        Vocabulary::from_symbols([
            Symbol::Duration(Duration::new(4, false).unwrap()),
            p(Step::C),
            p(Step::D),
            p(Step::E),
        ])
    }

    fn seq(v: &Vocabulary, text: &[&str]) -> TokenSequence {
        TokenSequence(text.iter().map(|t| v.index_of(&t.parse().unwrap()).unwrap()).collect())
    }

    #[test]
    fn word_and_char_rates() {
        let v = vocab();
        let r = seq(&v, &["4", "c", "\\t", "4", "d", "\\n", "4", "e", "\\n"]);
        assert_eq!(wer(&r, &r, &v), Ok(0.0));
        assert_eq!(cer(&r, &r), Ok(0.0));
        let h = seq(&v, &["4", "c", "\\t", "4", "c", "\\n", "4", "e", "\\n"]);
        assert!((wer(&r, &h, &v).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        // separator swap: one character, no words
        let h = seq(&v, &["4", "c", "\\n", "4", "d", "\\n", "4", "e", "\\n"]);
        assert_eq!(wer(&r, &h, &v), Ok(0.0));
        assert!((cer(&r, &h).unwrap() - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn corpus_is_micro_averaged() {
        let mut report = EvaluationReport::default();
        let a = EditStats { substitutions: 1, reference_length: 2, ..Default::default() };
        let b = EditStats { reference_length: 8, ..Default::default() };
        for (id, s) in [("a", a), ("b", b)] {
            report.push(SampleScore { id: id.into(), words: s, chars: s, decodable: true });
        }
        assert_eq!(report.cer(), Ok(0.1));
        assert!(report.to_text().contains("corpus (micro-average)"));
    }
}
