//! The output alphabet and the mapping between scores and symbol sequences.
//!
//! A preprocessed score is written row by row: cells separated by a tab
//! symbol, rows ended by a newline symbol. A note takes a duration symbol
//! followed by a pitch symbol (both single symbols however many characters
//! their `**kern` spelling has), with tie and fermata marks around them. A
//! barline row collapses to a single barline symbol.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::kern::{Duration, KernDocument, KernError, Metadata, Pitch, ScoreEvent, Spine, Tie};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("symbol `{0}` is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error(transparent)]
    Kern(#[from] KernError),
    #[error("malformed vocabulary file, line {line}: {reason}")]
    VocabularyFile { line: usize, reason: String },
    #[error("cannot parse symbol `{0}`")]
    BadSymbol(String),
}

/// Decoding failure with the position of the offending token and every
/// complete row read before it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("syntax error at token {position}: {reason}")]
pub struct SyntaxError {
    pub position: usize,
    pub reason: String,
    pub partial: KernDocument,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    Tab,
    Newline,
    /// Null token: the previous event still sounds.
    Dot,
    Barline,
    TieOpen,
    TieClose,
    Fermata,
    Rest,
    Duration(Duration),
    Pitch(Pitch),
}

impl Symbol {
    /// Symbols present in every vocabulary, in vocabulary order.
    pub const STRUCTURAL: [Symbol; 7] = [
        Symbol::Tab,
        Symbol::Newline,
        Symbol::Dot,
        Symbol::Barline,
        Symbol::TieOpen,
        Symbol::TieClose,
        Symbol::Fermata,
    ];

    pub fn is_separator(&self) -> bool {
        matches!(self, Symbol::Tab | Symbol::Newline)
    }

    fn sort_key(&self) -> (u8, i32, u8, u8) {
        match *self {
            Symbol::Tab => (0, 0, 0, 0),
            Symbol::Newline => (0, 1, 0, 0),
            Symbol::Dot => (0, 2, 0, 0),
            Symbol::Barline => (0, 3, 0, 0),
            Symbol::TieOpen => (0, 4, 0, 0),
            Symbol::TieClose => (0, 5, 0, 0),
            Symbol::Fermata => (0, 6, 0, 0),
            Symbol::Duration(d) => (1, d.denom() as i32, d.dotted() as u8, 0),
            Symbol::Rest => (2, i32::MIN, 0, 0),
            Symbol::Pitch(p) => (2, p.midi(), p.step as u8, p.accidental as u8),
        }
    }

    /// Text form used in vocabulary and token files: the `**kern` spelling,
    /// with tab and newline written as `\t` and `\n`.
    pub fn escaped(&self) -> String {
        match self {
            Symbol::Tab => "\\t".into(),
            Symbol::Newline => "\\n".into(),
            other => other.to_string(),
        }
    }
}

impl Ord for Symbol {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for Symbol {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Tab => f.write_str("\t"),
            Symbol::Newline => f.write_str("\n"),
            Symbol::Dot => f.write_str("."),
            Symbol::Barline => f.write_str("="),
            Symbol::TieOpen => f.write_str("["),
            Symbol::TieClose => f.write_str("]"),
            Symbol::Fermata => f.write_str(";"),
            Symbol::Rest => f.write_str("r"),
            Symbol::Duration(d) => f.write_str(&d.kern()),
            Symbol::Pitch(p) => f.write_str(&p.kern()),
        }
    }
}

impl FromStr for Symbol {
    type Err = CodecError;

    /// Parses the escaped form.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CodecError::BadSymbol(s.to_string());
        Ok(match s {
            "\\t" => Symbol::Tab,
            "\\n" => Symbol::Newline,
            "." => Symbol::Dot,
            "=" => Symbol::Barline,
            "[" => Symbol::TieOpen,
            "]" => Symbol::TieClose,
            ";" => Symbol::Fermata,
            "r" => Symbol::Rest,
            _ if s.starts_with(|c: char| c.is_ascii_digit()) => {
                let (digits, dotted) = match s.strip_suffix('.') {
                    Some(d) => (d, true),
                    None => (s, false),
                };
                let denom: u8 = digits.parse().map_err(|_| bad())?;
                Symbol::Duration(Duration::new(denom, dotted).ok_or_else(bad)?)
            }
            _ => {
                let token = crate::kern::KernToken::parse(&format!("4{s}")).map_err(|_| bad())?;
                let event = token.to_event().map_err(|_| bad())?;
                match event {
                    ScoreEvent::Note { pitch, tie: Tie::None, fermata: false, .. }
                        if pitch.kern() == s =>
                    {
                        Symbol::Pitch(pitch)
                    }
                    _ => return Err(bad()),
                }
            }
        })
    }
}

/// Symbol table with the CTC blank reserved at index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<Symbol>,
    index: HashMap<Symbol, usize>,
}

pub const BLANK: usize = 0;
const BLANK_TEXT: &str = "<eps>";

impl Vocabulary {
    /// Canonical vocabulary over a symbol set: structural symbols first, then
    /// durations, then rest and pitches. Structural symbols are always added.
    pub fn from_symbols<I: IntoIterator<Item = Symbol>>(symbols: I) -> Self {
        let mut set: BTreeSet<Symbol> = symbols.into_iter().collect();
        set.extend(Symbol::STRUCTURAL);
        let symbols: Vec<Symbol> = set.into_iter().collect();
        let index = symbols.iter().enumerate().map(|(i, s)| (*s, i + 1)).collect();
        Vocabulary { symbols, index }
    }

    /// Size including the blank.
    pub fn len(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, symbol: &Symbol) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    /// `None` for the blank.
    pub fn symbol(&self, index: usize) -> Option<Symbol> {
        index.checked_sub(1).and_then(|i| self.symbols.get(i)).copied()
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn symbols_of(&self, tokens: &TokenSequence) -> Vec<Symbol> {
        tokens.0.iter().filter_map(|&t| self.symbol(t)).collect()
    }

    /// One symbol per line, line 0 is the blank.
    pub fn to_file_string(&self) -> String {
        let mut out = String::from(BLANK_TEXT);
        out.push('\n');
        for s in &self.symbols {
            out.push_str(&s.escaped());
            out.push('\n');
        }
        out
    }

    pub fn from_file_string(text: &str) -> Result<Self, CodecError> {
        let mut lines = text.lines();
        if lines.next() != Some(BLANK_TEXT) {
            return Err(CodecError::VocabularyFile {
                line: 0,
                reason: format!("first line must be {BLANK_TEXT}"),
            });
        }
        let mut symbols = Vec::new();
        for (i, line) in lines.enumerate() {
            let symbol: Symbol = line.parse().map_err(|e: CodecError| CodecError::VocabularyFile {
                line: i + 1,
                reason: e.to_string(),
            })?;
            symbols.push(symbol);
        }
        let vocab = Vocabulary::from_symbols(symbols.iter().copied());
        if vocab.symbols != symbols {
            return Err(CodecError::VocabularyFile {
                line: 0,
                reason: "symbols are not in canonical order".into(),
            });
        }
        Ok(vocab)
    }

    /// SHA-256 of the file form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string().as_bytes()))
    }
}

/// Vocabulary indices; targets never contain the blank.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence(pub Vec<usize>);

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

pub fn build_vocabulary(corpus: &[KernDocument]) -> Result<Vocabulary, CodecError> {
    if corpus.is_empty() {
        return Err(CodecError::EmptyCorpus);
    }
    let mut seen = BTreeSet::new();
    for doc in corpus {
        seen.extend(encode_symbols(doc)?);
    }
    Ok(Vocabulary::from_symbols(seen))
}

/// Vocabulary-free encoding of a preprocessed document.
pub fn encode_symbols(doc: &KernDocument) -> Result<Vec<Symbol>, CodecError> {
    let mut out = Vec::new();
    for row in doc.score()? {
        if row.iter().all(|e| *e == ScoreEvent::Barline) {
            out.extend([Symbol::Barline, Symbol::Newline]);
            continue;
        }
        for (i, event) in row.iter().enumerate() {
            if i > 0 {
                out.push(Symbol::Tab);
            }
            match *event {
                ScoreEvent::Continuation => out.push(Symbol::Dot),
                ScoreEvent::Note {
                    duration,
                    pitch,
                    tie,
                    fermata,
                } => {
                    if tie.opens() {
                        out.push(Symbol::TieOpen);
                    }
                    out.extend([Symbol::Duration(duration), Symbol::Pitch(pitch)]);
                    if tie.closes() {
                        out.push(Symbol::TieClose);
                    }
                    if fermata {
                        out.push(Symbol::Fermata);
                    }
                }
                ScoreEvent::Rest { duration, fermata } => {
                    out.extend([Symbol::Duration(duration), Symbol::Rest]);
                    if fermata {
                        out.push(Symbol::Fermata);
                    }
                }
                ScoreEvent::Barline => {
                    return Err(CodecError::Kern(KernError::NotPreprocessed(
                        "a barline mixed with events",
                    )))
                }
            }
        }
        out.push(Symbol::Newline);
    }
    Ok(out)
}

pub fn encode(doc: &KernDocument, vocab: &Vocabulary) -> Result<TokenSequence, CodecError> {
    encode_symbols(doc)?
        .iter()
        .map(|s| {
            vocab
                .index_of(s)
                .ok_or_else(|| CodecError::OutOfVocabulary(s.escaped()))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(TokenSequence)
}

pub fn decode(tokens: &TokenSequence, vocab: &Vocabulary) -> Result<KernDocument, SyntaxError> {
    let mut symbols = Vec::with_capacity(tokens.len());
    for (pos, &t) in tokens.0.iter().enumerate() {
        match vocab.symbol(t) {
            Some(s) => symbols.push(s),
            None => {
                return Err(SyntaxError {
                    position: pos,
                    reason: format!("token {t} is the blank or out of range"),
                    partial: document(&[]),
                })
            }
        }
    }
    decode_symbols(&symbols)
}

/// Inverse of [`encode_symbols`] on well-formed input.
pub fn decode_symbols(symbols: &[Symbol]) -> Result<KernDocument, SyntaxError> {
    let mut rows: Vec<Vec<ScoreEvent>> = Vec::new();
    let mut width: Option<usize> = None;
    let mut row: Vec<ScoreEvent> = Vec::new();
    let mut row_start = 0;
    let mut cell_start = 0;
    let fail = |position: usize, reason: String, rows: &[Vec<ScoreEvent>]| SyntaxError {
        position,
        reason,
        partial: document(rows),
    };

    for (pos, symbol) in symbols.iter().enumerate() {
        if !symbol.is_separator() {
            continue;
        }
        let cell = &symbols[cell_start..pos];
        if cell.is_empty() {
            return Err(fail(pos, "empty cell".into(), &rows));
        }
        if cell == [Symbol::Barline] {
            if !row.is_empty() || *symbol != Symbol::Newline {
                return Err(fail(cell_start, "barline must fill its row".into(), &rows));
            }
            rows.push(vec![ScoreEvent::Barline]);
        } else {
            let event = parse_cell(cell).map_err(|(off, reason)| fail(cell_start + off, reason, &rows))?;
            row.push(event);
            if *symbol == Symbol::Newline {
                let found = row.len();
                match width {
                    None => width = Some(found),
                    Some(w) if w != found => {
                        return Err(fail(
                            row_start,
                            format!("row has {found} cells, expected {w}"),
                            &rows,
                        ))
                    }
                    Some(_) => {}
                }
                rows.push(std::mem::take(&mut row));
            }
        }
        cell_start = pos + 1;
        if *symbol == Symbol::Newline {
            row_start = pos + 1;
        }
    }
    if row_start < symbols.len() {
        return Err(fail(row_start, "sequence ends inside a row".into(), &rows));
    }
    Ok(document(&rows))
}

/// Expands single-symbol barline rows to the document width.
fn document(rows: &[Vec<ScoreEvent>]) -> KernDocument {
    let width = rows
        .iter()
        .find(|r| r.first() != Some(&ScoreEvent::Barline))
        .map_or(1, |r| r.len());
    let score: Vec<Vec<ScoreEvent>> = rows
        .iter()
        .map(|r| {
            if r.first() == Some(&ScoreEvent::Barline) {
                vec![ScoreEvent::Barline; width]
            } else {
                r.clone()
            }
        })
        .collect();
    let spines = (0..width).map(|_| Spine::kern(None)).collect();
    KernDocument::from_score(spines, &score, Metadata::default())
}

/// `[tie-open] duration (pitch | rest) [tie-close] [fermata]` or a lone dot.
fn parse_cell(cell: &[Symbol]) -> Result<ScoreEvent, (usize, String)> {
    if cell == [Symbol::Dot] {
        return Ok(ScoreEvent::Continuation);
    }
    let mut i = 0;
    let opens = cell.first() == Some(&Symbol::TieOpen);
    if opens {
        i += 1;
    }
    let duration = match cell.get(i) {
        Some(Symbol::Duration(d)) => *d,
        other => return Err((i, format!("expected a duration, found {other:?}"))),
    };
    i += 1;
    let sound = cell.get(i).copied();
    i += 1;
    let closes = cell.get(i) == Some(&Symbol::TieClose);
    if closes {
        i += 1;
    }
    let fermata = cell.get(i) == Some(&Symbol::Fermata);
    if fermata {
        i += 1;
    }
    if i < cell.len() {
        return Err((i, format!("unexpected {:?} in cell", cell[i])));
    }
    match sound {
        Some(Symbol::Pitch(pitch)) => Ok(ScoreEvent::Note {
            duration,
            pitch,
            tie: Tie::from_flags(closes, opens),
            fermata,
        }),
        Some(Symbol::Rest) if !opens && !closes => Ok(ScoreEvent::Rest { duration, fermata }),
        Some(Symbol::Rest) => Err((0, "tied rest".into())),
        other => Err((
            if opens { 2 } else { 1 },
            format!("expected a pitch or rest, found {other:?}"),
        )),
    }
}

/// Splits a sequence into words: maximal runs of non-separator items.
pub fn split_words<T>(items: &[T], is_separator: impl Fn(&T) -> bool) -> Vec<Range<usize>> {
    let mut words = Vec::new();
    let mut start = None;
    for (i, item) in items.iter().enumerate() {
        match (is_separator(item), start) {
            (true, Some(s)) => {
                words.push(s..i);
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        words.push(s..items.len());
    }
    words
}

/// Word spans of a token sequence; tab and newline only separate.
pub fn segment_words(tokens: &TokenSequence, vocab: &Vocabulary) -> Vec<Range<usize>> {
    split_words(&tokens.0, |&t| vocab.symbol(t).is_some_and(|s| s.is_separator()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kern::{parse_kern, preprocess, Accidental, Step};

    fn doc(text: &str) -> KernDocument {
        preprocess(&parse_kern(text).unwrap()).unwrap()
    }

    fn c4() -> Symbol {
        Symbol::Pitch(Pitch::new(Step::C, Accidental::Natural, 4))
    }

    fn quarter() -> Symbol {
        Symbol::Duration(Duration::new(4, false).unwrap())
    }

    #[test]
    fn minimal_vocabulary() {
        let v = build_vocabulary(&[doc("**kern\n=1\n4c\n==\n*-\n")]).unwrap();
        assert_eq!(v.len(), 10);
        let expected = [
            Symbol::Tab,
            Symbol::Newline,
            Symbol::Dot,
            Symbol::Barline,
            Symbol::TieOpen,
            Symbol::TieClose,
            Symbol::Fermata,
            quarter(),
            c4(),
        ];
        assert_eq!(v.symbols(), &expected);
        assert_eq!(v.symbol(BLANK), None);
        assert_eq!(build_vocabulary(&[]), Err(CodecError::EmptyCorpus));
    }

    #[test]
    fn four_voice_row() {
        let d = doc("**kern\t**kern\t**kern\t**kern\n4c\t4c\t4c\t4c\n*-\t*-\t*-\t*-\n");
        let v = build_vocabulary(std::slice::from_ref(&d)).unwrap();
        let got = v.symbols_of(&encode(&d, &v).unwrap());
        let q = quarter();
        let c = c4();
        use Symbol::{Newline as N, Tab as T};
        assert_eq!(got, vec![q, c, T, q, c, T, q, c, T, q, c, N]);
        assert_eq!(segment_words(&encode(&d, &v).unwrap(), &v).len(), 4);
    }

    #[test]
    fn barline_row_is_one_symbol() {
        let d = doc("**kern\t**kern\t**kern\t**kern\n4c\t4c\t4c\t4c\n=\t=\t=\t=\n*-\t*-\t*-\t*-\n");
        let syms = encode_symbols(&d).unwrap();
        assert_eq!(&syms[syms.len() - 2..], &[Symbol::Barline, Symbol::Newline]);
        assert_eq!(split_words(&syms[syms.len() - 2..], Symbol::is_separator).len(), 1);
    }

    #[test]
    fn tie_order_and_round_trip() {
        let d = doc("**kern\n[8c;\n8c]\n[4d\n4d_\n4d]\n*-\n");
        let syms = encode_symbols(&d).unwrap();
        let eight = Symbol::Duration(Duration::new(8, false).unwrap());
        assert_eq!(&syms[..5], &[Symbol::TieOpen, eight, c4(), Symbol::Fermata, Symbol::Newline]);
        assert_eq!(&syms[5..9], &[eight, c4(), Symbol::TieClose, Symbol::Newline]);
        assert_eq!(decode_symbols(&syms).unwrap().score(), d.score());
    }

    #[test]
    fn empty_cells_and_truncation() {
        use Symbol::{Newline as N, Tab as T};
        let err = decode_symbols(&[T, T, N]).unwrap_err();
        assert_eq!(err.position, 0);

        let d = doc("**kern\t**kern\n4c\t4c\n=\t=\n2c\t4e\n.\t4f\n*-\t*-\n");
        let syms = encode_symbols(&d).unwrap();
        let err = decode_symbols(&syms[..syms.len() - 1]).unwrap_err();
        let partial = err.partial.score().unwrap();
        assert_eq!(partial, d.score().unwrap()[..3].to_vec());
        assert_eq!(err.position, 14);
    }

    #[test]
    fn width_mismatch() {
        use Symbol::{Newline as N, Tab as T};
        let (q, c) = (quarter(), c4());
        let err = decode_symbols(&[q, c, T, q, c, N, q, c, N]).unwrap_err();
        assert_eq!(err.position, 6);
        assert!(decode_symbols(&[q, N]).is_err());
        assert!(decode_symbols(&[q, c, c, N]).is_err());
        assert!(decode_symbols(&[Symbol::Barline, T, q, c, N]).is_err());
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let d = doc("**kern\t**kern\n4.c\t8r\n.\t8BB-\n*-\t*-\n");
        let v = build_vocabulary(&[d]).unwrap();
        let text = v.to_file_string();
        assert!(text.starts_with("<eps>\n\\t\n\\n\n.\n=\n"));
        assert_eq!(Vocabulary::from_file_string(&text).unwrap(), v);
        assert_eq!(v.hash().len(), 64);
    }

    #[test]
    fn segment_edge_cases() {
        let v = Vocabulary::from_symbols([]);
        assert!(segment_words(&TokenSequence::default(), &v).is_empty());
        let bar = TokenSequence(vec![v.index_of(&Symbol::Barline).unwrap(), v.index_of(&Symbol::Newline).unwrap()]);
        assert_eq!(segment_words(&bar, &v), vec![0..1]);
    }
}
