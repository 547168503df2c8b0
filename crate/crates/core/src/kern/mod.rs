//! Reading, cleaning and cutting `**kern` scores.
//!
//! A document is kept close to its source form after [`parse_kern`]: every
//! row, comment and spine manipulator survives, and chords or split spines
//! are allowed. [`preprocess`] reduces it to the subset the transcriber
//! handles (at most four monophonic voices, single dots and accidentals),
//! after which [`KernDocument::score`] exposes the rows as [`ScoreEvent`]s.

mod fragment;
mod preprocess;
mod tempo;
mod token;

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

pub use fragment::{fragment, fragment_ranges, measures, sever_ties, FragmentOptions};
pub use preprocess::preprocess;
pub use tempo::{assign_tempo, TempoMark, TEMPO_JITTER, TEMPO_TABLE};
pub use token::{KernToken, RawPitch, Sound};

/// Upper bound on simultaneous voices after preprocessing.
pub const MAX_VOICES: usize = 4;

/// Timing resolution: a whole note lasts this many ticks, so every canonical
/// duration down to a dotted 64th is a whole number of ticks.
pub const TICKS_PER_WHOLE: u32 = 128;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum KernError {
    #[error("line {line}: expected {expected} spines, found {found}")]
    MalformedSpine {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, spine {spine}: {reason}")]
    UnknownToken {
        line: usize,
        spine: usize,
        reason: String,
    },
    #[error("line {line}, spine {spine}: tie closed on `{token}` without an open tie")]
    InvalidTie {
        line: usize,
        spine: usize,
        token: String,
    },
    #[error("{count} voices, at most {MAX_VOICES} are supported")]
    TooManyVoices { count: usize },
    #[error("line {line}, spine {spine}: unsupported notation ({reason}) in `{token}`")]
    UnsupportedNotation {
        line: usize,
        spine: usize,
        token: String,
        reason: String,
    },
    #[error("line {line}, spine {spine}: {reason}")]
    InconsistentDurations {
        line: usize,
        spine: usize,
        reason: String,
    },
    #[error("document has no **kern spines")]
    NoKernSpines,
    #[error("document has no barlines to fragment on")]
    NoBarlines,
    #[error("unknown tempo label `{0}`")]
    UnknownTempoLabel(String),
    #[error("document still contains {0}; preprocess it first")]
    NotPreprocessed(&'static str),
}

impl KernError {
    /// Source line the error refers to, when it has one.
    pub fn line(&self) -> Option<usize> {
        match self {
            KernError::MalformedSpine { line, .. }
            | KernError::UnknownToken { line, .. }
            | KernError::InvalidTie { line, .. }
            | KernError::UnsupportedNotation { line, .. }
            | KernError::InconsistentDurations { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// A line/spine tagged diagnostic record for a corpus file.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub path: PathBuf,
    pub error: KernError,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.error)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Step {
    C,
    D,
    E,
    F,
    G,
    A,
    B,
}

impl Step {
    pub const ALL: [Step; 7] = [Step::C, Step::D, Step::E, Step::F, Step::G, Step::A, Step::B];

    pub fn semitone(self) -> i32 {
        match self {
            Step::C => 0,
            Step::D => 2,
            Step::E => 4,
            Step::F => 5,
            Step::G => 7,
            Step::A => 9,
            Step::B => 11,
        }
    }

    pub fn letter(self) -> char {
        b"cdefgab"[self as usize] as char
    }

    pub fn from_letter(c: char) -> Option<Step> {
        let i = "cdefgab".find(c.to_ascii_lowercase())?;
        Some(Step::ALL[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Accidental {
    Natural,
    Sharp,
    Flat,
}

impl Accidental {
    pub fn alter(self) -> i8 {
        match self {
            Accidental::Natural => 0,
            Accidental::Sharp => 1,
            Accidental::Flat => -1,
        }
    }
}

/// A spelled pitch: `E#4` and `F4` sound the same but are different notes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pitch {
    pub step: Step,
    pub accidental: Accidental,
    pub octave: u8,
}

impl Pitch {
    pub const MIN_OCTAVE: u8 = 2;
    pub const MAX_OCTAVE: u8 = 7;

    pub fn new(step: Step, accidental: Accidental, octave: u8) -> Self {
        Pitch {
            step,
            accidental,
            octave,
        }
    }

    /// MIDI key number, C4 = 60.
    pub fn midi(&self) -> i32 {
        12 * (self.octave as i32 + 1) + self.step.semitone() + self.accidental.alter() as i32
    }

    /// Equal-tempered frequency with A4 = 440 Hz.
    pub fn frequency(&self) -> f64 {
        440.0 * 2f64.powf((self.midi() - 69) as f64 / 12.0)
    }

    /// `**kern` spelling, e.g. `cc#` for C#5.
    pub fn kern(&self) -> String {
        let mut s = token::pitch_letters(self.step, self.octave as i32);
        match self.accidental {
            Accidental::Natural => {}
            Accidental::Sharp => s.push('#'),
            Accidental::Flat => s.push('-'),
        }
        s
    }
}

impl Ord for Pitch {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.midi(), self.step, self.accidental).cmp(&(other.midi(), other.step, other.accidental))
    }
}

impl PartialOrd for Pitch {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Canonical note value (reciprocal: 4 = quarter) with an optional single dot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Duration {
    denom: u8,
    dotted: bool,
}

impl Duration {
    pub const CANONICAL: [u8; 7] = [1, 2, 4, 8, 16, 32, 64];

    pub fn new(denom: u8, dotted: bool) -> Option<Self> {
        Self::is_canonical(denom as u32).then_some(Duration { denom, dotted })
    }

    pub fn is_canonical(denom: u32) -> bool {
        Self::CANONICAL.iter().any(|&d| d as u32 == denom)
    }

    pub fn denom(&self) -> u8 {
        self.denom
    }

    pub fn dotted(&self) -> bool {
        self.dotted
    }

    pub fn ticks(&self) -> u32 {
        let base = TICKS_PER_WHOLE / self.denom as u32;
        if self.dotted {
            base + base / 2
        } else {
            base
        }
    }

    /// Length in quarter notes.
    pub fn quarters(&self) -> f64 {
        ticks_to_quarters(self.ticks())
    }

    pub fn seconds(&self, quarter_bpm: f64) -> f64 {
        self.quarters() * 60.0 / quarter_bpm
    }

    pub fn kern(&self) -> String {
        if self.dotted {
            format!("{}.", self.denom)
        } else {
            self.denom.to_string()
        }
    }
}

pub fn ticks_to_quarters(ticks: u32) -> f64 {
    ticks as f64 * 4.0 / TICKS_PER_WHOLE as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Tie {
    #[default]
    None,
    /// `[`: starts a tie into the next note.
    Open,
    /// `]`: ends a tie from the previous note.
    Close,
    /// `_`: tied on both sides.
    Continue,
}

impl Tie {
    pub fn opens(self) -> bool {
        matches!(self, Tie::Open | Tie::Continue)
    }

    pub fn closes(self) -> bool {
        matches!(self, Tie::Close | Tie::Continue)
    }

    pub fn from_flags(closes: bool, opens: bool) -> Tie {
        match (closes, opens) {
            (false, false) => Tie::None,
            (false, true) => Tie::Open,
            (true, false) => Tie::Close,
            (true, true) => Tie::Continue,
        }
    }
}

/// One cell of a preprocessed score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreEvent {
    Note {
        duration: Duration,
        pitch: Pitch,
        tie: Tie,
        fermata: bool,
    },
    Rest {
        duration: Duration,
        fermata: bool,
    },
    Barline,
    /// Null token: the previous note or rest of this spine is still sounding.
    Continuation,
}

impl ScoreEvent {
    pub fn duration(&self) -> Option<Duration> {
        match self {
            ScoreEvent::Note { duration, .. } | ScoreEvent::Rest { duration, .. } => Some(*duration),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spine {
    /// Exclusive interpretation, e.g. `**kern`.
    pub exclusive: String,
    pub label: Option<String>,
}

impl Spine {
    pub fn kern(label: Option<String>) -> Self {
        Spine {
            exclusive: "**kern".into(),
            label,
        }
    }

    pub fn is_kern(&self) -> bool {
        self.exclusive == "**kern"
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cell {
    /// `.`
    Null,
    /// A note, rest, or chord of several.
    Tokens(Vec<KernToken>),
    /// Cell of a non-`**kern` spine, kept verbatim.
    Opaque(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Null => f.write_str("."),
            Cell::Opaque(s) => f.write_str(s),
            Cell::Tokens(tokens) => {
                for (i, t) in tokens.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{t}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowKind {
    GlobalComment(String),
    LocalComment(Vec<String>),
    Exclusive(Vec<String>),
    Interpretation(Vec<String>),
    Barline(Vec<String>),
    Data(Vec<Cell>),
}

#[derive(Debug, Clone, Eq)]
pub struct Row {
    /// 1-based source line, 0 for synthesized rows.
    pub line: usize,
    /// Base spine of every column in this row.
    pub columns: Vec<usize>,
    pub kind: RowKind,
}

impl PartialEq for Row {
    fn eq(&self, other: &Self) -> bool {
        self.columns == other.columns && self.kind == other.kind
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metadata {
    /// Textual tempo annotation (`!!!OMD`), if any.
    pub tempo: Option<String>,
    pub source: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernDocument {
    pub spines: Vec<Spine>,
    pub rows: Vec<Row>,
    pub metadata: Metadata,
}

pub fn parse_kern(text: &str) -> Result<KernDocument, KernError> {
    Parser::default().run(text)
}

pub fn parse_kern_file(path: &Path) -> Result<KernDocument, KernError> {
    let text = std::fs::read_to_string(path).map_err(|e| KernError::UnknownToken {
        line: 0,
        spine: 0,
        reason: format!("cannot read {}: {e}", path.display()),
    })?;
    let mut doc = parse_kern(&text)?;
    doc.metadata.source = Some(path.to_path_buf());
    Ok(doc)
}

#[derive(Default)]
struct Parser {
    spines: Vec<Spine>,
    rows: Vec<Row>,
    metadata: Metadata,
    /// Base spine of each active column; `None` before the header.
    columns: Option<Vec<usize>>,
    /// MIDI numbers with an open tie, per active column.
    open_ties: Vec<BTreeSet<i32>>,
    finished: bool,
}

impl Parser {
    fn run(mut self, text: &str) -> Result<KernDocument, KernError> {
        let text = text.replace("\r\n", "\n");
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            if line.starts_with("!!") {
                if let Some(rest) = line.strip_prefix("!!!OMD:") {
                    if self.metadata.tempo.is_none() {
                        self.metadata.tempo = Some(rest.trim().to_string());
                    }
                }
                self.push(line_no, Vec::new(), RowKind::GlobalComment(line.to_string()));
                continue;
            }
            self.row(line_no, line)?;
        }
        if self.columns.is_none() {
            return Err(KernError::NoKernSpines);
        }
        Ok(KernDocument {
            spines: self.spines,
            rows: self.rows,
            metadata: self.metadata,
        })
    }

    fn push(&mut self, line: usize, columns: Vec<usize>, kind: RowKind) {
        self.rows.push(Row {
            line,
            columns,
            kind,
        });
    }

    fn row(&mut self, line: usize, text: &str) -> Result<(), KernError> {
        let cells: Vec<&str> = text.split('\t').collect();
        let unknown = |spine: usize, reason: String| KernError::UnknownToken {
            line,
            spine,
            reason,
        };

        let Some(columns) = self.columns.clone() else {
            if cells.iter().all(|c| c.starts_with("**")) {
                self.spines = cells.iter().map(|c| Spine {
                    exclusive: c.to_string(),
                    label: None,
                }).collect();
                let columns: Vec<usize> = (0..cells.len()).collect();
                self.open_ties = vec![BTreeSet::new(); cells.len()];
                self.columns = Some(columns.clone());
                self.push(line, columns, RowKind::Exclusive(owned(&cells)));
                return Ok(());
            }
            return Err(unknown(1, format!("expected exclusive interpretations, found `{text}`")));
        };

        if self.finished {
            return Err(unknown(1, "content after all spines terminated".into()));
        }
        if cells.len() != columns.len() {
            return Err(KernError::MalformedSpine {
                line,
                expected: columns.len(),
                found: cells.len(),
            });
        }

        if cells.iter().all(|c| c.starts_with('!')) {
            self.push(line, columns, RowKind::LocalComment(owned(&cells)));
        } else if cells[0].starts_with('*') {
            if let Some(i) = cells.iter().position(|c| !c.starts_with('*')) {
                return Err(unknown(i + 1, format!("`{}` in an interpretation row", cells[i])));
            }
            self.push(line, columns.clone(), RowKind::Interpretation(owned(&cells)));
            self.interpretations(line, &cells, &columns)?;
        } else if cells[0].starts_with('=') {
            if let Some(i) = cells.iter().position(|c| !c.starts_with('=')) {
                return Err(unknown(i + 1, format!("`{}` in a barline row", cells[i])));
            }
            self.push(line, columns, RowKind::Barline(owned(&cells)));
        } else {
            let mut parsed = Vec::with_capacity(cells.len());
            for (i, cell) in cells.iter().enumerate() {
                parsed.push(self.cell(line, i, columns[i], cell)?);
            }
            self.push(line, columns, RowKind::Data(parsed));
        }
        Ok(())
    }

    fn cell(&mut self, line: usize, col: usize, spine: usize, text: &str) -> Result<Cell, KernError> {
        if text == "." {
            return Ok(Cell::Null);
        }
        if !self.spines[spine].is_kern() {
            return Ok(Cell::Opaque(text.to_string()));
        }
        if text.starts_with('!') || text.starts_with('*') || text.starts_with('=') || text.is_empty() {
            return Err(KernError::UnknownToken {
                line,
                spine: col + 1,
                reason: format!("`{text}` mixed into a data row"),
            });
        }
        let mut tokens = Vec::new();
        for sub in text.split(' ').filter(|s| !s.is_empty()) {
            let token = KernToken::parse(sub).map_err(|e| KernError::UnknownToken {
                line,
                spine: col + 1,
                reason: e.0,
            })?;
            if let Sound::Pitch(p) = token.sound {
                let open = &mut self.open_ties[col];
                if token.tie.closes() && !open.remove(&p.midi()) {
                    return Err(KernError::InvalidTie {
                        line,
                        spine: col + 1,
                        token: sub.to_string(),
                    });
                }
                if token.tie.opens() {
                    open.insert(p.midi());
                }
            }
            tokens.push(token);
        }
        Ok(Cell::Tokens(tokens))
    }

    /// Applies spine manipulators (`*^`, `*v`, `*-`) and instrument labels.
    fn interpretations(&mut self, line: usize, cells: &[&str], columns: &[usize]) -> Result<(), KernError> {
        let mut next_columns = Vec::new();
        let mut next_ties = Vec::new();
        let mut i = 0;
        while i < cells.len() {
            let cell = cells[i];
            let spine = columns[i];
            match cell {
                "*^" => {
                    next_columns.extend([spine, spine]);
                    next_ties.extend([self.open_ties[i].clone(), self.open_ties[i].clone()]);
                }
                "*v" => {
                    let mut j = i;
                    let mut merged = BTreeSet::new();
                    while j < cells.len() && cells[j] == "*v" && columns[j] == spine {
                        merged.extend(self.open_ties[j].iter().copied());
                        j += 1;
                    }
                    if j - i < 2 {
                        return Err(KernError::UnknownToken {
                            line,
                            spine: i + 1,
                            reason: "`*v` must join adjacent columns of the same spine".into(),
                        });
                    }
                    next_columns.push(spine);
                    next_ties.push(merged);
                    i = j;
                    continue;
                }
                "*-" => {}
                "*+" | "*x" => {
                    return Err(KernError::UnknownToken {
                        line,
                        spine: i + 1,
                        reason: format!("unsupported spine manipulator `{cell}`"),
                    })
                }
                _ => {
                    if let Some(label) = cell.strip_prefix("*I\"") {
                        self.spines[spine].label = Some(label.to_string());
                    } else if let Some(code) = cell.strip_prefix("*I") {
                        let label = &mut self.spines[spine].label;
                        if label.is_none() && !code.is_empty() && !code.starts_with('\'') {
                            *label = Some(code.to_string());
                        }
                    }
                    next_columns.push(spine);
                    next_ties.push(std::mem::take(&mut self.open_ties[i]));
                }
            }
            i += 1;
        }
        self.finished = next_columns.is_empty();
        self.columns = Some(next_columns);
        self.open_ties = next_ties;
        Ok(())
    }
}

fn owned(cells: &[&str]) -> Vec<String> {
    cells.iter().map(|c| c.to_string()).collect()
}

impl KernDocument {
    /// Builds the canonical form of a score: header, optional instrument
    /// labels, the given rows, and spine terminators.
    pub fn from_score(spines: Vec<Spine>, score: &[Vec<ScoreEvent>], metadata: Metadata) -> Self {
        let width = spines.len();
        let columns: Vec<usize> = (0..width).collect();
        let mut rows = vec![Row {
            line: 0,
            columns: columns.clone(),
            kind: RowKind::Exclusive(spines.iter().map(|s| s.exclusive.clone()).collect()),
        }];
        if spines.iter().any(|s| s.label.is_some()) {
            let labels = spines
                .iter()
                .map(|s| match &s.label {
                    Some(l) => format!("*I\"{l}"),
                    None => "*".to_string(),
                })
                .collect();
            rows.push(Row {
                line: 0,
                columns: columns.clone(),
                kind: RowKind::Interpretation(labels),
            });
        }
        for events in score {
            let kind = if events.iter().all(|e| *e == ScoreEvent::Barline) {
                RowKind::Barline(vec!["=".to_string(); width])
            } else {
                RowKind::Data(
                    events
                        .iter()
                        .map(|e| match KernToken::from_event(e) {
                            Some(t) => Cell::Tokens(vec![t]),
                            None => Cell::Null,
                        })
                        .collect(),
                )
            };
            rows.push(Row {
                line: 0,
                columns: columns.clone(),
                kind,
            });
        }
        rows.push(Row {
            line: 0,
            columns,
            kind: RowKind::Interpretation(vec!["*-".to_string(); width]),
        });
        KernDocument {
            spines,
            rows,
            metadata,
        }
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            match &row.kind {
                RowKind::GlobalComment(text) => out.push_str(text),
                RowKind::LocalComment(cells)
                | RowKind::Exclusive(cells)
                | RowKind::Interpretation(cells)
                | RowKind::Barline(cells) => out.push_str(&cells.join("\t")),
                RowKind::Data(cells) => {
                    let texts: Vec<String> = cells.iter().map(|c| c.to_string()).collect();
                    out.push_str(&texts.join("\t"));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Number of active columns after each row; exceeds the spine count
    /// wherever a spine is split.
    pub fn width_trace(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.columns.len()).collect()
    }

    pub fn has_split_spines(&self) -> bool {
        self.rows.iter().any(|r| {
            let mut seen = BTreeSet::new();
            r.columns.iter().any(|c| !seen.insert(*c))
        })
    }

    pub fn has_chords(&self) -> bool {
        self.rows.iter().any(|r| match &r.kind {
            RowKind::Data(cells) => cells
                .iter()
                .any(|c| matches!(c, Cell::Tokens(t) if t.len() > 1)),
            _ => false,
        })
    }

    /// Data and barline rows as events, one per spine. Fails on documents
    /// that still need preprocessing.
    pub fn score(&self) -> Result<Vec<Vec<ScoreEvent>>, KernError> {
        if self.has_split_spines() {
            return Err(KernError::NotPreprocessed("split spines"));
        }
        if self.spines.iter().any(|s| !s.is_kern()) {
            return Err(KernError::NotPreprocessed("non-kern spines"));
        }
        let mut score = Vec::new();
        for row in &self.rows {
            match &row.kind {
                RowKind::Barline(_) => score.push(vec![ScoreEvent::Barline; row.columns.len()]),
                RowKind::Data(cells) => {
                    let mut events = Vec::with_capacity(cells.len());
                    for (i, cell) in cells.iter().enumerate() {
                        events.push(match cell {
                            Cell::Null => ScoreEvent::Continuation,
                            Cell::Tokens(tokens) if tokens.len() == 1 => {
                                tokens[0].to_event().map_err(|reason| {
                                    KernError::UnsupportedNotation {
                                        line: row.line,
                                        spine: i + 1,
                                        token: tokens[0].to_string(),
                                        reason,
                                    }
                                })?
                            }
                            Cell::Tokens(_) => return Err(KernError::NotPreprocessed("chords")),
                            Cell::Opaque(_) => {
                                return Err(KernError::NotPreprocessed("non-kern spines"))
                            }
                        });
                    }
                    score.push(events);
                }
                _ => {}
            }
        }
        Ok(score)
    }

    pub fn voice_count(&self) -> usize {
        self.spines.len()
    }
}

/// Onset of every score row plus total length, in ticks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timeline {
    pub onsets: Vec<u32>,
    pub total: u32,
}

/// Computes row onsets from note durations, checking that every spine's
/// events tile time without gaps or overlaps.
pub fn timeline(score: &[Vec<ScoreEvent>]) -> Result<Timeline, KernError> {
    let width = score.first().map_or(0, |r| r.len());
    let mut remaining = vec![0u32; width];
    let mut now = 0u32;
    let mut onsets = Vec::with_capacity(score.len());
    for (r, row) in score.iter().enumerate() {
        onsets.push(now);
        if row.iter().all(|e| *e == ScoreEvent::Barline) {
            continue;
        }
        let bad = |spine: usize, reason: &str| KernError::InconsistentDurations {
            line: r + 1,
            spine: spine + 1,
            reason: reason.to_string(),
        };
        for (s, event) in row.iter().enumerate() {
            match event.duration() {
                Some(d) => {
                    if remaining[s] > 0 {
                        return Err(bad(s, "event starts before the previous one ends"));
                    }
                    remaining[s] = d.ticks();
                }
                None if remaining[s] == 0 => {
                    return Err(bad(s, "null token where nothing is sounding"));
                }
                None => {}
            }
        }
        let step = remaining.iter().copied().filter(|&t| t > 0).min().unwrap_or(0);
        for t in &mut remaining {
            *t = t.saturating_sub(step);
        }
        now += step;
    }
    let tail = remaining.iter().copied().max().unwrap_or(0);
    Ok(Timeline {
        onsets,
        total: now + tail,
    })
}
