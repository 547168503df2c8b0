use super::{
    timeline, Cell, KernDocument, KernError, KernToken, RowKind, ScoreEvent, Sound, Spine,
    MAX_VOICES,
};

/// Reduces a parsed document to at most four monophonic voices.
///
/// Non-`**kern` spines are dropped, a split spine keeps only its leftmost
/// column, chords keep their lowest sounding note, grace notes and ornaments
/// are removed, and rows left without any event disappear. Comments and
/// interpretations other than instrument labels are not carried over.
pub fn preprocess(doc: &KernDocument) -> Result<KernDocument, KernError> {
    let kept: Vec<usize> = (0..doc.spines.len())
        .filter(|&s| doc.spines[s].is_kern())
        .collect();
    if kept.is_empty() {
        return Err(KernError::NoKernSpines);
    }
    if kept.len() > MAX_VOICES {
        return Err(KernError::TooManyVoices { count: kept.len() });
    }

    let mut score = Vec::new();
    let mut lines = Vec::new();
    for row in &doc.rows {
        let column_of = |spine: usize| {
            row.columns
                .iter()
                .position(|&c| c == spine)
                .expect("every live spine has a column")
        };
        match &row.kind {
            RowKind::Barline(_) => {
                score.push(vec![ScoreEvent::Barline; kept.len()]);
                lines.push(row.line);
            }
            RowKind::Data(cells) => {
                let mut events = Vec::with_capacity(kept.len());
                for &spine in &kept {
                    let col = column_of(spine);
                    events.push(reduce_cell(&cells[col], row.line, col + 1)?);
                }
                if events.iter().any(|e| *e != ScoreEvent::Continuation) {
                    score.push(events);
                    lines.push(row.line);
                }
            }
            _ => {}
        }
    }

    timeline(&score).map_err(|e| match e {
        // timeline numbers score rows from 1; report the source line instead
        KernError::InconsistentDurations { line, spine, reason } => {
            KernError::InconsistentDurations {
                line: lines[line - 1],
                spine,
                reason,
            }
        }
        other => other,
    })?;

    let spines = kept
        .iter()
        .map(|&s| Spine::kern(doc.spines[s].label.clone()))
        .collect();
    Ok(KernDocument::from_score(spines, &score, doc.metadata.clone()))
}

fn reduce_cell(cell: &Cell, line: usize, spine: usize) -> Result<ScoreEvent, KernError> {
    let tokens = match cell {
        Cell::Null => return Ok(ScoreEvent::Continuation),
        Cell::Tokens(tokens) => tokens,
        Cell::Opaque(_) => unreachable!("kern spines never hold opaque cells"),
    };
    let unsupported = |token: &KernToken, reason: String| KernError::UnsupportedNotation {
        line,
        spine,
        token: token.to_string(),
        reason,
    };

    let mut chosen: Option<(&KernToken, ScoreEvent)> = None;
    for token in tokens.iter().filter(|t| !t.grace) {
        let mut clean = token.clone();
        clean.ornaments.clear();
        let event = clean.to_event().map_err(|r| unsupported(token, r))?;
        let better = match (&chosen, token.sound) {
            (None, _) => true,
            (Some((prev, _)), Sound::Pitch(p)) => match prev.sound {
                Sound::Pitch(q) => p.midi() < q.midi(),
                Sound::Rest => true,
            },
            (Some(_), Sound::Rest) => false,
        };
        if better {
            chosen = Some((token, event));
        }
    }
    Ok(chosen.map_or(ScoreEvent::Continuation, |(_, e)| e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kern::{parse_kern, Accidental, Pitch, Step};

    fn pre(text: &str) -> Result<KernDocument, KernError> {
        preprocess(&parse_kern(text)?)
    }

    #[test]
    fn chord_keeps_lowest_pitch() {
        let doc = pre("**kern\n4e 4c 4g\n*-\n").unwrap();
        match doc.score().unwrap()[0][0] {
            ScoreEvent::Note { pitch, .. } => {
                assert_eq!(pitch, Pitch::new(Step::C, Accidental::Natural, 4))
            }
            other => panic!("{other:?}"),
        }
        // ordering is by sounding pitch, not by letter or octave spelling
        let doc = pre("**kern\n4b# 4cc-\n*-\n").unwrap();
        match doc.score().unwrap()[0][0] {
            ScoreEvent::Note { pitch, .. } => assert_eq!(pitch.kern(), "cc-"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn idempotent_on_clean_input() {
        let once = pre("**kern\t**kern\n*I\"Cello\t*\n4C\t4c\n=\t=\n2D\t2d;\n*-\t*-\n").unwrap();
        let twice = preprocess(&once).unwrap();
        assert_eq!(once, twice);
        assert_eq!(parse_kern(&once.serialize()).unwrap(), once);
    }

    #[test]
    fn split_spine_keeps_first_column() {
        let text = "**kern\t**kern\n4C\t4c\n*\t*^\n4D\t8d\t8f\n.\t8e\t8g\n*\t*v\t*v\n4E\t4e\n*-\t*-\n";
        let doc = pre(text).unwrap();
        assert!(!doc.has_split_spines());
        let score = doc.score().unwrap();
        assert_eq!(score.len(), 4);
        assert_eq!(score[2][0], ScoreEvent::Continuation);
    }

    #[test]
    fn voice_limit() {
        let five = "**kern\t**kern\t**kern\t**kern\t**kern\n4c\t4c\t4c\t4c\t4c\n";
        assert_eq!(pre(five).unwrap_err(), KernError::TooManyVoices { count: 5 });
        let with_text = "**kern\t**kern\t**kern\t**kern\t**text\n4c\t4c\t4c\t4c\tla\n*-\t*-\t*-\t*-\t*-\n";
        assert_eq!(pre(with_text).unwrap().spines.len(), 4);
    }

    #[test]
    fn out_of_scope_notation() {
        for bad in ["4..c", "4c##", "4c--"] {
            let text = format!("**kern\n{bad}\n*-\n");
            assert!(
                matches!(pre(&text), Err(KernError::UnsupportedNotation { line: 2, .. })),
                "{bad}"
            );
        }
    }

    #[test]
    fn grace_notes_and_ornaments_removed() {
        let doc = pre("**kern\t**kern\n8cq\t.\n4dT\t4f\n*-\t*-\n").unwrap();
        let score = doc.score().unwrap();
        assert_eq!(score.len(), 1);
        assert!(!doc.serialize().contains('T'));
    }
}
