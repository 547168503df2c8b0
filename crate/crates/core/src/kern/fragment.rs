use std::collections::HashMap;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{KernDocument, KernError, ScoreEvent, Tie};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FragmentOptions {
    pub min_measures: usize,
    pub max_measures: usize,
    /// Consecutive fragments may share measures (training augmentation).
    pub allow_overlap: bool,
}

impl Default for FragmentOptions {
    fn default() -> Self {
        FragmentOptions {
            min_measures: 3,
            max_measures: 6,
            allow_overlap: false,
        }
    }
}

/// Splits score rows into measures. Each measure owns its data rows and the
/// barline that closes it; barlines that close nothing are attached to the
/// following measure.
pub fn measures(score: &[Vec<ScoreEvent>]) -> Vec<Range<usize>> {
    let is_bar = |r: &Vec<ScoreEvent>| r.iter().all(|e| *e == ScoreEvent::Barline);
    let mut out = Vec::new();
    let mut start = 0;
    let mut has_data = false;
    for (i, row) in score.iter().enumerate() {
        if is_bar(row) {
            if has_data {
                out.push(start..i + 1);
                start = i + 1;
                has_data = false;
            }
        } else {
            has_data = true;
        }
    }
    if has_data {
        out.push(start..score.len());
    } else if start < score.len() {
        // trailing barlines with nothing after them
        match out.last_mut() {
            Some(last) => last.end = score.len(),
            None => out.push(start..score.len()),
        }
    }
    out
}

/// Whether `n` is a sum of sizes in `lo..=hi`: some count `k` of
/// fragments has `k * lo <= n <= k * hi`.
fn tileable(n: usize, lo: usize, hi: usize) -> bool {
    n == 0 || n.div_ceil(hi) <= n / lo
}

/// Measure ranges of the fragments for a document with `count` measures.
///
/// Without overlap the ranges partition `0..count` in order; a size is only
/// drawn if what remains can still be tiled by fragments of legal size, so
/// a short fragment appears only when `count` itself cannot be tiled.
pub fn fragment_ranges(count: usize, rng_seed: u64, opts: FragmentOptions) -> Vec<Range<usize>> {
    let FragmentOptions {
        min_measures: lo,
        max_measures: hi,
        allow_overlap,
    } = opts;
    assert!(lo >= 1 && lo <= hi, "invalid fragment bounds {lo}..={hi}");
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::new();
    if count <= lo {
        out.push(0..count);
        return out;
    }
    let mut start = 0;
    while start < count {
        let left = count - start;
        if allow_overlap {
            // every start leaves at least `lo` measures, so the last
            // fragment is never short
            let size = rng.gen_range(lo..=hi);
            if size >= left {
                out.push(start..count);
                break;
            }
            out.push(start..start + size);
            start = (start + rng.gen_range(1..=size)).min(count - lo);
            continue;
        }
        let legal: Vec<usize> = (lo..=hi.min(left))
            .filter(|&s| tileable(left - s, lo, hi))
            .collect();
        let size = if legal.is_empty() {
            // bounds too tight to tile the rest; fall back to a short tail
            left.min(hi)
        } else {
            legal[rng.gen_range(0..legal.len())]
        };
        out.push(start..start + size);
        start += size;
    }
    out
}

/// Cuts a preprocessed document into fragments of whole measures. Ties that
/// cross a fragment boundary are cut, leaving plain notes.
pub fn fragment(
    doc: &KernDocument,
    rng_seed: u64,
    opts: FragmentOptions,
) -> Result<Vec<KernDocument>, KernError> {
    let score = doc.score()?;
    if !score
        .iter()
        .any(|r| r.iter().all(|e| *e == ScoreEvent::Barline))
    {
        return Err(KernError::NoBarlines);
    }
    let bars = measures(&score);
    Ok(fragment_ranges(bars.len(), rng_seed, opts)
        .into_iter()
        .map(|range| {
            let rows = bars[range.start].start..bars[range.end - 1].end;
            let mut piece = score[rows].to_vec();
            sever_ties(&mut piece);
            KernDocument::from_score(doc.spines.clone(), &piece, doc.metadata.clone())
        })
        .collect())
}

/// Drops tie ends whose partner lies outside `score`.
pub fn sever_ties(score: &mut [Vec<ScoreEvent>]) {
    let width = score.first().map_or(0, |r| r.len());
    for spine in 0..width {
        // MIDI number -> row of the most recent unclosed open
        let mut open: HashMap<i32, usize> = HashMap::new();
        for r in 0..score.len() {
            if let ScoreEvent::Note { pitch, tie, .. } = &mut score[r][spine] {
                let key = pitch.midi();
                let closes = tie.closes() && open.remove(&key).is_some();
                *tie = Tie::from_flags(closes, tie.opens());
                if tie.opens() {
                    open.insert(key, r);
                }
            }
        }
        for (_, r) in open {
            if let ScoreEvent::Note { tie, .. } = &mut score[r][spine] {
                *tie = Tie::from_flags(tie.closes(), false);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kern::{parse_kern, preprocess};

    fn measures_doc(n: usize) -> KernDocument {
        let mut text = String::from("**kern\n");
        for i in 0..n {
            text.push_str(&format!("=\n4c\n4d\n"));
            if i + 1 == n {
                text.push_str("==\n");
            }
        }
        text.push_str("*-\n");
        preprocess(&parse_kern(&text).unwrap()).unwrap()
    }

    #[test]
    fn partitions_twelve_measures() {
        let doc = measures_doc(12);
        for seed in 0..200 {
            let ranges = fragment_ranges(12, seed, FragmentOptions::default());
            let mut next = 0;
            for r in &ranges {
                assert_eq!(r.start, next);
                assert!((3..=6).contains(&r.len()), "seed {seed}: {ranges:?}");
                next = r.end;
            }
            assert_eq!(next, 12);
        }
        let frags = fragment(&doc, 5, FragmentOptions::default()).unwrap();
        let total: usize = frags.iter().map(|f| measures(&f.score().unwrap()).len()).sum();
        assert_eq!(total, 12);
    }

    #[test]
    fn short_document_is_one_fragment() {
        let frags = fragment(&measures_doc(2), 0, FragmentOptions::default()).unwrap();
        assert_eq!(frags.len(), 1);
        assert_eq!(measures(&frags[0].score().unwrap()).len(), 2);
    }

    #[test]
    fn deterministic() {
        let doc = measures_doc(20);
        let opts = FragmentOptions {
            allow_overlap: true,
            ..Default::default()
        };
        assert_eq!(fragment(&doc, 9, opts).unwrap(), fragment(&doc, 9, opts).unwrap());
    }

    #[test]
    fn overlapping_fragments_cover_everything() {
        let opts = FragmentOptions {
            allow_overlap: true,
            ..Default::default()
        };
        for seed in 0..100 {
            let ranges = fragment_ranges(17, seed, opts);
            let mut covered = vec![false; 17];
            for r in &ranges {
                assert!((3..=6).contains(&r.len()));
                covered[r.clone()].iter_mut().for_each(|c| *c = true);
            }
            assert!(covered.iter().all(|&c| c));
            assert!(ranges.windows(2).all(|w| w[0].start < w[1].start));
        }
    }

    #[test]
    fn no_barlines() {
        let doc = preprocess(&parse_kern("**kern\n4c\n*-\n").unwrap()).unwrap();
        assert_eq!(fragment(&doc, 0, FragmentOptions::default()), Err(KernError::NoBarlines));
    }

    #[test]
    fn ties_are_severed_at_boundaries() {
        let text = "**kern\n=1\n2c\n[2d\n=2\n4d]\n[4e\n2e]\n=3\n4f\n*-\n";
        let doc = preprocess(&parse_kern(text).unwrap()).unwrap();
        let opts = FragmentOptions {
            min_measures: 1,
            max_measures: 1,
            allow_overlap: false,
        };
        let frags = fragment(&doc, 0, opts).unwrap();
        assert_eq!(frags.len(), 3);
        let serial: Vec<String> = frags.iter().map(|f| f.serialize()).collect();
        assert!(serial[0].contains("\n2d\n"), "{}", serial[0]);
        assert!(serial[1].contains("\n4d\n") && serial[1].contains("[4e"), "{}", serial[1]);
        for f in &frags {
            // every fragment stands alone as a valid score
            parse_kern(&f.serialize()).unwrap();
        }
    }
}
