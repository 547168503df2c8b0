//! Connectionist temporal classification: the alignment-free loss, its
//! gradient, greedy decoding and the collapse map.
//!
//! A frame labeling over the vocabulary (blank included) reads as a symbol
//! sequence after merging runs of equal labels and dropping blanks. The
//! loss is the negative log of the total probability of every labeling
//! that reads as the target, summed with a forward-backward recursion over
//! the target interleaved with blanks.

use ndarray::{Array2, Axis};

use crate::codec::{TokenSequence, BLANK};
use crate::net::PosteriorGrid;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum CtcError {
    #[error("{frames} frames cannot align a target needing at least {required}")]
    InfeasibleLength { frames: usize, required: usize },
    #[error("target contains the blank at position {0}")]
    BlankInTarget(usize),
    #[error("target symbol {symbol} is outside a {classes}-class grid")]
    SymbolOutOfRange { symbol: usize, classes: usize },
}

/// Forward and backward log-probabilities over the blank-augmented target.
///
/// `log_alpha[[t, s]]` covers frames `0..=t` ending in state `s` and
/// includes the emission at `t`; `log_beta[[t, s]]` covers frames after
/// `t` given state `s` at `t`. Their sum at any frame, log-summed over
/// states, is the total log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentLattice {
    pub log_alpha: Array2<f64>,
    pub log_beta: Array2<f64>,
    pub log_likelihood: f64,
    /// Target with blanks around and between symbols, length `2U + 1`.
    pub states: Vec<usize>,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Minimum number of frames for `target`: one per symbol plus a blank
/// between each pair of equal neighbours.
pub fn required_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

fn augment(target: &[usize]) -> Vec<usize> {
    let mut states = Vec::with_capacity(2 * target.len() + 1);
    states.push(BLANK);
    for &t in target {
        states.extend([t, BLANK]);
    }
    states
}

/// Whether state `s` may be entered directly from `s - 2`.
fn can_skip(states: &[usize], s: usize) -> bool {
    s >= 2 && states[s] != BLANK && states[s] != states[s - 2]
}

/// Negative log-likelihood of `target` under `grid`.
pub fn ctc_loss(
    grid: &PosteriorGrid,
    target: &TokenSequence,
) -> Result<(f64, AlignmentLattice), CtcError> {
    let target = target.as_slice();
    let classes = grid.classes();
    for (i, &t) in target.iter().enumerate() {
        if t == BLANK {
            return Err(CtcError::BlankInTarget(i));
        }
        if t >= classes {
            return Err(CtcError::SymbolOutOfRange { symbol: t, classes });
        }
    }
    let frames = grid.frames();
    let required = required_frames(target);
    if frames < required || frames == 0 {
        return Err(CtcError::InfeasibleLength {
            frames,
            required: required.max(1),
        });
    }

    let y = grid.log_probs();
    let states = augment(target);
    let n = states.len();
    let neg = f64::NEG_INFINITY;

    let mut alpha = Array2::from_elem((frames, n), neg);
    alpha[[0, 0]] = y[[0, states[0]]];
    if n > 1 {
        alpha[[0, 1]] = y[[0, states[1]]];
    }
    for t in 1..frames {
        for s in 0..n {
            let mut acc = alpha[[t - 1, s]];
            if s >= 1 {
                acc = log_add(acc, alpha[[t - 1, s - 1]]);
            }
            if can_skip(&states, s) {
                acc = log_add(acc, alpha[[t - 1, s - 2]]);
            }
            alpha[[t, s]] = if acc == neg { neg } else { acc + y[[t, states[s]]] };
        }
    }

    let mut beta = Array2::from_elem((frames, n), neg);
    beta[[frames - 1, n - 1]] = 0.0;
    if n > 1 {
        beta[[frames - 1, n - 2]] = 0.0;
    }
    for t in (0..frames - 1).rev() {
        for s in 0..n {
            let mut acc = beta[[t + 1, s]] + y[[t + 1, states[s]]];
            if s + 1 < n {
                acc = log_add(acc, beta[[t + 1, s + 1]] + y[[t + 1, states[s + 1]]]);
            }
            if s + 2 < n && can_skip(&states, s + 2) {
                acc = log_add(acc, beta[[t + 1, s + 2]] + y[[t + 1, states[s + 2]]]);
            }
            beta[[t, s]] = acc;
        }
    }

    let mut log_likelihood = alpha[[frames - 1, n - 1]];
    if n > 1 {
        log_likelihood = log_add(log_likelihood, alpha[[frames - 1, n - 2]]);
    }
    Ok((
        -log_likelihood,
        AlignmentLattice {
            log_alpha: alpha,
            log_beta: beta,
            log_likelihood,
            states,
        },
    ))
}

/// Gradient of the loss with respect to the pre-softmax scores: the
/// posterior minus the expected label occupancy at each frame.
pub fn ctc_grad(lattice: &AlignmentLattice, grid: &PosteriorGrid, _target: &TokenSequence) -> Array2<f64> {
    let mut grad = grid.probs();
    if lattice.log_likelihood == f64::NEG_INFINITY {
        return grad;
    }
    for t in 0..grid.frames() {
        for (s, &label) in lattice.states.iter().enumerate() {
            let occ = lattice.log_alpha[[t, s]] + lattice.log_beta[[t, s]] - lattice.log_likelihood;
            if occ > f64::NEG_INFINITY {
                grad[[t, label]] -= occ.exp();
            }
        }
    }
    grad
}

/// Most probable label per frame; ties go to the lowest index, so the
/// blank wins any tie it is part of.
pub fn greedy_decode(grid: &PosteriorGrid) -> Vec<usize> {
    grid.log_probs()
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Merges runs of equal labels, then removes blanks.
pub fn collapse(labels: &[usize]) -> TokenSequence {
    let mut out = Vec::new();
    let mut prev = None;
    for &l in labels {
        if prev != Some(l) && l != BLANK {
            out.push(l);
        }
        prev = Some(l);
    }
    TokenSequence(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn uniform(frames: usize, classes: usize) -> PosteriorGrid {
        PosteriorGrid::from_logits(&Array2::zeros((frames, classes)))
    }

    #[test]
    fn two_frame_example() {
        // paths aa, a-, -a each with probability 0.25
        let (loss, lattice) = ctc_loss(&uniform(2, 2), &TokenSequence(vec![1])).unwrap();
        assert!((loss - -(0.75f64.ln())).abs() < 1e-12);
        assert!((loss - 0.2876820724517809).abs() < 1e-12);
        assert_eq!(lattice.states, vec![0, 1, 0]);
    }

    #[test]
    fn certain_path_has_zero_loss() {
        let probs = array![[1.0 - 2e-15, 1e-15, 1e-15], [1e-15, 1.0 - 2e-15, 1e-15], [1.0 - 2e-15, 1e-15, 1e-15], [1e-15, 1.0 - 2e-15, 1e-15]];
        let grid = PosteriorGrid::from_probs(&probs).unwrap();
        let target = TokenSequence(vec![1, 1]);
        let (loss, lattice) = ctc_loss(&grid, &target).unwrap();
        assert!(loss.abs() < 1e-12);
        let grad = ctc_grad(&lattice, &grid, &target);
        assert!(grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn repeated_label_needs_separator() {
        assert_eq!(
            ctc_loss(&uniform(1, 2), &TokenSequence(vec![1, 1])).unwrap_err(),
            CtcError::InfeasibleLength { frames: 1, required: 3 }
        );
        assert_eq!(required_frames(&[1, 1, 2, 2, 2]), 8);
        assert!(ctc_loss(&uniform(3, 2), &TokenSequence(vec![1, 1])).is_ok());
    }

    #[test]
    fn empty_target_is_all_blank() {
        let (loss, _) = ctc_loss(&uniform(3, 2), &TokenSequence(vec![])).unwrap();
        assert!((loss - 3.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn invalid_targets() {
        assert_eq!(ctc_loss(&uniform(3, 3), &TokenSequence(vec![0])).unwrap_err(), CtcError::BlankInTarget(0));
        assert!(matches!(
            ctc_loss(&uniform(3, 3), &TokenSequence(vec![3])),
            Err(CtcError::SymbolOutOfRange { .. })
        ));
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let logits = array![[0.3, -1.0, 2.0], [1.0, 0.0, -0.5], [0.2, 0.1, 0.0], [-2.0, 1.0, 0.5]];
        let grid = PosteriorGrid::from_logits(&logits);
        let target = TokenSequence(vec![2, 1]);
        let (_, lattice) = ctc_loss(&grid, &target).unwrap();
        for row in ctc_grad(&lattice, &grid, &target).axis_iter(Axis(0)) {
            assert!(row.sum().abs() < 1e-9);
        }
    }

    #[test]
    fn greedy_and_collapse() {
        let mut logits = Array2::zeros((5, 3));
        for (t, &k) in [0usize, 2, 2, 0, 1].iter().enumerate() {
            logits[[t, k]] = 5.0;
        }
        assert_eq!(greedy_decode(&PosteriorGrid::from_logits(&logits)), vec![0, 2, 2, 0, 1]);
        assert_eq!(greedy_decode(&uniform(4, 3)), vec![0; 4]);
        assert_eq!(collapse(&[0, 1, 1, 0, 2, 2, 0]), TokenSequence(vec![1, 2]));
        assert_eq!(collapse(&[1, 0, 1]), TokenSequence(vec![1, 1]));
        assert_eq!(collapse(&[]), TokenSequence(vec![]));
    }
}
