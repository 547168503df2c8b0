use ndarray::{Array2, ArrayView1, Axis};

/// Per-frame posterior distributions over the vocabulary, `frames x classes`.
///
/// Stored as log-probabilities; the CTC lattice works in the log domain
/// and long sequences would underflow otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid {
    log_probs: Array2<f64>,
}

impl PosteriorGrid {
    /// Row-wise log-softmax of unnormalized scores.
    pub fn from_logits(logits: &Array2<f64>) -> Self {
        let mut log_probs = logits.clone();
        for mut row in log_probs.axis_iter_mut(Axis(0)) {
            let lse = log_sum_exp_row(row.view());
            row.mapv_inplace(|v| v - lse);
        }
        PosteriorGrid { log_probs }
    }

    /// Accepts a row-stochastic matrix with strictly positive entries.
    pub fn from_probs(probs: &Array2<f64>) -> Option<Self> {
        for row in probs.axis_iter(Axis(0)) {
            if row.iter().any(|&p| !(p > 0.0 && p <= 1.0)) || (row.sum() - 1.0).abs() > 1e-6 {
                return None;
            }
        }
        Some(PosteriorGrid {
            log_probs: probs.mapv(f64::ln),
        })
    }

    pub fn log_probs(&self) -> &Array2<f64> {
        &self.log_probs
    }

    pub fn probs(&self) -> Array2<f64> {
        self.log_probs.mapv(f64::exp)
    }

    pub fn frames(&self) -> usize {
        self.log_probs.nrows()
    }

    pub fn classes(&self) -> usize {
        self.log_probs.ncols()
    }
}

pub(crate) fn log_sum_exp_row(row: ArrayView1<f64>) -> f64 {
    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_rows_sum_to_one() {
        let g = PosteriorGrid::from_logits(&array![[1.0, 2.0, 3.0], [0.0, 0.0, 0.0], [800.0, -800.0, 0.0]]);
        for row in g.probs().axis_iter(Axis(0)) {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        assert!((g.probs()[[1, 2]] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        assert!(PosteriorGrid::from_probs(&array![[0.5, 0.4]]).is_none());
        assert!(PosteriorGrid::from_probs(&array![[1.0, 0.0]]).is_none());
        assert!(PosteriorGrid::from_probs(&array![[0.25, 0.75]]).is_some());
    }
}
