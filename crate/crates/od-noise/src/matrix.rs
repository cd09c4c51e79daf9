//! O-D share matrices, error matrices, and the RMS error metrics.
//!
//! An O-D share matrix holds, in cell `(i, o)`, the share of travelers
//! boarding at stop `i` and alighting at stop `o`, so that all cells sum
//! to 1. The error matrix between an estimate and a reference is their
//! entrywise difference; from it we compute the RMS error per O-D cell,
//! the RMS errors on the boarding and alighting marginals, and the ratios
//! of the latter to the former.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the sum of shares (must equal 1) and the sum of deltas
/// (must equal 0).
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("matrix needs at least 2 stops, got {0}")]
    TooFewStops(usize),
    #[error("expected {expected} entries for {n} stops, got {got}")]
    BadShape { n: usize, expected: usize, got: usize },
    #[error("entry ({row}, {col}) = {value} outside [{lo}, {hi}]")]
    EntryOutOfRange { row: usize, col: usize, value: f64, lo: f64, hi: f64 },
    #[error("entries sum to {sum}, expected {expected} within {tol}")]
    BadSum { sum: f64, expected: f64, tol: f64 },
    #[error("dimension mismatch: reference has {reference} stops, estimate has {estimate}")]
    DimensionMismatch { reference: usize, estimate: usize },
    #[error("{0} labels given for {1} stops")]
    BadLabelCount(usize, usize),
    #[error("internal consistency failure: zero O-D error with nonzero marginal error")]
    InconsistentErrors,
}

/// N×N matrix of nonnegative trip shares summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ODShareMatrix {
    n_stops: usize,
    shares: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl ODShareMatrix {
    pub fn new(n_stops: usize, shares: Vec<f64>) -> Result<Self, MatrixError> {
        Self::with_labels(n_stops, shares, None)
    }

    pub fn with_labels(
        n_stops: usize,
        shares: Vec<f64>,
        labels: Option<Vec<String>>,
    ) -> Result<Self, MatrixError> {
        if n_stops < 2 {
            return Err(MatrixError::TooFewStops(n_stops));
        }
        let expected = n_stops * n_stops;
        if shares.len() != expected {
            return Err(MatrixError::BadShape { n: n_stops, expected, got: shares.len() });
        }
        for (k, &v) in shares.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) || v.is_nan() {
                return Err(MatrixError::EntryOutOfRange {
                    row: k / n_stops,
                    col: k % n_stops,
                    value: v,
                    lo: 0.0,
                    hi: 1.0,
                });
            }
        }
        let sum: f64 = shares.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(MatrixError::BadSum { sum, expected: 1.0, tol: SUM_TOLERANCE });
        }
        if let Some(ref l) = labels {
            if l.len() != n_stops {
                return Err(MatrixError::BadLabelCount(l.len(), n_stops));
            }
        }
        Ok(Self { n_stops, shares, labels })
    }

    /// Build a perturbed estimate. Same shape and unit-sum checks as
    /// [`ODShareMatrix::new`], but entries may be negative (down to -1):
    /// unclamped noise can push small shares below zero.
    pub fn new_perturbed(n_stops: usize, shares: Vec<f64>) -> Result<Self, MatrixError> {
        if n_stops < 2 {
            return Err(MatrixError::TooFewStops(n_stops));
        }
        let expected = n_stops * n_stops;
        if shares.len() != expected {
            return Err(MatrixError::BadShape { n: n_stops, expected, got: shares.len() });
        }
        for (k, &v) in shares.iter().enumerate() {
            if !(-1.0..=1.0).contains(&v) || v.is_nan() {
                return Err(MatrixError::EntryOutOfRange {
                    row: k / n_stops,
                    col: k % n_stops,
                    value: v,
                    lo: -1.0,
                    hi: 1.0,
                });
            }
        }
        let sum: f64 = shares.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(MatrixError::BadSum { sum, expected: 1.0, tol: SUM_TOLERANCE });
        }
        Ok(Self { n_stops, shares, labels: None })
    }

    pub fn n_stops(&self) -> usize {
        self.n_stops
    }

    pub fn shares(&self) -> &[f64] {
        &self.shares
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Share boarding at `i` and alighting at `o` (0-based).
    pub fn get(&self, i: usize, o: usize) -> f64 {
        self.shares[i * self.n_stops + o]
    }

    /// Boarding marginal: row sums T_i•.
    pub fn boarding_marginal(&self) -> Vec<f64> {
        let n = self.n_stops;
        (0..n).map(|i| self.shares[i * n..(i + 1) * n].iter().sum()).collect()
    }

    /// Alighting marginal: column sums T_•o.
    pub fn alighting_marginal(&self) -> Vec<f64> {
        let n = self.n_stops;
        let mut out = vec![0.0; n];
        for i in 0..n {
            for o in 0..n {
                out[o] += self.shares[i * n + o];
            }
        }
        out
    }

    /// True when some cell below the diagonal carries mass, i.e. the
    /// matrix is not upper-triangular. Validation aid only; nothing in
    /// the crate enforces a travel direction.
    pub fn has_mass_below_diagonal(&self) -> bool {
        let n = self.n_stops;
        (0..n).any(|i| (0..i).any(|o| self.shares[i * n + o] > 0.0))
    }
}

/// N×N matrix of signed share differences (estimate − reference).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaMatrix {
    n_stops: usize,
    deltas: Vec<f64>,
}

impl DeltaMatrix {
    pub fn new(n_stops: usize, deltas: Vec<f64>) -> Result<Self, MatrixError> {
        if n_stops < 2 {
            return Err(MatrixError::TooFewStops(n_stops));
        }
        let expected = n_stops * n_stops;
        if deltas.len() != expected {
            return Err(MatrixError::BadShape { n: n_stops, expected, got: deltas.len() });
        }
        for (k, &v) in deltas.iter().enumerate() {
            if !(-1.0..=1.0).contains(&v) || v.is_nan() {
                return Err(MatrixError::EntryOutOfRange {
                    row: k / n_stops,
                    col: k % n_stops,
                    value: v,
                    lo: -1.0,
                    hi: 1.0,
                });
            }
        }
        let sum: f64 = deltas.iter().sum();
        if sum.abs() > SUM_TOLERANCE {
            return Err(MatrixError::BadSum { sum, expected: 0.0, tol: SUM_TOLERANCE });
        }
        Ok(Self { n_stops, deltas })
    }

    pub fn n_stops(&self) -> usize {
        self.n_stops
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn get(&self, i: usize, o: usize) -> f64 {
        self.deltas[i * self.n_stops + o]
    }

    /// Row sums δT_i•.
    pub fn row_sums(&self) -> Vec<f64> {
        let n = self.n_stops;
        (0..n).map(|i| self.deltas[i * n..(i + 1) * n].iter().sum()).collect()
    }

    /// Column sums δT_•o.
    pub fn col_sums(&self) -> Vec<f64> {
        let n = self.n_stops;
        let mut out = vec![0.0; n];
        for i in 0..n {
            for o in 0..n {
                out[o] += self.deltas[i * n + o];
            }
        }
        out
    }
}

/// RMS errors and error ratios for one reference/estimate pair.
///
/// `ratio_in` and `ratio_out` are `None` when the O-D error is zero; a
/// zero-error ratio is undefined, never 0 or infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub err_od: f64,
    pub err_in: f64,
    pub err_out: f64,
    pub ratio_in: Option<f64>,
    pub ratio_out: Option<f64>,
}

/// Entrywise difference `estimate − reference`.
pub fn delta(reference: &ODShareMatrix, estimate: &ODShareMatrix) -> Result<DeltaMatrix, MatrixError> {
    if reference.n_stops() != estimate.n_stops() {
        return Err(MatrixError::DimensionMismatch {
            reference: reference.n_stops(),
            estimate: estimate.n_stops(),
        });
    }
    let deltas: Vec<f64> = estimate
        .shares()
        .iter()
        .zip(reference.shares())
        .map(|(e, r)| e - r)
        .collect();
    DeltaMatrix::new(reference.n_stops(), deltas)
}

/// RMS error per O-D cell, per boarding stop, per alighting stop, and the
/// marginal-to-OD ratios.
///
/// The O-D error normalizes by N² (all cells, including structurally
/// impossible pairs); the marginal errors normalize by N.
pub fn error_summary(d: &DeltaMatrix) -> Result<ErrorSummary, MatrixError> {
    let n = d.n_stops() as f64;
    let err_od = (d.deltas().iter().map(|x| x * x).sum::<f64>() / (n * n)).sqrt();
    let err_in = (d.row_sums().iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    let err_out = (d.col_sums().iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    if err_od == 0.0 {
        // Marginals are sums of cells: all-zero cells force zero marginals.
        if err_in > 1e-12 || err_out > 1e-12 {
            return Err(MatrixError::InconsistentErrors);
        }
        return Ok(ErrorSummary { err_od, err_in: 0.0, err_out: 0.0, ratio_in: None, ratio_out: None });
    }
    Ok(ErrorSummary {
        err_od,
        err_in,
        err_out,
        ratio_in: Some(err_in / err_od),
        ratio_out: Some(err_out / err_od),
    })
}
