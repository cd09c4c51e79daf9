//! Lowess smoothing of ratio-vs-N curves and its inversion into an O-D
//! error estimator.
//!
//! Plain locally weighted linear regression with tricube weights and no
//! robustness iterations: the inputs are Monte Carlo means, not
//! outlier-prone raw data. The evaluation grid is the input N values;
//! queries between grid points interpolate linearly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::Side;

#[derive(Debug, Error)]
pub enum RegressError {
    #[error("need at least 3 points to fit, got {0}")]
    TooFewPoints(usize),
    #[error("all points share N = {0}; degenerate design")]
    DegenerateDesign(f64),
    #[error("frac {frac} over {count} points leaves {neighbors} neighbors; need at least 2")]
    WindowTooSmall { frac: f64, count: usize, neighbors: usize },
    #[error("frac must be in (0, 1], got {0}")]
    BadFrac(f64),
    #[error("N = {query} outside fitted range [{min}, {max}]; extrapolation refused")]
    ExtrapolationRefused { query: f64, min: f64, max: f64 },
    #[error("count error must be nonnegative, got {0}")]
    NegativeCountError(f64),
    #[error("fitted ratio {0} at N = {1} is not positive")]
    NonPositiveRatio(f64, f64),
}

/// Fitted smoother mapping N to an error ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowessModel {
    /// (N, fitted ratio) pairs, sorted by N.
    pub knots: Vec<(f64, f64)>,
    pub frac: f64,
    pub side: Side,
}

pub const DEFAULT_FRAC: f64 = 0.2;

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u * u;
        t * t * t
    }
}

/// Weighted linear fit over `pts` with weights `w`, evaluated at `x0`.
/// Falls back to the weighted mean when the design is (locally) constant.
fn weighted_linear_eval(pts: &[(f64, f64)], w: &[f64], x0: f64) -> f64 {
    let sw: f64 = w.iter().sum();
    let mx: f64 = pts.iter().zip(w).map(|(p, w)| w * p.0).sum::<f64>() / sw;
    let my: f64 = pts.iter().zip(w).map(|(p, w)| w * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().zip(w).map(|(p, w)| w * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().zip(w).map(|(p, w)| w * (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 1e-12 * mx.abs().max(1.0) {
        my
    } else {
        my + sxy / sxx * (x0 - mx)
    }
}

/// Fit a Lowess smoother over `(N, ratio)` points. For each input N, a
/// weighted linear fit over the nearest `ceil(frac * count)` points with
/// tricube weights gives the fitted value.
pub fn fit_lowess(points: &[(f64, f64)], frac: f64, side: Side) -> Result<LowessModel, RegressError> {
    if points.len() < 3 {
        return Err(RegressError::TooFewPoints(points.len()));
    }
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(RegressError::BadFrac(frac));
    }
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.first().unwrap().0 == pts.last().unwrap().0 {
        return Err(RegressError::DegenerateDesign(pts[0].0));
    }
    let count = pts.len();
    let q = (frac * count as f64).ceil() as usize;
    if q < 2 {
        return Err(RegressError::WindowTooSmall { frac, count, neighbors: q });
    }
    let q = q.min(count);

    let mut knots = Vec::with_capacity(count);
    for k in 0..count {
        let x0 = pts[k].0;
        // Contiguous window of q points nearest to x0.
        let mut lo = k.saturating_sub(q - 1).min(count - q);
        while lo + q < count && (pts[lo + q].0 - x0) < (x0 - pts[lo].0) {
            lo += 1;
        }
        let window = &pts[lo..lo + q];
        let h = window
            .iter()
            .map(|p| (p.0 - x0).abs())
            .fold(0.0_f64, f64::max);
        let w: Vec<f64> = if h == 0.0 {
            vec![1.0; q]
        } else {
            window.iter().map(|p| tricube((p.0 - x0).abs() / h)).collect()
        };
        knots.push((x0, weighted_linear_eval(window, &w, x0)));
    }
    Ok(LowessModel { knots, frac, side })
}

/// Lowess value at `n_stops`: the fitted value at a knot, linear
/// interpolation between adjacent knots, refusal outside the knot range.
pub fn predict_ratio(model: &LowessModel, n_stops: f64) -> Result<f64, RegressError> {
    let min = model.knots.first().map(|k| k.0).unwrap_or(f64::NAN);
    let max = model.knots.last().map(|k| k.0).unwrap_or(f64::NAN);
    if !(n_stops >= min && n_stops <= max) {
        return Err(RegressError::ExtrapolationRefused { query: n_stops, min, max });
    }
    let idx = model.knots.partition_point(|k| k.0 < n_stops);
    if idx < model.knots.len() && model.knots[idx].0 == n_stops {
        return Ok(model.knots[idx].1);
    }
    let (x0, y0) = model.knots[idx - 1];
    let (x1, y1) = model.knots[idx];
    let t = (n_stops - x0) / (x1 - x0);
    Ok(y0 + t * (y1 - y0))
}

/// Estimated O-D error from a count-based marginal error: divides the
/// count error by the fitted ratio at `n_stops`.
pub fn infer_od_error(
    model: &LowessModel,
    n_stops: f64,
    count_error: f64,
) -> Result<f64, RegressError> {
    if count_error < 0.0 {
        return Err(RegressError::NegativeCountError(count_error));
    }
    let ratio = predict_ratio(model, n_stops)?;
    if ratio <= 0.0 {
        return Err(RegressError::NonPositiveRatio(ratio, n_stops));
    }
    Ok(count_error / ratio)
}
