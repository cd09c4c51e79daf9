//! Monte Carlo sweeps of the error ratios over the number of stops N,
//! empirical-point computation for user data, and the stop-aggregation
//! study.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{delta, error_summary, DeltaMatrix, ErrorSummary, MatrixError, ODShareMatrix};
use crate::noise::{apply, mix_seed, NoiseError, NoiseSpec};
use crate::synth::generate_uniform;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("n_values must be sorted, at least 2 stops each; got {0:?}")]
    BadNValues(Vec<usize>),
    #[error("need at least 1 replicate")]
    NoReplicates,
    #[error("provided reference has {reference} stops, not matching requested N = {requested}")]
    ProvidedDimension { reference: usize, requested: usize },
    #[error("aggregation size {size} exceeds {n} stops")]
    AggregationTooLarge { size: usize, n: usize },
    #[error("aggregation size must be at least 1")]
    ZeroAggregation,
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Where the reference matrix of a sweep comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    Synthetic { seed: u64 },
    Provided(ODShareMatrix),
}

/// Which quantity is averaged over replicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Average the per-replicate ratios. The default.
    #[default]
    MeanOfRatios,
    /// Divide the mean marginal error by the mean O-D error.
    RatioOfMeanErrors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n_values: Vec<usize>,
    pub replicates: usize,
    pub spec: NoiseSpec,
    pub reference_source: ReferenceSource,
    #[serde(default)]
    pub averaging: Averaging,
    /// Draw a fresh synthetic reference for every replicate instead of one
    /// per N.
    #[serde(default)]
    pub fresh_reference_per_replicate: bool,
}

impl SweepConfig {
    /// Default sweep: N from 2 to 100, 10 noise realizations each.
    pub fn new(spec: NoiseSpec, reference_seed: u64) -> Self {
        Self {
            n_values: (2..=100).collect(),
            replicates: 10,
            spec,
            reference_source: ReferenceSource::Synthetic { seed: reference_seed },
            averaging: Averaging::default(),
            fresh_reference_per_replicate: false,
        }
    }
}

/// Averaged ratios and dispersion for one N of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n_stops: usize,
    pub mean_ratio_in: f64,
    pub mean_ratio_out: f64,
    pub sd_ratio_in: f64,
    pub sd_ratio_out: f64,
    pub mean_err_od: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub config: SweepConfig,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Error summaries for `replicates` independent draws of `spec` on one
/// reference. Replicate seeds are derived from the spec seed by a 64-bit
/// mix, so results are reproducible and order independent.
pub fn run_replicates(
    spec: &NoiseSpec,
    reference: &ODShareMatrix,
    replicates: usize,
) -> Result<Vec<ErrorSummary>, ExperimentError> {
    let mut out = Vec::with_capacity(replicates);
    for r in 0..replicates {
        let seed = mix_seed(spec.seed, r as u64 + 1);
        let (_, realization) = apply(&spec.clone().with_seed(seed), reference)?;
        out.push(error_summary(&realization.delta)?);
    }
    Ok(out)
}

/// Monte Carlo sweep over N. For each N a reference is drawn (or the
/// provided one used), the spec applied `replicates` times with derived
/// seeds, and the ratios summarized per the configured averaging.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult, ExperimentError> {
    if config.n_values.is_empty()
        || config.n_values.windows(2).any(|w| w[0] > w[1])
        || config.n_values.iter().any(|&n| n < 2)
    {
        return Err(ExperimentError::BadNValues(config.n_values.clone()));
    }
    if config.replicates == 0 {
        return Err(ExperimentError::NoReplicates);
    }

    let mut points = Vec::with_capacity(config.n_values.len());
    for &n in &config.n_values {
        let mut ratios_in = Vec::new();
        let mut ratios_out = Vec::new();
        let mut errs_od = Vec::new();
        let mut errs_in = Vec::new();
        let mut errs_out = Vec::new();

        let base_reference = match &config.reference_source {
            ReferenceSource::Provided(m) => {
                if m.n_stops() != n {
                    return Err(ExperimentError::ProvidedDimension {
                        reference: m.n_stops(),
                        requested: n,
                    });
                }
                Some(m.clone())
            }
            ReferenceSource::Synthetic { seed } => {
                if config.fresh_reference_per_replicate {
                    None
                } else {
                    Some(generate_uniform(n, mix_seed(*seed, n as u64))?)
                }
            }
        };

        for r in 0..config.replicates {
            let reference = match &base_reference {
                Some(m) => m.clone(),
                None => {
                    let seed = match &config.reference_source {
                        ReferenceSource::Synthetic { seed } => *seed,
                        _ => unreachable!(),
                    };
                    generate_uniform(n, mix_seed(mix_seed(seed, n as u64), r as u64 + 1))?
                }
            };
            let seed = mix_seed(mix_seed(config.spec.seed, n as u64), r as u64 + 1);
            let (_, realization) = apply(&config.spec.clone().with_seed(seed), &reference)?;
            let s = error_summary(&realization.delta)?;
            errs_od.push(s.err_od);
            errs_in.push(s.err_in);
            errs_out.push(s.err_out);
            if let (Some(ri), Some(ro)) = (s.ratio_in, s.ratio_out) {
                ratios_in.push(ri);
                ratios_out.push(ro);
            }
        }

        let (sd_in, sd_out) = (mean_sd(&ratios_in).1, mean_sd(&ratios_out).1);
        let (mean_ratio_in, mean_ratio_out) = match config.averaging {
            Averaging::MeanOfRatios => (mean_sd(&ratios_in).0, mean_sd(&ratios_out).0),
            Averaging::RatioOfMeanErrors => {
                let mean_od = mean_sd(&errs_od).0;
                (mean_sd(&errs_in).0 / mean_od, mean_sd(&errs_out).0 / mean_od)
            }
        };
        points.push(SweepPoint {
            n_stops: n,
            mean_ratio_in,
            mean_ratio_out,
            sd_ratio_in: sd_in,
            sd_ratio_out: sd_out,
            mean_err_od: mean_sd(&errs_od).0,
        });
    }
    Ok(SweepResult { points, config: config.clone() })
}

/// One empirical point: the error ratios of a reference/estimate pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPoint {
    pub n_stops: usize,
    pub ratio_in: Option<f64>,
    pub ratio_out: Option<f64>,
}

pub fn empirical_points(
    pairs: &[(ODShareMatrix, ODShareMatrix)],
) -> Result<Vec<EmpiricalPoint>, ExperimentError> {
    pairs
        .iter()
        .map(|(reference, estimate)| {
            let s = error_summary(&delta(reference, estimate)?)?;
            Ok(EmpiricalPoint {
                n_stops: reference.n_stops(),
                ratio_in: s.ratio_in,
                ratio_out: s.ratio_out,
            })
        })
        .collect()
}

/// Which marginal's stops are bundled together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Boarding,
    Alighting,
}

/// RMS error per cell of the delta after bundling consecutive stops of one
/// side into blocks of `size` (the last block may be smaller).
///
/// Boarding side sums rows, giving a ceil(N/size) × N delta; alighting
/// side sums columns. The RMS normalizes by the aggregated cell count.
pub fn aggregate_and_score(
    reference: &ODShareMatrix,
    estimate: &ODShareMatrix,
    size: usize,
    side: Side,
) -> Result<f64, ExperimentError> {
    let d = delta(reference, estimate)?;
    aggregate_delta_score(&d, size, side)
}

pub(crate) fn aggregate_delta_score(
    d: &DeltaMatrix,
    size: usize,
    side: Side,
) -> Result<f64, ExperimentError> {
    let n = d.n_stops();
    if size == 0 {
        return Err(ExperimentError::ZeroAggregation);
    }
    if size > n {
        return Err(ExperimentError::AggregationTooLarge { size, n });
    }
    let blocks = n.div_ceil(size);
    let mut sum_sq = 0.0;
    for b in 0..blocks {
        let range = b * size..((b + 1) * size).min(n);
        for k in 0..n {
            let cell: f64 = match side {
                Side::Boarding => range.clone().map(|i| d.get(i, k)).sum(),
                Side::Alighting => range.clone().map(|o| d.get(k, o)).sum(),
            };
            sum_sq += cell * cell;
        }
    }
    Ok((sum_sq / (blocks * n) as f64).sqrt())
}

/// Aggregated O-D error per bundle size and side, with the n = 1 baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationResult {
    pub baseline_err_od: f64,
    pub entries: Vec<AggregationEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationEntry {
    pub size: usize,
    pub side: Side,
    pub err_od: f64,
}

pub fn aggregation_study(
    reference: &ODShareMatrix,
    estimate: &ODShareMatrix,
    sizes: &[usize],
) -> Result<AggregationResult, ExperimentError> {
    let d = delta(reference, estimate)?;
    let baseline = aggregate_delta_score(&d, 1, Side::Boarding)?;
    let mut entries = Vec::new();
    for &size in sizes {
        for side in [Side::Boarding, Side::Alighting] {
            entries.push(AggregationEntry {
                size,
                side,
                err_od: aggregate_delta_score(&d, size, side)?,
            });
        }
    }
    Ok(AggregationResult { baseline_err_od: baseline, entries })
}
