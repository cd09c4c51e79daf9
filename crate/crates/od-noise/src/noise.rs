//! Synthetic noise models for O-D share matrices.
//!
//! Seven models, all recentred so the perturbed shares keep summing to 1:
//! additive (i.i.d. per cell), multiplicative (proportional to the cell),
//! short-trip and central-stop masks, and row- or column-constant noise
//! standing for boarding/alighting uncertainty. Models compose additively;
//! an optional clamping pass repairs negative shares while preserving the
//! unit sum.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{DeltaMatrix, MatrixError, ODShareMatrix};

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("noise spec needs at least one term")]
    NoTerms,
    #[error("amplitude must be > 0, got {0}")]
    BadAmplitude(f64),
    #[error("central band ({0}, {1}) must satisfy 0 <= lo < hi <= 1")]
    BadBand(f64, f64),
    #[error("short radius {radius} must be < {n} stops")]
    RadiusTooLarge { radius: usize, n: usize },
    #[error("structural mask selects no cell (band ({lo}, {hi}) at N = {n})")]
    EmptyMask { lo: f64, hi: f64, n: usize },
    #[error("clamping did not converge within {0} iterations")]
    ClampDiverged(usize),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Distribution of the raw noise variables before recentring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    /// Uniform on [-sigma, sigma]. The default.
    #[default]
    UniformSymmetric,
    /// Normal with mean 0 and standard deviation sigma.
    Gaussian,
}

impl Distribution {
    fn sample(self, sigma: f64, rng: &mut impl Rng) -> f64 {
        match self {
            Distribution::UniformSymmetric => rng.gen_range(-sigma..=sigma),
            Distribution::Gaussian => Normal::new(0.0, sigma).unwrap().sample(rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Additive,
    Multiplicative,
    ShortOd,
    CentralOd,
    Boarding,
    Alighting,
}

fn default_short_radius() -> usize {
    2
}

fn default_central_band() -> (f64, f64) {
    (1.0 / 8.0, 3.0 / 8.0)
}

/// One noise term of a composite spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseTerm {
    pub kind: NoiseKind,
    /// Amplitude sigma, in share units.
    pub amplitude: f64,
    #[serde(default)]
    pub distribution: Distribution,
    /// Max |i - o| carrying noise; `short_od` only.
    #[serde(default = "default_short_radius")]
    pub short_radius: usize,
    /// Take |xi| on masked cells; `short_od` only.
    #[serde(default)]
    pub positive_only: bool,
    /// Central-stop band as fractions (lo, hi) of N; `central_od` only.
    #[serde(default = "default_central_band")]
    pub central_band: (f64, f64),
}

impl NoiseTerm {
    pub fn new(kind: NoiseKind, amplitude: f64) -> Self {
        Self {
            kind,
            amplitude,
            distribution: Distribution::default(),
            short_radius: default_short_radius(),
            positive_only: false,
            central_band: default_central_band(),
        }
    }

    pub fn additive(amplitude: f64) -> Self {
        Self::new(NoiseKind::Additive, amplitude)
    }

    pub fn multiplicative(amplitude: f64) -> Self {
        Self::new(NoiseKind::Multiplicative, amplitude)
    }

    pub fn short_od(amplitude: f64) -> Self {
        Self::new(NoiseKind::ShortOd, amplitude)
    }

    pub fn central_od(amplitude: f64) -> Self {
        Self::new(NoiseKind::CentralOd, amplitude)
    }

    pub fn boarding(amplitude: f64) -> Self {
        Self::new(NoiseKind::Boarding, amplitude)
    }

    pub fn alighting(amplitude: f64) -> Self {
        Self::new(NoiseKind::Alighting, amplitude)
    }

    pub fn with_distribution(mut self, distribution: Distribution) -> Self {
        self.distribution = distribution;
        self
    }

    pub fn with_short_radius(mut self, radius: usize) -> Self {
        self.short_radius = radius;
        self
    }

    pub fn with_positive_only(mut self, positive_only: bool) -> Self {
        self.positive_only = positive_only;
        self
    }

    pub fn with_central_band(mut self, lo: f64, hi: f64) -> Self {
        self.central_band = (lo, hi);
        self
    }

    fn validate(&self, n: usize) -> Result<(), NoiseError> {
        if !(self.amplitude > 0.0) {
            return Err(NoiseError::BadAmplitude(self.amplitude));
        }
        match self.kind {
            NoiseKind::ShortOd => {
                if self.short_radius >= n {
                    return Err(NoiseError::RadiusTooLarge { radius: self.short_radius, n });
                }
            }
            NoiseKind::CentralOd => {
                let (lo, hi) = self.central_band;
                if !(0.0..1.0).contains(&lo) || !(lo < hi) || hi > 1.0 {
                    return Err(NoiseError::BadBand(lo, hi));
                }
                if central_indices(n, lo, hi).is_empty() {
                    return Err(NoiseError::EmptyMask { lo, hi, n });
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Declarative description of a (possibly composite) noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub terms: Vec<NoiseTerm>,
    #[serde(default)]
    pub clamped: bool,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(terms: Vec<NoiseTerm>, clamped: bool, seed: u64) -> Self {
        Self { terms, clamped, seed }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, n: usize) -> Result<(), NoiseError> {
        if self.terms.is_empty() {
            return Err(NoiseError::NoTerms);
        }
        for term in &self.terms {
            term.validate(n)?;
        }
        Ok(())
    }
}

/// One realized draw of the error matrix.
#[derive(Debug, Clone)]
pub struct NoiseRealization {
    pub delta: DeltaMatrix,
    pub clamp_events: usize,
    pub seed_used: u64,
}

/// splitmix64 step; used to derive independent per-replicate seeds from a
/// base seed.
pub fn mix_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Subtract the grand mean of `raw` from every cell so the deltas sum to 0.
fn recenter(raw: &mut [f64]) {
    let z = raw.iter().sum::<f64>() / raw.len() as f64;
    raw.iter_mut().for_each(|x| *x -= z);
}

/// 0-based stop indices falling in the central band; a 1-based label `i`
/// is central iff ceil(lo*N) <= i <= floor(hi*N).
fn central_indices(n: usize, lo: f64, hi: f64) -> Vec<usize> {
    let first = (lo * n as f64).ceil().max(1.0) as usize;
    let last = (hi * n as f64).floor() as usize;
    (first..=last.min(n)).map(|i| i - 1).collect()
}

/// Additive noise: i.i.d. xi per cell, recentred by the grand mean.
pub fn draw_additive(
    reference: &ODShareMatrix,
    sigma: f64,
    distribution: Distribution,
    rng: &mut impl Rng,
) -> Result<DeltaMatrix, NoiseError> {
    if !(sigma > 0.0) {
        return Err(NoiseError::BadAmplitude(sigma));
    }
    let n = reference.n_stops();
    let mut raw: Vec<f64> = (0..n * n).map(|_| distribution.sample(sigma, rng)).collect();
    recenter(&mut raw);
    Ok(DeltaMatrix::new(n, raw)?)
}

/// Multiplicative noise: xi * T_io per cell, recentred by the grand mean.
pub fn draw_multiplicative(
    reference: &ODShareMatrix,
    sigma: f64,
    distribution: Distribution,
    rng: &mut impl Rng,
) -> Result<DeltaMatrix, NoiseError> {
    if !(sigma > 0.0) {
        return Err(NoiseError::BadAmplitude(sigma));
    }
    let n = reference.n_stops();
    let mut raw: Vec<f64> = reference
        .shares()
        .iter()
        .map(|&t| distribution.sample(sigma, rng) * t)
        .collect();
    recenter(&mut raw);
    Ok(DeltaMatrix::new(n, raw)?)
}

/// Masked noise concentrated on short trips or central stops. Raw noise
/// lands on masked cells only; the recentring constant still averages over
/// all N^2 cells, so unmasked cells carry the constant -Z.
pub fn draw_structured(
    reference: &ODShareMatrix,
    term: &NoiseTerm,
    rng: &mut impl Rng,
) -> Result<DeltaMatrix, NoiseError> {
    let n = reference.n_stops();
    term.validate(n)?;
    let mut raw = vec![0.0; n * n];
    match term.kind {
        NoiseKind::ShortOd => {
            let radius = term.short_radius as i64;
            for i in 0..n {
                for o in 0..n {
                    if (i as i64 - o as i64).abs() <= radius {
                        let xi = term.distribution.sample(term.amplitude, rng);
                        raw[i * n + o] = if term.positive_only { xi.abs() } else { xi };
                    }
                }
            }
        }
        NoiseKind::CentralOd => {
            let (lo, hi) = term.central_band;
            let central = central_indices(n, lo, hi);
            let mut is_central = vec![false; n];
            for &i in &central {
                is_central[i] = true;
            }
            for i in 0..n {
                for o in 0..n {
                    if is_central[i] && is_central[o] {
                        raw[i * n + o] = term.distribution.sample(term.amplitude, rng);
                    }
                }
            }
        }
        other => panic!("draw_structured called with non-structural kind {other:?}"),
    }
    recenter(&mut raw);
    Ok(DeltaMatrix::new(n, raw)?)
}

/// Marginal noise: one xi per stop, constant along its row (boarding) or
/// column (alighting), recentred by the mean over stops.
pub fn draw_marginal(
    reference: &ODShareMatrix,
    kind: NoiseKind,
    sigma: f64,
    distribution: Distribution,
    rng: &mut impl Rng,
) -> Result<DeltaMatrix, NoiseError> {
    if !(sigma > 0.0) {
        return Err(NoiseError::BadAmplitude(sigma));
    }
    let n = reference.n_stops();
    let mut xi: Vec<f64> = (0..n).map(|_| distribution.sample(sigma, rng)).collect();
    recenter(&mut xi);
    let raw: Vec<f64> = match kind {
        NoiseKind::Boarding => (0..n * n).map(|k| xi[k / n]).collect(),
        NoiseKind::Alighting => (0..n * n).map(|k| xi[k % n]).collect(),
        other => panic!("draw_marginal called with non-marginal kind {other:?}"),
    };
    Ok(DeltaMatrix::new(n, raw)?)
}

fn draw_term(
    reference: &ODShareMatrix,
    term: &NoiseTerm,
    rng: &mut impl Rng,
) -> Result<DeltaMatrix, NoiseError> {
    match term.kind {
        NoiseKind::Additive => draw_additive(reference, term.amplitude, term.distribution, rng),
        NoiseKind::Multiplicative => {
            draw_multiplicative(reference, term.amplitude, term.distribution, rng)
        }
        NoiseKind::ShortOd | NoiseKind::CentralOd => draw_structured(reference, term, rng),
        NoiseKind::Boarding | NoiseKind::Alighting => {
            draw_marginal(reference, term.kind, term.amplitude, term.distribution, rng)
        }
    }
}

const CLAMP_MAX_ITER: usize = 100;

/// Zero out negative shares and take the resulting surplus back uniformly
/// from the strictly positive ones, repeating until no share is negative.
/// Preserves the unit sum at every step. Returns the number of cells that
/// were clamped to zero.
fn clamp_shares(shares: &mut [f64]) -> Result<usize, NoiseError> {
    let mut events = 0;
    for _ in 0..CLAMP_MAX_ITER {
        let mut deficit = 0.0;
        for v in shares.iter_mut() {
            if *v < 0.0 {
                deficit -= *v;
                *v = 0.0;
                events += 1;
            }
        }
        if deficit == 0.0 {
            return Ok(events);
        }
        let positive = shares.iter().filter(|&&v| v > 0.0).count();
        if positive == 0 {
            return Err(NoiseError::ClampDiverged(CLAMP_MAX_ITER));
        }
        let take = deficit / positive as f64;
        for v in shares.iter_mut() {
            if *v > 0.0 {
                *v -= take;
            }
        }
    }
    if shares.iter().all(|&v| v >= 0.0) {
        Ok(events)
    } else {
        Err(NoiseError::ClampDiverged(CLAMP_MAX_ITER))
    }
}

/// Apply a noise spec to a reference matrix. Terms are drawn in spec order
/// from one RNG stream seeded by `spec.seed`, summed, optionally clamped,
/// and the result renormalized to unit sum. Deterministic given the seed.
pub fn apply(
    spec: &NoiseSpec,
    reference: &ODShareMatrix,
) -> Result<(ODShareMatrix, NoiseRealization), NoiseError> {
    spec.validate(reference.n_stops())?;
    let n = reference.n_stops();
    let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(spec.seed);

    let mut est: Vec<f64> = reference.shares().to_vec();
    for term in &spec.terms {
        let d = draw_term(reference, term, &mut rng)?;
        for (e, &dv) in est.iter_mut().zip(d.deltas()) {
            *e += dv;
        }
    }

    let clamp_events = if spec.clamped { clamp_shares(&mut est)? } else { 0 };

    let total: f64 = est.iter().sum();
    est.iter_mut().for_each(|x| *x /= total);

    let estimate = ODShareMatrix::new_perturbed(n, est)?;
    let delta = crate::matrix::delta(reference, &estimate).map_err(NoiseError::Matrix)?;
    Ok((estimate, NoiseRealization { delta, clamp_events, seed_used: spec.seed }))
}
