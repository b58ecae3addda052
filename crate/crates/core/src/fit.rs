//! Reflected path length from one window's calibrated phase differences.
//!
//! In free space the phase difference of a pair is `s * gap` with
//! `s = 2 pi (d_hat - d0) / c`, so the observations lie on a line through
//! the origin. Observed phases are wrapped, so at large path excess the line
//! folds into a zig-zag; each fold count is a separate hypothesis.
//!
//! Amplitude alone cannot tell whether the reflector is receding or
//! approaching: time-reversing the motion negates every observed phase
//! difference (and the multipath offset it carries). Both directions are
//! therefore fitted and the better one kept.

use crate::fresnel::{LinkGeometry, SubcarrierSet, SPEED_OF_LIGHT};
use crate::phase::PhaseDiffObservation;
use rustfft::num_complex::Complex;
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use thiserror::Error;

pub const DEFAULT_FOLD_MAX: u32 = 3;
/// RMS residual (rad) above which a fit is flagged as low confidence.
pub const LOW_CONFIDENCE_RMS: f64 = 0.8;
pub const MIN_OBSERVATIONS: usize = 10;
pub const MIN_DISTINCT_GAPS: usize = 5;

/// Coarse slope grid resolution, in radians at the widest gap.
const GRID_STEP: f64 = 0.02;
const REFINE_ITERATIONS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need {MIN_OBSERVATIONS} weighted observations over {MIN_DISTINCT_GAPS} gaps, got {observations} over {gaps}")]
    InsufficientObservations { observations: usize, gaps: usize },
    #[error("observation refers to subcarrier pair ({0}, {1}) outside the set")]
    BadPair(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Receding,
    Approaching,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub d_hat: f64,
    /// Radians per Hz of subcarrier gap.
    pub slope: f64,
    pub fold_count: u32,
    /// Weighted RMS of the unwrapped residuals, radians.
    pub rms_residual: f64,
    pub n_observations: usize,
    pub window_end_time: f64,
    pub window_duration: f64,
    pub direction: Direction,
    pub low_confidence: bool,
}

impl FitResult {
    pub fn window_mid_time(&self) -> f64 {
        self.window_end_time - self.window_duration / 2.0
    }
}

/// Phase difference expected at the widest subcarrier gap.
pub fn expected_max_phase(link: &LinkGeometry, subcarriers: &SubcarrierSet, d_hat: f64) -> f64 {
    TAU * (d_hat - link.d0()).max(0.0) * subcarriers.max_gap() / SPEED_OF_LIGHT
}

/// Fold count forced by a path length: `floor(expected_max_phase / 2 pi)`.
pub fn forced_fold_count(link: &LinkGeometry, subcarriers: &SubcarrierSet, d_hat: f64) -> u32 {
    (expected_max_phase(link, subcarriers, d_hat) / TAU).floor() as u32
}

/// Calibrated phase difference as seen by a reflector moving in `direction`.
/// Time reversal negates the measured phase but not the static offset, so
/// the calibration is undone with the opposite sign before negating.
pub fn oriented_phase(o: &PhaseDiffObservation, direction: Direction) -> f64 {
    match direction {
        Direction::Receding => o.phase_diff,
        Direction::Approaching => -(o.phase_diff + 2.0 * o.applied_offset),
    }
}

struct Sample {
    /// Gap as a fraction of the widest gap, in (0, 1].
    u: f64,
    y: f64,
    w: f64,
}

struct Hypothesis {
    /// Phase at the widest gap.
    slope: f64,
    rms: f64,
}

/// Fits `d_hat` to calibrated observations by weighted least squares through
/// the origin, trying every fold count in `0..=fold_max` and both directions
/// of travel; the hypothesis with the smallest RMS residual wins.
///
/// Weights are `quality^2`; observations of zero quality do not influence the
/// result.
pub fn fit_path_length(
    obs: &[PhaseDiffObservation],
    link: &LinkGeometry,
    subcarriers: &SubcarrierSet,
    fold_max: u32,
) -> Result<FitResult, FitError> {
    let k = subcarriers.count();
    let max_gap = subcarriers.max_gap();
    let mut weighted = 0usize;
    let mut gaps = BTreeMap::new();
    for o in obs {
        if o.a >= o.b || o.b >= k {
            return Err(FitError::BadPair(o.a, o.b));
        }
        if o.quality > 0.0 {
            weighted += 1;
            *gaps.entry(o.b - o.a).or_insert(0usize) += 1;
        }
    }
    if weighted < MIN_OBSERVATIONS || gaps.len() < MIN_DISTINCT_GAPS {
        return Err(FitError::InsufficientObservations {
            observations: weighted,
            gaps: gaps.len(),
        });
    }

    let samples = |direction: Direction| -> Vec<Sample> {
        obs.iter()
            .filter(|o| o.quality > 0.0)
            .map(|o| {
                let y = oriented_phase(o, direction);
                Sample {
                    u: (subcarriers.freq(o.b) - subcarriers.freq(o.a)) / max_gap,
                    y,
                    w: o.quality * o.quality,
                }
            })
            .collect()
    };

    let mut best: Option<(Hypothesis, u32, Direction)> = None;
    for direction in [Direction::Receding, Direction::Approaching] {
        let data = samples(direction);
        for fold in 0..=fold_max {
            let h = fit_fold(&data, fold);
            let better = match &best {
                None => true,
                Some((b, _, _)) => h.rms < b.rms - 1e-12,
            };
            if better {
                best = Some((h, fold, direction));
            }
        }
    }
    let (h, _, direction) = best.expect("at least one hypothesis");
    let slope = h.slope / max_gap;
    let excess = slope * SPEED_OF_LIGHT / TAU;
    Ok(FitResult {
        d_hat: link.d0() + excess,
        slope,
        fold_count: ((h.slope / TAU).floor().max(0.0) as u32).min(fold_max),
        rms_residual: h.rms,
        n_observations: weighted,
        window_end_time: obs[0].window_end_time,
        window_duration: obs[0].window_duration,
        direction,
        low_confidence: h.rms > LOW_CONFIDENCE_RMS,
    })
}

/// Best line with `fold` wraps at the widest gap: its phase there lies in
/// `[2 pi fold, 2 pi (fold + 1))`.
fn fit_fold(data: &[Sample], fold: u32) -> Hypothesis {
    let lo = TAU * fold as f64;
    let hi = lo + TAU;

    // Circular cost sum w (1 - cos(S u - y)), evaluated per distinct gap.
    let mut groups: BTreeMap<u64, (f64, Complex<f64>)> = BTreeMap::new();
    for s in data {
        let e = groups
            .entry(s.u.to_bits())
            .or_insert((s.u, Complex::new(0.0, 0.0)));
        e.1 += Complex::from_polar(s.w, -s.y);
    }
    let score = |slope: f64| -> f64 {
        groups
            .values()
            .map(|(u, z)| (Complex::from_polar(1.0, slope * u) * z).re)
            .sum()
    };
    let steps = ((hi - lo) / GRID_STEP).ceil() as usize;
    let mut slope = (0..steps)
        .map(|i| lo + (i as f64 + 0.5) * (hi - lo) / steps as f64)
        .max_by(|a, b| score(*a).total_cmp(&score(*b)))
        .expect("non-empty grid");

    // Unwrap every observation onto the branch nearest the current line,
    // then refit by weighted least squares through the origin.
    let wsum: f64 = data.iter().map(|s| s.w).sum();
    let mut rms = f64::INFINITY;
    for _ in 0..REFINE_ITERATIONS {
        let (mut num, mut den) = (0.0, 0.0);
        for s in data {
            let branch = ((slope * s.u - s.y) / TAU).round();
            num += s.w * s.u * (s.y + TAU * branch);
            den += s.w * s.u * s.u;
        }
        let next = (num / den).clamp(lo.max(0.0) - 0.5, hi + 0.5).max(0.0);
        let sse: f64 = data
            .iter()
            .map(|s| {
                let branch = ((slope * s.u - s.y) / TAU).round();
                s.w * (s.y + TAU * branch - next * s.u).powi(2)
            })
            .sum();
        rms = (sse / wsum).sqrt();
        if (next - slope).abs() < 1e-12 {
            slope = next;
            break;
        }
        slope = next;
    }
    Hypothesis { slope, rms }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fresnel::{theoretical_phase_diff, Point2D};
    use crate::phase::wrap_phase;

    fn link4() -> LinkGeometry {
        LinkGeometry::new(Point2D::new(0.0, 0.0), Point2D::new(4.0, 0.0)).unwrap()
    }

    /// Forward model: wrapped free-space phase differences of every pair.
    pub(crate) fn synthesize(
        link: &LinkGeometry,
        subs: &SubcarrierSet,
        d_hat: f64,
    ) -> Vec<PhaseDiffObservation> {
        let mut out = Vec::new();
        for a in 0..subs.count() {
            for b in a + 1..subs.count() {
                let p = theoretical_phase_diff(d_hat, link, subs.freq(a), subs.freq(b)).unwrap();
                out.push(PhaseDiffObservation {
                    a,
                    b,
                    window_end_time: 1.0,
                    window_duration: 0.048,
                    phase_diff: wrap_phase(p),
                    quality: 1.0,
                    applied_offset: 0.0,
                });
            }
        }
        out
    }

    #[test]
    fn zero_phases_give_los() {
        let subs = SubcarrierSet::wifi_40mhz();
        let mut obs = synthesize(&link4(), &subs, 4.0);
        obs.iter_mut().for_each(|o| o.phase_diff = 0.0);
        let r = fit_path_length(&obs, &link4(), &subs, DEFAULT_FOLD_MAX).unwrap();
        assert_eq!(r.d_hat, 4.0);
        assert_eq!(r.slope, 0.0);
        assert_eq!(r.fold_count, 0);
    }

    #[test]
    fn recovers_unfolded_path() {
        let subs = SubcarrierSet::wifi_40mhz();
        let obs = synthesize(&link4(), &subs, 6.5);
        let max_phase = expected_max_phase(&link4(), &subs, 6.5);
        assert!((max_phase - 1.90).abs() < 0.01, "{max_phase}");
        let r = fit_path_length(&obs, &link4(), &subs, DEFAULT_FOLD_MAX).unwrap();
        assert!((r.d_hat - 6.5).abs() < 0.02, "{r:?}");
        assert_eq!(r.fold_count, 0);
        assert_eq!(r.direction, Direction::Receding);
        assert!(!r.low_confidence);
    }

    #[test]
    fn recovers_folded_path() {
        let subs = SubcarrierSet::wifi_40mhz();
        let d = 13.0;
        let max_phase = expected_max_phase(&link4(), &subs, d);
        assert!((max_phase - 6.84).abs() < 0.01, "{max_phase}");
        let obs = synthesize(&link4(), &subs, d);
        let r = fit_path_length(&obs, &link4(), &subs, DEFAULT_FOLD_MAX).unwrap();
        assert!((r.d_hat - d).abs() < 0.05, "{r:?}");
        assert!(r.fold_count >= 1);
    }

    #[test]
    fn approaching_reflector_recovered() {
        let subs = SubcarrierSet::wifi_40mhz();
        let mut obs = synthesize(&link4(), &subs, 8.0);
        obs.iter_mut().for_each(|o| o.phase_diff = wrap_phase(-o.phase_diff));
        let r = fit_path_length(&obs, &link4(), &subs, DEFAULT_FOLD_MAX).unwrap();
        assert!((r.d_hat - 8.0).abs() < 1e-6, "{r:?}");
        assert_eq!(r.direction, Direction::Approaching);
    }

    #[test]
    fn insufficient_observations() {
        let subs = SubcarrierSet::wifi_40mhz();
        let obs: Vec<_> = synthesize(&link4(), &subs, 6.0).into_iter().take(9).collect();
        assert!(matches!(
            fit_path_length(&obs, &link4(), &subs, 3),
            Err(FitError::InsufficientObservations { .. })
        ));
        // plenty of observations but a single gap
        let obs: Vec<_> = synthesize(&link4(), &subs, 6.0)
            .into_iter()
            .filter(|o| o.b - o.a == 1)
            .collect();
        assert!(fit_path_length(&obs, &link4(), &subs, 3).is_err());
    }

    #[test]
    fn random_phases_flagged_low_confidence() {
        use rand::{Rng, SeedableRng};
        let subs = SubcarrierSet::wifi_40mhz();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut obs = synthesize(&link4(), &subs, 6.0);
        obs.iter_mut().for_each(|o| o.phase_diff = rng.gen_range(0.0..TAU));
        let r = fit_path_length(&obs, &link4(), &subs, 3).unwrap();
        assert!(r.low_confidence, "{r:?}");
    }

    #[test]
    fn expected_max_phase_examples() {
        let subs = SubcarrierSet::wifi_40mhz();
        let l = link4();
        assert_eq!(expected_max_phase(&l, &subs, 4.0), 0.0);
        let two = SubcarrierSet::new(5.7575e9, 25e6, 2).unwrap();
        let p = expected_max_phase(&l, &two, 4.0 + 6.0017);
        assert!((p - std::f64::consts::PI).abs() < 0.01, "{p}");
        let v: Vec<f64> = (0..100).map(|i| expected_max_phase(&l, &subs, 4.0 + 0.1 * i as f64)).collect();
        assert!(v.windows(2).all(|w| w[1] > w[0]));
    }
}
