//! Figure data and error statistics: amplitude heatmaps, the window-size
//! sweep, single-gap estimators and CDF tables.

use crate::error::CliError;
use fresnel_loc::fit::{fit_path_length, oriented_phase};
use fresnel_loc::fresnel::{reflected_path_length, LinkGeometry, SubcarrierSet, SPEED_OF_LIGHT};
use fresnel_loc::locate::{localization_error, SensingArea, BODY_RADIUS};
use fresnel_loc::phase::{
    apply_calibration, compute_all_pairs_extended, wrap_phase, PhaseOffsetMatrix, WindowConfig,
};
use fresnel_loc::pipeline::{localize, LinkInput, PipelineConfig};
use fresnel_loc::sim::{
    make_trajectory, simulate_free_space, simulate_multipath, CsiSeries, MultipathSpec, NoiseSpec, PathShape,
    ReflectorSpec, Trajectory, TrajectorySpec,
};
use std::f64::consts::TAU;

/// Simulates one trace per link for a shared trajectory. Link `i` gets the
/// noise seed `seed + i` and, if given, the static environment `env[i]`.
pub fn simulate_links(
    links: &[LinkGeometry],
    subcarriers: &SubcarrierSet,
    trajectory: &Trajectory,
    reflector: &ReflectorSpec,
    env: Option<&[MultipathSpec]>,
    noise: impl Fn(u64) -> NoiseSpec,
    seed: u64,
    sample_rate: f64,
) -> Result<Vec<CsiSeries>, CliError> {
    links
        .iter()
        .enumerate()
        .map(|(i, link)| {
            let n = noise(seed.wrapping_add(i as u64));
            let s = match env {
                Some(mp) => simulate_multipath(link, subcarriers, trajectory, reflector, &mp[i], &n, sample_rate)?,
                None => simulate_free_space(link, subcarriers, trajectory, reflector, &n, sample_rate)?,
            };
            Ok(s)
        })
        .collect()
}

/// Cylinder errors of `estimates` against the true trajectory.
pub fn track_errors(estimates: &[fresnel_loc::locate::LocationEstimate], truth: &Trajectory) -> Vec<f64> {
    estimates
        .iter()
        .map(|e| localization_error(&e.position, &truth.position_at(e.time), BODY_RADIUS))
        .collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorStats {
    pub count: usize,
    pub median: f64,
    pub mean: f64,
    /// `(fraction, error)` at 5% steps, nearest-rank quantiles.
    pub cdf: Vec<(f64, f64)>,
}

impl ErrorStats {
    pub fn new(errors: &[f64]) -> Option<Self> {
        let median = median(errors)?;
        let mut v = errors.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let cdf = (1..=20)
            .map(|i| {
                let p = i as f64 / 20.0;
                let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
                (p, v[rank - 1])
            })
            .collect();
        Some(Self {
            count: n,
            median,
            mean: v.iter().sum::<f64>() / n as f64,
            cdf,
        })
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.cdf
            .iter()
            .find(|(q, _)| *q >= p - 1e-12)
            .map_or(f64::NAN, |(_, e)| *e)
    }
}

/// Noiseless free-space amplitude on a grid of path lengths, one row per
/// subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub d_hat: Vec<f64>,
    pub freqs: Vec<f64>,
    pub amplitude: Vec<Vec<f64>>,
}

/// Sweeps a reflector along `link`'s perpendicular bisector at 0.5 m/s.
pub fn heatmap(
    link: &LinkGeometry,
    subcarriers: &SubcarrierSet,
    reflector: &ReflectorSpec,
    from_offset: f64,
    to_offset: f64,
    sample_rate: f64,
) -> Result<Heatmap, CliError> {
    let shape = PathShape::PerpendicularBisectorSweep {
        link: *link,
        from_offset,
        to_offset,
    };
    let traj = make_trajectory(&TrajectorySpec::new(shape, 0.5))?;
    let s = simulate_free_space(link, subcarriers, &traj, reflector, &NoiseSpec::noiseless(), sample_rate)?;
    Ok(Heatmap {
        d_hat: (0..s.len())
            .map(|n| reflected_path_length(&traj.position_at(s.time_of(n)), link))
            .collect(),
        freqs: subcarriers.freqs().to_vec(),
        amplitude: s.rows().to_vec(),
    })
}

/// One amplitude minimum followed across all subcarriers.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremumLine {
    /// Minimum position per subcarrier.
    pub d_hat: Vec<f64>,
    /// Metres per Hz.
    pub slope: f64,
    pub r_squared: f64,
}

fn minima(d_hat: &[f64], row: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 1..row.len().saturating_sub(1) {
        let (y0, y1, y2) = (row[i - 1], row[i], row[i + 1]);
        if y1 < y0 && y1 <= y2 {
            let denom = y0 - 2.0 * y1 + y2;
            let shift = if denom > 0.0 { (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5) } else { 0.0 };
            let pos = if shift >= 0.0 {
                d_hat[i] + shift * (d_hat[i + 1] - d_hat[i])
            } else {
                d_hat[i] + shift * (d_hat[i] - d_hat[i - 1])
            };
            out.push(pos);
        }
    }
    out
}

/// Chains each minimum of the first subcarrier to the nearest minimum of the
/// next, and so on; chains that break are dropped. Each surviving chain is
/// regressed against frequency.
pub fn extremum_lines(map: &Heatmap) -> Vec<ExtremumLine> {
    let rows: Vec<Vec<f64>> = map.amplitude.iter().map(|r| minima(&map.d_hat, r)).collect();
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let tol = SPEED_OF_LIGHT / map.freqs[map.freqs.len() - 1] / 8.0;
    let mut lines = Vec::new();
    'chain: for &start in first {
        let mut chain = vec![start];
        for row in &rows[1..] {
            let prev = chain[chain.len() - 1];
            match row.iter().min_by(|a, b| (*a - prev).abs().total_cmp(&(*b - prev).abs())) {
                Some(&next) if (next - prev).abs() < tol => chain.push(next),
                _ => continue 'chain,
            }
        }
        let (slope, r_squared) = linear_fit(&map.freqs, &chain);
        lines.push(ExtremumLine {
            d_hat: chain,
            slope,
            r_squared,
        });
    }
    lines
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, r2)
}

/// A deployment, channel and set of walks to localize repeatedly.
#[derive(Debug, Clone)]
pub struct Scene {
    pub links: Vec<LinkGeometry>,
    pub area: SensingArea,
    pub subcarriers: SubcarrierSet,
    pub reflector: ReflectorSpec,
    pub sample_rate: f64,
    pub walks: Vec<TrajectorySpec>,
    pub snr_db: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowPoint {
    pub seconds: f64,
    pub samples: usize,
    /// `None` when the window is too short to analyse or nothing was located.
    pub median_error: Option<f64>,
    /// Median distance to the true position, ignoring the body radius.
    pub median_distance: Option<f64>,
    pub gap_fraction: f64,
    pub estimates: usize,
}

/// Median cylinder error over all walks for each window duration. Hop
/// equals the window; slow-motion widening stays capped at
/// `base.max_window_samples` or the window itself, whichever is longer.
pub fn window_sweep(scene: &Scene, base: &PipelineConfig, durations: &[f64]) -> Result<Vec<WindowPoint>, CliError> {
    let mut runs = Vec::new();
    for (i, spec) in scene.walks.iter().enumerate() {
        let traj = make_trajectory(spec)?;
        let noise = |s| match scene.snr_db {
            Some(snr) => NoiseSpec::from_snr_db(snr, &scene.reflector, s),
            None => NoiseSpec::noiseless(),
        };
        let seed = scene.seed.wrapping_add(100 * i as u64);
        let series = simulate_links(
            &scene.links,
            &scene.subcarriers,
            &traj,
            &scene.reflector,
            None,
            noise,
            seed,
            scene.sample_rate,
        )?;
        runs.push((traj, series));
    }
    let mut out = Vec::new();
    for &seconds in durations {
        let samples = (seconds * scene.sample_rate).round() as usize;
        if samples < WindowConfig::MIN_WINDOW {
            out.push(WindowPoint {
                seconds,
                samples,
                median_error: None,
                median_distance: None,
                gap_fraction: 1.0,
                estimates: 0,
            });
            continue;
        }
        let config = PipelineConfig {
            window: WindowConfig::new(samples, samples)?,
            fold_max: base.fold_max,
            max_window_samples: base.max_window_samples.max(samples),
        };
        let (mut errors, mut distances, mut windows) = (Vec::new(), Vec::new(), 0usize);
        for (traj, series) in &runs {
            let inputs: Vec<LinkInput<'_>> = series.iter().map(|s| LinkInput { series: s, calibration: None }).collect();
            let loc = localize(&inputs, &scene.area, &config)?;
            windows += loc.windows;
            errors.extend(track_errors(&loc.estimates, traj));
            distances.extend(loc.estimates.iter().map(|e| e.position.distance(&traj.position_at(e.time))));
        }
        out.push(WindowPoint {
            seconds,
            samples,
            median_error: median(&errors),
            median_distance: median(&distances),
            gap_fraction: if windows == 0 { 1.0 } else { 1.0 - errors.len() as f64 / windows as f64 },
            estimates: errors.len(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapGroupReport {
    /// Windows with a confident full fit.
    pub windows: usize,
    pub full_median: f64,
    /// `(gap in subcarrier indices, median error)`; windows without any pair
    /// of that gap count as infinite error.
    pub groups: Vec<(usize, f64)>,
}

/// Path-length error of the full multi-gap fit against estimators that use
/// a single subcarrier gap: the circular mean of that gap's phase
/// differences, oriented by the fitted direction of travel, converted
/// directly to a path length.
pub fn gap_groups(
    series: &CsiSeries,
    truth: &Trajectory,
    calibration: Option<&PhaseOffsetMatrix>,
    config: &PipelineConfig,
    gaps: &[usize],
) -> Result<GapGroupReport, CliError> {
    let link = series.link();
    let subs = series.subcarriers();
    let w = config.window.window_samples();
    let mut full = Vec::new();
    let mut group_errors = vec![Vec::new(); gaps.len()];
    for start in config.window.window_starts(series.len()) {
        let mut obs = compute_all_pairs_extended(series, &config.window, start, config.max_window_samples)?;
        if let Some(m) = calibration {
            obs = apply_calibration(&obs, m)?;
        }
        let Ok(fit) = fit_path_length(&obs, link, subs, config.fold_max) else {
            continue;
        };
        if fit.low_confidence {
            continue;
        }
        let mid = 0.5 * (series.time_of(start) + series.time_of(start + w - 1));
        let d_true = reflected_path_length(&truth.position_at(mid), link);
        full.push((fit.d_hat - d_true).abs());
        for (g, errs) in gaps.iter().zip(&mut group_errors) {
            let (mut c, mut s) = (0.0, 0.0);
            for o in obs.iter().filter(|o| o.b - o.a == *g) {
                let phi = oriented_phase(o, fit.direction);
                c += phi.cos();
                s += phi.sin();
            }
            let err = if c == 0.0 && s == 0.0 {
                f64::INFINITY
            } else {
                let phi = wrap_phase(s.atan2(c));
                let df = subs.freq(*g) - subs.freq(0);
                let d = link.d0() + SPEED_OF_LIGHT * phi / (TAU * df);
                (d - d_true).abs()
            };
            errs.push(err);
        }
    }
    let full_median = median(&full).ok_or_else(|| CliError::Numerical("no confident windows".into()))?;
    Ok(GapGroupReport {
        windows: full.len(),
        full_median,
        groups: gaps
            .iter()
            .zip(&group_errors)
            .map(|(g, e)| (*g, median(e).unwrap_or(f64::INFINITY)))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use fresnel_loc::fresnel::Point2D;

    #[test]
    fn stats_of_hand_built_errors() {
        // distances 0.1, 0.3, 0.5 m minus the body radius
        let errors: Vec<f64> = [0.1, 0.3, 0.5].iter().map(|d: &f64| (d - 0.2f64).max(0.0)).collect();
        let s = ErrorStats::new(&errors).unwrap();
        assert_eq!(s.count, 3);
        assert!((s.median - 0.1).abs() < 1e-12);
        assert_eq!(s.cdf.last().unwrap().0, 1.0);
        assert!((s.cdf.last().unwrap().1 - 0.3).abs() < 1e-12);
        assert!(s.cdf.windows(2).all(|w| w[0].1 <= w[1].1 && w[0].0 < w[1].0));
        assert!(ErrorStats::new(&[]).is_none());
        let zero = ErrorStats::new(&[0.0; 5]).unwrap();
        assert!(zero.cdf.iter().all(|(_, e)| *e == 0.0));
    }

    #[test]
    fn heatmap_extrema_are_straight_lines() {
        let link = LinkGeometry::new(Point2D::new(0.0, 0.0), Point2D::new(4.0, 0.0)).unwrap();
        let subs = SubcarrierSet::wifi_40mhz();
        let map = heatmap(&link, &subs, &ReflectorSpec::default(), 1.0, 1.4, 2000.0).unwrap();
        let lines = extremum_lines(&map);
        assert!(lines.len() > 5);
        for l in &lines {
            assert!(l.r_squared > 0.999, "{}", l.r_squared);
            // minima sit at (n + 1/2) c / f, so they move toward the LoS with frequency
            assert!(l.slope < 0.0);
        }
    }
}
