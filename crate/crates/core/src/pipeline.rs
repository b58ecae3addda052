//! End-to-end composition: windows -> phase differences -> calibration ->
//! path-length fit per link, then ellipse fusion across links.

use crate::fit::{fit_path_length, FitResult, DEFAULT_FOLD_MAX};
use crate::locate::{track, LinkFits, LocationEstimate, SensingArea};
use crate::phase::{
    apply_calibration, compute_all_pairs_extended, PhaseOffsetMatrix, PipelineError, WindowConfig,
};
use crate::sim::CsiSeries;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalizeError {
    #[error("localization needs at least 2 links, got {0}")]
    TooFewLinks(usize),
    #[error("links disagree on {0}")]
    Misaligned(&'static str),
    #[error("calibration matrix subcarriers differ from the trace")]
    CalibrationMismatch,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub window: WindowConfig,
    pub fold_max: u32,
    /// Longest analysis window for slow-moving targets; equal to the window
    /// length to disable widening.
    pub max_window_samples: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window: WindowConfig::default(),
            fold_max: DEFAULT_FOLD_MAX,
            max_window_samples: 16 * WindowConfig::default().window_samples(),
        }
    }
}

/// Outcome of one window on one link.
#[derive(Debug, Clone, PartialEq)]
pub enum WindowOutcome {
    Fit(FitResult),
    /// Static or aperiodic window, or too few usable pairs.
    Skipped { window_mid_time: f64 },
}

/// Fits every window of one link's trace.
pub fn fit_link(
    series: &CsiSeries,
    calibration: Option<&PhaseOffsetMatrix>,
    config: &PipelineConfig,
) -> Result<Vec<WindowOutcome>, LocalizeError> {
    if let Some(m) = calibration {
        if m.subcarriers() != series.subcarriers() {
            return Err(LocalizeError::CalibrationMismatch);
        }
    }
    let w = config.window.window_samples();
    let mut out = Vec::new();
    for start in config.window.window_starts(series.len()) {
        let mut obs = compute_all_pairs_extended(series, &config.window, start, config.max_window_samples)?;
        // a widened window still reports on its nominal slot
        let (end, duration) = (series.time_of(start + w - 1), (w - 1) as f64 / series.sample_rate());
        for o in &mut obs {
            o.window_end_time = end;
            o.window_duration = duration;
        }
        if let Some(m) = calibration {
            obs = apply_calibration(&obs, m)?;
        }
        let outcome = match fit_path_length(&obs, series.link(), series.subcarriers(), config.fold_max) {
            Ok(fit) => WindowOutcome::Fit(fit),
            Err(_) => WindowOutcome::Skipped {
                window_mid_time: 0.5 * (series.time_of(start) + series.time_of(start + w - 1)),
            },
        };
        out.push(outcome);
    }
    Ok(out)
}

/// One link's trace with its optional calibration.
#[derive(Debug, Clone, Copy)]
pub struct LinkInput<'a> {
    pub series: &'a CsiSeries,
    pub calibration: Option<&'a PhaseOffsetMatrix>,
}

/// Result of localizing a set of time-aligned traces.
#[derive(Debug, Clone)]
pub struct Localization {
    pub estimates: Vec<LocationEstimate>,
    pub per_link: Vec<Vec<WindowOutcome>>,
    /// Number of windows on the shared time base.
    pub windows: usize,
}

impl Localization {
    /// Fraction of windows without a position estimate.
    pub fn gap_fraction(&self) -> f64 {
        if self.windows == 0 {
            return 0.0;
        }
        1.0 - self.estimates.len() as f64 / self.windows as f64
    }
}

pub fn localize(
    links: &[LinkInput<'_>],
    area: &SensingArea,
    config: &PipelineConfig,
) -> Result<Localization, LocalizeError> {
    if links.len() < 2 {
        return Err(LocalizeError::TooFewLinks(links.len()));
    }
    let first = links[0].series;
    for l in &links[1..] {
        if l.series.len() != first.len() {
            return Err(LocalizeError::Misaligned("sample count"));
        }
        if l.series.sample_rate() != first.sample_rate() {
            return Err(LocalizeError::Misaligned("sample rate"));
        }
        if l.series.start_time() != first.start_time() {
            return Err(LocalizeError::Misaligned("start time"));
        }
    }
    let per_link = links
        .iter()
        .map(|l| fit_link(l.series, l.calibration, config))
        .collect::<Result<Vec<_>, _>>()?;
    let fits: Vec<LinkFits> = links
        .iter()
        .zip(&per_link)
        .map(|(l, outcomes)| LinkFits {
            link: *l.series.link(),
            subcarriers: l.series.subcarriers().clone(),
            fits: outcomes
                .iter()
                .filter_map(|o| match o {
                    WindowOutcome::Fit(f) => Some(*f),
                    WindowOutcome::Skipped { .. } => None,
                })
                .collect(),
        })
        .collect();
    Ok(Localization {
        estimates: track(&fits, area),
        windows: config.window.window_starts(first.len()).count(),
        per_link,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fresnel::{Point2D, SubcarrierSet};
    use crate::locate::localization_error;
    use crate::scenario::{standard_walks, Deployment};
    use crate::sim::{
        make_trajectory, simulate_free_space, NoiseSpec, ReflectorSpec, Trajectory, TrajectorySpec,
    };

    fn traces(traj: &Trajectory) -> (Deployment, Vec<CsiSeries>) {
        let dep = Deployment::corners(6.0).unwrap();
        let subs = SubcarrierSet::wifi_40mhz();
        let series = dep
            .links
            .iter()
            .map(|l| {
                simulate_free_space(l, &subs, traj, &ReflectorSpec::default(), &NoiseSpec::noiseless(), 500.0)
                    .unwrap()
            })
            .collect();
        (dep, series)
    }

    fn inputs(series: &[CsiSeries]) -> Vec<LinkInput<'_>> {
        series.iter().map(|s| LinkInput { series: s, calibration: None }).collect()
    }

    fn diagonal() -> Trajectory {
        let (_, shape) = standard_walks(&SensingArea::square(6.0).unwrap()).swap_remove(0);
        make_trajectory(&TrajectorySpec::new(shape, 1.0).with_duration(3.0)).unwrap()
    }

    #[test]
    fn one_link_is_not_enough() {
        let (dep, series) = traces(&diagonal());
        let err = localize(&inputs(&series[..1]), &dep.area, &PipelineConfig::default()).unwrap_err();
        assert_eq!(err, LocalizeError::TooFewLinks(1));
    }

    #[test]
    fn walk_is_tracked() {
        let traj = diagonal();
        let (dep, series) = traces(&traj);
        let out = localize(&inputs(&series), &dep.area, &PipelineConfig::default()).unwrap();
        assert!(out.gap_fraction() < 0.2, "gaps {}", out.gap_fraction());
        let mut err: Vec<f64> = out
            .estimates
            .iter()
            .map(|e| localization_error(&e.position, &traj.position_at(e.time), 0.2))
            .collect();
        err.sort_by(f64::total_cmp);
        assert!(err[err.len() / 2] < 0.1);
    }

    #[test]
    fn stationary_target_gives_no_estimates() {
        let p = Point2D::new(2.0, 3.0);
        let traj = Trajectory::new(vec![(0.0, p), (1.0, p)]).unwrap();
        let (dep, series) = traces(&traj);
        let out = localize(&inputs(&series), &dep.area, &PipelineConfig::default()).unwrap();
        assert!(out.estimates.is_empty());
        assert_eq!(out.gap_fraction(), 1.0);
    }

    #[test]
    fn dead_link_leaves_two() {
        let traj = diagonal();
        let (dep, mut series) = traces(&traj);
        let s = &series[2];
        let flat = vec![vec![1.0; s.len()]; s.subcarriers().count()];
        series[2] = CsiSeries::new(500.0, s.start_time(), flat, s.subcarriers().clone(), *s.link()).unwrap();
        let out = localize(&inputs(&series), &dep.area, &PipelineConfig::default()).unwrap();
        assert!(!out.estimates.is_empty());
        assert!(out.estimates.iter().all(|e| e.contributing_links == 2));
        assert!(out.per_link[2].iter().all(|o| matches!(o, WindowOutcome::Skipped { .. })));
    }

    #[test]
    fn misaligned_links_are_rejected() {
        let (dep, series) = traces(&diagonal());
        let shifted = CsiSeries::new(
            500.0,
            series[1].start_time() + 0.01,
            series[1].rows().to_vec(),
            series[1].subcarriers().clone(),
            *series[1].link(),
        )
        .unwrap();
        let links = [inputs(&series)[0], LinkInput { series: &shifted, calibration: None }];
        assert_eq!(
            localize(&links, &dep.area, &PipelineConfig::default()).unwrap_err(),
            LocalizeError::Misaligned("start time")
        );
    }
}
