//! Fresnel phase differences from CSI amplitude windows, and the
//! static-multipath phase-offset calibration.
//!
//! Within a short window every subcarrier sees the same periodic waveform,
//! shifted in time by an amount proportional to its Fresnel phase. The phase
//! difference of a pair is recovered as `2 pi * time_shift / period`.

use crate::fresnel::{reflected_path_length, theoretical_phase_diff, SubcarrierSet};
use crate::sim::{CsiSeries, Trajectory};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// Relative variance below which a window counts as flat.
const FLAT_VARIANCE: f64 = 1e-12;
/// A spectral peak must beat the median non-DC magnitude by this factor.
const PEAK_TO_MEDIAN: f64 = 3.0;
const ZERO_PAD_FACTOR: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("invalid window configuration: {0}")]
    Window(String),
    #[error("window [{start}, {start}+{len}) exceeds series of {available} samples")]
    OutOfRange {
        start: usize,
        len: usize,
        available: usize,
    },
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("period must be positive (got {0})")]
    Period(f64),
    #[error("calibration trajectory spans {zones:.1} Fresnel zones, need at least 10")]
    ShortCalibrationPath { zones: f64 },
    #[error("pair ({a}, {b}) has {windows} valid calibration windows, need at least {needed}")]
    InsufficientWindows {
        a: usize,
        b: usize,
        windows: usize,
        needed: usize,
    },
    #[error("calibration matrix has no entry for pair ({0}, {1})")]
    MissingPair(usize, usize),
    #[error("malformed offset matrix: {0}")]
    Matrix(String),
}

/// Why a window produced no estimate.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum Degenerate {
    #[error("window has near-zero variance")]
    Flat,
    #[error("no dominant periodicity")]
    NoDominantPeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowConfig {
    window_samples: usize,
    hop_samples: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_samples: 25,
            hop_samples: 25,
        }
    }
}

impl WindowConfig {
    pub const MIN_WINDOW: usize = 8;

    pub fn new(window_samples: usize, hop_samples: usize) -> Result<Self, PipelineError> {
        if window_samples < Self::MIN_WINDOW {
            return Err(PipelineError::Window(format!(
                "window of {window_samples} samples is shorter than {}",
                Self::MIN_WINDOW
            )));
        }
        if hop_samples == 0 || hop_samples > window_samples {
            return Err(PipelineError::Window(format!(
                "hop {hop_samples} must be in 1..={window_samples}"
            )));
        }
        Ok(Self {
            window_samples,
            hop_samples,
        })
    }

    /// Window and hop from durations in seconds at `sample_rate`.
    pub fn from_seconds(window: f64, hop: f64, sample_rate: f64) -> Result<Self, PipelineError> {
        let w = (window * sample_rate).round();
        let h = (hop * sample_rate).round();
        if !(w.is_finite() && h.is_finite() && w >= 0.0 && h >= 0.0) {
            return Err(PipelineError::Window("non-finite duration".into()));
        }
        Self::new(w as usize, h as usize)
    }

    pub fn window_samples(&self) -> usize {
        self.window_samples
    }

    pub fn hop_samples(&self) -> usize {
        self.hop_samples
    }

    /// Largest lag searched by the time-shift estimator, `w / 2 - 1`.
    pub fn max_shift(&self) -> usize {
        self.window_samples / 2 - 1
    }

    /// Start indices of every complete window in a series of `len` samples.
    pub fn window_starts(&self, len: usize) -> impl Iterator<Item = usize> {
        let hop = self.hop_samples;
        let last = len.checked_sub(self.window_samples);
        (0..).map(move |i| i * hop).take_while(move |s| last.is_some_and(|l| *s <= l))
    }
}

/// One subcarrier pair's phase difference in one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseDiffObservation {
    /// Lower-frequency subcarrier index.
    pub a: usize,
    /// Higher-frequency subcarrier index, `b > a`.
    pub b: usize,
    pub window_end_time: f64,
    /// Window length in seconds; the window covers
    /// `[window_end_time - duration, window_end_time]`.
    pub window_duration: f64,
    /// Wrapped to `[0, 2 pi)`.
    pub phase_diff: f64,
    /// Peak correlation, clipped to `[0, 1]`.
    pub quality: f64,
    /// Calibration offset already subtracted from `phase_diff` (0 if raw).
    pub applied_offset: f64,
}

impl PhaseDiffObservation {
    pub fn window_mid_time(&self) -> f64 {
        self.window_end_time - self.window_duration / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeShift {
    /// Positive when `series_b` lags `series_a`, i.e. `b(t) ~ a(t - delta_t)`.
    pub delta_t: f64,
    pub rho: f64,
}

/// Wraps an angle to `[0, 2 pi)`.
pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_signed(x: f64) -> f64 {
    let r = wrap_phase(x);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

fn is_flat(x: &[f64]) -> bool {
    let (mean, var) = mean_var(x);
    let scale = mean * mean + x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    !(var > FLAT_VARIANCE * scale) || !var.is_finite()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Lag in `[-max_shift, max_shift]` maximising the Pearson correlation of
/// `a(t)` with `b(t + lag)` over the overlapping samples, refined to
/// sub-sample resolution with a parabola through the peak and its neighbours.
/// `delta_t` is positive when `b`'s waveform occurs later than `a`'s.
pub fn estimate_time_shift(
    series_a: &[f64],
    series_b: &[f64],
    max_shift: usize,
    sample_rate: f64,
) -> Result<Result<TimeShift, Degenerate>, PipelineError> {
    let w = series_a.len();
    if series_b.len() != w {
        return Err(PipelineError::LengthMismatch(w, series_b.len()));
    }
    if w < WindowConfig::MIN_WINDOW || 2 * max_shift >= w {
        return Err(PipelineError::Window(format!(
            "max shift {max_shift} must be below half the window ({w})"
        )));
    }
    if is_flat(series_a) || is_flat(series_b) {
        return Ok(Err(Degenerate::Flat));
    }
    let m = max_shift as isize;
    let corr: Vec<f64> = (-m..=m)
        .map(|lag| {
            // a[i] against b[i + lag]
            let (a_start, b_start, len) = if lag >= 0 {
                (0, lag as usize, w - lag as usize)
            } else {
                ((-lag) as usize, 0, w - (-lag) as usize)
            };
            pearson(
                &series_a[a_start..a_start + len],
                &series_b[b_start..b_start + len],
            )
        })
        .collect();
    // an edge lag is only a peak if no interior local maximum exists
    let interior = (1..corr.len().saturating_sub(1))
        .filter(|&i| corr[i] >= corr[i - 1] && corr[i] >= corr[i + 1])
        .max_by(|&x, &y| corr[x].total_cmp(&corr[y]));
    let best = interior.unwrap_or_else(|| {
        (0..corr.len())
            .max_by(|&x, &y| corr[x].total_cmp(&corr[y]))
            .expect("at least one lag")
    });
    let peak = corr[best];
    let mut lag = best as f64 - m as f64;
    let mut rho = peak;
    if best > 0 && best + 1 < corr.len() {
        let (y0, y1, y2) = (corr[best - 1], peak, corr[best + 1]);
        let denom = y0 - 2.0 * y1 + y2;
        if denom < 0.0 {
            let delta = (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5);
            lag += delta;
            rho = y1 - 0.25 * (y0 - y2) * delta;
        }
    }
    Ok(Ok(TimeShift {
        delta_t: lag / sample_rate,
        rho: rho.clamp(0.0, 1.0),
    }))
}

/// Dominant period of a window in seconds.
///
/// The window is de-meaned, Hann-tapered and zero-padded to at least 16x its
/// length; the non-DC magnitude peak is located with quadratic interpolation
/// over adjacent bins and then polished by maximising the energy captured by
/// a least-squares sinusoid (plus offset) fit around that frequency.
pub fn estimate_period(
    series: &[f64],
    sample_rate: f64,
) -> Result<Result<f64, Degenerate>, PipelineError> {
    let w = series.len();
    if w < WindowConfig::MIN_WINDOW {
        return Err(PipelineError::Window(format!(
            "period estimation needs at least {} samples",
            WindowConfig::MIN_WINDOW
        )));
    }
    if is_flat(series) {
        return Ok(Err(Degenerate::Flat));
    }
    let (mean, _) = mean_var(series);
    let n_fft = (w * ZERO_PAD_FACTOR).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let hann = 0.5 - 0.5 * (TAU * i as f64 / (w - 1) as f64).cos();
            Complex::new((x - mean) * hann, 0.0)
        })
        .collect();
    buf.resize(n_fft, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    let half = n_fft / 2;
    let mags: Vec<f64> = buf[..=half].iter().map(|c| c.norm()).collect();
    let (peak_bin, &peak) = mags[1..]
        .iter()
        .enumerate()
        .map(|(i, m)| (i + 1, m))
        .max_by(|x, y| x.1.total_cmp(y.1))
        .expect("non-empty spectrum");
    let mut sorted = mags[1..].to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    if !(peak > PEAK_TO_MEDIAN * median) {
        return Ok(Err(Degenerate::NoDominantPeak));
    }
    let mut bin = peak_bin as f64;
    if peak_bin < half {
        let (y0, y1, y2) = (mags[peak_bin - 1], peak, mags[peak_bin + 1]);
        let denom = y0 - 2.0 * y1 + y2;
        if denom < 0.0 {
            bin += (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5);
        }
    }
    let coarse = bin * sample_rate / n_fft as f64;
    // centred and normalised so the fit energy is not dominated by the offset
    let scale = series.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
    let centred: Vec<f64> = series.iter().map(|x| (x - mean) / scale).collect();
    let freq = refine_frequency(&centred, sample_rate, coarse);
    if !(freq > 0.0 && freq.is_finite()) {
        return Ok(Err(Degenerate::NoDominantPeak));
    }
    Ok(Ok(1.0 / freq))
}

/// Energy of the least-squares projection of `x` onto
/// `{1, cos(2 pi f t), sin(2 pi f t)}`.
fn sinusoid_fit_energy(x: &[f64], sample_rate: f64, freq: f64) -> f64 {
    let n = x.len();
    let mid = (n - 1) as f64 / 2.0;
    // normal equations for (offset, cos, sin), centred time for conditioning
    let mut g = [[0.0f64; 3]; 3];
    let mut r = [0.0f64; 3];
    for (i, &v) in x.iter().enumerate() {
        let arg = TAU * freq * (i as f64 - mid) / sample_rate;
        let basis = [1.0, arg.cos(), arg.sin()];
        for p in 0..3 {
            r[p] += basis[p] * v;
            for q in 0..3 {
                g[p][q] += basis[p] * basis[q];
            }
        }
    }
    match solve3(g, r) {
        Some(c) => c[0] * r[0] + c[1] * r[1] + c[2] * r[2],
        None => f64::NEG_INFINITY,
    }
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

fn refine_frequency(x: &[f64], sample_rate: f64, coarse: f64) -> f64 {
    let nyquist = sample_rate / 2.0;
    let lo = (0.5 * coarse).max(sample_rate / (4.0 * x.len() as f64));
    let hi = (1.5 * coarse).min(nyquist * 0.98);
    if !(hi > lo) {
        return coarse;
    }
    const GRID: usize = 48;
    let step = (hi - lo) / GRID as f64;
    let energy = |f: f64| sinusoid_fit_energy(x, sample_rate, f);
    let best = (0..=GRID)
        .map(|i| {
            let f = lo + i as f64 * step;
            (f, energy(f))
        })
        .max_by(|p, q| p.1.total_cmp(&q.1))
        .map_or(coarse, |(f, _)| f);
    // golden-section search on the bracketing cell
    let (mut a, mut b) = ((best - step).max(lo), (best + step).min(hi));
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let (mut fc, mut fd) = (energy(c), energy(d));
    for _ in 0..40 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = energy(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = energy(d);
        }
    }
    (a + b) / 2.0
}

/// `2 pi * delta_t / period`, wrapped to `[0, 2 pi)`.
pub fn raw_phase_diff(delta_t: f64, period: f64) -> Result<f64, PipelineError> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(PipelineError::Period(period));
    }
    Ok(wrap_phase(TAU * delta_t / period))
}

/// Per-window phase differences of all `K (K - 1) / 2` subcarrier pairs.
///
/// The series are processed as power `|H|^2`, which is exactly sinusoidal in
/// the Fresnel phase. Every subcarrier's period is estimated; since the
/// period scales as `1 / f_k`, the estimates are pooled into one normalised
/// rate (median of `1 / (T_k f_k)`) and a pair's period is evaluated at its
/// higher-frequency subcarrier, whose waveform the time shift is measured
/// against. Flat or aperiodic windows yield no observations.
pub fn compute_all_pairs(
    series: &CsiSeries,
    config: &WindowConfig,
    window_start: usize,
) -> Result<Vec<PhaseDiffObservation>, PipelineError> {
    let w = config.window_samples();
    check_span(series, window_start, w)?;
    let power = power_window(series, window_start, w, 1);
    let fs = series.sample_rate();
    let Some(rate) = pooled_rate(&power, fs, series.subcarriers())? else {
        return Ok(Vec::new());
    };
    pair_observations(&power, fs, rate, config.max_shift(), series, window_start, w)
}

/// Fewest fluctuation cycles a window must hold before its phase
/// differences are trusted by [`compute_all_pairs_extended`].
pub const MIN_CYCLES: f64 = 1.0;

/// Like [`compute_all_pairs`], but a window holding fewer than
/// [`MIN_CYCLES`] cycles of the fluctuation is widened around the same
/// midpoint by doubling, up to `max_samples`. A window widened by a factor
/// `m` is box-averaged over groups of `m` samples back to the nominal length,
/// which delays every subcarrier equally and leaves phase differences intact.
/// Returns an empty list when even the widest window is too short or the
/// target is static.
pub fn compute_all_pairs_extended(
    series: &CsiSeries,
    config: &WindowConfig,
    window_start: usize,
    max_samples: usize,
) -> Result<Vec<PhaseDiffObservation>, PipelineError> {
    let w = config.window_samples();
    check_span(series, window_start, w)?;
    let fs = series.sample_rate();
    let centre2 = 2 * window_start + w;
    let mut factor = 1;
    while w * factor <= max_samples.max(w) && w * factor <= series.len() {
        let len = w * factor;
        let start = (centre2.saturating_sub(len) / 2).min(series.len() - len);
        let power = power_window(series, start, len, factor);
        let fs_eff = fs / factor as f64;
        let Some(rate) = pooled_rate(&power, fs_eff, series.subcarriers())? else {
            return Ok(Vec::new());
        };
        let cycles = len as f64 / fs * rate * series.subcarriers().center_freq();
        if cycles >= MIN_CYCLES {
            return pair_observations(&power, fs_eff, rate, config.max_shift(), series, start, len);
        }
        factor *= 2;
    }
    Ok(Vec::new())
}

fn check_span(series: &CsiSeries, start: usize, len: usize) -> Result<(), PipelineError> {
    if start + len > series.len() {
        return Err(PipelineError::OutOfRange {
            start,
            len,
            available: series.len(),
        });
    }
    Ok(())
}

/// Power `|H|^2` of `len` samples from `start`, averaged over consecutive
/// groups of `factor` samples.
fn power_window(series: &CsiSeries, start: usize, len: usize, factor: usize) -> Vec<Vec<f64>> {
    series
        .rows()
        .iter()
        .map(|row| {
            row[start..start + len]
                .chunks_exact(factor)
                .map(|g| g.iter().map(|a| a * a).sum::<f64>() / factor as f64)
                .collect()
        })
        .collect()
}

/// Median over subcarriers of `1 / (T_k f_k)`; `None` when no subcarrier
/// shows a dominant periodicity.
fn pooled_rate(
    power: &[Vec<f64>],
    fs: f64,
    subs: &SubcarrierSet,
) -> Result<Option<f64>, PipelineError> {
    let mut rates = Vec::with_capacity(power.len());
    for (k, p) in power.iter().enumerate() {
        if is_flat(p) {
            continue;
        }
        if let Ok(period) = estimate_period(p, fs)? {
            rates.push(1.0 / (period * subs.freq(k)));
        }
    }
    if rates.is_empty() {
        return Ok(None);
    }
    rates.sort_by(f64::total_cmp);
    Ok(Some(median_sorted(&rates)))
}

fn pair_observations(
    power: &[Vec<f64>],
    fs: f64,
    rate: f64,
    max_shift: usize,
    series: &CsiSeries,
    start: usize,
    len: usize,
) -> Result<Vec<PhaseDiffObservation>, PipelineError> {
    let subs = series.subcarriers();
    let window_end_time = series.time_of(start + len - 1);
    let window_duration = (len - 1) as f64 / series.sample_rate();
    let flat: Vec<bool> = power.iter().map(|p| is_flat(p)).collect();
    let mut out = Vec::with_capacity(subs.pair_count());
    for a in 0..power.len() {
        if flat[a] {
            continue;
        }
        for b in a + 1..power.len() {
            if flat[b] {
                continue;
            }
            let period = 1.0 / (rate * subs.freq(b));
            // lags beyond half a period only alias onto shorter overlaps
            let half_period = (0.5 * period * fs).ceil() as usize + 1;
            let Ok(shift) =
                estimate_time_shift(&power[b], &power[a], max_shift.min(half_period), fs)?
            else {
                continue;
            };
            out.push(PhaseDiffObservation {
                a,
                b,
                window_end_time,
                window_duration,
                phase_diff: raw_phase_diff(shift.delta_t, period)?,
                quality: shift.rho,
                applied_offset: 0.0,
            });
        }
    }
    Ok(out)
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Phase observations of every complete window of `series`.
pub fn windowed_observations(
    series: &CsiSeries,
    config: &WindowConfig,
) -> Result<Vec<Vec<PhaseDiffObservation>>, PipelineError> {
    config
        .window_starts(series.len())
        .map(|start| compute_all_pairs(series, config, start))
        .collect()
}

/// Antisymmetric `K x K` matrix of Fresnel phase offsets; entry `(a, b)` is
/// the constant added by static multipath to the observed phase difference
/// of pair `(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOffsetMatrix {
    offsets: Vec<Vec<f64>>,
    subcarriers: SubcarrierSet,
}

impl PhaseOffsetMatrix {
    pub fn zeros(subcarriers: &SubcarrierSet) -> Self {
        let k = subcarriers.count();
        Self {
            offsets: vec![vec![0.0; k]; k],
            subcarriers: subcarriers.clone(),
        }
    }

    /// Builds a matrix from explicit entries, checking shape, zero diagonal
    /// and antisymmetry (modulo 2 pi).
    pub fn from_rows(offsets: Vec<Vec<f64>>, subcarriers: SubcarrierSet) -> Result<Self, PipelineError> {
        let k = subcarriers.count();
        if offsets.len() != k || offsets.iter().any(|r| r.len() != k) {
            return Err(PipelineError::Matrix(format!("expected {k}x{k} entries")));
        }
        for a in 0..k {
            if offsets[a].iter().any(|v| !v.is_finite()) {
                return Err(PipelineError::Matrix("non-finite entry".into()));
            }
            if wrap_signed(offsets[a][a]).abs() > 1e-9 {
                return Err(PipelineError::Matrix(format!("diagonal entry ({a}, {a}) non-zero")));
            }
            for b in a + 1..k {
                if wrap_signed(offsets[a][b] + offsets[b][a]).abs() > 1e-9 {
                    return Err(PipelineError::Matrix(format!(
                        "entries ({a}, {b}) and ({b}, {a}) are not antisymmetric"
                    )));
                }
            }
        }
        Ok(Self {
            offsets,
            subcarriers,
        })
    }

    /// Matrix induced by per-subcarrier offsets: entry `(a, b) = eps_b - eps_a`.
    pub fn from_subcarrier_offsets(eps: &[f64], subcarriers: &SubcarrierSet) -> Self {
        let k = subcarriers.count();
        let mut m = Self::zeros(subcarriers);
        for a in 0..k {
            for b in a + 1..k {
                let v = wrap_signed(eps[b] - eps[a]);
                m.offsets[a][b] = v;
                m.offsets[b][a] = -v;
            }
        }
        m
    }

    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        self.offsets.get(a).and_then(|r| r.get(b)).copied()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.offsets
    }

    pub fn subcarriers(&self) -> &SubcarrierSet {
        &self.subcarriers
    }

    pub fn max_abs(&self) -> f64 {
        self.offsets
            .iter()
            .flatten()
            .map(|v| wrap_signed(*v).abs())
            .fold(0.0, f64::max)
    }
}

/// Estimates the offset matrix from a trace of a reflector moving along a
/// known path. Each window contributes `wrap(observed - theoretical)` per
/// pair, with the observation sign-corrected for the direction of travel;
/// per-pair estimates are combined by their circular mean.
pub fn estimate_offsets(
    calib_series: &CsiSeries,
    calib_trajectory: &Trajectory,
    config: &WindowConfig,
) -> Result<PhaseOffsetMatrix, PipelineError> {
    const MIN_WINDOWS: usize = 5;
    let link = calib_series.link();
    let subs = calib_series.subcarriers();
    let k = subs.count();
    let d_at = |t: f64| reflected_path_length(&calib_trajectory.position_at(t), link);

    let (mut d_min, mut d_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for n in 0..calib_series.len() {
        let d = d_at(calib_series.time_of(n));
        d_min = d_min.min(d);
        d_max = d_max.max(d);
    }
    let zones = 2.0 * (d_max - d_min) / subs.wavelength(k / 2);
    if !(zones >= 10.0) {
        return Err(PipelineError::ShortCalibrationPath { zones });
    }

    let mut sums = vec![vec![Complex::new(0.0, 0.0); k]; k];
    let mut counts = vec![vec![0usize; k]; k];
    let w = config.window_samples();
    for start in config.window_starts(calib_series.len()) {
        let obs = compute_all_pairs(calib_series, config, start)?;
        if obs.is_empty() {
            continue;
        }
        let t_start = calib_series.time_of(start);
        let t_end = calib_series.time_of(start + w - 1);
        let (d_start, d_end) = (d_at(t_start), d_at(t_end));
        let direction = if d_end >= d_start { 1.0 } else { -1.0 };
        let d_mid = d_at(0.5 * (t_start + t_end)).max(link.d0());
        for o in obs {
            let theory = theoretical_phase_diff(d_mid, link, subs.freq(o.a), subs.freq(o.b))
                .expect("ordered pair above LoS");
            let eps = direction * o.phase_diff - theory;
            sums[o.a][o.b] += Complex::from_polar(1.0, eps);
            counts[o.a][o.b] += 1;
        }
    }

    let mut offsets = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in a + 1..k {
            if counts[a][b] < MIN_WINDOWS {
                return Err(PipelineError::InsufficientWindows {
                    a,
                    b,
                    windows: counts[a][b],
                    needed: MIN_WINDOWS,
                });
            }
            let v = wrap_signed(sums[a][b].arg());
            offsets[a][b] = v;
            offsets[b][a] = -v;
        }
    }
    Ok(PhaseOffsetMatrix {
        offsets,
        subcarriers: subs.clone(),
    })
}

/// Subtracts each pair's offset; the subtracted value is kept in
/// `applied_offset`.
pub fn apply_calibration(
    obs: &[PhaseDiffObservation],
    matrix: &PhaseOffsetMatrix,
) -> Result<Vec<PhaseDiffObservation>, PipelineError> {
    obs.iter()
        .map(|o| {
            let eps = matrix.get(o.a, o.b).ok_or(PipelineError::MissingPair(o.a, o.b))?;
            Ok(PhaseDiffObservation {
                phase_diff: wrap_phase(o.phase_diff - eps),
                applied_offset: o.applied_offset + eps,
                ..*o
            })
        })
        .collect()
}

/// Inverse of [`apply_calibration`].
pub fn remove_calibration(
    obs: &[PhaseDiffObservation],
    matrix: &PhaseOffsetMatrix,
) -> Result<Vec<PhaseDiffObservation>, PipelineError> {
    obs.iter()
        .map(|o| {
            let eps = matrix.get(o.a, o.b).ok_or(PipelineError::MissingPair(o.a, o.b))?;
            Ok(PhaseDiffObservation {
                phase_diff: wrap_phase(o.phase_diff + eps),
                applied_offset: o.applied_offset - eps,
                ..*o
            })
        })
        .collect()
}
