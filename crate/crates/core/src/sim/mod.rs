//! Forward channel model: per-subcarrier CSI amplitude of one link while a
//! single reflector moves through the field.
//!
//! For subcarrier `k` the received signal is a static vector (LoS plus any
//! static multipath) plus the reflector's dynamic vector, whose phase relative
//! to the static one is the Fresnel phase `2 pi (d_hat - d0) / lambda_k`
//! shifted by the static-multipath offset `eps_k`:
//!
//! ```text
//! |H_k|^2 = A_k^2 + h^2 + 2 A_k h cos(phi_k(d_hat) + eps_k)
//! ```
//!
//! The simulator stores the amplitude `|H_k|`.

mod trajectory;

pub use trajectory::{
    make_trajectory, PathShape, Trajectory, TrajectorySpec, MAX_SPEED, MIN_SPEED,
    MIN_TRAJECTORY_RATE,
};

use crate::fresnel::{reflected_path_length, LinkGeometry, SubcarrierSet, SPEED_OF_LIGHT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid trajectory: {0}")]
    Trajectory(String),
    #[error("reflected path length {d_hat} m below LoS length {d0} m")]
    BelowLineOfSight { d_hat: f64, d0: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("{what} has {got} entries, expected {expected}")]
    Length {
        what: &'static str,
        got: usize,
        expected: usize,
    },
}

/// Per-subcarrier amplitude time series of one link at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiSeries {
    sample_rate: f64,
    start_time: f64,
    /// `amplitudes[k][n]`: subcarrier `k`, sample `n`.
    amplitudes: Vec<Vec<f64>>,
    subcarriers: SubcarrierSet,
    link: LinkGeometry,
}

impl CsiSeries {
    pub fn new(
        sample_rate: f64,
        start_time: f64,
        amplitudes: Vec<Vec<f64>>,
        subcarriers: SubcarrierSet,
        link: LinkGeometry,
    ) -> Result<Self, SimError> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(SimError::Parameter(format!("sample rate {sample_rate}")));
        }
        if !start_time.is_finite() {
            return Err(SimError::Parameter("start time must be finite".into()));
        }
        if amplitudes.len() != subcarriers.count() {
            return Err(SimError::Length {
                what: "amplitude rows",
                got: amplitudes.len(),
                expected: subcarriers.count(),
            });
        }
        let n = amplitudes[0].len();
        if n == 0 {
            return Err(SimError::Parameter("series has no samples".into()));
        }
        for row in &amplitudes {
            if row.len() != n {
                return Err(SimError::Length {
                    what: "amplitude row",
                    got: row.len(),
                    expected: n,
                });
            }
            if row.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                return Err(SimError::Parameter(
                    "amplitudes must be finite and non-negative".into(),
                ));
            }
        }
        Ok(Self {
            sample_rate,
            start_time,
            amplitudes,
            subcarriers,
            link,
        })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    /// Number of time samples.
    pub fn len(&self) -> usize {
        self.amplitudes[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subcarriers(&self) -> &SubcarrierSet {
        &self.subcarriers
    }

    pub fn link(&self) -> &LinkGeometry {
        &self.link
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.amplitudes[k]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.amplitudes
    }

    pub fn time_of(&self, n: usize) -> f64 {
        self.start_time + n as f64 / self.sample_rate
    }

    /// Multiplies every sample by `factor`.
    pub fn scaled(&self, factor: f64) -> CsiSeries {
        let mut out = self.clone();
        for row in &mut out.amplitudes {
            row.iter_mut().for_each(|a| *a *= factor);
        }
        out
    }
}

/// Magnitude model for the reflector's dynamic vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectorSpec {
    /// Relative magnitude at `d_hat = d0`, in (0, 1].
    pub reflection_gain: f64,
    /// 0 keeps the magnitude constant; 1-2 model physical spreading loss.
    pub path_loss_exponent: f64,
}

impl Default for ReflectorSpec {
    fn default() -> Self {
        Self {
            reflection_gain: 0.3,
            path_loss_exponent: 0.0,
        }
    }
}

impl ReflectorSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.reflection_gain > 0.0 && self.reflection_gain <= 1.0) {
            return Err(SimError::Parameter(format!(
                "reflection gain {} outside (0, 1]",
                self.reflection_gain
            )));
        }
        if !(self.path_loss_exponent.is_finite() && self.path_loss_exponent >= 0.0) {
            return Err(SimError::Parameter(format!(
                "path loss exponent {} must be >= 0",
                self.path_loss_exponent
            )));
        }
        Ok(())
    }
}

/// Static-multipath environment: per-subcarrier magnitude of the static
/// vector and the Fresnel phase offset `eps(lambda_k)` it introduces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipathSpec {
    pub static_amp: Vec<f64>,
    pub static_phase: Vec<f64>,
}

/// One static NLoS path, described by its length excess over the LoS and
/// its magnitude relative to the LoS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticPath {
    pub excess: f64,
    pub gain: f64,
}

impl MultipathSpec {
    /// Unit static vector with zero offset on every subcarrier.
    pub fn free_space(subcarriers: &SubcarrierSet) -> Self {
        let k = subcarriers.count();
        Self {
            static_amp: vec![1.0; k],
            static_phase: vec![0.0; k],
        }
    }

    /// Static vector `1 + sum_p g_p exp(-j 2 pi L_p f / c)` relative to the
    /// LoS. Its angle is the offset `eps` seen by every subcarrier.
    pub fn from_static_paths(subcarriers: &SubcarrierSet, paths: &[StaticPath]) -> Self {
        let (mut amp, mut phase) = (Vec::new(), Vec::new());
        for &f in subcarriers.freqs() {
            let (mut re, mut im) = (1.0, 0.0);
            for p in paths {
                let theta = -2.0 * PI * p.excess * f / SPEED_OF_LIGHT;
                re += p.gain * theta.cos();
                im += p.gain * theta.sin();
            }
            amp.push(re.hypot(im));
            phase.push(im.atan2(re));
        }
        Self {
            static_amp: amp,
            static_phase: phase,
        }
    }

    /// Random static environment of `n_paths` reflections, 1-15 m excess and
    /// 0.2-0.8 relative gain.
    pub fn random(subcarriers: &SubcarrierSet, n_paths: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let paths: Vec<StaticPath> = (0..n_paths)
            .map(|_| StaticPath {
                excess: rng.gen_range(1.0..15.0),
                gain: rng.gen_range(0.2..0.8),
            })
            .collect();
        Self::from_static_paths(subcarriers, &paths)
    }

    /// Independent uniform offsets in [-pi, pi) with unit static magnitude.
    pub fn random_offsets(subcarriers: &SubcarrierSet, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new(-PI, PI);
        Self {
            static_amp: vec![1.0; subcarriers.count()],
            static_phase: (0..subcarriers.count()).map(|_| dist.sample(&mut rng)).collect(),
        }
    }

    pub fn is_free_space(&self) -> bool {
        self.static_amp.iter().all(|a| *a == 1.0) && self.static_phase.iter().all(|p| *p == 0.0)
    }

    fn validate(&self, k: usize) -> Result<(), SimError> {
        if self.static_amp.len() != k {
            return Err(SimError::Length {
                what: "static_amp",
                got: self.static_amp.len(),
                expected: k,
            });
        }
        if self.static_phase.len() != k {
            return Err(SimError::Length {
                what: "static_phase",
                got: self.static_phase.len(),
                expected: k,
            });
        }
        if self.static_amp.iter().any(|a| !(a.is_finite() && *a >= 0.0))
            || self.static_phase.iter().any(|p| !p.is_finite())
        {
            return Err(SimError::Parameter(
                "static amplitudes must be >= 0 and phases finite".into(),
            ));
        }
        Ok(())
    }
}

/// Additive white Gaussian noise on the amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub amplitude_sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            amplitude_sigma: 0.0,
            seed: 0,
        }
    }

    /// Noise level for a given SNR, taking the signal to be the RMS of the
    /// reflector-induced fluctuation, `gain / sqrt(2)`, at unit static magnitude.
    pub fn from_snr_db(snr_db: f64, reflector: &ReflectorSpec, seed: u64) -> Self {
        let signal_rms = reflector.reflection_gain / 2f64.sqrt();
        Self {
            amplitude_sigma: signal_rms * 10f64.powf(-snr_db / 20.0),
            seed,
        }
    }
}

/// Magnitude of the reflector's dynamic vector relative to the LoS.
pub fn dynamic_amplitude(
    d_hat: f64,
    link: &LinkGeometry,
    reflector: &ReflectorSpec,
) -> Result<f64, SimError> {
    reflector.validate()?;
    let d0 = link.d0();
    if !(d_hat.is_finite() && d_hat >= d0 - 1e-9) {
        return Err(SimError::BelowLineOfSight { d_hat, d0 });
    }
    let d_hat = d_hat.max(d0);
    Ok(reflector.reflection_gain * (d0 / d_hat).powf(reflector.path_loss_exponent))
}

pub fn simulate_free_space(
    link: &LinkGeometry,
    subcarriers: &SubcarrierSet,
    trajectory: &Trajectory,
    reflector: &ReflectorSpec,
    noise: &NoiseSpec,
    sample_rate: f64,
) -> Result<CsiSeries, SimError> {
    let multipath = MultipathSpec::free_space(subcarriers);
    simulate_multipath(link, subcarriers, trajectory, reflector, &multipath, noise, sample_rate)
}

/// Samples the trajectory at `sample_rate` (linear position interpolation)
/// and synthesises every subcarrier's amplitude.
pub fn simulate_multipath(
    link: &LinkGeometry,
    subcarriers: &SubcarrierSet,
    trajectory: &Trajectory,
    reflector: &ReflectorSpec,
    multipath: &MultipathSpec,
    noise: &NoiseSpec,
    sample_rate: f64,
) -> Result<CsiSeries, SimError> {
    reflector.validate()?;
    let k_count = subcarriers.count();
    multipath.validate(k_count)?;
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(SimError::Parameter(format!("sample rate {sample_rate}")));
    }
    if !(noise.amplitude_sigma.is_finite() && noise.amplitude_sigma >= 0.0) {
        return Err(SimError::Parameter("noise sigma must be >= 0".into()));
    }

    let start = trajectory.start_time();
    let n = (trajectory.duration() * sample_rate + 1e-9).floor() as usize + 1;
    let wavenumbers: Vec<f64> = subcarriers
        .freqs()
        .iter()
        .map(|f| 2.0 * PI * f / SPEED_OF_LIGHT)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let normal = if noise.amplitude_sigma > 0.0 {
        Some(Normal::new(0.0, noise.amplitude_sigma).expect("sigma checked"))
    } else {
        None
    };

    let mut amplitudes = vec![Vec::with_capacity(n); k_count];
    for i in 0..n {
        let t = start + i as f64 / sample_rate;
        let p = trajectory.position_at(t);
        let d_hat = reflected_path_length(&p, link);
        let h = dynamic_amplitude(d_hat, link, reflector)?;
        let excess = (d_hat - link.d0()).max(0.0);
        for (k, row) in amplitudes.iter_mut().enumerate() {
            let a = multipath.static_amp[k];
            let phi = wavenumbers[k] * excess + multipath.static_phase[k];
            let power = (a * a + h * h + 2.0 * a * h * phi.cos()).max(0.0);
            let mut amp = power.sqrt();
            if let Some(dist) = &normal {
                amp += dist.sample(&mut rng);
            }
            row.push(amp.max(0.0));
        }
    }
    CsiSeries::new(sample_rate, start, amplitudes, subcarriers.clone(), *link)
}
