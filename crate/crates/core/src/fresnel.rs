//! Fresnel zone geometry for a single transmitter/receiver link.
//!
//! Every quantity here lives in the horizontal plane: the link is a pair of
//! foci, the zones are confocal elliptical annuli, and a reflector is
//! characterised by its reflected path length `d_hat = |p - tx| + |p - rx|`.
//! The excess over the line-of-sight length `d0` drives all phases:
//!
//! ```text
//! phase(lambda, d_hat)        = 2 pi (d_hat - d0) / lambda
//! phase_diff(d_hat, f_a, f_b) = 2 pi (d_hat - d0) (f_b - f_a) / c
//! ```

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Slack allowed when checking `d_hat >= d0`, to absorb rounding in callers
/// that compute `d_hat` from coordinates on the LoS segment.
const LOS_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("coordinates must be finite")]
    NonFinite,
    #[error("transmitter and receiver coincide")]
    DegenerateLink,
    #[error("reflected path length {d_hat} m is shorter than the LoS length {d0} m")]
    BelowLineOfSight { d_hat: f64, d0: f64 },
    #[error("frequencies must satisfy 0 < f_a < f_b (got {f_a} Hz, {f_b} Hz)")]
    FrequencyOrder { f_a: f64, f_b: f64 },
    #[error("invalid subcarrier layout: {0}")]
    Subcarriers(String),
    #[error("wavelength must be positive and finite (got {0})")]
    Wavelength(f64),
    #[error("zone number must be at least 1")]
    ZoneNumber,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(&self, other: &Point2D, t: f64) -> Point2D {
        Point2D::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }
}

/// One transmitter/receiver pair. `d0` is always the exact tx-rx distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkGeometry {
    tx: Point2D,
    rx: Point2D,
    d0: f64,
}

impl LinkGeometry {
    pub fn new(tx: Point2D, rx: Point2D) -> Result<Self, GeometryError> {
        if !tx.is_finite() || !rx.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        let d0 = tx.distance(&rx);
        if d0 <= 0.0 {
            return Err(GeometryError::DegenerateLink);
        }
        Ok(Self { tx, rx, d0 })
    }

    pub fn tx(&self) -> Point2D {
        self.tx
    }

    pub fn rx(&self) -> Point2D {
        self.rx
    }

    /// Line-of-sight length in meters.
    pub fn d0(&self) -> f64 {
        self.d0
    }

    pub fn midpoint(&self) -> Point2D {
        self.tx.lerp(&self.rx, 0.5)
    }

    /// Unit normal to the tx->rx direction, rotated counter-clockwise.
    pub fn normal(&self) -> Point2D {
        let ux = (self.rx.x - self.tx.x) / self.d0;
        let uy = (self.rx.y - self.tx.y) / self.d0;
        Point2D::new(-uy, ux)
    }
}

impl<'de> Deserialize<'de> for LinkGeometry {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            tx: Point2D,
            rx: Point2D,
        }
        let raw = Raw::deserialize(deserializer)?;
        LinkGeometry::new(raw.tx, raw.rx).map_err(serde::de::Error::custom)
    }
}

/// The `K` OFDM subcarriers of one channel, symmetric around `center_freq`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcarrierSet {
    center_freq: f64,
    spacing: f64,
    freqs: Vec<f64>,
}

impl SubcarrierSet {
    pub fn new(center_freq: f64, spacing: f64, count: usize) -> Result<Self, GeometryError> {
        if count < 2 {
            return Err(GeometryError::Subcarriers(format!(
                "need at least 2 subcarriers, got {count}"
            )));
        }
        if !(center_freq.is_finite() && spacing.is_finite()) || spacing <= 0.0 {
            return Err(GeometryError::Subcarriers(
                "center frequency and spacing must be finite, spacing positive".into(),
            ));
        }
        let half = (count - 1) as f64 / 2.0;
        let freqs: Vec<f64> = (0..count)
            .map(|k| center_freq + (k as f64 - half) * spacing)
            .collect();
        if freqs[0] <= 0.0 {
            return Err(GeometryError::Subcarriers(
                "lowest subcarrier frequency must be positive".into(),
            ));
        }
        Ok(Self {
            center_freq,
            spacing,
            freqs,
        })
    }

    /// 30 subcarriers spaced 1.25 MHz around 5.745 GHz (a 40 MHz channel).
    pub fn wifi_40mhz() -> Self {
        Self::new(5.745e9, 1.25e6, 30).expect("static layout is valid")
    }

    pub fn center_freq(&self) -> f64 {
        self.center_freq
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn count(&self) -> usize {
        self.freqs.len()
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn freq(&self, k: usize) -> f64 {
        self.freqs[k]
    }

    pub fn wavelength(&self, k: usize) -> f64 {
        SPEED_OF_LIGHT / self.freqs[k]
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        self.freqs.iter().map(|f| SPEED_OF_LIGHT / f).collect()
    }

    /// Widest frequency gap between any two subcarriers.
    pub fn max_gap(&self) -> f64 {
        self.freqs[self.freqs.len() - 1] - self.freqs[0]
    }

    /// Number of unordered subcarrier pairs, `K (K - 1) / 2`.
    pub fn pair_count(&self) -> usize {
        let k = self.count();
        k * (k - 1) / 2
    }
}

/// An unwrapped Fresnel phase in radians.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FresnelPhase(pub f64);

impl FresnelPhase {
    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_d_hat(d_hat: f64, link: &LinkGeometry) -> Result<f64, GeometryError> {
    if !d_hat.is_finite() || d_hat < link.d0 - LOS_SLACK {
        return Err(GeometryError::BelowLineOfSight { d_hat, d0: link.d0 });
    }
    Ok((d_hat - link.d0).max(0.0))
}

fn check_wavelength(lambda: f64) -> Result<(), GeometryError> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(GeometryError::Wavelength(lambda))
    }
}

/// Transmitter -> `p` -> receiver path length.
pub fn reflected_path_length(p: &Point2D, link: &LinkGeometry) -> f64 {
    p.distance(&link.tx) + p.distance(&link.rx)
}

pub fn fresnel_phase(
    d_hat: f64,
    link: &LinkGeometry,
    lambda: f64,
) -> Result<FresnelPhase, GeometryError> {
    check_wavelength(lambda)?;
    let excess = check_d_hat(d_hat, link)?;
    Ok(FresnelPhase(2.0 * PI * excess / lambda))
}

/// Free-space Fresnel phase difference between subcarriers `f_a < f_b`.
pub fn theoretical_phase_diff(
    d_hat: f64,
    link: &LinkGeometry,
    f_a: f64,
    f_b: f64,
) -> Result<f64, GeometryError> {
    if !(f_a > 0.0 && f_b > f_a && f_b.is_finite()) {
        return Err(GeometryError::FrequencyOrder { f_a, f_b });
    }
    let excess = check_d_hat(d_hat, link)?;
    Ok(2.0 * PI * excess * (f_b - f_a) / SPEED_OF_LIGHT)
}

/// 1-based Fresnel zone containing a reflector with path length `d_hat`.
/// A point exactly on boundary `n` belongs to zone `n + 1`.
pub fn zone_index(d_hat: f64, link: &LinkGeometry, lambda: f64) -> Result<u64, GeometryError> {
    check_wavelength(lambda)?;
    let excess = check_d_hat(d_hat, link)?;
    Ok((2.0 * excess / lambda).floor() as u64 + 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatchUp {
    /// Boundary index on the lower-frequency (longer wavelength) subcarrier.
    pub zone_of_lower_freq: u64,
    /// Boundary index on the higher-frequency subcarrier; always one more.
    pub zone_of_higher_freq: u64,
    /// Path excess `d_hat - d0` where the two boundaries meet.
    pub path_excess: f64,
}

/// Where the boundaries of two subcarriers' zone families first coincide,
/// `i * lambda_a = (i + 1) * lambda_b`. The phase difference of the pair is
/// monotonic in the zone index only below this excess.
pub fn catch_up_zone(f_a: f64, f_b: f64) -> Result<CatchUp, GeometryError> {
    if !(f_a > 0.0 && f_b > f_a && f_b.is_finite()) {
        return Err(GeometryError::FrequencyOrder { f_a, f_b });
    }
    let i = (f_a / (f_b - f_a)).round().max(1.0);
    let lambda_a = SPEED_OF_LIGHT / f_a;
    Ok(CatchUp {
        zone_of_lower_freq: i as u64,
        zone_of_higher_freq: i as u64 + 1,
        path_excess: i * lambda_a / 2.0,
    })
}

/// Point on the perpendicular bisector (left of tx->rx) lying on zone
/// boundary `n`, i.e. with `d_hat = d0 + n lambda / 2`.
pub fn zone_crossing_point(
    link: &LinkGeometry,
    n: u64,
    lambda: f64,
) -> Result<Point2D, GeometryError> {
    if n == 0 {
        return Err(GeometryError::ZoneNumber);
    }
    check_wavelength(lambda)?;
    let d_hat = link.d0 + n as f64 * lambda / 2.0;
    let offset = bisector_offset(link, d_hat)?;
    let mid = link.midpoint();
    let nrm = link.normal();
    Ok(Point2D::new(mid.x + offset * nrm.x, mid.y + offset * nrm.y))
}

/// Distance from the link midpoint, along the bisector, of the point whose
/// reflected path length is `d_hat`.
pub fn bisector_offset(link: &LinkGeometry, d_hat: f64) -> Result<f64, GeometryError> {
    check_d_hat(d_hat, link)?;
    Ok(((d_hat * d_hat - link.d0 * link.d0) / 4.0).max(0.0).sqrt())
}
