//! Reflector trajectories: timestamped positions along simple walking paths.

use super::SimError;
use crate::fresnel::{LinkGeometry, Point2D};
use serde::{Deserialize, Serialize};

pub const MIN_SPEED: f64 = 0.1;
pub const MAX_SPEED: f64 = 3.0;
/// Lowest allowed sampling rate of generated trajectories.
pub const MIN_TRAJECTORY_RATE: f64 = 50.0;

/// Timestamped reflector positions with strictly increasing times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, Point2D)>", into = "Vec<(f64, Point2D)>")]
pub struct Trajectory {
    samples: Vec<(f64, Point2D)>,
}

impl Trajectory {
    pub fn new(samples: Vec<(f64, Point2D)>) -> Result<Self, SimError> {
        if samples.len() < 2 {
            return Err(SimError::Trajectory("need at least 2 samples".into()));
        }
        for (t, p) in &samples {
            if !t.is_finite() || !p.is_finite() {
                return Err(SimError::Trajectory("non-finite sample".into()));
            }
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(SimError::Trajectory(
                "sample times must be strictly increasing".into(),
            ));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[(f64, Point2D)] {
        &self.samples
    }

    pub fn start_time(&self) -> f64 {
        self.samples[0].0
    }

    pub fn end_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].0
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    /// Total travelled distance along the polyline.
    pub fn length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| w[0].1.distance(&w[1].1))
            .sum()
    }

    /// Linearly interpolated position; clamps outside the covered time span.
    pub fn position_at(&self, t: f64) -> Point2D {
        let s = &self.samples;
        if t <= s[0].0 {
            return s[0].1;
        }
        if t >= s[s.len() - 1].0 {
            return s[s.len() - 1].1;
        }
        let hi = s.partition_point(|(ts, _)| *ts <= t);
        let (t0, p0) = s[hi - 1];
        let (t1, p1) = s[hi];
        p0.lerp(&p1, (t - t0) / (t1 - t0))
    }

    /// Shifts every timestamp by `offset` seconds.
    pub fn shifted(&self, offset: f64) -> Trajectory {
        Trajectory {
            samples: self.samples.iter().map(|(t, p)| (t + offset, *p)).collect(),
        }
    }
}

impl TryFrom<Vec<(f64, Point2D)>> for Trajectory {
    type Error = SimError;

    fn try_from(samples: Vec<(f64, Point2D)>) -> Result<Self, Self::Error> {
        Trajectory::new(samples)
    }
}

impl From<Trajectory> for Vec<(f64, Point2D)> {
    fn from(t: Trajectory) -> Self {
        t.samples
    }
}

/// Walking path shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathShape {
    /// Straight segment, typically parallel to one side of the sensing area.
    Linear { from: Point2D, to: Point2D },
    /// Straight segment that is not axis-aligned.
    Diagonal { from: Point2D, to: Point2D },
    /// Closed axis-aligned loop `min -> (max.x, min.y) -> max -> (min.x, max.y) -> min`.
    Rectangle { min: Point2D, max: Point2D },
    /// Walk along the perpendicular bisector of a link, between two
    /// distances from the LoS (positive side of the link normal).
    PerpendicularBisectorSweep {
        link: LinkGeometry,
        from_offset: f64,
        to_offset: f64,
    },
}

impl PathShape {
    fn vertices(&self) -> Result<(Vec<Point2D>, bool), SimError> {
        match self {
            PathShape::Linear { from, to } => Ok((vec![*from, *to], false)),
            PathShape::Diagonal { from, to } => {
                if from.x == to.x || from.y == to.y {
                    return Err(SimError::Trajectory(
                        "diagonal path must not be axis-aligned".into(),
                    ));
                }
                Ok((vec![*from, *to], false))
            }
            PathShape::Rectangle { min, max } => {
                if max.x <= min.x || max.y <= min.y {
                    return Err(SimError::Trajectory(
                        "rectangle needs max strictly above min".into(),
                    ));
                }
                Ok((
                    vec![
                        *min,
                        Point2D::new(max.x, min.y),
                        *max,
                        Point2D::new(min.x, max.y),
                        *min,
                    ],
                    true,
                ))
            }
            PathShape::PerpendicularBisectorSweep {
                link,
                from_offset,
                to_offset,
            } => {
                let mid = link.midpoint();
                let n = link.normal();
                let at = |o: f64| Point2D::new(mid.x + o * n.x, mid.y + o * n.y);
                Ok((vec![at(*from_offset), at(*to_offset)], false))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub shape: PathShape,
    /// Walking speed, m/s.
    pub speed: f64,
    /// Total walking time. `None` traverses the shape once; longer durations
    /// loop closed shapes and walk open ones back and forth.
    #[serde(default)]
    pub duration: Option<f64>,
    /// Position sampling rate, Hz.
    #[serde(default = "default_trajectory_rate")]
    pub sample_rate: f64,
}

fn default_trajectory_rate() -> f64 {
    100.0
}

impl TrajectorySpec {
    pub fn new(shape: PathShape, speed: f64) -> Self {
        Self {
            shape,
            speed,
            duration: None,
            sample_rate: default_trajectory_rate(),
        }
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = Some(duration);
        self
    }
}

/// Samples `spec.shape` at constant speed, starting at t = 0.
pub fn make_trajectory(spec: &TrajectorySpec) -> Result<Trajectory, SimError> {
    if !(MIN_SPEED..=MAX_SPEED).contains(&spec.speed) {
        return Err(SimError::Trajectory(format!(
            "speed {} m/s outside [{MIN_SPEED}, {MAX_SPEED}]",
            spec.speed
        )));
    }
    if !(spec.sample_rate.is_finite() && spec.sample_rate >= MIN_TRAJECTORY_RATE) {
        return Err(SimError::Trajectory(format!(
            "trajectory sample rate must be at least {MIN_TRAJECTORY_RATE} Hz"
        )));
    }
    let (vertices, closed) = spec.shape.vertices()?;
    if vertices.iter().any(|p| !p.is_finite()) {
        return Err(SimError::Trajectory("non-finite path vertex".into()));
    }
    // cumulative arc length at each vertex
    let mut cum = vec![0.0];
    for w in vertices.windows(2) {
        cum.push(cum[cum.len() - 1] + w[0].distance(&w[1]));
    }
    let total = cum[cum.len() - 1];
    if !(total > 1e-9) {
        return Err(SimError::Trajectory("path has zero length".into()));
    }
    let duration = match spec.duration {
        None => total / spec.speed,
        Some(d) if d.is_finite() && d > 0.0 => d,
        Some(d) => return Err(SimError::Trajectory(format!("invalid duration {d}"))),
    };

    let point_at_arc = |s: f64| -> Point2D {
        let s = s.clamp(0.0, total);
        let seg = cum.partition_point(|c| *c <= s).clamp(1, vertices.len() - 1);
        let (s0, s1) = (cum[seg - 1], cum[seg]);
        let frac = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        vertices[seg - 1].lerp(&vertices[seg], frac)
    };
    let position = |t: f64| -> Point2D {
        let s = spec.speed * t;
        if closed {
            point_at_arc(s.rem_euclid(total))
        } else {
            // back and forth
            let phase = s.rem_euclid(2.0 * total);
            point_at_arc(if phase <= total { phase } else { 2.0 * total - phase })
        }
    };

    let dt = 1.0 / spec.sample_rate;
    let steps = (duration / dt).floor() as usize;
    let mut samples: Vec<(f64, Point2D)> = (0..=steps)
        .map(|i| {
            let t = i as f64 * dt;
            (t, position(t))
        })
        .collect();
    if duration - steps as f64 * dt > 1e-9 {
        samples.push((duration, position(duration)));
    }
    Trajectory::new(samples)
}
