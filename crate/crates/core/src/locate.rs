//! 2D localization by intersecting confocal ellipses.
//!
//! A fitted path length `d_hat` confines the reflector to the ellipse with
//! foci at the link's transmitter and receiver and major axis `d_hat`. Two
//! links give up to four intersection points; a third link (or the previous
//! position) picks among them.

use crate::fit::FitResult;
use crate::fresnel::{reflected_path_length, LinkGeometry, Point2D, SubcarrierSet, SPEED_OF_LIGHT};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

/// Half-width of a typical human torso; errors inside it count as zero.
pub const BODY_RADIUS: f64 = 0.20;
/// Floor on the 1-sigma path-length uncertainty of a constraint.
pub const SIGMA_FLOOR: f64 = 0.02;

const SEED_GRID: usize = 16;
const NEWTON_TOL: f64 = 1e-6;
const NEWTON_MAX_ITER: usize = 50;
const DEDUP_RADIUS: f64 = 0.01;
const ROOT_RESIDUAL: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocateError {
    #[error("need at least 2 constraints, got {0}")]
    TooFewConstraints(usize),
    #[error("invalid constraint: {0}")]
    Constraint(String),
    #[error("invalid sensing area: {0}")]
    Area(String),
    #[error("no pairwise ellipse intersection inside the sensing area")]
    NoCandidate,
}

/// Axis-aligned rectangular sensing area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingArea {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl SensingArea {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self, LocateError> {
        let a = Self {
            min_x,
            min_y,
            max_x,
            max_y,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn square(side: f64) -> Result<Self, LocateError> {
        Self::new(0.0, 0.0, side, side)
    }

    pub fn validate(&self) -> Result<(), LocateError> {
        let finite = [self.min_x, self.min_y, self.max_x, self.max_y]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.max_x <= self.min_x || self.max_y <= self.min_y {
            return Err(LocateError::Area(format!("{self:?} has no positive area")));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Point2D) -> bool {
        const EDGE: f64 = 1e-9;
        p.x >= self.min_x - EDGE
            && p.x <= self.max_x + EDGE
            && p.y >= self.min_y - EDGE
            && p.y <= self.max_y + EDGE
    }

    pub fn center(&self) -> Point2D {
        Point2D::new(0.5 * (self.min_x + self.max_x), 0.5 * (self.min_y + self.max_y))
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseConstraint {
    pub link: LinkGeometry,
    pub d_hat: f64,
    /// 1-sigma uncertainty of `d_hat`, meters.
    pub sigma: f64,
}

impl EllipseConstraint {
    pub fn new(link: LinkGeometry, d_hat: f64, sigma: f64) -> Result<Self, LocateError> {
        if !(d_hat.is_finite() && d_hat >= link.d0() - 1e-9) {
            return Err(LocateError::Constraint(format!(
                "d_hat {d_hat} below LoS length {}",
                link.d0()
            )));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(LocateError::Constraint(format!("sigma {sigma} must be positive")));
        }
        Ok(Self {
            link,
            d_hat: d_hat.max(link.d0()),
            sigma,
        })
    }

    /// Constraint from a window fit; sigma converts the phase residual to
    /// path length at the widest gap.
    pub fn from_fit(
        link: LinkGeometry,
        subcarriers: &SubcarrierSet,
        fit: &FitResult,
    ) -> Result<Self, LocateError> {
        let sigma = (fit.rms_residual * SPEED_OF_LIGHT / (TAU * subcarriers.max_gap())).max(SIGMA_FLOOR);
        Self::new(link, fit.d_hat, sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocationEstimate {
    pub position: Point2D,
    pub time: f64,
    /// Root-sum-square of the ellipse residuals, meters.
    pub residual: f64,
    pub contributing_links: usize,
}

/// Signed path-length residual: positive outside the ellipse.
pub fn ellipse_residual(p: &Point2D, c: &EllipseConstraint) -> f64 {
    reflected_path_length(p, &c.link) - c.d_hat
}

/// Gradient of [`ellipse_residual`]: the sum of unit vectors from each focus.
pub fn ellipse_residual_gradient(p: &Point2D, c: &EllipseConstraint) -> (f64, f64) {
    let unit = |f: Point2D| {
        let (dx, dy) = (p.x - f.x, p.y - f.y);
        let r = dx.hypot(dy);
        if r < 1e-12 {
            (0.0, 0.0)
        } else {
            (dx / r, dy / r)
        }
    };
    let (ax, ay) = unit(c.link.tx());
    let (bx, by) = unit(c.link.rx());
    (ax + bx, ay + by)
}

/// Cylinder error metric: distance beyond `body_radius`, never negative.
pub fn localization_error(estimate: &Point2D, truth: &Point2D, body_radius: f64) -> f64 {
    (estimate.distance(truth) - body_radius).max(0.0)
}

fn newton_two(start: Point2D, a: &EllipseConstraint, b: &EllipseConstraint) -> Option<Point2D> {
    let mut p = start;
    let norm2 = |p: &Point2D| ellipse_residual(p, a).powi(2) + ellipse_residual(p, b).powi(2);
    let mut f2 = norm2(&p);
    for _ in 0..NEWTON_MAX_ITER {
        let (ra, rb) = (ellipse_residual(&p, a), ellipse_residual(&p, b));
        if ra.abs().max(rb.abs()) < NEWTON_TOL * 1e-3 {
            break;
        }
        let (gax, gay) = ellipse_residual_gradient(&p, a);
        let (gbx, gby) = ellipse_residual_gradient(&p, b);
        let det = gax * gby - gay * gbx;
        let (dx, dy) = if det.abs() > 1e-10 {
            ((-ra * gby + rb * gay) / det, (ra * gbx - rb * gax) / det)
        } else {
            // near-tangent: steepest descent on the squared residual
            let gx = ra * gax + rb * gbx;
            let gy = ra * gay + rb * gby;
            let g2 = gx * gx + gy * gy;
            if g2 < 1e-30 {
                return None;
            }
            (-f2 * gx / g2, -f2 * gy / g2)
        };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let q = Point2D::new(p.x + step * dx, p.y + step * dy);
            let fq = norm2(&q);
            if fq < f2 {
                p = q;
                f2 = fq;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let converged =
        ellipse_residual(&p, a).abs() < NEWTON_TOL && ellipse_residual(&p, b).abs() < NEWTON_TOL;
    converged.then_some(p)
}

/// All points inside `area` lying on both ellipses, found by damped Newton
/// iteration from a 16 x 16 grid of seeds. Roots closer than 1 cm are merged.
pub fn intersect_two(
    a: &EllipseConstraint,
    b: &EllipseConstraint,
    area: &SensingArea,
) -> Result<Vec<Point2D>, LocateError> {
    area.validate()?;
    let same_foci = |x: &LinkGeometry, y: &LinkGeometry| {
        (x.tx() == y.tx() && x.rx() == y.rx()) || (x.tx() == y.rx() && x.rx() == y.tx())
    };
    if same_foci(&a.link, &b.link) {
        return Err(LocateError::Constraint("the two links share both foci".into()));
    }
    let mut roots: Vec<Point2D> = Vec::new();
    for i in 0..SEED_GRID {
        for j in 0..SEED_GRID {
            let seed = Point2D::new(
                area.min_x + (i as f64 + 0.5) * area.width() / SEED_GRID as f64,
                area.min_y + (j as f64 + 0.5) * area.height() / SEED_GRID as f64,
            );
            let Some(p) = newton_two(seed, a, b) else {
                continue;
            };
            if !area.contains(&p)
                || ellipse_residual(&p, a).abs() >= ROOT_RESIDUAL
                || ellipse_residual(&p, b).abs() >= ROOT_RESIDUAL
            {
                continue;
            }
            if roots.iter().all(|r| r.distance(&p) > DEDUP_RADIUS) {
                roots.push(p);
            }
        }
    }
    Ok(roots)
}

fn weighted_cost(p: &Point2D, constraints: &[EllipseConstraint]) -> f64 {
    constraints
        .iter()
        .map(|c| (ellipse_residual(p, c) / c.sigma).powi(2))
        .sum()
}

fn rss(p: &Point2D, constraints: &[EllipseConstraint]) -> f64 {
    constraints
        .iter()
        .map(|c| ellipse_residual(p, c).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Levenberg-Marquardt on the `1 / sigma^2` weighted squared residuals.
/// Only steps that lower the objective are taken.
fn refine(start: Point2D, constraints: &[EllipseConstraint]) -> Point2D {
    let mut p = start;
    let mut cost = weighted_cost(&p, constraints);
    let mut lambda = 1e-3;
    for _ in 0..100 {
        let (mut h00, mut h01, mut h11, mut g0, mut g1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for c in constraints {
            let w = 1.0 / (c.sigma * c.sigma);
            let r = ellipse_residual(&p, c);
            let (jx, jy) = ellipse_residual_gradient(&p, c);
            h00 += w * jx * jx;
            h01 += w * jx * jy;
            h11 += w * jy * jy;
            g0 += w * jx * r;
            g1 += w * jy * r;
        }
        let mut improved = false;
        for _ in 0..20 {
            let (a00, a11) = (h00 * (1.0 + lambda) + 1e-12, h11 * (1.0 + lambda) + 1e-12);
            let det = a00 * a11 - h01 * h01;
            if det.abs() < 1e-300 {
                lambda *= 10.0;
                continue;
            }
            let dx = -(a11 * g0 - h01 * g1) / det;
            let dy = -(a00 * g1 - h01 * g0) / det;
            let q = Point2D::new(p.x + dx, p.y + dy);
            let cq = weighted_cost(&q, constraints);
            if cq < cost {
                let small = (dx * dx + dy * dy).sqrt() < 1e-10;
                p = q;
                cost = cq;
                lambda = (lambda * 0.3).max(1e-9);
                improved = !small;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    p
}

/// Fuses two or more ellipse constraints into one position.
///
/// With two constraints the intersection nearest the prior (or the area
/// centre) is taken. With three or more, every pairwise intersection is
/// scored by its total absolute residual over all constraints, and the best
/// is refined by weighted least squares.
pub fn fuse(
    constraints: &[EllipseConstraint],
    area: &SensingArea,
    prior: Option<Point2D>,
    time: f64,
) -> Result<LocationEstimate, LocateError> {
    if constraints.len() < 2 {
        return Err(LocateError::TooFewConstraints(constraints.len()));
    }
    let anchor = prior.unwrap_or_else(|| area.center());
    let mut candidates = Vec::new();
    for i in 0..constraints.len() {
        for j in i + 1..constraints.len() {
            // parallel links with identical foci carry no crossing information
            if let Ok(points) = intersect_two(&constraints[i], &constraints[j], area) {
                candidates.extend(points);
            }
        }
    }
    if candidates.is_empty() {
        return Err(LocateError::NoCandidate);
    }

    let position = if constraints.len() == 2 {
        *candidates
            .iter()
            .min_by(|p, q| p.distance(&anchor).total_cmp(&q.distance(&anchor)))
            .expect("non-empty")
    } else {
        let total_abs = |p: &Point2D| -> f64 {
            constraints.iter().map(|c| ellipse_residual(p, c).abs()).sum()
        };
        let best = candidates
            .iter()
            .min_by(|p, q| {
                let (tp, tq) = (total_abs(p), total_abs(q));
                if (tp - tq).abs() > 1e-9 {
                    tp.total_cmp(&tq)
                } else {
                    p.distance(&anchor).total_cmp(&q.distance(&anchor))
                }
            })
            .expect("non-empty");
        refine(*best, constraints)
    };
    Ok(LocationEstimate {
        position,
        time,
        residual: rss(&position, constraints),
        contributing_links: constraints.len(),
    })
}

/// One link's per-window fits, in time order.
#[derive(Debug, Clone)]
pub struct LinkFits {
    pub link: LinkGeometry,
    pub subcarriers: SubcarrierSet,
    pub fits: Vec<FitResult>,
}

/// Turns per-window fits of several links into a position track.
///
/// Windows are matched across links by their timestamps. Each window with at
/// least two confident fits yields an estimate stamped at the window
/// midpoint, using the previous estimate as the prior; other windows are
/// skipped.
pub fn track(links: &[LinkFits], area: &SensingArea) -> Vec<LocationEstimate> {
    const TIME_MATCH: f64 = 1e-6;
    let mut times: Vec<f64> = links
        .iter()
        .flat_map(|l| l.fits.iter().map(|f| f.window_mid_time()))
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < TIME_MATCH);

    let mut out: Vec<LocationEstimate> = Vec::new();
    for t in times {
        let constraints: Vec<EllipseConstraint> = links
            .iter()
            .filter_map(|l| {
                let fit = l
                    .fits
                    .iter()
                    .find(|f| (f.window_mid_time() - t).abs() < TIME_MATCH)?;
                if fit.low_confidence {
                    return None;
                }
                EllipseConstraint::from_fit(l.link, &l.subcarriers, fit).ok()
            })
            .collect();
        if constraints.len() < 2 {
            continue;
        }
        let prior = out.last().map(|e| e.position);
        if let Ok(est) = fuse(&constraints, area, prior, t) {
            out.push(est);
        }
    }
    out
}
