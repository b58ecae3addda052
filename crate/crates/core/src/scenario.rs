//! The reference deployment: one transmitter and three receivers on the
//! corners of a square sensing area, and the walks used to exercise it.

use crate::fresnel::{LinkGeometry, Point2D};
use crate::locate::{LocateError, SensingArea};
use crate::sim::PathShape;

#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub area: SensingArea,
    pub links: Vec<LinkGeometry>,
}

impl Deployment {
    /// Tx at the origin corner, one receiver on each remaining corner.
    pub fn corners(side: f64) -> Result<Self, LocateError> {
        let area = SensingArea::square(side)?;
        let tx = Point2D::new(0.0, 0.0);
        let links = [(side, 0.0), (0.0, side), (side, side)]
            .iter()
            .map(|&(x, y)| LinkGeometry::new(tx, Point2D::new(x, y)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| LocateError::Area(e.to_string()))?;
        Ok(Self { area, links })
    }
}

/// Named walks inside `area`, laid out on a 6 x 6 grid stretched to fit.
pub fn standard_walks(area: &SensingArea) -> Vec<(&'static str, PathShape)> {
    let (sx, sy) = (area.width() / 6.0, area.height() / 6.0);
    let p = |x: f64, y: f64| Point2D::new(area.min_x + x * sx, area.min_y + y * sy);
    vec![
        (
            "diagonal",
            PathShape::Diagonal {
                from: p(1.0, 5.0),
                to: p(5.0, 1.0),
            },
        ),
        (
            "oblique",
            PathShape::Diagonal {
                from: p(1.0, 2.0),
                to: p(5.0, 4.5),
            },
        ),
        (
            "rectangle",
            PathShape::Rectangle {
                min: p(1.5, 1.5),
                max: p(4.5, 4.5),
            },
        ),
    ]
}
