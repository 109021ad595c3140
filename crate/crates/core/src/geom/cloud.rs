use nalgebra::Vector3;

use crate::error::{LpfError, Result};

pub type Vec3 = Vector3<f64>;

/// A set of 3D sample points with a cached bounding-box diagonal.
///
/// Coordinates are always finite; constructors reject NaN/inf.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
    bbox_diagonal: f64,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(LpfError::NonFinite(i));
        }
        let bbox_diagonal = bbox_diagonal(&points);
        Ok(Self {
            points,
            bbox_diagonal,
        })
    }

    pub fn empty() -> Self {
        Self {
            points: Vec::new(),
            bbox_diagonal: 0.0,
        }
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bbox_diagonal(&self) -> f64 {
        self.bbox_diagonal
    }

    /// Axis-aligned bounding box as `(min, max)`; `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        bounds(&self.points)
    }

    /// Replaces all positions, recomputing the cached diagonal.
    pub fn set_points(&mut self, points: Vec<Vec3>) -> Result<()> {
        *self = Self::new(points)?;
        Ok(())
    }

    pub fn push(&mut self, p: Vec3) -> Result<()> {
        if !p.iter().all(|c| c.is_finite()) {
            return Err(LpfError::NonFinite(self.points.len()));
        }
        self.points.push(p);
        self.bbox_diagonal = bbox_diagonal(&self.points);
        Ok(())
    }

    /// Uniformly scales the cloud about the origin.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            points: self.points.iter().map(|p| p * factor).collect(),
            bbox_diagonal: self.bbox_diagonal * factor.abs(),
        }
    }
}

fn bounds(points: &[Vec3]) -> Option<(Vec3, Vec3)> {
    let first = points.first()?;
    let mut lo = *first;
    let mut hi = *first;
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    Some((lo, hi))
}

fn bbox_diagonal(points: &[Vec3]) -> f64 {
    bounds(points).map(|(lo, hi)| (hi - lo).norm()).unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_tracks_mutation() {
        let mut c = PointCloud::new(vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)]).unwrap();
        assert_eq!(c.bbox_diagonal(), 1.0);
        c.push(Vec3::new(1.0, 2.0, 2.0)).unwrap();
        assert_eq!(c.bbox_diagonal(), 3.0);
        c.set_points(vec![Vec3::new(5.0, 5.0, 5.0)]).unwrap();
        assert_eq!(c.bbox_diagonal(), 0.0);
    }

    #[test]
    fn rejects_non_finite() {
        let err = PointCloud::new(vec![Vec3::zeros(), Vec3::new(f64::NAN, 0.0, 0.0)]);
        assert!(matches!(err, Err(LpfError::NonFinite(1))));
        let mut c = PointCloud::empty();
        assert!(c.push(Vec3::new(0.0, f64::INFINITY, 0.0)).is_err());
    }
}
