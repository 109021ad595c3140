//! Planar sampling patterns and the radius / count / spacing relations.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LpfError, Result};
use crate::geom::Vec3;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    /// Regular grid with `grid_n` steps across the diameter.
    Grid { grid_n: usize },
    Random { seed: u64 },
}

/// `M` planar offsets `u_i` (zero `z`) inside the disk of radius `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    offsets: Vec<Vec3>,
    radius: f64,
    spacing: f64,
    kind: PatternKind,
}

impl Pattern {
    /// Builds a pattern from explicit offsets. Offsets must be planar and
    /// inside the closed disk of radius `radius`.
    pub fn from_offsets(offsets: Vec<Vec3>, radius: f64, kind: PatternKind) -> Result<Self> {
        if offsets.is_empty() {
            return Err(LpfError::InvalidArgument("pattern needs at least one offset".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(LpfError::InvalidArgument(format!("invalid pattern radius {radius}")));
        }
        for u in &offsets {
            if u.z != 0.0 || u.norm() > radius || !u.iter().all(|c| c.is_finite()) {
                return Err(LpfError::InvalidArgument(format!(
                    "offset {u:?} is not a planar point of the radius-{radius} disk"
                )));
            }
        }
        let spacing = spacing_for(radius, offsets.len());
        Ok(Self {
            offsets,
            radius,
            spacing,
            kind,
        })
    }

    pub fn offsets(&self) -> &[Vec3] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Estimated distance between pattern points, `τ_s = r / √M`.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn kind(&self) -> PatternKind {
        self.kind
    }

    /// Distance between neighboring grid nodes; `None` for random patterns.
    pub fn grid_step(&self) -> Option<f64> {
        match self.kind {
            PatternKind::Grid { grid_n } => Some(2.0 * self.radius / grid_n as f64),
            PatternKind::Random { .. } => None,
        }
    }
}

/// Regular grid pattern.
///
/// Grid nodes sit at `(2k − n)·r/n` for `k = 0..=n` on both axes, i.e. `n`
/// steps across the diameter with a node at the origin when `n` is even.
/// Nodes strictly inside the radius-`r` disk are kept; the test is done in
/// integer arithmetic so the count does not depend on `r`. This yields
/// `M = 193, 793, 3205` for `n = 16, 32, 64`.
pub fn grid_pattern(grid_n: usize, r: f64) -> Result<Pattern> {
    if grid_n < 2 {
        return Err(LpfError::InvalidArgument(format!("grid_n must be at least 2, got {grid_n}")));
    }
    let n = grid_n as i64;
    let step = r / grid_n as f64;
    let mut offsets = Vec::new();
    for l in 0..=n {
        for k in 0..=n {
            let (a, b) = (2 * k - n, 2 * l - n);
            if a * a + b * b < n * n {
                offsets.push(Vec3::new(a as f64 * step, b as f64 * step, 0.0));
            }
        }
    }
    Pattern::from_offsets(offsets, r, PatternKind::Grid { grid_n })
}

/// `m` offsets drawn uniformly in the disk of radius `r`.
pub fn random_pattern(m: usize, r: f64, seed: u64) -> Result<Pattern> {
    if m == 0 {
        return Err(LpfError::InvalidArgument("pattern needs at least one point".into()));
    }
    let mut rng = rng::stream(seed, rng::STREAM_PATTERN);
    let offsets = (0..m)
        .map(|_| {
            let rho = r * rng.random::<f64>().sqrt();
            let theta = TAU * rng.random::<f64>();
            // clamp guards the last-ulp overshoot of rho·cos / rho·sin
            let u = Vec3::new(rho * theta.cos(), rho * theta.sin(), 0.0);
            if u.norm() > r {
                u * (r / u.norm())
            } else {
                u
            }
        })
        .collect();
    Pattern::from_offsets(offsets, r, PatternKind::Random { seed })
}

/// `τ_s = r / √m`.
pub fn spacing_for(r: f64, m: usize) -> f64 {
    r / (m as f64).sqrt()
}

/// Inverse relation `M = r² / τ_s²`.
pub fn count_for(r: f64, spacing: f64) -> f64 {
    (r * r) / (spacing * spacing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_counts_match_reported_values() {
        assert_eq!(grid_pattern(16, 1.0).unwrap().len(), 193);
        assert_eq!(grid_pattern(32, 1.0).unwrap().len(), 793);
        assert_eq!(grid_pattern(64, 1.0).unwrap().len(), 3205);
    }

    #[test]
    fn smallest_grid_keeps_only_the_center() {
        // the 3×3 node lattice at r = 1 has its 8 outer nodes on or outside the disk
        let p = grid_pattern(2, 1.0).unwrap();
        assert_eq!(p.offsets(), &[Vec3::zeros()]);
        let p = grid_pattern(4, 1.0).unwrap();
        let enumerated: usize = (-2i32..=2)
            .flat_map(|a| (-2i32..=2).map(move |b| (a, b)))
            .filter(|(a, b)| ((a * a + b * b) as f64 * 0.25) < 1.0)
            .count();
        assert_eq!(p.len(), enumerated);
        assert_eq!(p.len(), 9);
    }

    #[test]
    fn random_pattern_mean_radius() {
        let p = random_pattern(10_000, 1.0, 3).unwrap();
        let mean = p.offsets().iter().map(|u| u.norm()).sum::<f64>() / p.len() as f64;
        assert!((mean - 2.0 / 3.0).abs() / (2.0 / 3.0) < 0.02, "mean radius {mean}");
        let q = random_pattern(1, 0.5, 9).unwrap();
        assert!(q.offsets()[0].norm() <= 0.5);
        assert_eq!(random_pattern(50, 1.0, 7).unwrap(), random_pattern(50, 1.0, 7).unwrap());
    }

    #[test]
    fn spacing_formula() {
        assert_eq!(spacing_for(1.0, 4), 0.5);
        assert!((spacing_for(1.0, 193) - 0.0720).abs() < 5e-5);
        let tau = spacing_for(2.0, 400);
        assert!((count_for(2.0, tau) - 400.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(grid_pattern(1, 1.0).is_err());
        assert!(grid_pattern(8, 0.0).is_err());
        assert!(random_pattern(0, 1.0, 1).is_err());
        assert!(Pattern::from_offsets(vec![Vec3::new(0.0, 0.0, 0.1)], 1.0, PatternKind::Random { seed: 0 }).is_err());
    }

    proptest! {
        #[test]
        fn grid_is_symmetric_planar_and_inside(n in 2usize..40, r in 0.01f64..100.0) {
            let p = grid_pattern(n, r).unwrap();
            let base = grid_pattern(n, 1.0).unwrap().len();
            prop_assert_eq!(p.len(), base);
            for u in p.offsets() {
                prop_assert!(u.norm() <= r);
                prop_assert_eq!(u.z, 0.0);
                prop_assert!(p.offsets().contains(&-u));
            }
        }
    }
}
