//! Synthetic test shapes with known ground truth.
//!
//! Dimensions are fixed per shape so experiments are comparable across runs:
//!
//! | kind               | extent                                             |
//! |--------------------|----------------------------------------------------|
//! | `plane`            | square `[-3, 3]² × {0}`                             |
//! | `cube`             | hollow cube surface, side 5, centered at origin    |
//! | `cube_with_curve`  | the cube above plus a closed wavy loop through it  |
//! | `sphere_curve_net` | sphere of radius 10 caged by five circles; bbox diagonal 47.29 |
//! | `sinusoid`         | `z = 0.3·sin(πx)` over `[0, 4]²`                    |

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::cloud::{PointCloud, Vec3};
use crate::error::{LpfError, Result};
use crate::rng;

pub const PLANE_HALF_SIDE: f64 = 3.0;
pub const CUBE_SIDE: f64 = 5.0;
pub const SPHERE_RADIUS: f64 = 10.0;
/// Cage circle radius; gives a bounding box diagonal of `2·√3·13.65 ≈ 47.29`.
pub const NET_RADIUS: f64 = 13.65;
pub const SINUSOID_AMPLITUDE: f64 = 0.3;
pub const SINUSOID_SIDE: f64 = 4.0;

/// Fraction of samples placed on curves for the mixed-dimension shapes.
const CUBE_CURVE_FRACTION: f64 = 0.15;
const NET_CURVE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Plane,
    Cube,
    CubeWithCurve,
    SphereCurveNet,
    Sinusoid,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] = [
        ShapeKind::Plane,
        ShapeKind::Cube,
        ShapeKind::CubeWithCurve,
        ShapeKind::SphereCurveNet,
        ShapeKind::Sinusoid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Plane => "plane",
            ShapeKind::Cube => "cube",
            ShapeKind::CubeWithCurve => "cube_with_curve",
            ShapeKind::SphereCurveNet => "sphere_curve_net",
            ShapeKind::Sinusoid => "sinusoid",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = LpfError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| LpfError::UnknownShape(s.to_string()))
    }
}

/// The closed loop threaded through the cube, parameterized on `[0, 2π)`.
pub fn cube_curve_point(t: f64) -> Vec3 {
    Vec3::new(3.2 * t.cos(), 3.2 * t.sin(), 1.0 * (3.0 * t).sin())
}

/// The five cage circles around the sphere: three great circles in the
/// coordinate planes and two parallels at `z = ±R/2`.
pub fn net_curve_point(curve: usize, t: f64) -> Vec3 {
    let (c, s) = (t.cos(), t.sin());
    match curve {
        0 => Vec3::new(NET_RADIUS * c, NET_RADIUS * s, 0.0),
        1 => Vec3::new(NET_RADIUS * c, 0.0, NET_RADIUS * s),
        2 => Vec3::new(0.0, NET_RADIUS * c, NET_RADIUS * s),
        3 | 4 => {
            let z = if curve == 3 { 0.5 } else { -0.5 } * NET_RADIUS;
            let rr = (NET_RADIUS * NET_RADIUS - z * z).sqrt();
            Vec3::new(rr * c, rr * s, z)
        }
        _ => panic!("net curve index out of range"),
    }
}

pub const NET_CURVES: usize = 5;

fn net_curve_length(curve: usize) -> f64 {
    match curve {
        0..=2 => TAU * NET_RADIUS,
        _ => TAU * (NET_RADIUS * NET_RADIUS * 0.75).sqrt(),
    }
}

fn cube_surface_point<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let h = 0.5 * CUBE_SIDE;
    let face = rng.random_range(0..6);
    let a = rng.random_range(-h..h);
    let b = rng.random_range(-h..h);
    let side = if face % 2 == 0 { h } else { -h };
    match face / 2 {
        0 => Vec3::new(side, a, b),
        1 => Vec3::new(a, side, b),
        _ => Vec3::new(a, b, side),
    }
}

fn sphere_point<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    loop {
        let v = Vec3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
        let n = v.norm();
        if n > 1e-9 {
            return v * (SPHERE_RADIUS / n);
        }
    }
}

fn clean_points(kind: ShapeKind, n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = rng::stream(seed, rng::STREAM_SYNTH);
    match kind {
        ShapeKind::Plane => (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-PLANE_HALF_SIDE..PLANE_HALF_SIDE),
                    rng.random_range(-PLANE_HALF_SIDE..PLANE_HALF_SIDE),
                    0.0,
                )
            })
            .collect(),
        ShapeKind::Cube => (0..n).map(|_| cube_surface_point(&mut rng)).collect(),
        ShapeKind::CubeWithCurve => {
            let n_curve = ((n as f64) * CUBE_CURVE_FRACTION).round() as usize;
            let mut pts: Vec<Vec3> = (0..n - n_curve).map(|_| cube_surface_point(&mut rng)).collect();
            pts.extend((0..n_curve).map(|_| cube_curve_point(rng.random_range(0.0..TAU))));
            pts
        }
        ShapeKind::SphereCurveNet => {
            let n_curve = ((n as f64) * NET_CURVE_FRACTION).round() as usize;
            let mut pts: Vec<Vec3> = (0..n - n_curve).map(|_| sphere_point(&mut rng)).collect();
            let total: f64 = (0..NET_CURVES).map(net_curve_length).sum();
            for _ in 0..n_curve {
                // pick a curve proportionally to its length
                let mut u = rng.random_range(0.0..total);
                let mut curve = 0;
                while curve + 1 < NET_CURVES && u >= net_curve_length(curve) {
                    u -= net_curve_length(curve);
                    curve += 1;
                }
                pts.push(net_curve_point(curve, rng.random_range(0.0..TAU)));
            }
            pts
        }
        ShapeKind::Sinusoid => (0..n)
            .map(|_| {
                let x = rng.random_range(0.0..SINUSOID_SIDE);
                let y = rng.random_range(0.0..SINUSOID_SIDE);
                Vec3::new(x, y, SINUSOID_AMPLITUDE * (PI * x).sin())
            })
            .collect(),
    }
}

/// Samples `n` points of `kind` and returns `(noisy, ground_truth)`.
///
/// Noise is isotropic Gaussian with per-axis standard deviation `noise_sigma`;
/// the two clouds are index-aligned.
pub fn synth_shape(kind: ShapeKind, n: usize, noise_sigma: f64, seed: u64) -> Result<(PointCloud, PointCloud)> {
    if n == 0 {
        return Err(LpfError::InvalidArgument("point count must be positive".into()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(LpfError::InvalidArgument(format!("invalid noise sigma {noise_sigma}")));
    }
    let clean = clean_points(kind, n, seed);
    let noisy = if noise_sigma > 0.0 {
        let mut rng = rng::stream(seed, rng::STREAM_NOISE);
        let normal = Normal::new(0.0, noise_sigma).unwrap();
        clean
            .iter()
            .map(|p| p + Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)))
            .collect()
    } else {
        clean.clone()
    };
    Ok((PointCloud::new(noisy)?, PointCloud::new(clean)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist_to_cube(p: &Vec3) -> f64 {
        let h = 0.5 * CUBE_SIDE;
        let q = p.map(|c| c.abs()) - Vec3::repeat(h);
        let outside = q.map(|c| c.max(0.0)).norm();
        let inside = q.max().min(0.0);
        (outside + inside).abs()
    }

    fn dist_to_cube_curve(p: &Vec3) -> f64 {
        // dense parameter scan then golden-section refinement
        let steps = 4000;
        let (mut best_t, mut best) = (0.0, f64::INFINITY);
        for k in 0..steps {
            let t = TAU * k as f64 / steps as f64;
            let d = (cube_curve_point(t) - p).norm();
            if d < best {
                best = d;
                best_t = t;
            }
        }
        let (mut a, mut b) = (best_t - TAU / steps as f64, best_t + TAU / steps as f64);
        for _ in 0..100 {
            let m1 = a + (b - a) / 3.0;
            let m2 = b - (b - a) / 3.0;
            if (cube_curve_point(m1) - p).norm() < (cube_curve_point(m2) - p).norm() {
                b = m2;
            } else {
                a = m1;
            }
        }
        (cube_curve_point(0.5 * (a + b)) - p).norm().min(best)
    }

    #[test]
    fn noise_free_plane_is_exactly_planar() {
        let (noisy, gt) = synth_shape(ShapeKind::Plane, 2000, 0.0, 1).unwrap();
        assert_eq!(noisy, gt);
        assert!(gt.points().iter().all(|p| p.z == 0.0));
    }

    #[test]
    fn cube_with_curve_points_lie_on_cube_or_curve() {
        let (_, gt) = synth_shape(ShapeKind::CubeWithCurve, 3000, 0.0, 2).unwrap();
        let mut on_curve = 0;
        for p in gt.points() {
            let dc = dist_to_cube(p);
            if dc > 1e-12 {
                assert!(dist_to_cube_curve(p) < 1e-9, "{p} off both cube and curve");
                on_curve += 1;
            }
        }
        assert!(on_curve > 300);
    }

    #[test]
    fn analytic_surfaces_hold_to_machine_precision() {
        let (_, s) = synth_shape(ShapeKind::SphereCurveNet, 4000, 0.0, 3).unwrap();
        for p in s.points() {
            let on_sphere = (p.norm() - SPHERE_RADIUS).abs() < 1e-12;
            let on_net = (p.norm() - NET_RADIUS).abs() < 1e-12;
            assert!(on_sphere || on_net);
        }
        assert!((s.bbox_diagonal() - 47.29).abs() < 0.05);

        let (_, s) = synth_shape(ShapeKind::Sinusoid, 1000, 0.0, 3).unwrap();
        for p in s.points() {
            assert!((p.z - SINUSOID_AMPLITUDE * (PI * p.x).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_rmse_matches_gaussian_expectation() {
        // E‖e‖² = 3σ² for isotropic 3D noise
        let (_, gt0) = synth_shape(ShapeKind::Cube, 10, 0.0, 4).unwrap();
        let sigma = 0.01 * gt0.bbox_diagonal();
        let (noisy, gt) = synth_shape(ShapeKind::Cube, 20000, sigma, 4).unwrap();
        let mse: f64 = noisy
            .points()
            .iter()
            .zip(gt.points())
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            / noisy.len() as f64;
        let rel = (mse.sqrt() - sigma * 3f64.sqrt()).abs() / (sigma * 3f64.sqrt());
        assert!(rel < 0.05, "relative deviation {rel}");
    }

    #[test]
    fn parses_kinds() {
        assert_eq!("sphere-curve-net".parse::<ShapeKind>().unwrap(), ShapeKind::SphereCurveNet);
        assert!(matches!("torus".parse::<ShapeKind>(), Err(LpfError::UnknownShape(_))));
        assert!(synth_shape(ShapeKind::Plane, 0, 0.0, 1).is_err());
    }
}
