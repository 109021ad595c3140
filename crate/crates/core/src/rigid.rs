//! Closed-form least-squares rigid fitting.

use nalgebra::{Matrix3, SVD};

use crate::geom::Vec3;

/// Rigid motion in the convention of the pose update: a point `x` is mapped
/// to `R⁻¹·x − t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// `R⁻¹·x − t`.
    #[inline]
    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.rotation.tr_mul(x) - self.translation
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Matrix3::identity() && self.translation == Vec3::zeros()
    }

    /// Max deviation of `RᵀR` from identity, and `|det R − 1|`.
    pub fn orthogonality_error(&self) -> f64 {
        let g = (self.rotation.tr_mul(&self.rotation) - Matrix3::identity()).amax();
        g.max((self.rotation.determinant() - 1.0).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidFit {
    pub transform: RigidTransform,
    /// Set when the centered cross-covariance has rank < 2; the transform
    /// is then the identity.
    pub degenerate: bool,
}

/// `Σ ‖R⁻¹·source_i − t − dest_i‖²`.
pub fn fit_objective(source: &[Vec3], dest: &[Vec3], transform: &RigidTransform) -> f64 {
    source
        .iter()
        .zip(dest)
        .map(|(s, d)| (transform.apply(s) - d).norm_squared())
        .sum()
}

/// Relative singular-value threshold below which the covariance is
/// considered rank deficient.
const RANK_TOL: f64 = 1e-12;

/// Least-squares rigid transform carrying `source` onto `dest`.
///
/// Solved through the SVD of the centered cross-covariance with a sign
/// correction on the smallest singular direction so that `det R = +1`.
pub fn fit_rigid(source: &[Vec3], dest: &[Vec3]) -> RigidFit {
    let degenerate = RigidFit {
        transform: RigidTransform::identity(),
        degenerate: true,
    };
    if source.len() != dest.len() || source.len() < 2 {
        return degenerate;
    }
    let n = source.len() as f64;
    let cs = source.iter().sum::<Vec3>() / n;
    let cd = dest.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in source.iter().zip(dest) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = SVD::new(h, true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return degenerate;
    };
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= RANK_TOL * sv[0] {
        return degenerate;
    }
    let v = v_t.transpose();
    let mut corr = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        // flip the direction of the smallest singular value
        let smallest = (0..3)
            .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
            .unwrap();
        corr[(smallest, smallest)] = -1.0;
    }
    // q maps source to dest: dest ≈ q·source + w
    let q = v * corr * u.transpose();
    let w = cd - q * cs;
    RigidFit {
        transform: RigidTransform {
            rotation: q.transpose(),
            translation: -w,
        },
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn identity_for_equal_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_cloud(&mut rng, 10);
        let fit = fit_rigid(&s, &s);
        assert!(!fit.degenerate);
        assert!((fit.transform.rotation - Matrix3::identity()).amax() < 1e-12);
        assert!(fit.transform.translation.norm() < 1e-12);
    }

    #[test]
    fn recovers_pure_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_cloud(&mut rng, 8);
        let shift = Vec3::new(1.0, 2.0, 3.0);
        let d: Vec<Vec3> = s.iter().map(|p| p + shift).collect();
        let fit = fit_rigid(&s, &d);
        // x ↦ x − t, so t = −shift
        assert!((fit.transform.translation + shift).norm() < 1e-12);
        assert!((fit.transform.rotation - Matrix3::identity()).amax() < 1e-12);
    }

    #[test]
    fn recovers_constructed_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let s = random_cloud(&mut rng, 12);
            let axis = Unit::new_normalize(Vec3::new(rng.random(), rng.random(), rng.random::<f64>() + 0.1));
            let q = Rotation3::from_axis_angle(&axis, rng.random_range(-3.0..3.0));
            let w = Vec3::new(rng.random(), rng.random(), rng.random());
            let d: Vec<Vec3> = s.iter().map(|p| q * p + w).collect();
            let fit = fit_rigid(&s, &d);
            for (a, b) in s.iter().zip(&d) {
                assert!((fit.transform.apply(a) - b).norm() < 1e-8);
            }
            assert!(fit.transform.orthogonality_error() < 1e-10);
        }
    }

    #[test]
    fn planar_sets_get_proper_rotation() {
        // coplanar points: the third singular value is zero
        let s: Vec<Vec3> = (0..9).map(|i| Vec3::new((i % 3) as f64, (i / 3) as f64, 0.0)).collect();
        let q = Rotation3::from_euler_angles(0.3, -0.2, 1.1);
        let d: Vec<Vec3> = s.iter().map(|p| q * p).collect();
        let fit = fit_rigid(&s, &d);
        assert!((fit.transform.rotation.determinant() - 1.0).abs() < 1e-12);
        assert!(fit_objective(&s, &d, &fit.transform) < 1e-20);
    }

    #[test]
    fn collinear_input_is_flagged() {
        let s: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let d: Vec<Vec3> = s.iter().map(|p| p + Vec3::new(0.0, 1.0, 0.0)).collect();
        let fit = fit_rigid(&s, &d);
        assert!(fit.degenerate);
        assert!(fit.transform.is_identity());
        assert!(fit_rigid(&s[..1], &d[..1]).degenerate);
    }

    #[test]
    fn never_worse_than_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let s = random_cloud(&mut rng, 6);
            let d = random_cloud(&mut rng, 6);
            let fit = fit_rigid(&s, &d);
            let id = RigidTransform::identity();
            assert!(fit_objective(&s, &d, &fit.transform) <= fit_objective(&s, &d, &id) + 1e-12);
        }
    }
}
