use nalgebra::{Matrix3, Quaternion, UnitQuaternion};
use rand::Rng;
use rand_distr::StandardNormal;

use super::cloud::Vec3;

/// Orthonormal right-handed frame `(t1, t2, n)` anchored at `origin`.
///
/// `axes` stores the frame vectors as columns, so local coordinates `x`
/// map to world as `origin + axes * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    pub origin: Vec3,
    pub axes: Matrix3<f64>,
}

impl LocalFrame {
    pub fn new(origin: Vec3, axes: Matrix3<f64>) -> Self {
        Self { origin, axes }
    }

    pub fn identity(origin: Vec3) -> Self {
        Self::new(origin, Matrix3::identity())
    }

    /// Frame whose normal is `n`; the tangents are an arbitrary completion.
    pub fn from_normal(origin: Vec3, n: Vec3) -> Self {
        let n = n.normalize();
        let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let t1 = helper.cross(&n).normalize();
        let t2 = n.cross(&t1);
        Self::new(origin, Matrix3::from_columns(&[t1, t2, n]))
    }

    /// Uniformly distributed orientation over SO(3).
    pub fn random<R: Rng + ?Sized>(origin: Vec3, rng: &mut R) -> Self {
        let q = Quaternion::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let rot = UnitQuaternion::from_quaternion(q);
        let mut f = Self::new(origin, *rot.to_rotation_matrix().matrix());
        f.reorthonormalize();
        f
    }

    pub fn t1(&self) -> Vec3 {
        self.axes.column(0).into_owned()
    }

    pub fn t2(&self) -> Vec3 {
        self.axes.column(1).into_owned()
    }

    pub fn normal(&self) -> Vec3 {
        self.axes.column(2).into_owned()
    }

    #[inline]
    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        self.axes.tr_mul(&(p - self.origin))
    }

    #[inline]
    pub fn to_world(&self, x: &Vec3) -> Vec3 {
        self.origin + self.axes * x
    }

    /// Gram–Schmidt on `t1, t2` with `n = t1 × t2`.
    pub fn reorthonormalize(&mut self) {
        let t1 = self.t1().normalize();
        let t2 = (self.t2() - t1 * t1.dot(&self.t2())).normalize();
        let n = t1.cross(&t2);
        self.axes = Matrix3::from_columns(&[t1, t2, n]);
    }

    /// Largest deviation from orthonormality and right-handedness.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.axes.tr_mul(&self.axes) - Matrix3::identity();
        let hand = (self.t1().cross(&self.t2()) - self.normal()).amax();
        g.amax().max(hand)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_frames_are_orthonormal_and_right_handed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let f = LocalFrame::random(Vec3::zeros(), &mut rng);
            assert!(f.orthonormality_error() < 1e-10);
            assert!((f.axes.determinant() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn random_normals_cover_the_sphere() {
        // mean of uniformly distributed unit vectors tends to zero
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 4000;
        let mean: Vec3 = (0..n)
            .map(|_| LocalFrame::random(Vec3::zeros(), &mut rng).normal())
            .sum::<Vec3>()
            / n as f64;
        assert!(mean.norm() < 0.05, "{mean}");
    }

    #[test]
    fn local_world_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = LocalFrame::random(Vec3::new(1.0, -2.0, 0.5), &mut rng);
        let p = Vec3::new(0.3, 0.7, -1.1);
        assert!((f.to_world(&f.to_local(&p)) - p).norm() < 1e-12);
        let g = LocalFrame::from_normal(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0));
        assert!(g.orthonormality_error() < 1e-12);
        assert!((g.normal() - Vec3::x()).norm() < 1e-12);
    }
}
