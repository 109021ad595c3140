use rand::seq::SliceRandom;

use super::cloud::{PointCloud, Vec3};
use super::frame::LocalFrame;
use super::grid::HashGrid;
use crate::error::{LpfError, Result};
use crate::rng;

/// Seed positions with their initial frames, covering the input cloud.
#[derive(Debug, Clone)]
pub struct SeedSet {
    pub seeds: Vec<(Vec3, LocalFrame)>,
    pub coverage_radius: f64,
}

impl SeedSet {
    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = &Vec3> {
        self.seeds.iter().map(|(p, _)| p)
    }

    /// Indices of cloud points farther than `coverage_radius` from every seed.
    pub fn uncovered(&self, cloud: &PointCloud) -> Vec<usize> {
        let mut grid = HashGrid::new(self.coverage_radius.max(f64::MIN_POSITIVE));
        for (i, (p, _)) in self.seeds.iter().enumerate() {
            grid.insert(i, p);
        }
        let r2 = self.coverage_radius * self.coverage_radius;
        cloud
            .points()
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                !grid.any_near(p, self.coverage_radius, |s| {
                    (self.seeds[s].0 - *p).norm_squared() <= r2
                })
            })
            .map(|(i, _)| i)
            .collect()
    }
}

fn check_radii(rejection_radius: f64, coverage_radius: f64) -> Result<()> {
    if !(rejection_radius > 0.0 && rejection_radius <= coverage_radius) {
        return Err(LpfError::InvalidArgument(format!(
            "need 0 < rejection_radius ({rejection_radius}) <= coverage_radius ({coverage_radius})"
        )));
    }
    Ok(())
}

/// Adds a seed at every point left uncovered, in index order.
fn complete_coverage(cloud: &PointCloud, positions: &mut Vec<Vec3>, coverage_radius: f64) {
    let mut grid = HashGrid::new(coverage_radius);
    for (i, p) in positions.iter().enumerate() {
        grid.insert(i, p);
    }
    let r2 = coverage_radius * coverage_radius;
    for p in cloud.points() {
        let covered = grid.any_near(p, coverage_radius, |s| (positions[s] - p).norm_squared() <= r2);
        if !covered {
            grid.insert(positions.len(), p);
            positions.push(*p);
        }
    }
}

fn with_random_frames(positions: Vec<Vec3>, coverage_radius: f64, seed: u64) -> SeedSet {
    let mut rng = rng::stream(seed, rng::STREAM_FRAMES);
    let seeds = positions
        .into_iter()
        .map(|p| (p, LocalFrame::random(p, &mut rng)))
        .collect();
    SeedSet {
        seeds,
        coverage_radius,
    }
}

/// Dart throwing over a random permutation of the input points.
///
/// A point becomes a seed unless an existing seed lies closer than
/// `rejection_radius`; a final pass seeds any point still farther than
/// `coverage_radius` from all seeds. Each seed gets a uniformly random frame.
pub fn poisson_seed(
    cloud: &PointCloud,
    rejection_radius: f64,
    coverage_radius: f64,
    seed: u64,
) -> Result<SeedSet> {
    check_radii(rejection_radius, coverage_radius)?;
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.shuffle(&mut rng::stream(seed, rng::STREAM_SEEDS));

    let pts = cloud.points();
    let mut positions: Vec<Vec3> = Vec::new();
    let mut grid = HashGrid::new(rejection_radius);
    let rho2 = rejection_radius * rejection_radius;
    for &i in &order {
        let p = &pts[i];
        let blocked = grid.any_near(p, rejection_radius, |s| (positions[s] - p).norm_squared() < rho2);
        if !blocked {
            grid.insert(positions.len(), p);
            positions.push(*p);
        }
    }
    complete_coverage(cloud, &mut positions, coverage_radius);
    Ok(with_random_frames(positions, coverage_radius, seed))
}

/// Seeds every `stride`-th input point (stride 1 = one seed per point),
/// then completes coverage at `coverage_radius`.
pub fn stride_seed(cloud: &PointCloud, stride: usize, coverage_radius: f64, seed: u64) -> Result<SeedSet> {
    if stride == 0 {
        return Err(LpfError::InvalidArgument("stride must be at least 1".into()));
    }
    if coverage_radius <= 0.0 {
        return Err(LpfError::InvalidArgument("coverage radius must be positive".into()));
    }
    let mut positions: Vec<Vec3> = cloud.points().iter().step_by(stride).copied().collect();
    complete_coverage(cloud, &mut positions, coverage_radius);
    Ok(with_random_frames(positions, coverage_radius, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| Vec3::new(rng.random_range(0.0..4.0), rng.random_range(0.0..4.0), 0.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_point_cloud_gives_one_seed() {
        let c = PointCloud::new(vec![Vec3::new(1.0, 2.0, 3.0)]).unwrap();
        let s = poisson_seed(&c, 0.5, 0.55, 7).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.seeds[0].0, Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn seeds_respect_rejection_radius() {
        let c = plane(3000, 1);
        let rho = 0.3;
        let s = poisson_seed(&c, rho, 0.33, 9).unwrap();
        let pos: Vec<Vec3> = s.positions().copied().collect();
        for i in 0..pos.len() {
            for j in i + 1..pos.len() {
                assert!((pos[i] - pos[j]).norm() >= rho);
            }
        }
        assert!(pos.len() > 20);
    }

    #[test]
    fn every_point_is_covered() {
        let c = plane(2000, 2);
        let s = poisson_seed(&c, 0.25, 0.275, 3).unwrap();
        for p in c.points() {
            let best = s.positions().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min);
            assert!(best <= 0.275);
        }
        assert!(s.uncovered(&c).is_empty());
        for (p, f) in &s.seeds {
            assert_eq!(f.origin, *p);
            assert!(f.orthonormality_error() < 1e-10);
        }
    }

    #[test]
    fn bad_radii_rejected() {
        let c = plane(10, 3);
        assert!(poisson_seed(&c, 0.0, 1.0, 1).is_err());
        assert!(poisson_seed(&c, 2.0, 1.0, 1).is_err());
    }

    #[test]
    fn stride_seeding_covers() {
        let c = plane(1000, 4);
        let s = stride_seed(&c, 10, 0.3, 5).unwrap();
        assert!(s.len() >= 100);
        assert!(s.uncovered(&c).is_empty());
        let all = stride_seed(&c, 1, 0.3, 5).unwrap();
        assert_eq!(all.len(), 1000);
    }

    #[test]
    fn seeding_is_deterministic() {
        let c = plane(500, 5);
        let a = poisson_seed(&c, 0.3, 0.33, 11).unwrap();
        let b = poisson_seed(&c, 0.3, 0.33, 11).unwrap();
        assert_eq!(a.seeds, b.seeds);
    }
}
