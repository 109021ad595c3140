use super::cloud::{PointCloud, Vec3};
use super::kdtree::KdTree;
use crate::error::{LpfError, Result};

/// Radius and k-nearest queries over an immutable point cloud.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    tree: KdTree<3>,
}

#[inline]
fn arr(p: &Vec3) -> [f64; 3] {
    [p.x, p.y, p.z]
}

impl SpatialIndex {
    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    /// Indices of points with `‖p − q‖ ≤ radius` (closed ball), ascending.
    pub fn within_radius(&self, q: &Vec3, radius: f64) -> Vec<usize> {
        self.tree.within_radius(&arr(q), radius)
    }

    /// `k` nearest points as `(index, distance)`; ties go to the lower index.
    pub fn nearest_k(&self, q: &Vec3, k: usize) -> Vec<(usize, f64)> {
        self.tree.nearest_k(&arr(q), k)
    }

    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        self.tree.nearest_by(&arr(q), |_| 0.0)
    }
}

pub fn build_index(cloud: &PointCloud) -> Result<SpatialIndex> {
    if cloud.is_empty() {
        return Err(LpfError::EmptyCloud);
    }
    Ok(SpatialIndex {
        tree: KdTree::new(cloud.points().iter().map(arr).collect()),
    })
}

/// Distance from each point to its nearest *other* point.
pub fn nn_distances(cloud: &PointCloud, index: &SpatialIndex) -> Vec<f64> {
    use rayon::prelude::*;
    cloud
        .points()
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            index
                .nearest_k(p, 2)
                .into_iter()
                .find(|&(j, _)| j != i)
                .map(|(_, d)| d)
                .unwrap_or(f64::INFINITY)
        })
        .collect()
}

/// Probing accuracy scale: the median nearest-neighbor distance of the cloud.
pub fn estimate_tau_p(cloud: &PointCloud) -> Result<f64> {
    if cloud.len() < 2 {
        return Err(LpfError::InvalidArgument(
            "estimating tau_p needs at least two points".into(),
        ));
    }
    let index = build_index(cloud)?;
    let mut d = nn_distances(cloud, &index);
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let median = if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    };
    if median > 0.0 {
        Ok(median)
    } else if d[n - 1] > 0.0 {
        // more than half the points are duplicates: fall back to the
        // median of the strictly positive spacings
        let pos: Vec<f64> = d.into_iter().filter(|&x| x > 0.0).collect();
        Ok(pos[pos.len() / 2])
    } else {
        Err(LpfError::DegenerateSpacing)
    }
}
