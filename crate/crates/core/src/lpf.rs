//! Local probing fields: construction, probing operators and pose updates.
//!
//! All per-pattern vectors `v_i` are stored in the field's local frame, so
//! the probed point of pattern index `i` sits at
//! `frame.to_world(u_i + v_i)`.

use nalgebra::Matrix3;

use crate::error::{LpfError, Result};
use crate::geom::kdtree::KdTree;
use crate::geom::{LocalFrame, PointCloud, SpatialIndex, Vec3};
use crate::pattern::Pattern;
use crate::rigid::{fit_rigid, RigidFit, RigidTransform};

/// Target sphere radius as a multiple of the pattern radius.
pub const TARGET_RADIUS_FACTOR: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProbeOperator {
    /// Target point whose projection on the pattern plane is nearest.
    #[default]
    Aoap,
    /// Target point nearest in 3D.
    Nearest,
}

/// How pattern points are probed and which of them count as valid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSettings {
    pub operator: ProbeOperator,
    /// A pattern point is masked when its probed target point is farther
    /// than `factor · τ_s` from it in the pattern plane. `None` keeps all.
    pub mask_factor: Option<f64>,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            operator: ProbeOperator::Aoap,
            mask_factor: None,
        }
    }
}

/// Output of one probing pass, in the probing frame's local coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Probed {
    pub v: Vec<Vec3>,
    pub valid: Vec<bool>,
    /// Cloud index of the target point assigned to each pattern point.
    pub hits: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalProbingField {
    pub frame: LocalFrame,
    /// Cloud indices of the target area, ascending. Fixed at construction.
    pub target: Vec<usize>,
    pub target_center: Vec3,
    pub target_radius: f64,
    pub v: Vec<Vec3>,
    pub valid: Vec<bool>,
    pub hits: Vec<usize>,
}

impl LocalProbingField {
    pub fn seed(&self) -> Vec3 {
        self.frame.origin
    }

    /// Whether `p` lies in the (closed) target sphere.
    pub fn target_contains(&self, p: &Vec3) -> bool {
        (p - self.target_center).norm_squared() <= self.target_radius * self.target_radius
    }

    /// World position of the probed point for pattern index `i`.
    pub fn probed_point(&self, pattern: &Pattern, i: usize) -> Vec3 {
        self.frame.to_world(&(pattern.offsets()[i] + self.v[i]))
    }

    /// World position `s + u_i + ṽ_i` for a reconstructed local vector.
    pub fn reconstructed_point(&self, pattern: &Pattern, i: usize, v_tilde: &Vec3) -> Vec3 {
        self.frame.to_world(&(pattern.offsets()[i] + v_tilde))
    }

    /// `Σ ‖v_i‖²` over valid pattern points.
    pub fn field_energy(&self) -> f64 {
        self.v
            .iter()
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .map(|(v, _)| v.norm_squared())
            .sum()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }

    fn set_probe(&mut self, p: Probed) {
        self.v = p.v;
        self.valid = p.valid;
        self.hits = p.hits;
    }
}

/// Cloud points within `TARGET_RADIUS_FACTOR · r` of `seed`.
pub fn select_target(index: &SpatialIndex, seed: &Vec3, r: f64) -> Vec<usize> {
    index.within_radius(seed, TARGET_RADIUS_FACTOR * r)
}

fn mask_threshold(pattern: &Pattern, settings: &ProbeSettings) -> f64 {
    settings
        .mask_factor
        .map(|f| f * pattern.spacing())
        .unwrap_or(f64::INFINITY)
}

/// As-orthogonal-as-possible probe: pattern point `p` is assigned the target
/// point whose orthogonal projection on the pattern plane is closest to `p`.
/// Ties go to the smaller out-of-plane offset, then the lower cloud index.
pub fn probe_aoap(
    frame: &LocalFrame,
    pattern: &Pattern,
    cloud: &PointCloud,
    target: &[usize],
    settings: &ProbeSettings,
) -> Result<Probed> {
    if target.is_empty() {
        return Err(LpfError::EmptyTarget);
    }
    let pts = cloud.points();
    let local: Vec<Vec3> = target.iter().map(|&j| frame.to_local(&pts[j])).collect();
    let tree = KdTree::new(local.iter().map(|x| [x.x, x.y]).collect());
    let limit = mask_threshold(pattern, settings);
    let mut out = Probed {
        v: Vec::with_capacity(pattern.len()),
        valid: Vec::with_capacity(pattern.len()),
        hits: Vec::with_capacity(pattern.len()),
    };
    for u in pattern.offsets() {
        let (k, planar) = tree
            .nearest_by(&[u.x, u.y], |k| (local[k].z - u.z).abs())
            .expect("non-empty target");
        out.v.push(local[k] - u);
        out.valid.push(planar <= limit);
        out.hits.push(target[k]);
    }
    Ok(out)
}

/// Nearest-point probe (the ICP correspondence), same output layout.
pub fn probe_nearest(
    frame: &LocalFrame,
    pattern: &Pattern,
    cloud: &PointCloud,
    target: &[usize],
    settings: &ProbeSettings,
) -> Result<Probed> {
    if target.is_empty() {
        return Err(LpfError::EmptyTarget);
    }
    let pts = cloud.points();
    let local: Vec<Vec3> = target.iter().map(|&j| frame.to_local(&pts[j])).collect();
    let tree = KdTree::new(local.iter().map(|x| [x.x, x.y, x.z]).collect());
    let limit = mask_threshold(pattern, settings);
    let mut out = Probed {
        v: Vec::with_capacity(pattern.len()),
        valid: Vec::with_capacity(pattern.len()),
        hits: Vec::with_capacity(pattern.len()),
    };
    for u in pattern.offsets() {
        let (k, _) = tree.nearest_by(&[u.x, u.y, u.z], |_| 0.0).expect("non-empty target");
        let v = local[k] - u;
        out.valid.push(v.xy().norm() <= limit);
        out.v.push(v);
        out.hits.push(target[k]);
    }
    Ok(out)
}

pub fn probe(
    frame: &LocalFrame,
    pattern: &Pattern,
    cloud: &PointCloud,
    target: &[usize],
    settings: &ProbeSettings,
) -> Result<Probed> {
    match settings.operator {
        ProbeOperator::Aoap => probe_aoap(frame, pattern, cloud, target, settings),
        ProbeOperator::Nearest => probe_nearest(frame, pattern, cloud, target, settings),
    }
}

/// Whether the target points span at least a line's worth of directions
/// beyond collinearity (rank ≥ 2 covariance).
fn target_is_stable(cloud: &PointCloud, target: &[usize]) -> bool {
    if target.len() < 3 {
        return false;
    }
    let pts = cloud.points();
    let c = target.iter().map(|&j| pts[j]).sum::<Vec3>() / target.len() as f64;
    let mut cov = Matrix3::zeros();
    for &j in target {
        let d = pts[j] - c;
        cov += d * d.transpose();
    }
    let mut ev: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev[0] > 0.0 && ev[1] > 1e-12 * ev[0]
}

/// Builds a field at `frame`, with its target area taken around the frame
/// origin. Returns `Ok(None)` when the target is too small or collinear
/// for a stable rigid fit.
pub fn build_lpf(
    frame: LocalFrame,
    pattern: &Pattern,
    cloud: &PointCloud,
    index: &SpatialIndex,
    settings: &ProbeSettings,
) -> Result<Option<LocalProbingField>> {
    build_lpf_with_radius(frame, pattern, cloud, index, settings, TARGET_RADIUS_FACTOR * pattern.radius())
}

/// [`build_lpf`] with an explicit target sphere radius.
pub fn build_lpf_with_radius(
    frame: LocalFrame,
    pattern: &Pattern,
    cloud: &PointCloud,
    index: &SpatialIndex,
    settings: &ProbeSettings,
    target_radius: f64,
) -> Result<Option<LocalProbingField>> {
    let target = index.within_radius(&frame.origin, target_radius);
    if !target_is_stable(cloud, &target) {
        return Ok(None);
    }
    let p = probe(&frame, pattern, cloud, &target, settings)?;
    Ok(Some(LocalProbingField {
        frame,
        target,
        target_center: frame.origin,
        target_radius,
        v: p.v,
        valid: p.valid,
        hits: p.hits,
    }))
}

/// Re-probes the field from its current pose, restricted to its original
/// target area.
pub fn reprobe(lpf: &mut LocalProbingField, pattern: &Pattern, cloud: &PointCloud, settings: &ProbeSettings) -> Result<()> {
    let p = probe(&lpf.frame, pattern, cloud, &lpf.target, settings)?;
    lpf.set_probe(p);
    Ok(())
}

/// Moves the field by `transform` while keeping every probed point fixed in
/// world space: local positions become `R⁻¹·(u_i + v_i) − t`, hence
/// `v_i ← R⁻¹·(u_i + v_i) − u_i − t`, and the frame absorbs the inverse
/// change (`axes ← axes·R`, `s ← s + axes·R·t`).
pub fn apply_pose_update(lpf: &mut LocalProbingField, pattern: &Pattern, transform: &RigidTransform) {
    if transform.is_identity() {
        return;
    }
    for (v, u) in lpf.v.iter_mut().zip(pattern.offsets()) {
        *v = transform.apply(&(u + *v)) - u;
    }
    let axes = lpf.frame.axes * transform.rotation;
    lpf.frame.origin += axes * transform.translation;
    lpf.frame.axes = axes;
    lpf.frame.reorthonormalize();
}

/// Rigid fit from the probed local positions `u_i + v_i` to the targets
/// `u_i + w_i`, over valid pattern points.
pub fn fit_field_to(lpf: &LocalProbingField, pattern: &Pattern, w: &[Vec3]) -> RigidFit {
    let mut src = Vec::with_capacity(pattern.len());
    let mut dst = Vec::with_capacity(pattern.len());
    for (i, u) in pattern.offsets().iter().enumerate() {
        if lpf.valid[i] {
            src.push(u + lpf.v[i]);
            dst.push(u + w[i]);
        }
    }
    fit_rigid(&src, &dst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseOptions {
    pub max_iter: usize,
    /// Stop once the relative energy decrease falls below this.
    pub tol: f64,
}

impl Default for PoseOptions {
    fn default() -> Self {
        Self { max_iter: 20, tol: 1e-4 }
    }
}

/// Energies `Σ‖v_i‖²` of the accepted iterates, starting with the initial probe.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseTrace {
    pub energies: Vec<f64>,
}

impl PoseTrace {
    pub fn iterations(&self) -> usize {
        self.energies.len().saturating_sub(1)
    }
}

/// Alternates probing with a rigid fit that pulls the pattern onto its
/// probed points, minimizing `Σ‖v_i‖²`.
///
/// A step that would raise the energy is rejected and ends the iteration,
/// so the recorded energies never increase.
pub fn optimize_pose(
    lpf: &mut LocalProbingField,
    pattern: &Pattern,
    cloud: &PointCloud,
    settings: &ProbeSettings,
    opts: &PoseOptions,
) -> Result<PoseTrace> {
    reprobe(lpf, pattern, cloud, settings)?;
    let mut energy = lpf.field_energy();
    let mut trace = PoseTrace { energies: vec![energy] };
    let zeros = vec![Vec3::zeros(); pattern.len()];
    for _ in 0..opts.max_iter {
        if energy == 0.0 {
            break;
        }
        let fit = fit_field_to(lpf, pattern, &zeros);
        if fit.degenerate {
            break;
        }
        let mut next = lpf.clone();
        apply_pose_update(&mut next, pattern, &fit.transform);
        reprobe(&mut next, pattern, cloud, settings)?;
        let e = next.field_energy();
        if e > energy {
            break;
        }
        *lpf = next;
        trace.energies.push(e);
        let done = energy - e < opts.tol * energy;
        energy = e;
        if done {
            break;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::build_index;
    use crate::pattern::{grid_pattern, Pattern, PatternKind};
    use nalgebra::{Rotation3, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_plane(h: f64, spacing: f64, half: f64) -> PointCloud {
        let n = (2.0 * half / spacing).round() as i64;
        let mut pts = Vec::new();
        for i in 0..=n {
            for j in 0..=n {
                pts.push(Vec3::new(-half + i as f64 * spacing, -half + j as f64 * spacing, h));
            }
        }
        PointCloud::new(pts).unwrap()
    }

    fn all_indices(c: &PointCloud) -> Vec<usize> {
        (0..c.len()).collect()
    }

    #[test]
    fn exact_overhead_points_give_vertical_field() {
        let pattern = grid_pattern(8, 1.0).unwrap();
        let h = 0.3;
        let pts: Vec<Vec3> = pattern.offsets().iter().map(|u| u + Vec3::new(0.0, 0.0, h)).collect();
        let cloud = PointCloud::new(pts).unwrap();
        let frame = LocalFrame::identity(Vec3::zeros());
        let p = probe_aoap(&frame, &pattern, &cloud, &all_indices(&cloud), &ProbeSettings::default()).unwrap();
        for v in &p.v {
            assert_eq!(*v, Vec3::new(0.0, 0.0, h));
        }
    }

    #[test]
    fn dense_plane_field_is_near_vertical() {
        let pattern = grid_pattern(16, 1.0).unwrap();
        let spacing = 0.01;
        let cloud = dense_plane(0.2, spacing, 1.2);
        let frame = LocalFrame::identity(Vec3::zeros());
        let p = probe_aoap(&frame, &pattern, &cloud, &all_indices(&cloud), &ProbeSettings::default()).unwrap();
        for v in &p.v {
            assert!((v - Vec3::new(0.0, 0.0, 0.2)).norm() <= spacing);
        }
    }

    #[test]
    fn aoap_prefers_in_plane_neighbor_over_3d_neighbor() {
        let pattern = Pattern::from_offsets(vec![Vec3::zeros()], 1.0, PatternKind::Random { seed: 0 }).unwrap();
        // a: directly above but high; b: close in 3D but off to the side
        let cloud = PointCloud::new(vec![Vec3::new(0.0, 0.0, 0.9), Vec3::new(0.2, 0.0, 0.0)]).unwrap();
        let frame = LocalFrame::identity(Vec3::zeros());
        let t = all_indices(&cloud);
        let s = ProbeSettings::default();
        assert_eq!(probe_aoap(&frame, &pattern, &cloud, &t, &s).unwrap().hits, vec![0]);
        assert_eq!(probe_nearest(&frame, &pattern, &cloud, &t, &s).unwrap().hits, vec![1]);
    }

    #[test]
    fn aoap_tie_break_by_height_then_index() {
        let pattern = Pattern::from_offsets(vec![Vec3::zeros()], 1.0, PatternKind::Random { seed: 0 }).unwrap();
        let cloud = PointCloud::new(vec![
            Vec3::new(0.0, 0.0, 0.5),
            Vec3::new(0.0, 0.0, -0.2),
            Vec3::new(0.0, 0.0, 0.2),
        ])
        .unwrap();
        let frame = LocalFrame::identity(Vec3::zeros());
        let p = probe_aoap(&frame, &pattern, &cloud, &all_indices(&cloud), &ProbeSettings::default()).unwrap();
        assert_eq!(p.hits, vec![1]);
    }

    #[test]
    fn nearest_probe_cases() {
        let pattern = grid_pattern(4, 1.0).unwrap();
        let frame = LocalFrame::identity(Vec3::zeros());
        let s = ProbeSettings::default();
        let single = PointCloud::new(vec![Vec3::new(0.3, 0.1, 0.4)]).unwrap();
        let p = probe_nearest(&frame, &pattern, &single, &[0], &s).unwrap();
        for (u, v) in pattern.offsets().iter().zip(&p.v) {
            assert!((u + v - Vec3::new(0.3, 0.1, 0.4)).norm() < 1e-15);
        }
        let one = Pattern::from_offsets(vec![Vec3::zeros()], 1.0, PatternKind::Random { seed: 0 }).unwrap();
        let sym = PointCloud::new(vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, -1.0)]).unwrap();
        assert_eq!(probe_nearest(&frame, &one, &sym, &[0, 1], &s).unwrap().hits, vec![0]);
    }

    #[test]
    fn nearest_probe_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pattern = grid_pattern(10, 1.0).unwrap();
        let pts: Vec<Vec3> = (0..300)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5)))
            .collect();
        let cloud = PointCloud::new(pts.clone()).unwrap();
        let frame = LocalFrame::random(Vec3::new(0.1, 0.0, 0.0), &mut rng);
        let t = all_indices(&cloud);
        let p = probe_nearest(&frame, &pattern, &cloud, &t, &ProbeSettings::default()).unwrap();
        for (i, u) in pattern.offsets().iter().enumerate() {
            let w = frame.to_world(u);
            let best = (0..pts.len())
                .min_by(|&a, &b| (pts[a] - w).norm_squared().total_cmp(&(pts[b] - w).norm_squared()))
                .unwrap();
            assert_eq!(p.hits[i], best);
        }
    }

    #[test]
    fn probed_points_are_target_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pattern = grid_pattern(12, 0.5).unwrap();
        let pts: Vec<Vec3> = (0..2000)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.1 * rng.random::<f64>()))
            .collect();
        let cloud = PointCloud::new(pts).unwrap();
        let index = build_index(&cloud).unwrap();
        let frame = LocalFrame::random(Vec3::zeros(), &mut rng);
        let lpf = build_lpf(frame, &pattern, &cloud, &index, &ProbeSettings::default()).unwrap().unwrap();
        for i in 0..pattern.len() {
            assert!(lpf.target.binary_search(&lpf.hits[i]).is_ok());
            let q = cloud.points()[lpf.hits[i]];
            assert!((lpf.probed_point(&pattern, i) - q).norm() < 1e-12);
        }
    }

    #[test]
    fn target_sphere_is_closed() {
        let cloud = PointCloud::new(vec![Vec3::new(1.1, 0.0, 0.0), Vec3::new(5.0, 0.0, 0.0)]).unwrap();
        let index = build_index(&cloud).unwrap();
        assert_eq!(select_target(&index, &Vec3::zeros(), 1.0), vec![0]);
        assert!(select_target(&index, &Vec3::new(-10.0, 0.0, 0.0), 1.0).is_empty());
    }

    #[test]
    fn empty_target_errors() {
        let pattern = grid_pattern(4, 1.0).unwrap();
        let cloud = PointCloud::new(vec![Vec3::zeros()]).unwrap();
        let f = LocalFrame::identity(Vec3::zeros());
        assert!(matches!(
            probe_aoap(&f, &pattern, &cloud, &[], &ProbeSettings::default()),
            Err(LpfError::EmptyTarget)
        ));
    }

    #[test]
    fn pose_update_preserves_probed_world_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pattern = grid_pattern(8, 0.5).unwrap();
        let cloud = dense_plane(0.0, 0.05, 1.0);
        let index = build_index(&cloud).unwrap();
        let frame = LocalFrame::random(Vec3::new(0.05, 0.0, 0.1), &mut rng);
        let mut lpf = build_lpf(frame, &pattern, &cloud, &index, &ProbeSettings::default()).unwrap().unwrap();
        let before: Vec<Vec3> = (0..pattern.len()).map(|i| lpf.probed_point(&pattern, i)).collect();
        let axis = Unit::new_normalize(Vec3::new(0.3, -0.2, 0.9));
        let t = RigidTransform {
            rotation: *Rotation3::from_axis_angle(&axis, 0.4).matrix(),
            translation: Vec3::new(0.1, -0.05, 0.2),
        };
        let target = lpf.target.clone();
        apply_pose_update(&mut lpf, &pattern, &t);
        assert_eq!(lpf.target, target);
        assert!(lpf.frame.orthonormality_error() < 1e-10);
        for (i, b) in before.iter().enumerate() {
            assert!((lpf.probed_point(&pattern, i) - b).norm() < 1e-12);
        }
        let snapshot = lpf.clone();
        apply_pose_update(&mut lpf, &pattern, &RigidTransform::identity());
        assert_eq!(lpf, snapshot);
    }

    #[test]
    fn pose_on_coincident_plane_converges_immediately() {
        let pattern = grid_pattern(8, 0.5).unwrap();
        let pts: Vec<Vec3> = pattern.offsets().to_vec();
        let cloud = PointCloud::new(pts).unwrap();
        let index = build_index(&cloud).unwrap();
        let mut lpf = build_lpf(LocalFrame::identity(Vec3::zeros()), &pattern, &cloud, &index, &ProbeSettings::default())
            .unwrap()
            .unwrap();
        let trace = optimize_pose(&mut lpf, &pattern, &cloud, &ProbeSettings::default(), &PoseOptions::default()).unwrap();
        assert!(trace.iterations() <= 1);
        assert!(lpf.field_energy() < 1e-20);
    }

    #[test]
    fn tilted_pattern_settles_on_plane() {
        let pattern = grid_pattern(16, 0.5).unwrap();
        let cloud = dense_plane(0.0, 0.01, 1.0);
        let index = build_index(&cloud).unwrap();
        let tilt = Rotation3::from_axis_angle(&Vec3::x_axis(), 20f64.to_radians());
        let frame = LocalFrame::new(Vec3::new(0.0, 0.0, 0.05), *tilt.matrix());
        let mut lpf = build_lpf(frame, &pattern, &cloud, &index, &ProbeSettings::default()).unwrap().unwrap();
        let trace = optimize_pose(&mut lpf, &pattern, &cloud, &ProbeSettings::default(), &PoseOptions::default()).unwrap();
        for w in trace.energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        let angle = lpf.frame.normal().dot(&Vec3::z()).abs().min(1.0).acos().to_degrees();
        assert!(angle < 2.0, "normal off by {angle}°");
        // converged field is orthogonal to the plane up to the target spacing
        for v in &lpf.v {
            assert!(v.xy().norm() <= 0.01);
        }
    }

    #[test]
    fn masking_flags_points_outside_the_footprint() {
        let pattern = grid_pattern(16, 1.0).unwrap();
        // half plane x ≥ 0
        let pts: Vec<Vec3> = dense_plane(0.0, 0.02, 1.2).into_points().into_iter().filter(|p| p.x >= 0.0).collect();
        let cloud = PointCloud::new(pts).unwrap();
        let settings = ProbeSettings {
            mask_factor: Some(2.0),
            ..Default::default()
        };
        let p = probe_aoap(&LocalFrame::identity(Vec3::zeros()), &pattern, &cloud, &all_indices(&cloud), &settings).unwrap();
        for (u, ok) in pattern.offsets().iter().zip(&p.valid) {
            if u.x < -2.0 * pattern.spacing() {
                assert!(!ok);
            }
            if u.x >= 0.0 {
                assert!(ok);
            }
        }
    }
}
