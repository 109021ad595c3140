//! Resampling from reconstructed fields with consensus consolidation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::AnalysisConfig;
use crate::error::{LpfError, Result};
use crate::geom::{HashGrid, PointCloud, Vec3};
use crate::lpf::LocalProbingField;
use crate::sparse::{analyze, AnalysisState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidatePoint {
    pub position: Vec3,
    pub source_lpf: usize,
    pub pattern_index: usize,
}

/// One point per valid pattern entry of every field, at
/// `s + F·(u_i + ṽ_i)` with `ṽ = Dα_j`. Ordered by field, then pattern index.
pub fn reconstruct_candidates(state: &AnalysisState) -> Vec<CandidatePoint> {
    let per_field: Vec<Vec<CandidatePoint>> = (0..state.lpfs.len())
        .into_par_iter()
        .map(|j| {
            let lpf = &state.lpfs[j];
            let rec = state.reconstruction(j);
            state
                .pattern
                .offsets()
                .iter()
                .enumerate()
                .filter(|(i, _)| lpf.valid[*i])
                .map(|(i, u)| CandidatePoint {
                    position: lpf.frame.to_world(&(u + rec[i])),
                    source_lpf: j,
                    pattern_index: i,
                })
                .collect()
        })
        .collect();
    per_field.into_iter().flatten().collect()
}

/// Consolidated output together with the trace of how it was formed.
#[derive(Debug, Clone)]
pub struct Consolidation {
    pub points: PointCloud,
    /// Candidate indices averaged into each output point.
    pub zones: Vec<Vec<usize>>,
    /// Field whose candidate opened each output point.
    pub sources: Vec<usize>,
}

/// Greedy consensus sweep over `candidates` in order.
///
/// For an unconsumed candidate `c`, its influence zone is every unconsumed
/// candidate `k` with `‖k − c‖ ≤ radius` whose field's target sphere holds
/// `c`. The zone mean `q` is emitted unless an earlier output `e` conflicts
/// with it: `‖e − q‖ ≤ radius` with `q` in the target sphere of `e`'s
/// source field or `e` in that of `c`. After emitting, the zone and every
/// candidate conflicting with `q` are consumed.
///
/// Any two outputs `p`, `q` with `q` inside the target sphere of `p`'s
/// source field are thus more than `radius` apart.
pub fn consolidate(candidates: &[CandidatePoint], lpfs: &[LocalProbingField], radius: f64) -> Result<Consolidation> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(LpfError::InvalidArgument(format!("conflict radius must be positive, got {radius}")));
    }
    if let Some(c) = candidates.iter().find(|c| c.source_lpf >= lpfs.len()) {
        return Err(LpfError::InvalidArgument(format!("candidate refers to missing field {}", c.source_lpf)));
    }
    let r2 = radius * radius;
    let mut cgrid = HashGrid::new(radius);
    for (k, c) in candidates.iter().enumerate() {
        cgrid.insert(k, &c.position);
    }
    let mut consumed = vec![false; candidates.len()];
    let mut egrid = HashGrid::new(radius);
    let mut points: Vec<Vec3> = Vec::new();
    let mut zones: Vec<Vec<usize>> = Vec::new();
    let mut sources: Vec<usize> = Vec::new();
    let mut zone = Vec::new();

    for (ci, c) in candidates.iter().enumerate() {
        if consumed[ci] {
            continue;
        }
        let own = &lpfs[c.source_lpf];
        zone.clear();
        cgrid.for_each_near(&c.position, radius, |k| {
            let ck = &candidates[k];
            if !consumed[k]
                && (k == ci || ((ck.position - c.position).norm_squared() <= r2 && lpfs[ck.source_lpf].target_contains(&c.position)))
            {
                zone.push(k);
            }
        });
        zone.sort_unstable();
        let q = zone.iter().map(|&k| candidates[k].position).sum::<Vec3>() / zone.len() as f64;

        let blocked = egrid.any_near(&q, radius, |e| {
            let p = &points[e];
            (p - q).norm_squared() <= r2 && (lpfs[sources[e]].target_contains(&q) || own.target_contains(p))
        });
        if blocked {
            consumed[ci] = true;
            continue;
        }
        for &k in &zone {
            consumed[k] = true;
        }
        cgrid.for_each_near(&q, radius, |k| {
            let ck = &candidates[k];
            if !consumed[k] && (ck.position - q).norm_squared() <= r2 && lpfs[ck.source_lpf].target_contains(&q) {
                consumed[k] = true;
            }
        });
        egrid.insert(points.len(), &q);
        points.push(q);
        zones.push(zone.clone());
        sources.push(c.source_lpf);
    }
    Ok(Consolidation {
        points: PointCloud::new(points)?,
        zones,
        sources,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResampleConfig {
    pub analysis: AnalysisConfig,
    /// Consolidation radius; `conflict_factor · τ_s` when unset.
    pub conflict_radius: Option<f64>,
    pub conflict_factor: f64,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self {
            analysis: AnalysisConfig::default(),
            conflict_radius: None,
            conflict_factor: DEFAULT_CONFLICT_FACTOR,
        }
    }
}

/// Default consolidation radius in units of the pattern spacing `τ_s`.
pub const DEFAULT_CONFLICT_FACTOR: f64 = 0.72;

impl ResampleConfig {
    pub fn conflict_radius_for(&self, state: &AnalysisState) -> f64 {
        self.conflict_radius
            .unwrap_or(self.conflict_factor * state.pattern.spacing())
    }
}

/// Resampled cloud plus the analysis that produced it.
#[derive(Debug, Clone)]
pub struct ResampleOutput {
    pub state: AnalysisState,
    pub consolidation: Consolidation,
    pub conflict_radius: f64,
}

pub fn resample_state(state: AnalysisState, config: &ResampleConfig) -> Result<ResampleOutput> {
    let radius = config.conflict_radius_for(&state);
    let candidates = reconstruct_candidates(&state);
    log::info!("{} candidates from {} fields, conflict radius {radius:.6}", candidates.len(), state.lpfs.len());
    let consolidation = consolidate(&candidates, &state.lpfs, radius)?;
    Ok(ResampleOutput {
        state,
        consolidation,
        conflict_radius: radius,
    })
}

/// Analysis, reconstruction and consolidation in one call.
pub fn resample(cloud: &PointCloud, config: &ResampleConfig) -> Result<ResampleOutput> {
    let state = analyze(cloud, &config.analysis)?;
    resample_state(state, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::LocalFrame;

    fn field(center: Vec3, radius: f64) -> LocalProbingField {
        LocalProbingField {
            frame: LocalFrame::identity(center),
            target: vec![0],
            target_center: center,
            target_radius: radius,
            v: vec![],
            valid: vec![],
            hits: vec![],
        }
    }

    fn cand(p: Vec3, lpf: usize) -> CandidatePoint {
        CandidatePoint {
            position: p,
            source_lpf: lpf,
            pattern_index: 0,
        }
    }

    #[test]
    fn single_candidate_is_kept() {
        let lpfs = vec![field(Vec3::zeros(), 1.0)];
        let out = consolidate(&[cand(Vec3::new(0.1, 0.2, 0.3), 0)], &lpfs, 0.1).unwrap();
        assert_eq!(out.points.points(), &[Vec3::new(0.1, 0.2, 0.3)]);
    }

    #[test]
    fn coincident_candidates_merge() {
        let lpfs = vec![field(Vec3::zeros(), 1.0), field(Vec3::new(0.5, 0.0, 0.0), 1.0)];
        let p = Vec3::new(0.2, 0.0, 0.0);
        let out = consolidate(&[cand(p, 0), cand(p, 1)], &lpfs, 0.1).unwrap();
        assert_eq!(out.points.points(), &[p]);
        assert_eq!(out.zones, vec![vec![0, 1]]);
    }

    #[test]
    fn close_pair_merges_to_midpoint() {
        let tau = 0.1;
        let lpfs = vec![field(Vec3::zeros(), 1.0), field(Vec3::new(0.3, 0.0, 0.0), 1.0)];
        let a = Vec3::new(0.1, 0.0, 0.0);
        let b = Vec3::new(0.1 + 0.5 * tau, 0.0, 0.0);
        let out = consolidate(&[cand(a, 0), cand(b, 1)], &lpfs, tau).unwrap();
        assert_eq!(out.points.len(), 1);
        assert!((out.points.points()[0] - (a + b) / 2.0).norm() < 1e-15);
    }

    #[test]
    fn far_candidates_stay_separate() {
        let lpfs = vec![field(Vec3::zeros(), 1.0)];
        let c = [cand(Vec3::zeros(), 0), cand(Vec3::new(0.5, 0.0, 0.0), 0)];
        assert_eq!(consolidate(&c, &lpfs, 0.1).unwrap().points.len(), 2);
    }

    #[test]
    fn candidate_outside_other_sphere_is_not_merged() {
        // b's field does not contain a, so a's zone excludes b
        let lpfs = vec![field(Vec3::zeros(), 1.0), field(Vec3::new(5.0, 0.0, 0.0), 4.95)];
        let a = Vec3::new(0.0, 0.0, 0.0);
        let b = Vec3::new(0.05, 0.0, 0.0);
        let out = consolidate(&[cand(a, 0), cand(b, 1)], &lpfs, 0.1).unwrap();
        assert_eq!(out.zones[0], vec![0]);
    }

    #[test]
    fn bad_radius() {
        assert!(consolidate(&[], &[], 0.0).is_err());
        assert!(consolidate(&[cand(Vec3::zeros(), 3)], &[], 0.1).is_err());
    }
}
