//! Denoising by alternating field analysis and consensus projection.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AnalysisConfig, Seeding};
use crate::error::{LpfError, Result};
use crate::geom::kdtree::KdTree;
use crate::geom::{build_index, stride_seed, PointCloud, SpatialIndex, Vec3};
use crate::lpf::LocalProbingField;
use crate::metrics::rmse_indexed;
use crate::pattern::Pattern;
use crate::sparse::{analyze_fields, build_fields, AnalysisState, Dictionary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseConfig {
    pub analysis: AnalysisConfig,
    /// Blend rate toward the consensus position.
    pub gamma: f64,
    pub rounds: usize,
    /// Stop once the mean displacement falls below `stop_factor · τ_p`.
    pub stop_factor: f64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            analysis: AnalysisConfig {
                seeding: Seeding::Stride { stride: 1 },
                // pattern points beyond the data must reach it to pull
                // thin structures together
                mask_factor: None,
                ..Default::default()
            },
            gamma: 0.5,
            rounds: 5,
            stop_factor: 0.01,
        }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<()> {
        self.analysis.validate()?;
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(LpfError::InvalidArgument(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.rounds == 0 {
            return Err(LpfError::InvalidArgument("rounds must be at least 1".into()));
        }
        if !(self.stop_factor >= 0.0) {
            return Err(LpfError::InvalidArgument("stop factor must be non-negative".into()));
        }
        Ok(())
    }

    fn stride(&self) -> usize {
        match self.analysis.seeding {
            Seeding::Stride { stride } => stride,
            Seeding::Poisson => 1,
        }
    }
}

/// Position proposed by `lpf` for the point `q`: the reconstructed point
/// `s + F·(u_i + ṽ_i)` of the valid pattern entry whose offset is nearest
/// to the in-plane projection of `q`. `None` when no entry is valid.
pub fn propose_position(q: &Vec3, lpf: &LocalProbingField, pattern: &Pattern, v_tilde: &[Vec3]) -> Option<Vec3> {
    let x = lpf.frame.to_local(q);
    let (i, _) = pattern
        .offsets()
        .iter()
        .enumerate()
        .filter(|(i, _)| lpf.valid[*i])
        .map(|(i, u)| (i, (u.x - x.x).powi(2) + (u.y - x.y).powi(2)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))?;
    Some(lpf.reconstructed_point(pattern, i, &v_tilde[i]))
}

/// Proposals of one field for all its target points, using an in-plane
/// index over the valid pattern entries.
fn field_proposals(lpf: &LocalProbingField, pattern: &Pattern, v_tilde: &[Vec3], cloud: &[Vec3]) -> Vec<(usize, Vec3)> {
    let valid: Vec<usize> = (0..pattern.len()).filter(|&i| lpf.valid[i]).collect();
    if valid.is_empty() {
        return Vec::new();
    }
    let tree = KdTree::new(valid.iter().map(|&i| [pattern.offsets()[i].x, pattern.offsets()[i].y]).collect());
    lpf.target
        .iter()
        .map(|&t| {
            let x = lpf.frame.to_local(&cloud[t]);
            // ties go to the lower pattern index, as in `propose_position`
            let (k, _) = tree.nearest_by(&[x.x, x.y], |_| 0.0).expect("non-empty pattern");
            let i = valid[k];
            (t, lpf.reconstructed_point(pattern, i, &v_tilde[i]))
        })
        .collect()
}

/// Gaussian-weighted mean of `candidates` around `q` with
/// `w = exp(−‖p − q‖² / (2τ_p²))`. Returns `None` without candidates.
pub fn weighted_consensus(q: &Vec3, candidates: &[Vec3], tau_p: f64) -> Option<Vec3> {
    if candidates.is_empty() {
        return None;
    }
    let s = 2.0 * tau_p * tau_p;
    let d2: Vec<f64> = candidates.iter().map(|c| (c - q).norm_squared()).collect();
    // shift exponents by the closest candidate so far ones do not all underflow
    let base = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sum = Vec3::zeros();
    let mut wsum = 0.0;
    for (c, d) in candidates.iter().zip(&d2) {
        let w = (-(d - base) / s).exp();
        sum += c * w;
        wsum += w;
    }
    Some(sum / wsum)
}

/// `(q + γ·q̃) / (1 + γ)`.
pub fn blend(q: &Vec3, q_tilde: &Vec3, gamma: f64) -> Vec3 {
    (q + q_tilde * gamma) / (1.0 + gamma)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiseRound {
    pub fields: usize,
    pub mean_displacement: f64,
    /// `Σ` squared distance of each point to its nearest original point.
    pub data_term: f64,
    /// Points with no proposing field, left in place.
    pub orphans: usize,
    pub rmse: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DenoiseOutput {
    pub cloud: PointCloud,
    pub rounds: Vec<DenoiseRound>,
    pub state: AnalysisState,
}

/// Denoises `cloud`. When `reference` is given, the RMSE to it is recorded
/// after every round.
pub fn denoise(cloud: &PointCloud, config: &DenoiseConfig, reference: Option<&PointCloud>) -> Result<DenoiseOutput> {
    denoise_with_dictionary(cloud, config, reference, None)
}

/// [`denoise`] with the first round's dictionary taken from `dictionary`
/// when its shape fits the configuration.
pub fn denoise_with_dictionary(
    cloud: &PointCloud,
    config: &DenoiseConfig,
    reference: Option<&PointCloud>,
    dictionary: Option<Dictionary>,
) -> Result<DenoiseOutput> {
    config.validate()?;
    let analysis = config.analysis.resolve(cloud)?;
    let tau_p = analysis.tau_p.expect("resolved");
    let pattern = analysis.build_pattern()?;
    let original_index = build_index(cloud)?;
    let reference_index = reference.map(build_index).transpose()?;
    let stop_tol = config.stop_factor * tau_p;
    log::info!("denoising {} points, tau_p {tau_p:.6}, stop at mean displacement {stop_tol:.3e}", cloud.len());

    let mut current = cloud.clone();
    let mut warm: Option<(Dictionary, DMatrix<f64>)> = dictionary.map(|d| (d, DMatrix::zeros(0, 0)));
    let mut prev_frames: Vec<LocalProbingField> = Vec::new();
    let mut rounds = Vec::new();
    let mut last_state = None;

    for round in 0..config.rounds {
        let index = build_index(&current)?;
        let mut seeds = stride_seed(&current, config.stride(), analysis.target_radius_factor * analysis.radius, analysis.seed)?;
        if seeds.len() == prev_frames.len() {
            // keep last round's orientations, moved to the new seed positions
            for ((p, f), old) in seeds.seeds.iter_mut().zip(&prev_frames) {
                f.axes = old.frame.axes;
                f.origin = *p;
            }
        }
        let lpfs = build_fields(&current, &index, &pattern, &analysis, &seeds)?;
        let state = analyze_fields(&current, &analysis, pattern.clone(), lpfs, warm.take())?;

        let (next, orphans) = project(&current, &state, tau_p, config.gamma);
        let n = current.len() as f64;
        let mean_displacement = next
            .iter()
            .zip(current.points())
            .map(|(a, b)| (a - b).norm())
            .sum::<f64>()
            / n;
        let next = PointCloud::new(next)?;
        let data_term = data_term(&next, &original_index);
        let err = reference_index.as_ref().map(|ri| rmse_indexed(&next, ri));
        log::info!(
            "round {}: {} fields, mean displacement {mean_displacement:.4e}, data term {data_term:.4e}{}",
            round + 1,
            state.lpfs.len(),
            err.map(|e| format!(", rmse {e:.5}")).unwrap_or_default()
        );
        rounds.push(DenoiseRound {
            fields: state.lpfs.len(),
            mean_displacement,
            data_term,
            orphans,
            rmse: err,
        });
        current = next;
        warm = Some((state.dictionary.clone(), state.codes.clone()));
        prev_frames = state.lpfs.clone();
        last_state = Some(state);
        if mean_displacement < stop_tol {
            break;
        }
    }
    Ok(DenoiseOutput {
        cloud: current,
        rounds,
        state: last_state.expect("at least one round"),
    })
}

/// One projection pass over the fields of `state`, whose targets index
/// into `current`: gather proposals per point in field order, take their
/// weighted consensus and blend. Returns the moved points and the number
/// of points no field proposed for, which stay in place.
pub fn project(current: &PointCloud, state: &AnalysisState, tau_p: f64, gamma: f64) -> (Vec<Vec3>, usize) {
    let pts = current.points();
    let per_field: Vec<Vec<(usize, Vec3)>> = (0..state.lpfs.len())
        .into_par_iter()
        .map(|j| field_proposals(&state.lpfs[j], &state.pattern, &state.reconstruction(j), pts))
        .collect();
    let mut proposals: Vec<Vec<Vec3>> = vec![Vec::new(); pts.len()];
    for list in per_field {
        for (t, p) in list {
            proposals[t].push(p);
        }
    }
    let moved: Vec<Option<Vec3>> = pts
        .par_iter()
        .zip(&proposals)
        .map(|(q, c)| weighted_consensus(q, c, tau_p).map(|qt| blend(q, &qt, gamma)))
        .collect();
    let orphans = moved.iter().filter(|m| m.is_none()).count();
    let next = moved.into_iter().zip(pts).map(|(m, q)| m.unwrap_or(*q)).collect();
    (next, orphans)
}

fn data_term(cloud: &PointCloud, original: &SpatialIndex) -> f64 {
    let d: Vec<f64> = cloud
        .points()
        .par_iter()
        .map(|p| original.nearest(p).map(|(_, d)| d * d).unwrap_or(0.0))
        .collect();
    d.iter().sum()
}
