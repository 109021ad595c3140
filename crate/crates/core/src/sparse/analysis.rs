use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::dictionary::{code_all, column_terms, init_dictionary, objective_terms, refine_dictionary, Dictionary};
use crate::config::{AnalysisConfig, Seeding};
use crate::error::{LpfError, Result};
use crate::geom::{build_index, poisson_seed, stride_seed, HashGrid, LocalFrame, PointCloud, SeedSet, SpatialIndex, Vec3};
use crate::lpf::{apply_pose_update, build_lpf_with_radius, fit_field_to, optimize_pose, reprobe, LocalProbingField, ProbeSettings};
use crate::pattern::Pattern;
use crate::rigid::RigidFit;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Energy {
    pub l2: f64,
    pub l1: f64,
    /// `l2 + λ·l1`.
    pub total: f64,
}

impl Energy {
    pub fn new(l2: f64, l1: f64, lambda: f64) -> Self {
        Self {
            l2,
            l1,
            total: l2 + lambda * l1,
        }
    }
}

/// Energies after each of the three steps of one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IterationEnergy {
    pub dictionary: Energy,
    pub pose: Energy,
    pub reprobe: Energy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisState {
    /// Fully resolved configuration (no auto fields left).
    pub config: AnalysisConfig,
    pub pattern: Pattern,
    pub lpfs: Vec<LocalProbingField>,
    pub dictionary: Dictionary,
    /// `d × N` coefficients, column `j` for field `j`.
    pub codes: DMatrix<f64>,
    /// Energy before the first dictionary step (all codes zero).
    pub initial_energy: Energy,
    pub energy_log: Vec<IterationEnergy>,
}

impl AnalysisState {
    pub fn lambda(&self) -> f64 {
        self.config.lambda_value()
    }

    pub fn signals(&self) -> DMatrix<f64> {
        signal_matrix(&self.lpfs, self.pattern.len())
    }

    /// `Dα_j` split into per-pattern-point local vectors.
    pub fn reconstruction(&self, j: usize) -> Vec<Vec3> {
        field_from_signal(&(self.dictionary.atoms() * self.codes.column(j)))
    }

    /// Energy of the stored fields, dictionary and codes.
    pub fn energy(&self) -> Energy {
        let (l2, l1) = objective_terms(&self.signals(), &self.dictionary, &self.codes);
        Energy::new(l2, l1, self.lambda())
    }
}

/// Flattens `v` into a length-`3M` vector; masked entries are zero.
pub fn signal_of(lpf: &LocalProbingField) -> DVector<f64> {
    let mut s = DVector::zeros(3 * lpf.v.len());
    for (i, (v, ok)) in lpf.v.iter().zip(&lpf.valid).enumerate() {
        if *ok {
            s.fixed_rows_mut::<3>(3 * i).copy_from(v);
        }
    }
    s
}

pub fn field_from_signal(s: &DVector<f64>) -> Vec<Vec3> {
    s.as_slice().chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

pub fn signal_matrix(lpfs: &[LocalProbingField], m: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(3 * m, lpfs.len());
    for (j, l) in lpfs.iter().enumerate() {
        out.set_column(j, &signal_of(l));
    }
    out
}

/// Rigid fit between `{u_i + v_i}` and `{u_i + ṽ_i}` over valid points.
pub fn pose_step(lpf: &LocalProbingField, pattern: &Pattern, v_tilde: &DVector<f64>) -> Result<RigidFit> {
    if v_tilde.len() != 3 * pattern.len() {
        return Err(LpfError::DimensionMismatch {
            expected: 3 * pattern.len(),
            got: v_tilde.len(),
        });
    }
    Ok(fit_field_to(lpf, pattern, &field_from_signal(v_tilde)))
}

/// Builds one field per seed; seeds whose target area is too small or
/// collinear are dropped and the points they alone covered are re-seeded
/// where possible.
pub fn build_fields(
    cloud: &PointCloud,
    index: &SpatialIndex,
    pattern: &Pattern,
    config: &AnalysisConfig,
    seeds: &SeedSet,
) -> Result<Vec<LocalProbingField>> {
    let settings = config.probe_settings();
    let target_radius = config.target_radius_factor * config.radius;
    let built: Vec<Option<LocalProbingField>> = seeds
        .seeds
        .par_iter()
        .map(|(_, frame)| build_lpf_with_radius(*frame, pattern, cloud, index, &settings, target_radius))
        .collect::<Result<_>>()?;
    let dropped = built.iter().filter(|b| b.is_none()).count();
    let mut lpfs: Vec<LocalProbingField> = built.into_iter().flatten().collect();
    if dropped > 0 {
        let added = reseed_uncovered(cloud, index, pattern, config, &settings, &mut lpfs)?;
        log::info!("dropped {dropped} degenerate fields, re-seeded {added}");
    }
    Ok(lpfs)
}

fn reseed_uncovered(
    cloud: &PointCloud,
    index: &SpatialIndex,
    pattern: &Pattern,
    config: &AnalysisConfig,
    settings: &ProbeSettings,
    lpfs: &mut Vec<LocalProbingField>,
) -> Result<usize> {
    let radius = config.target_radius_factor * config.radius;
    let mut grid = HashGrid::new(radius);
    for (j, l) in lpfs.iter().enumerate() {
        grid.insert(j, &l.target_center);
    }
    let mut rng = rng::stream(config.seed, rng::STREAM_RESEED);
    let r2 = radius * radius;
    let mut added = 0;
    let mut stranded = 0;
    for p in cloud.points() {
        if grid.any_near(p, radius, |j| (lpfs[j].target_center - p).norm_squared() <= r2) {
            continue;
        }
        let frame = LocalFrame::random(*p, &mut rng);
        match build_lpf_with_radius(frame, pattern, cloud, index, settings, radius)? {
            Some(l) => {
                grid.insert(lpfs.len(), p);
                lpfs.push(l);
                added += 1;
            }
            None => stranded += 1,
        }
    }
    if stranded > 0 {
        log::warn!("{stranded} points have no stable neighborhood and remain uncovered");
    }
    Ok(added)
}

pub fn seed_cloud(cloud: &PointCloud, config: &AnalysisConfig) -> Result<SeedSet> {
    let coverage = config.target_radius_factor * config.radius;
    match config.seeding {
        Seeding::Poisson => poisson_seed(cloud, 0.5 * config.radius, coverage, config.seed),
        Seeding::Stride { stride } => stride_seed(cloud, stride, coverage, config.seed),
    }
}

/// Full analysis: seeding, field construction, optional initial pose
/// optimization, then `outer_iters` rounds of
/// dictionary learning / pose update / re-probing.
pub fn analyze(cloud: &PointCloud, config: &AnalysisConfig) -> Result<AnalysisState> {
    let config = config.resolve(cloud)?;
    let pattern = config.build_pattern()?;
    let index = build_index(cloud)?;
    let seeds = seed_cloud(cloud, &config)?;
    let lpfs = build_fields(cloud, &index, &pattern, &config, &seeds)?;
    analyze_fields(cloud, &config, pattern, lpfs, None)
}

/// Joint optimization over already-built fields. `warm` supplies a starting
/// dictionary (and codes when their shape matches).
pub fn analyze_fields(
    cloud: &PointCloud,
    config: &AnalysisConfig,
    pattern: Pattern,
    mut lpfs: Vec<LocalProbingField>,
    warm: Option<(Dictionary, DMatrix<f64>)>,
) -> Result<AnalysisState> {
    if lpfs.is_empty() {
        return Err(LpfError::NoFields);
    }
    let lambda = config.lambda_value();
    let settings = config.probe_settings();
    if config.initial_pose {
        let opts = config.pose_options();
        lpfs.par_iter_mut()
            .try_for_each(|l| optimize_pose(l, &pattern, cloud, &settings, &opts).map(|_| ()))?;
    }
    let mut signals = signal_matrix(&lpfs, pattern.len());
    let d = config.atoms;
    let (mut dict, mut codes) = match warm {
        Some((dict, codes)) if dict.signal_len() == signals.nrows() && dict.len() == d => {
            let codes = if codes.shape() == (d, lpfs.len()) {
                codes
            } else {
                DMatrix::zeros(d, lpfs.len())
            };
            (dict, codes)
        }
        _ => (init_dictionary(&signals, d, config.seed)?, DMatrix::zeros(d, lpfs.len())),
    };
    let energy = |s: &DMatrix<f64>, dict: &Dictionary, codes: &DMatrix<f64>| {
        let (l2, l1) = objective_terms(s, dict, codes);
        Energy::new(l2, l1, lambda)
    };
    let initial_energy = energy(&signals, &dict, &codes);
    let mut log = Vec::with_capacity(config.outer_iters);

    for it in 0..config.outer_iters {
        refine_dictionary(&signals, &mut dict, &mut codes, lambda, config.dict_iters)?;
        let e_dict = energy(&signals, &dict, &codes);

        let degenerate = pose_all(&mut lpfs, &mut signals, &pattern, &dict, &codes)?;
        if degenerate > 0 {
            log::warn!("iteration {}: {degenerate} degenerate pose fits left unchanged", it + 1);
        }
        let e_pose = energy(&signals, &dict, &codes);

        lpfs.par_iter_mut().try_for_each(|l| reprobe(l, &pattern, cloud, &settings))?;
        signals = signal_matrix(&lpfs, pattern.len());
        let e_reprobe = energy(&signals, &dict, &codes);

        log::debug!(
            "iteration {}: dictionary {:.6e}, pose {:.6e}, reprobe {:.6e}",
            it + 1,
            e_dict.total,
            e_pose.total,
            e_reprobe.total
        );
        log.push(IterationEnergy {
            dictionary: e_dict,
            pose: e_pose,
            reprobe: e_reprobe,
        });
    }
    // codes follow the final fields
    code_all(&signals, &dict, &mut codes, lambda)?;

    Ok(AnalysisState {
        config: config.clone(),
        pattern,
        lpfs,
        dictionary: dict,
        codes,
        initial_energy,
        energy_log: log,
    })
}

/// Moves every field toward its reconstruction. A field whose `ℓ²` term
/// would grow is left in place. Returns the number of degenerate fits.
fn pose_all(
    lpfs: &mut [LocalProbingField],
    signals: &mut DMatrix<f64>,
    pattern: &Pattern,
    dict: &Dictionary,
    codes: &DMatrix<f64>,
) -> Result<usize> {
    let updates: Vec<(Option<(LocalProbingField, DVector<f64>)>, bool)> = lpfs
        .par_iter()
        .enumerate()
        .map(|(j, l)| {
            let target = dict.atoms() * codes.column(j);
            let fit = pose_step(l, pattern, &target)?;
            if fit.degenerate {
                return Ok((None, true));
            }
            let mut moved = l.clone();
            apply_pose_update(&mut moved, pattern, &fit.transform);
            let s = signal_of(&moved);
            let before = column_terms(signals, dict, codes, j).0;
            let after = (&s - &target).norm_squared();
            Ok(((after <= before).then_some((moved, s)), false))
        })
        .collect::<Result<_>>()?;
    let mut degenerate = 0;
    for (j, (u, deg)) in updates.into_iter().enumerate() {
        degenerate += deg as usize;
        if let Some((l, s)) = u {
            lpfs[j] = l;
            signals.set_column(j, &s);
        }
    }
    Ok(degenerate)
}
