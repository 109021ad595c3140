//! Analysis parameters shared by the pipelines and the CLI.

use serde::{Deserialize, Serialize};

use crate::error::{LpfError, Result};
use crate::geom::{estimate_tau_p, PointCloud};
use crate::lpf::{PoseOptions, ProbeOperator, ProbeSettings, TARGET_RADIUS_FACTOR};
use crate::pattern::{grid_pattern, random_pattern, Pattern};
use crate::rng::DEFAULT_SEED;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatternSpec {
    Grid { grid_n: usize },
    Random { m: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Seeding {
    /// Dart throwing with rejection radius `r/2`.
    Poisson,
    /// Every `stride`-th input point.
    Stride { stride: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    #[default]
    Aoap,
    Nearest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub radius: f64,
    pub pattern: PatternSpec,
    pub atoms: usize,
    /// Sparsity weight; derived from `atoms` when unset.
    pub lambda: Option<f64>,
    pub target_radius_factor: f64,
    /// Probing accuracy; median NN distance of the input when unset.
    pub tau_p: Option<f64>,
    pub outer_iters: usize,
    pub dict_iters: usize,
    pub pose_iters: usize,
    pub pose_tol: f64,
    /// Run the plain pose optimization on every field before joint analysis.
    pub initial_pose: bool,
    /// Pattern points whose probe lands farther than `mask_factor · τ_s`
    /// in-plane are masked; `None` disables masking.
    pub mask_factor: Option<f64>,
    pub probe: ProbeKind,
    pub seeding: Seeding,
    pub seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            radius: 1.0,
            pattern: PatternSpec::Grid { grid_n: 16 },
            atoms: 16,
            lambda: None,
            target_radius_factor: TARGET_RADIUS_FACTOR,
            tau_p: None,
            outer_iters: 10,
            dict_iters: 10,
            pose_iters: 20,
            pose_tol: 1e-4,
            initial_pose: true,
            mask_factor: Some(2.0),
            probe: ProbeKind::Aoap,
            seeding: Seeding::Poisson,
            seed: DEFAULT_SEED,
        }
    }
}

/// `λ = 0.2` for dictionaries of 32 atoms or more, `0.05` below.
pub fn auto_lambda(atoms: usize) -> f64 {
    if atoms >= 32 {
        0.2
    } else {
        0.05
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LpfError::InvalidArgument(m));
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return bad(format!("radius must be positive, got {}", self.radius));
        }
        if self.atoms == 0 {
            return bad("atoms must be at least 1".into());
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("lambda must be non-negative, got {l}"));
            }
        }
        if !(self.target_radius_factor >= 1.0) {
            return bad(format!("target radius factor must be >= 1, got {}", self.target_radius_factor));
        }
        if let Some(t) = self.tau_p {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("tau_p must be positive, got {t}"));
            }
        }
        if let Some(f) = self.mask_factor {
            if !(f > 0.0) {
                return bad(format!("mask factor must be positive, got {f}"));
            }
        }
        match self.pattern {
            PatternSpec::Grid { grid_n } if grid_n < 2 => return bad(format!("grid_n must be >= 2, got {grid_n}")),
            PatternSpec::Random { m: 0 } => return bad("random pattern needs m >= 1".into()),
            _ => {}
        }
        if let Seeding::Stride { stride: 0 } = self.seeding {
            return bad("stride must be at least 1".into());
        }
        Ok(())
    }

    pub fn lambda_value(&self) -> f64 {
        self.lambda.unwrap_or_else(|| auto_lambda(self.atoms))
    }

    /// Fills every auto-derived field from the input cloud.
    pub fn resolve(&self, cloud: &PointCloud) -> Result<AnalysisConfig> {
        self.validate()?;
        let mut out = self.clone();
        out.lambda = Some(self.lambda_value());
        if out.tau_p.is_none() {
            out.tau_p = Some(estimate_tau_p(cloud)?);
        }
        Ok(out)
    }

    pub fn build_pattern(&self) -> Result<Pattern> {
        match self.pattern {
            PatternSpec::Grid { grid_n } => grid_pattern(grid_n, self.radius),
            PatternSpec::Random { m } => random_pattern(m, self.radius, self.seed),
        }
    }

    pub fn probe_settings(&self) -> ProbeSettings {
        ProbeSettings {
            operator: match self.probe {
                ProbeKind::Aoap => ProbeOperator::Aoap,
                ProbeKind::Nearest => ProbeOperator::Nearest,
            },
            mask_factor: self.mask_factor,
        }
    }

    pub fn pose_options(&self) -> PoseOptions {
        PoseOptions {
            max_iter: self.pose_iters,
            tol: self.pose_tol,
        }
    }
}
