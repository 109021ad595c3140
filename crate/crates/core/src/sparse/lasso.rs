use nalgebra::{DMatrix, DVector};

use super::Dictionary;
use crate::error::{LpfError, Result};

/// Certificate tolerance promised by [`lasso_code`].
pub const CERTIFICATE_TOL: f64 = 1e-6;

const MAX_SWEEPS: usize = 20_000;
const STOP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub coeffs: DVector<f64>,
}

impl SparseCode {
    pub fn zeros(d: usize) -> Self {
        Self {
            coeffs: DVector::zeros(d),
        }
    }

    pub fn nnz(&self) -> usize {
        self.coeffs.iter().filter(|c| **c != 0.0).count()
    }

    pub fn l1(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }
}

#[inline]
fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `‖v − Dα‖² + λ‖α‖₁`.
pub fn lasso_objective(v: &DVector<f64>, dict: &Dictionary, alpha: &DVector<f64>, lambda: f64) -> f64 {
    (v - dict.atoms() * alpha).norm_squared() + lambda * alpha.lp_norm(1)
}

/// Largest violation of the subgradient optimality conditions, computed
/// directly from the residual `v − Dα`.
pub fn certificate_residual(v: &DVector<f64>, dict: &Dictionary, alpha: &DVector<f64>, lambda: f64) -> f64 {
    let r = v - dict.atoms() * alpha;
    let c = dict.atoms().tr_mul(&r) * 2.0;
    violation(&c, alpha, lambda)
}

fn violation(c: &DVector<f64>, alpha: &DVector<f64>, lambda: f64) -> f64 {
    c.iter()
        .zip(alpha.iter())
        .map(|(&ck, &ak)| {
            if ak != 0.0 {
                (ck - lambda * ak.signum()).abs()
            } else {
                (ck.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Coordinate descent on the Gram form `‖v‖² − 2αᵀb + αᵀGα + λ‖α‖₁`.
///
/// `gram = DᵀD`, `b = Dᵀv`; `alpha` is the warm start and is overwritten.
pub(crate) fn lasso_gram(gram: &DMatrix<f64>, b: &DVector<f64>, lambda: f64, alpha: &mut DVector<f64>) {
    let d = b.len();
    let half = 0.5 * lambda;
    let mut g_alpha = gram * &*alpha;
    for _ in 0..MAX_SWEEPS {
        for k in 0..d {
            let gkk = gram[(k, k)];
            if gkk <= 0.0 {
                continue;
            }
            let old = alpha[k];
            let c = b[k] - g_alpha[k] + gkk * old;
            let new = soft(c, half) / gkk;
            if new != old {
                let delta = new - old;
                for l in 0..d {
                    g_alpha[l] += gram[(l, k)] * delta;
                }
                alpha[k] = new;
            }
        }
        // recompute to avoid drift in the running product
        g_alpha = gram * &*alpha;
        let c = (b - &g_alpha) * 2.0;
        if violation(&c, alpha, lambda) <= STOP_TOL {
            return;
        }
    }
    log::debug!("lasso coordinate descent hit the sweep limit");
}

/// Sparse code of `v` over `dict` minimizing `‖v − Dα‖² + λ‖α‖₁`.
pub fn lasso_code(v: &DVector<f64>, dict: &Dictionary, lambda: f64) -> Result<SparseCode> {
    if v.len() != dict.signal_len() {
        return Err(LpfError::DimensionMismatch {
            expected: dict.signal_len(),
            got: v.len(),
        });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(LpfError::InvalidArgument(format!("lambda must be non-negative, got {lambda}")));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(LpfError::NonFinite(i));
    }
    let gram = dict.gram();
    let b = dict.atoms().tr_mul(v);
    let mut alpha = DVector::zeros(dict.len());
    lasso_gram(&gram, &b, lambda, &mut alpha);
    Ok(SparseCode { coeffs: alpha })
}
