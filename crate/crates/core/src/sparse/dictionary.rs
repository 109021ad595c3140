use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::lasso::lasso_gram;
use crate::error::{LpfError, Result};
use crate::rng;

/// `d` unit-norm atoms stored as the columns of a `3M × d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
}

impl Dictionary {
    /// Normalizes each column; zero or non-finite columns are rejected.
    pub fn from_columns_normalized(mut atoms: DMatrix<f64>) -> Result<Self> {
        if atoms.ncols() == 0 || atoms.nrows() == 0 {
            return Err(LpfError::InvalidArgument("dictionary needs at least one non-empty atom".into()));
        }
        for mut col in atoms.column_iter_mut() {
            let n = col.norm();
            if !(n > 0.0 && n.is_finite()) {
                return Err(LpfError::InvalidArgument("dictionary atoms must be finite and non-zero".into()));
            }
            col /= n;
        }
        Ok(Self { atoms })
    }

    /// Takes atoms as-is; used when restoring a stored dictionary.
    pub fn from_raw(atoms: DMatrix<f64>) -> Result<Self> {
        if atoms.ncols() == 0 || atoms.iter().any(|x| !x.is_finite()) {
            return Err(LpfError::InvalidArgument("dictionary must be non-empty and finite".into()));
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    /// Number of atoms `d`.
    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.ncols() == 0
    }

    pub fn signal_len(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn gram(&self) -> DMatrix<f64> {
        self.atoms.tr_mul(&self.atoms)
    }

    pub fn atom_norms(&self) -> Vec<f64> {
        self.atoms.column_iter().map(|c| c.norm()).collect()
    }
}

/// `Σ_j ‖V_j − Dα_j‖²` and `Σ_j ‖α_j‖₁` for signals and codes stored
/// column-wise, accumulated in column order.
pub fn objective_terms(signals: &DMatrix<f64>, dict: &Dictionary, codes: &DMatrix<f64>) -> (f64, f64) {
    let mut l2 = 0.0;
    let mut l1 = 0.0;
    for j in 0..signals.ncols() {
        let (a, b) = column_terms(signals, dict, codes, j);
        l2 += a;
        l1 += b;
    }
    (l2, l1)
}

pub(crate) fn column_terms(signals: &DMatrix<f64>, dict: &Dictionary, codes: &DMatrix<f64>, j: usize) -> (f64, f64) {
    let r = signals.column(j) - dict.atoms() * codes.column(j);
    (r.norm_squared(), codes.column(j).lp_norm(1))
}

pub fn total_objective(signals: &DMatrix<f64>, dict: &Dictionary, codes: &DMatrix<f64>, lambda: f64) -> f64 {
    let (l2, l1) = objective_terms(signals, dict, codes);
    l2 + lambda * l1
}

fn check_shapes(signals: &DMatrix<f64>, dict: &Dictionary, codes: &DMatrix<f64>) -> Result<()> {
    if signals.nrows() != dict.signal_len() {
        return Err(LpfError::DimensionMismatch {
            expected: dict.signal_len(),
            got: signals.nrows(),
        });
    }
    if codes.nrows() != dict.len() || codes.ncols() != signals.ncols() {
        return Err(LpfError::DimensionMismatch {
            expected: dict.len() * signals.ncols(),
            got: codes.nrows() * codes.ncols(),
        });
    }
    Ok(())
}

/// Re-codes every signal, warm-started from `codes`. A signal keeps its
/// previous code if the new one does not lower its objective, so the total
/// never increases.
pub fn code_all(signals: &DMatrix<f64>, dict: &Dictionary, codes: &mut DMatrix<f64>, lambda: f64) -> Result<()> {
    check_shapes(signals, dict, codes)?;
    let gram = dict.gram();
    let fresh: Vec<Option<DVector<f64>>> = (0..signals.ncols())
        .into_par_iter()
        .map(|j| {
            let v = signals.column(j).into_owned();
            let b = dict.atoms().tr_mul(&v);
            let old = codes.column(j).into_owned();
            let mut alpha = old.clone();
            lasso_gram(&gram, &b, lambda, &mut alpha);
            let before = objective_of(&v, dict, &old, lambda);
            let after = objective_of(&v, dict, &alpha, lambda);
            (after <= before).then_some(alpha)
        })
        .collect();
    for (j, a) in fresh.into_iter().enumerate() {
        if let Some(a) = a {
            codes.set_column(j, &a);
        }
    }
    Ok(())
}

fn objective_of(v: &DVector<f64>, dict: &Dictionary, alpha: &DVector<f64>, lambda: f64) -> f64 {
    (v - dict.atoms() * alpha).norm_squared() + lambda * alpha.lp_norm(1)
}

/// Block coordinate descent over the atoms with codes held fixed up to a
/// per-atom rescale.
///
/// For atom `k` with code row `a` the unconstrained least-squares atom is
/// `u = R_k·a / ‖a‖²` (with `R_k` the residual without atom `k`). Two unit
/// atoms are considered: `u/‖u‖` with the row scaled by `‖u‖`, and the
/// projection of `u` onto the unit ball with the row scaled down when
/// `‖u‖ < 1`. The candidate with the lowest objective (the current atom
/// included) is kept, so no step raises `ℓ² + λ·ℓ¹`.
///
/// Atoms left without any nonzero coefficient are replaced by the
/// normalized signals with the largest residuals.
pub fn dictionary_update(signals: &DMatrix<f64>, codes: &mut DMatrix<f64>, dict: &mut Dictionary, lambda: f64) -> Result<()> {
    check_shapes(signals, dict, codes)?;
    if signals.ncols() == 0 {
        return Err(LpfError::InvalidArgument("dictionary update needs at least one signal".into()));
    }
    let before = total_objective(signals, dict, codes, lambda);
    let saved = (dict.clone(), codes.clone());
    let mut residual = signals - dict.atoms() * &*codes;

    for k in 0..dict.len() {
        let support: Vec<usize> = (0..codes.ncols()).filter(|&j| codes[(k, j)] != 0.0).collect();
        if support.is_empty() {
            continue;
        }
        let atom = dict.atoms.column(k).into_owned();
        let row: Vec<f64> = support.iter().map(|&j| codes[(k, j)]).collect();
        let s: f64 = row.iter().map(|a| a * a).sum();
        let l1: f64 = row.iter().map(|a| a.abs()).sum();
        // g = R_k·a
        let mut g = DVector::zeros(dict.signal_len());
        for (&j, &a) in support.iter().zip(&row) {
            g.axpy(a, &(residual.column(j) + &atom * a), 1.0);
        }
        let gn = g.norm();
        if !(gn > 0.0) {
            continue;
        }
        let un = gn / s;
        // objective changes relative to ‖R_k‖², see doc comment
        let keep = -2.0 * atom.dot(&g) + s;
        let scaled = -gn * gn / s + lambda * (un - 1.0) * l1;
        let projected = if un > 1.0 { -2.0 * gn + s } else { scaled };
        let (new_atom, factor) = if scaled <= projected && scaled < keep {
            (&g / gn, un)
        } else if projected < keep {
            (&g / gn, if un > 1.0 { 1.0 } else { un })
        } else {
            continue;
        };
        for (&j, &a) in support.iter().zip(&row) {
            let a_new = a * factor;
            let mut col = residual.column_mut(j);
            col.axpy(a, &atom, 1.0);
            col.axpy(-a_new, &new_atom, 1.0);
            codes[(k, j)] = a_new;
        }
        dict.atoms.set_column(k, &new_atom);
    }

    reseed_dead_atoms(signals, codes, dict, &residual);

    let after = total_objective(signals, dict, codes, lambda);
    if after > before {
        // rounding only; the exact update cannot increase the objective
        (*dict, *codes) = saved;
    }
    Ok(())
}

fn reseed_dead_atoms(signals: &DMatrix<f64>, codes: &DMatrix<f64>, dict: &mut Dictionary, residual: &DMatrix<f64>) {
    let dead: Vec<usize> = (0..dict.len()).filter(|&k| codes.row(k).iter().all(|&a| a == 0.0)).collect();
    if dead.is_empty() {
        return;
    }
    let mut order: Vec<(f64, usize)> = residual
        .column_iter()
        .enumerate()
        .filter(|(j, _)| signals.column(*j).norm() > 0.0)
        .map(|(j, c)| (c.norm_squared(), j))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (k, (_, j)) in dead.into_iter().zip(order) {
        let v = signals.column(j);
        dict.atoms.set_column(k, &(v / v.norm()));
    }
}

/// Initial dictionary of `d` signals drawn at random.
///
/// The first atom is a uniform draw among non-zero signals; each further
/// draw is weighted by the signal's energy outside the span of the atoms
/// picked so far, so near-duplicates are unlikely. When the signals span
/// fewer than `d` directions the rest are random unit vectors.
pub fn init_dictionary(signals: &DMatrix<f64>, d: usize, seed: u64) -> Result<Dictionary> {
    let n = signals.ncols();
    if d == 0 {
        return Err(LpfError::InvalidArgument("need at least one atom".into()));
    }
    if d > n {
        return Err(LpfError::TooManyAtoms { atoms: d, signals: n });
    }
    let mut rng = rng::stream(seed, rng::STREAM_DICTIONARY);
    let mut atoms = DMatrix::zeros(signals.nrows(), d);
    // each signal's remainder outside the span of the picked atoms
    let mut rest: Vec<DVector<f64>> = signals.column_iter().map(|c| c.into_owned()).collect();
    let scale = rest.iter().map(|r| r.norm_squared()).fold(0.0, f64::max);
    let mut k = 0;
    while k < d {
        let weights: Vec<f64> = rest
            .iter()
            .map(|r| {
                let w = r.norm_squared();
                if w > 1e-20 * scale { w } else { 0.0 }
            })
            .collect();
        let j = if k == 0 {
            let nonzero: Vec<usize> = (0..n).filter(|&j| weights[j] > 0.0).collect();
            if nonzero.is_empty() {
                break;
            }
            nonzero[rng.random_range(0..nonzero.len())]
        } else {
            match WeightedIndex::new(&weights) {
                Ok(w) => w.sample(&mut rng),
                Err(_) => break,
            }
        };
        atoms.set_column(k, &signals.column(j));
        let e = &rest[j] / rest[j].norm();
        for r in rest.iter_mut() {
            let c = e.dot(r);
            r.axpy(-c, &e, 1.0);
        }
        k += 1;
    }
    for k in k..d {
        let col = DVector::from_fn(signals.nrows(), |_, _| StandardNormal.sample(&mut rng));
        atoms.set_column(k, &col);
    }
    Dictionary::from_columns_normalized(atoms)
}

/// Objective values recorded by [`refine_dictionary`]: the starting value,
/// then one entry after each coding pass and each dictionary update.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LearningTrace {
    pub objectives: Vec<f64>,
}

/// Alternates sparse coding and dictionary updates `iters` times, starting
/// from the given dictionary and codes.
pub fn refine_dictionary(
    signals: &DMatrix<f64>,
    dict: &mut Dictionary,
    codes: &mut DMatrix<f64>,
    lambda: f64,
    iters: usize,
) -> Result<LearningTrace> {
    let mut trace = LearningTrace {
        objectives: vec![total_objective(signals, dict, codes, lambda)],
    };
    for _ in 0..iters {
        code_all(signals, dict, codes, lambda)?;
        trace.objectives.push(total_objective(signals, dict, codes, lambda));
        dictionary_update(signals, codes, dict, lambda)?;
        trace.objectives.push(total_objective(signals, dict, codes, lambda));
    }
    Ok(trace)
}

/// Learns `d` atoms from scratch and returns the dictionary, the codes
/// (`d × N`) and the objective trace.
pub fn learn_dictionary(
    signals: &DMatrix<f64>,
    d: usize,
    lambda: f64,
    iters: usize,
    seed: u64,
) -> Result<(Dictionary, DMatrix<f64>, LearningTrace)> {
    let mut dict = init_dictionary(signals, d, seed)?;
    let mut codes = DMatrix::zeros(d, signals.ncols());
    let trace = refine_dictionary(signals, &mut dict, &mut codes, lambda, iters)?;
    Ok((dict, codes, trace))
}
