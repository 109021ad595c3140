//! Evaluation: RMSE against a reference, NN-distance histograms and energy
//! tables.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{LpfError, Result};
use crate::geom::{build_index, nn_distances, PointCloud, SpatialIndex};
use crate::sparse::AnalysisState;

/// One-sided RMSE from `test` to `reference`:
/// `sqrt(mean_p min_q ‖p − q‖²)` over test points `p`.
pub fn rmse(test: &PointCloud, reference: &PointCloud) -> Result<f64> {
    if test.is_empty() || reference.is_empty() {
        return Err(LpfError::EmptyCloud);
    }
    Ok(rmse_indexed(test, &build_index(reference)?))
}

/// [`rmse`] against a prebuilt reference index.
pub fn rmse_indexed(test: &PointCloud, reference: &SpatialIndex) -> f64 {
    let d2: Vec<f64> = test
        .points()
        .par_iter()
        .map(|p| reference.nearest(p).map(|(_, d)| d * d).unwrap_or(f64::NAN))
        .collect();
    (d2.iter().sum::<f64>() / d2.len() as f64).sqrt()
}

/// Larger of the two one-sided RMSEs.
pub fn symmetric_rmse(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    Ok(rmse(a, b)?.max(rmse(b, a)?))
}

/// Default number of histogram bins.
pub const DEFAULT_BINS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramReport {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub median: f64,
}

impl HistogramReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_start,bin_end,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", self.edges[i], self.edges[i + 1], c);
        }
        s
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Histogram of each point's distance to its nearest other point over
/// `[0, max(4·median, mean)]`; larger distances land in the last bin.
pub fn nn_histogram(cloud: &PointCloud, bins: usize) -> Result<HistogramReport> {
    if cloud.len() < 2 {
        return Err(LpfError::InvalidArgument("histogram needs at least two points".into()));
    }
    if bins == 0 {
        return Err(LpfError::InvalidArgument("histogram needs at least one bin".into()));
    }
    let index = build_index(cloud)?;
    let d = nn_distances(cloud, &index);
    let mut sorted = d.clone();
    sorted.sort_by(f64::total_cmp);
    let med = median(&sorted);
    let max = *sorted.last().unwrap();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let upper = if med > 0.0 {
        (4.0 * med).max(mean)
    } else if max > 0.0 {
        max
    } else {
        1.0
    };
    let width = upper / bins as f64;
    let edges = (0..=bins).map(|i| i as f64 * width).collect();
    let mut counts = vec![0; bins];
    for x in &d {
        let b = ((x / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(HistogramReport {
        edges,
        counts,
        mean,
        median: med,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRow {
    pub iteration: usize,
    pub l2: f64,
    pub l1: f64,
    pub total: f64,
    pub after_dictionary: f64,
    pub after_pose: f64,
}

/// One row per outer iteration with the end-of-iteration energy and the
/// totals after the dictionary and pose steps. With `per_atom`, every
/// value is divided by the dictionary size.
pub fn energy_report(state: &AnalysisState, per_atom: bool) -> Result<Vec<EnergyRow>> {
    if state.energy_log.is_empty() {
        return Err(LpfError::InvalidArgument("analysis ran no iterations".into()));
    }
    let k = if per_atom { state.dictionary.len() as f64 } else { 1.0 };
    Ok(state
        .energy_log
        .iter()
        .enumerate()
        .map(|(i, e)| EnergyRow {
            iteration: i + 1,
            l2: e.reprobe.l2 / k,
            l1: e.reprobe.l1 / k,
            total: e.reprobe.total / k,
            after_dictionary: e.dictionary.total / k,
            after_pose: e.pose.total / k,
        })
        .collect())
}

pub fn energy_csv(rows: &[EnergyRow]) -> String {
    let mut s = String::from("iteration,l2,l1,total,after_dictionary,after_pose\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.iteration, r.l2, r.l1, r.total, r.after_dictionary, r.after_pose);
    }
    s
}
