//! Side-by-side integration of the WA, GA and LA systems, and a coarse
//! distance between the point clouds of two runs.

use super::DynamicsError;
use crate::caputo_abm::Trajectory;
use crate::sprott_pwc::{simulate, RhsVariant, State, SystemParams};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e-6;

/// Cell side for [`cloud_distance`] on attractors of unit-order extent.
pub const DEFAULT_CLOUD_CELL: f64 = 1.0;

/// Cloud distance above which two runs are taken to sit on different
/// attractors. Two halves of one settled run stay well below it.
pub const DISTINCT_CLOUD_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub t_end: f64,
    pub h: f64,
    /// Sigmoid slope parameter of GA.
    pub delta: f64,
    /// Half-width of the LA cubic.
    pub epsilon: f64,
    pub threshold: f64,
    pub corrector_iters: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            t_end: 100.0,
            h: 0.002,
            delta: 1e-6,
            epsilon: 1e-6,
            threshold: DEFAULT_DIVERGENCE_THRESHOLD,
            corrector_iters: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    /// First grid time with `‖GA − WA‖∞ > threshold`; `None` if it never happens.
    pub t_ga: Option<f64>,
    pub t_la: Option<f64>,
    pub threshold: f64,
    pub horizon: f64,
    pub h: f64,
    /// GA leaves WA strictly before LA does (LA may stay within the horizon).
    pub ga_escapes_first: bool,
    /// Largest `‖GA − WA‖∞` and `‖LA − WA‖∞` over the whole run.
    pub max_ga_distance: f64,
    pub max_la_distance: f64,
}

pub struct VariantComparison {
    pub report: DivergenceReport,
    pub wa: Trajectory,
    pub ga: Trajectory,
    pub la: Trajectory,
}

fn max_norm_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn first_divergence(reference: &Trajectory, other: &Trajectory, threshold: f64) -> (Option<f64>, f64) {
    let mut first = None;
    let mut worst: f64 = 0.0;
    for (k, (r, o)) in reference.states().zip(other.states()).enumerate() {
        let gap = max_norm_gap(r, o);
        worst = worst.max(gap);
        if first.is_none() && gap > threshold {
            first = Some(reference.times()[k]);
        }
    }
    (first, worst)
}

/// Integrates WA, GA(δ) and LA(ε) on one grid and reports when each
/// approximation first leaves the WA trajectory.
pub fn compare_variants(
    p: &SystemParams,
    x0: &State,
    cfg: &CompareConfig,
) -> Result<VariantComparison, DynamicsError> {
    if !(cfg.threshold > 0.0) {
        return Err(DynamicsError::InvalidConfig(format!("threshold {} must be positive", cfg.threshold)));
    }
    let ga_v = RhsVariant::ga(cfg.delta)?;
    let la_v = RhsVariant::la(cfg.epsilon)?;
    let run = |v: &RhsVariant| simulate(p, v, x0, cfg.t_end, cfg.h, cfg.corrector_iters);
    let (wa, (ga, la)) = rayon::join(|| run(&RhsVariant::wa()), || rayon::join(|| run(&ga_v), || run(&la_v)));
    let (wa, ga, la) = (wa?, ga?, la?);

    let (t_ga, max_ga) = first_divergence(&wa, &ga, cfg.threshold);
    let (t_la, max_la) = first_divergence(&wa, &la, cfg.threshold);
    let ga_escapes_first = match (t_ga, t_la) {
        (Some(g), Some(l)) => g < l,
        (Some(_), None) => true,
        _ => false,
    };
    let report = DivergenceReport {
        t_ga,
        t_la,
        threshold: cfg.threshold,
        horizon: *wa.times().last().unwrap_or(&0.0),
        h: cfg.h,
        ga_escapes_first,
        max_ga_distance: max_ga,
        max_la_distance: max_la,
    };
    Ok(VariantComparison { report, wa, ga, la })
}

/// Jaccard distance between the sets of grid cells of side `cell` visited by
/// the post-transient parts of `a` and `b`, projected onto `components`.
///
/// 0 for identical occupancy, 1 for disjoint clouds.
pub fn cloud_distance(
    a: &Trajectory,
    b: &Trajectory,
    components: &[usize],
    transient_fraction: f64,
    cell: f64,
) -> Result<f64, DynamicsError> {
    if !(cell > 0.0) || !(0.0..1.0).contains(&transient_fraction) || components.is_empty() {
        return Err(DynamicsError::InvalidConfig(
            "cloud distance needs a positive cell, a transient fraction in [0, 1) and components".into(),
        ));
    }
    let cells = |tr: &Trajectory| -> Result<HashSet<Vec<i64>>, DynamicsError> {
        if components.iter().any(|&c| c >= tr.dim()) {
            return Err(DynamicsError::InvalidConfig("component index out of range".into()));
        }
        let start = (tr.len() as f64 * transient_fraction).floor() as usize;
        Ok((start..tr.len())
            .map(|k| {
                let s = tr.state(k);
                components.iter().map(|&c| (s[c] / cell).floor() as i64).collect()
            })
            .collect())
    };
    let (sa, sb) = (cells(a)?, cells(b)?);
    let union = sa.union(&sb).count();
    if union == 0 {
        return Err(DynamicsError::InvalidConfig("empty point clouds".into()));
    }
    let inter = sa.intersection(&sb).count();
    Ok(1.0 - inter as f64 / union as f64)
}
