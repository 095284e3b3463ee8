//! One-to-one segment matching: per-reference sparse solves, uniqueness
//! ratio test, global conflict resolution and the robust epipolar filter.

use crate::geometry::{self, ErrorVector, LineSegment2D, MatchMode, TARGET};
use crate::sparse::{self, DesignMatrix, SolverConfig, SolverError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("every candidate has zero overlap with the reference")]
    EmptyProblem,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchConfig {
    pub mode: MatchMode,
    pub solver: SolverConfig,
    /// Second-best residual must be at least this factor above the best.
    pub uniqueness_factor: f64,
    /// Epipolar filter cutoff in robust standard deviations.
    pub sigma_multiplier: f64,
    /// Candidates at or below this overlap are excluded; zero-overlap
    /// candidates are always excluded.
    pub min_overlap: f64,
}

impl MatchConfig {
    pub fn new(mode: MatchMode) -> Self {
        Self {
            mode,
            solver: SolverConfig::default(),
            uniqueness_factor: 2.0,
            sigma_multiplier: 2.0,
            min_overlap: 0.0,
        }
    }
}

/// A resolved correspondence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub ref_id: u64,
    pub cand_id: u64,
    /// Distance of the pair's residual vector to the perfect-match target.
    pub residual: f64,
    /// Normalized solver weight of the chosen candidate.
    pub weight: f64,
}

/// Per-stage rejection counters; together with the accepted matches these
/// account for every reference segment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionStats {
    pub no_candidate: usize,
    pub ratio_test: usize,
    pub conflict: usize,
    pub epipolar_filter: usize,
}

impl RejectionStats {
    pub fn total(&self) -> usize {
        self.no_candidate + self.ratio_test + self.conflict + self.epipolar_filter
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    pub matches: Vec<Match>,
    pub mode: MatchMode,
    pub stats: RejectionStats,
}

/// Assemble the design matrix for one reference segment. Candidates with
/// zero (or below-threshold) overlap are excluded; the index map recovers
/// original candidate positions.
pub fn build_problem(
    reference: &LineSegment2D,
    candidates: &[LineSegment2D],
    mode: MatchMode,
    min_overlap: f64,
) -> Result<(DesignMatrix, [f64; 4], Vec<usize>), MatchError> {
    let mut columns = Vec::new();
    let mut index_map = Vec::new();
    for (j, cand) in candidates.iter().enumerate() {
        let beta = geometry::error_vector(reference, cand, mode);
        if beta.rho <= 0.0 || beta.rho < min_overlap {
            continue;
        }
        columns.push(beta.as_array());
        index_map.push(j);
    }
    if columns.is_empty() {
        return Err(MatchError::EmptyProblem);
    }
    let a = DesignMatrix::from_columns(&columns).expect("finite residual columns");
    Ok((a, TARGET, index_map))
}

/// Why a reference segment ended up unmatched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    NoCandidate,
    RatioTest,
}

/// Match one reference segment against a candidate set. Returns the accepted
/// candidate's index into `candidates`, its residual and normalized weight.
pub fn match_one(
    reference: &LineSegment2D,
    candidates: &[LineSegment2D],
    cfg: &MatchConfig,
) -> Result<(usize, f64, f64), Rejection> {
    let (a, b, index_map) = match build_problem(reference, candidates, cfg.mode, cfg.min_overlap) {
        Ok(p) => p,
        Err(MatchError::EmptyProblem) => return Err(Rejection::NoCandidate),
    };
    let weights = match sparse::solve_homotopy(&a, &b, &cfg.solver) {
        Ok(w) => w,
        // Pathological problem: treat the reference as unmatched.
        Err(SolverError::NonConvergence(_)) | Err(SolverError::InvalidInput(_)) => {
            return Err(Rejection::NoCandidate)
        }
    };
    let normalized = sparse::normalize_weights(&weights);
    if normalized.no_candidate {
        return Err(Rejection::NoCandidate);
    }
    let w = normalized.weights.as_slice();

    // Residuals for candidates the solver kept alive.
    let live: Vec<(usize, f64, f64)> = w
        .iter()
        .enumerate()
        .filter(|(_, &wj)| wj > 0.0)
        .map(|(j, &wj)| {
            let cand = &candidates[index_map[j]];
            let beta = geometry::error_vector(reference, cand, cfg.mode);
            (j, residual_to_target(&beta), wj)
        })
        .collect();

    // argmax of normalized weight; ties by lower residual, then lower index.
    let &(best_j, best_res_of_argmax, best_w) = live
        .iter()
        .max_by(|x, y| {
            x.2.partial_cmp(&y.2)
                .unwrap()
                .then(y.1.partial_cmp(&x.1).unwrap())
                .then(y.0.cmp(&x.0))
        })
        .expect("at least one positive weight");

    if live.len() >= 2 {
        let mut residuals: Vec<f64> = live.iter().map(|t| t.1).collect();
        residuals.sort_by(|x, y| x.partial_cmp(y).unwrap());
        if residuals[1] < cfg.uniqueness_factor * residuals[0] {
            return Err(Rejection::RatioTest);
        }
    }
    Ok((index_map[best_j], best_res_of_argmax, best_w))
}

fn residual_to_target(beta: &ErrorVector) -> f64 {
    beta.residual()
}

/// Match two segment sets one-to-one: per-reference solves (parallel),
/// conflict resolution keeping the lower residual, then the epipolar filter.
pub fn match_sets(set1: &[LineSegment2D], set2: &[LineSegment2D], cfg: &MatchConfig) -> MatchSet {
    let mut stats = RejectionStats::default();

    let raw: Vec<Result<(usize, f64, f64), Rejection>> = set1
        .par_iter()
        .map(|reference| match_one(reference, set2, cfg))
        .collect();

    // Conflict resolution: one winner per candidate, lowest residual first
    // (ties: lower reference position).
    let mut winner: Vec<Option<usize>> = vec![None; set2.len()];
    for (i, r) in raw.iter().enumerate() {
        match r {
            Ok((cand, res, _)) => {
                match winner[*cand] {
                    None => winner[*cand] = Some(i),
                    Some(prev) => {
                        let prev_res = raw[prev].as_ref().unwrap().1;
                        if *res < prev_res {
                            winner[*cand] = Some(i);
                        }
                    }
                }
            }
            Err(Rejection::NoCandidate) => stats.no_candidate += 1,
            Err(Rejection::RatioTest) => stats.ratio_test += 1,
        }
    }

    let mut matches = Vec::new();
    for (i, r) in raw.iter().enumerate() {
        if let Ok((cand, res, weight)) = r {
            if winner[*cand] == Some(i) {
                matches.push(Match {
                    ref_id: set1[i].id(),
                    cand_id: set2[*cand].id(),
                    residual: *res,
                    weight: *weight,
                });
            } else {
                stats.conflict += 1;
            }
        }
    }

    let set = MatchSet {
        matches,
        mode: cfg.mode,
        stats,
    };
    filter_epipolar(set, set1, set2, cfg)
}

/// Robust location/scale of a sample of angles: median and 1.4826 x MAD,
/// with the spread floored at 1e-6 rad.
pub fn robust_stats(values: &[f64]) -> (f64, f64) {
    const MAD_TO_SIGMA: f64 = 1.4826;
    const SPREAD_FLOOR: f64 = 1e-6;
    let center = median(values);
    let deviations: Vec<f64> = values.iter().map(|v| (v - center).abs()).collect();
    let spread = (MAD_TO_SIGMA * median(&deviations)).max(SPREAD_FLOOR);
    (center, spread)
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Drop matches whose epipolar angle deviates from the robust center by more
/// than `sigma_multiplier` robust standard deviations. Skipped below 3
/// matches.
pub fn filter_epipolar(
    set: MatchSet,
    set1: &[LineSegment2D],
    set2: &[LineSegment2D],
    cfg: &MatchConfig,
) -> MatchSet {
    if set.matches.len() < 3 {
        return set;
    }
    let find = |segs: &[LineSegment2D], id: u64| {
        segs.iter()
            .find(|s| s.id() == id)
            .copied()
            .expect("match id present in its segment set")
    };
    let angles: Vec<f64> = set
        .matches
        .iter()
        .map(|m| {
            geometry::epipolar_angle(&find(set1, m.ref_id), &find(set2, m.cand_id), cfg.mode)
        })
        .collect();
    let (center, spread) = robust_stats(&angles);
    let cutoff = cfg.sigma_multiplier * spread;

    let mut stats = set.stats;
    let mut kept = Vec::with_capacity(set.matches.len());
    for (m, angle) in set.matches.into_iter().zip(angles) {
        if (angle - center).abs() > cutoff {
            stats.epipolar_filter += 1;
        } else {
            kept.push(m);
        }
    }
    MatchSet {
        matches: kept,
        mode: set.mode,
        stats,
    }
}
