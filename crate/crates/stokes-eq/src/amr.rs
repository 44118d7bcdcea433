//! The adaptive loop: SOLVE -> ESTIMATE -> MARK -> REFINE.
//!
//! Marking uses the maximum rule: an element is refined when its indicator
//! reaches a fixed fraction (default 1/4) of the largest indicator. The
//! Scott--Vogelius pair runs a two-mesh variant: estimator contributions
//! live on the barycentrically refined working mesh, macro elements are
//! marked by the mean over their three children against the maximum over
//! the working mesh, the macro mesh is bisected, and the next working mesh
//! is its fresh barycentric refinement (barycentric meshes are never
//! bisected directly).

use crate::bench::BenchmarkProblem;
use crate::ceq::{eta_ceq, solve_ceq};
use crate::estimator::{compute_eta, EstimatorConfig};
use crate::geq::{solve_geq, EquilibrationError};
use crate::leq::assemble_leq_flux;
use crate::mesh::Mesh;
use crate::stokes::{h1_seminorm_error, solve_stokes, StokesError, StokesPairTag};
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Ceq,
    Geq,
    Leq,
}

impl EstimatorKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ceq" => Some(EstimatorKind::Ceq),
            "geq" => Some(EstimatorKind::Geq),
            "leq" => Some(EstimatorKind::Leq),
            _ => None,
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorKind::Ceq => "ceq",
            EstimatorKind::Geq => "geq",
            EstimatorKind::Leq => "leq",
        })
    }
}

/// `{T : eta_T >= factor * max_K eta_K}`; the maximal element is always
/// marked, and an all-zero field marks everything (`0 >= 0`).
pub fn mark_elements(etas: &[f64], factor: f64) -> Vec<usize> {
    assert!(!etas.is_empty(), "marking needs at least one element");
    let max = etas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = factor * max;
    etas.iter()
        .enumerate()
        .filter(|(_, &v)| v >= threshold)
        .map(|(e, _)| e)
        .collect()
}

/// Two-mesh marking for Scott--Vogelius: macro element marked when the
/// mean of its three barycentric children reaches `factor` times the
/// maximum over the working mesh.
pub fn mark_sv_macro(
    num_macro: usize,
    bary_etas: &[f64],
    parents: &[usize],
    factor: f64,
) -> Vec<usize> {
    assert_eq!(bary_etas.len(), parents.len());
    let max = bary_etas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = factor * max;
    let mut sums = vec![0.0; num_macro];
    let mut counts = vec![0usize; num_macro];
    for (c, &p) in parents.iter().enumerate() {
        sums[p] += bary_etas[c];
        counts[p] += 1;
    }
    (0..num_macro)
        .filter(|&p| counts[p] > 0 && sums[p] / counts[p] as f64 >= threshold)
        .collect()
}

/// One row of a convergence study.
#[derive(Debug, Clone)]
pub struct LevelRecord {
    pub level: usize,
    pub ndof: usize,
    pub h_max: f64,
    pub err_h1: f64,
    pub eta_total: f64,
    pub eta_f: f64,
    pub eta_sigma: f64,
    pub eta_div: f64,
    /// `eta_total / err_h1`, NaN when the error vanishes.
    pub efficiency: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceHistory {
    pub rows: Vec<LevelRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum AmrError {
    #[error("level {level}: {source}")]
    Stokes {
        level: usize,
        source: StokesError,
    },
    #[error("level {level}: {source}")]
    Equilibration {
        level: usize,
        source: EquilibrationError,
    },
    #[error("level {level}: {source}")]
    Estimator {
        level: usize,
        source: crate::estimator::EstimatorError,
    },
}

/// Configuration of one adaptive (or uniform) study.
#[derive(Debug, Clone, Copy)]
pub struct AmrOptions {
    pub estimator: EstimatorKind,
    pub config: EstimatorConfig,
    /// Mark everything each level instead of using the indicators.
    pub uniform: bool,
    pub max_levels: usize,
    pub max_ndof: usize,
    pub mark_factor: f64,
}

impl AmrOptions {
    pub fn new(estimator: EstimatorKind, config: EstimatorConfig) -> Self {
        AmrOptions {
            estimator,
            config,
            uniform: false,
            max_levels: 30,
            max_ndof: 200_000,
            mark_factor: 0.25,
        }
    }
}

/// Runs the adaptive loop for a benchmark problem and returns the
/// per-level records.
pub fn amr_loop(
    bench: &BenchmarkProblem,
    pair: StokesPairTag,
    initial_macro: Mesh,
    opts: AmrOptions,
) -> Result<ConvergenceHistory, AmrError> {
    let mut macro_mesh = Arc::new(initial_macro);
    let mut history = ConvergenceHistory::default();

    for level in 0..opts.max_levels {
        let start = Instant::now();
        let working = if pair.needs_barycentric() {
            Arc::new(macro_mesh.barycentric_refine())
        } else {
            macro_mesh.clone()
        };

        let sol = solve_stokes(working.clone(), &bench.problem, pair)
            .map_err(|source| AmrError::Stokes { level, source })?;

        let (indicators, eta_total, eta_f, eta_sigma, eta_div) = match opts.estimator {
            EstimatorKind::Ceq => {
                let flux = solve_ceq(&sol, &bench.problem, opts.config.k)
                    .map_err(|source| AmrError::Equilibration { level, source })?;
                let report = eta_ceq(&flux, &sol, &bench.problem, opts.config.c0);
                (
                    report.indicators(),
                    report.eta_total(),
                    report.eta_f(),
                    report.eta_sigma(),
                    report.eta_div(),
                )
            }
            EstimatorKind::Geq => {
                let flux = solve_geq(&sol, &bench.problem, opts.config.k)
                    .map_err(|source| AmrError::Equilibration { level, source })?;
                let report = compute_eta(&flux, &sol, &bench.problem, opts.config)
                    .map_err(|source| AmrError::Estimator { level, source })?;
                (
                    report.indicators(),
                    report.eta_total(),
                    report.eta_f(),
                    report.eta_sigma(),
                    report.eta_div(),
                )
            }
            EstimatorKind::Leq => {
                let (flux, _) = assemble_leq_flux(&sol, &bench.problem, opts.config.k)
                    .map_err(|source| AmrError::Equilibration { level, source })?;
                let report = compute_eta(&flux, &sol, &bench.problem, opts.config)
                    .map_err(|source| AmrError::Estimator { level, source })?;
                (
                    report.indicators(),
                    report.eta_total(),
                    report.eta_f(),
                    report.eta_sigma(),
                    report.eta_div(),
                )
            }
        };

        let err = h1_seminorm_error(
            &sol,
            bench.exact_velocity_gradient.as_ref(),
            bench.error_quadrature,
        );
        history.rows.push(LevelRecord {
            level,
            ndof: sol.ndof,
            h_max: working.max_diameter(),
            err_h1: err,
            eta_total,
            eta_f,
            eta_sigma,
            eta_div,
            efficiency: crate::bench::efficiency_index(eta_total, err),
            wall_time_s: start.elapsed().as_secs_f64(),
        });

        if level + 1 >= opts.max_levels || sol.ndof >= opts.max_ndof {
            break;
        }

        macro_mesh = if opts.uniform {
            Arc::new(macro_mesh.refine_uniform())
        } else if pair.needs_barycentric() {
            let parents = working
                .parents
                .as_ref()
                .expect("barycentric mesh keeps its genealogy");
            let marked = mark_sv_macro(
                macro_mesh.num_elements(),
                &indicators,
                parents,
                opts.mark_factor,
            );
            Arc::new(macro_mesh.refine_marked(&marked))
        } else {
            let marked = mark_elements(&indicators, opts.mark_factor);
            Arc::new(macro_mesh.refine_marked(&marked))
        };
        debug_assert!(macro_mesh.validate().is_empty());
    }

    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_rule_examples() {
        assert_eq!(mark_elements(&[4.0, 1.0, 0.9, 2.0], 0.25), vec![0, 1, 3]);
        assert_eq!(mark_elements(&[2.0, 2.0, 2.0], 0.25), vec![0, 1, 2]);
        // All-zero indicators mark everything (0 >= 0).
        assert_eq!(mark_elements(&[0.0, 0.0], 0.25), vec![0, 1]);
    }

    #[test]
    fn max_rule_monotone_in_factor() {
        let etas: Vec<f64> = (0..40).map(|i| ((i * 13) % 17) as f64 / 3.0).collect();
        let loose = mark_elements(&etas, 0.25);
        let tight = mark_elements(&etas, 0.5);
        assert!(tight.iter().all(|e| loose.contains(e)));
        assert!(!tight.is_empty());
    }

    #[test]
    fn sv_macro_rule_examples() {
        // One macro with children (3,3,3), another (0.1, 0.1, 0.1); the
        // global max is 4 (threshold 1).
        let parents = vec![0, 0, 0, 1, 1, 1];
        let etas = vec![3.0, 3.0, 3.0, 0.1, 0.1, 4.0];
        // means: 3.0 and 1.4 -> both marked.
        assert_eq!(mark_sv_macro(2, &etas, &parents, 0.25), vec![0, 1]);
        let etas = vec![3.0, 3.0, 3.0, 0.1, 0.1, 0.1];
        // global max 3 -> threshold 0.75: means 3.0 and 0.1.
        assert_eq!(mark_sv_macro(2, &etas, &parents, 0.25), vec![0]);
        // Uniform indicators mark all macros.
        let etas = vec![2.0; 6];
        assert_eq!(mark_sv_macro(2, &etas, &parents, 0.25), vec![0, 1]);
    }
}
