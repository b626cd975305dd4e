//! Levenberg–Marquardt on a product of Lie groups.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};

use super::{
    linearize, linearize_prior, total_cost, FactorGraph, GraphError, GraphValues, VariableId,
};
use crate::lie::LieGroup;

/// Variables are pulled back onto the group this often (in iterations).
const RENORMALIZE_EVERY: usize = 10;
/// Rejected steps beyond this damping mean no descent direction is left.
const LAMBDA_CEILING: f64 = 1e16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmConfig {
    pub max_iters: usize,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            lambda_init: 1e-4,
            lambda_up: 10.0,
            lambda_down: 10.0,
            rel_tol: 1e-8,
            abs_tol: 1e-16,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Cost fell below `abs_tol`.
    AbsoluteTolerance,
    /// Relative cost decrease of an accepted step fell below `rel_tol`.
    RelativeTolerance,
    /// Damping grew past any useful value without an accepted step.
    Stalled,
    /// `max_iters` reached with cost above `abs_tol`.
    MaxIterations,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmStep {
    pub iteration: usize,
    /// Cost after the step if accepted, trial cost otherwise.
    pub cost: f64,
    pub lambda: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub steps: Vec<LmStep>,
    pub termination: Termination,
}

impl OptimizationReport {
    pub fn converged(&self) -> bool {
        self.termination != Termination::MaxIterations
    }

    pub fn accepted_costs(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.initial_cost)
            .chain(self.steps.iter().filter(|s| s.accepted).map(|s| s.cost))
    }

    /// Turns a max-iterations exit into [`GraphError::NonConvergence`].
    pub fn ensure_converged(&self) -> Result<(), GraphError> {
        if self.converged() {
            Ok(())
        } else {
            Err(GraphError::NonConvergence {
                iterations: self.iterations,
                cost: self.final_cost,
            })
        }
    }
}

/// Every variable must be tied to a prior through between factors, or the
/// normal equations have a gauge nullspace.
fn check_gauge<G: LieGroup>(
    graph: &FactorGraph<G>,
    values: &GraphValues<G>,
) -> Result<(), GraphError> {
    if graph.prior_factors().is_empty() {
        return Err(GraphError::SingularNormalEquations(
            "no prior factor fixes the gauge".into(),
        ));
    }
    for f in graph.between_factors() {
        for id in [f.i, f.j] {
            if !values.contains_key(&id) {
                return Err(GraphError::MissingValue(id));
            }
        }
    }
    let mut adjacency: BTreeMap<VariableId, Vec<VariableId>> = BTreeMap::new();
    for f in graph.between_factors() {
        adjacency.entry(f.i).or_default().push(f.j);
        adjacency.entry(f.j).or_default().push(f.i);
    }
    let mut seen: BTreeSet<VariableId> = BTreeSet::new();
    let mut stack: Vec<VariableId> = Vec::new();
    for p in graph.prior_factors() {
        if !values.contains_key(&p.i) {
            return Err(GraphError::MissingValue(p.i));
        }
        if seen.insert(p.i) {
            stack.push(p.i);
        }
    }
    while let Some(id) = stack.pop() {
        for &next in adjacency.get(&id).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.insert(next) {
                stack.push(next);
            }
        }
    }
    if let Some(free) = values.keys().find(|k| !seen.contains(k)) {
        return Err(GraphError::SingularNormalEquations(format!(
            "variable {free} is not connected to any prior"
        )));
    }
    Ok(())
}

struct NormalEquations {
    hessian: DMatrix<f64>,
    gradient: DVector<f64>,
}

fn build_normal_equations<G: LieGroup>(
    graph: &FactorGraph<G>,
    values: &GraphValues<G>,
    index: &BTreeMap<VariableId, usize>,
) -> Result<NormalEquations, GraphError> {
    let d = G::DOF;
    let n = index.len() * d;
    let mut hessian = DMatrix::zeros(n, n);
    let mut gradient = DVector::zeros(n);

    for f in graph.between_factors() {
        let lin = linearize(f, values)?;
        let (oi, oj) = (index[&f.i] * d, index[&f.j] * d);
        let wi = lin.j_i.transpose() * &f.information;
        let wj = lin.j_j.transpose() * &f.information;
        let mut block = |r: usize, c: usize, m: DMatrix<f64>| {
            let mut view = hessian.view_mut((r, c), (d, d));
            view += m;
        };
        block(oi, oi, &wi * &lin.j_i);
        block(oi, oj, &wi * &lin.j_j);
        block(oj, oi, &wj * &lin.j_i);
        block(oj, oj, &wj * &lin.j_j);
        let mut gi = gradient.rows_mut(oi, d);
        gi += &wi * &lin.error;
        let mut gj = gradient.rows_mut(oj, d);
        gj += &wj * &lin.error;
    }
    for p in graph.prior_factors() {
        let (jac, err) = linearize_prior(p, values)?;
        let o = index[&p.i] * d;
        let w = jac.transpose() * &p.information;
        let mut view = hessian.view_mut((o, o), (d, d));
        view += &w * &jac;
        let mut g = gradient.rows_mut(o, d);
        g += &w * &err;
    }
    Ok(NormalEquations { hessian, gradient })
}

fn retract_all<G: LieGroup>(
    values: &GraphValues<G>,
    index: &BTreeMap<VariableId, usize>,
    delta: &DVector<f64>,
    renormalize: bool,
) -> GraphValues<G> {
    let d = G::DOF;
    values
        .iter()
        .map(|(id, x)| {
            let step = delta.rows(index[id] * d, d).into_owned();
            let mut next = x.retract(&step);
            if renormalize {
                next = next.renormalize();
            }
            (*id, next)
        })
        .collect()
}

/// Minimizes the graph cost starting from `init`.
///
/// Each iteration solves `(A + λ·diag(A)) δ = −g` from the linearized
/// factors, tries `X_k ← X_k·Exp(δ_k)`, accepts it if the cost decreases
/// (λ /= `lambda_down`), and otherwise rejects it (λ *= `lambda_up`).
/// Hitting `max_iters` is not an error; the report's termination says so.
pub fn optimize_lm<G: LieGroup>(
    graph: &FactorGraph<G>,
    init: &GraphValues<G>,
    config: &LmConfig,
) -> Result<(GraphValues<G>, OptimizationReport), GraphError> {
    check_gauge(graph, init)?;
    let index: BTreeMap<VariableId, usize> =
        init.keys().enumerate().map(|(k, id)| (*id, k)).collect();

    let mut values = init.clone();
    let mut cost = total_cost(graph, &values)?;
    let initial_cost = cost;
    let mut lambda = config.lambda_init;
    let mut steps = Vec::new();
    let mut normal: Option<NormalEquations> = None;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    if cost < config.abs_tol {
        termination = Termination::AbsoluteTolerance;
    } else {
        for iteration in 1..=config.max_iters {
            iterations = iteration;
            let eqs = match normal.take() {
                Some(eqs) => eqs,
                None => build_normal_equations(graph, &values, &index)?,
            };
            let mut damped = eqs.hessian.clone();
            for k in 0..damped.nrows() {
                damped[(k, k)] += lambda * eqs.hessian[(k, k)].max(1e-12);
            }
            let trial = damped.cholesky().map(|chol| {
                let delta = -chol.solve(&eqs.gradient);
                retract_all(&values, &index, &delta, iteration % RENORMALIZE_EVERY == 0)
            });
            // a trial point outside the Log domain counts as a cost increase
            let trial_cost = trial
                .as_ref()
                .and_then(|t| total_cost(graph, t).ok())
                .unwrap_or(f64::INFINITY);

            if trial_cost < cost {
                let relative = (cost - trial_cost) / cost;
                values = trial.expect("finite trial cost implies a trial");
                cost = trial_cost;
                lambda /= config.lambda_down;
                steps.push(LmStep {
                    iteration,
                    cost,
                    lambda,
                    accepted: true,
                });
                if cost < config.abs_tol {
                    termination = Termination::AbsoluteTolerance;
                    break;
                }
                if relative < config.rel_tol {
                    termination = Termination::RelativeTolerance;
                    break;
                }
            } else {
                lambda *= config.lambda_up;
                steps.push(LmStep {
                    iteration,
                    cost: trial_cost,
                    lambda,
                    accepted: false,
                });
                normal = Some(eqs);
                if lambda > LAMBDA_CEILING {
                    termination = Termination::Stalled;
                    break;
                }
            }
        }
    }

    Ok((
        values,
        OptimizationReport {
            iterations,
            initial_cost,
            final_cost: cost,
            steps,
            termination,
        },
    ))
}
