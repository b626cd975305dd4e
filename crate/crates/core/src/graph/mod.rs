//! MAP estimation of absolute transforms from relative measurements.
//!
//! Each between factor contributes `‖Log(X_i⁻¹ X_j Z⁻¹)‖²_Ω`; priors
//! contribute `‖Log(A⁻¹ X_i)‖²_Ω` and fix the gauge. The solver is generic
//! over [`LieGroup`], so the SL(4) backend and the Sim(3) baseline share it.

mod dump;
mod lm;

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::lie::{left_jacobian_inverse, right_jacobian_inverse, LieError, LieGroup};

pub use dump::write_dump;
pub use lm::{optimize_lm, LmConfig, LmStep, OptimizationReport, Termination};

/// Strength of the gauge-fixing prior used by the pipeline.
pub const GAUGE_PRIOR_WEIGHT: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VariableId(pub usize);

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

pub type GraphValues<G> = BTreeMap<VariableId, G>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("between factor connects {0} to itself")]
    SelfLoop(VariableId),
    #[error("invalid information matrix: {0}")]
    InvalidInformation(String),
    #[error("no value for variable {0}")]
    MissingValue(VariableId),
    #[error("residual of {factor} is outside the logarithm domain: {source}")]
    Log { factor: String, source: LieError },
    #[error("normal equations are singular: {0}")]
    SingularNormalEquations(String),
    #[error("no convergence after {iterations} iterations (cost {cost:e})")]
    NonConvergence { iterations: usize, cost: f64 },
}

#[derive(Clone, Debug)]
pub struct BetweenFactor<G> {
    pub i: VariableId,
    pub j: VariableId,
    pub measured: G,
    pub information: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct PriorFactor<G> {
    pub i: VariableId,
    pub anchor: G,
    pub information: DMatrix<f64>,
}

fn check_information<G: LieGroup>(info: &DMatrix<f64>) -> Result<(), GraphError> {
    if info.nrows() != G::DOF || info.ncols() != G::DOF {
        return Err(GraphError::InvalidInformation(format!(
            "expected {0}x{0}, got {1}x{2}",
            G::DOF,
            info.nrows(),
            info.ncols()
        )));
    }
    if (info - info.transpose()).amax() > 1e-12 {
        return Err(GraphError::InvalidInformation("not symmetric".into()));
    }
    if info.clone().cholesky().is_none() {
        return Err(GraphError::InvalidInformation(
            "not positive definite".into(),
        ));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct FactorGraph<G> {
    between: Vec<BetweenFactor<G>>,
    priors: Vec<PriorFactor<G>>,
}

impl<G> Default for FactorGraph<G> {
    fn default() -> Self {
        Self {
            between: Vec::new(),
            priors: Vec::new(),
        }
    }
}

impl<G: LieGroup> FactorGraph<G> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_between(
        &mut self,
        i: VariableId,
        j: VariableId,
        measured: G,
        information: DMatrix<f64>,
    ) -> Result<(), GraphError> {
        if i == j {
            return Err(GraphError::SelfLoop(i));
        }
        check_information::<G>(&information)?;
        self.between.push(BetweenFactor {
            i,
            j,
            measured,
            information,
        });
        Ok(())
    }

    pub fn add_prior(
        &mut self,
        i: VariableId,
        anchor: G,
        information: DMatrix<f64>,
    ) -> Result<(), GraphError> {
        check_information::<G>(&information)?;
        self.priors.push(PriorFactor {
            i,
            anchor,
            information,
        });
        Ok(())
    }

    pub fn between_factors(&self) -> &[BetweenFactor<G>] {
        &self.between
    }

    pub fn prior_factors(&self) -> &[PriorFactor<G>] {
        &self.priors
    }

    pub fn len(&self) -> usize {
        self.between.len() + self.priors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn value<G: LieGroup>(v: &GraphValues<G>, id: VariableId) -> Result<&G, GraphError> {
    v.get(&id).ok_or(GraphError::MissingValue(id))
}

fn log_of<G: LieGroup>(x: &G, factor: impl FnOnce() -> String) -> Result<DVector<f64>, GraphError> {
    x.log().map_err(|source| GraphError::Log {
        factor: factor(),
        source,
    })
}

/// `e_ij = Log(X_i⁻¹ X_j Z_ij⁻¹)`.
pub fn residual<G: LieGroup>(
    f: &BetweenFactor<G>,
    v: &GraphValues<G>,
) -> Result<DVector<f64>, GraphError> {
    let xi = value(v, f.i)?;
    let xj = value(v, f.j)?;
    let err = xi.inverse().compose(xj).compose(&f.measured.inverse());
    log_of(&err, || format!("between({}, {})", f.i, f.j))
}

pub fn prior_residual<G: LieGroup>(
    f: &PriorFactor<G>,
    v: &GraphValues<G>,
) -> Result<DVector<f64>, GraphError> {
    let x = value(v, f.i)?;
    log_of(&f.anchor.inverse().compose(x), || format!("prior({})", f.i))
}

/// Jacobians of a between residual under `X ← X·Exp(δ)`.
#[derive(Clone, Debug)]
pub struct Linearization {
    pub j_i: DMatrix<f64>,
    pub j_j: DMatrix<f64>,
    pub error: DVector<f64>,
}

/// Exact Jacobians of [`residual`].
///
/// With `E = X_i⁻¹ X_j Z⁻¹` and `e = Log(E)`:
/// perturbing `X_j` gives `E·Exp(Ad_Z δ)`, so `J_j = J_r⁻¹(e)·Ad_Z`;
/// perturbing `X_i` gives `Exp(−δ)·E`, so `J_i = −J_l⁻¹(e)`.
/// At a consistent configuration these reduce to `J_i = −I` and
/// `J_j = Ad_{X_i⁻¹X_j}`.
pub fn linearize<G: LieGroup>(
    f: &BetweenFactor<G>,
    v: &GraphValues<G>,
) -> Result<Linearization, GraphError> {
    let error = residual(f, v)?;
    let singular = || {
        GraphError::SingularNormalEquations(format!(
            "Log Jacobian of between({}, {}) is singular",
            f.i, f.j
        ))
    };
    let jr_inv = right_jacobian_inverse::<G>(&error).ok_or_else(singular)?;
    let jl_inv = left_jacobian_inverse::<G>(&error).ok_or_else(singular)?;
    Ok(Linearization {
        j_i: -jl_inv,
        j_j: jr_inv * f.measured.adjoint(),
        error,
    })
}

/// Jacobian of [`prior_residual`]: `J_r⁻¹(e)`.
pub fn linearize_prior<G: LieGroup>(
    f: &PriorFactor<G>,
    v: &GraphValues<G>,
) -> Result<(DMatrix<f64>, DVector<f64>), GraphError> {
    let error = prior_residual(f, v)?;
    let jac = right_jacobian_inverse::<G>(&error).ok_or_else(|| {
        GraphError::SingularNormalEquations(format!("Log Jacobian of prior({}) is singular", f.i))
    })?;
    Ok((jac, error))
}

/// `Σ eᵀ Ω e` over all between and prior factors.
pub fn total_cost<G: LieGroup>(
    graph: &FactorGraph<G>,
    v: &GraphValues<G>,
) -> Result<f64, GraphError> {
    let mut cost = 0.0;
    for f in &graph.between {
        let e = residual(f, v)?;
        cost += e.dot(&(&f.information * &e));
    }
    for p in &graph.priors {
        let e = prior_residual(p, v)?;
        cost += e.dot(&(&p.information * &e));
    }
    Ok(cost)
}
