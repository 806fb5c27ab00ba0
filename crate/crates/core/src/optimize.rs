//! Steepest descent over the Fourier coefficients with Armijo backtracking.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::coeff::SigmaPair;
use crate::error::{Error, Result};
use crate::geometry::RadialShape;
use crate::homogenize::{matching_objective, CellState, EffectiveTensor, TargetTensor};
use crate::mesh::Case;
use crate::shapecalc::{
    discrete_objective_gradient, objective_gradient, recover_interface_traces, GradientMethod,
    ShapeGradient,
};

pub use crate::geometry::sup_distance;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    /// Refinement level; taken from the mesh section of an experiment.
    #[serde(skip)]
    pub level: u32,
    pub gradient_tol: f64,
    pub objective_tol: f64,
    pub max_iter: usize,
    /// First trial step; `None` picks `0.1 / |g_0|`.
    pub initial_step: Option<f64>,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Largest coefficient change (l2) a trial step may make.
    pub max_displacement: f64,
    pub gradient: GradientMethod,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            level: 5,
            gradient_tol: 1e-5,
            objective_tol: 1e-10,
            max_iter: 500,
            initial_step: None,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 30,
            max_displacement: 0.1,
            gradient: GradientMethod::Boundary,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gradient_tol", self.gradient_tol),
            ("objective_tol", self.objective_tol),
            ("armijo", self.armijo),
            ("max_displacement", self.max_displacement),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("optimizer {name} must be positive, got {v}")));
            }
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config(format!(
                "optimizer backtrack factor must lie in (0, 1), got {}",
                self.backtrack
            )));
        }
        if let Some(s) = self.initial_step {
            if !(s > 0.0) {
                return Err(Error::Config(format!("initial step must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

/// The problem being solved: phase layout, conductivities and target.
#[derive(Clone, Debug)]
pub struct MatchingProblem {
    pub case: Case,
    pub sigma: SigmaPair,
    pub target: TargetTensor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTol,
    ObjectiveTol,
    MaxIter,
    LineSearchFail,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(self, Termination::GradientTol | Termination::ObjectiveTol)
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::GradientTol => "gradient-tol",
            Termination::ObjectiveTol => "objective-tol",
            Termination::MaxIter => "max-iter",
            Termination::LineSearchFail => "line-search-fail",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub coeffs: Vec<f64>,
    pub objective: f64,
    pub gradient_norm: f64,
    /// Step that produced this iterate (zero for the start).
    pub step: f64,
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
    pub solver_iterations: usize,
    pub solver_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizeRecord {
    pub history: Vec<IterationRecord>,
    pub termination: Termination,
    pub evaluations: usize,
    /// Tensor of the last accepted shape, with bounds in the mixture case.
    pub tensor: EffectiveTensor,
}

impl OptimizeRecord {
    pub fn last(&self) -> &IterationRecord {
        self.history.last().expect("history holds the start point")
    }

    pub fn final_shape(&self) -> RadialShape {
        RadialShape::from_coeffs(self.last().coeffs.clone()).expect("recorded shapes are well formed")
    }

    pub fn accepted_steps(&self) -> usize {
        self.history.len() - 1
    }

    /// `iter,J,grad_norm,step,a11,a12,a22`
    pub fn history_csv(&self) -> String {
        let mut out = String::from("iter,J,grad_norm,step,a11,a12,a22\n");
        for r in &self.history {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.iter, r.objective, r.gradient_norm, r.step, r.a11, r.a12, r.a22
            ));
        }
        out
    }
}

struct Point {
    shape: RadialShape,
    state: CellState,
    objective: f64,
    gradient: ShapeGradient,
}

fn gradient_at(
    shape: &RadialShape,
    state: &CellState,
    problem: &MatchingProblem,
    method: GradientMethod,
) -> Result<ShapeGradient> {
    let (_, residual) = matching_objective(&state.tensor, &problem.target);
    match method {
        GradientMethod::Boundary => {
            let traces = recover_interface_traces(&state.mesh, &state.solutions, &problem.sigma)?;
            objective_gradient(shape, &traces, &residual)
        }
        GradientMethod::Discrete => discrete_objective_gradient(state, &problem.sigma, &residual),
    }
}

fn record(iter: usize, p: &Point, step: f64) -> IterationRecord {
    let t = &p.state.tensor;
    let stats = p.state.solver_stats();
    IterationRecord {
        iter,
        coeffs: p.shape.coeffs().to_vec(),
        objective: p.objective,
        gradient_norm: p.gradient.norm(),
        step,
        a11: t.a11,
        a12: t.a12,
        a22: t.a22,
        solver_iterations: stats.iterations,
        solver_residual: stats.residual,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

type Accepted = (RadialShape, CellState, f64, f64);

/// Armijo backtracking along `-g` from `step`. Returns the accepted shape,
/// its state, objective and step.
fn line_search(
    current: &Point,
    g: &[f64],
    mut step: f64,
    problem: &MatchingProblem,
    config: &OptimizeConfig,
    evaluations: &mut usize,
    iter: usize,
) -> Option<Accepted> {
    let slope = -dot(g, g);
    for attempt in 0..=config.max_backtracks {
        if attempt > 0 {
            step *= config.backtrack;
        }
        let Ok(trial) = current.shape.stepped(g, -step) else {
            continue;
        };
        if trial.validate().is_err() {
            continue;
        }
        *evaluations += 1;
        let state = match CellState::solve(
            &trial,
            problem.case,
            config.level,
            &problem.sigma,
            Some(&current.state.solutions),
        ) {
            Ok(s) => s,
            Err(e) => {
                log::debug!("iteration {iter}: trial step {step:e} rejected: {e}");
                continue;
            }
        };
        let (j, _) = matching_objective(&state.tensor, &problem.target);
        if j <= current.objective + config.armijo * step * slope {
            return Some((trial, state, j, step));
        }
    }
    None
}

/// Minimizes `J = 1/2 |A(shape) - B|_F^2` from `start`.
///
/// Every iteration steps along `-g`. The first trial step of an iteration is
/// the Barzilai-Borwein length from the last accepted pair (or `0.1 / |g_0|`
/// initially), capped so no trial moves the coefficients by more than
/// `max_displacement`; Armijo backtracking then halves it as needed.
/// Invalid, unmeshable or unsolvable trial shapes count as failed backtracks.
pub fn minimize(
    start: &RadialShape,
    problem: &MatchingProblem,
    config: &OptimizeConfig,
) -> Result<OptimizeRecord> {
    config.validate()?;
    start.ensure_valid()?;
    let level = config.level;
    let state = CellState::solve(start, problem.case, level, &problem.sigma, None)?;
    let (objective, _) = matching_objective(&state.tensor, &problem.target);
    let gradient = gradient_at(start, &state, problem, config.gradient)?;
    let mut current = Point {
        shape: start.clone(),
        state,
        objective,
        gradient,
    };
    let mut history = vec![record(0, &current, 0.0)];
    let mut evaluations = 1;
    let mut previous_step: Option<f64> = None;
    let mut previous_move: Option<(Vec<f64>, Vec<f64>)> = None;

    let termination = loop {
        let g = current.gradient.objective.clone();
        let gnorm = current.gradient.norm();
        if current.objective < config.objective_tol {
            break Termination::ObjectiveTol;
        }
        if gnorm < config.gradient_tol {
            break Termination::GradientTol;
        }
        if history.len() > config.max_iter {
            break Termination::MaxIter;
        }
        let iter = history.len();

        let mut step = match (&previous_move, previous_step) {
            (Some((dx, dg)), Some(prev)) => {
                let sy = dot(dx, dg);
                if sy > 0.0 {
                    dot(dx, dx) / sy
                } else {
                    2.0 * prev
                }
            }
            _ => config.initial_step.unwrap_or(0.1 / gnorm),
        };
        step = step.min(config.max_displacement / gnorm);

        let accepted = line_search(&current, &g, step, problem, config, &mut evaluations, iter);
        let Some((shape, state, objective, step)) = accepted else {
            break Termination::LineSearchFail;
        };
        let gradient = match gradient_at(&shape, &state, problem, config.gradient) {
            Ok(g) => g,
            Err(e) => {
                log::warn!("iteration {iter}: gradient evaluation failed: {e}");
                break Termination::LineSearchFail;
            }
        };
        let dx: Vec<f64> = shape
            .coeffs()
            .iter()
            .zip(current.shape.coeffs())
            .map(|(a, b)| a - b)
            .collect();
        let dg: Vec<f64> = gradient.objective.iter().zip(&g).map(|(a, b)| a - b).collect();
        previous_move = Some((dx, dg));
        previous_step = Some(step);
        current = Point {
            shape,
            state,
            objective,
            gradient,
        };
        log::info!(
            "iter {iter}: J = {:.6e}, |g| = {:.3e}, step = {step:.3e}",
            current.objective,
            current.gradient.norm()
        );
        history.push(record(iter, &current, step));
    };

    Ok(OptimizeRecord {
        history,
        termination,
        evaluations,
        tensor: current.state.tensor,
    })
}
