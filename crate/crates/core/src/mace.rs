//! Multi-agent consensus equilibrium solver.
//!
//! For agents `F_1..F_K` and weights `mu`, a state `v = (v_1..v_K)` is an
//! equilibrium when `F(v) = G(v)`, where `F` applies `F_i` to `v_i` and `G`
//! replaces every component by the weighted average `sum mu_i v_i`. The
//! consensus image is that average. Solutions are found with the Mann
//! iteration
//!
//! ```text
//! x <- F(v);  z <- G(2x - v);  v <- v + 2 rho (z - x)
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, AgentError};
use crate::linops::{bicubic_upsample, Image, LinopsError, Shape};

const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MaceError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("invalid stacked state: {0}")]
    State(String),
    #[error("agent {index} ({name}) failed at iteration {iteration}: {source}")]
    Agent {
        iteration: usize,
        index: usize,
        name: String,
        #[source]
        source: AgentError,
    },
    #[error("agent {index} ({name}) changed the image shape from {expected:?} to {got:?}")]
    AgentShape {
        index: usize,
        name: String,
        expected: Shape,
        got: Shape,
    },
    #[error("non-finite values at iteration {iteration}")]
    Divergence { iteration: usize },
    #[error("convergence error undefined: consensus image has zero norm")]
    UndefinedMetric,
    #[error(transparent)]
    Linops(#[from] LinopsError),
}

/// K same-shape images with positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedState {
    components: Vec<Image>,
    weights: Vec<f64>,
}

impl StackedState {
    pub fn new(components: Vec<Image>, weights: Vec<f64>) -> Result<Self, MaceError> {
        validate_weights(&weights)?;
        if components.len() != weights.len() {
            return Err(MaceError::State(format!(
                "{} components but {} weights",
                components.len(),
                weights.len()
            )));
        }
        let shape = components[0].shape();
        if let Some(bad) = components.iter().find(|c| c.shape() != shape) {
            return Err(MaceError::State(format!(
                "component shape {:?} differs from {:?}",
                bad.shape(),
                shape
            )));
        }
        Ok(Self { components, weights })
    }

    /// K copies of `x`.
    pub fn replicated(x: &Image, weights: Vec<f64>) -> Result<Self, MaceError> {
        let k = weights.len();
        Self::new(vec![x.clone(); k], weights)
    }

    pub fn components(&self) -> &[Image] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn shape(&self) -> Shape {
        self.components[0].shape()
    }

    fn with_components(&self, components: Vec<Image>) -> Self {
        Self {
            components,
            weights: self.weights.clone(),
        }
    }

    /// Euclidean norm of the stacked vector.
    pub fn norm(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.data().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    fn is_finite(&self) -> bool {
        self.components.iter().all(Image::is_finite)
    }
}

fn validate_weights(weights: &[f64]) -> Result<(), MaceError> {
    if weights.is_empty() {
        return Err(MaceError::State("at least one component is required".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(MaceError::State(format!("weight {w} is not positive")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(MaceError::State(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

/// Two-agent weights `(mu, 1 - mu)`: `mu` for the forward agent.
pub fn two_agent_weights(mu: f64) -> Result<Vec<f64>, MaceError> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(MaceError::Config(format!("mu must lie in (0, 1), got {mu}")));
    }
    Ok(vec![mu, 1.0 - mu])
}

/// `sum_i mu_i v_i`.
pub fn weighted_average(state: &StackedState) -> Image {
    let shape = state.shape();
    let mut acc = vec![0.0; shape.0 * shape.1];
    for (c, &mu) in state.components.iter().zip(&state.weights) {
        for (a, v) in acc.iter_mut().zip(c.data()) {
            *a += mu * v;
        }
    }
    Image::new(shape.0, shape.1, acc).expect("weighted average of finite images is finite")
}

/// `G(v)`: K copies of the weighted average, weights unchanged.
pub fn stack_g(state: &StackedState) -> StackedState {
    let avg = weighted_average(state);
    state.with_components(vec![avg; state.len()])
}

/// `F(v)`: each agent applied to its own component, in parallel.
pub fn stack_f(state: &StackedState, agents: &[Box<dyn Agent>]) -> Result<StackedState, MaceError> {
    apply_agents(state, agents, 0)
}

fn apply_agents(
    state: &StackedState,
    agents: &[Box<dyn Agent>],
    iteration: usize,
) -> Result<StackedState, MaceError> {
    if agents.len() != state.len() {
        return Err(MaceError::State(format!(
            "{} agents for {} components",
            agents.len(),
            state.len()
        )));
    }
    let shape = state.shape();
    let outputs: Vec<Image> = agents
        .par_iter()
        .zip(state.components.par_iter())
        .enumerate()
        .map(|(index, (agent, v))| {
            let out = agent.apply(v).map_err(|source| MaceError::Agent {
                iteration,
                index,
                name: agent.name().to_string(),
                source,
            })?;
            if out.shape() != shape {
                return Err(MaceError::AgentShape {
                    index,
                    name: agent.name().to_string(),
                    expected: shape,
                    got: out.shape(),
                });
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;
    Ok(state.with_components(outputs))
}

fn stacked_distance(a: &StackedState, b: &StackedState) -> f64 {
    a.components
        .iter()
        .zip(&b.components)
        .map(|(x, y)| x.data().iter().zip(y.data()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

fn error_from_parts(g: &StackedState, f: &StackedState, sigma_n: f64) -> Result<f64, MaceError> {
    let g_norm = g.norm();
    if g_norm == 0.0 {
        return Err(MaceError::UndefinedMetric);
    }
    Ok(stacked_distance(g, f) / (sigma_n * g_norm))
}

/// `||G(v) - F(v)|| / (sigma_n ||G(v)||)`.
pub fn convergence_error(
    state: &StackedState,
    agents: &[Box<dyn Agent>],
    sigma_n: f64,
) -> Result<f64, MaceError> {
    if !(sigma_n.is_finite() && sigma_n > 0.0) {
        return Err(MaceError::Config(format!("sigma_n must be positive, got {sigma_n}")));
    }
    let f = stack_f(state, agents)?;
    error_from_parts(&stack_g(state), &f, sigma_n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaceConfig {
    /// Mann relaxation, in (0, 1).
    pub rho: f64,
    pub max_iters: usize,
    /// Stop once the convergence error drops below this.
    pub tol: f64,
    /// Noise scale in the convergence-error denominator.
    pub sigma_n: f64,
}

impl Default for MaceConfig {
    fn default() -> Self {
        Self {
            rho: 0.5,
            max_iters: 20,
            tol: 0.05,
            sigma_n: crate::agents::DEFAULT_SIGMA_N,
        }
    }
}

impl MaceConfig {
    pub fn validate(&self) -> Result<(), MaceError> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(MaceError::Config(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if self.max_iters == 0 {
            return Err(MaceError::Config("max_iters must be positive".into()));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(MaceError::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.sigma_n.is_finite() && self.sigma_n > 0.0) {
            return Err(MaceError::Config(format!("sigma_n must be positive, got {}", self.sigma_n)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Consensus image `x* = sum mu_i v_i` of the final state.
    pub final_image: Image,
    pub final_state: StackedState,
    pub iterations_run: usize,
    /// Convergence error after each Mann update.
    pub convergence_trace: Vec<f64>,
    pub converged: bool,
}

/// Runs Mann iterations from `v = (x0, .., x0)` until the convergence error
/// falls below `config.tol` or `config.max_iters` updates have been made.
///
/// Entry `k` of the trace is the error of the state after update `k + 1`.
pub fn mace_solve(
    agents: &[Box<dyn Agent>],
    weights: &[f64],
    x0: &Image,
    config: &MaceConfig,
) -> Result<SolveReport, MaceError> {
    config.validate()?;
    if agents.len() < 2 {
        return Err(MaceError::Config(format!("need at least two agents, got {}", agents.len())));
    }
    let mut v = StackedState::replicated(x0, weights.to_vec())?;
    let mut fx = apply_agents(&v, agents, 0)?;
    let rho2 = 2.0 * config.rho;
    let mut trace = Vec::with_capacity(config.max_iters);
    let mut converged = false;

    for iteration in 1..=config.max_iters {
        // z = G(2x - v), v <- v + 2 rho (z - x)
        let reflected = v.with_components(
            fx.components
                .iter()
                .zip(&v.components)
                .map(|(x, vi)| x.zip_map(vi, |a, b| 2.0 * a - b))
                .collect::<Result<_, _>>()?,
        );
        let z = weighted_average(&reflected);
        let next: Vec<Image> = v
            .components
            .iter()
            .zip(&fx.components)
            .map(|(vi, xi)| {
                let data = vi
                    .data()
                    .iter()
                    .zip(xi.data())
                    .zip(z.data())
                    .map(|((vv, xx), zz)| vv + rho2 * (zz - xx))
                    .collect();
                Image::from_raw(vi.shape(), data)
            })
            .collect();
        v = v.with_components(next);
        if !v.is_finite() {
            return Err(MaceError::Divergence { iteration });
        }
        fx = apply_agents(&v, agents, iteration)?;
        if !fx.is_finite() {
            return Err(MaceError::Divergence { iteration });
        }
        let err = error_from_parts(&stack_g(&v), &fx, config.sigma_n)?;
        trace.push(err);
        if err < config.tol {
            converged = true;
            break;
        }
    }

    Ok(SolveReport {
        final_image: weighted_average(&v),
        final_state: v,
        iterations_run: trace.len(),
        convergence_trace: trace,
        converged,
    })
}

/// Starting image: bicubic upsampling of the measurements, clipped at zero.
pub fn initialize(y: &Image, factor: usize) -> Result<Image, MaceError> {
    Ok(bicubic_upsample(y, factor)?.clip_nonnegative())
}
