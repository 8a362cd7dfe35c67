//! Projected gradient method with Armijo-Goldstein backtracking.
//!
//! Each iteration takes a θ-step followed by a P-step at the new θ:
//!
//! ```text
//! θ⁺ = Π_Θ(θ − μ₁ ∇_θ f(θ, P)),   P⁺ = Π_P(P − μ₂ ∇_P f(θ⁺, P))
//! ```
//!
//! with `μ = L₀ ρ^k` for the smallest `k` giving
//! `f(new) ≤ f(old) − δ ‖new − old‖²`. Gradients are Wirtinger gradients
//! with respect to the conjugate variables.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_gaussian, ChannelSet};
use crate::constellation::ConstellationTable;
use crate::error::{Error, Result};
use crate::metrics::{CutoffObjective, DesignPoint, ObjectiveValue};
use crate::{CMatrix, CVector};

/// Consecutive small-decrease iterations required before declaring convergence.
pub const CONVERGENCE_PATIENCE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgmParams {
    /// Initial step `L₀`.
    pub l0: f64,
    /// Sufficient-decrease constant `δ`.
    pub delta: f64,
    /// Backtracking factor `ρ ∈ (0, 1)`.
    pub rho: f64,
    pub max_iters: usize,
    /// Relative objective decrease below which an iteration counts as flat.
    pub rel_tol: f64,
    pub max_backtracks: usize,
}

impl Default for PgmParams {
    fn default() -> Self {
        Self { l0: 1e3, delta: 1e-3, rho: 0.5, max_iters: 200, rel_tol: 1e-8, max_backtracks: 60 }
    }
}

impl PgmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.l0 > 0.0) || !(self.delta > 0.0) || !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!(
                "PGM needs L0 > 0, delta > 0, 0 < rho < 1 (got {}, {}, {})",
                self.l0, self.delta, self.rho
            )));
        }
        if self.max_iters == 0 || self.max_backtracks == 0 || !(self.rel_tol >= 0.0) {
            return Err(Error::Config("PGM max_iters and max_backtracks must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Pgm,
    Sca,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Pgm => write!(f, "PGM"),
            Method::Sca => write!(f, "SCA"),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pgm" => Ok(Method::Pgm),
            "sca" => Ok(Method::Sca),
            _ => Err(Error::Config(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Relative decrease stayed below tolerance.
    Converged,
    MaxIterations,
    /// Every update in an iteration failed its line search.
    Stalled,
    /// No variable moved.
    Stationary,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iters",
            Termination::Stalled => "stalled",
            Termination::Stationary => "stationary",
        };
        f.write_str(s)
    }
}

/// State of one iteration after both block updates.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    pub point: DesignPoint,
    /// Iterate after the first block update of this iteration (θ for PGM,
    /// P for SCA); `None` when that block was skipped.
    pub mid_point: Option<DesignPoint>,
    pub log_f: f64,
    pub log_excess: f64,
    pub cutoff_rate: f64,
    /// `μ₁`; `None` when θ was not updated.
    pub theta_step: Option<f64>,
    /// `μ₂` (PGM only).
    pub precoder_step: Option<f64>,
    /// Backtracks (PGM) or inner iterations (SCA) spent on θ.
    pub theta_work: usize,
    pub precoder_work: usize,
    /// θ line search exhausted (PGM) or inner cap reached (SCA).
    pub theta_stalled: bool,
    pub precoder_stalled: bool,
    pub unit_modulus_residual: f64,
    pub power_residual: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizerTrace {
    pub method: Method,
    pub initial: DesignPoint,
    pub initial_log_f: f64,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    pub theta_gradient_evals: usize,
}

impl OptimizerTrace {
    pub fn final_point(&self) -> &DesignPoint {
        self.records.last().map_or(&self.initial, |r| &r.point)
    }

    pub fn final_cutoff_rate(&self, n_vectors: usize) -> f64 {
        let log_f = self.records.last().map_or(self.initial_log_f, |r| r.log_f);
        (2.0 * (n_vectors as f64).ln() - log_f) / std::f64::consts::LN_2
    }
}

/// Gradients divided by the common factor `exp(log_scale)`.
///
/// The weights `exp(−Φ_ij/4σ²)` are normalized by the largest off-diagonal
/// weight `exp(−min Φ/4σ²)`, so the stored gradients stay representable
/// even when every weight underflows.
#[derive(Debug, Clone)]
pub struct ScaledGradients {
    pub theta: CVector,
    pub precoder: CMatrix,
    pub log_scale: f64,
}

impl ScaledGradients {
    pub fn true_theta(&self) -> CVector {
        &self.theta * Complex64::from(self.log_scale.exp())
    }

    pub fn true_precoder(&self) -> CMatrix {
        &self.precoder * Complex64::from(self.log_scale.exp())
    }
}

/// `Σ_k m_k exp(−(a_k − a_min)) e_k e_kᴴ` and `−a_min`.
fn weighted_gram(objective: &CutoffObjective, value: &ObjectiveValue) -> (CMatrix, f64) {
    let n_r = objective.table.n_rx;
    let mut acc = CMatrix::zeros(n_r, n_r);
    if !value.min_exponent.is_finite() {
        return (acc, 0.0);
    }
    for (g, a) in objective.table.diff_grams.iter().zip(&value.exponents) {
        let w = g.multiplicity as f64 * (-(a - value.min_exponent)).exp();
        if w > 0.0 {
            acc += &g.gram * Complex64::from(w);
        }
    }
    (acc, -value.min_exponent)
}

/// Both gradients at `point`, given its channel and objective value.
///
/// `want_theta = false` skips the θ-gradient and returns zeros for it.
pub fn scaled_gradients(
    objective: &CutoffObjective,
    point: &DesignPoint,
    h: &CMatrix,
    value: &ObjectiveValue,
    want_theta: bool,
) -> ScaledGradients {
    let channels = objective.channels;
    let coeff = Complex64::from(-objective.exponent_scale());
    let (s, log_scale) = weighted_gram(objective, value);
    let ps = &point.precoder * &s;

    let precoder = h.adjoint() * (h * &ps) * coeff;

    let mut theta = CVector::zeros(channels.n_ris());
    if want_theta && channels.ris_present {
        // diag(H₂ᴴ H P S Pᴴ H̄₁ᴴ)_l = Σ_r conj(H₂[r,l]) · (H P S Pᴴ H̄₁ᴴ)[r,l]
        let a = h * &ps * point.precoder.adjoint();
        let b = a * channels.scaled_tx_ris().adjoint();
        for (l, g) in theta.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..b.nrows() {
                acc += channels.h_ris_rx[(r, l)].conj() * b[(r, l)];
            }
            *g = acc * coeff;
        }
    }
    ScaledGradients { theta, precoder, log_scale }
}

fn gradients_at(
    point: &DesignPoint,
    channels: &ChannelSet,
    table: &ConstellationTable,
    noise_power: f64,
) -> Result<ScaledGradients> {
    let obj = CutoffObjective::new(channels, table, noise_power)?;
    obj.check_point(point)?;
    let h = channels.assemble(&point.theta)?;
    let value = obj.evaluate_hp(&(&h * &point.precoder));
    Ok(scaled_gradients(&obj, point, &h, &value, true))
}

/// `∇_{θ*} f(θ, P)` at true scale.
pub fn grad_theta(
    point: &DesignPoint,
    channels: &ChannelSet,
    table: &ConstellationTable,
    noise_power: f64,
) -> Result<CVector> {
    Ok(gradients_at(point, channels, table, noise_power)?.true_theta())
}

/// `∇_{P*} f(θ, P)` at true scale.
pub fn grad_precoder(
    point: &DesignPoint,
    channels: &ChannelSet,
    table: &ConstellationTable,
    noise_power: f64,
) -> Result<CMatrix> {
    Ok(gradients_at(point, channels, table, noise_power)?.true_precoder())
}

/// Projection onto the unit circle per coordinate; zero maps to `1`.
pub fn project_theta(theta: &CVector) -> CVector {
    theta.map(|t| {
        let r = t.norm();
        if r == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            t / r
        }
    })
}

/// Scales `P` onto the sphere `Tr(PPᴴ) = N_r`.
pub fn project_precoder(precoder: &CMatrix) -> Result<CMatrix> {
    let power = precoder.norm_squared();
    if power == 0.0 || !power.is_finite() {
        return Err(Error::ZeroPrecoder);
    }
    Ok(precoder * Complex64::from((precoder.ncols() as f64 / power).sqrt()))
}

/// Random feasible starting point: uniform RIS phases, Gaussian precoder
/// scaled to full power.
pub fn random_init<R: Rng + ?Sized>(
    n_ris: usize,
    n_tx: usize,
    n_rx: usize,
    rng: &mut R,
) -> DesignPoint {
    let theta = CVector::from_fn(n_ris, |_, _| Complex64::from_polar(1.0, 2.0 * PI * rng.random::<f64>()));
    loop {
        let p = CMatrix::from_fn(n_tx, n_rx, |_, _| complex_gaussian(rng));
        if let Ok(p) = project_precoder(&p) {
            return DesignPoint::new(theta, p);
        }
    }
}

/// Armijo test `f(new) ≤ f(old) − decrease`, evaluated on the off-diagonal
/// excess `f − N_s` in the log domain so it stays exact when the excess is
/// far below the resolution of `f` itself.
pub fn sufficient_decrease(old: &ObjectiveValue, new: &ObjectiveValue, decrease: f64) -> bool {
    if decrease <= 0.0 {
        return new.log_excess <= old.log_excess;
    }
    if old.log_excess == f64::NEG_INFINITY {
        return false;
    }
    let ratio = decrease * (-old.log_excess).exp();
    if ratio >= 1.0 {
        return false;
    }
    new.log_excess <= old.log_excess + (-ratio).ln_1p()
}

/// Current iterate with its channel and objective value.
#[derive(Debug, Clone)]
pub struct PgmState {
    pub point: DesignPoint,
    pub h: CMatrix,
    pub value: ObjectiveValue,
}

impl PgmState {
    pub fn new(objective: &CutoffObjective, point: DesignPoint) -> Result<Self> {
        objective.check_point(&point)?;
        let h = objective.channels.assemble(&point.theta)?;
        let value = objective.evaluate_hp(&(&h * &point.precoder));
        Ok(Self { point, h, value })
    }
}

/// Result of one backtracking search.
#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    pub state: PgmState,
    /// Accepted `μ = L₀ ρ^k`, or the last trial step on a stall.
    pub step: f64,
    pub backtracks: usize,
    pub stalled: bool,
    /// `‖new − old‖²` of the accepted move.
    pub moved_sq: f64,
}

pub fn line_search_theta(
    objective: &CutoffObjective,
    state: &PgmState,
    params: &PgmParams,
) -> Result<LineSearchOutcome> {
    let grads = scaled_gradients(objective, &state.point, &state.h, &state.value, true);
    if grads.theta.iter().all(|g| *g == Complex64::new(0.0, 0.0)) {
        return Ok(LineSearchOutcome { state: state.clone(), step: params.l0, backtracks: 0, stalled: false, moved_sq: 0.0 });
    }
    let mut step = params.l0;
    for k in 0..params.max_backtracks {
        let theta = project_theta(&(&state.point.theta - &grads.theta * Complex64::from(step)));
        let moved_sq = (&theta - &state.point.theta).norm_squared();
        let candidate = PgmState::new(objective, DesignPoint::new(theta, state.point.precoder.clone()))?;
        if sufficient_decrease(&state.value, &candidate.value, params.delta * moved_sq) {
            return Ok(LineSearchOutcome { state: candidate, step, backtracks: k, stalled: false, moved_sq });
        }
        step *= params.rho;
    }
    Ok(LineSearchOutcome {
        state: state.clone(),
        step: step / params.rho,
        backtracks: params.max_backtracks,
        stalled: true,
        moved_sq: 0.0,
    })
}

pub fn line_search_precoder(
    objective: &CutoffObjective,
    state: &PgmState,
    params: &PgmParams,
) -> Result<LineSearchOutcome> {
    let grads = scaled_gradients(objective, &state.point, &state.h, &state.value, false);
    if grads.precoder.iter().all(|g| *g == Complex64::new(0.0, 0.0)) {
        return Ok(LineSearchOutcome { state: state.clone(), step: params.l0, backtracks: 0, stalled: false, moved_sq: 0.0 });
    }
    let mut step = params.l0;
    for k in 0..params.max_backtracks {
        let p = project_precoder(&(&state.point.precoder - &grads.precoder * Complex64::from(step)))?;
        let moved_sq = (&p - &state.point.precoder).norm_squared();
        let value = objective.evaluate_hp(&(&state.h * &p));
        if sufficient_decrease(&state.value, &value, params.delta * moved_sq) {
            let candidate = PgmState { point: DesignPoint::new(state.point.theta.clone(), p), h: state.h.clone(), value };
            return Ok(LineSearchOutcome { state: candidate, step, backtracks: k, stalled: false, moved_sq });
        }
        step *= params.rho;
    }
    Ok(LineSearchOutcome {
        state: state.clone(),
        step: step / params.rho,
        backtracks: params.max_backtracks,
        stalled: true,
        moved_sq: 0.0,
    })
}

/// Tracks the relative-decrease stopping rule shared by both optimizers.
#[derive(Debug, Default)]
pub(crate) struct FlatCounter {
    count: usize,
}

impl FlatCounter {
    /// Records one iteration; returns true once convergence is reached.
    pub(crate) fn update(&mut self, old_log_f: f64, new_log_f: f64, rel_tol: f64) -> bool {
        let rel_decrease = -(new_log_f - old_log_f).exp_m1();
        if rel_decrease < rel_tol {
            self.count += 1;
        } else {
            self.count = 0;
        }
        self.count >= CONVERGENCE_PATIENCE
    }
}

/// Runs the projected gradient method from `init` (projected on entry).
///
/// When the channel has no RIS (`ris_present == false`) only the precoder
/// is optimized and no θ-gradients are evaluated.
pub fn run_pgm(
    init: &DesignPoint,
    channels: &ChannelSet,
    table: &ConstellationTable,
    noise_power: f64,
    params: &PgmParams,
) -> Result<OptimizerTrace> {
    params.validate()?;
    let objective = CutoffObjective::new(channels, table, noise_power)?;
    let start = DesignPoint::new(project_theta(&init.theta), project_precoder(&init.precoder)?);
    let mut state = PgmState::new(&objective, start)?;
    let initial = state.point.clone();
    let initial_log_f = state.value.log_f;

    let mut records = Vec::new();
    let mut flat = FlatCounter::default();
    let mut theta_gradient_evals = 0;
    let mut termination = Termination::MaxIterations;

    for iteration in 1..=params.max_iters {
        let old_log_f = state.value.log_f;

        let theta_outcome = if channels.ris_present {
            theta_gradient_evals += 1;
            let out = line_search_theta(&objective, &state, params)?;
            state = out.state.clone();
            Some(out)
        } else {
            None
        };
        let mid_point = theta_outcome.as_ref().map(|o| o.state.point.clone());
        let p_outcome = line_search_precoder(&objective, &state, params)?;
        state = p_outcome.state.clone();

        let theta_stalled = theta_outcome.as_ref().is_some_and(|o| o.stalled);
        let theta_moved = theta_outcome.as_ref().is_some_and(|o| o.moved_sq > 0.0);
        records.push(IterationRecord {
            iteration,
            point: state.point.clone(),
            mid_point,
            log_f: state.value.log_f,
            log_excess: state.value.log_excess,
            cutoff_rate: state.value.cutoff_rate(),
            theta_step: theta_outcome.as_ref().map(|o| o.step),
            precoder_step: Some(p_outcome.step),
            theta_work: theta_outcome.as_ref().map_or(0, |o| o.backtracks),
            precoder_work: p_outcome.backtracks,
            theta_stalled,
            precoder_stalled: p_outcome.stalled,
            unit_modulus_residual: state.point.unit_modulus_residual(),
            power_residual: state.point.power_residual(),
        });

        let all_stalled = p_outcome.stalled && (theta_outcome.is_none() || theta_stalled);
        if all_stalled {
            termination = Termination::Stalled;
            break;
        }
        if !theta_moved && p_outcome.moved_sq == 0.0 && !theta_stalled && !p_outcome.stalled {
            termination = Termination::Stationary;
            break;
        }
        if flat.update(old_log_f, state.value.log_f, params.rel_tol) {
            termination = Termination::Converged;
            break;
        }
    }

    Ok(OptimizerTrace {
        method: Method::Pgm,
        initial,
        initial_log_f,
        records,
        termination,
        theta_gradient_evals,
    })
}
