//! Successive convex approximation over the relaxed feasible set
//! `Tr(PPᴴ) ≤ N_r`, `|θ_l| ≤ 1`.
//!
//! Each `Φ_ij` is convex in `P` for fixed `θ` and in `θ` for fixed `P`, so its
//! tangent plane is a global minorant and `Σ exp(−Φ̃/4σ²)` is a convex upper
//! bound on `f` that touches it at the anchor. The outer loop minimizes the
//! P-surrogate, then the θ-surrogate at the new precoder.
//!
//! Both surrogates are minimized through their logarithm, a log-sum-exp of
//! affine functions. It is convex, has the same minimizers, and its gradient
//! is a convex combination of the affine slopes, so it stays well scaled at
//! any SNR. The inner solver is projected gradient with Barzilai-Borwein
//! trial steps and a backtracking majorization test; both feasible sets have
//! closed-form projections.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::constellation::ConstellationTable;
use crate::error::{Error, Result};
use crate::metrics::{log_sum_exp, CutoffObjective, DesignPoint, ObjectiveValue};
use crate::pgm::{FlatCounter, IterationRecord, Method, OptimizerTrace, Termination};
use crate::{CMatrix, CVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaParams {
    pub outer_max_iters: usize,
    pub outer_rel_tol: f64,
    pub inner_max_iters: usize,
    /// Bound on the unit-step gradient mapping `‖x − Π(x − ∇)‖` of the
    /// log-surrogate.
    pub inner_tol: f64,
    pub boundary_tol: f64,
}

impl Default for ScaParams {
    fn default() -> Self {
        Self {
            outer_max_iters: 100,
            outer_rel_tol: 1e-8,
            inner_max_iters: 500,
            inner_tol: 1e-8,
            boundary_tol: 1e-2,
        }
    }
}

impl ScaParams {
    pub fn validate(&self) -> Result<()> {
        if self.outer_max_iters == 0
            || self.inner_max_iters == 0
            || !(self.inner_tol > 0.0)
            || !(self.outer_rel_tol >= 0.0)
            || !(self.boundary_tol > 0.0)
        {
            return Err(Error::Config("SCA iteration counts and tolerances must be positive".into()));
        }
        Ok(())
    }
}

fn re_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Projection onto the Frobenius ball `‖P‖²_F ≤ radius_sq`. Points already
/// on the sphere up to rounding are returned unchanged.
pub fn project_ball(p: &CMatrix, radius_sq: f64) -> CMatrix {
    let power = p.norm_squared();
    if power <= radius_sq * (1.0 + 1e-12) {
        p.clone()
    } else {
        p * Complex64::from((radius_sq / power).sqrt())
    }
}

/// Per-coordinate projection onto the closed unit disk.
pub fn project_polydisk<'a, I: IntoIterator<Item = &'a mut Complex64>>(theta: I) {
    for t in theta {
        let r = t.norm();
        if r > 1.0 {
            *t /= r;
        }
    }
}

/// Tangent planes of every `Φ_k(θ_n, ·)` at `P_n`:
/// `Φ̃_k(P) = Φ_k + 2 Re tr(∇_kᴴ (P − P_n))` with `∇_k = Hᴴ H P_n e_k e_kᴴ`.
#[derive(Debug, Clone)]
pub struct PrecoderLinearization {
    pub anchor: CMatrix,
    /// `Hᴴ H P_n`; the slope of pair `k` is `slope_base · E_k`.
    pub slope_base: CMatrix,
    /// `Φ_k(θ_n, P_n)` per deduplicated Gram matrix.
    pub phi: Vec<f64>,
    grams: Vec<CMatrix>,
    log_multiplicity: Vec<f64>,
    log_n_vectors: f64,
    exponent_scale: f64,
}

impl PrecoderLinearization {
    /// `∇_P Φ_k` at the anchor.
    pub fn slope(&self, k: usize) -> CMatrix {
        &self.slope_base * &self.grams[k]
    }

    /// `Φ̃_k(P)` for every `k`.
    pub fn affine_values(&self, p: &CMatrix) -> Vec<f64> {
        // tr(∇_kᴴ D) = tr(E_k M) with M = (Hᴴ H P_n)ᴴ D.
        let m = self.slope_base.adjoint() * (p - &self.anchor);
        self.grams
            .iter()
            .zip(&self.phi)
            .map(|(e, phi)| phi + 2.0 * e.component_mul(&m.transpose()).sum().re)
            .collect()
    }

    fn log_terms(&self, values: &[f64]) -> Vec<f64> {
        std::iter::once(self.log_n_vectors)
            .chain(
                self.log_multiplicity
                    .iter()
                    .zip(values)
                    .map(|(lm, v)| lm - self.exponent_scale * v),
            )
            .collect()
    }

    /// `ln Σ_{i,j} exp(−Φ̃_ij(P)/4σ²)`.
    pub fn log_surrogate(&self, p: &CMatrix) -> f64 {
        log_sum_exp(self.log_terms(&self.affine_values(p)))
    }

    /// Log-surrogate and its Wirtinger gradient with respect to `P*`.
    pub fn log_surrogate_with_gradient(&self, p: &CMatrix) -> (f64, CMatrix) {
        let terms = self.log_terms(&self.affine_values(p));
        let lse = log_sum_exp(terms.iter().copied());
        let n_r = self.anchor.ncols();
        let mut s = CMatrix::zeros(n_r, n_r);
        for (e, t) in self.grams.iter().zip(&terms[1..]) {
            s += e * Complex64::from((t - lse).exp());
        }
        (lse, &self.slope_base * s * Complex64::from(-self.exponent_scale))
    }
}

/// Tangent planes of every `Φ_k(·, P_{n+1})` at `θ_n`:
/// `Φ̄_k(θ) = Φ_k + 2 Re(g_kᴴ (θ − θ_n))` with
/// `g_k = vec_d(H₂ᴴ H P e_k e_kᴴ Pᴴ H̄₁ᴴ)`.
#[derive(Debug, Clone)]
pub struct ThetaLinearization {
    pub anchor: CVector,
    /// Column `k` holds `g_k`.
    pub slopes: CMatrix,
    pub phi: Vec<f64>,
    log_multiplicity: Vec<f64>,
    log_n_vectors: f64,
    exponent_scale: f64,
}

impl ThetaLinearization {
    pub fn affine_values(&self, theta: &CVector) -> Vec<f64> {
        let lin = self.slopes.adjoint() * (theta - &self.anchor);
        self.phi.iter().zip(lin.iter()).map(|(phi, l)| phi + 2.0 * l.re).collect()
    }

    fn log_terms(&self, values: &[f64]) -> Vec<f64> {
        std::iter::once(self.log_n_vectors)
            .chain(
                self.log_multiplicity
                    .iter()
                    .zip(values)
                    .map(|(lm, v)| lm - self.exponent_scale * v),
            )
            .collect()
    }

    pub fn log_surrogate(&self, theta: &CVector) -> f64 {
        log_sum_exp(self.log_terms(&self.affine_values(theta)))
    }

    pub fn log_surrogate_with_gradient(&self, theta: &CVector) -> (f64, CVector) {
        let terms = self.log_terms(&self.affine_values(theta));
        let lse = log_sum_exp(terms.iter().copied());
        let weights =
            CVector::from_iterator(self.phi.len(), terms[1..].iter().map(|t| Complex64::from((t - lse).exp())));
        (lse, &self.slopes * weights * Complex64::from(-self.exponent_scale))
    }
}

fn log_multiplicities(table: &ConstellationTable) -> Vec<f64> {
    table.diff_grams.iter().map(|g| (g.multiplicity as f64).ln()).collect()
}

pub fn linearize_phi_precoder(
    objective: &CutoffObjective,
    point: &DesignPoint,
) -> Result<PrecoderLinearization> {
    objective.check_point(point)?;
    let h = objective.channels.assemble(&point.theta)?;
    let hp = &h * &point.precoder;
    let table = objective.table;
    Ok(PrecoderLinearization {
        anchor: point.precoder.clone(),
        slope_base: h.adjoint() * &hp,
        phi: table.diff_grams.iter().map(|g| (&hp * &g.diff).norm_squared()).collect(),
        grams: table.diff_grams.iter().map(|g| g.gram.clone()).collect(),
        log_multiplicity: log_multiplicities(table),
        log_n_vectors: (table.n_vectors() as f64).ln(),
        exponent_scale: objective.exponent_scale(),
    })
}

pub fn linearize_phi_theta(
    objective: &CutoffObjective,
    point: &DesignPoint,
) -> Result<ThetaLinearization> {
    objective.check_point(point)?;
    let channels = objective.channels;
    let table = objective.table;
    let h = channels.assemble(&point.theta)?;
    let hp = &h * &point.precoder;
    let h1p = channels.scaled_tx_ris() * &point.precoder;
    let h2_adj = channels.h_ris_rx.adjoint();
    let n_ris = channels.n_ris();

    let mut slopes = CMatrix::zeros(n_ris, table.diff_grams.len());
    let mut phi = Vec::with_capacity(table.diff_grams.len());
    for (k, g) in table.diff_grams.iter().enumerate() {
        let received = &hp * &g.diff;
        phi.push(received.norm_squared());
        let u = &h2_adj * &received;
        let v = &h1p * &g.diff;
        for l in 0..n_ris {
            slopes[(l, k)] = u[l] * v[l].conj();
        }
    }
    Ok(ThetaLinearization {
        anchor: point.theta.clone(),
        slopes,
        phi,
        log_multiplicity: log_multiplicities(table),
        log_n_vectors: (table.n_vectors() as f64).ln(),
        exponent_scale: objective.exponent_scale(),
    })
}

/// Outcome of an inner projected-gradient solve.
#[derive(Debug, Clone)]
pub struct InnerSolution<X> {
    pub x: X,
    /// Log-surrogate at `x`.
    pub log_value: f64,
    /// Log-surrogate at the anchor.
    pub anchor_log_value: f64,
    pub iterations: usize,
    /// Final unit-step gradient mapping norm.
    pub mapping_norm: f64,
    /// False when the iteration cap was reached first.
    pub converged: bool,
}

/// Projected gradient with BB trial steps on a complex variable stored as a
/// matrix. Monotone: every accepted step satisfies the majorization test
/// `F(x⁺) ≤ F(x) + 2Re⟨∇, d⟩ + ‖d‖²/t`, which implies descent.
fn projected_gradient(
    x0: CMatrix,
    value_grad: impl Fn(&CMatrix) -> (f64, CMatrix),
    value: impl Fn(&CMatrix) -> f64,
    project: impl Fn(&CMatrix) -> CMatrix,
    max_iters: usize,
    tol: f64,
) -> InnerSolution<CMatrix> {
    let mut x = x0;
    let (mut fx, mut g) = value_grad(&x);
    let anchor_log_value = fx;
    let mapping = |x: &CMatrix, g: &CMatrix| (x - project(&(x - g))).norm();
    let mut mapping_norm = mapping(&x, &g);
    let mut step = if g.norm() > 0.0 { 1.0 / g.norm() } else { 1.0 };

    for it in 0..max_iters {
        if mapping_norm <= tol {
            return InnerSolution { x, log_value: fx, anchor_log_value, iterations: it, mapping_norm, converged: true };
        }
        let mut accepted = None;
        for _ in 0..100 {
            let candidate = project(&(&x - &g * Complex64::from(step)));
            let d = &candidate - &x;
            let fc = value(&candidate);
            if fc <= fx + 2.0 * re_inner(&g, &d) + d.norm_squared() / step {
                accepted = Some((candidate, d));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, d)) = accepted else {
            // Backtracking bottomed out in rounding noise.
            return InnerSolution { x, log_value: fx, anchor_log_value, iterations: it, mapping_norm, converged: false };
        };
        if d.norm_squared() == 0.0 {
            return InnerSolution { x, log_value: fx, anchor_log_value, iterations: it + 1, mapping_norm, converged: true };
        }
        let (fc, gc) = value_grad(&candidate);
        let curvature = re_inner(&d, &(&gc - &g));
        step = if curvature > 0.0 { d.norm_squared() / curvature } else { step * 2.0 };
        x = candidate;
        fx = fc.min(fx);
        g = gc;
        mapping_norm = mapping(&x, &g);
    }
    let converged = mapping_norm <= tol;
    InnerSolution { x, log_value: fx, anchor_log_value, iterations: max_iters, mapping_norm, converged }
}

/// Minimizes the P-surrogate over `Tr(PPᴴ) ≤ N_r`.
pub fn solve_subproblem_precoder(
    lin: &PrecoderLinearization,
    n_rx: usize,
    params: &ScaParams,
) -> InnerSolution<CMatrix> {
    let radius_sq = n_rx as f64;
    projected_gradient(
        project_ball(&lin.anchor, radius_sq),
        |p| lin.log_surrogate_with_gradient(p),
        |p| lin.log_surrogate(p),
        |p| project_ball(p, radius_sq),
        params.inner_max_iters,
        params.inner_tol,
    )
}

/// Minimizes the θ-surrogate over the unit polydisk.
pub fn solve_subproblem_theta(lin: &ThetaLinearization, params: &ScaParams) -> InnerSolution<CVector> {
    let as_col = |v: &CVector| CMatrix::from_column_slice(v.len(), 1, v.as_slice());
    let as_vec = |m: &CMatrix| CVector::from_column_slice(m.as_slice());
    let mut start = lin.anchor.clone();
    project_polydisk(start.iter_mut());
    let sol = projected_gradient(
        as_col(&start),
        |t| {
            let (v, g) = lin.log_surrogate_with_gradient(&as_vec(t));
            (v, as_col(&g))
        },
        |t| lin.log_surrogate(&as_vec(t)),
        |t| {
            let mut out = t.clone();
            project_polydisk(out.iter_mut());
            out
        },
        params.inner_max_iters,
        params.inner_tol,
    );
    InnerSolution {
        x: as_vec(&sol.x),
        log_value: sol.log_value,
        anchor_log_value: sol.anchor_log_value,
        iterations: sol.iterations,
        mapping_norm: sol.mapping_norm,
        converged: sol.converged,
    }
}

/// Residuals of the relaxed constraints at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryReport {
    /// `max_l |1 − |θ_l||`.
    pub unit_modulus_residual: f64,
    /// `|N_r − Tr(PPᴴ)|`.
    pub power_residual: f64,
    pub passed: bool,
}

/// Checks that both relaxed constraints are active, as they must be at an
/// optimum of the relaxed problem.
pub fn boundary_check(point: &DesignPoint, tol: f64) -> BoundaryReport {
    let unit_modulus_residual = point.unit_modulus_residual();
    let power_residual = point.power_residual();
    BoundaryReport {
        unit_modulus_residual,
        power_residual,
        passed: unit_modulus_residual <= tol && power_residual <= tol,
    }
}

/// Runs SCA from `init`, clamped into the relaxed feasible set on entry.
///
/// A block update is kept only if the true objective does not increase;
/// the surrogate bound guarantees this in exact arithmetic, so the check
/// only discards moves lost in rounding.
pub fn run_sca(
    init: &DesignPoint,
    channels: &ChannelSet,
    table: &ConstellationTable,
    noise_power: f64,
    params: &ScaParams,
) -> Result<OptimizerTrace> {
    params.validate()?;
    let objective = CutoffObjective::new(channels, table, noise_power)?;
    objective.check_point(init)?;
    let n_r = channels.n_rx();

    let mut theta = init.theta.clone();
    project_polydisk(theta.iter_mut());
    let mut point = DesignPoint::new(theta, project_ball(&init.precoder, n_r as f64));
    let mut value: ObjectiveValue = objective.evaluate(&point)?;
    let initial = point.clone();
    let initial_log_f = value.log_f;

    let mut records = Vec::new();
    let mut flat = FlatCounter::default();
    let mut theta_gradient_evals = 0;
    let mut termination = Termination::MaxIterations;

    for iteration in 1..=params.outer_max_iters {
        let old_log_f = value.log_f;

        let lin_p = linearize_phi_precoder(&objective, &point)?;
        let sol_p = solve_subproblem_precoder(&lin_p, n_r, params);
        let candidate = DesignPoint::new(point.theta.clone(), sol_p.x.clone());
        let candidate_value = objective.evaluate(&candidate)?;
        let p_moved = candidate.precoder != point.precoder && candidate_value.log_f <= value.log_f;
        if p_moved {
            point = candidate;
            value = candidate_value;
        }
        let mid_point = Some(point.clone());

        let mut theta_moved = false;
        let mut theta_work = 0;
        let mut theta_stalled = false;
        if channels.ris_present {
            theta_gradient_evals += 1;
            let lin_t = linearize_phi_theta(&objective, &point)?;
            let sol_t = solve_subproblem_theta(&lin_t, params);
            theta_work = sol_t.iterations;
            theta_stalled = !sol_t.converged;
            let candidate = DesignPoint::new(sol_t.x, point.precoder.clone());
            let candidate_value = objective.evaluate(&candidate)?;
            if candidate.theta != point.theta && candidate_value.log_f <= value.log_f {
                point = candidate;
                value = candidate_value;
                theta_moved = true;
            }
        }

        records.push(IterationRecord {
            iteration,
            point: point.clone(),
            mid_point,
            log_f: value.log_f,
            log_excess: value.log_excess,
            cutoff_rate: value.cutoff_rate(),
            theta_step: None,
            precoder_step: None,
            theta_work,
            precoder_work: sol_p.iterations,
            theta_stalled,
            precoder_stalled: !sol_p.converged,
            unit_modulus_residual: point.unit_modulus_residual(),
            power_residual: point.power_residual(),
        });

        if !p_moved && !theta_moved {
            termination = Termination::Stationary;
            break;
        }
        if flat.update(old_log_f, value.log_f, params.outer_rel_tol) {
            termination = Termination::Converged;
            break;
        }
    }

    Ok(OptimizerTrace { method: Method::Sca, initial, initial_log_f, records, termination, theta_gradient_evals })
}
