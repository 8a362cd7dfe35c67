//! Cutoff rate, the minimization objective, Monte Carlo mutual information
//! and the Gaussian-signaling baselines.
//!
//! The objective is `f(θ, P) = Σ_{i,j} exp(−Φ_ij / 4σ²)` over all ordered
//! pairs including the `N_s` diagonal terms, and the cutoff rate is
//! `R₀ = 2 log₂ N_s − log₂ f`. At realistic SNR the exponents `Φ/4σ²` can
//! reach 10⁵, so everything is carried in the log domain: the diagonal terms
//! always contribute exactly `N_s`, and the off-diagonal remainder (the
//! "excess" `f − N_s`) is kept as a log-sum-exp.

use nalgebra::linalg::Cholesky;
use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{complex_gaussian, ChannelSet};
use crate::constellation::ConstellationTable;
use crate::error::{ensure_positive, Error, Result};
use crate::rng::derive_seed;
use crate::{CMatrix, CVector};

/// Tolerance on `|θ_l| = 1` and `Tr(PPᴴ) = N_r` for strict feasibility.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// `log Σ exp(values)`; `-∞` for an empty or all-`-∞` input.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    /// `|θ_l| = 1` and `Tr(PPᴴ) = N_r`.
    Strict,
    /// `|θ_l| ≤ 1` and `Tr(PPᴴ) ≤ N_r`.
    Relaxed,
}

/// The optimization variables: RIS coefficients and precoder.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignPoint {
    pub theta: CVector,
    /// `N_t × N_r` precoding matrix.
    pub precoder: CMatrix,
}

impl DesignPoint {
    pub fn new(theta: CVector, precoder: CMatrix) -> Self {
        Self { theta, precoder }
    }

    pub fn power(&self) -> f64 {
        self.precoder.norm_squared()
    }

    /// `max_l |1 − |θ_l||`, zero for an empty RIS.
    pub fn unit_modulus_residual(&self) -> f64 {
        self.theta.iter().map(|t| (1.0 - t.norm()).abs()).fold(0.0, f64::max)
    }

    /// `|N_r − Tr(PPᴴ)|`.
    pub fn power_residual(&self) -> f64 {
        (self.precoder.ncols() as f64 - self.power()).abs()
    }

    pub fn is_feasible(&self, mode: Feasibility) -> bool {
        let n_r = self.precoder.ncols() as f64;
        match mode {
            Feasibility::Strict => {
                self.unit_modulus_residual() <= FEASIBILITY_TOL
                    && self.power_residual() <= FEASIBILITY_TOL
            }
            Feasibility::Relaxed => {
                self.theta.iter().all(|t| t.norm() <= 1.0 + FEASIBILITY_TOL)
                    && self.power() <= n_r + FEASIBILITY_TOL
            }
        }
    }
}

/// Rates reported for one design point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReport {
    pub r0: f64,
    pub mi: f64,
    pub mi_stderr: f64,
    pub mi_lower_bound: f64,
    pub gaussian_rate: f64,
    /// Natural log of the objective `f`.
    pub f_log: f64,
}

/// `Φ_ij = ‖H P e_ij‖²`.
pub fn phi(h: &CMatrix, precoder: &CMatrix, e: &CVector) -> f64 {
    (h * (precoder * e)).norm_squared()
}

/// The objective `f` at one point, in log form.
#[derive(Debug, Clone)]
pub struct ObjectiveValue {
    /// `ln f`.
    pub log_f: f64,
    /// `ln(f − N_s)`, `-∞` when every off-diagonal term vanishes.
    pub log_excess: f64,
    /// `Φ_k / 4σ²` for each deduplicated difference Gram matrix.
    pub exponents: Vec<f64>,
    /// Smallest entry of `exponents` (`+∞` when there are none).
    pub min_exponent: f64,
    pub n_vectors: usize,
}

impl ObjectiveValue {
    pub fn f(&self) -> f64 {
        self.log_f.exp()
    }

    pub fn cutoff_rate(&self) -> f64 {
        (2.0 * (self.n_vectors as f64).ln() - self.log_f) / std::f64::consts::LN_2
    }
}

/// Evaluates the objective for a fixed channel realization, alphabet and
/// noise power.
#[derive(Debug, Clone, Copy)]
pub struct CutoffObjective<'a> {
    pub channels: &'a ChannelSet,
    pub table: &'a ConstellationTable,
    pub noise_power: f64,
}

impl<'a> CutoffObjective<'a> {
    pub fn new(
        channels: &'a ChannelSet,
        table: &'a ConstellationTable,
        noise_power: f64,
    ) -> Result<Self> {
        ensure_positive("noise_power", noise_power)?;
        if table.n_rx != channels.n_rx() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} receive antennas", channels.n_rx()),
                actual: format!("{} streams in constellation table", table.n_rx),
            });
        }
        Ok(Self { channels, table, noise_power })
    }

    /// `1 / 4σ²`.
    pub fn exponent_scale(&self) -> f64 {
        0.25 / self.noise_power
    }

    pub fn check_point(&self, point: &DesignPoint) -> Result<()> {
        let (n_t, n_r) = (self.channels.n_tx(), self.channels.n_rx());
        if point.precoder.shape() != (n_t, n_r) {
            return Err(Error::ShapeMismatch {
                expected: format!("precoder {n_t}x{n_r}"),
                actual: format!("{}x{}", point.precoder.nrows(), point.precoder.ncols()),
            });
        }
        if point.theta.len() != self.channels.n_ris() {
            return Err(Error::ShapeMismatch {
                expected: format!("theta of length {}", self.channels.n_ris()),
                actual: format!("length {}", point.theta.len()),
            });
        }
        Ok(())
    }

    /// Objective from the product `H P`.
    pub fn evaluate_hp(&self, hp: &CMatrix) -> ObjectiveValue {
        let scale = self.exponent_scale();
        let exponents: Vec<f64> = self
            .table
            .diff_grams
            .iter()
            .map(|g| (hp * &g.diff).norm_squared() * scale)
            .collect();
        self.from_exponents(exponents)
    }

    /// Objective from exponents already computed per Gram matrix.
    pub fn from_exponents(&self, exponents: Vec<f64>) -> ObjectiveValue {
        let n_s = self.table.n_vectors();
        let min_exponent = exponents.iter().copied().fold(f64::INFINITY, f64::min);
        let log_excess = log_sum_exp(
            self.table
                .diff_grams
                .iter()
                .zip(&exponents)
                .map(|(g, a)| (g.multiplicity as f64).ln() - a),
        );
        let log_f = log_sum_exp([(n_s as f64).ln(), log_excess]);
        ObjectiveValue { log_f, log_excess, exponents, min_exponent, n_vectors: n_s }
    }

    pub fn evaluate(&self, point: &DesignPoint) -> Result<ObjectiveValue> {
        self.check_point(point)?;
        let h = self.channels.assemble(&point.theta)?;
        Ok(self.evaluate_hp(&(h * &point.precoder)))
    }

    /// Same objective with the noise power halved.
    pub fn half_noise(&self) -> Self {
        Self { noise_power: self.noise_power / 2.0, ..*self }
    }
}

/// Objective `f(θ, P)` at true scale (always in `[N_s, N_s²]`).
pub fn objective_f(
    point: &DesignPoint,
    channels: &ChannelSet,
    table: &ConstellationTable,
    noise_power: f64,
) -> Result<f64> {
    Ok(objective_logf(point, channels, table, noise_power)?.exp())
}

/// `ln f(θ, P)`.
pub fn objective_logf(
    point: &DesignPoint,
    channels: &ChannelSet,
    table: &ConstellationTable,
    noise_power: f64,
) -> Result<f64> {
    Ok(CutoffObjective::new(channels, table, noise_power)?.evaluate(point)?.log_f)
}

/// Cutoff rate `R₀ = 2 log₂ N_s − log₂ f` in bits per channel use.
pub fn cutoff_rate(
    point: &DesignPoint,
    channels: &ChannelSet,
    table: &ConstellationTable,
    noise_power: f64,
) -> Result<f64> {
    Ok(CutoffObjective::new(channels, table, noise_power)?.evaluate(point)?.cutoff_rate())
}

/// Cutoff rate evaluated at half the noise power (`R₀ʰ`).
pub fn cutoff_rate_half_noise(
    point: &DesignPoint,
    channels: &ChannelSet,
    table: &ConstellationTable,
    noise_power: f64,
) -> Result<f64> {
    cutoff_rate(point, channels, table, noise_power / 2.0)
}

/// Lower bound `N_r (1 − log₂ e) + R₀ʰ` on the mutual information.
///
/// Returned unclamped; it is negative at low SNR.
pub fn mi_lower_bound(r0_half: f64, n_rx: usize) -> f64 {
    n_rx as f64 * (1.0 - std::f64::consts::LOG2_E) + r0_half
}

/// Monte Carlo estimate of the discrete-input mutual information.
///
/// For each transmit index `i`, `n_noise` noise vectors are drawn and
/// `log₂ Σ_j exp(ψ_ij)` is averaged, with
/// `ψ_ij = (−‖HP(x_i − x_j) + n‖² + ‖n‖²)/σ²`. One 64-bit key is taken from
/// `rng`; index `i` then uses its own ChaCha8 stream keyed by `(key, i)`, so
/// the estimate is identical for any thread count.
///
/// Returns `(MI, standard error)` in bits.
pub fn mutual_information_mc<R: Rng + ?Sized>(
    point: &DesignPoint,
    channels: &ChannelSet,
    table: &ConstellationTable,
    noise_power: f64,
    n_noise: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let objective = CutoffObjective::new(channels, table, noise_power)?;
    objective.check_point(point)?;
    if n_noise == 0 {
        return Err(Error::Config("n_noise must be at least 1".into()));
    }
    let h = channels.assemble(&point.theta)?;
    let hp = h * &point.precoder;
    let received: Vec<CVector> = table.vectors.iter().map(|x| &hp * x).collect();
    Ok(mi_from_received(&received, noise_power, n_noise, rng.random()))
}

/// Terms more than this far below the largest exponent cannot change a sum
/// of at most 2^16 terms in double precision.
const LSE_CUTOFF: f64 = 50.0;

fn mi_from_received(received: &[CVector], noise_power: f64, n_noise: usize, key: u64) -> (f64, f64) {
    let n_s = received.len();
    let n_r = received.first().map_or(0, |r| r.len());
    let sigma = noise_power.sqrt();
    let inv_noise = 1.0 / noise_power;

    let per_index: Vec<(f64, f64)> = (0..n_s)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(key, &[i as u64]));
            let offsets: Vec<Complex64> = received
                .iter()
                .flat_map(|s| (&received[i] - s).iter().copied().collect::<Vec<_>>())
                .collect();
            let mut psi = vec![0.0; n_s];
            let mut noise = vec![Complex64::default(); n_r];
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..n_noise {
                for z in noise.iter_mut() {
                    *z = complex_gaussian(&mut rng) * sigma;
                }
                let noise_energy: f64 = noise.iter().map(|z| z.norm_sqr()).sum();
                let mut max = f64::NEG_INFINITY;
                for (p, d) in psi.iter_mut().zip(offsets.chunks_exact(n_r)) {
                    let dist: f64 = d.iter().zip(&noise).map(|(a, b)| (a + b).norm_sqr()).sum();
                    *p = (noise_energy - dist) * inv_noise;
                    max = max.max(*p);
                }
                let tail: f64 = psi.iter().filter(|&&p| p > max - LSE_CUTOFF).map(|p| (p - max).exp()).sum();
                let sample = (max + tail.ln()) * std::f64::consts::LOG2_E;
                sum += sample;
                sum_sq += sample * sample;
            }
            let n = n_noise as f64;
            let mean = sum / n;
            let var = if n_noise > 1 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
            (mean, var)
        })
        .collect();

    let n_sf = n_s as f64;
    let mi = n_sf.log2() - per_index.iter().map(|(m, _)| m).sum::<f64>() / n_sf;
    let var: f64 = per_index.iter().map(|(_, v)| v).sum::<f64>() / (n_sf * n_sf * n_noise as f64);
    (mi, var.sqrt())
}

/// Every rate reported for one design point; the MI estimate draws its key
/// from `rng`.
pub fn rate_report<R: Rng + ?Sized>(
    point: &DesignPoint,
    channels: &ChannelSet,
    table: &ConstellationTable,
    noise_power: f64,
    n_noise: usize,
    rng: &mut R,
) -> Result<RateReport> {
    let objective = CutoffObjective::new(channels, table, noise_power)?;
    let value = objective.evaluate(point)?;
    let r0_half = objective.half_noise().evaluate(point)?.cutoff_rate();
    let (mi, mi_stderr) = mutual_information_mc(point, channels, table, noise_power, n_noise, rng)?;
    Ok(RateReport {
        r0: value.cutoff_rate(),
        mi,
        mi_stderr,
        mi_lower_bound: mi_lower_bound(r0_half, channels.n_rx()),
        gaussian_rate: gaussian_rate(point, channels, noise_power)?,
        f_log: value.log_f,
    })
}

/// Log-det rate of Gaussian signaling with covariance `PPᴴ`:
/// `log₂ det(I + H P Pᴴ Hᴴ / σ²)`.
pub fn gaussian_rate(
    point: &DesignPoint,
    channels: &ChannelSet,
    noise_power: f64,
) -> Result<f64> {
    ensure_positive("noise_power", noise_power)?;
    let h = channels.assemble(&point.theta)?;
    let hp = h * &point.precoder;
    let n_r = hp.nrows();
    let gram = CMatrix::identity(n_r, n_r) + (&hp * hp.adjoint()) / Complex64::from(noise_power);
    let chol = Cholesky::new(gram)
        .ok_or_else(|| Error::Config("I + HPPᴴHᴴ/σ² is not positive definite".into()))?;
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.re.ln()).sum();
    Ok(log_det * std::f64::consts::LOG2_E)
}

/// Water-filling allocation of `power` over channel gains; returns the
/// per-mode powers in the order given.
pub fn water_filling(gains: &[f64], power: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..gains.len()).filter(|&k| gains[k] > 0.0).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]));
    let mut alloc = vec![0.0; gains.len()];
    for active in (1..=order.len()).rev() {
        let inv_sum: f64 = order[..active].iter().map(|&k| 1.0 / gains[k]).sum();
        let level = (power + inv_sum) / active as f64;
        if level > 1.0 / gains[order[active - 1]] {
            for &k in &order[..active] {
                alloc[k] = level - 1.0 / gains[k];
            }
            return alloc;
        }
    }
    alloc
}

/// Gaussian-signaling capacity of `H(θ)` under `Tr(PPᴴ) ≤ N_r`, obtained by
/// water-filling over the eigenmodes of `H Hᴴ / σ²`.
pub fn gaussian_capacity(theta: &CVector, channels: &ChannelSet, noise_power: f64) -> Result<f64> {
    ensure_positive("noise_power", noise_power)?;
    let h = channels.assemble(theta)?;
    let n_r = h.nrows();
    let gram = (&h * h.adjoint()) / Complex64::from(noise_power);
    let gains: Vec<f64> = SymmetricEigen::new(gram).eigenvalues.iter().copied().collect();
    let alloc = water_filling(&gains, n_r as f64);
    Ok(gains.iter().zip(&alloc).map(|(g, p)| (1.0 + g * p).log2()).sum())
}
