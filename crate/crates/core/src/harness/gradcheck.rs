use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_gaussian, ChannelSet};
use crate::constellation::{build_alphabet, enumerate_vectors, ModulationKind};
use crate::error::{Error, Result};
use crate::metrics::{CutoffObjective, DesignPoint};
use crate::pgm::{grad_precoder, grad_theta, random_init};
use crate::rng::{substream, tag};
use crate::{CMatrix, CVector};

pub const MAX_VECTORS: usize = 64;
pub const MAX_RIS: usize = 16;

/// Random small instances for comparing analytic gradients with central
/// finite differences. Channels are i.i.d. `CN(0, 1)` with unit path gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub n_points: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_ris: usize,
    pub order: usize,
    pub kind: ModulationKind,
    /// Fixed `σ²`; when absent each instance uses a quarter of its mean
    /// `Φ`, which keeps the exponents near one.
    pub noise_power: Option<f64>,
    pub fd_step: f64,
    pub tolerance: f64,
    pub direct_blocked: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_points: 50,
            n_tx: 4,
            n_rx: 2,
            n_ris: 8,
            order: 2,
            kind: ModulationKind::Psk,
            noise_power: None,
            fd_step: 1e-6,
            tolerance: 1e-5,
            direct_blocked: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckReport {
    pub n_points: usize,
    pub theta_max_rel_error: f64,
    pub precoder_max_rel_error: f64,
    pub passed: bool,
}

/// `‖a − b‖_∞ / max(‖a‖_∞, ‖b‖_∞)`, zero when both vanish.
pub fn max_relative_error<'a>(
    analytic: impl IntoIterator<Item = &'a Complex64>,
    numeric: impl IntoIterator<Item = &'a Complex64>,
) -> f64 {
    let (mut diff, mut scale) = (0.0f64, 0.0f64);
    for (a, n) in analytic.into_iter().zip(numeric) {
        diff = diff.max((a - n).norm());
        scale = scale.max(a.norm()).max(n.norm());
    }
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn excess(objective: &CutoffObjective, point: &DesignPoint) -> Result<f64> {
    // f − N_s; the constant cancels in every difference.
    Ok(objective.evaluate(point)?.log_excess.exp())
}

/// Central-difference Wirtinger derivative `½(∂/∂x + j ∂/∂y)` of `f`
/// at every entry selected by `perturb`.
fn wirtinger_fd(
    n: usize,
    step: f64,
    mut eval: impl FnMut(usize, Complex64) -> Result<f64>,
) -> Result<Vec<Complex64>> {
    (0..n)
        .map(|k| {
            let dx = (eval(k, Complex64::new(step, 0.0))? - eval(k, Complex64::new(-step, 0.0))?) / (2.0 * step);
            let dy = (eval(k, Complex64::new(0.0, step))? - eval(k, Complex64::new(0.0, -step))?) / (2.0 * step);
            Ok(Complex64::new(dx, dy) * 0.5)
        })
        .collect()
}

/// Finite-difference `∇_{θ*} f` and `∇_{P*} f`.
pub fn fd_gradients(objective: &CutoffObjective, point: &DesignPoint, step: f64) -> Result<(CVector, CMatrix)> {
    let theta = wirtinger_fd(point.theta.len(), step, |k, d| {
        let mut p = point.clone();
        p.theta[k] += d;
        excess(objective, &p)
    })?;
    let precoder = wirtinger_fd(point.precoder.len(), step, |k, d| {
        let mut p = point.clone();
        p.precoder[k] += d;
        excess(objective, &p)
    })?;
    let (rows, cols) = point.precoder.shape();
    Ok((CVector::from_vec(theta), CMatrix::from_column_slice(rows, cols, &precoder)))
}

pub fn gradcheck(config: &GradcheckConfig) -> Result<GradcheckReport> {
    let n_vectors = config.order.checked_pow(config.n_rx as u32).unwrap_or(usize::MAX);
    if n_vectors > MAX_VECTORS || config.n_ris > MAX_RIS {
        return Err(Error::Config(format!(
            "gradcheck is limited to N_s ≤ {MAX_VECTORS} and N_ris ≤ {MAX_RIS} (got {n_vectors}, {})",
            config.n_ris
        )));
    }
    if config.n_points == 0 || !(config.fd_step > 0.0) {
        return Err(Error::Config("gradcheck needs n_points ≥ 1 and fd_step > 0".into()));
    }
    let table = enumerate_vectors(&build_alphabet(config.order, config.kind)?, config.n_rx)?;

    let mut report =
        GradcheckReport { n_points: config.n_points, theta_max_rel_error: 0.0, precoder_max_rel_error: 0.0, passed: true };
    for k in 0..config.n_points {
        let mut rng = substream(config.seed, &[tag::GRADCHECK, k as u64]);
        let mut draw = |rows, cols| CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(&mut rng));
        let channels = ChannelSet::new(
            draw(config.n_rx, config.n_tx),
            draw(config.n_ris, config.n_tx),
            draw(config.n_rx, config.n_ris),
            1.0,
            1.0,
            config.direct_blocked,
        )?;
        let point = random_init(config.n_ris, config.n_tx, config.n_rx, &mut rng);
        let noise_power = match config.noise_power {
            Some(s) => s,
            None => {
                let h = channels.assemble(&point.theta)?;
                let hp = h * &point.precoder;
                let total: f64 = table.diff_grams.iter().map(|g| (&hp * &g.diff).norm_squared()).sum();
                (total / table.diff_grams.len() as f64 / 4.0).max(f64::MIN_POSITIVE)
            }
        };

        let objective = CutoffObjective::new(&channels, &table, noise_power)?;
        let (fd_theta, fd_p) = fd_gradients(&objective, &point, config.fd_step)?;
        let g_theta = grad_theta(&point, &channels, &table, noise_power)?;
        let g_p = grad_precoder(&point, &channels, &table, noise_power)?;
        report.theta_max_rel_error = report.theta_max_rel_error.max(max_relative_error(&g_theta, &fd_theta));
        report.precoder_max_rel_error = report.precoder_max_rel_error.max(max_relative_error(&g_p, &fd_p));
    }
    report.passed = report.theta_max_rel_error < config.tolerance && report.precoder_max_rel_error < config.tolerance;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_instance_passes() {
        let r = gradcheck(&GradcheckConfig { n_points: 10, ..Default::default() }).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn qpsk_and_blocked_pass() {
        let cfg = GradcheckConfig { n_points: 5, order: 4, kind: ModulationKind::Qam, direct_blocked: true, ..Default::default() };
        let r = gradcheck(&cfg).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn caps_enforced() {
        assert!(gradcheck(&GradcheckConfig { order: 16, n_rx: 2, ..Default::default() }).is_err());
        assert!(gradcheck(&GradcheckConfig { n_ris: 17, ..Default::default() }).is_err());
    }

    #[test]
    fn large_noise_matches_linear_expansion() {
        // f ≈ N_s² − Σ Φ/4σ², so ∇f ≈ −(1/4σ²) Σ ∇Φ for huge σ².
        let table = enumerate_vectors(&build_alphabet(2, ModulationKind::Psk).unwrap(), 2).unwrap();
        let mut rng = substream(1, &[0]);
        let mut draw = |rows, cols| CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(&mut rng));
        let ch = ChannelSet::new(draw(2, 3), draw(4, 3), draw(2, 4), 1.0, 1.0, false).unwrap();
        let point = random_init(4, 3, 2, &mut rng);
        let sigma2 = 1e8;
        let h = ch.assemble(&point.theta).unwrap();
        let mut sum_gram = CMatrix::zeros(2, 2);
        for g in &table.diff_grams {
            sum_gram += &g.gram * Complex64::from(g.multiplicity as f64);
        }
        let linear = h.adjoint() * &h * &point.precoder * sum_gram * Complex64::from(-0.25 / sigma2);
        let analytic = grad_precoder(&point, &ch, &table, sigma2).unwrap();
        assert!(max_relative_error(&analytic, &linear) < 1e-6);
    }

    #[test]
    fn zero_channel_has_zero_gradients() {
        let table = enumerate_vectors(&build_alphabet(2, ModulationKind::Psk).unwrap(), 2).unwrap();
        let ch = ChannelSet::new(CMatrix::zeros(2, 3), CMatrix::zeros(4, 3), CMatrix::zeros(2, 4), 1.0, 1.0, false)
            .unwrap();
        let point = random_init(4, 3, 2, &mut substream(2, &[0]));
        assert!(grad_theta(&point, &ch, &table, 1.0).unwrap().iter().all(|g| g.norm() == 0.0));
        assert!(grad_precoder(&point, &ch, &table, 1.0).unwrap().iter().all(|g| g.norm() == 0.0));
        let obj = CutoffObjective::new(&ch, &table, 1.0).unwrap();
        let (ft, fp) = fd_gradients(&obj, &point, 1e-6).unwrap();
        assert_eq!(max_relative_error(&ft, &ft), 0.0);
        assert!(ft.iter().chain(fp.iter()).all(|g| g.norm() == 0.0));
    }
}
