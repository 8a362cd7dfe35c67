//! Physical layout, path loss and Rician channel synthesis.
//!
//! Coordinates follow the aerial layout of the link: the transmit array sits
//! on the wall `x = 0`, the receive array on the parallel wall `x = D`, and
//! the RIS on the perpendicular wall `y = 0`. Everything is at height
//! `z = 0`. Both antenna arrays are uniform linear arrays along `y`; the RIS
//! is a `rows × cols` grid in the `x`-`z` plane centered at `(d_ris, 0, 0)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::{CMatrix, CVector};

/// Rician factors at or above this value are treated as pure line of sight.
pub const PURE_LOS_K: f64 = 1e12;

/// Physical layout of transmitter, receiver and RIS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemGeometry {
    /// Carrier wavelength in meters.
    pub wavelength: f64,
    /// Distance `D` between the two parallel walls.
    pub wall_separation: f64,
    /// Distance `l_t` from the transmit-array midpoint to the RIS wall.
    pub tx_offset: f64,
    /// Distance `l_r` from the receive-array midpoint to the RIS wall.
    pub rx_offset: f64,
    /// Distance `d_ris` from the transmit wall to the RIS center.
    pub ris_offset: f64,
    pub tx_spacing: f64,
    pub rx_spacing: f64,
    pub ris_spacing: f64,
    pub n_tx: usize,
    pub n_rx: usize,
    pub ris_rows: usize,
    pub ris_cols: usize,
    /// Path-loss exponent of the direct link.
    pub direct_pathloss_exponent: f64,
    /// Rician factor shared by all three links.
    pub rician_k: f64,
}

impl Default for SystemGeometry {
    fn default() -> Self {
        let wavelength = 0.15;
        Self {
            wavelength,
            wall_separation: 500.0,
            tx_offset: 20.0,
            rx_offset: 20.0,
            ris_offset: 30.0,
            tx_spacing: wavelength / 2.0,
            rx_spacing: wavelength / 2.0,
            ris_spacing: wavelength / 2.0,
            n_tx: 8,
            n_rx: 2,
            ris_rows: 15,
            ris_cols: 15,
            direct_pathloss_exponent: 3.0,
            rician_k: 1.0,
        }
    }
}

impl SystemGeometry {
    pub fn n_ris(&self) -> usize {
        self.ris_rows * self.ris_cols
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("wavelength", self.wavelength)?;
        ensure_positive("wall_separation", self.wall_separation)?;
        ensure_positive("tx_offset", self.tx_offset)?;
        ensure_positive("rx_offset", self.rx_offset)?;
        ensure_positive("ris_offset", self.ris_offset)?;
        ensure_positive("tx_spacing", self.tx_spacing)?;
        ensure_positive("rx_spacing", self.rx_spacing)?;
        ensure_positive("ris_spacing", self.ris_spacing)?;
        if !(self.rician_k >= 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "rician_k must be non-negative, got {}",
                self.rician_k
            )));
        }
        if !self.direct_pathloss_exponent.is_finite() {
            return Err(Error::InvalidGeometry(
                "direct_pathloss_exponent must be finite".into(),
            ));
        }
        if self.n_rx == 0 || self.n_tx < self.n_rx {
            return Err(Error::InvalidGeometry(format!(
                "need n_tx >= n_rx >= 1, got n_tx={} n_rx={}",
                self.n_tx, self.n_rx
            )));
        }
        if self.n_ris() == 0 {
            return Err(Error::InvalidGeometry("RIS must have at least one element".into()));
        }
        Ok(())
    }
}

pub type Point3 = [f64; 3];

fn distance(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Link distances and element coordinates derived from a [`SystemGeometry`].
#[derive(Debug, Clone)]
pub struct GeometryDistances {
    /// Transmit midpoint to receive midpoint.
    pub d0: f64,
    /// Transmit midpoint to RIS center.
    pub d1: f64,
    /// RIS center to receive midpoint.
    pub d2: f64,
    pub tx_midpoint: Point3,
    pub rx_midpoint: Point3,
    pub ris_center: Point3,
    pub tx_positions: Vec<Point3>,
    pub rx_positions: Vec<Point3>,
    /// Row-major over the RIS grid.
    pub ris_positions: Vec<Point3>,
}

fn centered_offsets(count: usize, spacing: f64) -> impl Iterator<Item = f64> {
    let mid = (count as f64 - 1.0) / 2.0;
    (0..count).map(move |k| (k as f64 - mid) * spacing)
}

pub fn compute_distances(geometry: &SystemGeometry) -> Result<GeometryDistances> {
    geometry.validate()?;
    let g = geometry;
    let tx_midpoint = [0.0, g.tx_offset, 0.0];
    let rx_midpoint = [g.wall_separation, g.rx_offset, 0.0];
    let ris_center = [g.ris_offset, 0.0, 0.0];

    let tx_positions = centered_offsets(g.n_tx, g.tx_spacing)
        .map(|dy| [0.0, g.tx_offset + dy, 0.0])
        .collect();
    let rx_positions = centered_offsets(g.n_rx, g.rx_spacing)
        .map(|dy| [g.wall_separation, g.rx_offset + dy, 0.0])
        .collect();
    let mut ris_positions = Vec::with_capacity(g.n_ris());
    for dz in centered_offsets(g.ris_rows, g.ris_spacing) {
        for dx in centered_offsets(g.ris_cols, g.ris_spacing) {
            ris_positions.push([g.ris_offset + dx, 0.0, dz]);
        }
    }

    Ok(GeometryDistances {
        d0: distance(&tx_midpoint, &rx_midpoint),
        d1: distance(&tx_midpoint, &ris_center),
        d2: distance(&ris_center, &rx_midpoint),
        tx_midpoint,
        rx_midpoint,
        ris_center,
        tx_positions,
        rx_positions,
        ris_positions,
    })
}

/// Direct-link path loss `β_DIR = (4π/λ)² d0^α`.
pub fn path_loss_direct(wavelength: f64, d0: f64, exponent: f64) -> Result<f64> {
    ensure_positive("wavelength", wavelength)?;
    ensure_positive("d0", d0)?;
    Ok((4.0 * PI / wavelength).powi(2) * d0.powf(exponent))
}

/// Far-field free-space gain `β_INDIR⁻¹` of the reflected link.
pub fn path_loss_indirect(
    wavelength: f64,
    tx_offset: f64,
    rx_offset: f64,
    d1: f64,
    d2: f64,
) -> Result<f64> {
    ensure_positive("wavelength", wavelength)?;
    ensure_positive("tx_offset", tx_offset)?;
    ensure_positive("rx_offset", rx_offset)?;
    ensure_positive("d1", d1)?;
    ensure_positive("d2", d2)?;
    let angular = (tx_offset / d1 + rx_offset / d2).powi(2);
    Ok(wavelength.powi(4) * angular / (256.0 * PI * PI * d1 * d1 * d2 * d2))
}

/// Line-of-sight matrix with entries `exp(-j 2π |a_m - b_n| / λ)`.
pub fn los_matrix(positions_a: &[Point3], positions_b: &[Point3], wavelength: f64) -> CMatrix {
    DMatrix::from_fn(positions_a.len(), positions_b.len(), |m, n| {
        let phase = -2.0 * PI * distance(&positions_a[m], &positions_b[n]) / wavelength;
        Complex64::from_polar(1.0, phase)
    })
}

/// Draws one circularly-symmetric complex Gaussian sample with unit variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Rician matrix `√(K/(K+1))·los + √(1/(K+1))·W` with `W` i.i.d. CN(0, 1).
pub fn sample_rician<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    k_factor: f64,
    los: &CMatrix,
    rng: &mut R,
) -> Result<CMatrix> {
    if los.shape() != (rows, cols) {
        return Err(Error::ShapeMismatch {
            expected: format!("{rows}x{cols}"),
            actual: format!("{}x{}", los.nrows(), los.ncols()),
        });
    }
    if !(k_factor >= 0.0) {
        return Err(Error::NonPositive { name: "rician_k", value: k_factor });
    }
    if k_factor >= PURE_LOS_K {
        return Ok(los.clone());
    }
    let los_weight = (k_factor / (k_factor + 1.0)).sqrt();
    let diffuse_weight = (1.0 / (k_factor + 1.0)).sqrt();
    // Column-major draw order keeps the stream layout independent of rows.
    let mut out = CMatrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            out[(r, c)] = los[(r, c)] * los_weight + complex_gaussian(rng) * diffuse_weight;
        }
    }
    Ok(out)
}

/// One channel realization: the three fading matrices and their path gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// Direct link, `N_r × N_t`.
    pub h_direct: CMatrix,
    /// Transmitter to RIS, `N_ris × N_t`.
    pub h_tx_ris: CMatrix,
    /// RIS to receiver, `N_r × N_ris`.
    pub h_ris_rx: CMatrix,
    /// Linear gain `β_DIR⁻¹`; its square root scales `h_direct`.
    pub beta_dir_inv: f64,
    /// Linear gain `β_INDIR⁻¹`; its square root scales the cascade.
    pub beta_indir_inv: f64,
    pub direct_blocked: bool,
    /// False when the reflected path is removed (no-RIS baseline).
    pub ris_present: bool,
}

impl ChannelSet {
    /// Builds a channel set from explicit matrices, checking shapes.
    pub fn new(
        h_direct: CMatrix,
        h_tx_ris: CMatrix,
        h_ris_rx: CMatrix,
        beta_dir_inv: f64,
        beta_indir_inv: f64,
        direct_blocked: bool,
    ) -> Result<Self> {
        let (n_rx, n_tx) = h_direct.shape();
        let n_ris = h_tx_ris.nrows();
        if h_tx_ris.ncols() != n_tx || h_ris_rx.shape() != (n_rx, n_ris) {
            return Err(Error::ShapeMismatch {
                expected: format!("H_D {n_rx}x{n_tx}, H_1 Nx{n_tx}, H_2 {n_rx}xN"),
                actual: format!(
                    "H_1 {}x{}, H_2 {}x{}",
                    h_tx_ris.nrows(),
                    h_tx_ris.ncols(),
                    h_ris_rx.nrows(),
                    h_ris_rx.ncols()
                ),
            });
        }
        Ok(Self {
            h_direct,
            h_tx_ris,
            h_ris_rx,
            beta_dir_inv,
            beta_indir_inv,
            direct_blocked,
            ris_present: true,
        })
    }

    pub fn n_tx(&self) -> usize {
        self.h_direct.ncols()
    }

    pub fn n_rx(&self) -> usize {
        self.h_direct.nrows()
    }

    pub fn n_ris(&self) -> usize {
        self.h_tx_ris.nrows()
    }

    /// Copy of this realization with the reflected path removed.
    pub fn without_ris(&self) -> Self {
        Self { ris_present: false, ..self.clone() }
    }

    /// `√β_DIR⁻¹ · H_D`, or zeros when the direct link is blocked.
    pub fn scaled_direct(&self) -> CMatrix {
        if self.direct_blocked {
            CMatrix::zeros(self.n_rx(), self.n_tx())
        } else {
            &self.h_direct * Complex64::from(self.beta_dir_inv.sqrt())
        }
    }

    /// `H̄₁ = √β_INDIR⁻¹ · H₁`, or zeros when the RIS is absent.
    pub fn scaled_tx_ris(&self) -> CMatrix {
        if self.ris_present {
            &self.h_tx_ris * Complex64::from(self.beta_indir_inv.sqrt())
        } else {
            CMatrix::zeros(self.n_ris(), self.n_tx())
        }
    }

    /// Effective channel `H(θ) = √β_DIR⁻¹ H_D + √β_INDIR⁻¹ H₂ diag(θ) H₁`.
    pub fn assemble(&self, theta: &CVector) -> Result<CMatrix> {
        if theta.len() != self.n_ris() {
            return Err(Error::ShapeMismatch {
                expected: format!("theta of length {}", self.n_ris()),
                actual: format!("length {}", theta.len()),
            });
        }
        let mut h = self.scaled_direct();
        if self.ris_present {
            let mut reflected = self.scaled_tx_ris();
            for (mut row, &t) in reflected.row_iter_mut().zip(theta.iter()) {
                row *= t;
            }
            h += &self.h_ris_rx * reflected;
        }
        Ok(h)
    }
}

/// Samples `H_D`, `H₁`, `H₂` around their geometric line-of-sight components.
///
/// Draw order is `H_D`, then `H₁`, then `H₂`; `H_D` is sampled even when the
/// direct link is blocked so that blocked and unblocked runs with the same
/// seed share `H₁` and `H₂`.
pub fn realize_channels<R: Rng + ?Sized>(
    geometry: &SystemGeometry,
    rng: &mut R,
    direct_blocked: bool,
) -> Result<ChannelSet> {
    let dist = compute_distances(geometry)?;
    let g = geometry;
    let (n_tx, n_rx, n_ris) = (g.n_tx, g.n_rx, g.n_ris());

    let los_direct = los_matrix(&dist.rx_positions, &dist.tx_positions, g.wavelength);
    let los_tx_ris = los_matrix(&dist.ris_positions, &dist.tx_positions, g.wavelength);
    let los_ris_rx = los_matrix(&dist.rx_positions, &dist.ris_positions, g.wavelength);

    let h_direct = sample_rician(n_rx, n_tx, g.rician_k, &los_direct, rng)?;
    let h_tx_ris = sample_rician(n_ris, n_tx, g.rician_k, &los_tx_ris, rng)?;
    let h_ris_rx = sample_rician(n_rx, n_ris, g.rician_k, &los_ris_rx, rng)?;

    let beta_dir = path_loss_direct(g.wavelength, dist.d0, g.direct_pathloss_exponent)?;
    let beta_indir_inv =
        path_loss_indirect(g.wavelength, g.tx_offset, g.rx_offset, dist.d1, dist.d2)?;

    ChannelSet::new(h_direct, h_tx_ris, h_ris_rx, 1.0 / beta_dir, beta_indir_inv, direct_blocked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        DMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
    }

    #[test]
    fn default_layout_distances() {
        let d = compute_distances(&SystemGeometry::default()).unwrap();
        assert_relative_eq!(d.d0, 500.0, epsilon = 1e-12);
        assert_relative_eq!(d.d1, 1300f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(d.d1, 36.0555, epsilon = 1e-4);
        assert_relative_eq!(d.d2, (470f64 * 470.0 + 400.0).sqrt(), epsilon = 1e-12);
        assert!(d.d1 + d.d2 >= d.d0);
        assert_eq!(d.ris_positions.len(), 225);
        assert_eq!(d.tx_positions.len(), 8);
    }

    #[test]
    fn single_element_ris_sits_at_center() {
        let g = SystemGeometry { ris_rows: 1, ris_cols: 1, ..Default::default() };
        let d = compute_distances(&g).unwrap();
        assert_eq!(d.ris_positions, vec![d.ris_center]);
    }

    #[test]
    fn arrays_are_centered_on_midpoints() {
        let d = compute_distances(&SystemGeometry::default()).unwrap();
        let mean_y: f64 = d.tx_positions.iter().map(|p| p[1]).sum::<f64>() / 8.0;
        assert_relative_eq!(mean_y, 20.0, epsilon = 1e-12);
        let mean_x: f64 = d.ris_positions.iter().map(|p| p[0]).sum::<f64>() / 225.0;
        assert_relative_eq!(mean_x, 30.0, epsilon = 1e-12);
        assert_relative_eq!(
            distance(&d.ris_positions[0], &d.ris_positions[1]),
            0.075,
            epsilon = 1e-12
        );
    }

    #[test]
    fn invalid_geometry_rejected() {
        let bad = SystemGeometry { n_tx: 1, n_rx: 2, ..Default::default() };
        assert!(compute_distances(&bad).is_err());
        let bad = SystemGeometry { wavelength: 0.0, ..Default::default() };
        assert!(compute_distances(&bad).is_err());
        let bad = SystemGeometry { ris_rows: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn direct_path_loss_values() {
        // (4π/0.15)² evaluated independently: (12.566370614359172 / 0.15)².
        let prefactor = 83.775_804_095_727_82_f64.powi(2);
        assert_relative_eq!(path_loss_direct(0.15, 1.0, 3.0).unwrap(), prefactor, max_relative = 1e-12);
        assert_relative_eq!(prefactor, 7018.385, max_relative = 1e-6);
        assert_relative_eq!(
            path_loss_direct(0.15, 500.0, 3.0).unwrap(),
            8.772_981_689_857e11,
            max_relative = 1e-10
        );
        assert_relative_eq!(path_loss_direct(4.0 * PI, 1.0, 2.7).unwrap(), 1.0, epsilon = 1e-14);
        assert!(path_loss_direct(-1.0, 1.0, 3.0).is_err());
        assert!(path_loss_direct(0.15, 0.0, 3.0).is_err());
    }

    #[test]
    fn indirect_path_loss_values() {
        let d = 1300f64.sqrt();
        assert_relative_eq!(
            path_loss_indirect(0.15, 20.0, 20.0, d, d).unwrap(),
            1.459_201_445_691e-13,
            max_relative = 1e-10
        );
        let (d1, d2) = (3.0, 7.0);
        assert_relative_eq!(
            path_loss_indirect(0.2, d1, d2, d1, d2).unwrap(),
            0.2f64.powi(4) * 4.0 / (256.0 * PI * PI * d1 * d1 * d2 * d2),
            max_relative = 1e-14
        );
        let base = path_loss_indirect(0.15, 20.0, 20.0, 36.0, 470.0).unwrap();
        let doubled = path_loss_indirect(0.30, 20.0, 20.0, 36.0, 470.0).unwrap();
        assert_relative_eq!(doubled / base, 16.0, max_relative = 1e-12);
        // Doubling every length keeps the ratios and quarters d1⁻²d2⁻² twice.
        let far = path_loss_indirect(0.15, 40.0, 40.0, 72.0, 940.0).unwrap();
        assert_relative_eq!(base / far, 16.0, max_relative = 1e-12);
        assert!(path_loss_indirect(0.15, 20.0, 20.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn los_phases() {
        let lambda = 0.3;
        let a = [[0.0, 0.0, 0.0]];
        let full = [[lambda, 0.0, 0.0], [0.0, 2.0 * lambda, 0.0]];
        let m = los_matrix(&a, &full, lambda);
        for z in m.iter() {
            assert_relative_eq!(z.re, 1.0, epsilon = 1e-12);
            assert_relative_eq!(z.im, 0.0, epsilon = 1e-12);
        }
        let half = los_matrix(&a, &[[0.0, 0.0, lambda / 2.0]], lambda);
        assert_relative_eq!(half[(0, 0)].re, -1.0, epsilon = 1e-12);
        let d = compute_distances(&SystemGeometry::default()).unwrap();
        let big = los_matrix(&d.ris_positions, &d.tx_positions, 0.15);
        assert!(big.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rician_pure_los_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let los = random_matrix(3, 4, &mut rng);
        let out = sample_rician(3, 4, PURE_LOS_K, &los, &mut rng).unwrap();
        assert!((&out - &los).norm() <= 1e-5 * los.norm());
    }

    #[test]
    fn rician_shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let los = CMatrix::zeros(2, 2);
        assert!(matches!(
            sample_rician(2, 3, 1.0, &los, &mut rng),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn rician_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let los = CMatrix::from_element(1, 1, Complex64::from_polar(1.0, 0.7));

        let mut power = 0.0;
        for _ in 0..n {
            power += sample_rician(1, 1, 0.0, &los, &mut rng).unwrap()[(0, 0)].norm_sqr();
        }
        assert!((power / n as f64 - 1.0).abs() < 0.05);

        // Mean of the K = 3 draw: √(3/4)·los, standard error √(1/4)/√n per axis.
        let k = 3.0;
        let mut mean = Complex64::new(0.0, 0.0);
        let draws = 20_000;
        for _ in 0..draws {
            mean += sample_rician(1, 1, k, &los, &mut rng).unwrap()[(0, 0)];
        }
        mean /= draws as f64;
        let expected = los[(0, 0)] * (k / (k + 1.0)).sqrt();
        let sigma = (0.5 / (k + 1.0) / draws as f64).sqrt();
        assert!((mean.re - expected.re).abs() < 3.0 * sigma);
        assert!((mean.im - expected.im).abs() < 3.0 * sigma);
    }

    #[test]
    fn rician_is_seed_deterministic() {
        let los = CMatrix::from_element(4, 5, Complex64::new(1.0, 0.0));
        let a = sample_rician(4, 5, 1.0, &los, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_rician(4, 5, 1.0, &los, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn realization_dimensions_and_determinism() {
        let g = SystemGeometry::default();
        let a = realize_channels(&g, &mut ChaCha8Rng::seed_from_u64(3), true).unwrap();
        let b = realize_channels(&g, &mut ChaCha8Rng::seed_from_u64(3), true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.h_tx_ris.shape(), (225, 8));
        assert_eq!(a.h_ris_rx.shape(), (2, 225));
        assert_eq!(a.h_direct.shape(), (2, 8));
    }

    #[test]
    fn blocked_direct_link_ignores_h_direct() {
        let g = SystemGeometry { ris_rows: 3, ris_cols: 2, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut ch = realize_channels(&g, &mut rng, true).unwrap();
        let theta = CVector::from_fn(6, |l, _| Complex64::from_polar(1.0, l as f64));
        let before = ch.assemble(&theta).unwrap();
        ch.h_direct = random_matrix(2, 8, &mut rng) * Complex64::from(1e6);
        assert_eq!(before, ch.assemble(&theta).unwrap());
    }

    #[test]
    fn zero_theta_leaves_direct_term() {
        let g = SystemGeometry { ris_rows: 2, ris_cols: 2, ..Default::default() };
        let ch = realize_channels(&g, &mut ChaCha8Rng::seed_from_u64(8), false).unwrap();
        let h = ch.assemble(&CVector::zeros(4)).unwrap();
        assert!((&h - ch.scaled_direct()).norm() == 0.0);
        assert!(ch.assemble(&CVector::zeros(5)).is_err());
    }

    #[test]
    fn scalar_cascade() {
        let c = |re, im| Complex64::new(re, im);
        let ch = ChannelSet::new(
            CMatrix::from_element(1, 1, c(0.3, 0.1)),
            CMatrix::from_element(1, 1, c(1.5, -0.5)),
            CMatrix::from_element(1, 1, c(-0.2, 0.9)),
            0.0,
            4.0,
            true,
        )
        .unwrap();
        let theta = CVector::from_element(1, c(0.6, 0.8));
        let h = ch.assemble(&theta).unwrap();
        let expected = 2.0 * c(-0.2, 0.9) * c(0.6, 0.8) * c(1.5, -0.5);
        assert_relative_eq!(h[(0, 0)].re, expected.re, epsilon = 1e-14);
        assert_relative_eq!(h[(0, 0)].im, expected.im, epsilon = 1e-14);
        assert!(ch.without_ris().assemble(&theta).unwrap().norm() == 0.0);
    }

    #[test]
    fn channel_is_affine_in_theta() {
        let g = SystemGeometry { ris_rows: 3, ris_cols: 3, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut ch = realize_channels(&g, &mut rng, false).unwrap();
        // Scale gains up so absolute rounding is comparable to the entries.
        ch.beta_dir_inv = 1.0;
        ch.beta_indir_inv = 1.0;
        let ta = CVector::from_fn(9, |_, _| complex_gaussian(&mut rng));
        let tb = CVector::from_fn(9, |_, _| complex_gaussian(&mut rng));
        let combo = ch.assemble(&(&ta + &tb)).unwrap() - ch.assemble(&ta).unwrap()
            - ch.assemble(&tb).unwrap()
            + ch.assemble(&CVector::zeros(9)).unwrap();
        assert!(combo.norm() < 1e-12);
    }
}
