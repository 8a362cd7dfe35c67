#![allow(dead_code)]
// The oracles below index element by element on purpose.
#![allow(clippy::needless_range_loop)]

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ris_cutoff::channel::{complex_gaussian, ChannelSet};
use ris_cutoff::constellation::ConstellationTable;
use ris_cutoff::metrics::DesignPoint;
use ris_cutoff::pgm::random_init;
use ris_cutoff::CMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// i.i.d. `CN(0, 1)` channels with the given path gains and a random
/// feasible point.
pub fn random_instance(
    n_tx: usize,
    n_rx: usize,
    n_ris: usize,
    gains: (f64, f64),
    blocked: bool,
    rng: &mut ChaCha8Rng,
) -> (ChannelSet, DesignPoint) {
    let channels = ChannelSet::new(
        gaussian_matrix(n_rx, n_tx, rng),
        gaussian_matrix(n_ris, n_tx, rng),
        gaussian_matrix(n_rx, n_ris, rng),
        gains.0,
        gains.1,
        blocked,
    )
    .unwrap();
    let point = random_init(n_ris, n_tx, n_rx, rng);
    (channels, point)
}

/// `H(θ)` entry by entry, without matrix products.
pub fn naive_channel(ch: &ChannelSet, theta: &[Complex64]) -> Vec<Vec<Complex64>> {
    let (n_r, n_t, n_ris) = (ch.n_rx(), ch.n_tx(), ch.n_ris());
    let direct = if ch.direct_blocked { 0.0 } else { ch.beta_dir_inv.sqrt() };
    let cascade = if ch.ris_present { ch.beta_indir_inv.sqrt() } else { 0.0 };
    (0..n_r)
        .map(|r| {
            (0..n_t)
                .map(|t| {
                    let mut h = ch.h_direct[(r, t)] * direct;
                    for l in 0..n_ris {
                        h += ch.h_ris_rx[(r, l)] * theta[l] * ch.h_tx_ris[(l, t)] * cascade;
                    }
                    h
                })
                .collect()
        })
        .collect()
}

/// `Σ_i Σ_j exp(−‖H P (x_i − x_j)‖² / 4σ²)` by brute force.
pub fn naive_objective(ch: &ChannelSet, point: &DesignPoint, table: &ConstellationTable, noise_power: f64) -> f64 {
    let theta: Vec<Complex64> = point.theta.iter().copied().collect();
    let h = naive_channel(ch, &theta);
    let p = &point.precoder;
    let (n_r, n_t) = (ch.n_rx(), ch.n_tx());
    let mut f = 0.0;
    for xi in &table.vectors {
        for xj in &table.vectors {
            let mut phi = 0.0;
            for r in 0..n_r {
                let mut y = Complex64::new(0.0, 0.0);
                for t in 0..n_t {
                    for k in 0..p.ncols() {
                        y += h[r][t] * p[(t, k)] * (xi[k] - xj[k]);
                    }
                }
                phi += y.norm_sqr();
            }
            f += (-phi / (4.0 * noise_power)).exp();
        }
    }
    f
}
