//! Unit-energy symbol alphabets and enumerated transmit vectors.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{CMatrix, CVector};

/// Default cap on `N_s = M^{N_r}`.
pub const DEFAULT_VECTOR_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModulationKind {
    Qam,
    Psk,
}

impl fmt::Display for ModulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModulationKind::Qam => write!(f, "qam"),
            ModulationKind::Psk => write!(f, "psk"),
        }
    }
}

impl FromStr for ModulationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qam" => Ok(ModulationKind::Qam),
            "psk" => Ok(ModulationKind::Psk),
            other => Err(Error::UnsupportedConstellation(format!("unknown kind '{other}'"))),
        }
    }
}

/// A symbol alphabet with unit average energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet {
    pub kind: ModulationKind,
    pub points: Vec<Complex64>,
    /// Gray labels, one per point (informational only).
    pub labels: Vec<u32>,
}

impl Alphabet {
    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }
}

fn gray(k: u32) -> u32 {
    k ^ (k >> 1)
}

/// Builds a PSK or square QAM alphabet of order `m`.
///
/// `M = 2` yields BPSK `{+1, -1}` for either kind. Square QAM points are
/// ordered by in-phase level, then quadrature level, ascending.
pub fn build_alphabet(m: usize, kind: ModulationKind) -> Result<Alphabet> {
    if m < 2 {
        return Err(Error::UnsupportedConstellation(format!("order {m} < 2")));
    }
    if m == 2 {
        return Ok(Alphabet {
            kind,
            points: vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            labels: vec![0, 1],
        });
    }
    match kind {
        ModulationKind::Psk => {
            let points = (0..m)
                .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64))
                .collect();
            let labels = (0..m as u32).map(gray).collect();
            Ok(Alphabet { kind, points, labels })
        }
        ModulationKind::Qam => {
            let side = (m as f64).sqrt().round() as usize;
            if side * side != m || !side.is_power_of_two() {
                return Err(Error::UnsupportedConstellation(format!(
                    "QAM order {m} is not an even power of two"
                )));
            }
            let bits = side.trailing_zeros();
            // Average energy of the ±1, ±3, ... grid is 2(side² − 1)/3.
            let norm = (2.0 * (m as f64 - 1.0) / 3.0).sqrt();
            let level = |k: usize| (2.0 * k as f64 - (side as f64 - 1.0)) / norm;
            let mut points = Vec::with_capacity(m);
            let mut labels = Vec::with_capacity(m);
            for i in 0..side {
                for q in 0..side {
                    points.push(Complex64::new(level(i), level(q)));
                    labels.push((gray(i as u32) << bits) | gray(q as u32));
                }
            }
            Ok(Alphabet { kind, points, labels })
        }
    }
}

/// A distinct value of `e eᴴ` over the ordered off-diagonal pairs.
#[derive(Debug, Clone)]
pub struct DiffGram {
    /// One difference vector `e_ij` whose outer product equals `gram`.
    pub diff: CVector,
    pub gram: CMatrix,
    /// Number of ordered pairs `(i, j)`, `i ≠ j`, sharing this Gram matrix.
    pub multiplicity: usize,
}

/// All `N_s = M^{N_r}` transmit vectors and their pairwise difference structure.
#[derive(Debug, Clone)]
pub struct ConstellationTable {
    pub alphabet: Alphabet,
    pub n_rx: usize,
    /// Cartesian-product vectors in lexicographic order of alphabet indices.
    pub vectors: Vec<CVector>,
    /// Deduplicated `e_ij e_ijᴴ` for `i ≠ j`, with multiplicities.
    pub diff_grams: Vec<DiffGram>,
}

impl ConstellationTable {
    pub fn n_vectors(&self) -> usize {
        self.vectors.len()
    }

    /// `e_ij = x_i − x_j`.
    pub fn diff(&self, i: usize, j: usize) -> CVector {
        &self.vectors[i] - &self.vectors[j]
    }

    pub fn log2_n_vectors(&self) -> f64 {
        (self.vectors.len() as f64).log2()
    }
}

fn gram_key(gram: &CMatrix) -> Vec<i64> {
    const SCALE: f64 = 1e9;
    let n = gram.nrows();
    let mut key = Vec::with_capacity(n * (n + 1));
    for c in 0..n {
        for r in 0..=c {
            key.push((gram[(r, c)].re * SCALE).round() as i64);
            key.push((gram[(r, c)].im * SCALE).round() as i64);
        }
    }
    key
}

pub fn enumerate_vectors(alphabet: &Alphabet, n_rx: usize) -> Result<ConstellationTable> {
    enumerate_vectors_capped(alphabet, n_rx, DEFAULT_VECTOR_CAP)
}

pub fn enumerate_vectors_capped(
    alphabet: &Alphabet,
    n_rx: usize,
    cap: usize,
) -> Result<ConstellationTable> {
    if n_rx == 0 {
        return Err(Error::InvalidGeometry("n_rx must be at least 1".into()));
    }
    let m = alphabet.order();
    let count = (m as u128).checked_pow(n_rx as u32).unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(Error::TooManyVectors { count, cap });
    }
    let n_s = count as usize;

    let vectors: Vec<CVector> = (0..n_s)
        .map(|idx| {
            // Most significant digit first gives lexicographic order.
            let mut digits = vec![0usize; n_rx];
            let mut rest = idx;
            for d in digits.iter_mut().rev() {
                *d = rest % m;
                rest /= m;
            }
            CVector::from_iterator(n_rx, digits.iter().map(|&d| alphabet.points[d]))
        })
        .collect();

    let mut index: HashMap<Vec<i64>, usize> = HashMap::new();
    let mut diff_grams: Vec<DiffGram> = Vec::new();
    for i in 0..n_s {
        for j in 0..n_s {
            if i == j {
                continue;
            }
            let e = &vectors[i] - &vectors[j];
            let gram = &e * e.adjoint();
            match index.entry(gram_key(&gram)) {
                std::collections::hash_map::Entry::Occupied(slot) => {
                    diff_grams[*slot.get()].multiplicity += 1;
                }
                std::collections::hash_map::Entry::Vacant(slot) => {
                    slot.insert(diff_grams.len());
                    diff_grams.push(DiffGram { diff: e, gram, multiplicity: 1 });
                }
            }
        }
    }

    Ok(ConstellationTable { alphabet: alphabet.clone(), n_rx, vectors, diff_grams })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn bpsk() {
        let a = build_alphabet(2, ModulationKind::Psk).unwrap();
        assert_eq!(a.points, vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]);
    }

    #[test]
    fn qpsk_as_four_qam() {
        let a = build_alphabet(4, ModulationKind::Qam).unwrap();
        for p in &a.points {
            assert_relative_eq!(p.re.abs(), FRAC_1_SQRT_2, epsilon = 1e-15);
            assert_relative_eq!(p.im.abs(), FRAC_1_SQRT_2, epsilon = 1e-15);
        }
        let mut signs: Vec<(bool, bool)> = a.points.iter().map(|p| (p.re > 0.0, p.im > 0.0)).collect();
        signs.sort();
        signs.dedup();
        assert_eq!(signs.len(), 4);
    }

    #[test]
    fn unit_average_energy() {
        for (m, kind) in [
            (2, ModulationKind::Qam),
            (4, ModulationKind::Qam),
            (16, ModulationKind::Qam),
            (64, ModulationKind::Qam),
            (256, ModulationKind::Qam),
            (8, ModulationKind::Psk),
            (3, ModulationKind::Psk),
        ] {
            let a = build_alphabet(m, kind).unwrap();
            assert_eq!(a.order(), m);
            assert!((a.average_energy() - 1.0).abs() < 1e-12, "{m} {kind}");
        }
    }

    #[test]
    fn qam16_gray_labels_differ_by_one_bit_between_neighbors() {
        let a = build_alphabet(16, ModulationKind::Qam).unwrap();
        let mut labels = a.labels.clone();
        labels.sort();
        assert_eq!(labels, (0..16).collect::<Vec<_>>());
        for i in 0..16 {
            for j in 0..16 {
                if (a.points[i] - a.points[j]).norm() < 0.64 && i != j {
                    assert_eq!((a.labels[i] ^ a.labels[j]).count_ones(), 1);
                }
            }
        }
    }

    #[test]
    fn unsupported_orders() {
        assert!(build_alphabet(8, ModulationKind::Qam).is_err());
        assert!(build_alphabet(36, ModulationKind::Qam).is_err());
        assert!(build_alphabet(1, ModulationKind::Psk).is_err());
        assert!("ask".parse::<ModulationKind>().is_err());
        assert_eq!("QAM".parse::<ModulationKind>().unwrap(), ModulationKind::Qam);
    }

    #[test]
    fn bpsk_pairs_enumerate_lexicographically() {
        let a = build_alphabet(2, ModulationKind::Psk).unwrap();
        let t = enumerate_vectors(&a, 2).unwrap();
        let as_re: Vec<(f64, f64)> = t.vectors.iter().map(|v| (v[0].re, v[1].re)).collect();
        assert_eq!(as_re, vec![(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]);
    }

    #[test]
    fn four_qam_two_streams() {
        let a = build_alphabet(4, ModulationKind::Qam).unwrap();
        let t = enumerate_vectors(&a, 2).unwrap();
        assert_eq!(t.n_vectors(), 16);
        let pairs: usize = t.diff_grams.iter().map(|g| g.multiplicity).sum();
        assert_eq!(pairs, 240);
        assert!(t.diff_grams.len() < 240);
    }

    #[test]
    fn differences_are_antisymmetric() {
        let a = build_alphabet(4, ModulationKind::Qam).unwrap();
        let t = enumerate_vectors(&a, 2).unwrap();
        for i in 0..t.n_vectors() {
            assert!(t.diff(i, i).iter().all(|z| *z == Complex64::new(0.0, 0.0)));
            for j in 0..t.n_vectors() {
                assert_eq!(t.diff(i, j), -t.diff(j, i));
            }
        }
    }

    #[test]
    fn gram_dedup_preserves_exponential_sums() {
        let a = build_alphabet(16, ModulationKind::Qam).unwrap();
        let t = enumerate_vectors(&a, 2).unwrap();
        let hp = CMatrix::from_fn(2, 2, |r, c| Complex64::new(0.7 + r as f64, 0.3 - c as f64));
        let scale = 0.37;
        let phi = |e: &CVector| (&hp * e).norm_squared();
        let mut naive = 0.0;
        for i in 0..t.n_vectors() {
            for j in 0..t.n_vectors() {
                naive += (-phi(&t.diff(i, j)) * scale).exp();
            }
        }
        let dedup = t.n_vectors() as f64
            + t.diff_grams
                .iter()
                .map(|g| g.multiplicity as f64 * (-phi(&g.diff) * scale).exp())
                .sum::<f64>();
        assert!((naive - dedup).abs() <= 1e-12 * naive);
    }

    #[test]
    fn enumeration_cap() {
        let a = build_alphabet(16, ModulationKind::Qam).unwrap();
        assert!(matches!(enumerate_vectors(&a, 4), Err(Error::TooManyVectors { .. })));
        assert!(enumerate_vectors_capped(&a, 2, 100).is_err());
        assert!(enumerate_vectors(&a, 0).is_err());
    }
}
