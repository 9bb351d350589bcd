//! Exact and certified linear algebra on integer matrices: characteristic
//! polynomials, eigenvalues with modulus classification, real Jordan
//! decomposition, and the entropy formula `h = sum n_i log+ |lambda_i|`.

mod charpoly;
mod jordan;
mod roots;

pub use charpoly::{char_poly, CharPoly, IntegerMatrix};
pub use jordan::{
    jordan_from_override, real_jordan, real_jordan_from_spectrum, real_jordan_with, JordanBlock,
    JordanConfig, RealJordanForm,
};
pub use roots::eigenvalues;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rat::CRat;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("eigenvalue classification ambiguous: modulus {modulus} with error radius {radius} straddles the unit-circle tolerance band")]
    ClassificationAmbiguous { modulus: f64, radius: f64 },
    #[error("root bookkeeping failed: expected {expected} roots, accounted for {found}")]
    RootCount { expected: usize, found: usize },
    #[error("Jordan structure determination failed: {detail}")]
    JordanStructure { detail: String },
    #[error("Jordan decomposition unverified: residual {residual:e} exceeds tolerance {tolerance:e}; supply (J, T) manually via jordan_override")]
    DecompositionUnverified { residual: f64, tolerance: f64 },
}

/// Stability class of an eigenvalue modulus relative to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralClass {
    Stable,
    Neutral,
    Unstable,
}

/// One eigenvalue (or conjugate pair) with a certified error radius.
#[derive(Debug, Clone)]
pub struct SpectrumItem {
    pub is_real: bool,
    pub re: f64,
    /// Positive for a complex pair, zero for a real eigenvalue.
    pub im: f64,
    /// Exact rational approximation backing `re`/`im`.
    pub approx: CRat,
    pub multiplicity: usize,
    pub modulus: f64,
    pub class: SpectralClass,
    pub error_radius: f64,
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    pub dim: usize,
    pub items: Vec<SpectrumItem>,
}

impl Spectrum {
    /// Dimension contribution of an item (a complex pair counts twice).
    pub fn item_dim(item: &SpectrumItem) -> usize {
        item.multiplicity * if item.is_real { 1 } else { 2 }
    }

    pub fn min_unstable_modulus(&self) -> Option<f64> {
        self.items
            .iter()
            .filter(|i| i.class == SpectralClass::Unstable)
            .map(|i| i.modulus)
            .fold(None, |acc, m| Some(acc.map_or(m, |a: f64| a.min(m))))
    }
}

/// Topological entropy of the toral map induced by a matrix with this
/// spectrum: `sum n_i log+ |lambda_i|`, a complex pair of multiplicity m
/// contributing `2m log+ |lambda|`.
pub fn entropy(s: &Spectrum) -> f64 {
    s.items
        .iter()
        .map(|i| Spectrum::item_dim(i) as f64 * i.modulus.ln().max(0.0))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum_of(rows: &[Vec<i64>]) -> Spectrum {
        let a = IntegerMatrix::from_rows(rows).unwrap();
        eigenvalues(&char_poly(&a), 256, 1e-9).unwrap()
    }

    #[test]
    fn cat_map_entropy() {
        let s = spectrum_of(&[vec![2, 1], vec![1, 1]]);
        let expected = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        assert!((entropy(&s) - expected).abs() < 1e-14);
    }

    #[test]
    fn identity_entropy_zero() {
        let s = spectrum_of(&[vec![1, 0], vec![0, 1]]);
        assert_eq!(entropy(&s), 0.0);
    }

    #[test]
    fn diag_2_3_entropy() {
        let s = spectrum_of(&[vec![2, 0], vec![0, 3]]);
        assert!((entropy(&s) - 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn power_rule_for_entropy() {
        // h(A^k) = k h(A), spectra computed independently
        for rows in [
            vec![vec![2i64, 1], vec![1, 1]],
            vec![vec![0, -1], vec![1, 0]],
            vec![vec![2, 0], vec![0, 3]],
        ] {
            let a = IntegerMatrix::from_rows(&rows).unwrap();
            let h1 = entropy(&eigenvalues(&char_poly(&a), 256, 1e-9).unwrap());
            for k in 2..=3u32 {
                let ak = a.pow(k);
                let hk = entropy(&eigenvalues(&char_poly(&ak), 256, 1e-9).unwrap());
                assert!((hk - k as f64 * h1).abs() < 1e-9, "h(A^{k}) != {k} h(A)");
            }
        }
    }

    #[test]
    fn entropy_similarity_invariant() {
        let a = IntegerMatrix::from_rows(&[vec![2, 1], vec![1, 1]]).unwrap();
        // unimodular P = [[1,1],[0,1]]; P^{-1} = [[1,-1],[0,1]]
        let p = IntegerMatrix::from_rows(&[vec![1, 1], vec![0, 1]]).unwrap();
        let p_inv = IntegerMatrix::from_rows(&[vec![1, -1], vec![0, 1]]).unwrap();
        let b = p.mul(&a).mul(&p_inv);
        let ha = entropy(&eigenvalues(&char_poly(&a), 256, 1e-9).unwrap());
        let hb = entropy(&eigenvalues(&char_poly(&b), 256, 1e-9).unwrap());
        assert!((ha - hb).abs() < 1e-9);
    }
}
