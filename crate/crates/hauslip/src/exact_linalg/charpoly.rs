//! Exact characteristic polynomials of integer matrices.
//!
//! Faddeev-LeVerrier over `BigRational`: the intermediate traces divide
//! exactly, and the final coefficients are certified integers.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use super::LinalgError;

/// Square matrix with arbitrary-precision integer entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegerMatrix {
    n: usize,
    entries: Vec<BigInt>, // row major
}

impl IntegerMatrix {
    pub fn new(n: usize, entries: Vec<BigInt>) -> Result<Self, LinalgError> {
        if n == 0 || entries.len() != n * n {
            return Err(LinalgError::NotSquare {
                rows: if n == 0 { 0 } else { entries.len() / n },
                cols: n,
            });
        }
        Ok(IntegerMatrix { n, entries })
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self, LinalgError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(LinalgError::NotSquare {
                rows: n,
                cols: rows.first().map_or(0, Vec::len),
            });
        }
        let entries = rows
            .iter()
            .flat_map(|r| r.iter().map(|&x| BigInt::from(x)))
            .collect();
        IntegerMatrix::new(n, entries)
    }

    pub fn from_bigint_rows(rows: Vec<Vec<BigInt>>) -> Result<Self, LinalgError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(LinalgError::NotSquare {
                rows: n,
                cols: rows.first().map_or(0, Vec::len),
            });
        }
        IntegerMatrix::new(n, rows.into_iter().flatten().collect())
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![BigInt::zero(); n * n];
        for i in 0..n {
            entries[i * n + i] = BigInt::one();
        }
        IntegerMatrix { n, entries }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &BigInt {
        &self.entries[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<BigInt>> {
        (0..self.n)
            .map(|i| self.entries[i * self.n..(i + 1) * self.n].to_vec())
            .collect()
    }

    pub fn mul(&self, other: &IntegerMatrix) -> IntegerMatrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut entries = vec![BigInt::zero(); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    entries[i * n + j] += a * other.get(k, j);
                }
            }
        }
        IntegerMatrix { n, entries }
    }

    pub fn pow(&self, k: u32) -> IntegerMatrix {
        let mut acc = IntegerMatrix::identity(self.n);
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(BigInt::is_zero)
    }

    pub fn to_f64(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| {
            crate::rat::rat_to_f64(&BigRational::from(self.get(i, j).clone()))
        })
    }
}

/// Monic characteristic polynomial `det(tI - A)`, coefficients ascending
/// (constant term first).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharPoly {
    pub coeffs: Vec<BigInt>,
}

impl CharPoly {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Evaluate at an integer matrix (Cayley-Hamilton check).
    pub fn eval_matrix(&self, a: &IntegerMatrix) -> IntegerMatrix {
        let n = a.dim();
        let mut acc = IntegerMatrix {
            n,
            entries: vec![BigInt::zero(); n * n],
        };
        // Horner from the leading coefficient down.
        for c in self.coeffs.iter().rev() {
            acc = acc.mul(a);
            for i in 0..n {
                acc.entries[i * n + i] += c;
            }
        }
        acc
    }

    pub fn to_rational(&self) -> Vec<BigRational> {
        self.coeffs.iter().cloned().map(BigRational::from).collect()
    }
}

/// Exact characteristic polynomial via Faddeev-LeVerrier.
pub fn char_poly(a: &IntegerMatrix) -> CharPoly {
    let n = a.dim();
    // Work over rationals; traces divide exactly at every step.
    let rat = |m: &IntegerMatrix| -> Vec<BigRational> {
        m.entries.iter().cloned().map(BigRational::from).collect()
    };
    let a_rat = rat(a);
    let mat_mul = |x: &[BigRational], y: &[BigRational]| -> Vec<BigRational> {
        let mut out = vec![BigRational::zero(); n * n];
        for i in 0..n {
            for k in 0..n {
                let v = &x[i * n + k];
                if v.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let prod = v * &y[k * n + j];
                    out[i * n + j] += prod;
                }
            }
        }
        out
    };
    let trace = |x: &[BigRational]| -> BigRational {
        (0..n).map(|i| x[i * n + i].clone()).sum()
    };

    let mut m = a_rat.clone();
    let mut cs: Vec<BigRational> = Vec::with_capacity(n);
    for k in 1..=n {
        if k > 1 {
            // M_k = A (M_{k-1} - c_{k-1} I)
            let mut shifted = m.clone();
            let c_prev = cs.last().unwrap().clone();
            for i in 0..n {
                shifted[i * n + i] -= &c_prev;
            }
            m = mat_mul(&a_rat, &shifted);
        }
        let c = trace(&m) / BigRational::from(BigInt::from(k as i64));
        cs.push(c);
    }

    // det(tI - A) = t^n - c_1 t^{n-1} - ... - c_n
    let mut coeffs = vec![BigInt::zero(); n + 1];
    coeffs[n] = BigInt::one();
    for (k, c) in cs.iter().enumerate() {
        let neg = -c;
        assert!(neg.is_integer(), "Faddeev-LeVerrier coefficient not integral");
        coeffs[n - 1 - k] = neg.to_integer();
    }
    CharPoly { coeffs }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cat_map_char_poly() {
        // [[2,1],[1,1]] -> t^2 - 3t + 1 (cofactor expansion by hand)
        let a = IntegerMatrix::from_rows(&[vec![2, 1], vec![1, 1]]).unwrap();
        let p = char_poly(&a);
        assert_eq!(
            p.coeffs,
            vec![BigInt::from(1), BigInt::from(-3), BigInt::from(1)]
        );
    }

    #[test]
    fn identity_char_poly() {
        // (t-1)^2
        let a = IntegerMatrix::identity(2);
        let p = char_poly(&a);
        assert_eq!(
            p.coeffs,
            vec![BigInt::from(1), BigInt::from(-2), BigInt::from(1)]
        );
    }

    #[test]
    fn rotation_char_poly() {
        // [[0,-1],[1,0]] -> t^2 + 1 (cofactor expansion)
        let a = IntegerMatrix::from_rows(&[vec![0, -1], vec![1, 0]]).unwrap();
        let p = char_poly(&a);
        assert_eq!(
            p.coeffs,
            vec![BigInt::from(1), BigInt::from(0), BigInt::from(1)]
        );
    }

    #[test]
    fn cayley_hamilton() {
        for rows in [
            vec![vec![2, 1], vec![1, 1]],
            vec![vec![0, -1], vec![1, 0]],
            vec![vec![1, 2, 3], vec![0, 1, 4], vec![5, 6, 0]],
            vec![vec![2, 0, 0], vec![0, 3, 0], vec![0, 0, 5]],
        ] {
            let a = IntegerMatrix::from_rows(&rows).unwrap();
            let p = char_poly(&a);
            assert!(p.eval_matrix(&a).is_zero(), "Cayley-Hamilton failed");
        }
    }
}
