//! Numerical real Jordan decomposition `J = T A T^{-1}`, verified a
//! posteriori by a residual check.
//!
//! Block structure comes from kernel dimensions of `(A - lambda I)^k`
//! (rank decisions by pivot thresholding); generalized eigenvector chains
//! are realified for complex pairs. The residual is the final arbiter: a
//! decomposition whose residual exceeds the tolerance is rejected and the
//! caller may supply `(J, T)` manually.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{char_poly, eigenvalues, IntegerMatrix, LinalgError, SpectralClass, Spectrum};

type C = Complex<f64>;

/// One real Jordan block. `size` is the real dimension (even for complex
/// pairs: each pair of rows carries a rotation-scaling 2x2 cell).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JordanBlock {
    pub real: bool,
    pub re: f64,
    /// Positive for complex pairs, zero for real eigenvalues.
    pub im: f64,
    pub modulus: f64,
    pub class: SpectralClass,
    pub size: usize,
}

impl JordanBlock {
    /// The block matrix in the standard real Jordan shape.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.size;
        let mut m = DMatrix::zeros(n, n);
        if self.real {
            for t in 0..n {
                m[(t, t)] = self.re;
                if t + 1 < n {
                    m[(t, t + 1)] = 1.0;
                }
            }
        } else {
            let cells = n / 2;
            for t in 0..cells {
                let r = 2 * t;
                m[(r, r)] = self.re;
                m[(r, r + 1)] = -self.im;
                m[(r + 1, r)] = self.im;
                m[(r + 1, r + 1)] = self.re;
                if t + 1 < cells {
                    m[(r, r + 2)] = 1.0;
                    m[(r + 1, r + 3)] = 1.0;
                }
            }
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct RealJordanForm {
    pub dim: usize,
    pub blocks: Vec<JordanBlock>,
    /// Change of basis with `J = T A T^{-1}`.
    pub t: DMatrix<f64>,
    pub t_inv: DMatrix<f64>,
    /// Max-norm of `T A T^{-1} - J`.
    pub residual: f64,
    /// Max-norm of `T T^{-1} - I`.
    pub inverse_residual: f64,
}

impl RealJordanForm {
    pub fn j_matrix(&self) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.dim, self.dim);
        let mut off = 0;
        for b in &self.blocks {
            j.view_mut((off, off), (b.size, b.size)).copy_from(&b.matrix());
            off += b.size;
        }
        j
    }
}

#[derive(Debug, Clone, Copy)]
pub struct JordanConfig {
    pub precision_bits: u32,
    pub class_tol: f64,
    pub residual_tol: f64,
    pub rank_tol: f64,
}

impl Default for JordanConfig {
    fn default() -> Self {
        JordanConfig {
            precision_bits: 256,
            class_tol: 1e-9,
            residual_tol: 1e-8,
            rank_tol: 1e-9,
        }
    }
}

fn max_abs(m: &DMatrix<C>) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Kernel basis by reduced row echelon with pivot thresholding.
fn null_space(m: &DMatrix<C>, tol: f64) -> Vec<DVector<C>> {
    let (rows, cols) = m.shape();
    let mut r = m.clone();
    let mut pivot_cols: Vec<usize> = Vec::new();
    let mut row = 0usize;
    for col in 0..cols {
        // partial pivot
        let mut best = row;
        let mut best_val = 0.0;
        for i in row..rows {
            let v = r[(i, col)].norm();
            if v > best_val {
                best_val = v;
                best = i;
            }
        }
        if best_val <= tol {
            continue;
        }
        r.swap_rows(row, best);
        let piv = r[(row, col)];
        for j in col..cols {
            r[(row, j)] /= piv;
        }
        for i in 0..rows {
            if i != row {
                let f = r[(i, col)];
                if f.norm() > 0.0 {
                    for j in col..cols {
                        let sub = f * r[(row, j)];
                        r[(i, j)] -= sub;
                    }
                }
            }
        }
        pivot_cols.push(col);
        row += 1;
        if row == rows {
            break;
        }
    }
    let pivot_set: std::collections::HashSet<usize> = pivot_cols.iter().copied().collect();
    let mut basis = Vec::new();
    for col in 0..cols {
        if pivot_set.contains(&col) {
            continue;
        }
        let mut v = DVector::<C>::zeros(cols);
        v[col] = C::new(1.0, 0.0);
        for (i, &pc) in pivot_cols.iter().enumerate() {
            v[pc] = -r[(i, col)];
        }
        let norm = v.norm();
        basis.push(v / C::new(norm, 0.0));
    }
    basis
}

/// Generalized eigenvector chains for one eigenvalue, eigenvector first.
fn jordan_chains(
    m: &DMatrix<C>,
    algebraic_multiplicity: usize,
    rank_tol: f64,
) -> Result<Vec<Vec<DVector<C>>>, LinalgError> {
    let n = m.nrows();
    let scale = max_abs(m).max(1.0);
    let tol = rank_tol * scale * n as f64;

    // kernels of M^k until the dimension saturates at the multiplicity
    let mut kernels: Vec<Vec<DVector<C>>> = Vec::new();
    let mut power = DMatrix::<C>::identity(n, n);
    let mut k_max = 0usize;
    for k in 1..=n {
        power = &power * m;
        let pk = max_abs(&power).max(1.0);
        let ker = null_space(&power, rank_tol * pk * n as f64);
        let dim = ker.len();
        kernels.push(ker);
        k_max = k;
        if dim >= algebraic_multiplicity {
            break;
        }
        if k > 1 && dim == kernels[k - 2].len() {
            // stabilized below the multiplicity: rank decision failed
            return Err(LinalgError::JordanStructure {
                detail: format!(
                    "kernel dimension stabilized at {dim} < multiplicity {algebraic_multiplicity}"
                ),
            });
        }
    }
    let dims: Vec<usize> = kernels.iter().map(Vec::len).collect();
    if dims[k_max - 1] != algebraic_multiplicity {
        return Err(LinalgError::JordanStructure {
            detail: format!(
                "kernel dimension {} != multiplicity {algebraic_multiplicity}",
                dims[k_max - 1]
            ),
        });
    }

    let d = |k: usize| -> i64 {
        if k == 0 {
            0
        } else if k > k_max {
            dims[k_max - 1] as i64
        } else {
            dims[k - 1] as i64
        }
    };
    // blocks of size exactly k
    let block_counts: Vec<usize> = (1..=k_max)
        .map(|k| (2 * d(k) - d(k + 1) - d(k - 1)).max(0) as usize)
        .collect();
    let total: usize = block_counts.iter().enumerate().map(|(i, b)| (i + 1) * b).sum();
    if total != algebraic_multiplicity {
        return Err(LinalgError::JordanStructure {
            detail: format!("block sizes sum to {total}, expected {algebraic_multiplicity}"),
        });
    }

    // Modified Gram-Schmidt accumulator for the independence tests.
    let mut chains: Vec<Vec<DVector<C>>> = Vec::new();
    for k in (1..=k_max).rev() {
        let want = block_counts[k - 1];
        if want == 0 {
            continue;
        }
        let mut ortho: Vec<DVector<C>> = Vec::new();
        let push_ortho = |v: &DVector<C>, ortho: &mut Vec<DVector<C>>| -> f64 {
            let mut w = v.clone();
            for u in ortho.iter() {
                let coeff = u.dotc(&w);
                w -= u * coeff;
            }
            let norm = w.norm();
            if norm > 1e-7 {
                ortho.push(w / C::new(norm, 0.0));
            }
            norm
        };
        // span to avoid: ker M^{k-1} plus the height-k elements of taller chains
        if k > 1 {
            for v in &kernels[k - 2] {
                push_ortho(v, &mut ortho);
            }
        }
        for chain in &chains {
            if chain.len() >= k {
                push_ortho(&chain[k - 1], &mut ortho);
            }
        }
        let mut found = 0usize;
        for cand in &kernels[k - 1] {
            if found == want {
                break;
            }
            let res = push_ortho(cand, &mut ortho);
            if res > 1e-7 {
                // accept as a chain top of height k
                let mut chain = vec![cand.clone()];
                for _ in 1..k {
                    let next = m * chain.last().unwrap();
                    chain.push(next);
                }
                chain.reverse(); // eigenvector first
                let norm = chain[0].norm();
                if norm <= tol {
                    return Err(LinalgError::JordanStructure {
                        detail: "degenerate chain (eigenvector vanished)".into(),
                    });
                }
                chains.push(chain);
                found += 1;
            }
        }
        if found != want {
            return Err(LinalgError::JordanStructure {
                detail: format!("found {found} chains of height {k}, expected {want}"),
            });
        }
    }
    Ok(chains)
}

/// Real Jordan form of an integer matrix at the given configuration.
pub fn real_jordan_with(
    a: &IntegerMatrix,
    cfg: &JordanConfig,
) -> Result<RealJordanForm, LinalgError> {
    let p = char_poly(a);
    let spectrum = eigenvalues(&p, cfg.precision_bits, cfg.class_tol)?;
    real_jordan_from_spectrum(a, &spectrum, cfg)
}

pub fn real_jordan(a: &IntegerMatrix, precision_bits: u32) -> Result<RealJordanForm, LinalgError> {
    real_jordan_with(
        a,
        &JordanConfig {
            precision_bits,
            ..JordanConfig::default()
        },
    )
}

pub fn real_jordan_from_spectrum(
    a: &IntegerMatrix,
    spectrum: &Spectrum,
    cfg: &JordanConfig,
) -> Result<RealJordanForm, LinalgError> {
    let n = a.dim();
    let af = a.to_f64();
    let ac = af.map(|x| C::new(x, 0.0));

    struct PendingBlock {
        block: JordanBlock,
        columns: Vec<DVector<f64>>,
    }
    let mut pending: Vec<PendingBlock> = Vec::new();

    for item in &spectrum.items {
        let lambda = C::new(item.re, item.im);
        let mut m = ac.clone();
        for i in 0..n {
            m[(i, i)] -= lambda;
        }
        let chains = jordan_chains(&m, item.multiplicity, cfg.rank_tol)?;
        for chain in chains {
            let height = chain.len();
            if item.is_real {
                let columns = chain
                    .iter()
                    .map(|v| v.map(|c| c.re))
                    .collect::<Vec<DVector<f64>>>();
                pending.push(PendingBlock {
                    block: JordanBlock {
                        real: true,
                        re: item.re,
                        im: 0.0,
                        modulus: item.modulus,
                        class: item.class,
                        size: height,
                    },
                    columns,
                });
            } else {
                // realify: columns (Im u_j, Re u_j) give the standard real
                // rotation-scaling block with identity coupling cells
                let mut columns = Vec::with_capacity(2 * height);
                for u in &chain {
                    columns.push(u.map(|c| c.im));
                    columns.push(u.map(|c| c.re));
                }
                pending.push(PendingBlock {
                    block: JordanBlock {
                        real: false,
                        re: item.re,
                        im: item.im,
                        modulus: item.modulus,
                        class: item.class,
                        size: 2 * height,
                    },
                    columns,
                });
            }
        }
    }

    // deterministic block order: descending modulus, then size, then real part
    pending.sort_by(|x, y| {
        y.block
            .modulus
            .partial_cmp(&x.block.modulus)
            .unwrap()
            .then(y.block.size.cmp(&x.block.size))
            .then(y.block.re.partial_cmp(&x.block.re).unwrap())
            .then(y.block.real.cmp(&x.block.real))
    });

    let total: usize = pending.iter().map(|p| p.block.size).sum();
    if total != n {
        return Err(LinalgError::JordanStructure {
            detail: format!("blocks cover dimension {total}, expected {n}"),
        });
    }

    let mut p_mat = DMatrix::<f64>::zeros(n, n);
    let mut col = 0usize;
    for pb in &pending {
        for c in &pb.columns {
            p_mat.set_column(col, c);
            col += 1;
        }
    }
    let blocks: Vec<JordanBlock> = pending.into_iter().map(|p| p.block).collect();

    let t = p_mat
        .clone()
        .try_inverse()
        .ok_or(LinalgError::DecompositionUnverified {
            residual: f64::INFINITY,
            tolerance: cfg.residual_tol,
        })?;
    assemble_verified(n, blocks, t, p_mat, &af, cfg.residual_tol)
}

/// Build the form from externally supplied blocks and transform (manual
/// bypass for matrices where the numerical decomposition fails).
pub fn jordan_from_override(
    a: &IntegerMatrix,
    blocks: Vec<JordanBlock>,
    t: DMatrix<f64>,
    residual_tol: f64,
) -> Result<RealJordanForm, LinalgError> {
    let n = a.dim();
    let t_inv = t
        .clone()
        .try_inverse()
        .ok_or(LinalgError::DecompositionUnverified {
            residual: f64::INFINITY,
            tolerance: residual_tol,
        })?;
    assemble_verified(n, blocks, t, t_inv, &a.to_f64(), residual_tol)
}

fn assemble_verified(
    dim: usize,
    blocks: Vec<JordanBlock>,
    t: DMatrix<f64>,
    t_inv: DMatrix<f64>,
    af: &DMatrix<f64>,
    residual_tol: f64,
) -> Result<RealJordanForm, LinalgError> {
    let form = RealJordanForm {
        dim,
        blocks,
        t,
        t_inv,
        residual: 0.0,
        inverse_residual: 0.0,
    };
    let j = form.j_matrix();
    let conj = &form.t * af * &form.t_inv;
    let residual = (&conj - &j).iter().map(|x| x.abs()).fold(0.0, f64::max);
    let eye_res = (&form.t * &form.t_inv - DMatrix::<f64>::identity(dim, dim))
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max);
    if residual > residual_tol || eye_res > residual_tol {
        return Err(LinalgError::DecompositionUnverified {
            residual: residual.max(eye_res),
            tolerance: residual_tol,
        });
    }
    Ok(RealJordanForm {
        residual,
        inverse_residual: eye_res,
        ..form
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cat_map_diagonalizes() {
        let a = IntegerMatrix::from_rows(&[vec![2, 1], vec![1, 1]]).unwrap();
        let f = real_jordan(&a, 256).unwrap();
        assert_eq!(f.blocks.len(), 2);
        assert!(f.blocks.iter().all(|b| b.real && b.size == 1));
        let l1 = (3.0 + 5f64.sqrt()) / 2.0;
        let l2 = (3.0 - 5f64.sqrt()) / 2.0;
        assert!((f.blocks[0].re - l1).abs() < 1e-10);
        assert!((f.blocks[1].re - l2).abs() < 1e-10);
        assert!(f.residual < 1e-8);
    }

    #[test]
    fn shear_is_single_defective_block() {
        let a = IntegerMatrix::from_rows(&[vec![1, 1], vec![0, 1]]).unwrap();
        let f = real_jordan(&a, 256).unwrap();
        assert_eq!(f.blocks.len(), 1);
        assert!(f.blocks[0].real);
        assert_eq!(f.blocks[0].size, 2);
        assert!((f.blocks[0].re - 1.0).abs() < 1e-12);
        assert!(f.residual < 1e-8);
    }

    #[test]
    fn rotation_is_complex_block() {
        let a = IntegerMatrix::from_rows(&[vec![0, -1], vec![1, 0]]).unwrap();
        let f = real_jordan(&a, 256).unwrap();
        assert_eq!(f.blocks.len(), 1);
        assert!(!f.blocks[0].real);
        assert_eq!(f.blocks[0].size, 2);
        assert!((f.blocks[0].re).abs() < 1e-12);
        assert!((f.blocks[0].im - 1.0).abs() < 1e-12);
        assert!(f.residual < 1e-8);
    }

    #[test]
    fn conjugation_acts_like_a_on_random_vectors() {
        // residual small implies ||A v - T^{-1} J T v|| small
        let a = IntegerMatrix::from_rows(&[vec![2, 1, 0], vec![1, 1, 0], vec![0, 0, 3]]).unwrap();
        let f = real_jordan(&a, 256).unwrap();
        let af = a.to_f64();
        let j = f.j_matrix();
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..100 {
            let v = DVector::from_fn(3, |_, _| next());
            let lhs = &af * &v;
            let rhs = &f.t_inv * (&j * (&f.t * &v));
            let err = (lhs - rhs).norm();
            assert!(err <= 1e-6 * v.norm().max(1.0), "err = {err}");
        }
    }

    #[test]
    fn defective_3x3_structure() {
        // [[2,1,0],[0,2,1],[0,0,2]]: single real block of size 3
        let a = IntegerMatrix::from_rows(&[vec![2, 1, 0], vec![0, 2, 1], vec![0, 0, 2]]).unwrap();
        let f = real_jordan(&a, 256).unwrap();
        assert_eq!(f.blocks.len(), 1);
        assert_eq!(f.blocks[0].size, 3);
        assert!(f.residual < 1e-8);
    }

    #[test]
    fn mixed_structure_2_plus_1() {
        // diag(J2(2), 3): blocks sorted descending modulus
        let a = IntegerMatrix::from_rows(&[vec![2, 1, 0], vec![0, 2, 0], vec![0, 0, 3]]).unwrap();
        let f = real_jordan(&a, 256).unwrap();
        assert_eq!(f.blocks.len(), 2);
        assert!((f.blocks[0].re - 3.0).abs() < 1e-10);
        assert_eq!(f.blocks[1].size, 2);
        assert!((f.blocks[1].re - 2.0).abs() < 1e-10);
    }
}
