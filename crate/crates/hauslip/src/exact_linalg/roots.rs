//! Certified complex roots of monic integer polynomials.
//!
//! Real roots are isolated exactly with Sturm sequences and refined by
//! bisection + rational Newton. Complex pairs start from companion-matrix
//! eigenvalues and are refined by Newton in Gaussian-rational arithmetic.
//! Every returned root carries a certified error radius from the bound
//! `deg * |q(z)/q'(z)|` (some root lies within that disk).

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::{CharPoly, LinalgError, SpectralClass, Spectrum, SpectrumItem};
use crate::rat::{rat_to_f64, round_to_bits, sign, CRat};

pub type QPoly = Vec<BigRational>; // ascending coefficients

pub fn trim(p: &mut QPoly) {
    while p.len() > 1 && p.last().unwrap().is_zero() {
        p.pop();
    }
}

pub fn degree(p: &QPoly) -> usize {
    p.len() - 1
}

pub fn derivative(p: &QPoly) -> QPoly {
    if p.len() <= 1 {
        return vec![BigRational::zero()];
    }
    p.iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| c * BigRational::from(BigInt::from(i as i64)))
        .collect()
}

pub fn eval_rat(p: &QPoly, x: &BigRational) -> BigRational {
    let mut acc = BigRational::zero();
    for c in p.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

pub fn eval_crat(p: &QPoly, z: &CRat) -> CRat {
    let mut acc = CRat::zero();
    for c in p.iter().rev() {
        acc = acc.mul(z);
        acc.re += c;
    }
    acc
}

fn is_zero_poly(p: &QPoly) -> bool {
    p.len() == 1 && p[0].is_zero()
}

/// Quotient and remainder of `a / b` (exact rational arithmetic).
fn poly_divrem(a: &QPoly, b: &QPoly) -> (QPoly, QPoly) {
    let mut r = a.clone();
    trim(&mut r);
    let db = degree(b);
    let lead = b.last().unwrap();
    let mut q = vec![BigRational::zero(); degree(&r).saturating_sub(db) + 1];
    while !is_zero_poly(&r) && degree(&r) >= db {
        let dr = degree(&r);
        let factor = r.last().unwrap() / lead;
        q[dr - db] = factor.clone();
        for i in 0..=db {
            let delta = &factor * &b[i];
            r[dr - db + i] -= delta;
        }
        // The leading term cancelled exactly.
        debug_assert!(r.last().unwrap().is_zero());
        trim(&mut r);
        if dr == db {
            break;
        }
    }
    trim(&mut q);
    (q, r)
}

/// Remainder of `a / b` (b nonzero).
fn poly_rem(a: &QPoly, b: &QPoly) -> QPoly {
    poly_divrem(a, b).1
}

fn poly_div_exact(a: &QPoly, b: &QPoly) -> QPoly {
    let (q, r) = poly_divrem(a, b);
    debug_assert!(is_zero_poly(&r), "non-exact polynomial division");
    q
}

fn make_monic(p: &QPoly) -> QPoly {
    let lead = p.last().unwrap();
    p.iter().map(|c| c / lead).collect()
}

/// Monic gcd over the rationals.
pub fn poly_gcd(a: &QPoly, b: &QPoly) -> QPoly {
    let mut x = a.clone();
    let mut y = b.clone();
    trim(&mut x);
    trim(&mut y);
    while !(y.len() == 1 && y[0].is_zero()) {
        let r = poly_rem(&x, &y);
        x = y;
        y = r;
    }
    if x.len() == 1 && x[0].is_zero() {
        x
    } else {
        make_monic(&x)
    }
}

/// Yun's square-free decomposition: returns `(factor, multiplicity)` with
/// `p = prod factor^multiplicity`, each factor square-free and monic.
pub fn square_free_decomposition(p: &QPoly) -> Vec<(QPoly, usize)> {
    let mut out = Vec::new();
    let dp = derivative(p);
    let a = poly_gcd(p, &dp);
    if degree(&a) == 0 {
        out.push((make_monic(p), 1));
        return out;
    }
    let mut b = poly_div_exact(p, &a);
    let mut c = poly_div_exact(&dp, &a);
    let mut i = 1usize;
    loop {
        let db = derivative(&b);
        let mut d: QPoly = c
            .iter()
            .cloned()
            .zip(db.iter().cloned().chain(std::iter::repeat(BigRational::zero())))
            .map(|(ci, bi)| ci - bi)
            .collect();
        if db.len() > c.len() {
            for extra in db.iter().skip(c.len()) {
                d.push(-extra.clone());
            }
        }
        trim(&mut d);
        let g = poly_gcd(&b, &d);
        if degree(&g) > 0 {
            out.push((g.clone(), i));
        }
        b = poly_div_exact(&b, &g);
        c = poly_div_exact(&d, &g);
        i += 1;
        if degree(&b) == 0 {
            break;
        }
    }
    out
}

/// Sturm sequence of a square-free polynomial.
fn sturm_sequence(q: &QPoly) -> Vec<QPoly> {
    let mut seq = vec![q.clone(), derivative(q)];
    loop {
        let last = &seq[seq.len() - 1];
        if last.len() == 1 && last[0].is_zero() {
            seq.pop();
            break;
        }
        if degree(last) == 0 {
            break;
        }
        let prev = &seq[seq.len() - 2];
        let mut r = poly_rem(prev, last);
        for c in r.iter_mut() {
            *c = -c.clone();
        }
        if r.len() == 1 && r[0].is_zero() {
            break;
        }
        seq.push(r);
    }
    seq
}

fn sign_changes(seq: &[QPoly], x: &BigRational) -> usize {
    let mut prev = 0i32;
    let mut changes = 0usize;
    for p in seq {
        let s = sign(&eval_rat(p, x));
        if s != 0 {
            if prev != 0 && s != prev {
                changes += 1;
            }
            prev = s;
        }
    }
    changes
}

/// Number of real roots of the (square-free) polynomial in `(a, b]`.
fn roots_in(seq: &[QPoly], a: &BigRational, b: &BigRational) -> usize {
    sign_changes(seq, a) - sign_changes(seq, b)
}

/// Cauchy bound: all roots have |z| <= 1 + max |c_i| / |lead|.
pub fn cauchy_bound(p: &QPoly) -> BigRational {
    let lead = p.last().unwrap();
    let mut m = BigRational::zero();
    for c in &p[..p.len() - 1] {
        let v = (c / lead).abs();
        if v > m {
            m = v;
        }
    }
    m + BigRational::one()
}

/// Isolating intervals `(a, b]` for the real roots of a square-free `q`.
fn isolate_real_roots(q: &QPoly) -> Vec<(BigRational, BigRational)> {
    let seq = sturm_sequence(q);
    let bound = cauchy_bound(q);
    let mut stack = vec![(-bound.clone(), bound.clone())];
    let mut out = Vec::new();
    while let Some((a, b)) = stack.pop() {
        let k = roots_in(&seq, &a, &b);
        if k == 0 {
            continue;
        }
        if k == 1 {
            out.push((a, b));
            continue;
        }
        let mid = (&a + &b) / BigRational::from(BigInt::from(2));
        stack.push((a, mid.clone()));
        stack.push((mid, b));
    }
    out.sort_by(|x, y| x.0.cmp(&y.0));
    out
}

/// A certified root: an exact rational (Gaussian rational) approximation
/// plus a radius such that some root of the polynomial lies in the disk.
#[derive(Debug, Clone)]
pub struct CertifiedRoot {
    pub approx: CRat,
    pub radius: f64,
    pub is_real: bool,
    pub multiplicity: usize,
}

/// Certified radius `deg * |q(z)/q'(z)|` with a safety factor for the f64
/// conversion.
fn newton_radius(q: &QPoly, dq: &QPoly, z: &CRat) -> f64 {
    let qz = eval_crat(q, z);
    if qz.is_zero() {
        return 0.0;
    }
    let dqz = eval_crat(dq, z);
    let ratio = qz.norm_sq() / dqz.norm_sq();
    let d = degree(q) as f64;
    d * rat_to_f64(&ratio).sqrt() * (1.0 + 1e-12)
}

/// Refine a real root inside an isolating interval to roughly `bits` of
/// precision.
fn refine_real_root(q: &QPoly, interval: (BigRational, BigRational), bits: u32) -> (CRat, f64) {
    let dq = derivative(q);
    let (mut a, mut b) = interval;
    let two = BigRational::from(BigInt::from(2));
    let sa = sign(&eval_rat(q, &a));
    // Bisect to get a solid Newton starting point.
    for _ in 0..64 {
        let mid = (&a + &b) / &two;
        let sm = sign(&eval_rat(q, &mid));
        if sm == 0 {
            let z = CRat::new(mid, BigRational::zero());
            return (z, 0.0);
        }
        if sm == sa {
            a = mid;
        } else {
            b = mid;
        }
    }
    let mut z = (&a + &b) / &two;
    let step_tol = BigRational::new(BigInt::one(), BigInt::one() << bits);
    for _ in 0..80 {
        let qz = eval_rat(q, &z);
        if qz.is_zero() {
            break;
        }
        let dqz = eval_rat(&dq, &z);
        if dqz.is_zero() {
            break;
        }
        let step = qz / dqz;
        let done = step.abs() < step_tol;
        z = round_to_bits(&(&z - &step), bits + 32);
        if done {
            break;
        }
    }
    let zc = CRat::new(z, BigRational::zero());
    let radius = newton_radius(q, &dq, &zc);
    (zc, radius)
}

/// Refine a complex root by rational Newton starting from an f64 seed.
fn refine_complex_root(q: &QPoly, seed: (f64, f64), bits: u32) -> (CRat, f64) {
    let dq = derivative(q);
    let mut z = CRat::from_f64(seed.0, seed.1).expect("finite seed");
    let step_tol = BigRational::new(BigInt::one(), BigInt::one() << bits);
    let step_tol2 = &step_tol * &step_tol;
    for _ in 0..80 {
        let qz = eval_crat(q, &z);
        if qz.is_zero() {
            break;
        }
        let dqz = eval_crat(&dq, &z);
        if dqz.is_zero() {
            break;
        }
        let step = qz.div(&dqz);
        let done = step.norm_sq() < step_tol2;
        z = z.sub(&step).round_to_bits(bits + 32);
        if done {
            break;
        }
    }
    let radius = newton_radius(q, &dq, &z);
    (z, radius)
}

/// Companion-matrix eigenvalues (f64 seeds for Newton refinement).
fn companion_eigenvalues(q: &QPoly) -> Vec<(f64, f64)> {
    let monic = make_monic(q);
    let d = degree(&monic);
    if d == 0 {
        return Vec::new();
    }
    let mut m = DMatrix::<f64>::zeros(d, d);
    for i in 1..d {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..d {
        m[(i, d - 1)] = -rat_to_f64(&monic[i]);
    }
    m.complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect()
}

/// All roots of a square-free factor, certified. Real roots come from Sturm
/// isolation; complex ones from companion seeds + rational Newton.
fn certified_roots_square_free(
    q: &QPoly,
    multiplicity: usize,
    bits: u32,
) -> Result<Vec<CertifiedRoot>, LinalgError> {
    let d = degree(q);
    let mut out = Vec::new();
    let intervals = isolate_real_roots(q);
    for iv in &intervals {
        let (z, radius) = refine_real_root(q, iv.clone(), bits);
        out.push(CertifiedRoot {
            approx: z,
            radius,
            is_real: true,
            multiplicity,
        });
    }
    let n_complex_pairs = (d - intervals.len()) / 2;
    if (d - intervals.len()) % 2 != 0 {
        return Err(LinalgError::RootCount {
            expected: d,
            found: intervals.len(),
        });
    }
    if n_complex_pairs > 0 {
        let mut seeds: Vec<(f64, f64)> = companion_eigenvalues(q)
            .into_iter()
            .filter(|&(_, im)| im > 0.0)
            .collect();
        seeds.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        seeds.truncate(n_complex_pairs);
        if seeds.len() != n_complex_pairs {
            return Err(LinalgError::RootCount {
                expected: d,
                found: intervals.len() + 2 * seeds.len(),
            });
        }
        for seed in seeds {
            let (z, radius) = refine_complex_root(q, seed, bits);
            let im = rat_to_f64(&z.im);
            if !(im.abs() > radius) {
                return Err(LinalgError::RootCount {
                    expected: d,
                    found: intervals.len(),
                });
            }
            // Canonical representative has positive imaginary part.
            let z = if im > 0.0 { z } else { z.conj() };
            out.push(CertifiedRoot {
                approx: z,
                radius,
                is_real: false,
                multiplicity,
            });
        }
    }
    Ok(out)
}

fn classify(modulus: f64, radius: f64, tol: f64) -> Option<SpectralClass> {
    let lo = modulus - radius;
    let hi = modulus + radius;
    if hi < 1.0 - tol {
        Some(SpectralClass::Stable)
    } else if lo > 1.0 + tol {
        Some(SpectralClass::Unstable)
    } else if lo > 1.0 - tol && hi < 1.0 + tol {
        Some(SpectralClass::Neutral)
    } else {
        None
    }
}

/// All complex roots of a monic integer polynomial, with certified error
/// radii and modulus classification against 1 at tolerance `tol`.
///
/// On a classification straddle the working precision doubles (up to 4096
/// bits) before giving up with `ClassificationAmbiguous`.
pub fn eigenvalues(p: &CharPoly, precision_bits: u32, tol: f64) -> Result<Spectrum, LinalgError> {
    let prat = p.to_rational();
    let factors = square_free_decomposition(&prat);
    let mut items = Vec::new();
    for (q, mult) in &factors {
        let mut bits = precision_bits.max(64);
        let roots = loop {
            let roots = certified_roots_square_free(q, *mult, bits)?;
            let all_classified = roots.iter().all(|r| {
                let m = r.approx.abs_f64();
                classify(m, r.radius, tol).is_some()
            });
            if all_classified || bits >= 4096 {
                break roots;
            }
            bits = (bits * 2).min(4096);
        };
        for r in roots {
            let modulus = r.approx.abs_f64();
            let class = classify(modulus, r.radius, tol).ok_or(
                LinalgError::ClassificationAmbiguous {
                    modulus,
                    radius: r.radius,
                },
            )?;
            items.push(SpectrumItem {
                is_real: r.is_real,
                re: rat_to_f64(&r.approx.re),
                im: rat_to_f64(&r.approx.im),
                approx: r.approx,
                multiplicity: r.multiplicity,
                modulus,
                class,
                error_radius: r.radius,
            });
        }
    }
    // Deterministic order: descending modulus, then descending real part,
    // real before complex on exact ties.
    items.sort_by(|a, b| {
        b.modulus
            .partial_cmp(&a.modulus)
            .unwrap()
            .then(b.re.partial_cmp(&a.re).unwrap())
            .then(b.is_real.cmp(&a.is_real))
    });
    let spectrum = Spectrum {
        dim: p.degree(),
        items,
    };
    let total: usize = spectrum
        .items
        .iter()
        .map(|i| i.multiplicity * if i.is_real { 1 } else { 2 })
        .sum();
    if total != p.degree() {
        return Err(LinalgError::RootCount {
            expected: p.degree(),
            found: total,
        });
    }
    Ok(spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn poly(coeffs: &[i64]) -> CharPoly {
        CharPoly {
            coeffs: coeffs.iter().map(|&c| BigInt::from(c)).collect(),
        }
    }

    #[test]
    fn cat_map_roots() {
        // t^2 - 3t + 1 -> (3 +/- sqrt5)/2
        let s = eigenvalues(&poly(&[1, -3, 1]), 256, 1e-9).unwrap();
        assert_eq!(s.items.len(), 2);
        let l1 = (3.0 + 5f64.sqrt()) / 2.0;
        let l2 = (3.0 - 5f64.sqrt()) / 2.0;
        assert!((s.items[0].re - l1).abs() < 1e-12);
        assert!((s.items[1].re - l2).abs() < 1e-12);
        assert_eq!(s.items[0].class, SpectralClass::Unstable);
        assert_eq!(s.items[1].class, SpectralClass::Stable);
        assert!(s.items[0].error_radius < 1e-9);
    }

    #[test]
    fn rotation_roots() {
        // t^2 + 1 -> +/- i, neutral complex pair
        let s = eigenvalues(&poly(&[1, 0, 1]), 256, 1e-9).unwrap();
        assert_eq!(s.items.len(), 1);
        let it = &s.items[0];
        assert!(!it.is_real);
        assert!((it.re).abs() < 1e-12);
        assert!((it.im - 1.0).abs() < 1e-12);
        assert_eq!(it.class, SpectralClass::Neutral);
    }

    #[test]
    fn linear_factors() {
        // (t-2)(t-3) = t^2 - 5t + 6 -> both unstable
        let s = eigenvalues(&poly(&[6, -5, 1]), 256, 1e-9).unwrap();
        assert_eq!(s.items.len(), 2);
        assert!((s.items[0].re - 3.0).abs() < 1e-12);
        assert!((s.items[1].re - 2.0).abs() < 1e-12);
        assert!(s.items.iter().all(|i| i.class == SpectralClass::Unstable));
    }

    #[test]
    fn repeated_roots() {
        // (t-1)^2: one real root, multiplicity 2, neutral
        let s = eigenvalues(&poly(&[1, -2, 1]), 256, 1e-9).unwrap();
        assert_eq!(s.items.len(), 1);
        assert_eq!(s.items[0].multiplicity, 2);
        assert_eq!(s.items[0].class, SpectralClass::Neutral);
        assert!((s.items[0].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn root_product_and_sum_match_coefficients() {
        // t^3 - 2t^2 - 5t + 6 = (t-1)(t+2)(t-3)
        let s = eigenvalues(&poly(&[6, -5, -2, 1]), 256, 1e-9).unwrap();
        let sum: f64 = s.items.iter().map(|i| i.re * i.multiplicity as f64).sum();
        let prod: f64 = s.items.iter().map(|i| i.re).product();
        assert!((sum - 2.0).abs() < 1e-10);
        assert!((prod - (-6.0)).abs() < 1e-10);
    }

    #[test]
    fn square_free_decomposition_splits_multiplicities() {
        // (t-1)^2 (t-2) = t^3 - 4t^2 + 5t - 2
        let p = poly(&[-2, 5, -4, 1]).to_rational();
        let f = square_free_decomposition(&p);
        let mults: Vec<usize> = f.iter().map(|(_, m)| *m).collect();
        assert!(mults.contains(&1) && mults.contains(&2));
    }
}
