//! Exact rational helpers shared by the eigenvalue refiner, the lattice
//! reduction, and the circle-map orbits.

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Convert a `BigRational` to `f64` without overflowing on huge
/// numerators/denominators: both are truncated to ~96 significant bits
/// before the division.
pub fn rat_to_f64(r: &BigRational) -> f64 {
    let num = r.numer();
    let den = r.denom();
    if num.is_zero() {
        return 0.0;
    }
    let nb = num.bits() as i64;
    let db = den.bits() as i64;
    let shift = (nb.max(db) - 96).max(0) as u64;
    let n = (num >> shift).to_f64().unwrap_or(f64::NAN);
    let d = (den >> shift).to_f64().unwrap_or(f64::NAN);
    n / d
}

/// Round `r` to the nearest multiple of `2^-bits`. Keeps Newton iterates
/// from accumulating unbounded denominators.
pub fn round_to_bits(r: &BigRational, bits: u32) -> BigRational {
    let scale = BigInt::one() << bits;
    let scaled = r * BigRational::from(scale.clone());
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let rounded = if scaled.is_negative() {
        -((-scaled + half).floor())
    } else {
        (scaled + half).floor()
    };
    rounded / BigRational::from(scale)
}

/// Fractional part in `[0, 1)`, i.e. reduction modulo 1.
pub fn frac_mod_one(r: &BigRational) -> BigRational {
    r - r.floor()
}

/// Parse a rational from either "p/q" or a plain decimal string.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().ok()?;
        let q: BigInt = q.trim().parse().ok()?;
        if q.is_zero() {
            return None;
        }
        return Some(BigRational::new(p, q));
    }
    if let Some((int, fr)) = s.split_once('.') {
        let neg = int.trim_start().starts_with('-');
        let int: BigInt = if int.is_empty() || int == "-" {
            BigInt::zero()
        } else {
            int.parse().ok()?
        };
        let den = BigInt::from(10u32).pow(fr.len() as u32);
        let fr_num: BigInt = if fr.is_empty() { BigInt::zero() } else { fr.parse().ok()? };
        let frac = BigRational::new(fr_num, den);
        let whole = BigRational::from(int);
        return Some(if neg { whole - frac } else { whole + frac });
    }
    let p: BigInt = s.parse().ok()?;
    Some(BigRational::from(p))
}

/// Gaussian rational: exact complex number with rational real/imaginary parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CRat {
    pub re: BigRational,
    pub im: BigRational,
}

impl CRat {
    pub fn new(re: BigRational, im: BigRational) -> Self {
        CRat { re, im }
    }

    pub fn from_f64(re: f64, im: f64) -> Option<Self> {
        Some(CRat {
            re: BigRational::from_float(re)?,
            im: BigRational::from_float(im)?,
        })
    }

    pub fn zero() -> Self {
        CRat {
            re: BigRational::zero(),
            im: BigRational::zero(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn add(&self, o: &CRat) -> CRat {
        CRat::new(&self.re + &o.re, &self.im + &o.im)
    }

    pub fn sub(&self, o: &CRat) -> CRat {
        CRat::new(&self.re - &o.re, &self.im - &o.im)
    }

    pub fn mul(&self, o: &CRat) -> CRat {
        CRat::new(
            &self.re * &o.re - &self.im * &o.im,
            &self.re * &o.im + &self.im * &o.re,
        )
    }

    pub fn div(&self, o: &CRat) -> CRat {
        let n2 = o.norm_sq();
        CRat::new(
            (&self.re * &o.re + &self.im * &o.im) / &n2,
            (&self.im * &o.re - &self.re * &o.im) / &n2,
        )
    }

    /// |z|^2, exact.
    pub fn norm_sq(&self) -> BigRational {
        &self.re * &self.re + &self.im * &self.im
    }

    /// |z| via f64 (relative error ~1e-16).
    pub fn abs_f64(&self) -> f64 {
        rat_to_f64(&self.norm_sq()).sqrt()
    }

    pub fn round_to_bits(&self, bits: u32) -> CRat {
        CRat::new(round_to_bits(&self.re, bits), round_to_bits(&self.im, bits))
    }

    pub fn conj(&self) -> CRat {
        CRat::new(self.re.clone(), -self.im.clone())
    }
}

/// Exact sign of a rational (-1, 0, 1).
pub fn sign(r: &BigRational) -> i32 {
    match r.numer().sign() {
        Sign::Minus => -1,
        Sign::NoSign => 0,
        Sign::Plus => 1,
    }
}
