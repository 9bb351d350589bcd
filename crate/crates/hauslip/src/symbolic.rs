//! Shift spaces: eventually periodic points, the metric r^{-n}, entropy via
//! spectral radius and cylinder counting, and the cylinder-cover dimension
//! estimate.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact_linalg::{char_poly, eigenvalues, IntegerMatrix};

#[derive(Debug, Error)]
pub enum SymbolicError {
    #[error("alphabet size must be at least 1, got {0}")]
    InvalidAlphabet(usize),
    #[error("transition matrix must be {r}x{r} over {{0,1}}")]
    BadTransitions { r: usize },
    #[error("subshift is empty: every symbol eventually dies")]
    EmptySubshift,
    #[error("point is not admissible: forbidden transition {from} -> {to}")]
    Inadmissible { from: u8, to: u8 },
    #[error("symbol {0} out of range for alphabet size {1}")]
    SymbolOutOfRange(u8, usize),
    #[error("invalid point literal {0:?}: expected \"pre|period\" with digit symbols and nonempty period")]
    BadLiteral(String),
    #[error("spectral radius iteration failed to certify within tolerance")]
    SpectralRadiusUncertified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubshiftKind {
    Full,
    Sft,
}

/// Raw subshift description as it appears in input files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubshiftSpec {
    pub r: usize,
    pub kind: SubshiftKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transitions: Option<Vec<Vec<u8>>>,
}

/// A full shift or subshift of finite type on `{0,...,r-1}`.
///
/// Symbols with no infinite admissible continuation are pruned up front, so
/// every counted word extends to a point of the subshift.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subshift {
    pub r: usize,
    pub kind: SubshiftKind,
    /// r x r, entry (i, j) = 1 iff symbol j may follow symbol i.
    transitions: Vec<Vec<u8>>,
    /// symbols that admit an infinite continuation
    alive: Vec<bool>,
}

impl Subshift {
    pub fn full(r: usize) -> Result<Self, SymbolicError> {
        if r < 1 {
            return Err(SymbolicError::InvalidAlphabet(r));
        }
        Ok(Subshift {
            r,
            kind: SubshiftKind::Full,
            transitions: vec![vec![1; r]; r],
            alive: vec![true; r],
        })
    }

    pub fn sft(r: usize, transitions: Vec<Vec<u8>>) -> Result<Self, SymbolicError> {
        if r < 1 {
            return Err(SymbolicError::InvalidAlphabet(r));
        }
        if transitions.len() != r
            || transitions
                .iter()
                .any(|row| row.len() != r || row.iter().any(|&e| e > 1))
        {
            return Err(SymbolicError::BadTransitions { r });
        }
        // prune symbols whose rows die out
        let mut alive = vec![true; r];
        loop {
            let mut changed = false;
            for i in 0..r {
                if alive[i] && (0..r).all(|j| !alive[j] || transitions[i][j] == 0) {
                    alive[i] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if alive.iter().all(|&a| !a) {
            return Err(SymbolicError::EmptySubshift);
        }
        Ok(Subshift {
            r,
            kind: SubshiftKind::Sft,
            transitions,
            alive,
        })
    }

    pub fn from_spec(spec: &SubshiftSpec) -> Result<Self, SymbolicError> {
        match spec.kind {
            SubshiftKind::Full => Subshift::full(spec.r),
            SubshiftKind::Sft => {
                let t = spec
                    .transitions
                    .clone()
                    .ok_or(SymbolicError::BadTransitions { r: spec.r })?;
                Subshift::sft(spec.r, t)
            }
        }
    }

    pub fn allows(&self, from: u8, to: u8) -> bool {
        self.alive[from as usize]
            && self.alive[to as usize]
            && self.transitions[from as usize][to as usize] == 1
    }

    pub fn alive_symbols(&self) -> Vec<u8> {
        (0..self.r as u8).filter(|&s| self.alive[s as usize]).collect()
    }

    fn check_point(&self, p: &SymbolicPoint) -> Result<(), SymbolicError> {
        for &s in p.preperiod.iter().chain(&p.period) {
            if s as usize >= self.r {
                return Err(SymbolicError::SymbolOutOfRange(s, self.r));
            }
        }
        let stream: Vec<u8> = p
            .preperiod
            .iter()
            .chain(&p.period)
            .chain(std::iter::once(&p.period[0]))
            .copied()
            .collect();
        for w in stream.windows(2) {
            if !self.allows(w[0], w[1]) {
                return Err(SymbolicError::Inadmissible {
                    from: w[0],
                    to: w[1],
                });
            }
        }
        Ok(())
    }

    /// Admissible eventually periodic point from a seeded random walk: walk
    /// until a symbol repeats, then cut the cycle into the period.
    pub fn random_point<R: Rng>(&self, rng: &mut R, pre_len: usize) -> SymbolicPoint {
        let alive = self.alive_symbols();
        let walk_len = pre_len + self.r + 2;
        let mut walk: Vec<u8> = Vec::with_capacity(walk_len);
        walk.push(alive[rng.gen_range(0..alive.len())]);
        while walk.len() < walk_len {
            let cur = *walk.last().unwrap();
            let succ: Vec<u8> = alive
                .iter()
                .copied()
                .filter(|&s| self.allows(cur, s))
                .collect();
            walk.push(succ[rng.gen_range(0..succ.len())]);
        }
        // last `r+1` entries must contain a repeat
        let tail_start = pre_len;
        let mut cut = None;
        'outer: for j in (tail_start + 1..walk.len()).rev() {
            for i in tail_start..j {
                if walk[i] == walk[j] {
                    cut = Some((i, j));
                    break 'outer;
                }
            }
        }
        let (i, j) = cut.expect("pigeonhole: a symbol repeats within r+1 steps");
        SymbolicPoint::new(walk[..i].to_vec(), walk[i..j].to_vec())
    }
}

/// An eventually periodic sequence, stored canonically: minimal preperiod
/// and primitive period.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SymbolicPoint {
    preperiod: Vec<u8>,
    period: Vec<u8>,
}

impl SymbolicPoint {
    pub fn new(preperiod: Vec<u8>, period: Vec<u8>) -> Self {
        assert!(!period.is_empty(), "period must be nonempty");
        let mut p = SymbolicPoint { preperiod, period };
        p.canonicalize();
        p
    }

    pub fn checked(
        sub: &Subshift,
        preperiod: Vec<u8>,
        period: Vec<u8>,
    ) -> Result<Self, SymbolicError> {
        if period.is_empty() {
            return Err(SymbolicError::BadLiteral(String::from("(empty period)")));
        }
        let p = SymbolicPoint::new(preperiod, period);
        sub.check_point(&p)?;
        Ok(p)
    }

    fn canonicalize(&mut self) {
        // primitive root of the period
        let n = self.period.len();
        for p in 1..n {
            if n % p == 0 && self.period.chunks(p).all(|c| c == &self.period[..p]) {
                self.period.truncate(p);
                break;
            }
        }
        // absorb trailing preperiod symbols that already follow the period
        while let Some(&last) = self.preperiod.last() {
            if last == *self.period.last().unwrap() {
                self.preperiod.pop();
                self.period.rotate_right(1);
            } else {
                break;
            }
        }
    }

    pub fn preperiod(&self) -> &[u8] {
        &self.preperiod
    }

    pub fn period(&self) -> &[u8] {
        &self.period
    }

    pub fn symbol(&self, i: usize) -> u8 {
        if i < self.preperiod.len() {
            self.preperiod[i]
        } else {
            self.period[(i - self.preperiod.len()) % self.period.len()]
        }
    }
}

impl std::str::FromStr for SymbolicPoint {
    type Err = SymbolicError;

    /// Literals look like `"01|10"`; an empty preperiod is written `"|01"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SymbolicError::BadLiteral(s.to_string());
        let (pre, per) = s.split_once('|').ok_or_else(bad)?;
        if per.is_empty() || per.contains('|') {
            return Err(bad());
        }
        let word = |w: &str| -> Result<Vec<u8>, SymbolicError> {
            w.chars()
                .map(|c| c.to_digit(10).map(|d| d as u8).ok_or_else(bad))
                .collect()
        };
        Ok(SymbolicPoint::new(word(pre)?, word(per)?))
    }
}

impl std::fmt::Display for SymbolicPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &s in &self.preperiod {
            write!(f, "{s}")?;
        }
        write!(f, "|")?;
        for &s in &self.period {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// The shift transformation: drop the first symbol and re-canonicalize.
pub fn shift(x: &SymbolicPoint) -> SymbolicPoint {
    if x.preperiod.is_empty() {
        let mut period = x.period.clone();
        period.rotate_left(1);
        SymbolicPoint::new(Vec::new(), period)
    } else {
        SymbolicPoint::new(x.preperiod[1..].to_vec(), x.period.clone())
    }
}

/// `d(x,y) = r^{-inf{i : x_i != y_i}}`, exact: eventually periodic streams
/// agree everywhere iff their canonical forms coincide, and otherwise
/// disagree within `max preperiod + lcm of periods` symbols.
pub fn shift_dist(x: &SymbolicPoint, y: &SymbolicPoint, r: usize) -> f64 {
    if x == y {
        return 0.0;
    }
    let horizon =
        x.preperiod.len().max(y.preperiod.len()) + x.period.len().lcm(&y.period.len());
    for i in 0..horizon {
        if x.symbol(i) != y.symbol(i) {
            return (r as f64).powi(-(i as i32));
        }
    }
    unreachable!("distinct canonical points disagree within the horizon");
}

/// Topological entropy: log of the spectral radius of the (pruned)
/// transition matrix. Power iteration with Collatz-Wielandt enclosure,
/// tolerance 1e-10; falls back to the exact certified spectrum when the
/// iteration stalls (reducible transition graphs).
pub fn sft_entropy(sub: &Subshift) -> Result<f64, SymbolicError> {
    if sub.kind == SubshiftKind::Full {
        return Ok((sub.r as f64).ln());
    }
    let alive = sub.alive_symbols();
    let m = alive.len();
    let a: Vec<Vec<f64>> = alive
        .iter()
        .map(|&i| {
            alive
                .iter()
                .map(|&j| sub.transitions[i as usize][j as usize] as f64)
                .collect()
        })
        .collect();
    let apply = |x: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|i| (0..m).map(|j| a[i][j] * x[j]).sum())
            .collect()
    };
    let mut x = vec![1.0f64; m];
    for _ in 0..100_000 {
        let ax = apply(&x);
        // shift by I keeps the iterate strictly positive and the Perron
        // root moves by exactly +1
        let shifted: Vec<f64> = ax.iter().zip(&x).map(|(a, b)| a + b).collect();
        let ratios: Vec<f64> = shifted.iter().zip(&x).map(|(a, b)| a / b).collect();
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
        let hi = ratios.iter().cloned().fold(0.0f64, f64::max) - 1.0;
        if hi - lo < 1e-10 {
            return Ok((0.5 * (lo + hi)).max(1.0).ln());
        }
        let norm: f64 = shifted.iter().cloned().fold(0.0, f64::max);
        x = shifted.into_iter().map(|v| v / norm).collect();
    }
    // reducible case: certified exact spectrum of the integer matrix
    let rows: Vec<Vec<i64>> = alive
        .iter()
        .map(|&i| {
            alive
                .iter()
                .map(|&j| sub.transitions[i as usize][j as usize] as i64)
                .collect()
        })
        .collect();
    let im = IntegerMatrix::from_rows(&rows).expect("square by construction");
    let spec = eigenvalues(&char_poly(&im), 256, 1e-9)
        .map_err(|_| SymbolicError::SpectralRadiusUncertified)?;
    let rho = spec
        .items
        .iter()
        .map(|i| i.modulus)
        .fold(0.0f64, f64::max);
    Ok(rho.max(1.0).ln())
}

/// Exact number of admissible words of length n (matrix powers over the
/// pruned alphabet, arbitrary precision).
pub fn cylinder_count(sub: &Subshift, n: usize) -> BigUint {
    assert!(n >= 1, "cylinder length must be at least 1");
    if sub.kind == SubshiftKind::Full {
        return BigUint::from(sub.r).pow(n as u32);
    }
    let alive = sub.alive_symbols();
    let m = alive.len();
    // v_j = number of admissible words of current length ending at j
    let mut v = vec![BigUint::one(); m];
    for _ in 1..n {
        let mut next = vec![BigUint::zero(); m];
        for (jj, nx) in next.iter_mut().enumerate() {
            for (ii, vi) in v.iter().enumerate() {
                if sub.transitions[alive[ii] as usize][alive[jj] as usize] == 1 {
                    *nx += vi;
                }
            }
        }
        v = next;
    }
    v.into_iter().sum()
}

fn big_ln(x: &BigUint) -> f64 {
    match x.to_f64() {
        Some(v) if v.is_finite() => v.ln(),
        _ => {
            let bits = x.bits();
            let top = (x >> (bits - 64)).to_f64().unwrap();
            top.ln() + (bits - 64) as f64 * 2f64.ln()
        }
    }
}

#[derive(Debug, Clone)]
pub struct CylinderDimension {
    pub dim: f64,
    /// max absolute residual of the least-squares fit
    pub residual: f64,
    pub n_max: usize,
}

/// Least-squares slope of `log #B_n` against `n log r` for n = 2..n_max:
/// estimates the Hausdorff dimension under the shift metric and converges
/// to `sft_entropy / log r`.
pub fn cylinder_dimension(sub: &Subshift, n_max: usize) -> CylinderDimension {
    assert!(n_max >= 4, "need n_max >= 4");
    let lr = (sub.r as f64).ln();
    let pts: Vec<(f64, f64)> = (2..=n_max)
        .map(|n| {
            let y = if sub.kind == SubshiftKind::Full {
                // #B_n = r^n identically
                n as f64 * lr
            } else {
                big_ln(&cylinder_count(sub, n))
            };
            (n as f64 * lr, y)
        })
        .collect();
    let k = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xm) * (p.0 - xm)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    let dim = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = ym - dim * xm;
    let residual = pts
        .iter()
        .map(|p| (p.1 - dim * p.0 - intercept).abs())
        .fold(0.0f64, f64::max);
    CylinderDimension {
        dim,
        residual,
        n_max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn golden_mean() -> Subshift {
        Subshift::sft(2, vec![vec![1, 1], vec![1, 0]]).unwrap()
    }

    fn pt(s: &str) -> SymbolicPoint {
        s.parse().unwrap()
    }

    #[test]
    fn canonicalization() {
        assert_eq!(pt("|0101"), pt("|01"));
        assert_eq!(pt("0|0"), pt("|0"));
        assert_eq!(pt("10|10"), pt("|10"));
        // 1 + (01)^inf = 101010... = (10)^inf
        assert_eq!(pt("1|01"), pt("|10"));
        assert_ne!(pt("1|0"), pt("|0"));
    }

    #[test]
    fn shift_examples() {
        assert_eq!(shift(&pt("1|0")), pt("|0"));
        assert_eq!(shift(&pt("|01")), pt("|10"));
        // eventual periodicity: after |pre|+|period| shifts, same orbit point
        // as after |pre| shifts
        let x = pt("110|010");
        let mut a = x.clone();
        for _ in 0..3 {
            a = shift(&a);
        }
        let mut b = a.clone();
        for _ in 0..3 {
            b = shift(&b);
        }
        assert_eq!(a, b);
    }

    #[test]
    fn shift_dist_examples() {
        let x = pt("|0");
        assert_eq!(shift_dist(&x, &x, 2), 0.0);
        assert_eq!(shift_dist(&x, &pt("1|0"), 2), 1.0);
        // 010101... vs 011111...: first disagreement at i = 2
        assert_eq!(shift_dist(&pt("|01"), &pt("01|1"), 2), 0.25);
        // periods of different lengths: 001001001... vs 001000100...
        // first disagreement at i = 5
        assert_eq!(shift_dist(&pt("|001"), &pt("|0010"), 2), 0.03125);
    }

    #[test]
    fn shift_dist_is_ultrametric_on_samples() {
        let sub = golden_mean();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<SymbolicPoint> = (0..40).map(|_| sub.random_point(&mut rng, 6)).collect();
        for x in &pts {
            for y in &pts {
                for z in &pts {
                    let dxz = shift_dist(x, z, 2);
                    let dxy = shift_dist(x, y, 2);
                    let dyz = shift_dist(y, z, 2);
                    assert!(dxz <= dxy.max(dyz) + 0.0);
                }
            }
        }
    }

    #[test]
    fn shift_is_r_lipschitz_with_equality_on_agreeing_heads() {
        let sub = golden_mean();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<SymbolicPoint> = (0..60).map(|_| sub.random_point(&mut rng, 5)).collect();
        for x in &pts {
            for y in &pts {
                let d = shift_dist(x, y, 2);
                let ds = shift_dist(&shift(x), &shift(y), 2);
                assert!(ds <= 2.0 * d);
                if x.symbol(0) == y.symbol(0) && d > 0.0 {
                    assert_eq!(ds, 2.0 * d);
                }
            }
        }
    }

    #[test]
    fn random_points_are_admissible() {
        let sub = golden_mean();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let p = sub.random_point(&mut rng, 8);
            sub.check_point(&p).unwrap();
        }
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(sft_entropy(&Subshift::full(2).unwrap()).unwrap(), 2f64.ln());
        let h = sft_entropy(&golden_mean()).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((h - phi.ln()).abs() < 1e-10, "h = {h}");
        // one live fixed point: symbol 1 dies, entropy 0
        let fixed = Subshift::sft(2, vec![vec![1, 0], vec![0, 0]]).unwrap();
        assert_eq!(sft_entropy(&fixed).unwrap(), 0.0);
    }

    #[test]
    fn entropy_of_reducible_sft() {
        // both symbols alive but the graph is reducible; rho = 1
        let sub = Subshift::sft(2, vec![vec![1, 1], vec![0, 1]]).unwrap();
        let h = sft_entropy(&sub).unwrap();
        assert!(h.abs() < 1e-10, "h = {h}");
    }

    #[test]
    fn cylinder_count_examples() {
        assert_eq!(
            cylinder_count(&Subshift::full(2).unwrap(), 3),
            BigUint::from(8u32)
        );
        let gm = golden_mean();
        assert_eq!(cylinder_count(&gm, 1), BigUint::from(2u32));
        assert_eq!(cylinder_count(&gm, 3), BigUint::from(5u32));
        // golden mean counts are Fibonacci: #B_n = F(n+2), F(1)=F(2)=1
        // a = F(2), b = F(3)
        let (mut a, mut b) = (BigUint::one(), BigUint::from(2u32));
        for n in 1..=30usize {
            // here b = F(n+2)
            assert_eq!(cylinder_count(&gm, n), b, "n = {n}");
            let c = &a + &b;
            a = b;
            b = c;
        }
    }

    #[test]
    fn count_growth_rate_decreases_to_entropy() {
        let gm = golden_mean();
        let h = sft_entropy(&gm).unwrap();
        let mut last = f64::INFINITY;
        for n in 1..=20 {
            let rate = big_ln(&cylinder_count(&gm, n)) / n as f64;
            assert!(rate <= last + 1e-12);
            assert!(rate >= h - 1e-12);
            last = rate;
        }
        assert!(last - h < 0.05);
    }

    #[test]
    fn dimension_examples() {
        for r in [2usize, 3, 5] {
            let full = Subshift::full(r).unwrap();
            for n_max in [4usize, 10, 15] {
                assert_eq!(cylinder_dimension(&full, n_max).dim, 1.0);
            }
        }
        let gm = cylinder_dimension(&golden_mean(), 15);
        let expected = (((1.0 + 5f64.sqrt()) / 2.0).ln()) / 2f64.ln();
        assert!((gm.dim - expected).abs() < 0.01, "dim = {}", gm.dim);

        let fixed = Subshift::sft(2, vec![vec![1, 0], vec![0, 0]]).unwrap();
        assert_eq!(cylinder_dimension(&fixed, 10).dim, 0.0);
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            Subshift::sft(2, vec![vec![0, 0], vec![0, 0]]),
            Err(SymbolicError::EmptySubshift)
        ));
        assert!(matches!(
            Subshift::sft(2, vec![vec![1, 1]]),
            Err(SymbolicError::BadTransitions { .. })
        ));
        let gm = golden_mean();
        // "11" is forbidden
        assert!(matches!(
            SymbolicPoint::checked(&gm, vec![1], vec![1]),
            Err(SymbolicError::Inadmissible { from: 1, to: 1 })
        ));
        assert!(matches!(
            SymbolicPoint::checked(&gm, vec![], vec![3]),
            Err(SymbolicError::SymbolOutOfRange(3, 2))
        ));
        assert!("01".parse::<SymbolicPoint>().is_err());
        assert!("0|".parse::<SymbolicPoint>().is_err());
        assert!("0|a".parse::<SymbolicPoint>().is_err());
    }

    #[test]
    fn literal_round_trip() {
        for s in ["|0", "1|0", "|10", "011|010"] {
            let p = pt(s);
            assert_eq!(p.to_string().parse::<SymbolicPoint>().unwrap(), p);
        }
    }
}
