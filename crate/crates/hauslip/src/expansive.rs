//! Positively expansive maps over finite forward-closed samples: separation
//! times, the quasi-metric rho = alpha^{-n}, Frink metrization by chain
//! infimum (all-pairs shortest path), the adapted metric d, and the
//! finiteness bound on Hausdorff dimension.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{
    geometric_scales, net_count_at, net_insertion_radii, DimensionFit, EstimatorError,
};
use crate::rat::{frac_mod_one, rat_to_f64};
use crate::symbolic::{shift, shift_dist, Subshift, SubshiftSpec, SymbolicError, SymbolicPoint};

#[derive(Debug, Error)]
pub enum ExpansiveError {
    #[error("separation horizon {cap} exceeded for distinct points: c or cap contradicts expansivity")]
    HorizonExceeded { cap: usize },
    #[error("weak triangle inequality violated on triple ({i},{j},{k}): rho={rho:.6e} > 2*max={bound:.6e}; m was underestimated")]
    WeakTriangleViolation {
        i: usize,
        j: usize,
        k: usize,
        rho: f64,
        bound: f64,
    },
    #[error("Frink sandwich D <= rho <= 4D violated on pair ({i},{j}): internal consistency failure")]
    SandwichViolation { i: usize, j: usize },
    #[error("sample closed to depth {depth} but the adapted metric needs f-chains of length {needed}")]
    InsufficientClosure { depth: usize, needed: usize },
    #[error("no sampled pair lies in the near-diagonal band n(x,y) >= {i}; enlarge the sample")]
    SkewDegenerate { i: usize },
    #[error("expansivity constant must be positive")]
    BadConstant,
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// A point of the system's universe, stored exactly so orbits and
/// separation times carry no rounding.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ExactPoint {
    /// circle point in [0,1) with exact rational coordinate
    Circle(BigRational),
    Word(SymbolicPoint),
}

#[derive(Debug, Clone)]
pub enum SystemKind {
    /// x -> 2x mod 1 with the arc distance
    Doubling,
    /// the shift on a subshift with the metric r^{-n}
    Shift(Subshift),
}

/// Raw system description as it appears in input files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subshift: Option<SubshiftSpec>,
    /// expansivity constant, exact literal like "1/4"
    pub c: String,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_cap() -> usize {
    64
}

#[derive(Debug, Clone)]
pub struct ExpansiveSystem {
    pub kind: SystemKind,
    pub c: BigRational,
    pub cap: usize,
    /// c as a u128 fraction when it fits (fast circle comparisons)
    c_frac: Option<(u128, u128)>,
    /// shift systems: largest s with r^{-s} > c; None when even s = 0 fails
    shift_s_max: Option<Option<u32>>,
}

impl ExpansiveSystem {
    pub fn doubling(c: BigRational, cap: usize) -> Result<Self, ExpansiveError> {
        if c <= BigRational::zero() {
            return Err(ExpansiveError::BadConstant);
        }
        let c_frac = c
            .numer()
            .to_u128()
            .zip(c.denom().to_u128())
            .filter(|&(_, d)| d < 1 << 40);
        Ok(ExpansiveSystem {
            kind: SystemKind::Doubling,
            c,
            cap,
            c_frac,
            shift_s_max: None,
        })
    }

    pub fn shift(sub: Subshift, c: BigRational, cap: usize) -> Result<Self, ExpansiveError> {
        if c <= BigRational::zero() {
            return Err(ExpansiveError::BadConstant);
        }
        // largest s <= cap with r^{-s} > c
        let r = BigRational::from(BigInt::from(sub.r));
        let mut s_max = None;
        let mut p = BigRational::one();
        for s in 0..=cap as u32 {
            if p.recip() > c {
                s_max = Some(s);
            } else {
                break;
            }
            p *= &r;
        }
        Ok(ExpansiveSystem {
            kind: SystemKind::Shift(sub),
            c,
            cap,
            c_frac: None,
            shift_s_max: Some(s_max),
        })
    }

    pub fn apply(&self, x: &ExactPoint) -> ExactPoint {
        match (&self.kind, x) {
            (SystemKind::Doubling, ExactPoint::Circle(t)) => {
                ExactPoint::Circle(frac_mod_one(&(t * BigRational::from(BigInt::from(2)))))
            }
            (SystemKind::Shift(_), ExactPoint::Word(w)) => ExactPoint::Word(shift(w)),
            _ => panic!("point kind does not match system universe"),
        }
    }

    /// Exact base distance as a rational (circle: arc distance; shift:
    /// r^{-first disagreement}); None encodes distance zero.
    fn delta_exact(&self, x: &ExactPoint, y: &ExactPoint) -> Option<BigRational> {
        match (&self.kind, x, y) {
            (SystemKind::Doubling, ExactPoint::Circle(a), ExactPoint::Circle(b)) => {
                let t = frac_mod_one(&(a - b));
                if t.is_zero() {
                    return None;
                }
                let one_minus = BigRational::one() - &t;
                Some(if t <= one_minus { t } else { one_minus })
            }
            (SystemKind::Shift(sub), ExactPoint::Word(a), ExactPoint::Word(b)) => {
                if a == b {
                    return None;
                }
                let mut i = 0usize;
                while a.symbol(i) == b.symbol(i) {
                    i += 1;
                }
                Some(BigRational::new(
                    BigInt::one(),
                    BigInt::from(sub.r).pow(i as u32),
                ))
            }
            _ => panic!("point kind does not match system universe"),
        }
    }

    pub fn delta(&self, x: &ExactPoint, y: &ExactPoint) -> f64 {
        match (&self.kind, x, y) {
            (SystemKind::Shift(sub), ExactPoint::Word(a), ExactPoint::Word(b)) => {
                shift_dist(a, b, sub.r)
            }
            _ => self
                .delta_exact(x, y)
                .map(|d| rat_to_f64(&d))
                .unwrap_or(0.0),
        }
    }

    /// Known-analytic weak-triangle exponent m, when a closed form is
    /// available for this system.
    pub fn analytic_m(&self) -> Option<usize> {
        match &self.kind {
            // c = 1/4: arc distances in [1/8, 1/4] double past 1/4 within
            // two steps (the boundary 1/8 needs both)
            SystemKind::Doubling if self.c == BigRational::new(BigInt::one(), BigInt::from(4)) => {
                Some(2)
            }
            // c = r^{-k} exactly: delta >= c/2 forces the disagreement
            // index within k + log_r 2, so n <= floor(log_r 2) + 1
            SystemKind::Shift(sub) => {
                let c_inv = self.c.recip();
                let mut p = BigRational::one();
                let r = BigRational::from(BigInt::from(sub.r));
                for _ in 0..=self.cap {
                    if p == c_inv {
                        return Some(if sub.r == 2 { 2 } else { 1 });
                    }
                    if p > c_inv {
                        break;
                    }
                    p *= &r;
                }
                None
            }
            _ => None,
        }
    }

    /// Known topological entropy, when available analytically.
    pub fn analytic_entropy(&self) -> Option<f64> {
        match &self.kind {
            SystemKind::Doubling => Some(2f64.ln()),
            SystemKind::Shift(sub) => crate::symbolic::sft_entropy(sub).ok(),
        }
    }
}

fn circle_u64(x: &BigRational) -> Option<(u64, u64)> {
    Some((x.numer().to_u64()?, x.denom().to_u64()?))
}

/// Smallest i with `delta(f^i x, f^i y) > c`, exact; `None` for equal
/// points (never separated).
pub fn separation_time(
    sys: &ExpansiveSystem,
    x: &ExactPoint,
    y: &ExactPoint,
) -> Result<Option<usize>, ExpansiveError> {
    if x == y {
        return Ok(None);
    }
    // fast integer paths
    match (&sys.kind, x, y) {
        (SystemKind::Doubling, ExactPoint::Circle(a), ExactPoint::Circle(b)) => {
            if let (Some((pa, qa)), Some((pb, qb)), Some((cn, cd))) =
                (circle_u64(a), circle_u64(b), sys.c_frac)
            {
                let l = qa / qa.gcd(&qb) * qb;
                if l < 1 << 40 {
                    // difference doubles mod the common denominator
                    let mut t = (pa as i128 * (l / qa) as i128 - pb as i128 * (l / qb) as i128)
                        .rem_euclid(l as i128) as u128;
                    let l = l as u128;
                    let threshold = cn * l; // arc/l > cn/cd  <=>  arc*cd > cn*l
                    for i in 0..=sys.cap {
                        let arc = t.min(l - t);
                        if arc * cd > threshold {
                            return Ok(Some(i));
                        }
                        if arc == 0 {
                            return Err(ExpansiveError::HorizonExceeded { cap: sys.cap });
                        }
                        t = (2 * t) % l;
                    }
                    return Err(ExpansiveError::HorizonExceeded { cap: sys.cap });
                }
            }
        }
        (SystemKind::Shift(_), ExactPoint::Word(a), ExactPoint::Word(b)) => {
            // delta(f^i x, f^i y) = r^{-(i* - i)} for i <= i*, so
            // n = max(0, i* - s_max) with s_max the deepest level still
            // above c
            let mut istar = 0usize;
            while a.symbol(istar) == b.symbol(istar) {
                istar += 1;
            }
            let n = match sys.shift_s_max.flatten() {
                Some(s) => istar.saturating_sub(s as usize),
                None => return Err(ExpansiveError::HorizonExceeded { cap: sys.cap }),
            };
            if n > sys.cap {
                return Err(ExpansiveError::HorizonExceeded { cap: sys.cap });
            }
            return Ok(Some(n));
        }
        _ => {}
    }
    // generic exact orbit loop
    let mut a = x.clone();
    let mut b = y.clone();
    for i in 0..=sys.cap {
        match sys.delta_exact(&a, &b) {
            Some(d) if d > sys.c => return Ok(Some(i)),
            // orbits merged: the pair can never separate
            None => return Err(ExpansiveError::HorizonExceeded { cap: sys.cap }),
            _ => {}
        }
        a = sys.apply(&a);
        b = sys.apply(&b);
    }
    Err(ExpansiveError::HorizonExceeded { cap: sys.cap })
}

/// A finite forward-closed sample with index maps for the f-action.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub points: Vec<ExactPoint>,
    pub closure_depth: usize,
    /// index of f(points[k]) when present in the sample
    pub image: Vec<Option<usize>>,
}

impl SampleSet {
    /// Closure of the base under f for `depth - 1` applications, with
    /// canonical dedup.
    pub fn forward_closed(sys: &ExpansiveSystem, base: Vec<ExactPoint>, depth: usize) -> Self {
        assert!(depth >= 1);
        let mut index: HashMap<ExactPoint, usize> = HashMap::new();
        let mut points: Vec<ExactPoint> = Vec::new();
        for p in base {
            index.entry(p.clone()).or_insert_with(|| {
                points.push(p);
                points.len() - 1
            });
        }
        let mut frontier: Vec<usize> = (0..points.len()).collect();
        for _ in 1..depth {
            let mut next = Vec::new();
            for &k in &frontier {
                let img = sys.apply(&points[k]);
                if !index.contains_key(&img) {
                    points.push(img.clone());
                    index.insert(img, points.len() - 1);
                    next.push(points.len() - 1);
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        let image = points
            .iter()
            .map(|p| index.get(&sys.apply(p)).copied())
            .collect();
        SampleSet {
            points,
            closure_depth: depth,
            image,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of f^i(points[k]) if the whole chain stays in the sample.
    pub fn iterate(&self, k: usize, i: usize) -> Option<usize> {
        let mut cur = k;
        for _ in 0..i {
            cur = self.image[cur]?;
        }
        Some(cur)
    }

    /// Iterate-index table up to depth `n`: row k holds indices of
    /// f^0..f^n of point k, None once the chain leaves the sample.
    pub fn chains(&self, n: usize) -> Vec<Option<Vec<usize>>> {
        (0..self.len())
            .map(|k| (0..=n).map(|i| self.iterate(k, i)).collect())
            .collect()
    }
}

/// Seeded random circle points with bounded odd denominators (orbits under
/// doubling stay in a fixed finite grid, so closure terminates).
pub fn sample_circle(count: usize, seed: u64, max_den: u32) -> Vec<ExactPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let q = 2 * rng.gen_range(1..=(max_den - 1) / 2) + 1; // odd, 3..=max_den
            let p = rng.gen_range(0..q);
            ExactPoint::Circle(BigRational::new(BigInt::from(p), BigInt::from(q)))
        })
        .collect()
}

/// Seeded random admissible words with bounded preperiod length.
pub fn sample_words(sub: &Subshift, count: usize, seed: u64, pre_len: usize) -> Vec<ExactPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| ExactPoint::Word(sub.random_point(&mut rng, pre_len)))
        .collect()
}

/// Sample-based weak-triangle exponent: max n(x,y) over pairs with
/// `delta(x,y) >= c/2` (a lower bound for the true exponent m).
pub fn weak_triangle_m(sys: &ExpansiveSystem, sample: &SampleSet) -> Result<usize, ExpansiveError> {
    let half_c = &sys.c / BigRational::from(BigInt::from(2));
    let mut m = 0usize;
    for i in 0..sample.len() {
        for j in i + 1..sample.len() {
            match sys.delta_exact(&sample.points[i], &sample.points[j]) {
                Some(d) if d >= half_c => {
                    if let Some(n) = separation_time(sys, &sample.points[i], &sample.points[j])? {
                        m = m.max(n);
                    }
                }
                _ => {}
            }
        }
    }
    Ok(m)
}

/// `alpha = 2^{1/max(m,1)}`, so that `alpha^m <= 2`.
pub fn choose_alpha(m: usize) -> f64 {
    2f64.powf(1.0 / m.max(1) as f64)
}

/// Pairwise separation times and the quasi-metric rho = alpha^{-n}.
#[derive(Debug, Clone)]
pub struct QuasiMetricTable {
    pub alpha: f64,
    pub m: usize,
    pub cap: usize,
    size: usize,
    /// full symmetric table; u32::MAX on the diagonal
    n_table: Vec<u32>,
    rho_table: Vec<f64>,
}

const DIAG: u32 = u32::MAX;

impl QuasiMetricTable {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn n(&self, i: usize, j: usize) -> Option<u32> {
        let v = self.n_table[i * self.size + j];
        if v == DIAG {
            None
        } else {
            Some(v)
        }
    }

    pub fn rho(&self, i: usize, j: usize) -> f64 {
        self.rho_table[i * self.size + j]
    }
}

/// Build the rho table and verify the weakened triangle inequality on all
/// triples plus the one-step expansion law.
pub fn build_rho(
    sys: &ExpansiveSystem,
    sample: &SampleSet,
    alpha: f64,
    m: usize,
) -> Result<QuasiMetricTable, ExpansiveError> {
    let size = sample.len();
    let rows: Result<Vec<Vec<u32>>, ExpansiveError> = (0..size)
        .into_par_iter()
        .map(|i| {
            (i + 1..size)
                .map(|j| {
                    separation_time(sys, &sample.points[i], &sample.points[j])
                        .map(|n| n.expect("sample points are distinct") as u32)
                })
                .collect()
        })
        .collect();
    let mut n_table = vec![DIAG; size * size];
    for (i, row) in rows?.into_iter().enumerate() {
        for (k, n) in row.into_iter().enumerate() {
            let j = i + 1 + k;
            n_table[i * size + j] = n;
            n_table[j * size + i] = n;
        }
    }
    let rho_table: Vec<f64> = n_table
        .iter()
        .map(|&n| if n == DIAG { 0.0 } else { alpha.powi(-(n as i32)) })
        .collect();
    let table = QuasiMetricTable {
        alpha,
        m,
        cap: sys.cap,
        size,
        n_table,
    rho_table,
    };
    // weak triangle on all triples, in integer space: with 2 = alpha^s,
    // rho(i,j) > 2 max(rho(i,k), rho(k,j)) <=> min(n_ik, n_kj) > n_ij + s
    let s = m.max(1) as u32;
    let nt = &table.n_table;
    let violation = (0..size).into_par_iter().find_map_any(|i| {
        for j in 0..size {
            if j == i {
                continue;
            }
            let nij = nt[i * size + j];
            if nij == DIAG {
                continue;
            }
            let limit = nij.saturating_add(s);
            for k in 0..size {
                if k == i || k == j {
                    continue;
                }
                let (nik, nkj) = (nt[i * size + k], nt[k * size + j]);
                if nik > limit && nkj > limit && nik != DIAG && nkj != DIAG {
                    return Some((i, k, j));
                }
            }
        }
        None
    });
    if let Some((i, j, k)) = violation {
        let rho = table.rho(i, k);
        let bound = 2.0 * table.rho(i, j).max(table.rho(j, k));
        return Err(ExpansiveError::WeakTriangleViolation {
            i,
            j,
            k,
            rho,
            bound,
        });
    }
    // one-step law: n(fx, fy) = n(x, y) - 1 whenever n >= 1
    for i in 0..size {
        for j in i + 1..size {
            if let (Some(fi), Some(fj)) = (sample.image[i], sample.image[j]) {
                let n = table.n(i, j).unwrap();
                if n >= 1 {
                    debug_assert_eq!(table.n(fi, fj), Some(n - 1));
                }
            }
        }
    }
    Ok(table)
}

/// A genuine metric D with `D <= rho <= 4 D`.
#[derive(Debug, Clone)]
pub struct FrinkMetric {
    size: usize,
    d_table: Vec<f64>,
}

impl FrinkMetric {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.d_table[i * self.size + j]
    }
}

/// Chain-infimum metrization: all-pairs shortest path on the complete
/// graph with edge weights rho, then the sandwich postcondition.
pub fn frink_metrize(table: &QuasiMetricTable) -> Result<FrinkMetric, ExpansiveError> {
    let size = table.size();
    let mut d = table.rho_table.clone();
    for k in 0..size {
        let row_k: Vec<f64> = d[k * size..(k + 1) * size].to_vec();
        d.par_chunks_mut(size).for_each(|row| {
            let dik = row[k];
            for (j, rkj) in row_k.iter().enumerate() {
                let via = dik + rkj;
                if via < row[j] {
                    row[j] = via;
                }
            }
        });
    }
    let fm = FrinkMetric { size, d_table: d };
    for i in 0..size {
        for j in 0..size {
            let rho = table.rho(i, j);
            let dd = fm.d(i, j);
            if !(dd <= rho * (1.0 + 1e-12) && rho <= 4.0 * dd * (1.0 + 1e-12)) {
                return Err(ExpansiveError::SandwichViolation { i, j });
            }
        }
    }
    Ok(fm)
}

/// The adapted metric `d(x,y) = max_{0<=i<n} D(f^i x, f^i y) / L^{i/n}`
/// with `L = Lip_D(f^n)`.
#[derive(Debug, Clone)]
pub struct AdaptedMetric {
    pub n: usize,
    pub l: f64,
    size: usize,
    d_table: Vec<f64>,
    /// indices with complete f-chains of length n
    pub usable: Vec<usize>,
}

impl AdaptedMetric {
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.d_table[i * self.size + j]
    }

    /// `Lip_d(f) = L^{1/n}` by construction.
    pub fn lip_estimate(&self) -> f64 {
        self.l.powf(1.0 / self.n as f64)
    }
}

pub fn adapted_metric(
    frink: &FrinkMetric,
    sample: &SampleSet,
    n: usize,
) -> Result<AdaptedMetric, ExpansiveError> {
    assert!(n >= 1);
    let size = sample.len();
    let chains = sample.chains(n);
    let usable: Vec<usize> = (0..size).filter(|&k| chains[k].is_some()).collect();
    if usable.len() < 2 {
        return Err(ExpansiveError::InsufficientClosure {
            depth: sample.closure_depth,
            needed: n + 1,
        });
    }
    let chain = |k: usize| chains[k].as_ref().unwrap();
    // L = Lip_D(f^n) over usable pairs
    let mut l = 0.0f64;
    for (a, &i) in usable.iter().enumerate() {
        for &j in &usable[a + 1..] {
            let base = frink.d(i, j);
            if base > 0.0 {
                l = l.max(frink.d(chain(i)[n], chain(j)[n]) / base);
            }
        }
    }
    let weights: Vec<f64> = (0..n).map(|i| l.powf(i as f64 / n as f64)).collect();
    let mut d_table = vec![f64::NAN; size * size];
    for &i in &usable {
        for &j in &usable {
            let mut best = 0.0f64;
            for (t, w) in weights.iter().enumerate() {
                best = best.max(frink.d(chain(i)[t], chain(j)[t]) / w);
            }
            d_table[i * size + j] = best;
        }
    }
    Ok(AdaptedMetric {
        n,
        l,
        size,
        d_table,
        usable,
    })
}

/// The sample-independent part of the pipeline: m, alpha, the rho table,
/// and the Frink metric, reusable across adapted-metric powers.
pub struct ExpansiveContext {
    pub m: usize,
    pub alpha: f64,
    pub table: QuasiMetricTable,
    pub frink: FrinkMetric,
}

pub fn build_context(
    sys: &ExpansiveSystem,
    sample: &SampleSet,
) -> Result<ExpansiveContext, ExpansiveError> {
    let m = match sys.analytic_m() {
        Some(m) => m,
        // sampled lower bound, doubled as a safety margin; the
        // weak-triangle check in build_rho is the actual guard
        None => (2 * weak_triangle_m(sys, sample)?).max(1),
    };
    let alpha = choose_alpha(m);
    let table = build_rho(sys, sample, alpha, m)?;
    let frink = frink_metrize(&table)?;
    Ok(ExpansiveContext {
        m,
        alpha,
        table,
        frink,
    })
}

/// Everything the expansive pipeline reports for one (n, i) choice.
#[derive(Debug, Clone)]
pub struct ExpansiveReport {
    pub m: usize,
    pub alpha: f64,
    pub n: usize,
    pub i: usize,
    pub entropy: Option<f64>,
    pub skew_d_i: f64,
    pub lip_d_i: f64,
    /// finiteness bound `h(f^i) / log+ Skew_D(f^i)`, minimized over admissible i
    pub hd_bound: Option<f64>,
    pub hd_bound_at_i: Option<f64>,
    pub sixteen_factor_ok: bool,
    pub box_dim: DimensionFit<f64>,
    pub lip_d_estimate: f64,
    pub product: f64,
}

/// Lip and skew of `f^i` under D, skew restricted to the near-diagonal
/// band `n(x,y) >= i` where the expansion lower bound applies.
pub fn lip_skew_d_i(
    ctx: &ExpansiveContext,
    sample: &SampleSet,
    i: usize,
) -> Result<(f64, f64), ExpansiveError> {
    let chains = sample.chains(i);
    let mut lip = 0.0f64;
    let mut skew = f64::INFINITY;
    let mut band_hit = false;
    for a in 0..sample.len() {
        let Some(ca) = &chains[a] else { continue };
        for b in a + 1..sample.len() {
            let Some(cb) = &chains[b] else { continue };
            let base = ctx.frink.d(a, b);
            if base == 0.0 {
                continue;
            }
            let ratio = ctx.frink.d(ca[i], cb[i]) / base;
            lip = lip.max(ratio);
            if ctx.table.n(a, b).map_or(false, |n| n as usize >= i) {
                skew = skew.min(ratio);
                band_hit = true;
            }
        }
    }
    if !band_hit {
        return Err(ExpansiveError::SkewDegenerate { i });
    }
    Ok((lip, skew))
}

/// Box-dimension fit of the usable points under a table metric, with the
/// scale window chosen inside the sample's resolvable range: coarse end at
/// count ~4, fine end where the net reaches a quarter of the sample.
fn table_box_dimension(
    dist: &(dyn Fn(&usize, &usize) -> f64 + Sync),
    idxs: &[usize],
    levels: usize,
) -> Result<DimensionFit<f64>, EstimatorError> {
    let cap = (idxs.len() / 4).max(8);
    let radii = net_insertion_radii(idxs, dist, 0.0, cap);
    if radii.len() < 5 {
        return Err(EstimatorError::ScaleRangeDegenerate);
    }
    let hi = radii[3] * 0.999; // N(hi) = 5
    let lo = radii[radii.len() - 1] * 1.001;
    if hi <= lo {
        return Err(EstimatorError::ScaleRangeDegenerate);
    }
    let scales = geometric_scales(hi, lo, levels);
    let counts: Vec<usize> = scales.iter().map(|&e| net_count_at(&radii, e)).collect();
    // reuse the shared fitting path via a fresh fit
    crate::estimators::fit_scale_counts(scales, counts)
}

/// Run the full pipeline and assemble the report for a given adapted-metric
/// power n and HD-bound iterate i.
pub fn expansive_certificate(
    sys: &ExpansiveSystem,
    sample: &SampleSet,
    n: usize,
    i: usize,
) -> Result<ExpansiveReport, ExpansiveError> {
    let ctx = build_context(sys, sample)?;
    expansive_certificate_with(&ctx, sys, sample, n, i)
}

pub fn expansive_certificate_with(
    ctx: &ExpansiveContext,
    sys: &ExpansiveSystem,
    sample: &SampleSet,
    n: usize,
    i: usize,
) -> Result<ExpansiveReport, ExpansiveError> {
    let adapted = adapted_metric(&ctx.frink, sample, n)?;
    let (lip_i, skew_i) = lip_skew_d_i(ctx, sample, i)?;
    let entropy = sys.analytic_entropy();

    // finiteness bound over all admissible iterates (alpha^i / 4 > 1),
    // reported as the minimum; also recorded at the requested i
    let admissible = |ii: usize| ctx.alpha.powi(ii as i32) / 4.0 > 1.0;
    let bound_at = |ii: usize| -> Option<f64> {
        let h = entropy?;
        let (_, skew) = lip_skew_d_i(ctx, sample, ii).ok()?;
        let ls = skew.ln().max(0.0);
        if ls > 0.0 {
            Some(ii as f64 * h / ls)
        } else {
            None
        }
    };
    let hd_bound_at_i = if admissible(i) { bound_at(i) } else { None };
    let max_i = (sample.closure_depth - 1).max(i);
    let hd_bound = (1..=max_i)
        .filter(|&ii| admissible(ii))
        .filter_map(bound_at)
        .fold(None, |acc: Option<f64>, b| Some(acc.map_or(b, |a| a.min(b))));

    // 16-factor check at the adapted power n, on the near-diagonal band
    let sixteen_factor_ok = {
        let chains = sample.chains(n);
        let mut lip_band = 0.0f64;
        let mut skew_band = f64::INFINITY;
        for a in 0..sample.len() {
            let Some(ca) = &chains[a] else { continue };
            for b in a + 1..sample.len() {
                let Some(cb) = &chains[b] else { continue };
                if !ctx.table.n(a, b).map_or(false, |v| v as usize >= n) {
                    continue;
                }
                let base = ctx.frink.d(a, b);
                if base == 0.0 {
                    continue;
                }
                let ratio = ctx.frink.d(ca[n], cb[n]) / base;
                lip_band = lip_band.max(ratio);
                skew_band = skew_band.min(ratio);
            }
        }
        !(skew_band.is_finite() && lip_band > 16.0 * skew_band * (1.0 + 1e-12))
    };

    // box dimension of the usable sample under the adapted metric
    let ad = &adapted;
    let dist = move |a: &usize, b: &usize| ad.d(*a, *b);
    let box_dim = table_box_dimension(&dist, &adapted.usable, 8)?;

    let lip_d_estimate = adapted.lip_estimate();
    let product = box_dim.slope * lip_d_estimate.ln().max(0.0);

    Ok(ExpansiveReport {
        m: ctx.m,
        alpha: ctx.alpha,
        n,
        i,
        entropy,
        skew_d_i: skew_i,
        lip_d_i: lip_i,
        hd_bound,
        hd_bound_at_i,
        sixteen_factor_ok,
        box_dim,
        lip_d_estimate,
        product,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    fn circle(p: i64, q: i64) -> ExactPoint {
        ExactPoint::Circle(rat(p, q))
    }

    fn doubling_quarter() -> ExpansiveSystem {
        ExpansiveSystem::doubling(rat(1, 4), 64).unwrap()
    }

    fn doubling_sample(count: usize, seed: u64, depth: usize) -> SampleSet {
        let sys = doubling_quarter();
        SampleSet::forward_closed(&sys, sample_circle(count, seed, 129), depth)
    }

    #[test]
    fn separation_time_examples() {
        let sys = doubling_quarter();
        assert_eq!(
            separation_time(&sys, &circle(1, 3), &circle(1, 3)).unwrap(),
            None
        );
        assert_eq!(
            separation_time(&sys, &circle(0, 1), &circle(1, 2)).unwrap(),
            Some(0)
        );
        // arc distances 1/16, 1/8, 1/4, 1/2: first above 1/4 at i = 3
        assert_eq!(
            separation_time(&sys, &circle(0, 1), &circle(1, 16)).unwrap(),
            Some(3)
        );
    }

    #[test]
    fn fast_and_generic_separation_agree() {
        // force the generic path with a huge denominator on one side and
        // compare against the fast path on equivalent small fractions
        let sys = doubling_quarter();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..200 {
            let q = 2 * rng.gen_range(1u64..200) + 1;
            let (p1, p2) = (rng.gen_range(0..q), rng.gen_range(0..q));
            let a = ExactPoint::Circle(rat(p1 as i64, q as i64));
            let b = ExactPoint::Circle(rat(p2 as i64, q as i64));
            let fast = separation_time(&sys, &a, &b);
            // generic loop: replicate by exact orbit
            let mut x = a.clone();
            let mut y = b.clone();
            let mut generic = Err(ExpansiveError::HorizonExceeded { cap: sys.cap });
            if a == b {
                generic = Ok(None);
            } else {
                for i in 0..=sys.cap {
                    match sys.delta_exact(&x, &y) {
                        Some(d) if d > sys.c => {
                            generic = Ok(Some(i));
                            break;
                        }
                        None => break,
                        _ => {}
                    }
                    x = sys.apply(&x);
                    y = sys.apply(&y);
                }
            }
            match (fast, generic) {
                (Ok(f), Ok(g)) => assert_eq!(f, g),
                (Err(_), Err(_)) => {}
                (f, g) => panic!("fast {f:?} vs generic {g:?}"),
            }
        }
    }

    #[test]
    fn horizon_exceeded_for_merging_orbits() {
        // 0 and 1/2 merge after one step under doubling; with c = 3/4 the
        // pair never separates
        let sys = ExpansiveSystem::doubling(rat(3, 4), 16).unwrap();
        assert!(matches!(
            separation_time(&sys, &circle(0, 1), &circle(1, 2)),
            Err(ExpansiveError::HorizonExceeded { cap: 16 })
        ));
    }

    #[test]
    fn weak_triangle_m_doubling() {
        let sys = doubling_quarter();
        // include the boundary pair delta = c/2 = 1/8, which needs 2 steps
        let base = vec![circle(0, 1), circle(1, 8), circle(1, 3), circle(2, 7)];
        let sample = SampleSet::forward_closed(&sys, base, 4);
        assert_eq!(weak_triangle_m(&sys, &sample).unwrap(), 2);
        assert_eq!(sys.analytic_m(), Some(2));
    }

    #[test]
    fn choose_alpha_examples() {
        assert_eq!(choose_alpha(2), 2f64.sqrt());
        assert_eq!(choose_alpha(1), 2.0);
        assert_eq!(choose_alpha(0), 2.0);
    }

    #[test]
    fn rho_values_and_one_step_expansion() {
        let sys = doubling_quarter();
        let base = vec![circle(0, 1), circle(1, 16)];
        let sample = SampleSet::forward_closed(&sys, base, 5);
        let alpha = 2f64.sqrt();
        let table = build_rho(&sys, &sample, alpha, 2).unwrap();
        // indices 0, 1 are the base pair with n = 3
        assert_eq!(table.n(0, 1), Some(3));
        assert!((table.rho(0, 1) - 2f64.powf(-1.5)).abs() < 1e-15);
        let (f0, f1) = (sample.image[0].unwrap(), sample.image[1].unwrap());
        assert_eq!(table.n(f0, f1), Some(2));
        assert!((table.rho(f0, f1) / table.rho(0, 1) - alpha).abs() < 1e-12);
        assert_eq!(table.rho(0, 0), 0.0);
    }

    #[test]
    fn frink_sandwich_on_forward_closed_sample() {
        let sys = doubling_quarter();
        let sample = doubling_sample(20, 1, 6);
        assert!(sample.len() >= 64, "sample has {} points", sample.len());
        let table = build_rho(&sys, &sample, 2f64.sqrt(), 2).unwrap();
        let frink = frink_metrize(&table).unwrap();
        for i in 0..sample.len() {
            for j in 0..sample.len() {
                let (d, rho) = (frink.d(i, j), table.rho(i, j));
                assert!(d <= rho * (1.0 + 1e-12));
                assert!(rho <= 4.0 * d * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn two_point_sample_gives_d_equal_rho() {
        let sys = doubling_quarter();
        let sample = SampleSet {
            points: vec![circle(0, 1), circle(1, 3)],
            closure_depth: 1,
            image: vec![None, None],
        };
        let table = build_rho(&sys, &sample, 2f64.sqrt(), 2).unwrap();
        let frink = frink_metrize(&table).unwrap();
        assert_eq!(frink.d(0, 1), table.rho(0, 1));
    }

    #[test]
    fn adapted_metric_n1_is_frink() {
        let sys = doubling_quarter();
        let sample = doubling_sample(10, 2, 6);
        let table = build_rho(&sys, &sample, 2f64.sqrt(), 2).unwrap();
        let frink = frink_metrize(&table).unwrap();
        let ad = adapted_metric(&frink, &sample, 1).unwrap();
        for &i in &ad.usable {
            for &j in &ad.usable {
                assert_eq!(ad.d(i, j), frink.d(i, j));
            }
        }
        assert_eq!(ad.lip_estimate(), ad.l);
    }

    #[test]
    fn adapted_metric_sandwich_and_triangle() {
        let sys = doubling_quarter();
        let sample = doubling_sample(12, 3, 8);
        let alpha = 2f64.sqrt();
        let table = build_rho(&sys, &sample, alpha, 2).unwrap();
        let frink = frink_metrize(&table).unwrap();
        let n = 4;
        let ad = adapted_metric(&frink, &sample, n).unwrap();
        let cap = 4.0 * alpha.powi(n as i32);
        for &i in &ad.usable {
            for &j in &ad.usable {
                let (dd, base) = (ad.d(i, j), frink.d(i, j));
                assert!(dd >= base * (1.0 - 1e-12));
                assert!(dd <= cap * base * (1.0 + 1e-12));
                for &k in &ad.usable {
                    assert!(ad.d(i, j) <= ad.d(i, k) + ad.d(k, j) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn dlip_dskew_bounds() {
        let sys = doubling_quarter();
        let sample = doubling_sample(12, 4, 8);
        let alpha = 2f64.sqrt();
        let table = build_rho(&sys, &sample, alpha, 2).unwrap();
        let frink = frink_metrize(&table).unwrap();
        for i in 1..=6usize {
            let ai = alpha.powi(i as i32);
            let chains = sample.chains(i);
            for a in 0..sample.len() {
                let Some(ca) = &chains[a] else { continue };
                for b in a + 1..sample.len() {
                    let Some(cb) = &chains[b] else { continue };
                    let base = frink.d(a, b);
                    if base == 0.0 {
                        continue;
                    }
                    let img = frink.d(ca[i], cb[i]);
                    // iterate expansion upper bound
                    assert!(img <= 4.0 * ai * base * (1.0 + 1e-12));
                    // expansion lower bound on the near-diagonal band
                    if table.n(a, b).map_or(false, |v| v as usize >= i) {
                        assert!(img >= 0.25 * ai * base * (1.0 - 1e-12));
                    }
                }
            }
        }
    }

    #[test]
    fn insufficient_closure() {
        let sys = doubling_quarter();
        let sample = SampleSet {
            points: vec![circle(1, 3), circle(1, 5)],
            closure_depth: 1,
            image: vec![None, None],
        };
        let table = build_rho(&sys, &sample, 2f64.sqrt(), 2).unwrap();
        let frink = frink_metrize(&table).unwrap();
        assert!(matches!(
            adapted_metric(&frink, &sample, 2),
            Err(ExpansiveError::InsufficientClosure { .. })
        ));
    }

    #[test]
    fn certificate_doubling() {
        let sys = doubling_quarter();
        let sample = doubling_sample(25, 5, 9);
        let rep = expansive_certificate(&sys, &sample, 4, 5).unwrap();
        assert_eq!(rep.m, 2);
        assert_eq!(rep.alpha, 2f64.sqrt());
        assert!(rep.sixteen_factor_ok);
        let h = 2f64.ln();
        assert_eq!(rep.entropy, Some(h));
        // HD bound finite and at least the box-dimension estimate minus
        // the estimator tolerance
        let bound = rep.hd_bound.unwrap();
        assert!(bound.is_finite() && bound > 0.0);
        assert!(
            bound >= rep.box_dim.slope - 0.2,
            "bound {} vs dim {}",
            bound,
            rep.box_dim.slope
        );
    }

    #[test]
    fn full_shift_as_expansive_system() {
        let sub = Subshift::full(2).unwrap();
        let sys = ExpansiveSystem::shift(sub.clone(), rat(1, 2), 64).unwrap();
        assert_eq!(sys.analytic_entropy(), Some(2f64.ln()));
        // n(x, y) equals the first-disagreement index for c = 1/2
        let a: SymbolicPoint = "|0".parse().unwrap();
        let b: SymbolicPoint = "001|0".parse().unwrap();
        assert_eq!(
            separation_time(&sys, &ExactPoint::Word(a), &ExactPoint::Word(b)).unwrap(),
            Some(2)
        );
        let base = sample_words(&sub, 40, 7, 6);
        let sample = SampleSet::forward_closed(&sys, base, 8);
        let ctx = build_context(&sys, &sample).unwrap();
        for i in 0..sample.len().min(30) {
            for j in 0..sample.len().min(30) {
                let (d, rho) = (ctx.frink.d(i, j), ctx.table.rho(i, j));
                assert!(d <= rho * (1.0 + 1e-12) && rho <= 4.0 * d * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn product_trend_toward_entropy() {
        let sys = doubling_quarter();
        let sample = SampleSet::forward_closed(&sys, sample_circle(90, 11, 1025), 11);
        let ctx = build_context(&sys, &sample).unwrap();
        let mut products = Vec::new();
        for n in [1usize, 2, 4, 8] {
            let rep = expansive_certificate_with(&ctx, &sys, &sample, n, 5).unwrap();
            products.push(rep.product);
        }
        let h = 2f64.ln();
        // non-increasing in trend (tiny estimator jitter allowed)
        for w in products.windows(2) {
            assert!(w[1] <= w[0] + 0.05, "products: {products:?}");
        }
        assert!(
            (products.last().unwrap() - h).abs() < 0.25,
            "products: {products:?}"
        );
    }
}
