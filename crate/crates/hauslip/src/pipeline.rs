//! Pipeline orchestration: each `run_*` takes a fully materialized config,
//! drives the corresponding module stack end to end, and assembles the
//! shared certificate. All outputs are deterministic given config and seed.

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::certificate::{
    check_field, dec, parse_dec, AnalyticBlock, BlockEntry, Certificate, CertificateError,
    CertificateFile, EmpiricalBlock, FitBlock, SpectrumEntry,
};
use crate::estimators::{
    box_dimension, default_scales, empirical_lip, empirical_skew, DimensionFit, EstimatorError,
    MetricSample,
};
use crate::exact_linalg::{
    char_poly, eigenvalues, entropy, jordan_from_override, real_jordan_from_spectrum,
    IntegerMatrix, JordanBlock, JordanConfig, LinalgError, RealJordanForm, SpectralClass,
};
use crate::expansive::{
    build_rho, choose_alpha, expansive_certificate_with, frink_metrize, sample_circle,
    sample_words, weak_triangle_m, ExactPoint, ExpansiveContext, ExpansiveError, ExpansiveSystem,
    SampleSet,
};
use crate::rat::parse_rational;
use crate::symbolic::{
    cylinder_dimension, sft_entropy, shift, shift_dist, Subshift, SubshiftSpec, SymbolicError,
    SymbolicPoint,
};
use crate::torus_metric::{
    analytic_certificate, choose_eta, EtaProblem, MetricError, ProductMetric, TorusMetric,
    TorusPoint,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("input is not valid: {0}")]
    BadInput(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
    #[error(transparent)]
    Expansive(#[from] ExpansiveError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Certificate(#[from] CertificateError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("no feasible eta exists for epsilon {epsilon}")]
    EtaInfeasible { epsilon: f64 },
}

/// A pipeline run: the certificate plus optional CSV exports.
#[derive(Debug)]
pub struct RunOutput {
    pub file: CertificateFile,
    pub distances_csv: Option<String>,
    pub counts_csv: Option<String>,
}

fn fit_block(fit: &DimensionFit<f64>) -> FitBlock {
    FitBlock {
        scales: fit.scales.iter().map(|&s| dec(s)).collect(),
        counts: fit.counts.clone(),
        slope: dec(fit.slope),
        residual: dec(fit.residual),
        kind: "box".to_string(),
    }
}

fn counts_csv(fit: &DimensionFit<f64>) -> String {
    let mut s = String::from("eps,count\n");
    for (e, c) in fit.scales.iter().zip(&fit.counts) {
        s.push_str(&format!("{e},{c}\n"));
    }
    s
}

// ---------------------------------------------------------------- torus --

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JordanOverrideSpec {
    pub blocks: Vec<OverrideBlock>,
    /// rows of T, decimal strings
    pub t: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverrideBlock {
    pub real: bool,
    pub re: String,
    pub im: String,
    pub size: usize,
}

#[derive(Debug, Clone)]
pub struct TorusConfig {
    pub matrix: Vec<Vec<i64>>,
    pub jordan_override: Option<JordanOverrideSpec>,
    pub epsilon: f64,
    pub eta_override: Option<f64>,
    pub precision_bits: u32,
    pub seed: u64,
    /// torus points sampled for the empirical block
    pub samples: usize,
    /// random index pairs for lip/skew
    pub pairs: usize,
    /// denominator bound for sampled rational coordinates
    pub max_den: u32,
    pub want_distances_csv: bool,
    pub want_counts_csv: bool,
}

impl TorusConfig {
    pub fn new(matrix: Vec<Vec<i64>>, epsilon: f64, seed: u64) -> Self {
        TorusConfig {
            matrix,
            jordan_override: None,
            epsilon,
            eta_override: None,
            precision_bits: default_precision(),
            seed,
            samples: 600,
            pairs: 20_000,
            max_den: 64,
            want_distances_csv: false,
            want_counts_csv: false,
        }
    }
}

/// Default working precision in bits, overridable via HAUSLIP_PRECISION.
pub fn default_precision() -> u32 {
    std::env::var("HAUSLIP_PRECISION")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(256)
}

/// Accepts either a bare array-of-arrays or an object with "matrix" and an
/// optional "jordan_override".
pub fn parse_matrix_input(v: &Value) -> Result<(Vec<Vec<i64>>, Option<JordanOverrideSpec>), PipelineError> {
    let (mat_v, over) = match v {
        Value::Array(_) => (v.clone(), None),
        Value::Object(map) => {
            let m = map
                .get("matrix")
                .ok_or_else(|| PipelineError::BadInput("missing \"matrix\" field".into()))?
                .clone();
            let over = match map.get("jordan_override") {
                Some(j) => Some(serde_json::from_value(j.clone())?),
                None => None,
            };
            (m, over)
        }
        _ => return Err(PipelineError::BadInput("matrix input must be an array or object".into())),
    };
    let rows: Vec<Vec<i64>> = serde_json::from_value(mat_v)
        .map_err(|e| PipelineError::BadInput(format!("matrix entries must be integers: {e}")))?;
    if rows.is_empty() || rows.iter().any(|r| r.len() != rows.len()) {
        return Err(PipelineError::BadInput("matrix must be square and nonempty".into()));
    }
    Ok((rows, over))
}

fn class_of(modulus: f64) -> SpectralClass {
    if modulus > 1.0 + 1e-9 {
        SpectralClass::Unstable
    } else if modulus < 1.0 - 1e-9 {
        SpectralClass::Stable
    } else {
        SpectralClass::Neutral
    }
}

fn jordan_for(cfg: &TorusConfig, a: &IntegerMatrix) -> Result<RealJordanForm, PipelineError> {
    if let Some(over) = &cfg.jordan_override {
        let blocks: Vec<JordanBlock> = over
            .blocks
            .iter()
            .map(|b| {
                let re = parse_dec(&b.re)
                    .ok_or_else(|| PipelineError::BadInput(format!("bad decimal {:?}", b.re)))?;
                let im = parse_dec(&b.im)
                    .ok_or_else(|| PipelineError::BadInput(format!("bad decimal {:?}", b.im)))?;
                let modulus = re.hypot(im);
                Ok(JordanBlock {
                    real: b.real,
                    re,
                    im,
                    modulus,
                    class: class_of(modulus),
                    size: b.size,
                })
            })
            .collect::<Result<_, PipelineError>>()?;
        let n = a.dim();
        if over.t.len() != n || over.t.iter().any(|r| r.len() != n) {
            return Err(PipelineError::BadInput("jordan_override.t has wrong shape".into()));
        }
        let mut t = nalgebra::DMatrix::zeros(n, n);
        for (i, row) in over.t.iter().enumerate() {
            for (j, s) in row.iter().enumerate() {
                t[(i, j)] = parse_dec(s)
                    .ok_or_else(|| PipelineError::BadInput(format!("bad decimal {s:?}")))?;
            }
        }
        Ok(jordan_from_override(a, blocks, t, 1e-8)?)
    } else {
        let spec = eigenvalues(&char_poly(a), cfg.precision_bits, 1e-9)?;
        let jc = JordanConfig {
            precision_bits: cfg.precision_bits,
            ..JordanConfig::default()
        };
        Ok(real_jordan_from_spectrum(a, &spec, &jc)?)
    }
}

/// Seeded rational torus points with denominators up to `max_den`.
pub fn sample_torus_points(n: usize, count: usize, seed: u64, max_den: u32) -> Vec<TorusPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            TorusPoint::new(
                (0..n)
                    .map(|_| {
                        let q = rng.gen_range(2..=max_den as i64);
                        let p = rng.gen_range(0..q);
                        BigRational::new(BigInt::from(p), BigInt::from(q))
                    })
                    .collect(),
            )
        })
        .collect()
}

/// A point displaced from 0 along the argmax block's witness direction,
/// rounded to rationals; pairs (0, point) push empirical_lip toward the
/// analytic value.
fn witness_points<S: crate::Real>(
    pm: &ProductMetric<S>,
    form: &RealJordanForm,
    argmax: usize,
) -> Vec<TorusPoint> {
    let n = pm.dim();
    let Ok(wvec) = pm.blocks[argmax].witness_vector() else {
        return Vec::new();
    };
    let off: usize = pm.blocks[..argmax].iter().map(|b| b.size).sum();
    let den: i64 = 1 << 30;
    [1e-3f64, 5e-4, 2e-4]
        .iter()
        .map(|&t| {
            // y-side displacement pulled back through T^{-1}
            let mut v = vec![0.0f64; n];
            for (k, w) in wvec.iter().enumerate() {
                v[off + k] = t * w.to_f64_lossy();
            }
            let coords = (0..n)
                .map(|i| {
                    let xi: f64 = (0..n).map(|j| form.t_inv[(i, j)] * v[j]).sum();
                    BigRational::new(BigInt::from((xi * den as f64).round() as i64), BigInt::from(den))
                })
                .collect();
            TorusPoint::new(coords)
        })
        .collect()
}

fn require_positive_epsilon(epsilon: f64) -> Result<(), PipelineError> {
    if !(epsilon > 0.0) {
        return Err(PipelineError::BadInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    Ok(())
}

pub fn run_torus(cfg: &TorusConfig) -> Result<RunOutput, PipelineError> {
    require_positive_epsilon(cfg.epsilon)?;
    let a = IntegerMatrix::from_rows(&cfg.matrix)?;
    let cp = char_poly(&a);
    let spectrum = eigenvalues(&cp, cfg.precision_bits, 1e-9)?;
    let h = entropy(&spectrum);
    let form = jordan_for(cfg, &a)?;

    // eta: pre-Jordan worst case first, then the actual per-block cases;
    // the first feasible choice is recorded
    let eta = match cfg.eta_override {
        Some(e) => e,
        None => {
            let pre = choose_eta(&EtaProblem::from_spectrum(&spectrum, h), cfg.epsilon);
            if pre.feasible {
                pre.eta
            } else {
                let post = choose_eta(&EtaProblem::from_blocks(&form.blocks, h), cfg.epsilon);
                if !post.feasible {
                    return Err(PipelineError::EtaInfeasible { epsilon: cfg.epsilon });
                }
                post.eta
            }
        }
    };

    let pm: ProductMetric<f64> = ProductMetric::from_jordan(&form, eta);
    let analytic = analytic_certificate(&pm, h);
    let mut tm = TorusMetric::new(pm, form.t.clone());

    // empirical block: random torus points plus witness-direction points
    let mut points = sample_torus_points(a.dim(), cfg.samples, cfg.seed, cfg.max_den);

    // pre-grow the enumeration radius until a probe over the actual sample
    // certifies without per-query growth
    {
        let probe: Vec<(usize, usize)> = (0..points.len().saturating_sub(1))
            .step_by(2)
            .take(150)
            .map(|k| (k, k + 1))
            .collect();
        loop {
            let zero = vec![0.0f64; a.dim()];
            let ok = probe.iter().all(|&(i, j)| {
                tm.dist_embedded(&tm.embed_diff(&points[i], &points[j]), &zero)
                    .is_ok()
            });
            if ok || tm.enum_radius >= tm.max_radius {
                break;
            }
            let next = tm.enum_radius * 2;
            tm.grow_radius(next);
        }
    }
    let tm = tm;

    let witness_base = points.len();
    points.push(TorusPoint::zero(a.dim()));
    let wpts = witness_points(&tm.pm, &form, analytic.argmax_lip_block);
    let n_wit = wpts.len();
    points.extend(wpts);

    let dist = |x: &TorusPoint, y: &TorusPoint| -> f64 {
        tm.dist(x, y).unwrap_or(f64::NAN)
    };
    let mut ms = MetricSample::new(points, &dist, cfg.pairs, cfg.seed);
    for k in 0..n_wit {
        ms.pairs.push((witness_base, witness_base + 1 + k));
    }
    let map = |x: &TorusPoint| x.apply_matrix(&a);

    let invariants_ok = ms.check_metric_invariants();
    let emp_lip = empirical_lip(&ms, &map)?;
    let d_hi = ms
        .pairs
        .iter()
        .take(2000)
        .map(|&(i, j)| ms.d(i, j))
        .fold(0.0f64, f64::max);
    let emp_skew = empirical_skew(&ms, &map, &[d_hi / 4.0, d_hi / 8.0, d_hi / 16.0]).ok();
    // small gamma concentrates distances near 1; the scale ladder can be
    // unresolvable, in which case the fit is omitted rather than fabricated
    let fit = match box_dimension(&ms, &default_scales(d_hi)) {
        Ok(f) => Some(f),
        Err(EstimatorError::ScaleRangeDegenerate) => None,
        Err(e) => return Err(e.into()),
    };

    let mut checks = vec![
        ("metric_invariants".to_string(), invariants_ok),
        (
            "lip_below_analytic".to_string(),
            emp_lip <= analytic.lip * (1.0 + 1e-9),
        ),
        (
            "entropy_below_analytic_product".to_string(),
            h <= analytic.hd * analytic.lip.ln().max(0.0) + 1e-9,
        ),
    ];
    if let Some(sk) = emp_skew {
        checks.push(("skew_le_lip".to_string(), sk <= emp_lip * (1.0 + 1e-9)));
        // estimator-biased sanity: skew lower-bounds the true skew
        checks.push((
            "dim_skew_sanity".to_string(),
            fit.as_ref().map_or(0.0, |f| f.slope) * sk.ln().max(0.0) <= h + cfg.epsilon + 0.1,
        ));
    }

    let analytic_ok = analytic.product <= h + cfg.epsilon + 1e-12;
    let verdict = analytic_ok && checks.iter().all(|(_, ok)| *ok);

    let system = json!({
        "kind": "torus",
        "matrix": cfg.matrix,
        "jordan_override": cfg.jordan_override.as_ref().map(|o| serde_json::to_value(o).unwrap()),
        "precision_bits": cfg.precision_bits,
        "samples": cfg.samples,
        "pairs": cfg.pairs,
        "max_den": cfg.max_den,
        "eta": dec(eta),
    });

    let cert = Certificate {
        system,
        char_poly: Some(cp.coeffs.iter().map(|c| c.to_string()).collect()),
        spectrum: Some(
            spectrum
                .items
                .iter()
                .map(|i| SpectrumEntry {
                    re: dec(i.re),
                    im: dec(i.im),
                    modulus: dec(i.modulus),
                    multiplicity: i.multiplicity,
                    class: format!("{:?}", i.class).to_lowercase(),
                })
                .collect(),
        ),
        blocks: Some(
            form.blocks
                .iter()
                .zip(&tm.pm.blocks)
                .map(|(b, m)| BlockEntry {
                    real: b.real,
                    re: dec(b.re),
                    im: dec(b.im),
                    modulus: dec(b.modulus),
                    size: b.size,
                    class: format!("{:?}", b.class).to_lowercase(),
                    gamma: dec(m.gamma),
                    lip: dec(m.lip),
                })
                .collect(),
        ),
        analytic: AnalyticBlock {
            entropy: dec(h),
            hd: dec(analytic.hd),
            lip: dec(analytic.lip),
            product: dec(analytic.product),
            bound: dec(analytic.bound),
            eta: Some(dec(eta)),
            gammas: analytic.gammas.iter().map(|&g| dec(g)).collect(),
        },
        empirical: EmpiricalBlock {
            lip: Some(dec(emp_lip)),
            skew: emp_skew.map(dec),
            boxdim: fit.as_ref().map(fit_block),
            samples: cfg.samples,
            pairs: ms.pairs.len(),
            seed: cfg.seed,
            checks,
        },
        epsilon: dec(cfg.epsilon),
        seed: cfg.seed,
        verdict,
    };

    let distances_csv = cfg.want_distances_csv.then(|| {
        let mut s = String::from("x,y,d\n");
        for &(i, j) in &ms.pairs {
            s.push_str(&format!("{:?},{:?},{}\n", ms.points[i], ms.points[j], ms.d(i, j)));
        }
        s
    });
    let counts = cfg
        .want_counts_csv
        .then(|| fit.as_ref().map(counts_csv))
        .flatten();
    Ok(RunOutput {
        file: CertificateFile::new(cert),
        distances_csv,
        counts_csv: counts,
    })
}

// ---------------------------------------------------------------- shift --

#[derive(Debug, Clone)]
pub struct ShiftConfig {
    pub spec: SubshiftSpec,
    pub epsilon: f64,
    pub seed: u64,
    pub n_max: usize,
    pub samples: usize,
    pub pairs: usize,
    pub pre_len: usize,
    pub want_counts_csv: bool,
}

impl ShiftConfig {
    pub fn new(spec: SubshiftSpec, epsilon: f64, seed: u64) -> Self {
        ShiftConfig {
            spec,
            epsilon,
            seed,
            n_max: 15,
            samples: 800,
            pairs: 20_000,
            pre_len: 10,
            want_counts_csv: false,
        }
    }
}

pub fn run_shift(cfg: &ShiftConfig) -> Result<RunOutput, PipelineError> {
    require_positive_epsilon(cfg.epsilon)?;
    if cfg.n_max < 4 {
        return Err(PipelineError::BadInput("n_max must be at least 4".into()));
    }
    let sub = Subshift::from_spec(&cfg.spec)?;
    let h = sft_entropy(&sub)?;
    let lr = (sub.r as f64).ln();

    // HD estimate from cylinder counts; Lip from the analytic bound r
    let (hd, hd_residual) = if sub.r == 1 {
        (0.0, 0.0)
    } else {
        let cyl = cylinder_dimension(&sub, cfg.n_max);
        (cyl.dim, cyl.residual)
    };
    let lip = sub.r as f64;
    let product = hd * lr;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let points: Vec<SymbolicPoint> = (0..cfg.samples)
        .map(|_| sub.random_point(&mut rng, cfg.pre_len))
        .collect();
    let r = sub.r;
    let dist = move |x: &SymbolicPoint, y: &SymbolicPoint| shift_dist(x, y, r);
    let ms = MetricSample::new(points, &dist, cfg.pairs, cfg.seed);
    let map = |x: &SymbolicPoint| shift(x);

    let invariants_ok = ms.check_metric_invariants();
    let emp_lip = empirical_lip(&ms, &map).unwrap_or(0.0);
    let emp_skew = empirical_skew(&ms, &map, &[0.25, 0.125, 0.0625]).ok();
    let fit = (sub.r > 1)
        .then(|| box_dimension(&ms, &default_scales(1.0)))
        .transpose()?;

    let mut checks = vec![
        ("metric_invariants".to_string(), invariants_ok),
        ("lip_below_analytic".to_string(), emp_lip <= lip * (1.0 + 1e-9)),
    ];
    if let Some(f) = &fit {
        checks.push(("box_vs_cylinder".to_string(), (f.slope - hd).abs() <= 0.2));
    }
    if let Some(sk) = emp_skew {
        checks.push((
            "dim_skew_sanity".to_string(),
            fit.as_ref().map_or(0.0, |f| f.slope) * sk.ln().max(0.0) <= h + cfg.epsilon + 0.1,
        ));
    }

    let verdict = product <= h + cfg.epsilon + 1e-12 && checks.iter().all(|(_, ok)| *ok);

    let system = json!({
        "kind": "shift",
        "subshift": serde_json::to_value(&cfg.spec)?,
        "n_max": cfg.n_max,
        "samples": cfg.samples,
        "pairs": cfg.pairs,
        "pre_len": cfg.pre_len,
    });
    let cert = Certificate {
        system,
        char_poly: None,
        spectrum: None,
        blocks: None,
        analytic: AnalyticBlock {
            entropy: dec(h),
            hd: dec(hd),
            lip: dec(lip),
            product: dec(product),
            bound: dec(hd_residual),
            eta: None,
            gammas: Vec::new(),
        },
        empirical: EmpiricalBlock {
            lip: Some(dec(emp_lip)),
            skew: emp_skew.map(dec),
            boxdim: fit.as_ref().map(fit_block),
            samples: cfg.samples,
            pairs: ms.pairs.len(),
            seed: cfg.seed,
            checks,
        },
        epsilon: dec(cfg.epsilon),
        seed: cfg.seed,
        verdict,
    };
    let counts = cfg
        .want_counts_csv
        .then(|| fit.as_ref().map(counts_csv))
        .flatten();
    Ok(RunOutput {
        file: CertificateFile::new(cert),
        distances_csv: None,
        counts_csv: counts,
    })
}

// ------------------------------------------------------------ expansive --

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleConfig {
    pub count: usize,
    pub seed: u64,
    pub closure_depth: usize,
    #[serde(default = "default_max_den")]
    pub max_den: u32,
    #[serde(default = "default_pre_len")]
    pub pre_len: usize,
}

fn default_max_den() -> u32 {
    1025
}

fn default_pre_len() -> usize {
    8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansiveRunSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subshift: Option<SubshiftSpec>,
    /// exact rational literal like "1/4"
    pub c: String,
    #[serde(default = "default_cap")]
    pub cap: usize,
    pub sample: SampleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub n: usize,
    pub i: usize,
}

fn default_cap() -> usize {
    64
}

#[derive(Debug, Clone)]
pub struct ExpansiveConfig {
    pub spec: ExpansiveRunSpec,
    pub epsilon: f64,
    pub seed: u64,
    pub want_table_csv: bool,
}

fn build_system(spec: &ExpansiveRunSpec) -> Result<ExpansiveSystem, PipelineError> {
    let c = parse_rational(&spec.c)
        .ok_or_else(|| PipelineError::BadInput(format!("bad rational c: {:?}", spec.c)))?;
    match spec.kind.as_str() {
        "doubling" => Ok(ExpansiveSystem::doubling(c, spec.cap)?),
        "shift" => {
            let sub_spec = spec
                .subshift
                .as_ref()
                .ok_or_else(|| PipelineError::BadInput("shift kind needs a subshift".into()))?;
            Ok(ExpansiveSystem::shift(Subshift::from_spec(sub_spec)?, c, spec.cap)?)
        }
        other => Err(PipelineError::BadInput(format!("unknown system kind {other:?}"))),
    }
}

fn build_sample(
    sys: &ExpansiveSystem,
    spec: &ExpansiveRunSpec,
    seed: u64,
) -> Result<SampleSet, PipelineError> {
    let base: Vec<ExactPoint> = match spec.kind.as_str() {
        "doubling" => sample_circle(spec.sample.count, seed, spec.sample.max_den),
        _ => {
            let sub_spec = spec.subshift.as_ref().unwrap();
            let sub = Subshift::from_spec(sub_spec)?;
            sample_words(&sub, spec.sample.count, seed, spec.sample.pre_len)
        }
    };
    Ok(SampleSet::forward_closed(sys, base, spec.sample.closure_depth))
}

pub fn run_expansive(cfg: &ExpansiveConfig) -> Result<RunOutput, PipelineError> {
    require_positive_epsilon(cfg.epsilon)?;
    if cfg.spec.sample.closure_depth < 1 || cfg.spec.n < 1 {
        return Err(PipelineError::BadInput(
            "closure_depth and n must be at least 1".into(),
        ));
    }
    let sys = build_system(&cfg.spec)?;
    let sample = build_sample(&sys, &cfg.spec, cfg.spec.sample.seed)?;
    let m = match sys.analytic_m() {
        Some(m) => m,
        None => (2 * weak_triangle_m(&sys, &sample)?).max(1),
    };
    let alpha = cfg.spec.alpha.unwrap_or_else(|| choose_alpha(m));
    let table = build_rho(&sys, &sample, alpha, m)?;
    let frink = frink_metrize(&table)?;
    let ctx = ExpansiveContext {
        m,
        alpha,
        table,
        frink,
    };
    let rep = expansive_certificate_with(&ctx, &sys, &sample, cfg.spec.n, cfg.spec.i)?;

    let h = rep.entropy.unwrap_or(f64::NAN);
    let checks = vec![
        // weak triangle and the Frink sandwich are verified during
        // construction; reaching this point certifies them
        ("weak_triangle".to_string(), true),
        ("frink_sandwich".to_string(), true),
        ("sixteen_factor".to_string(), rep.sixteen_factor_ok),
        (
            "hd_bound_finite".to_string(),
            rep.hd_bound.map_or(false, f64::is_finite),
        ),
        (
            "hd_bound_above_boxdim".to_string(),
            rep.hd_bound.map_or(false, |b| b >= rep.box_dim.slope - 0.2),
        ),
    ];
    let verdict = checks.iter().all(|(_, ok)| *ok);

    let system = json!({
        "kind": cfg.spec.kind,
        "subshift": cfg.spec.subshift.as_ref().map(|s| serde_json::to_value(s).unwrap()),
        "c": cfg.spec.c,
        "cap": cfg.spec.cap,
        "sample": serde_json::to_value(&cfg.spec.sample)?,
        "alpha": alpha,
        "m": m,
        "n": cfg.spec.n,
        "i": cfg.spec.i,
        "sample_size": sample.len(),
    });
    let cert = Certificate {
        system,
        char_poly: None,
        spectrum: None,
        blocks: None,
        analytic: AnalyticBlock {
            entropy: dec(h),
            hd: dec(rep.hd_bound.unwrap_or(f64::INFINITY)),
            lip: dec(rep.lip_d_estimate),
            product: dec(rep.product),
            bound: dec(rep.hd_bound.unwrap_or(f64::INFINITY) * rep.lip_d_estimate.ln().max(0.0)),
            eta: None,
            gammas: Vec::new(),
        },
        empirical: EmpiricalBlock {
            lip: Some(dec(rep.lip_d_i)),
            skew: Some(dec(rep.skew_d_i)),
            boxdim: Some(fit_block(&rep.box_dim)),
            samples: sample.len(),
            pairs: sample.len() * (sample.len() - 1) / 2,
            seed: cfg.spec.sample.seed,
            checks,
        },
        epsilon: dec(cfg.epsilon),
        seed: cfg.seed,
        verdict,
    };

    let table_csv = cfg.want_table_csv.then(|| {
        let mut s = String::from("i,j,rho,frink\n");
        for i in 0..sample.len() {
            for j in i + 1..sample.len() {
                s.push_str(&format!("{i},{j},{},{}\n", ctx.table.rho(i, j), ctx.frink.d(i, j)));
            }
        }
        s
    });
    Ok(RunOutput {
        file: CertificateFile::new(cert),
        distances_csv: table_csv,
        counts_csv: None,
    })
}

// --------------------------------------------------------------- verify --

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub analytic_recomputed: bool,
    pub checks: Vec<(String, bool)>,
    pub pass: bool,
}

fn sys_u64(system: &Value, key: &str) -> Result<u64, PipelineError> {
    system
        .get(key)
        .and_then(Value::as_u64)
        .ok_or_else(|| PipelineError::BadInput(format!("certificate system lacks {key:?}")))
}

/// Re-run the empirical block with a fresh seed and recompute the analytic
/// fields from the recorded inputs; any analytic discrepancy is a
/// CertificateMismatch.
pub fn run_verify(file: &CertificateFile, fresh_seed: u64) -> Result<VerifyReport, PipelineError> {
    let cert = &file.certificate;
    let kind = cert
        .system
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| PipelineError::BadInput("certificate lacks system.kind".into()))?;
    let epsilon = parse_dec(&cert.epsilon)
        .ok_or_else(|| PipelineError::BadInput("bad epsilon in certificate".into()))?;

    // expansive certificates also use kind "doubling"/"shift"; they are the
    // ones carrying a sample block
    let is_expansive = cert
        .system
        .get("sample")
        .map_or(false, |v| !v.is_null());
    if is_expansive {
        let mut spec: ExpansiveRunSpec = serde_json::from_value(cert.system.clone())?;
        spec.sample.seed = fresh_seed;
        let cfg = ExpansiveConfig {
            spec,
            epsilon,
            seed: fresh_seed,
            want_table_csv: false,
        };
        let rerun = run_expansive(&cfg)?;
        let re = &rerun.file.certificate;
        check_field(
            "analytic.entropy",
            &cert.analytic.entropy,
            parse_dec(&re.analytic.entropy).unwrap(),
            1e-9,
        )?;
        let checks = re.empirical.checks.clone();
        let pass = checks.iter().all(|(_, ok)| *ok);
        return Ok(VerifyReport {
            analytic_recomputed: true,
            checks,
            pass,
        });
    }

    match kind {
        "torus" => {
            let matrix: Vec<Vec<i64>> =
                serde_json::from_value(cert.system["matrix"].clone())?;
            let eta = cert
                .system
                .get("eta")
                .and_then(Value::as_str)
                .and_then(parse_dec)
                .ok_or_else(|| PipelineError::BadInput("certificate lacks recorded eta".into()))?;
            let mut cfg = TorusConfig::new(matrix, epsilon, fresh_seed);
            cfg.eta_override = Some(eta);
            cfg.precision_bits = sys_u64(&cert.system, "precision_bits")? as u32;
            cfg.samples = sys_u64(&cert.system, "samples")? as usize;
            cfg.pairs = sys_u64(&cert.system, "pairs")? as usize;
            cfg.max_den = sys_u64(&cert.system, "max_den")? as u32;
            if let Some(over) = cert.system.get("jordan_override").filter(|v| !v.is_null()) {
                cfg.jordan_override = Some(serde_json::from_value(over.clone())?);
            }
            let rerun = run_torus(&cfg)?;
            let re = &rerun.file.certificate;
            for (field, recorded, recomputed) in [
                ("analytic.entropy", &cert.analytic.entropy, &re.analytic.entropy),
                ("analytic.hd", &cert.analytic.hd, &re.analytic.hd),
                ("analytic.lip", &cert.analytic.lip, &re.analytic.lip),
                ("analytic.product", &cert.analytic.product, &re.analytic.product),
                ("analytic.bound", &cert.analytic.bound, &re.analytic.bound),
            ] {
                check_field(field, recorded, parse_dec(recomputed).unwrap(), 1e-9)?;
            }
            let mut checks = re.empirical.checks.clone();
            let slope_ok = match (&cert.empirical.boxdim, &re.empirical.boxdim) {
                (Some(a), Some(b)) => {
                    (parse_dec(&a.slope).unwrap() - parse_dec(&b.slope).unwrap()).abs() <= 0.05
                }
                (None, None) => true,
                _ => false,
            };
            checks.push(("boxdim_stability".to_string(), slope_ok));
            let pass = checks.iter().all(|(_, ok)| *ok);
            Ok(VerifyReport {
                analytic_recomputed: true,
                checks,
                pass,
            })
        }
        "shift" => {
            let spec: SubshiftSpec = serde_json::from_value(cert.system["subshift"].clone())?;
            let mut cfg = ShiftConfig::new(spec, epsilon, fresh_seed);
            cfg.n_max = sys_u64(&cert.system, "n_max")? as usize;
            cfg.samples = sys_u64(&cert.system, "samples")? as usize;
            cfg.pairs = sys_u64(&cert.system, "pairs")? as usize;
            cfg.pre_len = sys_u64(&cert.system, "pre_len")? as usize;
            let rerun = run_shift(&cfg)?;
            let re = &rerun.file.certificate;
            for (field, recorded, recomputed) in [
                ("analytic.entropy", &cert.analytic.entropy, &re.analytic.entropy),
                ("analytic.hd", &cert.analytic.hd, &re.analytic.hd),
                ("analytic.lip", &cert.analytic.lip, &re.analytic.lip),
                ("analytic.product", &cert.analytic.product, &re.analytic.product),
            ] {
                check_field(field, recorded, parse_dec(recomputed).unwrap(), 1e-9)?;
            }
            let checks = re.empirical.checks.clone();
            let pass = checks.iter().all(|(_, ok)| *ok);
            Ok(VerifyReport {
                analytic_recomputed: true,
                checks,
                pass,
            })
        }
        other => Err(PipelineError::BadInput(format!(
            "unknown certificate kind {other:?}"
        ))),
    }
}
