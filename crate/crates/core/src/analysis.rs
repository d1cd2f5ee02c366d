//! Stability tests and dwell-time searches for linear impulsive systems
//! `x' = A x` between impulses and `x = J x^-` at impulse instants.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_finite, check_square, expm, mat_serde, spectral_radius, Mat};
use crate::oracle::{self, AuditReport};
use crate::sdp::{LmiBlock, SdpOptions, SdpProblem, DEFAULT_MARGIN_THRESHOLD};
use crate::sos::{AffineMat, Encoder, PieceView, PolyExpr, Program, Witness};

pub const TRACE_CAP_PER_STATE: f64 = 1e4;
pub const DEFAULT_BISECT_TOL: f64 = 1e-4;
pub const SEARCH_CAP: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpulsiveSystem {
    #[serde(alias = "A", with = "mat_serde")]
    pub a: Mat,
    #[serde(alias = "J", with = "mat_serde")]
    pub j: Mat,
    #[serde(alias = "Bc", default, with = "mat_serde::opt", skip_serializing_if = "Option::is_none")]
    pub bc: Option<Mat>,
    #[serde(alias = "Bd", default, with = "mat_serde::opt", skip_serializing_if = "Option::is_none")]
    pub bd: Option<Mat>,
}

impl ImpulsiveSystem {
    pub fn new(a: Mat, j: Mat) -> Result<Self> {
        let s = ImpulsiveSystem { a, j, bc: None, bd: None };
        s.validate()?;
        Ok(s)
    }

    pub fn with_inputs(mut self, bc: Option<Mat>, bd: Option<Mat>) -> Result<Self> {
        self.bc = bc;
        self.bd = bd;
        self.validate()?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        check_square(&self.a, "A")?;
        check_finite(&self.a, "A")?;
        check_finite(&self.j, "J")?;
        let n = self.a.nrows();
        if n == 0 {
            return Err(Error::dim("system has no states"));
        }
        if self.j.shape() != (n, n) {
            return Err(Error::dim(format!("J must be {n}x{n}")));
        }
        for (name, b) in [("Bc", &self.bc), ("Bd", &self.bd)] {
            if let Some(b) = b {
                check_finite(b, name)?;
                if b.nrows() != n {
                    return Err(Error::dim(format!("{name} must have {n} rows")));
                }
            }
        }
        Ok(())
    }
}

/// Vertices `(A_i, J_i)` of a polytopic impulsive system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopicSystem {
    pub vertices: Vec<ImpulsiveSystem>,
}

impl PolytopicSystem {
    pub fn new(vertices: Vec<ImpulsiveSystem>) -> Result<Self> {
        let p = PolytopicSystem { vertices };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .vertices
            .first()
            .ok_or_else(|| Error::input("polytope needs at least one vertex"))?;
        for v in &self.vertices {
            v.validate()?;
            if v.n() != first.n() {
                return Err(Error::dim("vertices differ in state dimension"));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.vertices[0].n()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum DwellSpec {
    Periodic { t: f64 },
    Ranged { t_min: f64, t_max: f64 },
    Minimum { t: f64 },
    Maximum { t: f64 },
}

impl DwellSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        let good = match *self {
            DwellSpec::Periodic { t } | DwellSpec::Minimum { t } | DwellSpec::Maximum { t } => ok(t),
            DwellSpec::Ranged { t_min, t_max } => ok(t_min) && ok(t_max) && t_min <= t_max,
        };
        if good {
            Ok(())
        } else {
            Err(Error::input(format!("invalid dwell specification {self:?}")))
        }
    }

    /// Length of the domain of the witness.
    pub fn horizon(&self) -> f64 {
        match *self {
            DwellSpec::Periodic { t } | DwellSpec::Minimum { t } | DwellSpec::Maximum { t } => t,
            DwellSpec::Ranged { t_max, .. } => t_max,
        }
    }
}

/// Orientation of the witness: `R` decreasing along the flow towards the
/// impulse (`D`), or `S` with reversed time (`E`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    D,
    E,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub sdp: SdpOptions,
    pub margin_threshold: f64,
    pub grid: usize,
    pub verify_tol: f64,
    /// Largest factor applied to the trace caps when a solve is infeasible
    /// with the cap active; 1 disables escalation.
    #[serde(default = "default_trace_scale")]
    pub max_trace_scale: f64,
    /// Factor of the first solve; searches raise it to the last factor that
    /// certified, since a larger cap never loses feasibility.
    #[serde(default = "unit_scale")]
    pub start_trace_scale: f64,
}

pub const DEFAULT_MAX_TRACE_SCALE: f64 = 1e8;

fn default_trace_scale() -> f64 {
    DEFAULT_MAX_TRACE_SCALE
}

fn unit_scale() -> f64 {
    1.0
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            sdp: SdpOptions::default(),
            margin_threshold: DEFAULT_MARGIN_THRESHOLD,
            grid: crate::sos::DEFAULT_GRID,
            verify_tol: crate::sos::DEFAULT_VERIFY_TOL,
            max_trace_scale: DEFAULT_MAX_TRACE_SCALE,
            start_trace_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpStats {
    pub witness_params: usize,
    pub sdp_vars: usize,
    pub blocks: usize,
    pub equalities: usize,
    pub iterations: usize,
    /// Trace-cap factor of the accepted solve.
    #[serde(default = "unit_scale")]
    pub trace_scale: f64,
    pub seconds: f64,
}

/// A feasibility witness together with its independent audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub tag: String,
    pub spec: DwellSpec,
    pub form: Form,
    pub encoder: Encoder,
    pub vertices: usize,
    pub feasible: bool,
    pub margin: f64,
    pub witness: Witness,
    pub audit: AuditReport,
    /// Spectral radius of `e^{A T} J` at the certified dwell time(s), worst vertex.
    pub discrete_radius: Option<f64>,
    pub stats: SdpStats,
}

pub fn tag(spec: &DwellSpec, form: Form) -> String {
    let f = match form {
        Form::D => "d",
        Form::E => "e",
    };
    match spec {
        DwellSpec::Periodic { .. } => format!("periodic/{f}"),
        DwellSpec::Ranged { .. } => format!("ranged/{f}"),
        DwellSpec::Minimum { .. } => format!("minimum/{f}"),
        DwellSpec::Maximum { .. } => format!("maximum/{f}"),
    }
}

/// `rho(e^{A T} J) < 1`.
pub fn periodic_exact(sys: &ImpulsiveSystem, tbar: f64) -> Result<bool> {
    Ok(periodic_radius(&sys.a, &sys.j, tbar)? < 1.0)
}

pub fn periodic_radius(a: &Mat, j: &Mat, tbar: f64) -> Result<f64> {
    if !(tbar > 0.0) || !tbar.is_finite() {
        return Err(Error::input("dwell time must be positive"));
    }
    spectral_radius(&(expm(a, tbar)? * j))
}

fn lyap_point(a: &Mat, p: &AffineMat) -> AffineMat {
    p.rmul(a).he()
}

fn jump(j: &Mat, pre: &AffineMat, post: &AffineMat) -> AffineMat {
    // J^T pre J - post
    pre.rmul(j).lmul(&j.transpose()).sub(post)
}

fn eye(n: usize) -> Mat {
    Mat::identity(n, n)
}

/// Encodes the conditions of `spec` / `form` for every vertex with a common
/// witness, solves, and audits the result.
pub fn certify(
    vertices: &[ImpulsiveSystem],
    spec: DwellSpec,
    form: Form,
    encoder: Encoder,
    opts: &AnalysisOptions,
) -> Result<Certificate> {
    spec.validate()?;
    let psys = PolytopicSystem::new(vertices.to_vec())?;
    let n = psys.n();
    let start = Instant::now();
    let horizon = spec.horizon();
    let mut prog = Program::new(encoder, horizon)?;
    let r = prog.unknown(n, n, true);
    let ident = AffineMat::constant(eye(n));

    let (anchor, far) = match form {
        Form::D => (0.0, horizon),
        Form::E => (horizon, 0.0),
    };
    if matches!((spec, form), (DwellSpec::Ranged { .. }, Form::E)) {
        return Err(Error::input("ranged dwell-time conditions use the d orientation"));
    }
    let sign = match form {
        Form::D => 1.0,
        Form::E => -1.0,
    };

    for (i, v) in psys.vertices.iter().enumerate() {
        // A^T R + R A + R' <= 0 (with -R' for the e orientation)
        prog.require(&format!("flow[{i}]"), 0.0, horizon, |pv: &PieceView| {
            Ok(pv.value(&r).rmul(&v.a).he().add(&pv.deriv(&r).scale(sign)).neg())
        })?;

        match spec {
            DwellSpec::Ranged { t_min, t_max } => {
                let pre = r.at(0.0);
                let j = v.j.clone();
                let rr = r.clone();
                prog.require(&format!("jump[{i}]"), t_min, t_max, move |pv| {
                    let jt = PolyExpr::constant(pre.rmul(&j).lmul(&j.transpose()));
                    Ok(jt.sub(&pv.value(&rr)).add(&PolyExpr::from_mat(eye(n))).neg())
                })?;
            }
            _ => {
                let c = jump(&v.j, &r.at(anchor), &r.at(far)).add(&ident).scale(-1.0);
                prog.require_at(&format!("jump[{i}]"), &c);
            }
        }
        match spec {
            DwellSpec::Minimum { .. } => {
                prog.require_at(&format!("hold[{i}]"), &lyap_point(&v.a, &r.at(anchor)).scale(-1.0))
            }
            DwellSpec::Maximum { .. } => prog.require_at(&format!("hold[{i}]"), &lyap_point(&v.a, &r.at(anchor))),
            _ => {}
        }
    }
    let r_anchor = r.at(anchor);
    prog.require_at("positivity", &r_anchor);
    prog.bound_trace(&r_anchor, TRACE_CAP_PER_STATE * n as f64);

    let solved = prog.solve_escalating(&opts.sdp, opts.margin_threshold, opts.start_trace_scale, opts.max_trace_scale)?;
    let witness = r.extract(&solved.x)?;
    let feasible = solved.t_star >= opts.margin_threshold;
    let stats = SdpStats {
        witness_params: prog.witness_params(),
        sdp_vars: solved.sdp_vars,
        blocks: solved.sdp_blocks,
        equalities: solved.sdp_equalities,
        iterations: solved.iterations,
        trace_scale: solved.trace_scale,
        seconds: start.elapsed().as_secs_f64(),
    };
    let mut cert = Certificate {
        tag: tag(&spec, form),
        spec,
        form,
        encoder,
        vertices: psys.vertices.len(),
        feasible,
        margin: solved.t_star,
        witness,
        audit: AuditReport::default(),
        discrete_radius: None,
        stats,
    };
    cert.audit = oracle::verify_certificate(&cert, &psys.vertices, opts.grid, opts.verify_tol)?;
    cert.discrete_radius = Some(worst_radius(&psys.vertices, &spec)?);
    if cert.feasible {
        soundness_trap(&cert, &psys.vertices)?;
    }
    Ok(cert)
}

/// Worst vertex spectral radius over the dwell times covered by the spec
/// (the maximum over a 50-point grid for intervals).
fn worst_radius(vertices: &[ImpulsiveSystem], spec: &DwellSpec) -> Result<f64> {
    let thetas: Vec<f64> = match *spec {
        DwellSpec::Periodic { t } | DwellSpec::Minimum { t } | DwellSpec::Maximum { t } => vec![t],
        DwellSpec::Ranged { t_min, t_max } => (0..50).map(|k| t_min + (t_max - t_min) * k as f64 / 49.0).collect(),
    };
    let mut worst = 0.0_f64;
    for v in vertices {
        for &th in &thetas {
            worst = worst.max(periodic_radius(&v.a, &v.j, th)?);
        }
    }
    Ok(worst)
}

/// A feasible certificate must agree with the exact periodic test at every
/// dwell time it covers.
fn soundness_trap(cert: &Certificate, vertices: &[ImpulsiveSystem]) -> Result<()> {
    match cert.spec {
        DwellSpec::Periodic { .. } | DwellSpec::Ranged { .. } | DwellSpec::Minimum { .. } => {
            let rho = cert.discrete_radius.unwrap_or(worst_radius(vertices, &cert.spec)?);
            if rho >= 1.0 {
                return Err(Error::Internal(format!(
                    "{} certificate is feasible (margin {:.3e}) but the exact test gives radius {rho:.6}",
                    cert.tag, cert.margin
                )));
            }
        }
        DwellSpec::Maximum { .. } => {}
    }
    Ok(())
}

pub fn periodic_certificate(
    sys: &ImpulsiveSystem,
    tbar: f64,
    encoder: Encoder,
    form: Form,
    opts: &AnalysisOptions,
) -> Result<Certificate> {
    certify(std::slice::from_ref(sys), DwellSpec::Periodic { t: tbar }, form, encoder, opts)
}

pub fn ranged_certificate(
    sys: &ImpulsiveSystem,
    t_min: f64,
    t_max: f64,
    encoder: Encoder,
    opts: &AnalysisOptions,
) -> Result<Certificate> {
    certify(std::slice::from_ref(sys), DwellSpec::Ranged { t_min, t_max }, Form::D, encoder, opts)
}

pub fn min_dwell_certificate(
    sys: &ImpulsiveSystem,
    tbar: f64,
    encoder: Encoder,
    form: Form,
    maximum: bool,
    opts: &AnalysisOptions,
) -> Result<Certificate> {
    let spec = if maximum {
        DwellSpec::Maximum { t: tbar }
    } else {
        DwellSpec::Minimum { t: tbar }
    };
    certify(std::slice::from_ref(sys), spec, form, encoder, opts)
}

pub fn robust_certificate(
    psys: &PolytopicSystem,
    spec: DwellSpec,
    encoder: Encoder,
    opts: &AnalysisOptions,
) -> Result<Certificate> {
    certify(&psys.vertices, spec, Form::D, encoder, opts)
}

/// Feasibility of `P > 0`, `A^T P + P A < 0`, `J^T e^{A^T T} P e^{A T} J - P < 0`.
fn exact_min_dwell_probe(sys: &ImpulsiveSystem, tbar: f64, opts: &AnalysisOptions) -> Result<bool> {
    let n = sys.n();
    let mut p = SdpProblem::new(0);
    let t = p.add_var();
    p.add_block(LmiBlock::new(Mat::from_element(1, 1, 1.0), "margin-cap").with_term(t, -eye(1)));
    let phi_j = expm(&sys.a, tbar)? * &sys.j;
    let mut b_pos = LmiBlock::new(Mat::zeros(n, n), "P").with_term(t, -eye(n));
    let mut b_flow = LmiBlock::new(Mat::zeros(n, n), "flow").with_term(t, -eye(n));
    let mut b_jump = LmiBlock::new(Mat::zeros(n, n), "jump").with_term(t, -eye(n));
    let mut cap = LmiBlock::new(Mat::from_element(1, 1, TRACE_CAP_PER_STATE * n as f64), "trace-cap");
    for i in 0..n {
        for k in i..n {
            let v = p.add_var();
            let mut e = Mat::zeros(n, n);
            e[(i, k)] = 1.0;
            e[(k, i)] = 1.0;
            b_flow.add_term(v, -(sys.a.transpose() * &e + &e * &sys.a));
            b_jump.add_term(v, -(phi_j.transpose() * &e * &phi_j - &e));
            if i == k {
                cap.add_term(v, Mat::from_element(1, 1, -1.0));
            }
            b_pos.add_term(v, e);
        }
    }
    for b in [b_pos, b_flow, b_jump, cap] {
        p.add_block(b);
    }
    let m = crate::sdp::max_margin(&p, t, &opts.sdp)?;
    Ok(m.t_star >= opts.margin_threshold)
}

fn is_hurwitz(a: &Mat) -> Result<bool> {
    let schur = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, 100 * a.nrows().max(2))
        .ok_or_else(|| Error::Numerical("QR iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().all(|z| z.re < 0.0))
}

/// Smallest minimum dwell time certified by the parameter-free conditions,
/// to within `tol`.
pub fn exact_min_dwell(sys: &ImpulsiveSystem, tol: f64, opts: &AnalysisOptions) -> Result<f64> {
    sys.validate()?;
    if !(tol > 0.0) {
        return Err(Error::input("tolerance must be positive"));
    }
    if !is_hurwitz(&sys.a)? {
        return Err(Error::input("minimum dwell-time analysis needs a Hurwitz flow matrix"));
    }
    let probe = |t: f64| exact_min_dwell_probe(sys, t, opts);
    monotone_threshold(probe, tol, 1.0, SEARCH_CAP, tol)
}

/// Smallest `T` in `[floor, cap]` with `probe(T)` true, assuming feasibility
/// is monotone increasing in `T`. Returns the feasible end of the final
/// bracket.
fn monotone_threshold<F>(probe: F, floor: f64, start: f64, cap: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<bool>,
{
    if probe(floor)? {
        return Ok(floor);
    }
    let mut bad = floor;
    let mut good = start.max(floor);
    loop {
        if probe(good)? {
            break;
        }
        bad = good;
        good *= 2.0;
        if good > cap {
            return Err(Error::NotFound(format!("no feasible dwell time below {cap}")));
        }
    }
    bisect(good, bad, tol, &probe)
}

/// Trace-cap factor carried from one feasible probe of a search to the next.
struct ScaleHint {
    base: AnalysisOptions,
    scale: std::cell::Cell<f64>,
}

impl ScaleHint {
    fn new(opts: &AnalysisOptions) -> Self {
        ScaleHint {
            base: *opts,
            scale: std::cell::Cell::new(opts.start_trace_scale),
        }
    }

    fn opts(&self) -> AnalysisOptions {
        AnalysisOptions {
            start_trace_scale: self.scale.get(),
            ..self.base
        }
    }

    fn record(&self, cert: Certificate) -> bool {
        if cert.feasible {
            self.scale.set(self.scale.get().max(cert.stats.trace_scale));
        }
        cert.feasible
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub tol: f64,
    /// Keep the lower end fixed instead of searching it.
    pub fixed_t_min: Option<f64>,
    pub cap: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            tol: DEFAULT_BISECT_TOL,
            fixed_t_min: None,
            cap: SEARCH_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeResult {
    pub t_min: f64,
    pub t_max: f64,
    pub probes: usize,
    /// Certificate for `[t_min, seed]`.
    pub lower: Certificate,
    /// Certificate for `[anchor, t_max]`, the anchor being the fixed `T_min`
    /// when given and the seed otherwise.
    pub upper: Certificate,
    /// Whether `[t_min, t_max]` is certified as a single range.
    pub joint: bool,
}

/// Bisection for the last `true` of a probe that is `true` at `good` and
/// `false` at `bad` (either order).
fn bisect<F>(mut good: f64, mut bad: f64, tol: f64, probe: &F) -> Result<f64>
where
    F: Fn(f64) -> Result<bool>,
{
    while (good - bad).abs() > tol {
        let mid = 0.5 * (good + bad);
        if probe(mid)? {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(good)
}

/// Certified dwell range around `seed`. Each end is bisected with the other
/// end held at the seed (or at the fixed `T_min` for the upper end), so the
/// two ends come from separate certificates; `joint` reports whether the
/// whole range is certified at once.
pub fn search_range(
    sys: &ImpulsiveSystem,
    encoder: Encoder,
    seed: f64,
    search: &SearchOptions,
    opts: &AnalysisOptions,
) -> Result<RangeResult> {
    if !periodic_exact(sys, seed)? {
        return Err(Error::input(format!("seed {seed} is not a stable periodic dwell time")));
    }
    let probes = std::cell::Cell::new(0usize);
    let hint = ScaleHint::new(opts);
    let probe = |lo: f64, hi: f64| -> Result<bool> {
        probes.set(probes.get() + 1);
        Ok(hint.record(ranged_certificate(sys, lo, hi, encoder, &hint.opts())?))
    };
    let t_min = match search.fixed_t_min {
        Some(t) => {
            if !(t > 0.0 && t <= seed) {
                return Err(Error::input("fixed T_min must lie in (0, seed]"));
            }
            if !probe(t, seed)? {
                return Err(Error::input(format!("[{t}, {seed}] is not certified")));
            }
            t
        }
        None => {
            if !probe(seed, seed)? {
                return Err(Error::input(format!("seed {seed} is not certified at this encoding")));
            }
            bisect(seed, 0.0, search.tol, &|t| probe(t, seed))?
        }
    };
    let anchor = search.fixed_t_min.unwrap_or(seed);
    let (mut good, mut bad) = (seed, 2.0 * seed);
    while probe(anchor, bad)? {
        good = bad;
        bad *= 2.0;
        if bad > search.cap {
            return Err(Error::NotFound(format!("dwell range unbounded up to {}", search.cap)));
        }
    }
    let t_max = bisect(good, bad, search.tol, &|t| probe(anchor, t))?;
    let lower = ranged_certificate(sys, t_min, seed, encoder, &hint.opts())?;
    let upper = ranged_certificate(sys, anchor, t_max, encoder, &hint.opts())?;
    let joint = probe(t_min, t_max)?;
    Ok(RangeResult {
        t_min,
        t_max,
        probes: probes.get() + 2,
        lower,
        upper,
        joint,
    })
}

/// Smallest certified minimum dwell time (or, with `maximum`, the largest
/// certified maximum dwell time) to within `tol`.
pub fn search_min_dwell(
    sys: &ImpulsiveSystem,
    encoder: Encoder,
    form: Form,
    maximum: bool,
    search: &SearchOptions,
    opts: &AnalysisOptions,
) -> Result<(f64, Certificate)> {
    let hint = ScaleHint::new(opts);
    let probe = |t: f64| -> Result<bool> { Ok(hint.record(min_dwell_certificate(sys, t, encoder, form, maximum, &hint.opts())?)) };
    let t = if maximum {
        // feasibility decreases with T
        let mut good = search.tol;
        if !probe(good)? {
            return Err(Error::NotFound("no maximum dwell time certified".into()));
        }
        let mut bad = 1.0_f64.max(2.0 * good);
        while probe(bad)? {
            good = bad;
            bad *= 2.0;
            if bad > search.cap {
                return Err(Error::NotFound(format!("maximum dwell time unbounded up to {}", search.cap)));
            }
        }
        bisect(good, bad, search.tol, &probe)?
    } else {
        monotone_threshold(probe, search.tol, 1.0, search.cap, search.tol)?
    };
    let cert = min_dwell_certificate(sys, t, encoder, form, maximum, &hint.opts())?;
    Ok((t, cert))
}

/// Feasibility on an equally spaced grid; a cross-check for searches that
/// may not be monotone.
pub fn linear_sweep<F>(probe: F, lo: f64, hi: f64, step: f64) -> Result<Vec<(f64, bool)>>
where
    F: Fn(f64) -> Result<bool>,
{
    if !(step > 0.0) || hi < lo {
        return Err(Error::input("sweep needs step > 0 and lo <= hi"));
    }
    let count = ((hi - lo) / step).floor() as usize;
    (0..=count)
        .map(|k| {
            let t = lo + step * k as f64;
            probe(t).map(|ok| (t, ok))
        })
        .collect()
}

/// Scalar decision variables: this method with a degree-`d_r` witness, and a
/// looped functional with a degree-`d_z` matrix of size `3n`.
pub fn variable_count(n: usize, d_r: usize, d_z: usize) -> (usize, usize) {
    let sym = |k: usize| k * (k + 1) / 2;
    ((d_r + 1) * sym(n), sym(n) + (d_z + 1) * sym(3 * n))
}
