//! Feasibility programs over matrix-valued unknown functions of `tau`.
//!
//! An unknown lives either in the polynomials of fixed degree (coefficients in
//! the normalised variable `sigma = tau / L`) or in the continuous piecewise
//! linear functions on a uniform partition of `[0, L]`. Every requirement is
//! split at the partition knots, so on each piece both the unknown and its
//! derivative are polynomial in the piece's local coordinate.

use serde::{Deserialize, Serialize};

use super::{discretize_encode, encode_point, sos_encode, AffineMat, ParamLmi, PolyExpr};
use crate::error::{Error, Result};
use crate::linalg::{mat_serde, Mat};
use crate::polymat::PolyMat;
use crate::sdp::{max_margin, LmiBlock, SdpOptions, SdpProblem, SdpStatus};

/// How unknown functions are parametrised and conditions reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Encoder {
    Sos {
        degree: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mult_degree: Option<usize>,
    },
    Discretization {
        segments: usize,
    },
}

impl Encoder {
    pub fn sos(degree: usize) -> Self {
        Encoder::Sos {
            degree,
            mult_degree: None,
        }
    }

    pub fn discretization(segments: usize) -> Self {
        Encoder::Discretization { segments }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Encoder::Discretization { segments: 0 } => Err(Error::input("segments must be at least 1")),
            Encoder::Sos { degree, .. } if *degree > 12 => {
                Err(Error::input("polynomial degree above 12 is not supported"))
            }
            _ => Ok(()),
        }
    }

    /// Scalar parameters of one `rows x cols` unknown.
    pub fn params_per_unknown(&self, rows: usize, cols: usize, symmetric: bool) -> usize {
        let per = if symmetric { rows * (rows + 1) / 2 } else { rows * cols };
        match self {
            Encoder::Sos { degree, .. } => (degree + 1) * per,
            Encoder::Discretization { segments } => (segments + 1) * per,
        }
    }
}

/// A solved unknown, as a function of `tau` on `[0, L]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Witness {
    Poly {
        #[serde(flatten)]
        poly: PolyMat,
    },
    Pwl {
        knots: Vec<f64>,
        #[serde(with = "mat_serde::vec")]
        values: Vec<Mat>,
    },
}

impl Witness {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Witness::Poly { poly } => poly.shape(),
            Witness::Pwl { values, .. } => values[0].shape(),
        }
    }

    fn segment(knots: &[f64], tau: f64) -> usize {
        let n = knots.len() - 1;
        let h = knots[n] / n as f64;
        ((tau / h).floor().max(0.0) as usize).min(n - 1)
    }

    pub fn value(&self, tau: f64) -> Mat {
        match self {
            Witness::Poly { poly } => poly.eval(tau),
            Witness::Pwl { knots, values } => {
                let j = Self::segment(knots, tau);
                let w = (tau - knots[j]) / (knots[j + 1] - knots[j]);
                &values[j] * (1.0 - w) + &values[j + 1] * w
            }
        }
    }

    /// Derivative; on the partition knots of a piecewise linear witness this
    /// is the slope of the segment to the right (the last segment at `L`).
    pub fn derivative(&self, tau: f64) -> Mat {
        match self {
            Witness::Poly { poly } => poly.derivative().eval(tau),
            Witness::Pwl { knots, values } => {
                let j = Self::segment(knots, tau);
                (&values[j + 1] - &values[j]) / (knots[j + 1] - knots[j])
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Witness::Pwl { knots, values } = self {
            if knots.len() < 2 || knots.len() != values.len() {
                return Err(Error::input("piecewise linear witness needs matching knots and values"));
            }
            if knots[0] != 0.0 || knots.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::input("knots must start at 0 and increase"));
            }
            let shape = values[0].shape();
            if values.iter().any(|v| v.shape() != shape) {
                return Err(Error::dim("witness values differ in shape"));
            }
        }
        Ok(())
    }
}

/// A matrix-valued unknown function registered with a [`Program`].
#[derive(Debug, Clone)]
pub struct Unknown {
    rows: usize,
    cols: usize,
    symmetric: bool,
    length: f64,
    kind: UnknownKind,
}

#[derive(Debug, Clone)]
enum UnknownKind {
    /// Polynomial in `sigma = tau / L`.
    Poly(PolyExpr),
    /// Values at the knots `j L / N`.
    Pwl(Vec<AffineMat>),
}

impl Unknown {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Exact value at a point, affine in the decision variables.
    pub fn at(&self, tau: f64) -> AffineMat {
        match &self.kind {
            UnknownKind::Poly(p) => p.eval_at(tau / self.length),
            UnknownKind::Pwl(v) => {
                let n = v.len() - 1;
                let h = self.length / n as f64;
                let j = ((tau / h).floor().max(0.0) as usize).min(n - 1);
                let w = (tau - j as f64 * h) / h;
                v[j].scale(1.0 - w).add(&v[j + 1].scale(w))
            }
        }
    }

    fn piece(&self, lo: f64, hi: f64) -> (PolyExpr, PolyExpr) {
        match &self.kind {
            UnknownKind::Poly(p) => {
                let (a, b) = (lo / self.length, (hi - lo) / self.length);
                let value = p.compose_affine(a, b);
                let deriv = p.derivative().scale(1.0 / self.length).compose_affine(a, b);
                (value, deriv)
            }
            UnknownKind::Pwl(v) => {
                let n = v.len() - 1;
                let h = self.length / n as f64;
                let mid = 0.5 * (lo + hi);
                let j = ((mid / h).floor().max(0.0) as usize).min(n - 1);
                let slope = v[j + 1].sub(&v[j]).scale(1.0 / h);
                let start = v[j].add(&slope.scale(lo - j as f64 * h));
                let value = PolyExpr::new(vec![start, slope.scale(hi - lo)]).expect("shapes agree");
                (value, PolyExpr::constant(slope))
            }
        }
    }

    /// Substitutes a solution vector.
    pub fn extract(&self, x: &[f64]) -> Result<Witness> {
        match &self.kind {
            UnknownKind::Poly(p) => {
                // sigma^i = tau^i / L^i
                let coeffs: Vec<Mat> = p
                    .coeffs()
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c.eval(x) / self.length.powi(i as i32))
                    .collect();
                let mut coeffs = coeffs;
                let full = self.declared_degree();
                coeffs.resize(full + 1, Mat::zeros(self.rows, self.cols));
                let poly = if self.symmetric {
                    PolyMat::symmetric(coeffs.into_iter().map(|c| crate::linalg::symmetrize(&c)).collect())?
                } else {
                    PolyMat::general(coeffs)?
                };
                Ok(Witness::Poly { poly })
            }
            UnknownKind::Pwl(v) => {
                let n = v.len() - 1;
                Ok(Witness::Pwl {
                    knots: (0..=n).map(|j| self.length * j as f64 / n as f64).collect(),
                    values: v.iter().map(|a| a.eval(x)).collect(),
                })
            }
        }
    }

    fn declared_degree(&self) -> usize {
        match &self.kind {
            UnknownKind::Poly(p) => p.coeffs().len() - 1,
            UnknownKind::Pwl(_) => 1,
        }
    }
}

/// The local view of one piece of a requirement's interval.
pub struct PieceView {
    lo: f64,
    hi: f64,
}

impl PieceView {
    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn value(&self, u: &Unknown) -> PolyExpr {
        u.piece(self.lo, self.hi).0
    }

    pub fn deriv(&self, u: &Unknown) -> PolyExpr {
        u.piece(self.lo, self.hi).1
    }

    /// A parameter-free term, constant across the piece.
    pub fn fixed(&self, a: &AffineMat) -> PolyExpr {
        PolyExpr::constant(a.clone())
    }
}

/// Outcome of the margin maximisation.
#[derive(Debug, Clone)]
pub struct Solved {
    pub t_star: f64,
    pub x: Vec<f64>,
    pub status: SdpStatus,
    pub iterations: usize,
    pub sdp_vars: usize,
    pub sdp_blocks: usize,
    pub sdp_equalities: usize,
    /// Factor applied to the trace caps for the returned solve.
    pub trace_scale: f64,
}

/// A margin-maximisation program: every requirement is encoded as
/// `expr - t I >= 0` with a shared margin `t <= 1`.
/// Growth factor of the trace caps between escalated solves.
pub const TRACE_STEP: f64 = 1e4;

pub struct Program {
    problem: SdpProblem,
    margin: usize,
    encoder: Encoder,
    length: f64,
    witness_params: usize,
    /// `(block index, cap, trace of the constant part)` of every trace cap.
    trace_caps: Vec<(usize, f64, f64)>,
}

impl Program {
    pub fn new(encoder: Encoder, length: f64) -> Result<Self> {
        encoder.validate()?;
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::input("unknowns need a positive finite domain length"));
        }
        let mut problem = SdpProblem::new(0);
        let margin = problem.add_var();
        problem.add_block(LmiBlock::new(Mat::from_element(1, 1, 1.0), "margin-cap").with_term(margin, -Mat::identity(1, 1)));
        Ok(Program {
            problem,
            margin,
            encoder,
            length,
            witness_params: 0,
            trace_caps: Vec::new(),
        })
    }

    pub fn encoder(&self) -> Encoder {
        self.encoder
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn problem(&self) -> &SdpProblem {
        &self.problem
    }

    /// Number of scalar decision variables in the unknowns and constants.
    pub fn witness_params(&self) -> usize {
        self.witness_params
    }

    fn basis(rows: usize, cols: usize, symmetric: bool) -> Vec<Mat> {
        let mut out = Vec::new();
        if symmetric {
            for i in 0..rows {
                for j in i..rows {
                    let mut e = Mat::zeros(rows, rows);
                    e[(i, j)] = 1.0;
                    e[(j, i)] = 1.0;
                    out.push(e);
                }
            }
        } else {
            for i in 0..rows {
                for j in 0..cols {
                    let mut e = Mat::zeros(rows, cols);
                    e[(i, j)] = 1.0;
                    out.push(e);
                }
            }
        }
        out
    }

    fn fresh(&mut self, rows: usize, cols: usize, symmetric: bool) -> AffineMat {
        let mut a = AffineMat::zeros(rows, cols);
        for e in Self::basis(rows, cols, symmetric) {
            let v = self.problem.add_var();
            self.witness_params += 1;
            a = a.add(&AffineMat::var(v, e));
        }
        a
    }

    /// A free constant matrix (symmetric when `symmetric`).
    pub fn constant(&mut self, rows: usize, cols: usize, symmetric: bool) -> AffineMat {
        self.fresh(rows, cols, symmetric)
    }

    /// A free matrix function on `[0, L]`.
    pub fn unknown(&mut self, rows: usize, cols: usize, symmetric: bool) -> Unknown {
        if symmetric {
            assert_eq!(rows, cols, "symmetric unknown must be square");
        }
        let kind = match self.encoder {
            Encoder::Sos { degree, .. } => {
                let coeffs = (0..=degree).map(|_| self.fresh(rows, cols, symmetric)).collect();
                // no trimming: every coefficient carries variables
                UnknownKind::Poly(PolyExpr::new(coeffs).expect("uniform shapes"))
            }
            Encoder::Discretization { segments } => {
                UnknownKind::Pwl((0..=segments).map(|_| self.fresh(rows, cols, symmetric)).collect())
            }
        };
        Unknown {
            rows,
            cols,
            symmetric,
            length: self.length,
            kind,
        }
    }

    fn knots_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut pts = vec![lo];
        if let Encoder::Discretization { segments } = self.encoder {
            let h = self.length / segments as f64;
            for j in 1..segments {
                let k = j as f64 * h;
                if k > lo + 1e-12 * self.length && k < hi - 1e-12 * self.length {
                    pts.push(k);
                }
            }
        }
        pts.push(hi);
        pts
    }

    /// Requires `f(piece) - t I >= 0` for every `tau in [lo, hi]`.
    pub fn require<F>(&mut self, name: &str, lo: f64, hi: f64, f: F) -> Result<()>
    where
        F: Fn(&PieceView) -> Result<PolyExpr>,
    {
        if lo < -1e-12 || hi > self.length * (1.0 + 1e-12) || hi < lo {
            return Err(Error::input(format!(
                "{name}: interval [{lo}, {hi}] outside [0, {}]",
                self.length
            )));
        }
        let pts = self.knots_in(lo, hi);
        for w in pts.windows(2) {
            let view = PieceView { lo: w[0], hi: w[1] };
            let expr = f(&view)?;
            let lmi = ParamLmi::new(w[0], w[1], expr, true, name)?;
            match self.encoder {
                Encoder::Sos { mult_degree, .. } => sos_encode(&mut self.problem, &lmi, mult_degree, Some(self.margin))?,
                Encoder::Discretization { .. } => discretize_encode(&mut self.problem, &lmi, 1, Some(self.margin))?,
            }
        }
        Ok(())
    }

    /// Requires `a - t I >= 0`.
    pub fn require_at(&mut self, name: &str, a: &AffineMat) {
        encode_point(&mut self.problem, a, name, Some(self.margin));
    }

    /// Requires `a >= 0` without margin.
    pub fn require_plain(&mut self, name: &str, a: &AffineMat) {
        encode_point(&mut self.problem, a, name, None);
    }

    /// `trace(a) <= cap`.
    pub fn bound_trace(&mut self, a: &AffineMat, cap: f64) {
        self.trace_caps.push((self.problem.blocks.len(), cap, a.constant_part().trace()));
        let mut blk = LmiBlock::new(Mat::from_element(1, 1, cap - a.constant_part().trace()), "trace-cap");
        for (v, f) in a.terms() {
            blk.add_term(v, Mat::from_element(1, 1, -f.trace()));
        }
        self.problem.add_block(blk);
    }

    /// Adds `a[i][j] = 0` for the listed entries.
    pub fn fix_zero(&mut self, a: &AffineMat, entries: &[(usize, usize)]) {
        for &(i, j) in entries {
            let coeffs: Vec<(usize, f64)> = a.terms().map(|(v, f)| (v, f[(i, j)])).filter(|(_, c)| *c != 0.0).collect();
            self.problem.add_equality(coeffs, -a.constant_part()[(i, j)]);
        }
    }

    pub fn solve(&self, opts: &SdpOptions) -> Result<Solved> {
        self.solve_scaled(opts, 1.0)
    }

    /// Solves with every trace cap multiplied by `scale`.
    pub fn solve_scaled(&self, opts: &SdpOptions, scale: f64) -> Result<Solved> {
        let mut p = self.problem.clone();
        for &(b, cap, c) in &self.trace_caps {
            p.blocks[b].constant = Mat::from_element(1, 1, scale * cap - c);
        }
        let m = max_margin(&p, self.margin, opts)?;
        Ok(Solved {
            t_star: m.t_star,
            x: m.x,
            status: m.solution.status,
            iterations: m.solution.iterations,
            sdp_vars: p.nvars,
            sdp_blocks: p.blocks.len(),
            sdp_equalities: p.equalities.len(),
            trace_scale: scale,
        })
    }

    /// Every condition is homogeneous in the unknowns except the fixed `+I`
    /// terms, so the trace caps set the scale at which those terms count.
    /// While the margin stays below `threshold` with a cap active, the caps
    /// grow by `TRACE_STEP` from `start_scale` up to `max_scale`. A numerical
    /// failure after the first solve keeps the last completed one.
    pub fn solve_escalating(&self, opts: &SdpOptions, threshold: f64, start_scale: f64, max_scale: f64) -> Result<Solved> {
        let mut scale = start_scale.clamp(1.0, max_scale.max(1.0));
        let mut best = match self.solve_scaled(opts, scale) {
            Ok(s) => s,
            // a hinted start is only a shortcut
            Err(Error::Numerical(_)) if scale > 1.0 => {
                scale = 1.0;
                self.solve_scaled(opts, scale)?
            }
            Err(e) => return Err(e),
        };
        while best.t_star < threshold && scale * TRACE_STEP <= max_scale * (1.0 + 1e-12) && (self.cap_active(&best) || best.status != SdpStatus::Optimal) {
            scale *= TRACE_STEP;
            match self.solve_scaled(opts, scale) {
                Ok(s) => best = s,
                Err(Error::Numerical(_)) => break,
                Err(e) => return Err(e),
            }
        }
        Ok(best)
    }

    fn cap_active(&self, s: &Solved) -> bool {
        s.x.iter().all(|v| v.is_finite())
            && self.trace_caps.iter().any(|&(b, cap, _)| {
                let used = cap - self.problem.blocks[b].eval(&s.x)[(0, 0)];
                used >= 0.5 * cap * s.trace_scale
            })
    }
}
