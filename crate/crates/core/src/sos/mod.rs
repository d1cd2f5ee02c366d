//! Reduction of parameter-dependent LMIs `M(tau) >= 0, tau in [lo, hi]` to
//! finite semidefinite constraints.
//!
//! Expressions are stored in the local coordinate `s in [0, 1]`, with
//! `tau = lo + (hi - lo) s`, which keeps monomial coefficients well scaled for
//! long intervals.

mod expr;
mod program;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use expr::{AffineMat, PolyExpr};
pub use program::{Encoder, PieceView, Program, Solved, Unknown, Witness};

use crate::error::{Error, Result};
use crate::linalg::{min_eig_sym, Mat};
use crate::sdp::{LmiBlock, SdpProblem};

pub const DEFAULT_GRID: usize = 200;
pub const DEFAULT_VERIFY_TOL: f64 = 1e-6;

/// `expr(s) >= 0` for `s in [0, 1]`, i.e. for `tau in [lo, hi]`.
#[derive(Debug, Clone)]
pub struct ParamLmi {
    pub lo: f64,
    pub hi: f64,
    pub expr: PolyExpr,
    /// Strict conditions carry the margin variable as `- t I`.
    pub strict: bool,
    pub name: String,
}

impl ParamLmi {
    pub fn new(lo: f64, hi: f64, expr: PolyExpr, strict: bool, name: impl Into<String>) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || hi < lo {
            return Err(Error::input(format!("invalid interval [{lo}, {hi}]")));
        }
        let (r, c) = expr.shape();
        if r != c {
            return Err(Error::dim("parametric LMI must be square"));
        }
        Ok(ParamLmi {
            lo,
            hi,
            expr,
            strict,
            name: name.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.expr.shape().0
    }

    fn tau(&self, s: f64) -> f64 {
        self.lo + (self.hi - self.lo) * s
    }
}

fn sym_basis(n: usize, i: usize, j: usize) -> Mat {
    let mut e = Mat::zeros(n, n);
    e[(i, j)] = 1.0;
    e[(j, i)] = 1.0;
    e
}

fn point_block(a: &AffineMat, name: &str, margin: Option<usize>) -> LmiBlock {
    let n = a.shape().0;
    let mut blk = LmiBlock::new(crate::linalg::symmetrize(a.constant_part()), name);
    for (v, f) in a.terms() {
        blk.add_term(v, crate::linalg::symmetrize(f));
    }
    if let Some(t) = margin {
        blk.add_term(t, -Mat::identity(n, n));
    }
    blk
}

/// Adds `a >= 0` (or `a - t I >= 0`) as a plain LMI block.
pub fn encode_point(p: &mut SdpProblem, a: &AffineMat, name: &str, margin: Option<usize>) {
    p.add_block(point_block(a, name, margin));
}

/// Symmetric Gram matrix of fresh variables, constrained PSD; returns the
/// variable index of every entry.
fn gram(p: &mut SdpProblem, size: usize, name: &str, margin: Option<usize>) -> Vec<Vec<usize>> {
    let mut idx = vec![vec![0usize; size]; size];
    let mut blk = LmiBlock::new(Mat::zeros(size, size), name);
    for i in 0..size {
        for j in i..size {
            let v = p.add_var();
            idx[i][j] = v;
            idx[j][i] = v;
            blk.add_term(v, sym_basis(size, i, j));
        }
    }
    if let Some(t) = margin {
        blk.add_term(t, -Mat::identity(size, size));
    }
    p.add_block(blk);
    idx
}

/// Matrix SOS certificate on `s in [0, 1]`:
/// `expr(s) = Z0^T G0 Z0 + s (1 - s) Z1^T G1 Z1`, `G0, G1 >= 0`, where the
/// `Z` are monomial bases tensored with the identity.
///
/// `mult_degree` is the degree of the multiplied SOS term's Gram part
/// (`deg S1`); `None` picks `deg S0 - 2` with `deg S0` the expression degree
/// rounded up to even.
pub fn sos_encode(p: &mut SdpProblem, lmi: &ParamLmi, mult_degree: Option<usize>, margin: Option<usize>) -> Result<()> {
    let k = lmi.dim();
    let margin = if lmi.strict { margin } else { None };
    let deg = lmi.expr.degree();
    if deg == 0 && mult_degree.is_none() {
        encode_point(p, &lmi.expr.coeffs()[0], &lmi.name, margin);
        return Ok(());
    }
    let half = deg.div_ceil(2);
    let q1 = match mult_degree {
        Some(m) => m.div_ceil(2),
        None => half.saturating_sub(1),
    };
    let q0 = half.max(q1 + 1);
    if 2 * q0 < deg {
        return Err(Error::Encoding(format!("{}: degree {deg} exceeds Gram capacity", lmi.name)));
    }
    let g0 = gram(p, k * (q0 + 1), &format!("{}:gram0", lmi.name), margin);
    let g1 = gram(p, k * (q1 + 1), &format!("{}:gram1", lmi.name), margin);

    let zero = AffineMat::zeros(k, k);
    for j in 0..=2 * q0 {
        let cj = lmi.expr.coeffs().get(j).unwrap_or(&zero);
        for r in 0..k {
            for c in r..k {
                let mut row: BTreeMap<usize, f64> = BTreeMap::new();
                for (v, f) in cj.terms() {
                    *row.entry(v).or_default() += f[(r, c)];
                }
                let mut gram_sum = |g: &Vec<Vec<usize>>, q: usize, shift: usize, sign: f64| {
                    if j < shift {
                        return;
                    }
                    let jj = j - shift;
                    for a in 0..=q.min(jj) {
                        let b = jj - a;
                        if b > q {
                            continue;
                        }
                        *row.entry(g[a * k + r][b * k + c]).or_default() -= sign;
                    }
                };
                gram_sum(&g0, q0, 0, 1.0);
                // s (1 - s) = s - s^2
                gram_sum(&g1, q1, 1, 1.0);
                gram_sum(&g1, q1, 2, -1.0);
                let coeffs: Vec<(usize, f64)> = row.into_iter().filter(|(_, c)| *c != 0.0).collect();
                p.add_equality(coeffs, -cj.constant_part()[(r, c)]);
            }
        }
    }
    Ok(())
}

/// Imposes an expression that is affine on the interval at the `segments + 1`
/// equally spaced points; exact for affine dependence.
pub fn discretize_encode(p: &mut SdpProblem, lmi: &ParamLmi, segments: usize, margin: Option<usize>) -> Result<()> {
    if segments == 0 {
        return Err(Error::input("segments must be at least 1"));
    }
    if lmi.expr.degree() >= 2 {
        return Err(Error::Encoding(format!(
            "{}: degree {} in the parameter; the discretization needs affine dependence",
            lmi.name,
            lmi.expr.degree()
        )));
    }
    let margin = if lmi.strict { margin } else { None };
    let points = if lmi.hi == lmi.lo { 0 } else { segments };
    for i in 0..=points {
        let s = if points == 0 { 0.0 } else { i as f64 / points as f64 };
        encode_point(p, &lmi.expr.eval_at(s), &format!("{}@{:.6}", lmi.name, lmi.tau(s)), margin);
    }
    Ok(())
}

/// Smallest eigenvalue over a uniform grid and where it occurs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseReport {
    pub min_eig: f64,
    pub argmin: f64,
    pub pass: bool,
}

/// Checks `m(tau) >= -tol` on `grid` equally spaced points of `[lo, hi]`.
pub fn verify_pointwise<F>(m: F, lo: f64, hi: f64, grid: usize, tol: f64) -> Result<PointwiseReport>
where
    F: Fn(f64) -> Result<Mat>,
{
    if grid < 2 {
        return Err(Error::input("grid needs at least 2 points"));
    }
    let mut best = PointwiseReport {
        min_eig: f64::INFINITY,
        argmin: lo,
        pass: true,
    };
    for i in 0..grid {
        let tau = lo + (hi - lo) * i as f64 / (grid - 1) as f64;
        let lam = min_eig_sym(&m(tau)?)?;
        if lam < best.min_eig {
            best.min_eig = lam;
            best.argmin = tau;
        }
    }
    best.pass = best.min_eig >= -tol;
    Ok(best)
}
