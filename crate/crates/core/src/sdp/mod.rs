//! Small dense semidefinite programming.
//!
//! Problems are posed over a vector of scalar decision variables `x`:
//!
//! ```text
//! maximize    c^T x
//! subject to  F0_k + sum_i x_i F_ik  >= 0     for every block k
//!             e_r^T x = h_r                     for every equality r
//! ```
//!
//! Equalities are eliminated up front, then the remaining LMI program is
//! solved with a primal-dual interior-point method (see [`ipm`]).

mod ipm;
mod reduce;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, min_eig_sym, Mat};

pub const DEFAULT_FEAS_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;
/// Gap and multiplier residual accepted for a run that stopped making progress.
pub const NEAR_OPTIMAL_TOL: f64 = 1e-6;

pub const DEFAULT_MARGIN_THRESHOLD: f64 = 1e-6;

/// One LMI block `constant + sum_i x_i F_i >= 0`.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub size: usize,
    pub constant: Mat,
    pub terms: Vec<(usize, Mat)>,
    pub label: String,
}

impl LmiBlock {
    pub fn new(constant: Mat, label: impl Into<String>) -> Self {
        LmiBlock {
            size: constant.nrows(),
            constant,
            terms: Vec::new(),
            label: label.into(),
        }
    }

    pub fn with_term(mut self, var: usize, f: Mat) -> Self {
        self.add_term(var, f);
        self
    }

    /// Adds `x_var * f`, merging with an existing term for the same variable.
    pub fn add_term(&mut self, var: usize, f: Mat) {
        if let Some((_, g)) = self.terms.iter_mut().find(|(v, _)| *v == var) {
            *g += f;
        } else {
            self.terms.push((var, f));
        }
    }

    pub fn eval(&self, x: &[f64]) -> Mat {
        let mut out = self.constant.clone();
        for (v, f) in &self.terms {
            if x[*v] != 0.0 {
                out += f * x[*v];
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct LinearEquality {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub nvars: usize,
    pub blocks: Vec<LmiBlock>,
    pub equalities: Vec<LinearEquality>,
    pub objective: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub x: Vec<f64>,
    /// `c^T x`.
    pub objective: f64,
    /// Objective of the conic dual; bounds `objective` from above.
    pub dual_objective: f64,
    /// Largest block eigenvalue violation and equality residual at `x`.
    pub primal_residual: f64,
    /// Relative residual of the dual equations at termination.
    pub dual_residual: f64,
    /// For `Infeasible`: residual of the certifying dual ray.
    pub certificate_residual: Option<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpOptions {
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            feas_tol: DEFAULT_FEAS_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl SdpProblem {
    pub fn new(nvars: usize) -> Self {
        SdpProblem {
            nvars,
            blocks: Vec::new(),
            equalities: Vec::new(),
            objective: vec![0.0; nvars],
        }
    }

    pub fn add_var(&mut self) -> usize {
        self.nvars += 1;
        self.objective.push(0.0);
        self.nvars - 1
    }

    pub fn add_vars(&mut self, count: usize) -> std::ops::Range<usize> {
        let start = self.nvars;
        self.nvars += count;
        self.objective.resize(self.nvars, 0.0);
        start..self.nvars
    }

    pub fn add_block(&mut self, block: LmiBlock) {
        self.blocks.push(block);
    }

    pub fn add_equality(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.equalities.push(LinearEquality { coeffs, rhs });
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.nvars {
            return Err(Error::dim("objective length differs from nvars"));
        }
        for (k, b) in self.blocks.iter().enumerate() {
            if b.constant.shape() != (b.size, b.size) {
                return Err(Error::dim(format!("block {k} constant has wrong shape")));
            }
            if asymmetry(&b.constant) > 1e-12 {
                return Err(Error::input(format!("block {k} constant is not symmetric")));
            }
            for (v, f) in &b.terms {
                if *v >= self.nvars {
                    return Err(Error::dim(format!("block {k} references variable {v}")));
                }
                if f.shape() != (b.size, b.size) {
                    return Err(Error::dim(format!("block {k} term {v} has wrong shape")));
                }
                if asymmetry(f) > 1e-12 {
                    return Err(Error::input(format!("block {k} term {v} is not symmetric")));
                }
            }
        }
        for (r, e) in self.equalities.iter().enumerate() {
            if e.coeffs.iter().any(|(v, _)| *v >= self.nvars) {
                return Err(Error::dim(format!("equality {r} references unknown variable")));
            }
        }
        let finite = self
            .blocks
            .iter()
            .all(|b| b.constant.iter().chain(b.terms.iter().flat_map(|(_, f)| f.iter())).all(|v| v.is_finite()))
            && self.objective.iter().all(|v| v.is_finite())
            && self
                .equalities
                .iter()
                .all(|e| e.rhs.is_finite() && e.coeffs.iter().all(|(_, c)| c.is_finite()));
        if !finite {
            return Err(Error::input("problem data must be finite"));
        }
        Ok(())
    }

    /// Worst block eigenvalue violation and equality residual at `x`.
    pub fn residuals(&self, x: &[f64]) -> Result<(f64, f64)> {
        let mut block_viol = 0.0_f64;
        for b in &self.blocks {
            let lam = min_eig_sym(&b.eval(x))?;
            block_viol = block_viol.max(-lam);
        }
        let mut eq = 0.0_f64;
        for e in &self.equalities {
            let s: f64 = e.coeffs.iter().map(|(v, c)| c * x[*v]).sum();
            eq = eq.max((s - e.rhs).abs());
        }
        Ok((block_viol.max(0.0), eq))
    }

    /// Sparse text dump: one `block row col var value` line per upper-triangular
    /// nonzero (`var = -1` for the constant), then `eq index var coeff` and
    /// `rhs index value` lines, then `obj var coeff` lines.
    pub fn to_sparse_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# nvars {} blocks {} equalities {}", self.nvars, self.blocks.len(), self.equalities.len());
        for (k, b) in self.blocks.iter().enumerate() {
            let mut emit = |var: i64, m: &Mat| {
                for i in 0..b.size {
                    for j in i..b.size {
                        if m[(i, j)] != 0.0 {
                            let _ = writeln!(s, "{k} {i} {j} {var} {:.17e}", m[(i, j)]);
                        }
                    }
                }
            };
            emit(-1, &b.constant);
            for (v, f) in &b.terms {
                emit(*v as i64, f);
            }
        }
        for (r, e) in self.equalities.iter().enumerate() {
            for (v, c) in &e.coeffs {
                let _ = writeln!(s, "eq {r} {v} {c:.17e}");
            }
            let _ = writeln!(s, "rhs {r} {:.17e}", e.rhs);
        }
        for (v, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                let _ = writeln!(s, "obj {v} {c:.17e}");
            }
        }
        s
    }

    fn data_scale(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| crate::linalg::max_abs(&b.constant))
            .fold(1.0, f64::max)
    }
}

fn expand(red: &reduce::Reduced, y: &DVector<f64>) -> Vec<f64> {
    let x = &red.x0 + &red.basis * y;
    x.iter().cloned().collect()
}

/// Solves the problem to tolerance `opts.feas_tol`.
pub fn solve(p: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution> {
    if !(opts.feas_tol > 0.0) {
        return Err(Error::input("feas_tol must be positive"));
    }
    p.validate()?;
    let red = match reduce::reduce(p) {
        reduce::ReduceOutcome::Ok(r) => r,
        reduce::ReduceOutcome::InconsistentEqualities(res) => {
            return Ok(SdpSolution {
                status: SdpStatus::Infeasible,
                x: vec![0.0; p.nvars],
                objective: f64::NAN,
                dual_objective: f64::NAN,
                primal_residual: res,
                dual_residual: f64::NAN,
                certificate_residual: Some(0.0),
                iterations: 0,
            })
        }
        reduce::ReduceOutcome::Unbounded(dir) => {
            return Ok(SdpSolution {
                status: SdpStatus::Unbounded,
                x: dir.iter().cloned().collect(),
                objective: f64::INFINITY,
                dual_objective: f64::INFINITY,
                primal_residual: f64::NAN,
                dual_residual: f64::NAN,
                certificate_residual: None,
                iterations: 0,
            })
        }
    };
    let scale = p.data_scale();
    let accept = opts.feas_tol * scale;

    if red.b.is_empty() {
        // fully determined by the equalities
        let x = expand(&red, &red.b);
        let (viol, eq) = p.residuals(&x)?;
        let obj = red.obj_offset;
        let status = if viol <= accept && eq <= accept {
            SdpStatus::Optimal
        } else {
            SdpStatus::Infeasible
        };
        return Ok(SdpSolution {
            status,
            x,
            objective: obj,
            dual_objective: obj,
            primal_residual: viol.max(eq),
            dual_residual: 0.0,
            certificate_residual: (status == SdpStatus::Infeasible).then_some(0.0),
            iterations: 0,
        });
    }

    let ipm_opts = ipm::IpmOptions {
        tol: opts.feas_tol,
        max_iter: opts.max_iter,
    };
    let res = ipm::solve(&red, &ipm_opts);
    let x = expand(&red, &res.y);
    let (viol, eq) = if x.iter().all(|v| v.is_finite()) {
        p.residuals(&x)?
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let objective: f64 = p.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let dual_objective = res.pobj + red.obj_offset;

    // A stalled run is accepted when the returned point is feasible for the
    // original problem and the duality gap is closed to a looser tolerance;
    // this is typical of optimal faces without a strictly feasible dual.
    let near = res.relgap <= NEAR_OPTIMAL_TOL
        && res.pinf <= NEAR_OPTIMAL_TOL;
    if (res.status == ipm::IpmStatus::Converged || near) && viol <= accept && eq <= accept {
        return Ok(SdpSolution {
            status: SdpStatus::Optimal,
            x,
            objective,
            dual_objective,
            primal_residual: viol.max(eq),
            dual_residual: res.pinf,
            certificate_residual: None,
            iterations: res.iterations,
        });
    }

    // Classify the failure: feasibility problem `max s : C - A*(y) - s I >= 0, s <= 1`.
    let (s_star, ray_residual) = phase_one(&red, &ipm_opts);
    let status = if s_star < -opts.feas_tol {
        SdpStatus::Infeasible
    } else if res.dobj.abs() > 1e10 * (1.0 + scale) {
        SdpStatus::Unbounded
    } else {
        SdpStatus::NumericalFailure
    };
    Ok(SdpSolution {
        status,
        x,
        objective,
        dual_objective,
        primal_residual: viol.max(eq),
        dual_residual: res.pinf,
        certificate_residual: (status == SdpStatus::Infeasible).then_some(ray_residual),
        iterations: res.iterations,
    })
}

/// Maximal uniform slack over all blocks, and the residual `||A(X)||` of the
/// associated primal ray.
fn phase_one(red: &reduce::Reduced, opts: &ipm::IpmOptions) -> (f64, f64) {
    let m = red.b.len();
    let mut c = red.c.clone();
    let mut a = Vec::with_capacity(red.a.len() + 1);
    let mut sizes = red.sizes.clone();
    for (k, ak) in red.a.iter().enumerate() {
        let nk = red.sizes[k];
        let mut ext = DMatrix::<f64>::zeros(nk * nk, m + 1);
        ext.columns_mut(0, m).copy_from(ak);
        for i in 0..nk {
            ext[(i * nk + i, m)] = 1.0;
        }
        a.push(ext);
    }
    c.push(DMatrix::from_element(1, 1, 1.0));
    let mut cap = DMatrix::<f64>::zeros(1, m + 1);
    cap[(0, m)] = 1.0;
    a.push(cap);
    sizes.push(1);
    let mut b = DVector::<f64>::zeros(m + 1);
    b[m] = 1.0;
    let aux = reduce::Reduced {
        x0: DVector::zeros(0),
        basis: DMatrix::zeros(0, m + 1),
        c,
        a,
        sizes,
        b,
        obj_offset: 0.0,
    };
    let res = ipm::solve(&aux, opts);
    let s = res.y[m];
    // the primal ray: blocks of X except the cap, normalised to unit trace
    let nb = red.sizes.len();
    let tr: f64 = res.x.iter().take(nb).map(|x| x.trace()).sum();
    let mut ray_res = f64::NAN;
    if tr > 0.0 {
        let mut ax = DVector::<f64>::zeros(m);
        for k in 0..nb {
            let xv = DVector::from_column_slice(res.x[k].as_slice());
            ax.gemv_tr(1.0 / tr, &red.a[k], &xv, 1.0);
        }
        ray_res = ax.amax();
    }
    (s, ray_res)
}

/// Result of a margin maximisation.
#[derive(Debug, Clone)]
pub struct Margin {
    /// Largest `t` such that every designated block satisfies `B(x) - t I >= 0`
    /// at the returned `x`, capped by the solver's `t`.
    pub t_star: f64,
    /// Upper bound on the optimal margin from the multipliers.
    pub upper: f64,
    pub x: Vec<f64>,
    pub solution: SdpSolution,
}

/// Maximises the margin variable `t`. Blocks whose coefficient on `t` is
/// `-I` are treated as designated strict blocks; the reported margin is
/// recomputed from `x` so that it is exact for the returned point.
pub fn max_margin(p: &SdpProblem, t: usize, opts: &SdpOptions) -> Result<Margin> {
    if t >= p.nvars {
        return Err(Error::input("margin variable out of range"));
    }
    let mut q = p.clone();
    q.objective = vec![0.0; q.nvars];
    q.objective[t] = 1.0;
    let sol = solve(&q, opts)?;
    let usable = sol.x.iter().all(|v| v.is_finite())
        && sol.primal_residual <= opts.feas_tol * p.data_scale()
        && sol.dual_residual <= NEAR_OPTIMAL_TOL;
    match sol.status {
        SdpStatus::Optimal => {}
        // the bounds below stay valid at a feasible iterate with accurate multipliers
        SdpStatus::NumericalFailure if usable => {}
        SdpStatus::NumericalFailure => {
            return Err(Error::Numerical(format!(
                "margin problem did not converge (primal residual {:.2e}, dual residual {:.2e})",
                sol.primal_residual, sol.dual_residual
            )))
        }
        SdpStatus::Infeasible => {
            return Ok(Margin {
                t_star: f64::NEG_INFINITY,
                upper: f64::NEG_INFINITY,
                x: sol.x.clone(),
                solution: sol,
            })
        }
        SdpStatus::Unbounded => return Err(Error::input("margin problem is unbounded; add a cap on t")),
    }
    let mut xt = sol.x.clone();
    let t_raw = xt[t];
    xt[t] = 0.0;
    let mut t_eff = f64::INFINITY;
    for b in &p.blocks {
        let designated = b.terms.iter().any(|(v, f)| {
            *v == t && (f + Mat::identity(b.size, b.size)).amax() == 0.0
        });
        if designated {
            t_eff = t_eff.min(min_eig_sym(&b.eval(&xt))?);
        }
    }
    let t_star = if t_eff.is_finite() { t_eff.min(t_raw) } else { t_raw };
    Ok(Margin {
        t_star,
        upper: sol.dual_objective,
        x: sol.x.clone(),
        solution: sol,
    })
}

#[cfg(test)]
mod tests;
