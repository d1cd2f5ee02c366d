//! Infeasible-start primal-dual path following with Nesterov-Todd scaling and
//! Mehrotra predictor-corrector steps.
//!
//! Dual form:   maximize b^T y  s.t.  Z = C - sum_j y_j A_j >= 0
//! Primal form: minimize <C, X> s.t.  <A_j, X> = b_j,  X >= 0

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, SVD};

use super::reduce::Reduced;

type Mat = DMatrix<f64>;

/// Iterations without a 10% drop of the combined residual before giving up.
const STALL_ITERS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum IpmStatus {
    Converged,
    MaxIter,
    /// No progress in the combined residual for several iterations.
    Stalled,
    Breakdown,
}

pub(crate) struct IpmResult {
    pub status: IpmStatus,
    pub y: DVector<f64>,
    pub x: Vec<Mat>,
    pub pobj: f64,
    pub dobj: f64,
    pub pinf: f64,
    pub relgap: f64,
    pub iterations: usize,
}

struct Snapshot {
    merit: f64,
    y: DVector<f64>,
    xs: Vec<Mat>,
    pobj: f64,
    dobj: f64,
    pinf: f64,
    relgap: f64,
}

struct Scaling {
    g: Mat,
    ginv: Mat,
    w: Mat,
    d: DVector<f64>,
    lx: Mat,
    lz: Mat,
}

fn inner(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn sym(m: Mat) -> Mat {
    (&m + m.transpose()) * 0.5
}

fn lower_inverse(l: &Mat) -> Mat {
    let n = l.nrows();
    let mut inv = Mat::identity(n, n);
    l.solve_lower_triangular_mut(&mut inv);
    inv
}

fn nt_scaling(x: &Mat, z: &Mat) -> Option<Scaling> {
    let lx = Cholesky::new(x.clone())?.unpack();
    let lz = Cholesky::new(z.clone())?.unpack();
    let prod = lz.transpose() * &lx;
    let svd = SVD::new(prod, true, true);
    let v = svd.v_t.as_ref()?.transpose();
    let d = svd.singular_values.clone();
    if d.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return None;
    }
    let n = x.nrows();
    let dinvsqrt = DMatrix::from_diagonal(&d.map(|s| 1.0 / s.sqrt()));
    let dsqrt = DMatrix::from_diagonal(&d.map(|s| s.sqrt()));
    let g = &lx * &v * dinvsqrt;
    let lxinv = lower_inverse(&lx);
    let ginv = dsqrt * v.transpose() * lxinv;
    let w = &g * g.transpose();
    debug_assert_eq!(w.nrows(), n);
    Some(Scaling {
        g,
        ginv,
        w,
        d,
        lx,
        lz,
    })
}

/// Largest step keeping `L L^T + alpha dM` positive semidefinite.
fn max_step(l: &Mat, dm: &Mat) -> f64 {
    let mut t = dm.clone();
    l.solve_lower_triangular_mut(&mut t);
    let mut t2 = t.transpose();
    l.solve_lower_triangular_mut(&mut t2);
    let s = sym(t2);
    let lmin = SymmetricEigen::new(s)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn a_star(data: &Reduced, k: usize, y: &DVector<f64>) -> Mat {
    let nk = data.sizes[k];
    let v = &data.a[k] * y;
    Mat::from_column_slice(nk, nk, v.as_slice())
}

fn a_op(data: &Reduced, xs: &[Mat]) -> DVector<f64> {
    let m = data.b.len();
    let mut out = DVector::zeros(m);
    for (k, xk) in xs.iter().enumerate() {
        let xv = DVector::from_column_slice(xk.as_slice());
        out.gemv_tr(1.0, &data.a[k], &xv, 1.0);
    }
    out
}

pub(crate) struct IpmOptions {
    pub tol: f64,
    pub max_iter: usize,
}

pub(crate) fn solve(data: &Reduced, opts: &IpmOptions) -> IpmResult {
    let m = data.b.len();
    let nb = data.sizes.len();
    let ntot: usize = data.sizes.iter().sum();

    // initial point
    let mut xs = Vec::with_capacity(nb);
    let mut zs = Vec::with_capacity(nb);
    for k in 0..nb {
        let nk = data.sizes[k] as f64;
        let mut amax_norm = 0.0_f64;
        let mut ratio = 0.0_f64;
        for j in 0..m {
            let nrm = data.a[k].column(j).norm();
            amax_norm = amax_norm.max(nrm);
            ratio = ratio.max((1.0 + data.b[j].abs()) / (1.0 + nrm));
        }
        let cn = data.c[k].norm();
        let xi = 10.0_f64.max(nk.sqrt()).max(nk * ratio);
        let eta = 10.0_f64.max(nk.sqrt()).max(amax_norm).max(cn);
        xs.push(Mat::identity(data.sizes[k], data.sizes[k]) * xi);
        zs.push(Mat::identity(data.sizes[k], data.sizes[k]) * eta);
    }
    let mut y = DVector::<f64>::zeros(m);

    let bnorm = 1.0 + data.b.norm();
    let cnorm = 1.0 + data.c.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt();

    let mut status = IpmStatus::MaxIter;
    let mut iterations = 0;
    let mut pobj = 0.0;
    let mut dobj = 0.0;
    let mut pinf = f64::INFINITY;
    let mut relgap = f64::INFINITY;
    let mut stalled = 0;
    let mut best_merit = f64::INFINITY;
    let mut since_best = 0;
    let mut best: Option<Snapshot> = None;

    for it in 0..opts.max_iter {
        iterations = it;
        // residuals
        let ax = a_op(data, &xs);
        let rp = &data.b - &ax;
        let rd: Vec<Mat> = (0..nb)
            .map(|k| &data.c[k] - &zs[k] - a_star(data, k, &y))
            .collect();
        pobj = (0..nb).map(|k| inner(&data.c[k], &xs[k])).sum();
        dobj = data.b.dot(&y);
        let gap: f64 = (0..nb).map(|k| inner(&xs[k], &zs[k])).sum();
        let mu = gap / ntot as f64;
        pinf = rp.norm() / bnorm;
        let dinf = rd.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt() / cnorm;
        relgap = gap.max((pobj - dobj).abs()) / (1.0 + pobj.abs() + dobj.abs());
        if relgap < opts.tol && pinf < opts.tol && dinf < opts.tol {
            status = IpmStatus::Converged;
            break;
        }
        let merit = relgap.max(pinf).max(dinf);
        if merit.is_finite() && best.as_ref().is_none_or(|b| merit < b.merit) {
            best = Some(Snapshot {
                merit,
                y: y.clone(),
                xs: xs.clone(),
                pobj,
                dobj,
                pinf,
                relgap,
            });
        }
        if merit < 0.9 * best_merit {
            best_merit = merit;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= STALL_ITERS {
                status = IpmStatus::Stalled;
                break;
            }
        }
        if !gap.is_finite() || !pobj.is_finite() || !dobj.is_finite() {
            status = IpmStatus::Breakdown;
            break;
        }

        // scaling and Schur complement
        let mut scal = Vec::with_capacity(nb);
        for k in 0..nb {
            match nt_scaling(&xs[k], &zs[k]) {
                Some(s) => scal.push(s),
                None => {
                    status = IpmStatus::Breakdown;
                    break;
                }
            }
        }
        if status == IpmStatus::Breakdown {
            break;
        }
        let mut schur = Mat::zeros(m, m);
        for k in 0..nb {
            let nk = data.sizes[k];
            let w = &scal[k].w;
            let mut waw = Mat::zeros(nk * nk, m);
            for j in 0..m {
                let aj = Mat::from_column_slice(nk, nk, data.a[k].column(j).as_slice());
                let t = w * aj * w;
                waw.column_mut(j).copy_from_slice(t.as_slice());
            }
            schur.gemm_tr(1.0, &data.a[k], &waw, 1.0);
        }
        let schur = sym(schur);
        let chol = match factor(&schur) {
            Some(c) => c,
            None => {
                status = IpmStatus::Breakdown;
                break;
            }
        };

        // W Rd W is shared by predictor and corrector
        let wrdw: Vec<Mat> = (0..nb).map(|k| &scal[k].w * &rd[k] * &scal[k].w).collect();

        let direction = |sigma: f64, corr: Option<&[Mat]>| -> (DVector<f64>, Vec<Mat>, Vec<Mat>) {
            let mut rc = Vec::with_capacity(nb);
            for k in 0..nb {
                let nk = data.sizes[k];
                let d = &scal[k].d;
                let mut h = Mat::zeros(nk, nk);
                for i in 0..nk {
                    for j in 0..nk {
                        let mut r = 0.0;
                        if i == j {
                            r += 2.0 * sigma * mu - 2.0 * d[i] * d[i];
                        }
                        if let Some(c) = corr {
                            r -= c[k][(i, j)];
                        }
                        h[(i, j)] = r / (d[i] + d[j]);
                    }
                }
                rc.push(&scal[k].g * h * scal[k].g.transpose());
            }
            let diff: Vec<Mat> = (0..nb).map(|k| &wrdw[k] - &rc[k]).collect();
            let rhs = &rp + a_op(data, &diff);
            let dy = chol.solve(&rhs);
            let mut dz = Vec::with_capacity(nb);
            let mut dx = Vec::with_capacity(nb);
            for k in 0..nb {
                let dzk = sym(&rd[k] - a_star(data, k, &dy));
                let dxk = sym(&rc[k] - &scal[k].w * &dzk * &scal[k].w);
                dz.push(dzk);
                dx.push(dxk);
            }
            (dy, dx, dz)
        };

        let steps = |dx: &[Mat], dz: &[Mat]| -> (f64, f64) {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for k in 0..nb {
                ap = ap.min(max_step(&scal[k].lx, &dx[k]));
                ad = ad.min(max_step(&scal[k].lz, &dz[k]));
            }
            (ap, ad)
        };

        // predictor
        let (_dy_a, dx_a, dz_a) = direction(0.0, None);
        let (ap_a, ad_a) = steps(&dx_a, &dz_a);
        let ap_a = ap_a.min(1.0);
        let ad_a = ad_a.min(1.0);
        let gap_aff: f64 = (0..nb)
            .map(|k| inner(&(&xs[k] + &dx_a[k] * ap_a), &(&zs[k] + &dz_a[k] * ad_a)))
            .sum();
        let sigma = (gap_aff / gap).clamp(0.0, 1.0).powi(3);

        // corrector in the scaled space
        let corr: Vec<Mat> = (0..nb)
            .map(|k| {
                let s = &scal[k];
                let dxs = &s.ginv * &dx_a[k] * s.ginv.transpose();
                let dzs = s.g.transpose() * &dz_a[k] * &s.g;
                &dxs * &dzs + &dzs * &dxs
            })
            .collect();
        let (dy, dx, dz) = direction(sigma, Some(&corr));
        let (ap, ad) = steps(&dx, &dz);
        let gamma = 0.9 + 0.09 * ap_a.min(ad_a);
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        if ap < 1e-10 && ad < 1e-10 {
            stalled += 1;
            if stalled > 3 {
                status = IpmStatus::Breakdown;
                break;
            }
        } else {
            stalled = 0;
        }
        for k in 0..nb {
            xs[k] = sym(&xs[k] + &dx[k] * ap);
            zs[k] = sym(&zs[k] + &dz[k] * ad);
        }
        y += &dy * ad;
        iterations = it + 1;
    }

    // the last iterate of a failed run can be worse than an earlier one
    if status != IpmStatus::Converged {
        if let Some(b) = best {
            return IpmResult {
                status,
                y: b.y,
                x: b.xs,
                pobj: b.pobj,
                dobj: b.dobj,
                pinf: b.pinf,
                relgap: b.relgap,
                iterations,
            };
        }
    }
    IpmResult {
        status,
        y,
        x: xs,
        pobj,
        dobj,
        pinf,
        relgap,
        iterations,
    }
}

fn factor(m: &Mat) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = m.diagonal().amax().max(1e-300);
    let mut reg = 1e-14 * scale;
    for _ in 0..6 {
        let mut mm = m.clone();
        for i in 0..mm.nrows() {
            mm[(i, i)] += reg;
        }
        if let Some(c) = Cholesky::new(mm) {
            return Some(c);
        }
        reg *= 100.0;
    }
    None
}
