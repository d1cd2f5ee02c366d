//! Elimination of linear equalities and of directions invisible to the blocks.
//!
//! The interior-point iteration works on the pure inequality form
//! `C - sum_j y_j A_j >= 0`. Equalities `E x = h` are removed by writing
//! `x = x0 + N y` with `N` an orthonormal basis of `ker E`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::SdpProblem;

pub(crate) struct Reduced {
    pub x0: DVector<f64>,
    /// `nvars x m` map from reduced to original variables.
    pub basis: DMatrix<f64>,
    /// Per block: constant `C_k`.
    pub c: Vec<DMatrix<f64>>,
    /// Per block: `n_k^2 x m`, column `j` is `vec(A_jk)`.
    pub a: Vec<DMatrix<f64>>,
    pub sizes: Vec<usize>,
    pub b: DVector<f64>,
    pub obj_offset: f64,
}

pub(crate) enum ReduceOutcome {
    Ok(Reduced),
    InconsistentEqualities(f64),
    /// A direction leaves every block unchanged but moves the objective.
    Unbounded(DVector<f64>),
}

/// Householder QR with column pivoting of an `n x p` matrix. Returns the full
/// orthogonal factor, the upper-trapezoidal factor and the column permutation.
fn pivoted_qr(mut a: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, Vec<usize>) {
    let (n, p) = a.shape();
    let mut perm: Vec<usize> = (0..p).collect();
    let mut norms: Vec<f64> = (0..p).map(|j| a.column(j).norm_squared()).collect();
    let mut reflectors: Vec<(usize, DVector<f64>, f64)> = Vec::new();
    let steps = n.min(p);
    for k in 0..steps {
        // pivot on the largest remaining column norm
        let (piv, _) = norms
            .iter()
            .enumerate()
            .skip(k)
            .fold((k, -1.0), |best, (j, &v)| if v > best.1 { (j, v) } else { best });
        if piv != k {
            a.swap_columns(k, piv);
            norms.swap(k, piv);
            perm.swap(k, piv);
        }
        let x = a.view((k, k), (n - k, 1)).clone_owned();
        let alpha = x.norm();
        if alpha == 0.0 {
            break;
        }
        let sign = if x[0] >= 0.0 { 1.0 } else { -1.0 };
        let mut v = DVector::from_column_slice(x.as_slice());
        v[0] += sign * alpha;
        let vnorm2 = v.norm_squared();
        if vnorm2 == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm2;
        // apply H = I - beta v v^T to the trailing block
        for j in k..p {
            let mut col = a.view_mut((k, j), (n - k, 1));
            let s = beta * v.dot(&col.column(0));
            col.column_mut(0).axpy(-s, &v, 1.0);
        }
        for (j, nrm) in norms.iter_mut().enumerate().skip(k + 1) {
            *nrm = a.view((k + 1, j), (n - k - 1, 1)).norm_squared();
        }
        reflectors.push((k, v, beta));
    }
    let mut q = DMatrix::<f64>::identity(n, n);
    for (k, v, beta) in reflectors.iter().rev() {
        for j in 0..n {
            let mut col = q.view_mut((*k, j), (n - k, 1));
            let s = beta * v.dot(&col.column(0));
            col.column_mut(0).axpy(-s, v, 1.0);
        }
    }
    (q, a, perm)
}

pub(crate) fn reduce(p: &SdpProblem) -> ReduceOutcome {
    let n = p.nvars;
    let neq = p.equalities.len();

    let (x0, mut basis) = if neq == 0 {
        (DVector::zeros(n), DMatrix::identity(n, n))
    } else {
        // E^T is n x neq
        let mut et = DMatrix::<f64>::zeros(n, neq);
        let mut h = DVector::<f64>::zeros(neq);
        for (r, eq) in p.equalities.iter().enumerate() {
            for &(v, c) in &eq.coeffs {
                et[(v, r)] += c;
            }
            h[r] = eq.rhs;
        }
        let (q, r, perm) = pivoted_qr(et);
        let lead = if neq > 0 && n > 0 { r[(0, 0)].abs() } else { 0.0 };
        let tol = 1e-11 * lead.max(1e-300) * (n.max(neq) as f64);
        let mut rank = 0;
        while rank < n.min(neq) && r[(rank, rank)].abs() > tol {
            rank += 1;
        }
        // forward substitution on R11^T u = (P^T h)[..rank]
        let ph: Vec<f64> = perm.iter().map(|&j| h[j]).collect();
        let mut u = DVector::<f64>::zeros(rank);
        for i in 0..rank {
            let mut s = ph[i];
            for k in 0..i {
                s -= r[(k, i)] * u[k];
            }
            u[i] = s / r[(i, i)];
        }
        let mut worst = 0.0_f64;
        for (i, &phi) in ph.iter().enumerate().skip(rank) {
            let mut s = 0.0;
            for k in 0..rank {
                s += r[(k, i)] * u[k];
            }
            worst = worst.max((s - phi).abs());
        }
        let hscale = 1.0 + h.amax();
        if worst > 1e-9 * hscale {
            return ReduceOutcome::InconsistentEqualities(worst);
        }
        let x0 = q.columns(0, rank) * &u;
        let basis = q.columns(rank, n - rank).into_owned();
        (x0, basis)
    };

    let sizes: Vec<usize> = p.blocks.iter().map(|b| b.size).collect();
    let objective = DVector::from_column_slice(&p.objective);
    let m = basis.ncols();

    // per-block vec(F_i) for the variables touching the block
    let build = |basis: &DMatrix<f64>| -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let m = basis.ncols();
        let mut cs = Vec::with_capacity(p.blocks.len());
        let mut as_ = Vec::with_capacity(p.blocks.len());
        for blk in &p.blocks {
            let nk = blk.size;
            let mut c = blk.constant.clone();
            let mut a = DMatrix::<f64>::zeros(nk * nk, m);
            for (v, f) in &blk.terms {
                let xv = x0[*v];
                if xv != 0.0 {
                    c += f * xv;
                }
                let fv = DVector::from_column_slice(f.as_slice());
                let row = basis.row(*v);
                // A_j = -F'_j
                a.ger(-1.0, &fv, &row.transpose(), 1.0);
            }
            cs.push(c);
            as_.push(a);
        }
        (cs, as_)
    };
    let (mut c, mut a) = build(&basis);

    // drop reduced directions that leave every block unchanged
    if m > 0 {
        let mut gram = DMatrix::<f64>::zeros(m, m);
        for ak in &a {
            gram.gemm_tr(1.0, ak, ak, 1.0);
        }
        let scale = gram.diagonal().amax().max(1e-300);
        let eig = SymmetricEigen::new(gram);
        let keep: Vec<usize> = (0..m)
            .filter(|&i| eig.eigenvalues[i] > 1e-13 * scale)
            .collect();
        if keep.len() < m {
            let b_full = basis.transpose() * &objective;
            let bscale = 1.0 + b_full.amax();
            for i in 0..m {
                if eig.eigenvalues[i] <= 1e-13 * scale {
                    let v = eig.eigenvectors.column(i);
                    let drift = b_full.dot(&v);
                    if drift.abs() > 1e-9 * bscale {
                        let dir = &basis * v * drift.signum();
                        return ReduceOutcome::Unbounded(dir);
                    }
                }
            }
            let mut vk = DMatrix::<f64>::zeros(m, keep.len());
            for (c_out, &i) in keep.iter().enumerate() {
                vk.set_column(c_out, &eig.eigenvectors.column(i));
            }
            basis = &basis * vk;
            let rebuilt = build(&basis);
            c = rebuilt.0;
            a = rebuilt.1;
        }
    }
    let b = basis.transpose() * &objective;
    let obj_offset = objective.dot(&x0);
    ReduceOutcome::Ok(Reduced {
        x0,
        basis,
        c,
        a,
        sizes,
        b,
        obj_offset,
    })
}
