//! Dense real linear algebra used by every other module.
//!
//! Matrices are `nalgebra::DMatrix<f64>`. The functions here add the input
//! validation and failure reporting that the certificate pipeline relies on.

use nalgebra::{DMatrix, Schur};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Relative symmetry tolerance accepted by [`min_eig_sym`].
pub const SYM_TOL: f64 = 1e-10;

pub(crate) fn check_finite(m: &Mat, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::input(format!("{what} has non-finite entries")))
    }
}

pub(crate) fn check_square(m: &Mat, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::dim(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Largest absolute entry.
pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// `e^{M t}` by scaling and squaring with a degree-13 Pade approximant.
pub fn expm(m: &Mat, t: f64) -> Result<Mat> {
    check_square(m, "expm argument")?;
    check_finite(m, "expm argument")?;
    if !t.is_finite() {
        return Err(Error::input("expm time is not finite"));
    }
    if m.nrows() == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let scaled = m * t;
    let out = scaled.exp();
    check_finite(&out, "expm result").map_err(|_| Error::Numerical("expm overflow".into()))?;
    Ok(out)
}

/// Largest eigenvalue modulus, from a real Schur decomposition.
pub fn spectral_radius(m: &Mat) -> Result<f64> {
    check_square(m, "spectral_radius argument")?;
    check_finite(m, "spectral_radius argument")?;
    let n = m.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 100 * n.max(2))
        .ok_or_else(|| Error::Numerical("QR iteration did not converge".into()))?;
    let eigs = schur.complex_eigenvalues();
    Ok(eigs.iter().fold(0.0_f64, |acc, z| acc.max(z.norm())))
}

/// Symmetry defect `max |M - M^T|` relative to `max |M|`.
pub fn asymmetry(m: &Mat) -> f64 {
    let scale = max_abs(m).max(1.0);
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eig_sym(m: &Mat) -> Result<f64> {
    check_square(m, "min_eig_sym argument")?;
    check_finite(m, "min_eig_sym argument")?;
    if m.nrows() == 0 {
        return Ok(f64::INFINITY);
    }
    if asymmetry(m) > SYM_TOL {
        return Err(Error::input(format!(
            "matrix is not symmetric (relative defect {:.3e})",
            asymmetry(m)
        )));
    }
    let sym = symmetrize(m);
    let eigs = sym.symmetric_eigenvalues();
    Ok(eigs.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// `(M + M^T) / 2`.
pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// `M + M^T`.
pub fn he(m: &Mat) -> Mat {
    m + m.transpose()
}

/// State-transition matrix of `dPhi/dtau = (A + Bc K(tau)) Phi`, `Phi(0) = I`,
/// integrated with classical fixed-step RK4.
pub fn transition_matrix<F>(a: &Mat, bc: &Mat, gain: F, t_end: f64, steps: usize) -> Result<Mat>
where
    F: Fn(f64) -> Result<Mat>,
{
    check_square(a, "A")?;
    if bc.nrows() != a.nrows() {
        return Err(Error::dim("Bc must have as many rows as A"));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::input("t_end must be positive and finite"));
    }
    if steps == 0 {
        return Err(Error::input("steps must be at least 1"));
    }
    let n = a.nrows();
    let closed = |tau: f64| -> Result<Mat> {
        if bc.ncols() == 0 {
            return Ok(a.clone());
        }
        let k = gain(tau)?;
        if k.nrows() != bc.ncols() || k.ncols() != n {
            return Err(Error::dim("gain has wrong shape"));
        }
        check_finite(&k, "gain value")?;
        Ok(a + bc * k)
    };
    let h = t_end / steps as f64;
    let mut phi = Mat::identity(n, n);
    for s in 0..steps {
        let t0 = s as f64 * h;
        let m0 = closed(t0)?;
        let mh = closed(t0 + 0.5 * h)?;
        let m1 = closed(t0 + h)?;
        let k1 = &m0 * &phi;
        let k2 = &mh * (&phi + &k1 * (0.5 * h));
        let k3 = &mh * (&phi + &k2 * (0.5 * h));
        let k4 = &m1 * (&phi + &k3 * h);
        phi += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    check_finite(&phi, "transition matrix")
        .map_err(|_| Error::Numerical("transition matrix overflow".into()))?;
    Ok(phi)
}

/// Row-major nested-array JSON form for matrices.
pub mod mat_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::Mat;

    pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat, String> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err("ragged matrix rows".into());
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err("matrix entries must be finite".into());
        }
        Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(ms: &[Mat], s: S) -> Result<S::Ok, S::Error> {
            ms.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Mat>, D::Error> {
            let all = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
            all.iter()
                .map(|rows| from_rows(rows).map_err(serde::de::Error::custom))
                .collect()
        }
    }

    pub mod opt {
        use super::*;

        pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> Result<S::Ok, S::Error> {
            m.as_ref().map(to_rows).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Mat>, D::Error> {
            let rows = Option::<Vec<Vec<f64>>>::deserialize(d)?;
            rows.map(|r| from_rows(&r).map_err(serde::de::Error::custom))
                .transpose()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mat(r: usize, c: usize, v: &[f64]) -> Mat {
        Mat::from_row_slice(r, c, v)
    }

    #[test]
    fn expm_zero_is_identity() {
        let e = expm(&Mat::zeros(2, 2), 1.0).unwrap();
        assert_relative_eq!(e, Mat::identity(2, 2), epsilon = 1e-15);
    }

    #[test]
    fn expm_diagonal() {
        let e = expm(&mat(2, 2, &[-1.0, 0.0, 0.0, 1.2]), 0.5).unwrap();
        assert_relative_eq!(e[(0, 0)], (-0.5f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(e[(1, 1)], 0.6f64.exp(), max_relative = 1e-13);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn expm_nilpotent() {
        let e = expm(&mat(2, 2, &[0.0, 1.0, 0.0, 0.0]), 1.0).unwrap();
        assert_relative_eq!(e, mat(2, 2, &[1.0, 1.0, 0.0, 1.0]), epsilon = 1e-14);
    }

    #[test]
    fn expm_rejects_bad_input() {
        assert!(matches!(expm(&Mat::zeros(2, 3), 1.0), Err(Error::Dimension(_))));
        let bad = mat(1, 1, &[f64::NAN]);
        assert!(matches!(expm(&bad, 1.0), Err(Error::Input(_))));
    }

    #[test]
    fn spectral_radius_small_cases() {
        let d = mat(2, 2, &[0.5, 0.0, 0.0, -0.25]);
        assert_relative_eq!(spectral_radius(&d).unwrap(), 0.5, epsilon = 1e-12);
        let rot = mat(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert_relative_eq!(spectral_radius(&rot).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn spectral_radius_at_stability_boundary() {
        let a = mat(2, 2, &[-1.0, 0.1, 0.0, 1.2]);
        let j = mat(2, 2, &[1.2, 0.0, 0.0, 0.5]);
        let psi = expm(&a, 0.5776).unwrap() * j;
        assert!((spectral_radius(&psi).unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn min_eig_small_cases() {
        assert_relative_eq!(min_eig_sym(&Mat::identity(3, 3)).unwrap(), 1.0, epsilon = 1e-14);
        let d = mat(2, 2, &[3.0, 0.0, 0.0, -2.0]);
        assert_relative_eq!(min_eig_sym(&d).unwrap(), -2.0, epsilon = 1e-14);
        let s = mat(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert_relative_eq!(min_eig_sym(&s).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn min_eig_rejects_asymmetric() {
        let m = mat(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(min_eig_sym(&m), Err(Error::Input(_))));
    }

    #[test]
    fn transition_without_gain_is_expm() {
        let a = mat(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let bc = Mat::zeros(2, 1);
        let phi = transition_matrix(&a, &bc, |_| Ok(Mat::zeros(1, 2)), 1.0, 1000).unwrap();
        assert_relative_eq!(phi[(0, 0)], (-1.0f64).exp(), epsilon = 1e-9);
        assert_relative_eq!(phi[(1, 1)], (-2.0f64).exp(), epsilon = 1e-9);
    }

    #[test]
    fn transition_with_constant_gain() {
        let a = Mat::zeros(2, 2);
        let bc = mat(2, 1, &[1.0, 0.0]);
        let k = mat(1, 2, &[-1.0, 0.5]);
        let phi = transition_matrix(&a, &bc, |_| Ok(k.clone()), 0.8, 200).unwrap();
        let expected = expm(&(&bc * &k), 0.8).unwrap();
        assert_relative_eq!(phi, expected, epsilon = 1e-10);
    }

    #[test]
    fn transition_rejects_non_finite_gain() {
        let a = Mat::zeros(1, 1);
        let bc = mat(1, 1, &[1.0]);
        let r = transition_matrix(&a, &bc, |_| Ok(mat(1, 1, &[f64::INFINITY])), 1.0, 4);
        assert!(matches!(r, Err(Error::Input(_))));
    }
}
