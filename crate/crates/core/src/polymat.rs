//! Univariate polynomials with matrix coefficients, `P(tau) = sum_i P_i tau^i`.
//!
//! Coefficients live in the monomial basis. Symmetric polynomials hold the
//! Lyapunov-type witnesses `R(tau)` and `S(tau)`; rectangular ones hold the
//! controller numerators `U_c(tau)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, Mat};

/// Tolerance on coefficient symmetry for symmetric polynomials.
pub const COEFF_SYM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyMatRepr", into = "PolyMatRepr")]
pub struct PolyMat {
    rows: usize,
    cols: usize,
    symmetric: bool,
    coeffs: Vec<Mat>,
}

#[derive(Serialize, Deserialize)]
struct PolyMatRepr {
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cols: Option<usize>,
    degree: usize,
    #[serde(default = "default_true")]
    symmetric: bool,
    coeffs: Vec<Vec<Vec<f64>>>,
}

fn default_true() -> bool {
    true
}

impl From<PolyMat> for PolyMatRepr {
    fn from(p: PolyMat) -> Self {
        let coeffs = p
            .coeffs
            .iter()
            .map(|c| {
                (0..c.nrows())
                    .map(|i| (0..c.ncols()).map(|j| c[(i, j)]).collect())
                    .collect()
            })
            .collect();
        PolyMatRepr {
            dim: p.rows,
            cols: (!p.symmetric).then_some(p.cols),
            degree: p.degree(),
            symmetric: p.symmetric,
            coeffs,
        }
    }
}

impl TryFrom<PolyMatRepr> for PolyMat {
    type Error = Error;

    fn try_from(r: PolyMatRepr) -> Result<Self> {
        let cols = r.cols.unwrap_or(r.dim);
        if r.coeffs.len() != r.degree + 1 {
            return Err(Error::input(format!(
                "degree {} needs {} coefficients, found {}",
                r.degree,
                r.degree + 1,
                r.coeffs.len()
            )));
        }
        let mut coeffs = Vec::with_capacity(r.coeffs.len());
        for (k, rows) in r.coeffs.iter().enumerate() {
            if rows.len() != r.dim || rows.iter().any(|row| row.len() != cols) {
                return Err(Error::dim(format!("coefficient {k} is not {}x{cols}", r.dim)));
            }
            coeffs.push(Mat::from_fn(r.dim, cols, |i, j| rows[i][j]));
        }
        if r.symmetric {
            PolyMat::symmetric(coeffs)
        } else {
            PolyMat::general(coeffs)
        }
    }
}

impl PolyMat {
    /// Symmetric polynomial; every coefficient must be symmetric.
    pub fn symmetric(coeffs: Vec<Mat>) -> Result<Self> {
        let p = Self::general(coeffs)?;
        if p.rows != p.cols {
            return Err(Error::dim("symmetric polynomial needs square coefficients"));
        }
        for (k, c) in p.coeffs.iter().enumerate() {
            if asymmetry(c) > COEFF_SYM_TOL {
                return Err(Error::input(format!("coefficient {k} is not symmetric")));
            }
        }
        Ok(PolyMat {
            symmetric: true,
            ..p
        })
    }

    /// Polynomial with rectangular (unconstrained) coefficients.
    pub fn general(coeffs: Vec<Mat>) -> Result<Self> {
        let first = coeffs
            .first()
            .ok_or_else(|| Error::input("polynomial needs at least one coefficient"))?;
        let (rows, cols) = first.shape();
        if coeffs.iter().any(|c| c.shape() != (rows, cols)) {
            return Err(Error::dim("coefficients have inconsistent shapes"));
        }
        if coeffs.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
            return Err(Error::input("polynomial coefficients must be finite"));
        }
        Ok(PolyMat {
            rows,
            cols,
            symmetric: false,
            coeffs,
        })
    }

    pub fn constant(c: Mat) -> Result<Self> {
        if c.is_square() && asymmetry(&c) <= COEFF_SYM_TOL {
            Self::symmetric(vec![c])
        } else {
            Self::general(vec![c])
        }
    }

    pub fn zeros(rows: usize, cols: usize, degree: usize) -> Self {
        PolyMat {
            rows,
            cols,
            symmetric: rows == cols,
            coeffs: vec![Mat::zeros(rows, cols); degree + 1],
        }
    }

    pub fn dim(&self) -> usize {
        self.rows
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn coeffs(&self) -> &[Mat] {
        &self.coeffs
    }

    /// Horner evaluation.
    pub fn eval(&self, tau: f64) -> Mat {
        let mut acc = self.coeffs[self.degree()].clone();
        for c in self.coeffs.iter().rev().skip(1) {
            acc *= tau;
            acc += c;
        }
        acc
    }

    pub fn derivative(&self) -> PolyMat {
        if self.degree() == 0 {
            return PolyMat {
                coeffs: vec![Mat::zeros(self.rows, self.cols)],
                ..self.clone()
            };
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| c * i as f64)
            .collect();
        PolyMat {
            coeffs,
            ..self.clone()
        }
    }

    /// `Q(sigma) = P(a sigma + b)`, by binomial re-expansion.
    pub fn reparametrize(&self, a: f64, b: f64) -> PolyMat {
        let d = self.degree();
        let mut out = vec![Mat::zeros(self.rows, self.cols); d + 1];
        for (i, c) in self.coeffs.iter().enumerate() {
            // (a s + b)^i = sum_k C(i,k) a^k b^(i-k) s^k
            let mut binom = 1.0;
            for (k, slot) in out.iter_mut().enumerate().take(i + 1) {
                let w = binom * a.powi(k as i32) * b.powi((i - k) as i32);
                if w != 0.0 {
                    *slot += c * w;
                }
                binom = binom * (i - k) as f64 / (k + 1) as f64;
            }
        }
        PolyMat {
            coeffs: out,
            ..self.clone()
        }
    }

    /// Largest coefficient magnitude.
    pub fn max_coeff(&self) -> f64 {
        self.coeffs
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn eye(n: usize) -> Mat {
        Mat::identity(n, n)
    }

    fn sym2(a: f64, b: f64, c: f64) -> Mat {
        Mat::from_row_slice(2, 2, &[a, b, b, c])
    }

    #[test]
    fn eval_small_cases() {
        let c = sym2(1.0, 2.0, 3.0);
        let p = PolyMat::symmetric(vec![c.clone()]).unwrap();
        assert_eq!(p.eval(17.3), c);

        let p = PolyMat::symmetric(vec![eye(2), eye(2) * 2.0]).unwrap();
        assert_eq!(p.eval(3.0), eye(2) * 7.0);

        let p = PolyMat::symmetric(vec![Mat::zeros(2, 2), Mat::zeros(2, 2), eye(2)]).unwrap();
        assert_eq!(p.eval(0.5), eye(2) * 0.25);
    }

    #[test]
    fn derivative_small_cases() {
        let p = PolyMat::symmetric(vec![sym2(1.0, 0.0, 1.0)]).unwrap();
        let d = p.derivative();
        assert_eq!(d.degree(), 0);
        assert_eq!(d.eval(1.0), Mat::zeros(2, 2));

        let (a0, a1, a2) = (sym2(1.0, 2.0, 3.0), sym2(4.0, 5.0, 6.0), sym2(7.0, 8.0, 9.0));
        let d = PolyMat::symmetric(vec![a0, a1.clone(), a2.clone()])
            .unwrap()
            .derivative();
        assert_eq!(d.coeffs(), &[a1, a2 * 2.0]);

        let p = PolyMat::symmetric(vec![Mat::zeros(2, 2), Mat::zeros(2, 2), eye(2)]).unwrap();
        assert_eq!(p.derivative().derivative().coeffs(), &[eye(2) * 2.0]);
    }

    #[test]
    fn reparametrize_small_cases() {
        let p = PolyMat::symmetric(vec![sym2(1.0, 2.0, 3.0), sym2(-1.0, 0.5, 2.0)]).unwrap();
        assert_eq!(p.reparametrize(1.0, 0.0), p);

        let tbar = 0.7;
        let p = PolyMat::symmetric(vec![Mat::zeros(2, 2), eye(2)]).unwrap();
        let q = p.reparametrize(-1.0, tbar);
        assert_eq!(q.coeffs(), &[eye(2) * tbar, -eye(2)]);
    }

    #[test]
    fn serde_shape() {
        let p = PolyMat::symmetric(vec![sym2(1.0, 2.0, 3.0), eye(2)]).unwrap();
        let v = serde_json::to_value(&p).unwrap();
        assert_eq!(v["dim"], 2);
        assert_eq!(v["degree"], 1);
        assert_eq!(v["coeffs"][0][0][1], 2.0);
        let back: PolyMat = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);

        let u = PolyMat::general(vec![Mat::from_row_slice(1, 2, &[1.0, -2.0])]).unwrap();
        let back: PolyMat = serde_json::from_str(&serde_json::to_string(&u).unwrap()).unwrap();
        assert_eq!(back, u);
    }

    #[test]
    fn rejects_asymmetric_coefficients() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        assert!(PolyMat::symmetric(vec![m]).is_err());
    }

    fn poly_strategy() -> impl Strategy<Value = PolyMat> {
        (0usize..6, proptest::collection::vec(-3.0f64..3.0, 3 * 6)).prop_map(|(d, v)| {
            let coeffs = (0..=d)
                .map(|i| sym2(v[3 * i], v[3 * i + 1], v[3 * i + 2]))
                .collect();
            PolyMat::symmetric(coeffs).unwrap()
        })
    }

    proptest! {
        #[test]
        fn derivative_matches_central_difference(p in poly_strategy(), tau in -1.5f64..1.5) {
            let h = 1e-5;
            let fd = (p.eval(tau + h) - p.eval(tau - h)) / (2.0 * h);
            let d = p.derivative().eval(tau);
            prop_assert!((fd - d).amax() < 1e-6 * (1.0 + p.max_coeff()));
        }

        #[test]
        fn time_reversal_is_an_involution(p in poly_strategy(), tbar in 0.1f64..2.0) {
            let twice = p.reparametrize(-1.0, tbar).reparametrize(-1.0, tbar);
            for (a, b) in twice.coeffs().iter().zip(p.coeffs()) {
                prop_assert!((a - b).amax() <= 1e-9 * (1.0 + p.max_coeff()));
            }
        }

        #[test]
        fn reparametrize_evaluates_substitution(p in poly_strategy(), a in -2.0f64..2.0, b in -1.0f64..1.0, s in -1.0f64..1.0) {
            let q = p.reparametrize(a, b);
            assert_relative_eq!(q.eval(s), p.eval(a * s + b), epsilon = 1e-9 * (1.0 + p.max_coeff()) * 50.0);
        }
    }
}
