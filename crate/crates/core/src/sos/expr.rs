//! Matrix expressions affine in the decision variables and polynomial in one
//! scalar parameter.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// `constant + sum_v x_v F_v`, rectangular in general.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMat {
    rows: usize,
    cols: usize,
    constant: Mat,
    terms: BTreeMap<usize, Mat>,
}

impl AffineMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        AffineMat {
            rows,
            cols,
            constant: Mat::zeros(rows, cols),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(m: Mat) -> Self {
        AffineMat {
            rows: m.nrows(),
            cols: m.ncols(),
            constant: m,
            terms: BTreeMap::new(),
        }
    }

    /// `x_var * f`.
    pub fn var(var: usize, f: Mat) -> Self {
        let mut a = AffineMat::zeros(f.nrows(), f.ncols());
        a.terms.insert(var, f);
        a
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn constant_part(&self) -> &Mat {
        &self.constant
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, &Mat)> {
        self.terms.iter().map(|(v, m)| (*v, m))
    }

    pub fn is_zero(&self) -> bool {
        self.constant.iter().all(|v| *v == 0.0) && self.terms.is_empty()
    }

    fn map(&self, f: impl Fn(&Mat) -> Mat) -> AffineMat {
        let constant = f(&self.constant);
        let (rows, cols) = constant.shape();
        let mut terms = BTreeMap::new();
        for (v, m) in &self.terms {
            let t = f(m);
            if t.iter().any(|e| *e != 0.0) {
                terms.insert(*v, t);
            }
        }
        AffineMat {
            rows,
            cols,
            constant,
            terms,
        }
    }

    pub fn add(&self, other: &AffineMat) -> AffineMat {
        assert_eq!(self.shape(), other.shape(), "affine add shape");
        let mut out = self.clone();
        out.constant += &other.constant;
        for (v, m) in &other.terms {
            match out.terms.get_mut(v) {
                Some(t) => *t += m,
                None => {
                    out.terms.insert(*v, m.clone());
                }
            }
        }
        out.terms.retain(|_, m| m.iter().any(|e| *e != 0.0));
        out
    }

    pub fn sub(&self, other: &AffineMat) -> AffineMat {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, a: f64) -> AffineMat {
        self.map(|m| m * a)
    }

    /// `L * self`.
    pub fn lmul(&self, l: &Mat) -> AffineMat {
        self.map(|m| l * m)
    }

    /// `self * r`.
    pub fn rmul(&self, r: &Mat) -> AffineMat {
        self.map(|m| m * r)
    }

    pub fn transpose(&self) -> AffineMat {
        self.map(|m| m.transpose())
    }

    /// `self + self^T`.
    pub fn he(&self) -> AffineMat {
        self.add(&self.transpose())
    }

    pub fn eval(&self, x: &[f64]) -> Mat {
        let mut out = self.constant.clone();
        for (v, m) in &self.terms {
            out += m * x[*v];
        }
        out
    }

    /// Assembles a block matrix; every row of blocks shares a height and every
    /// column a width.
    pub fn block(rows: &[Vec<AffineMat>]) -> Result<AffineMat> {
        let heights: Vec<usize> = rows.iter().map(|r| r[0].rows).collect();
        let widths: Vec<usize> = rows[0].iter().map(|b| b.cols).collect();
        let (h, w) = (heights.iter().sum(), widths.iter().sum());
        let mut out = AffineMat::zeros(h, w);
        let mut r0 = 0;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != widths.len() {
                return Err(Error::dim("ragged block matrix"));
            }
            let mut c0 = 0;
            for (j, b) in row.iter().enumerate() {
                if b.shape() != (heights[i], widths[j]) {
                    return Err(Error::dim(format!("block ({i},{j}) has shape {:?}", b.shape())));
                }
                let place = |m: &Mat| {
                    let mut z = Mat::zeros(h, w);
                    z.view_mut((r0, c0), (heights[i], widths[j])).copy_from(m);
                    z
                };
                out = out.add(&b.map(place));
                c0 += widths[j];
            }
            r0 += heights[i];
        }
        Ok(out)
    }
}

/// `sum_k s^k C_k` with affine matrix coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyExpr {
    rows: usize,
    cols: usize,
    coeffs: Vec<AffineMat>,
}

impl PolyExpr {
    pub fn new(coeffs: Vec<AffineMat>) -> Result<Self> {
        let first = coeffs
            .first()
            .ok_or_else(|| Error::input("expression needs a coefficient"))?;
        let (rows, cols) = first.shape();
        if coeffs.iter().any(|c| c.shape() != (rows, cols)) {
            return Err(Error::dim("expression coefficients differ in shape"));
        }
        Ok(PolyExpr { rows, cols, coeffs }.trimmed())
    }

    pub fn constant(a: AffineMat) -> Self {
        let (rows, cols) = a.shape();
        PolyExpr {
            rows,
            cols,
            coeffs: vec![a],
        }
    }

    pub fn from_mat(m: Mat) -> Self {
        Self::constant(AffineMat::constant(m))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(AffineMat::zeros(rows, cols))
    }

    fn trimmed(mut self) -> Self {
        while self.coeffs.len() > 1 && self.coeffs.last().is_some_and(|c| c.is_zero()) {
            self.coeffs.pop();
        }
        self
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Degree after dropping identically zero leading coefficients.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[AffineMat] {
        &self.coeffs
    }

    fn zip(&self, other: &PolyExpr, f: impl Fn(&AffineMat, &AffineMat) -> AffineMat) -> PolyExpr {
        let n = self.coeffs.len().max(other.coeffs.len());
        let za = AffineMat::zeros(self.rows, self.cols);
        let zb = AffineMat::zeros(other.rows, other.cols);
        let coeffs = (0..n)
            .map(|k| f(self.coeffs.get(k).unwrap_or(&za), other.coeffs.get(k).unwrap_or(&zb)))
            .collect::<Vec<_>>();
        let (rows, cols) = coeffs[0].shape();
        PolyExpr { rows, cols, coeffs }.trimmed()
    }

    fn each(&self, f: impl Fn(&AffineMat) -> AffineMat) -> PolyExpr {
        let coeffs: Vec<AffineMat> = self.coeffs.iter().map(f).collect();
        let (rows, cols) = coeffs[0].shape();
        PolyExpr { rows, cols, coeffs }.trimmed()
    }

    pub fn add(&self, other: &PolyExpr) -> PolyExpr {
        self.zip(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &PolyExpr) -> PolyExpr {
        self.zip(other, |a, b| a.sub(b))
    }

    pub fn scale(&self, a: f64) -> PolyExpr {
        self.each(|c| c.scale(a))
    }

    pub fn lmul(&self, l: &Mat) -> PolyExpr {
        self.each(|c| c.lmul(l))
    }

    pub fn rmul(&self, r: &Mat) -> PolyExpr {
        self.each(|c| c.rmul(r))
    }

    pub fn transpose(&self) -> PolyExpr {
        self.each(|c| c.transpose())
    }

    pub fn he(&self) -> PolyExpr {
        self.each(|c| c.he())
    }

    pub fn neg(&self) -> PolyExpr {
        self.scale(-1.0)
    }

    /// Multiplies by the scalar polynomial `sum_k p[k] s^k`.
    pub fn mul_scalar_poly(&self, p: &[f64]) -> PolyExpr {
        let n = self.coeffs.len() + p.len().max(1) - 1;
        let mut coeffs = vec![AffineMat::zeros(self.rows, self.cols); n];
        for (i, c) in self.coeffs.iter().enumerate() {
            for (j, &a) in p.iter().enumerate() {
                if a != 0.0 {
                    coeffs[i + j] = coeffs[i + j].add(&c.scale(a));
                }
            }
        }
        PolyExpr {
            rows: self.rows,
            cols: self.cols,
            coeffs,
        }
        .trimmed()
    }

    /// `d/ds`.
    pub fn derivative(&self) -> PolyExpr {
        if self.coeffs.len() == 1 {
            return PolyExpr::zeros(self.rows, self.cols);
        }
        let coeffs = self.coeffs[1..]
            .iter()
            .enumerate()
            .map(|(i, c)| c.scale((i + 1) as f64))
            .collect();
        PolyExpr {
            rows: self.rows,
            cols: self.cols,
            coeffs,
        }
        .trimmed()
    }

    /// `q(s) = p(alpha + beta s)`.
    pub fn compose_affine(&self, alpha: f64, beta: f64) -> PolyExpr {
        let d = self.coeffs.len();
        let mut out = vec![AffineMat::zeros(self.rows, self.cols); d];
        for (i, c) in self.coeffs.iter().enumerate() {
            let mut binom = 1.0;
            for (k, slot) in out.iter_mut().enumerate().take(i + 1) {
                let w = binom * beta.powi(k as i32) * alpha.powi((i - k) as i32);
                if w != 0.0 {
                    *slot = slot.add(&c.scale(w));
                }
                binom = binom * (i - k) as f64 / (k + 1) as f64;
            }
        }
        PolyExpr {
            rows: self.rows,
            cols: self.cols,
            coeffs: out,
        }
        .trimmed()
    }

    /// Coefficient-wise value at parameter `s`, still affine in the variables.
    pub fn eval_at(&self, s: f64) -> AffineMat {
        let mut acc = self.coeffs[self.coeffs.len() - 1].clone();
        for c in self.coeffs.iter().rev().skip(1) {
            acc = acc.scale(s).add(c);
        }
        acc
    }

    pub fn eval(&self, x: &[f64], s: f64) -> Mat {
        let mut acc = self.coeffs[self.coeffs.len() - 1].eval(x);
        for c in self.coeffs.iter().rev().skip(1) {
            acc = acc * s + c.eval(x);
        }
        acc
    }

    pub fn block(rows: &[Vec<PolyExpr>]) -> Result<PolyExpr> {
        let deg = rows.iter().flatten().map(|p| p.coeffs.len()).max().unwrap_or(1);
        let mut coeffs = Vec::with_capacity(deg);
        for k in 0..deg {
            let grid: Vec<Vec<AffineMat>> = rows
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|p| {
                            p.coeffs
                                .get(k)
                                .cloned()
                                .unwrap_or_else(|| AffineMat::zeros(p.rows, p.cols))
                        })
                        .collect()
                })
                .collect();
            coeffs.push(AffineMat::block(&grid)?);
        }
        PolyExpr::new(coeffs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compose_matches_pointwise() {
        let a = AffineMat::var(0, Mat::identity(2, 2));
        let b = AffineMat::constant(Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, -1.0]));
        let p = PolyExpr::new(vec![b.clone(), a.clone(), b.scale(0.5)]).unwrap();
        let q = p.compose_affine(0.3, -1.7);
        let x = [2.5];
        for s in [0.0, 0.4, 1.0] {
            let lhs = q.eval(&x, s);
            let rhs = p.eval(&x, 0.3 - 1.7 * s);
            assert!((lhs - rhs).amax() < 1e-12);
        }
    }

    #[test]
    fn block_places_entries() {
        let a = AffineMat::var(3, Mat::from_row_slice(1, 1, &[2.0]));
        let z = AffineMat::zeros(1, 2);
        let c = AffineMat::constant(Mat::identity(2, 2));
        let blk = AffineMat::block(&[vec![a, z.clone()], vec![z.transpose(), c]]).unwrap();
        let m = blk.eval(&[0.0, 0.0, 0.0, 1.5]);
        assert_eq!(m, Mat::from_row_slice(3, 3, &[3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn scalar_multiplier_shifts_degrees() {
        let p = PolyExpr::from_mat(Mat::identity(1, 1));
        let q = p.mul_scalar_poly(&[0.0, 1.0, -1.0]);
        assert_eq!(q.degree(), 2);
        assert!((q.eval(&[], 0.5)[(0, 0)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_leading_terms_are_trimmed() {
        let p = PolyExpr::new(vec![AffineMat::var(0, Mat::identity(1, 1)), AffineMat::zeros(1, 1)]).unwrap();
        assert_eq!(p.degree(), 0);
    }
}
