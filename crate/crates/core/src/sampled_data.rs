//! Sampled-data loops `x' = A x + B u`, `u(t) = K1 x(t_k) + K2 u(t_k^-)` on
//! `[t_k, t_{k+1})`, rewritten as impulsive systems on the state `(x, u)`.

use serde::{Deserialize, Serialize};

use crate::analysis::{
    periodic_radius, ranged_certificate, search_range, AnalysisOptions, Certificate, ImpulsiveSystem, RangeResult,
    SdpStats, SearchOptions, TRACE_CAP_PER_STATE,
};
use crate::error::{Error, Result};
use crate::linalg::{check_finite, mat_serde, spectral_radius, Mat};
use crate::polymat::PolyMat;
use crate::sos::{Encoder, PieceView, PolyExpr, Program, Witness};

/// Points of the closed-loop spectral-radius check on `[T_min, T_max]`.
pub const VERIFY_POINTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampledDataSystem {
    #[serde(alias = "A", with = "mat_serde")]
    pub a: Mat,
    #[serde(alias = "B", with = "mat_serde")]
    pub b: Mat,
    #[serde(alias = "K1", default, with = "mat_serde::opt", skip_serializing_if = "Option::is_none")]
    pub k1: Option<Mat>,
    #[serde(alias = "K2", default, with = "mat_serde::opt", skip_serializing_if = "Option::is_none")]
    pub k2: Option<Mat>,
}

impl SampledDataSystem {
    pub fn new(a: Mat, b: Mat) -> Result<Self> {
        let s = SampledDataSystem { a, b, k1: None, k2: None };
        s.validate()?;
        Ok(s)
    }

    /// Fixes the gains; a missing `K2` means `K2 = 0`.
    pub fn with_gains(mut self, k1: Mat, k2: Option<Mat>) -> Result<Self> {
        let m = self.m();
        self.k2 = Some(k2.unwrap_or_else(|| Mat::zeros(m, m)));
        self.k1 = Some(k1);
        self.validate()?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n(), self.m());
        if self.a.ncols() != n || self.b.nrows() != n || n == 0 || m == 0 {
            return Err(Error::dim(format!(
                "A is {}x{}, B is {}x{}",
                self.a.nrows(),
                self.a.ncols(),
                self.b.nrows(),
                self.b.ncols()
            )));
        }
        check_finite(&self.a, "A")?;
        check_finite(&self.b, "B")?;
        if let Some(k1) = &self.k1 {
            if k1.shape() != (m, n) {
                return Err(Error::dim(format!("K1 must be {m}x{n}")));
            }
            check_finite(k1, "K1")?;
        }
        if let Some(k2) = &self.k2 {
            if k2.shape() != (m, m) {
                return Err(Error::dim(format!("K2 must be {m}x{m}")));
            }
            check_finite(k2, "K2")?;
        }
        if self.k2.is_some() && self.k1.is_none() {
            return Err(Error::input("K2 given without K1"));
        }
        Ok(())
    }
}

/// Vertices `A_i` sharing one input matrix `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolytopicSampledData {
    #[serde(alias = "A", with = "mat_serde::vec")]
    pub a: Vec<Mat>,
    #[serde(alias = "B", with = "mat_serde")]
    pub b: Mat,
}

impl PolytopicSampledData {
    pub fn new(a: Vec<Mat>, b: Mat) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::input("polytope needs at least one vertex"));
        }
        for ai in &a {
            SampledDataSystem::new(ai.clone(), b.clone())?;
        }
        Ok(PolytopicSampledData { a, b })
    }

    pub fn vertex(&self, i: usize) -> SampledDataSystem {
        SampledDataSystem {
            a: self.a[i].clone(),
            b: self.b.clone(),
            k1: None,
            k2: None,
        }
    }
}

/// `A_bar = [[A, B], [0, 0]]`, `J0 = diag(I, 0)` and `B0 = [0; I]`, so that
/// `J_bar = J0 + B0 [K1, K2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lifted {
    pub a: Mat,
    pub j0: Mat,
    pub b0: Mat,
}

pub fn lift_parts(sd: &SampledDataSystem) -> Lifted {
    let (n, m) = (sd.n(), sd.m());
    let mut a = Mat::zeros(n + m, n + m);
    a.view_mut((0, 0), (n, n)).copy_from(&sd.a);
    a.view_mut((0, n), (n, m)).copy_from(&sd.b);
    let mut j0 = Mat::zeros(n + m, n + m);
    j0.view_mut((0, 0), (n, n)).fill_with_identity();
    let mut b0 = Mat::zeros(n + m, m);
    b0.view_mut((n, 0), (m, m)).fill_with_identity();
    Lifted { a, j0, b0 }
}

/// `[K1, K2]`.
pub fn stack_gain(k1: &Mat, k2: &Mat) -> Mat {
    let (m, n) = k1.shape();
    let mut k = Mat::zeros(m, n + m);
    k.view_mut((0, 0), (m, n)).copy_from(k1);
    k.view_mut((0, n), (m, m)).copy_from(k2);
    k
}

/// The impulsive system of a sampled-data loop with fixed gains.
pub fn lift(sd: &SampledDataSystem) -> Result<ImpulsiveSystem> {
    sd.validate()?;
    let k1 = sd.k1.as_ref().ok_or_else(|| Error::input("lifting with fixed gains needs K1"))?;
    let k2 = sd.k2.clone().unwrap_or_else(|| Mat::zeros(sd.m(), sd.m()));
    let p = lift_parts(sd);
    let j = &p.j0 + &p.b0 * stack_gain(k1, &k2);
    ImpulsiveSystem::new(p.a, j)
}

/// Ranged-dwell certificate of the lifted loop on `[t_min, t_max]`.
pub fn analyze_fixed(sd: &SampledDataSystem, t_min: f64, t_max: f64, encoder: Encoder, opts: &AnalysisOptions) -> Result<Certificate> {
    ranged_certificate(&lift(sd)?, t_min, t_max, encoder, opts)
}

/// Largest certified sampling range around `seed`; see `analysis::search_range`.
pub fn search_fixed(
    sd: &SampledDataSystem,
    encoder: Encoder,
    seed: f64,
    search: &SearchOptions,
    opts: &AnalysisOptions,
) -> Result<RangeResult> {
    search_range(&lift(sd)?, encoder, seed, search, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSynthesis {
    pub feasible: bool,
    pub margin: f64,
    #[serde(with = "mat_serde")]
    pub k1: Mat,
    #[serde(with = "mat_serde")]
    pub k2: Mat,
    #[serde(rename = "S")]
    pub s: PolyMat,
    #[serde(rename = "Y", with = "mat_serde")]
    pub y: Mat,
    pub t_min: f64,
    pub t_max: f64,
    pub k2_zero: bool,
    /// Worst `rho(e^{A_bar theta}(J0 + B0 K))` over the vertices and the
    /// verification grid; `None` when infeasible.
    pub closed_loop_radius: Option<f64>,
    pub warnings: Vec<String>,
    pub stats: SdpStats,
}

impl SampledSynthesis {
    pub fn verified(&self) -> bool {
        self.feasible && self.closed_loop_radius.is_some_and(|r| r < 1.0)
    }
}

pub fn synthesize(sd: &SampledDataSystem, t_min: f64, t_max: f64, degree: usize, k2_zero: bool, opts: &AnalysisOptions) -> Result<SampledSynthesis> {
    let p = PolytopicSampledData::new(vec![sd.a.clone()], sd.b.clone())?;
    synthesize_robust(&p, t_min, t_max, degree, k2_zero, opts)
}

/// Common `(S, Y)` for all vertices: `A_bar_i S + S A_bar_i^T + S' <= 0` on
/// `[0, T_max]`, `[[S(theta) - I, J0 S(0) + B0 Y], [*, S(0)]] >= 0` on
/// `theta in [T_min, T_max]`, `S(0) > 0`; `K = Y S(0)^{-1}`.
pub fn synthesize_robust(
    psd: &PolytopicSampledData,
    t_min: f64,
    t_max: f64,
    degree: usize,
    k2_zero: bool,
    opts: &AnalysisOptions,
) -> Result<SampledSynthesis> {
    if !(t_min > 0.0 && t_min <= t_max && t_max.is_finite()) {
        return Err(Error::input("need 0 < T_min <= T_max"));
    }
    let start = std::time::Instant::now();
    let (n, m) = (psd.a[0].nrows(), psd.b.ncols());
    let lifted: Vec<Lifted> = (0..psd.a.len()).map(|i| lift_parts(&psd.vertex(i))).collect();
    let nm = n + m;
    let encoder = Encoder::sos(degree);
    let mut prog = Program::new(encoder, t_max)?;
    let s = prog.unknown(nm, nm, true);
    let y = prog.constant(m, nm, false);
    let eye = Mat::identity(nm, nm);

    for (i, l) in lifted.iter().enumerate() {
        prog.require(&format!("flow[{i}]"), 0.0, t_max, |pv: &PieceView| {
            Ok(pv.value(&s).lmul(&l.a).he().add(&pv.deriv(&s)).neg())
        })?;
    }
    // J0 and B0 do not depend on the vertex
    let l = &lifted[0];
    let s0 = s.at(0.0);
    let off = s0.lmul(&l.j0).add(&y.lmul(&l.b0));
    prog.require("jump", t_min, t_max, |pv: &PieceView| {
        let top = pv.value(&s).sub(&PolyExpr::from_mat(eye.clone()));
        let neg_off = PolyExpr::constant(off.scale(-1.0));
        PolyExpr::block(&[
            vec![top, neg_off.clone()],
            vec![neg_off.transpose(), PolyExpr::constant(s0.clone())],
        ])
    })?;
    prog.require_at("positivity", &s0);
    prog.bound_trace(&s0, TRACE_CAP_PER_STATE * nm as f64);
    if k2_zero {
        let s_block: Vec<(usize, usize)> = (0..n).flat_map(|r| (n..nm).map(move |c| (r, c))).collect();
        prog.fix_zero(&s0, &s_block);
        let y_block: Vec<(usize, usize)> = (0..m).flat_map(|r| (n..nm).map(move |c| (r, c))).collect();
        prog.fix_zero(&y, &y_block);
    }

    let solved = prog.solve_escalating(&opts.sdp, opts.margin_threshold, opts.start_trace_scale, opts.max_trace_scale)?;
    let s_poly = match s.extract(&solved.x)? {
        Witness::Poly { poly } => poly,
        Witness::Pwl { .. } => unreachable!("synthesis uses polynomial unknowns"),
    };
    let y_val = y.eval(&solved.x);
    let s0_val = crate::linalg::symmetrize(&s_poly.eval(0.0));
    let (k1, k2) = if k2_zero {
        // S(0) is block diagonal and Y = [Y1, 0], so K = [Y1 S11^{-1}, 0]
        let s11 = s0_val.view((0, 0), (n, n)).into_owned();
        let inv = s11.try_inverse().ok_or_else(|| Error::Extraction {
            tau: 0.0,
            reason: "S(0) is singular".into(),
        })?;
        (y_val.view((0, 0), (m, n)) * inv, Mat::zeros(m, m))
    } else {
        let inv = s0_val.clone().try_inverse().ok_or_else(|| Error::Extraction {
            tau: 0.0,
            reason: "S(0) is singular".into(),
        })?;
        let k = &y_val * inv;
        (k.view((0, 0), (m, n)).into_owned(), k.view((0, n), (m, m)).into_owned())
    };
    let stats = SdpStats {
        witness_params: prog.witness_params(),
        sdp_vars: solved.sdp_vars,
        blocks: solved.sdp_blocks,
        equalities: solved.sdp_equalities,
        iterations: solved.iterations,
        trace_scale: solved.trace_scale,
        seconds: start.elapsed().as_secs_f64(),
    };
    let feasible = solved.t_star >= opts.margin_threshold;
    let mut warnings = Vec::new();
    let mut closed_loop_radius = None;
    if feasible {
        check_finite(&k1, "K1")?;
        check_finite(&k2, "K2")?;
        let k = stack_gain(&k1, &k2);
        let mut worst = 0.0_f64;
        for l in &lifted {
            worst = worst.max(grid_radius(&l.a, &(&l.j0 + &l.b0 * &k), t_min, t_max, VERIFY_POINTS)?);
        }
        closed_loop_radius = Some(worst);
        if !k2_zero {
            let r = spectral_radius(&k2)?;
            if r >= 1.0 {
                warnings.push(format!("K2 is not Schur (spectral radius {r:.4}); the held input is not BIBO stable"));
            }
        }
    }
    if k2_zero {
        warnings.push("K2 = 0 imposed by zeroing the coupling block of S(0) and the last columns of Y".into());
    }
    Ok(SampledSynthesis {
        feasible,
        margin: solved.t_star,
        k1,
        k2,
        s: s_poly,
        y: y_val,
        t_min,
        t_max,
        k2_zero,
        closed_loop_radius,
        warnings,
        stats,
    })
}

/// `max rho(e^{A theta} J)` over `points` equally spaced `theta` in `[lo, hi]`.
pub fn grid_radius(a: &Mat, j: &Mat, lo: f64, hi: f64, points: usize) -> Result<f64> {
    if points < 2 || hi < lo {
        return Err(Error::input("grid needs at least 2 points on a valid interval"));
    }
    let mut worst = 0.0_f64;
    for k in 0..points {
        let th = lo + (hi - lo) * k as f64 / (points - 1) as f64;
        worst = worst.max(periodic_radius(a, j, th)?);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn system_40() -> SampledDataSystem {
        SampledDataSystem::new(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -0.1]),
            Mat::from_row_slice(2, 1, &[0.0, 0.1]),
        )
        .unwrap()
    }

    #[test]
    fn trivial_lift() {
        let sd = SampledDataSystem::new(Mat::zeros(2, 2), Mat::zeros(2, 1))
            .unwrap()
            .with_gains(Mat::zeros(1, 2), None)
            .unwrap();
        let l = lift(&sd).unwrap();
        assert_eq!(l.a, Mat::zeros(3, 3));
        let mut j = Mat::zeros(3, 3);
        j[(0, 0)] = 1.0;
        j[(1, 1)] = 1.0;
        assert_eq!(l.j, j);
    }

    #[test]
    fn lift_bottom_row_is_gain() {
        let sd = system_40()
            .with_gains(Mat::from_row_slice(1, 2, &[-3.75, -11.5]), None)
            .unwrap();
        let l = lift(&sd).unwrap();
        assert_eq!(l.j.row(2).iter().copied().collect::<Vec<_>>(), vec![-3.75, -11.5, 0.0]);
        assert_eq!(l.a.view((0, 2), (2, 1)), sd.b);
    }

    #[test]
    fn k2_zero_is_exact() {
        let r = synthesize(&system_40(), 0.001, 10.0, 3, true, &AnalysisOptions::default()).unwrap();
        assert!(r.feasible, "margin {}", r.margin);
        assert_eq!(r.k2, Mat::zeros(1, 1));
        assert!(r.closed_loop_radius.unwrap() < 1.0);
    }

    #[test]
    fn missing_gain_is_rejected() {
        assert!(matches!(lift(&system_40()), Err(Error::Input(_))));
    }
}
