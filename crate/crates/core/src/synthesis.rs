//! State-feedback synthesis for impulsive systems
//! `x' = A x + Bc uc`, `x = J x^- + Bd ud` with `uc = Kc(tau) x`, `ud = Kd x^-`.
//!
//! The unknowns are `S(tau)` (the inverse of a Lyapunov matrix), `Uc(tau) =
//! Kc(tau) S(tau)` and `Ud = Kd S(.)`, which makes every condition linear.

use serde::{Deserialize, Serialize};

use crate::analysis::{
    periodic_radius, AnalysisOptions, DwellSpec, Form, ImpulsiveSystem, PolytopicSystem, SdpStats, TRACE_CAP_PER_STATE,
};
use crate::error::{Error, Result};
use crate::linalg::{check_finite, mat_serde, min_eig_sym, symmetrize, transition_matrix, Mat};
use crate::oracle::AuditReport;
use crate::polymat::PolyMat;
use crate::sos::{AffineMat, Encoder, PieceView, PolyExpr, Program, Witness};

/// `S(tau) >= CONDITIONING * (trace cap / n) * I`, at the unscaled cap, keeps
/// `S^{-1}` well defined.
pub const CONDITIONING: f64 = 1e-4;
/// RK4 steps per unit time for closed-loop transition matrices.
pub const STEPS_PER_UNIT: f64 = 2000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    #[serde(rename = "Uc", default, skip_serializing_if = "Option::is_none")]
    pub uc: Option<PolyMat>,
    #[serde(rename = "S")]
    pub s: PolyMat,
    #[serde(rename = "Ud", default, with = "mat_serde::opt", skip_serializing_if = "Option::is_none")]
    pub ud: Option<Mat>,
    #[serde(rename = "Tbar")]
    pub tbar: f64,
    /// Hold the continuous gain at its value at `Tbar` for `tau >= Tbar`.
    pub clamp: bool,
    /// Orientation of `S`: `e` pairs `Ud` with `S(0)`, `d` with `S(Tbar)`.
    pub form: Form,
}

impl Controller {
    pub fn n(&self) -> usize {
        self.s.dim()
    }

    fn s_inv(&self, sigma: f64) -> Result<Mat> {
        let s = symmetrize(&self.s.eval(sigma));
        let lam = min_eig_sym(&s)?;
        if !(lam > 0.0) {
            return Err(Error::Extraction {
                tau: sigma,
                reason: format!("S is not positive definite (min eigenvalue {lam:.3e})"),
            });
        }
        s.try_inverse().ok_or_else(|| Error::Extraction {
            tau: sigma,
            reason: "S is singular".into(),
        })
    }

    /// Continuous gain `Uc(sigma) S(sigma)^{-1}`, `sigma = min(tau, Tbar)` when
    /// clamped. `None` when there is no continuous input.
    pub fn gain(&self, tau: f64) -> Result<Option<Mat>> {
        let Some(uc) = &self.uc else { return Ok(None) };
        if !(tau >= 0.0) {
            return Err(Error::input("gain is defined for tau >= 0"));
        }
        let sigma = if self.clamp { tau.min(self.tbar) } else { tau };
        let k = uc.eval(sigma) * self.s_inv(sigma)?;
        check_finite(&k, "continuous gain").map_err(|_| Error::Extraction {
            tau: sigma,
            reason: "non-finite gain".into(),
        })?;
        Ok(Some(k))
    }

    /// Impulsive gain `Kd`; `None` when there is no impulsive input.
    pub fn kd(&self) -> Result<Option<Mat>> {
        let Some(ud) = &self.ud else { return Ok(None) };
        let at = match self.form {
            Form::E => 0.0,
            Form::D => self.tbar,
        };
        Ok(Some(ud * self.s_inv(at)?))
    }
}

/// `Kc(tau)` of a controller with a continuous input.
pub fn extract_gain(ctrl: &Controller, tau: f64) -> Result<Mat> {
    ctrl.gain(tau)?
        .ok_or_else(|| Error::input("controller has no continuous input"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub feasible: bool,
    pub margin: f64,
    pub controller: Controller,
    /// Inverse of `S` checked against the closed-loop analysis conditions;
    /// empty when infeasible.
    pub closure: AuditReport,
    /// Worst closed-loop monodromy spectral radius over the vertices at `Tbar`.
    pub closed_loop_radius: Option<f64>,
    pub stats: SdpStats,
}

fn input_dims(vertices: &[ImpulsiveSystem]) -> Result<(usize, usize)> {
    let mc = vertices[0].bc.as_ref().map_or(0, |b| b.ncols());
    let md = vertices[0].bd.as_ref().map_or(0, |b| b.ncols());
    for v in vertices {
        if v.bc.as_ref().map_or(0, |b| b.ncols()) != mc || v.bd.as_ref().map_or(0, |b| b.ncols()) != md {
            return Err(Error::dim("vertices differ in input dimensions"));
        }
    }
    Ok((mc, md))
}

/// Periodic impulses (`Tbar`-periodic), degree-`degree` polynomials.
pub fn stabilize_periodic(sys: &ImpulsiveSystem, tbar: f64, degree: usize, opts: &AnalysisOptions) -> Result<SynthesisResult> {
    synthesize(std::slice::from_ref(sys), tbar, degree, false, opts)
}

/// Minimum dwell time `Tbar` with the gain clamped for `tau >= Tbar`.
pub fn stabilize_min_dwell(sys: &ImpulsiveSystem, tbar: f64, degree: usize, opts: &AnalysisOptions) -> Result<SynthesisResult> {
    synthesize(std::slice::from_ref(sys), tbar, degree, true, opts)
}

/// Common `(S, Uc, Ud)` for every vertex of a polytope.
pub fn stabilize_robust(psys: &PolytopicSystem, spec: DwellSpec, degree: usize, opts: &AnalysisOptions) -> Result<SynthesisResult> {
    match spec {
        DwellSpec::Periodic { t } => synthesize(&psys.vertices, t, degree, false, opts),
        DwellSpec::Minimum { t } => synthesize(&psys.vertices, t, degree, true, opts),
        _ => Err(Error::input("synthesis supports periodic and minimum dwell-time specifications")),
    }
}

fn synthesize(vertices: &[ImpulsiveSystem], tbar: f64, degree: usize, min_dwell: bool, opts: &AnalysisOptions) -> Result<SynthesisResult> {
    let psys = PolytopicSystem::new(vertices.to_vec())?;
    DwellSpec::Periodic { t: tbar }.validate()?;
    let n = psys.n();
    let (mc, md) = input_dims(vertices)?;
    let start = std::time::Instant::now();
    let encoder = Encoder::sos(degree);
    let mut prog = Program::new(encoder, tbar)?;
    let s = prog.unknown(n, n, true);
    let uc = (mc > 0).then(|| prog.unknown(mc, n, false));
    let ud = (md > 0).then(|| prog.constant(md, n, false));

    // periodic: flow with +S', jump pairs -S(Tbar) with J S(0)
    // minimum dwell: flow with -S', jump pairs -S(0) with J S(Tbar)
    let (form, sign, lead, tail) = if min_dwell {
        (Form::D, -1.0, 0.0, tbar)
    } else {
        (Form::E, 1.0, tbar, 0.0)
    };
    let eye = Mat::identity(n, n);
    for (i, v) in psys.vertices.iter().enumerate() {
        prog.require(&format!("flow[{i}]"), 0.0, tbar, |pv: &PieceView| {
            let mut m = pv.value(&s).lmul(&v.a);
            if let (Some(uc), Some(bc)) = (&uc, &v.bc) {
                m = m.add(&pv.value(uc).lmul(bc));
            }
            Ok(m.he().add(&pv.deriv(&s).scale(sign)).neg())
        })?;
        let mut off = s.at(tail).lmul(&v.j);
        if let (Some(ud), Some(bd)) = (&ud, &v.bd) {
            off = off.add(&ud.lmul(bd));
        }
        let jump = AffineMat::block(&[
            vec![s.at(lead).sub(&AffineMat::constant(eye.clone())), off.scale(-1.0)],
            vec![off.transpose().scale(-1.0), s.at(tail)],
        ])?;
        prog.require_at(&format!("jump[{i}]"), &jump);
        if min_dwell {
            let mut m = s.at(tbar).lmul(&v.a);
            if let (Some(uc), Some(bc)) = (&uc, &v.bc) {
                m = m.add(&uc.at(tbar).lmul(bc));
            }
            prog.require_at(&format!("hold[{i}]"), &m.he().scale(-1.0));
        }
    }
    let floor = CONDITIONING * TRACE_CAP_PER_STATE;
    prog.require("conditioning", 0.0, tbar, |pv: &PieceView| {
        Ok(pv.value(&s).sub(&PolyExpr::from_mat(&eye * floor)))
    })?;
    prog.require_at("positivity", &s.at(0.0));
    prog.bound_trace(&s.at(0.0), TRACE_CAP_PER_STATE * n as f64);

    let solved = prog.solve_escalating(&opts.sdp, opts.margin_threshold, opts.start_trace_scale, opts.max_trace_scale)?;
    let poly = |w: Witness| match w {
        Witness::Poly { poly } => poly,
        Witness::Pwl { .. } => unreachable!("synthesis uses polynomial unknowns"),
    };
    let controller = Controller {
        uc: uc.as_ref().map(|u| u.extract(&solved.x)).transpose()?.map(poly),
        s: poly(s.extract(&solved.x)?),
        ud: ud.as_ref().map(|u| u.eval(&solved.x)),
        tbar,
        clamp: min_dwell,
        form,
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
    let mut result = SynthesisResult {
        feasible,
        margin: solved.t_star,
        controller,
        closure: AuditReport::default(),
        closed_loop_radius: None,
        stats,
    };
    if feasible {
        result.closure = duality_closure(&psys.vertices, &result.controller, opts.grid, opts.verify_tol)?;
        let mut worst = 0.0_f64;
        for v in &psys.vertices {
            worst = worst.max(closed_loop_radius(v, &result.controller, tbar)?);
        }
        result.closed_loop_radius = Some(worst);
    }
    Ok(result)
}

/// `J + Bd Kd`.
pub fn closed_jump(sys: &ImpulsiveSystem, ctrl: &Controller) -> Result<Mat> {
    match (&sys.bd, ctrl.kd()?) {
        (Some(bd), Some(kd)) => Ok(&sys.j + bd * kd),
        _ => Ok(sys.j.clone()),
    }
}

/// `A + Bc Kc(tau)`.
pub fn closed_flow(sys: &ImpulsiveSystem, ctrl: &Controller, tau: f64) -> Result<Mat> {
    match (&sys.bc, ctrl.gain(tau)?) {
        (Some(bc), Some(k)) => Ok(&sys.a + bc * k),
        _ => Ok(sys.a.clone()),
    }
}

/// Closed-loop flow transition matrix over `[0, theta]`; beyond `Tbar` a
/// clamped controller contributes the constant factor `e^{A_cl(Tbar) delta}`.
pub fn closed_transition(sys: &ImpulsiveSystem, ctrl: &Controller, theta: f64) -> Result<Mat> {
    let bc = sys.bc.clone().unwrap_or_else(|| Mat::zeros(sys.n(), 0));
    let gain = |tau: f64| -> Result<Mat> { Ok(ctrl.gain(tau)?.unwrap_or_else(|| Mat::zeros(0, sys.n()))) };
    let upto = if ctrl.clamp { theta.min(ctrl.tbar) } else { theta };
    let steps = ((upto * STEPS_PER_UNIT).ceil() as usize).max(50);
    let phi = transition_matrix(&sys.a, &bc, gain, upto, steps)?;
    if theta > upto {
        let tail = crate::linalg::expm(&closed_flow(sys, ctrl, ctrl.tbar)?, theta - upto)?;
        Ok(tail * phi)
    } else {
        Ok(phi)
    }
}

/// `rho(Phi_cl(theta) (J + Bd Kd))`.
pub fn closed_loop_radius(sys: &ImpulsiveSystem, ctrl: &Controller, theta: f64) -> Result<f64> {
    if ctrl.uc.is_none() || sys.bc.is_none() {
        return periodic_radius(&sys.a, &closed_jump(sys, ctrl)?, theta);
    }
    crate::linalg::spectral_radius(&(closed_transition(sys, ctrl, theta)? * closed_jump(sys, ctrl)?))
}

/// Checks that `R = S^{-1}` satisfies the analysis conditions of the
/// controller's orientation for the closed loop of every vertex.
pub fn duality_closure(vertices: &[ImpulsiveSystem], ctrl: &Controller, grid: usize, tol: f64) -> Result<AuditReport> {
    let t = ctrl.tbar;
    let r = |tau: f64| ctrl.s_inv(tau);
    // d/dtau S^{-1} = -S^{-1} S' S^{-1}
    let r_dot = |tau: f64| -> Result<Mat> {
        let ri = r(tau)?;
        Ok(-(&ri * ctrl.s.derivative().eval(tau) * &ri))
    };
    let sign = match ctrl.form {
        Form::D => 1.0,
        Form::E => -1.0,
    };
    let (anchor, far) = match ctrl.form {
        Form::D => (0.0, t),
        Form::E => (t, 0.0),
    };
    let mut rep = AuditReport::default();
    for (i, v) in vertices.iter().enumerate() {
        let flow = crate::sos::verify_pointwise(
            |tau| {
                let a = closed_flow(v, ctrl, tau)?;
                let ri = r(tau)?;
                let scale = crate::linalg::max_abs(&ri).max(1.0);
                Ok(-(symmetrize(&(a.transpose() * &ri + &ri * &a)) + r_dot(tau)? * sign) / scale)
            },
            0.0,
            t,
            grid,
            tol,
        )?;
        rep.push(format!("flow[{i}]"), flow.min_eig, Some(flow.argmin), false, tol);
        let jc = closed_jump(v, ctrl)?;
        let m = -(jc.transpose() * r(anchor)? * &jc - r(far)?);
        rep.push(format!("jump[{i}]"), min_eig_sym(&symmetrize(&m))?, None, true, tol);
        if ctrl.clamp {
            let a = closed_flow(v, ctrl, t)?;
            let rt = r(t)?;
            rep.push(
                format!("hold[{i}]"),
                min_eig_sym(&-symmetrize(&(a.transpose() * &rt + &rt * &a)))?,
                None,
                true,
                tol,
            );
        }
    }
    rep.push("positivity", min_eig_sym(&r(anchor)?)?, None, true, tol);
    Ok(rep.finish())
}
