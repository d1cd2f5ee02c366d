//! Independent checks: exact spectral sweeps, pointwise re-evaluation of
//! certificates, simulation and randomized falsification.

use serde::{Deserialize, Serialize};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{periodic_radius, Certificate, DwellSpec, Form, ImpulsiveSystem, PolytopicSystem};
use crate::error::{Error, Result};
use crate::linalg::{expm, min_eig_sym, spectral_radius, symmetrize, Mat};
use crate::sos::verify_pointwise;
use crate::synthesis::{self, Controller};

pub const DEFAULT_REFINE_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    pub min_eig: f64,
    /// Worst `tau` (or `theta`) for conditions that depend on it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub argmin: Option<f64>,
    pub strict: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub conditions: Vec<ConditionCheck>,
    pub pass: bool,
}

impl AuditReport {
    pub fn failures(&self) -> impl Iterator<Item = &ConditionCheck> {
        self.conditions.iter().filter(|c| !c.pass)
    }

    pub fn push(&mut self, name: impl Into<String>, min_eig: f64, argmin: Option<f64>, strict: bool, tol: f64) {
        let pass = if strict { min_eig > 0.0 } else { min_eig >= -tol };
        self.conditions.push(ConditionCheck {
            name: name.into(),
            min_eig,
            argmin,
            strict,
            pass,
        });
    }

    pub fn finish(mut self) -> Self {
        self.pass = !self.conditions.is_empty() && self.conditions.iter().all(|c| c.pass);
        self
    }
}

/// Re-evaluates the conditions named by the certificate's tag on a uniform
/// grid (parametric conditions) or exactly (point conditions), directly from
/// the witness and the system matrices.
pub fn verify_certificate(cert: &Certificate, vertices: &[ImpulsiveSystem], grid: usize, tol: f64) -> Result<AuditReport> {
    let w = &cert.witness;
    w.validate()?;
    if vertices.len() != cert.vertices {
        return Err(Error::input(format!(
            "certificate covers {} vertices, {} given",
            cert.vertices,
            vertices.len()
        )));
    }
    let n = vertices.first().map(|v| v.n()).unwrap_or(0);
    if w.shape() != (n, n) {
        return Err(Error::input(format!("witness is {:?}, system has {n} states", w.shape())));
    }
    let h = cert.spec.horizon();
    let (anchor, far, sign) = match cert.form {
        Form::D => (0.0, h, 1.0),
        Form::E => (h, 0.0, -1.0),
    };
    let eye = Mat::identity(n, n);
    let mut rep = AuditReport::default();
    for (i, v) in vertices.iter().enumerate() {
        let at = v.a.transpose();
        let flow = verify_pointwise(
            |tau| {
                let r = w.value(tau);
                Ok(-(symmetrize(&(&at * &r + &r * &v.a)) + w.derivative(tau) * sign))
            },
            0.0,
            h,
            grid,
            tol,
        )?;
        rep.push(format!("flow[{i}]"), flow.min_eig, Some(flow.argmin), false, tol);

        let jt = v.j.transpose();
        match cert.spec {
            DwellSpec::Ranged { t_min, t_max } => {
                let pre = &jt * w.value(0.0) * &v.j;
                let r = verify_pointwise(|th| Ok(-(&pre - w.value(th) + &eye)), t_min, t_max, grid, tol)?;
                rep.push(format!("jump[{i}]"), r.min_eig, Some(r.argmin), false, tol);
            }
            _ => {
                let m = -(&jt * w.value(anchor) * &v.j - w.value(far) + &eye);
                rep.push(format!("jump[{i}]"), min_eig_sym(&symmetrize(&m))?, None, false, tol);
            }
        }
        let ra = w.value(anchor);
        let lyap = symmetrize(&(&at * &ra + &ra * &v.a));
        match cert.spec {
            DwellSpec::Minimum { .. } => rep.push(format!("hold[{i}]"), min_eig_sym(&-lyap)?, None, true, tol),
            DwellSpec::Maximum { .. } => rep.push(format!("hold[{i}]"), min_eig_sym(&lyap)?, None, true, tol),
            _ => {}
        }
    }
    rep.push("positivity", min_eig_sym(&symmetrize(&w.value(anchor)))?, None, true, tol);
    Ok(rep.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSweep {
    /// `(T, rho(e^{A T} J))` on the grid.
    pub samples: Vec<(f64, f64)>,
    /// Maximal stable intervals, endpoints refined by bisection.
    pub stable: Vec<(f64, f64)>,
}

/// Spectral radius of the monodromy over `grid` points of `[lo, hi]`, with the
/// stability boundaries refined to `refine_tol`.
pub fn spectral_sweep(sys: &ImpulsiveSystem, lo: f64, hi: f64, grid: usize, refine_tol: f64) -> Result<SpectralSweep> {
    if !(lo > 0.0) || hi < lo || grid < 2 || !(refine_tol > 0.0) {
        return Err(Error::input("sweep needs 0 < lo <= hi, grid >= 2 and a positive tolerance"));
    }
    let rho = |t: f64| periodic_radius(&sys.a, &sys.j, t);
    let samples = (0..grid)
        .map(|k| {
            let t = lo + (hi - lo) * k as f64 / (grid - 1) as f64;
            rho(t).map(|r| (t, r))
        })
        .collect::<Result<Vec<_>>>()?;
    // boundary between a and b, with stable(a) != stable(b)
    let refine = |mut a: f64, mut b: f64| -> Result<f64> {
        let sa = rho(a)? < 1.0;
        while (b - a).abs() > refine_tol {
            let m = 0.5 * (a + b);
            if (rho(m)? < 1.0) == sa {
                a = m;
            } else {
                b = m;
            }
        }
        // the stable side of the final bracket
        Ok(if sa { a } else { b })
    };
    let mut stable = Vec::new();
    let mut start: Option<f64> = None;
    for k in 0..samples.len() {
        let (t, r) = samples[k];
        let s = r < 1.0;
        match (s, start) {
            (true, None) => {
                start = Some(if k == 0 { t } else { refine(samples[k - 1].0, t)? });
            }
            (false, Some(a)) => {
                stable.push((a, refine(samples[k - 1].0, t)?));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(a) = start {
        stable.push((a, hi));
    }
    Ok(SpectralSweep { samples, stable })
}

/// How a dwell sequence was produced; enough to regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DwellSource {
    Fixed,
    Uniform { lo: f64, hi: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwellSequence {
    pub times: Vec<f64>,
    pub source: DwellSource,
}

impl DwellSequence {
    pub fn fixed(times: Vec<f64>) -> Result<Self> {
        if times.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::input("dwell times must be positive and finite"));
        }
        Ok(DwellSequence {
            times,
            source: DwellSource::Fixed,
        })
    }

    pub fn periodic(t: f64, count: usize) -> Result<Self> {
        Self::fixed(vec![t; count])
    }

    /// `count` independent draws from `U[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, count: usize, seed: u64) -> Result<Self> {
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::input("uniform dwell times need 0 < lo <= hi"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let times = (0..count).map(|_| if hi > lo { rng.random_range(lo..=hi) } else { lo }).collect();
        Ok(DwellSequence {
            times,
            source: DwellSource::Uniform { lo, hi, seed },
        })
    }
}

/// Sampled closed-loop trajectory. At an impulse instant only the post-jump
/// state is stored, flagged in `impulse`, so `times` is strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub impulse: Vec<bool>,
    /// Time at which the state stopped being finite (or exceeded `1e150`).
    pub diverged_at: Option<f64>,
}

impl Trajectory {
    pub fn norm_at(&self, k: usize) -> f64 {
        self.states[k].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Norms of the post-jump states, in order.
    pub fn impulse_norms(&self) -> Vec<f64> {
        (0..self.times.len()).filter(|&k| self.impulse[k]).map(|k| self.norm_at(k)).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.states.first().map_or(0, |s| s.len());
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=n).map(|i| format!("x{i}")))
            .chain(std::iter::once("impulse".to_string()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.times.len() {
            let mut row = vec![format!("{}", self.times[k])];
            row.extend(self.states[k].iter().map(|v| format!("{v}")));
            row.push(if self.impulse[k] { "1".into() } else { "0".into() });
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

const DIVERGENCE_NORM: f64 = 1e150;

/// RK4 flow between impulses with the (clamped) controller gain when one is
/// given, then `x <- (J + Bd Kd) x^-` at every impulse.
pub fn simulate(
    sys: &ImpulsiveSystem,
    ctrl: Option<&Controller>,
    seq: &DwellSequence,
    x0: &[f64],
    step: f64,
) -> Result<Trajectory> {
    let n = sys.n();
    if x0.len() != n {
        return Err(Error::dim(format!("x0 has {} entries, system has {n} states", x0.len())));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::input("step must be positive"));
    }
    let flow = |tau: f64| -> Result<Mat> {
        match ctrl {
            Some(c) => synthesis::closed_flow(sys, c, tau),
            None => Ok(sys.a.clone()),
        }
    };
    let jump = match ctrl {
        Some(c) => synthesis::closed_jump(sys, c)?,
        None => sys.j.clone(),
    };
    let mut x = DVector::from_column_slice(x0);
    let mut t = 0.0;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.to_vec()],
        impulse: vec![false],
        diverged_at: None,
    };
    let bad = |x: &DVector<f64>| !x.iter().all(|v| v.is_finite()) || x.norm() > DIVERGENCE_NORM;
    for &dwell in &seq.times {
        let steps = (dwell / step).ceil().max(1.0) as usize;
        let h = dwell / steps as f64;
        for s in 0..steps {
            let tau = s as f64 * h;
            let (m0, mh, m1) = (flow(tau)?, flow(tau + 0.5 * h)?, flow(tau + h)?);
            let k1 = &m0 * &x;
            let k2 = &mh * (&x + &k1 * (0.5 * h));
            let k3 = &mh * (&x + &k2 * (0.5 * h));
            let k4 = &m1 * (&x + &k3 * h);
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            if bad(&x) {
                traj.diverged_at = Some(t + tau + h);
                return Ok(traj);
            }
            // the end of the interval is stored after the jump
            if s + 1 < steps {
                traj.times.push(t + tau + h);
                traj.states.push(x.iter().copied().collect());
                traj.impulse.push(false);
            }
        }
        t += dwell;
        x = &jump * &x;
        if bad(&x) {
            traj.diverged_at = Some(t);
            return Ok(traj);
        }
        traj.times.push(t);
        traj.states.push(x.iter().copied().collect());
        traj.impulse.push(true);
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCheck {
    /// Worst `rho(Phi(theta) (J + Bd Kd))` over the grid.
    pub worst: f64,
    pub argmax: f64,
    pub pass: bool,
}

/// `rho(Phi(theta) (J + Bd Kd)) < 1` on `grid` points of `[tbar, horizon]`,
/// with `Phi(tbar + delta) = e^{(A + Bc Kc(tbar)) delta} Phi(tbar)` for a
/// clamped controller and `Phi(theta) = e^{A theta}` without one.
pub fn min_dwell_sweep_check(
    sys: &ImpulsiveSystem,
    ctrl: Option<&Controller>,
    tbar: f64,
    horizon: f64,
    grid: usize,
) -> Result<SweepCheck> {
    if !(tbar > 0.0) || !(horizon > tbar) || grid < 2 {
        return Err(Error::input("sweep check needs 0 < tbar < horizon and grid >= 2"));
    }
    let (phi_bar, tail, jump) = match ctrl {
        Some(c) => (
            synthesis::closed_transition(sys, c, tbar)?,
            synthesis::closed_flow(sys, c, tbar)?,
            synthesis::closed_jump(sys, c)?,
        ),
        None => (expm(&sys.a, tbar)?, sys.a.clone(), sys.j.clone()),
    };
    let mut out = SweepCheck {
        worst: 0.0,
        argmax: tbar,
        pass: true,
    };
    for k in 0..grid {
        let th = tbar + (horizon - tbar) * k as f64 / (grid - 1) as f64;
        let rho = spectral_radius(&(expm(&tail, th - tbar)? * &phi_bar * &jump))?;
        if rho > out.worst {
            out.worst = rho;
            out.argmax = th;
        }
    }
    out.pass = out.worst < 1.0;
    Ok(out)
}

pub const FALSIFY_EVENTS: usize = 50;
pub const FALSIFY_GROWTH: f64 = 1e3;

/// Dwell-time window sampled for a spec; open-ended specs are truncated.
pub fn dwell_window(spec: &DwellSpec) -> (f64, f64) {
    match *spec {
        DwellSpec::Periodic { t } => (t, t),
        DwellSpec::Ranged { t_min, t_max } => (t_min, t_max),
        DwellSpec::Minimum { t } => (t, 4.0 * t),
        DwellSpec::Maximum { t } => (1e-3 * t, t),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub trial: usize,
    /// Vertex index when the parameter was held constant at a vertex.
    pub vertex: Option<usize>,
    pub dwell: Vec<f64>,
    pub growth: f64,
}

fn dirichlet(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn mix(vertices: &[ImpulsiveSystem], w: &[f64], pick: impl Fn(&ImpulsiveSystem) -> &Mat) -> Mat {
    let mut m = pick(&vertices[0]) * w[0];
    for (v, wi) in vertices.iter().zip(w).skip(1) {
        m += pick(v) * *wi;
    }
    m
}

/// Growth of `|x|` from a random unit initial state over `FALSIFY_EVENTS`
/// impulses. Trials `0..N` hold the parameter at one vertex; later trials
/// switch it at exponential times of mean `T/5` (`T` the window's upper end)
/// between Dirichlet(1) weights. Trial `i` uses its own stream derived from
/// `seed`, so verdicts are independent of evaluation order.
pub fn falsify_robust(psys: &PolytopicSystem, spec: &DwellSpec, trials: usize, seed: u64) -> Result<Option<Counterexample>> {
    if trials == 0 {
        return Err(Error::input("trials must be at least 1"));
    }
    spec.validate()?;
    let verts = &psys.vertices;
    let nv = verts.len();
    let n = psys.n();
    let (lo, hi) = dwell_window(spec);
    let mean_switch = hi / 5.0;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let vertex = (trial < nv).then_some(trial);
        let weights = |rng: &mut ChaCha8Rng| match vertex {
            Some(i) => (0..nv).map(|k| if k == i { 1.0 } else { 0.0 }).collect(),
            None => dirichlet(rng, nv),
        };
        let mut x = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        if x.norm() == 0.0 {
            x[0] = 1.0;
        }
        x /= x.norm();
        let mut w = weights(&mut rng);
        let mut to_switch = -(1.0 - rng.random::<f64>()).ln() * mean_switch;
        let mut dwell = Vec::with_capacity(FALSIFY_EVENTS);
        for _ in 0..FALSIFY_EVENTS {
            let t = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            dwell.push(t);
            let mut left = t;
            while vertex.is_none() && to_switch < left {
                x = expm(&mix(verts, &w, |v| &v.a), to_switch)? * x;
                left -= to_switch;
                w = weights(&mut rng);
                to_switch = -(1.0 - rng.random::<f64>()).ln() * mean_switch;
            }
            x = expm(&mix(verts, &w, |v| &v.a), left)? * x;
            if vertex.is_none() {
                to_switch -= left;
            }
            x = mix(verts, &w, |v| &v.j) * x;
            let growth = x.norm();
            if !growth.is_finite() || growth >= FALSIFY_GROWTH {
                return Ok(Some(Counterexample {
                    trial,
                    vertex,
                    dwell,
                    growth,
                }));
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_scalar_boundary() {
        // rho = 2 e^{-T}: stable for T > ln 2
        let s = ImpulsiveSystem::new(Mat::from_element(1, 1, -1.0), Mat::from_element(1, 1, 2.0)).unwrap();
        let sw = spectral_sweep(&s, 0.1, 2.0, 50, 1e-8).unwrap();
        assert_eq!(sw.stable.len(), 1);
        assert!((sw.stable[0].0 - 2f64.ln()).abs() < 1e-7);
        assert_eq!(sw.stable[0].1, 2.0);
    }

    fn flow_unstable() -> ImpulsiveSystem {
        ImpulsiveSystem::new(
            Mat::from_row_slice(2, 2, &[-1.0, 0.1, 0.0, 1.2]),
            Mat::from_row_slice(2, 2, &[1.2, 0.0, 0.0, 0.5]),
        )
        .unwrap()
    }

    fn jump_unstable() -> ImpulsiveSystem {
        ImpulsiveSystem::new(
            Mat::from_row_slice(2, 2, &[-1.0, 0.0, 1.0, -2.0]),
            Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]),
        )
        .unwrap()
    }

    #[test]
    fn hurwitz_flow_decays() {
        let s = ImpulsiveSystem::new(Mat::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]), Mat::identity(2, 2)).unwrap();
        // horizon 20 / |Re lambda_max| = 20
        let seq = DwellSequence::periodic(1.0, 20).unwrap();
        let tr = simulate(&s, None, &seq, &[1.0, 1.0], 1e-2).unwrap();
        assert!(tr.diverged_at.is_none());
        let last = tr.norm_at(tr.times.len() - 1);
        assert!(last < 1e-6 * 2f64.sqrt(), "{last}");
    }

    #[test]
    fn simulation_matches_monodromy_powers() {
        let s = flow_unstable();
        let t = 0.3;
        let seq = DwellSequence::periodic(t, 8).unwrap();
        let tr = simulate(&s, None, &seq, &[0.3, -0.7], 1e-3).unwrap();
        let m = expm(&s.a, t).unwrap() * &s.j;
        let mut x = DVector::from_column_slice(&[0.3, -0.7]);
        let mut k = 0;
        for (i, flag) in tr.impulse.iter().enumerate() {
            if *flag {
                // the jump is applied after the flow, so compare J e^{AT} powers
                x = &s.j * expm(&s.a, t).unwrap() * x;
                let err = (DVector::from_column_slice(&tr.states[i]) - &x).norm();
                assert!(err < 1e-9, "impulse {k}: {err}");
                k += 1;
            }
        }
        assert_eq!(k, 8);
        assert!(spectral_radius(&m).unwrap() < 1.0);
    }

    #[test]
    fn outside_stable_range_diverges() {
        let seq = DwellSequence::periodic(0.7, 400).unwrap();
        let tr = simulate(&flow_unstable(), None, &seq, &[1.0, 1.0], 1e-2).unwrap();
        let norms = tr.impulse_norms();
        assert!(tr.diverged_at.is_some() || norms.last().unwrap() > &1e3);
    }

    #[test]
    fn csv_layout() {
        let seq = DwellSequence::periodic(0.5, 2).unwrap();
        let tr = simulate(&flow_unstable(), None, &seq, &[1.0, 0.0], 0.25).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x1,x2,impulse");
        assert_eq!(lines.len(), 1 + tr.times.len());
        assert!(lines[2].ends_with(",0") && lines[3].ends_with(",1"));
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn uniform_sequence_is_seeded() {
        let a = DwellSequence::uniform(0.1, 0.5, 30, 7).unwrap();
        let b = DwellSequence::uniform(0.1, 0.5, 30, 7).unwrap();
        let c = DwellSequence::uniform(0.1, 0.5, 30, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.times, c.times);
        assert!(a.times.iter().all(|t| (0.1..=0.5).contains(t)));
        assert!(DwellSequence::fixed(vec![0.1, 0.0]).is_err());
    }

    #[test]
    fn sweep_check_without_control() {
        let s = jump_unstable();
        assert!(min_dwell_sweep_check(&s, None, 1.15, 5.0, 50).unwrap().pass);
        assert!(!min_dwell_sweep_check(&s, None, 1.0, 5.0, 50).unwrap().pass);
        let z = ImpulsiveSystem::new(s.a.clone(), Mat::zeros(2, 2)).unwrap();
        assert!(min_dwell_sweep_check(&z, None, 0.01, 1.0, 10).unwrap().pass);
    }

    #[test]
    fn falsification_verdicts() {
        let stable = ImpulsiveSystem::new(-Mat::identity(2, 2), Mat::identity(2, 2) * 0.5).unwrap();
        let p = PolytopicSystem::new(vec![stable.clone()]).unwrap();
        assert_eq!(falsify_robust(&p, &DwellSpec::Periodic { t: 0.5 }, 50, 1).unwrap(), None);

        let bad = ImpulsiveSystem::new(Mat::identity(2, 2) * 0.5, Mat::identity(2, 2)).unwrap();
        let p = PolytopicSystem::new(vec![stable, bad]).unwrap();
        let c = falsify_robust(&p, &DwellSpec::Periodic { t: 0.5 }, 50, 1).unwrap().unwrap();
        assert_eq!(c.vertex, Some(1));
        assert_eq!(falsify_robust(&p, &DwellSpec::Periodic { t: 0.5 }, 50, 1).unwrap(), Some(c));
    }
}
