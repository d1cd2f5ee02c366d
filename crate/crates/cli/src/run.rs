use serde_json::{json, Value};

use dwellcert::analysis::{
    certify, exact_min_dwell, search_min_dwell, search_range, variable_count, Certificate, DwellSpec,
    ImpulsiveSystem, PolytopicSystem, SearchOptions, SEARCH_CAP,
};
use dwellcert::oracle::{
    dwell_window, falsify_robust, min_dwell_sweep_check, simulate, spectral_sweep, verify_certificate, DwellSequence,
    DEFAULT_REFINE_TOL,
};
use dwellcert::sampled_data::{self as sd, PolytopicSampledData};
use dwellcert::sos::Encoder;
use dwellcert::synthesis::{stabilize_robust, Controller};
use dwellcert::Error;

use crate::problem::{ProblemFile, SystemForm};
use crate::report::{Report, Status};

/// Failure of a task: input problems exit 3, numerical ones exit 2.
pub enum Failure {
    Input(String),
    Numerical(String),
    /// A search found nothing feasible; reported as infeasible.
    NotFound(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NotFound(_) => Failure::NotFound(e.to_string()),
            Error::Dimension(_) | Error::Input(_) | Error::Encoding(_) => Failure::Input(e.to_string()),
            Error::Numerical(_) | Error::Extraction { .. } | Error::Internal(_) => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<String> for Failure {
    fn from(e: String) -> Self {
        Failure::Input(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Numerical(format!("serialization: {e}"))
    }
}

pub type Outcome = Result<(), Failure>;

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value, Failure> {
    Ok(serde_json::to_value(v)?)
}

fn vertices(form: &SystemForm) -> Result<Vec<ImpulsiveSystem>, Failure> {
    Ok(match form {
        SystemForm::Impulsive(s) => vec![s.clone()],
        SystemForm::Polytope(p) => p.vertices.clone(),
        SystemForm::SampledData(s) => vec![sd::lift(s)?],
        SystemForm::SampledPolytope(_) => {
            return Err(Failure::Input("a sampled-data polytope has no fixed gains to analyze".into()))
        }
    })
}

fn single(form: &SystemForm, what: &str) -> Result<ImpulsiveSystem, Failure> {
    let v = vertices(form)?;
    if v.len() != 1 {
        return Err(Failure::Input(format!("{what} needs a single system, not a polytope")));
    }
    Ok(v.into_iter().next().unwrap())
}

fn put_certificate(report: &mut Report, cert: &Certificate) -> Outcome {
    report.margin = Some(cert.margin);
    report.counts = Some(cert.stats);
    report.residuals = Some(to_value(&cert.audit)?);
    report.certificate = Some(to_value(cert)?);
    Ok(())
}

pub fn analyze(p: &ProblemFile, report: &mut Report) -> Outcome {
    let form = p.system_form()?;
    let verts = vertices(&form)?;
    let spec = p.dwell()?;
    let enc = p.encoder()?;
    let opts = p.options.analysis();
    let cert = certify(&verts, spec, p.options.form, enc, &opts)?;
    put_certificate(report, &cert)?;
    report.status = if cert.feasible && cert.audit.pass {
        Status::Feasible
    } else {
        Status::Infeasible
    };
    if cert.feasible && !cert.audit.pass {
        report.warnings.push("solver reported feasibility but the pointwise audit failed".into());
    }
    Ok(())
}

pub fn search(p: &ProblemFile, report: &mut Report) -> Outcome {
    let form = p.system_form()?;
    let sys = single(&form, "search")?;
    let spec = p.dwell()?;
    let enc = p.encoder()?;
    let opts = p.options.analysis();
    let search = SearchOptions {
        tol: p.options.bisect_tol,
        fixed_t_min: p.options.fixed_t_min,
        cap: SEARCH_CAP,
    };
    match spec {
        DwellSpec::Minimum { .. } | DwellSpec::Maximum { .. } => {
            let maximum = matches!(spec, DwellSpec::Maximum { .. });
            let (t, cert) = search_min_dwell(&sys, enc, p.options.form, maximum, &search, &opts)?;
            put_certificate(report, &cert)?;
            report.bounds = Some(json!({ "T": t }));
            if !maximum {
                match exact_min_dwell(&sys, p.options.bisect_tol, &opts) {
                    Ok(exact) => report.checks = Some(json!({ "exact_min_dwell": exact })),
                    Err(e) => report.warnings.push(format!("exact minimum dwell time unavailable: {e}")),
                }
            }
            report.status = if cert.feasible { Status::Feasible } else { Status::Infeasible };
        }
        DwellSpec::Periodic { t } | DwellSpec::Ranged { t_min: t, .. } => {
            let seed = p.options.search_seed.unwrap_or(match spec {
                DwellSpec::Ranged { t_min, t_max } => 0.5 * (t_min + t_max),
                _ => t,
            });
            let r = search_range(&sys, enc, seed, &search, &opts)?;
            put_certificate(report, &r.upper)?;
            report.bounds = Some(json!({ "T_min": r.t_min, "T_max": r.t_max, "joint": r.joint, "probes": r.probes }));
            let lo = (0.5 * r.t_min).max(1e-6);
            let sw = spectral_sweep(&sys, lo, 2.0 * r.t_max, p.options.grid.max(2), DEFAULT_REFINE_TOL)?;
            report.checks = Some(json!({ "exact_stable_intervals": sw.stable }));
            report.status = if r.lower.feasible && r.upper.feasible {
                Status::Feasible
            } else {
                Status::Infeasible
            };
        }
    }
    Ok(())
}

pub fn synthesize(p: &ProblemFile, report: &mut Report) -> Outcome {
    let form = p.system_form()?;
    let psys = match form {
        SystemForm::Impulsive(s) => PolytopicSystem::new(vec![s])?,
        SystemForm::Polytope(p) => p,
        _ => return Err(Failure::Input("use the sampled-data subcommand for sampled-data systems".into())),
    };
    let spec = p.dwell()?;
    let degree = sos_degree(p)?;
    let opts = p.options.analysis();
    let r = stabilize_robust(&psys, spec, degree, &opts)?;
    report.margin = Some(r.margin);
    report.counts = Some(r.stats);
    report.controller = Some(to_value(&r.controller)?);
    report.residuals = Some(to_value(&r.closure)?);
    let mut checks = serde_json::Map::new();
    checks.insert("closed_loop_radius".into(), to_value(&r.closed_loop_radius)?);
    let mut ok = r.feasible && r.closure.pass && r.closed_loop_radius.is_some_and(|x| x < 1.0);
    if r.feasible {
        if let DwellSpec::Minimum { t } = spec {
            let horizon = p.options.horizon.unwrap_or(20.0 * t);
            let mut worst = Vec::new();
            for v in &psys.vertices {
                let c = min_dwell_sweep_check(v, Some(&r.controller), t, horizon, 50)?;
                ok &= c.pass;
                worst.push(c);
            }
            checks.insert("min_dwell_sweep".into(), to_value(&worst)?);
        }
    }
    report.checks = Some(Value::Object(checks));
    report.status = if ok { Status::Feasible } else { Status::Infeasible };
    if r.feasible && !ok {
        report.warnings.push("synthesis LMIs are feasible but a closed-loop check failed".into());
    }
    Ok(())
}

fn sos_degree(p: &ProblemFile) -> Result<usize, Failure> {
    match p.encoder()? {
        Encoder::Sos { degree, .. } => Ok(degree),
        Encoder::Discretization { .. } => Err(Failure::Input("synthesis uses the sos method".into())),
    }
}

fn ranged(spec: DwellSpec) -> Result<(f64, f64), Failure> {
    match spec {
        DwellSpec::Ranged { t_min, t_max } => Ok((t_min, t_max)),
        DwellSpec::Periodic { t } => Ok((t, t)),
        _ => Err(Failure::Input("sampled-data problems take a ranged or periodic dwell".into())),
    }
}

pub fn sampled_analyze(p: &ProblemFile, report: &mut Report) -> Outcome {
    let sys = match p.system_form()? {
        SystemForm::SampledData(s) => s,
        _ => return Err(Failure::Input("sampled-data analyze needs a sampled_data system with gains".into())),
    };
    let (t_min, t_max) = ranged(p.dwell()?)?;
    let cert = sd::analyze_fixed(&sys, t_min, t_max, p.encoder()?, &p.options.analysis())?;
    put_certificate(report, &cert)?;
    report.status = if cert.feasible && cert.audit.pass {
        Status::Feasible
    } else {
        Status::Infeasible
    };
    Ok(())
}

pub fn sampled_synthesize(p: &ProblemFile, report: &mut Report) -> Outcome {
    let poly = match p.system_form()? {
        SystemForm::SampledData(s) => PolytopicSampledData::new(vec![s.a], s.b)?,
        SystemForm::SampledPolytope(q) => q,
        _ => return Err(Failure::Input("sampled-data synthesize needs a sampled-data system".into())),
    };
    let (t_min, t_max) = ranged(p.dwell()?)?;
    let degree = sos_degree(p)?;
    let opts = p.options.analysis();
    let r = sd::synthesize_robust(&poly, t_min, t_max, degree, p.options.k2_zero, &opts)?;
    report.margin = Some(r.margin);
    report.counts = Some(r.stats);
    report.warnings.extend(r.warnings.iter().cloned());
    report.controller = Some(to_value(&r)?);
    let mut ok = r.verified();
    let mut checks = json!({ "closed_loop_radius": r.closed_loop_radius, "grid": sd::VERIFY_POINTS });
    if ok && poly.a.len() > 1 && p.options.trials > 0 {
        let verts = (0..poly.a.len())
            .map(|i| sd::lift(&poly.vertex(i).with_gains(r.k1.clone(), Some(r.k2.clone()))?))
            .collect::<dwellcert::Result<Vec<_>>>()?;
        let cex = falsify_robust(
            &PolytopicSystem::new(verts)?,
            &DwellSpec::Ranged { t_min, t_max },
            p.options.trials,
            p.options.seed,
        )?;
        ok &= cex.is_none();
        checks["falsification"] = json!({ "trials": p.options.trials, "counterexample": cex });
    }
    report.checks = Some(checks);
    report.status = if ok { Status::Feasible } else { Status::Infeasible };
    Ok(())
}

/// Reads a certificate, or a report that embeds one.
fn embedded<T: serde::de::DeserializeOwned>(text: &str, key: &str) -> Result<T, Failure> {
    let v: Value = serde_json::from_str(text).map_err(|e| Failure::Input(format!("{key} file: {e}")))?;
    let inner = v.get(key).cloned().unwrap_or(v);
    serde_json::from_value(inner).map_err(|e| Failure::Input(format!("{key} file: {e}")))
}

pub fn verify(p: &ProblemFile, certificate: &str, report: &mut Report) -> Outcome {
    let cert: Certificate = embedded(certificate, "certificate")?;
    let verts = vertices(&p.system_form()?)?;
    let audit = verify_certificate(&cert, &verts, p.options.grid, p.options.verify_tol)?;
    report.margin = Some(cert.margin);
    report.residuals = Some(to_value(&audit)?);
    report.status = if audit.pass { Status::Pass } else { Status::Fail };
    Ok(())
}

pub fn simulate_task(p: &ProblemFile, controller: Option<&str>, report: &mut Report) -> Result<Option<String>, Failure> {
    let sys = single(&p.system_form()?, "simulate")?;
    let ctrl: Option<Controller> = controller.map(|c| embedded(c, "controller")).transpose()?;
    let spec = p.dwell()?;
    let (lo, hi) = dwell_window(&spec);
    let seq = match spec {
        DwellSpec::Periodic { t } => DwellSequence::periodic(t, p.options.impulses)?,
        _ => DwellSequence::uniform(lo, hi, p.options.impulses, p.options.seed)?,
    };
    let x0 = p.options.x0.clone().unwrap_or_else(|| vec![1.0; sys.n()]);
    let tr = simulate(&sys, ctrl.as_ref(), &seq, &x0, p.options.step)?;
    let n0 = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let last = tr.norm_at(tr.times.len() - 1);
    report.checks = Some(json!({
        "dwell": seq,
        "initial_norm": n0,
        "final_norm": last,
        "diverged_at": tr.diverged_at,
        "impulse_norms": tr.impulse_norms(),
    }));
    report.status = if tr.diverged_at.is_none() && last < n0 {
        Status::Stable
    } else {
        Status::Unstable
    };
    let mut csv = Vec::new();
    tr.write_csv(&mut csv).map_err(|e| Failure::Input(format!("csv: {e}")))?;
    Ok(Some(String::from_utf8(csv).expect("csv is ascii")))
}

pub fn count(p: &ProblemFile, report: &mut Report) -> Outcome {
    let n = match p.system_form()? {
        SystemForm::Impulsive(s) => s.n(),
        SystemForm::Polytope(q) => q.n(),
        SystemForm::SampledData(s) => s.n() + s.m(),
        SystemForm::SampledPolytope(q) => q.a[0].nrows() + q.b.ncols(),
    };
    let degree = sos_degree(p)?;
    let (current, looped) = variable_count(n, degree, p.options.looped_degree);
    report.variable_counts = Some(json!({
        "n": n,
        "degree": degree,
        "looped_degree": p.options.looped_degree,
        "current": current,
        "looped": looped,
    }));
    report.status = Status::Ok;
    Ok(())
}
