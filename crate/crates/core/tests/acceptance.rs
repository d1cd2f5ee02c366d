//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Reference values are the published ones; tolerances are fixed.

use std::process::ExitCode;
use std::time::Instant;

use dwellcert::analysis::*;
use dwellcert::linalg::{expm, Mat};
use dwellcert::oracle::*;
use dwellcert::sampled_data::{self as sd, PolytopicSampledData, SampledDataSystem};
use dwellcert::sos::Encoder;
use dwellcert::synthesis::*;

type Outcome = Result<String, String>;

fn ranged_system() -> ImpulsiveSystem {
    ImpulsiveSystem::new(
        Mat::from_row_slice(2, 2, &[-1.0, 0.1, 0.0, 1.2]),
        Mat::from_row_slice(2, 2, &[1.2, 0.0, 0.0, 0.5]),
    )
    .unwrap()
}

fn min_dwell_system() -> ImpulsiveSystem {
    ImpulsiveSystem::new(
        Mat::from_row_slice(2, 2, &[-1.0, 0.0, 1.0, -2.0]),
        Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]),
    )
    .unwrap()
}

fn synthesis_plant() -> ImpulsiveSystem {
    ImpulsiveSystem::new(
        Mat::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 2.0]),
        Mat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 3.0]),
    )
    .unwrap()
    .with_inputs(Some(Mat::from_row_slice(2, 1, &[1.0, 0.0])), None)
    .unwrap()
}

fn damped_integrator() -> SampledDataSystem {
    SampledDataSystem::new(
        Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -0.1]),
        Mat::from_row_slice(2, 1, &[0.0, 0.1]),
    )
    .unwrap()
}

fn oscillator() -> SampledDataSystem {
    SampledDataSystem::new(
        Mat::from_row_slice(2, 2, &[0.0, 1.0, -2.0, 0.1]),
        Mat::from_row_slice(2, 1, &[0.0, 1.0]),
    )
    .unwrap()
    .with_gains(Mat::from_row_slice(1, 2, &[1.0, 0.0]), None)
    .unwrap()
}

fn close(what: &str, got: f64, want: f64, tol: f64, log: &mut Vec<String>) -> bool {
    let ok = (got - want).abs() <= tol;
    log.push(format!("{what} {got:.5} (want {want} +/- {tol})"));
    ok
}

fn verdict(ok: bool, log: Vec<String>) -> Outcome {
    if ok {
        Ok(log.join("; "))
    } else {
        Err(log.join("; "))
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    format!("error: {err}")
}

fn criterion_1() -> Outcome {
    let sys = ranged_system();
    let opts = AnalysisOptions::default();
    let mut log = Vec::new();
    let mut ok = true;
    for (d, lo, hi) in [(2, 0.1834, 0.4998), (4, 0.1824, 0.5768), (6, 0.1824, 0.5776)] {
        let r = search_range(&sys, Encoder::sos(d), 0.3, &SearchOptions::default(), &opts).map_err(e)?;
        ok &= close(&format!("d={d} T_min"), r.t_min, lo, 2e-3, &mut log);
        ok &= close(&format!("d={d} T_max"), r.t_max, hi, 2e-3, &mut log);
    }
    verdict(ok, log)
}

fn criterion_2() -> Outcome {
    let sw = spectral_sweep(&ranged_system(), 0.01, 2.0, 400, DEFAULT_REFINE_TOL).map_err(e)?;
    let mut log = vec![format!("{} stable interval(s)", sw.stable.len())];
    let mut ok = sw.stable.len() == 1;
    if let Some(&(a, b)) = sw.stable.first() {
        ok &= close("lower", a, 0.1824, 1e-4, &mut log);
        ok &= close("upper", b, 0.5776, 1e-4, &mut log);
    }
    verdict(ok, log)
}

fn criterion_3() -> Outcome {
    let sys = min_dwell_system();
    let opts = AnalysisOptions::default();
    let search = SearchOptions::default();
    let mut log = Vec::new();
    let mut ok = true;
    for (d, want) in [(2, 1.1883), (4, 1.1408), (6, 1.1406)] {
        let (t, _) = search_min_dwell(&sys, Encoder::sos(d), Form::D, false, &search, &opts).map_err(e)?;
        ok &= close(&format!("sos d={d}"), t, want, 2e-3, &mut log);
    }
    let exact = exact_min_dwell(&sys, 1e-5, &opts).map_err(e)?;
    ok &= close("exact", exact, 1.1406, 1e-3, &mut log);
    let (t, _) = search_min_dwell(&sys, Encoder::discretization(28), Form::D, false, &search, &opts).map_err(e)?;
    ok &= close("discretization N=28", t, 1.1919, 5e-3, &mut log);
    verdict(ok, log)
}

fn criterion_4() -> Outcome {
    let sys = synthesis_plant();
    let r = stabilize_min_dwell(&sys, 0.1, 1, &AnalysisOptions::default()).map_err(e)?;
    let mut log = vec![format!("feasible {} (margin {:.3e})", r.feasible, r.margin)];
    if !r.feasible {
        return Err(log.join("; "));
    }
    let sweep = min_dwell_sweep_check(&sys, Some(&r.controller), 0.1, 2.0, 50).map_err(e)?;
    log.push(format!("sweep worst radius {:.4} at {:.3}", sweep.worst, sweep.argmax));
    let seq = DwellSequence::uniform(0.1, 0.5, 30, 2024).map_err(e)?;
    let tr = simulate(&sys, Some(&r.controller), &seq, &[1.0, 1.0], 1e-3).map_err(e)?;
    let norms = tr.impulse_norms();
    let decay = 2f64.sqrt() / norms.last().copied().unwrap_or(f64::INFINITY);
    log.push(format!("decay over {} impulses {decay:.3e}", norms.len()));
    let ok = sweep.pass && tr.diverged_at.is_none() && norms.len() == 30 && decay >= 1e3;
    verdict(ok, log)
}

fn criterion_5() -> Outcome {
    let opts = AnalysisOptions::default();
    let mut log = Vec::new();
    let mut ok = true;
    let plant = damped_integrator()
        .with_gains(Mat::from_row_slice(1, 2, &[-3.75, -11.5]), None)
        .map_err(e)?;
    let exact = spectral_sweep(&sd::lift(&plant).map_err(e)?, 5e-4, 3.0, 600, DEFAULT_REFINE_TOL).map_err(e)?;
    let search = SearchOptions {
        fixed_t_min: Some(0.001),
        ..Default::default()
    };
    for (d, want) in [(4, 1.7279), (6, 1.7252)] {
        let r = sd::search_fixed(&plant, Encoder::sos(d), 1.0, &search, &opts).map_err(e)?;
        ok &= close(&format!("first plant d={d} T_max"), r.t_max, want, 5e-3, &mut log);
        ok &= contained(r.t_min, r.t_max, &exact.stable, &mut log);
    }
    let osc = oscillator();
    let exact = spectral_sweep(&sd::lift(&osc).map_err(e)?, 0.01, 3.0, 600, DEFAULT_REFINE_TOL).map_err(e)?;
    let search = SearchOptions {
        fixed_t_min: Some(0.4),
        ..Default::default()
    };
    let r = sd::search_fixed(&osc, Encoder::sos(6), 1.0, &search, &opts).map_err(e)?;
    ok &= close("second plant d=6 T_min", r.t_min, 0.4, 1e-2, &mut log);
    ok &= close("second plant d=6 T_max", r.t_max, 1.8270, 5e-3, &mut log);
    ok &= contained(r.t_min, r.t_max, &exact.stable, &mut log);
    verdict(ok, log)
}

fn contained(lo: f64, hi: f64, stable: &[(f64, f64)], log: &mut Vec<String>) -> bool {
    let ok = stable.iter().any(|&(a, b)| a <= lo && hi <= b);
    log.push(format!("[{lo:.4}, {hi:.4}] within exact {stable:.4?}: {ok}"));
    ok
}

fn criterion_6() -> Outcome {
    let opts = AnalysisOptions::default();
    let mut log = Vec::new();
    let mut ok = true;
    for (t_max, d, k2_zero) in [(10.0, 2, false), (50.0, 2, false), (10.0, 3, true), (50.0, 4, true)] {
        let r = sd::synthesize(&damped_integrator(), 0.001, t_max, d, k2_zero, &opts).map_err(e)?;
        let zero = !k2_zero || r.k2.iter().all(|v| v.to_bits() == 0);
        let good = r.verified() && zero;
        log.push(format!(
            "T_max={t_max} d={d} k2_zero={k2_zero}: feasible {} radius {:?} K1 {:?} K2 {:?}",
            r.feasible,
            r.closed_loop_radius,
            r.k1.as_slice(),
            r.k2.as_slice()
        ));
        ok &= good;
    }
    verdict(ok, log)
}

fn criterion_7() -> Outcome {
    let opts = AnalysisOptions::default();
    let base = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -0.1]);
    let b = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
    let mut log = Vec::new();
    let mut ok = true;
    for delta in [5.0, 20.0] {
        for t_max in [10.0, 20.0] {
            let p = PolytopicSampledData::new(vec![base.clone(), &base * delta], b.clone()).map_err(e)?;
            let r = sd::synthesize_robust(&p, 0.001, t_max, 2, false, &opts).map_err(e)?;
            let mut line = format!(
                "delta={delta} T_max={t_max}: feasible {} radius {:?}",
                r.feasible, r.closed_loop_radius
            );
            let mut good = r.verified();
            if good {
                let verts = (0..p.a.len())
                    .map(|i| {
                        sd::lift(&p.vertex(i).with_gains(r.k1.clone(), Some(r.k2.clone()))?)
                    })
                    .collect::<dwellcert::Result<Vec<_>>>()
                    .map_err(e)?;
                let psys = PolytopicSystem::new(verts).map_err(e)?;
                let spec = DwellSpec::Ranged { t_min: 0.001, t_max };
                let cex = falsify_robust(&psys, &spec, 1000, 7).map_err(e)?;
                line.push_str(&format!(", counterexample {cex:?}"));
                good &= cex.is_none();
            }
            log.push(line);
            ok &= good;
        }
    }
    verdict(ok, log)
}

fn criterion_8() -> Outcome {
    let (current, looped) = (variable_count(2, 6, 3).0, variable_count(2, 6, 3).1);
    let ok = current == 21 && looped == 87;
    verdict(ok, vec![format!("current {current}, looped {looped}")])
}

fn criterion_9() -> Outcome {
    let opts = AnalysisOptions::default();
    let mut log = Vec::new();
    let mut ok = true;

    // reversing time turns a d-orientation witness into an e-orientation one
    let sys = ranged_system();
    let t = 0.3;
    let cd = periodic_certificate(&sys, t, Encoder::sos(4), Form::D, &opts).map_err(e)?;
    let ce = periodic_certificate(&sys, t, Encoder::sos(4), Form::E, &opts).map_err(e)?;
    let mut flipped = cd.clone();
    flipped.form = Form::E;
    if let dwellcert::sos::Witness::Poly { poly } = &cd.witness {
        flipped.witness = dwellcert::sos::Witness::Poly {
            poly: poly.reparametrize(-1.0, t),
        };
    }
    let audit = verify_certificate(&flipped, std::slice::from_ref(&sys), 200, 1e-6).map_err(e)?;
    let step = cd.feasible && ce.feasible && audit.pass;
    log.push(format!("d/e closure {step}"));
    ok &= step;

    // positivity of the witness across the grid
    let w = &cd.witness;
    let pos = (0..=200).all(|k| {
        let tau = t * k as f64 / 200.0;
        dwellcert::linalg::min_eig_sym(&w.value(tau)).is_ok_and(|l| l > 0.0)
    });
    log.push(format!("positivity {pos}"));
    ok &= pos;

    // every feasible probe of the search agrees with the exact test
    let sw = spectral_sweep(&sys, 0.05, 1.0, 200, 1e-6).map_err(e)?;
    let mut sound = true;
    for k in 0..12 {
        let th = 0.1 + 0.05 * k as f64;
        let c = periodic_certificate(&sys, th, Encoder::sos(4), Form::D, &opts).map_err(e)?;
        if c.feasible {
            sound &= c.audit.pass && sw.stable.iter().any(|&(a, b)| a <= th && th <= b);
        }
    }
    log.push(format!("sos soundness {sound}"));
    ok &= sound;

    // matrix exponential: inverse and derivative
    let a = Mat::from_row_slice(3, 3, &[0.3, -1.0, 2.0, 0.5, -0.2, 0.1, 1.5, 0.0, -0.7]);
    let inv = (expm(&a, 0.8).map_err(e)? * expm(&a, -0.8).map_err(e)? - Mat::identity(3, 3)).amax();
    let h = 1e-5;
    let fd = (expm(&a, 0.8 + h).map_err(e)? - expm(&a, 0.8 - h).map_err(e)?) / (2.0 * h);
    let der = (fd - &a * expm(&a, 0.8).map_err(e)?).amax();
    let ex = inv < 1e-12 && der < 1e-7;
    log.push(format!("expm inverse {inv:.1e} derivative {der:.1e}"));
    ok &= ex;

    // simulation against monodromy powers
    let seq = DwellSequence::periodic(t, 10).map_err(e)?;
    let tr = simulate(&sys, None, &seq, &[1.0, -1.0], 1e-3).map_err(e)?;
    let m = &sys.j * expm(&sys.a, t).map_err(e)?;
    let mut x = nalgebra::DVector::from_column_slice(&[1.0, -1.0]);
    let mut err: f64 = 0.0;
    for (k, flag) in tr.impulse.iter().enumerate() {
        if *flag {
            x = &m * x;
            err = err.max((nalgebra::DVector::from_column_slice(&tr.states[k]) - &x).norm());
        }
    }
    log.push(format!("simulation vs powers {err:.1e}"));
    ok &= err < 1e-8;

    // synthesized controllers close under inversion
    let r = stabilize_min_dwell(&synthesis_plant(), 0.1, 1, &opts).map_err(e)?;
    let p = stabilize_periodic(&synthesis_plant(), 0.1, 2, &opts).map_err(e)?;
    let dual = r.closure.pass && p.closure.pass;
    log.push(format!("duality closure {dual}"));
    ok &= dual;

    // determinism under fixed seeds
    let psys = PolytopicSystem::new(vec![sys.clone(), min_dwell_system()]).map_err(e)?;
    let spec = DwellSpec::Ranged { t_min: 0.2, t_max: 0.5 };
    let same = falsify_robust(&psys, &spec, 20, 3).map_err(e)? == falsify_robust(&psys, &spec, 20, 3).map_err(e)?
        && DwellSequence::uniform(0.1, 0.5, 30, 9).map_err(e)? == DwellSequence::uniform(0.1, 0.5, 30, 9).map_err(e)?;
    log.push(format!("determinism {same}"));
    ok &= same;

    verdict(ok, log)
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("ranged dwell-time search", criterion_1),
        ("exact periodic region", criterion_2),
        ("minimum dwell-time", criterion_3),
        ("minimum dwell-time synthesis", criterion_4),
        ("sampled-data fixed-gain analysis", criterion_5),
        ("sampled-data synthesis", criterion_6),
        ("robust sampled-data synthesis", criterion_7),
        ("variable counts", criterion_8),
        ("property suites", criterion_9),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let secs = start.elapsed().as_secs_f64();
        match out {
            Ok(detail) => println!("criterion {} PASS ({name}, {secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL ({name}, {secs:.1}s): {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
