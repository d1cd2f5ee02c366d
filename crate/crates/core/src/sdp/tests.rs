use super::*;
use proptest::prelude::*;

fn m(r: usize, v: &[f64]) -> Mat {
    Mat::from_row_slice(r, r, v)
}

fn eye(n: usize) -> Mat {
    Mat::identity(n, n)
}

fn opts() -> SdpOptions {
    SdpOptions::default()
}

#[test]
fn identity_margin_is_one() {
    let mut p = SdpProblem::new(1);
    p.objective[0] = 1.0;
    p.add_block(LmiBlock::new(eye(2), "b").with_term(0, -eye(2)));
    let s = solve(&p, &opts()).unwrap();
    assert_eq!(s.status, SdpStatus::Optimal);
    assert!((s.x[0] - 1.0).abs() < 1e-7, "{}", s.x[0]);
}

fn hankel_problem(sign: f64) -> SdpProblem {
    let mut p = SdpProblem::new(1);
    p.objective[0] = sign;
    p.add_block(LmiBlock::new(m(2, &[0.0, 1.0, 1.0, 0.0]), "x").with_term(0, eye(2)));
    p.add_block(LmiBlock::new(m(1, &[3.0]), "cap").with_term(0, m(1, &[-1.0])));
    p
}

#[test]
fn two_by_two_bounds() {
    let s = solve(&hankel_problem(1.0), &opts()).unwrap();
    assert_eq!(s.status, SdpStatus::Optimal);
    assert!((s.x[0] - 3.0).abs() < 1e-6);
    let s = solve(&hankel_problem(-1.0), &opts()).unwrap();
    assert_eq!(s.status, SdpStatus::Optimal);
    assert!((s.x[0] - 1.0).abs() < 1e-6, "{}", s.x[0]);
}

#[test]
fn equality_conflict_is_infeasible() {
    let mut p = SdpProblem::new(1);
    p.add_block(LmiBlock::new(m(1, &[0.0]), "x").with_term(0, m(1, &[1.0])));
    p.add_equality(vec![(0, 1.0)], -1.0);
    let s = solve(&p, &opts()).unwrap();
    assert_eq!(s.status, SdpStatus::Infeasible);
}

#[test]
fn conic_infeasibility_is_detected() {
    // x >= 1 and x <= -1
    let mut p = SdpProblem::new(1);
    p.add_block(LmiBlock::new(m(1, &[-1.0]), "lo").with_term(0, m(1, &[1.0])));
    p.add_block(LmiBlock::new(m(1, &[-1.0]), "hi").with_term(0, m(1, &[-1.0])));
    let s = solve(&p, &opts()).unwrap();
    assert_eq!(s.status, SdpStatus::Infeasible);
    assert!(s.certificate_residual.unwrap() <= 1e-6, "{:?}", s);
}

#[test]
fn unbounded_direction_is_reported() {
    let mut p = SdpProblem::new(2);
    p.objective[1] = 1.0;
    p.add_block(LmiBlock::new(m(1, &[1.0]), "a").with_term(0, m(1, &[1.0])));
    let s = solve(&p, &opts()).unwrap();
    assert_eq!(s.status, SdpStatus::Unbounded);
}

fn margin_problem(d: &[f64]) -> (SdpProblem, usize) {
    let mut p = SdpProblem::new(1);
    let n = d.len();
    p.add_block(LmiBlock::new(Mat::from_diagonal(&DVector::from_column_slice(d)), "d").with_term(0, -eye(n)));
    p.add_block(LmiBlock::new(m(1, &[1.0]), "cap").with_term(0, m(1, &[-1.0])));
    (p, 0)
}

#[test]
fn margin_cap_is_active() {
    let (p, t) = margin_problem(&[2.0, 3.0]);
    let r = max_margin(&p, t, &opts()).unwrap();
    assert!((r.t_star - 1.0).abs() < 1e-6, "{}", r.t_star);
}

#[test]
fn margin_hits_eigenvalue() {
    let (p, t) = margin_problem(&[0.5, 3.0]);
    let r = max_margin(&p, t, &opts()).unwrap();
    assert!((r.t_star - 0.5).abs() < 1e-6, "{}", r.t_star);
}

#[test]
fn equalities_with_matrix_variable() {
    // 2x2 symmetric X = [[a, b], [b, c]] >= 0, trace = 1, minimise <C, X>.
    let c = m(2, &[2.0, 1.0, 1.0, 3.0]);
    let mut p = SdpProblem::new(3);
    let e = |i: usize, j: usize| {
        let mut z = Mat::zeros(2, 2);
        z[(i, j)] = 1.0;
        z[(j, i)] = 1.0;
        z
    };
    p.add_block(LmiBlock::new(Mat::zeros(2, 2), "X").with_term(0, e(0, 0)).with_term(1, e(0, 1)).with_term(2, e(1, 1)));
    p.add_equality(vec![(0, 1.0), (2, 1.0)], 1.0);
    p.objective = vec![-c[(0, 0)], -2.0 * c[(0, 1)], -c[(1, 1)]];
    let s = solve(&p, &opts()).unwrap();
    assert_eq!(s.status, SdpStatus::Optimal);
    let lmin = c.symmetric_eigenvalues().min();
    assert!((-s.objective - lmin).abs() < 1e-6);
    assert!(s.dual_objective >= s.objective - 1e-6);
}

#[test]
fn sparse_dump_lists_entries() {
    let txt = hankel_problem(1.0).to_sparse_text();
    assert!(txt.contains("0 0 1 -1 1.0"));
    assert!(txt.contains("obj 0"));
}

fn random_problem(seed: Vec<f64>) -> SdpProblem {
    // strictly feasible at x = 0 by construction, bounded by a box block
    let nv = 3;
    let mut p = SdpProblem::new(nv);
    let mut blk = LmiBlock::new(eye(3) * 2.0, "rand");
    for v in 0..nv {
        let s = &seed[6 * v..6 * v + 6];
        blk.add_term(v, m(3, &[s[0], s[1], s[2], s[1], s[3], s[4], s[2], s[4], s[5]]));
    }
    p.add_block(blk);
    for v in 0..nv {
        p.add_block(LmiBlock::new(m(1, &[5.0]), "ub").with_term(v, m(1, &[-1.0])));
        p.add_block(LmiBlock::new(m(1, &[5.0]), "lb").with_term(v, m(1, &[1.0])));
    }
    p.objective = seed[18..21].to_vec();
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn optimal_points_are_feasible_and_dual_bounds(seed in proptest::collection::vec(-1.0f64..1.0, 21)) {
        let p = random_problem(seed);
        let s = solve(&p, &opts()).unwrap();
        prop_assert_eq!(s.status, SdpStatus::Optimal);
        for b in &p.blocks {
            prop_assert!(min_eig_sym(&b.eval(&s.x)).unwrap() >= -1e-8 * 5.0);
        }
        prop_assert!(s.dual_objective >= s.objective - 1e-6);
    }

    #[test]
    fn solves_are_reproducible(seed in proptest::collection::vec(-1.0f64..1.0, 21)) {
        let p = random_problem(seed);
        let a = solve(&p, &opts()).unwrap();
        let b = solve(&p, &opts()).unwrap();
        prop_assert_eq!(a.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
