use combicbf::constraints::ConstraintRow;
use combicbf::qp::{self, QpProblem, QpSolution, QpStatus, SolverOptions};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_problem(rng: &mut ChaCha8Rng, m: usize, max_rows: usize) -> QpProblem {
    let rows = rng.gen_range(0..=max_rows);
    let kd = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let rows = (0..rows)
        .map(|k| ConstraintRow {
            a: (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            b: rng.gen_range(-1.0..1.0),
            source_index: k,
        })
        .collect();
    QpProblem::new(kd, rows)
}

/// Absolute KKT tolerance widened by the rounding floor of evaluating
/// `mu * (a . u - b)` in double precision.
fn kkt_tol(s: &QpSolution) -> f64 {
    let mu = s.duals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let u = s.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    1e-9 + 1e-14 * mu * (1.0 + u)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[test]
fn agrees_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut infeasible = 0;
    for m in [1, 2, 3] {
        for _ in 0..1500 {
            let p = random_problem(&mut rng, m, 8);
            let s = qp::solve(&p, SolverOptions::default()).unwrap();
            let o = qp::solve_bruteforce(&p).unwrap();
            assert_eq!(s.is_optimal(), o.is_optimal(), "{p:?}\n{s:?}\n{o:?}");
            if s.is_optimal() {
                assert!(dist(&s.u, &o.u) <= 1e-7, "{p:?}");
                let k = qp::verify_kkt(&p, &s);
                assert!(k.max() <= kkt_tol(&s), "{k:?} {s:?}");
            } else {
                infeasible += 1;
            }
        }
    }
    assert!(infeasible > 50, "campaign should exercise infeasible instances");
}

#[test]
fn certificates_prove_infeasibility() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut seen = 0;
    for _ in 0..3000 {
        let p = random_problem(&mut rng, 2, 8);
        let s = qp::solve(&p, SolverOptions::default()).unwrap();
        if let QpStatus::Infeasible { certificate } = &s.status {
            seen += 1;
            assert!(certificate.iter().all(|y| *y >= 0.0));
            for c in 0..2 {
                let v: f64 = p.rows.iter().zip(certificate).map(|(r, y)| y * r.a[c]).sum();
                assert!(v.abs() <= 1e-9, "{v}");
            }
            let rhs: f64 = p.rows.iter().zip(certificate).map(|(r, y)| y * r.b).sum();
            assert!(rhs > 0.0);
        }
    }
    assert!(seen > 0);
}

#[test]
fn warm_start_matches_cold() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..1000 {
        let p = random_problem(&mut rng, 3, 10);
        let cold = qp::solve(&p, SolverOptions::default()).unwrap();
        let seed: Vec<usize> = (0..p.rows.len()).filter(|_| rng.gen_bool(0.4)).collect();
        let warm = qp::solve_warm(&p, SolverOptions::default(), &seed).unwrap();
        assert_eq!(cold.is_optimal(), warm.is_optimal());
        if cold.is_optimal() {
            assert!(dist(&cold.u, &warm.u) <= 1e-8);
        }
    }
}

#[test]
fn larger_instances_satisfy_kkt() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let p = random_problem(&mut rng, 12, 60);
        let s = qp::solve(&p, SolverOptions::default()).unwrap();
        if s.is_optimal() {
            let k = qp::verify_kkt(&p, &s);
            assert!(k.max() <= kkt_tol(&s), "{k:?} {s:?}");
        }
    }
}

proptest! {
    #[test]
    fn solution_is_idempotent(seed in any::<u64>()) {
        // re-solving from the optimum as desired control changes nothing
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_problem(&mut rng, 2, 6);
        let s = qp::solve(&p, SolverOptions::default()).unwrap();
        if s.is_optimal() {
            let again = qp::solve(&QpProblem::new(s.u.clone(), p.rows.clone()), SolverOptions::default()).unwrap();
            prop_assert!(dist(&again.u, &s.u) <= 1e-9);
        }
    }
}

#[test]
fn nearly_antiparallel_rows_match_exact_vertex() {
    // vertex computed in rational arithmetic from the f64 inputs
    let exact = [1698.2002446131828, 1189.568264869946];
    let p = QpProblem::new(
        vec![-1.4357640918494425, 0.6987839854016595],
        vec![
            ConstraintRow {
                a: vec![-0.5686061552195896, 0.8118398435459135],
                b: 0.1318021567324097,
                source_index: 0,
            },
            ConstraintRow {
                a: vec![0.6382424795255197, -0.9109716286444964],
                b: 0.20059522037946387,
                source_index: 1,
            },
        ],
    );
    let s = qp::solve(&p, SolverOptions::default()).unwrap();
    let o = qp::solve_bruteforce(&p).unwrap();
    assert_eq!(s.active_set, vec![0, 1]);
    assert!(dist(&s.u, &exact) <= 1e-8, "{:?}", s.u);
    assert!(dist(&o.u, &exact) <= 1e-8, "{:?}", o.u);
    // multipliers near 2.8e7 put the absolute complementarity floor far above 1e-9
    assert!(qp::verify_kkt(&p, &s).max() <= kkt_tol(&s));
}
