use combicbf::constraints::{build_rows, build_rows_mcbf_diag};
use combicbf::logic::LogicTree;
use combicbf::mcbf::{self, BarrierBlock, EigenSystem, SymmetricMatrix};
use combicbf::primitives::{make_ball_interior, make_halfspace, ClassKappa, SingleIntegrator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> SymmetricMatrix {
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = rng.gen_range(-3.0..3.0);
            rows[i][j] = v;
            rows[j][i] = v;
        }
    }
    SymmetricMatrix::from_rows(rows).unwrap()
}

/// `Q diag(values) Q^T` for a random orthogonal `Q` (Gram-Schmidt).
fn with_spectrum(rng: &mut ChaCha8Rng, values: &[f64]) -> SymmetricMatrix {
    let n = values.len();
    let q = random_orthonormal(rng, n);
    let es = EigenSystem {
        values: values.to_vec(),
        vectors: q,
    };
    es.map_spectrum(|l| l)
}

fn random_orthonormal(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for _ in 0..2 {
            for e in &q {
                let d: f64 = e.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, ei) in v.iter_mut().zip(e) {
                    *vi -= d * ei;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            q.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    q
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn eigen_reconstruction() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in 1..=8 {
        for _ in 0..25 {
            let h = random_symmetric(&mut rng, n);
            let es = mcbf::eigen_sorted(&h).unwrap();
            assert!(es.values.windows(2).all(|w| w[0] <= w[1]));
            assert!(es.orthonormality_error() <= 1e-10);
            assert!(es.reconstruct().max_diff(&h) <= (1e-10 * h.max_abs()).max(1e-12));
        }
    }
}

#[test]
fn spectral_mapping() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for alpha in [ClassKappa::linear(2.5).unwrap(), ClassKappa::scaled_cubic(0.7).unwrap()] {
        for n in 1..=8 {
            for _ in 0..20 {
                let h = random_symmetric(&mut rng, n);
                let lam = mcbf::eigen_sorted(&h).unwrap().values;
                let lifted = mcbf::apply_class_k_matrix(alpha, &h).unwrap();
                let got = mcbf::eigen_sorted(&lifted).unwrap().values;
                let want = sorted(lam.iter().map(|l| alpha.eval(*l)).collect());
                let scale = want.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                assert!(max_gap(&got, &want) <= 1e-10 * scale, "{got:?} vs {want:?}");
            }
        }
    }
}

#[test]
fn h_prime_spectrum_and_commutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 1..=8 {
        for _ in 0..20 {
            let h = random_symmetric(&mut rng, n);
            let lam = mcbf::eigen_sorted(&h).unwrap().values;
            let pivot = lam[rng.gen_range(0..n)];
            let hp = mcbf::build_h_prime(&h, pivot).unwrap();
            let got = mcbf::eigen_sorted(&hp).unwrap().values;
            let want = sorted(lam.iter().map(|l| pivot + (pivot - l).abs()).collect());
            assert!(max_gap(&got, &want) <= 1e-10 * want.iter().fold(1.0f64, |m, v| m.max(v.abs())));
            assert!(hp.commutator_norm(&h) <= 1e-9);
        }
    }
}

#[test]
fn repeated_eigenvalues_are_basis_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let h = with_spectrum(&mut rng, &[-1.0, 2.0, 2.0, 2.0, 5.0]);
        let es = mcbf::eigen_sorted(&h).unwrap();
        // rotate the basis of the 3-dimensional eigenspace at random
        let r = random_orthonormal(&mut rng, 3);
        let mut other = es.clone();
        for (a, row) in r.iter().enumerate() {
            let mut v = vec![0.0; 5];
            for (b, c) in row.iter().enumerate() {
                for (vi, ei) in v.iter_mut().zip(&es.vectors[1 + b]) {
                    *vi += c * ei;
                }
            }
            other.vectors[1 + a] = v;
        }
        let f = |l: f64| 2.0 + (2.0 - l).abs();
        assert!(es.map_spectrum(f).max_diff(&other.map_spectrum(f)) <= 1e-10);
        let g = |l: f64| 0.3 * (l + l * l * l);
        assert!(es.map_spectrum(g).max_diff(&other.map_spectrum(g)) <= 1e-10);
    }
}

#[test]
fn diagonal_pipeline_matches_scalar_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sys = SingleIntegrator::new(1, 2);
    let alpha = ClassKappa::linear(1.3).unwrap();
    for _ in 0..200 {
        let p = rng.gen_range(1..6);
        let entries: Vec<_> = (0..p)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    make_halfspace(vec![rng.gen_range(-1.0..1.0), 1.0], rng.gen_range(-1.0..1.0)).unwrap()
                } else {
                    make_ball_interior(vec![rng.gen_range(-1.0..1.0), 0.0], rng.gen_range(0.5..2.0)).unwrap()
                }
            })
            .collect();
        let r = rng.gen_range(1..=p);
        let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let tree = LogicTree::choose_leaves(r, 0..p);
        let m = build_rows_mcbf_diag(&tree, &[BarrierBlock::Diagonal(entries.clone())], &sys, alpha, &x).unwrap();
        let s = build_rows(&tree, &entries, &sys, alpha, &x).unwrap();
        for (a, b) in m.iter().zip(&s) {
            assert!((a.b - b.b).abs() <= 1e-12);
            assert_eq!(a.a, b.a);
        }

        // matrix route: -alpha(H') read in the eigenbasis equals the scalar
        // right-hand sides sorted by primitive value
        let values: Vec<f64> = entries.iter().map(|e| e.value(&x)).collect();
        let h = SymmetricMatrix::diagonal(&values);
        let pivot = combicbf::logic::evaluate_pivot(&tree, &sorted(values.clone())).unwrap().pivot;
        let via_matrix = mcbf::lifted_rhs(alpha, &h, pivot).unwrap();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        for (slot, &k) in order.iter().enumerate() {
            assert!((via_matrix[slot] - s[k].b).abs() <= 1e-12);
        }
    }
}

#[test]
fn block_top_eigenvalue_is_or_pivot() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let d: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let lam = mcbf::eigenvalue_pivot_inputs(&[SymmetricMatrix::diagonal(&d)]).unwrap();
        let or = combicbf::logic::evaluate_pivot(&LogicTree::choose_leaves(1, 0..4), &d).unwrap().pivot;
        assert_eq!(*lam.last().unwrap(), or);
    }
}
