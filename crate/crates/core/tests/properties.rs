use proptest::prelude::*;

use swlab::constraints::{alpha_update, omega, AlmState, Method};
use swlab::diracsim::{eigenvalues, jacobian_at, vector_field, DiracConfig, DiracState, Objective};
use swlab::nets::{critic_gradients, LinearCritic, LinearModel};
use swlab::oracle::{empirical_w1, w1_assignment, w1_sorted_1d};
use swlab::rng::seeded;
use swlab::tape::Tape;
use swlab::trainer::{adam_update, AdamConfig, AdamState};

type Points = Vec<Vec<f64>>;

fn points(n: usize, d: usize) -> impl Strategy<Value = Points> {
    prop::collection::vec(prop::collection::vec(-5.0..5.0f64, d), n)
}

fn same_size_sets(d: usize) -> impl Strategy<Value = (Points, Points, Points)> {
    (1usize..7).prop_flat_map(move |n| (points(n, d), points(n, d), points(n, d)))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Minimum over all permutations, by enumeration.
fn brute_force_w1(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    fn go(a: &[Vec<f64>], b: &[Vec<f64>], used: &mut [bool], i: usize, acc: f64, best: &mut f64) {
        if i == a.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..b.len() {
            if !used[j] {
                used[j] = true;
                go(a, b, used, i + 1, acc + dist(&a[i], &b[j]), best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(a, b, &mut vec![false; b.len()], 0, 0.0, &mut best);
    best / a.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn w1_is_symmetric((a, b, _) in same_size_sets(2)) {
        let ab = empirical_w1(&a, &b).unwrap();
        let ba = empirical_w1(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
    }

    #[test]
    fn w1_satisfies_the_triangle_inequality((a, b, c) in same_size_sets(2)) {
        let ab = empirical_w1(&a, &b).unwrap();
        let bc = empirical_w1(&b, &c).unwrap();
        let ac = empirical_w1(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn w1_of_a_set_with_itself_is_zero((a, _, _) in same_size_sets(3)) {
        prop_assert_eq!(empirical_w1(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn sorted_and_assignment_solvers_agree_in_1d((a, b, _) in same_size_sets(1)) {
        let xa: Vec<f64> = a.iter().map(|p| p[0]).collect();
        let xb: Vec<f64> = b.iter().map(|p| p[0]).collect();
        let (sorted, _) = w1_sorted_1d(&xa, &xb).unwrap();
        let (assigned, _) = w1_assignment(&a, &b).unwrap();
        prop_assert!((sorted - assigned).abs() <= 1e-12 * (1.0 + sorted));
    }

    #[test]
    fn assignment_matches_permutation_enumeration((a, b, _) in same_size_sets(2)) {
        let (w, coupling) = w1_assignment(&a, &b).unwrap();
        let brute = brute_force_w1(&a, &b);
        prop_assert!((w - brute).abs() <= 1e-12 * (1.0 + brute));
        let mut targets: Vec<usize> = coupling.pairs.iter().map(|p| p.1).collect();
        targets.sort_unstable();
        prop_assert_eq!(targets, (0..b.len()).collect::<Vec<_>>());
    }

    #[test]
    fn omega_is_exact_for_linear_critics(
        w in prop::collection::vec(-2.0..2.0f64, 2),
        xi in prop::collection::vec(-3.0..3.0f64, 2),
        xj in prop::collection::vec(-3.0..3.0f64, 2),
        m in 1usize..16,
        seed in any::<u64>(),
    ) {
        let mut tape = Tape::new();
        let critic = LinearCritic::bind(&mut tape, &w);
        let (_, est) = omega(&mut tape, &critic, &xi, &xj, m, &mut seeded(seed, 0)).unwrap();
        let expected = 1.0 - w.iter().map(|v| v * v).sum::<f64>();
        prop_assert!((est.value - expected).abs() <= 1e-12);
    }

    #[test]
    fn linear_critic_gradient_is_its_weight(
        w in prop::collection::vec(-2.0..2.0f64, 3),
        xs in points(4, 3),
    ) {
        for g in critic_gradients(&LinearModel(w.clone()), &xs).unwrap() {
            prop_assert_eq!(&g, &w);
        }
    }

    #[test]
    fn dirac_jacobian_matches_finite_differences(
        w in -1.5..1.5f64,
        theta in -1.5..1.5f64,
        lambda in 0.1..10.0f64,
        gp in any::<bool>(),
        logistic in any::<bool>(),
    ) {
        let mut cfg = if gp { DiracConfig::gp(1.0, lambda) } else { DiracConfig::cp(lambda) };
        if logistic {
            cfg.objective = Objective::Logistic;
        }
        let j = jacobian_at(DiracState::new(w, theta), &cfg);
        let h = 1e-6;
        let field = |w: f64, t: f64| {
            let f = vector_field(DiracState::new(w, t), &cfg);
            [f.d_theta, f.d_w]
        };
        let (tp, tm) = (field(w, theta + h), field(w, theta - h));
        let (wp, wm) = (field(w + h, theta), field(w - h, theta));
        for row in 0..2 {
            let fd = [(tp[row] - tm[row]) / (2.0 * h), (wp[row] - wm[row]) / (2.0 * h)];
            for col in 0..2 {
                let scale = 1.0f64.max(fd[col].abs());
                prop_assert!((j[row][col] - fd[col]).abs() / scale < 1e-6,
                    "entry ({row},{col}): {} vs {}", j[row][col], fd[col]);
            }
        }
    }

    #[test]
    fn eigenvalues_reproduce_trace_and_determinant(
        a in -5.0..5.0f64, b in -5.0..5.0f64, c in -5.0..5.0f64, d in -5.0..5.0f64,
    ) {
        let [l1, l2] = eigenvalues([[a, b], [c, d]]);
        let sum_re = l1.re + l2.re;
        prop_assert!((sum_re - (a + d)).abs() < 1e-9);
        prop_assert!((l1.im + l2.im).abs() < 1e-12);
        let prod_re = l1.re * l2.re - l1.im * l2.im;
        prop_assert!((prod_re - (a * d - b * c)).abs() < 1e-8 * (1.0 + (a * d - b * c).abs()));
    }

    #[test]
    fn adam_leaves_parameters_alone_under_zero_gradient(
        params in prop::collection::vec(-10.0..10.0f64, 1..8),
        steps in 1usize..20,
        ascent in any::<bool>(),
    ) {
        let mut p = params.clone();
        let mut state = AdamState::new(p.len());
        let zero = vec![0.0; p.len()];
        for _ in 0..steps {
            adam_update(&mut state, &mut p, &zero, 1e-3, &AdamConfig::default(), ascent).unwrap();
        }
        prop_assert_eq!(p, params);
    }

    #[test]
    fn adam_first_step_has_magnitude_lr(
        grad in prop::collection::vec(prop_oneof![-1e3..-1e-3f64, 1e-3..1e3f64], 1..8),
        ascent in any::<bool>(),
    ) {
        let lr = 2e-4;
        let mut p = vec![0.0; grad.len()];
        let mut state = AdamState::new(p.len());
        adam_update(&mut state, &mut p, &grad, lr, &AdamConfig::default(), ascent).unwrap();
        for (step, g) in p.iter().zip(&grad) {
            let sign = if ascent { 1.0 } else { -1.0 };
            prop_assert!((step - sign * lr * g.signum()).abs() < 1e-9);
        }
    }

    #[test]
    fn projected_multiplier_stays_nonnegative(
        alpha in 0.0..50.0f64, rho in 0.1..100.0f64, g in -10.0..10.0f64,
    ) {
        let state = AlmState { alpha, rho };
        for method in [Method::SwganAl, Method::SganAl] {
            prop_assert!(alpha_update(state, g, method).alpha >= 0.0);
        }
        let free = alpha_update(state, g, Method::WganAl).alpha;
        prop_assert!((free - (alpha - rho * g)).abs() < 1e-12);
    }
}
