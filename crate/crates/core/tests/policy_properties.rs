use pocmab::policy::{
    init_posterior, posterior_from_history, select_arm, update_posterior, History,
};
use pocmab::{Matrix, RandomStream, SpdMatrix, Vector};
use proptest::prelude::*;

fn vec_of(d: usize) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-3.0f64..3.0, d).prop_map(Vector::from_vec)
}

fn history(d: usize) -> impl Strategy<Value = Vec<(Vector, f64)>> {
    prop::collection::vec((vec_of(d), -5.0f64..5.0), 0..60)
}

fn eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut e: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

proptest! {
    #[test]
    fn batch_and_recursive_agree((d, steps) in (1usize..6).prop_flat_map(|d| (Just(d), history(d)))) {
        let prior = SpdMatrix::scaled_identity(d, 2.0).unwrap();
        let mut hist = History::new();
        let mut folded = init_posterior(&prior);
        for (x, r) in &steps {
            folded = update_posterior(&folded, x, *r).unwrap();
            hist.push(x.clone(), *r);
        }
        let batch = posterior_from_history(&prior, &hist).unwrap();
        let bp = batch.precision().matrix();
        prop_assert!((bp - folded.precision().matrix()).norm() <= 1e-8 * bp.norm());
        let scale = batch.mu_hat().norm().max(1e-12);
        prop_assert!((batch.mu_hat() - folded.mu_hat()).norm() <= 1e-8 * scale.max(1.0));
        prop_assert_eq!(folded.t(), steps.len() + 1);
    }

    #[test]
    fn precision_eigenvalues_never_decrease((d, steps) in (1usize..6).prop_flat_map(|d| (Just(d), history(d)))) {
        let mut state = init_posterior(&SpdMatrix::identity(d));
        let mut prev = eigenvalues(state.precision().matrix());
        for (x, r) in &steps {
            state = update_posterior(&state, x, *r).unwrap();
            let next = eigenvalues(state.precision().matrix());
            for (a, b) in prev.iter().zip(&next) {
                prop_assert!(*b >= *a - 1e-9 * a.abs().max(1.0), "eigenvalue fell from {} to {}", a, b);
            }
            prev = next;
        }
    }

    #[test]
    fn argmax_ignores_positive_scale(
        (rows, mu) in (1usize..5, 1usize..8).prop_flat_map(|(d, n)| {
            (prop::collection::vec(-3.0f64..3.0, n * d).prop_map(move |v| Matrix::from_row_slice(n, d, &v)), vec_of(d))
        }),
        c in 0.001f64..1000.0,
    ) {
        prop_assert_eq!(select_arm(&rows, &mu).unwrap(), select_arm(&rows, &(&mu * c)).unwrap());
    }

    #[test]
    fn argmax_ignores_shifts_orthogonal_to_mu(
        (rows, mu, shift) in (2usize..5, 1usize..8).prop_flat_map(|(d, n)| {
            (
                prop::collection::vec(-3.0f64..3.0, n * d).prop_map(move |v| Matrix::from_row_slice(n, d, &v)),
                vec_of(d),
                vec_of(d),
            )
        }),
    ) {
        prop_assume!(mu.norm() > 1e-2);
        let scores = &rows * &mu;
        let mut sorted: Vec<f64> = scores.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        // Near-ties could flip under rounding of the shifted scores.
        prop_assume!(sorted.len() < 2 || sorted[sorted.len() - 1] - sorted[sorted.len() - 2] > 1e-9);
        let c = &shift - &mu * (shift.dot(&mu) / mu.norm_squared());
        let shifted = Matrix::from_fn(rows.nrows(), rows.ncols(), |i, j| rows[(i, j)] + c[j]);
        prop_assert_eq!(select_arm(&rows, &mu).unwrap(), select_arm(&shifted, &mu).unwrap());
    }
}

/// With data `x̂ᵀμ* + noise` from a fixed design, the estimate is closer to
/// `μ*` at t=1000 than at t=10 in at least 95 of 100 seeded runs.
#[test]
fn posterior_is_consistent_in_most_runs() {
    let d = 5;
    let mut closer = 0;
    for seed in 0..100 {
        let mut rng = RandomStream::from_seed(seed).substream("consistency");
        let mu_star = Vector::from_fn(d, |_, _| rng.standard_normal());
        let mut state = init_posterior(&SpdMatrix::identity(d));
        let mut err10 = 0.0;
        for t in 1..=1000 {
            let x = Vector::from_fn(d, |_, _| rng.standard_normal());
            let r = x.dot(&mu_star) + rng.standard_normal();
            state.update(&x, r).unwrap();
            if t == 10 {
                err10 = (state.mu_hat() - &mu_star).norm();
            }
        }
        if (state.mu_hat() - &mu_star).norm() < err10 {
            closer += 1;
        }
    }
    assert!(closer >= 95, "only {closer}/100 runs improved");
}
