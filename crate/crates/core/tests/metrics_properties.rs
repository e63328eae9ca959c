use pocmab::environment::{derive_operators, generate_instance, GenScheme, Whitening};
use pocmab::harness::{map_replications, ExperimentConfig};
use pocmab::metrics::{
    covariance_rate_check, estimate_constants, estimate_constants_range, instant_regret,
    limit_quantities, normalized_regret,
};
use pocmab::policy::{select_arm, PolicyKind};
use pocmab::{Matrix, RandomStream, Vector};
use proptest::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

/// `E[max]` and `E[max²]` of `n` standard normals by Simpson quadrature.
fn quadrature(n: usize) -> (f64, f64) {
    let normal = Normal::standard();
    let (lo, hi, steps) = (-12.0, 12.0, 24_000);
    let h = (hi - lo) / steps as f64;
    let mut acc = (0.0, 0.0);
    for i in 0..=steps {
        let x = lo + i as f64 * h;
        let w = match i {
            0 => 1.0,
            _ if i == steps => 1.0,
            _ if i % 2 == 1 => 4.0,
            _ => 2.0,
        };
        let dens = n as f64 * normal.pdf(x) * normal.cdf(x).powi(n as i32 - 1);
        acc.0 += w * x * dens;
        acc.1 += w * x * x * dens;
    }
    (acc.0 * h / 3.0, acc.1 * h / 3.0)
}

#[test]
fn quadrature_oracle_matches_closed_forms() {
    let rt_pi = std::f64::consts::PI.sqrt();
    assert!((quadrature(2).0 - 1.0 / rt_pi).abs() < 1e-9);
    assert!((quadrature(3).0 - 1.5 / rt_pi).abs() < 1e-9);
    assert!((quadrature(2).1 - 1.0).abs() < 1e-9);
}

#[test]
fn constants_match_quadrature() {
    let mut rng = RandomStream::from_seed(51).substream("constants");
    for n in [2, 3, 5, 10] {
        let c = estimate_constants(n, 200_000, &mut rng).unwrap();
        let (c_q, k_q) = quadrature(n);
        assert!(
            (c.c_n - c_q).abs() <= 3.0 * c.std_error_c,
            "N={n}: c {} vs {c_q}",
            c.c_n
        );
        assert!(
            (c.k_n - k_q).abs() <= 3.0 * c.std_error_k,
            "N={n}: k {} vs {k_q}",
            c.k_n
        );
        assert!(c.c_n >= 0.0 && c.k_n >= 1.0 - 3.0 * c.std_error_k);
    }
}

#[test]
fn constants_grow_with_arm_count() {
    let mut rng = RandomStream::from_seed(52).substream("range");
    let all = estimate_constants_range(50, 20_000, &mut rng).unwrap();
    for w in all.windows(2) {
        assert!(w[1].c_n >= w[0].c_n && w[1].k_n >= w[0].k_n - 3.0 * w[1].std_error_k);
    }
}

#[test]
fn normalized_regret_labels_differ_by_exact_ratio() {
    for regret in [0.5, 3.0, 117.25] {
        let a = normalized_regret(regret, 10, 500, 5).unwrap();
        let b = normalized_regret(regret, 4, 500, 20).unwrap();
        let expect = (4.0 * 20f64.ln().sqrt()) / (10.0 * 5f64.ln().sqrt());
        assert!((b / a - 1.0 / expect).abs() < 1e-12);
    }
}

fn arms_and_mu() -> impl Strategy<Value = (Matrix, Vector)> {
    (1usize..6, 1usize..10).prop_flat_map(|(d, n)| {
        (
            prop::collection::vec(-4.0f64..4.0, n * d)
                .prop_map(move |v| Matrix::from_row_slice(n, d, &v)),
            prop::collection::vec(-4.0f64..4.0, d).prop_map(Vector::from_vec),
        )
    })
}

proptest! {
    #[test]
    fn instant_regret_is_nonnegative((est, mu) in arms_and_mu(), pick in any::<prop::sample::Index>()) {
        let oracle = select_arm(&est, &mu).unwrap();
        let chosen = pick.index(est.nrows());
        prop_assert!(instant_regret(&est, chosen, oracle, &mu).unwrap() >= -1e-12);
    }

    #[test]
    fn same_argmax_means_zero_regret((est, mu) in arms_and_mu(), c in 0.01f64..50.0) {
        let oracle = select_arm(&est, &mu).unwrap();
        let chosen = select_arm(&est, &(&mu * c)).unwrap();
        prop_assert_eq!(instant_regret(&est, chosen, oracle, &mu).unwrap(), 0.0);
    }
}

/// Scaled covariance ratios settle as `t` grows: the change from 1000 to
/// 2000 is within the 500 to 1000 change plus one band.
#[test]
fn covariance_ratio_stabilizes() {
    let (d, n) = (3, 10);
    let checkpoints = vec![500, 1000, 2000];
    let inst =
        generate_instance(d, n, &GenScheme::Default, &mut RandomStream::from_seed(53)).unwrap();
    let cfg = ExperimentConfig {
        d,
        n_arms: n,
        horizon: 2000,
        replications: 300,
        master_seed: 53,
        policies: vec![PolicyKind::Thompson],
        gen_scheme: GenScheme::Explicit(Box::new(inst.clone())),
        checkpoints: checkpoints.clone(),
        ..ExperimentConfig::default()
    };
    let snaps = map_replications(&cfg, None, |rec| {
        rec.traces[0]
            .snapshots
            .iter()
            .map(|(_, v)| v.clone())
            .collect::<Vec<_>>()
    })
    .unwrap();
    let ops = derive_operators(&inst, Whitening::Marginal).unwrap();
    let consts = estimate_constants(n, 100_000, &mut RandomStream::from_seed(54)).unwrap();
    let lim = limit_quantities(&ops, inst.mu_star(), &consts).unwrap();
    let rows = covariance_rate_check(&snaps, &checkpoints, &lim.limit_cov)
        .unwrap()
        .rows;
    let early = (rows[1].ratio - rows[0].ratio).abs();
    let late = (rows[2].ratio - rows[1].ratio).abs();
    assert!(
        late < early + rows[2].band,
        "ratios {:?}",
        rows.iter().map(|r| r.ratio).collect::<Vec<_>>()
    );
}
