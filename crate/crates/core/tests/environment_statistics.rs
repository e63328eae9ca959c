use pocmab::environment::{
    derive_operators, generate_instance, spawn_round, GenScheme, ProblemInstance, Whitening,
};
use pocmab::{Matrix, RandomStream, SpdMatrix, Vector};

const ROUNDS: usize = 100_000;

fn rel_op_err(emp: &Matrix, target: &Matrix) -> f64 {
    let op = |m: &Matrix| m.singular_values().max();
    op(&(emp - target)) / op(target)
}

fn correlated_instance() -> ProblemInstance {
    let sigma_x = SpdMatrix::new(Matrix::from_row_slice(
        3,
        3,
        &[2.0, 0.3, 0.0, 0.3, 1.0, -0.2, 0.0, -0.2, 0.5],
    ))
    .unwrap();
    let sigma_y = SpdMatrix::new(Matrix::from_row_slice(
        3,
        3,
        &[0.5, 0.1, 0.0, 0.1, 0.8, 0.0, 0.0, 0.0, 1.5],
    ))
    .unwrap();
    let a = Matrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, -0.3, 1.2, 0.4, 0.2, 0.0, 0.9]);
    ProblemInstance::new(
        2,
        a,
        sigma_x,
        sigma_y,
        1.0,
        Vector::from_column_slice(&[1.0, -1.0, 0.5]),
    )
    .unwrap()
}

#[test]
fn contexts_and_output_noise_match_their_covariances() {
    let inst = correlated_instance();
    let ops = derive_operators(&inst, Whitening::Marginal).unwrap();
    let root = RandomStream::from_seed(41);
    let (mut ctx_rng, mut noise_rng) = (root.substream("contexts"), root.substream("noise"));
    let d = inst.d();
    let mut xx = Matrix::zeros(d, d);
    let mut ee = Matrix::zeros(d, d);
    let mut count = 0.0;
    for _ in 0..ROUNDS / inst.n_arms() {
        let draw = spawn_round(&inst, &ops, &mut ctx_rng, &mut noise_rng);
        let x = draw.hidden_contexts();
        let e = &draw.outputs - x * inst.a().transpose();
        xx += x.transpose() * x;
        ee += e.transpose() * &e;
        count += x.nrows() as f64;
    }
    let ctx_err = rel_op_err(&(xx / count), inst.sigma_x().matrix());
    let noise_err = rel_op_err(&(ee / count), inst.sigma_y().matrix());
    assert!(ctx_err < 0.05, "context covariance error {ctx_err}");
    assert!(
        noise_err < 0.05,
        "output noise covariance error {noise_err}"
    );
}

#[test]
fn estimates_whiten_to_identity() {
    let inst = correlated_instance();
    let ops = derive_operators(&inst, Whitening::Marginal).unwrap();
    let root = RandomStream::from_seed(42);
    let (mut ctx_rng, mut noise_rng) = (root.substream("contexts"), root.substream("noise"));
    let d = inst.d();
    let mut zz = Matrix::zeros(d, d);
    let mut count = 0.0;
    for _ in 0..ROUNDS / inst.n_arms() {
        let draw = spawn_round(&inst, &ops, &mut ctx_rng, &mut noise_rng);
        let z = &draw.estimates * ops.s_inv.matrix();
        zz += z.transpose() * &z;
        count += z.nrows() as f64;
    }
    let err = rel_op_err(&(zz / count), &Matrix::identity(d, d));
    assert!(err < 0.05, "S^-1 x_hat covariance deviates from I by {err}");
}

#[test]
fn instances_differ_across_seeds_but_not_within() {
    let draw = |seed| {
        generate_instance(
            10,
            5,
            &GenScheme::Default,
            &mut RandomStream::from_seed(seed),
        )
        .unwrap()
    };
    assert_eq!(draw(3), draw(3));
    assert_ne!(draw(3).a(), draw(4).a());
}
