//! Self-checks run by `pocmab validate`.

use super::config::ExperimentConfig;
use super::runner::{replication_stream, HarnessError};
use crate::environment::{derive_operators, generate_instance, validate_filter, ValidationReport};
use crate::gaussian::{SpdMatrix, Vector};
use crate::policy::{init_posterior, posterior_from_history, History};
use crate::rng::RandomStream;

pub const REGRESSION_TOL: f64 = 0.02;
pub const RESIDUAL_REL_TOL: f64 = 0.05;
pub const COV_REL_TOL: f64 = 0.05;
pub const EQUIVALENCE_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub histories: usize,
    pub steps: usize,
    pub max_rel_precision: f64,
    pub max_rel_mean: f64,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.max_rel_precision <= EQUIVALENCE_REL_TOL && self.max_rel_mean <= EQUIVALENCE_REL_TOL
    }
}

/// Compares the batch posterior with the folded one-step update on random
/// histories of `steps` observations in dimension `d`.
pub fn check_posterior_equivalence(
    d: usize,
    steps: usize,
    histories: usize,
    prior: &SpdMatrix,
    rng: &mut RandomStream,
) -> Result<EquivalenceReport, HarnessError> {
    let mut max_rel_precision = 0.0_f64;
    let mut max_rel_mean = 0.0_f64;
    for _ in 0..histories {
        let mu = Vector::from_fn(d, |_, _| rng.standard_normal());
        let mut hist = History::new();
        let mut folded = init_posterior(prior);
        for _ in 0..steps {
            let x = Vector::from_fn(d, |_, _| rng.standard_normal());
            let r = x.dot(&mu) + rng.standard_normal();
            folded.update(&x, r)?;
            hist.push(x, r);
        }
        let batch = posterior_from_history(prior, &hist)?;
        let bp = batch.precision().matrix();
        max_rel_precision =
            max_rel_precision.max((bp - folded.precision().matrix()).norm() / bp.norm());
        let scale = batch.mu_hat().norm().max(f64::MIN_POSITIVE);
        max_rel_mean = max_rel_mean.max((batch.mu_hat() - folded.mu_hat()).norm() / scale);
    }
    Ok(EquivalenceReport {
        histories,
        steps,
        max_rel_precision,
        max_rel_mean,
    })
}

#[derive(Debug, Clone)]
pub struct ValidationOutcome {
    pub filter: ValidationReport,
    pub equivalence: EquivalenceReport,
}

impl ValidationOutcome {
    pub fn checks(&self) -> Vec<(&'static str, f64, f64, bool)> {
        let f = &self.filter;
        let reg = f.regression_max_error();
        let res = f.residual_relative_error();
        let cov = f.marginal_cov_relative_error();
        let eq = self
            .equivalence
            .max_rel_precision
            .max(self.equivalence.max_rel_mean);
        vec![
            (
                "regression matrix vs D (max entry error)",
                reg,
                REGRESSION_TOL,
                reg <= REGRESSION_TOL,
            ),
            (
                "residual reward variance vs sigma2_ry (relative)",
                res,
                RESIDUAL_REL_TOL,
                res <= RESIDUAL_REL_TOL,
            ),
            (
                "Cov(x_hat) vs D(A Sx A' + Sy)D' (relative, operator norm)",
                cov,
                COV_REL_TOL,
                cov <= COV_REL_TOL,
            ),
            (
                "batch vs recursive posterior (relative)",
                eq,
                EQUIVALENCE_REL_TOL,
                self.equivalence.passed(),
            ),
        ]
    }

    pub fn passed(&self) -> bool {
        self.checks().iter().all(|c| c.3)
    }
}

/// Validates the filter on the config's first replication instance and
/// the posterior recursion on random histories.
pub fn validate_config(
    cfg: &ExperimentConfig,
    samples: usize,
) -> Result<ValidationOutcome, HarnessError> {
    let rep = replication_stream(cfg.master_seed, 0);
    let inst = generate_instance(
        cfg.d,
        cfg.n_arms,
        &cfg.gen_scheme,
        &mut rep.substream("instance"),
    )?;
    let ops = derive_operators(&inst, cfg.whitening)?;
    let root = RandomStream::from_seed(cfg.master_seed).substream("validate");
    let filter = validate_filter(&inst, &ops, samples, &mut root.substream("filter"))?;
    let prior = SpdMatrix::scaled_identity(cfg.d, cfg.prior_scale)?;
    let equivalence =
        check_posterior_equivalence(cfg.d, 500, 10, &prior, &mut root.substream("posterior"))?;
    Ok(ValidationOutcome {
        filter,
        equivalence,
    })
}
