//! Regret accounting, estimation error, order-statistic constants and the
//! asymptotic covariance of the posterior mean.

use thiserror::Error;

use crate::environment::DerivedOperators;
use crate::gaussian::{projection_matrix, spd_inverse, LinalgError, Matrix, SpdMatrix, Vector};
use crate::rng::RandomStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("arm index {index} out of range for {arms} arms")]
    IndexOutOfRange { index: usize, arms: usize },
    #[error("normalization d·ln t·√(ln N) is undefined for t={t}, N={n_arms}")]
    UndefinedNormalization { t: usize, n_arms: usize },
    #[error("need at least {needed} replications, got {got}")]
    InsufficientReplications { needed: usize, got: usize },
    #[error("need at least {needed} Monte-Carlo samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Record of one policy's round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub t: usize,
    pub chosen: usize,
    /// Arm maximizing `x̂ᵀμ*` (or `xᵀμ*` for policies that see contexts).
    pub oracle: usize,
    pub reward: f64,
    pub instant_regret: f64,
    pub mu_tilde: Vector,
    /// `‖μ̂ − μ*‖/√d` after this round's update.
    pub est_error: f64,
}

/// `(x̂_oracle − x̂_chosen)ᵀμ*`
pub fn instant_regret(
    estimates: &Matrix,
    chosen: usize,
    oracle: usize,
    mu_star: &Vector,
) -> Result<f64, MetricsError> {
    let arms = estimates.nrows();
    for index in [chosen, oracle] {
        if index >= arms {
            return Err(MetricsError::IndexOutOfRange { index, arms });
        }
    }
    if chosen == oracle {
        return Ok(0.0);
    }
    let gap = estimates.row(oracle) - estimates.row(chosen);
    Ok(gap.transpose().dot(mu_star))
}

pub fn cumulative_regret(outcomes: &[RoundOutcome]) -> Vec<f64> {
    outcomes
        .iter()
        .scan(0.0, |acc, o| {
            *acc += o.instant_regret;
            Some(*acc)
        })
        .collect()
}

/// `‖μ̂ − μ*‖ / √d`
pub fn estimation_error(mu_hat: &Vector, mu_star: &Vector) -> f64 {
    (mu_hat - mu_star).norm() / (mu_star.len() as f64).sqrt()
}

/// `regret / (d·ln t·√(ln N))`, defined for `t ≥ 2` and `N ≥ 2`.
pub fn normalized_regret(
    regret: f64,
    d: usize,
    t: usize,
    n_arms: usize,
) -> Result<f64, MetricsError> {
    if t < 2 || n_arms < 2 {
        return Err(MetricsError::UndefinedNormalization { t, n_arms });
    }
    Ok(regret / (d as f64 * (t as f64).ln() * (n_arms as f64).ln().sqrt()))
}

/// Moments of the maximum of `N` independent standard normals.
#[derive(Debug, Clone, PartialEq)]
pub struct Constants {
    pub n_arms: usize,
    /// `E[max V_i]`
    pub c_n: f64,
    /// `E[(max V_i)²]`
    pub k_n: f64,
    pub mc_samples: usize,
    pub std_error_c: f64,
    pub std_error_k: f64,
}

impl Constants {
    fn exact_single(samples: usize) -> Self {
        Self {
            n_arms: 1,
            c_n: 0.0,
            k_n: 1.0,
            mc_samples: samples,
            std_error_c: 0.0,
            std_error_k: 0.0,
        }
    }
}

pub const MIN_CONSTANT_SAMPLES: usize = 10_000;

#[derive(Default)]
struct Moments {
    s1: f64,
    s2: f64,
    s3: f64,
    s4: f64,
}

impl Moments {
    fn push(&mut self, m: f64) {
        let m2 = m * m;
        self.s1 += m;
        self.s2 += m2;
        self.s3 += m2 * m;
        self.s4 += m2 * m2;
    }

    fn finish(&self, n_arms: usize, samples: usize) -> Constants {
        let n = samples as f64;
        let c = self.s1 / n;
        let k = self.s2 / n;
        let var_c = (self.s2 / n - c * c).max(0.0) * n / (n - 1.0);
        let var_k = (self.s4 / n - k * k).max(0.0) * n / (n - 1.0);
        Constants {
            n_arms,
            c_n: c,
            k_n: k,
            mc_samples: samples,
            std_error_c: (var_c / n).sqrt(),
            std_error_k: (var_k / n).sqrt(),
        }
    }
}

/// Monte-Carlo estimate of `c_N` and `k_N`. `N = 1` is exact (`0`, `1`).
pub fn estimate_constants(
    n_arms: usize,
    samples: usize,
    rng: &mut RandomStream,
) -> Result<Constants, MetricsError> {
    if samples < MIN_CONSTANT_SAMPLES {
        return Err(MetricsError::TooFewSamples {
            needed: MIN_CONSTANT_SAMPLES,
            got: samples,
        });
    }
    if n_arms <= 1 {
        return Ok(Constants::exact_single(samples));
    }
    let mut acc = Moments::default();
    for _ in 0..samples {
        let mut m = f64::NEG_INFINITY;
        for _ in 0..n_arms {
            m = m.max(rng.standard_normal());
        }
        acc.push(m);
    }
    Ok(acc.finish(n_arms, samples))
}

/// Constants for every `N` in `1..=max_n` from shared draws (the running
/// maximum of one sequence), so the estimates are monotone in `N` per draw.
pub fn estimate_constants_range(
    max_n: usize,
    samples: usize,
    rng: &mut RandomStream,
) -> Result<Vec<Constants>, MetricsError> {
    if samples < MIN_CONSTANT_SAMPLES {
        return Err(MetricsError::TooFewSamples {
            needed: MIN_CONSTANT_SAMPLES,
            got: samples,
        });
    }
    let mut acc: Vec<Moments> = (0..max_n).map(|_| Moments::default()).collect();
    for _ in 0..samples {
        let mut m = f64::NEG_INFINITY;
        for slot in acc.iter_mut() {
            m = m.max(rng.standard_normal());
            slot.push(m);
        }
    }
    Ok(acc
        .iter()
        .enumerate()
        .map(|(i, a)| {
            if i == 0 {
                Constants::exact_single(samples)
            } else {
                a.finish(i + 1, samples)
            }
        })
        .collect())
}

/// Asymptotic quantities for `t·Cov(μ̂(t))`.
#[derive(Debug, Clone)]
pub struct LimitQuantities {
    pub s: SpdMatrix,
    /// `P_{Sμ*}(k_N − 1) + I`
    pub m: SpdMatrix,
    /// `σ²_ry · S⁻¹M⁻¹S⁻¹`, the limit of `t·Cov(μ̂(t))` implied by
    /// `B(t)/t → S·M·S`.
    pub limit_cov: SpdMatrix,
    /// `σ²_ry · S·M⁻¹·S`, the sandwich in the opposite orientation. Agrees
    /// with `limit_cov` only when `S = I`.
    pub sandwich_cov: SpdMatrix,
    pub sigma2_ry: f64,
    pub k_n: f64,
}

pub fn limit_quantities(
    ops: &DerivedOperators,
    mu_star: &Vector,
    constants: &Constants,
) -> Result<LimitQuantities, MetricsError> {
    let s = ops.s.matrix();
    let d = s.nrows();
    let direction = s * mu_star;
    let p = projection_matrix(&direction)?;
    let m = SpdMatrix::new(p * (constants.k_n - 1.0) + Matrix::identity(d, d))?;
    let m_inv = spd_inverse(&m.cholesky());
    let s_inv = ops.s_inv.matrix();
    let limit_cov = SpdMatrix::new(s_inv * m_inv.matrix() * s_inv * ops.sigma2_ry)?;
    let sandwich_cov = SpdMatrix::new(s * m_inv.matrix() * s * ops.sigma2_ry)?;
    Ok(LimitQuantities {
        s: ops.s.clone(),
        m,
        limit_cov,
        sandwich_cov,
        sigma2_ry: ops.sigma2_ry,
        k_n: constants.k_n,
    })
}

/// Angle between `Sμ*` and `Sμ̃`, in `[0, π]`.
pub fn angle_theta(
    s: &SpdMatrix,
    mu_star: &Vector,
    mu_tilde: &Vector,
) -> Result<f64, MetricsError> {
    let a = s.matrix() * mu_star;
    let b = s.matrix() * mu_tilde;
    let (na, nb) = (a.norm(), b.norm());
    if na.is_nan() || nb.is_nan() || na <= 0.0 || nb <= 0.0 {
        return Err(LinalgError::ZeroVector.into());
    }
    Ok((a.dot(&b) / (na * nb)).clamp(-1.0, 1.0).acos())
}

pub const MIN_RATE_REPLICATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRatio {
    pub t: usize,
    /// `t · trace(sample Cov(μ̂(t)))`
    pub scaled_trace: f64,
    pub limit_trace: f64,
    pub ratio: f64,
    /// Three Monte-Carlo standard errors of `ratio`.
    pub band: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CovarianceRateReport {
    pub replications: usize,
    pub rows: Vec<CheckpointRatio>,
}

/// `snapshots[r][j]` is replication `r`'s `μ̂` at `checkpoints[j]`.
/// `limit_cov` is the matrix whose trace the scaled covariance is
/// compared with.
pub fn covariance_rate_check(
    snapshots: &[Vec<Vector>],
    checkpoints: &[usize],
    limit_cov: &SpdMatrix,
) -> Result<CovarianceRateReport, MetricsError> {
    if checkpoints.is_empty() {
        return Ok(CovarianceRateReport {
            replications: snapshots.len(),
            rows: Vec::new(),
        });
    }
    let reps = snapshots.len();
    if reps < MIN_RATE_REPLICATIONS {
        return Err(MetricsError::InsufficientReplications {
            needed: MIN_RATE_REPLICATIONS,
            got: reps,
        });
    }
    let limit_trace = limit_cov.matrix().trace();
    let r = reps as f64;
    let mut rows = Vec::with_capacity(checkpoints.len());
    for (j, &t) in checkpoints.iter().enumerate() {
        let column: Vec<&Vector> = snapshots
            .iter()
            .map(|s| {
                s.get(j).ok_or(LinalgError::DimensionMismatch {
                    expected: checkpoints.len(),
                    found: s.len(),
                })
            })
            .collect::<Result<_, _>>()?;
        let mut mean = Vector::zeros(column[0].len());
        for v in &column {
            mean += *v;
        }
        mean /= r;
        // Unbiased per-replication contributions to the trace.
        let q: Vec<f64> = column
            .iter()
            .map(|v| (*v - &mean).norm_squared() * r / (r - 1.0))
            .collect();
        let trace = q.iter().sum::<f64>() / r;
        let var_q = q.iter().map(|x| (x - trace).powi(2)).sum::<f64>() / (r - 1.0);
        let se = (var_q / r).sqrt();
        let scaled_trace = t as f64 * trace;
        rows.push(CheckpointRatio {
            t,
            scaled_trace,
            limit_trace,
            ratio: scaled_trace / limit_trace,
            band: 3.0 * t as f64 * se / limit_trace,
        });
    }
    Ok(CovarianceRateReport {
        replications: reps,
        rows,
    })
}
