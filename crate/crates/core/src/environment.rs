//! Problem instances and the hidden-context / noisy-output / reward process.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{
    cholesky, mvn_sample_cov, spd_inverse, sym_sqrt, LinalgError, LowerTriangular, Matrix,
    SpdMatrix, Vector,
};
use crate::rng::RandomStream;

/// Generated `A` is redrawn until its condition number is below this.
pub const MAX_CONDITION: f64 = 1e6;
const MAX_REDRAWS: usize = 100;
/// Smallest singular value must exceed this fraction of the largest.
const SINGULAR_RATIO: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("observation matrix is singular or badly conditioned (cond ≈ {0:e})")]
    SingularA(f64),
    #[error("no well-conditioned observation matrix after {0} draws")]
    DegenerateA(usize),
    #[error("true parameter must be nonzero")]
    ZeroParameter,
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("instance file: {0}")]
    Json(#[from] serde_json::Error),
}

/// How problem instances are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum GenScheme {
    /// Rows of `A` and `μ*` i.i.d. `N(0, I)`; `Σ_x = Σ_y = I`, `σ² = 1`.
    Default,
    /// A fully specified instance, reused as is.
    Explicit(Box<ProblemInstance>),
}

/// Which covariance the whitening matrix `S` is the square root of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Whitening {
    /// `S² = Cov(x̂) = D(AΣ_xAᵀ + Σ_y)Dᵀ`, so `S⁻¹x̂ ~ N(0, I)`.
    #[default]
    Marginal,
    /// `S² = DΣ_yDᵀ`.
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    d: usize,
    n_arms: usize,
    a: Matrix,
    sigma_x: SpdMatrix,
    sigma_y: SpdMatrix,
    sigma2: f64,
    mu_star: Vector,
}

fn condition_number(a: &Matrix) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

impl ProblemInstance {
    pub fn new(
        n_arms: usize,
        a: Matrix,
        sigma_x: SpdMatrix,
        sigma_y: SpdMatrix,
        sigma2: f64,
        mu_star: Vector,
    ) -> Result<Self, EnvError> {
        let d = mu_star.len();
        if d == 0 || n_arms == 0 {
            return Err(EnvError::Invalid("d and N must be at least 1".into()));
        }
        if a.nrows() != d || a.ncols() != d || sigma_x.dim() != d || sigma_y.dim() != d {
            return Err(EnvError::Invalid(format!(
                "all matrices must be {d}×{d} to match mu_star"
            )));
        }
        if !sigma2.is_finite() || sigma2 < 0.0 {
            return Err(EnvError::Invalid(
                "sigma2 must be finite and non-negative".into(),
            ));
        }
        if mu_star.iter().any(|v| !v.is_finite()) || a.iter().any(|v| !v.is_finite()) {
            return Err(EnvError::Linalg(LinalgError::NonFinite));
        }
        if mu_star.norm().is_nan() || mu_star.norm() == 0.0 {
            return Err(EnvError::ZeroParameter);
        }
        let cond = condition_number(&a);
        if cond.is_nan() || cond >= 1.0 / SINGULAR_RATIO {
            return Err(EnvError::SingularA(cond));
        }
        Ok(Self {
            d,
            n_arms,
            a,
            sigma_x,
            sigma_y,
            sigma2,
            mu_star,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn sigma_x(&self) -> &SpdMatrix {
        &self.sigma_x
    }

    pub fn sigma_y(&self) -> &SpdMatrix {
        &self.sigma_y
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn mu_star(&self) -> &Vector {
        &self.mu_star
    }

    pub fn to_file(&self) -> InstanceFile {
        let row_major = |m: &Matrix| m.transpose().as_slice().to_vec();
        InstanceFile {
            d: self.d,
            n_arms: self.n_arms,
            a: row_major(&self.a),
            sigma_x: row_major(self.sigma_x.matrix()),
            sigma_y: row_major(self.sigma_y.matrix()),
            sigma2: self.sigma2,
            mu_star: self.mu_star.as_slice().to_vec(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EnvError> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.into_instance()
    }
}

/// On-disk form of a [`ProblemInstance`]; matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub d: usize,
    #[serde(rename = "N")]
    pub n_arms: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub sigma_x: Vec<f64>,
    pub sigma_y: Vec<f64>,
    pub sigma2: f64,
    pub mu_star: Vec<f64>,
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<ProblemInstance, EnvError> {
        let d = self.d;
        let square = |name: &str, v: &[f64]| -> Result<Matrix, EnvError> {
            if v.len() != d * d {
                return Err(EnvError::Invalid(format!(
                    "{name} has {} entries, expected {}",
                    v.len(),
                    d * d
                )));
            }
            Ok(Matrix::from_row_slice(d, d, v))
        };
        if self.mu_star.len() != d {
            return Err(EnvError::Invalid(format!(
                "mu_star has {} entries, expected {d}",
                self.mu_star.len()
            )));
        }
        ProblemInstance::new(
            self.n_arms,
            square("A", &self.a)?,
            SpdMatrix::new(square("sigma_x", &self.sigma_x)?)?,
            SpdMatrix::new(square("sigma_y", &self.sigma_y)?)?,
            self.sigma2,
            Vector::from_vec(self.mu_star),
        )
    }
}

/// Builds an instance. The default scheme is a pure function of
/// `(d, n_arms, rng state)`.
pub fn generate_instance(
    d: usize,
    n_arms: usize,
    scheme: &GenScheme,
    rng: &mut RandomStream,
) -> Result<ProblemInstance, EnvError> {
    match scheme {
        GenScheme::Explicit(inst) => {
            if inst.d() != d || inst.n_arms() != n_arms {
                return Err(EnvError::Invalid(format!(
                    "explicit instance is d={}, N={} but d={d}, N={n_arms} was requested",
                    inst.d(),
                    inst.n_arms()
                )));
            }
            Ok((**inst).clone())
        }
        GenScheme::Default => {
            if d == 0 || n_arms == 0 {
                return Err(EnvError::Invalid("d and N must be at least 1".into()));
            }
            let mut a = None;
            for _ in 0..MAX_REDRAWS {
                let candidate = Matrix::from_fn(d, d, |_, _| rng.standard_normal());
                if condition_number(&candidate) < MAX_CONDITION {
                    a = Some(candidate);
                    break;
                }
            }
            let a = a.ok_or(EnvError::DegenerateA(MAX_REDRAWS))?;
            let mut mu_star = Vector::from_fn(d, |_, _| rng.standard_normal());
            while mu_star.norm().is_nan() || mu_star.norm() == 0.0 {
                mu_star = Vector::from_fn(d, |_, _| rng.standard_normal());
            }
            ProblemInstance::new(
                n_arms,
                a,
                SpdMatrix::identity(d),
                SpdMatrix::identity(d),
                1.0,
                mu_star,
            )
        }
    }
}

/// Filter quantities computed once per instance.
#[derive(Debug, Clone)]
pub struct DerivedOperators {
    /// `D = Σ_xy Aᵀ Σ_y⁻¹`, so `x̂ = D y`.
    pub d_matrix: Matrix,
    /// `(AᵀΣ_y⁻¹A + Σ_x⁻¹)⁻¹`, the posterior covariance of `x` given `y`.
    pub sigma_xy: SpdMatrix,
    /// `μ*ᵀΣ_xyμ* + σ²`, the variance of `r` given `y`.
    pub sigma2_ry: f64,
    pub s: SpdMatrix,
    pub s_inv: SpdMatrix,
    pub whitening: Whitening,
    /// `D(AΣ_xAᵀ + Σ_y)Dᵀ`
    pub marginal_cov: Matrix,
    /// `DΣ_yDᵀ`
    pub literal_cov: Matrix,
    pub(crate) chol_x: LowerTriangular,
    pub(crate) chol_y: LowerTriangular,
}

pub fn derive_operators(
    inst: &ProblemInstance,
    whitening: Whitening,
) -> Result<DerivedOperators, EnvError> {
    let chol_x = inst.sigma_x.cholesky();
    let chol_y = inst.sigma_y.cholesky();
    let sx_inv = spd_inverse(&chol_x);
    let sy_inv = spd_inverse(&chol_y);
    let a = &inst.a;
    let info = a.transpose() * sy_inv.matrix() * a + sx_inv.matrix();
    let sigma_xy = spd_inverse(&cholesky(&info)?);
    let d_matrix = sigma_xy.matrix() * a.transpose() * sy_inv.matrix();
    let sigma2_ry = inst.mu_star.dot(&(sigma_xy.matrix() * &inst.mu_star)) + inst.sigma2;

    let y_cov = a * inst.sigma_x.matrix() * a.transpose() + inst.sigma_y.matrix();
    let marginal_cov = crate::gaussian::symmetrize(&(&d_matrix * y_cov * d_matrix.transpose()));
    let literal_cov =
        crate::gaussian::symmetrize(&(&d_matrix * inst.sigma_y.matrix() * d_matrix.transpose()));
    let target = match whitening {
        Whitening::Marginal => &marginal_cov,
        Whitening::Literal => &literal_cov,
    };
    let s = SpdMatrix::new(sym_sqrt(target)?)?;
    let s_inv = spd_inverse(&s.cholesky());
    Ok(DerivedOperators {
        d_matrix,
        sigma_xy,
        sigma2_ry,
        s,
        s_inv,
        whitening,
        marginal_cov,
        literal_cov,
        chol_x,
        chol_y,
    })
}

/// One round of hidden contexts, observed outputs and their filtered
/// estimates. Row `i` belongs to arm `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundDraw {
    contexts: Matrix,
    pub outputs: Matrix,
    pub estimates: Matrix,
}

impl RoundDraw {
    /// Hidden contexts. Only oracle-style consumers should read these.
    pub fn hidden_contexts(&self) -> &Matrix {
        &self.contexts
    }
}

/// Contexts come from `context_rng`, output noise from `noise_rng`.
pub fn spawn_round(
    inst: &ProblemInstance,
    ops: &DerivedOperators,
    context_rng: &mut RandomStream,
    noise_rng: &mut RandomStream,
) -> RoundDraw {
    let (n, d) = (inst.n_arms, inst.d);
    let zero = Vector::zeros(d);
    let mut contexts = Matrix::zeros(n, d);
    let mut outputs = Matrix::zeros(n, d);
    for i in 0..n {
        let x = mvn_sample_cov(&zero, &ops.chol_x, context_rng).expect("dims match");
        let eps = mvn_sample_cov(&zero, &ops.chol_y, noise_rng).expect("dims match");
        let y = &inst.a * &x + eps;
        contexts.set_row(i, &x.transpose());
        outputs.set_row(i, &y.transpose());
    }
    let estimates = &outputs * ops.d_matrix.transpose();
    RoundDraw {
        contexts,
        outputs,
        estimates,
    }
}

/// `contextᵀμ* + σ·z` for a standard normal `z` drawn from `rng`.
pub fn realize_reward(inst: &ProblemInstance, context: &Vector, rng: &mut RandomStream) -> f64 {
    reward_with_noise(inst, context, rng.standard_normal())
}

/// `contextᵀμ* + σ·z` for a pre-drawn standard normal `z`.
pub fn reward_with_noise(inst: &ProblemInstance, context: &Vector, z: f64) -> f64 {
    context.dot(&inst.mu_star) + inst.sigma2.sqrt() * z
}

/// Monte-Carlo check of the filter against its closed forms.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub samples: usize,
    /// Least-squares coefficient matrix of `x` regressed on `y`.
    pub regression_matrix: Matrix,
    pub d_matrix: Matrix,
    /// Empirical variance of `r − x̂ᵀμ*`.
    pub residual_variance: f64,
    pub sigma2_ry: f64,
    pub empirical_cov_xhat: Matrix,
    pub marginal_cov: Matrix,
    pub literal_cov: Matrix,
}

fn operator_norm(m: &Matrix) -> f64 {
    m.clone().singular_values().max()
}

impl ValidationReport {
    pub fn regression_max_error(&self) -> f64 {
        (&self.regression_matrix - &self.d_matrix).amax()
    }

    pub fn residual_relative_error(&self) -> f64 {
        (self.residual_variance - self.sigma2_ry).abs() / self.sigma2_ry
    }

    /// `‖Ĉov(x̂) − D(AΣ_xAᵀ+Σ_y)Dᵀ‖ / ‖D(AΣ_xAᵀ+Σ_y)Dᵀ‖` in operator norm.
    pub fn marginal_cov_relative_error(&self) -> f64 {
        operator_norm(&(&self.empirical_cov_xhat - &self.marginal_cov))
            / operator_norm(&self.marginal_cov)
    }

    /// Same as above against `DΣ_yDᵀ`.
    pub fn literal_cov_relative_error(&self) -> f64 {
        operator_norm(&(&self.empirical_cov_xhat - &self.literal_cov))
            / operator_norm(&self.literal_cov)
    }
}

pub fn validate_filter(
    inst: &ProblemInstance,
    ops: &DerivedOperators,
    samples: usize,
    rng: &mut RandomStream,
) -> Result<ValidationReport, EnvError> {
    if samples < 10_000 {
        return Err(EnvError::Invalid(format!(
            "filter validation needs at least 10000 samples, got {samples}"
        )));
    }
    let d = inst.d;
    let zero = Vector::zeros(d);
    let mut xy = Matrix::zeros(d, d);
    let mut yy = Matrix::zeros(d, d);
    let mut hh = Matrix::zeros(d, d);
    let mut res_sum = 0.0;
    let mut res_sq = 0.0;
    for _ in 0..samples {
        let x = mvn_sample_cov(&zero, &ops.chol_x, rng)?;
        let y = &inst.a * &x + mvn_sample_cov(&zero, &ops.chol_y, rng)?;
        let x_hat = &ops.d_matrix * &y;
        let r = realize_reward(inst, &x, rng);
        let res = r - x_hat.dot(&inst.mu_star);
        xy += &x * y.transpose();
        yy += &y * y.transpose();
        hh += &x_hat * x_hat.transpose();
        res_sum += res;
        res_sq += res * res;
    }
    let n = samples as f64;
    // B = Σxyᵀ (Σyyᵀ)⁻¹; yy is SPD with overwhelming probability.
    let yy_inv = spd_inverse(&cholesky(&yy)?);
    let regression_matrix = xy * yy_inv.matrix();
    let mean = res_sum / n;
    let residual_variance = (res_sq - n * mean * mean) / (n - 1.0);
    Ok(ValidationReport {
        samples,
        regression_matrix,
        d_matrix: ops.d_matrix.clone(),
        residual_variance,
        sigma2_ry: ops.sigma2_ry,
        empirical_cov_xhat: hh / n,
        marginal_cov: ops.marginal_cov.clone(),
        literal_cov: ops.literal_cov.clone(),
    })
}
