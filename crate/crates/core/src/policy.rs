//! Thompson Sampling on filtered context estimates, plus baselines.
//!
//! The belief over `μ*` is Gaussian with precision `B(t)` and mean `μ̂(t)`.
//! Each round the chosen arm's estimate `x̂` and its reward update
//! `B ← B + x̂x̂ᵀ`, `μ̂ ← B⁻¹(B_old·μ̂ + x̂·r)`.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::gaussian::{
    cholesky, mvn_sample_precision, spd_inverse, spd_solve, LinalgError, LowerTriangular, Matrix,
    SpdMatrix, Vector,
};
use crate::rng::RandomStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("policy `{0}` needs privileged information that was not supplied")]
    OracleAccessDenied(PolicyKind),
    #[error("no arms to choose from")]
    NoArms,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorState {
    precision: SpdMatrix,
    mu_hat: Vector,
    t: usize,
    chol: LowerTriangular,
}

impl PosteriorState {
    pub fn precision(&self) -> &SpdMatrix {
        &self.precision
    }

    pub fn mu_hat(&self) -> &Vector {
        &self.mu_hat
    }

    /// Round index; starts at 1.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn precision_chol(&self) -> &LowerTriangular {
        &self.chol
    }

    pub fn dim(&self) -> usize {
        self.mu_hat.len()
    }

    /// Folds one observation into the belief. A zero `x_hat` leaves `B`
    /// and `μ̂` unchanged but still advances `t`.
    pub fn update(&mut self, x_hat: &Vector, reward: f64) -> Result<(), PolicyError> {
        if x_hat.len() != self.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim(),
                found: x_hat.len(),
            }
            .into());
        }
        let weighted = self.precision.matrix() * &self.mu_hat + x_hat * reward;
        let next = self.precision.matrix() + x_hat * x_hat.transpose();
        let chol = cholesky(&next)?;
        self.mu_hat = spd_solve(&chol, &weighted)?;
        self.precision = SpdMatrix::factored(next);
        self.chol = chol;
        self.t += 1;
        Ok(())
    }
}

/// `B(1) = Σ⁻¹`, `μ̂(1) = 0`.
pub fn init_posterior(prior: &SpdMatrix) -> PosteriorState {
    let precision = spd_inverse(&prior.cholesky());
    let chol = precision.cholesky();
    PosteriorState {
        mu_hat: Vector::zeros(prior.dim()),
        precision,
        t: 1,
        chol,
    }
}

pub fn update_posterior(
    state: &PosteriorState,
    x_hat: &Vector,
    reward: f64,
) -> Result<PosteriorState, PolicyError> {
    let mut next = state.clone();
    next.update(x_hat, reward)?;
    Ok(next)
}

/// Draws `μ̃ ~ N(μ̂, B⁻¹)`.
pub fn sample_parameter(state: &PosteriorState, rng: &mut RandomStream) -> Vector {
    sample_parameter_scaled(state, 1.0, rng)
}

/// Draws `μ̃ ~ N(μ̂, scale·B⁻¹)`.
pub fn sample_parameter_scaled(
    state: &PosteriorState,
    scale: f64,
    rng: &mut RandomStream,
) -> Vector {
    let draw = mvn_sample_precision(&Vector::zeros(state.dim()), &state.chol, rng)
        .expect("posterior dims are consistent");
    &state.mu_hat + draw * scale.sqrt()
}

/// Index of the row maximizing `rowᵀ·mu`; ties go to the lowest index.
pub fn select_arm(estimates: &Matrix, mu: &Vector) -> Result<usize, PolicyError> {
    if estimates.nrows() == 0 {
        return Err(PolicyError::NoArms);
    }
    if estimates.ncols() != mu.len() {
        return Err(LinalgError::DimensionMismatch {
            expected: estimates.ncols(),
            found: mu.len(),
        }
        .into());
    }
    let scores = estimates * mu;
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Chosen context estimates and rewards, in order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    chosen_estimates: Vec<Vector>,
    rewards: Vec<f64>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x_hat: Vector, reward: f64) {
        self.chosen_estimates.push(x_hat);
        self.rewards.push(reward);
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vector, f64)> {
        self.chosen_estimates
            .iter()
            .zip(self.rewards.iter().copied())
    }
}

/// Batch posterior: `B = Σ⁻¹ + Σ x̂x̂ᵀ`, `μ̂ = B⁻¹ Σ x̂·r`.
pub fn posterior_from_history(
    prior: &SpdMatrix,
    hist: &History,
) -> Result<PosteriorState, PolicyError> {
    let d = prior.dim();
    let mut precision = spd_inverse(&prior.cholesky()).into_matrix();
    let mut moment = Vector::zeros(d);
    for (x, r) in hist.iter() {
        if x.len() != d {
            return Err(LinalgError::DimensionMismatch {
                expected: d,
                found: x.len(),
            }
            .into());
        }
        precision += x * x.transpose();
        moment += x * r;
    }
    let chol = cholesky(&precision)?;
    let mu_hat = spd_solve(&chol, &moment)?;
    Ok(PosteriorState {
        precision: SpdMatrix::factored(precision),
        mu_hat,
        t: hist.len() + 1,
        chol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Thompson,
    Greedy,
    Random,
    Oracle,
    FullObsThompson,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Thompson,
        PolicyKind::Greedy,
        PolicyKind::Random,
        PolicyKind::Oracle,
        PolicyKind::FullObsThompson,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Thompson => "thompson",
            PolicyKind::Greedy => "greedy",
            PolicyKind::Random => "random",
            PolicyKind::Oracle => "oracle",
            PolicyKind::FullObsThompson => "full_obs_thompson",
        }
    }

    /// Whether the policy decides (and learns) from the hidden contexts.
    pub fn observes_contexts(self) -> bool {
        matches!(self, PolicyKind::FullObsThompson)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown policy `{s}`"))
    }
}

/// What a policy may look at when deciding. The privileged fields are
/// `None` unless the caller grants them.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub estimates: &'a Matrix,
    pub hidden_contexts: Option<&'a Matrix>,
    pub mu_star: Option<&'a Vector>,
}

impl<'a> Observation<'a> {
    pub fn public(estimates: &'a Matrix) -> Self {
        Self {
            estimates,
            hidden_contexts: None,
            mu_star: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub arm: usize,
    /// Parameter the argmax was taken against (`μ̃`, `μ̂` or `μ*`); for the
    /// random policy this is `μ̂`.
    pub mu_used: Vector,
}

/// One decision. `posterior_scale` multiplies `B⁻¹` for the sampling
/// policies (1 reproduces the unscaled posterior).
pub fn act(
    kind: PolicyKind,
    state: &PosteriorState,
    obs: Observation<'_>,
    posterior_scale: f64,
    rng: &mut RandomStream,
) -> Result<Decision, PolicyError> {
    match kind {
        PolicyKind::Thompson => {
            let mu = sample_parameter_scaled(state, posterior_scale, rng);
            Ok(Decision {
                arm: select_arm(obs.estimates, &mu)?,
                mu_used: mu,
            })
        }
        PolicyKind::Greedy => Ok(Decision {
            arm: select_arm(obs.estimates, state.mu_hat())?,
            mu_used: state.mu_hat().clone(),
        }),
        PolicyKind::Random => {
            if obs.estimates.nrows() == 0 {
                return Err(PolicyError::NoArms);
            }
            Ok(Decision {
                arm: rng.below(obs.estimates.nrows()),
                mu_used: state.mu_hat().clone(),
            })
        }
        PolicyKind::Oracle => {
            let mu = obs.mu_star.ok_or(PolicyError::OracleAccessDenied(kind))?;
            Ok(Decision {
                arm: select_arm(obs.estimates, mu)?,
                mu_used: mu.clone(),
            })
        }
        PolicyKind::FullObsThompson => {
            let contexts = obs
                .hidden_contexts
                .ok_or(PolicyError::OracleAccessDenied(kind))?;
            let mu = sample_parameter_scaled(state, posterior_scale, rng);
            Ok(Decision {
                arm: select_arm(contexts, &mu)?,
                mu_used: mu,
            })
        }
    }
}
