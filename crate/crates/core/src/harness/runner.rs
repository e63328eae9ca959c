//! Seeded replication loop and cross-replication aggregation.
//!
//! Stream layout per replication `r`:
//! `master_seed → replication[r] → {instance, contexts, output-noise,
//! reward-noise, policy:<name>}`. All policies in a replication share the
//! instance, the round draws and one pre-drawn reward-noise value per
//! (round, arm), so their trajectories differ only through their choices.

use rayon::prelude::*;
use thiserror::Error;

use super::config::ExperimentConfig;
use crate::environment::{
    derive_operators, generate_instance, reward_with_noise, spawn_round, EnvError, ProblemInstance,
};
use crate::gaussian::{LinalgError, SpdMatrix, Vector};
use crate::metrics::{
    estimation_error, instant_regret, normalized_regret, MetricsError, RoundOutcome,
};
use crate::policy::{
    act, init_posterior, select_arm, Observation, PolicyError, PolicyKind, PosteriorState,
};
use crate::rng::RandomStream;

/// Environment variable capping the worker count (0 or unset: automatic).
pub const THREADS_ENV: &str = "POCMAB_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One policy's trajectory within a replication.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTrace {
    pub kind: PolicyKind,
    pub outcomes: Vec<RoundOutcome>,
    /// `(t, μ̂)` after round `t`'s update, for each configured checkpoint.
    pub snapshots: Vec<(usize, Vector)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub rep_index: usize,
    pub instance: ProblemInstance,
    pub traces: Vec<PolicyTrace>,
}

impl ReplicationRecord {
    pub fn trace(&self, kind: PolicyKind) -> Option<&PolicyTrace> {
        self.traces.iter().find(|t| t.kind == kind)
    }
}

struct PolicyRun {
    kind: PolicyKind,
    state: PosteriorState,
    rng: RandomStream,
    trace: PolicyTrace,
}

pub fn replication_stream(master_seed: u64, rep_index: usize) -> RandomStream {
    RandomStream::from_seed(master_seed).indexed("replication", rep_index as u64)
}

pub fn run_replication(
    cfg: &ExperimentConfig,
    rep_index: usize,
) -> Result<ReplicationRecord, HarnessError> {
    let rep = replication_stream(cfg.master_seed, rep_index);
    let inst = generate_instance(
        cfg.d,
        cfg.n_arms,
        &cfg.gen_scheme,
        &mut rep.substream("instance"),
    )?;
    let ops = derive_operators(&inst, cfg.whitening)?;
    let prior = SpdMatrix::scaled_identity(cfg.d, cfg.prior_scale)?;
    let posterior_scale = if cfg.scaled_posterior {
        ops.sigma2_ry
    } else {
        1.0
    };

    let mut context_rng = rep.substream("contexts");
    let mut output_rng = rep.substream("output-noise");
    let mut reward_rng = rep.substream("reward-noise");

    let mut runs: Vec<PolicyRun> = cfg
        .policies
        .iter()
        .map(|&kind| PolicyRun {
            kind,
            state: init_posterior(&prior),
            rng: rep.substream(&format!("policy:{kind}")),
            trace: PolicyTrace {
                kind,
                outcomes: Vec::with_capacity(cfg.horizon),
                snapshots: Vec::with_capacity(cfg.checkpoints.len()),
            },
        })
        .collect();
    let needs_contexts = cfg.policies.iter().any(|k| k.observes_contexts());
    let mu_star = inst.mu_star();
    let mut next_checkpoint = 0;

    for t in 1..=cfg.horizon {
        let draw = spawn_round(&inst, &ops, &mut context_rng, &mut output_rng);
        let reward_noise: Vec<f64> = (0..cfg.n_arms)
            .map(|_| reward_rng.standard_normal())
            .collect();
        let hidden = draw.hidden_contexts();
        let oracle_est = select_arm(&draw.estimates, mu_star)?;
        let oracle_ctx = if needs_contexts {
            Some(select_arm(hidden, mu_star)?)
        } else {
            None
        };
        let snapshot = cfg.checkpoints.get(next_checkpoint) == Some(&t);

        for run in runs.iter_mut() {
            let sees_contexts = run.kind.observes_contexts();
            let obs = Observation {
                estimates: &draw.estimates,
                hidden_contexts: sees_contexts.then_some(hidden),
                mu_star: (run.kind == PolicyKind::Oracle).then_some(mu_star),
            };
            let decision = act(run.kind, &run.state, obs, posterior_scale, &mut run.rng)?;
            let arm = decision.arm;
            let context: Vector = hidden.row(arm).transpose();
            let reward = reward_with_noise(&inst, &context, reward_noise[arm]);
            let (feature, oracle, regret) = if sees_contexts {
                let oracle = oracle_ctx.expect("computed when a policy sees contexts");
                (
                    context,
                    oracle,
                    instant_regret(hidden, arm, oracle, mu_star)?,
                )
            } else {
                let feature = draw.estimates.row(arm).transpose();
                (
                    feature,
                    oracle_est,
                    instant_regret(&draw.estimates, arm, oracle_est, mu_star)?,
                )
            };
            run.state.update(&feature, reward)?;
            run.trace.outcomes.push(RoundOutcome {
                t,
                chosen: arm,
                oracle,
                reward,
                instant_regret: regret,
                mu_tilde: decision.mu_used,
                est_error: estimation_error(run.state.mu_hat(), mu_star),
            });
            if snapshot {
                run.trace.snapshots.push((t, run.state.mu_hat().clone()));
            }
        }
        if snapshot {
            next_checkpoint += 1;
        }
    }

    Ok(ReplicationRecord {
        rep_index,
        instance: inst,
        traces: runs.into_iter().map(|r| r.trace).collect(),
    })
}

/// Worker count from `POCMAB_THREADS`; `None` means automatic.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs every replication (in parallel on `threads` workers, or the
/// `POCMAB_THREADS` setting when `None`), maps each record through `f`,
/// and returns the results in replication order.
pub fn map_replications<T, F>(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
    f: F,
) -> Result<Vec<T>, HarnessError>
where
    T: Send,
    F: Fn(ReplicationRecord) -> T + Sync,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads.or_else(threads_from_env) {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;
    pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|r| run_replication(cfg, r).map(&f))
            .collect()
    })
}

/// Cross-replication statistics for one `(t, policy)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRecord {
    pub t: usize,
    pub policy: PolicyKind,
    pub mean_cum_regret: f64,
    pub se_cum_regret: f64,
    /// Missing where `d·ln t·√(ln N)` is undefined.
    pub mean_norm_regret: Option<f64>,
    pub mean_est_error: f64,
    pub se_est_error: f64,
}

/// Per-replication series kept for aggregation.
#[derive(Debug, Clone)]
pub struct ReplicationSummary {
    pub per_policy: Vec<(PolicyKind, Vec<f64>, Vec<f64>)>,
}

impl From<ReplicationRecord> for ReplicationSummary {
    fn from(rec: ReplicationRecord) -> Self {
        let per_policy = rec
            .traces
            .into_iter()
            .map(|tr| {
                let mut cum = 0.0;
                let cum_regret = tr
                    .outcomes
                    .iter()
                    .map(|o| {
                        cum += o.instant_regret;
                        cum
                    })
                    .collect();
                let errors = tr.outcomes.iter().map(|o| o.est_error).collect();
                (tr.kind, cum_regret, errors)
            })
            .collect();
        Self { per_policy }
    }
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = values.clone().sum::<f64>() / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// Reduces replication summaries (in the given order) into records sorted
/// by policy name, then `t`.
pub fn aggregate(cfg: &ExperimentConfig, summaries: &[ReplicationSummary]) -> Vec<AggregateRecord> {
    let mut kinds = cfg.policies.clone();
    kinds.sort_by_key(|k| k.name());
    let reps = summaries.len();
    let mut out = Vec::with_capacity(kinds.len() * cfg.horizon);
    if reps == 0 {
        return out;
    }
    for kind in kinds {
        let series: Vec<(&Vec<f64>, &Vec<f64>)> = summaries
            .iter()
            .map(|s| {
                let (_, c, e) = s
                    .per_policy
                    .iter()
                    .find(|(k, _, _)| *k == kind)
                    .expect("policy present");
                (c, e)
            })
            .collect();
        for i in 0..cfg.horizon {
            let t = i + 1;
            let (mean_cum_regret, se_cum_regret) =
                mean_and_se(series.iter().map(|(c, _)| c[i]), reps);
            let (mean_est_error, se_est_error) =
                mean_and_se(series.iter().map(|(_, e)| e[i]), reps);
            out.push(AggregateRecord {
                t,
                policy: kind,
                mean_cum_regret,
                se_cum_regret,
                mean_norm_regret: normalized_regret(mean_cum_regret, cfg.d, t, cfg.n_arms).ok(),
                mean_est_error,
                se_est_error,
            });
        }
    }
    out
}

/// Runs all replications and aggregates them.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<AggregateRecord>, HarnessError> {
    run_experiment_with_threads(cfg, None)
}

pub fn run_experiment_with_threads(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<Vec<AggregateRecord>, HarnessError> {
    let summaries = map_replications(cfg, threads, ReplicationSummary::from)?;
    Ok(aggregate(cfg, &summaries))
}
