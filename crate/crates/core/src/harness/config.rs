//! Experiment configuration: a JSON object whose keys mirror
//! [`ExperimentConfig`]. Missing keys take their defaults.

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::environment::{GenScheme, InstanceFile, ProblemInstance, Whitening};
use crate::policy::PolicyKind;

pub const DEFAULT_CHECKPOINTS: [usize; 6] = [10, 50, 100, 250, 500, 1000];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid value at `{path}`: {message}")]
    Validation { path: String, message: String },
}

fn parse_err(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        path: path.to_string(),
        message: message.into(),
    }
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub d: usize,
    pub n_arms: usize,
    pub horizon: usize,
    pub replications: usize,
    pub master_seed: u64,
    pub policies: Vec<PolicyKind>,
    /// Prior covariance is `prior_scale · I`.
    pub prior_scale: f64,
    /// Sample from `N(μ̂, σ²_ry·B⁻¹)` instead of `N(μ̂, B⁻¹)`.
    pub scaled_posterior: bool,
    pub gen_scheme: GenScheme,
    pub whitening: Whitening,
    /// Rounds at which `μ̂` is snapshotted; sorted, within `[1, horizon]`.
    pub checkpoints: Vec<usize>,
    pub output_path: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let horizon = 1000;
        Self {
            d: 10,
            n_arms: 10,
            horizon,
            replications: 50,
            master_seed: 1,
            policies: PolicyKind::ALL.to_vec(),
            prior_scale: 1.0,
            scaled_posterior: false,
            gen_scheme: GenScheme::Default,
            whitening: Whitening::Marginal,
            checkpoints: default_checkpoints(horizon),
            output_path: "results.csv".to_string(),
        }
    }
}

pub fn default_checkpoints(horizon: usize) -> Vec<usize> {
    DEFAULT_CHECKPOINTS
        .iter()
        .copied()
        .filter(|&t| t <= horizon)
        .collect()
}

fn positive_int(path: &str, v: &Value) -> Result<usize, ConfigError> {
    match v.as_i64() {
        Some(n) if n >= 1 => Ok(n as usize),
        Some(n) => Err(invalid(path, format!("must be at least 1, got {n}"))),
        None if v.is_u64() => Ok(v.as_u64().unwrap() as usize),
        None => Err(parse_err(path, format!("expected an integer, got {v}"))),
    }
}

fn number(path: &str, v: &Value) -> Result<f64, ConfigError> {
    v.as_f64()
        .ok_or_else(|| parse_err(path, format!("expected a number, got {v}")))
}

fn string(path: &str, v: &Value) -> Result<String, ConfigError> {
    v.as_str()
        .map(str::to_string)
        .ok_or_else(|| parse_err(path, format!("expected a string, got {v}")))
}

fn parse_policies(v: &Value) -> Result<Vec<PolicyKind>, ConfigError> {
    let items = v
        .as_array()
        .ok_or_else(|| parse_err("policies", "expected an array"))?;
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let path = format!("policies[{i}]");
        let name = string(&path, item)?;
        let kind: PolicyKind = name.parse().map_err(|e: String| parse_err(&path, e))?;
        if out.contains(&kind) {
            return Err(invalid(&path, format!("duplicate policy `{kind}`")));
        }
        out.push(kind);
    }
    if out.is_empty() {
        return Err(invalid("policies", "at least one policy is required"));
    }
    Ok(out)
}

fn parse_scheme(v: &Value) -> Result<GenScheme, ConfigError> {
    match v {
        Value::String(s) if s == "default" => Ok(GenScheme::Default),
        Value::Object(map) if map.len() == 1 && map.contains_key("explicit") => {
            let file: InstanceFile = serde_json::from_value(map["explicit"].clone())
                .map_err(|e| parse_err("gen_scheme.explicit", e.to_string()))?;
            let inst = file
                .into_instance()
                .map_err(|e| invalid("gen_scheme.explicit", e.to_string()))?;
            Ok(GenScheme::Explicit(Box::new(inst)))
        }
        other => Err(parse_err(
            "gen_scheme",
            format!("expected \"default\" or {{\"explicit\": {{...}}}}, got {other}"),
        )),
    }
}

/// Parses a JSON config. An empty document yields the defaults.
pub fn parse_config(source: &str) -> Result<ExperimentConfig, ConfigError> {
    let root: Value = if source.trim().is_empty() {
        Value::Object(Map::new())
    } else {
        serde_json::from_str(source).map_err(|e| parse_err("$", e.to_string()))?
    };
    let map = root
        .as_object()
        .ok_or_else(|| parse_err("$", "expected a JSON object"))?;

    let mut cfg = ExperimentConfig::default();
    let mut checkpoints = None;
    for (key, v) in map {
        let k = key.as_str();
        match k {
            "d" => cfg.d = positive_int(k, v)?,
            "N" | "n" => cfg.n_arms = positive_int(k, v)?,
            "T" | "t" => cfg.horizon = positive_int(k, v)?,
            "replications" => cfg.replications = positive_int(k, v)?,
            "master_seed" => {
                cfg.master_seed = v.as_u64().ok_or_else(|| {
                    parse_err(k, format!("expected an unsigned 64-bit integer, got {v}"))
                })?
            }
            "policies" => cfg.policies = parse_policies(v)?,
            "prior_scale" => {
                let s = number(k, v)?;
                if !(s > 0.0 && s.is_finite()) {
                    return Err(invalid(k, format!("must be positive, got {s}")));
                }
                cfg.prior_scale = s;
            }
            "scaled_posterior" => {
                cfg.scaled_posterior = v
                    .as_bool()
                    .ok_or_else(|| parse_err(k, format!("expected a boolean, got {v}")))?
            }
            "gen_scheme" => cfg.gen_scheme = parse_scheme(v)?,
            "whitening" => {
                cfg.whitening = serde_json::from_value(v.clone()).map_err(|_| {
                    parse_err(k, format!("expected \"marginal\" or \"literal\", got {v}"))
                })?
            }
            "checkpoints" => {
                let items = v
                    .as_array()
                    .ok_or_else(|| parse_err(k, "expected an array"))?;
                let mut list = Vec::with_capacity(items.len());
                for (i, item) in items.iter().enumerate() {
                    list.push(positive_int(&format!("checkpoints[{i}]"), item)?);
                }
                checkpoints = Some(list);
            }
            "output_path" => cfg.output_path = string(k, v)?,
            other => return Err(parse_err(other, "unknown key")),
        }
    }

    cfg.checkpoints = match checkpoints {
        Some(mut list) => {
            list.sort_unstable();
            list.dedup();
            if let Some(&t) = list.iter().find(|&&t| t > cfg.horizon) {
                return Err(invalid(
                    "checkpoints",
                    format!("{t} is beyond T = {}", cfg.horizon),
                ));
            }
            list
        }
        None => default_checkpoints(cfg.horizon),
    };
    if let GenScheme::Explicit(inst) = &cfg.gen_scheme {
        if inst.d() != cfg.d || inst.n_arms() != cfg.n_arms {
            return Err(invalid(
                "gen_scheme.explicit",
                format!(
                    "instance is d={}, N={} but config has d={}, N={}",
                    inst.d(),
                    inst.n_arms(),
                    cfg.d,
                    cfg.n_arms
                ),
            ));
        }
    }
    Ok(cfg)
}

impl ExperimentConfig {
    /// Serializes to the same JSON layout [`parse_config`] reads.
    pub fn to_json(&self) -> String {
        let scheme = match &self.gen_scheme {
            GenScheme::Default => json!("default"),
            GenScheme::Explicit(inst) => json!({ "explicit": inst.to_file() }),
        };
        let value = json!({
            "d": self.d,
            "N": self.n_arms,
            "T": self.horizon,
            "replications": self.replications,
            "master_seed": self.master_seed,
            "policies": self.policies.iter().map(|p| p.name()).collect::<Vec<_>>(),
            "prior_scale": self.prior_scale,
            "scaled_posterior": self.scaled_posterior,
            "gen_scheme": scheme,
            "whitening": self.whitening,
            "checkpoints": self.checkpoints,
            "output_path": self.output_path,
        });
        serde_json::to_string_pretty(&value).expect("config serializes")
    }

    /// The explicit instance, if the scheme fixes one.
    pub fn fixed_instance(&self) -> Option<&ProblemInstance> {
        match &self.gen_scheme {
            GenScheme::Explicit(inst) => Some(inst),
            GenScheme::Default => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::generate_instance;
    use crate::rng::RandomStream;
    use proptest::prelude::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(
            (cfg.d, cfg.n_arms, cfg.horizon, cfg.replications),
            (10, 10, 1000, 50)
        );
        assert_eq!(cfg.prior_scale, 1.0);
        assert!(!cfg.scaled_posterior);
        assert_eq!(parse_config("{}").unwrap(), cfg);
    }

    #[test]
    fn negative_horizon_is_a_validation_error() {
        assert!(
            matches!(parse_config(r#"{"T": -5}"#), Err(ConfigError::Validation { path, .. }) if path == "T")
        );
    }

    #[test]
    fn errors_carry_key_paths() {
        let e = parse_config(r#"{"policies": ["thompson", "ucb"]}"#).unwrap_err();
        assert!(
            matches!(e, ConfigError::Parse { ref path, .. } if path == "policies[1]"),
            "{e}"
        );
        let e = parse_config(r#"{"bogus": 1}"#).unwrap_err();
        assert!(matches!(e, ConfigError::Parse { ref path, .. } if path == "bogus"));
        let e = parse_config(r#"{"d": "ten"}"#).unwrap_err();
        assert!(matches!(e, ConfigError::Parse { ref path, .. } if path == "d"));
        let e = parse_config(r#"{"T": 100, "checkpoints": [10, 200]}"#).unwrap_err();
        assert!(matches!(e, ConfigError::Validation { ref path, .. } if path == "checkpoints"));
        assert!(parse_config("[1, 2]").is_err());
        assert!(parse_config(r#"{"prior_scale": 0}"#).is_err());
        assert!(parse_config(r#"{"policies": ["oracle", "oracle"]}"#).is_err());
    }

    #[test]
    fn default_checkpoints_follow_horizon() {
        assert_eq!(
            parse_config(r#"{"T": 120}"#).unwrap().checkpoints,
            vec![10, 50, 100]
        );
        assert_eq!(
            parse_config(r#"{"T": 2000}"#).unwrap().checkpoints,
            DEFAULT_CHECKPOINTS.to_vec()
        );
    }

    #[test]
    fn explicit_scheme_round_trips() {
        let inst =
            generate_instance(3, 4, &GenScheme::Default, &mut RandomStream::from_seed(1)).unwrap();
        let cfg = ExperimentConfig {
            d: 3,
            n_arms: 4,
            gen_scheme: GenScheme::Explicit(Box::new(inst)),
            whitening: Whitening::Literal,
            ..ExperimentConfig::default()
        };
        assert_eq!(parse_config(&cfg.to_json()).unwrap(), cfg);
        let mismatched = ExperimentConfig { d: 5, ..cfg };
        assert!(parse_config(&mismatched.to_json()).is_err());
    }

    fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
        (
            1usize..40,
            1usize..60,
            1usize..5000,
            1usize..500,
            any::<u64>(),
            proptest::sample::subsequence(PolicyKind::ALL.to_vec(), 1..=5),
            1e-3f64..1e3,
            any::<bool>(),
            prop_oneof![Just(Whitening::Marginal), Just(Whitening::Literal)],
            "[a-z/._-]{1,20}",
        )
            .prop_map(
                |(d, n, t, reps, seed, policies, prior, scaled, whitening, out)| ExperimentConfig {
                    d,
                    n_arms: n,
                    horizon: t,
                    replications: reps,
                    master_seed: seed,
                    policies,
                    prior_scale: prior,
                    scaled_posterior: scaled,
                    gen_scheme: GenScheme::Default,
                    whitening,
                    checkpoints: default_checkpoints(t),
                    output_path: out,
                },
            )
    }

    proptest! {
        #[test]
        fn emit_then_parse_is_identity(cfg in arb_config()) {
            prop_assert_eq!(parse_config(&cfg.to_json()).unwrap(), cfg);
        }
    }
}
