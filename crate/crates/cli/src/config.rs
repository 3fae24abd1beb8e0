//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "instances": [[3, 2, 1], {"generator": "geometric-quotas(0.5)", "n": 4, "m": 12}],
//!   "distributions": ["iid-uniform", {"name": "iid-bernoulli", "p": 0.2}],
//!   "mechanisms": ["rs", "rsbs", {"name": "serial-dictator", "order": [2, 1, 0]}],
//!   "trials": 100000,
//!   "seed": 7
//! }
//! ```

use std::path::{Path, PathBuf};

use ordmatch::{DistributionSpec, Instance, MechanismKind, MechanismSpec, RandomStream};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            Self::One(x) => vec![x],
            Self::Many(xs) => xs,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(alias = "instance")]
    pub instances: OneOrMany<InstanceConfig>,
    #[serde(alias = "distribution")]
    pub distributions: OneOrMany<DistributionConfig>,
    #[serde(alias = "mechanism", default)]
    pub mechanisms: Option<OneOrMany<MechanismConfig>>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub complete: bool,
    #[serde(default, alias = "emit-probs")]
    pub emit_probs: bool,
    #[serde(default, alias = "emit-curve")]
    pub emit_curve: bool,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum InstanceConfig {
    Quotas(Vec<usize>),
    Spec(InstanceSpec),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub quotas: Option<Vec<usize>>,
    pub generator: Option<String>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    /// Seed for `random-quotas`; defaults to the experiment seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum DistributionConfig {
    Name(String),
    Spec(DistributionParams),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionParams {
    pub name: String,
    pub p: Option<f64>,
    pub agent: Option<usize>,
    pub with_replacement: Option<bool>,
    pub base: Option<Vec<f64>>,
    pub hi: Option<f64>,
    pub lo: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum MechanismConfig {
    Name(String),
    Spec(MechanismParams),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismParams {
    pub name: String,
    pub order: Option<Vec<usize>>,
    pub complete: Option<bool>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub complete: bool,
    pub emit_probs: bool,
    pub emit_curve: bool,
}

/// One (instance, distribution, mechanism) combination.
#[derive(Debug, Clone)]
pub struct Cell {
    pub instance: Instance,
    pub distribution: DistributionSpec,
    pub mechanism: Option<MechanismSpec>,
}

#[derive(Debug)]
pub struct Experiment {
    pub cells: Vec<Cell>,
    pub trials: u64,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub emit_probs: bool,
    pub emit_curve: bool,
}

/// Byte offset of a 1-based (line, column) position.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    (start + column.saturating_sub(1)).min(text.len())
}

pub fn parse(text: &str, source: &Path) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        let message = inner.to_string();
        let message = message
            .rfind(" at line ")
            .map_or(message.as_str(), |k| &message[..k])
            .to_string();
        let offset = byte_offset(text, inner.line(), inner.column());
        let structural = matches!(inner.classify(), serde_json::error::Category::Data);
        let field = if path == "." || !structural {
            String::new()
        } else {
            format!(" in field `{path}`")
        };
        CliError::Usage(format!(
            "{}: invalid config{field}: {message} (line {}, column {}, byte offset {offset})",
            source.display(),
            inner.line(),
            inner.column()
        ))
    })
}

pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: cannot read config: {e}", path.display())))?;
    parse(&text, path)
}

fn field_error(field: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("invalid config field `{field}`: {message}"))
}

fn parse_generator(name: &str) -> Option<(&str, Option<&str>)> {
    match name.find('(') {
        Some(open) if name.ends_with(')') => Some((&name[..open], Some(&name[open + 1..name.len() - 1]))),
        Some(_) => None,
        None => Some((name, None)),
    }
}

impl InstanceConfig {
    fn resolve(&self, field: &str, default_seed: u64) -> Result<Instance, CliError> {
        let spec = match self {
            Self::Quotas(q) => return Instance::new(q.clone()).map_err(|e| field_error(field, e)),
            Self::Spec(spec) => spec,
        };
        match (&spec.quotas, &spec.generator) {
            (Some(_), Some(_)) => Err(field_error(field, "give either `quotas` or `generator`, not both")),
            (None, None) => Err(field_error(field, "needs `quotas` or `generator`")),
            (Some(q), None) => {
                if let Some(n) = spec.n {
                    if n != q.len() {
                        return Err(field_error(field, format!("n = {n} but {} quotas given", q.len())));
                    }
                }
                if let Some(m) = spec.m {
                    let total: usize = q.iter().sum();
                    if m != total {
                        return Err(field_error(field, format!("m = {m} but quotas sum to {total}")));
                    }
                }
                Instance::new(q.clone()).map_err(|e| field_error(field, e))
            }
            (None, Some(generator)) => {
                let n = spec.n.ok_or_else(|| field_error(field, "generator needs `n`"))?;
                let m = spec.m.ok_or_else(|| field_error(field, "generator needs `m`"))?;
                let (kind, arg) = parse_generator(generator.trim())
                    .ok_or_else(|| field_error(field, format!("malformed generator `{generator}`")))?;
                let inst = match (kind, arg) {
                    ("uniform-quotas", None) => Instance::uniform(n, m),
                    ("geometric-quotas", Some(ratio)) => {
                        let ratio: f64 = ratio
                            .trim()
                            .parse()
                            .map_err(|_| field_error(field, format!("bad geometric ratio `{ratio}`")))?;
                        Instance::geometric(n, m, ratio)
                    }
                    ("random-quotas", None) => {
                        let mut rng = RandomStream::new(spec.seed.unwrap_or(default_seed), 0);
                        Instance::random_composition(n, m, &mut rng)
                    }
                    _ => {
                        return Err(field_error(
                            field,
                            format!(
                                "unknown generator `{generator}` (expected uniform-quotas, geometric-quotas(ratio) or random-quotas)"
                            ),
                        ))
                    }
                };
                inst.map_err(|e| field_error(field, e))
            }
        }
    }
}

impl DistributionConfig {
    fn resolve(&self, field: &str, inst: &Instance) -> Result<DistributionSpec, CliError> {
        let params = match self {
            Self::Name(name) => DistributionParams {
                name: name.clone(),
                p: None,
                agent: None,
                with_replacement: None,
                base: None,
                hi: None,
                lo: None,
            },
            Self::Spec(p) => DistributionParams {
                name: p.name.clone(),
                base: p.base.clone(),
                ..*p
            },
        };
        let need = |value: Option<f64>, key: &str| {
            value.ok_or_else(|| field_error(field, format!("`{}` needs parameter `{key}`", params.name)))
        };
        let spec = match params.name.as_str() {
            "iid-uniform" => DistributionSpec::IidUniform01,
            "iid-bernoulli" => DistributionSpec::IidBernoulli { p: need(params.p, "p")? },
            "lower-bound-bernoulli" => DistributionSpec::LowerBoundBernoulli,
            "single-agent" => DistributionSpec::SingleAgentAdversarial {
                agent: params
                    .agent
                    .ok_or_else(|| field_error(field, "`single-agent` needs parameter `agent`"))?,
                with_replacement: params.with_replacement.unwrap_or(true),
            },
            "exchangeable" => DistributionSpec::ExchangeablePermutation {
                base: params
                    .base
                    .clone()
                    .ok_or_else(|| field_error(field, "`exchangeable` needs parameter `base`"))?,
            },
            "favorite-bundle" => DistributionSpec::FavoriteBundleUniform {
                hi: params.hi.unwrap_or(1.0),
                lo: params.lo.unwrap_or(0.0),
            },
            other => {
                return Err(field_error(
                    field,
                    format!(
                        "unknown distribution `{other}` (expected iid-uniform, iid-bernoulli, lower-bound-bernoulli, single-agent, exchangeable or favorite-bundle)"
                    ),
                ))
            }
        };
        spec.validate(inst).map_err(|e| field_error(field, e))?;
        Ok(spec)
    }
}

impl MechanismConfig {
    fn resolve(&self, field: &str, inst: &Instance, complete: bool) -> Result<MechanismSpec, CliError> {
        let (name, order, own_complete) = match self {
            Self::Name(name) => (name.as_str(), None, None),
            Self::Spec(p) => (p.name.as_str(), p.order.clone(), p.complete),
        };
        if order.is_some() && name != "serial-dictator" {
            return Err(field_error(field, format!("`order` only applies to serial-dictator, not `{name}`")));
        }
        let kind = match name {
            "rs" => MechanismKind::Rs,
            "rsbs" => MechanismKind::Rsbs,
            "hql" => MechanismKind::Hql,
            "secretary-rs" => MechanismKind::SecretaryRs,
            "serial-dictator" => {
                let order = order.unwrap_or_else(|| (0..inst.agents()).collect());
                let mut sorted = order.clone();
                sorted.sort_unstable();
                if sorted != (0..inst.agents()).collect::<Vec<_>>() {
                    return Err(field_error(
                        field,
                        format!("order {order:?} is not a permutation of {} agents", inst.agents()),
                    ));
                }
                MechanismKind::SerialDictator { order }
            }
            other => {
                return Err(field_error(
                    field,
                    format!("unknown mechanism `{other}` (expected rs, rsbs, hql, secretary-rs or serial-dictator)"),
                ))
            }
        };
        Ok(MechanismSpec {
            kind,
            complete: own_complete.unwrap_or(complete),
        })
    }
}

impl ExperimentConfig {
    /// Applies overrides and expands the instance x distribution x mechanism grid.
    pub fn resolve(self, overrides: &Overrides, need_mechanisms: bool) -> Result<Experiment, CliError> {
        let trials = overrides
            .trials
            .or(self.trials)
            .ok_or_else(|| CliError::Usage("missing trial count: set `trials` or pass --trials".into()))?;
        if trials == 0 {
            return Err(field_error("trials", "must be positive"));
        }
        let seed = overrides.seed.or(self.seed).unwrap_or(0);
        let complete = overrides.complete || self.complete;
        let mechanisms = match self.mechanisms {
            Some(_) if !need_mechanisms => Vec::new(),
            Some(m) => m.into_vec(),
            None if need_mechanisms => return Err(CliError::Usage("config needs `mechanisms`".into())),
            None => Vec::new(),
        };
        if need_mechanisms && mechanisms.is_empty() {
            return Err(field_error("mechanisms", "list is empty"));
        }

        let output = overrides.output.clone().or(self.output);
        let distributions = self.distributions.into_vec();
        let mut cells = Vec::new();
        for (a, inst_cfg) in self.instances.into_vec().iter().enumerate() {
            let instance = inst_cfg.resolve(&format!("instances[{a}]"), seed)?;
            for (b, dist_cfg) in distributions.iter().enumerate() {
                let distribution = dist_cfg.resolve(&format!("distributions[{b}]"), &instance)?;
                if mechanisms.is_empty() {
                    cells.push(Cell {
                        instance: instance.clone(),
                        distribution,
                        mechanism: None,
                    });
                    continue;
                }
                for (c, mech_cfg) in mechanisms.iter().enumerate() {
                    let mechanism = mech_cfg.resolve(&format!("mechanisms[{c}]"), &instance, complete)?;
                    cells.push(Cell {
                        instance: instance.clone(),
                        distribution: distribution.clone(),
                        mechanism: Some(mechanism),
                    });
                }
            }
        }
        Ok(Experiment {
            cells,
            trials,
            seed,
            output,
            emit_probs: overrides.emit_probs || self.emit_probs,
            emit_curve: overrides.emit_curve || self.emit_curve,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_str(text: &str) -> Result<ExperimentConfig, CliError> {
        parse(text, Path::new("test.json"))
    }

    #[test]
    fn byte_offsets() {
        let text = "ab\ncde\nf";
        assert_eq!(byte_offset(text, 1, 1), 0);
        assert_eq!(byte_offset(text, 2, 2), 4);
        assert_eq!(byte_offset(text, 3, 1), 7);
        assert_eq!(byte_offset(text, 9, 9), text.len());
    }

    #[test]
    fn malformed_json_names_offset() {
        let err = parse_str("{\n  \"trials\": 5,\n  oops\n}").unwrap_err();
        let CliError::Usage(msg) = err else { panic!() };
        assert!(msg.contains("byte offset 19"), "{msg}");
        assert!(!msg.contains("field"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn bad_field_names_path() {
        let err = parse_str(r#"{"instances": [[1]], "distributions": ["iid-uniform"], "trials": "many"}"#)
            .unwrap_err();
        let CliError::Usage(msg) = err else { panic!() };
        assert!(msg.contains("`trials`"), "{msg}");
    }

    #[test]
    fn grid_expansion_and_overrides() {
        let cfg = parse_str(
            r#"{
                "instances": [[2, 1], {"generator": "uniform-quotas", "n": 3, "m": 7}],
                "distributions": ["iid-uniform", {"name": "iid-bernoulli", "p": 0.5}],
                "mechanisms": ["rs", {"name": "serial-dictator"}],
                "trials": 10, "seed": 3
            }"#,
        )
        .unwrap();
        let exp = cfg
            .resolve(
                &Overrides {
                    trials: Some(20),
                    complete: true,
                    ..Overrides::default()
                },
                true,
            )
            .unwrap();
        assert_eq!(exp.cells.len(), 8);
        assert_eq!(exp.trials, 20);
        assert_eq!(exp.seed, 3);
        assert_eq!(exp.cells[4].instance.quotas(), &[3, 2, 2]);
        let last = exp.cells.last().unwrap().mechanism.clone().unwrap();
        assert!(last.complete);
        assert_eq!(last.kind, MechanismKind::SerialDictator { order: vec![0, 1, 2] });
    }

    #[test]
    fn semantic_errors_name_the_entry() {
        let cfg = parse_str(
            r#"{"instances": [[1, 1]], "distributions": ["iid-uniform"],
                "mechanisms": ["rs", {"name": "serial-dictator", "order": [0, 0]}], "trials": 5}"#,
        )
        .unwrap();
        let CliError::Usage(msg) = cfg.resolve(&Overrides::default(), true).unwrap_err() else {
            panic!()
        };
        assert!(msg.contains("mechanisms[1]"), "{msg}");

        let cfg = parse_str(
            r#"{"instances": [{"generator": "geometric-quotas(x)", "n": 2, "m": 4}],
                "distributions": "iid-uniform", "trials": 5}"#,
        )
        .unwrap();
        let CliError::Usage(msg) = cfg.resolve(&Overrides::default(), false).unwrap_err() else {
            panic!()
        };
        assert!(msg.contains("instances[0]"), "{msg}");
    }

    #[test]
    fn generators() {
        let cfg = parse_str(
            r#"{"instances": [{"generator": "geometric-quotas(0.5)", "n": 3, "m": 10},
                              {"generator": "random-quotas", "n": 3, "m": 10, "seed": 4}],
                "distributions": "iid-uniform", "trials": 1}"#,
        )
        .unwrap();
        let exp = cfg.resolve(&Overrides::default(), false).unwrap();
        assert_eq!(exp.cells[0].instance.quotas(), &[5, 3, 2]);
        assert_eq!(exp.cells[1].instance.items(), 10);
        assert!(exp.cells[0].mechanism.is_none());
    }
}
