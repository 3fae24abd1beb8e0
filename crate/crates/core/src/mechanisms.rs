//! Ordinal b-matching mechanisms.
//!
//! All mechanisms read only favorite bundles. Probabilities that depend on the
//! instance alone (survival, burning, stealing, activation) are computed once
//! in [`PreparedMechanism::new`] and reused across runs.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::analytics;
use crate::error::{Error, Result};
use crate::model::{complete_matching, Instance, Matching, PreferenceProfile};
use crate::rng::RandomStream;

/// Slack allowed when checking that burning/stealing probabilities lie in `[0, 1)`.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MechanismKind {
    /// Random Survivors.
    Rs,
    /// Random Survivors with item burning and stealing.
    Rsbs,
    /// Highest quota last: one pass, max-quota agent at the end.
    Hql,
    /// RS survivors visited in a uniformly random order.
    SecretaryRs,
    /// Deterministic serial dictatorship over favorite bundles.
    SerialDictator { order: Vec<usize> },
}

impl MechanismKind {
    pub fn label(&self) -> String {
        match self {
            Self::Rs => "rs".into(),
            Self::Rsbs => "rsbs".into(),
            Self::Hql => "hql".into(),
            Self::SecretaryRs => "secretary-rs".into(),
            Self::SerialDictator { order } => {
                let parts: Vec<String> = order.iter().map(|a| a.to_string()).collect();
                format!("serial-dictator({})", parts.join(";"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MechanismSpec {
    pub kind: MechanismKind,
    /// Fill leftover items after the mechanism runs.
    pub complete: bool,
}

impl MechanismSpec {
    pub fn new(kind: MechanismKind) -> Self {
        Self {
            kind,
            complete: false,
        }
    }

    pub fn completed(mut self) -> Self {
        self.complete = true;
        self
    }

    pub fn label(&self) -> String {
        if self.complete {
            format!("{}+complete", self.kind.label())
        } else {
            self.kind.label()
        }
    }
}

impl From<MechanismKind> for MechanismSpec {
    fn from(kind: MechanismKind) -> Self {
        Self::new(kind)
    }
}

#[derive(Debug, Clone)]
enum Plan {
    Rs {
        survive: Vec<f64>,
    },
    Rsbs {
        i_star: usize,
        survive: Vec<f64>,
        burn: Vec<f64>,
        steal: f64,
    },
    Hql {
        order: Vec<usize>,
        activate: Vec<f64>,
    },
    Secretary {
        survive: Vec<f64>,
    },
    Serial {
        order: Vec<usize>,
    },
}

/// A mechanism bound to an instance, ready to run on any preference profile.
#[derive(Debug, Clone)]
pub struct PreparedMechanism {
    spec: MechanismSpec,
    inst: Instance,
    plan: Plan,
}

fn survival_probs(inst: &Instance) -> Vec<f64> {
    inst.quotas()
        .iter()
        .map(|&b| analytics::survivor_prob::<f64>(b, inst.items()).expect("b_i <= m"))
        .collect()
}

/// Checks a probability lies in `[0, 1)` up to [`PROBABILITY_TOLERANCE`] and clamps it.
fn checked_probability(name: &str, value: f64) -> Result<f64> {
    if !value.is_finite() || value < -PROBABILITY_TOLERANCE || value >= 1.0 {
        return Err(Error::Assertion(format!("{name} = {value} outside [0, 1)")));
    }
    Ok(value.max(0.0))
}

impl PreparedMechanism {
    pub fn new(spec: &MechanismSpec, inst: &Instance) -> Result<Self> {
        let plan = match &spec.kind {
            MechanismKind::Rs => Plan::Rs {
                survive: survival_probs(inst),
            },
            MechanismKind::SecretaryRs => Plan::Secretary {
                survive: survival_probs(inst),
            },
            MechanismKind::Rsbs => {
                let i_star = inst.max_quota_agent();
                let mut burn = vec![0.0; inst.agents()];
                for (i, beta) in burn.iter_mut().enumerate() {
                    if i != i_star {
                        let value = analytics::burning_prob::<f64>(inst, i, i_star)?;
                        *beta = checked_probability(&format!("beta_{i}"), value)?;
                    }
                }
                let steal = if inst.agents() > 1 {
                    let value = analytics::stealing_prob::<f64>(inst.max_quota(), inst.items())?;
                    checked_probability("sigma", value)?
                } else {
                    0.0
                };
                Plan::Rsbs {
                    i_star,
                    survive: survival_probs(inst),
                    burn,
                    steal,
                }
            }
            MechanismKind::Hql => {
                let order = hql_order(inst);
                let m = inst.items();
                let b_last = inst.quota(order[order.len() - 1]);
                let mut prefix = 0;
                let activate = order
                    .iter()
                    .map(|&a| {
                        let p = m as f64 / (2 * m - b_last - prefix) as f64;
                        prefix += inst.quota(a);
                        p
                    })
                    .collect();
                Plan::Hql { order, activate }
            }
            MechanismKind::SerialDictator { order } => {
                check_permutation(order, inst.agents())?;
                Plan::Serial {
                    order: order.clone(),
                }
            }
        };
        Ok(Self {
            spec: spec.clone(),
            inst: inst.clone(),
            plan,
        })
    }

    pub fn spec(&self) -> &MechanismSpec {
        &self.spec
    }

    pub fn instance(&self) -> &Instance {
        &self.inst
    }

    /// Runs the mechanism once. `prefs` must belong to the prepared instance.
    pub fn run(&self, prefs: &PreferenceProfile, rng: &mut RandomStream) -> Matching {
        debug_assert_eq!(prefs.agents(), self.inst.agents());
        let m = self.inst.items();
        let mut matching = Matching::empty(m);
        match &self.plan {
            Plan::Rs { survive } => {
                let survivors = draw_survivors(survive, None, rng);
                assign_random_demand(prefs, &survivors, &mut matching, rng);
            }
            Plan::Secretary { survive } => {
                let survivors = draw_survivors(survive, None, rng);
                let mut order: Vec<usize> = (0..self.inst.agents()).collect();
                order.shuffle(rng);
                for a in order {
                    if survivors[a] {
                        take_available(prefs, a, &mut matching);
                    }
                }
            }
            Plan::Rsbs {
                i_star,
                survive,
                burn,
                steal,
            } => {
                let i_star = *i_star;
                let survivors = draw_survivors(survive, Some(i_star), rng);
                assign_random_demand(prefs, &survivors, &mut matching, rng);
                let burnt: Vec<bool> = survivors
                    .iter()
                    .zip(burn)
                    .map(|(&s, &beta)| s && rng.random_bool(beta))
                    .collect();
                for g in 0..m {
                    if let Some(a) = matching.holder(g) {
                        if burnt[a] {
                            matching.set(g, None);
                        }
                    }
                }
                for &g in prefs.favorites(i_star) {
                    if matching.holder(g).is_none() {
                        matching.set(g, Some(i_star));
                    }
                }
                if *steal > 0.0 && rng.random_bool(*steal) {
                    for &g in prefs.favorites(i_star) {
                        matching.set(g, Some(i_star));
                    }
                }
            }
            Plan::Hql { order, activate } => {
                for (&a, &p) in order.iter().zip(activate) {
                    if p >= 1.0 || rng.random_bool(p) {
                        take_available(prefs, a, &mut matching);
                    }
                }
            }
            Plan::Serial { order } => {
                for &a in order {
                    take_available(prefs, a, &mut matching);
                }
            }
        }
        if self.spec.complete {
            matching = complete_matching(&matching, &self.inst).expect("mechanism output is feasible");
        }
        matching
    }
}

/// HQL processing order: identity with the lowest-indexed maximum-quota agent swapped last.
pub fn hql_order(inst: &Instance) -> Vec<usize> {
    let mut order: Vec<usize> = (0..inst.agents()).collect();
    let last = order.len() - 1;
    order.swap(inst.max_quota_agent(), last);
    order
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    let ok = order.len() == n
        && order
            .iter()
            .all(|&a| a < n && !std::mem::replace(&mut seen[a], true));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidPermutation { n })
    }
}

fn draw_survivors(survive: &[f64], exclude: Option<usize>, rng: &mut RandomStream) -> Vec<bool> {
    survive
        .iter()
        .enumerate()
        .map(|(i, &p)| Some(i) != exclude && (p >= 1.0 || rng.random_bool(p)))
        .collect()
}

/// Gives each item to a uniform member of its demand set among `survivors`
/// (reservoir sampling in agent order).
fn assign_random_demand(
    prefs: &PreferenceProfile,
    survivors: &[bool],
    matching: &mut Matching,
    rng: &mut RandomStream,
) {
    let mut demand = vec![0u32; matching.items()];
    for (a, _) in survivors.iter().enumerate().filter(|(_, &s)| s) {
        for &g in prefs.favorites(a) {
            demand[g] += 1;
            if demand[g] == 1 || rng.random_range(0..demand[g]) == 0 {
                matching.set(g, Some(a));
            }
        }
    }
}

fn take_available(prefs: &PreferenceProfile, agent: usize, matching: &mut Matching) {
    for &g in prefs.favorites(agent) {
        if matching.holder(g).is_none() {
            matching.set(g, Some(agent));
        }
    }
}

/// Runs `spec` once; convenience wrapper over [`PreparedMechanism`].
pub fn run_mechanism(
    spec: &MechanismSpec,
    inst: &Instance,
    prefs: &PreferenceProfile,
    rng: &mut RandomStream,
) -> Result<Matching> {
    if prefs.agents() != inst.agents() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} agents", inst.agents()),
            found: format!("{}", prefs.agents()),
        });
    }
    Ok(PreparedMechanism::new(spec, inst)?.run(prefs, rng))
}

pub fn run_rs(inst: &Instance, prefs: &PreferenceProfile, rng: &mut RandomStream) -> Result<Matching> {
    run_mechanism(&MechanismKind::Rs.into(), inst, prefs, rng)
}

pub fn run_rsbs(inst: &Instance, prefs: &PreferenceProfile, rng: &mut RandomStream) -> Result<Matching> {
    run_mechanism(&MechanismKind::Rsbs.into(), inst, prefs, rng)
}

pub fn run_hql(inst: &Instance, prefs: &PreferenceProfile, rng: &mut RandomStream) -> Result<Matching> {
    run_mechanism(&MechanismKind::Hql.into(), inst, prefs, rng)
}

pub fn run_secretary_rs(
    inst: &Instance,
    prefs: &PreferenceProfile,
    rng: &mut RandomStream,
) -> Result<Matching> {
    run_mechanism(&MechanismKind::SecretaryRs.into(), inst, prefs, rng)
}

pub fn run_serial_dictator(
    inst: &Instance,
    prefs: &PreferenceProfile,
    order: &[usize],
) -> Result<Matching> {
    let spec = MechanismKind::SerialDictator {
        order: order.to_vec(),
    }
    .into();
    // deterministic; the stream is never read
    run_mechanism(&spec, inst, prefs, &mut RandomStream::new(0, 0))
}
