//! Valuation generators with the unbiased-favorites (UF) property: every
//! `b_i`-subset of items is equally likely to be agent `i`'s favorite bundle.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::model::{derive_preferences, Instance, ValuationProfile};
use crate::rng::RandomStream;

/// Largest item count `uf_audit` will tabulate.
pub const AUDIT_MAX_ITEMS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub enum DistributionSpec {
    /// Values i.i.d. uniform on `[0, 1)`.
    IidUniform01,
    /// Values i.i.d. Bernoulli(`p`).
    IidBernoulli { p: f64 },
    /// Bernoulli with success probability `1/n^2`; forces distortion towards `e/(e-1)`.
    LowerBoundBernoulli,
    /// Every agent values everything at 0 except `agent`, who values `b_agent`
    /// uniformly drawn items at 1. With replacement, duplicate draws collapse.
    SingleAgentAdversarial { agent: usize, with_replacement: bool },
    /// Each row is an independent uniform permutation of `base` (length `m`).
    ExchangeablePermutation { base: Vec<f64> },
    /// Row `i` is `hi` on a uniform `b_i`-subset and `lo` elsewhere.
    FavoriteBundleUniform { hi: f64, lo: f64 },
}

impl DistributionSpec {
    pub fn single_agent(agent: usize) -> Self {
        Self::SingleAgentAdversarial {
            agent,
            with_replacement: true,
        }
    }

    /// Short identifier used in reports.
    pub fn label(&self) -> String {
        match self {
            Self::IidUniform01 => "iid-uniform".into(),
            Self::IidBernoulli { p } => format!("iid-bernoulli(p={p})"),
            Self::LowerBoundBernoulli => "lower-bound-bernoulli".into(),
            Self::SingleAgentAdversarial {
                agent,
                with_replacement,
            } => {
                if *with_replacement {
                    format!("single-agent({agent})")
                } else {
                    format!("single-agent({agent};distinct)")
                }
            }
            Self::ExchangeablePermutation { base } => {
                let parts: Vec<String> = base.iter().map(|v| v.to_string()).collect();
                format!("exchangeable({})", parts.join(";"))
            }
            Self::FavoriteBundleUniform { hi, lo } => format!("favorite-bundle(hi={hi};lo={lo})"),
        }
    }

    pub fn validate(&self, inst: &Instance) -> Result<()> {
        let value_ok = |x: f64| x.is_finite() && x >= 0.0;
        match self {
            Self::IidUniform01 | Self::LowerBoundBernoulli => Ok(()),
            Self::IidBernoulli { p } => {
                if (0.0..=1.0).contains(p) {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("bernoulli p={p} outside [0, 1]")))
                }
            }
            Self::SingleAgentAdversarial { agent, .. } => {
                if *agent < inst.agents() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "adversarial agent {agent} out of range for {} agents",
                        inst.agents()
                    )))
                }
            }
            Self::ExchangeablePermutation { base } => {
                if base.len() != inst.items() {
                    return Err(Error::DimensionMismatch {
                        expected: format!("base vector of length {}", inst.items()),
                        found: format!("{}", base.len()),
                    });
                }
                if base.iter().all(|&x| value_ok(x)) {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(
                        "base values must be finite and nonnegative".into(),
                    ))
                }
            }
            Self::FavoriteBundleUniform { hi, lo } => {
                if value_ok(*hi) && value_ok(*lo) && hi > lo {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "favorite-bundle needs finite hi > lo >= 0, got hi={hi}, lo={lo}"
                    )))
                }
            }
        }
    }
}

/// Draws one valuation profile.
pub fn sample_profile(
    spec: &DistributionSpec,
    inst: &Instance,
    rng: &mut RandomStream,
) -> Result<ValuationProfile<f64>> {
    spec.validate(inst)?;
    let (n, m) = (inst.agents(), inst.items());
    let mut values = vec![0.0f64; n * m];
    match spec {
        DistributionSpec::IidUniform01 => {
            for v in &mut values {
                *v = rng.random::<f64>();
            }
        }
        DistributionSpec::IidBernoulli { p } => fill_bernoulli(&mut values, *p, rng),
        DistributionSpec::LowerBoundBernoulli => {
            fill_bernoulli(&mut values, 1.0 / (n as f64 * n as f64), rng)
        }
        DistributionSpec::SingleAgentAdversarial {
            agent,
            with_replacement,
        } => {
            let row = &mut values[agent * m..(agent + 1) * m];
            let b = inst.quota(*agent);
            if *with_replacement {
                for _ in 0..b {
                    row[rng.random_range(0..m)] = 1.0;
                }
            } else {
                for g in index::sample(rng, m, b) {
                    row[g] = 1.0;
                }
            }
        }
        DistributionSpec::ExchangeablePermutation { base } => {
            for row in values.chunks_mut(m) {
                row.copy_from_slice(base);
                row.shuffle(rng);
            }
        }
        DistributionSpec::FavoriteBundleUniform { hi, lo } => {
            for (i, row) in values.chunks_mut(m).enumerate() {
                row.fill(*lo);
                for g in index::sample(rng, m, inst.quota(i)) {
                    row[g] = *hi;
                }
            }
        }
    }
    ValuationProfile::from_flat(n, m, values)
}

fn fill_bernoulli(values: &mut [f64], p: f64, rng: &mut RandomStream) {
    for v in values {
        *v = if rng.random_bool(p) { 1.0 } else { 0.0 };
    }
}

/// Favorite-bundle frequencies of one agent.
#[derive(Debug, Clone)]
pub struct AgentAudit {
    pub quota: usize,
    /// Bundles as item bitmasks, ascending.
    pub bundles: Vec<u32>,
    pub counts: Vec<u64>,
    pub trials: u64,
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

impl AgentAudit {
    pub fn frequency(&self, k: usize) -> f64 {
        self.counts[k] as f64 / self.trials as f64
    }

    pub fn expected_frequency(&self) -> f64 {
        1.0 / self.bundles.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct UfAuditReport {
    pub agents: Vec<AgentAudit>,
}

impl UfAuditReport {
    /// True when no agent's chi-square test rejects uniformity at level `alpha`.
    pub fn passes(&self, alpha: f64) -> bool {
        self.agents.iter().all(|a| a.p_value >= alpha)
    }
}

/// Tabulates favorite bundles (after random tie-breaking) over `trials` draws
/// and tests each agent's bundle distribution against uniform.
pub fn uf_audit(
    spec: &DistributionSpec,
    inst: &Instance,
    trials: u64,
    rng: &mut RandomStream,
) -> Result<UfAuditReport> {
    let m = inst.items();
    if m > AUDIT_MAX_ITEMS {
        return Err(Error::TooLarge(format!(
            "uf_audit tabulates at most {AUDIT_MAX_ITEMS} items, got {m}"
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    spec.validate(inst)?;

    // per agent: mask -> slot in the bundle table
    let mut lookup: Vec<Vec<u32>> = Vec::with_capacity(inst.agents());
    let mut bundles: Vec<Vec<u32>> = Vec::with_capacity(inst.agents());
    for &b in inst.quotas() {
        let masks: Vec<u32> = (0u32..1 << m)
            .filter(|mask| mask.count_ones() as usize == b)
            .collect();
        let mut table = vec![u32::MAX; 1 << m];
        for (k, &mask) in masks.iter().enumerate() {
            table[mask as usize] = k as u32;
        }
        lookup.push(table);
        bundles.push(masks);
    }
    let mut counts: Vec<Vec<u64>> = bundles.iter().map(|b| vec![0; b.len()]).collect();

    for _ in 0..trials {
        let values = sample_profile(spec, inst, rng)?;
        let prefs = derive_preferences(inst, &values, rng)?;
        for i in 0..inst.agents() {
            let mask = prefs.favorites(i).iter().fold(0u32, |acc, &g| acc | 1 << g);
            counts[i][lookup[i][mask as usize] as usize] += 1;
        }
    }

    let agents = bundles
        .into_iter()
        .zip(counts)
        .zip(inst.quotas())
        .map(|((bundles, counts), &quota)| {
            let expected = trials as f64 / bundles.len() as f64;
            let chi_square: f64 = counts
                .iter()
                .map(|&c| (c as f64 - expected).powi(2) / expected)
                .sum();
            let dof = bundles.len() - 1;
            let p_value = if dof == 0 {
                1.0
            } else {
                ChiSquared::new(dof as f64)
                    .map(|d| d.sf(chi_square))
                    .unwrap_or(0.0)
            };
            AgentAudit {
                quota,
                bundles,
                counts,
                trials,
                chi_square,
                degrees_of_freedom: dof,
                p_value,
            }
        })
        .collect();
    Ok(UfAuditReport { agents })
}
