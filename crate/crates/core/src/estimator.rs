//! Monte Carlo estimation of distortion, distortion gap and per-rank
//! assignment probabilities.
//!
//! Trial `t` always draws from `RandomStream::new(seed, t)`. Trials are grouped
//! into fixed chunks of [`CHUNK_TRIALS`]; chunks may run on any worker but are
//! reduced in ascending order, so reports are bitwise identical for every
//! thread count.

use std::ops::Range;

use rayon::prelude::*;

use crate::analytics;
use crate::distributions::{sample_profile, DistributionSpec};
use crate::error::{Error, Result};
use crate::mechanisms::{MechanismKind, MechanismSpec, PreparedMechanism};
use crate::model::{derive_preferences, social_welfare, Instance, Matching, ValuationProfile};
use crate::opt::optimal_matching;
use crate::rng::RandomStream;
use crate::scalar::CompensatedSum;

pub const CHUNK_TRIALS: u64 = 1024;

/// Width of every reported confidence band, in standard errors.
pub const CONFIDENCE_Z: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub mean_opt: f64,
    pub mean_sw: f64,
    /// Ratio of means `mean_opt / mean_sw`.
    pub distortion_estimate: f64,
    pub stderr_opt: f64,
    pub stderr_sw: f64,
    /// Delta-method standard error of the ratio.
    pub stderr_distortion: f64,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrixReport {
    pub quotas: Vec<usize>,
    /// `counts[i][t]`: trials in which agent `i` received their rank-`t` item (0-based).
    pub counts: Vec<Vec<u64>>,
    /// Per agent: total favorite items received, and the sum of squares of that count.
    pub favorites_received: Vec<u64>,
    pub favorites_received_sq: Vec<u64>,
    pub trials: u64,
    pub seed: u64,
}

impl ProbMatrixReport {
    pub fn q_hat(&self, agent: usize, rank: usize) -> f64 {
        self.counts[agent][rank] as f64 / self.trials as f64
    }

    /// Binomial standard error `sqrt(q (1 - q) / N)` at the empirical `q`.
    pub fn stderr(&self, agent: usize, rank: usize) -> f64 {
        let q = self.q_hat(agent, rank);
        (q * (1.0 - q) / self.trials as f64).sqrt()
    }

    /// Half-width of the Wilson interval at [`CONFIDENCE_Z`].
    pub fn wilson_half_width(&self, agent: usize, rank: usize) -> f64 {
        wilson_half_width(self.counts[agent][rank], self.trials, CONFIDENCE_Z)
    }

    /// Fraction of `agent`'s favorite bundle received, averaged over trials.
    pub fn yield_mean(&self, agent: usize) -> f64 {
        self.favorites_received[agent] as f64 / (self.trials as f64 * self.quotas[agent] as f64)
    }

    pub fn yield_stderr(&self, agent: usize) -> f64 {
        let n = self.trials as f64;
        let b = self.quotas[agent] as f64;
        let mean = self.favorites_received[agent] as f64 / n;
        let second = self.favorites_received_sq[agent] as f64 / n;
        let var = (second - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
        (var / n).sqrt() / b
    }

    /// `(agent, rank)` pairs in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.quotas
            .iter()
            .enumerate()
            .flat_map(|(i, &b)| (0..b).map(move |t| (i, t)))
    }

    pub fn min_q_hat(&self) -> f64 {
        self.cells()
            .map(|(i, t)| self.q_hat(i, t))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn wilson_half_width(successes: u64, trials: u64, z: f64) -> f64 {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub estimate: EstimateReport,
    pub benchmark: f64,
    /// Estimated distortion divided by the benchmark lower bound.
    pub ratio: f64,
    pub ratio_stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundReport {
    pub agents: usize,
    pub estimate: EstimateReport,
    /// `1 - 2/n`.
    pub opt_floor: f64,
    /// `1 - 1/e + 2/n`.
    pub sw_ceiling: f64,
    pub opt_floor_holds: bool,
    pub sw_ceiling_holds: bool,
}

impl LowerBoundReport {
    pub fn implied_ratio(&self) -> f64 {
        self.estimate.distortion_estimate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecretaryBoundReport {
    pub items: usize,
    /// Expected share of agent 0's favorites received (quota `m - 1`).
    pub large_agent_yield: f64,
    pub large_agent_stderr: f64,
    /// Probability agent 1 (quota 1) receives their top item.
    pub small_agent_top: f64,
    pub small_agent_stderr: f64,
    /// `(3m - 1) / (4m - 2)`.
    pub threshold: f64,
    pub holds: bool,
}

/// Monte Carlo driver. `threads == 0` lets rayon pick the worker count.
#[derive(Debug, Clone, Copy)]
pub struct Estimator {
    pub threads: usize,
    /// Compute OPT on every probability trial too and fail if SW exceeds it.
    pub check_dominance: bool,
}

impl Default for Estimator {
    fn default() -> Self {
        Self {
            threads: 0,
            check_dominance: true,
        }
    }
}

#[derive(Default, Clone)]
struct MomentAcc {
    sw: CompensatedSum<f64>,
    opt: CompensatedSum<f64>,
    sw_sq: CompensatedSum<f64>,
    opt_sq: CompensatedSum<f64>,
    cross: CompensatedSum<f64>,
}

impl MomentAcc {
    fn push(&mut self, sw: f64, opt: f64) {
        self.sw.add(sw);
        self.opt.add(opt);
        self.sw_sq.add(sw * sw);
        self.opt_sq.add(opt * opt);
        self.cross.add(sw * opt);
    }

    fn merge(&mut self, other: &Self) {
        self.sw.merge(&other.sw);
        self.opt.merge(&other.opt);
        self.sw_sq.merge(&other.sw_sq);
        self.opt_sq.merge(&other.opt_sq);
        self.cross.merge(&other.cross);
    }
}

struct ProbAcc {
    counts: Vec<u64>,
    received: Vec<u64>,
    received_sq: Vec<u64>,
}

/// One trial's draw: values, preferences and the mechanism outcome.
struct Trial {
    values: ValuationProfile<f64>,
    matching: Matching,
    ranks_received: Vec<Vec<bool>>,
}

impl Estimator {
    pub fn with_threads(threads: usize) -> Self {
        Self {
            threads,
            ..Self::default()
        }
    }

    fn chunks<A, F>(&self, trials: u64, work: F) -> Result<Vec<A>>
    where
        A: Send,
        F: Fn(Range<u64>) -> Result<A> + Sync,
    {
        let chunk_count = trials.div_ceil(CHUNK_TRIALS);
        let ranges = (0..chunk_count)
            .map(|c| c * CHUNK_TRIALS..((c + 1) * CHUNK_TRIALS).min(trials))
            .collect::<Vec<_>>();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        pool.install(|| ranges.into_par_iter().map(&work).collect())
    }

    fn run_trial(
        prepared: &PreparedMechanism,
        dist: &DistributionSpec,
        seed: u64,
        t: u64,
        track_ranks: bool,
    ) -> Result<Trial> {
        let inst = prepared.instance();
        let mut rng = RandomStream::new(seed, t);
        let values = sample_profile(dist, inst, &mut rng)?;
        let prefs = derive_preferences(inst, &values, &mut rng)?;
        let matching = prepared.run(&prefs, &mut rng);
        let ranks_received = if track_ranks {
            (0..inst.agents())
                .map(|i| {
                    (0..inst.quota(i))
                        .map(|t| matching.holder(prefs.item_at(i, t)) == Some(i))
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Trial {
            values,
            matching,
            ranks_received,
        })
    }

    /// Welfare of the trial's matching and of the optimum; fails if the former is larger.
    fn welfare_pair(inst: &Instance, trial: &Trial, t: u64) -> Result<(f64, f64)> {
        let sw = social_welfare(&trial.matching, &trial.values)?;
        let opt = optimal_matching(inst, &trial.values)?.value;
        if sw > opt {
            return Err(Error::DominanceViolation { trial: t, sw, opt });
        }
        Ok((sw, opt))
    }

    pub fn distortion(
        &self,
        mech: &MechanismSpec,
        dist: &DistributionSpec,
        inst: &Instance,
        trials: u64,
        seed: u64,
    ) -> Result<EstimateReport> {
        if trials == 0 {
            return Err(Error::InvalidParameter("trials must be positive".into()));
        }
        dist.validate(inst)?;
        let prepared = PreparedMechanism::new(mech, inst)?;
        let parts = self.chunks(trials, |range| {
            let mut acc = MomentAcc::default();
            for t in range {
                let trial = Self::run_trial(&prepared, dist, seed, t, false)?;
                let (sw, opt) = Self::welfare_pair(inst, &trial, t)?;
                acc.push(sw, opt);
            }
            Ok(acc)
        })?;
        let mut total = MomentAcc::default();
        for part in &parts {
            total.merge(part);
        }
        Ok(moments_report(&total, trials, seed))
    }

    pub fn assignment_probs(
        &self,
        mech: &MechanismSpec,
        dist: &DistributionSpec,
        inst: &Instance,
        trials: u64,
        seed: u64,
    ) -> Result<ProbMatrixReport> {
        if trials == 0 {
            return Err(Error::InvalidParameter("trials must be positive".into()));
        }
        dist.validate(inst)?;
        let mech = MechanismSpec {
            complete: false,
            ..mech.clone()
        };
        let prepared = PreparedMechanism::new(&mech, inst)?;
        let n = inst.agents();
        let cells = inst.items();
        let parts = self.chunks(trials, |range| {
            let mut acc = ProbAcc {
                counts: vec![0; cells],
                received: vec![0; n],
                received_sq: vec![0; n],
            };
            for t in range {
                let trial = Self::run_trial(&prepared, dist, seed, t, true)?;
                if self.check_dominance {
                    Self::welfare_pair(inst, &trial, t)?;
                }
                let mut offset = 0;
                for (i, ranks) in trial.ranks_received.iter().enumerate() {
                    let mut got = 0u64;
                    for (k, &hit) in ranks.iter().enumerate() {
                        if hit {
                            acc.counts[offset + k] += 1;
                            got += 1;
                        }
                    }
                    acc.received[i] += got;
                    acc.received_sq[i] += got * got;
                    offset += ranks.len();
                }
            }
            Ok(acc)
        })?;

        let mut flat = vec![0u64; cells];
        let mut received = vec![0u64; n];
        let mut received_sq = vec![0u64; n];
        for part in &parts {
            flat.iter_mut().zip(&part.counts).for_each(|(a, b)| *a += b);
            received.iter_mut().zip(&part.received).for_each(|(a, b)| *a += b);
            received_sq
                .iter_mut()
                .zip(&part.received_sq)
                .for_each(|(a, b)| *a += b);
        }
        let mut counts = Vec::with_capacity(n);
        let mut offset = 0;
        for &b in inst.quotas() {
            counts.push(flat[offset..offset + b].to_vec());
            offset += b;
        }
        Ok(ProbMatrixReport {
            quotas: inst.quotas().to_vec(),
            counts,
            favorites_received: received,
            favorites_received_sq: received_sq,
            trials,
            seed,
        })
    }

    pub fn gap_report(
        &self,
        mech: &MechanismSpec,
        inst: &Instance,
        dist: &DistributionSpec,
        trials: u64,
        seed: u64,
    ) -> Result<GapReport> {
        let estimate = self.distortion(mech, dist, inst, trials, seed)?;
        let benchmark = analytics::benchmark_lower_bound::<f64>(inst);
        Ok(GapReport {
            ratio: estimate.distortion_estimate / benchmark,
            ratio_stderr: estimate.stderr_distortion / benchmark,
            benchmark,
            estimate,
        })
    }

    /// Replays the one-to-one Bernoulli(1/n^2) ensemble with RS as the mechanism.
    pub fn lb_theorem1(&self, n: usize, trials: u64, seed: u64) -> Result<LowerBoundReport> {
        let inst = Instance::one_to_one(n)?;
        let estimate = self.distortion(
            &MechanismKind::Rs.into(),
            &DistributionSpec::LowerBoundBernoulli,
            &inst,
            trials,
            seed,
        )?;
        let nf = n as f64;
        let opt_floor = 1.0 - 2.0 / nf;
        let sw_ceiling = 1.0 - (-1.0f64).exp() + 2.0 / nf;
        Ok(LowerBoundReport {
            agents: n,
            opt_floor_holds: estimate.mean_opt >= opt_floor - CONFIDENCE_Z * estimate.stderr_opt,
            sw_ceiling_holds: estimate.mean_sw <= sw_ceiling + CONFIDENCE_Z * estimate.stderr_sw,
            opt_floor,
            sw_ceiling,
            estimate,
        })
    }

    /// SecretaryRS on quotas `(m - 1, 1)` against the single-agent profiles of each agent.
    pub fn lb_secretary(&self, items: usize, trials: u64, seed: u64) -> Result<SecretaryBoundReport> {
        if items < 3 {
            return Err(Error::InvalidParameter(format!(
                "secretary bound needs m >= 3, got {items}"
            )));
        }
        let inst = Instance::new(vec![items - 1, 1])?;
        let mech: MechanismSpec = MechanismKind::SecretaryRs.into();
        let large = self.assignment_probs(&mech, &DistributionSpec::single_agent(0), &inst, trials, seed)?;
        let small = self.assignment_probs(&mech, &DistributionSpec::single_agent(1), &inst, trials, seed)?;
        let m = items as f64;
        let threshold = (3.0 * m - 1.0) / (4.0 * m - 2.0);
        let large_agent_yield = large.yield_mean(0);
        let large_agent_stderr = large.yield_stderr(0);
        let small_agent_top = small.q_hat(1, 0);
        let small_agent_stderr = small.stderr(1, 0);
        let (low, low_stderr) = if large_agent_yield <= small_agent_top {
            (large_agent_yield, large_agent_stderr)
        } else {
            (small_agent_top, small_agent_stderr)
        };
        Ok(SecretaryBoundReport {
            items,
            large_agent_yield,
            large_agent_stderr,
            small_agent_top,
            small_agent_stderr,
            threshold,
            holds: low <= threshold + CONFIDENCE_Z * low_stderr,
        })
    }
}

fn moments_report(acc: &MomentAcc, trials: u64, seed: u64) -> EstimateReport {
    let n = trials as f64;
    let mean_sw = acc.sw.value() / n;
    let mean_opt = acc.opt.value() / n;
    let unbias = n / (n - 1.0).max(1.0);
    let var_sw = (acc.sw_sq.value() / n - mean_sw * mean_sw).max(0.0) * unbias;
    let var_opt = (acc.opt_sq.value() / n - mean_opt * mean_opt).max(0.0) * unbias;
    let cov = (acc.cross.value() / n - mean_sw * mean_opt) * unbias;
    let distortion_estimate = mean_opt / mean_sw;
    let var_ratio = (var_opt / (mean_sw * mean_sw) - 2.0 * mean_opt * cov / mean_sw.powi(3)
        + mean_opt * mean_opt * var_sw / mean_sw.powi(4))
        / n;
    EstimateReport {
        mean_opt,
        mean_sw,
        distortion_estimate,
        stderr_opt: (var_opt / n).sqrt(),
        stderr_sw: (var_sw / n).sqrt(),
        stderr_distortion: var_ratio.max(0.0).sqrt(),
        trials,
        seed,
    }
}

pub fn estimate_distortion(
    mech: &MechanismSpec,
    dist: &DistributionSpec,
    inst: &Instance,
    trials: u64,
    seed: u64,
) -> Result<EstimateReport> {
    Estimator::default().distortion(mech, dist, inst, trials, seed)
}

pub fn estimate_assignment_probs(
    mech: &MechanismSpec,
    dist: &DistributionSpec,
    inst: &Instance,
    trials: u64,
    seed: u64,
) -> Result<ProbMatrixReport> {
    Estimator::default().assignment_probs(mech, dist, inst, trials, seed)
}

pub fn gap_report(
    mech: &MechanismSpec,
    inst: &Instance,
    dist: &DistributionSpec,
    trials: u64,
    seed: u64,
) -> Result<GapReport> {
    Estimator::default().gap_report(mech, inst, dist, trials, seed)
}

pub fn run_lb_theorem1(n: usize, trials: u64, seed: u64) -> Result<LowerBoundReport> {
    Estimator::default().lb_theorem1(n, trials, seed)
}

pub fn run_lb_secretary(items: usize, trials: u64, seed: u64) -> Result<SecretaryBoundReport> {
    Estimator::default().lb_secretary(items, trials, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_is_symmetric_and_shrinks() {
        let a = wilson_half_width(300, 1000, 3.0);
        let b = wilson_half_width(700, 1000, 3.0);
        assert!((a - b).abs() < 1e-15);
        assert!(wilson_half_width(3000, 10_000, 3.0) < a);
        assert!(wilson_half_width(0, 100, 3.0) > 0.0);
    }

    #[test]
    fn single_agent_completed_is_exact() {
        let inst = Instance::new(vec![3]).unwrap();
        for kind in [MechanismKind::Rs, MechanismKind::Hql, MechanismKind::Rsbs] {
            let report = estimate_distortion(
                &MechanismSpec::new(kind).completed(),
                &DistributionSpec::IidUniform01,
                &inst,
                500,
                1,
            )
            .unwrap();
            assert_eq!(report.distortion_estimate, 1.0);
        }
    }

    #[test]
    fn zero_trials_rejected() {
        let inst = Instance::new(vec![1]).unwrap();
        assert!(estimate_distortion(
            &MechanismKind::Rs.into(),
            &DistributionSpec::IidUniform01,
            &inst,
            0,
            0
        )
        .is_err());
    }

    #[test]
    fn secretary_bound_requires_three_items() {
        assert!(run_lb_secretary(2, 10, 0).is_err());
    }

    #[test]
    fn chunking_covers_every_trial_once() {
        let est = Estimator::with_threads(2);
        let parts = est
            .chunks(2500, |r| Ok::<_, Error>(r.collect::<Vec<u64>>()))
            .unwrap();
        let flat: Vec<u64> = parts.into_iter().flatten().collect();
        assert_eq!(flat, (0..2500).collect::<Vec<_>>());
    }
}
