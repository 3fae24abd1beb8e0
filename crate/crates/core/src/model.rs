//! Instances, valuation and preference profiles, matchings and welfare.

use rand::seq::{index, SliceRandom};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::scalar::{CompensatedSum, Value};

/// A b-matching instance: `n` agents with quotas `b_i >= 1` and `m = sum b_i` items.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instance {
    quotas: Vec<usize>,
    items: usize,
}

impl Instance {
    pub fn new(quotas: Vec<usize>) -> Result<Self> {
        if quotas.is_empty() {
            return Err(Error::InvalidInstance("at least one agent is required".into()));
        }
        if let Some(i) = quotas.iter().position(|&b| b == 0) {
            return Err(Error::InvalidInstance(format!("agent {i} has quota 0")));
        }
        let items = quotas.iter().sum();
        Ok(Self { quotas, items })
    }

    /// `n` agents with unit quotas.
    pub fn one_to_one(n: usize) -> Result<Self> {
        Self::new(vec![1; n])
    }

    /// `items` split as evenly as possible, lower indices taking the remainder.
    pub fn uniform(agents: usize, items: usize) -> Result<Self> {
        check_split(agents, items)?;
        let (base, extra) = (items / agents, items % agents);
        Self::new((0..agents).map(|i| base + usize::from(i < extra)).collect())
    }

    /// Quotas proportional to `ratio^i`, at least 1 each, rounded by largest remainder.
    pub fn geometric(agents: usize, items: usize, ratio: f64) -> Result<Self> {
        check_split(agents, items)?;
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(Error::InvalidParameter(format!("geometric ratio {ratio} must be positive")));
        }
        let weights: Vec<f64> = (0..agents).map(|i| ratio.powi(i as i32)).collect();
        let total: f64 = weights.iter().sum();
        let spare = (items - agents) as f64;
        let shares: Vec<f64> = weights.iter().map(|w| spare * w / total).collect();
        let mut quotas: Vec<usize> = shares.iter().map(|s| 1 + s.floor() as usize).collect();
        let mut order: Vec<usize> = (0..agents).collect();
        order.sort_by(|&a, &b| {
            let (ra, rb) = (shares[a] - shares[a].floor(), shares[b] - shares[b].floor());
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let missing = items - quotas.iter().sum::<usize>();
        for &i in order.iter().take(missing) {
            quotas[i] += 1;
        }
        Self::new(quotas)
    }

    /// Uniformly random composition of `items` into `agents` positive quotas.
    pub fn random_composition(agents: usize, items: usize, rng: &mut RandomStream) -> Result<Self> {
        check_split(agents, items)?;
        let mut cuts: Vec<usize> = index::sample(rng, items - 1, agents - 1)
            .into_iter()
            .map(|c| c + 1)
            .collect();
        cuts.sort_unstable();
        cuts.push(items);
        let mut prev = 0;
        let quotas = cuts
            .into_iter()
            .map(|c| {
                let b = c - prev;
                prev = c;
                b
            })
            .collect();
        Self::new(quotas)
    }

    #[inline]
    pub fn agents(&self) -> usize {
        self.quotas.len()
    }

    #[inline]
    pub fn items(&self) -> usize {
        self.items
    }

    #[inline]
    pub fn quotas(&self) -> &[usize] {
        &self.quotas
    }

    #[inline]
    pub fn quota(&self, agent: usize) -> usize {
        self.quotas[agent]
    }

    pub fn max_quota(&self) -> usize {
        self.quotas.iter().copied().max().unwrap_or(0)
    }

    /// Lowest-indexed agent holding the maximum quota.
    pub fn max_quota_agent(&self) -> usize {
        let b_max = self.max_quota();
        self.quotas.iter().position(|&b| b == b_max).unwrap_or(0)
    }

    /// `b_max / m`.
    pub fn max_quota_ratio(&self) -> f64 {
        self.max_quota() as f64 / self.items as f64
    }
}

fn check_split(agents: usize, items: usize) -> Result<()> {
    if agents == 0 || items < agents {
        return Err(Error::InvalidInstance(format!(
            "cannot give {agents} agents positive quotas from {items} items"
        )));
    }
    Ok(())
}

/// Agent-by-item value matrix, row major.
#[derive(Debug, Clone, PartialEq)]
pub struct ValuationProfile<T> {
    agents: usize,
    items: usize,
    values: Vec<T>,
}

impl<T: Value> ValuationProfile<T> {
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let agents = rows.len();
        let items = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(agents * items);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != items {
                return Err(Error::DimensionMismatch {
                    expected: format!("{items} items in row {i}"),
                    found: format!("{}", row.len()),
                });
            }
            values.extend(row);
        }
        Self::from_flat(agents, items, values)
    }

    pub fn from_flat(agents: usize, items: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != agents * items {
            return Err(Error::DimensionMismatch {
                expected: format!("{agents}x{items} = {} values", agents * items),
                found: format!("{}", values.len()),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_admissible()) {
            return Err(Error::InvalidValue {
                agent: k / items.max(1),
                item: k % items.max(1),
            });
        }
        Ok(Self {
            agents,
            items,
            values,
        })
    }

    pub fn zeros(agents: usize, items: usize) -> Self {
        Self {
            agents,
            items,
            values: vec![T::zero(); agents * items],
        }
    }

    #[inline]
    pub fn agents(&self) -> usize {
        self.agents
    }

    #[inline]
    pub fn items(&self) -> usize {
        self.items
    }

    #[inline]
    pub fn get(&self, agent: usize, item: usize) -> T {
        self.values[agent * self.items + item]
    }

    #[inline]
    pub fn row(&self, agent: usize) -> &[T] {
        &self.values[agent * self.items..(agent + 1) * self.items]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.values.chunks(self.items.max(1)).take(self.agents)
    }

    pub fn map<U: Value>(&self, f: impl Fn(T) -> U) -> Result<ValuationProfile<U>> {
        ValuationProfile::from_flat(
            self.agents,
            self.items,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Returns a copy with item columns reordered so that new column `k` is old column `perm[k]`.
    pub fn permute_items(&self, perm: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for row in self.rows() {
            values.extend(perm.iter().map(|&j| row[j]));
        }
        Self {
            agents: self.agents,
            items: self.items,
            values,
        }
    }

    pub fn check_shape(&self, inst: &Instance) -> Result<()> {
        if self.agents != inst.agents() || self.items != inst.items() {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", inst.agents(), inst.items()),
                found: format!("{}x{}", self.agents, self.items),
            });
        }
        Ok(())
    }
}

/// Strict rankings (best first) and top-`b_i` favorite bundles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceProfile {
    rankings: Vec<Vec<usize>>,
    quotas: Vec<usize>,
}

impl PreferenceProfile {
    /// Builds a profile from explicit rankings; each must be a permutation of the items.
    pub fn from_rankings(inst: &Instance, rankings: Vec<Vec<usize>>) -> Result<Self> {
        if rankings.len() != inst.agents() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} rankings", inst.agents()),
                found: format!("{}", rankings.len()),
            });
        }
        let m = inst.items();
        for (i, ranking) in rankings.iter().enumerate() {
            let mut seen = vec![false; m];
            let ok = ranking.len() == m
                && ranking
                    .iter()
                    .all(|&g| g < m && !std::mem::replace(&mut seen[g], true));
            if !ok {
                return Err(Error::InvalidParameter(format!(
                    "ranking of agent {i} is not a permutation of the {m} items"
                )));
            }
        }
        Ok(Self {
            rankings,
            quotas: inst.quotas().to_vec(),
        })
    }

    #[inline]
    pub fn agents(&self) -> usize {
        self.rankings.len()
    }

    #[inline]
    pub fn ranking(&self, agent: usize) -> &[usize] {
        &self.rankings[agent]
    }

    /// The agent's `b_i` top-ranked items, best first.
    #[inline]
    pub fn favorites(&self, agent: usize) -> &[usize] {
        &self.rankings[agent][..self.quotas[agent]]
    }

    /// Item at 0-based rank `t` for `agent`.
    #[inline]
    pub fn item_at(&self, agent: usize, t: usize) -> usize {
        self.rankings[agent][t]
    }
}

/// Derives preferences from values, breaking ties uniformly at random.
///
/// Items are sorted by decreasing value and every run of equal values is then
/// shuffled, so tied items appear in a uniformly random relative order.
pub fn derive_preferences<T: Value>(
    inst: &Instance,
    values: &ValuationProfile<T>,
    rng: &mut RandomStream,
) -> Result<PreferenceProfile> {
    values.check_shape(inst)?;
    let m = inst.items();
    let mut rankings = Vec::with_capacity(inst.agents());
    for row in values.rows() {
        let mut order: Vec<usize> = (0..m).collect();
        // values are admissible, so the comparison is total
        order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).expect("admissible values"));
        let mut start = 0;
        while start < m {
            let mut end = start + 1;
            while end < m && row[order[end]] == row[order[start]] {
                end += 1;
            }
            if end - start > 1 {
                order[start..end].shuffle(rng);
            }
            start = end;
        }
        rankings.push(order);
    }
    Ok(PreferenceProfile {
        rankings,
        quotas: inst.quotas().to_vec(),
    })
}

/// Item-indexed partial assignment: `assignment[g]` is the agent holding item `g`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Matching {
    assignment: Vec<Option<usize>>,
}

impl Matching {
    pub fn empty(items: usize) -> Self {
        Self {
            assignment: vec![None; items],
        }
    }

    /// Validates quotas and agent indices against `inst`.
    pub fn from_assignment(inst: &Instance, assignment: Vec<Option<usize>>) -> Result<Self> {
        let matching = Self { assignment };
        matching.validate(inst)?;
        Ok(matching)
    }

    #[inline]
    pub fn items(&self) -> usize {
        self.assignment.len()
    }

    #[inline]
    pub fn holder(&self, item: usize) -> Option<usize> {
        self.assignment[item]
    }

    #[inline]
    pub fn assignment(&self) -> &[Option<usize>] {
        &self.assignment
    }

    #[inline]
    pub(crate) fn set(&mut self, item: usize, agent: Option<usize>) {
        self.assignment[item] = agent;
    }

    /// Items held by `agent`, ascending.
    pub fn bundle(&self, agent: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(g, &a)| (a == Some(agent)).then_some(g))
            .collect()
    }

    pub fn bundle_sizes(&self, agents: usize) -> Vec<usize> {
        let mut sizes = vec![0; agents];
        for &a in self.assignment.iter().flatten() {
            if a < agents {
                sizes[a] += 1;
            }
        }
        sizes
    }

    pub fn assigned_count(&self) -> usize {
        self.assignment.iter().flatten().count()
    }

    pub fn validate(&self, inst: &Instance) -> Result<()> {
        if self.assignment.len() != inst.items() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} items", inst.items()),
                found: format!("{}", self.assignment.len()),
            });
        }
        if let Some(a) = self.assignment.iter().flatten().find(|&&a| a >= inst.agents()) {
            return Err(Error::InvalidParameter(format!("agent index {a} out of range")));
        }
        for (i, size) in self.bundle_sizes(inst.agents()).into_iter().enumerate() {
            if size > inst.quota(i) {
                return Err(Error::InvalidParameter(format!(
                    "agent {i} holds {size} items, quota {}",
                    inst.quota(i)
                )));
            }
        }
        Ok(())
    }

    /// Union of two matchings over disjoint item sets.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.items() != other.items() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} items", self.items()),
                found: format!("{}", other.items()),
            });
        }
        let mut out = self.clone();
        for (g, &a) in other.assignment.iter().enumerate() {
            if let Some(a) = a {
                if out.assignment[g].is_some() {
                    return Err(Error::InvalidParameter(format!("item {g} assigned twice")));
                }
                out.assignment[g] = Some(a);
            }
        }
        Ok(out)
    }
}

/// Total value the agents derive from their assigned items.
pub fn social_welfare<T: Value>(matching: &Matching, values: &ValuationProfile<T>) -> Result<T> {
    if matching.items() != values.items() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} items", values.items()),
            found: format!("{}", matching.items()),
        });
    }
    let mut acc = CompensatedSum::new();
    for (g, &a) in matching.assignment.iter().enumerate() {
        if let Some(a) = a {
            if a >= values.agents() {
                return Err(Error::InvalidParameter(format!("agent index {a} out of range")));
            }
            acc.add(values.get(a, g));
        }
    }
    Ok(acc.value())
}

/// Hands every unassigned item to an agent with residual quota.
///
/// Items are visited in ascending order and each goes to the lowest-indexed
/// agent that still has room; existing pairs are kept.
pub fn complete_matching(matching: &Matching, inst: &Instance) -> Result<Matching> {
    matching.validate(inst)?;
    let mut residual: Vec<usize> = inst
        .quotas()
        .iter()
        .zip(matching.bundle_sizes(inst.agents()))
        .map(|(&b, held)| b - held)
        .collect();
    let mut out = matching.clone();
    let mut agent = 0;
    for g in 0..out.items() {
        if out.assignment[g].is_some() {
            continue;
        }
        while residual[agent] == 0 {
            agent += 1;
        }
        out.assignment[g] = Some(agent);
        residual[agent] -= 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(rows: Vec<Vec<f64>>) -> ValuationProfile<f64> {
        ValuationProfile::from_rows(rows).unwrap()
    }

    #[test]
    fn instance_rejects_zero_quota_and_empty() {
        assert!(Instance::new(vec![]).is_err());
        assert!(Instance::new(vec![1, 0]).is_err());
        let inst = Instance::new(vec![2, 3, 3]).unwrap();
        assert_eq!(inst.items(), 8);
        assert_eq!(inst.max_quota(), 3);
        assert_eq!(inst.max_quota_agent(), 1);
    }

    #[test]
    fn strict_values_force_ranking() {
        let inst = Instance::new(vec![1, 1, 1]).unwrap();
        let v = profile(vec![vec![0.9, 0.1, 0.5], vec![0.0; 3], vec![0.0; 3]]);
        let prefs = derive_preferences(&inst, &v, &mut RandomStream::new(1, 0)).unwrap();
        assert_eq!(prefs.ranking(0), &[0, 2, 1]);
        assert_eq!(prefs.favorites(0), &[0]);
    }

    #[test]
    fn ranking_is_value_monotone_with_ties() {
        let inst = Instance::new(vec![2, 2, 1]).unwrap();
        let v = profile(vec![
            vec![0.3, 0.3, 1.0, 0.0, 0.3],
            vec![0.0; 5],
            vec![2.0, 2.0, 2.0, 1.0, 1.0],
        ]);
        for s in 0..200 {
            let prefs = derive_preferences(&inst, &v, &mut RandomStream::new(s, 0)).unwrap();
            for i in 0..3 {
                let r = prefs.ranking(i);
                assert!(r.windows(2).all(|w| v.get(i, w[0]) >= v.get(i, w[1])));
                assert_eq!(prefs.favorites(i).len(), inst.quota(i));
            }
        }
    }

    #[test]
    fn all_zero_row_gives_uniform_pair() {
        let inst = Instance::new(vec![2, 1]).unwrap();
        let v = ValuationProfile::<f64>::zeros(2, 3);
        let mut counts = [0usize; 3];
        let trials = 30_000;
        for s in 0..trials {
            let prefs = derive_preferences(&inst, &v, &mut RandomStream::new(9, s)).unwrap();
            let mut fav = prefs.favorites(0).to_vec();
            fav.sort();
            // the excluded item identifies the 2-subset
            let missing = (0..3).find(|g| !fav.contains(g)).unwrap();
            counts[missing] += 1;
        }
        let p = 1.0 / 3.0;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        for c in counts {
            assert!((c as f64 / trials as f64 - p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let inst = Instance::new(vec![1, 1]).unwrap();
        let v = ValuationProfile::<f64>::zeros(2, 3);
        assert!(matches!(
            derive_preferences(&inst, &v, &mut RandomStream::new(0, 0)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(ValuationProfile::from_rows(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(matches!(
            ValuationProfile::from_rows(vec![vec![1.0, -2.0]]),
            Err(Error::InvalidValue { agent: 0, item: 1 })
        ));
    }

    #[test]
    fn welfare_of_empty_and_two_pairs() {
        let v = profile(vec![vec![0.7, 0.3], vec![0.4, 0.2]]);
        assert_eq!(social_welfare(&Matching::empty(2), &v).unwrap(), 0.0);
        let inst = Instance::new(vec![1, 1]).unwrap();
        let m = Matching::from_assignment(&inst, vec![Some(0), Some(1)]).unwrap();
        assert!((social_welfare(&m, &v).unwrap() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn matching_quota_violation_rejected() {
        let inst = Instance::new(vec![1, 1]).unwrap();
        assert!(Matching::from_assignment(&inst, vec![Some(0), Some(0)]).is_err());
        assert!(Matching::from_assignment(&inst, vec![Some(2), None]).is_err());
        assert!(Matching::from_assignment(&inst, vec![None]).is_err());
    }

    #[test]
    fn completion_examples() {
        let inst = Instance::new(vec![1, 1]).unwrap();
        let full = Matching::from_assignment(&inst, vec![Some(1), Some(0)]).unwrap();
        assert_eq!(complete_matching(&full, &inst).unwrap(), full);
        let filled = complete_matching(&Matching::empty(2), &inst).unwrap();
        assert_eq!(filled.assignment(), &[Some(0), Some(1)]);

        let inst = Instance::new(vec![2, 1]).unwrap();
        let partial = Matching::from_assignment(&inst, vec![None, None, Some(1)]).unwrap();
        let filled = complete_matching(&partial, &inst).unwrap();
        assert_eq!(filled.assignment(), &[Some(0), Some(0), Some(1)]);
    }

    #[test]
    fn union_rejects_overlap() {
        let a = Matching {
            assignment: vec![Some(0), None],
        };
        let b = Matching {
            assignment: vec![Some(1), None],
        };
        assert!(a.union(&b).is_err());
    }

    #[test]
    fn quota_generators() {
        assert_eq!(Instance::uniform(3, 8).unwrap().quotas(), &[3, 3, 2]);
        assert_eq!(Instance::geometric(3, 10, 0.5).unwrap().quotas(), &[5, 3, 2]);
        assert_eq!(Instance::geometric(4, 4, 3.0).unwrap().quotas(), &[1, 1, 1, 1]);
        assert!(Instance::uniform(4, 3).is_err());
        let mut rng = RandomStream::new(9, 0);
        for _ in 0..200 {
            let inst = Instance::random_composition(4, 11, &mut rng).unwrap();
            assert_eq!(inst.agents(), 4);
            assert_eq!(inst.items(), 11);
        }
        assert_eq!(Instance::random_composition(1, 5, &mut rng).unwrap().quotas(), &[5]);
    }
}
