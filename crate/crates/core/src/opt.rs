//! Maximum-welfare b-matching.
//!
//! Agent `i` is expanded into `b_i` unit slots and items are assigned to slots
//! by a Hungarian (shortest augmenting path) solver. Agents and items without
//! any positive value are dropped first, which keeps sparse 0/1 profiles cheap.

use crate::error::{Error, Result};
use crate::model::{complete_matching, social_welfare, Instance, Matching, ValuationProfile};
use crate::scalar::Value;

/// Largest item count accepted by [`brute_force_opt`].
pub const BRUTE_FORCE_MAX_ITEMS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult<T> {
    pub matching: Matching,
    pub value: T,
}

/// Minimum-cost assignment of every row to a distinct column (`rows <= cols`).
/// Returns the column chosen for each row.
fn hungarian_min<T: Value>(rows: usize, cols: usize, cost: impl Fn(usize, usize) -> T) -> Vec<usize> {
    debug_assert!(rows <= cols);
    let zero = T::zero();
    let mut u = vec![zero; rows + 1];
    let mut v = vec![zero; cols + 1];
    // p[j]: row matched to column j (1-based, 0 = free); way[j]: previous column on the path
    let mut p = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    let mut minv: Vec<Option<T>> = vec![None; cols + 1];
    let mut used = vec![false; cols + 1];

    for i in 1..=rows {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|x| *x = None);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta: Option<T> = None;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if minv[j].is_none_or(|mv| reduced < mv) {
                    minv[j] = Some(reduced);
                    way[j] = j0;
                }
                let mj = minv[j].expect("set above");
                if delta.is_none_or(|d| mj < d) {
                    delta = Some(mj);
                    j1 = j;
                }
            }
            let delta = delta.expect("rows <= cols leaves a free column");
            for j in 0..=cols {
                if used[j] {
                    u[p[j]] = u[p[j]] + delta;
                    v[j] = v[j] - delta;
                } else if let Some(mv) = minv[j] {
                    minv[j] = Some(mv - delta);
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut chosen = vec![0; rows];
    for j in 1..=cols {
        if p[j] > 0 {
            chosen[p[j] - 1] = j - 1;
        }
    }
    chosen
}

/// Maximum social welfare over all b-matchings, with a witness matching that
/// assigns every item.
pub fn optimal_matching<T: Value>(inst: &Instance, values: &ValuationProfile<T>) -> Result<OptResult<T>> {
    values.check_shape(inst)?;
    let zero = T::zero();
    let (n, m) = (inst.agents(), inst.items());

    let items: Vec<usize> = (0..m)
        .filter(|&g| (0..n).any(|a| values.get(a, g) > zero))
        .collect();
    // one entry per slot: the owning agent
    let mut slots = Vec::new();
    for a in 0..n {
        let positive = items.iter().filter(|&&g| values.get(a, g) > zero).count();
        slots.extend(std::iter::repeat_n(a, positive.min(inst.quota(a))));
    }

    let mut matching = Matching::empty(m);
    if !slots.is_empty() {
        let ceiling = slots
            .iter()
            .flat_map(|&a| items.iter().map(move |&g| (a, g)))
            .map(|(a, g)| values.get(a, g))
            .fold(zero, |acc, w| if w > acc { w } else { acc });
        if slots.len() <= items.len() {
            let chosen = hungarian_min(slots.len(), items.len(), |s, k| {
                ceiling - values.get(slots[s], items[k])
            });
            for (s, k) in chosen.into_iter().enumerate() {
                matching.set(items[k], Some(slots[s]));
            }
        } else {
            let chosen = hungarian_min(items.len(), slots.len(), |k, s| {
                ceiling - values.get(slots[s], items[k])
            });
            for (k, s) in chosen.into_iter().enumerate() {
                matching.set(items[k], Some(slots[s]));
            }
        }
    }
    let matching = complete_matching(&matching, inst)?;
    let value = social_welfare(&matching, values)?;
    Ok(OptResult { matching, value })
}

/// Exhaustive optimum over every complete b-matching; test oracle for `m <= 8`.
pub fn brute_force_opt<T: Value>(inst: &Instance, values: &ValuationProfile<T>) -> Result<T> {
    values.check_shape(inst)?;
    if inst.items() > BRUTE_FORCE_MAX_ITEMS {
        return Err(Error::TooLarge(format!(
            "brute force enumerates at most {BRUTE_FORCE_MAX_ITEMS} items, got {}",
            inst.items()
        )));
    }
    let mut residual = inst.quotas().to_vec();
    let mut best = T::zero();
    enumerate(values, 0, T::zero(), &mut residual, &mut best);
    Ok(best)
}

fn enumerate<T: Value>(
    values: &ValuationProfile<T>,
    item: usize,
    acc: T,
    residual: &mut [usize],
    best: &mut T,
) {
    if item == values.items() {
        if acc > *best {
            *best = acc;
        }
        return;
    }
    for a in 0..residual.len() {
        if residual[a] == 0 {
            continue;
        }
        residual[a] -= 1;
        enumerate(values, item + 1, acc + values.get(a, item), residual, best);
        residual[a] += 1;
    }
}
