//! Closed-form mechanism probabilities, distortion bounds, the per-instance
//! benchmark, and the RSBS distortion-gap curve.
//!
//! Everything here is generic over [`Real`] so the formulas can be evaluated
//! in `f32` or `f64`; writing `rs_q_exact::<f64>(..)` is the usual call.

pub mod quadrature;

use crate::error::{Error, Result};
use crate::model::Instance;
use crate::scalar::Real;

/// Above this many factors the product integral switches to Gauss-Legendre.
pub const EXPANSION_MAX_FACTORS: usize = 64;

/// RS survivor probability `p_i = 1 - (b_i - 1) / (3m)`.
pub fn survivor_prob<T: Real>(quota: usize, items: usize) -> Result<T> {
    if quota == 0 || quota > items {
        return Err(Error::InvalidParameter(format!(
            "quota {quota} must lie in 1..={items}"
        )));
    }
    Ok(T::one() - T::of_usize(quota - 1) / (T::of(3.0) * T::of_usize(items)))
}

/// `∫_0^1 prod_j (1 - c_j y) dy` for slopes `c_j = b_j p_j / m`.
///
/// Up to [`EXPANSION_MAX_FACTORS`] factors the product is expanded into
/// polynomial coefficients and integrated term by term; beyond that a
/// Gauss-Legendre rule with enough nodes to be exact is used.
pub fn poly_product_integral<T: Real>(factors: &[(usize, T)], items: usize) -> T {
    let m = T::of_usize(items);
    let slopes: Vec<T> = factors
        .iter()
        .map(|&(b, p)| T::of_usize(b) * p / m)
        .collect();
    product_integral(&slopes)
}

/// Same integral, parameterized directly by the slopes `c_j`.
pub fn product_integral<T: Real>(slopes: &[T]) -> T {
    if slopes.len() > EXPANSION_MAX_FACTORS {
        let points = 128.max(slopes.len().div_ceil(2) + 1);
        return quadrature::integrate_unit(points, |y| {
            slopes.iter().fold(T::one(), |acc, &c| acc * (T::one() - c * y))
        });
    }
    // coeffs[k] is the coefficient of y^k
    let mut coeffs = Vec::with_capacity(slopes.len() + 1);
    coeffs.push(T::one());
    for &c in slopes {
        coeffs.push(T::zero());
        for k in (1..coeffs.len()).rev() {
            coeffs[k] = coeffs[k] - c * coeffs[k - 1];
        }
    }
    coeffs
        .iter()
        .enumerate()
        .rev()
        .fold(T::zero(), |acc, (k, &a)| acc + a / T::of_usize(k + 1))
}

fn slopes_excluding<T: Real>(inst: &Instance, skip: &[usize]) -> Vec<T> {
    let m = inst.items();
    let mut slopes = Vec::with_capacity(inst.agents());
    for (j, &b) in inst.quotas().iter().enumerate() {
        if skip.contains(&j) {
            continue;
        }
        let p: T = survivor_prob(b, m).expect("quotas never exceed m");
        slopes.push(T::of_usize(b) * p / T::of_usize(m));
    }
    slopes
}

fn check_agent(inst: &Instance, agent: usize) -> Result<()> {
    if agent < inst.agents() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "agent {agent} out of range for {} agents",
            inst.agents()
        )))
    }
}

/// Probability that RS gives agent `i` any fixed one of their favorite items.
pub fn rs_q_exact<T: Real>(inst: &Instance, agent: usize) -> Result<T> {
    check_agent(inst, agent)?;
    let p: T = survivor_prob(inst.quota(agent), inst.items())?;
    Ok(p * product_integral(&slopes_excluding::<T>(inst, &[agent])))
}

/// `x = b_max / m` and `exp(x - 1)`, the two quantities shared by the RSBS formulas.
fn rsbs_terms<T: Real>(b_max: usize, items: usize) -> (T, T) {
    let x = T::of_usize(b_max) / T::of_usize(items);
    (x, (x - T::one()).exp())
}

/// RSBS phase-2 burning probability `β_i` for a non-`i*` agent.
pub fn burning_prob<T: Real>(inst: &Instance, agent: usize, i_star: usize) -> Result<T> {
    check_agent(inst, agent)?;
    check_agent(inst, i_star)?;
    if agent == i_star {
        return Err(Error::InvalidParameter(
            "burning probability is undefined for i* itself".into(),
        ));
    }
    let b_max = inst.max_quota();
    if inst.quota(i_star) != b_max {
        return Err(Error::InvalidParameter(format!(
            "agent {i_star} does not hold the maximum quota {b_max}"
        )));
    }
    let m = inst.items();
    if b_max >= m {
        return Err(Error::InvalidParameter("b_max = m leaves no agent to burn".into()));
    }
    let (x, _) = rsbs_terms::<T>(b_max, m);
    let p: T = survivor_prob(inst.quota(agent), m)?;
    let integral = product_integral(&slopes_excluding::<T>(inst, &[agent, i_star]));
    // 1 - exp(x - 1), without cancellation
    let numerator = -(x - T::one()).exp_m1();
    Ok(T::one() - numerator / ((T::one() - x) * p * integral))
}

/// RSBS phase-3 stealing probability `σ`.
pub fn stealing_prob<T: Real>(b_max: usize, items: usize) -> Result<T> {
    if b_max == 0 || b_max >= items {
        return Err(Error::InvalidParameter(format!(
            "stealing probability needs 1 <= b_max < m, got b_max={b_max}, m={items}"
        )));
    }
    let (x, e) = rsbs_terms::<T>(b_max, items);
    let denominator = -(x - T::one()).exp_m1();
    Ok((T::one() - (T::of(2.0) - x) * e) / denominator)
}

/// The per-favorite assignment probability RSBS achieves for every agent:
/// `1 - (1 - b_max/m) exp(-1 + b_max/m)`.
pub fn rsbs_q_exact<T: Real>(inst: &Instance) -> T {
    rsbs_q_at(T::of_usize(inst.max_quota()) / T::of_usize(inst.items()))
}

/// [`rsbs_q_exact`] as a function of `x = b_max/m`.
pub fn rsbs_q_at<T: Real>(x: T) -> T {
    T::one() - (T::one() - x) * (x - T::one()).exp()
}

/// HQL's per-favorite assignment probability `m / (2m - b_max)`.
pub fn hql_q<T: Real>(inst: &Instance) -> T {
    let m = inst.items();
    T::of_usize(m) / T::of_usize(2 * m - inst.max_quota())
}

/// `2 - b_max/m`.
pub fn hql_distortion_bound<T: Real>(inst: &Instance) -> T {
    T::one() / hql_q::<T>(inst)
}

pub fn rsbs_distortion_bound<T: Real>(inst: &Instance) -> T {
    T::one() / rsbs_q_exact::<T>(inst)
}

/// `prod_i (1 - b_i/m)`: probability that a fixed item is nobody's favorite.
pub fn unclaimed_prob<T: Real>(inst: &Instance) -> T {
    let m = T::of_usize(inst.items());
    inst.quotas()
        .iter()
        .fold(T::one(), |acc, &b| acc * (T::one() - T::of_usize(b) / m))
}

/// Distortion floor valid for every ordinal mechanism on this quota vector:
/// `(1 - prod_i (1 - b_i/m))^{-1}`. Equals 1 for a single agent.
pub fn benchmark_lower_bound<T: Real>(inst: &Instance) -> T {
    T::one() / (T::one() - unclaimed_prob::<T>(inst))
}

/// Right-hand side of the floor-power product bound:
/// `(1 - x)^{⌊1/x⌋} ⌊1/x⌋ x` with `x = b_max/m`, where `⌊1/x⌋ = ⌊m/b_max⌋`.
pub fn product_floor_bound<T: Real>(inst: &Instance) -> T {
    let x = T::of_usize(inst.max_quota()) / T::of_usize(inst.items());
    let k = inst.items() / inst.max_quota();
    floor_power(x, k)
}

fn floor_power<T: Real>(x: T, k: usize) -> T {
    (T::one() - x).powi(k as i32) * T::of_usize(k) * x
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapCurvePoint<T> {
    /// `b_max / m`.
    pub x: T,
    /// Upper bound on RSBS's distortion gap at that ratio.
    pub bound: T,
}

/// RSBS distortion-gap bound as a function of `x = b_max/m`:
/// `(1 - (1-x)^{⌊1/x⌋} ⌊1/x⌋ x) / (1 - (1-x) e^{x-1})`.
pub fn distortion_gap_curve<T: Real>(x: T) -> Result<GapCurvePoint<T>> {
    if !(x > T::zero() && x <= T::one()) {
        return Err(Error::InvalidParameter(format!(
            "ratio {x:?} outside (0, 1]"
        )));
    }
    // guard ⌊1/x⌋ against 1/x landing a hair below an integer
    let inv = T::one() / x;
    let mut k = inv.floor();
    if (inv - k - T::one()).abs() <= T::epsilon() * inv * T::of(4.0) {
        k = k + T::one();
    }
    let k = k.to_usize().unwrap_or(usize::MAX);
    let numerator = T::one() - floor_power(x, k);
    Ok(GapCurvePoint {
        x,
        bound: numerator / rsbs_q_at(x),
    })
}

/// `(2 - y)(1 - (1-y)^{1/y})`, the one-pass distortion-gap envelope; at most `2 - 2/e`.
pub fn one_pass_gap_envelope<T: Real>(y: T) -> T {
    let tail = if y >= T::one() {
        T::zero()
    } else {
        ((-y).ln_1p() / y).exp()
    };
    (T::of(2.0) - y) * (T::one() - tail)
}

/// `e / (e - 1)`.
pub fn optimal_distortion<T: Real>() -> T {
    T::E() / (T::E() - T::one())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(q: &[usize]) -> Instance {
        Instance::new(q.to_vec()).unwrap()
    }

    #[test]
    fn survivor_probabilities() {
        assert_eq!(survivor_prob::<f64>(1, 7).unwrap(), 1.0);
        assert!((survivor_prob::<f64>(4, 10).unwrap() - 0.9).abs() < 1e-15);
        for m in 1..200 {
            assert!(survivor_prob::<f64>(m, m).unwrap() >= 2.0 / 3.0);
        }
        assert!(survivor_prob::<f64>(5, 4).is_err());
    }

    #[test]
    fn product_integral_small_cases() {
        assert_eq!(poly_product_integral::<f64>(&[], 3), 1.0);
        assert!((poly_product_integral::<f64>(&[(1, 1.0)], 2) - 0.75).abs() < 1e-15);
        let three = [(1, 1.0), (1, 1.0), (1, 1.0)];
        assert!((poly_product_integral::<f64>(&three, 4) - 0.683_593_75).abs() < 1e-15);
        let three32 = [(1, 1.0f32), (1, 1.0), (1, 1.0)];
        assert!((poly_product_integral::<f32>(&three32, 4) - 0.683_593_75).abs() < 1e-6);
    }

    #[test]
    fn expansion_and_quadrature_paths_agree() {
        let slopes: Vec<f64> = (0..65).map(|j| (1.0 + 0.01 * j as f64) / 91.0).collect();
        let dense = |s: &[f64]| {
            quadrature::integrate_unit::<f64>(200, |y| s.iter().fold(1.0, |a, &c| a * (1.0 - c * y)))
        };
        // 65 factors take the quadrature path, 64 the expansion
        assert!((product_integral(&slopes) - dense(&slopes)).abs() < 1e-13);
        assert!((product_integral(&slopes[..64]) - dense(&slopes[..64])).abs() < 1e-13);
    }

    #[test]
    fn rs_q_examples() {
        let single = inst(&[5]);
        assert!((rs_q_exact::<f64>(&single, 0).unwrap() - survivor_prob::<f64>(5, 5).unwrap()).abs() < 1e-15);
        assert!((rs_q_exact::<f64>(&inst(&[1, 1]), 1).unwrap() - 0.75).abs() < 1e-15);
        assert!(rs_q_exact::<f64>(&inst(&[1, 1]), 2).is_err());
    }

    #[test]
    fn burning_examples() {
        let two = inst(&[1, 1]);
        let beta = burning_prob::<f64>(&two, 0, 1).unwrap();
        assert!((beta - 0.213_061_319_425_266_8).abs() < 1e-12);
        assert!(burning_prob::<f64>(&two, 1, 1).is_err());
        assert!(burning_prob::<f64>(&inst(&[1, 2]), 1, 0).is_err());

        let unit = Instance::one_to_one(7).unwrap();
        let b0 = burning_prob::<f64>(&unit, 1, 0).unwrap();
        for i in 2..7 {
            assert!((burning_prob::<f64>(&unit, i, 0).unwrap() - b0).abs() < 1e-15);
        }
    }

    #[test]
    fn stealing_examples() {
        let small = stealing_prob::<f64>(1, 1_000_000).unwrap();
        assert!((small - 0.418_02).abs() < 1e-5);
        assert!((stealing_prob::<f64>(1, 2).unwrap() - 0.229_252_958_731_600_86).abs() < 1e-12);
        assert!(stealing_prob::<f64>(3, 3).is_err());
    }

    #[test]
    fn rsbs_and_hql_closed_forms() {
        assert_eq!(rsbs_q_exact::<f64>(&inst(&[4])), 1.0);
        assert!((rsbs_q_exact::<f64>(&inst(&[3, 2, 1])) - 0.696_734_670_143_683_3).abs() < 1e-14);
        assert!((rsbs_q_exact::<f64>(&inst(&[1; 100_000])) - (1.0 - (-1.0f64).exp())).abs() < 1e-5);
        assert!((rsbs_distortion_bound::<f64>(&inst(&[1, 1])) - 1.435_26).abs() < 1e-5);

        assert!((hql_q::<f64>(&inst(&[1, 1])) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(hql_q::<f64>(&inst(&[9])), 1.0);
        assert!((hql_q::<f64>(&inst(&[1, 2, 3])) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(hql_distortion_bound::<f64>(&inst(&[9])), 1.0);
        assert!((hql_distortion_bound::<f64>(&inst(&[2, 1, 1])) - 1.5).abs() < 1e-15);
        let big = Instance::one_to_one(1000).unwrap();
        assert!((hql_distortion_bound::<f64>(&big) - (2.0 - 1.0 / 1000.0)).abs() < 1e-12);
    }

    #[test]
    fn benchmark_examples() {
        assert!((benchmark_lower_bound::<f64>(&inst(&[1, 1])) - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(benchmark_lower_bound::<f64>(&inst(&[6])), 1.0);
        let big = Instance::one_to_one(10_000).unwrap();
        assert!((benchmark_lower_bound::<f64>(&big) - optimal_distortion::<f64>()).abs() < 1e-3);
    }

    #[test]
    fn gap_curve_examples() {
        assert!((distortion_gap_curve(1.0f64).unwrap().bound - 1.0).abs() < 1e-15);
        let half = distortion_gap_curve(0.5f64).unwrap().bound;
        assert!((half - 1.076_449_948_795_187_9).abs() < 1e-13);
        assert!((distortion_gap_curve(1e-4f64).unwrap().bound - 1.0).abs() < 1e-3);
        assert!(distortion_gap_curve(0.0f64).is_err());
        assert!(distortion_gap_curve(1.5f64).is_err());
        // 1/x computed as 2.9999.. must still count three copies
        let third = distortion_gap_curve(1.0f64 / 3.0).unwrap().bound;
        let expected = (1.0 - (2.0f64 / 3.0).powi(3)) / rsbs_q_at(1.0f64 / 3.0);
        assert!((third - expected).abs() < 1e-14);
    }

    #[test]
    fn product_floor_examples() {
        let unit = Instance::one_to_one(9).unwrap();
        assert!((product_floor_bound::<f64>(&unit) - unclaimed_prob::<f64>(&unit)).abs() < 1e-15);
        for m in 3..40 {
            let two = inst(&[m - 1, 1]);
            let mf = m as f64;
            assert!((product_floor_bound::<f64>(&two) - (mf - 1.0) / (mf * mf)).abs() < 1e-15);
            assert!((unclaimed_prob::<f64>(&two) - (mf - 1.0) / (mf * mf)).abs() < 1e-15);
        }
    }

    #[test]
    fn one_pass_envelope_endpoints() {
        assert!((one_pass_gap_envelope(1.0f64) - 1.0).abs() < 1e-15);
        let limit = 2.0 - 2.0 / std::f64::consts::E;
        assert!((one_pass_gap_envelope(1e-9f64) - limit).abs() < 1e-6);
    }
}
