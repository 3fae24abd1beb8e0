use std::any::{Any, TypeId};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::scalar::Real;

type Rule<T> = (Vec<T>, Vec<T>);
type RuleCache = Mutex<HashMap<(TypeId, usize), Arc<dyn Any + Send + Sync>>>;

/// Memoized [`gauss_legendre`], keyed by scalar type and node count.
pub fn cached_rule<T: Real>(points: usize) -> Arc<Rule<T>> {
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    let key = (TypeId::of::<T>(), points);
    let cache = CACHE.get_or_init(Default::default);
    if let Some(rule) = cache.lock().expect("rule cache poisoned").get(&key) {
        return Arc::clone(rule).downcast().expect("keyed by type");
    }
    let rule = Arc::new(gauss_legendre::<T>(points));
    cache
        .lock()
        .expect("rule cache poisoned")
        .insert(key, rule.clone() as Arc<dyn Any + Send + Sync>);
    rule
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, found by Newton iteration
/// on the three-term recurrence.
pub fn gauss_legendre<T: Real>(points: usize) -> (Vec<T>, Vec<T>) {
    let mut nodes = vec![T::zero(); points];
    let mut weights = vec![T::zero(); points];
    let n = T::of_usize(points);
    let one = T::one();
    let two = T::of(2.0);
    let half = (points + 1) / 2;
    for k in 0..half {
        let mut x = (T::PI() * (T::of_usize(k) + T::of(0.75)) / (n + T::of(0.5))).cos();
        let mut derivative = one;
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(points, x);
            derivative = dp;
            let step = p / dp;
            x = x - step;
            if step.abs() <= T::epsilon() * T::of(4.0) {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(points, x);
        if dp.is_finite() {
            derivative = dp;
        }
        let w = two / ((one - x * x) * derivative * derivative);
        nodes[k] = x;
        nodes[points - 1 - k] = -x;
        weights[k] = w;
        weights[points - 1 - k] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative<T: Real>(degree: usize, x: T) -> (T, T) {
    let one = T::one();
    let mut p_prev = one;
    let mut p = x;
    if degree == 0 {
        return (one, T::zero());
    }
    for k in 2..=degree {
        let k_t = T::of_usize(k);
        let next = ((T::of(2.0) * k_t - one) * x * p - (k_t - one) * p_prev) / k_t;
        p_prev = p;
        p = next;
    }
    let n = T::of_usize(degree);
    let dp = n * (x * p - p_prev) / (x * x - one);
    (p, dp)
}

/// Integrates `f` over `[0, 1]` with a `points`-node Gauss-Legendre rule.
pub fn integrate_unit<T: Real>(points: usize, f: impl Fn(T) -> T) -> T {
    let rule = cached_rule::<T>(points);
    let (nodes, weights) = (&rule.0, &rule.1);
    let half = T::of(0.5);
    nodes
        .iter()
        .zip(weights)
        .fold(T::zero(), |acc, (&x, &w)| acc + w * f(half * (x + T::one())))
        * half
}
