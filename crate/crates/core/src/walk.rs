//! Hitting times of the walk `S_n = S_0 + sum (Z_i - 1)` and related series.
//!
//! `P(T_k = i)` is computed through the time-reversed walk with increments
//! `1 - Z`, which must stay positive: `P(T_k = i) = P(S~_i = k, tau~ > i)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::ext::Ext;
use crate::pmf::{Family, StepDistribution};
use crate::rng::{stream, Purpose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkError {
    #[error("series truncation bound {bound:e} exceeds budget with N = {steps}")]
    TruncationBudgetExceeded { bound: f64, steps: usize },
    #[error("pgf is infinite at s = {0}")]
    PgfInfinite(f64),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("start level {k} outside table (K = {max})")]
    OutOfRange { k: usize, max: usize },
}

/// `q[k][i] = P(T_k = i)` for `1 <= k <= K`, `0 <= i <= N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingTimeTable {
    pub max_start: usize,
    pub max_steps: usize,
    /// Bound on probability mass lost to truncating the step support.
    pub trunc_error: f64,
    q: Vec<Vec<f64>>,
}

impl HittingTimeTable {
    /// Row for start level `k` (1-based), indexed by time.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.q[k - 1]
    }

    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.q[k - 1][i]
    }

    pub fn row_sum(&self, k: usize) -> f64 {
        crate::stats::pairwise_sum(self.row(k))
    }
}

/// Forward DP over the positive dual walk. States are bounded by the time
/// index, so the state space never exceeds `N`.
pub fn hitting_time_table(
    d: &StepDistribution,
    max_start: usize,
    max_steps: usize,
    support_eps: f64,
) -> HittingTimeTable {
    assert!(max_start >= 1 && max_steps >= 1);
    let (p, lost) = d.materialize(support_eps);
    let mut q = vec![vec![0.0; max_steps + 1]; max_start];
    // dist[y] = P(S~_i = y, tau~ > i), y >= 1
    let mut dist = vec![0.0; max_steps + 2];
    let mut next = vec![0.0; max_steps + 2];
    dist[1] = p[0];
    let mut top = 1;
    for i in 1..=max_steps {
        for k in 1..=max_start.min(top) {
            q[k - 1][i] = dist[k];
        }
        if i == max_steps {
            break;
        }
        next[..=top + 1].iter_mut().for_each(|x| *x = 0.0);
        for x in 1..=top {
            let w = dist[x];
            if w == 0.0 {
                continue;
            }
            // y = x + 1 - j for j = 0..=x
            for (j, &pj) in p.iter().enumerate().take(x + 1) {
                next[x + 1 - j] += w * pj;
            }
        }
        top += 1;
        std::mem::swap(&mut dist, &mut next);
    }
    HittingTimeTable {
        max_start,
        max_steps,
        trunc_error: lost * max_steps as f64,
        q,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileValue {
    pub value: f64,
    pub error_bound: f64,
}

fn ln_poisson(t: f64, i: usize) -> f64 {
    if t == 0.0 {
        return if i == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    -t + i as f64 * t.ln() - ln_gamma(i as f64 + 1.0)
}

fn poisson_tail_above(t: f64, n: usize) -> f64 {
    let mut tail = 0.0;
    let mut i = n + 1;
    loop {
        let w = ln_poisson(t, i).exp();
        tail += w;
        if (i as f64 > t && w < 1e-300) || w == 0.0 && i as f64 > t {
            break;
        }
        i += 1;
    }
    tail
}

/// `E[P_k(t)] = sum_i t^i / i! P(T_k = i)`, summed as `e^t sum_i Pois(t, i) q_i`
/// in log space. Fails when the Poisson tail beyond `N` exceeds `1e-12`.
pub fn expected_profile(table: &HittingTimeTable, k: usize, t: f64) -> Result<ProfileValue, WalkError> {
    if k == 0 || k > table.max_start {
        return Err(WalkError::OutOfRange {
            k,
            max: table.max_start,
        });
    }
    let tail = poisson_tail_above(t, table.max_steps);
    if tail >= 1e-12 {
        return Err(WalkError::TruncationBudgetExceeded {
            bound: tail,
            steps: table.max_steps,
        });
    }
    let weighted: Vec<f64> = table
        .row(k)
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            if q > 0.0 {
                (ln_poisson(t, i) + q.ln()).exp()
            } else {
                0.0
            }
        })
        .collect();
    let s = crate::stats::pairwise_sum(&weighted);
    let scale = t.exp();
    Ok(ProfileValue {
        value: s * scale,
        error_bound: (tail + table.trunc_error) * scale,
    })
}

/// `q[k][n + lag] / q[k][n]` over `range`, skipping zero denominators. Use
/// `lag` equal to the support period for periodic steps.
pub fn hitting_ratio_trace(
    table: &HittingTimeTable,
    k: usize,
    range: std::ops::RangeInclusive<usize>,
    lag: usize,
) -> Vec<(usize, f64)> {
    let row = table.row(k);
    range
        .filter(|&n| n + lag < row.len() && row[n] > 0.0)
        .map(|n| (n, row[n + lag] / row[n]))
        .collect()
}

/// Step law of the exponentially tilted walk: `P(Z* = j) = s^j p_j / f(s)`,
/// so the increment `1 - Z*` has mean `(f(s) - s f'(s)) / f(s)`.
pub fn tilted_step_pmf(d: &StepDistribution, s: f64) -> Result<StepDistribution, WalkError> {
    let f = match d.pgf(s) {
        Ext::Finite(f) => f,
        Ext::Infinite => return Err(WalkError::PgfInfinite(s)),
    };
    if let Some(Family::Geometric { p }) = d.family() {
        let q = (1.0 - p) * s;
        return StepDistribution::geometric(1.0 - q)
            .map(|t| t.with_trunc_eps(d.trunc_eps()))
            .map_err(|_| WalkError::PgfInfinite(s));
    }
    let (p, _) = d.materialize(d.trunc_eps());
    let w: Vec<f64> = p
        .iter()
        .enumerate()
        .map(|(j, &pj)| pj * s.powi(j as i32) / f)
        .collect();
    let total: f64 = w.iter().sum();
    // renormalize the last ulps only
    let w: Vec<f64> = w.iter().map(|x| x / total).collect();
    StepDistribution::from_pmf(&w).map_err(|e| WalkError::Precondition(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// Level at which a walk is declared surviving early, if any.
    pub exit_level: Option<u64>,
    /// Upper bound on the upward bias from early exit; the finite horizon
    /// biases upward as well.
    pub exit_bias_bound: f64,
}

/// Root `u > 1` of `g(u) = u` for a pgf `g` with `g'(1) < 1`, if it exists.
fn escape_base(d: &StepDistribution) -> Option<f64> {
    let h = |u: f64| d.pgf(u).finite().map(|g| g - u);
    let mut hi = 2.0;
    loop {
        match h(hi) {
            Some(v) if v > 0.0 => break,
            Some(_) if hi < 1e6 => hi *= 2.0,
            _ => {
                // approach the radius from below
                let r = d.radius().finite()?;
                let mut x = 1.0 + (r - 1.0) * 0.5;
                for _ in 0..60 {
                    if h(x).is_some_and(|v| v > 0.0) {
                        hi = x;
                        break;
                    }
                    x = r - (r - x) * 0.5;
                }
                if !h(hi).is_some_and(|v| v > 0.0) {
                    return None;
                }
                break;
            }
        }
    }
    let mut lo = 1.0 + 1e-9;
    if !h(lo).is_some_and(|v| v < 0.0) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid).is_some_and(|v| v > 0.0) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(lo)
}

/// Monte-Carlo estimate of `P(tau*_s = infinity)` for the tilted walk from 0,
/// with increments `1 - Z*`. A path counts as surviving if it stays positive
/// for `horizon` steps, or once it reaches a level from which the chance of
/// ever returning is below `1e-9`.
pub fn survival_prob_estimate(
    d: &StepDistribution,
    s: f64,
    horizon: u64,
    replicas: u64,
    seed: u64,
) -> Result<SurvivalEstimate, WalkError> {
    let mean = d.mean().to_f64();
    if mean >= 1.0 {
        return Err(WalkError::Precondition(format!("E[Z] = {mean} must be < 1")));
    }
    let s0 = crate::constants::solve_s0(d, 1e-12).map_err(|e| WalkError::Precondition(e.to_string()))?;
    if s < 1.0 || s0.finite().is_some_and(|s0| s >= s0) {
        return Err(WalkError::Precondition(format!("s = {s} outside [1, s0)")));
    }
    let tilted = tilted_step_pmf(d, s)?;
    let (exit_level, exit_bias_bound) = match escape_base(&tilted) {
        Some(u) => {
            let level = (9.0 * 10f64.ln() / u.ln()).ceil() as u64;
            (Some(level), u.powf(-(level as f64)))
        }
        None => (None, 0.0),
    };
    let sampler = tilted.sampler();
    let survived: u64 = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r, Purpose::Aux);
            let mut pos: i64 = 0;
            for _ in 0..horizon {
                pos += 1 - sampler.sample(&mut rng) as i64;
                if pos <= 0 {
                    return 0;
                }
                if exit_level.is_some_and(|l| pos as u64 >= l) {
                    return 1;
                }
            }
            1
        })
        .sum();
    let n = replicas as f64;
    let estimate = survived as f64 / n;
    Ok(SurvivalEstimate {
        estimate,
        stderr: (estimate * (1.0 - estimate) / n).sqrt(),
        exit_level,
        exit_bias_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geo(p: f64) -> StepDistribution {
        StepDistribution::geometric(p).unwrap()
    }

    /// Enumerates all step sequences of length `i` for the walk from `k`.
    fn brute_hitting(p: &[f64], k: i64, i: usize) -> f64 {
        fn rec(p: &[f64], pos: i64, left: usize) -> f64 {
            if left == 0 {
                return if pos == 0 { 1.0 } else { 0.0 };
            }
            if pos <= 0 {
                return 0.0;
            }
            p.iter()
                .enumerate()
                .map(|(z, &pz)| pz * rec(p, pos + z as i64 - 1, left - 1))
                .sum()
        }
        rec(p, k, i)
    }

    #[test]
    fn small_entries_match_enumeration() {
        let w = [0.3, 0.25, 0.2, 0.15, 0.1];
        let d = StepDistribution::from_pmf(&w).unwrap();
        let t = hitting_time_table(&d, 3, 8, 0.0);
        let (p0, p1, p2) = (w[0], w[1], w[2]);
        assert!((t.get(1, 1) - p0).abs() < 1e-15);
        assert!((t.get(1, 2) - p1 * p0).abs() < 1e-15);
        assert!((t.get(1, 3) - (p1 * p1 * p0 + p2 * p0 * p0)).abs() < 1e-15);
        assert!((t.get(2, 2) - p0 * p0).abs() < 1e-15);
        for k in 1..=3 {
            for i in 0..=8 {
                let b = brute_hitting(&w, k as i64, i);
                assert!((t.get(k, i) - b).abs() < 1e-14, "k={k} i={i}");
            }
        }
    }

    #[test]
    fn table_invariants() {
        let t = hitting_time_table(&geo(0.4), 5, 60, 1e-14);
        for k in 1..=5 {
            assert!(t.row_sum(k) <= 1.0 + t.trunc_error + 1e-12);
            for i in 0..k {
                assert_eq!(t.get(k, i), 0.0);
            }
            assert!(t.row(k).iter().all(|&x| x >= 0.0));
        }
        let t = hitting_time_table(&StepDistribution::deterministic(0), 4, 10, 0.0);
        for k in 1..=4 {
            assert_eq!(t.get(k, k), 1.0);
        }
    }

    #[test]
    fn row_sum_tends_to_extinction_probability() {
        for (d, q) in [
            (geo(0.3), 3.0 / 7.0),
            (StepDistribution::srw(0.4).unwrap(), 2.0 / 3.0),
            (geo(0.7), 1.0),
        ] {
            let t = hitting_time_table(&d, 1, 500, 1e-12);
            let sum = t.row_sum(1);
            assert!((sum - q).abs() <= t.trunc_error + 1e-6, "{d}: {sum}");
        }
    }

    #[test]
    fn profile_trivial_laws() {
        let d = StepDistribution::deterministic(0);
        let t = hitting_time_table(&d, 2, 60, 0.0);
        for x in [0.0, 0.5, 2.0] {
            let v = expected_profile(&t, 1, x).unwrap();
            assert!((v.value - x).abs() < 1e-13);
            let v = expected_profile(&t, 2, x).unwrap();
            assert!((v.value - x * x / 2.0).abs() < 1e-13);
        }
        assert!(matches!(
            expected_profile(&t, 1, 40.0),
            Err(WalkError::TruncationBudgetExceeded { .. })
        ));
    }

    #[test]
    fn profile_frozen_values() {
        // values from an independent path-sum of the same series
        let t = hitting_time_table(&geo(0.5), 2, 200, 1e-16);
        let v = expected_profile(&t, 1, 1.0).unwrap();
        assert!((v.value - 0.574_804_173_1).abs() < 1e-9, "{}", v.value);
        let v = expected_profile(&t, 1, 2.0).unwrap();
        assert!((v.value - 1.369_000_424).abs() < 1e-8, "{}", v.value);
        let t = hitting_time_table(&StepDistribution::srw(0.4).unwrap(), 2, 200, 0.0);
        let v = expected_profile(&t, 1, 2.0).unwrap();
        assert!((v.value - 0.941_017_085_6).abs() < 1e-9);
    }

    #[test]
    fn profile_large_t_stays_finite() {
        let t = hitting_time_table(&geo(0.7), 1, 400, 1e-14);
        let v = expected_profile(&t, 1, 60.0).unwrap();
        assert!(v.value.is_finite() && v.value > 0.0);
    }

    #[test]
    fn laplace_average_recovers_extinction_probability() {
        // int_0^inf e^{-t} E[P_1(t)] dt = sum_i q_i
        for (d, q) in [(geo(0.7), 1.0), (geo(0.3), 3.0 / 7.0)] {
            let table = hitting_time_table(&d, 1, 600, 1e-14);
            let (h, upper) = (0.01, 60.0);
            let n = (upper / h) as usize;
            let mut acc = 0.0;
            for i in 0..=n {
                let t = i as f64 * h;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                acc += w * (-t).exp() * expected_profile(&table, 1, t).unwrap().value;
            }
            acc *= h;
            assert!((acc - q).abs() < 1e-4, "{d}: {acc}");
        }
    }

    #[test]
    fn ratio_traces() {
        let d = geo(0.3);
        let t = hitting_time_table(&d, 1, 401, 1e-14);
        let trace = hitting_ratio_trace(&t, 1, 300..=400, 1);
        assert!(!trace.is_empty());
        for (n, r) in trace {
            assert!((r - 0.84).abs() < 5e-3, "n={n} r={r}");
        }

        let d = StepDistribution::srw(0.4).unwrap();
        let t = hitting_time_table(&d, 1, 403, 0.0);
        assert!(t.row(1).iter().step_by(2).all(|&x| x == 0.0));
        let target = 4.0 * 0.24;
        let trace = hitting_ratio_trace(&t, 1, 301..=401, 2);
        assert_eq!(trace.len(), 51);
        for (n, r) in trace {
            assert!((r - target).abs() < 1e-2, "n={n} r={r}");
        }

        let t = hitting_time_table(&StepDistribution::deterministic(0), 1, 10, 0.0);
        assert!(hitting_ratio_trace(&t, 1, 2..=8, 1).is_empty());
    }

    #[test]
    fn tilted_law() {
        let d = StepDistribution::from_pmf(&[0.4, 0.3, 0.2, 0.1]).unwrap();
        let t = tilted_step_pmf(&d, 1.0).unwrap();
        for j in 0..4 {
            assert!((t.prob(j) - d.prob(j)).abs() < 1e-15);
        }
        let s = 1.3;
        let t = tilted_step_pmf(&d, s).unwrap();
        let f = d.pgf(s).unwrap();
        let fp = d.pgf_prime(s).unwrap();
        let direct: f64 = (0..4).map(|j| (1.0 - j as f64) * t.prob(j)).sum();
        assert!((direct - (f - s * fp) / f).abs() < 1e-12);

        let g = geo(0.7);
        let t = tilted_step_pmf(&g, 1.0).unwrap();
        assert!((1.0 - t.mean().unwrap() - 4.0 / 7.0).abs() < 1e-12);
        let s = 1.5;
        let t = tilted_step_pmf(&g, s).unwrap();
        let (f, fp) = (g.pgf(s).unwrap(), g.pgf_prime(s).unwrap());
        assert!((1.0 - t.mean().unwrap() - (f - s * fp) / f).abs() < 1e-12);
        assert_eq!(
            tilted_step_pmf(&g, 1.0 / 0.3),
            Err(WalkError::PgfInfinite(1.0 / 0.3))
        );
    }

    #[test]
    fn escape_base_geometric() {
        let u = escape_base(&geo(0.9)).unwrap();
        assert!((u - 9.0).abs() < 1e-9);
    }

    #[test]
    fn survival_estimates() {
        let d = geo(0.9);
        let e = survival_prob_estimate(&d, 1.0, 10_000, 100_000, 1).unwrap();
        assert!(e.estimate > 0.0 && e.estimate < 1.0);
        assert!(e.stderr <= 0.005);
        // first step must be Z = 0 and the walk then never returns: 1 - E[Z] drift
        // gives P(survive) = p - ... ; check against the exact value for geometric
        // steps: P(never <= 0 from 0) = 1 - q / p = 8/9
        assert!((e.estimate - 8.0 / 9.0).abs() < 4.0 * e.stderr + 1e-6, "{e:?}");

        let short = survival_prob_estimate(&d, 1.0, 3, 20_000, 5).unwrap();
        let long = survival_prob_estimate(&d, 1.0, 30, 20_000, 5).unwrap();
        assert!(long.estimate <= short.estimate);

        assert!(survival_prob_estimate(&geo(0.5), 1.0, 10, 10, 0).is_err());
        assert!(survival_prob_estimate(&geo(0.3), 1.0, 10, 10, 0).is_err());
    }
}
