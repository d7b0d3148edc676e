//! Step law of the exploration length `Z`: pmf, generating function, sampling.
//!
//! A [`StepDistribution`] is either an explicit finite pmf or one of the named
//! analytic families. Analytic families keep their closed-form pgf; they are
//! only materialized to a finite support when a consumer (alias sampler,
//! dynamic programming) needs one.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ext::Ext;

/// Tolerance on `|sum p_k - 1|` accepted for explicit weights.
pub const MASS_TOL: f64 = 1e-12;

/// Tail mass discarded when an infinite-support family is materialized.
pub const DEFAULT_TRUNC_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PmfError {
    #[error("weight {index} is negative or not finite ({value})")]
    NegativeWeight { index: usize, value: f64 },
    #[error("weights sum to {0}, expected 1")]
    MassNotOne(f64),
    #[error("empty support")]
    EmptySupport,
    #[error("parameter {name}={value} out of range")]
    ParamOutOfRange { name: &'static str, value: f64 },
    #[error("cannot parse pmf spec `{0}`")]
    Parse(String),
}

/// Named analytic families with exact generating functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    /// `p_k = p (1-p)^k`, `k >= 0`.
    Geometric { p: f64 },
    /// `p_0 = 1-p`, `p_1 = p` (affine preferential attachment).
    BernoulliAffine { p: f64 },
    /// `p_0 = p`, `p_2 = 1-p` (increments of `Z-1` are +-1).
    TwoPointSrw { p: f64 },
    /// `Z = k` almost surely.
    Deterministic { k: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Law {
    Explicit(Vec<f64>),
    Analytic(Family),
}

/// The step law `p = {p_k}` on the nonnegative integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDistribution {
    law: Law,
    trunc_eps: f64,
}

impl StepDistribution {
    /// Validates explicit weights. Rejects rather than renormalizes.
    pub fn from_pmf(weights: &[f64]) -> Result<Self, PmfError> {
        if weights.is_empty() {
            return Err(PmfError::EmptySupport);
        }
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(PmfError::NegativeWeight { index, value });
            }
        }
        let total = crate::stats::pairwise_sum(weights);
        if (total - 1.0).abs() > MASS_TOL {
            return Err(PmfError::MassNotOne(total));
        }
        let mut probs = weights.to_vec();
        while probs.len() > 1 && *probs.last().unwrap() == 0.0 {
            probs.pop();
        }
        Ok(Self {
            law: Law::Explicit(probs),
            trunc_eps: 0.0,
        })
    }

    pub fn preset(family: Family) -> Result<Self, PmfError> {
        match family {
            Family::Geometric { p } if !(p > 0.0 && p <= 1.0) => {
                return Err(PmfError::ParamOutOfRange { name: "p", value: p })
            }
            Family::BernoulliAffine { p } | Family::TwoPointSrw { p } if !(0.0..=1.0).contains(&p) => {
                return Err(PmfError::ParamOutOfRange { name: "p", value: p })
            }
            _ => {}
        }
        Ok(Self {
            law: Law::Analytic(family),
            trunc_eps: DEFAULT_TRUNC_EPS,
        })
    }

    pub fn geometric(p: f64) -> Result<Self, PmfError> {
        Self::preset(Family::Geometric { p })
    }

    pub fn affine(p: f64) -> Result<Self, PmfError> {
        Self::preset(Family::BernoulliAffine { p })
    }

    pub fn srw(p: f64) -> Result<Self, PmfError> {
        Self::preset(Family::TwoPointSrw { p })
    }

    pub fn deterministic(k: u32) -> Self {
        Self {
            law: Law::Analytic(Family::Deterministic { k }),
            trunc_eps: DEFAULT_TRUNC_EPS,
        }
    }

    pub fn family(&self) -> Option<Family> {
        match self.law {
            Law::Analytic(f) => Some(f),
            Law::Explicit(_) => None,
        }
    }

    pub fn trunc_eps(&self) -> f64 {
        self.trunc_eps
    }

    pub fn with_trunc_eps(mut self, eps: f64) -> Self {
        self.trunc_eps = eps;
        self
    }

    /// Point mass `p_k`.
    pub fn prob(&self, k: usize) -> f64 {
        match &self.law {
            Law::Explicit(p) => p.get(k).copied().unwrap_or(0.0),
            Law::Analytic(f) => match *f {
                Family::Geometric { p } => p * (1.0 - p).powi(k as i32),
                Family::BernoulliAffine { p } => match k {
                    0 => 1.0 - p,
                    1 => p,
                    _ => 0.0,
                },
                Family::TwoPointSrw { p } => match k {
                    0 => p,
                    2 => 1.0 - p,
                    _ => 0.0,
                },
                Family::Deterministic { k: d } => {
                    if k == d as usize {
                        1.0
                    } else {
                        0.0
                    }
                }
            },
        }
    }

    pub fn p0(&self) -> f64 {
        self.prob(0)
    }

    /// Largest `k` with `p_k > 0`, or `None` for infinite support.
    pub fn max_support(&self) -> Option<usize> {
        match &self.law {
            Law::Explicit(p) => Some(p.len() - 1),
            Law::Analytic(f) => match *f {
                Family::Geometric { p } if p < 1.0 => None,
                Family::Geometric { .. } => Some(0),
                Family::BernoulliAffine { p } => Some(if p > 0.0 { 1 } else { 0 }),
                Family::TwoPointSrw { p } => Some(if p < 1.0 { 2 } else { 0 }),
                Family::Deterministic { k } => Some(k as usize),
            },
        }
    }

    /// Radius of convergence `r_f` of the pgf.
    pub fn radius(&self) -> Ext {
        match self.law {
            Law::Analytic(Family::Geometric { p }) if p < 1.0 => Ext::Finite(1.0 / (1.0 - p)),
            _ => Ext::Infinite,
        }
    }

    /// Materializes the pmf as a finite vector, discarding at most `eps` of tail mass.
    /// Returns the weights and the mass actually discarded.
    pub fn materialize(&self, eps: f64) -> (Vec<f64>, f64) {
        match self.max_support() {
            Some(m) => ((0..=m).map(|k| self.prob(k)).collect(), 0.0),
            None => {
                let Some(Family::Geometric { p }) = self.family() else {
                    unreachable!("only the geometric family has infinite support")
                };
                let q = 1.0 - p;
                // tail beyond K is q^{K+1}
                let eps = eps.max(f64::MIN_POSITIVE);
                let last = (eps.ln() / q.ln()).ceil().max(0.0) as usize;
                let probs: Vec<f64> = (0..=last).map(|k| p * q.powi(k as i32)).collect();
                (probs, q.powi(last as i32 + 1))
            }
        }
    }

    /// `f(s) = sum p_k s^k`; infinite outside the radius of convergence.
    pub fn pgf(&self, s: f64) -> Ext {
        debug_assert!(s >= 0.0);
        match &self.law {
            Law::Explicit(p) => Ext::Finite(horner(p, s)),
            Law::Analytic(f) => match *f {
                Family::Geometric { p } => {
                    let q = 1.0 - p;
                    if q * s >= 1.0 {
                        Ext::Infinite
                    } else {
                        Ext::Finite(p / (1.0 - q * s))
                    }
                }
                Family::BernoulliAffine { p } => Ext::Finite(1.0 - p + p * s),
                Family::TwoPointSrw { p } => Ext::Finite(p + (1.0 - p) * s * s),
                Family::Deterministic { k } => Ext::Finite(s.powi(k as i32)),
            },
        }
    }

    pub fn pgf_prime(&self, s: f64) -> Ext {
        match &self.law {
            Law::Explicit(p) => {
                let dp: Vec<f64> = p.iter().enumerate().skip(1).map(|(k, &w)| k as f64 * w).collect();
                Ext::Finite(horner(&dp, s))
            }
            Law::Analytic(f) => match *f {
                Family::Geometric { p } => {
                    let q = 1.0 - p;
                    if q * s >= 1.0 {
                        Ext::Infinite
                    } else {
                        Ext::Finite(p * q / ((1.0 - q * s) * (1.0 - q * s)))
                    }
                }
                Family::BernoulliAffine { p } => Ext::Finite(p),
                Family::TwoPointSrw { p } => Ext::Finite(2.0 * (1.0 - p) * s),
                Family::Deterministic { k } => Ext::Finite(if k == 0 {
                    0.0
                } else {
                    k as f64 * s.powi(k as i32 - 1)
                }),
            },
        }
    }

    /// `E[Z] = f'(1)`.
    pub fn mean(&self) -> Ext {
        self.pgf_prime(1.0)
    }

    pub fn variance(&self) -> f64 {
        match self.family() {
            Some(Family::Geometric { p }) => (1.0 - p) / (p * p),
            _ => {
                let (w, _) = self.materialize(self.trunc_eps);
                let m: f64 = w.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
                w.iter()
                    .enumerate()
                    .map(|(k, p)| (k as f64 - m).powi(2) * p)
                    .sum()
            }
        }
    }

    /// Tail sum `c_i = sum_{k >= i} p_k`, with `c_0 = 1`.
    pub fn tail(&self, i: usize) -> f64 {
        if i == 0 {
            return 1.0;
        }
        match &self.law {
            Law::Explicit(p) => p.iter().skip(i).sum(),
            Law::Analytic(f) => match *f {
                Family::Geometric { p } => (1.0 - p).powi(i as i32),
                _ => (i..=self.max_support().unwrap_or(0)).map(|k| self.prob(k)).sum(),
            },
        }
    }

    /// `gcd{ j : p_j > 0 }` over the (materialized) support.
    pub fn support_gcd(&self) -> usize {
        let (w, _) = self.materialize(self.trunc_eps);
        w.iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .fold(0, |g, (j, _)| gcd(g, j))
    }

    /// Builds a sampler. Geometric uses closed-form inversion, everything
    /// else an alias table over the materialized support.
    pub fn sampler(&self) -> Sampler {
        match self.family() {
            Some(Family::Geometric { p }) if p < 1.0 => Sampler::Geometric {
                log_q: (1.0 - p).ln(),
            },
            Some(Family::Deterministic { k }) => Sampler::Constant(k as u64),
            _ => {
                let (w, _) = self.materialize(self.trunc_eps);
                if w.iter().filter(|&&p| p > 0.0).count() == 1 {
                    let k = w.iter().position(|&p| p > 0.0).unwrap();
                    Sampler::Constant(k as u64)
                } else {
                    Sampler::Alias(AliasTable::new(&w))
                }
            }
        }
    }

    /// Draws one `Z`. Prefer [`StepDistribution::sampler`] in hot loops.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.sampler().sample(rng)
    }

    /// `p_0 + p_1 = 1`: the affine / recursive-tree boundary case.
    pub fn is_affine_boundary(&self) -> bool {
        (self.prob(0) + self.prob(1) - 1.0).abs() <= MASS_TOL
    }
}

fn horner(coeffs: &[f64], s: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl fmt::Display for StepDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.law {
            Law::Analytic(Family::Geometric { p }) => write!(f, "geometric:{p}"),
            Law::Analytic(Family::BernoulliAffine { p }) => write!(f, "affine:{p}"),
            Law::Analytic(Family::TwoPointSrw { p }) => write!(f, "srw:{p}"),
            Law::Analytic(Family::Deterministic { k }) => write!(f, "det:{k}"),
            Law::Explicit(w) => {
                let parts: Vec<String> = w.iter().map(|x| x.to_string()).collect();
                write!(f, "pmf:{}", parts.join(","))
            }
        }
    }
}

/// Parses the command-line grammar: `geometric:0.3`, `affine:0.4`,
/// `srw:0.4`, `det:2`, `pmf:0.4,0,0.6`.
impl FromStr for StepDistribution {
    type Err = PmfError;

    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let bad = || PmfError::Parse(spec.to_string());
        let (kind, arg) = spec.trim().split_once(':').ok_or_else(bad)?;
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
        match kind.trim() {
            "geometric" | "geom" => Self::geometric(num(arg)?),
            "affine" => Self::affine(num(arg)?),
            "srw" => Self::srw(num(arg)?),
            "det" => Ok(Self::deterministic(arg.trim().parse().map_err(|_| bad())?)),
            "pmf" => {
                let w = arg.split(',').map(num).collect::<Result<Vec<_>, _>>()?;
                Self::from_pmf(&w)
            }
            _ => Err(bad()),
        }
    }
}

/// Constant expected time sampler for a [`StepDistribution`].
#[derive(Debug, Clone)]
pub enum Sampler {
    Constant(u64),
    Geometric { log_q: f64 },
    Alias(AliasTable),
}

impl Sampler {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            Sampler::Constant(k) => *k,
            Sampler::Geometric { log_q } => {
                // P(Z >= k) = q^k
                let u: f64 = 1.0 - rng.random::<f64>();
                (u.ln() / log_q).floor() as u64
            }
            Sampler::Alias(t) => t.sample(rng) as u64,
        }
    }
}

/// Vose alias table.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    pub fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        let total: f64 = weights.iter().sum();
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut prob = vec![1.0; n];
        let mut alias: Vec<usize> = (0..n).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        Self { prob, alias }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.prob.len());
        if rng.random::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }
}
