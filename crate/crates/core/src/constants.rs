//! Limit constants of the exploration model computed from the pgf.
//!
//! `s0` solves `s f'(s) = f(s)`, `R = s0 / f(s0)`, `q*` is the smallest fixed
//! point of `f`, and `kappa0 = inf_{s in (0,1)} f(s) / (s log(1/s))`. The
//! truncated level-transition kernels and their Perron roots live here too.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ext::Ext;
use crate::pmf::StepDistribution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstantsError {
    #[error("p_0 = 0: the walk never steps down")]
    NoPositiveMassAtZero,
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("power iteration did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("kernel of size {k} is reducible (needs k >= {k0})")]
    Reducible { k: usize, k0: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub root: f64,
    pub minimize: f64,
    pub rayleigh: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            root: 1e-10,
            minimize: 1e-8,
            rayleigh: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `E[Z] <= 1`.
    Fringe,
    /// `E[Z] > 1`; the root condenses.
    NonFringe,
}

/// A predicted tail exponent: exact in the fringe regime, bracketed otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Exponent {
    Exact { value: f64 },
    Interval { lo: f64, hi: f64 },
}

impl Exponent {
    pub fn lo(&self) -> f64 {
        match *self {
            Exponent::Exact { value } => value,
            Exponent::Interval { lo, .. } => lo,
        }
    }

    pub fn hi(&self) -> f64 {
        match *self {
            Exponent::Exact { value } => value,
            Exponent::Interval { hi, .. } => hi,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        (self.hi() - self.lo()).abs() <= 1e-12 * self.hi().abs().max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionWarning {
    /// `p_0 + p_1 = 1`: results extrapolated to the affine / recursive-tree case.
    AffineBoundary,
    /// `gcd{j : p_j > 0} > 1`.
    Periodic,
    /// `p_0` is 0 or 1.
    DegenerateP0,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    pub pmf: String,
    pub mean_z: Ext,
    pub s0: Ext,
    pub r: Ext,
    pub q_star: f64,
    pub kappa0: f64,
    pub kappa0_minimizer: f64,
    pub regime: Regime,
    pub degree_exponent: Option<Exponent>,
    pub warnings: Vec<AssumptionWarning>,
    pub tolerances: Tolerances,
}

impl ModelConstants {
    pub fn compute(d: &StepDistribution, tol: Tolerances) -> Result<Self, ConstantsError> {
        let s0 = solve_s0(d, tol.root)?;
        let r = compute_r(d, s0);
        let q_star = solve_qstar(d, tol.root * 1e-3);
        let (kappa0, kappa0_minimizer) = compute_kappa0(d, tol.minimize);
        let mean_z = d.mean();
        let regime = if mean_z.to_f64() > 1.0 + 1e-12 {
            Regime::NonFringe
        } else {
            Regime::Fringe
        };
        let mut c = Self {
            pmf: d.to_string(),
            mean_z,
            s0,
            r,
            q_star,
            kappa0,
            kappa0_minimizer,
            regime,
            degree_exponent: None,
            warnings: assumption_warnings(d),
            tolerances: tol,
        };
        c.degree_exponent = predicted_degree_exponent(&c).ok();
        Ok(c)
    }
}

pub fn assumption_warnings(d: &StepDistribution) -> Vec<AssumptionWarning> {
    let mut w = Vec::new();
    let p0 = d.p0();
    if p0 <= 0.0 || p0 >= 1.0 {
        w.push(AssumptionWarning::DegenerateP0);
    }
    if d.is_affine_boundary() {
        w.push(AssumptionWarning::AffineBoundary);
    }
    if d.support_gcd() > 1 {
        w.push(AssumptionWarning::Periodic);
    }
    w
}

/// Positive root of `h(s) = s f'(s) - f(s)` by bisection; the radius of
/// convergence when `h` never changes sign.
pub fn solve_s0(d: &StepDistribution, tol: f64) -> Result<Ext, ConstantsError> {
    if d.p0() <= 0.0 {
        return Err(ConstantsError::NoPositiveMassAtZero);
    }
    if d.max_support().is_some_and(|m| m <= 1) {
        // h(s) = -p_0 identically
        return Ok(d.radius());
    }
    let h = |s: f64| match (d.pgf_prime(s), d.pgf(s)) {
        (Ext::Finite(fp), Ext::Finite(f)) => Some(s * fp - f),
        _ => None,
    };
    let mut hi = match d.radius() {
        Ext::Finite(rf) => {
            let mut found = None;
            for k in 1..=60 {
                let s = rf * (1.0 - 0.5f64.powi(k));
                if h(s).is_some_and(|v| v > 0.0) {
                    found = Some(s);
                    break;
                }
            }
            match found {
                Some(s) => s,
                None => return Ok(Ext::Finite(rf)),
            }
        }
        Ext::Infinite => {
            let mut s = 1.0;
            while h(s).is_some_and(|v| v <= 0.0) {
                s *= 2.0;
            }
            s
        }
    };
    let mut lo = 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid).is_some_and(|v| v > 0.0) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Ext::Finite(0.5 * (lo + hi)))
}

/// `R = lim_{s -> s0} s / f(s)`.
pub fn compute_r(d: &StepDistribution, s0: Ext) -> Ext {
    match s0 {
        Ext::Finite(s) => match d.pgf(s) {
            Ext::Finite(f) => Ext::Finite(s / f),
            Ext::Infinite => Ext::Finite(0.0),
        },
        Ext::Infinite => {
            // support within {0, 1}: s / (p0 + p1 s) -> 1/p1
            let p1 = d.prob(1);
            if p1 > 0.0 {
                Ext::Finite(1.0 / p1)
            } else {
                Ext::Infinite
            }
        }
    }
}

/// Extinction probability: smallest root of `f(q) = q` in `(0, 1]`, by
/// monotone iteration from 0. Equals 1 iff `E[Z] <= 1`.
pub fn solve_qstar(d: &StepDistribution, tol: f64) -> f64 {
    if d.mean().to_f64() <= 1.0 + 1e-12 {
        return 1.0;
    }
    let f = |q: f64| d.pgf(q).unwrap();
    let mut q = 0.0;
    for _ in 0..100_000_000u64 {
        let next = f(q);
        let slope = d.pgf_prime(next).unwrap().min(1.0 - 1e-12);
        // geometric convergence at rate f'(q*): remaining error ~ step / (1 - f')
        let done = (next - q) <= tol * (1.0 - slope);
        q = next;
        if done {
            break;
        }
    }
    q
}

/// Coarse grid followed by golden-section refinement around the grid argmin.
/// Returns `(argmin, min)`.
pub fn grid_golden_min(g: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize, tol: f64) -> (f64, f64) {
    let step = (hi - lo) / (points - 1) as f64;
    let xs: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    let (best, _) =
        xs.iter().map(|&x| g(x)).enumerate().fold(
            (0, f64::INFINITY),
            |(bi, bv), (i, v)| if v < bv { (i, v) } else { (bi, bv) },
        );
    let mut a = xs[best.saturating_sub(1)];
    let mut b = xs[(best + 1).min(points - 1)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut e = a + inv_phi * (b - a);
    let (mut gc, mut ge) = (g(c), g(e));
    while (b - a).abs() > tol {
        if gc < ge {
            b = e;
            e = c;
            ge = gc;
            c = b - inv_phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = e;
            gc = ge;
            e = a + inv_phi * (b - a);
            ge = g(e);
        }
    }
    let x = 0.5 * (a + b);
    let gx = g(x);
    if gx <= g(xs[best]) {
        (x, gx)
    } else {
        (xs[best], g(xs[best]))
    }
}

const GRID_LO: f64 = 1e-9;
const GRID_HI: f64 = 1.0 - 1e-9;
const GRID_POINTS: usize = 1024;

/// `kappa0 = inf_{s in (0,1)} f(s) / (s log(1/s))`. Returns `(kappa0, minimizer)`.
pub fn compute_kappa0(d: &StepDistribution, tol: f64) -> (f64, f64) {
    let g = |s: f64| d.pgf(s).to_f64() / (s * (1.0 / s).ln());
    let (s, v) = grid_golden_min(g, GRID_LO, GRID_HI, GRID_POINTS, tol);
    (v, s)
}

/// BRW growth rate `alpha(theta) = f(e^theta) / e^theta`.
pub fn brw_rate(d: &StepDistribution, theta: f64) -> Ext {
    let s = theta.exp();
    match d.pgf(s) {
        Ext::Finite(f) => Ext::Finite(f / s),
        Ext::Infinite => Ext::Infinite,
    }
}

/// Legendre-type transform `alpha*(x) = inf_{s in (0,1)} { x log s + f(s)/s }`.
pub fn alpha_star(d: &StepDistribution, x: f64, tol: f64) -> f64 {
    let g = |s: f64| x * s.ln() + d.pgf(s).to_f64() / s;
    grid_golden_min(g, GRID_LO, GRID_HI, GRID_POINTS, tol).1
}

fn require_proper_p0(d_p0: f64) -> Result<(), ConstantsError> {
    if d_p0 > 0.0 && d_p0 < 1.0 {
        Ok(())
    } else {
        Err(ConstantsError::AssumptionViolated(format!(
            "p_0 = {d_p0} must lie in (0, 1)"
        )))
    }
}

fn nonfringe_interval(c: &ModelConstants) -> Result<Exponent, ConstantsError> {
    let r = c
        .r
        .finite()
        .ok_or_else(|| ConstantsError::AssumptionViolated("R is infinite in the non-fringe regime".into()))?;
    let s0 = c.s0.unwrap();
    let ratio = c.q_star.ln() / s0.ln();
    Ok(Exponent::Interval {
        lo: r.min(ratio),
        hi: r,
    })
}

/// Tail exponent of the limiting degree distribution.
pub fn predicted_degree_exponent(c: &ModelConstants) -> Result<Exponent, ConstantsError> {
    if c.warnings.contains(&AssumptionWarning::DegenerateP0) {
        return Err(ConstantsError::AssumptionViolated(
            "p_0 must lie in (0, 1)".into(),
        ));
    }
    match c.regime {
        Regime::Fringe => match c.r {
            Ext::Finite(r) => Ok(Exponent::Exact { value: r }),
            Ext::Infinite => Err(ConstantsError::AssumptionViolated("R is infinite".into())),
        },
        Regime::NonFringe => nonfringe_interval(c),
    }
}

/// Tail exponent of the limiting PageRank distribution at damping `c`.
pub fn predicted_pagerank_exponent(
    consts: &ModelConstants,
    d: &StepDistribution,
    damping: f64,
) -> Result<Exponent, ConstantsError> {
    require_proper_p0(d.p0())?;
    if !(damping > 0.0 && damping < 1.0) {
        return Err(ConstantsError::AssumptionViolated(format!(
            "damping {damping} outside (0, 1)"
        )));
    }
    match consts.regime {
        Regime::NonFringe => nonfringe_interval(consts),
        Regime::Fringe => {
            let threshold = match consts.s0 {
                Ext::Finite(s0) => 1.0 / s0,
                Ext::Infinite => 0.0,
            };
            if damping <= threshold {
                predicted_degree_exponent(consts)
            } else {
                let f = d.pgf(1.0 / damping).to_f64();
                Ok(Exponent::Exact {
                    value: 1.0 / (damping * f),
                })
            }
        }
    }
}

/// Closed forms of `(s0, R, q*)` for the analytic families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedForm {
    pub s0: Ext,
    pub r: Ext,
    pub q_star: f64,
}

pub fn closed_form(d: &StepDistribution) -> Option<ClosedForm> {
    use crate::pmf::Family;
    match d.family()? {
        Family::Geometric { p } if p > 0.0 && p < 1.0 => {
            let q = 1.0 - p;
            Some(ClosedForm {
                s0: Ext::Finite(1.0 / (2.0 * q)),
                r: Ext::Finite(1.0 / (4.0 * p * q)),
                q_star: (p / q).min(1.0),
            })
        }
        Family::TwoPointSrw { p } if p > 0.0 && p < 1.0 => {
            let q = 1.0 - p;
            Some(ClosedForm {
                s0: Ext::Finite((p / q).sqrt()),
                r: Ext::Finite(1.0 / (2.0 * (p * q).sqrt())),
                q_star: (p / q).min(1.0),
            })
        }
        Family::BernoulliAffine { p } if p > 0.0 && p < 1.0 => Some(ClosedForm {
            s0: Ext::Infinite,
            r: Ext::Finite(1.0 / p),
            q_star: 1.0,
        }),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    A,
    B,
}

/// `k x k` truncation of the level-transition matrices. Row/column `r`
/// stands for level `r + 1`: `A_ij = p_{j+1-i}`, and `B` replaces the first
/// row by the tail sums `c_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedKernel {
    pub kind: KernelKind,
    pub k: usize,
    entries: Vec<f64>,
}

impl TruncatedKernel {
    pub fn new(d: &StepDistribution, kind: KernelKind, k: usize) -> Self {
        assert!(k >= 1, "kernel dimension must be positive");
        let mut entries = vec![0.0; k * k];
        for r in 0..k {
            let (i, first_col) = (r + 1, r.saturating_sub(1));
            for c in first_col..k {
                let j = c + 1;
                entries[r * k + c] = if kind == KernelKind::B && i == 1 {
                    d.tail(j)
                } else {
                    d.prob(j + 1 - i)
                };
            }
        }
        Self { kind, k, entries }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.k + col]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks(self.k)
    }

    /// `M v`, skipping the structurally-zero lower part.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let k = self.k;
        for r in 0..k {
            let start = r.saturating_sub(1);
            let row = &self.entries[r * k + start..(r + 1) * k];
            out[r] = row.iter().zip(&v[start..]).map(|(a, b)| a * b).sum();
        }
    }

    /// `M u - u`, row by row.
    pub fn right_residual(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        self.apply(u, &mut out);
        out.iter().zip(u).map(|(mu, u)| mu - u).collect()
    }
}

pub fn truncated_kernel(d: &StepDistribution, kind: KernelKind, k: usize) -> TruncatedKernel {
    TruncatedKernel::new(d, kind, k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerronPair {
    pub eigenvalue: f64,
    /// L1-normalized, strictly positive.
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Smallest `k >= 1` with `p_k > 0`.
pub fn irreducibility_threshold(d: &StepDistribution) -> Option<usize> {
    let (w, _) = d.materialize(d.trunc_eps());
    w.iter()
        .enumerate()
        .skip(1)
        .find(|(_, &p)| p > 0.0)
        .map(|(k, _)| k)
}

/// Perron root by power iteration with L1-normalized iterates.
pub fn perron_eigen(m: &TruncatedKernel, tol: f64, max_iters: usize) -> Result<PerronPair, ConstantsError> {
    perron_eigen_from(m, None, tol, max_iters)
}

/// As [`perron_eigen`], optionally warm-started from `init` (padded or cut
/// to size). Iterates on `M + sI` with `s = 1` when the diagonal has zeros,
/// so periodic kernels still converge; the eigenvector is unchanged.
/// Stops once successive Rayleigh quotients differ by at most `tol` and the
/// Collatz-Wielandt bracket `[min (Mv)_i/v_i, max (Mv)_i/v_i]` is narrower
/// than `tol`. The bracket is relative to each entry, so small tail entries
/// of a warm start cannot stop the iteration early.
pub fn perron_eigen_from(
    m: &TruncatedKernel,
    init: Option<&[f64]>,
    tol: f64,
    max_iters: usize,
) -> Result<PerronPair, ConstantsError> {
    let k = m.k;
    if k == 1 {
        return Ok(PerronPair {
            eigenvalue: m.get(0, 0),
            vector: vec![1.0],
            iterations: 0,
        });
    }
    // subdiagonal p_0 > 0 always; irreducible iff some entry above the diagonal is positive in row 0..
    if (1..k).all(|c| m.get(0, c) == 0.0) && (0..k).all(|r| (r + 1..k).all(|c| m.get(r, c) == 0.0)) {
        return Err(ConstantsError::Reducible { k, k0: k + 1 });
    }
    let shift = if (0..k).all(|r| m.get(r, r) > 0.0) {
        0.0
    } else {
        1.0
    };

    let mut v: Vec<f64> = match init {
        Some(x) if !x.is_empty() => {
            let last = *x.last().unwrap();
            (0..k)
                .map(|i| x.get(i).copied().unwrap_or(last).max(1e-300))
                .collect()
        }
        _ => vec![1.0; k],
    };
    let norm: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= norm);

    let mut mv = vec![0.0; k];
    let mut prev = f64::NAN;
    for it in 1..=max_iters {
        m.apply(&v, &mut mv);
        let vv: f64 = v.iter().map(|x| x * x).sum();
        let lambda = v.iter().zip(&mv).map(|(a, b)| a * b).sum::<f64>() / vv;
        // Collatz-Wielandt: min_i (Mv)_i / v_i <= lambda <= max_i (Mv)_i / v_i
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (a, b) in mv.iter().zip(&v) {
            let q = a / b;
            lo = lo.min(q);
            hi = hi.max(q);
        }
        if (lambda - prev).abs() <= tol && hi - lo <= tol {
            return Ok(PerronPair {
                eigenvalue: lambda.clamp(lo, hi),
                vector: v,
                iterations: it,
            });
        }
        prev = lambda;
        let mut total = 0.0;
        for (x, y) in v.iter_mut().zip(&mv) {
            *x = y + shift * *x;
            total += *x;
        }
        v.iter_mut().for_each(|x| *x /= total);
    }
    Err(ConstantsError::NoConvergence(max_iters))
}

/// True iff `lambda I - M` is a nonsingular M-matrix, i.e. `lambda` exceeds
/// the Perron root. Gaussian elimination without pivoting on the Hessenberg
/// form; all pivots stay positive exactly in that case.
fn above_perron_root(m: &TruncatedKernel, lambda: f64) -> bool {
    let k = m.k;
    let mut prev: Vec<f64> = Vec::with_capacity(k);
    let mut row = vec![0.0; k];
    for r in 0..k {
        for c in 0..k {
            row[c] = if r == c { lambda } else { 0.0 } - m.get(r, c);
        }
        if r > 0 {
            // eliminate the single subdiagonal entry with the previous pivot row
            let factor = row[r - 1] / prev[r - 1];
            for c in r - 1..k {
                row[c] -= factor * prev[c];
            }
        }
        if !(row[r] > 0.0) {
            return false;
        }
        prev.clear();
        prev.extend_from_slice(&row);
    }
    true
}

/// Perron root by bisection on the M-matrix test, to absolute accuracy `tol`.
pub fn perron_root_bisect(m: &TruncatedKernel, tol: f64) -> f64 {
    let mut hi =
        m.rows().map(|r| r.iter().sum::<f64>()).fold(0.0, f64::max) * (1.0 + 1e-12) + f64::MIN_POSITIVE;
    let mut lo = 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if above_perron_root(m, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Perron roots `alpha_k` of `A_k` over the given dimensions.
pub fn alpha_trace(
    d: &StepDistribution,
    ks: &[usize],
    tol: f64,
) -> Result<Vec<(usize, f64)>, ConstantsError> {
    let k0 = irreducibility_threshold(d).unwrap_or(usize::MAX);
    let mut out = Vec::with_capacity(ks.len());
    for &k in ks {
        if k < k0 && k > 1 {
            return Err(ConstantsError::Reducible { k, k0 });
        }
        let m = TruncatedKernel::new(d, KernelKind::A, k);
        out.push((k, perron_root_bisect(&m, tol)));
    }
    Ok(out)
}

/// Largest violation of left sub-invariance of `(s^{-i})` with eigenvalue
/// `f(s)/s`, over columns `0..k-1` (the last column is cut by truncation).
/// Column `j` is scaled by `s^j` so the result stays O(1) for `s < 1`:
/// returns `max_j sum_i s^{j-i} M_ij - f(s)/s`.
pub fn verify_subinvariant(m: &TruncatedKernel, d: &StepDistribution, s: f64) -> f64 {
    let f = d.pgf(s).unwrap();
    let mut worst = f64::NEG_INFINITY;
    for c in 0..m.k.saturating_sub(1) {
        let j = c as i32 + 1;
        let lhs: f64 = (0..m.k).map(|r| s.powi(j - (r as i32 + 1)) * m.get(r, c)).sum();
        worst = worst.max(lhs - f / s);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geo(p: f64) -> StepDistribution {
        StepDistribution::geometric(p).unwrap()
    }

    #[test]
    fn s0_examples() {
        let s0 = solve_s0(&geo(0.3), 1e-12).unwrap().unwrap();
        assert!((s0 - 1.0 / 1.4).abs() < 1e-11);
        let s0 = solve_s0(&StepDistribution::srw(0.4).unwrap(), 1e-12)
            .unwrap()
            .unwrap();
        assert!((s0 - (0.4f64 / 0.6).sqrt()).abs() < 1e-11);
        assert!(solve_s0(&StepDistribution::affine(0.4).unwrap(), 1e-10)
            .unwrap()
            .is_infinite());
        assert_eq!(
            solve_s0(&StepDistribution::deterministic(2), 1e-10),
            Err(ConstantsError::NoPositiveMassAtZero)
        );
    }

    #[test]
    fn closed_forms_agree_with_numerics() {
        let mut ds: Vec<StepDistribution> = [0.1, 0.3, 0.7, 0.9].iter().map(|&p| geo(p)).collect();
        ds.extend([0.3, 0.4, 0.6].iter().map(|&p| StepDistribution::srw(p).unwrap()));
        ds.push(StepDistribution::affine(0.5).unwrap());
        for d in ds {
            let cf = closed_form(&d).unwrap();
            let c = consts(&d);
            let close = |a: Ext, b: Ext| match (a, b) {
                (Ext::Finite(a), Ext::Finite(b)) => (a - b).abs() <= 1e-9,
                (a, b) => a == b,
            };
            assert!(close(c.s0, cf.s0), "{d}: s0 {} vs {}", c.s0, cf.s0);
            assert!(close(c.r, cf.r), "{d}: R {} vs {}", c.r, cf.r);
            assert!(
                (c.q_star - cf.q_star).abs() <= 1e-9,
                "{d}: q* {} vs {}",
                c.q_star,
                cf.q_star
            );
        }
        assert!(closed_form(&StepDistribution::deterministic(0)).is_none());
    }

    #[test]
    fn r_examples() {
        let d = geo(0.3);
        let r = compute_r(&d, solve_s0(&d, 1e-12).unwrap()).unwrap();
        assert!((r - 1.0 / 0.84).abs() < 1e-12);
        let d = StepDistribution::srw(0.4).unwrap();
        let r = compute_r(&d, solve_s0(&d, 1e-12).unwrap()).unwrap();
        assert!((r - 1.0 / (2.0 * 0.24f64.sqrt())).abs() < 1e-12);
        let d = geo(0.5);
        let s0 = solve_s0(&d, 1e-12).unwrap().unwrap();
        assert!((s0 - 1.0).abs() < 1e-11);
        assert!((compute_r(&d, Ext::Finite(s0)).unwrap() - 1.0).abs() < 1e-12);
        let d = StepDistribution::affine(0.4).unwrap();
        assert_eq!(compute_r(&d, Ext::Infinite), Ext::Finite(2.5));
        let d = StepDistribution::deterministic(0);
        assert!(compute_r(&d, solve_s0(&d, 1e-10).unwrap()).is_infinite());
    }

    #[test]
    fn qstar_examples() {
        assert!((solve_qstar(&geo(0.3), 1e-14) - 3.0 / 7.0).abs() < 1e-12);
        // 0.6 q^2 - q + 0.4 = 0 has roots {1, 2/3}
        let q = solve_qstar(&StepDistribution::srw(0.4).unwrap(), 1e-14);
        assert!((q - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(solve_qstar(&geo(0.9), 1e-12), 1.0);
        assert_eq!(solve_qstar(&geo(0.5), 1e-12), 1.0);
    }

    /// Independent route: bisection on the first-order condition
    /// `(1-p) s = (1 + log s) / (1 + 2 log s)` and the closed form
    /// `kappa0 = p e^{1/u} u (2 - u)` with `s = e^{-1/u}`.
    fn kappa0_geometric_oracle(p: f64) -> f64 {
        let h = |s: f64| (1.0 - p) * s - (1.0 + s.ln()) / (1.0 + 2.0 * s.ln());
        // the right side has a pole at s = e^{-1/2}; the minimizer lies below it
        let (mut lo, mut hi) = (1e-12, (-0.5f64).exp() - 1e-12);
        assert!(h(lo) * h(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(lo) * h(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        let u = -1.0 / s.ln();
        p * (1.0 / u).exp() * u * (2.0 - u)
    }

    fn brute_grid_min(d: &StepDistribution) -> f64 {
        let n = 1_000_000;
        (1..n)
            .map(|i| {
                let s = i as f64 / n as f64;
                d.pgf(s).unwrap() / (s * (1.0 / s).ln())
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn kappa0_examples() {
        let (k, s) = compute_kappa0(&StepDistribution::deterministic(0), 1e-10);
        assert!((k - std::f64::consts::E).abs() < 1e-12);
        assert!((s - (-1f64).exp()).abs() < 1e-5);

        let oracle = kappa0_geometric_oracle(0.5);
        assert!((oracle - 1.628_549_849_425_68).abs() < 1e-10);
        let (k, _) = compute_kappa0(&geo(0.5), 1e-8);
        assert!((k - oracle).abs() < 1e-8, "{k} vs {oracle}");

        for d in [
            geo(0.3),
            geo(0.5),
            geo(0.9),
            StepDistribution::srw(0.4).unwrap(),
            StepDistribution::affine(0.5).unwrap(),
            StepDistribution::deterministic(0),
        ] {
            let (k, _) = compute_kappa0(&d, 1e-8);
            let brute = brute_grid_min(&d);
            assert!(k <= brute + 1e-12 && brute - k < 1e-6, "{d}: {k} vs {brute}");
        }
    }

    #[test]
    fn brw_rate_and_alpha_star() {
        for d in [geo(0.3), StepDistribution::srw(0.4).unwrap()] {
            assert!((brw_rate(&d, 0.0).unwrap() - 1.0).abs() < 1e-15);
        }
        let d = geo(0.3);
        let (k0, _) = compute_kappa0(&d, 1e-10);
        assert!(alpha_star(&d, k0 + 0.01, 1e-10) < 0.0);
        assert!(alpha_star(&d, k0 - 0.01, 1e-10) > 0.0);
        let a = alpha_star(&StepDistribution::deterministic(0), std::f64::consts::E, 1e-10);
        assert!(a.abs() < 1e-9, "{a}");
    }

    fn consts(d: &StepDistribution) -> ModelConstants {
        ModelConstants::compute(d, Tolerances::default()).unwrap()
    }

    #[test]
    fn degree_exponent_examples() {
        let c = consts(&StepDistribution::affine(0.4).unwrap());
        assert_eq!(c.regime, Regime::Fringe);
        assert!(c.warnings.contains(&AssumptionWarning::AffineBoundary));
        let e = predicted_degree_exponent(&c).unwrap();
        assert!(matches!(e, Exponent::Exact { value } if (value - 2.5).abs() < 1e-12));

        let c = consts(&geo(0.3));
        let e = predicted_degree_exponent(&c).unwrap();
        assert!(matches!(e, Exponent::Interval { .. }));
        // log(3/7)/log(5/7) = 2.518... > R, so the interval collapses onto R
        let ratio = (3.0f64 / 7.0).ln() / (5.0f64 / 7.0).ln();
        assert!((ratio - 2.5181).abs() < 1e-4);
        assert!((e.hi() - 1.0 / 0.84).abs() < 1e-9);
        assert!(e.is_degenerate());

        let c = consts(&geo(0.03));
        let e = predicted_degree_exponent(&c).unwrap();
        assert!(!e.is_degenerate());
        assert!(e.lo() < e.hi());

        assert!(predicted_degree_exponent(&consts(&StepDistribution::deterministic(0))).is_err());
    }

    #[test]
    fn degree_exponent_crossover_recomputed() {
        // p where R = log q* / log s0 for geometric(p); bisection on the gap
        let gap = |p: f64| {
            let c = consts(&geo(p));
            c.r.unwrap() - c.q_star.ln() / c.s0.unwrap().ln()
        };
        let (mut lo, mut hi) = (0.01, 0.2);
        assert!(gap(lo) > 0.0 && gap(hi) < 0.0);
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if gap(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - 0.0616).abs() < 5e-4, "crossover {lo}");
    }

    #[test]
    fn pagerank_exponent_examples() {
        let d = StepDistribution::affine(0.5).unwrap();
        let e = predicted_pagerank_exponent(&consts(&d), &d, 0.5).unwrap();
        assert!((e.hi() - 4.0 / 3.0).abs() < 1e-12);

        let d = geo(0.9);
        let c = consts(&d);
        let e = predicted_pagerank_exponent(&c, &d, 0.9).unwrap();
        assert!((e.hi() - 1.0 / 0.91125).abs() < 1e-9, "{e:?}");
        let e = predicted_pagerank_exponent(&c, &d, 0.15).unwrap();
        assert!((e.hi() - 1.0 / 0.36).abs() < 1e-9);
        // threshold 1/s0 = 0.2 belongs to the first branch
        let e = predicted_pagerank_exponent(&c, &d, 0.2).unwrap();
        assert!((e.hi() - 1.0 / 0.36).abs() < 1e-9);
    }

    #[test]
    fn kernel_layout() {
        let d = geo(0.3);
        let a = truncated_kernel(&d, KernelKind::A, 2);
        let expect = [[0.21, 0.147], [0.3, 0.21]];
        for (r, row) in expect.iter().enumerate() {
            for (c, &x) in row.iter().enumerate() {
                assert!((a.get(r, c) - x).abs() < 1e-15);
            }
        }
        let d = StepDistribution::srw(0.4).unwrap();
        let a = truncated_kernel(&d, KernelKind::A, 6);
        let b = truncated_kernel(&d, KernelKind::B, 6);
        assert!((b.get(0, 0) - 0.6).abs() < 1e-15);
        for r in 1..6 {
            for c in 0..6 {
                assert_eq!(a.get(r, c), b.get(r, c));
            }
        }
    }

    #[test]
    fn perron_small_cases() {
        let d = geo(0.3);
        let p = perron_eigen(&truncated_kernel(&d, KernelKind::A, 1), 1e-12, 10).unwrap();
        assert_eq!(p.eigenvalue, 0.21);
        // 2x2: eigenvalues p1 +- sqrt(p0 p2)
        let p = perron_eigen(&truncated_kernel(&d, KernelKind::A, 2), 1e-13, 100_000).unwrap();
        assert!((p.eigenvalue - (0.21 + (0.3f64 * 0.147).sqrt())).abs() < 1e-10);
    }

    #[test]
    fn perron_residual_and_positivity() {
        for d in [geo(0.3), StepDistribution::srw(0.4).unwrap()] {
            let m = truncated_kernel(&d, KernelKind::A, 40);
            let tol = 1e-10;
            let p = perron_eigen(&m, tol, 10_000_000).unwrap();
            assert!(p.vector.iter().all(|&x| x > 0.0));
            let mut mv = vec![0.0; 40];
            m.apply(&p.vector, &mut mv);
            let resid = mv
                .iter()
                .zip(&p.vector)
                .map(|(a, b)| (a - p.eigenvalue * b).abs())
                .fold(0.0, f64::max);
            assert!(resid <= 10.0 * tol);
        }
    }

    #[test]
    fn alpha_k_monotone_toward_inverse_r() {
        let d = geo(0.3);
        let ks: Vec<usize> = (1..=20).map(|i| i * 10).collect();
        let trace = alpha_trace(&d, &ks, 1e-13).unwrap();
        for w in trace.windows(2) {
            assert!(w[1].1 >= w[0].1 - 1e-10);
        }
        let last = trace.last().unwrap().1;
        assert!(last <= 0.84 && 0.84 - last < 1e-2);
    }

    #[test]
    fn bisection_agrees_with_power_iteration() {
        for d in [geo(0.3), geo(0.7), StepDistribution::srw(0.4).unwrap()] {
            for kind in [KernelKind::A, KernelKind::B] {
                for k in [2, 7, 30] {
                    let m = truncated_kernel(&d, kind, k);
                    let a = perron_root_bisect(&m, 1e-14);
                    let b = perron_eigen(&m, 1e-13, 50_000_000).unwrap().eigenvalue;
                    assert!((a - b).abs() < 1e-11, "{d} {kind:?} k={k}: {a} vs {b}");
                }
            }
        }
        // reference eigenvalues from a dense eigensolver
        let d = geo(0.3);
        let a100 = perron_root_bisect(&truncated_kernel(&d, KernelKind::A, 100), 1e-14);
        let a200 = perron_root_bisect(&truncated_kernel(&d, KernelKind::A, 200), 1e-14);
        assert!((a100 - 0.839_20).abs() < 1e-5, "{a100}");
        assert!((a200 - 0.839_797).abs() < 1e-6, "{a200}");
    }

    #[test]
    fn subinvariance() {
        let d = geo(0.3);
        let s0 = solve_s0(&d, 1e-12).unwrap().unwrap();
        let a = truncated_kernel(&d, KernelKind::A, 50);
        assert!(verify_subinvariant(&a, &d, s0) <= 1e-12);
        assert!(verify_subinvariant(&a, &d, 0.5) <= 1e-12);

        let b = truncated_kernel(&d, KernelKind::B, 50);
        assert!(verify_subinvariant(&b, &d, 1.0).abs() <= 1e-12);
        assert!(verify_subinvariant(&b, &d, 1.2) <= 1e-12);
    }

    #[test]
    fn b_right_eigenvector_nonfringe() {
        let d = geo(0.3);
        let q = solve_qstar(&d, 1e-15);
        let k = 80;
        let b = truncated_kernel(&d, KernelKind::B, k);
        let u: Vec<f64> = (0..k).map(|i| q.powi(i as i32)).collect();
        let resid = b.right_residual(&u);
        // truncation drops sum_{j > k} terms, negligible on the first half of rows
        let worst = resid[..k / 2].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(worst <= 1e-10, "{worst}");
    }

    #[test]
    fn g_decreasing_below_s0_and_bounded_by_inverse_r() {
        for d in [geo(0.3), geo(0.7), StepDistribution::srw(0.4).unwrap()] {
            let c = consts(&d);
            let s0 = c.s0.unwrap();
            let r = c.r.unwrap();
            let g = |s: f64| d.pgf(s).unwrap() / s;
            let pts: Vec<f64> = (1..1000).map(|i| s0 * i as f64 / 1000.0).collect();
            for w in pts.windows(2) {
                assert!(g(w[1]) < g(w[0]));
            }
            for i in 1..1000 {
                let s = i as f64 / 1000.0;
                assert!(g(s) >= 1.0 / r - 1e-12);
            }
        }
    }

    #[test]
    fn subcritical_r_bracket() {
        for p in [0.55, 0.7, 0.9] {
            let d = geo(p);
            let c = consts(&d);
            let r = c.r.unwrap();
            let mean = c.mean_z.unwrap();
            assert!(r > 1.0 && r < 1.0 / mean, "p={p}: R={r}");
            assert!(c.s0.unwrap() > 1.0);
        }
    }

    #[test]
    fn nonfringe_orderings() {
        for d in [geo(0.3), geo(0.1), StepDistribution::srw(0.3).unwrap()] {
            let c = consts(&d);
            assert_eq!(c.regime, Regime::NonFringe);
            assert!(c.q_star < 1.0);
            assert!(c.r.unwrap() > 1.0);
            assert!(c.q_star < c.s0.unwrap() && c.s0.unwrap() < 1.0);
        }
    }
}
