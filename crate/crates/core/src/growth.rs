//! Tree growth by exploration from a uniform vertex, in discrete time, in
//! continuous time, with killing, and by PageRank-driven attachment. Also the
//! branching random walk that brackets the tree height.
//!
//! Every process starts from the root alone. Vertex counts always include
//! the root.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pmf::{Sampler, StepDistribution};
use crate::rng::{stream, Purpose};

/// Parent of the root.
pub const ROOT_PARENT: u32 = u32::MAX;

/// Largest expected tree size a horizon may imply.
pub const DEFAULT_CAP: f64 = (1u64 << 28) as f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrowthError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("horizon {horizon} implies about e^t = {expected:e} vertices, above the cap {cap:e}")]
    HorizonExplosion { horizon: f64, expected: f64, cap: f64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub replica: u64,
    pub variant: String,
}

/// Arrival-indexed rooted tree: `parent[i] < i` for `i >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeState {
    pub parent: Vec<u32>,
    pub depth: Vec<u32>,
    pub birth_time: Option<Vec<f64>>,
    pub provenance: Option<Provenance>,
}

impl TreeState {
    pub fn singleton() -> Self {
        Self {
            parent: vec![ROOT_PARENT],
            depth: vec![0],
            birth_time: None,
            provenance: None,
        }
    }

    /// Builds a tree from parent indices, computing depths.
    pub fn from_parents(parent: Vec<u32>) -> Result<Self, String> {
        if parent.first() != Some(&ROOT_PARENT) {
            return Err("vertex 0 must be the root".into());
        }
        let mut depth = Vec::with_capacity(parent.len());
        depth.push(0);
        for (i, &p) in parent.iter().enumerate().skip(1) {
            if p as usize >= i {
                return Err(format!("parent[{i}] = {p} is not an earlier vertex"));
            }
            depth.push(depth[p as usize] + 1);
        }
        Ok(Self {
            parent,
            depth,
            birth_time: None,
            provenance: None,
        })
    }

    pub fn n(&self) -> usize {
        self.parent.len()
    }

    /// Checks parent ordering, depths and birth-time monotonicity.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.n();
        if n == 0 || self.parent[0] != ROOT_PARENT || self.depth.first() != Some(&0) {
            return Err("vertex 0 must be the root at depth 0".into());
        }
        if self.depth.len() != n {
            return Err(format!("depth has {} entries for {n} vertices", self.depth.len()));
        }
        for i in 1..n {
            let p = self.parent[i];
            if p as usize >= i {
                return Err(format!("parent[{i}] = {p} is not an earlier vertex"));
            }
            if self.depth[i] != self.depth[p as usize] + 1 {
                return Err(format!("depth[{i}] inconsistent with its parent"));
            }
        }
        if let Some(b) = &self.birth_time {
            if b.len() != n {
                return Err(format!("birth_time has {} entries for {n} vertices", b.len()));
            }
            if b.windows(2).any(|w| !(w[1] > w[0])) {
                return Err("birth times not strictly increasing".into());
            }
        }
        Ok(())
    }

    /// Ancestor of `v` at distance `z`, or the root when `z >= depth(v)`.
    #[inline]
    pub fn ancestor(&self, mut v: usize, z: u64) -> usize {
        if z >= self.depth[v] as u64 {
            return 0;
        }
        for _ in 0..z {
            v = self.parent[v] as usize;
        }
        v
    }

    #[inline]
    fn push(&mut self, parent: usize) {
        self.parent.push(parent as u32);
        self.depth.push(self.depth[parent] + 1);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    Discrete,
    Continuous,
    Killed,
    PageRankAttach { c: f64 },
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Discrete => write!(f, "discrete"),
            Variant::Continuous => write!(f, "continuous"),
            Variant::Killed => write!(f, "killed"),
            Variant::PageRankAttach { c } => write!(f, "pr:{c}"),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "discrete" => Ok(Variant::Discrete),
            "continuous" => Ok(Variant::Continuous),
            "killed" => Ok(Variant::Killed),
            _ => match s.strip_prefix("pr:") {
                Some(c) => c
                    .parse()
                    .map(|c| Variant::PageRankAttach { c })
                    .map_err(|e| format!("bad damping {c:?}: {e}")),
                None => Err(format!("unknown variant {s:?}")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Stop once the tree has this many vertices.
    Vertices(u64),
    /// Stop at this time (continuous-time variants only).
    Horizon(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthConfig {
    pub pmf: StepDistribution,
    pub target: Target,
    pub variant: Variant,
    pub seed: u64,
}

impl GrowthConfig {
    pub fn validate(&self) -> Result<(), GrowthError> {
        let bad = |m: String| Err(GrowthError::InvalidConfig(m));
        match (self.variant, self.target) {
            (Variant::PageRankAttach { c }, _) if !(c > 0.0 && c < 1.0) => {
                bad(format!("damping {c} outside (0, 1)"))
            }
            (_, Target::Vertices(0)) => bad("need at least one vertex".into()),
            (Variant::Discrete | Variant::PageRankAttach { .. }, Target::Horizon(_)) => {
                bad(format!("{} growth needs a vertex target", self.variant))
            }
            (Variant::Killed, Target::Vertices(_)) => bad("killed growth needs a time horizon".into()),
            (_, Target::Horizon(t)) if !(t >= 0.0 && t.is_finite()) => {
                bad(format!("horizon {t} must be finite and nonnegative"))
            }
            _ => Ok(()),
        }
    }
}

/// Grows replica `replica` of `config`, deriving the attachment and clock
/// streams from the master seed.
pub fn grow(config: &GrowthConfig, replica: u64) -> Result<TreeState, GrowthError> {
    config.validate()?;
    let mut attach = stream(config.seed, replica, Purpose::Attach);
    let mut clock = stream(config.seed, replica, Purpose::Clock);
    let d = &config.pmf;
    let mut tree = match (config.variant, config.target) {
        (Variant::Discrete, Target::Vertices(n)) => grow_discrete(d, n as usize, &mut attach),
        (Variant::Continuous, target) => grow_continuous(d, target, DEFAULT_CAP, &mut attach, &mut clock)?,
        (Variant::Killed, Target::Horizon(t)) => grow_killed(d, t, DEFAULT_CAP, &mut attach, &mut clock)?,
        (Variant::PageRankAttach { c }, Target::Vertices(n)) => {
            grow_pagerank_attachment(c, n as usize, &mut attach)
        }
        _ => unreachable!("rejected by validate"),
    };
    tree.provenance = Some(Provenance {
        seed: config.seed,
        replica,
        variant: config.variant.to_string(),
    });
    debug_assert_eq!(tree.validate(), Ok(()));
    Ok(tree)
}

#[inline]
fn explore_step<R: Rng + ?Sized>(tree: &TreeState, sampler: &Sampler, rng: &mut R) -> usize {
    let v = rng.random_range(0..tree.n());
    let z = sampler.sample(rng);
    tree.ancestor(v, z)
}

/// Discrete-time growth to `n` vertices. Each arrival draws a uniform vertex
/// `V`, then `Z`, and attaches to the ancestor of `V` at distance `Z`
/// (the root if `Z >= depth(V)`).
pub fn grow_discrete<R: Rng + ?Sized>(d: &StepDistribution, n: usize, attach: &mut R) -> TreeState {
    let sampler = d.sampler();
    let mut tree = TreeState::singleton();
    tree.parent.reserve(n.saturating_sub(1));
    tree.depth.reserve(n.saturating_sub(1));
    while tree.n() < n {
        let u = explore_step(&tree, &sampler, attach);
        tree.push(u);
    }
    tree
}

fn check_horizon(t: f64, cap: f64) -> Result<(), GrowthError> {
    let expected = t.exp();
    if expected > cap {
        Err(GrowthError::HorizonExplosion {
            horizon: t,
            expected,
            cap,
        })
    } else {
        Ok(())
    }
}

/// Continuous-time embedding: every vertex reproduces at rate 1, so with `m`
/// vertices the next birth comes after `Exp(m)`. The jump chain is the
/// discrete process driven by the same attachment stream.
pub fn grow_continuous<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    d: &StepDistribution,
    target: Target,
    cap: f64,
    attach: &mut R1,
    clock: &mut R2,
) -> Result<TreeState, GrowthError> {
    let (max_n, horizon) = match target {
        Target::Vertices(n) => {
            if n as f64 > cap {
                return Err(GrowthError::HorizonExplosion {
                    horizon: f64::NAN,
                    expected: n as f64,
                    cap,
                });
            }
            (n as usize, f64::INFINITY)
        }
        Target::Horizon(t) => {
            check_horizon(t, cap)?;
            (usize::MAX, t)
        }
    };
    let sampler = d.sampler();
    let mut tree = TreeState::singleton();
    let mut births = vec![0.0];
    let mut now = 0.0;
    while tree.n() < max_n {
        let e: f64 = Exp1.sample(clock);
        now += e / tree.n() as f64;
        if now > horizon {
            break;
        }
        let u = explore_step(&tree, &sampler, attach);
        tree.push(u);
        births.push(now);
    }
    tree.birth_time = Some(births);
    Ok(tree)
}

/// Killed process to time `horizon`: an event at `v` with `Z > depth(v)` is
/// discarded, otherwise the new vertex sits at depth `depth(v) - Z + 1`.
/// Discarded events still advance the clock.
pub fn grow_killed<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    d: &StepDistribution,
    horizon: f64,
    cap: f64,
    attach: &mut R1,
    clock: &mut R2,
) -> Result<TreeState, GrowthError> {
    check_horizon(horizon, cap)?;
    let sampler = d.sampler();
    let mut tree = TreeState::singleton();
    let mut births = vec![0.0];
    let mut now = 0.0;
    loop {
        let e: f64 = Exp1.sample(clock);
        now += e / tree.n() as f64;
        if now > horizon {
            break;
        }
        let v = attach.random_range(0..tree.n());
        let z = sampler.sample(attach);
        if z <= tree.depth[v] as u64 {
            let u = tree.ancestor(v, z);
            tree.push(u);
            births.push(now);
        }
    }
    tree.birth_time = Some(births);
    Ok(tree)
}

/// One exact draw from the fringe limit: the killed tree at an independent
/// `Exp(1)` time, drawn first from the clock stream.
pub fn sample_fringe<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    d: &StepDistribution,
    attach: &mut R1,
    clock: &mut R2,
) -> TreeState {
    let tau: f64 = Exp1.sample(clock);
    // P(tau > ln cap) is about 4e-9; clamp rather than fail
    let tau = tau.min(DEFAULT_CAP.ln());
    grow_killed(d, tau, DEFAULT_CAP, attach, clock).expect("horizon clamped below cap")
}

/// Binary indexed tree over nonnegative weights with prefix search.
#[derive(Debug, Clone)]
pub struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            tree: Vec::with_capacity(n + 1),
        }
    }

    pub fn from_weights(w: &[f64]) -> Self {
        let mut tree = Vec::with_capacity(w.len() + 1);
        tree.push(0.0);
        tree.extend_from_slice(w);
        let n = w.len();
        for i in 1..=n {
            let j = i + (i & i.wrapping_neg());
            if j <= n {
                tree[j] += tree[i];
            }
        }
        Self { tree }
    }

    pub fn len(&self) -> usize {
        self.tree.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends a new slot holding `w`.
    pub fn push(&mut self, w: f64) {
        if self.tree.is_empty() {
            self.tree.push(0.0);
        }
        let i = self.tree.len();
        // slot i covers (i - lowbit(i), i]
        let low = i & i.wrapping_neg();
        let mut sum = w;
        let mut j = i - 1;
        let stop = i - low;
        while j > stop {
            sum += self.tree[j];
            j -= j & j.wrapping_neg();
        }
        self.tree.push(sum);
    }

    pub fn add(&mut self, idx: usize, delta: f64) {
        let mut i = idx + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    pub fn prefix(&self, count: usize) -> f64 {
        let mut i = count;
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }

    pub fn total(&self) -> f64 {
        self.prefix(self.len())
    }

    /// Smallest index whose inclusive prefix sum exceeds `x`.
    pub fn find(&self, mut x: f64) -> usize {
        let n = self.len();
        let mut pos = 0;
        let mut step = if n == 0 {
            0
        } else {
            1 << (usize::BITS - 1 - n.leading_zeros())
        };
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= x {
                pos = next;
                x -= self.tree[next];
            }
            step >>= 1;
        }
        pos.min(n - 1)
    }
}

const FENWICK_REBUILD: usize = 1 << 16;

/// Graph-normalized PageRank scores maintained under leaf insertions.
#[derive(Debug, Clone)]
pub struct IncrementalPageRank {
    pub c: f64,
    pub scores: Vec<f64>,
    weights: Fenwick,
    since_rebuild: usize,
}

impl IncrementalPageRank {
    pub fn new(c: f64) -> Self {
        let mut weights = Fenwick::with_capacity(16);
        // root: R = 1 - c, selection weight R / (1 - c)
        weights.push(1.0);
        Self {
            c,
            scores: vec![1.0 - c],
            weights,
            since_rebuild: 0,
        }
    }

    /// Selection weight: `R_v`, except the root which also absorbs the
    /// explorations that overshoot it, `R_root / (1 - c)`.
    fn weight(&self, v: usize) -> f64 {
        if v == 0 {
            self.scores[0] / (1.0 - self.c)
        } else {
            self.scores[v]
        }
    }

    /// Selection probabilities; they sum to 1.
    pub fn selection_probs(&self) -> Vec<f64> {
        let w: Vec<f64> = (0..self.scores.len()).map(|v| self.weight(v)).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }

    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let x = rng.random::<f64>() * self.weights.total();
        self.weights.find(x)
    }

    /// Inserts a leaf under `u`: ancestors at distance `d` from `u` gain
    /// `(1-c) c^{d+1}`.
    pub fn attach(&mut self, tree: &TreeState, u: usize) {
        let c = self.c;
        let mut gain = (1.0 - c) * c;
        let mut a = u;
        loop {
            self.scores[a] += gain;
            let w = if a == 0 { gain / (1.0 - c) } else { gain };
            self.weights.add(a, w);
            if a == 0 {
                break;
            }
            a = tree.parent[a] as usize;
            gain *= c;
        }
        self.scores.push(1.0 - c);
        self.weights.push(1.0 - c);
        self.since_rebuild += 1;
        if self.since_rebuild >= FENWICK_REBUILD {
            let w: Vec<f64> = (0..self.scores.len()).map(|v| self.weight(v)).collect();
            self.weights = Fenwick::from_weights(&w);
            self.since_rebuild = 0;
        }
    }
}

/// Grows `n` vertices, each new vertex choosing its parent with probability
/// proportional to its PageRank selection weight.
pub fn grow_pagerank_attachment<R: Rng + ?Sized>(c: f64, n: usize, rng: &mut R) -> TreeState {
    grow_pagerank_with(c, n, rng, |_, _| {})
}

/// As [`grow_pagerank_attachment`], calling `inspect` after every arrival.
pub fn grow_pagerank_with<R: Rng + ?Sized>(
    c: f64,
    n: usize,
    rng: &mut R,
    mut inspect: impl FnMut(&TreeState, &IncrementalPageRank),
) -> TreeState {
    let mut tree = TreeState::singleton();
    let mut pr = IncrementalPageRank::new(c);
    inspect(&tree, &pr);
    while tree.n() < n {
        let u = pr.select(rng);
        pr.attach(&tree, u);
        tree.push(u);
        inspect(&tree, &pr);
    }
    tree
}

/// Rightmost particle of the branching random walk: each particle gives
/// birth at rate 1 to a child displaced by `1 - Z`. Returns `(time, max)` at
/// every change of the maximum, starting from `(0, 0)`.
pub fn simulate_brw<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    d: &StepDistribution,
    horizon: f64,
    cap: f64,
    attach: &mut R1,
    clock: &mut R2,
) -> Result<Vec<(f64, i64)>, GrowthError> {
    check_horizon(horizon, cap)?;
    let sampler = d.sampler();
    let mut pos: Vec<i64> = vec![0];
    let mut best = 0;
    let mut trace = vec![(0.0, 0)];
    let mut now = 0.0;
    loop {
        let e: f64 = Exp1.sample(clock);
        now += e / pos.len() as f64;
        if now > horizon {
            break;
        }
        let u = attach.random_range(0..pos.len());
        let x = pos[u] + 1 - sampler.sample(attach) as i64;
        pos.push(x);
        if x > best {
            best = x;
            trace.push((now, x));
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sandwich {
    pub killed_height: u32,
    pub brw_max: i64,
    pub full_height: u32,
}

/// Couples the killed tree, the branching random walk and the full tree on
/// one Yule genealogy. A child of particle `u` with step `Z` sits at
/// `x_u + 1 - Z` in the walk, at depth `max(r_u - Z, 0) + 1` in the full
/// tree, and at depth `x_u + 1 - Z` in the killed tree while its whole line
/// stays positive. Hence `killed <= brw <= full` at every time.
pub fn coupled_sandwich<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    d: &StepDistribution,
    horizons: &[f64],
    cap: f64,
    attach: &mut R1,
    clock: &mut R2,
) -> Result<Vec<Sandwich>, GrowthError> {
    let last = horizons.iter().copied().fold(0.0, f64::max);
    check_horizon(last, cap)?;
    let sampler = d.sampler();
    let mut x: Vec<i64> = vec![0];
    let mut r: Vec<u32> = vec![0];
    let mut alive: Vec<bool> = vec![true];
    let mut cur = Sandwich {
        killed_height: 0,
        brw_max: 0,
        full_height: 0,
    };
    let mut order: Vec<usize> = (0..horizons.len()).collect();
    order.sort_by(|&a, &b| horizons[a].total_cmp(&horizons[b]));
    let mut out = vec![cur; horizons.len()];
    let mut next = 0;
    let mut now = 0.0;
    while next < order.len() {
        let e: f64 = Exp1.sample(clock);
        now += e / x.len() as f64;
        while next < order.len() && now > horizons[order[next]] {
            out[order[next]] = cur;
            next += 1;
        }
        if next == order.len() {
            break;
        }
        let u = attach.random_range(0..x.len());
        let z = sampler.sample(attach);
        let cx = x[u] + 1 - z as i64;
        let cr = (r[u] as i64 - z as i64).max(0) as u32 + 1;
        let ca = alive[u] && cx >= 1;
        x.push(cx);
        r.push(cr);
        alive.push(ca);
        cur.brw_max = cur.brw_max.max(cx);
        cur.full_height = cur.full_height.max(cr);
        if ca {
            cur.killed_height = cur.killed_height.max(cx as u32);
        }
    }
    Ok(out)
}
