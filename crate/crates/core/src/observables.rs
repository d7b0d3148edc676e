//! Read-only statistics of grown trees.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::growth::TreeState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("sample is degenerate: {0}")]
    DegenerateSample(String),
    #[error("tree has no birth times")]
    MissingBirthTimes,
}

/// Number of children of each vertex.
pub fn child_counts(tree: &TreeState) -> Vec<u32> {
    let mut k = vec![0u32; tree.n()];
    for &p in &tree.parent[1..] {
        k[p as usize] += 1;
    }
    k
}

/// Graph degree: children plus the edge to the parent.
pub fn degrees(tree: &TreeState) -> Vec<u32> {
    let mut d = child_counts(tree);
    d.iter_mut().skip(1).for_each(|x| *x += 1);
    d
}

/// `counts[k]` = number of vertices of degree `k`.
pub fn degree_histogram(tree: &TreeState) -> Vec<u64> {
    let d = degrees(tree);
    let max = d.iter().copied().max().unwrap_or(0) as usize;
    let mut h = vec![0u64; max + 1];
    for x in d {
        h[x as usize] += 1;
    }
    h
}

pub fn root_degree(tree: &TreeState) -> u64 {
    tree.parent[1..].iter().filter(|&&p| p == 0).count() as u64
}

pub fn height(tree: &TreeState) -> u32 {
    tree.depth.iter().copied().max().unwrap_or(0)
}

/// `counts[i]` = number of vertices at depth `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileVector {
    pub counts: Vec<u64>,
}

pub fn depth_profile(tree: &TreeState) -> ProfileVector {
    let mut counts = vec![0u64; height(tree) as usize + 1];
    for &d in &tree.depth {
        counts[d as usize] += 1;
    }
    ProfileVector { counts }
}

/// `sum_{i >= 1} s^{-i} counts[i]`.
pub fn weighted_profile(tree: &TreeState, s: f64) -> f64 {
    let p = depth_profile(tree);
    let terms: Vec<f64> = p
        .counts
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &c)| c as f64 * s.powi(-(i as i32)))
        .collect();
    crate::stats::pairwise_sum(&terms)
}

/// Graph-normalized PageRank `R_v = (1-c)(1 + sum_l c^l P_l(v))`, where
/// `P_l(v)` counts descendants at distance `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageRankVector {
    pub c: f64,
    pub scores: Vec<f64>,
}

impl PageRankVector {
    /// `sum_{v != root} R_v + R_root / (1 - c)`; equals `n` because the root
    /// keeps the mass of walks that would leave it.
    pub fn stationary_total(&self) -> f64 {
        let rest = crate::stats::pairwise_sum(&self.scores[1..]);
        rest + self.scores[0] / (1.0 - self.c)
    }
}

/// One pass in reverse arrival order: `R_v = (1-c) + c sum_{children} R_u`.
pub fn pagerank_scores(tree: &TreeState, c: f64) -> PageRankVector {
    let n = tree.n();
    let mut acc = vec![0.0; n];
    let mut scores = vec![0.0; n];
    for v in (0..n).rev() {
        scores[v] = (1.0 - c) + c * acc[v];
        if v > 0 {
            acc[tree.parent[v] as usize] += scores[v];
        }
    }
    PageRankVector { c, scores }
}

/// Direct path counting up to distance `l_max`.
pub fn pagerank_bruteforce(tree: &TreeState, c: f64, l_max: usize) -> PageRankVector {
    let n = tree.n();
    let mut paths = vec![vec![0u64; l_max + 1]; n];
    for u in 0..n {
        let mut a = u;
        let mut l = 0;
        loop {
            if l <= l_max {
                paths[a][l] += 1;
            }
            if a == 0 {
                break;
            }
            a = tree.parent[a] as usize;
            l += 1;
        }
    }
    let scores = paths
        .iter()
        .map(|p| {
            let s: f64 = p
                .iter()
                .enumerate()
                .map(|(l, &k)| c.powi(l as i32) * k as f64)
                .sum();
            (1.0 - c) * s
        })
        .collect();
    PageRankVector { c, scores }
}

pub fn children_lists(tree: &TreeState) -> Vec<Vec<u32>> {
    let mut ch = vec![Vec::new(); tree.n()];
    for (v, &p) in tree.parent.iter().enumerate().skip(1) {
        ch[p as usize].push(v as u32);
    }
    ch
}

pub fn subtree_sizes(tree: &TreeState) -> Vec<u64> {
    let mut size = vec![1u64; tree.n()];
    for v in (1..tree.n()).rev() {
        size[tree.parent[v] as usize] += size[v];
    }
    size
}

/// Canonical code of a rooted tree given its children's codes.
fn ahu(mut child_codes: Vec<&str>) -> String {
    child_codes.sort_unstable();
    let mut s = String::with_capacity(2 + child_codes.iter().map(|c| c.len()).sum::<usize>());
    s.push('(');
    for c in child_codes {
        s.push_str(c);
    }
    s.push(')');
    s
}

/// Canonical code of the subtree rooted at 0.
pub fn canonical_code(tree: &TreeState) -> String {
    let ch = children_lists(tree);
    let mut codes: Vec<String> = vec![String::new(); tree.n()];
    for v in (0..tree.n()).rev() {
        let c = ahu(ch[v].iter().map(|&u| codes[u as usize].as_str()).collect());
        codes[v] = c;
    }
    std::mem::take(&mut codes[0])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FringeHistogram {
    pub max_size: usize,
    /// Fringe subtree code to number of vertices.
    pub counts: BTreeMap<String, u64>,
    /// Vertices whose fringe exceeds `max_size`.
    pub overflow: u64,
    pub extended_k: usize,
    /// `(f_0, ..., f_k)` codes to number of vertices; only vertices at depth
    /// at least `k` whose components all fit within `max_size`.
    pub extended: BTreeMap<Vec<String>, u64>,
    pub extended_overflow: u64,
}

impl FringeHistogram {
    pub fn total(&self) -> u64 {
        self.counts.values().sum::<u64>() + self.overflow
    }

    /// Empirical proportions over all vertices.
    pub fn proportions(&self) -> BTreeMap<String, f64> {
        let n = self.total() as f64;
        self.counts
            .iter()
            .map(|(k, &v)| (k.clone(), v as f64 / n))
            .collect()
    }
}

/// Fringe subtree of every vertex, canonicalized. With `extended_k > 0` also
/// records the decomposition along the path to the `k`-th ancestor: `f_i` is
/// the subtree of the `i`-th ancestor with the branch towards `v` removed.
pub fn fringe_histogram(tree: &TreeState, max_size: usize, extended_k: usize) -> FringeHistogram {
    let n = tree.n();
    let size = subtree_sizes(tree);
    let ch = children_lists(tree);
    let mut codes: Vec<Option<String>> = vec![None; n];
    let mut counts = BTreeMap::new();
    let mut overflow = 0;
    for v in (0..n).rev() {
        if size[v] as usize <= max_size {
            let c = ahu(ch[v]
                .iter()
                .map(|&u| codes[u as usize].as_deref().unwrap())
                .collect());
            *counts.entry(c.clone()).or_insert(0) += 1;
            codes[v] = Some(c);
        } else {
            overflow += 1;
        }
    }
    let mut extended = BTreeMap::new();
    let mut extended_overflow = 0;
    if extended_k > 0 {
        for v in 0..n {
            if (tree.depth[v] as usize) < extended_k {
                continue;
            }
            let Some(f0) = &codes[v] else {
                extended_overflow += 1;
                continue;
            };
            let mut key = vec![f0.clone()];
            let (mut below, mut a) = (v, tree.parent[v] as usize);
            for _ in 0..extended_k {
                if (size[a] - size[below]) as usize > max_size {
                    break;
                }
                let rest = ch[a]
                    .iter()
                    .filter(|&&u| u as usize != below)
                    .map(|&u| codes[u as usize].as_deref().unwrap())
                    .collect();
                key.push(ahu(rest));
                below = a;
                a = tree.parent[a] as usize;
            }
            if key.len() == extended_k + 1 {
                *extended.entry(key).or_insert(0) += 1;
            } else {
                extended_overflow += 1;
            }
        }
    }
    FringeHistogram {
        max_size,
        counts,
        overflow,
        extended_k,
        extended,
        extended_overflow,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailMethod {
    Hill,
    LogLogLs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFitResult {
    pub estimate: f64,
    pub stderr: f64,
    pub method: TailMethod,
    /// Order-statistic count for Hill, threshold for the log-log fit.
    pub threshold: f64,
    /// Hill estimates at `m/2`, `m`, `2m`.
    pub sweep: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TailParams {
    /// Top `m` order statistics; `None` means `floor(n^{2/3})`.
    Hill { m: Option<usize> },
    /// Least squares on the log CCDF above `k_min`.
    LogLogLs { k_min: f64 },
}

fn hill(sorted_desc: &[f64], m: usize) -> Option<f64> {
    let m = m.min(sorted_desc.len() - 1);
    if m == 0 {
        return None;
    }
    let xm = sorted_desc[m];
    let logs: Vec<f64> = sorted_desc[..m].iter().map(|x| (x / xm).ln()).collect();
    let s = crate::stats::pairwise_sum(&logs);
    (s > 0.0).then(|| m as f64 / s)
}

/// Tail exponent `alpha` of `P(X >= x) ~ x^{-alpha}`.
pub fn tail_exponent(samples: &[f64], params: TailParams) -> Result<TailFitResult, ObservableError> {
    if samples.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(ObservableError::DegenerateSample(
            "samples must be positive and finite".into(),
        ));
    }
    let mut x = samples.to_vec();
    x.sort_by(|a, b| b.total_cmp(a));
    if x.len() < 2 || x[0] == x[x.len() - 1] {
        return Err(ObservableError::DegenerateSample("all values equal".into()));
    }
    match params {
        TailParams::Hill { m } => {
            let m = m.unwrap_or((x.len() as f64).powf(2.0 / 3.0) as usize).max(1);
            let degenerate = || ObservableError::DegenerateSample(format!("top {m} values are tied"));
            let estimate = hill(&x, m).ok_or_else(degenerate)?;
            let sweep = [m / 2, m, 2 * m]
                .into_iter()
                .filter(|&k| k >= 1)
                .filter_map(|k| hill(&x, k).map(|a| (k.min(x.len() - 1), a)))
                .collect();
            Ok(TailFitResult {
                estimate,
                stderr: estimate / (m as f64).sqrt(),
                method: TailMethod::Hill,
                threshold: m as f64,
                sweep,
            })
        }
        TailParams::LogLogLs { k_min } => {
            x.reverse();
            let n = x.len() as f64;
            let mut pts = Vec::new();
            let mut i = 0;
            while i < x.len() {
                let v = x[i];
                if v >= k_min {
                    pts.push((v.ln(), ((x.len() - i) as f64 / n).ln()));
                }
                while i < x.len() && x[i] == v {
                    i += 1;
                }
            }
            if pts.len() < 3 {
                return Err(ObservableError::DegenerateSample(format!(
                    "fewer than 3 distinct values above {k_min}"
                )));
            }
            let k = pts.len() as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let slope = sxy / sxx;
            let rss: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
            let stderr = (rss / (k - 2.0) / sxx).sqrt().max(f64::MIN_POSITIVE);
            Ok(TailFitResult {
                estimate: -slope,
                stderr,
                method: TailMethod::LogLogLs,
                threshold: k_min,
                sweep: Vec::new(),
            })
        }
    }
}

/// `n e^{-T}` with `T` the last birth time.
pub fn martingale_w(tree: &TreeState) -> Result<f64, ObservableError> {
    let b = tree
        .birth_time
        .as_ref()
        .ok_or(ObservableError::MissingBirthTimes)?;
    let t = b.last().copied().unwrap_or(0.0);
    Ok(tree.n() as f64 * (-t).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::ROOT_PARENT;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tree(parents: &[u32]) -> TreeState {
        TreeState::from_parents(parents.to_vec()).unwrap()
    }

    fn path3() -> TreeState {
        tree(&[ROOT_PARENT, 0, 1])
    }

    fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> TreeState {
        let mut p = vec![ROOT_PARENT];
        for i in 1..n {
            p.push(rng.random_range(0..i) as u32);
        }
        tree(&p)
    }

    #[test]
    fn path_and_star() {
        let t = path3();
        assert_eq!(degrees(&t), vec![1, 2, 1]);
        assert_eq!(height(&t), 2);
        assert_eq!(depth_profile(&t).counts, vec![1, 1, 1]);
        let star = tree(&[ROOT_PARENT, 0, 0, 0, 0]);
        assert_eq!(root_degree(&star), 4);
        assert_eq!(degree_histogram(&star), vec![0, 4, 0, 0, 1]);
    }

    #[test]
    fn pagerank_examples() {
        let s = pagerank_scores(&TreeState::singleton(), 0.3);
        assert_eq!(s.scores, vec![0.7]);
        let s = pagerank_scores(&path3(), 0.5);
        assert_eq!(s.scores, vec![0.875, 0.75, 0.5]);
        assert!((s.stationary_total() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn pagerank_matches_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let n = rng.random_range(1..=50);
            let t = random_tree(&mut rng, n);
            let c = rng.random_range(0.05..0.95);
            let a = pagerank_scores(&t, c);
            let b = pagerank_bruteforce(&t, c, height(&t) as usize);
            for (x, y) in a.scores.iter().zip(&b.scores) {
                assert!((x - y).abs() <= 1e-12);
            }
            assert!(a.scores.iter().all(|&x| x >= 1.0 - c - 1e-15));
            assert!((a.stationary_total() / n as f64 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn weighted_profile_examples() {
        assert!((weighted_profile(&path3(), 2.0) - 0.75).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_tree(&mut rng, 300);
        assert_eq!(weighted_profile(&t, 1.0) + 1.0, 300.0);
    }

    #[test]
    fn fringe_examples() {
        let star = tree(&[ROOT_PARENT, 0, 0, 0]);
        let h = fringe_histogram(&star, 12, 0);
        assert_eq!(h.counts.get("()"), Some(&3));
        assert_eq!(h.counts.get("(()()())"), Some(&1));
        assert_eq!(h.total(), 4);
        let h = fringe_histogram(&star, 2, 0);
        assert_eq!(h.overflow, 1);
        assert_eq!(h.total(), 4);

        // path 0-1-2 plus leaf 3 on 0: vertex 2 sees (leaf, path-with-it-removed, ...)
        let t = tree(&[ROOT_PARENT, 0, 1, 0]);
        let h = fringe_histogram(&t, 12, 2);
        let key = vec!["()".to_string(), "()".to_string(), "(())".to_string()];
        assert_eq!(h.extended.get(&key), Some(&1));
        assert_eq!(h.extended.values().sum::<u64>() + h.extended_overflow, 1);
    }

    fn relabel(t: &TreeState, rng: &mut ChaCha8Rng) -> TreeState {
        // rebuild by BFS visiting children in shuffled order
        use rand::seq::SliceRandom;
        let ch = children_lists(t);
        let mut new_id = vec![0u32; t.n()];
        let mut parents = vec![ROOT_PARENT];
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(v) = queue.pop_front() {
            let mut kids = ch[v].clone();
            kids.shuffle(rng);
            for u in kids {
                new_id[u as usize] = parents.len() as u32;
                parents.push(new_id[v]);
                queue.push_back(u as usize);
            }
        }
        tree(&parents)
    }

    proptest! {
        #[test]
        fn ahu_invariant_under_relabeling(seed in 0u64..10_000, n in 1usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_tree(&mut rng, n);
            let u = relabel(&t, &mut rng);
            prop_assert_eq!(canonical_code(&t), canonical_code(&u));
            prop_assert_eq!(fringe_histogram(&t, 6, 0), fringe_histogram(&u, 6, 0));
        }

        #[test]
        fn observable_identities(seed in 0u64..10_000, n in 1usize..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_tree(&mut rng, n);
            let deg_sum: u64 = degrees(&t).iter().map(|&d| d as u64).sum();
            prop_assert_eq!(deg_sum, 2 * (n as u64 - 1));
            let p = depth_profile(&t);
            prop_assert_eq!(p.counts.iter().sum::<u64>(), n as u64);
            prop_assert_eq!(p.counts[0], 1);
            prop_assert_eq!(height(&t) as usize, p.counts.len() - 1);
            prop_assert_eq!(fringe_histogram(&t, usize::MAX, 0).counts.values().sum::<u64>(), n as u64);
        }
    }

    #[test]
    fn hill_on_pareto() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..1_000_000)
            .map(|_| (1.0 - rng.random::<f64>()).powf(-0.5))
            .collect();
        let fit = tail_exponent(&xs, TailParams::Hill { m: Some(10_000) }).unwrap();
        assert!((1.94..=2.06).contains(&fit.estimate), "{fit:?}");
        assert_eq!(fit.sweep.len(), 3);
        let ls = tail_exponent(&xs, TailParams::LogLogLs { k_min: 1.0 }).unwrap();
        assert!((ls.estimate - 2.0).abs() < 0.1, "{ls:?}");
        assert!(matches!(
            tail_exponent(&[3.0; 2000], TailParams::Hill { m: None }),
            Err(ObservableError::DegenerateSample(_))
        ));
    }

    #[test]
    fn martingale_examples() {
        let mut t = TreeState::singleton();
        assert_eq!(martingale_w(&t), Err(ObservableError::MissingBirthTimes));
        t.birth_time = Some(vec![0.0]);
        assert_eq!(martingale_w(&t), Ok(1.0));
    }
}
