//! Diversity-aware selection by farthest point sampling (FPS), including the
//! multi-split variant that grows train/val/test sets from a shared pool.
//!
//! All distances are squared Euclidean in `f64`, which orders points exactly
//! as Euclidean distance does. Every tie breaks to the lowest row index.

use std::cmp::Ordering;
use std::collections::HashSet;

use rayon::prelude::*;

use crate::error::SamplerError;

/// Rows below this count are scanned serially under [`Parallelism::Auto`].
const PARALLEL_THRESHOLD: usize = 4096;

/// Unit-normalized embedding rows keyed by image id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn sq_dist(&self, i: usize, j: usize) -> f64 {
        sq_dist(self.row(i), self.row(j))
    }

    fn dot(&self, i: usize, j: usize) -> f64 {
        self.row(i).iter().zip(self.row(j)).map(|(a, b)| a * b).sum()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Divide every row by its Euclidean norm.
pub fn normalize_embeddings(ids: Vec<String>, dim: usize, raw: &[f64]) -> Result<EmbeddingMatrix, SamplerError> {
    if dim == 0 {
        return Err(SamplerError::Shape("dimension must be positive".into()));
    }
    if raw.len() != ids.len() * dim {
        return Err(SamplerError::Shape(format!("{} values for {} rows of dimension {dim}", raw.len(), ids.len())));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(SamplerError::Shape(format!("duplicate id {dup}")));
    }
    let mut data = Vec::with_capacity(raw.len());
    for (r, row) in raw.chunks_exact(dim).enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(SamplerError::ZeroVectorRow(r));
        }
        data.extend(row.iter().map(|v| v / norm));
    }
    Ok(EmbeddingMatrix { ids, dim, data })
}

/// Convenience for rows given as vectors; ids are the row indices.
pub fn normalize_rows(rows: &[Vec<f64>]) -> Result<EmbeddingMatrix, SamplerError> {
    let dim = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != dim) {
        return Err(SamplerError::Shape("ragged rows".into()));
    }
    let ids = (0..rows.len()).map(|i| i.to_string()).collect();
    normalize_embeddings(ids, dim, &rows.concat())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Serial,
    Parallel,
    /// Parallel once the pool is large enough to benefit.
    #[default]
    Auto,
}

impl Parallelism {
    fn enabled(self, n: usize) -> bool {
        match self {
            Parallelism::Serial => false,
            Parallelism::Parallel => true,
            Parallelism::Auto => n >= PARALLEL_THRESHOLD,
        }
    }
}

/// `(value, index)` ordering for argmax: larger value wins, then lower index.
fn better(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    match a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal) {
        Ordering::Greater => a,
        Ordering::Less => b,
        Ordering::Equal => {
            if a.1 <= b.1 {
                a
            } else {
                b
            }
        }
    }
}

/// Index of the largest `score[i]` among `available` rows, lowest index on ties.
fn argmax(score: &[f64], available: &[bool], par: bool) -> Option<usize> {
    let pick = |i: usize| available[i].then_some((score[i], i));
    let best = if par {
        (0..score.len()).into_par_iter().filter_map(pick).reduce_with(better)
    } else {
        (0..score.len()).filter_map(pick).reduce(better)
    };
    best.map(|(_, i)| i)
}

fn centroid(emb: &EmbeddingMatrix) -> Vec<f64> {
    let mut c = vec![0.0; emb.dim];
    for i in 0..emb.len() {
        for (acc, v) in c.iter_mut().zip(emb.row(i)) {
            *acc += v;
        }
    }
    let n = emb.len() as f64;
    c.iter_mut().for_each(|v| *v /= n);
    c
}

fn check_k(emb: &EmbeddingMatrix, k: usize) -> Result<(), SamplerError> {
    if k == 0 || k > emb.len() {
        return Err(SamplerError::InvalidK { k, n: emb.len() });
    }
    Ok(())
}

/// Greedy maximin selection of `k` rows. The first pick is the row farthest
/// from the centroid.
pub fn fps_select(emb: &EmbeddingMatrix, k: usize) -> Result<Vec<usize>, SamplerError> {
    fps_select_with(emb, k, Parallelism::Auto)
}

pub fn fps_select_with(emb: &EmbeddingMatrix, k: usize, parallelism: Parallelism) -> Result<Vec<usize>, SamplerError> {
    check_k(emb, k)?;
    let n = emb.len();
    let par = parallelism.enabled(n);
    let mut available = vec![true; n];
    let c = centroid(emb);
    let from_centroid: Vec<f64> = (0..n).map(|i| sq_dist(emb.row(i), &c)).collect();
    let first = argmax(&from_centroid, &available, par).expect("k >= 1 implies n >= 1");

    let mut order = Vec::with_capacity(k);
    let mut min_d = vec![f64::INFINITY; n];
    let mut next = first;
    loop {
        order.push(next);
        available[next] = false;
        if order.len() == k {
            return Ok(order);
        }
        update_min(emb, next, &mut min_d, par);
        next = argmax(&min_d, &available, par).expect("k <= n leaves a candidate");
    }
}

fn update_min(emb: &EmbeddingMatrix, member: usize, min_d: &mut [f64], par: bool) {
    let f = |(i, d): (usize, &mut f64)| {
        let nd = emb.sq_dist(i, member);
        if nd < *d {
            *d = nd;
        }
    };
    if par {
        min_d.par_iter_mut().enumerate().for_each(f);
    } else {
        min_d.iter_mut().enumerate().for_each(f);
    }
}

/// Same selection computed through cosine similarity (`|a-b|² = 2 - 2 a·b`
/// for unit rows): each pick minimizes its maximum similarity to the chosen set.
pub fn fps_select_cosine(emb: &EmbeddingMatrix, k: usize) -> Result<Vec<usize>, SamplerError> {
    check_k(emb, k)?;
    let n = emb.len();
    let c = centroid(emb);
    let mut available = vec![true; n];
    // Negated similarities so the shared argmax applies.
    let neg_c: Vec<f64> = (0..n).map(|i| -emb.row(i).iter().zip(&c).map(|(a, b)| a * b).sum::<f64>()).collect();
    let mut next = argmax(&neg_c, &available, false).expect("n >= 1");
    let mut neg_max_sim = vec![f64::INFINITY; n];
    let mut order = Vec::with_capacity(k);
    loop {
        order.push(next);
        available[next] = false;
        if order.len() == k {
            return Ok(order);
        }
        for (i, s) in neg_max_sim.iter_mut().enumerate() {
            *s = s.min(-emb.dot(i, next));
        }
        next = argmax(&neg_max_sim, &available, false).expect("candidate remains");
    }
}

/// Named splits with ratios and the integer sizes derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub names: Vec<String>,
    pub ratios: Vec<f64>,
    pub total: usize,
    pub sizes: Vec<usize>,
}

impl SplitPlan {
    /// Sizes by largest-remainder rounding of `ratio * total`; leftover units
    /// go to the largest fractional parts, earlier splits first on ties.
    pub fn new(names: Vec<String>, ratios: Vec<f64>, total: usize) -> Result<Self, SamplerError> {
        let bad = |m: String| Err(SamplerError::InvalidPlan(m));
        if names.is_empty() || names.len() != ratios.len() {
            return bad("need one ratio per split".into());
        }
        let mut seen = HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return bad(format!("duplicate split name {dup}"));
        }
        if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return bad("ratios must be positive".into());
        }
        let sum: f64 = ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return bad(format!("ratios sum to {sum}, expected 1"));
        }
        let quotas: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
        let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut left = total.saturating_sub(sizes.iter().sum());
        let mut order: Vec<usize> = (0..ratios.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.partial_cmp(&fa).unwrap_or(Ordering::Equal).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            sizes[i] += 1;
            left -= 1;
        }
        Ok(Self { names, ratios, total, sizes })
    }

    /// Parse `train:0.6,val:0.2,test:0.2`.
    pub fn parse(spec: &str, total: usize) -> Result<Self, SamplerError> {
        let mut names = Vec::new();
        let mut ratios = Vec::new();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, ratio) = part
                .split_once(':')
                .ok_or_else(|| SamplerError::InvalidPlan(format!("expected name:ratio, got '{part}'")))?;
            let ratio: f64 =
                ratio.trim().parse().map_err(|_| SamplerError::InvalidPlan(format!("bad ratio in '{part}'")))?;
            names.push(name.trim().to_string());
            ratios.push(ratio);
        }
        Self::new(names, ratios, total)
    }
}

/// One pick made by [`multi_split_assign`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionStep {
    pub split: usize,
    pub index: usize,
    pub seed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub names: Vec<String>,
    /// Row indices per split, in selection order.
    pub members: Vec<Vec<usize>>,
    /// Every pick in global order.
    pub steps: Vec<SelectionStep>,
}

impl SplitAssignment {
    pub fn ids<'a>(&self, emb: &'a EmbeddingMatrix) -> Vec<Vec<&'a str>> {
        self.members.iter().map(|m| m.iter().map(|&i| emb.ids[i].as_str()).collect()).collect()
    }
}

/// Smooth weighted round-robin over splits: each turn every unfinished split
/// earns its size in credit, the richest (lowest index on ties) takes the
/// turn and pays the sum of unfinished sizes. With sizes 4500/1500/1500 this
/// cycles train, val, train, test, train.
#[derive(Debug, Clone)]
pub struct TurnSchedule {
    weights: Vec<i64>,
    remaining: Vec<usize>,
    credit: Vec<i64>,
}

impl TurnSchedule {
    pub fn new(sizes: &[usize], already: &[usize]) -> Self {
        Self {
            weights: sizes.iter().map(|&s| s as i64).collect(),
            remaining: sizes.iter().zip(already).map(|(s, a)| s.saturating_sub(*a)).collect(),
            credit: vec![0; sizes.len()],
        }
    }
}

impl Iterator for TurnSchedule {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        let open: Vec<usize> = (0..self.weights.len()).filter(|&s| self.remaining[s] > 0).collect();
        if open.is_empty() {
            return None;
        }
        let mut best = open[0];
        let mut total = 0;
        for &s in &open {
            self.credit[s] += self.weights[s];
            total += self.weights[s];
        }
        for &s in &open {
            if self.credit[s] > self.credit[best] {
                best = s;
            }
        }
        self.credit[best] -= total;
        self.remaining[best] -= 1;
        Some(best)
    }
}

/// Grow disjoint, internally diverse splits from a shared pool.
///
/// One FPS seed per nonempty split, handed out in descending ratio order.
/// Afterwards the [`TurnSchedule`] decides which split picks next, and that
/// split takes the pool row farthest from its own members.
pub fn multi_split_assign(emb: &EmbeddingMatrix, plan: &SplitPlan) -> Result<SplitAssignment, SamplerError> {
    multi_split_assign_with(emb, plan, Parallelism::Auto)
}

pub fn multi_split_assign_with(
    emb: &EmbeddingMatrix,
    plan: &SplitPlan,
    parallelism: Parallelism,
) -> Result<SplitAssignment, SamplerError> {
    let n = emb.len();
    if plan.total > n {
        return Err(SamplerError::InvalidPlan(format!("total {} exceeds pool of {n}", plan.total)));
    }
    let s_count = plan.names.len();
    let par = parallelism.enabled(n);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); s_count];
    let mut steps = Vec::with_capacity(plan.total);
    if plan.total == 0 {
        return Ok(SplitAssignment { names: plan.names.clone(), members, steps });
    }

    let mut by_ratio: Vec<usize> = (0..s_count).filter(|&s| plan.sizes[s] > 0).collect();
    by_ratio.sort_by(|&a, &b| plan.ratios[b].partial_cmp(&plan.ratios[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let seeds = fps_select_with(emb, by_ratio.len(), parallelism)?;

    let mut available = vec![true; n];
    let mut min_d: Vec<Vec<f64>> = vec![Vec::new(); s_count];
    for (&split, &seed) in by_ratio.iter().zip(&seeds) {
        available[seed] = false;
        members[split].push(seed);
        steps.push(SelectionStep { split, index: seed, seed: true });
        let mut d = vec![f64::INFINITY; n];
        update_min(emb, seed, &mut d, par);
        min_d[split] = d;
    }

    let counts: Vec<usize> = members.iter().map(Vec::len).collect();
    for split in TurnSchedule::new(&plan.sizes, &counts) {
        let pick = argmax(&min_d[split], &available, par).expect("total <= n leaves a candidate");
        available[pick] = false;
        members[split].push(pick);
        steps.push(SelectionStep { split, index: pick, seed: false });
        update_min(emb, pick, &mut min_d[split], par);
    }
    Ok(SplitAssignment { names: plan.names.clone(), members, steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(angles_deg: &[f64]) -> EmbeddingMatrix {
        let rows: Vec<Vec<f64>> = angles_deg
            .iter()
            .map(|a| {
                let r = a.to_radians();
                vec![r.cos(), r.sin()]
            })
            .collect();
        normalize_rows(&rows).unwrap()
    }

    #[test]
    fn normalization() {
        let m = normalize_rows(&[vec![3.0, 4.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(m.row(0), &[0.6, 0.8]);
        assert_eq!(m.row(1), &[1.0, 0.0]);
        assert_eq!(normalize_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]), Err(SamplerError::ZeroVectorRow(1)));
    }

    #[test]
    fn three_point_circle() {
        // Centroid sits near 5°, so the 180° point is farthest from it and
        // its farthest neighbour is 0° (distance 2 vs 1.99 for 10°).
        let m = circle(&[0.0, 10.0, 180.0]);
        assert_eq!(fps_select(&m, 1).unwrap(), vec![2]);
        assert_eq!(fps_select(&m, 2).unwrap(), vec![2, 0]);
        assert_eq!(fps_select(&m, 3).unwrap(), vec![2, 0, 1]);
    }

    #[test]
    fn invalid_k() {
        let m = circle(&[0.0, 90.0]);
        assert_eq!(fps_select(&m, 0), Err(SamplerError::InvalidK { k: 0, n: 2 }));
        assert_eq!(fps_select(&m, 3), Err(SamplerError::InvalidK { k: 3, n: 2 }));
    }

    #[test]
    fn exhaustive_selection_is_permutation() {
        let m = circle(&[0.0, 33.0, 71.0, 140.0, 200.0, 310.0]);
        let mut order = fps_select(&m, 6).unwrap();
        order.sort();
        assert_eq!(order, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn ties_break_low() {
        // Exact square: every point is at distance 1 from the zero centroid.
        let m = normalize_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        assert_eq!(fps_select(&m, 4).unwrap(), vec![0, 2, 1, 3]);
    }

    #[test]
    fn paper_split_sizes() {
        let p = SplitPlan::parse("train:0.6,val:0.2,test:0.2", 7500).unwrap();
        assert_eq!(p.sizes, vec![4500, 1500, 1500]);
        let p = SplitPlan::parse("a:0.5,b:0.25,c:0.25", 7).unwrap();
        assert_eq!(p.sizes.iter().sum::<usize>(), 7);
        // Quotas 3.5/1.75/1.75: the two .75 remainders win the leftover units.
        assert_eq!(p.sizes, vec![3, 2, 2]);
    }

    #[test]
    fn invalid_plans() {
        assert!(SplitPlan::parse("a:0.5,b:0.6", 10).is_err());
        assert!(SplitPlan::parse("a:1.0,b:0", 10).is_err());
        assert!(SplitPlan::parse("a", 10).is_err());
        let m = circle(&[0.0, 90.0]);
        let p = SplitPlan::parse("a:1", 3).unwrap();
        assert!(matches!(multi_split_assign(&m, &p), Err(SamplerError::InvalidPlan(_))));
    }

    #[test]
    fn schedule_pattern() {
        let turns: Vec<usize> = TurnSchedule::new(&[3, 1, 1], &[0, 0, 0]).collect();
        assert_eq!(turns, vec![0, 1, 0, 2, 0]);
        let turns: Vec<usize> = TurnSchedule::new(&[4500, 1500, 1500], &[1, 1, 1]).collect();
        assert_eq!(turns.len(), 7497);
        assert_eq!(&turns[..10], &[0, 1, 0, 2, 0, 0, 1, 0, 2, 0]);
    }

    #[test]
    fn three_seeds_fill_three_splits() {
        let m = circle(&[0.0, 120.0, 240.0]);
        let p = SplitPlan::parse("a:0.34,b:0.33,c:0.33", 3).unwrap();
        let a = multi_split_assign(&m, &p).unwrap();
        assert!(a.members.iter().all(|s| s.len() == 1));
        assert!(a.steps.iter().all(|s| s.seed));
    }

    #[test]
    fn octagon_halves() {
        let m = circle(&[0.0, 45.0, 90.0, 135.0, 180.0, 225.0, 270.0, 315.0]);
        let p = SplitPlan::parse("a:0.5,b:0.5", 8).unwrap();
        let a = multi_split_assign(&m, &p).unwrap();
        let mut all: Vec<usize> = a.members.concat();
        all.sort();
        assert_eq!(all, (0..8).collect::<Vec<_>>());
        // The two seeds are antipodal, so they sit in different splits even
        // though both belong to the same 90°-spaced square. The only 4-subsets
        // with all gaps >= 90° are the two squares, so each split ends up with
        // a 45° pair.
        let seeds: Vec<usize> = a.steps.iter().filter(|s| s.seed).map(|s| s.index).collect();
        assert_eq!((seeds[0] + 4) % 8, seeds[1]);
        let step45 = 2.0 * 22.5f64.to_radians().sin();
        for split in &a.members {
            assert_eq!(split.len(), 4);
            let mut closest = f64::INFINITY;
            for (x, &i) in split.iter().enumerate() {
                for &j in &split[x + 1..] {
                    closest = closest.min(m.sq_dist(i, j).sqrt());
                }
            }
            assert!((closest - step45).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicate_pair_is_picked_last() {
        let m = circle(&[0.0, 60.0, 120.0, 180.0, 240.0, 300.0, 60.0]);
        let order = fps_select(&m, 6).unwrap();
        assert!(!(order.contains(&1) && order.contains(&6)));
    }
}
