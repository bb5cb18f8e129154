//! Haplotype samples from a constant-size coalescent with recombination.
//!
//! Time is measured in units of `2 N_e` generations, so a pair of lineages
//! coalesces at rate 1. A lineage recombines at rate `rho / 2` per unit of
//! ancestral span, with `rho = 4 N_e r R`, and mutations fall on the
//! branches of the completed graph at rate `theta / 2` per unit length with
//! `theta = 4 N_e mu R`. Positions are continuous on `[0, R)`, so every
//! mutation has its own site.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};

use crate::error::{ArgError, Result};
use crate::genetics::{Allele, Sequence, State};
use crate::rng::{derive_seed, substream};

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    /// Number of sampled sequences.
    pub n: usize,
    /// Region length in base pairs.
    pub region_bp: f64,
    pub ne: f64,
    /// Mutation rate per site per generation.
    pub mu: f64,
    /// Recombination rate per site per generation.
    pub rho: f64,
    pub seed: u64,
    /// Number of leading SNPs kept by [`simulate_snps`].
    pub l_keep: usize,
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(ArgError::Config(format!("sample size must be at least 2, got {}", self.n)));
        }
        if self.l_keep == 0 {
            return Err(ArgError::Config("must keep at least one SNP".into()));
        }
        for (name, v) in [("region_bp", self.region_bp), ("ne", self.ne)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ArgError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("mu", self.mu), ("rho", self.rho)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ArgError::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// Scaled mutation rate of the whole region.
    pub fn theta(&self) -> f64 {
        4.0 * self.ne * self.mu * self.region_bp
    }

    /// Scaled recombination rate of the whole region.
    pub fn scaled_rho(&self) -> f64 {
        4.0 * self.ne * self.rho * self.region_bp
    }

    pub fn to_metadata(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("n".into(), self.n.to_string());
        m.insert("region_bp".into(), self.region_bp.to_string());
        m.insert("ne".into(), self.ne.to_string());
        m.insert("mu".into(), self.mu.to_string());
        m.insert("rho".into(), self.rho.to_string());
        m.insert("seed".into(), self.seed.to_string());
        m.insert("l_keep".into(), self.l_keep.to_string());
        m.insert("theta".into(), self.theta().to_string());
        m.insert("scaled_rho".into(), self.scaled_rho().to_string());
        m
    }
}

/// A 0/1 matrix with one row per sampled sequence and one column per
/// segregating site, columns sorted by position.
#[derive(Debug, Clone, PartialEq)]
pub struct HaplotypeMatrix {
    n: usize,
    /// Column-major derived-allele indicators.
    columns: Vec<Vec<bool>>,
    positions: Vec<f64>,
}

impl HaplotypeMatrix {
    pub fn new(n: usize, columns: Vec<Vec<bool>>, positions: Vec<f64>) -> Result<HaplotypeMatrix> {
        if columns.len() != positions.len() {
            return Err(ArgError::DimensionMismatch {
                expected: columns.len(),
                found: positions.len(),
            });
        }
        if let Some(c) = columns.iter().find(|c| c.len() != n) {
            return Err(ArgError::DimensionMismatch {
                expected: n,
                found: c.len(),
            });
        }
        Ok(HaplotypeMatrix {
            n,
            columns,
            positions,
        })
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn sites(&self) -> usize {
        self.columns.len()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.columns[col][row]
    }

    pub fn column(&self, col: usize) -> &[bool] {
        &self.columns[col]
    }

    pub fn is_segregating(&self) -> bool {
        self.columns
            .iter()
            .all(|c| c.iter().any(|&b| b) && c.iter().any(|&b| !b))
    }

    /// Keeps the leftmost `l` columns.
    pub fn take_first_snps(&self, l: usize) -> Result<HaplotypeMatrix> {
        if self.sites() < l {
            return Err(ArgError::TooFewSites {
                available: self.sites(),
                requested: l,
            });
        }
        Ok(HaplotypeMatrix {
            n: self.n,
            columns: self.columns[..l].to_vec(),
            positions: self.positions[..l].to_vec(),
        })
    }

    /// The rows as sequences (at most 64 columns).
    pub fn sequences(&self) -> Result<Vec<Sequence>> {
        (0..self.n)
            .map(|r| {
                let alleles: Vec<Allele> = self
                    .columns
                    .iter()
                    .map(|c| if c[r] { Allele::One } else { Allele::Zero })
                    .collect();
                Sequence::new(&alleles)
            })
            .collect()
    }

    pub fn to_state(&self) -> Result<State> {
        State::from_sequences(self.sequences()?)
    }

    /// True when no pair of columns shows all of `01`, `10` and `11`.
    pub fn passes_four_gamete(&self) -> bool {
        for i in 0..self.sites() {
            for j in i + 1..self.sites() {
                let mut seen = [false; 4];
                for r in 0..self.n {
                    seen[(self.columns[i][r] as usize) << 1 | self.columns[j][r] as usize] = true;
                }
                if seen[1] && seen[2] && seen[3] {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    left: f64,
    right: f64,
    node: usize,
    /// Sampled sequences below this segment.
    count: usize,
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    left: f64,
    right: f64,
    parent: usize,
    child: usize,
}

fn push_segment(out: &mut Vec<Segment>, s: Segment) {
    if let Some(last) = out.last_mut() {
        if last.node == s.node && last.count == s.count && last.right == s.left {
            last.right = s.right;
            return;
        }
    }
    out.push(s);
}

fn push_edge(edges: &mut Vec<Edge>, e: Edge) {
    if let Some(last) = edges.last_mut() {
        if last.parent == e.parent && last.child == e.child && last.right == e.left {
            last.right = e.right;
            return;
        }
    }
    edges.push(e);
}

fn covering(segs: &[Segment], x: f64) -> Option<Segment> {
    segs.iter().find(|s| s.left <= x && x < s.right).copied()
}

/// Merges two lineages into a new node. Material reaching all `n` samples
/// leaves the simulation.
fn merge(a: &[Segment], b: &[Segment], node: usize, n: usize, edges: &mut Vec<Edge>) -> Vec<Segment> {
    let mut cuts: Vec<f64> = a
        .iter()
        .chain(b)
        .flat_map(|s| [s.left, s.right])
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let (l, r) = (w[0], w[1]);
        let mid = l + (r - l) / 2.0;
        match (covering(a, mid), covering(b, mid)) {
            (Some(x), Some(y)) => {
                for child in [x.node, y.node] {
                    push_edge(
                        edges,
                        Edge {
                            left: l,
                            right: r,
                            parent: node,
                            child,
                        },
                    );
                }
                let count = x.count + y.count;
                if count < n {
                    push_segment(
                        &mut out,
                        Segment {
                            left: l,
                            right: r,
                            node,
                            count,
                        },
                    );
                }
            }
            (Some(x), None) | (None, Some(x)) => push_segment(
                &mut out,
                Segment {
                    left: l,
                    right: r,
                    ..x
                },
            ),
            (None, None) => {}
        }
    }
    out
}

fn span(segs: &[Segment]) -> f64 {
    match (segs.first(), segs.last()) {
        (Some(f), Some(l)) => l.right - f.left,
        _ => 0.0,
    }
}

fn split(segs: &[Segment], x: f64) -> (Vec<Segment>, Vec<Segment>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for s in segs {
        if s.right <= x {
            left.push(*s);
        } else if s.left >= x {
            right.push(*s);
        } else {
            left.push(Segment { right: x, ..*s });
            right.push(Segment { left: x, ..*s });
        }
    }
    (left, right)
}

/// Runs the backward simulation and drops mutations on the resulting
/// genealogy. Columns are ordered by position.
pub fn simulate(params: &SimParams) -> Result<HaplotypeMatrix> {
    params.validate()?;
    let mut rng = substream(params.seed, "sim");
    let n = params.n;
    let region = params.region_bp;
    let rec_per_span = params.scaled_rho() / 2.0 / region;
    let mut times: Vec<f64> = vec![0.0; n];
    let mut edges: Vec<Edge> = Vec::new();
    let mut lineages: Vec<Vec<Segment>> = (0..n)
        .map(|i| {
            vec![Segment {
                left: 0.0,
                right: region,
                node: i,
                count: 1,
            }]
        })
        .collect();
    let mut t = 0.0;
    while !lineages.is_empty() {
        let k = lineages.len();
        debug_assert!(k >= 2, "a lone lineage would carry all samples");
        let coal = (k * (k - 1)) as f64 / 2.0;
        let spans: Vec<f64> = lineages.iter().map(|l| span(l)).collect();
        let rec = rec_per_span * spans.iter().sum::<f64>();
        let total = coal + rec;
        t += Exp::new(total).expect("positive rate").sample(&mut rng);
        if rng.random::<f64>() * total < rec {
            let mut u = rng.random::<f64>() * spans.iter().sum::<f64>();
            let mut pick = k - 1;
            for (i, s) in spans.iter().enumerate() {
                if u < *s {
                    pick = i;
                    break;
                }
                u -= s;
            }
            let segs = &lineages[pick];
            let lo = segs[0].left;
            let hi = segs[segs.len() - 1].right;
            let x = rng.random_range(lo..hi);
            if x <= lo {
                continue;
            }
            let (l, r) = split(segs, x);
            lineages[pick] = l;
            lineages.push(r);
        } else {
            let i = rng.random_range(0..k);
            let mut j = rng.random_range(0..k - 1);
            if j >= i {
                j += 1;
            }
            let (hi, lo) = (i.max(j), i.min(j));
            let b = lineages.swap_remove(hi);
            let a = lineages.swap_remove(lo);
            let node = times.len();
            times.push(t);
            let merged = merge(&a, &b, node, n, &mut edges);
            if !merged.is_empty() {
                lineages.push(merged);
            }
        }
    }

    // Mutations on branches, one site each.
    let mut mutations: Vec<(f64, usize)> = Vec::new();
    let mut used = std::collections::HashSet::new();
    for e in &edges {
        let length = times[e.parent] - times[e.child];
        let mean = params.theta() / 2.0 * (e.right - e.left) / region * length;
        if mean <= 0.0 {
            continue;
        }
        let count = Poisson::new(mean).expect("positive mean").sample(&mut rng) as usize;
        for _ in 0..count {
            loop {
                let x = rng.random_range(e.left..e.right);
                if used.insert(x.to_bits()) {
                    mutations.push((x, e.child));
                    break;
                }
            }
        }
    }
    mutations.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut by_child: Vec<Vec<usize>> = vec![Vec::new(); times.len()];
    for (i, e) in edges.iter().enumerate() {
        by_child[e.child].push(i);
    }
    let parent_at = |node: usize, x: f64| {
        by_child[node]
            .iter()
            .map(|&i| edges[i])
            .find(|e| e.left <= x && x < e.right)
            .map(|e| e.parent)
    };
    let mut columns = Vec::with_capacity(mutations.len());
    let mut positions = Vec::with_capacity(mutations.len());
    for &(x, below) in &mutations {
        let column: Vec<bool> = (0..n)
            .map(|s| {
                let mut node = s;
                loop {
                    if node == below {
                        return true;
                    }
                    match parent_at(node, x) {
                        Some(p) => node = p,
                        None => return false,
                    }
                }
            })
            .collect();
        columns.push(column);
        positions.push(x);
    }
    HaplotypeMatrix::new(n, columns, positions)
}

/// Simulates and keeps the first `l_keep` SNPs.
pub fn simulate_snps(params: &SimParams) -> Result<HaplotypeMatrix> {
    simulate(params)?.take_first_snps(params.l_keep)
}

/// Like [`simulate_snps`], redrawing with derived seeds while the region
/// holds too few segregating sites. Returns the matrix and the seed used.
pub fn simulate_snps_retrying(params: &SimParams, attempts: usize) -> Result<(HaplotypeMatrix, u64)> {
    let mut p = params.clone();
    let mut last = None;
    for attempt in 0..attempts.max(1) {
        if attempt > 0 {
            p.seed = derive_seed(params.seed, "resim", attempt as u64);
        }
        match simulate_snps(&p) {
            Ok(m) => return Ok((m, p.seed)),
            Err(e @ ArgError::TooFewSites { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// `sum_{i=1}^{n-1} 1/i`, so that the expected number of segregating
/// sites is `theta` times this.
pub fn watterson_factor(n: usize) -> f64 {
    (1..n).map(|i| 1.0 / i as f64).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::four_gamete_requires_recombination;

    fn params(n: usize, rho: f64, seed: u64) -> SimParams {
        SimParams {
            n,
            region_bp: 25_000.0,
            ne: 10_000.0,
            mu: 1.2e-8,
            rho,
            seed,
            l_keep: 10,
        }
    }

    fn mean_and_se(xs: &[f64]) -> (f64, f64) {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        (m, (var / xs.len() as f64).sqrt())
    }

    #[test]
    fn output_is_segregating_and_sorted() {
        for seed in 0..20 {
            let m = simulate(&params(12, 1.2e-8, seed)).unwrap();
            assert!(m.is_segregating());
            assert!(m.positions().windows(2).all(|w| w[0] < w[1]));
            assert!(m.positions().iter().all(|&x| (0.0..25_000.0).contains(&x)));
        }
    }

    #[test]
    fn no_recombination_means_perfect_phylogeny() {
        for seed in 0..50 {
            let m = simulate(&params(10, 0.0, seed)).unwrap();
            assert!(m.passes_four_gamete(), "seed {seed}");
            if m.sites() > 0 && m.sites() <= 64 {
                assert!(!four_gamete_requires_recombination(&m.to_state().unwrap()).unwrap());
            }
        }
    }

    #[test]
    fn recombination_shows_up() {
        let mut p = params(20, 0.0, 0);
        p.mu = 1e-7;
        p.rho = 1e-7;
        let violated = (0..20)
            .filter(|&s| {
                p.seed = s;
                !simulate(&p).unwrap().passes_four_gamete()
            })
            .count();
        assert!(violated > 10);
    }

    #[test]
    fn two_samples_give_singletons() {
        for seed in 0..30 {
            let m = simulate(&params(2, 1.2e-8, seed)).unwrap();
            for c in 0..m.sites() {
                assert_eq!(m.column(c).iter().filter(|&&b| b).count(), 1);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = simulate(&params(15, 1.2e-8, 99)).unwrap();
        let b = simulate(&params(15, 1.2e-8, 99)).unwrap();
        let c = simulate(&params(15, 1.2e-8, 100)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    /// Leading-SNP regime of the generalization data set, on a short region
    /// at the same per-site rates.
    fn dense(n: usize, mu: f64, seed: u64) -> SimParams {
        SimParams {
            n,
            region_bp: 5.0,
            ne: 1e6,
            mu,
            rho: 5e-6,
            seed,
            l_keep: 10,
        }
    }

    #[test]
    fn segregating_sites_match_watterson() {
        let n = 10;
        let s: Vec<f64> = (0..200)
            .map(|seed| simulate(&dense(n, 5e-7, seed)).unwrap().sites() as f64)
            .collect();
        let (m, se) = mean_and_se(&s);
        let expected = dense(n, 5e-7, 0).theta() * watterson_factor(n);
        assert!((m - expected).abs() <= 3.0 * se, "mean {m}, expected {expected}, se {se}");
    }

    #[test]
    fn doubling_mu_doubles_sites() {
        let n = 8;
        let one: Vec<f64> = (0..200)
            .map(|seed| simulate(&dense(n, 5e-7, seed)).unwrap().sites() as f64)
            .collect();
        let two: Vec<f64> = (0..200)
            .map(|seed| simulate(&dense(n, 1e-6, 1000 + seed)).unwrap().sites() as f64)
            .collect();
        let (m1, se1) = mean_and_se(&one);
        let (m2, se2) = mean_and_se(&two);
        let band = 3.0 * (se2 * se2 + 4.0 * se1 * se1).sqrt();
        assert!((m2 - 2.0 * m1).abs() <= band, "{m1} -> {m2} (band {band})");
    }

    #[test]
    fn first_snps() {
        let m = simulate(&dense(10, 5e-7, 3)).unwrap();
        assert!(m.sites() > 10);
        let k = m.take_first_snps(10).unwrap();
        assert_eq!(k.sites(), 10);
        assert_eq!(k.positions(), &m.positions()[..10]);
        assert_eq!(m.take_first_snps(m.sites()).unwrap(), m);
        assert!(matches!(
            m.take_first_snps(m.sites() + 1),
            Err(ArgError::TooFewSites { .. })
        ));
    }

    #[test]
    fn retrying_finds_enough_sites() {
        let mut p = params(4, 1.2e-8, 5);
        p.l_keep = 12;
        let (m, _) = simulate_snps_retrying(&p, 200).unwrap();
        assert_eq!(m.sites(), 12);
    }

    #[test]
    fn invalid_params() {
        let mut p = params(1, 0.0, 0);
        assert!(simulate(&p).is_err());
        p.n = 4;
        p.mu = -1.0;
        assert!(simulate(&p).is_err());
    }
}
