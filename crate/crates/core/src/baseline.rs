//! Rule-based genealogy builder in the style of ARG4WG.
//!
//! Each round applies the first stage that has a legal move:
//!
//! 1. one coalescence;
//! 2. one mutation;
//! 3. for the pair of sequences with the longest shared end, a
//!    recombination of one member at the end of the shared segment, then a
//!    coalescence of the shared half with the other member.
//!
//! A shared end is a run of markers, starting at the first or at the last
//! marker, where both sequences are ancestral and equal. The recombined
//! member must carry ancestral material beyond the shared run (otherwise
//! the pair would already be coalescable) and must be allowed to recombine.
//!
//! Termination: every round strictly lowers the tuple
//! (ancestral material, lineages, derived alleles) in lexicographic order.
//! Coalescence never adds material and removes a lineage, mutation removes a
//! derived allele, and stage 3 folds the shared run into the partner, which
//! removes at least one marker of material. Whenever stages 1 and 2 fail,
//! some column has a derived allele on two or more sequences, so at least
//! two sequences share ancestral material. If no shared run touches an end,
//! the longest interior run is cut out with two recombinations and then
//! coalesced with the partner, which also removes material.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;

use crate::error::{ArgError, Result};
use crate::genealogy::Genealogy;
use crate::genetics::{Action, Sequence, State};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieRule {
    Random,
    EnumerateAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeuristicConfig {
    pub seed: u64,
    pub tie_rule: TieRule,
    /// Largest number of genealogies [`TieRule::EnumerateAll`] may produce.
    pub branch_cap: usize,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig {
            seed: 0,
            tie_rule: TieRule::Random,
            branch_cap: 100_000,
        }
    }
}

/// Length of the common run starting at marker 0 (`from_left`) or at the
/// last marker.
fn shared_run(a: &Sequence, b: &Sequence, from_left: bool) -> usize {
    let l = a.len();
    let agree = |i: usize| {
        a.ancestral_mask() >> i & 1 == 1
            && b.ancestral_mask() >> i & 1 == 1
            && (a.ones_mask() ^ b.ones_mask()) >> i & 1 == 0
    };
    if from_left {
        (0..l).take_while(|&i| agree(i)).count()
    } else {
        (0..l).rev().take_while(|&i| agree(i)).count()
    }
}

fn bits(lo: usize, hi: usize) -> u64 {
    let upto = |n: usize| if n >= 64 { u64::MAX } else { (1u64 << n) - 1 };
    upto(hi) & !upto(lo)
}

/// Recombination of `x` at `k` keeping the half that holds `run`, then its
/// coalescence with `y`. `None` when the move is not legal.
fn cut_and_join(x: Sequence, y: Sequence, k: usize, keep_left: bool) -> Option<Vec<Action>> {
    if !x.can_recombine_at(k) {
        return None;
    }
    let (left, right) = x.recombine(k).ok()?;
    let kept = if keep_left { left } else { right };
    Some(vec![Action::Recombine(x, k), Action::coalesce(kept, y)])
}

fn shared_end_moves(state: &State) -> Vec<Vec<Action>> {
    let types: Vec<Sequence> = state.types().collect();
    let l = state.markers();
    let mut best = 0usize;
    let mut moves = Vec::new();
    for i in 0..types.len() {
        for j in i + 1..types.len() {
            for from_left in [true, false] {
                let m = shared_run(&types[i], &types[j], from_left);
                if m == 0 || m < best || m >= l {
                    continue;
                }
                let run = if from_left { bits(0, m) } else { bits(l - m, l) };
                for (x, y) in [(types[i], types[j]), (types[j], types[i])] {
                    if x.ancestral_mask() & !run == 0 {
                        continue;
                    }
                    let k = if from_left { m - 1 } else { l - m - 1 };
                    if let Some(mv) = cut_and_join(x, y, k, from_left) {
                        if m > best {
                            best = m;
                            moves.clear();
                        }
                        moves.push(mv);
                    }
                }
            }
        }
    }
    moves
}

/// Longest interior common run cut out of one member by two
/// recombinations and joined to the other.
fn interior_moves(state: &State) -> Vec<Vec<Action>> {
    let types: Vec<Sequence> = state.types().collect();
    let l = state.markers();
    let mut best = 0usize;
    let mut moves = Vec::new();
    for i in 0..types.len() {
        for j in i + 1..types.len() {
            let (a, b) = (types[i], types[j]);
            let agree = a.ancestral_mask()
                & b.ancestral_mask()
                & !(a.ones_mask() ^ b.ones_mask());
            let mut start = 0;
            while start < l {
                if agree >> start & 1 == 0 {
                    start += 1;
                    continue;
                }
                let mut end = start;
                while end < l && agree >> end & 1 == 1 {
                    end += 1;
                }
                let m = end - start;
                for (x, y) in [(a, b), (b, a)] {
                    if m < best {
                        continue;
                    }
                    if let Some(mv) = carve(x, y, start, end) {
                        if m > best {
                            best = m;
                            moves.clear();
                        }
                        moves.push(mv);
                    }
                }
                start = end;
            }
        }
    }
    moves
}

fn carve(x: Sequence, y: Sequence, start: usize, end: usize) -> Option<Vec<Action>> {
    let mut actions = Vec::new();
    let mut piece = x;
    if start > 0 && piece.ancestral_mask() & bits(0, start) != 0 {
        let (_, right) = piece.recombine(start - 1).ok()?;
        actions.push(Action::Recombine(piece, start - 1));
        piece = right;
    }
    if piece.ancestral_mask() & !bits(0, end) != 0 {
        let (left, _) = piece.recombine(end - 1).ok()?;
        actions.push(Action::Recombine(piece, end - 1));
        piece = left;
    }
    if actions.is_empty() {
        return None;
    }
    actions.push(Action::coalesce(piece, y));
    Some(actions)
}

/// Alternative moves of the first applicable stage, each a short list of
/// actions applied together.
pub fn heuristic_moves(state: &State) -> Vec<Vec<Action>> {
    if state.is_terminal() {
        return Vec::new();
    }
    let actions = state.enumerate_actions();
    let coalescences: Vec<Vec<Action>> = actions
        .iter()
        .filter(|a| a.is_coalescence())
        .map(|a| vec![*a])
        .collect();
    if !coalescences.is_empty() {
        return coalescences;
    }
    let mutations: Vec<Vec<Action>> = actions
        .iter()
        .filter(|a| a.is_mutation())
        .map(|a| vec![*a])
        .collect();
    if !mutations.is_empty() {
        return mutations;
    }
    let shared = shared_end_moves(state);
    if !shared.is_empty() {
        return shared;
    }
    interior_moves(state)
}

fn apply_move(g: &mut Genealogy, actions: &[Action]) -> Result<()> {
    for a in actions {
        let next = g.current().apply(a)?;
        g.push(*a, next);
    }
    Ok(())
}

/// One genealogy with ties broken uniformly at random.
pub fn arg4wg_build(sample: &State, seed: u64) -> Result<Genealogy> {
    let mut rng = substream(seed, "ties");
    let mut g = Genealogy::new(sample.clone());
    loop {
        let moves = heuristic_moves(g.current());
        if moves.is_empty() {
            break;
        }
        let pick = rng.random_range(0..moves.len());
        apply_move(&mut g, &moves[pick])?;
    }
    g.finish();
    debug_assert!(g.terminated());
    Ok(g)
}

/// Every genealogy reachable by some resolution of the ties, in
/// depth-first order. Fails once more than `branch_cap` are found.
pub fn arg4wg_enumerate(sample: &State, branch_cap: usize) -> Result<Vec<Genealogy>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let root = Genealogy::new(sample.clone());
    explore(root, branch_cap, &mut seen, &mut out)?;
    Ok(out)
}

fn explore(
    g: Genealogy,
    cap: usize,
    seen: &mut HashSet<Vec<Action>>,
    out: &mut Vec<Genealogy>,
) -> Result<()> {
    let moves = heuristic_moves(g.current());
    if moves.is_empty() {
        let mut g = g;
        g.finish();
        if seen.insert(g.actions().copied().collect()) {
            if out.len() >= cap {
                return Err(ArgError::BranchCapExceeded { cap });
            }
            out.push(g);
        }
        return Ok(());
    }
    for mv in &moves {
        let mut next = g.clone();
        apply_move(&mut next, mv)?;
        explore(next, cap, seen, out)?;
    }
    Ok(())
}

/// Build per the configured tie rule: one genealogy for `Random`, all of
/// them for `EnumerateAll`.
pub fn arg4wg_run(sample: &State, cfg: &HeuristicConfig) -> Result<Vec<Genealogy>> {
    match cfg.tie_rule {
        TieRule::Random => Ok(vec![arg4wg_build(sample, cfg.seed)?]),
        TieRule::EnumerateAll => arg4wg_enumerate(sample, cfg.branch_cap),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub sample: String,
    /// Cell of the summary table, e.g. sample size and recombination rate.
    pub group: String,
    /// `None` for an infinite-length build.
    pub rl_length: Option<usize>,
    pub baseline_length: usize,
}

impl ComparisonRow {
    /// RL length over baseline length; `None` when the RL build is infinite.
    pub fn ratio(&self) -> Option<f64> {
        self.rl_length
            .map(|l| l as f64 / self.baseline_length as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ComparisonCounts {
    pub shorter_rl: usize,
    pub equal: usize,
    pub shorter_baseline: usize,
}

/// Lengths from both builders on each sample.
pub fn compare_lengths<F>(
    samples: &[(String, String, State)],
    mut rl_builder: F,
    seed: u64,
) -> Result<Vec<ComparisonRow>>
where
    F: FnMut(&State) -> Result<Option<usize>>,
{
    samples
        .iter()
        .map(|(name, group, s)| {
            Ok(ComparisonRow {
                sample: name.clone(),
                group: group.clone(),
                rl_length: rl_builder(s)?,
                baseline_length: arg4wg_build(s, seed)?.len(),
            })
        })
        .collect()
}

/// Shorter-with-RL / equal / shorter-with-baseline counts per group. An
/// infinite RL build counts as shorter with the baseline.
pub fn summarize(rows: &[ComparisonRow]) -> BTreeMap<String, ComparisonCounts> {
    let mut out: BTreeMap<String, ComparisonCounts> = BTreeMap::new();
    for r in rows {
        let c = out.entry(r.group.clone()).or_default();
        match r.rl_length {
            Some(l) if l < r.baseline_length => c.shorter_rl += 1,
            Some(l) if l == r.baseline_length => c.equal += 1,
            _ => c.shorter_baseline += 1,
        }
    }
    out
}
