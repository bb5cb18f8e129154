//! Exact solution of toy instances.
//!
//! The reachable state graph is built breadth-first from the sample and
//! stored compactly: each state is a sorted run of packed sequence codes in
//! one arena, indexed by an open-addressing table, and successors are kept in
//! CSR form in the same order as [`State::enumerate_actions`]. Value
//! iteration then sweeps the graph with the simplified Bellman update
//! `V(s) = max_{s'} (-1 + V(s'))`.

use std::collections::{HashMap, VecDeque};

use rand::Rng;

use crate::error::{ArgError, Result};
use crate::genealogy::Genealogy;
use crate::genetics::{Action, Sequence, State};

/// Default limit on canonical states kept in a [`StateGraph`].
pub const DEFAULT_NODE_CAP: usize = 5_000_000;
/// Default convergence threshold; values are integers so anything below one
/// certifies exact convergence.
pub const DEFAULT_THETA: f64 = 0.5;

/// Largest marker count the packed representation supports.
pub const MAX_TABULAR_MARKERS: usize = 16;

#[inline]
fn pack(s: &Sequence) -> u32 {
    (s.ancestral_mask() as u32) | ((s.ones_mask() as u32) << 16)
}

#[inline]
fn unpack(code: u32, markers: usize) -> Sequence {
    Sequence::from_masks(markers, (code & 0xffff) as u64, (code >> 16) as u64)
        .expect("packed sequence within marker limit")
}

fn hash_codes(codes: &[u32]) -> u64 {
    // FNV-1a over the code words, then a final avalanche.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &c in codes {
        h ^= c as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^ (h >> 33)
}

/// Interned multisets of packed sequences.
#[derive(Debug, Clone)]
struct PackedStore {
    arena: Vec<u32>,
    offsets: Vec<usize>,
    table: Vec<u32>,
    mask: usize,
}

impl PackedStore {
    fn new() -> Self {
        let size = 1 << 10;
        PackedStore {
            arena: Vec::new(),
            offsets: vec![0],
            table: vec![0; size],
            mask: size - 1,
        }
    }

    fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    fn get(&self, id: usize) -> &[u32] {
        &self.arena[self.offsets[id]..self.offsets[id + 1]]
    }

    fn find(&self, codes: &[u32]) -> Option<u32> {
        let mut slot = hash_codes(codes) as usize & self.mask;
        loop {
            let entry = self.table[slot];
            if entry == 0 {
                return None;
            }
            if self.get(entry as usize - 1) == codes {
                return Some(entry - 1);
            }
            slot = (slot + 1) & self.mask;
        }
    }

    /// Returns `(id, inserted)`.
    fn intern(&mut self, codes: &[u32]) -> (u32, bool) {
        if (self.len() + 1) * 2 > self.table.len() {
            self.grow();
        }
        let mut slot = hash_codes(codes) as usize & self.mask;
        loop {
            let entry = self.table[slot];
            if entry == 0 {
                let id = self.len() as u32;
                self.arena.extend_from_slice(codes);
                self.offsets.push(self.arena.len());
                self.table[slot] = id + 1;
                return (id, true);
            }
            if self.get(entry as usize - 1) == codes {
                return (entry - 1, false);
            }
            slot = (slot + 1) & self.mask;
        }
    }

    fn grow(&mut self) {
        let size = self.table.len() * 2;
        let mut table = vec![0u32; size];
        let mask = size - 1;
        for id in 0..self.len() {
            let mut slot = hash_codes(self.get(id)) as usize & mask;
            while table[slot] != 0 {
                slot = (slot + 1) & mask;
            }
            table[slot] = id as u32 + 1;
        }
        self.table = table;
        self.mask = mask;
    }
}

fn encode_state(state: &State, buf: &mut Vec<u32>) {
    buf.clear();
    for (s, c) in state.entries() {
        let code = pack(s);
        buf.extend(std::iter::repeat_n(code, *c as usize));
    }
    buf.sort_unstable();
}

/// Marks a successor slot whose state was pruned by a depth budget.
pub const PRUNED: u32 = u32::MAX;

/// Admissible estimate of the remaining number of events: every column that
/// still carries a derived allele needs a mutation and the lineages need
/// `total - 1` coalescences. No action lowers it by more than one.
pub fn lower_bound(state: &State) -> usize {
    let columns = state
        .entries()
        .iter()
        .fold(0u64, |acc, (s, _)| acc | s.ones_mask())
        .count_ones() as usize;
    columns + state.total() - 1
}

/// Reachable states of a sample, possibly restricted by a depth budget.
#[derive(Debug, Clone)]
pub struct StateGraph {
    markers: usize,
    store: PackedStore,
    edge_offsets: Vec<usize>,
    successors: Vec<u32>,
    terminal: Vec<bool>,
    budget: Option<usize>,
}

impl StateGraph {
    pub fn root(&self) -> usize {
        0
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn edge_count(&self) -> usize {
        self.successors.iter().filter(|&&t| t != PRUNED).count()
    }

    pub fn markers(&self) -> usize {
        self.markers
    }

    /// The depth budget used to build the graph, `None` for a full closure.
    pub fn budget(&self) -> Option<usize> {
        self.budget
    }

    pub fn state(&self, id: usize) -> State {
        decode(&self.store, id, self.markers)
    }

    pub fn id_of(&self, state: &State) -> Option<usize> {
        if state.markers() != self.markers {
            return None;
        }
        let mut buf = Vec::new();
        encode_state(state, &mut buf);
        self.store.find(&buf).map(|id| id as usize)
    }

    pub fn is_terminal(&self, id: usize) -> bool {
        self.terminal[id]
    }

    /// Successor slots aligned with [`StateGraph::actions`]; pruned
    /// successors hold [`PRUNED`].
    pub fn successor_slots(&self, id: usize) -> &[u32] {
        &self.successors[self.edge_offsets[id]..self.edge_offsets[id + 1]]
    }

    /// Successors present in the graph.
    pub fn successors(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        self.successor_slots(id)
            .iter()
            .filter(|&&t| t != PRUNED)
            .map(|&t| t as usize)
    }

    pub fn actions(&self, id: usize) -> Vec<Action> {
        self.state(id).enumerate_actions()
    }
}

/// Breadth-first closure of `root` under [`State::enumerate_actions`] and
/// [`State::apply`], failing once more than `cap` canonical states appear.
pub fn enumerate_reachable(root: &State, cap: usize) -> Result<StateGraph> {
    build_graph(root, None, cap)
}

/// Breadth-first search that keeps only states with
/// `depth + lower_bound(state) <= budget`. Every genealogy of length at most
/// `budget` stays inside the graph, so optimal values and optimal-path
/// counts at the root are exact whenever the optimum fits the budget.
pub fn enumerate_bounded(root: &State, budget: usize, cap: usize) -> Result<StateGraph> {
    build_graph(root, Some(budget), cap)
}

fn build_graph(root: &State, budget: Option<usize>, cap: usize) -> Result<StateGraph> {
    let markers = root.markers();
    if markers > MAX_TABULAR_MARKERS {
        return Err(ArgError::Config(format!(
            "tabular solver supports at most {MAX_TABULAR_MARKERS} markers, got {markers}"
        )));
    }
    let mut store = PackedStore::new();
    let mut buf = Vec::new();
    encode_state(root, &mut buf);
    store.intern(&buf);
    let mut depth: Vec<u32> = vec![0];

    let mut edge_offsets = vec![0usize];
    let mut successors: Vec<u32> = Vec::new();
    let mut terminal = Vec::new();
    let mut next = 0usize;
    // Ids are assigned in discovery order, so the BFS queue is just a cursor.
    while next < store.len() {
        let state = decode(&store, next, markers);
        let is_terminal = state.is_terminal();
        terminal.push(is_terminal);
        if !is_terminal {
            let child_depth = depth[next] as usize + 1;
            let mut overflow = false;
            state.for_each_action(|a| {
                let succ = state.apply_unchecked(&a);
                if let Some(b) = budget {
                    if child_depth + lower_bound(&succ) > b {
                        successors.push(PRUNED);
                        return;
                    }
                }
                encode_state(&succ, &mut buf);
                let (id, inserted) = store.intern(&buf);
                if inserted {
                    depth.push(child_depth as u32);
                }
                successors.push(id);
                overflow |= store.len() > cap;
            });
            if overflow {
                return Err(ArgError::StateSpaceTooLarge { cap });
            }
        }
        edge_offsets.push(successors.len());
        next += 1;
    }
    Ok(StateGraph {
        markers,
        store,
        edge_offsets,
        successors,
        terminal,
        budget,
    })
}

fn decode(store: &PackedStore, id: usize, markers: usize) -> State {
    let codes = store.get(id);
    let mut counts: Vec<(Sequence, u32)> = Vec::with_capacity(codes.len());
    let mut prev = u32::MAX;
    for &c in codes {
        if c == prev {
            counts.last_mut().unwrap().1 += 1;
        } else {
            counts.push((unpack(c, markers), 1));
            prev = c;
        }
    }
    State::from_counts(markers, counts).expect("stored states are valid")
}

/// States from which some terminal state is reachable inside the graph.
fn live_states(graph: &StateGraph) -> Vec<bool> {
    let n = graph.len();
    let mut indegree = vec![0usize; n + 1];
    for id in 0..n {
        for t in graph.successors(id) {
            indegree[t + 1] += 1;
        }
    }
    for i in 0..n {
        indegree[i + 1] += indegree[i];
    }
    let mut fill = indegree.clone();
    let mut preds = vec![0u32; indegree[n]];
    for id in 0..n {
        for t in graph.successors(id) {
            preds[fill[t]] = id as u32;
            fill[t] += 1;
        }
    }
    let mut live = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&id| graph.is_terminal(id)).collect();
    for &id in &stack {
        live[id] = true;
    }
    while let Some(t) = stack.pop() {
        for &p in &preds[indegree[t]..indegree[t + 1]] {
            if !live[p as usize] {
                live[p as usize] = true;
                stack.push(p as usize);
            }
        }
    }
    live
}

/// State values indexed like the graph they were computed on. States that
/// cannot reach a terminal state inside a budgeted graph hold `-inf`.
#[derive(Debug, Clone)]
pub struct ValueTable {
    values: Vec<f64>,
    theta: f64,
    sweeps: usize,
}

impl ValueTable {
    pub fn value(&self, id: usize) -> f64 {
        self.values[id]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// Largest `|V(s) - max_{s'} (-1 + V(s'))|` over non-terminal states
    /// with finite value.
    pub fn bellman_residual(&self, graph: &StateGraph) -> f64 {
        (0..graph.len())
            .filter(|&id| !graph.is_terminal(id) && self.values[id].is_finite())
            .map(|id| (self.values[id] - backup(graph, &self.values, id)).abs())
            .fold(0.0, f64::max)
    }
}

#[inline]
fn backup(graph: &StateGraph, values: &[f64], id: usize) -> f64 {
    graph
        .successors(id)
        .map(|t| values[t] - 1.0)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// In-place sweeps of `V(s) <- max_{s'} (-1 + V(s'))` until the largest
/// change drops below `theta`. Terminal states are fixed at 0 and every
/// other state starts at -1.
pub fn value_iteration(graph: &StateGraph, theta: f64) -> ValueTable {
    let live = live_states(graph);
    let mut values: Vec<f64> = (0..graph.len())
        .map(|id| {
            if graph.is_terminal(id) {
                0.0
            } else if live[id] {
                -1.0
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let mut sweeps = 0;
    loop {
        let mut delta: f64 = 0.0;
        // Later BFS ids tend to lie closer to the terminal state.
        for id in (0..graph.len()).rev() {
            if graph.is_terminal(id) || !live[id] {
                continue;
            }
            let v = backup(graph, &values, id);
            delta = delta.max((values[id] - v).abs());
            values[id] = v;
        }
        sweeps += 1;
        if delta < theta {
            break;
        }
    }
    ValueTable {
        values,
        theta,
        sweeps,
    }
}

/// Per-state action distributions derived from a value table.
#[derive(Debug, Clone, Copy)]
pub struct PolicyDistribution<'a> {
    graph: &'a StateGraph,
    values: &'a ValueTable,
    top_g: usize,
    temperature: f64,
}

/// One weighted choice of a policy at a state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyChoice {
    pub action: Action,
    pub successor: usize,
    pub probability: f64,
}

/// Uniform distribution over the value-maximising actions of each state.
pub fn optimal_policy<'a>(graph: &'a StateGraph, values: &'a ValueTable) -> PolicyDistribution<'a> {
    PolicyDistribution {
        graph,
        values,
        top_g: 1,
        temperature: 1.0,
    }
}

/// Keeps actions reaching the `top_g` best distinct successor values,
/// weighted by a softmax of the successor value at `temperature`. A
/// temperature of zero keeps only the best successors.
pub fn relax_policy<'a>(
    values: &'a ValueTable,
    graph: &'a StateGraph,
    top_g: usize,
    temperature: f64,
) -> Result<PolicyDistribution<'a>> {
    if top_g == 0 {
        return Err(ArgError::Config("top_g must be at least 1".into()));
    }
    if !(temperature >= 0.0) {
        return Err(ArgError::Config("temperature must be non-negative".into()));
    }
    Ok(PolicyDistribution {
        graph,
        values,
        top_g,
        temperature,
    })
}

impl<'a> PolicyDistribution<'a> {
    pub fn graph(&self) -> &'a StateGraph {
        self.graph
    }

    /// Choices at state `id` with their probabilities, in action order.
    pub fn choices(&self, id: usize) -> Vec<PolicyChoice> {
        if self.graph.is_terminal(id) {
            return Vec::new();
        }
        let slots = self.graph.successor_slots(id);
        let vals: Vec<f64> = slots
            .iter()
            .map(|&t| {
                if t == PRUNED {
                    f64::NEG_INFINITY
                } else {
                    self.values.value(t as usize)
                }
            })
            .collect();
        let mut distinct: Vec<f64> = vals.iter().copied().filter(|v| v.is_finite()).collect();
        distinct.sort_by(|a, b| b.total_cmp(a));
        distinct.dedup();
        let Some(&best) = distinct.first() else {
            return Vec::new();
        };
        let cutoff = distinct[(self.top_g - 1).min(distinct.len() - 1)];
        let weights: Vec<f64> = vals
            .iter()
            .map(|&v| {
                if !v.is_finite() || v < cutoff {
                    0.0
                } else if self.top_g == 1 || self.temperature == 0.0 {
                    if v == best {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    ((v - best) / self.temperature).exp()
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let actions = self.graph.actions(id);
        actions
            .into_iter()
            .zip(slots)
            .zip(weights)
            .filter(|(_, w)| *w > 0.0)
            .map(|((action, &t), w)| PolicyChoice {
                action,
                successor: t as usize,
                probability: w / total,
            })
            .collect()
    }

    /// Distribution over actions at an arbitrary graph state.
    pub fn actions(&self, state: &State) -> Option<Vec<(Action, f64)>> {
        let id = self.graph.id_of(state)?;
        Some(
            self.choices(id)
                .into_iter()
                .map(|c| (c.action, c.probability))
                .collect(),
        )
    }
}

/// `V(s') = V(s) + 1` along an optimal edge.
fn is_optimal_edge(values: &ValueTable, from: usize, to: usize) -> bool {
    values.value(from).is_finite() && values.value(to) == values.value(from) + 1.0
}

/// Number of distinct optimal action sequences from the root to a terminal
/// state, by path counting over the optimal-edge DAG.
pub fn count_optimal_args(graph: &StateGraph, values: &ValueTable) -> u128 {
    count_optimal_from(graph, values, graph.root())
}

pub fn count_optimal_from(graph: &StateGraph, values: &ValueTable, start: usize) -> u128 {
    if !values.value(start).is_finite() {
        return 0;
    }
    // Collect the DAG reachable from `start`, then fold in increasing
    // distance to the terminal (V strictly increases along optimal edges).
    let mut counts: HashMap<usize, u128> = HashMap::new();
    let mut order = Vec::new();
    let mut queue = VecDeque::from([start]);
    counts.insert(start, 0);
    while let Some(id) = queue.pop_front() {
        order.push(id);
        for t in graph.successors(id) {
            if is_optimal_edge(values, id, t) && !counts.contains_key(&t) {
                counts.insert(t, 0);
                queue.push_back(t);
            }
        }
    }
    order.sort_by(|&a, &b| values.value(b).total_cmp(&values.value(a)));
    for id in order {
        let count = if graph.is_terminal(id) {
            1
        } else {
            graph
                .successors(id)
                .filter(|&t| is_optimal_edge(values, id, t))
                .map(|t| counts[&t])
                .sum()
        };
        counts.insert(id, count);
    }
    counts[&start]
}

/// Draws one genealogy from `policy`, starting at `start`, and returns it
/// with its probability (the product of per-step probabilities).
pub fn sample_arg<R: Rng + ?Sized>(
    policy: &PolicyDistribution<'_>,
    start: &State,
    rng: &mut R,
) -> Result<(Genealogy, f64)> {
    let graph = policy.graph();
    let mut id = graph
        .id_of(start)
        .ok_or_else(|| ArgError::Config(format!("state {start} is not in the graph")))?;
    let mut genealogy = Genealogy::new(start.clone());
    let mut probability = 1.0;
    while !graph.is_terminal(id) {
        let choices = policy.choices(id);
        if choices.is_empty() {
            return Err(ArgError::Config(format!(
                "no policy action at {} (outside the solved region)",
                graph.state(id)
            )));
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = choices.len() - 1;
        for (i, c) in choices.iter().enumerate() {
            acc += c.probability;
            if u < acc {
                pick = i;
                break;
            }
        }
        let choice = &choices[pick];
        probability *= choice.probability;
        id = choice.successor;
        genealogy.push(choice.action, graph.state(id));
    }
    genealogy.finish();
    Ok((genealogy, probability))
}

/// Every optimal genealogy from the root with its probability under the
/// uniform optimal policy, by depth-first enumeration. Fails once more than
/// `limit` genealogies are found.
pub fn enumerate_optimal_args(
    graph: &StateGraph,
    values: &ValueTable,
    limit: usize,
) -> Result<Vec<(Vec<Action>, f64)>> {
    let policy = optimal_policy(graph, values);
    let mut out = Vec::new();
    let mut path = Vec::new();
    walk(&policy, graph.root(), 1.0, &mut path, &mut out, limit)?;
    Ok(out)
}

fn walk(
    policy: &PolicyDistribution<'_>,
    id: usize,
    probability: f64,
    path: &mut Vec<Action>,
    out: &mut Vec<(Vec<Action>, f64)>,
    limit: usize,
) -> Result<()> {
    if policy.graph().is_terminal(id) {
        if out.len() >= limit {
            return Err(ArgError::BranchCapExceeded { cap: limit });
        }
        out.push((path.clone(), probability));
        return Ok(());
    }
    for c in policy.choices(id) {
        path.push(c.action);
        walk(policy, c.successor, probability * c.probability, path, out, limit)?;
        path.pop();
    }
    Ok(())
}

/// How [`TabularSolution::solve`] explores the state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exploration {
    /// The full reachable closure.
    Full,
    /// Iterative deepening over [`enumerate_bounded`], starting from the
    /// root's lower bound, plus `slack` extra events once the optimum is
    /// found (useful for relaxed policies).
    Bounded { slack: usize },
}

#[derive(Debug, Clone)]
pub struct TabularSolution {
    pub graph: StateGraph,
    pub values: ValueTable,
}

impl TabularSolution {
    pub fn solve(
        sample: &State,
        exploration: Exploration,
        cap: usize,
        theta: f64,
    ) -> Result<TabularSolution> {
        match exploration {
            Exploration::Full => {
                let graph = enumerate_reachable(sample, cap)?;
                let values = value_iteration(&graph, theta);
                Ok(TabularSolution { graph, values })
            }
            Exploration::Bounded { slack } => {
                let mut budget = lower_bound(sample);
                loop {
                    let graph = enumerate_bounded(sample, budget, cap)?;
                    let values = value_iteration(&graph, theta);
                    if values.value(graph.root()).is_finite() {
                        if slack == 0 {
                            return Ok(TabularSolution { graph, values });
                        }
                        let graph = enumerate_bounded(sample, budget + slack, cap)?;
                        let values = value_iteration(&graph, theta);
                        return Ok(TabularSolution { graph, values });
                    }
                    budget += 1;
                }
            }
        }
    }

    pub fn root_value(&self) -> f64 {
        self.values.value(self.graph.root())
    }

    pub fn optimal_length(&self) -> usize {
        (-self.root_value()) as usize
    }

    pub fn optimal_count(&self) -> u128 {
        count_optimal_args(&self.graph, &self.values)
    }

    pub fn policy(&self) -> PolicyDistribution<'_> {
        optimal_policy(&self.graph, &self.values)
    }
}
