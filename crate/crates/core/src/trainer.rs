//! Episodes, gradient Monte Carlo training and greedy rollouts.

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::approximator::{ValueModel, ALPHA_FIXED};
use crate::error::{ArgError, Result};
use crate::features::{encode, FeatureVector};
use crate::genealogy::Genealogy;
use crate::genetics::{Action, Sequence, State};
use crate::rng::{substream, substream_indexed, RunRng};
use crate::tabular::TabularSolution;

/// Greedy ties: values within this relative distance of the best count as
/// equal, since successor values are accumulated in different orders.
const TIE_TOLERANCE: f64 = 1e-9;
pub const VALIDATION_STEP_MAX: usize = 300;
pub const TEST_STEP_MAX: usize = 400;
pub const MOVING_AVERAGE_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Fixed,
    Generalize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub episodes: usize,
    pub mode: TrainMode,
    /// Sequences per initial state in generalization training.
    pub n_tr: usize,
    pub checkpoint_every: usize,
    /// First episode count at which periodic checkpoints are taken.
    pub checkpoint_start: usize,
    /// Per-episode action cap; `None` means `10 * n * L`.
    pub step_max_train: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: ALPHA_FIXED,
            epsilon: 0.1,
            episodes: 10_000,
            mode: TrainMode::Fixed,
            n_tr: 5,
            checkpoint_every: 2_000,
            checkpoint_start: 0,
            step_max_train: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(ArgError::Config(format!("epsilon must lie in [0, 1], got {}", self.epsilon)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(ArgError::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.episodes == 0 {
            return Err(ArgError::Config("episodes must be at least 1".into()));
        }
        if self.mode == TrainMode::Generalize && self.n_tr < 2 {
            return Err(ArgError::Config(format!("n_tr must be at least 2, got {}", self.n_tr)));
        }
        if self.step_max_train == Some(0) {
            return Err(ArgError::Config("step_max_train must be at least 1".into()));
        }
        Ok(())
    }

    fn cap_for(&self, s0: &State) -> usize {
        self.step_max_train
            .unwrap_or(10 * s0.total() * s0.markers())
            .max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub length: usize,
    /// False when the episode hit its action cap.
    pub terminated: bool,
    pub seconds: f64,
}

/// Values of the successors reached by `actions` from `state`.
pub trait SuccessorScorer {
    fn score(&mut self, state: &State, actions: &[Action]) -> Result<Vec<f64>>;
}

/// Scores successors of a fixed model incrementally: the hidden
/// pre-activation of a successor differs from its parent's by the encoded
/// blocks of at most two removed and two added sequences.
pub struct ModelScorer<'a> {
    model: &'a ValueModel,
    contributions: HashMap<Sequence, Vec<f64>>,
}

impl<'a> ModelScorer<'a> {
    pub fn new(model: &'a ValueModel) -> ModelScorer<'a> {
        ModelScorer {
            model,
            contributions: HashMap::new(),
        }
    }

    fn contribution(&mut self, s: &Sequence) -> &[f64] {
        let model = self.model;
        self.contributions.entry(*s).or_insert_with(|| {
            let mut c = vec![0.0; model.hidden()];
            model.encoder().for_each_index(s, |i| model.add_input(&mut c, i, 1.0));
            c
        })
    }

    fn preactivation(&mut self, state: &State) -> Vec<f64> {
        let mut pre = self.model.hidden_preactivation(&FeatureVector::zeros(self.model.dim()))
            .expect("matching dimension");
        for &(s, c) in state.entries() {
            let contrib = self.contribution(&s);
            for (p, v) in pre.iter_mut().zip(contrib) {
                *p += c as f64 * v;
            }
        }
        pre
    }
}

impl SuccessorScorer for ModelScorer<'_> {
    fn score(&mut self, state: &State, actions: &[Action]) -> Result<Vec<f64>> {
        if state.markers() != self.model.encoder().markers() {
            return Err(ArgError::LengthMismatch {
                expected: self.model.encoder().markers(),
                found: state.markers(),
            });
        }
        let base = self.preactivation(state);
        let mut pre = base.clone();
        let mut out = Vec::with_capacity(actions.len());
        for a in actions {
            pre.copy_from_slice(&base);
            let delta = a.delta();
            for s in delta.removed() {
                for (p, v) in pre.iter_mut().zip(self.contribution(&s)) {
                    *p -= v;
                }
            }
            for s in delta.added() {
                for (p, v) in pre.iter_mut().zip(self.contribution(&s)) {
                    *p += v;
                }
            }
            out.push(self.model.value_from_preactivation(&pre));
        }
        Ok(out)
    }
}

/// Scores successors with a solved value table; states outside the table
/// score `-inf`.
pub struct TabularScorer<'a>(pub &'a TabularSolution);

impl SuccessorScorer for TabularScorer<'_> {
    fn score(&mut self, state: &State, actions: &[Action]) -> Result<Vec<f64>> {
        actions
            .iter()
            .map(|a| {
                let next = state.apply(a)?;
                Ok(self
                    .0
                    .graph
                    .id_of(&next)
                    .map(|id| self.0.values.value(id))
                    .unwrap_or(f64::NEG_INFINITY))
            })
            .collect()
    }
}

/// Scores successors with an arbitrary state-value function.
pub struct FnScorer<F>(pub F);

impl<F: FnMut(&State) -> f64> SuccessorScorer for FnScorer<F> {
    fn score(&mut self, state: &State, actions: &[Action]) -> Result<Vec<f64>> {
        actions
            .iter()
            .map(|a| Ok((self.0)(&state.apply(a)?)))
            .collect()
    }
}

/// Index of a best-scoring action, ties broken uniformly at random.
pub(crate) fn greedy_pick<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> usize {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOLERANCE * best.abs().max(1.0);
    let ties: Vec<usize> = (0..values.len())
        .filter(|&i| values[i] >= best - tol || (best.is_infinite() && values[i] == best))
        .collect();
    if ties.len() == 1 {
        return ties[0];
    }
    ties[rng.random_range(0..ties.len())]
}

/// Rolls out an epsilon-greedy policy from `s0` for at most `cap` actions.
pub fn rollout<S: SuccessorScorer, R: Rng + ?Sized>(
    scorer: &mut S,
    s0: &State,
    epsilon: f64,
    cap: usize,
    rng: &mut R,
) -> Result<Genealogy> {
    let mut g = Genealogy::new(s0.clone());
    while !g.current().is_terminal() && g.len() < cap {
        let state = g.current();
        let actions = state.enumerate_actions();
        let pick = if epsilon > 0.0 && rng.random::<f64>() < epsilon {
            rng.random_range(0..actions.len())
        } else {
            let values = scorer.score(state, &actions)?;
            greedy_pick(&values, rng)
        };
        let next = state.apply(&actions[pick])?;
        g.push(actions[pick], next);
    }
    g.finish();
    Ok(g)
}

/// One training episode: an epsilon-greedy rollout, then a gradient Monte
/// Carlo update at every visited state with target `G_t = -(T - t)`. A
/// truncated episode is updated as if the cap were terminal.
pub fn run_episode<R: Rng + ?Sized>(
    model: &mut ValueModel,
    s0: &State,
    epsilon: f64,
    alpha: f64,
    cap: usize,
    rng: &mut R,
) -> Result<Genealogy> {
    if s0.is_terminal() {
        return Err(ArgError::Config(format!("initial state {s0} is already terminal")));
    }
    let g = rollout(&mut ModelScorer::new(model), s0, epsilon, cap, rng)?;
    let features = g
        .visited()
        .map(|s| encode(s, model.encoder()))
        .collect::<Result<Vec<_>>>()?;
    for (x, target) in features.iter().zip(g.returns()) {
        model.sgd_update(x, target, alpha)?;
    }
    model.set_episodes(model.episodes() + 1);
    Ok(g)
}

fn log_entry(episode: usize, g: &Genealogy, start: Instant) -> EpisodeLog {
    EpisodeLog {
        episode,
        length: g.len(),
        terminated: g.terminated(),
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Trains on the deduplicated sample, starting every episode there.
pub fn train_fixed(
    model: &mut ValueModel,
    sample: &State,
    cfg: &TrainConfig,
) -> Result<Vec<EpisodeLog>> {
    train_fixed_with(model, sample, cfg, |_| {})
}

/// As [`train_fixed`], calling `progress` after each episode.
pub fn train_fixed_with<F: FnMut(&EpisodeLog)>(
    model: &mut ValueModel,
    sample: &State,
    cfg: &TrainConfig,
    mut progress: F,
) -> Result<Vec<EpisodeLog>> {
    cfg.validate()?;
    let s0 = sample.deduplicated();
    let cap = cfg.cap_for(&s0);
    let mut rng = substream(cfg.seed, "train");
    let mut logs = Vec::with_capacity(cfg.episodes);
    for episode in 0..cfg.episodes {
        let start = Instant::now();
        let g = run_episode(model, &s0, cfg.epsilon, cfg.alpha, cap, &mut rng)?;
        let entry = log_entry(episode, &g, start);
        progress(&entry);
        logs.push(entry);
    }
    Ok(logs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Episodes completed when the checkpoint was taken.
    pub episode: usize,
    /// True when the checkpoint closes a full pass over the pool.
    pub pass_end: bool,
    pub model: ValueModel,
}

#[derive(Debug, Clone)]
pub struct GeneralizeRun {
    pub logs: Vec<EpisodeLog>,
    pub checkpoints: Vec<Checkpoint>,
}

/// Cycles through shuffled passes of the pool, `n` sequences at a time.
pub struct PoolSampler {
    pool: Vec<Sequence>,
    order: Vec<usize>,
    next: usize,
    passes: usize,
}

impl PoolSampler {
    pub fn new(pool: Vec<Sequence>, n: usize) -> Result<PoolSampler> {
        if pool.len() < n {
            return Err(ArgError::Config(format!(
                "pool of {} sequences is smaller than the draw size {n}",
                pool.len()
            )));
        }
        Ok(PoolSampler {
            order: Vec::new(),
            pool,
            next: 0,
            passes: 0,
        })
    }

    /// Completed passes over the pool.
    pub fn passes(&self) -> usize {
        self.passes
    }

    /// Draws `n` sequences without replacement, reshuffling when a pass runs
    /// out. Returns the draw and whether it completed a pass.
    pub fn draw<R: Rng + ?Sized>(&mut self, n: usize, rng: &mut R) -> (Vec<Sequence>, bool) {
        let mut out = Vec::with_capacity(n);
        let mut completed = false;
        while out.len() < n {
            if self.next == self.order.len() {
                self.order = (0..self.pool.len()).collect();
                self.order.shuffle(rng);
                self.next = 0;
            }
            out.push(self.pool[self.order[self.next]]);
            self.next += 1;
            if self.next == self.order.len() {
                self.passes += 1;
                completed = true;
            }
        }
        (out, completed)
    }
}

/// Generalization training: each episode starts from `n_tr` sequences
/// drawn from the pool, duplicates kept. Checkpoints are taken every
/// `checkpoint_every` episodes from `checkpoint_start` on, and at the end of
/// each pass over the pool.
pub fn train_generalize(
    model: &mut ValueModel,
    pool: &[Sequence],
    cfg: &TrainConfig,
) -> Result<GeneralizeRun> {
    train_generalize_with(model, pool, cfg, |_, _| Ok(()))
}

pub fn train_generalize_with<F>(
    model: &mut ValueModel,
    pool: &[Sequence],
    cfg: &TrainConfig,
    mut on_checkpoint: F,
) -> Result<GeneralizeRun>
where
    F: FnMut(&Checkpoint, &[EpisodeLog]) -> Result<()>,
{
    cfg.validate()?;
    if cfg.mode != TrainMode::Generalize {
        return Err(ArgError::Config("train_generalize needs mode = generalize".into()));
    }
    let mut sampler = PoolSampler::new(pool.to_vec(), cfg.n_tr)?;
    let mut rng = substream(cfg.seed, "train");
    let mut logs = Vec::with_capacity(cfg.episodes);
    let mut checkpoints = Vec::new();
    let mut episode = 0;
    while episode < cfg.episodes {
        let (draw, pass_end) = sampler.draw(cfg.n_tr, &mut rng);
        let s0 = State::from_sequences(draw)?;
        if s0.is_terminal() {
            continue;
        }
        let start = Instant::now();
        let cap = cfg.cap_for(&s0);
        let g = run_episode(model, &s0, cfg.epsilon, cfg.alpha, cap, &mut rng)?;
        logs.push(log_entry(episode, &g, start));
        episode += 1;
        let periodic = cfg.checkpoint_every > 0
            && episode >= cfg.checkpoint_start
            && (episode - cfg.checkpoint_start) % cfg.checkpoint_every == 0;
        if periodic || pass_end {
            let c = Checkpoint {
                episode,
                pass_end,
                model: model.clone(),
            };
            on_checkpoint(&c, &logs)?;
            checkpoints.push(c);
        }
    }
    Ok(GeneralizeRun { logs, checkpoints })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BuildOutcome {
    Finite(Genealogy),
    /// The rollout reached the step cap.
    Infinite { steps: usize },
}

impl BuildOutcome {
    pub fn length(&self) -> Option<usize> {
        match self {
            BuildOutcome::Finite(g) => Some(g.len()),
            BuildOutcome::Infinite { .. } => None,
        }
    }

    pub fn genealogy(&self) -> Option<&Genealogy> {
        match self {
            BuildOutcome::Finite(g) => Some(g),
            BuildOutcome::Infinite { .. } => None,
        }
    }
}

/// Greedy rollout (epsilon = 0, random ties) with any scorer.
pub fn greedy_with<S: SuccessorScorer, R: Rng + ?Sized>(
    scorer: &mut S,
    sample: &State,
    step_max: usize,
    rng: &mut R,
) -> Result<BuildOutcome> {
    if step_max == 0 {
        return Err(ArgError::Config("step_max must be at least 1".into()));
    }
    let g = rollout(scorer, sample, 0.0, step_max, rng)?;
    if g.terminated() {
        Ok(BuildOutcome::Finite(g))
    } else {
        Ok(BuildOutcome::Infinite { steps: g.len() })
    }
}

pub fn greedy_build<R: Rng + ?Sized>(
    model: &ValueModel,
    sample: &State,
    step_max: usize,
    rng: &mut R,
) -> Result<BuildOutcome> {
    greedy_with(&mut ModelScorer::new(model), sample, step_max, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Greedy length per sample, `None` for an infinite build.
    pub lengths: Vec<Option<usize>>,
    pub prop_infinite: f64,
    /// Mean over finite builds; `None` when every build is infinite.
    pub mean_finite_length: Option<f64>,
}

impl EvalReport {
    pub fn from_lengths(lengths: Vec<Option<usize>>) -> EvalReport {
        let finite: Vec<usize> = lengths.iter().flatten().copied().collect();
        let prop_infinite = if lengths.is_empty() {
            0.0
        } else {
            (lengths.len() - finite.len()) as f64 / lengths.len() as f64
        };
        let mean_finite_length = if finite.is_empty() {
            None
        } else {
            Some(finite.iter().sum::<usize>() as f64 / finite.len() as f64)
        };
        EvalReport {
            lengths,
            prop_infinite,
            mean_finite_length,
        }
    }

    /// Selection key: infinite proportion first, then mean finite length.
    fn key(&self) -> (f64, f64) {
        (self.prop_infinite, self.mean_finite_length.unwrap_or(f64::INFINITY))
    }
}

/// Tie-break stream for sample `index` of an evaluation.
pub fn eval_rng(seed: u64, index: usize) -> RunRng {
    substream_indexed(seed, "eval", index as u64)
}

/// One greedy build per sample; sample `i` uses its own evaluation stream.
pub fn evaluate(
    model: &ValueModel,
    samples: &[State],
    step_max: usize,
    seed: u64,
) -> Result<EvalReport> {
    let lengths = samples
        .iter()
        .enumerate()
        .map(|(i, s)| Ok(greedy_build(model, s, step_max, &mut eval_rng(seed, i))?.length()))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_lengths(lengths))
}

/// Index of the best report: smallest infinite proportion, then smallest
/// mean finite length, earliest on ties.
pub fn select_best(reports: &[EvalReport]) -> Result<usize> {
    if reports.is_empty() {
        return Err(ArgError::Config("no checkpoints to select from".into()));
    }
    let mut best = 0;
    for (i, r) in reports.iter().enumerate().skip(1) {
        if r.key() < reports[best].key() {
            best = i;
        }
    }
    Ok(best)
}

/// Trailing means over `window` consecutive episodes; `len - window + 1`
/// values, or none for shorter input.
pub fn moving_average(lengths: &[usize], window: usize) -> Vec<f64> {
    if window == 0 || lengths.len() < window {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(lengths.len() - window + 1);
    let mut sum: usize = lengths[..window].iter().sum();
    out.push(sum as f64 / window as f64);
    for i in window..lengths.len() {
        sum += lengths[i];
        sum -= lengths[i - window];
        out.push(sum as f64 / window as f64);
    }
    out
}
