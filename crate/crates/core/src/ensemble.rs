//! Combining independently trained agents: mean of predictions, majority
//! vote over greedy actions, and the shortest of the members' builds.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::approximator::ValueModel;
use crate::error::{ArgError, Result};
use crate::genealogy::Genealogy;
use crate::genetics::{Action, State};
use crate::rng::{derive_seed, substream};
use crate::trainer::{
    eval_rng, greedy_pick, greedy_with, BuildOutcome, EvalReport, ModelScorer, SuccessorScorer,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Mean,
    Majority,
    Minimum,
}

impl std::str::FromStr for Scheme {
    type Err = ArgError;

    fn from_str(s: &str) -> Result<Scheme> {
        match s {
            "mean" => Ok(Scheme::Mean),
            "majority" => Ok(Scheme::Majority),
            "minimum" | "min" => Ok(Scheme::Minimum),
            other => Err(ArgError::Config(format!(
                "unknown ensemble scheme {other:?} (expected mean, majority or minimum)"
            ))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Mean => "mean",
            Scheme::Majority => "majority",
            Scheme::Minimum => "minimum",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    models: Vec<ValueModel>,
}

/// Seed of member `j` within an ensemble evaluated under `seed`.
pub fn member_seed(seed: u64, member: usize) -> u64 {
    derive_seed(seed, "member", member as u64)
}

struct MeanScorer<'a> {
    members: Vec<ModelScorer<'a>>,
}

impl SuccessorScorer for MeanScorer<'_> {
    fn score(&mut self, state: &State, actions: &[Action]) -> Result<Vec<f64>> {
        let mut total = vec![0.0; actions.len()];
        for m in &mut self.members {
            for (t, v) in total.iter_mut().zip(m.score(state, actions)?) {
                *t += v;
            }
        }
        let n = self.members.len() as f64;
        Ok(total.into_iter().map(|t| t / n).collect())
    }
}

impl Ensemble {
    pub fn new(models: Vec<ValueModel>) -> Result<Ensemble> {
        let first = models
            .first()
            .ok_or_else(|| ArgError::Config("an ensemble needs at least one model".into()))?;
        if let Some(m) = models
            .iter()
            .find(|m| m.encoder() != first.encoder() || m.hidden() != first.hidden())
        {
            return Err(ArgError::InvalidEncoder(format!(
                "ensemble members disagree: {:?} vs {:?}",
                first.encoder(),
                m.encoder()
            )));
        }
        Ok(Ensemble { models })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn models(&self) -> &[ValueModel] {
        &self.models
    }

    /// Members in the given order (a permutation of a prefix of indices).
    pub fn subset(&self, members: &[usize]) -> Result<Ensemble> {
        Ensemble::new(members.iter().map(|&i| self.models[i].clone()).collect())
    }

    /// Greedy rollout on the mean of the members' predictions.
    pub fn build_mean<R: Rng + ?Sized>(
        &self,
        sample: &State,
        step_max: usize,
        rng: &mut R,
    ) -> Result<BuildOutcome> {
        let mut scorer = MeanScorer {
            members: self.models.iter().map(ModelScorer::new).collect(),
        };
        greedy_with(&mut scorer, sample, step_max, rng)
    }

    /// Votes of each member's greedy action at `state`, indexed like
    /// `state.enumerate_actions()`.
    pub fn votes<R: Rng + ?Sized>(
        &self,
        scorers: &mut [ModelScorer<'_>],
        state: &State,
        actions: &[Action],
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        let mut votes = vec![0usize; actions.len()];
        for s in scorers.iter_mut() {
            let values = s.score(state, actions)?;
            votes[greedy_pick(&values, rng)] += 1;
        }
        Ok(votes)
    }

    /// Applies the most voted greedy action at each step.
    pub fn build_majority<R: Rng + ?Sized>(
        &self,
        sample: &State,
        step_max: usize,
        rng: &mut R,
    ) -> Result<BuildOutcome> {
        if step_max == 0 {
            return Err(ArgError::Config("step_max must be at least 1".into()));
        }
        let mut scorers: Vec<ModelScorer<'_>> = self.models.iter().map(ModelScorer::new).collect();
        let mut g = Genealogy::new(sample.clone());
        while !g.current().is_terminal() && g.len() < step_max {
            let state = g.current();
            let actions = state.enumerate_actions();
            let votes = self.votes(&mut scorers, state, &actions, rng)?;
            let top = *votes.iter().max().expect("non-terminal state has actions");
            let modal: Vec<usize> = (0..votes.len()).filter(|&i| votes[i] == top).collect();
            let pick = if modal.len() == 1 {
                modal[0]
            } else {
                modal[rng.random_range(0..modal.len())]
            };
            let next = state.apply(&actions[pick])?;
            g.push(actions[pick], next);
        }
        g.finish();
        if g.terminated() {
            Ok(BuildOutcome::Finite(g))
        } else {
            Ok(BuildOutcome::Infinite { steps: g.len() })
        }
    }

    /// Greedy build of every member on sample `index`, each with its own
    /// tie-break stream.
    pub fn member_builds(
        &self,
        sample: &State,
        step_max: usize,
        seed: u64,
        index: usize,
    ) -> Result<Vec<BuildOutcome>> {
        self.models
            .iter()
            .enumerate()
            .map(|(j, m)| {
                greedy_with(
                    &mut ModelScorer::new(m),
                    sample,
                    step_max,
                    &mut eval_rng(member_seed(seed, j), index),
                )
            })
            .collect()
    }

    /// Shortest finite member build; infinite only if every member is.
    pub fn build_minimum(
        &self,
        sample: &State,
        step_max: usize,
        seed: u64,
        index: usize,
    ) -> Result<BuildOutcome> {
        let builds = self.member_builds(sample, step_max, seed, index)?;
        Ok(shortest(builds, step_max))
    }

    /// One build per sample under `scheme`, summarised like an evaluation.
    pub fn evaluate(
        &self,
        scheme: Scheme,
        samples: &[State],
        step_max: usize,
        seed: u64,
    ) -> Result<(EvalReport, Vec<BuildOutcome>)> {
        let outcomes = samples
            .iter()
            .enumerate()
            .map(|(i, s)| match scheme {
                Scheme::Mean => self.build_mean(s, step_max, &mut eval_rng(seed, i)),
                Scheme::Majority => self.build_majority(s, step_max, &mut eval_rng(seed, i)),
                Scheme::Minimum => self.build_minimum(s, step_max, seed, i),
            })
            .collect::<Result<Vec<_>>>()?;
        let report = EvalReport::from_lengths(outcomes.iter().map(BuildOutcome::length).collect());
        Ok((report, outcomes))
    }
}

fn shortest(builds: Vec<BuildOutcome>, step_max: usize) -> BuildOutcome {
    builds
        .into_iter()
        .filter(|b| b.length().is_some())
        .min_by_key(|b| b.length())
        .unwrap_or(BuildOutcome::Infinite { steps: step_max })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub ordering: usize,
    pub agents: usize,
    pub prop_infinite: f64,
    pub mean_length: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleCurve {
    pub points: Vec<CurvePoint>,
    /// Per ordering, the smallest prefix with no infinite builds.
    pub agents_to_zero: Vec<Option<usize>>,
    /// `lengths[j][i]`: member `j`'s greedy length on sample `i`.
    pub member_lengths: Vec<Vec<Option<usize>>>,
}

impl EnsembleCurve {
    /// Largest [`EnsembleCurve::agents_to_zero`] over orderings; `None` if
    /// some ordering never reaches zero.
    pub fn worst_agents_to_zero(&self) -> Option<usize> {
        self.agents_to_zero
            .iter()
            .try_fold(0, |acc, a| a.map(|a| acc.max(a)))
    }
}

/// `count` random orderings of `m` members, the identity first.
pub fn random_orderings(m: usize, count: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = substream(seed, "orderings");
    (0..count)
        .map(|k| {
            let mut p: Vec<usize> = (0..m).collect();
            if k > 0 {
                p.shuffle(&mut rng);
            }
            p
        })
        .collect()
}

/// Minimum-ensemble evaluation for every prefix of every ordering. Member
/// builds are computed once and reused, so prefix 1 equals that member's
/// own evaluation.
pub fn ensemble_curve(
    e: &Ensemble,
    samples: &[State],
    step_max: usize,
    orderings: &[Vec<usize>],
    seed: u64,
) -> Result<EnsembleCurve> {
    for o in orderings {
        let mut sorted = o.clone();
        sorted.sort_unstable();
        if sorted != (0..e.len()).collect::<Vec<_>>() {
            return Err(ArgError::Config(format!("{o:?} is not a permutation of the members")));
        }
    }
    let mut member_lengths = vec![Vec::with_capacity(samples.len()); e.len()];
    for (i, s) in samples.iter().enumerate() {
        for (j, b) in e.member_builds(s, step_max, seed, i)?.iter().enumerate() {
            member_lengths[j].push(b.length());
        }
    }
    let mut points = Vec::new();
    let mut agents_to_zero = Vec::new();
    for (k, o) in orderings.iter().enumerate() {
        let mut best: Vec<Option<usize>> = vec![None; samples.len()];
        let mut zero_at = None;
        for (prefix, &j) in o.iter().enumerate() {
            for (b, l) in best.iter_mut().zip(&member_lengths[j]) {
                *b = match (*b, *l) {
                    (Some(x), Some(y)) => Some(x.min(y)),
                    (x, y) => x.or(y),
                };
            }
            let report = EvalReport::from_lengths(best.clone());
            if report.prop_infinite == 0.0 && zero_at.is_none() {
                zero_at = Some(prefix + 1);
            }
            points.push(CurvePoint {
                ordering: k,
                agents: prefix + 1,
                prop_infinite: report.prop_infinite,
                mean_length: report.mean_finite_length,
            });
        }
        agents_to_zero.push(zero_at);
    }
    Ok(EnsembleCurve {
        points,
        agents_to_zero,
        member_lengths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::EncoderConfig;
    use crate::trainer::{evaluate, greedy_build, train_fixed, TrainConfig};

    fn state(s: &str) -> State {
        State::parse(s).unwrap()
    }

    fn model(seed: u64) -> ValueModel {
        ValueModel::init(EncoderConfig::new(4, 2, 1).unwrap(), 12, seed).unwrap()
    }

    fn trained(seed: u64) -> ValueModel {
        let mut m = model(seed);
        let cfg = TrainConfig {
            episodes: 300,
            seed,
            ..TrainConfig::default()
        };
        train_fixed(&mut m, &state("0011 1011 1000 1100"), &cfg).unwrap();
        m
    }

    fn samples() -> Vec<State> {
        vec![
            state("0011 1011 1000 1100"),
            state("0101 1000 1010 1101"),
            state("0100 1000 1010 0011"),
            state("0110 1001 1111"),
        ]
    }

    #[test]
    fn single_member_matches_greedy() {
        let m = trained(1);
        let e = Ensemble::new(vec![m.clone()]).unwrap();
        for (i, s) in samples().iter().enumerate() {
            let direct = greedy_build(&m, s, 300, &mut eval_rng(5, i)).unwrap();
            assert_eq!(e.build_mean(s, 300, &mut eval_rng(5, i)).unwrap(), direct);
            assert_eq!(e.build_majority(s, 300, &mut eval_rng(5, i)).unwrap(), direct);
            let own = greedy_build(&m, s, 300, &mut eval_rng(member_seed(5, 0), i)).unwrap();
            assert_eq!(e.build_minimum(s, 300, 5, i).unwrap(), own);
        }
    }

    #[test]
    fn duplicated_members_behave_like_one() {
        let m = trained(2);
        let one = Ensemble::new(vec![m.clone()]).unwrap();
        let three = Ensemble::new(vec![m.clone(), m.clone(), m]).unwrap();
        for (i, s) in samples().iter().enumerate() {
            let a = one.build_mean(s, 300, &mut eval_rng(9, i)).unwrap();
            let b = three.build_mean(s, 300, &mut eval_rng(9, i)).unwrap();
            assert_eq!(a, b);
            let a = one.build_majority(s, 300, &mut eval_rng(9, i)).unwrap();
            let b = three.build_majority(s, 300, &mut eval_rng(9, i)).unwrap();
            assert_eq!(a.length(), b.length());
        }
    }

    #[test]
    fn votes_sum_to_members() {
        let e = Ensemble::new((0..5).map(trained).collect()).unwrap();
        let s = state("0011 1011 1000 1100");
        let actions = s.enumerate_actions();
        let mut scorers: Vec<ModelScorer<'_>> = e.models().iter().map(ModelScorer::new).collect();
        let votes = e.votes(&mut scorers, &s, &actions, &mut substream(0, "ties")).unwrap();
        assert_eq!(votes.iter().sum::<usize>(), 5);
    }

    #[test]
    fn minimum_is_min_over_members() {
        let e = Ensemble::new((0..4).map(model).collect()).unwrap();
        for (i, s) in samples().iter().enumerate() {
            let each = e.member_builds(s, 60, 3, i).unwrap();
            let expected = each.iter().filter_map(|b| b.length()).min();
            assert_eq!(e.build_minimum(s, 60, 3, i).unwrap().length(), expected);
        }
    }

    #[test]
    fn curve_is_monotone_and_starts_at_members() {
        let e = Ensemble::new((0..5).map(model).collect()).unwrap();
        let samples = samples();
        let orderings = random_orderings(5, 10, 4);
        let curve = ensemble_curve(&e, &samples, 60, &orderings, 8).unwrap();
        assert_eq!(curve.points.len(), 50);
        for (k, o) in orderings.iter().enumerate() {
            let pts: Vec<&CurvePoint> = curve.points.iter().filter(|p| p.ordering == k).collect();
            let solo = evaluate(&e.models()[o[0]], &samples, 60, member_seed(8, o[0])).unwrap();
            assert_eq!(pts[0].prop_infinite, solo.prop_infinite);
            assert_eq!(pts[0].mean_length, solo.mean_finite_length);
            for w in pts.windows(2) {
                assert!(w[1].prop_infinite <= w[0].prop_infinite);
            }
        }
        // Per-sample minima never grow along a prefix.
        for o in &orderings {
            for i in 0..samples.len() {
                let mut best: Option<usize> = None;
                for &j in o {
                    let next = match (best, curve.member_lengths[j][i]) {
                        (Some(x), Some(y)) => Some(x.min(y)),
                        (x, y) => x.or(y),
                    };
                    if let (Some(b), Some(n)) = (best, next) {
                        assert!(n <= b);
                    }
                    best = next;
                }
            }
        }
    }

    #[test]
    fn identical_members_agree_across_schemes() {
        let m = trained(3);
        let e = Ensemble::new(vec![m.clone(), m.clone(), m]).unwrap();
        for (i, s) in samples().iter().enumerate() {
            let rng = || eval_rng(1, i);
            let mean = e.build_mean(s, 300, &mut rng()).unwrap().length();
            let maj = e.build_majority(s, 300, &mut rng()).unwrap().length();
            let min = e.build_minimum(s, 300, 1, i).unwrap().length();
            assert_eq!(mean, maj);
            assert_eq!(mean, min);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Ensemble::new(Vec::new()).is_err());
        let other = ValueModel::init(EncoderConfig::new(5, 2, 1).unwrap(), 12, 0).unwrap();
        assert!(Ensemble::new(vec![model(0), other]).is_err());
        let e = Ensemble::new(vec![model(0), model(1)]).unwrap();
        assert!(ensemble_curve(&e, &samples(), 10, &[vec![0, 0]], 0).is_err());
        assert!("median".parse::<Scheme>().is_err());
        assert_eq!("min".parse::<Scheme>().unwrap(), Scheme::Minimum);
    }
}
