//! Event-ordered genealogies and their text exports.
//!
//! The event log has one action per line: `C i j`, `M i site` or `R i k`,
//! where `i` and `j` index the distinct sequence types of the state *before*
//! the event, in canonical order (0-based), `site` is a 0-based marker and
//! `k` a 0-based breakpoint between markers `k` and `k + 1`. Lines starting
//! with `#` are comments.

use std::fmt::Write as _;

use crate::error::{ArgError, Result};
use crate::genetics::{Action, Sequence, State};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub action: Action,
    pub state: State,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Genealogy {
    initial: State,
    steps: Vec<Step>,
    terminated: bool,
}

impl Genealogy {
    pub fn new(initial: State) -> Genealogy {
        let terminated = initial.is_terminal();
        Genealogy {
            initial,
            steps: Vec::new(),
            terminated,
        }
    }

    /// Replays `actions` from `initial`, checking each one.
    pub fn replay(initial: &State, actions: &[Action]) -> Result<Genealogy> {
        let mut g = Genealogy::new(initial.clone());
        let mut state = initial.clone();
        for a in actions {
            state = state.apply(a)?;
            g.push(*a, state.clone());
        }
        g.finish();
        Ok(g)
    }

    pub fn push(&mut self, action: Action, state: State) {
        self.steps.push(Step { action, state });
    }

    /// Marks the genealogy terminated when its last state is terminal.
    pub fn finish(&mut self) {
        self.terminated = self.current().is_terminal();
    }

    pub fn initial(&self) -> &State {
        &self.initial
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn actions(&self) -> impl Iterator<Item = &Action> + '_ {
        self.steps.iter().map(|s| &s.action)
    }

    pub fn current(&self) -> &State {
        self.steps.last().map(|s| &s.state).unwrap_or(&self.initial)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn terminated(&self) -> bool {
        self.terminated
    }

    pub fn recombinations(&self) -> usize {
        self.actions().filter(|a| a.is_recombination()).count()
    }

    /// Undiscounted returns `G_t = -(T - t)` for `t = 0..T`.
    pub fn returns(&self) -> Vec<f64> {
        returns_for_length(self.len())
    }

    /// State before each step, `S_0 .. S_{T-1}`.
    pub fn visited(&self) -> impl Iterator<Item = &State> + '_ {
        std::iter::once(&self.initial)
            .chain(self.steps.iter().map(|s| &s.state))
            .take(self.steps.len())
    }

    pub fn event_log(&self) -> String {
        let mut out = String::new();
        let mut prev = &self.initial;
        for step in &self.steps {
            let idx = |s: &Sequence| {
                prev.entries()
                    .iter()
                    .position(|e| e.0 == *s)
                    .expect("action refers to a present type")
            };
            match &step.action {
                Action::Coalesce(a, b) => writeln!(out, "C {} {}", idx(a), idx(b)),
                Action::Mutate(s, site) => writeln!(out, "M {} {}", idx(s), site),
                Action::Recombine(s, k) => writeln!(out, "R {} {}", idx(s), k),
            }
            .expect("writing to a String");
            prev = &step.state;
        }
        out
    }

    pub fn parse_event_log(initial: &State, text: &str) -> Result<Genealogy> {
        let mut state = initial.clone();
        let mut g = Genealogy::new(initial.clone());
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| ArgError::Parse {
                line: lineno + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let num = |i: usize| -> Result<usize> {
                fields
                    .get(i)
                    .ok_or_else(|| err(format!("missing field {i} in {line:?}")))?
                    .parse()
                    .map_err(|_| err(format!("bad integer in {line:?}")))
            };
            if fields.len() != 3 {
                return Err(err(format!("expected 3 fields in {line:?}")));
            }
            let ty = |i: usize| -> Result<Sequence> {
                state
                    .entries()
                    .get(i)
                    .map(|e| e.0)
                    .ok_or_else(|| err(format!("type index {i} out of range")))
            };
            let action = match fields[0] {
                "C" => Action::coalesce(ty(num(1)?)?, ty(num(2)?)?),
                "M" => Action::Mutate(ty(num(1)?)?, num(2)?),
                "R" => Action::Recombine(ty(num(1)?)?, num(2)?),
                other => return Err(err(format!("unknown event {other:?}"))),
            };
            state = state.apply(&action)?;
            g.push(action, state.clone());
        }
        g.finish();
        Ok(g)
    }

    /// Graphviz digraph: ellipse nodes are lineages labelled by their allele
    /// string, box nodes are events. Edges run from the younger lineage
    /// through the event to its ancestor(s).
    pub fn to_dot(&self, name: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph {} {{", dot_id(name));
        let _ = writeln!(out, "  rankdir=BT;");
        let mut next = 0usize;
        let mut node = |out: &mut String, label: String, shape: &str| {
            let id = next;
            next += 1;
            let _ = writeln!(out, "  n{id} [label=\"{label}\", shape={shape}];");
            id
        };
        // Active lineages: (sequence, node id).
        let mut active: Vec<(Sequence, usize)> = Vec::new();
        for s in self.initial.sequences() {
            let id = node(&mut out, s.to_string(), "ellipse");
            active.push((s, id));
        }
        let take = |active: &mut Vec<(Sequence, usize)>, s: &Sequence| {
            let pos = active
                .iter()
                .position(|(t, _)| t == s)
                .expect("lineage present");
            active.remove(pos).1
        };
        for (i, step) in self.steps.iter().enumerate() {
            let (kind, detail) = match step.action {
                Action::Coalesce(..) => ("coalescence", String::new()),
                Action::Mutate(_, site) => ("mutation", format!(" site {site}")),
                Action::Recombine(_, k) => ("recombination", format!(" breakpoint {k}")),
            };
            let ev = node(&mut out, format!("{} {}{}", i + 1, kind, detail), "box");
            let delta = step.action.delta();
            for s in delta.removed() {
                let child = take(&mut active, &s);
                let _ = writeln!(out, "  n{child} -> n{ev} [label=\"{kind}{detail}\"];");
            }
            for s in delta.added() {
                let parent = node(&mut out, s.to_string(), "ellipse");
                let _ = writeln!(out, "  n{ev} -> n{parent} [label=\"{kind}{detail}\"];");
                active.push((s, parent));
            }
        }
        out.push_str("}\n");
        out
    }
}

pub fn returns_for_length(len: usize) -> Vec<f64> {
    (0..len).map(|t| -((len - t) as f64)).collect()
}

fn dot_id(name: &str) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    if cleaned.is_empty() || cleaned.starts_with(|c: char| c.is_ascii_digit()) {
        format!("g_{cleaned}")
    } else {
        cleaned
    }
}
