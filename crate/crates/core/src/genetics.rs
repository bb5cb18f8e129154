//! Sequences, sample states and the three backward-in-time events.
//!
//! A [`Sequence`] is a vector over {0, 1, ✱} stored as two bit masks, so
//! markers are limited to [`MAX_MARKERS`]. A [`State`] is a multiset of
//! sequences kept as a sorted `(sequence, multiplicity)` list; the sort key is
//! the allele-wise lexicographic order with `0 < 1 < ✱`, which makes the
//! entry list a canonical digest of the multiset.
//!
//! Breakpoint `k` splits a sequence between markers `k` and `k + 1`
//! (0-based): the left part keeps markers `0..=k`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{ArgError, Result};

pub const MAX_MARKERS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Allele {
    Zero,
    One,
    NonAncestral,
}

impl Allele {
    pub fn as_char(self) -> char {
        match self {
            Allele::Zero => '0',
            Allele::One => '1',
            Allele::NonAncestral => '*',
        }
    }

    pub fn from_char(c: char) -> Option<Allele> {
        match c {
            '0' => Some(Allele::Zero),
            '1' => Some(Allele::One),
            '*' | '✱' => Some(Allele::NonAncestral),
            _ => None,
        }
    }

    /// Base-3 digit used by the block encoder (`0 < 1 < ✱`).
    pub fn digit(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Sequence {
    len: u8,
    ancestral: u64,
    ones: u64,
}

fn mask(len: usize) -> u64 {
    if len >= 64 {
        u64::MAX
    } else {
        (1u64 << len) - 1
    }
}

impl Sequence {
    pub fn new(alleles: &[Allele]) -> Result<Sequence> {
        if alleles.is_empty() || alleles.len() > MAX_MARKERS {
            return Err(ArgError::InvalidSequence(format!(
                "length {} outside 1..={MAX_MARKERS}",
                alleles.len()
            )));
        }
        let mut ancestral = 0u64;
        let mut ones = 0u64;
        for (i, a) in alleles.iter().enumerate() {
            match a {
                Allele::Zero => ancestral |= 1 << i,
                Allele::One => {
                    ancestral |= 1 << i;
                    ones |= 1 << i;
                }
                Allele::NonAncestral => {}
            }
        }
        Ok(Sequence {
            len: alleles.len() as u8,
            ancestral,
            ones,
        })
    }

    /// Builds a sequence from raw masks. Bits beyond `len` are ignored.
    pub fn from_masks(len: usize, ancestral: u64, ones: u64) -> Result<Sequence> {
        if len == 0 || len > MAX_MARKERS {
            return Err(ArgError::InvalidSequence(format!(
                "length {len} outside 1..={MAX_MARKERS}"
            )));
        }
        let m = mask(len);
        let ancestral = ancestral & m;
        Ok(Sequence {
            len: len as u8,
            ancestral,
            ones: ones & ancestral,
        })
    }

    pub fn zeros(len: usize) -> Result<Sequence> {
        Sequence::from_masks(len, u64::MAX, 0)
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn ancestral_mask(&self) -> u64 {
        self.ancestral
    }

    pub fn ones_mask(&self) -> u64 {
        self.ones
    }

    pub fn get(&self, i: usize) -> Allele {
        if self.ancestral >> i & 1 == 0 {
            Allele::NonAncestral
        } else if self.ones >> i & 1 == 1 {
            Allele::One
        } else {
            Allele::Zero
        }
    }

    pub fn alleles(&self) -> impl Iterator<Item = Allele> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }

    pub fn ancestral_count(&self) -> usize {
        self.ancestral.count_ones() as usize
    }

    pub fn ones_count(&self) -> usize {
        self.ones.count_ones() as usize
    }

    pub fn has_one(&self) -> bool {
        self.ones != 0
    }

    pub fn is_fully_ancestral(&self) -> bool {
        self.ancestral == mask(self.len())
    }

    fn check_len(&self, other: &Sequence) -> Result<()> {
        if self.len != other.len {
            return Err(ArgError::LengthMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(())
    }

    /// Two sequences may coalesce when they carry the same allele at every
    /// marker where both are ancestral.
    pub fn is_coalescable(&self, other: &Sequence) -> Result<bool> {
        self.check_len(other)?;
        Ok(self.compatible_unchecked(other))
    }

    #[inline]
    pub(crate) fn compatible_unchecked(&self, other: &Sequence) -> bool {
        let shared = self.ancestral & other.ancestral;
        (self.ones ^ other.ones) & shared == 0
    }

    /// Ancestral material of both parents merged position-wise.
    pub fn coalesce(&self, other: &Sequence) -> Result<Sequence> {
        if !self.is_coalescable(other)? {
            return Err(ArgError::Incompatible(self.to_string(), other.to_string()));
        }
        Ok(self.merge_unchecked(other))
    }

    #[inline]
    pub(crate) fn merge_unchecked(&self, other: &Sequence) -> Sequence {
        Sequence {
            len: self.len,
            ancestral: self.ancestral | other.ancestral,
            ones: self.ones | other.ones,
        }
    }

    /// Legal breakpoints. Sequences with fewer than two ancestral markers or
    /// without any derived allele cannot recombine.
    pub fn recombination_points(&self) -> Vec<usize> {
        self.recombination_range().collect()
    }

    pub(crate) fn recombination_range(&self) -> std::ops::Range<usize> {
        if self.ancestral.count_ones() < 2 || self.ones == 0 {
            return 0..0;
        }
        let first = self.ancestral.trailing_zeros() as usize;
        let last = 63 - self.ancestral.leading_zeros() as usize;
        first..last
    }

    pub fn can_recombine_at(&self, breakpoint: usize) -> bool {
        self.recombination_range().contains(&breakpoint)
    }

    /// Splits between markers `breakpoint` and `breakpoint + 1`, returning the
    /// left and right halves.
    pub fn recombine(&self, breakpoint: usize) -> Result<(Sequence, Sequence)> {
        if !self.can_recombine_at(breakpoint) {
            return Err(ArgError::IllegalBreakpoint {
                sequence: self.to_string(),
                breakpoint,
            });
        }
        Ok(self.split_unchecked(breakpoint))
    }

    #[inline]
    pub(crate) fn split_unchecked(&self, breakpoint: usize) -> (Sequence, Sequence) {
        let left_mask = mask(breakpoint + 1);
        let left = Sequence {
            len: self.len,
            ancestral: self.ancestral & left_mask,
            ones: self.ones & left_mask,
        };
        let right = Sequence {
            len: self.len,
            ancestral: self.ancestral & !left_mask,
            ones: self.ones & !left_mask,
        };
        (left, right)
    }

    /// Removes the derived allele at `site` (1 -> 0).
    pub fn mutate(&self, site: usize) -> Result<Sequence> {
        if site >= self.len() || self.ones >> site & 1 == 0 {
            return Err(ArgError::InvalidSequence(format!(
                "no derived allele at site {site} of {self}"
            )));
        }
        Ok(Sequence {
            ones: self.ones & !(1 << site),
            ..*self
        })
    }

    #[inline]
    fn digit(&self, i: usize) -> u8 {
        if self.ancestral >> i & 1 == 0 {
            2
        } else {
            (self.ones >> i & 1) as u8
        }
    }
}

impl Ord for Sequence {
    fn cmp(&self, other: &Self) -> Ordering {
        let n = self.len.min(other.len) as usize;
        let diff = ((self.ancestral ^ other.ancestral) | (self.ones ^ other.ones)) & mask(n);
        if diff == 0 {
            return self.len.cmp(&other.len);
        }
        let i = diff.trailing_zeros() as usize;
        self.digit(i).cmp(&other.digit(i))
    }
}

impl PartialOrd for Sequence {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in self.alleles() {
            write!(f, "{}", a.as_char())?;
        }
        Ok(())
    }
}

impl fmt::Debug for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sequence({self})")
    }
}

impl FromStr for Sequence {
    type Err = ArgError;

    fn from_str(s: &str) -> Result<Sequence> {
        let alleles = s
            .chars()
            .map(|c| {
                Allele::from_char(c)
                    .ok_or_else(|| ArgError::InvalidSequence(format!("bad allele {c:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Sequence::new(&alleles)
    }
}

/// One backward-in-time event, identified by sequence types rather than
/// individual copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    /// Merge two compatible sequences; stored with `a <= b`.
    Coalesce(Sequence, Sequence),
    /// Remove the singleton derived allele at `site`.
    Mutate(Sequence, usize),
    /// Split between markers `k` and `k + 1`.
    Recombine(Sequence, usize),
}

impl Action {
    pub fn coalesce(a: Sequence, b: Sequence) -> Action {
        if a <= b {
            Action::Coalesce(a, b)
        } else {
            Action::Coalesce(b, a)
        }
    }

    pub fn is_coalescence(&self) -> bool {
        matches!(self, Action::Coalesce(..))
    }

    pub fn is_mutation(&self) -> bool {
        matches!(self, Action::Mutate(..))
    }

    pub fn is_recombination(&self) -> bool {
        matches!(self, Action::Recombine(..))
    }

    /// Sequences removed from and added to the state by this action. Only
    /// meaningful for legal actions.
    pub fn delta(&self) -> Delta {
        match *self {
            Action::Coalesce(a, b) => Delta {
                removed: [Some(a), Some(b)],
                added: [Some(a.merge_unchecked(&b)), None],
            },
            Action::Mutate(s, site) => Delta {
                removed: [Some(s), None],
                added: [
                    Some(Sequence {
                        ones: s.ones & !(1 << site),
                        ..s
                    }),
                    None,
                ],
            },
            Action::Recombine(s, k) => {
                let (l, r) = s.split_unchecked(k);
                Delta {
                    removed: [Some(s), None],
                    added: [Some(l), Some(r)],
                }
            }
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Coalesce(a, b) => write!(f, "coalesce({a}, {b})"),
            Action::Mutate(s, site) => write!(f, "mutate({s}, site {site})"),
            Action::Recombine(s, k) => write!(f, "recombine({s}, breakpoint {k})"),
        }
    }
}

/// Multiset change produced by an action: at most two sequences leave and at
/// most two arrive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delta {
    pub removed: [Option<Sequence>; 2],
    pub added: [Option<Sequence>; 2],
}

impl Delta {
    pub fn removed(&self) -> impl Iterator<Item = Sequence> + '_ {
        self.removed.iter().flatten().copied()
    }

    pub fn added(&self) -> impl Iterator<Item = Sequence> + '_ {
        self.added.iter().flatten().copied()
    }
}

/// A multiset of equal-length sequences.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    markers: usize,
    entries: Vec<(Sequence, u32)>,
}

impl State {
    /// Builds a state from `(sequence, multiplicity)` pairs. Repeated
    /// sequences are merged; zero multiplicities are dropped.
    pub fn from_counts<I>(markers: usize, counts: I) -> Result<State>
    where
        I: IntoIterator<Item = (Sequence, u32)>,
    {
        if markers == 0 || markers > MAX_MARKERS {
            return Err(ArgError::InvalidSequence(format!(
                "marker count {markers} outside 1..={MAX_MARKERS}"
            )));
        }
        let mut entries: Vec<(Sequence, u32)> = Vec::new();
        for (s, c) in counts {
            if s.len() != markers {
                return Err(ArgError::LengthMismatch {
                    expected: markers,
                    found: s.len(),
                });
            }
            if s.ancestral_count() == 0 {
                return Err(ArgError::InvalidSequence(format!(
                    "{s} carries no ancestral material"
                )));
            }
            if c > 0 {
                entries.push((s, c));
            }
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        entries.dedup_by(|later, earlier| {
            if later.0 == earlier.0 {
                earlier.1 += later.1;
                true
            } else {
                false
            }
        });
        if entries.is_empty() {
            return Err(ArgError::InvalidSequence("empty state".into()));
        }
        Ok(State { markers, entries })
    }

    pub fn from_sequences<I>(sequences: I) -> Result<State>
    where
        I: IntoIterator<Item = Sequence>,
    {
        let seqs: Vec<Sequence> = sequences.into_iter().collect();
        let markers = seqs.first().map(|s| s.len()).unwrap_or(0);
        State::from_counts(markers, seqs.into_iter().map(|s| (s, 1)))
    }

    /// Parses whitespace- or comma-separated allele strings, e.g.
    /// `"0011 1011 1000 1100"`.
    pub fn parse(text: &str) -> Result<State> {
        let seqs = text
            .split(|c: char| c.is_whitespace() || c == ',' || c == '{' || c == '}')
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Sequence>>>()?;
        State::from_sequences(seqs)
    }

    pub fn markers(&self) -> usize {
        self.markers
    }

    /// Distinct sequence types with their multiplicities, in canonical order.
    pub fn entries(&self) -> &[(Sequence, u32)] {
        &self.entries
    }

    pub fn types(&self) -> impl Iterator<Item = Sequence> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    /// Every sequence, repeated by multiplicity.
    pub fn sequences(&self) -> impl Iterator<Item = Sequence> + '_ {
        self.entries
            .iter()
            .flat_map(|&(s, c)| std::iter::repeat_n(s, c as usize))
    }

    pub fn distinct(&self) -> usize {
        self.entries.len()
    }

    pub fn total(&self) -> usize {
        self.entries.iter().map(|e| e.1 as usize).sum()
    }

    pub fn multiplicity(&self, s: &Sequence) -> u32 {
        match self.entries.binary_search_by(|e| e.0.cmp(s)) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0,
        }
    }

    pub fn contains(&self, s: &Sequence) -> bool {
        self.multiplicity(s) > 0
    }

    /// One copy of each type.
    pub fn deduplicated(&self) -> State {
        State {
            markers: self.markers,
            entries: self.entries.iter().map(|&(s, _)| (s, 1)).collect(),
        }
    }

    pub fn has_non_ancestral(&self) -> bool {
        self.types().any(|s| !s.is_fully_ancestral())
    }

    /// A single remaining sequence with no derived allele.
    pub fn is_terminal(&self) -> bool {
        self.entries.len() == 1 && self.entries[0].1 == 1 && !self.entries[0].0.has_one()
    }

    /// Number of derived alleles counted with multiplicity.
    pub fn ones_mass(&self) -> usize {
        self.entries
            .iter()
            .map(|&(s, c)| s.ones_count() * c as usize)
            .sum()
    }

    /// Number of sequences ancestral at `column`, counted with multiplicity.
    pub fn column_ancestral(&self, column: usize) -> usize {
        self.entries
            .iter()
            .filter(|(s, _)| s.ancestral >> column & 1 == 1)
            .map(|e| e.1 as usize)
            .sum()
    }

    /// Columns whose derived allele is carried by exactly one sequence, as a
    /// bit mask, together with the carrier lookup done by the caller.
    fn singleton_columns(&self) -> u64 {
        let mut seen_once = 0u64;
        let mut seen_more = 0u64;
        for &(s, c) in &self.entries {
            if c > 1 {
                seen_more |= s.ones;
            } else {
                seen_more |= seen_once & s.ones;
                seen_once |= s.ones;
            }
        }
        seen_once & !seen_more
    }

    /// `(sequence, site)` pairs where a mutation can be removed under the
    /// infinite-sites model.
    pub fn mutation_sites(&self) -> Vec<(Sequence, usize)> {
        let singletons = self.singleton_columns();
        let mut out = Vec::new();
        if singletons == 0 {
            return out;
        }
        for &(s, _) in &self.entries {
            let mut bits = s.ones & singletons;
            while bits != 0 {
                let site = bits.trailing_zeros() as usize;
                out.push((s, site));
                bits &= bits - 1;
            }
        }
        out
    }

    /// All legal actions: coalescences over unordered type pairs, then
    /// mutations, then recombinations. Empty for a terminal state.
    pub fn enumerate_actions(&self) -> Vec<Action> {
        let mut out = Vec::new();
        self.for_each_action(|a| out.push(a));
        out
    }

    pub fn for_each_action<F: FnMut(Action)>(&self, mut f: F) {
        if self.is_terminal() {
            return;
        }
        let e = &self.entries;
        for i in 0..e.len() {
            let (a, ca) = e[i];
            if ca >= 2 {
                f(Action::Coalesce(a, a));
            }
            for &(b, _) in &e[i + 1..] {
                if a.compatible_unchecked(&b) {
                    f(Action::Coalesce(a, b));
                }
            }
        }
        for (s, site) in self.mutation_sites() {
            f(Action::Mutate(s, site));
        }
        for &(s, _) in e {
            for k in s.recombination_range() {
                f(Action::Recombine(s, k));
            }
        }
    }

    pub fn is_legal(&self, action: &Action) -> bool {
        if self.is_terminal() {
            return false;
        }
        match *action {
            Action::Coalesce(a, b) => {
                if a > b || a.len() != self.markers || b.len() != self.markers {
                    return false;
                }
                let needed = if a == b { 2 } else { 1 };
                self.multiplicity(&a) >= needed
                    && self.contains(&b)
                    && a.compatible_unchecked(&b)
            }
            Action::Mutate(s, site) => {
                site < self.markers
                    && s.ones >> site & 1 == 1
                    && self.contains(&s)
                    && self.singleton_columns() >> site & 1 == 1
            }
            Action::Recombine(s, k) => self.contains(&s) && s.can_recombine_at(k),
        }
    }

    /// Applies a legal action, returning the successor state.
    pub fn apply(&self, action: &Action) -> Result<State> {
        if !self.is_legal(action) {
            return Err(ArgError::IllegalAction {
                action: action.to_string(),
            });
        }
        Ok(self.apply_unchecked(action))
    }

    pub(crate) fn apply_unchecked(&self, action: &Action) -> State {
        let mut next = self.clone();
        let delta = action.delta();
        for s in delta.removed() {
            next.remove_one(&s);
        }
        for s in delta.added() {
            next.add_one(s);
        }
        next
    }

    fn remove_one(&mut self, s: &Sequence) {
        let i = self
            .entries
            .binary_search_by(|e| e.0.cmp(s))
            .expect("removing absent sequence");
        if self.entries[i].1 == 1 {
            self.entries.remove(i);
        } else {
            self.entries[i].1 -= 1;
        }
    }

    fn add_one(&mut self, s: Sequence) {
        match self.entries.binary_search_by(|e| e.0.cmp(&s)) {
            Ok(i) => self.entries[i].1 += 1,
            Err(i) => self.entries.insert(i, (s, 1)),
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, s) in self.sequences().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, "}}")
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "State{self}")
    }
}
