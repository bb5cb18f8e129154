//! Block-multiset encoding of a state.
//!
//! Each sequence is cut into `P = (L - B + o) / o` overlapping blocks of `B`
//! markers. Component `i = P * j + p` (0-based) counts, with multiplicity,
//! the sequences whose block at position `p` is the `j`-th block in base-3
//! order with digits `0 < 1 < ✱` and the first marker most significant, so
//! for `B = 2` the order is `00, 01, 0✱, 10, 11, 1✱, ✱0, ✱1, ✱✱`.

use crate::error::{ArgError, Result};
use crate::genetics::{Allele, Sequence, State};

/// Tag written into checkpoints; bump if the block order ever changes.
pub const BLOCK_ORDER_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EncoderConfig {
    markers: usize,
    block: usize,
    shift: usize,
}

impl EncoderConfig {
    pub fn new(markers: usize, block: usize, shift: usize) -> Result<EncoderConfig> {
        if block == 0 || block > markers {
            return Err(ArgError::InvalidEncoder(format!(
                "block width {block} must lie in 1..={markers}"
            )));
        }
        if shift == 0 {
            return Err(ArgError::InvalidEncoder("shift must be at least 1".into()));
        }
        if (markers - block) % shift != 0 {
            return Err(ArgError::InvalidEncoder(format!(
                "(L - B) = {} is not divisible by the shift {shift}",
                markers - block
            )));
        }
        if block > 12 {
            return Err(ArgError::InvalidEncoder(format!(
                "block width {block} gives an impractical 3^B dimension"
            )));
        }
        Ok(EncoderConfig {
            markers,
            block,
            shift,
        })
    }

    pub fn markers(&self) -> usize {
        self.markers
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn shift(&self) -> usize {
        self.shift
    }

    /// Number of block positions `P`.
    pub fn positions(&self) -> usize {
        (self.markers - self.block + self.shift) / self.shift
    }

    pub fn block_types(&self) -> usize {
        3usize.pow(self.block as u32)
    }

    /// Feature dimension `d = 3^B * P`.
    pub fn dim(&self) -> usize {
        self.block_types() * self.positions()
    }

    /// Calls `f` with the feature index of each of the `P` blocks of `seq`.
    #[inline]
    pub fn for_each_index<F: FnMut(usize)>(&self, seq: &Sequence, mut f: F) {
        let p_count = self.positions();
        for p in 0..p_count {
            let start = p * self.shift;
            let mut j = 0usize;
            for t in 0..self.block {
                j = j * 3 + seq.get(start + t).digit();
            }
            f(p_count * j + p);
        }
    }

    pub fn indices(&self, seq: &Sequence) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.positions());
        self.for_each_index(seq, |i| out.push(i));
        out
    }

    /// The `j`-th block (0-based) in encoder order.
    pub fn block_at(&self, mut j: usize) -> Vec<Allele> {
        let digits = [Allele::Zero, Allele::One, Allele::NonAncestral];
        let mut out = vec![Allele::Zero; self.block];
        for slot in out.iter_mut().rev() {
            *slot = digits[j % 3];
            j /= 3;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector {
    values: Vec<u32>,
}

impl FeatureVector {
    pub fn zeros(dim: usize) -> FeatureVector {
        FeatureVector {
            values: vec![0; dim],
        }
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize) -> u32 {
        self.values[i]
    }

    /// `(index, count)` for every non-zero component.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, &v)| (i, v))
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }
}

impl From<Vec<u32>> for FeatureVector {
    fn from(values: Vec<u32>) -> Self {
        FeatureVector { values }
    }
}

pub fn encode(state: &State, cfg: &EncoderConfig) -> Result<FeatureVector> {
    if state.markers() != cfg.markers {
        return Err(ArgError::LengthMismatch {
            expected: cfg.markers,
            found: state.markers(),
        });
    }
    let mut x = FeatureVector::zeros(cfg.dim());
    for &(s, c) in state.entries() {
        cfg.for_each_index(&s, |i| x.values[i] += c);
    }
    Ok(x)
}

/// Four-gamete test on a raw sample: true when some pair of columns shows
/// all of `01`, `10` and `11`.
pub fn four_gamete_requires_recombination(state: &State) -> Result<bool> {
    if state.has_non_ancestral() {
        return Err(ArgError::InvalidSequence(
            "four-gamete test needs fully ancestral sequences".into(),
        ));
    }
    let l = state.markers();
    for i in 0..l {
        for j in i + 1..l {
            let (mut g01, mut g10, mut g11) = (false, false, false);
            for s in state.types() {
                let a = s.ones_mask() >> i & 1 == 1;
                let b = s.ones_mask() >> j & 1 == 1;
                match (a, b) {
                    (false, true) => g01 = true,
                    (true, false) => g10 = true,
                    (true, true) => g11 = true,
                    _ => {}
                }
            }
            if g01 && g10 && g11 {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(s: &str) -> State {
        State::parse(s).unwrap()
    }

    #[test]
    fn worked_example_vector() {
        let cfg = EncoderConfig::new(4, 2, 1).unwrap();
        assert_eq!(cfg.positions(), 3);
        assert_eq!(cfg.dim(), 27);
        let x = encode(&state("0000 0001"), &cfg).unwrap();
        let mut expected = vec![2, 2, 1, 0, 0, 1];
        expected.extend(std::iter::repeat_n(0, 21));
        assert_eq!(x.values(), expected.as_slice());
    }

    #[test]
    fn block_order_listing() {
        let cfg = EncoderConfig::new(4, 2, 1).unwrap();
        let names: Vec<String> = (0..9)
            .map(|j| cfg.block_at(j).iter().map(|a| a.as_char()).collect())
            .collect();
        assert_eq!(names, ["00", "01", "0*", "10", "11", "1*", "*0", "*1", "**"]);
    }

    #[test]
    fn dimensions() {
        let cfg = EncoderConfig::new(10, 3, 1).unwrap();
        assert_eq!(cfg.positions(), 8);
        assert_eq!(cfg.dim(), 216);
        assert_eq!(EncoderConfig::new(10, 2, 2).unwrap().dim(), 9 * 5);
        assert!(EncoderConfig::new(10, 3, 2).is_err());
        assert!(EncoderConfig::new(4, 5, 1).is_err());
        assert!(EncoderConfig::new(4, 2, 0).is_err());
    }

    #[test]
    fn per_position_sums_equal_total() {
        let cfg = EncoderConfig::new(4, 2, 1).unwrap();
        let s = state("0000 1*** *010 0010 0010");
        let x = encode(&s, &cfg).unwrap();
        for p in 0..cfg.positions() {
            let sum: u32 = (0..cfg.block_types()).map(|j| x.get(cfg.positions() * j + p)).sum();
            assert_eq!(sum as usize, s.total());
        }
    }

    #[test]
    fn linear_in_multiplicity() {
        let cfg = EncoderConfig::new(4, 3, 1).unwrap();
        let s = state("0100 1000 1010 0011");
        let doubled = state("0100 1000 1010 0011 0100 1000 1010 0011");
        let x = encode(&s, &cfg).unwrap();
        let x2 = encode(&doubled, &cfg).unwrap();
        let scaled: Vec<u32> = x.values().iter().map(|v| v * 2).collect();
        assert_eq!(x2.values(), scaled.as_slice());
    }

    #[test]
    fn length_mismatch() {
        let cfg = EncoderConfig::new(5, 2, 1).unwrap();
        assert!(matches!(
            encode(&state("0000"), &cfg),
            Err(ArgError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn four_gamete_cases() {
        assert!(four_gamete_requires_recombination(&state("0011 1011 1000 1100")).unwrap());
        assert!(!four_gamete_requires_recombination(&state("1 0 1")).unwrap());
        assert!(!four_gamete_requires_recombination(&state("0110")).unwrap());
        assert!(!four_gamete_requires_recombination(&state("001 011 100")).unwrap());
        assert!(four_gamete_requires_recombination(&state("1*00")).is_err());
    }
}
