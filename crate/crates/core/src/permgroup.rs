//! Exact arithmetic in the symmetric group S₄.
//!
//! Permutations act on the four particle labels (or, for the hypercube
//! symmetries, on the four modes). Labels are 1-based wherever they cross the
//! public boundary (constructors, parsing, display, serialization) and 0-based
//! in storage.
//!
//! Composition follows the usual right-to-left convention,
//! `p.compose(&q)(α) = p(q(α))`, and cycle notation `(1 2 3)` means
//! `1 → 2 → 3 → 1`.
//!
//! ```
//! use fourfold::permgroup::{CycleStructure, Permutation};
//!
//! let kappa: Permutation = "(1 4 3)".parse().unwrap();
//! assert_eq!(kappa.cycle_structure(), CycleStructure::ThreeCycle);
//! assert_eq!(kappa.to_string(), "(1 4 3)");
//! assert_eq!(kappa.one_line(), [4, 2, 1, 3]);
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Number of points the group acts on.
pub const DEGREE: usize = 4;

/// Order of S₄.
pub const ORDER: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PermError {
    #[error("label {0} is outside 1..=4")]
    OutOfRange(usize),
    #[error("one-line notation {0:?} is not a bijection on 1..=4")]
    NotBijection([usize; 4]),
    #[error("cycle {0:?} repeats a label")]
    RepeatedLabel(Vec<usize>),
    #[error("a cycle must contain between 1 and 4 labels")]
    BadCycleLength,
    #[error("cannot parse permutation {input:?}: {reason}")]
    Parse { input: String, reason: String },
}

/// An element of S₄ stored in one-line notation (`images[α] = π(α)`, 0-based).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    images: [u8; 4],
}

impl Permutation {
    pub const IDENTITY: Permutation = Permutation { images: [0, 1, 2, 3] };

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    /// Builds a permutation from 1-based one-line notation, e.g. `[2, 1, 3, 4]`.
    pub fn from_one_line(images: [usize; 4]) -> Result<Self, PermError> {
        let mut seen = [false; 4];
        let mut out = [0u8; 4];
        for (slot, &image) in images.iter().enumerate() {
            if !(1..=DEGREE).contains(&image) {
                return Err(PermError::OutOfRange(image));
            }
            if seen[image - 1] {
                return Err(PermError::NotBijection(images));
            }
            seen[image - 1] = true;
            out[slot] = (image - 1) as u8;
        }
        Ok(Permutation { images: out })
    }

    /// Builds a permutation from 0-based images. Panics if `images` is not a bijection.
    pub(crate) fn from_zero_based(images: [u8; 4]) -> Self {
        let mut seen = [false; 4];
        for &i in &images {
            assert!((i as usize) < DEGREE && !seen[i as usize], "not a permutation: {images:?}");
            seen[i as usize] = true;
        }
        Permutation { images }
    }

    /// The product of disjoint cycles given in 1-based labels.
    pub fn from_cycles(cycles: &[Cycle]) -> Result<Self, PermError> {
        let mut images = [0u8, 1, 2, 3];
        let mut touched = [false; 4];
        for cycle in cycles {
            let entries = cycle.entries();
            for (k, &from) in entries.iter().enumerate() {
                if touched[from as usize] {
                    return Err(PermError::RepeatedLabel(
                        cycles.iter().flat_map(|c| c.one_based()).collect(),
                    ));
                }
                touched[from as usize] = true;
                images[from as usize] = entries[(k + 1) % entries.len()];
            }
        }
        Ok(Permutation { images })
    }

    /// Image of the 1-based point `alpha`, 1-based.
    #[inline]
    pub fn apply(&self, alpha: usize) -> usize {
        self.images[alpha - 1] as usize + 1
    }

    #[inline]
    fn apply0(&self, alpha: usize) -> usize {
        self.images[alpha] as usize
    }

    /// 0-based one-line images.
    #[inline]
    pub fn images(&self) -> [u8; 4] {
        self.images
    }

    /// 1-based one-line notation.
    pub fn one_line(&self) -> [usize; 4] {
        self.images.map(|i| i as usize + 1)
    }

    /// `self ∘ other`, i.e. `other` is applied first.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        Permutation {
            images: other.images.map(|i| self.images[i as usize]),
        }
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = [0u8; 4];
        for (alpha, &image) in self.images.iter().enumerate() {
            inv[image as usize] = alpha as u8;
        }
        Permutation { images: inv }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    pub fn fixes(&self, alpha: usize) -> bool {
        self.apply(alpha) == alpha
    }

    /// Disjoint cycles in canonical form, including fixed points.
    pub fn cycles(&self) -> Vec<Cycle> {
        let mut visited = [false; 4];
        let mut out = Vec::with_capacity(4);
        for start in 0..DEGREE {
            if visited[start] {
                continue;
            }
            let mut entries = [0u8; 4];
            let mut len = 0;
            let mut cur = start;
            while !visited[cur] {
                visited[cur] = true;
                entries[len] = cur as u8;
                len += 1;
                cur = self.apply0(cur);
            }
            // `start` is the smallest unvisited label, so the cycle is already canonical
            // and cycles come out ordered by their minimal element.
            out.push(Cycle { len: len as u8, entries });
        }
        out
    }

    /// Cycles of length two or more, as used in printed cycle notation.
    pub fn nontrivial_cycles(&self) -> Vec<Cycle> {
        self.cycles().into_iter().filter(|c| c.len() > 1).collect()
    }

    pub fn cycle_structure(&self) -> CycleStructure {
        let mut lengths: Vec<usize> = self.cycles().iter().map(Cycle::len).collect();
        lengths.sort_unstable();
        CycleStructure::from_lengths(&lengths).expect("cycle lengths of an S4 element always form a partition of 4")
    }

    /// `(-1)^(4 - number of cycles)`.
    pub fn sign(&self) -> i32 {
        if (DEGREE - self.cycles().len()).is_multiple_of(2) {
            1
        } else {
            -1
        }
    }

    pub fn decomposition(&self) -> CycleDecomposition {
        let cycles = self.cycles();
        let sign = if (DEGREE - cycles.len()).is_multiple_of(2) { 1 } else { -1 };
        CycleDecomposition {
            structure: self.cycle_structure(),
            cycles,
            sign,
        }
    }

    /// Position of `self` in [`enumerate_s4`] (lexicographic rank of the one-line notation).
    pub fn index(&self) -> usize {
        const FACT: [usize; 4] = [6, 2, 1, 0];
        let mut rank = 0;
        for i in 0..DEGREE {
            let smaller_later = self.images[i + 1..]
                .iter()
                .filter(|&&x| x < self.images[i])
                .count();
            rank += smaller_later * FACT[i];
        }
        rank
    }

    /// Inverse of [`Permutation::index`].
    pub fn from_index(index: usize) -> Permutation {
        assert!(index < ORDER, "S4 index {index} out of range");
        let mut pool: Vec<u8> = vec![0, 1, 2, 3];
        let mut rest = index;
        let mut images = [0u8; 4];
        for (i, fact) in [6usize, 2, 1, 1].iter().enumerate() {
            let k = rest / fact;
            rest %= fact;
            images[i] = pool.remove(k);
        }
        Permutation { images }
    }
}

/// All 24 elements in lexicographic order of their one-line notation.
///
/// Index 0 is the identity, index 23 is `[4, 3, 2, 1]`. External-state
/// matrices are indexed in this order.
pub fn enumerate_s4() -> [Permutation; ORDER] {
    std::array::from_fn(Permutation::from_index)
}

/// The Klein four-subgroup in the order `ε, (1 3)(2 4), (1 2)(3 4), (1 4)(2 3)`,
/// so that element `s` is the hypercube symmetry σ⁽ˢ⁾.
pub fn klein_four() -> [Permutation; 4] {
    [
        Permutation::IDENTITY,
        Permutation::from_zero_based([2, 3, 0, 1]),
        Permutation::from_zero_based([1, 0, 3, 2]),
        Permutation::from_zero_based([3, 2, 1, 0]),
    ]
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cycles = self.nontrivial_cycles();
        if cycles.is_empty() {
            return f.write_str("()");
        }
        for c in cycles {
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Permutation({self})")
    }
}

impl FromStr for Permutation {
    type Err = PermError;

    /// Accepts cycle notation (`"(1 2)(3 4)"`, `"(1,4,3)"`, `"()"`, `"e"`) or
    /// one-line notation in brackets (`"[2,1,3,4]"`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        let parse_err = |reason: &str| PermError::Parse {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        if trimmed.is_empty() || trimmed == "e" || trimmed == "ε" || trimmed == "id" {
            return Ok(Permutation::IDENTITY);
        }
        if let Some(body) = trimmed.strip_prefix('[') {
            let body = body.strip_suffix(']').ok_or_else(|| parse_err("missing ']'"))?;
            let labels = parse_labels(body).map_err(|r| parse_err(&r))?;
            let arr: [usize; 4] = labels
                .try_into()
                .map_err(|_| parse_err("one-line notation needs exactly 4 entries"))?;
            return Permutation::from_one_line(arr);
        }
        let mut cycles = Vec::new();
        let mut rest = trimmed;
        while !rest.is_empty() {
            let open = rest.strip_prefix('(').ok_or_else(|| parse_err("expected '('"))?;
            let close = open.find(')').ok_or_else(|| parse_err("unbalanced parenthesis"))?;
            let labels = parse_labels(&open[..close]).map_err(|r| parse_err(&r))?;
            if !labels.is_empty() {
                cycles.push(Cycle::new(&labels)?);
            }
            rest = open[close + 1..].trim_start();
        }
        Permutation::from_cycles(&cycles)
    }
}

fn parse_labels(body: &str) -> Result<Vec<usize>, String> {
    body.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().map_err(|e| format!("bad label {t:?}: {e}")))
        .collect()
}

impl Serialize for Permutation {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.one_line().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Permutation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = <[usize; 4]>::deserialize(deserializer)?;
        Permutation::from_one_line(raw).map_err(serde::de::Error::custom)
    }
}

/// A cyclic sequence of distinct labels, stored rotated so that it starts at
/// its minimal entry. Rotations of the same cycle therefore compare equal.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cycle {
    len: u8,
    entries: [u8; 4],
}

impl Cycle {
    /// Builds a cycle from 1-based labels.
    pub fn new(labels: &[usize]) -> Result<Self, PermError> {
        if labels.is_empty() || labels.len() > DEGREE {
            return Err(PermError::BadCycleLength);
        }
        let mut zero = Vec::with_capacity(labels.len());
        for &l in labels {
            if !(1..=DEGREE).contains(&l) {
                return Err(PermError::OutOfRange(l));
            }
            zero.push((l - 1) as u8);
        }
        Self::from_zero_based(&zero).ok_or_else(|| PermError::RepeatedLabel(labels.to_vec()))
    }

    /// Builds a cycle from 0-based labels; `None` on repeats or bad length.
    pub fn from_zero_based(labels: &[u8]) -> Option<Self> {
        let n = labels.len();
        if n == 0 || n > DEGREE || labels.iter().any(|&l| l as usize >= DEGREE) {
            return None;
        }
        for i in 0..n {
            if labels[i + 1..].contains(&labels[i]) {
                return None;
            }
        }
        let start = (0..n).min_by_key(|&i| labels[i]).unwrap();
        let mut entries = [0u8; 4];
        for k in 0..n {
            entries[k] = labels[(start + k) % n];
        }
        Some(Cycle { len: n as u8, entries })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// 0-based entries in canonical rotation.
    #[inline]
    pub fn entries(&self) -> &[u8] {
        &self.entries[..self.len as usize]
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.entries().iter().map(|&e| e as usize + 1).collect()
    }

    pub fn contains(&self, alpha: usize) -> bool {
        self.entries().iter().any(|&e| e as usize == alpha)
    }

    /// The inverse cycle `(γ ⋯ β α)` of `(α β ⋯ γ)`.
    pub fn reversed(&self) -> Cycle {
        let mut rev: Vec<u8> = self.entries().to_vec();
        rev.reverse();
        Cycle::from_zero_based(&rev).expect("reversal preserves validity")
    }

    pub fn to_permutation(&self) -> Permutation {
        Permutation::from_cycles(std::slice::from_ref(self)).expect("single cycle is always valid")
    }
}

impl fmt::Display for Cycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (k, e) in self.entries().iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}", e + 1)?;
        }
        f.write_str(")")
    }
}

impl fmt::Debug for Cycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cycle{self}")
    }
}

impl FromStr for Cycle {
    type Err = PermError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let body = s
            .trim()
            .strip_prefix('(')
            .and_then(|b| b.strip_suffix(')'))
            .ok_or_else(|| PermError::Parse {
                input: s.to_string(),
                reason: "expected a single parenthesised cycle".into(),
            })?;
        let labels = parse_labels(body).map_err(|reason| PermError::Parse {
            input: s.to_string(),
            reason,
        })?;
        Cycle::new(&labels)
    }
}

impl Serialize for Cycle {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.one_based().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Cycle {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Vec::<usize>::deserialize(deserializer)?;
        Cycle::new(&raw).map_err(serde::de::Error::custom)
    }
}

/// Partition of 4 given by the cycle lengths of a permutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CycleStructure {
    /// L = (1,1,1,1)
    Identity,
    /// L = (1,1,2)
    Transposition,
    /// L = (1,3)
    ThreeCycle,
    /// L = (2,2)
    DoubleTransposition,
    /// L = (4)
    FourCycle,
}

impl CycleStructure {
    pub const ALL: [CycleStructure; 5] = [
        CycleStructure::Identity,
        CycleStructure::Transposition,
        CycleStructure::ThreeCycle,
        CycleStructure::DoubleTransposition,
        CycleStructure::FourCycle,
    ];

    /// Cycle lengths in ascending order, fixed points included.
    pub fn lengths(&self) -> &'static [usize] {
        match self {
            CycleStructure::Identity => &[1, 1, 1, 1],
            CycleStructure::Transposition => &[1, 1, 2],
            CycleStructure::ThreeCycle => &[1, 3],
            CycleStructure::DoubleTransposition => &[2, 2],
            CycleStructure::FourCycle => &[4],
        }
    }

    /// Accepts lengths in any order.
    pub fn from_lengths(lengths: &[usize]) -> Option<Self> {
        let mut sorted = lengths.to_vec();
        sorted.sort_unstable();
        Self::ALL.into_iter().find(|s| s.lengths() == sorted.as_slice())
    }
}

impl fmt::Display for CycleStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.lengths().iter().map(|l| l.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleDecomposition {
    /// All cycles including fixed points, ordered by minimal element.
    pub cycles: Vec<Cycle>,
    pub structure: CycleStructure,
    pub sign: i32,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Permutation {
        s.parse().unwrap()
    }

    /// Brute-force Cayley table entry from one-line arrays, independent of `compose`.
    fn cayley(a: [usize; 4], b: [usize; 4]) -> [usize; 4] {
        let mut out = [0; 4];
        for i in 0..4 {
            out[i] = a[b[i] - 1];
        }
        out
    }

    #[test]
    fn identity_is_left_neutral() {
        for q in enumerate_s4() {
            assert_eq!(Permutation::identity().compose(&q), q);
            assert_eq!(q.compose(&Permutation::identity()), q);
        }
    }

    #[test]
    fn transposition_is_involution() {
        let t = p("(1 2)");
        assert!(t.compose(&t).is_identity());
    }

    #[test]
    fn compose_matches_cayley_table() {
        // (1 2)∘(2 3): 1→1→2, 2→3→3, 3→2→1, i.e. the 3-cycle (1 2 3).
        let prod = p("(1 2)").compose(&p("(2 3)"));
        assert_eq!(prod.one_line(), [2, 3, 1, 4]);
        assert_eq!(prod, p("(1 2 3)"));
        for a in enumerate_s4() {
            for b in enumerate_s4() {
                assert_eq!(a.compose(&b).one_line(), cayley(a.one_line(), b.one_line()));
            }
        }
    }

    #[test]
    fn example_cycle_structure() {
        let kappa = p("(2)(1 4 3)");
        let d = kappa.decomposition();
        assert_eq!(d.structure, CycleStructure::ThreeCycle);
        assert_eq!(d.structure.lengths(), &[1, 3]);
        assert_eq!(d.cycles.len(), 2);
        assert_eq!(kappa.to_string(), "(1 4 3)");
    }

    #[test]
    fn identity_decomposition() {
        let d = Permutation::identity().decomposition();
        assert_eq!(d.structure, CycleStructure::Identity);
        assert_eq!(d.sign, 1);
        assert_eq!(Permutation::identity().to_string(), "()");
    }

    #[test]
    fn double_transposition_class() {
        let d = p("(1 2)(3 4)").decomposition();
        assert_eq!(d.structure, CycleStructure::DoubleTransposition);
        assert_eq!(d.sign, 1);
        let count = enumerate_s4()
            .iter()
            .filter(|x| x.cycle_structure() == CycleStructure::DoubleTransposition)
            .count();
        assert_eq!(count, 3);
    }

    #[test]
    fn enumeration_order_and_class_sizes() {
        let all = enumerate_s4();
        assert!(all[0].is_identity());
        assert_eq!(all[23].one_line(), [4, 3, 2, 1]);
        for w in all.windows(2) {
            assert!(w[0].one_line() < w[1].one_line());
        }
        for (i, x) in all.iter().enumerate() {
            assert_eq!(x.index(), i);
        }
        let count = |s| all.iter().filter(|x| x.cycle_structure() == s).count();
        assert_eq!(count(CycleStructure::Identity), 1);
        assert_eq!(count(CycleStructure::Transposition), 6);
        assert_eq!(count(CycleStructure::ThreeCycle), 8);
        assert_eq!(count(CycleStructure::DoubleTransposition), 3);
        assert_eq!(count(CycleStructure::FourCycle), 6);
    }

    #[test]
    fn klein_four_elements_and_closure() {
        let k = klein_four();
        assert_eq!(k[1], p("(1 3)(2 4)"));
        assert_eq!(k[2], p("(1 2)(3 4)"));
        assert_eq!(k[3], p("(1 4)(2 3)"));
        assert_eq!(k[1].compose(&k[2]), k[3]);
        assert!(k.contains(&Permutation::identity()));
        for a in k {
            assert!(a.compose(&a).is_identity());
            for b in k {
                assert!(k.contains(&a.compose(&b)));
            }
        }
    }

    #[test]
    fn associativity_exhaustive() {
        let all = enumerate_s4();
        for a in &all {
            for b in &all {
                let ab = a.compose(b);
                for c in &all {
                    assert_eq!(ab.compose(c), a.compose(&b.compose(c)));
                }
            }
        }
    }

    #[test]
    fn sign_is_multiplicative_and_inverse_preserves_structure() {
        let all = enumerate_s4();
        for a in &all {
            assert_eq!(a.inverse().cycle_structure(), a.cycle_structure());
            assert!(a.compose(&a.inverse()).is_identity());
            for b in &all {
                assert_eq!(a.compose(b).sign(), a.sign() * b.sign());
            }
        }
    }

    #[test]
    fn cycles_are_canonical_and_rotation_invariant() {
        let a = Cycle::new(&[3, 1, 2]).unwrap();
        let b = Cycle::new(&[1, 2, 3]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.one_based(), vec![1, 2, 3]);
        assert_ne!(b, Cycle::new(&[1, 3, 2]).unwrap());
        assert_eq!(b.reversed(), Cycle::new(&[1, 3, 2]).unwrap());
        assert_eq!(b.to_permutation(), p("(1 2 3)"));
    }

    #[test]
    fn parsing_errors() {
        assert!(Cycle::new(&[1, 1]).is_err());
        assert!(Cycle::new(&[0]).is_err());
        assert!(Cycle::new(&[5]).is_err());
        assert!("(1 2)(2 3)".parse::<Permutation>().is_err());
        assert!("(1 2".parse::<Permutation>().is_err());
        assert!(Permutation::from_one_line([1, 1, 2, 3]).is_err());
        assert_eq!("[2,1,3,4]".parse::<Permutation>().unwrap(), p("(1 2)"));
        assert_eq!("(1,2)(3,4)".parse::<Permutation>().unwrap(), p("(1 2)(3 4)"));
    }

    #[test]
    fn json_uses_one_based_one_line() {
        let x = p("(1 2)");
        assert_eq!(serde_json::to_string(&x).unwrap(), "[2,1,3,4]");
        let back: Permutation = serde_json::from_str("[2,1,3,4]").unwrap();
        assert_eq!(back, x);
        assert!(serde_json::from_str::<Permutation>("[1,1,3,4]").is_err());
    }
}
