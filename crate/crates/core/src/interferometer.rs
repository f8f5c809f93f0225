//! The hypercube multiport, output events and their transition probabilities.
//!
//! Any 4×4 unitary can be simulated by brute force. The event classes, the
//! closed-form class probabilities and the symmetry coefficients K(κ,𝒮) and
//! A(κ,S⃗) are specific to the two-dimensional hypercube.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cmat::{self, CMatrix, C64};
use crate::external::{ExternalState, Quantifiers};
use crate::internal::{InternalEnsemble, TraceTable};
use crate::permgroup::{enumerate_s4, Permutation, ORDER};
use crate::tolerance::Tolerances;
use crate::Statistics;

/// Max |U U† − 1| entry accepted for a mode unitary.
pub const UNITARY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InterferometerError {
    #[error("mode unitary must be 4×4, got {0}×{1}")]
    Shape(usize, usize),
    #[error("matrix is not unitary (max defect {0:.3e})")]
    NotUnitary(f64),
    #[error("occupation {0:?} does not place exactly four particles")]
    BadOccupation(Vec<i64>),
    #[error("probability of {event} has imaginary residue {residue:.3e}")]
    ImaginaryResidue { event: OccupationEvent, residue: f64 },
    #[error("probability of {event} is negative ({value:.3e})")]
    NegativeProbability { event: OccupationEvent, value: f64 },
    #[error("probabilities sum to {0} instead of 1")]
    Normalization(f64),
    #[error("class {class} members disagree by {spread:.3e} on the hypercube")]
    SymmetryViolation { class: EventClass, spread: f64 },
    #[error("unknown event class {0:?}")]
    UnknownClass(String),
    #[error("statistics JSON: {0}")]
    Schema(String),
}

/// Single-particle unitary acting on the four external modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeUnitary {
    matrix: CMatrix,
}

impl ModeUnitary {
    pub fn new(matrix: CMatrix) -> Result<Self, InterferometerError> {
        if matrix.nrows() != 4 || matrix.ncols() != 4 {
            return Err(InterferometerError::Shape(matrix.nrows(), matrix.ncols()));
        }
        let defect = cmat::max_abs_diff(&(&matrix * matrix.adjoint()), &CMatrix::identity(4, 4));
        if defect > UNITARY_TOLERANCE {
            return Err(InterferometerError::NotUnitary(defect));
        }
        Ok(ModeUnitary { matrix })
    }

    /// ½[[1,i,i,−1],[i,1,−1,i],[i,−1,1,i],[−1,i,i,1]].
    pub fn hypercube() -> Self {
        let o = C64::new(0.5, 0.0);
        let i = C64::new(0.0, 0.5);
        let m = Matrix4::new(o, i, i, -o, i, o, -o, i, i, -o, o, i, -o, i, i, o);
        ModeUnitary { matrix: CMatrix::from_iterator(4, 4, m.iter().copied()) }
    }

    /// Haar-distributed unitary from the QR decomposition of a complex Gaussian matrix.
    pub fn haar_random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = CMatrix::from_fn(4, 4, |_, _| {
            C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        ModeUnitary { matrix: unitary_part(g) }
    }

    /// The unitary part of `U + strength·G` for a seeded complex Gaussian G.
    pub fn perturbed(&self, strength: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = CMatrix::from_fn(4, 4, |_, _| {
            C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        ModeUnitary { matrix: unitary_part(&self.matrix + g * C64::new(strength, 0.0)) }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// U_{k,j} for 1-based output mode `k` and input mode `j`.
    pub fn entry(&self, k: usize, j: usize) -> C64 {
        self.matrix[(k - 1, j - 1)]
    }

    pub fn is_hypercube(&self) -> bool {
        cmat::max_abs_diff(&self.matrix, ModeUnitary::hypercube().matrix()) <= 1e-12
    }
}

/// Q from a QR decomposition with the phases of R's diagonal absorbed.
fn unitary_part(m: CMatrix) -> CMatrix {
    let qr = m.qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = CMatrix::from_diagonal(&nalgebra::DVector::from_fn(4, |k, _| {
        let d = r[(k, k)];
        if d.norm() == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            d / d.norm()
        }
    }));
    q * phases
}

/// Rademacher function r(j,𝒮) = (−1)^⌊2^𝒮 (j−1)/4⌋ for mode j ∈ 1..=4 and 𝒮 ∈ {1,2}.
pub fn rademacher(j: usize, s: usize) -> i32 {
    assert!((1..=4).contains(&j) && (1..=2).contains(&s), "r({j},{s}) undefined");
    if ((1 << s) * (j - 1) / 4).is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// Walsh function: w(j,1) = r(j,1), w(j,2) = r(j,2), w(j,3) = r(j,1)·r(j,2).
pub fn walsh(j: usize, s: usize) -> i32 {
    match s {
        1 | 2 => rademacher(j, s),
        3 => rademacher(j, 1) * rademacher(j, 2),
        _ => panic!("w({j},{s}) undefined"),
    }
}

/// U_{k,j} = ½ exp(iπ/4·[2 − Σ_𝒮 r(k,𝒮) r(j,𝒮)]).
pub fn hypercube_from_rademacher() -> CMatrix {
    CMatrix::from_fn(4, 4, |k, j| {
        let s: i32 = (1..=2).map(|s| rademacher(k + 1, s) * rademacher(j + 1, s)).sum();
        C64::from_polar(0.5, std::f64::consts::FRAC_PI_4 * (2 - s) as f64)
    })
}

/// (Θ, U^S) with U = Θ U^S Θ, Θ_jj = exp(iπ/4 Σ_𝒮 [1 − r(j,𝒮)]) and U^S = ½[[1,1],[1,−1]]^⊗2.
pub fn sylvester_decomposition() -> (CMatrix, CMatrix) {
    let theta = CMatrix::from_diagonal(&nalgebra::DVector::from_fn(4, |j, _| {
        let s: i32 = (1..=2).map(|s| 1 - rademacher(j + 1, s)).sum();
        C64::from_polar(1.0, std::f64::consts::FRAC_PI_4 * s as f64)
    }));
    let sylvester = CMatrix::from_fn(4, 4, |k, j| {
        let w: i32 = (1..=2).map(|s| (1 - rademacher(k + 1, s)) * (1 - rademacher(j + 1, s)) / 4).sum();
        C64::new(if w % 2 == 0 { 0.5 } else { -0.5 }, 0.0)
    });
    (theta, sylvester)
}

/// H = c·A with A the adjacency of the square 1–2, 1–3, 2–4, 3–4 (ħ = 1).
pub fn hypercube_hamiltonian(c: f64) -> CMatrix {
    let edges = [(0, 1), (0, 2), (1, 3), (2, 3)];
    let mut h = CMatrix::zeros(4, 4);
    for (a, b) in edges {
        h[(a, b)] = C64::new(c, 0.0);
        h[(b, a)] = C64::new(c, 0.0);
    }
    h
}

/// exp(−iHt) for Hermitian H via its eigendecomposition.
pub fn evolve(h: &CMatrix, t: f64) -> CMatrix {
    let eig = h.clone().symmetric_eigen();
    let phases = CMatrix::from_diagonal(&eig.eigenvalues.map(|e| C64::from_polar(1.0, -e * t)));
    &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

/// K(κ,𝒮) = Σ_j w(j,𝒮) w(κ(j),𝒮) ∈ {4, 0, −4}.
pub fn coefficient_k(kappa: &Permutation, s: usize) -> i32 {
    (1..=4).map(|j| walsh(j, s) * walsh(kappa.apply(j), s)).sum()
}

/// An output mode occupation list S⃗.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OccupationEvent {
    occupation: [u8; 4],
}

impl OccupationEvent {
    pub fn new(occupation: [usize; 4]) -> Result<Self, InterferometerError> {
        if occupation.iter().sum::<usize>() != 4 {
            return Err(InterferometerError::BadOccupation(occupation.iter().map(|&x| x as i64).collect()));
        }
        Ok(OccupationEvent { occupation: occupation.map(|x| x as u8) })
    }

    pub fn occupation(&self) -> [usize; 4] {
        self.occupation.map(|x| x as usize)
    }

    /// Output mode assignment list F⃗: occupied modes in ascending order, 1-based.
    pub fn assignment(&self) -> [usize; 4] {
        let mut f = [0; 4];
        let mut k = 0;
        for (j, &n) in self.occupation.iter().enumerate() {
            for _ in 0..n {
                f[k] = j + 1;
                k += 1;
            }
        }
        f
    }

    /// 𝒮 = 24 / ∏_j S_j!.
    pub fn multiplicity(&self) -> f64 {
        let fact = |n: u8| (1..=n as u32).product::<u32>() as f64;
        24.0 / self.occupation.iter().map(|&n| fact(n)).product::<f64>()
    }

    /// S⃗_σ = (S_σ(1), …, S_σ(4)).
    pub fn permuted(&self, sigma: &Permutation) -> Self {
        OccupationEvent { occupation: std::array::from_fn(|j| self.occupation[sigma.apply(j + 1) - 1]) }
    }

    /// Number of particles in the given 1-based modes.
    fn count_in(&self, modes: [usize; 2]) -> u8 {
        modes.iter().map(|&m| self.occupation[m - 1]).sum()
    }

    pub fn class(&self) -> EventClass {
        classify_event(self)
    }
}

impl fmt::Display for OccupationEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = self.occupation;
        write!(f, "({},{},{},{})", o[0], o[1], o[2], o[3])
    }
}

impl Serialize for OccupationEvent {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.occupation().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for OccupationEvent {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = <[usize; 4]>::deserialize(deserializer)?;
        OccupationEvent::new(v).map_err(serde::de::Error::custom)
    }
}

/// All 35 occupation lists in reverse-lexicographic order, from (4,0,0,0) to (0,0,0,4).
pub fn all_events() -> Vec<OccupationEvent> {
    let mut out = Vec::with_capacity(35);
    for a in (0..=4).rev() {
        for b in (0..=4 - a).rev() {
            for c in (0..=4 - a - b).rev() {
                out.push(OccupationEvent { occupation: [a, b, c, 4 - a - b - c] });
            }
        }
    }
    out
}

/// The eleven classes of equiprobable events for the hypercube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventClass {
    F1I,
    F2I,
    F3I,
    F1II,
    F2II,
    F3II,
    AA,
    AB,
    A1,
    A2,
    A3,
}

/// Mode pairs {1,2}, {1,3}, {1,4} singled out by the symmetries 𝒮 = 1, 2, 3.
const SUBSETS: [[usize; 2]; 3] = [[1, 2], [1, 3], [1, 4]];

impl EventClass {
    pub const ALL: [EventClass; 11] = [
        EventClass::F1I,
        EventClass::F2I,
        EventClass::F3I,
        EventClass::F1II,
        EventClass::F2II,
        EventClass::F3II,
        EventClass::AA,
        EventClass::AB,
        EventClass::A1,
        EventClass::A2,
        EventClass::A3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventClass::F1I => "F1_I",
            EventClass::F2I => "F2_I",
            EventClass::F3I => "F3_I",
            EventClass::F1II => "F1_II",
            EventClass::F2II => "F2_II",
            EventClass::F3II => "F3_II",
            EventClass::AA => "A_A",
            EventClass::AB => "A_B",
            EventClass::A1 => "A_1",
            EventClass::A2 => "A_2",
            EventClass::A3 => "A_3",
        }
    }

    /// Position in [`EventClass::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    /// Number of member events.
    pub fn size(self) -> usize {
        match self {
            EventClass::AA => 1,
            EventClass::A1 | EventClass::A2 | EventClass::A3 => 2,
            _ => 4,
        }
    }

    /// The symmetry label 𝒮 ∈ {1,2,3}, if the class carries one.
    pub fn symmetry(self) -> Option<usize> {
        match self {
            EventClass::F1I | EventClass::F1II | EventClass::A1 => Some(1),
            EventClass::F2I | EventClass::F2II | EventClass::A2 => Some(2),
            EventClass::F3I | EventClass::F3II | EventClass::A3 => Some(3),
            EventClass::AA | EventClass::AB => None,
        }
    }

    /// Forbidden for ideal bosons.
    pub fn is_forbidden(self) -> bool {
        self.index() < 6
    }

    pub fn f_type_one(s: usize) -> Self {
        [EventClass::F1I, EventClass::F2I, EventClass::F3I][s - 1]
    }

    pub fn f_type_two(s: usize) -> Self {
        [EventClass::F1II, EventClass::F2II, EventClass::F3II][s - 1]
    }

    pub fn a_symmetric(s: usize) -> Self {
        [EventClass::A1, EventClass::A2, EventClass::A3][s - 1]
    }

    pub fn members(self) -> Vec<OccupationEvent> {
        all_events().into_iter().filter(|e| classify_event(e) == self).collect()
    }
}

impl fmt::Display for EventClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EventClass {
    type Err = InterferometerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| InterferometerError::UnknownClass(s.to_string()))
    }
}

impl Serialize for EventClass {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for EventClass {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Class of an event, from its occupation pattern and the parity of the
/// particle number in the mode pairs {1,2}, {1,3}, {1,4}.
pub fn classify_event(event: &OccupationEvent) -> EventClass {
    let mut pattern = event.occupation;
    pattern.sort_unstable_by(|a, b| b.cmp(a));
    let even = |s: usize| event.count_in(SUBSETS[s - 1]).is_multiple_of(2);
    let unique_even = || (1..=3).find(|&s| even(s)).expect("odd patterns have one even pair");
    match pattern {
        [4, 0, 0, 0] => EventClass::AB,
        [1, 1, 1, 1] => EventClass::AA,
        [3, 1, 0, 0] => EventClass::f_type_one(unique_even()),
        [2, 1, 1, 0] => EventClass::f_type_two(unique_even()),
        [2, 2, 0, 0] => {
            let s = (1..=3)
                .find(|&s| matches!(event.count_in(SUBSETS[s - 1]), 0 | 4))
                .expect("one pair holds all or none");
            EventClass::a_symmetric(s)
        }
        _ => unreachable!("four particles in four modes"),
    }
}

/// ∏_α U_{F_α, π(α)} for every labelling π, in enumeration order.
fn amplitudes(u: &ModeUnitary, event: &OccupationEvent) -> [C64; ORDER] {
    let f = event.assignment();
    let perms = enumerate_s4();
    std::array::from_fn(|k| (1..=4).map(|a| u.entry(f[a - 1], perms[k].apply(a))).product())
}

/// p_S⃗ = 𝒮 Σ_{π,π′} [ρ_E]_{π,π′} ∏_α U_{F_α,π(α)} U*_{F_α,π′(α)}, evaluated in a fixed order.
pub fn event_probability(
    state: &ExternalState,
    u: &ModeUnitary,
    event: &OccupationEvent,
    tol: &Tolerances,
) -> Result<f64, InterferometerError> {
    let amp = amplitudes(u, event);
    let rho = state.matrix();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..ORDER {
        let mut row = C64::new(0.0, 0.0);
        for j in 0..ORDER {
            row += rho[(i, j)] * amp[j].conj();
        }
        acc += amp[i] * row;
    }
    acc *= event.multiplicity();
    if acc.im.abs() > tol.imag_residue {
        return Err(InterferometerError::ImaginaryResidue { event: *event, residue: acc.im.abs() });
    }
    if acc.re < -tol.negative_clamp {
        return Err(InterferometerError::NegativeProbability { event: *event, value: acc.re });
    }
    Ok(acc.re.max(0.0))
}

/// Brute-force transition probability of one event.
pub fn transition_probability(
    ensemble: &InternalEnsemble,
    u: &ModeUnitary,
    event: &OccupationEvent,
    tol: &Tolerances,
) -> Result<f64, InterferometerError> {
    event_probability(&ExternalState::from_ensemble(ensemble), u, event, tol)
}

/// A(κ,S⃗) = 𝒮 Σ_π ∏_α U_{F_α,κ(π(α))} U*_{F_α,π(α)}, which may be complex for a general U.
pub fn coefficient_a_complex(kappa: &Permutation, event: &OccupationEvent, u: &ModeUnitary) -> C64 {
    let amp = amplitudes(u, event);
    let perms = enumerate_s4();
    let sum: C64 = perms.iter().map(|p| amp[kappa.compose(p).index()] * amp[p.index()].conj()).sum();
    sum * event.multiplicity()
}

/// A(κ,S⃗), which is real for the hypercube.
pub fn coefficient_a(
    kappa: &Permutation,
    event: &OccupationEvent,
    u: &ModeUnitary,
    tol: &Tolerances,
) -> Result<f64, InterferometerError> {
    let a = coefficient_a_complex(kappa, event, u);
    if a.im.abs() > tol.imag_residue {
        return Err(InterferometerError::ImaginaryResidue { event: *event, residue: a.im.abs() });
    }
    Ok(a.re)
}

/// Pairs (α β) forming σ^(𝒮)_1, σ^(𝒮)_2 and the four-cycle tied to symmetry 𝒮.
pub fn symmetry_pairs(s: usize) -> [(usize, usize); 2] {
    [[(1, 3), (2, 4)], [(1, 2), (3, 4)], [(1, 4), (2, 3)]][s - 1]
}

pub fn symmetry_four_cycle(s: usize) -> [usize; 4] {
    [[1, 2, 3, 4], [1, 3, 2, 4], [1, 2, 4, 3]][s - 1]
}

/// Closed-form single-event probability of `class` from trace products.
pub fn closed_form_from_table(t: &TraceTable, statistics: Statistics, class: EventClass) -> f64 {
    let pm = statistics.pm();
    let q = Quantifiers::from_table(t);
    let own = |s: usize| {
        let [(a, b), (c, d)] = symmetry_pairs(s);
        (t.pair(a, b), t.pair(c, d))
    };
    let cos4 = |s: usize| t.real_part(&symmetry_four_cycle(s));
    let products: [f64; 3] = std::array::from_fn(|k| {
        let (x, y) = own(k + 1);
        x * y
    });
    let others = |s: usize| products.iter().sum::<f64>() - products[s - 1];
    match class {
        EventClass::F1I | EventClass::F2I | EventClass::F3I => {
            let s = class.symmetry().unwrap();
            let (x, y) = own(s);
            (1.0 + pm * (x + y) + x * y - others(s) - 2.0 * pm * cos4(s)) / 64.0
        }
        EventClass::F1II | EventClass::F2II | EventClass::F3II => {
            let s = class.symmetry().unwrap();
            let (x, y) = own(s);
            (3.0 - pm * (x + y) + 3.0 * x * y - 3.0 * others(s) + 2.0 * pm * cos4(s)) / 64.0
        }
        EventClass::AA => (3.0 - pm * q.i112 + q.i13 + 3.0 * q.i22 - pm * q.i4) / 32.0,
        EventClass::AB => (1.0 + pm * q.i112 + q.i13 + q.i22 + pm * q.i4) / 256.0,
        EventClass::A1 | EventClass::A2 | EventClass::A3 => {
            let s = class.symmetry().unwrap();
            let (x, y) = own(s);
            (3.0 - pm * q.i112 - q.i13 + 3.0 * q.i22 - pm * q.i4 + 4.0 * pm * (x + y) + 8.0 * pm * cos4(s)) / 128.0
        }
    }
}

/// Closed-form single-event probability of `class` for the hypercube.
pub fn closed_form_class_probability(ensemble: &InternalEnsemble, class: EventClass) -> f64 {
    closed_form_from_table(&ensemble.trace_table(), ensemble.statistics(), class)
}

/// All 35 event probabilities plus their class averages.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputStatistics {
    pub per_event: Vec<(OccupationEvent, f64)>,
    pub per_class: [f64; 11],
    /// Max − min probability within each class.
    pub class_spread: [f64; 11],
    pub statistics: Statistics,
}

impl OutputStatistics {
    /// Assembles statistics from per-event probabilities in [`all_events`] order.
    pub fn from_events(per_event: Vec<(OccupationEvent, f64)>, statistics: Statistics) -> Self {
        let mut sum = [0.0; 11];
        let mut lo = [f64::INFINITY; 11];
        let mut hi = [f64::NEG_INFINITY; 11];
        for (e, p) in &per_event {
            let k = classify_event(e).index();
            sum[k] += p;
            lo[k] = lo[k].min(*p);
            hi[k] = hi[k].max(*p);
        }
        let per_class = std::array::from_fn(|k| sum[k] / EventClass::ALL[k].size() as f64);
        let class_spread = std::array::from_fn(|k| hi[k] - lo[k]);
        OutputStatistics { per_event, per_class, class_spread, statistics }
    }

    pub fn total(&self) -> f64 {
        self.per_event.iter().map(|(_, p)| p).sum()
    }

    pub fn probability(&self, event: &OccupationEvent) -> f64 {
        self.per_event.iter().find(|(e, _)| e == event).map(|(_, p)| *p).unwrap_or(0.0)
    }

    pub fn class_probability(&self, class: EventClass) -> f64 {
        self.per_class[class.index()]
    }

    pub fn max_spread(&self) -> f64 {
        self.class_spread.iter().copied().fold(0.0, f64::max)
    }
}

/// Event probabilities of an external state.
pub fn statistics_of_state(
    state: &ExternalState,
    u: &ModeUnitary,
    tol: &Tolerances,
) -> Result<OutputStatistics, InterferometerError> {
    let per_event = all_events()
        .into_iter()
        .map(|e| event_probability(state, u, &e, tol).map(|p| (e, p)))
        .collect::<Result<Vec<_>, _>>()?;
    let out = OutputStatistics::from_events(per_event, state.statistics());
    let total = out.total();
    if (total - 1.0).abs() > tol.normalization {
        return Err(InterferometerError::Normalization(total));
    }
    if u.is_hypercube() {
        for class in EventClass::ALL {
            let spread = out.class_spread[class.index()];
            if spread > tol.symmetry {
                return Err(InterferometerError::SymmetryViolation { class, spread });
            }
        }
    }
    Ok(out)
}

/// Brute-force statistics of all 35 events.
pub fn full_statistics(
    ensemble: &InternalEnsemble,
    u: &ModeUnitary,
    tol: &Tolerances,
) -> Result<OutputStatistics, InterferometerError> {
    statistics_of_state(&ExternalState::from_ensemble(ensemble), u, tol)
}

/// JSON form of [`OutputStatistics`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputStatisticsJson {
    pub per_event: Vec<EventProbability>,
    pub per_class: BTreeMap<EventClass, f64>,
    pub statistics: Statistics,
    /// Whether every internal state was pure, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pure: Option<bool>,
    /// Particle made fully distinguishable before the run, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marked: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventProbability {
    #[serde(rename = "S")]
    pub s: OccupationEvent,
    pub p: f64,
}

impl OutputStatisticsJson {
    pub fn new(stats: &OutputStatistics, pure: Option<bool>, marked: Option<usize>) -> Self {
        OutputStatisticsJson {
            per_event: stats.per_event.iter().map(|&(s, p)| EventProbability { s, p }).collect(),
            per_class: EventClass::ALL.iter().map(|&c| (c, stats.class_probability(c))).collect(),
            statistics: stats.statistics,
            pure,
            marked,
        }
    }

    /// Rebuilds statistics from the per-event list, checking coverage and normalization.
    pub fn to_statistics(&self, tol: &Tolerances) -> Result<OutputStatistics, InterferometerError> {
        let mut per_event = Vec::with_capacity(35);
        for e in all_events() {
            let hits: Vec<f64> = self.per_event.iter().filter(|x| x.s == e).map(|x| x.p).collect();
            match hits.as_slice() {
                [p] if p.is_finite() && *p >= -tol.negative_clamp => per_event.push((e, p.max(0.0))),
                [p] => return Err(InterferometerError::NegativeProbability { event: e, value: *p }),
                [] => return Err(InterferometerError::Schema(format!("missing event {e}"))),
                _ => return Err(InterferometerError::Schema(format!("event {e} listed twice"))),
            }
        }
        if self.per_event.len() != 35 {
            return Err(InterferometerError::Schema(format!("expected 35 events, got {}", self.per_event.len())));
        }
        let out = OutputStatistics::from_events(per_event, self.statistics);
        let total = out.total();
        if (total - 1.0).abs() > tol.normalization {
            return Err(InterferometerError::Normalization(total));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::internal::random;
    use crate::permgroup::klein_four;
    use approx::assert_abs_diff_eq;

    fn ev(s: [usize; 4]) -> OccupationEvent {
        OccupationEvent::new(s).unwrap()
    }

    #[test]
    fn hypercube_entries() {
        let u = ModeUnitary::hypercube();
        assert_eq!(u.entry(1, 1), C64::new(0.5, 0.0));
        assert_eq!(u.entry(1, 4), C64::new(-0.5, 0.0));
        assert_eq!(u.matrix(), &u.matrix().transpose());
        ModeUnitary::new(u.matrix().clone()).unwrap();
        assert!(cmat::max_abs_diff(&hypercube_from_rademacher(), u.matrix()) <= 1e-15);
    }

    #[test]
    fn sylvester_and_hamiltonian_forms() {
        let (theta, us) = sylvester_decomposition();
        let u = ModeUnitary::hypercube();
        assert!(cmat::max_abs_diff(&(&theta * us * &theta), u.matrix()) < 1e-15);
        let c = 0.7;
        let h = hypercube_hamiltonian(c);
        let evolved = evolve(&h, -std::f64::consts::PI / (4.0 * c));
        assert!(cmat::max_abs_diff(&evolved, u.matrix()) < 1e-10);
    }

    #[test]
    fn rademacher_and_walsh_table() {
        let r1: Vec<i32> = (1..=4).map(|j| rademacher(j, 1)).collect();
        let r2: Vec<i32> = (1..=4).map(|j| rademacher(j, 2)).collect();
        assert_eq!(r1, [1, 1, -1, -1]);
        assert_eq!(r2, [1, -1, 1, -1]);
        assert_eq!(rademacher(3, 1), -1);
        assert_eq!(walsh(4, 3), 1);
        for j in 1..=4 {
            assert_eq!(walsh(j, 3), rademacher(j, 1) * rademacher(j, 2));
        }
    }

    #[test]
    fn k_coefficients() {
        for s in 1..=3 {
            assert_eq!(coefficient_k(&Permutation::IDENTITY, s), 4);
            let mut hist = BTreeMap::new();
            for k in enumerate_s4() {
                *hist.entry(coefficient_k(&k, s)).or_insert(0) += 1;
            }
            assert_eq!(hist, BTreeMap::from([(-4, 4), (0, 16), (4, 4)]));
        }
        assert_eq!(coefficient_k(&"(1 2)(3 4)".parse().unwrap(), 2), -4);
    }

    #[test]
    fn event_enumeration_and_classes() {
        let events = all_events();
        assert_eq!(events.len(), 35);
        assert_eq!(events[0].occupation(), [4, 0, 0, 0]);
        assert_eq!(events[1].occupation(), [3, 1, 0, 0]);
        assert_eq!(events[34].occupation(), [0, 0, 0, 4]);
        assert!(events.windows(2).all(|w| w[0] > w[1]));
        let sizes: Vec<usize> = EventClass::ALL.iter().map(|c| c.members().len()).collect();
        assert_eq!(sizes, [4, 4, 4, 4, 4, 4, 1, 4, 2, 2, 2]);
        for c in EventClass::ALL {
            assert_eq!(c.size(), c.members().len());
        }
        assert_eq!(ev([1, 1, 2, 0]).class(), EventClass::F1II);
        assert_eq!(ev([1, 1, 1, 1]).class(), EventClass::AA);
        assert_eq!(ev([0, 3, 0, 1]).class(), EventClass::F2I);
        assert_eq!(ev([0, 1, 1, 2]).class(), EventClass::F3II);
        assert_eq!(ev([0, 2, 2, 0]).class(), EventClass::A3);
        assert!(OccupationEvent::new([1, 1, 1, 0]).is_err());
    }

    #[test]
    fn classes_are_klein_orbits() {
        for e in all_events() {
            for sigma in klein_four() {
                assert_eq!(e.permuted(&sigma).class(), e.class());
            }
        }
    }

    #[test]
    fn assignment_and_multiplicity() {
        let e = ev([1, 1, 2, 0]);
        assert_eq!(e.assignment(), [1, 2, 3, 3]);
        assert_eq!(e.multiplicity(), 12.0);
        assert_eq!(ev([4, 0, 0, 0]).multiplicity(), 1.0);
        assert_eq!(ev([1, 1, 1, 1]).multiplicity(), 24.0);
    }

    #[test]
    fn a_coefficient_examples() {
        let u = ModeUnitary::hypercube();
        let tol = Tolerances::default();
        let a = coefficient_a(&"(1 3)".parse().unwrap(), &ev([3, 1, 0, 0]), &u, &tol).unwrap();
        assert_abs_diff_eq!(a, 3.0 / 8.0, epsilon = 1e-14);
        // κ = ε: the distinguishable-particle probability of the event times 24.
        let e = ev([2, 1, 1, 0]);
        let classical = transition_probability(&InternalEnsemble::distinguishable(Statistics::Boson), &u, &e, &tol).unwrap();
        let a0 = coefficient_a(&Permutation::IDENTITY, &e, &u, &tol).unwrap();
        assert_abs_diff_eq!(a0, 24.0 * classical, epsilon = 1e-14);
    }

    #[test]
    fn distinguishable_table() {
        let u = ModeUnitary::hypercube();
        let s = full_statistics(&InternalEnsemble::distinguishable(Statistics::Boson), &u, &Tolerances::default()).unwrap();
        let expect = [1.0 / 64.0, 3.0 / 64.0, 3.0 / 32.0, 1.0 / 256.0, 3.0 / 128.0];
        let idx = |c: EventClass| match c {
            EventClass::F1I | EventClass::F2I | EventClass::F3I => 0,
            EventClass::F1II | EventClass::F2II | EventClass::F3II => 1,
            EventClass::AA => 2,
            EventClass::AB => 3,
            _ => 4,
        };
        for c in EventClass::ALL {
            assert_abs_diff_eq!(s.class_probability(c), expect[idx(c)], epsilon = 1e-15);
        }
        assert_abs_diff_eq!(s.total(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn ideal_limits() {
        let u = ModeUnitary::hypercube();
        let tol = Tolerances::default();
        let b = full_statistics(&InternalEnsemble::indistinguishable(Statistics::Boson, 1), &u, &tol).unwrap();
        for (e, p) in &b.per_event {
            if e.class().is_forbidden() {
                assert!(*p <= 1e-12, "{e}: {p}");
            }
        }
        assert_abs_diff_eq!(b.class_probability(EventClass::AA), 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(b.class_probability(EventClass::AB), 3.0 / 32.0, epsilon = 1e-14);
        assert_abs_diff_eq!(b.class_probability(EventClass::A2), 1.0 / 16.0, epsilon = 1e-14);
        let f = full_statistics(&InternalEnsemble::indistinguishable(Statistics::Fermion, 1), &u, &tol).unwrap();
        assert_abs_diff_eq!(f.class_probability(EventClass::AA), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn closed_form_matches_brute_force() {
        let u = ModeUnitary::hypercube();
        let tol = Tolerances::default();
        for seed in 0..6 {
            let stats = if seed % 2 == 0 { Statistics::Boson } else { Statistics::Fermion };
            let e = random::mixed_ensemble(3, stats, seed);
            let s = full_statistics(&e, &u, &tol).unwrap();
            for c in EventClass::ALL {
                assert_abs_diff_eq!(s.class_probability(c), closed_form_class_probability(&e, c), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn random_unitary_is_accepted_without_symmetry() {
        let u = ModeUnitary::haar_random(5);
        assert!(!u.is_hypercube());
        let e = random::pure_ensemble(2, Statistics::Boson, 2);
        let s = full_statistics(&e, &u, &Tolerances::default()).unwrap();
        assert_abs_diff_eq!(s.total(), 1.0, epsilon = 1e-12);
        assert!(s.max_spread() > 1e-3);
    }

    #[test]
    fn rejects_non_unitary() {
        assert!(matches!(ModeUnitary::new(CMatrix::identity(4, 4) * C64::new(2.0, 0.0)), Err(InterferometerError::NotUnitary(_))));
        assert!(matches!(ModeUnitary::new(CMatrix::identity(3, 3)), Err(InterferometerError::Shape(3, 3))));
    }

    #[test]
    fn statistics_json_round_trip() {
        let u = ModeUnitary::hypercube();
        let tol = Tolerances::default();
        let s = full_statistics(&random::mixed_ensemble(2, Statistics::Fermion, 3), &u, &tol).unwrap();
        let json = serde_json::to_string(&OutputStatisticsJson::new(&s, Some(false), None)).unwrap();
        assert!(json.starts_with("{\"per_event\":[{\"S\":[4,0,0,0],\"p\":"));
        let back: OutputStatisticsJson = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_statistics(&tol).unwrap(), s);
        let mut broken = back.clone();
        broken.per_event.pop();
        assert!(broken.to_statistics(&tol).is_err());
    }
}
