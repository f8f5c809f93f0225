//! Internal (non-dynamical) single-particle states and the overlaps between them.
//!
//! The four particles are uncorrelated internally, ρ = ρ₁⊗ρ₂⊗ρ₃⊗ρ₄. Every
//! interference effect downstream depends on the ensemble only through the
//! trace products `Tr(ρ_α ρ_β ⋯ ρ_γ)` over cycles of particle labels, whose
//! polar decomposition `T·e^{iφ}` defines the collective phase φ.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cmat::{self, CMatrix, MatrixRepr, C64};
use crate::permgroup::{enumerate_s4, Cycle};
use crate::tolerance::Tolerances;
use crate::Statistics;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InternalError {
    #[error("density matrix must be square and non-empty, got {rows}×{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("density matrix is not Hermitian (max defect {0:.3e})")]
    NotHermitian(f64),
    #[error("density matrix has trace {0} instead of 1")]
    BadTrace(f64),
    #[error("density matrix is not positive semi-definite (min eigenvalue {0:.3e})")]
    NotPositive(f64),
    #[error("state vector has zero norm")]
    ZeroVector,
    #[error("particle states have different dimensions {0:?}")]
    DimensionMismatch([usize; 4]),
    #[error("particle label {0} is outside 1..=4")]
    BadParticle(usize),
    #[error("cannot impose {constraints} orthogonality constraints on one state in dimension {dimension}")]
    OverConstrained { constraints: usize, dimension: usize },
    #[error("ensemble JSON: {0}")]
    Schema(String),
}

/// A validated single-particle internal density operator.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalState {
    matrix: CMatrix,
    pure: bool,
}

impl InternalState {
    /// Validates `matrix` against the default tolerances.
    pub fn new(matrix: CMatrix) -> Result<Self, InternalError> {
        Self::with_tolerances(matrix, &Tolerances::default())
    }

    pub fn with_tolerances(matrix: CMatrix, tol: &Tolerances) -> Result<Self, InternalError> {
        let (rows, cols) = matrix.shape();
        if rows != cols || rows == 0 {
            return Err(InternalError::NotSquare { rows, cols });
        }
        let defect = cmat::hermiticity_defect(&matrix);
        if defect > tol.hermitian {
            return Err(InternalError::NotHermitian(defect));
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > tol.trace || trace.im.abs() > tol.trace {
            return Err(InternalError::BadTrace(trace.re));
        }
        let matrix = (&matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
        let min_eig = cmat::min_eigenvalue(&matrix);
        if min_eig < -tol.psd {
            return Err(InternalError::NotPositive(min_eig));
        }
        let purity = (&matrix * &matrix).trace().re;
        Ok(InternalState { matrix, pure: purity >= 1.0 - tol.purity })
    }

    /// The projector onto the normalized `vector`.
    pub fn pure(vector: &[C64]) -> Result<Self, InternalError> {
        let v = DVector::from_column_slice(vector);
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(InternalError::ZeroVector);
        }
        let v = v / C64::new(norm, 0.0);
        let matrix = &v * v.adjoint();
        Ok(InternalState { matrix, pure: true })
    }

    /// The basis projector |k⟩⟨k| in dimension `dimension` (0-based `k`).
    pub fn basis(dimension: usize, k: usize) -> Self {
        assert!(k < dimension, "basis index {k} out of range for dimension {dimension}");
        let mut matrix = CMatrix::zeros(dimension, dimension);
        matrix[(k, k)] = C64::new(1.0, 0.0);
        InternalState { matrix, pure: true }
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn is_pure(&self) -> bool {
        self.pure
    }

    /// Tr ρ².
    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// Zero-padded copy in a larger space.
    fn embedded(&self, dimension: usize) -> Self {
        let d = self.dimension();
        let mut matrix = CMatrix::zeros(dimension, dimension);
        matrix.view_mut((0, 0), (d, d)).copy_from(&self.matrix);
        InternalState { matrix, pure: self.pure }
    }
}

/// Four uncorrelated internal states of identical particles.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalEnsemble {
    states: [InternalState; 4],
    statistics: Statistics,
}

impl InternalEnsemble {
    pub fn new(states: [InternalState; 4], statistics: Statistics) -> Result<Self, InternalError> {
        let dims = [0, 1, 2, 3].map(|i| states[i].dimension());
        if dims.iter().any(|&d| d != dims[0]) {
            return Err(InternalError::DimensionMismatch(dims));
        }
        Ok(InternalEnsemble { states, statistics })
    }

    /// Four mutually orthogonal basis states in dimension 4.
    pub fn distinguishable(statistics: Statistics) -> Self {
        let states = [0, 1, 2, 3].map(|k| InternalState::basis(4, k));
        InternalEnsemble { states, statistics }
    }

    /// Four copies of the same pure state in dimension `dimension`.
    pub fn indistinguishable(statistics: Statistics, dimension: usize) -> Self {
        let states = [0, 1, 2, 3].map(|_| InternalState::basis(dimension, 0));
        InternalEnsemble { states, statistics }
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn with_statistics(&self, statistics: Statistics) -> Self {
        InternalEnsemble { states: self.states.clone(), statistics }
    }

    pub fn dimension(&self) -> usize {
        self.states[0].dimension()
    }

    pub fn states(&self) -> &[InternalState; 4] {
        &self.states
    }

    /// 1-based access.
    pub fn state(&self, particle: usize) -> &InternalState {
        &self.states[particle - 1]
    }

    pub fn is_pure(&self) -> bool {
        self.states.iter().all(InternalState::is_pure)
    }

    /// `Tr(ρ_{c₁} ρ_{c₂} ⋯ ρ_{c_l})` for the cycle `(c₁ c₂ ⋯ c_l)`.
    pub fn trace_product(&self, cycle: &Cycle) -> C64 {
        let entries = cycle.entries();
        if entries.len() == 1 {
            return self.states[entries[0] as usize].matrix.trace();
        }
        let mut acc = self.states[entries[0] as usize].matrix.clone();
        for &e in &entries[1..] {
            acc = &acc * &self.states[e as usize].matrix;
        }
        acc.trace()
    }

    /// T_(αβ) = Tr(ρ_α ρ_β) for 1-based labels.
    pub fn pair_overlap(&self, alpha: usize, beta: usize) -> f64 {
        let c = Cycle::new(&[alpha, beta]).expect("distinct labels in 1..=4");
        self.trace_product(&c).re
    }

    /// Polar form of the trace product over `cycle`.
    pub fn collective_phase(&self, cycle: &Cycle, tol: &Tolerances) -> OverlapTrace {
        OverlapTrace::from_value(*cycle, self.trace_product(cycle), tol.eps_orth)
    }

    /// All trace products over cycles of length 2 to 4.
    pub fn trace_table(&self) -> TraceTable {
        let entries = nontrivial_cycles()
            .into_iter()
            .map(|c| (c, self.trace_product(&c)))
            .collect();
        TraceTable { entries }
    }

    pub fn overlap_graph(&self, eps_orth: f64) -> OverlapGraph {
        let mut adjacency = [[false; 4]; 4];
        for a in 0..4 {
            for b in (a + 1)..4 {
                let edge = self.pair_overlap(a + 1, b + 1) > eps_orth;
                adjacency[a][b] = edge;
                adjacency[b][a] = edge;
            }
        }
        OverlapGraph { adjacency }
    }

    /// Embeds every state into dimension d+1 and replaces the state of
    /// `marked` (1-based) with the new basis vector, so it is orthogonal to all others.
    pub fn make_distinguishable(&self, marked: usize) -> Result<InternalEnsemble, InternalError> {
        if !(1..=4).contains(&marked) {
            return Err(InternalError::BadParticle(marked));
        }
        let d = self.dimension();
        let states = std::array::from_fn(|i| {
            if i == marked - 1 {
                InternalState::basis(d + 1, d)
            } else {
                self.states[i].embedded(d + 1)
            }
        });
        Ok(InternalEnsemble { states, statistics: self.statistics })
    }
}

/// The 20 cycles of length 2, 3 and 4 on four labels, in S₄ enumeration order.
pub fn nontrivial_cycles() -> Vec<Cycle> {
    enumerate_s4()
        .iter()
        .filter_map(|p| {
            let cycles = p.nontrivial_cycles();
            (cycles.len() == 1).then(|| cycles[0])
        })
        .collect()
}

/// Cached trace products of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    entries: Vec<(Cycle, C64)>,
}

impl TraceTable {
    /// Table with the value `f(c)` for each of the 20 nontrivial cycles.
    pub fn from_fn(f: impl Fn(&Cycle) -> C64) -> Self {
        TraceTable { entries: nontrivial_cycles().into_iter().map(|c| (c, f(&c))).collect() }
    }

    /// Trace product over `cycle`; 1 for fixed points.
    pub fn get(&self, cycle: &Cycle) -> C64 {
        if cycle.len() == 1 {
            return C64::new(1.0, 0.0);
        }
        self.entries
            .iter()
            .find(|(c, _)| c == cycle)
            .map(|(_, v)| *v)
            .expect("table covers every cycle")
    }

    /// T_(αβ), 1-based.
    pub fn pair(&self, alpha: usize, beta: usize) -> f64 {
        self.get(&Cycle::new(&[alpha, beta]).expect("valid pair")).re
    }

    /// T·cos φ over the cycle given by 1-based labels.
    pub fn real_part(&self, labels: &[usize]) -> f64 {
        self.get(&Cycle::new(labels).expect("valid cycle")).re
    }

    /// Product of trace products over all cycles of `kappa`.
    pub fn permutation_product(&self, kappa: &crate::permgroup::Permutation) -> C64 {
        kappa
            .nontrivial_cycles()
            .iter()
            .fold(C64::new(1.0, 0.0), |acc, c| acc * self.get(c))
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Cycle, C64)> {
        self.entries.iter()
    }
}

/// Polar decomposition `T·e^{iφ}` of a trace product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapTrace {
    pub cycle: Cycle,
    pub value: [f64; 2],
    pub magnitude: f64,
    /// In [−π, π); `None` when the magnitude is below ε_orth and the phase is undefined.
    pub phase: Option<f64>,
}

impl OverlapTrace {
    pub fn from_value(cycle: Cycle, value: C64, eps_orth: f64) -> Self {
        let (magnitude, phase) = if cycle.len() <= 2 {
            // Tr(ρ_α ρ_β) ≥ 0: the phase is identically zero.
            (value.re.max(0.0), 0.0)
        } else {
            (value.norm(), wrap_phase(value.arg()))
        };
        let phase = (magnitude > eps_orth).then_some(phase);
        OverlapTrace { cycle, value: [value.re, value.im], magnitude, phase }
    }
}

/// Maps an angle onto [−π, π).
pub fn wrap_phase(phi: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut x = (phi + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if x >= std::f64::consts::PI {
        x -= two_pi;
    }
    x
}

/// Undirected graph of non-vanishing pairwise overlaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapGraph {
    pub adjacency: [[bool; 4]; 4],
}

impl OverlapGraph {
    /// Builds a graph from 1-based pairs that are *missing*.
    pub fn without_edges(missing: &[(usize, usize)]) -> Self {
        let mut adjacency = [[true; 4]; 4];
        for (i, row) in adjacency.iter_mut().enumerate() {
            row[i] = false;
        }
        for &(a, b) in missing {
            adjacency[a - 1][b - 1] = false;
            adjacency[b - 1][a - 1] = false;
        }
        OverlapGraph { adjacency }
    }

    /// 1-based.
    pub fn has_edge(&self, alpha: usize, beta: usize) -> bool {
        self.adjacency[alpha - 1][beta - 1]
    }

    /// Missing edges as 1-based pairs (α < β).
    pub fn missing_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 1..=4 {
            for b in (a + 1)..=4 {
                if !self.has_edge(a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// True iff every consecutive pair of the cycle (including the closing one) is an edge.
    pub fn supports(&self, cycle: &Cycle) -> bool {
        let e = cycle.entries();
        if e.len() < 2 {
            return true;
        }
        (0..e.len()).all(|k| self.adjacency[e[k] as usize][e[(k + 1) % e.len()] as usize])
    }

    pub fn topology(&self) -> Topology {
        let missing = self.missing_edges();
        match missing.len() {
            0 => Topology::Complete,
            1 => Topology::OneMissing { missing: missing[0] },
            2 => {
                let (p, q) = (missing[0], missing[1]);
                let shared = [p.0, p.1].into_iter().find(|v| *v == q.0 || *v == q.1);
                match shared {
                    Some(center) => Topology::SharedVertex { center, missing: [p, q] },
                    None => Topology::DisjointPairs { missing: [p, q] },
                }
            }
            3 => {
                let isolated = (1..=4).find(|&v| missing.iter().all(|&(a, b)| a == v || b == v));
                match isolated {
                    Some(vertex) => Topology::Isolated { vertex },
                    None => Topology::Acyclic,
                }
            }
            _ => Topology::Acyclic,
        }
    }
}

/// Orthogonality patterns of four pure states, up to relabelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum Topology {
    /// (a): all overlaps non-vanishing.
    Complete,
    /// (b): one orthogonal pair.
    OneMissing { missing: (usize, usize) },
    /// (c): one particle orthogonal to two others.
    SharedVertex { center: usize, missing: [(usize, usize); 2] },
    /// (d): two disjoint orthogonal pairs.
    DisjointPairs { missing: [(usize, usize); 2] },
    /// (e): one particle orthogonal to all others.
    Isolated { vertex: usize },
    /// No closed loops, hence no collective phases.
    Acyclic,
}

impl Topology {
    pub fn letter(&self) -> &'static str {
        match self {
            Topology::Complete => "a",
            Topology::OneMissing { .. } => "b",
            Topology::SharedVertex { .. } => "c",
            Topology::DisjointPairs { .. } => "d",
            Topology::Isolated { .. } => "e",
            Topology::Acyclic => "none",
        }
    }
}

/// Seeded generators for the unitarily invariant ensembles used in tests and fixtures.
pub mod random {
    use super::*;

    fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    }

    /// Haar-random unit vector.
    pub fn pure_vector<R: Rng + ?Sized>(dimension: usize, rng: &mut R) -> DVector<C64> {
        let v = DVector::from_fn(dimension, |_, _| complex_gaussian(rng));
        let n = v.norm();
        v / C64::new(n, 0.0)
    }

    pub fn pure_state<R: Rng + ?Sized>(dimension: usize, rng: &mut R) -> InternalState {
        let v = pure_vector(dimension, rng);
        InternalState::pure(v.as_slice()).expect("gaussian vector is non-zero")
    }

    /// G·G† / Tr(G·G†) with a complex Gaussian G.
    pub fn mixed_state<R: Rng + ?Sized>(dimension: usize, rng: &mut R) -> InternalState {
        let g = CMatrix::from_fn(dimension, dimension, |_, _| complex_gaussian(rng));
        let w = &g * g.adjoint();
        let tr = w.trace().re;
        let m = w / C64::new(tr, 0.0);
        InternalState::new(m).expect("Wishart matrix is a valid density operator")
    }

    pub fn pure_ensemble(dimension: usize, statistics: Statistics, seed: u64) -> InternalEnsemble {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states = std::array::from_fn(|_| pure_state(dimension, &mut rng));
        InternalEnsemble { states, statistics }
    }

    pub fn mixed_ensemble(dimension: usize, statistics: Statistics, seed: u64) -> InternalEnsemble {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states = std::array::from_fn(|_| mixed_state(dimension, &mut rng));
        InternalEnsemble { states, statistics }
    }

    /// Random pure states with the listed 1-based pairs exactly orthogonal and,
    /// almost surely, every other pair overlapping.
    ///
    /// State k is drawn from the orthogonal complement of the earlier states it
    /// must be orthogonal to, so the constraints stay satisfiable for
    /// `dimension ≥ 4`.
    pub fn pure_ensemble_with_orthogonal_pairs(
        dimension: usize,
        statistics: Statistics,
        orthogonal: &[(usize, usize)],
        seed: u64,
    ) -> Result<InternalEnsemble, InternalError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vectors: Vec<DVector<C64>> = Vec::with_capacity(4);
        for k in 0..4 {
            let partners: Vec<usize> = orthogonal
                .iter()
                .filter_map(|&(a, b)| {
                    let (a, b) = (a - 1, b - 1);
                    if a == k && b < k {
                        Some(b)
                    } else if b == k && a < k {
                        Some(a)
                    } else {
                        None
                    }
                })
                .collect();
            if partners.len() >= dimension {
                return Err(InternalError::OverConstrained { constraints: partners.len(), dimension });
            }
            // Orthonormal basis of the span to avoid (Gram-Schmidt).
            let mut basis: Vec<DVector<C64>> = Vec::new();
            for &j in &partners {
                let mut u = vectors[j].clone();
                for b in &basis {
                    let c = b.dotc(&u);
                    u -= b * c;
                }
                let n = u.norm();
                if n > 1e-12 {
                    basis.push(u / C64::new(n, 0.0));
                }
            }
            let mut v = pure_vector(dimension, &mut rng);
            for b in &basis {
                let c = b.dotc(&v);
                v -= b * c;
            }
            let n = v.norm();
            vectors.push(v / C64::new(n, 0.0));
        }
        let states = std::array::from_fn(|k| InternalState::pure(vectors[k].as_slice()).expect("non-zero"));
        InternalEnsemble::new(states, statistics)
    }
}

/// JSON form of an ensemble.
///
/// ```json
/// {"dimension": 2, "statistics": "boson",
///  "states": [[[1,0],[0,0]], [[0.7071067811865476,0],[0.7071067811865476,0]], ...]}
/// ```
/// Each state is either a d×d matrix of `[re, im]` pairs or a length-d state
/// vector, which is normalized and promoted to a projector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub dimension: usize,
    pub statistics: Statistics,
    pub states: Vec<StateSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Matrix(MatrixRepr),
    Vector(Vec<[f64; 2]>),
}

impl EnsembleSpec {
    pub fn from_ensemble(ensemble: &InternalEnsemble) -> Self {
        EnsembleSpec {
            dimension: ensemble.dimension(),
            statistics: ensemble.statistics(),
            states: ensemble
                .states()
                .iter()
                .map(|s| StateSpec::Matrix(cmat::to_repr(s.matrix())))
                .collect(),
        }
    }

    pub fn to_ensemble(&self, tol: &Tolerances) -> Result<InternalEnsemble, InternalError> {
        if self.states.len() != 4 {
            return Err(InternalError::Schema(format!("expected 4 states, got {}", self.states.len())));
        }
        let d = self.dimension;
        let mut states = Vec::with_capacity(4);
        for (k, spec) in self.states.iter().enumerate() {
            let state = match spec {
                StateSpec::Vector(v) => {
                    if v.len() != d {
                        return Err(InternalError::Schema(format!(
                            "state {} has length {}, expected {d}",
                            k + 1,
                            v.len()
                        )));
                    }
                    let v: Vec<C64> = v.iter().map(|z| C64::new(z[0], z[1])).collect();
                    InternalState::pure(&v)?
                }
                StateSpec::Matrix(m) => {
                    let m = cmat::from_repr(m)
                        .ok_or_else(|| InternalError::Schema(format!("state {} is a ragged matrix", k + 1)))?;
                    if m.nrows() != d {
                        return Err(InternalError::Schema(format!(
                            "state {} is {}×{}, expected {d}×{d}",
                            k + 1,
                            m.nrows(),
                            m.ncols()
                        )));
                    }
                    InternalState::with_tolerances(m, tol)?
                }
            };
            states.push(state);
        }
        let states: [InternalState; 4] = states.try_into().expect("length checked");
        InternalEnsemble::new(states, self.statistics)
    }
}
