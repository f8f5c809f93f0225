//! The reduced external state ρ_E over particle labellings, its partial traces,
//! and the indistinguishability quantifiers 𝓘_L.
//!
//! Rows and columns of ρ_E are indexed by [`enumerate_s4`]. Each entry depends on
//! its labellings (π, π′) only through κ = π∘π′⁻¹:
//! `[ρ_E]_{π,π′} = (±1)^κ (1/24) ∏_j Tr(ρ_{κ_{j,1}} ⋯ ρ_{κ_{j,l_j}})`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cmat::{self, CMatrix, MatrixRepr, C64};
use crate::internal::{InternalEnsemble, TraceTable};
use crate::permgroup::{enumerate_s4, CycleStructure, Permutation, ORDER};
use crate::tolerance::Tolerances;
use crate::Statistics;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExternalError {
    #[error("external state must be 24×24, got {0}×{1}")]
    Shape(usize, usize),
    #[error("external state is not Hermitian (max defect {0:.3e})")]
    NotHermitian(f64),
    #[error("external state has trace {0} instead of 1")]
    BadTrace(f64),
    #[error("external state is not positive semi-definite (min eigenvalue {0:.3e})")]
    NotPositive(f64),
    #[error("diagonal entry {index} is {value} instead of 1/24")]
    BadDiagonal { index: usize, value: f64 },
    #[error("(anti)symmetric vector is not an eigenvector (residual {0:.3e})")]
    EigenRelation(f64),
    #[error("subset {0:?} must contain 2 to 4 distinct particles from 1..=4")]
    BadSubset(Vec<usize>),
    #[error("can only keep 2 or 3 particles in a partial trace, got {0}")]
    BadKeep(usize),
    #[error("external state JSON: {0}")]
    Schema(String),
}

/// The four quantifiers 𝓘_(1,1,2), 𝓘_(1,3), 𝓘_(2,2), 𝓘_(4).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantifiers {
    #[serde(rename = "I_112")]
    pub i112: f64,
    #[serde(rename = "I_13")]
    pub i13: f64,
    #[serde(rename = "I_22")]
    pub i22: f64,
    #[serde(rename = "I_4")]
    pub i4: f64,
}

impl Quantifiers {
    pub fn from_table(t: &TraceTable) -> Self {
        let pairs = [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)];
        let i112 = pairs.iter().map(|&(a, b)| t.pair(a, b)).sum();
        let triads: [&[usize]; 4] = [&[1, 2, 3], &[1, 2, 4], &[1, 3, 4], &[2, 3, 4]];
        let i13 = 2.0 * triads.iter().map(|c| t.real_part(c)).sum::<f64>();
        let i22 = t.pair(1, 2) * t.pair(3, 4) + t.pair(1, 3) * t.pair(2, 4) + t.pair(1, 4) * t.pair(2, 3);
        let quads: [&[usize]; 3] = [&[1, 2, 3, 4], &[1, 2, 4, 3], &[1, 3, 2, 4]];
        let i4 = 2.0 * quads.iter().map(|c| t.real_part(c)).sum::<f64>();
        Quantifiers { i112, i13, i22, i4 }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.i112, self.i13, self.i22, self.i4]
    }

    /// ⟨Π⟩_4p = (1/24)[1 + Σ 𝓘_L].
    pub fn four_particle(&self) -> f64 {
        (1.0 + self.i112 + self.i13 + self.i22 + self.i4) / 24.0
    }

    /// ⟨Π⟩_3p on the reduced three-particle state.
    pub fn three_particle(&self) -> f64 {
        (1.0 + self.i112 / 2.0 + self.i13 / 4.0) / 6.0
    }

    /// ⟨Π⟩_2p on the reduced two-particle state.
    pub fn two_particle(&self) -> f64 {
        (1.0 + self.i112 / 6.0) / 2.0
    }
}

/// 𝓘_L of an ensemble.
pub fn quantifiers(ensemble: &InternalEnsemble) -> Quantifiers {
    Quantifiers::from_table(&ensemble.trace_table())
}

/// ⟨Π_B(F)⟩ for a specific subset of 2, 3 or 4 particles (1-based).
pub fn projector_expectation(ensemble: &InternalEnsemble, subset: &[usize]) -> Result<f64, ExternalError> {
    subset_expectation(&ensemble.trace_table(), subset)
}

fn subset_expectation(t: &TraceTable, subset: &[usize]) -> Result<f64, ExternalError> {
    let mut s = subset.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.len() != subset.len() || !(2..=4).contains(&s.len()) || s.iter().any(|&a| !(1..=4).contains(&a)) {
        return Err(ExternalError::BadSubset(subset.to_vec()));
    }
    Ok(match *s.as_slice() {
        [a, b] => (1.0 + t.pair(a, b)) / 2.0,
        [a, b, c] => (1.0 + t.pair(a, b) + t.pair(a, c) + t.pair(b, c) + 2.0 * t.real_part(&[a, b, c])) / 6.0,
        _ => Quantifiers::from_table(t).four_particle(),
    })
}

/// Every projector expectation of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorExpectations {
    pub four_particle: f64,
    pub three_particle_avg: f64,
    pub two_particle_avg: f64,
    pub per_subset: Vec<SubsetExpectation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetExpectation {
    pub subset: Vec<usize>,
    pub value: f64,
}

impl ProjectorExpectations {
    pub fn of(ensemble: &InternalEnsemble) -> Self {
        let t = ensemble.trace_table();
        let q = Quantifiers::from_table(&t);
        let subsets: [&[usize]; 10] = [
            &[1, 2],
            &[1, 3],
            &[1, 4],
            &[2, 3],
            &[2, 4],
            &[3, 4],
            &[1, 2, 3],
            &[1, 2, 4],
            &[1, 3, 4],
            &[2, 3, 4],
        ];
        let per_subset = subsets
            .iter()
            .map(|s| SubsetExpectation {
                subset: s.to_vec(),
                value: subset_expectation(&t, s).expect("valid subset"),
            })
            .collect();
        ProjectorExpectations {
            four_particle: q.four_particle(),
            three_particle_avg: q.three_particle(),
            two_particle_avg: q.two_particle(),
            per_subset,
        }
    }
}

/// Validated 24×24 reduced external density operator.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalState {
    matrix: CMatrix,
    statistics: Statistics,
    diagnostics: Vec<String>,
}

impl ExternalState {
    /// Builds ρ_E from the trace products of `ensemble`.
    pub fn from_ensemble(ensemble: &InternalEnsemble) -> Self {
        let table = ensemble.trace_table();
        let statistics = ensemble.statistics();
        let column = std::array::from_fn(|k| {
            let kappa = Permutation::from_index(k);
            table.permutation_product(&kappa) * statistics.sign_of(&kappa) / 24.0
        });
        let mut state = Self::from_kappa_column(&column, statistics);
        if statistics == Statistics::Fermion {
            for a in 1..=4 {
                for b in (a + 1)..=4 {
                    if table.pair(a, b) >= 1.0 - 1e-10 {
                        state.diagnostics.push(format!(
                            "fermions {a} and {b} share a pure internal state; the state is not physically realizable"
                        ));
                    }
                }
            }
        }
        state
    }

    /// Expands `[ρ_E]_{κ,ε}` (indexed by κ in enumeration order) to the full matrix.
    /// Performs no validation.
    pub fn from_kappa_column(column: &[C64; ORDER], statistics: Statistics) -> Self {
        let perms = enumerate_s4();
        let matrix = CMatrix::from_fn(ORDER, ORDER, |i, j| {
            let kappa = perms[i].compose(&perms[j].inverse());
            column[kappa.index()]
        });
        ExternalState { matrix, statistics, diagnostics: Vec::new() }
    }

    /// Validates an arbitrary 24×24 matrix.
    pub fn from_matrix(matrix: CMatrix, statistics: Statistics, tol: &Tolerances) -> Result<Self, ExternalError> {
        let state = ExternalState { matrix, statistics, diagnostics: Vec::new() };
        state.validate(tol)?;
        Ok(state)
    }

    pub fn validate(&self, tol: &Tolerances) -> Result<(), ExternalError> {
        let m = &self.matrix;
        if m.nrows() != ORDER || m.ncols() != ORDER {
            return Err(ExternalError::Shape(m.nrows(), m.ncols()));
        }
        let defect = cmat::hermiticity_defect(m);
        if defect > tol.hermitian {
            return Err(ExternalError::NotHermitian(defect));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(ExternalError::BadTrace(tr.re));
        }
        for k in 0..ORDER {
            let v = m[(k, k)];
            if (v.re - 1.0 / 24.0).abs() > 1e-12 || v.im.abs() > 1e-12 {
                return Err(ExternalError::BadDiagonal { index: k, value: v.re });
            }
        }
        let min = cmat::min_eigenvalue(m);
        if min < -tol.psd {
            return Err(ExternalError::NotPositive(min));
        }
        Ok(())
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn diagnostics(&self) -> &[String] {
        &self.diagnostics
    }

    /// `[ρ_E]_{π,π′}`.
    pub fn element(&self, pi: &Permutation, pi_prime: &Permutation) -> C64 {
        self.matrix[(pi.index(), pi_prime.index())]
    }

    /// `[ρ_E]_{κ,ε}`.
    pub fn kappa_element(&self, kappa: &Permutation) -> C64 {
        self.matrix[(kappa.index(), 0)]
    }

    /// The entrywise complex conjugate ρ_E*.
    pub fn conjugate(&self) -> Self {
        ExternalState {
            matrix: cmat::conjugate(&self.matrix),
            statistics: self.statistics,
            diagnostics: self.diagnostics.clone(),
        }
    }

    /// Largest deviation from `[ρ_E]_{π,π′} = [ρ_E]_{π∘π′⁻¹,ε}` over all 576 entries.
    pub fn kappa_reduction_defect(&self) -> f64 {
        let perms = enumerate_s4();
        let mut worst: f64 = 0.0;
        for (i, p) in perms.iter().enumerate() {
            for (j, q) in perms.iter().enumerate() {
                let kappa = p.compose(&q.inverse());
                worst = worst.max((self.matrix[(i, j)] - self.kappa_element(&kappa)).norm());
            }
        }
        worst
    }

    /// |ψ_B(F)⟩ = (1/√24) Σ_π (±1)^π |E_π⟩.
    pub fn symmetric_vector(statistics: Statistics) -> DVector<C64> {
        let norm = (ORDER as f64).sqrt();
        DVector::from_iterator(
            ORDER,
            enumerate_s4().iter().map(|p| C64::new(statistics.sign_of(p) / norm, 0.0)),
        )
    }

    /// ⟨ψ_B(F)|ρ_E|ψ_B(F)⟩, after checking that |ψ_B(F)⟩ is an eigenvector of ρ_E.
    pub fn symmetric_eigenvalue(&self) -> Result<f64, ExternalError> {
        let psi = Self::symmetric_vector(self.statistics);
        let image = &self.matrix * &psi;
        let lambda = psi.dotc(&image);
        let residual = (&image - &psi * lambda).norm();
        if residual > 1e-9 {
            return Err(ExternalError::EigenRelation(residual));
        }
        Ok(lambda.re)
    }

    /// Traces out particles `keep+1 ..= 4`.
    pub fn partial_trace(&self, keep: usize) -> Result<ReducedState, ExternalError> {
        if !(2..=3).contains(&keep) {
            return Err(ExternalError::BadKeep(keep));
        }
        let perms = enumerate_s4();
        let mut tuples: Vec<Vec<usize>> = perms.iter().map(|p| p.one_line()[..keep].to_vec()).collect();
        tuples.sort();
        tuples.dedup();
        let position = |p: &Permutation| {
            tuples
                .binary_search(&p.one_line()[..keep].to_vec())
                .expect("tuple listed")
        };
        let n = tuples.len();
        let mut matrix = CMatrix::zeros(n, n);
        for (i, p) in perms.iter().enumerate() {
            for (j, q) in perms.iter().enumerate() {
                if p.one_line()[keep..] == q.one_line()[keep..] {
                    matrix[(position(p), position(q))] += self.matrix[(i, j)];
                }
            }
        }
        Ok(ReducedState { particles: keep, modes: tuples, matrix, statistics: self.statistics })
    }
}

/// State of the leading `particles` particles after tracing out the rest.
///
/// The basis consists of the ordered tuples of distinct modes those particles can
/// occupy (24 for three particles, 12 for two).
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedState {
    pub particles: usize,
    pub modes: Vec<Vec<usize>>,
    pub matrix: CMatrix,
    pub statistics: Statistics,
}

impl ReducedState {
    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Tr(Π_B(F) ρ) with Π_B(F) = (1/N!) Σ_{τ∈S_N} (±1)^τ Π_τ acting on the tuple slots.
    pub fn projector_expectation(&self) -> f64 {
        let n = self.particles;
        let slot_perms = small_permutations(n);
        let factorial = slot_perms.len() as f64;
        let mut acc = C64::new(0.0, 0.0);
        for (tau, parity) in &slot_perms {
            let sign = match self.statistics {
                Statistics::Boson => 1.0,
                Statistics::Fermion => *parity,
            };
            for (col, t) in self.modes.iter().enumerate() {
                let permuted: Vec<usize> = tau.iter().map(|&k| t[k]).collect();
                let row = self.modes.binary_search(&permuted).expect("distinct modes stay distinct");
                acc += self.matrix[(row, col)] * sign;
            }
        }
        acc.re / factorial
    }
}

/// All permutations of `0..n` with their signs.
fn small_permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    enumerate_s4()
        .iter()
        .filter(|p| (n..4).all(|k| p.fixes(k + 1)))
        .map(|p| (p.one_line()[..n].iter().map(|&x| x - 1).collect(), p.sign() as f64))
        .collect()
}

/// JSON form: the 24×24 matrix plus the one-line notation of each row's labelling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalStateJson {
    pub statistics: Statistics,
    pub legend: Vec<Permutation>,
    pub matrix: MatrixRepr,
}

impl From<&ExternalState> for ExternalStateJson {
    fn from(s: &ExternalState) -> Self {
        ExternalStateJson {
            statistics: s.statistics,
            legend: enumerate_s4().to_vec(),
            matrix: cmat::to_repr(&s.matrix),
        }
    }
}

impl ExternalStateJson {
    pub fn to_state(&self, tol: &Tolerances) -> Result<ExternalState, ExternalError> {
        if self.legend != enumerate_s4().to_vec() {
            return Err(ExternalError::Schema("legend must list S4 in lexicographic order".into()));
        }
        let m = cmat::from_repr(&self.matrix).ok_or_else(|| ExternalError::Schema("ragged matrix".into()))?;
        ExternalState::from_matrix(m, self.statistics, tol)
    }
}

/// Number of κ per cycle structure, used to sanity-check sums over S₄.
pub fn class_count(structure: CycleStructure) -> usize {
    enumerate_s4().iter().filter(|p| p.cycle_structure() == structure).count()
}
