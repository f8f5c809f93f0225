//! Collective phases and ρ_E from extracted data, for pure internal states.
//!
//! For pure states every trace product factorizes into pairwise overlaps, so its
//! magnitude is fixed by the six T_(αβ) and its phase is a sum of triad phases.
//! The triad magnitudes |φ| follow from the three-particle projector
//! expectations; their signs are fixed, up to one global flip, by the sum rule
//! φ(123) + φ(134) = φ(124) + φ(234) and by the measured four-cycle terms. The
//! global flip maps ρ_E to its complex conjugate, which the hypercube cannot
//! distinguish.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cmat::{self, MatrixRepr, C64};
use crate::external::{ExternalError, ExternalState};
use crate::extraction::ExtractionReport;
use crate::interferometer::{self, all_events, EventClass, InterferometerError, ModeUnitary};
use crate::internal::{nontrivial_cycles, wrap_phase, OverlapGraph, Topology, TraceTable};
use crate::permgroup::{enumerate_s4, Cycle, Permutation};
use crate::tolerance::Tolerances;
use crate::Statistics;

use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReconstructionError {
    #[error("phase reconstruction needs pure internal states; mixed-state phase tomography is out of scope")]
    MixedState,
    #[error("purity of the internal states was not declared")]
    PurityUndeclared,
    #[error("pairwise overlaps of symmetry {0} are unresolved; supply marked-particle runs")]
    Unresolved(usize),
    #[error("three-particle expectation of {0:?} is missing; supply the run with the fourth particle marked")]
    MissingTriad([usize; 3]),
    #[error("cos φ{cycle} = {value} lies outside [−1, 1] beyond tolerance {tolerance:.3e}")]
    Inconsistent { cycle: Cycle, value: f64, tolerance: f64 },
    #[error("no sign assignment satisfies the consistency relations (best residual {residual:.3e})")]
    NoConsistentBranch { residual: f64 },
    #[error("magnitude of {cycle} is {actual}, pure states require {expected}")]
    NotPure { cycle: Cycle, actual: f64, expected: f64 },
    #[error(transparent)]
    External(#[from] ExternalError),
    #[error(transparent)]
    Interferometer(#[from] InterferometerError),
}

/// Sign knowledge about one collective phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignState {
    Plus,
    Minus,
    Undetermined,
    Absent,
}

/// |φ| of one cycle as fixed by the statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCandidate {
    pub cycle: Cycle,
    pub magnitude: f64,
    /// The measured cos φ, clamped to [−1, 1]; `None` when absent.
    pub cos: Option<f64>,
    /// Φ = arccos(cos φ) ∈ [0, π].
    pub phi: Option<f64>,
    pub sign: SignState,
    /// Standard error of cos φ for sampled input.
    pub cos_error: f64,
}

impl PhaseCandidate {
    fn absent(cycle: Cycle, magnitude: f64) -> Self {
        PhaseCandidate { cycle, magnitude, cos: None, phi: None, sign: SignState::Absent, cos_error: 0.0 }
    }

    fn measured(cycle: Cycle, magnitude: f64, cos: f64, cos_error: f64, tol_cos: f64) -> Result<Self, ReconstructionError> {
        let tolerance = tol_cos.max(5.0 * cos_error);
        if !cos.is_finite() || cos.abs() > 1.0 + tolerance {
            return Err(ReconstructionError::Inconsistent { cycle, value: cos, tolerance });
        }
        let cos = cos.clamp(-1.0, 1.0);
        let phi = cos.acos();
        let sign = if phi == 0.0 { SignState::Plus } else { SignState::Undetermined };
        Ok(PhaseCandidate { cycle, magnitude, cos: Some(cos), phi: Some(phi), sign, cos_error })
    }

    /// Standard error of Φ implied by `cos_error`, finite even at Φ ∈ {0, π}.
    fn phi_error(&self) -> f64 {
        match self.phi {
            Some(phi) if self.cos_error > 0.0 => (self.cos_error / phi.sin().abs()).min((2.0 * self.cos_error).sqrt()),
            _ => 0.0,
        }
    }
}

/// Triad candidates in the order (123), (124), (134), (234), and four-cycle
/// candidates (1234), (1324), (1243).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCandidateSet {
    pub triads: Vec<PhaseCandidate>,
    pub four_cycles: Vec<PhaseCandidate>,
}

pub const TRIADS: [[usize; 3]; 4] = [[1, 2, 3], [1, 2, 4], [1, 3, 4], [2, 3, 4]];
pub const FOUR_CYCLES: [[usize; 4]; 3] = [[1, 2, 3, 4], [1, 3, 2, 4], [1, 2, 4, 3]];

/// The six pairwise overlaps, indexed by 1-based pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTable {
    pub values: [[f64; 4]; 4],
    /// Standard errors, zero for exact input.
    pub errors: [[f64; 4]; 4],
}

impl PairTable {
    pub fn new(f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = [[1.0; 4]; 4];
        for a in 1..=4 {
            for b in (a + 1)..=4 {
                let v = f(a, b);
                values[a - 1][b - 1] = v;
                values[b - 1][a - 1] = v;
            }
        }
        PairTable { values, errors: [[0.0; 4]; 4] }
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a - 1][b - 1]
    }

    pub fn error(&self, a: usize, b: usize) -> f64 {
        self.errors[a - 1][b - 1]
    }

    /// √(∏ T over consecutive pairs), the pure-state magnitude of a cycle.
    pub fn cycle_magnitude(&self, cycle: &Cycle) -> f64 {
        let e = cycle.one_based();
        if e.len() < 2 {
            return 1.0;
        }
        if e.len() == 2 {
            return self.get(e[0], e[1]);
        }
        (0..e.len()).map(|k| self.get(e[k], e[(k + 1) % e.len()])).product::<f64>().sqrt()
    }

    /// Edge (α β) iff T_(αβ) exceeds `threshold(α, β)`.
    pub fn graph(&self, threshold: impl Fn(usize, usize) -> f64) -> OverlapGraph {
        let missing: Vec<(usize, usize)> = (1..=4)
            .flat_map(|a| ((a + 1)..=4).map(move |b| (a, b)))
            .filter(|&(a, b)| self.get(a, b) <= threshold(a, b))
            .collect();
        OverlapGraph::without_edges(&missing)
    }
}

fn cycle(labels: &[usize]) -> Cycle {
    Cycle::new(labels).expect("valid cycle")
}

/// |φ| for every triad and four-cycle supported by `graph`.
///
/// `triad_expectation(t)` returns ⟨Π⟩ of the triad and its standard error;
/// `four_cycle_term(s)` returns T·cos φ of `FOUR_CYCLES[s]` and its error.
pub fn triad_candidates(
    pairs: &PairTable,
    graph: &OverlapGraph,
    triad_expectation: impl Fn([usize; 3]) -> Option<(f64, f64)>,
    four_cycle_term: impl Fn(usize) -> (f64, f64),
    tol: &Tolerances,
) -> Result<PhaseCandidateSet, ReconstructionError> {
    let mut triads = Vec::with_capacity(4);
    for t in TRIADS {
        let c = cycle(&t);
        let magnitude = pairs.cycle_magnitude(&c);
        let [a, b, g] = t;
        let denominator = 2.0 * magnitude;
        if !graph.supports(&c) || denominator <= tol.eps_orth {
            triads.push(PhaseCandidate::absent(c, magnitude));
            continue;
        }
        let (pi, pi_err) = triad_expectation(t).ok_or(ReconstructionError::MissingTriad(t))?;
        let (tab, tag, tbg) = (pairs.get(a, b), pairs.get(a, g), pairs.get(b, g));
        let cos = (6.0 * pi - 1.0 - tab - tag - tbg) / denominator;
        let numerator_err = ((6.0 * pi_err).powi(2)
            + pairs.error(a, b).powi(2)
            + pairs.error(a, g).powi(2)
            + pairs.error(b, g).powi(2))
        .sqrt();
        triads.push(PhaseCandidate::measured(c, magnitude, cos, numerator_err / denominator, tol.tol_cos)?);
    }
    let mut four_cycles = Vec::with_capacity(3);
    for (s, labels) in FOUR_CYCLES.iter().enumerate() {
        let c = cycle(labels);
        let magnitude = pairs.cycle_magnitude(&c);
        if !graph.supports(&c) || magnitude <= tol.eps_orth {
            four_cycles.push(PhaseCandidate::absent(c, magnitude));
            continue;
        }
        let (term, term_err) = four_cycle_term(s);
        four_cycles.push(PhaseCandidate::measured(c, magnitude, term / magnitude, term_err / magnitude, tol.tol_cos)?);
    }
    Ok(PhaseCandidateSet { triads, four_cycles })
}

/// Phase of one cycle in a branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CyclePhase {
    pub cycle: Cycle,
    pub magnitude: f64,
    /// In [−π, π); `None` when the cycle's trace product vanishes.
    pub phase: Option<f64>,
}

/// Phases of all three- and four-cycles in one branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTable {
    pub entries: Vec<CyclePhase>,
}

impl PhaseTable {
    pub fn get(&self, c: &Cycle) -> Option<f64> {
        if c.len() <= 2 {
            return Some(0.0);
        }
        self.entries.iter().find(|e| e.cycle == *c).and_then(|e| e.phase)
    }

    pub fn phase(&self, labels: &[usize]) -> Option<f64> {
        self.get(&cycle(labels))
    }

    /// The global sign flip.
    pub fn negated(&self) -> PhaseTable {
        PhaseTable {
            entries: self
                .entries
                .iter()
                .map(|e| CyclePhase { phase: e.phase.map(|p| wrap_phase(-p)), ..*e })
                .collect(),
        }
    }

    /// Largest wrapped difference between present phases; infinite if the supports differ.
    pub fn distance(&self, other: &PhaseTable) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| match (a.phase, b.phase) {
                (Some(x), Some(y)) => wrap_phase(x - y).abs(),
                (None, None) => 0.0,
                _ => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }

    /// T·e^{iφ} for every nontrivial cycle, zero where absent.
    pub fn trace_table(&self, pairs: &PairTable) -> TraceTable {
        TraceTable::from_fn(|c| {
            if c.len() == 2 {
                let e = c.one_based();
                return C64::new(pairs.get(e[0], e[1]), 0.0);
            }
            match self.get(c) {
                Some(phi) => C64::from_polar(pairs.cycle_magnitude(c), phi),
                None => C64::new(0.0, 0.0),
            }
        })
    }

    /// Builds the table from triad phases and, where no triad decomposition
    /// exists, a directly determined four-cycle phase.
    fn assemble(pairs: &PairTable, graph: &OverlapGraph, triad: &[Option<f64>; 4], direct_four: &[Option<f64>; 3]) -> PhaseTable {
        let triad_phase = |labels: [usize; 3]| -> Option<f64> {
            let mut sorted = labels;
            sorted.sort_unstable();
            let k = TRIADS.iter().position(|t| *t == sorted)?;
            let base = triad[k]?;
            // Even permutations of the ascending labels are the same cycle.
            let same = cycle(&labels) == cycle(&sorted);
            Some(if same { base } else { -base })
        };
        let four_phase = |labels: [usize; 4]| -> Option<f64> {
            let [a, b, c, d] = labels;
            // (a b c d) = (a b c) + (a c d) = (a b d) + (b c d).
            if let (Some(x), Some(y)) = (triad_phase([a, b, c]), triad_phase([a, c, d])) {
                return Some(x + y);
            }
            if let (Some(x), Some(y)) = (triad_phase([a, b, d]), triad_phase([b, c, d])) {
                return Some(x + y);
            }
            let cyc = cycle(&labels);
            FOUR_CYCLES.iter().enumerate().find_map(|(s, f)| {
                let fc = cycle(f);
                if fc == cyc {
                    direct_four[s]
                } else if fc.reversed() == cyc {
                    direct_four[s].map(|p| -p)
                } else {
                    None
                }
            })
        };
        let mut cycles: Vec<Cycle> = nontrivial_cycles().into_iter().filter(|c| c.len() >= 3).collect();
        cycles.sort();
        let entries = cycles
            .into_iter()
            .map(|c| {
                let magnitude = pairs.cycle_magnitude(&c);
                let labels = c.one_based();
                let phase = if graph.supports(&c) {
                    match labels.len() {
                        3 => triad_phase([labels[0], labels[1], labels[2]]),
                        _ => four_phase([labels[0], labels[1], labels[2], labels[3]]),
                    }
                } else {
                    None
                };
                CyclePhase { cycle: c, magnitude, phase: phase.map(wrap_phase) }
            })
            .collect();
        PhaseTable { entries }
    }

    /// The branch whose first present non-real phase (in cycle order) is positive.
    fn is_primary(&self, tol_phase: f64) -> bool {
        for e in &self.entries {
            if let Some(p) = e.phase {
                if p.abs() > tol_phase && PI - p.abs() > tol_phase {
                    return p > 0.0;
                }
            }
        }
        true
    }
}

/// The two sign-flipped phase assignments that survive the consistency relations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistentBranches {
    /// Primary branch first.
    pub branches: [PhaseTable; 2],
    /// Distinct assignments surviving before the ± pair was selected.
    pub surviving: usize,
    pub residual: f64,
    pub diagnostics: Vec<String>,
}

/// Enumerates sign choices on the supported triads and keeps the assignments
/// consistent with the sum rule and the measured four-cycle terms.
pub fn consistency_filter(
    candidates: &PhaseCandidateSet,
    pairs: &PairTable,
    graph: &OverlapGraph,
    tol: &Tolerances,
) -> Result<ConsistentBranches, ReconstructionError> {
    let present: Vec<usize> = (0..4).filter(|&k| candidates.triads[k].phi.is_some()).collect();
    let direct_four: [Option<f64>; 3] = std::array::from_fn(|s| candidates.four_cycles[s].phi);

    let phi_err = |k: usize| candidates.triads[k].phi_error();
    let sum_rule_tol = tol.tol_phase.max(5.0 * (0..4).map(|k| phi_err(k).powi(2)).sum::<f64>().sqrt());

    let mut scored: Vec<(PhaseTable, f64)> = Vec::new();
    let mut best_rejected = f64::INFINITY;
    for mask in 0u32..(1 << present.len()) {
        let mut triad = [None; 4];
        for (bit, &k) in present.iter().enumerate() {
            let phi = candidates.triads[k].phi.unwrap();
            triad[k] = Some(if mask & (1 << bit) != 0 { -phi } else { phi });
        }
        let table = PhaseTable::assemble(pairs, graph, &triad, &direct_four);
        let mut residual = 0.0f64;
        let mut ok = true;
        if let [Some(p123), Some(p124), Some(p134), Some(p234)] = triad {
            let r = wrap_phase(p123 + p134 - p124 - p234).abs();
            residual = residual.max(r / sum_rule_tol);
            ok &= r <= sum_rule_tol;
        }
        for (s, fc) in candidates.four_cycles.iter().enumerate() {
            let (Some(measured), Some(predicted)) = (fc.cos, table.phase(&FOUR_CYCLES[s])) else {
                continue;
            };
            let predicted_err: f64 = if present.is_empty() { 0.0 } else { 2.0 * present.iter().map(|&k| phi_err(k)).fold(0.0, f64::max) };
            let anchor_tol = tol.tol_cos.max(5.0 * fc.cos_error.hypot(predicted_err));
            let r = (predicted.cos() - measured).abs();
            residual = residual.max(r / anchor_tol);
            ok &= r <= anchor_tol;
        }
        if ok {
            scored.push((table, residual));
        } else {
            best_rejected = best_rejected.min(residual);
        }
    }
    if scored.is_empty() {
        return Err(ReconstructionError::NoConsistentBranch { residual: best_rejected });
    }
    scored.sort_by(|a, b| a.1.total_cmp(&b.1));

    let dedup_tol = 10.0 * sum_rule_tol;
    let mut distinct: Vec<(PhaseTable, f64)> = Vec::new();
    for (t, r) in scored {
        if !distinct.iter().any(|(d, _)| d.distance(&t) <= dedup_tol) {
            distinct.push((t, r));
        }
    }
    let surviving = distinct.len();
    let mut diagnostics = Vec::new();
    let (best, residual) = distinct[0].clone();
    let flipped = best.negated();
    let pair_count = if best.distance(&flipped) <= dedup_tol { 1 } else { 2 };
    if surviving > pair_count {
        diagnostics.push(format!(
            "{surviving} distinct phase assignments satisfy the consistency relations; kept the best-scoring sign pair"
        ));
    }
    let branches = if best.is_primary(tol.tol_phase) { [best, flipped] } else { [flipped, best] };
    Ok(ConsistentBranches { branches, surviving, residual, diagnostics })
}

/// ρ_E from the trace products of one branch, which must have pure-state magnitudes.
pub fn reconstruct_external(table: &TraceTable, statistics: Statistics) -> Result<ExternalState, ReconstructionError> {
    check_pure_magnitudes(table, 1e-8)?;
    let column = std::array::from_fn(|k| {
        let kappa = Permutation::from_index(k);
        table.permutation_product(&kappa) * statistics.sign_of(&kappa) / 24.0
    });
    Ok(ExternalState::from_kappa_column(&column, statistics))
}

/// Rejects trace tables whose cycle magnitudes differ from the pure-state value √(∏ T_pair).
pub fn check_pure_magnitudes(table: &TraceTable, tolerance: f64) -> Result<(), ReconstructionError> {
    let pairs = PairTable::new(|a, b| table.pair(a, b));
    for (c, v) in table.iter() {
        if c.len() < 3 {
            continue;
        }
        let expected = pairs.cycle_magnitude(c);
        if (v.norm() - expected).abs() > tolerance {
            return Err(ReconstructionError::NotPure { cycle: *c, actual: v.norm(), expected });
        }
    }
    Ok(())
}

/// True iff every event probability is unchanged by conjugating ρ_E, within 1e-12.
pub fn conjugation_invariance_check(state: &ExternalState, u: &ModeUnitary) -> bool {
    let loose = Tolerances { imag_residue: f64::INFINITY, negative_clamp: f64::INFINITY, ..Tolerances::default() };
    let conj = state.conjugate();
    all_events().iter().all(|e| {
        match (
            interferometer::event_probability(state, u, e, &loose),
            interferometer::event_probability(&conj, u, e, &loose),
        ) {
            (Ok(a), Ok(b)) => (a - b).abs() <= 1e-12,
            _ => false,
        }
    })
}

/// Largest |Im A(κ,S⃗)| and |A(κ,S⃗) − A(κ⁻¹,S⃗)| over all κ and events.
pub fn coefficient_symmetry_defect(u: &ModeUnitary) -> (f64, f64) {
    let mut imag = 0.0f64;
    let mut inverse = 0.0f64;
    for e in all_events() {
        for kappa in enumerate_s4() {
            let a = interferometer::coefficient_a_complex(&kappa, &e, u);
            let b = interferometer::coefficient_a_complex(&kappa.inverse(), &e, u);
            imag = imag.max(a.im.abs());
            inverse = inverse.max((a - b).norm());
        }
    }
    (imag, inverse)
}

/// How well a branch reproduces the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Euclidean norm of predicted minus measured class probabilities, per branch.
    pub class_probabilities: [f64; 2],
    /// ‖ρ_E⁽¹⁾ − conj(ρ_E⁽²⁾)‖_F.
    pub conjugation: f64,
}

/// Reconstruction under one choice of overlap graph.
#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub statistics: Statistics,
    pub topology: Topology,
    pub graph: OverlapGraph,
    pub pairs: PairTable,
    pub candidates: PhaseCandidateSet,
    pub branches: [PhaseTable; 2],
    /// ρ_E of the primary branch.
    pub external_state: ExternalState,
    /// ρ_E of the other branch.
    pub conjugate_state: ExternalState,
    /// Always true: the data fix ρ_E only up to complex conjugation.
    pub conjugate_flag: bool,
    pub surviving: usize,
    pub residuals: Residuals,
    pub alternatives: Vec<Alternative>,
    pub diagnostics: Vec<String>,
}

/// Reconstruction under an adjacent overlap graph, reported when sampled
/// overlaps lie near the orthogonality threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub topology: Topology,
    pub graph: OverlapGraph,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residuals: Option<Residuals>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branches: Option<[PhaseTable; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// JSON form of a reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionJson {
    pub statistics: Statistics,
    pub topology: Topology,
    pub conjugate_flag: bool,
    pub pair_overlaps: Vec<PairValue>,
    pub branches: [PhaseTable; 2],
    pub surviving: usize,
    pub residuals: Residuals,
    pub legend: Vec<Permutation>,
    /// ρ_E of the primary branch.
    pub matrix: MatrixRepr,
    pub alternatives: Vec<Alternative>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairValue {
    pub pair: (usize, usize),
    pub value: f64,
}

impl From<&ReconstructionResult> for ReconstructionJson {
    fn from(r: &ReconstructionResult) -> Self {
        ReconstructionJson {
            statistics: r.statistics,
            topology: r.topology,
            conjugate_flag: r.conjugate_flag,
            pair_overlaps: (1..=4)
                .flat_map(|a| ((a + 1)..=4).map(move |b| (a, b)))
                .map(|(a, b)| PairValue { pair: (a, b), value: r.pairs.get(a, b) })
                .collect(),
            branches: r.branches.clone(),
            surviving: r.surviving,
            residuals: r.residuals,
            legend: enumerate_s4().to_vec(),
            matrix: cmat::to_repr(r.external_state.matrix()),
            alternatives: r.alternatives.clone(),
            diagnostics: r.diagnostics.clone(),
        }
    }
}

struct Core {
    candidates: PhaseCandidateSet,
    filtered: ConsistentBranches,
    states: [ExternalState; 2],
    residuals: Residuals,
}

fn run_graph(
    report: &ExtractionReport,
    pairs: &PairTable,
    graph: &OverlapGraph,
    tol: &Tolerances,
) -> Result<Core, ReconstructionError> {
    let triad_expectation = |t: [usize; 3]| -> Option<(f64, f64)> {
        let hits: Vec<_> = report.marked_runs.iter().filter(|r| r.triad == t).map(|r| r.triad_expectation).collect();
        if hits.is_empty() {
            return None;
        }
        let n = hits.len() as f64;
        let value = hits.iter().map(|e| e.value).sum::<f64>() / n;
        let err = hits.iter().map(|e| e.std_error.unwrap_or(0.0).powi(2)).sum::<f64>().sqrt() / n;
        Some((value, err))
    };
    let four_cycle_term = |s: usize| {
        let v = report.fourcycle_terms[s].value;
        (v.value, v.std_error.unwrap_or(0.0))
    };
    let candidates = triad_candidates(pairs, graph, triad_expectation, four_cycle_term, tol)?;
    let filtered = consistency_filter(&candidates, pairs, graph, tol)?;
    let tables = filtered.branches.clone().map(|b| b.trace_table(pairs));
    let states = [
        reconstruct_external(&tables[0], report.statistics)?,
        reconstruct_external(&tables[1], report.statistics)?,
    ];
    let measured = &report.class_probabilities.values;
    let class_residual = |t: &TraceTable| {
        EventClass::ALL
            .iter()
            .map(|c| (interferometer::closed_form_from_table(t, report.statistics, *c) - measured[c.index()]).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let residuals = Residuals {
        class_probabilities: [class_residual(&tables[0]), class_residual(&tables[1])],
        conjugation: cmat::frobenius_distance(states[0].matrix(), &cmat::conjugate(states[1].matrix())),
    };
    Ok(Core { candidates, filtered, states, residuals })
}

/// Reconstructs the collective phases and ρ_E from an extraction report of a
/// pure-state run with all pairs resolved.
pub fn reconstruct(report: &ExtractionReport, tol: &Tolerances) -> Result<ReconstructionResult, ReconstructionError> {
    match report.pure {
        Some(true) => {}
        Some(false) => return Err(ReconstructionError::MixedState),
        None => return Err(ReconstructionError::PurityUndeclared),
    }
    if let Some(s) = report.pairs.iter().find(|s| !s.is_resolved()) {
        return Err(ReconstructionError::Unresolved(s.symmetry));
    }
    let mut pairs = PairTable::new(|a, b| report.pair_overlap(a, b).expect("resolved"));
    for a in 1..=4 {
        for b in (a + 1)..=4 {
            let e = report.pairs.iter().find_map(|s| s.overlap_error(a, b)).unwrap_or(0.0);
            pairs.errors[a - 1][b - 1] = e;
            pairs.errors[b - 1][a - 1] = e;
        }
    }
    let eps = tol.eps_orth;
    let noise_aware = |a: usize, b: usize| eps.max(3.0 * pairs.error(a, b));
    let graph = pairs.graph(noise_aware);
    let core = run_graph(report, &pairs, &graph, tol)?;

    let mut alternatives = Vec::new();
    let plain = pairs.graph(|_, _| eps);
    if plain != graph {
        let alt = match run_graph(report, &pairs, &plain, tol) {
            Ok(c) => Alternative {
                topology: plain.topology(),
                graph: plain,
                residuals: Some(c.residuals),
                branches: Some(c.filtered.branches),
                error: None,
            },
            Err(e) => Alternative {
                topology: plain.topology(),
                graph: plain,
                residuals: None,
                branches: None,
                error: Some(e.to_string()),
            },
        };
        alternatives.push(alt);
    }

    let mut diagnostics = core.filtered.diagnostics.clone();
    let [primary, other] = core.states;
    if let Err(e) = primary.validate(tol) {
        diagnostics.push(format!("reconstructed ρ_E fails validation: {e}"));
    }
    Ok(ReconstructionResult {
        statistics: report.statistics,
        topology: graph.topology(),
        graph,
        pairs,
        candidates: core.candidates,
        branches: core.filtered.branches,
        external_state: primary,
        conjugate_state: other,
        conjugate_flag: true,
        surviving: core.filtered.surviving,
        residuals: core.residuals,
        alternatives,
        diagnostics,
    })
}
