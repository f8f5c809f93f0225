//! Inversion of the eleven class probabilities into indistinguishability data.
//!
//! Every extracted quantity except the pairwise overlaps is a linear form in
//! the class probabilities, so standard errors follow from the class covariance
//! when the probabilities were estimated from counts. The pairwise overlaps of a
//! symmetry 𝒮 are the two roots of `T² − 2(±𝒬_𝒮)T + 𝒫_𝒮 = 0`, which leaves their
//! assignment to the two transpositions of σ^(𝒮) open until marked-particle runs
//! break the tie.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::external::{Quantifiers, SubsetExpectation};
use crate::internal::InternalEnsemble;
use crate::interferometer::{self, symmetry_pairs, EventClass, InterferometerError, ModeUnitary, OutputStatistics};
use crate::tolerance::Tolerances;
use crate::Statistics;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtractionError {
    #[error("class probability {class} = {value} lies outside [0, 1]")]
    OutOfRange { class: EventClass, value: f64 },
    #[error("class probabilities sum to {0} instead of 1")]
    Normalization(f64),
    #[error("symmetry {symmetry}: discriminant {value:.3e} is below −{tolerance:.3e}")]
    NegativeDiscriminant { symmetry: usize, value: f64, tolerance: f64 },
    #[error("symmetry {symmetry}: overlap {value} lies outside [0, 1]")]
    OverlapOutOfRange { symmetry: usize, value: f64 },
    #[error("marked particle {0} is outside 1..=4")]
    BadMarked(usize),
    #[error("the marked-particle protocol requires the hypercube unitary")]
    NotHypercube,
    #[error("marked run for particle {marked} reports {statistics} statistics, expected {expected}")]
    StatisticsMismatch { marked: usize, statistics: Statistics, expected: Statistics },
    #[error("pair ({a} {b}): marked runs give {marked}, unmarked data allow {candidates:?}")]
    InconsistentMarking { a: usize, b: usize, marked: f64, candidates: [f64; 2] },
    #[error(transparent)]
    Interferometer(#[from] InterferometerError),
    #[error(transparent)]
    Internal(#[from] crate::internal::InternalError),
}

/// Single-event probability of each class, in [`EventClass::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProbabilities {
    pub values: [f64; 11],
    /// Standard error of each value, when estimated from counts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_errors: Option<[f64; 11]>,
    /// Covariance between the eleven estimates, when estimated from counts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
}

impl ClassProbabilities {
    /// Exact values from simulated statistics.
    pub fn exact(values: [f64; 11]) -> Self {
        ClassProbabilities { values, std_errors: None, covariance: None, shots: None }
    }

    pub fn from_statistics(stats: &OutputStatistics) -> Self {
        Self::exact(stats.per_class)
    }

    pub fn get(&self, class: EventClass) -> f64 {
        self.values[class.index()]
    }

    pub fn is_sampled(&self) -> bool {
        self.covariance.is_some()
    }

    /// Σ_class size × value.
    pub fn weighted_total(&self) -> f64 {
        EventClass::ALL.iter().map(|c| c.size() as f64 * self.get(*c)).sum()
    }

    pub fn validate(&self, tol: &Tolerances) -> Result<(), ExtractionError> {
        for class in EventClass::ALL {
            let v = self.get(class);
            if !(v.is_finite() && (-tol.negative_clamp..=1.0 + tol.negative_clamp).contains(&v)) {
                return Err(ExtractionError::OutOfRange { class, value: v });
            }
        }
        let total = self.weighted_total();
        if (total - 1.0).abs() > tol.normalization {
            return Err(ExtractionError::Normalization(total));
        }
        Ok(())
    }
}

/// `Σ_k coeffs[k]·p_k + constant` over the eleven class probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearForm {
    pub coeffs: [f64; 11],
    pub constant: f64,
}

impl LinearForm {
    pub fn constant(c: f64) -> Self {
        LinearForm { coeffs: [0.0; 11], constant: c }
    }

    pub fn class(class: EventClass) -> Self {
        let mut coeffs = [0.0; 11];
        coeffs[class.index()] = 1.0;
        LinearForm { coeffs, constant: 0.0 }
    }

    pub fn eval(&self, p: &ClassProbabilities) -> f64 {
        self.coeffs.iter().zip(p.values.iter()).map(|(c, v)| c * v).sum::<f64>() + self.constant
    }

    /// cᵀ Σ c, or `None` without a covariance.
    pub fn variance(&self, p: &ClassProbabilities) -> Option<f64> {
        let cov = p.covariance.as_ref()?;
        let mut v = 0.0;
        for i in 0..11 {
            for j in 0..11 {
                v += self.coeffs[i] * cov[i][j] * self.coeffs[j];
            }
        }
        Some(v.max(0.0))
    }

    pub fn std_error(&self, p: &ClassProbabilities) -> Option<f64> {
        self.variance(p).map(f64::sqrt)
    }

    pub fn scale(self, k: f64) -> Self {
        LinearForm { coeffs: self.coeffs.map(|c| c * k), constant: self.constant * k }
    }

    pub fn plus(self, other: LinearForm) -> Self {
        LinearForm {
            coeffs: std::array::from_fn(|i| self.coeffs[i] + other.coeffs[i]),
            constant: self.constant + other.constant,
        }
    }

    pub fn minus(self, other: LinearForm) -> Self {
        self.plus(other.scale(-1.0))
    }
}

fn sum(forms: impl IntoIterator<Item = LinearForm>) -> LinearForm {
    forms.into_iter().fold(LinearForm::constant(0.0), LinearForm::plus)
}

/// The two symmetries other than `s`.
fn others(s: usize) -> [usize; 2] {
    match s {
        1 => [2, 3],
        2 => [1, 3],
        _ => [1, 2],
    }
}

/// The linear combinations used by the extraction formulas.
pub mod forms {
    use super::*;

    /// P_F𝒮 = p_{𝓕𝒮^I} + p_{𝓕𝒮^II}.
    pub fn p_f(s: usize) -> LinearForm {
        LinearForm::class(EventClass::f_type_one(s)).plus(LinearForm::class(EventClass::f_type_two(s)))
    }

    /// 𝒫_𝒮 = 1 − 8[P_F𝒮′ + P_F𝒮″] = T_σ1 T_σ2.
    pub fn cal_p(s: usize) -> LinearForm {
        let [a, b] = others(s);
        LinearForm::constant(1.0).minus(p_f(a).plus(p_f(b)).scale(8.0))
    }

    /// 𝒬_𝒮 = 16p_{𝒜_B} + 8p_{𝒜_𝒮} + 16p_{𝓕𝒮^I} + 4[P_F𝒮′ + P_F𝒮″] − 1 = ±(T_σ1 + T_σ2)/2.
    pub fn cal_q(s: usize) -> LinearForm {
        let [a, b] = others(s);
        sum([
            LinearForm::class(EventClass::AB).scale(16.0),
            LinearForm::class(EventClass::a_symmetric(s)).scale(8.0),
            LinearForm::class(EventClass::f_type_one(s)).scale(16.0),
            p_f(a).plus(p_f(b)).scale(4.0),
            LinearForm::constant(-1.0),
        ])
    }

    pub fn i112(statistics: Statistics) -> LinearForm {
        sum((1..=3).map(cal_q)).scale(2.0 * statistics.pm())
    }

    pub fn i13() -> LinearForm {
        sum([
            LinearForm::class(EventClass::AB).scale(128.0),
            LinearForm::class(EventClass::AA).scale(16.0),
            sum((1..=3).map(p_f)).scale(32.0),
            LinearForm::constant(-8.0),
        ])
    }

    pub fn i22() -> LinearForm {
        sum((1..=3).map(cal_p))
    }

    pub fn i4(statistics: Statistics) -> LinearForm {
        sum([
            LinearForm::class(EventClass::AB).scale(96.0),
            sum((1..=3).map(|s| LinearForm::class(EventClass::a_symmetric(s)))).scale(16.0),
            sum((1..=3).map(|s| LinearForm::class(EventClass::f_type_two(s)))).scale(32.0),
            LinearForm::constant(-6.0),
        ])
        .scale(statistics.pm())
    }

    /// T·cos φ of the four-cycle tied to symmetry 𝒮: (1234), (1324), (1243) for 𝒮 = 1, 2, 3.
    pub fn four_cycle(s: usize, statistics: Statistics) -> LinearForm {
        let [a, b] = others(s);
        sum([
            LinearForm::class(EventClass::AB).scale(16.0),
            LinearForm::class(EventClass::a_symmetric(s)).scale(8.0),
            LinearForm::class(EventClass::f_type_one(s))
                .minus(LinearForm::class(EventClass::f_type_two(s)))
                .scale(-8.0),
            p_f(a).plus(p_f(b)).scale(4.0),
            LinearForm::constant(-1.0),
        ])
        .scale(statistics.pm())
    }

    /// ⟨Π⟩_4p = (32/3) p_{𝒜_B}, valid for bosons.
    pub fn four_particle_from_bunching() -> LinearForm {
        LinearForm::class(EventClass::AB).scale(32.0 / 3.0)
    }

    /// ⟨Π⟩ of the three unmarked particles in a marked run.
    pub fn marked_triad(statistics: Statistics) -> LinearForm {
        match statistics {
            Statistics::Boson => LinearForm::class(EventClass::AB).scale(128.0 / 3.0),
            Statistics::Fermion => LinearForm::class(EventClass::AA).scale(16.0 / 3.0).plus(LinearForm::constant(-1.0 / 3.0)),
        }
    }
}

/// A value with its propagated standard error, if known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
}

impl Estimate {
    pub fn of(form: &LinearForm, p: &ClassProbabilities) -> Self {
        Estimate { value: form.eval(p), std_error: form.std_error(p) }
    }
}

/// P_F𝒮, 𝒫_𝒮 and 𝒬_𝒮 for 𝒮 = 1, 2, 3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Combined {
    pub p_f: [f64; 3],
    pub cal_p: [f64; 3],
    pub cal_q: [f64; 3],
}

pub fn combine(p: &ClassProbabilities) -> Combined {
    Combined {
        p_f: std::array::from_fn(|k| forms::p_f(k + 1).eval(p)),
        cal_p: std::array::from_fn(|k| forms::cal_p(k + 1).eval(p)),
        cal_q: std::array::from_fn(|k| forms::cal_q(k + 1).eval(p)),
    }
}

pub fn extract_quantifiers(p: &ClassProbabilities, statistics: Statistics) -> Quantifiers {
    Quantifiers {
        i112: forms::i112(statistics).eval(p),
        i13: forms::i13().eval(p),
        i22: forms::i22().eval(p),
        i4: forms::i4(statistics).eval(p),
    }
}

/// T·cos φ for (1234), (1324), (1243).
pub fn extract_fourcycle_terms(p: &ClassProbabilities, statistics: Statistics) -> [f64; 3] {
    std::array::from_fn(|k| forms::four_cycle(k + 1, statistics).eval(p))
}

/// Which transposition of σ^(𝒮) carries which overlap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Assignment {
    Ambiguous,
    Resolved { sigma1: f64, sigma2: f64 },
}

/// The two overlaps T_σ1, T_σ2 of one symmetry, as an unordered pair unless resolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSolution {
    pub symmetry: usize,
    /// The transpositions σ^(𝒮)_1 and σ^(𝒮)_2 as 1-based pairs.
    pub cycles: [(usize, usize); 2],
    /// Larger root first.
    pub values: [f64; 2],
    /// T_σ1 + T_σ2 = ±2𝒬_𝒮, which is linear in the data and better conditioned than the roots.
    pub sum: Estimate,
    pub discriminant: f64,
    /// True when a slightly negative discriminant was clamped to zero.
    pub clamped: bool,
    pub assignment: Assignment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_errors: Option<[f64; 2]>,
    /// Standard errors of the resolved (σ1, σ2) values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved_errors: Option<[f64; 2]>,
    /// Set when √D is within three standard errors of zero, where the
    /// delta-method errors are unreliable.
    #[serde(default)]
    pub near_singular: bool,
}

impl PairSolution {
    pub fn is_resolved(&self) -> bool {
        matches!(self.assignment, Assignment::Resolved { .. })
    }

    /// Overlap of the given 1-based pair, if resolved.
    pub fn overlap(&self, a: usize, b: usize) -> Option<f64> {
        let key = (a.min(b), a.max(b));
        match self.assignment {
            Assignment::Resolved { sigma1, sigma2 } => {
                if key == self.cycles[0] {
                    Some(sigma1)
                } else if key == self.cycles[1] {
                    Some(sigma2)
                } else {
                    None
                }
            }
            Assignment::Ambiguous => None,
        }
    }

    /// Standard error of the resolved overlap of the given pair, for sampled input.
    pub fn overlap_error(&self, a: usize, b: usize) -> Option<f64> {
        self.overlap(a, b)?;
        let errors = self.resolved_errors?;
        let key = (a.min(b), a.max(b));
        Some(if key == self.cycles[0] { errors[0] } else { errors[1] })
    }
}

/// Roots {±𝒬 + √D, ±𝒬 − √D} with D = 𝒬² − 𝒫.
///
/// The roots inherit √ of the error in D, so near D = 0 they are accurate only
/// to about √ε; `tol_range` should reflect that.
pub fn solve_pair(
    cal_p: f64,
    cal_q: f64,
    statistics: Statistics,
    symmetry: usize,
    tol_disc: f64,
    tol_range: f64,
) -> Result<PairSolution, ExtractionError> {
    let mut d = cal_q * cal_q - cal_p;
    let mut clamped = false;
    if d < 0.0 {
        if d < -tol_disc {
            return Err(ExtractionError::NegativeDiscriminant { symmetry, value: d, tolerance: tol_disc });
        }
        d = 0.0;
        clamped = true;
    }
    let centre = statistics.pm() * cal_q;
    let root = d.sqrt();
    let mut values = [centre + root, centre - root];
    for v in &mut values {
        if *v < -tol_range || *v > 1.0 + tol_range {
            return Err(ExtractionError::OverlapOutOfRange { symmetry, value: *v });
        }
        *v = v.clamp(0.0, 1.0);
    }
    Ok(PairSolution {
        symmetry,
        cycles: symmetry_pairs(symmetry),
        values,
        sum: Estimate { value: 2.0 * centre, std_error: None },
        discriminant: d,
        clamped,
        assignment: Assignment::Ambiguous,
        std_errors: None,
        resolved_errors: None,
        near_singular: false,
    })
}

/// Solves all three pairs from class probabilities, with delta-method errors for sampled input.
pub fn solve_pairs(
    p: &ClassProbabilities,
    statistics: Statistics,
    tol: &Tolerances,
) -> Result<[PairSolution; 3], ExtractionError> {
    let mut out = Vec::with_capacity(3);
    for s in 1..=3 {
        let (fp, fq) = (forms::cal_p(s), forms::cal_q(s));
        let (vp, vq) = (fp.eval(p), fq.eval(p));
        // Linearization of D = 𝒬² − 𝒫 around the estimate.
        let disc_form = fq.scale(2.0 * vq).minus(fp);
        let tol_disc = match disc_form.std_error(p) {
            Some(se) => (9.0 * se).max(tol.tol_disc),
            None => tol.tol_disc,
        };
        let tol_range = tol_disc.sqrt().max(5.0 * fq.std_error(p).unwrap_or(0.0));
        let mut sol = solve_pair(vp, vq, statistics, s, tol_disc, tol_range)?;
        sol.sum.std_error = fq.std_error(p).map(|e| 2.0 * e);
        if p.is_sampled() {
            let pm = statistics.pm();
            let root = sol.discriminant.sqrt();
            let se_d = disc_form.std_error(p).unwrap_or(0.0);
            sol.near_singular = root * root <= 3.0 * se_d;
            let errors = [1.0, -1.0].map(|branch| {
                if root == 0.0 {
                    // At D = 0 the derivative of √D diverges; fall back to the centre's error.
                    return fq.std_error(p).unwrap_or(0.0);
                }
                let dq = pm + branch * vq / root;
                let dp = -branch / (2.0 * root);
                fq.scale(dq).plus(fp.scale(dp)).std_error(p).unwrap_or(0.0)
            });
            sol.std_errors = Some(errors);
        }
        out.push(sol);
    }
    Ok(out.try_into().expect("three symmetries"))
}

/// What one marked-particle run determines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedRun {
    pub marked: usize,
    /// T of each pair among the three unmarked particles, from T = ±2𝒬_𝒮.
    pub pair_overlaps: Vec<PairOverlap>,
    /// The unmarked particles, ascending.
    pub triad: [usize; 3],
    /// ⟨Π⟩ of the three unmarked particles.
    pub triad_expectation: Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairOverlap {
    pub pair: (usize, usize),
    pub value: Estimate,
}

/// Interprets class probabilities measured with particle `marked` made distinguishable.
pub fn marked_run(
    p: &ClassProbabilities,
    statistics: Statistics,
    marked: usize,
) -> Result<MarkedRun, ExtractionError> {
    if !(1..=4).contains(&marked) {
        return Err(ExtractionError::BadMarked(marked));
    }
    let mut pair_overlaps = Vec::with_capacity(3);
    for s in 1..=3 {
        let pair = symmetry_pairs(s)
            .into_iter()
            .find(|&(a, b)| a != marked && b != marked)
            .expect("one transposition avoids the marked particle");
        let form = forms::cal_q(s).scale(2.0 * statistics.pm());
        pair_overlaps.push(PairOverlap { pair, value: Estimate::of(&form, p) });
    }
    pair_overlaps.sort_by_key(|o| o.pair);
    let mut rest = (1..=4).filter(|&a| a != marked);
    let triad = [rest.next().unwrap(), rest.next().unwrap(), rest.next().unwrap()];
    Ok(MarkedRun {
        marked,
        pair_overlaps,
        triad,
        triad_expectation: Estimate::of(&forms::marked_triad(statistics), p),
    })
}

/// Simulates the run with `marked` made fully distinguishable and interprets it.
pub fn marked_particle_protocol(
    ensemble: &InternalEnsemble,
    marked: usize,
    u: &ModeUnitary,
    tol: &Tolerances,
) -> Result<MarkedRun, ExtractionError> {
    if !u.is_hypercube() {
        return Err(ExtractionError::NotHypercube);
    }
    if !(1..=4).contains(&marked) {
        return Err(ExtractionError::BadMarked(marked));
    }
    let marked_ensemble = ensemble.make_distinguishable(marked)?;
    let stats = interferometer::full_statistics(&marked_ensemble, u, tol)?;
    marked_run(&ClassProbabilities::from_statistics(&stats), ensemble.statistics(), marked)
}

/// Mean of all marked determinations of T_(ab), with the error of the mean.
fn marked_overlap(runs: &[MarkedRun], pair: (usize, usize)) -> Option<Estimate> {
    let hits: Vec<Estimate> = runs
        .iter()
        .flat_map(|r| r.pair_overlaps.iter())
        .filter(|o| o.pair == pair)
        .map(|o| o.value)
        .collect();
    if hits.is_empty() {
        return None;
    }
    let n = hits.len() as f64;
    let value = hits.iter().map(|e| e.value).sum::<f64>() / n;
    let std_error = hits
        .iter()
        .map(|e| e.std_error.map(|s| s * s))
        .sum::<Option<f64>>()
        .map(|v| v.sqrt() / n);
    Some(Estimate { value, std_error })
}

/// Assigns each pair's roots to its transpositions using marked-run overlaps.
///
/// A pair is resolved as soon as either of its transpositions avoids some marked
/// particle. The marked value must match one root within `tolerance` (or five
/// combined standard errors); the resolved values are then taken from the
/// marked runs and the sum T_σ1 + T_σ2.
pub fn resolve_pairs(
    pairs: &mut [PairSolution; 3],
    runs: &[MarkedRun],
    tolerance: f64,
) -> Result<(), ExtractionError> {
    for sol in pairs.iter_mut() {
        let [c1, c2] = sol.cycles;
        let (m1, m2) = (marked_overlap(runs, c1), marked_overlap(runs, c2));
        let orientation = |m: Estimate, root_se: Option<f64>| -> Option<bool> {
            let slack = tolerance.max(5.0 * m.std_error.unwrap_or(0.0).hypot(root_se.unwrap_or(0.0)));
            let d0 = (m.value - sol.values[0]).abs();
            let d1 = (m.value - sol.values[1]).abs();
            if d0.min(d1) > slack {
                None
            } else {
                Some(d0 <= d1)
            }
        };
        let se = |k: usize| sol.std_errors.map(|e| e[k]);
        // Each marked value must match a root; `true` means σ1 carries the larger one.
        let _larger_first = match (m1, m2) {
            (None, None) => continue,
            (Some(m), None) => orientation(m, se(0)).ok_or(ExtractionError::InconsistentMarking {
                a: c1.0,
                b: c1.1,
                marked: m.value,
                candidates: sol.values,
            })?,
            (None, Some(m)) => !orientation(m, se(0)).ok_or(ExtractionError::InconsistentMarking {
                a: c2.0,
                b: c2.1,
                marked: m.value,
                candidates: sol.values,
            })?,
            (Some(a), Some(b)) => {
                let straight = (a.value - sol.values[0]).abs() + (b.value - sol.values[1]).abs();
                let swapped = (a.value - sol.values[1]).abs() + (b.value - sol.values[0]).abs();
                let first = straight <= swapped;
                let (ra, rb) = if first { (sol.values[0], sol.values[1]) } else { (sol.values[1], sol.values[0]) };
                let slack = |m: Estimate| tolerance.max(5.0 * m.std_error.unwrap_or(0.0).hypot(se(0).unwrap_or(0.0)));
                if (a.value - ra).abs() > slack(a) {
                    return Err(ExtractionError::InconsistentMarking { a: c1.0, b: c1.1, marked: a.value, candidates: sol.values });
                }
                if (b.value - rb).abs() > slack(b) {
                    return Err(ExtractionError::InconsistentMarking { a: c2.0, b: c2.1, marked: b.value, candidates: sol.values });
                }
                first
            }
        };
        // The marked values and the sum are linear in the data, so they are
        // used in place of the roots once the orientation is settled.
        let err = |e: Estimate| e.std_error.unwrap_or(0.0);
        let ((t1, e1), (t2, e2)) = match (m1, m2) {
            (Some(a), Some(b)) => ((a.value, err(a)), (b.value, err(b))),
            (Some(a), None) => ((a.value, err(a)), (sol.sum.value - a.value, err(a).hypot(err(sol.sum)))),
            (None, Some(b)) => ((sol.sum.value - b.value, err(b).hypot(err(sol.sum))), (b.value, err(b))),
            (None, None) => unreachable!("skipped above"),
        };
        sol.assignment = Assignment::Resolved { sigma1: t1.clamp(0.0, 1.0), sigma2: t2.clamp(0.0, 1.0) };
        if sol.std_errors.is_some() {
            sol.resolved_errors = Some([e1, e2]);
        }
    }
    Ok(())
}

/// One four-cycle term T·cos φ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourCycleTerm {
    pub cycle: crate::permgroup::Cycle,
    pub value: Estimate,
}

/// Projector expectations recoverable from the statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedExpectations {
    pub four_particle: Estimate,
    pub three_particle_avg: Estimate,
    pub two_particle_avg: Estimate,
    /// (32/3)·p_{𝒜_B}; bosons only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub four_particle_from_bunching: Option<Estimate>,
    /// ⟨Π⟩ of particle triads, from marked runs.
    pub triads: Vec<SubsetExpectation>,
}

/// Everything extracted from one set of class probabilities (plus optional marked runs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub statistics: Statistics,
    /// Whether the internal states were declared pure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pure: Option<bool>,
    pub class_probabilities: ClassProbabilities,
    pub combined: Combined,
    pub quantifiers: Quantifiers,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantifier_std_errors: Option<[f64; 4]>,
    pub pairs: [PairSolution; 3],
    pub fourcycle_terms: [FourCycleTerm; 3],
    pub projector: ExtractedExpectations,
    pub marked_runs: Vec<MarkedRun>,
    /// True if any pair is still ambiguous.
    pub ambiguous: bool,
    pub diagnostics: Vec<String>,
}

impl ExtractionReport {
    /// Resolved T_(ab) from the pair solutions.
    pub fn pair_overlap(&self, a: usize, b: usize) -> Option<f64> {
        self.pairs.iter().find_map(|s| s.overlap(a, b))
    }

    /// ⟨Π⟩ of a triad from the marked runs, averaged when measured more than once.
    pub fn triad_expectation(&self, triad: [usize; 3]) -> Option<f64> {
        let mut t = triad;
        t.sort_unstable();
        self.projector.triads.iter().find(|s| s.subset == t).map(|s| s.value)
    }

    pub fn fourcycle(&self, labels: [usize; 4]) -> Option<f64> {
        let c = crate::permgroup::Cycle::new(&labels).ok()?;
        self.fourcycle_terms.iter().find(|t| t.cycle == c).map(|t| t.value.value)
    }
}

/// Runs the full extraction.
pub fn extract(
    p: &ClassProbabilities,
    statistics: Statistics,
    runs: &[MarkedRun],
    tol: &Tolerances,
) -> Result<ExtractionReport, ExtractionError> {
    p.validate(tol)?;
    let mut diagnostics = Vec::new();
    let q_forms = [forms::i112(statistics), forms::i13(), forms::i22(), forms::i4(statistics)];
    let quantifiers = extract_quantifiers(p, statistics);
    let quantifier_std_errors = p.covariance.as_ref().map(|_| q_forms.map(|f| f.std_error(p).unwrap_or(0.0)));

    let mut pairs = solve_pairs(p, statistics, tol)?;
    for sol in &pairs {
        if sol.clamped {
            diagnostics.push(format!("symmetry {}: discriminant clamped to zero", sol.symmetry));
        }
        if sol.near_singular {
            diagnostics.push(format!(
                "symmetry {}: discriminant within three standard errors of zero, pair errors unreliable",
                sol.symmetry
            ));
        }
    }
    let match_tol = if p.is_sampled() { 0.0 } else { tol.tol_disc.sqrt().max(1e-9) };
    resolve_pairs(&mut pairs, runs, match_tol)?;

    let fourcycle_terms = std::array::from_fn(|k| FourCycleTerm {
        cycle: crate::permgroup::Cycle::new(&interferometer::symmetry_four_cycle(k + 1)).expect("valid"),
        value: Estimate::of(&forms::four_cycle(k + 1, statistics), p),
    });

    // I_4 = 2 Σ T·cos φ over the three four-cycles holds identically for consistent data.
    let i4_from_terms: f64 = 2.0 * fourcycle_terms.iter().map(|t: &FourCycleTerm| t.value.value).sum::<f64>();
    let i4_slack = quantifier_std_errors.map(|e| 5.0 * e[3]).unwrap_or(1e-8).max(1e-8);
    if (i4_from_terms - quantifiers.i4).abs() > i4_slack {
        diagnostics.push(format!(
            "four-cycle terms sum to {:.6e}, I_4 = {:.6e}",
            i4_from_terms, quantifiers.i4
        ));
    }

    let four_form = sum(q_forms).plus(LinearForm::constant(1.0)).scale(1.0 / 24.0);
    let three_form = LinearForm::constant(1.0)
        .plus(q_forms[0].scale(0.5))
        .plus(q_forms[1].scale(0.25))
        .scale(1.0 / 6.0);
    let two_form = LinearForm::constant(1.0).plus(q_forms[0].scale(1.0 / 6.0)).scale(0.5);

    let mut triads: Vec<SubsetExpectation> = Vec::new();
    let mut sorted_runs = runs.to_vec();
    sorted_runs.sort_by_key(|r| r.marked);
    for run in &sorted_runs {
        if let Some(existing) = triads.iter_mut().find(|s| s.subset == run.triad.to_vec()) {
            existing.value = 0.5 * (existing.value + run.triad_expectation.value);
        } else {
            triads.push(SubsetExpectation { subset: run.triad.to_vec(), value: run.triad_expectation.value });
        }
    }
    triads.sort_by(|a, b| a.subset.cmp(&b.subset));

    let projector = ExtractedExpectations {
        four_particle: Estimate::of(&four_form, p),
        three_particle_avg: Estimate::of(&three_form, p),
        two_particle_avg: Estimate::of(&two_form, p),
        four_particle_from_bunching: (statistics == Statistics::Boson)
            .then(|| Estimate::of(&forms::four_particle_from_bunching(), p)),
        triads,
    };
    let ambiguous = pairs.iter().any(|s| !s.is_resolved());
    Ok(ExtractionReport {
        statistics,
        pure: None,
        class_probabilities: p.clone(),
        combined: combine(p),
        quantifiers,
        quantifier_std_errors,
        pairs,
        fourcycle_terms,
        projector,
        marked_runs: sorted_runs,
        ambiguous,
        diagnostics,
    })
}
