//! Acceptance criteria, one line each. Runs without the libtest harness so the
//! report is printed on success too.

use std::time::{Duration, Instant};

use fourfold::cmat;
use fourfold::external::{self, ExternalState};
use fourfold::extraction::{self, ClassProbabilities};
use fourfold::interferometer::{self, all_events, EventClass, ModeUnitary, OutputStatistics};
use fourfold::internal::{random, EnsembleSpec, InternalEnsemble};
use fourfold::reconstruction::{self, ReconstructionError};
use fourfold::sampling;
use fourfold::{Statistics, Tolerances};

const CLOSED_FORM_TOL: f64 = 1e-10;
const CLOSED_FORM_BUDGET: Duration = Duration::from_secs(10);
const LIMIT_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;
const NEGATIVE_CONTROL_MIN: f64 = 1e-3;
const EXTRACTION_TOL: f64 = 1e-9;
const PARTIAL_TRACE_TOL: f64 = 1e-10;
const RECONSTRUCTION_TOL: f64 = 1e-8;
const BRANCH_CONJUGATE_TOL: f64 = 1e-10;
const CONJUGATION_TOL: f64 = 1e-12;
const MC_SHOTS: u64 = 1_000_000;
const MC_SIGMAS: f64 = 5.0;
/// Absolute slack for classes whose standard error vanishes (all or no counts).
const MC_FLOOR: f64 = 1e-12;
const MC_SLOPE_TOL: f64 = 0.1;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

const FIXTURES: [(&str, &str); 4] = [
    ("distinguishable", include_str!("../../../fixtures/distinguishable.json")),
    ("ideal_boson", include_str!("../../../fixtures/ideal_boson.json")),
    ("ideal_fermion", include_str!("../../../fixtures/ideal_fermion.json")),
    ("random_pure_seed7", include_str!("../../../fixtures/random_pure_seed7.json")),
];

fn fixture(name: &str) -> InternalEnsemble {
    let text = FIXTURES.iter().find(|(n, _)| *n == name).expect("known fixture").1;
    let spec: EnsembleSpec = serde_json::from_str(text).expect("fixture parses");
    spec.to_ensemble(&Tolerances::default()).expect("fixture is valid")
}

fn statistics_for(k: u64) -> Statistics {
    if k.is_multiple_of(2) {
        Statistics::Boson
    } else {
        Statistics::Fermion
    }
}

/// Alternating pure and mixed, boson and fermion, d ∈ {2, 3, 4}.
fn random_ensemble(k: u64) -> InternalEnsemble {
    let d = 2 + (k as usize % 3);
    let stats = statistics_for(k / 2);
    if k.is_multiple_of(2) {
        random::pure_ensemble(d, stats, 1000 + k)
    } else {
        random::mixed_ensemble(d, stats, 1000 + k)
    }
}

fn hypercube_stats(e: &InternalEnsemble) -> OutputStatistics {
    interferometer::full_statistics(e, &ModeUnitary::hypercube(), &Tolerances::default()).expect("valid statistics")
}

fn closed_form_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for k in 0..200 {
        let e = random_ensemble(k);
        let stats = hypercube_stats(&e);
        for (event, p) in &stats.per_event {
            let closed = interferometer::closed_form_class_probability(&e, event.class());
            worst = worst.max((closed - p).abs());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= CLOSED_FORM_TOL && elapsed < CLOSED_FORM_BUDGET,
        format!("max |closed − brute| = {worst:.2e} (≤ {CLOSED_FORM_TOL:.0e}) over 200 ensembles in {:.2} s", elapsed.as_secs_f64()),
    )
}

fn limiting_tables() -> Outcome {
    use EventClass::*;
    let mut worst = 0.0f64;
    let mut check = |stats: &OutputStatistics, expected: &[(EventClass, f64)]| {
        for &(c, v) in expected {
            worst = worst.max((stats.class_probability(c) - v).abs());
        }
        worst = worst.max((stats.total() - 1.0).abs());
    };
    let dist = [
        (F1I, 1.0 / 64.0),
        (F2I, 1.0 / 64.0),
        (F3I, 1.0 / 64.0),
        (F1II, 3.0 / 64.0),
        (F2II, 3.0 / 64.0),
        (F3II, 3.0 / 64.0),
        (AA, 3.0 / 32.0),
        (AB, 1.0 / 256.0),
        (A1, 3.0 / 128.0),
        (A2, 3.0 / 128.0),
        (A3, 3.0 / 128.0),
    ];
    let d = fixture("distinguishable");
    check(&hypercube_stats(&d), &dist);
    check(&hypercube_stats(&d.with_statistics(Statistics::Fermion)), &dist);
    let bosons = hypercube_stats(&fixture("ideal_boson"));
    check(&bosons, &[(AA, 0.25), (AB, 3.0 / 32.0), (A1, 1.0 / 16.0), (A2, 1.0 / 16.0), (A3, 1.0 / 16.0)]);
    let forbidden = bosons
        .per_event
        .iter()
        .filter(|(e, _)| e.class().is_forbidden())
        .map(|(_, p)| *p)
        .fold(0.0, f64::max);
    let forbidden_count = bosons.per_event.iter().filter(|(e, _)| e.class().is_forbidden()).count();
    let fermions = hypercube_stats(&fixture("ideal_fermion"));
    check(&fermions, &[(AA, 1.0)]);
    let four = [
        external::projector_expectation(&d, &[1, 2, 3, 4]).unwrap() - 1.0 / 24.0,
        external::projector_expectation(&fixture("ideal_boson"), &[1, 2, 3, 4]).unwrap() - 1.0,
    ]
    .iter()
    .map(|x| x.abs())
    .fold(0.0, f64::max);
    let worst = worst.max(four);
    outcome(
        worst <= LIMIT_TOL && forbidden <= LIMIT_TOL && forbidden_count == 24,
        format!("max table deviation {worst:.2e}, max forbidden p {forbidden:.2e} over {forbidden_count} events (≤ {LIMIT_TOL:.0e})"),
    )
}

fn klein_four_symmetry() -> Outcome {
    let mut worst = 0.0f64;
    for k in 0..100 {
        worst = worst.max(hypercube_stats(&random_ensemble(k)).max_spread());
    }
    let tol = Tolerances::default();
    let e = random::pure_ensemble(4, Statistics::Boson, 77);
    let state = ExternalState::from_ensemble(&e);
    let u = ModeUnitary::haar_random(77);
    let per_event = all_events()
        .into_iter()
        .map(|ev| (ev, interferometer::event_probability(&state, &u, &ev, &tol).unwrap()))
        .collect();
    let control = OutputStatistics::from_events(per_event, Statistics::Boson).max_spread();
    outcome(
        worst <= SYMMETRY_TOL && control >= NEGATIVE_CONTROL_MIN,
        format!("max intra-class spread {worst:.2e} (≤ {SYMMETRY_TOL:.0e}); random-unitary control {control:.2e} (≥ {NEGATIVE_CONTROL_MIN:.0e})"),
    )
}

fn extraction_round_trip() -> Outcome {
    let tol = Tolerances::default();
    let u = ModeUnitary::hypercube();
    let (mut q_err, mut four_err, mut bunch_err, mut pair_err) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut unresolved = 0;
    for k in 0..100 {
        let e = random_ensemble(k);
        let stats = hypercube_stats(&e);
        let runs: Vec<_> = (1..=4).map(|m| extraction::marked_particle_protocol(&e, m, &u, &tol).unwrap()).collect();
        let r = extraction::extract(&ClassProbabilities::from_statistics(&stats), e.statistics(), &runs, &tol).unwrap();
        let truth = external::quantifiers(&e);
        for (a, b) in r.quantifiers.as_array().iter().zip(truth.as_array()) {
            q_err = q_err.max((a - b).abs());
        }
        let table = e.trace_table();
        for term in &r.fourcycle_terms {
            four_err = four_err.max((term.value.value - table.real_part(&term.cycle.one_based())).abs());
        }
        if let Some(b) = r.projector.four_particle_from_bunching {
            bunch_err = bunch_err.max((b.value - external::projector_expectation(&e, &[1, 2, 3, 4]).unwrap()).abs());
        }
        for a in 1..=4 {
            for b in (a + 1)..=4 {
                match r.pair_overlap(a, b) {
                    Some(t) => pair_err = pair_err.max((t - e.pair_overlap(a, b)).abs()),
                    None => unresolved += 1,
                }
            }
        }
    }
    let worst = q_err.max(four_err).max(bunch_err).max(pair_err);
    outcome(
        worst <= EXTRACTION_TOL && unresolved == 0,
        format!(
            "I_L {q_err:.2e}, T·cos φ {four_err:.2e}, ⟨Π⟩4p from bunching {bunch_err:.2e}, pairwise T {pair_err:.2e} with {unresolved} unresolved (≤ {EXTRACTION_TOL:.0e})"
        ),
    )
}

fn partial_trace_identities() -> Outcome {
    let mut worst = 0.0f64;
    for k in 0..100 {
        let e = random_ensemble(k);
        let s = ExternalState::from_ensemble(&e);
        let q = external::quantifiers(&e);
        let three = s.partial_trace(3).unwrap().projector_expectation();
        let two = s.partial_trace(2).unwrap().projector_expectation();
        worst = worst.max((three - q.three_particle()).abs()).max((two - q.two_particle()).abs());
    }
    outcome(worst <= PARTIAL_TRACE_TOL, format!("max deviation {worst:.2e} (≤ {PARTIAL_TRACE_TOL:.0e}) over 100 ensembles"))
}

fn reconstruction() -> Outcome {
    let tol = Tolerances::default();
    let u = ModeUnitary::hypercube();
    let patterns: [&[(usize, usize)]; 5] = [&[], &[(1, 3)], &[(1, 3), (1, 4)], &[(1, 3), (2, 4)], &[(1, 4), (2, 4), (3, 4)]];
    let (mut worst, mut worst_conj) = (0.0f64, 0.0f64);
    let mut failures = Vec::new();
    let mut covered = [0usize; 5];
    for k in 0..100u64 {
        let t = (k % 5) as usize;
        let e = random::pure_ensemble_with_orthogonal_pairs(4, statistics_for(k / 5), patterns[t], 5000 + k).unwrap();
        let stats = hypercube_stats(&e);
        let runs: Vec<_> = (1..=4).map(|m| extraction::marked_particle_protocol(&e, m, &u, &tol).unwrap()).collect();
        let mut r = extraction::extract(&ClassProbabilities::from_statistics(&stats), e.statistics(), &runs, &tol).unwrap();
        r.pure = Some(true);
        match reconstruction::reconstruct(&r, &tol) {
            Ok(rec) => {
                if rec.topology.letter() == ["a", "b", "c", "d", "e"][t] {
                    covered[t] += 1;
                }
                let truth = ExternalState::from_ensemble(&e);
                let d0 = cmat::frobenius_distance(rec.external_state.matrix(), truth.matrix());
                let d1 = cmat::frobenius_distance(rec.conjugate_state.matrix(), truth.matrix());
                worst = worst.max(d0.min(d1));
                let conj = cmat::max_abs_diff(rec.external_state.matrix(), &cmat::conjugate(rec.conjugate_state.matrix()));
                worst_conj = worst_conj.max(conj);
            }
            Err(err) => failures.push(format!("ensemble {k}: {err}")),
        }
    }

    let mixed = random::mixed_ensemble(4, Statistics::Boson, 9);
    let stats = hypercube_stats(&mixed);
    let runs: Vec<_> = (1..=4).map(|m| extraction::marked_particle_protocol(&mixed, m, &u, &tol).unwrap()).collect();
    let mut r = extraction::extract(&ClassProbabilities::from_statistics(&stats), Statistics::Boson, &runs, &tol).unwrap();
    r.pure = Some(mixed.is_pure());
    let declared = matches!(reconstruction::reconstruct(&r, &tol), Err(ReconstructionError::MixedState));
    let magnitudes = matches!(
        reconstruction::reconstruct_external(&mixed.trace_table(), Statistics::Boson),
        Err(ReconstructionError::NotPure { .. })
    );

    let passed = failures.is_empty()
        && covered.iter().all(|&c| c == 20)
        && worst <= RECONSTRUCTION_TOL
        && worst_conj <= BRANCH_CONJUGATE_TOL
        && declared
        && magnitudes;
    let mut detail = format!(
        "min-branch ‖Δρ_E‖_F {worst:.2e} (≤ {RECONSTRUCTION_TOL:.0e}), branch conjugacy {worst_conj:.2e} (≤ {BRANCH_CONJUGATE_TOL:.0e}), topologies a–e {covered:?}, mixed rejected {}",
        declared && magnitudes
    );
    if let Some(f) = failures.first() {
        detail.push_str(&format!("; {} failures, first: {f}", failures.len()));
    }
    outcome(passed, detail)
}

fn conjugation_invariance() -> Outcome {
    let tol = Tolerances::default();
    let u = ModeUnitary::hypercube();
    let mut worst = 0.0f64;
    for k in 0..100 {
        let s = ExternalState::from_ensemble(&random_ensemble(k));
        let c = s.conjugate();
        for e in all_events() {
            let a = interferometer::event_probability(&s, &u, &e, &tol).unwrap();
            let b = interferometer::event_probability(&c, &u, &e, &tol).unwrap();
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst <= CONJUGATION_TOL, format!("max |p(ρ_E) − p(ρ_E*)| {worst:.2e} (≤ {CONJUGATION_TOL:.0e}) over 100 ensembles"))
}

fn monte_carlo() -> Outcome {
    let mut worst_z = 0.0f64;
    let mut violations = Vec::new();
    for (name, _) in FIXTURES {
        let e = fixture(name);
        let stats = hypercube_stats(&e);
        let record = sampling::sample(&stats, MC_SHOTS, 2024).unwrap();
        let est = sampling::estimate(&record).probabilities;
        let se = est.std_errors.unwrap();
        for c in EventClass::ALL {
            let truth = interferometer::closed_form_class_probability(&e, c);
            let diff = (est.get(c) - truth).abs();
            let allowed = MC_SIGMAS * se[c.index()] + MC_FLOOR;
            if se[c.index()] > 0.0 {
                worst_z = worst_z.max(diff / se[c.index()]);
            }
            if diff > allowed {
                violations.push(format!("{name}/{c}"));
            }
        }
    }

    // RMS error over seeds and classes at three shot counts; slope of log RMS against log N.
    let e = fixture("random_pure_seed7");
    let stats = hypercube_stats(&e);
    let truth: Vec<f64> = EventClass::ALL.iter().map(|&c| interferometer::closed_form_class_probability(&e, c)).collect();
    let shots = [10_000u64, 100_000, 1_000_000];
    let rms: Vec<f64> = shots
        .iter()
        .map(|&n| {
            let mut sq = 0.0;
            let mut count = 0.0;
            for seed in 0..40 {
                let est = sampling::estimate(&sampling::sample(&stats, n, seed).unwrap()).probabilities;
                for (k, t) in truth.iter().enumerate() {
                    sq += (est.values[k] - t).powi(2);
                    count += 1.0;
                }
            }
            (sq / count).sqrt()
        })
        .collect();
    let x: Vec<f64> = shots.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = rms.iter().map(|r| r.ln()).collect();
    let (mx, my) = (x.iter().sum::<f64>() / 3.0, y.iter().sum::<f64>() / 3.0);
    let slope = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
        / x.iter().map(|a| (a - mx).powi(2)).sum::<f64>();

    let passed = violations.is_empty() && (slope + 0.5).abs() <= MC_SLOPE_TOL;
    let mut detail = format!(
        "max |z| {worst_z:.2} (≤ {MC_SIGMAS}) on 4 fixtures at 10⁶ shots; RMS slope {slope:.3} (−0.5 ± {MC_SLOPE_TOL})"
    );
    if !violations.is_empty() {
        detail.push_str(&format!("; outside band: {}", violations.join(", ")));
    }
    outcome(passed, detail)
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("closed form equals brute force", closed_form_equivalence),
        ("limiting tables", limiting_tables),
        ("Klein-four symmetry", klein_four_symmetry),
        ("extraction round trip", extraction_round_trip),
        ("partial-trace identities", partial_trace_identities),
        ("reconstruction up to conjugation", reconstruction),
        ("conjugation invariance", conjugation_invariance),
        ("Monte Carlo consistency", monte_carlo),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.passed {
            failed += 1;
        }
        println!("{} {}. {}: {}", if o.passed { "PASS" } else { "FAIL" }, k + 1, name, o.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
