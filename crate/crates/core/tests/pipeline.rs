use fourfold::cmat;
use fourfold::external::{projector_expectation, quantifiers, ExternalState};
use fourfold::extraction::{self, ClassProbabilities};
use fourfold::interferometer::{full_statistics, ModeUnitary};
use fourfold::internal::{random, InternalEnsemble};
use fourfold::reconstruction;
use fourfold::{Statistics, Tolerances};

fn report(ensemble: &InternalEnsemble, marks: &[usize]) -> extraction::ExtractionReport {
    let tol = Tolerances::default();
    let u = ModeUnitary::hypercube();
    let stats = full_statistics(ensemble, &u, &tol).unwrap();
    let runs: Vec<_> = marks
        .iter()
        .map(|&m| extraction::marked_particle_protocol(ensemble, m, &u, &tol).unwrap())
        .collect();
    let mut r = extraction::extract(&ClassProbabilities::from_statistics(&stats), ensemble.statistics(), &runs, &tol).unwrap();
    r.pure = Some(ensemble.is_pure());
    r
}

#[test]
fn extracted_quantifiers_match_trace_products() {
    for seed in 0..10 {
        for stats in [Statistics::Boson, Statistics::Fermion] {
            let e = random::mixed_ensemble(3, stats, seed);
            let r = report(&e, &[]);
            let q = quantifiers(&e);
            for (a, b) in r.quantifiers.as_array().iter().zip(q.as_array()) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
            assert!(r.diagnostics.is_empty(), "{:?}", r.diagnostics);
        }
    }
}

#[test]
fn marked_runs_resolve_pairs_and_triads() {
    for stats in [Statistics::Boson, Statistics::Fermion] {
        let e = random::pure_ensemble(4, stats, 21);
        let r = report(&e, &[1, 2, 3, 4]);
        assert!(!r.ambiguous);
        for a in 1..=4 {
            for b in (a + 1)..=4 {
                assert!((r.pair_overlap(a, b).unwrap() - e.pair_overlap(a, b)).abs() < 1e-9);
            }
        }
        for t in reconstruction::TRIADS {
            let want = projector_expectation(&e, &t).unwrap();
            assert!((r.triad_expectation(t).unwrap() - want).abs() < 1e-10);
        }
    }
}

#[test]
fn reconstruction_over_topologies() {
    let patterns: [&[(usize, usize)]; 5] = [&[], &[(1, 3)], &[(1, 3), (1, 4)], &[(1, 3), (2, 4)], &[(1, 4), (2, 4), (3, 4)]];
    let letters = ["a", "b", "c", "d", "e"];
    for (pattern, letter) in patterns.iter().zip(letters) {
        for seed in 0..4 {
            for stats in [Statistics::Boson, Statistics::Fermion] {
                let e = random::pure_ensemble_with_orthogonal_pairs(4, stats, pattern, seed).unwrap();
                let r = report(&e, &[1, 2, 3, 4]);
                let rec = reconstruction::reconstruct(&r, &Tolerances::default()).unwrap();
                assert_eq!(rec.topology.letter(), letter);
                let truth = ExternalState::from_ensemble(&e);
                let d0 = cmat::frobenius_distance(rec.external_state.matrix(), truth.matrix());
                let d1 = cmat::frobenius_distance(rec.conjugate_state.matrix(), truth.matrix());
                assert!(d0.min(d1) < 1e-8, "{letter} seed {seed}: {d0} {d1}");
                assert!(rec.residuals.conjugation < 1e-10);
            }
        }
    }
}

#[test]
fn sampled_quantifiers_agree_within_errors() {
    let tol = Tolerances::default();
    for (seed, stats) in [(3, Statistics::Boson), (4, Statistics::Fermion)] {
        let e = random::mixed_ensemble(2, stats, seed);
        let exact = full_statistics(&e, &ModeUnitary::hypercube(), &tol).unwrap();
        let record = fourfold::sampling::sample_batches(&exact, 4, 500_000, seed).unwrap();
        let p = fourfold::sampling::estimate(&record).probabilities;
        let r = extraction::extract(&p, stats, &[], &tol).unwrap();
        let se = r.quantifier_std_errors.unwrap();
        for ((got, want), se) in r.quantifiers.as_array().iter().zip(quantifiers(&e).as_array()).zip(se) {
            assert!(se > 0.0);
            assert!((got - want).abs() <= 5.0 * se, "{got} vs {want} ± {se}");
        }
    }
}
