//! The subcommands.

use std::path::{Path, PathBuf};

use fourfold::external::{quantifiers, ExternalState, ExternalStateJson};
use fourfold::extraction::{self, ClassProbabilities, ExtractionError, ExtractionReport, MarkedRun};
use fourfold::interferometer::{
    self, all_events, EventClass, InterferometerError, ModeUnitary, OutputStatistics, OutputStatisticsJson,
};
use fourfold::internal::{random, EnsembleSpec, InternalEnsemble, InternalError};
use fourfold::reconstruction::{self, ReconstructionError, ReconstructionJson};
use fourfold::sampling::{self, SamplingError, ShotRecord};
use fourfold::{Statistics, Tolerances};
use serde::Serialize;

use crate::output::{emit, fmt, read_json, read_value, sibling, Table};
use crate::{Cli, CliError, EnsembleKind};

fn internal_error(e: InternalError) -> CliError {
    CliError::schema(e)
}

fn interferometer_error(e: InterferometerError) -> CliError {
    match e {
        InterferometerError::Schema(_) | InterferometerError::UnknownClass(_) | InterferometerError::BadOccupation(_) => {
            CliError::schema(e)
        }
        InterferometerError::Normalization(_) | InterferometerError::NegativeProbability { .. } => {
            CliError::inconsistent(e)
        }
        _ => CliError::invariant(e),
    }
}

fn extraction_error(e: ExtractionError) -> CliError {
    match e {
        ExtractionError::BadMarked(_) | ExtractionError::StatisticsMismatch { .. } => CliError::schema(e),
        ExtractionError::NotHypercube => CliError::precondition(e),
        ExtractionError::Interferometer(inner) => interferometer_error(inner),
        ExtractionError::Internal(inner) => internal_error(inner),
        _ => CliError::inconsistent(e),
    }
}

fn sampling_error(e: SamplingError) -> CliError {
    match e {
        SamplingError::Unnormalized(_) | SamplingError::BadProbability { .. } => CliError::inconsistent(e),
        _ => CliError::schema(e),
    }
}

fn reconstruction_error(e: ReconstructionError) -> CliError {
    match e {
        ReconstructionError::MixedState
        | ReconstructionError::PurityUndeclared
        | ReconstructionError::Unresolved(_)
        | ReconstructionError::MissingTriad(_)
        | ReconstructionError::NotPure { .. } => CliError::precondition(e),
        ReconstructionError::Inconsistent { .. } | ReconstructionError::NoConsistentBranch { .. } => {
            CliError::inconsistent(e)
        }
        _ => CliError::invariant(e),
    }
}

fn load_ensemble(cli: &Cli, tol: &Tolerances, path: &Path) -> Result<InternalEnsemble, CliError> {
    let spec: EnsembleSpec = read_json(path)?;
    let ensemble = spec.to_ensemble(tol).map_err(internal_error)?;
    Ok(match cli.statistics {
        Some(s) => ensemble.with_statistics(s),
        None => ensemble,
    })
}

fn parse_pair(s: &str) -> Result<(usize, usize), CliError> {
    let (a, b) = s.split_once('-').ok_or_else(|| CliError::schema(format!("pair {s:?} is not of the form a-b")))?;
    let parse = |x: &str| {
        x.trim()
            .parse::<usize>()
            .ok()
            .filter(|v| (1..=4).contains(v))
            .ok_or_else(|| CliError::schema(format!("pair {s:?} has a label outside 1..=4")))
    };
    let (a, b) = (parse(a)?, parse(b)?);
    if a == b {
        return Err(CliError::schema(format!("pair {s:?} repeats a label")));
    }
    Ok((a.min(b), a.max(b)))
}

pub fn generate(cli: &Cli, kind: EnsembleKind, dimension: usize, seed: u64, orthogonal: &[String]) -> Result<(), CliError> {
    let statistics = cli.statistics.unwrap_or(Statistics::Boson);
    if !orthogonal.is_empty() && kind != EnsembleKind::RandomPure {
        return Err(CliError::precondition("--orthogonal applies to random-pure ensembles only"));
    }
    if dimension == 0 {
        return Err(CliError::schema("dimension must be positive"));
    }
    let ensemble = match kind {
        EnsembleKind::Distinguishable => InternalEnsemble::distinguishable(statistics),
        EnsembleKind::Ideal => InternalEnsemble::indistinguishable(statistics, dimension),
        EnsembleKind::RandomPure => {
            let pairs = orthogonal.iter().map(|s| parse_pair(s)).collect::<Result<Vec<_>, _>>()?;
            random::pure_ensemble_with_orthogonal_pairs(dimension, statistics, &pairs, seed).map_err(internal_error)?
        }
        EnsembleKind::RandomMixed => random::mixed_ensemble(dimension, statistics, seed),
    };
    let spec = EnsembleSpec::from_ensemble(&ensemble);
    emit(cli.output.as_deref(), cli.format, &spec, || {
        let mut t = Table::new(&["particle", "row", "column", "re", "im"]);
        for (k, s) in ensemble.states().iter().enumerate() {
            let m = s.matrix();
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    t.row([(k + 1).to_string(), i.to_string(), j.to_string(), fmt(m[(i, j)].re), fmt(m[(i, j)].im)]);
                }
            }
        }
        t
    })
}

fn statistics_table(stats: &OutputStatistics) -> Table {
    let mut t = Table::new(&["event", "class", "probability"]);
    for (e, p) in &stats.per_event {
        t.row([e.to_string(), e.class().to_string(), fmt(*p)]);
    }
    t
}

fn print_class_table(stats: &OutputStatistics, label: &str) {
    eprintln!("{label}");
    eprintln!("  {:<6} {:>4}  {:<22} {:<10}", "class", "size", "probability", "spread");
    for c in EventClass::ALL {
        eprintln!(
            "  {:<6} {:>4}  {:<22.15e} {:<10.2e}",
            c.name(),
            c.size(),
            stats.class_probability(c),
            stats.class_spread[c.index()]
        );
    }
    eprintln!("  normalization residual {:.3e}", stats.total() - 1.0);
}

pub fn simulate(cli: &Cli, tol: &Tolerances, path: &Path, marks: &[usize]) -> Result<(), CliError> {
    let ensemble = load_ensemble(cli, tol, path)?;
    if !marks.is_empty() && cli.output.is_none() {
        return Err(CliError::precondition("--mark writes one file per run and needs --output"));
    }
    let u = ModeUnitary::hypercube();
    let stats = interferometer::full_statistics(&ensemble, &u, tol).map_err(interferometer_error)?;
    print_class_table(&stats, "unmarked");
    let doc = OutputStatisticsJson::new(&stats, Some(ensemble.is_pure()), None);
    emit(cli.output.as_deref(), cli.format, &doc, || statistics_table(&stats))?;
    for &m in marks {
        if !(1..=4).contains(&m) {
            return Err(CliError::schema(format!("marked particle {m} is outside 1..=4")));
        }
        let marked = ensemble.make_distinguishable(m).map_err(internal_error)?;
        let stats = interferometer::full_statistics(&marked, &u, tol).map_err(interferometer_error)?;
        print_class_table(&stats, &format!("particle {m} marked"));
        let doc = OutputStatisticsJson::new(&stats, Some(ensemble.is_pure()), Some(m));
        let out: PathBuf = sibling(cli.output.as_deref().expect("checked"), &format!("marked-{m}"));
        emit(Some(&out), cli.format, &doc, || statistics_table(&stats))?;
    }
    Ok(())
}

pub fn sample(cli: &Cli, tol: &Tolerances, path: &Path, shots: u64, seed: u64, batches: u64) -> Result<(), CliError> {
    let doc: OutputStatisticsJson = read_json(path)?;
    let mut stats = doc.to_statistics(tol).map_err(interferometer_error)?;
    if let Some(s) = cli.statistics {
        stats.statistics = s;
    }
    if batches == 0 || shots == 0 {
        return Err(CliError::schema("--shots and --batches must be positive"));
    }
    if !shots.is_multiple_of(batches) {
        return Err(CliError::precondition("--shots must be a multiple of --batches"));
    }
    let mut record = if batches == 1 {
        sampling::sample(&stats, shots, seed)
    } else {
        sampling::sample_batches(&stats, batches, shots / batches, seed)
    }
    .map_err(sampling_error)?;
    record.pure = doc.pure;
    record.marked = doc.marked;
    emit(cli.output.as_deref(), cli.format, &record, || {
        let mut t = Table::new(&["event", "class", "count"]);
        for c in &record.counts {
            t.row([c.event.to_string(), c.event.class().to_string(), c.n.to_string()]);
        }
        t
    })
}

/// Class probabilities plus metadata from a statistics file or a shot record.
struct Input {
    probabilities: ClassProbabilities,
    statistics: Option<Statistics>,
    pure: Option<bool>,
    marked: Option<usize>,
}

fn load_input(tol: &Tolerances, path: &Path) -> Result<Input, CliError> {
    let value = read_value(path)?;
    let is_record = value.get("counts").is_some();
    if is_record {
        let record: ShotRecord =
            serde_json::from_value(value).map_err(|e| CliError::schema(format!("{}: {e}", path.display())))?;
        record.validate().map_err(sampling_error)?;
        let est = sampling::estimate(&record);
        for d in est.flagged(1e-3) {
            eprintln!(
                "warning: {}: class {} members are not equally populated (chi² = {:.2}, p = {:.1e})",
                path.display(),
                d.class,
                d.chi_square,
                d.p_value
            );
        }
        Ok(Input { probabilities: est.probabilities, statistics: record.statistics, pure: record.pure, marked: record.marked })
    } else {
        let doc: OutputStatisticsJson =
            serde_json::from_value(value).map_err(|e| CliError::schema(format!("{}: {e}", path.display())))?;
        let stats = doc.to_statistics(tol).map_err(interferometer_error)?;
        Ok(Input {
            probabilities: ClassProbabilities::from_statistics(&stats),
            statistics: Some(doc.statistics),
            pure: doc.pure,
            marked: doc.marked,
        })
    }
}

pub fn extract(cli: &Cli, tol: &Tolerances, path: &Path, marked_paths: &[PathBuf], pure: Option<bool>) -> Result<(), CliError> {
    let main = load_input(tol, path)?;
    let statistics = cli
        .statistics
        .or(main.statistics)
        .ok_or_else(|| CliError::schema("input does not name its statistics; pass --statistics"))?;
    if main.marked.is_some() {
        return Err(CliError::schema(format!("{} is a marked run; pass it with --marked-run", path.display())));
    }
    let mut runs: Vec<MarkedRun> = Vec::new();
    for p in marked_paths {
        let input = load_input(tol, p)?;
        let marked = input
            .marked
            .ok_or_else(|| CliError::schema(format!("{} does not name its marked particle", p.display())))?;
        if let Some(s) = input.statistics {
            if cli.statistics.is_none() && s != statistics {
                return Err(extraction_error(ExtractionError::StatisticsMismatch { marked, statistics: s, expected: statistics }));
            }
        }
        input.probabilities.validate(tol).map_err(extraction_error)?;
        runs.push(extraction::marked_run(&input.probabilities, statistics, marked).map_err(extraction_error)?);
    }
    let mut report = extraction::extract(&main.probabilities, statistics, &runs, tol).map_err(extraction_error)?;
    report.pure = pure.or(main.pure);
    for d in &report.diagnostics {
        eprintln!("warning: {d}");
    }
    emit(cli.output.as_deref(), cli.format, &report, || report_table(&report))
}

fn report_table(r: &ExtractionReport) -> Table {
    let mut t = Table::new(&["quantity", "value", "std_error"]);
    let se = |k: usize| r.quantifier_std_errors.map(|e| fmt(e[k])).unwrap_or_default();
    for (k, (name, v)) in ["I_112", "I_13", "I_22", "I_4"].iter().zip(r.quantifiers.as_array()).enumerate() {
        t.row([name.to_string(), fmt(v), se(k)]);
    }
    for term in &r.fourcycle_terms {
        t.row([format!("Tcos{}", term.cycle), fmt(term.value.value), term.value.std_error.map(fmt).unwrap_or_default()]);
    }
    for s in &r.pairs {
        for (a, b) in &s.cycles {
            let value = s.overlap(*a, *b).map(fmt).unwrap_or_else(|| "ambiguous".into());
            let err = s.overlap_error(*a, *b).map(fmt).unwrap_or_default();
            t.row([format!("T({a} {b})"), value, err]);
        }
        t.row([format!("roots S{}", s.symmetry), format!("{} {}", fmt(s.values[0]), fmt(s.values[1])), String::new()]);
    }
    let p = &r.projector;
    t.row(["Pi_4p".into(), fmt(p.four_particle.value), p.four_particle.std_error.map(fmt).unwrap_or_default()]);
    t.row(["Pi_3p_avg".into(), fmt(p.three_particle_avg.value), p.three_particle_avg.std_error.map(fmt).unwrap_or_default()]);
    t.row(["Pi_2p_avg".into(), fmt(p.two_particle_avg.value), p.two_particle_avg.std_error.map(fmt).unwrap_or_default()]);
    for s in &p.triads {
        t.row([format!("Pi{:?}", s.subset), fmt(s.value), String::new()]);
    }
    t
}

pub fn reconstruct(cli: &Cli, tol: &Tolerances, path: &Path) -> Result<(), CliError> {
    let mut report: ExtractionReport = read_json(path)?;
    if let Some(s) = cli.statistics {
        report.statistics = s;
    }
    let result = reconstruction::reconstruct(&report, tol).map_err(reconstruction_error)?;
    for d in &result.diagnostics {
        eprintln!("warning: {d}");
    }
    eprintln!(
        "topology ({}), class residuals {:.3e} / {:.3e}, conjugation residual {:.3e}",
        result.topology.letter(),
        result.residuals.class_probabilities[0],
        result.residuals.class_probabilities[1],
        result.residuals.conjugation
    );
    let doc = ReconstructionJson::from(&result);
    emit(cli.output.as_deref(), cli.format, &doc, || {
        let mut t = Table::new(&["cycle", "magnitude", "phase_primary", "phase_conjugate"]);
        for (a, b) in doc.branches[0].entries.iter().zip(&doc.branches[1].entries) {
            let show = |p: Option<f64>| p.map(fmt).unwrap_or_else(|| "absent".into());
            t.row([a.cycle.to_string(), fmt(a.magnitude), show(a.phase), show(b.phase)]);
        }
        t
    })
}

#[derive(Debug, Clone, Serialize)]
struct Check {
    name: &'static str,
    passed: bool,
    metric: f64,
    threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
struct VerifySummary {
    statistics: Statistics,
    perturbed: bool,
    checks: Vec<Check>,
    passed: bool,
}

pub fn verify(cli: &Cli, tol: &Tolerances, path: &Path, perturb: Option<f64>, seed: u64) -> Result<(), CliError> {
    let ensemble = load_ensemble(cli, tol, path)?;
    let u = match perturb {
        Some(strength) if strength > 0.0 => ModeUnitary::hypercube().perturbed(strength, seed),
        Some(_) => return Err(CliError::schema("--perturb must be positive")),
        None => ModeUnitary::hypercube(),
    };
    let state = ExternalState::from_ensemble(&ensemble);
    let loose = Tolerances { imag_residue: f64::INFINITY, negative_clamp: f64::INFINITY, ..*tol };
    let per_event = all_events()
        .into_iter()
        .map(|e| interferometer::event_probability(&state, &u, &e, &loose).map(|p| (e, p)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(interferometer_error)?;
    let stats = OutputStatistics::from_events(per_event, ensemble.statistics());

    let mut checks = Vec::new();
    let mut check = |name, metric: f64, threshold: f64| {
        checks.push(Check { name, passed: metric.is_finite() && metric <= threshold, metric, threshold })
    };
    check("normalization", (stats.total() - 1.0).abs(), tol.normalization);
    let closed = EventClass::ALL
        .iter()
        .map(|&c| (interferometer::closed_form_class_probability(&ensemble, c) - stats.class_probability(c)).abs())
        .fold(0.0, f64::max);
    check("brute_force_vs_closed_form", closed, 1e-10);
    check("klein_four_symmetry", stats.max_spread(), 1e-12);
    let conj = state.conjugate();
    let conj_dev = all_events()
        .iter()
        .map(|e| {
            let a = interferometer::event_probability(&state, &u, e, &loose).unwrap_or(f64::NAN);
            let b = interferometer::event_probability(&conj, &u, e, &loose).unwrap_or(f64::NAN);
            (a - b).abs()
        })
        .fold(0.0, f64::max);
    check("conjugation_invariance", conj_dev, 1e-12);
    let (imag, inverse) = reconstruction::coefficient_symmetry_defect(&u);
    check("coefficient_realness", imag, 1e-12);
    check("coefficient_inverse_symmetry", inverse, 1e-12);
    let q = quantifiers(&ensemble);
    let reduced = |keep: usize| state.partial_trace(keep).map(|r| r.projector_expectation());
    let three = reduced(3).map_err(CliError::invariant)?;
    let two = reduced(2).map_err(CliError::invariant)?;
    check("partial_trace_three", (three - q.three_particle()).abs(), 1e-10);
    check("partial_trace_two", (two - q.two_particle()).abs(), 1e-10);
    let json_state = ExternalStateJson::from(&state).to_state(tol).map(|_| 0.0).unwrap_or(f64::INFINITY);
    check("external_state_valid", json_state, 0.0);

    let passed = checks.iter().all(|c| c.passed);
    for c in &checks {
        eprintln!("{} {:<30} {:.3e} (≤ {:.1e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.metric, c.threshold);
    }
    let summary = VerifySummary { statistics: ensemble.statistics(), perturbed: perturb.is_some(), checks, passed };
    emit(cli.output.as_deref(), cli.format, &summary, || {
        let mut t = Table::new(&["check", "passed", "metric", "threshold"]);
        for c in &summary.checks {
            t.row([c.name.to_string(), c.passed.to_string(), fmt(c.metric), fmt(c.threshold)]);
        }
        t
    })?;
    if passed {
        Ok(())
    } else {
        Err(CliError::invariant("one or more invariant checks failed"))
    }
}
