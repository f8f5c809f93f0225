//! Finite-shot emulation of the detection experiment.
//!
//! Shots are drawn with ChaCha8 (`rand_chacha`), seeded by `seed_from_u64`, as a
//! multinomial over the 35 events built from sequential binomial draws. Batch
//! `k` uses stream `k` of the same seed, so batches can be drawn in parallel
//! and merged by summation without changing the result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::extraction::ClassProbabilities;
use crate::interferometer::{all_events, EventClass, OccupationEvent, OutputStatistics};
use crate::Statistics;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplingError {
    #[error("at least one shot is required")]
    NoShots,
    #[error("event probabilities sum to {0}, not 1 within 1e-8")]
    Unnormalized(f64),
    #[error("event {event} has invalid probability {value}")]
    BadProbability { event: OccupationEvent, value: f64 },
    #[error("counts sum to {counted}, record claims {shots} shots")]
    CountMismatch { counted: u64, shots: u64 },
    #[error("event {0} appears more than once")]
    DuplicateEvent(OccupationEvent),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCount {
    #[serde(rename = "S")]
    pub event: OccupationEvent,
    pub n: u64,
}

/// Detected counts of one emulated experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shots: u64,
    pub seed: u64,
    /// All 35 events in reverse-lexicographic order, zero counts included.
    pub counts: Vec<EventCount>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statistics: Option<Statistics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pure: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marked: Option<usize>,
}

impl ShotRecord {
    pub fn count(&self, event: &OccupationEvent) -> u64 {
        self.counts.iter().filter(|c| c.event == *event).map(|c| c.n).sum()
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        if self.shots == 0 {
            return Err(SamplingError::NoShots);
        }
        for (k, c) in self.counts.iter().enumerate() {
            if self.counts[..k].iter().any(|d| d.event == c.event) {
                return Err(SamplingError::DuplicateEvent(c.event));
            }
        }
        let counted: u64 = self.counts.iter().map(|c| c.n).sum();
        if counted != self.shots {
            return Err(SamplingError::CountMismatch { counted, shots: self.shots });
        }
        Ok(())
    }

    /// Merges records drawn from independent batches.
    pub fn merge(records: &[ShotRecord]) -> Option<ShotRecord> {
        let first = records.first()?;
        let mut merged = first.clone();
        for r in &records[1..] {
            merged.shots += r.shots;
            for c in &r.counts {
                match merged.counts.iter_mut().find(|m| m.event == c.event) {
                    Some(m) => m.n += c.n,
                    None => merged.counts.push(*c),
                }
            }
        }
        Some(merged)
    }
}

fn check_distribution(stats: &OutputStatistics) -> Result<Vec<(OccupationEvent, f64)>, SamplingError> {
    let events = all_events();
    let mut probs = Vec::with_capacity(events.len());
    for e in events {
        let p = stats.probability(&e);
        if !p.is_finite() || p < 0.0 {
            return Err(SamplingError::BadProbability { event: e, value: p });
        }
        probs.push((e, p));
    }
    let total: f64 = probs.iter().map(|(_, p)| p).sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(SamplingError::Unnormalized(total));
    }
    Ok(probs)
}

fn draw(probs: &[(OccupationEvent, f64)], shots: u64, seed: u64, stream: u64, statistics: Statistics) -> ShotRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut remaining = shots;
    let mut mass = 1.0f64;
    let mut counts = Vec::with_capacity(probs.len());
    for (k, &(event, p)) in probs.iter().enumerate() {
        let n = if k + 1 == probs.len() || remaining == 0 {
            remaining
        } else if mass <= 0.0 {
            0
        } else {
            let q = (p / mass).clamp(0.0, 1.0);
            Binomial::new(remaining, q).expect("q in [0, 1]").sample(&mut rng)
        };
        counts.push(EventCount { event, n });
        remaining -= n;
        mass -= p;
    }
    ShotRecord { shots, seed, counts, statistics: Some(statistics), pure: None, marked: None }
}

/// Multinomial draw of `shots` events; deterministic for a fixed seed.
pub fn sample(stats: &OutputStatistics, shots: u64, seed: u64) -> Result<ShotRecord, SamplingError> {
    if shots == 0 {
        return Err(SamplingError::NoShots);
    }
    let probs = check_distribution(stats)?;
    Ok(draw(&probs, shots, seed, 0, stats.statistics))
}

/// `batches` independent draws of `shots_per_batch`, one stream each, run on
/// scoped threads and merged.
pub fn sample_batches(
    stats: &OutputStatistics,
    batches: u64,
    shots_per_batch: u64,
    seed: u64,
) -> Result<ShotRecord, SamplingError> {
    if batches == 0 || shots_per_batch == 0 {
        return Err(SamplingError::NoShots);
    }
    let probs = check_distribution(stats)?;
    let records: Vec<ShotRecord> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..batches)
            .map(|k| {
                let probs = &probs;
                let statistics = stats.statistics;
                scope.spawn(move || draw(probs, shots_per_batch, seed, k, statistics))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sampling thread")).collect()
    });
    Ok(ShotRecord::merge(&records).expect("at least one batch"))
}

/// Per-member chi-square test of equal probabilities within one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolingDiagnostic {
    pub class: EventClass,
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pooled class estimates plus the within-class uniformity diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedClassProbabilities {
    pub probabilities: ClassProbabilities,
    pub pooling: Vec<PoolingDiagnostic>,
}

impl EstimatedClassProbabilities {
    /// Diagnostics with p-value below `alpha`.
    pub fn flagged(&self, alpha: f64) -> Vec<PoolingDiagnostic> {
        self.pooling.iter().copied().filter(|d| d.p_value < alpha).collect()
    }
}

/// Pooled class frequency divided by class size, with binomial standard errors
/// and the multinomial covariance between classes.
pub fn estimate(record: &ShotRecord) -> EstimatedClassProbabilities {
    let n = record.shots.max(1) as f64;
    let mut pooled = [0u64; 11];
    for c in &record.counts {
        pooled[c.event.class().index()] += c.n;
    }
    let freq: [f64; 11] = pooled.map(|k| k as f64 / n);
    let size: [f64; 11] = std::array::from_fn(|k| EventClass::ALL[k].size() as f64);
    let values = std::array::from_fn(|k| freq[k] / size[k]);
    let covariance: Vec<Vec<f64>> = (0..11)
        .map(|i| {
            (0..11)
                .map(|j| {
                    let delta = if i == j { freq[i] } else { 0.0 };
                    (delta - freq[i] * freq[j]) / (n * size[i] * size[j])
                })
                .collect()
        })
        .collect();
    let std_errors = std::array::from_fn(|k| covariance[k][k].max(0.0).sqrt());

    let mut pooling = Vec::new();
    for class in EventClass::ALL {
        let members = class.members();
        let total = pooled[class.index()];
        if members.len() < 2 || total == 0 {
            continue;
        }
        let expected = total as f64 / members.len() as f64;
        let chi_square: f64 = members
            .iter()
            .map(|m| {
                let d = record.count(m) as f64 - expected;
                d * d / expected
            })
            .sum();
        let dof = members.len() - 1;
        let p_value = ChiSquared::new(dof as f64).map(|d| 1.0 - d.cdf(chi_square)).unwrap_or(f64::NAN);
        pooling.push(PoolingDiagnostic { class, chi_square, dof, p_value });
    }

    EstimatedClassProbabilities {
        probabilities: ClassProbabilities {
            values,
            std_errors: Some(std_errors),
            covariance: Some(covariance),
            shots: Some(record.shots),
        },
        pooling,
    }
}
