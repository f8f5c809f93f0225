//! Numerical thresholds shared across the crate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ToleranceError {
    #[error("unknown tolerance key {0:?}")]
    UnknownKey(String),
    #[error("tolerance {key:?} must be a positive finite number, got {value}")]
    BadValue { key: String, value: f64 },
    #[error("expected key=value, got {0:?}")]
    Syntax(String),
}

/// Every threshold used by validation, extraction and reconstruction.
///
/// Defaults are tuned for exact (simulated) input. The CLI exposes each field
/// through `--tolerance key=value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Max |ρ − ρ†| entry for internal and external density operators.
    pub hermitian: f64,
    /// |Tr ρ − 1| for internal states.
    pub trace: f64,
    /// Smallest admissible eigenvalue is `-psd`.
    pub psd: f64,
    /// A state is pure iff Tr ρ² ≥ 1 − purity.
    pub purity: f64,
    /// Pairwise overlaps at or below this count as orthogonal.
    pub eps_orth: f64,
    /// |Σ p − 1| for output statistics.
    pub normalization: f64,
    /// Largest imaginary residue tolerated in a real-valued sum.
    pub imag_residue: f64,
    /// Probabilities in [−negative_clamp, 0) are clamped to zero; below that is an error.
    pub negative_clamp: f64,
    /// Max spread of probabilities within one event class for the hypercube.
    pub symmetry: f64,
    /// Negative discriminants down to −tol_disc are clamped to zero.
    pub tol_disc: f64,
    /// |cos φ| up to 1 + tol_cos is clamped onto [−1, 1].
    pub tol_cos: f64,
    /// Phase-sum consistency threshold (radians, modulo 2π).
    pub tol_phase: f64,
    /// Pure-state magnitude relation T_cycle = √∏T_pair.
    pub pure_magnitude: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            hermitian: 1e-12,
            trace: 1e-12,
            psd: 1e-10,
            purity: 1e-10,
            eps_orth: 1e-9,
            normalization: 1e-10,
            imag_residue: 1e-10,
            negative_clamp: 1e-12,
            symmetry: 1e-9,
            tol_disc: 1e-8,
            tol_cos: 1e-6,
            tol_phase: 1e-6,
            pure_magnitude: 1e-8,
        }
    }
}

impl Tolerances {
    pub const KEYS: [&'static str; 13] = [
        "hermitian",
        "trace",
        "psd",
        "purity",
        "eps_orth",
        "normalization",
        "imag_residue",
        "negative_clamp",
        "symmetry",
        "tol_disc",
        "tol_cos",
        "tol_phase",
        "pure_magnitude",
    ];

    pub fn set(&mut self, key: &str, value: f64) -> Result<(), ToleranceError> {
        if !(value.is_finite() && value > 0.0) {
            return Err(ToleranceError::BadValue { key: key.to_string(), value });
        }
        let slot = match key {
            "hermitian" => &mut self.hermitian,
            "trace" => &mut self.trace,
            "psd" => &mut self.psd,
            "purity" => &mut self.purity,
            "eps_orth" => &mut self.eps_orth,
            "normalization" => &mut self.normalization,
            "imag_residue" => &mut self.imag_residue,
            "negative_clamp" => &mut self.negative_clamp,
            "symmetry" => &mut self.symmetry,
            "tol_disc" => &mut self.tol_disc,
            "tol_cos" => &mut self.tol_cos,
            "tol_phase" => &mut self.tol_phase,
            "pure_magnitude" => &mut self.pure_magnitude,
            other => return Err(ToleranceError::UnknownKey(other.to_string())),
        };
        *slot = value;
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ToleranceError> {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| ToleranceError::Syntax(spec.to_string()))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| ToleranceError::Syntax(spec.to_string()))?;
        self.set(key.trim(), value)
    }
}
