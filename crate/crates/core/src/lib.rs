//! Four partially distinguishable bosons or fermions in the hypercube interferometer.
//!
//! The crate simulates the counting statistics of four identical particles whose
//! internal states are arbitrary (possibly mixed) density operators, and inverts
//! those statistics to recover every indistinguishability quantifier. For pure
//! internal states the collective phases, and with them the reduced external
//! density operator, are recovered up to complex conjugation.
//!
//! ```
//! use fourfold::{internal::InternalEnsemble, interferometer, Statistics};
//!
//! let ensemble = InternalEnsemble::indistinguishable(Statistics::Boson, 2);
//! let u = interferometer::ModeUnitary::hypercube();
//! let stats = interferometer::full_statistics(&ensemble, &u, &Default::default()).unwrap();
//! assert!((stats.class_probability(interferometer::EventClass::AA) - 0.25).abs() < 1e-12);
//! ```

use serde::{Deserialize, Serialize};

pub mod cmat;
pub mod external;
pub mod extraction;
pub mod interferometer;
pub mod internal;
pub mod permgroup;
pub mod reconstruction;
pub mod sampling;
pub mod tolerance;

pub use cmat::{CMatrix, C64};
pub use permgroup::{Cycle, CycleStructure, Permutation};
pub use tolerance::Tolerances;

/// Exchange statistics of the four identical particles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Boson,
    Fermion,
}

impl Statistics {
    /// The upper/lower sign: +1 for bosons, −1 for fermions.
    pub fn pm(self) -> f64 {
        match self {
            Statistics::Boson => 1.0,
            Statistics::Fermion => -1.0,
        }
    }

    /// The exchange sign of a relabelling: 1 for bosons, sgn κ for fermions.
    pub fn sign_of(self, kappa: &Permutation) -> f64 {
        match self {
            Statistics::Boson => 1.0,
            Statistics::Fermion => kappa.sign() as f64,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Statistics::Boson => "boson",
            Statistics::Fermion => "fermion",
        }
    }
}

impl std::fmt::Display for Statistics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Statistics {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "boson" | "bosons" | "b" => Ok(Statistics::Boson),
            "fermion" | "fermions" | "f" => Ok(Statistics::Fermion),
            other => Err(format!("unknown statistics {other:?}, expected boson or fermion")),
        }
    }
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/internal-states.md")]
    mod internal_states {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/extraction.md")]
    mod extraction {}
    #[doc = include_str!("../../../book/src/reconstruction.md")]
    mod reconstruction {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
