//! Power schedules α(1) = 0 < α(2) < … stored in integer grid units.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which requirement fixed a gap α(k+1) − α(k) (or α(k+1) itself).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapRule {
    /// α(1) = 0.
    Origin,
    /// The support length, so that earlier blocks are annihilated.
    Support,
    /// The residual budget ε·2^{−k}.
    Budget,
    /// A closed-form expression.
    ClosedForm,
    /// α(k+1) ≥ α(k) + k − 1.
    Admissibility,
    /// The budget for the forward (n > k) part of a localized residual.
    ForwardBudget,
    /// The budget for the backward (n < k) part of a localized residual.
    BackBudget,
}

/// Relative distance under which a value is treated as the integer it
/// approximates before rounding up. Without it a gap that is exactly k + 5
/// in exact arithmetic but evaluates to k + 5 + 4e−16 would round to k + 6.
pub const SNAP_TOL: f64 = 1e-9;

/// ⌈x⌉, except that values within [`SNAP_TOL`] of an integer snap to it.
pub fn ceil_snapped(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= SNAP_TOL * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// x rounded up to a whole number of grid cells of width 1/q.
pub fn ceil_to_grid(x: f64, q: u32) -> Result<u64> {
    let steps = ceil_snapped(x * q as f64);
    if !(steps >= 0.0) || !steps.is_finite() || steps > 9.0e15 {
        return Err(Error::precondition(
            "schedule",
            format!("gap {x} is not a representable nonnegative power"),
        ));
    }
    Ok(steps as u64)
}

/// α(1), …, α(len) in units of 1/denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSchedule {
    steps: Vec<u64>,
    denominator: u32,
    provenance: Vec<GapRule>,
}

impl PowerSchedule {
    pub fn new(steps: Vec<u64>, denominator: u32, provenance: Vec<GapRule>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::precondition("schedule", "needs at least one power"));
        }
        if denominator == 0 {
            return Err(Error::precondition("schedule", "denominator must be positive"));
        }
        if provenance.len() != steps.len() {
            return Err(Error::LengthMismatch {
                left: provenance.len(),
                right: steps.len(),
            });
        }
        if steps[0] != 0 {
            return Err(Error::ScheduleViolation {
                n: 1,
                reason: "the first power must be 0".into(),
            });
        }
        if let Some(i) = steps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::ScheduleViolation {
                n: i + 2,
                reason: "powers must be strictly increasing".into(),
            });
        }
        Ok(Self {
            steps,
            denominator,
            provenance,
        })
    }

    /// Integer powers with no provenance beyond the origin.
    pub fn from_integers(alphas: Vec<u64>, rule: GapRule) -> Result<Self> {
        let provenance = (0..alphas.len())
            .map(|i| if i == 0 { GapRule::Origin } else { rule })
            .collect();
        Self::new(alphas, 1, provenance)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn denominator(&self) -> u32 {
        self.denominator
    }

    /// α(k) in grid units, k counted from 1.
    pub fn steps(&self, k: usize) -> u64 {
        self.steps[k - 1]
    }

    pub fn all_steps(&self) -> &[u64] {
        &self.steps
    }

    /// α(k) as a real number.
    pub fn alpha(&self, k: usize) -> f64 {
        self.steps(k) as f64 / self.denominator as f64
    }

    pub fn alphas(&self) -> Vec<f64> {
        (1..=self.len()).map(|k| self.alpha(k)).collect()
    }

    /// α(k+1) − α(k) in grid units.
    pub fn gap_steps(&self, k: usize) -> u64 {
        self.steps(k + 1) - self.steps(k)
    }

    pub fn gap(&self, k: usize) -> f64 {
        self.gap_steps(k) as f64 / self.denominator as f64
    }

    /// The rule that produced α(k).
    pub fn rule(&self, k: usize) -> GapRule {
        self.provenance[k - 1]
    }

    pub fn provenance(&self) -> &[GapRule] {
        &self.provenance
    }

    /// The first `len` powers.
    pub fn truncated(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.len() {
            return Err(Error::OutOfRange { k: len, len: self.len() });
        }
        Self::new(
            self.steps[..len].to_vec(),
            self.denominator,
            self.provenance[..len].to_vec(),
        )
    }

    pub fn require_len(&self, len: usize) -> Result<()> {
        if self.len() < len {
            return Err(Error::precondition(
                "schedule",
                format!("covers {} powers but {len} are needed", self.len()),
            ));
        }
        Ok(())
    }
}
