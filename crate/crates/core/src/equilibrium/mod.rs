//! Finite-sample and mean-field price equilibria, mean-field effects, and
//! asymptotic variance oracles.

mod clearing;
mod effects;
mod finite;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Arms, Scenario};

pub use clearing::{
    check_contraction, interior_grid, mean_field_excess_demand, solve_mean_field_price,
    ContractionReport, MeanFieldPrice,
};
pub use effects::{price_sensitivity, true_effects, MeanFieldSolution, PolicyEffects};
pub use finite::{mean_excess_demand, objective, solve_finite_sample_price, FiniteSamplePrice, TIE_TOLERANCE};

/// Treatment probability together with the treatment values of both arms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Policy {
    pub pi: f64,
    pub arms: Arms,
}

impl Policy {
    /// Binary treatment; `pi` may be 0 or 1 here since only the mean field is involved.
    pub fn binary(pi: f64) -> Result<Self> {
        Self::new(pi, Arms::BINARY)
    }

    pub fn new(pi: f64, arms: Arms) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi) {
            return Err(Error::invalid(format!(
                "treatment probability must lie in [0, 1], got {pi}"
            )));
        }
        if !(arms.treated.is_finite() && arms.control.is_finite()) {
            return Err(Error::invalid("treatment values must be finite"));
        }
        Ok(Policy { pi, arms })
    }

    /// The policy a design of size `n` induces in `scenario`.
    pub fn for_scenario(scenario: &Scenario, pi: f64, n: usize) -> Result<Self> {
        Self::new(pi, scenario.treatment.arms(n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Target `‖z_π(p)‖∞` for the mean-field price.
    pub tolerance: f64,
    pub max_iters: usize,
    /// Step `λ` of the fixed-point map `p ← p + λ z_π(p)`.
    pub damping: f64,
    /// Iterate coordinate sweeps of the finite-sample solver to a fixed
    /// point (otherwise a single pass over the coordinates).
    pub breakpoint_refinement: bool,
    /// Units drawn for the Monte Carlo variance oracles.
    pub oracle_samples: usize,
    pub oracle_seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tolerance: 1e-10,
            max_iters: 10_000,
            damping: 0.5,
            breakpoint_refinement: true,
            oracle_samples: 1_000_000,
            oracle_seed: 0x5151_0000,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("solver tolerance must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::invalid(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}
