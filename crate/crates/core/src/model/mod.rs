//! Units, their population averages, and scenario definitions.

pub mod mean_field;
pub mod quadrature;
pub mod scenario;
pub mod unit;

pub use mean_field::{Arms, MeanField, SharedMeanField};
pub use scenario::{
    check_exponent, make_scenario, sample_population, CustomScenario, GoatHayParams, LogisticParams, Population,
    PriceBox, Scenario, ScenarioConfig, ScenarioId, ScenarioParams, TechParams, TreatmentKind,
    UnitSampler,
};
pub use unit::{FarmerChoice, GoatHayUnit, LogisticUnit, PriceShape, TechUnit, Unit};
