use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mean_field::{
    Arms, GoatHayMeanField, LogisticMeanField, MeanField, SampleMeanField, TechMeanField,
};
use super::unit::{GoatHayUnit, LogisticUnit, TechUnit, Unit};
use crate::error::{Error, Result};
use crate::rng::{self, SimRng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioId {
    TechIntervention,
    GoatHaySubsidy,
    SmoothLogistic,
    Custom,
}

impl ScenarioId {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioId::TechIntervention => "tech-intervention",
            ScenarioId::GoatHaySubsidy => "goat-hay-subsidy",
            ScenarioId::SmoothLogistic => "smooth-logistic",
            ScenarioId::Custom => "custom",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tech-intervention" | "tech" => Ok(ScenarioId::TechIntervention),
            "goat-hay-subsidy" | "goat-hay" => Ok(ScenarioId::GoatHaySubsidy),
            "smooth-logistic" | "logistic" => Ok(ScenarioId::SmoothLogistic),
            "custom" => Ok(ScenarioId::Custom),
            other => Err(Error::UnknownScenario(other.to_string())),
        }
    }
}

/// Open interval of admissible perturbation exponents.
pub const EXPONENT_RANGE: (f64, f64) = (0.25, 0.5);

pub fn check_exponent(name: &str, alpha: f64) -> Result<()> {
    if !(alpha > EXPONENT_RANGE.0 && alpha < EXPONENT_RANGE.1) {
        return Err(Error::invalid(format!(
            "{name} must lie strictly inside (1/4, 1/2), got {alpha}"
        )));
    }
    Ok(())
}

/// Binary treatment, or a two-point perturbation `η ± ξ_n` of a continuous
/// policy with `ξ_n = xi_scale · n^(-xi_exponent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreatmentKind {
    Binary,
    Continuous {
        eta: f64,
        xi_scale: f64,
        xi_exponent: f64,
    },
}

impl TreatmentKind {
    pub fn validate(&self) -> Result<()> {
        if let TreatmentKind::Continuous {
            eta,
            xi_scale,
            xi_exponent,
        } = *self
        {
            if !eta.is_finite() {
                return Err(Error::invalid("eta must be finite"));
            }
            if !(xi_scale > 0.0 && xi_scale.is_finite()) {
                return Err(Error::invalid(format!(
                    "xi_scale must be positive, got {xi_scale}"
                )));
            }
            check_exponent("xi_exponent", xi_exponent)?;
        }
        Ok(())
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, TreatmentKind::Continuous { .. })
    }

    /// Half-width `ξ_n` of the policy perturbation (continuous only).
    pub fn xi(&self, n: usize) -> Option<f64> {
        match *self {
            TreatmentKind::Binary => None,
            TreatmentKind::Continuous {
                xi_scale,
                xi_exponent,
                ..
            } => Some(xi_scale * (n as f64).powf(-xi_exponent)),
        }
    }

    pub fn arms(&self, n: usize) -> Arms {
        match *self {
            TreatmentKind::Binary => Arms::BINARY,
            TreatmentKind::Continuous { eta, .. } => Arms::around(eta, self.xi(n).unwrap_or(0.0)),
        }
    }
}

/// Component-wise price bounds `l < u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl PriceBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::invalid(format!(
                "price bounds must be non-empty and of equal length ({} vs {})",
                lower.len(),
                upper.len()
            )));
        }
        for (j, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite()) || *l <= 0.0 {
                return Err(Error::invalid(format!(
                    "price bound {j} must be finite with lower > 0, got [{l}, {u}]"
                )));
            }
            if l >= u {
                return Err(Error::invalid(format!(
                    "price lower bound must be below upper bound for good {j}: {l} >= {u}"
                )));
            }
        }
        Ok(PriceBox { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| x >= l && x <= u)
    }

    pub fn clamp(&self, p: &mut [f64]) {
        for (x, (l, u)) in p.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.clamp(*l, *u);
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TechParams {
    pub value_low: f64,
    pub value_high: f64,
    pub cost_low: f64,
    pub cost_high: f64,
    /// Treated sellers supply `1 + boost · w` units.
    pub boost: f64,
}

impl Default for TechParams {
    fn default() -> Self {
        TechParams {
            value_low: 7.0,
            value_high: 12.0,
            cost_low: 5.0,
            cost_high: 10.0,
            boost: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoatHayParams {
    pub value_low: f64,
    pub value_high: f64,
    pub goat_cost_low: f64,
    pub goat_cost_high: f64,
    pub hay_cost_low: f64,
    pub hay_cost_high: f64,
}

impl Default for GoatHayParams {
    fn default() -> Self {
        GoatHayParams {
            value_low: 7.0,
            value_high: 12.0,
            goat_cost_low: 5.0,
            goat_cost_high: 10.0,
            hay_cost_low: 2.0,
            hay_cost_high: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub value_low: f64,
    pub value_high: f64,
    pub cost_low: f64,
    pub cost_high: f64,
    pub boost: f64,
    pub temperature: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            value_low: 7.0,
            value_high: 12.0,
            cost_low: 5.0,
            cost_high: 10.0,
            boost: 0.2,
            temperature: 0.5,
        }
    }
}

/// Draws one unit from a user-defined type distribution.
pub type UnitSampler = Arc<dyn Fn(&mut SimRng) -> Box<dyn Unit> + Send + Sync>;

/// Minimum frozen sample size for Monte Carlo mean fields.
pub const MIN_INTEGRATION_SAMPLES: usize = 10_000;

/// A scenario defined by a sampling callback.
#[derive(Clone)]
pub struct CustomScenario {
    pub name: String,
    pub sampler: UnitSampler,
    /// Frozen sample size for the Monte Carlo mean field.
    pub integration_samples: usize,
    pub integration_seed: u64,
    /// Finite-difference step for mean-field derivatives.
    pub fd_step: f64,
}

impl fmt::Debug for CustomScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomScenario")
            .field("name", &self.name)
            .field("integration_samples", &self.integration_samples)
            .field("integration_seed", &self.integration_seed)
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum ScenarioParams {
    Tech(TechParams),
    GoatHay(GoatHayParams),
    Logistic(LogisticParams),
    Custom(CustomScenario),
}

/// A market blueprint: type distribution, goods, price box and treatment semantics.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: ScenarioId,
    pub num_goods: usize,
    pub price_box: PriceBox,
    pub treatment: TreatmentKind,
    pub params: ScenarioParams,
    mean_field: Arc<std::sync::OnceLock<Arc<dyn MeanField>>>,
}

/// Largest tolerated wrong-signed mean-field excess demand at the box faces.
/// Covers the boundary mass between the box and the type supports.
pub const BOUNDARY_SLACK: f64 = 0.01;

/// Grid size used when probing unit functions at load time.
pub const PROBE_GRID: usize = 50;

/// Bound on unit function values accepted by the load-time probe.
pub const PROBE_BOUND: f64 = 1e6;

impl Scenario {
    fn assemble(
        id: ScenarioId,
        price_box: PriceBox,
        treatment: TreatmentKind,
        params: ScenarioParams,
    ) -> Result<Self> {
        treatment.validate()?;
        let s = Scenario {
            id,
            num_goods: price_box.dim(),
            price_box,
            treatment,
            params,
            mean_field: Arc::new(std::sync::OnceLock::new()),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn tech() -> Self {
        Self::tech_with(TechParams::default(), None).expect("default tech scenario is valid")
    }

    pub fn tech_with(params: TechParams, price_box: Option<PriceBox>) -> Result<Self> {
        let b = match price_box {
            Some(b) => b,
            None => PriceBox::new(
                vec![params.cost_low.min(params.value_low) + 0.01],
                vec![params.cost_high.max(params.value_high) - 0.01],
            )?,
        };
        Self::assemble(
            ScenarioId::TechIntervention,
            b,
            TreatmentKind::Binary,
            ScenarioParams::Tech(params),
        )
    }

    pub fn goat_hay() -> Self {
        Self::goat_hay_with(GoatHayParams::default(), None, None)
            .expect("default goat-hay scenario is valid")
    }

    pub fn goat_hay_with(
        params: GoatHayParams,
        price_box: Option<PriceBox>,
        treatment: Option<TreatmentKind>,
    ) -> Result<Self> {
        let b = match price_box {
            Some(b) => b,
            None => PriceBox::new(
                vec![params.goat_cost_low + 0.01, params.hay_cost_low + 0.01],
                vec![
                    params.value_high - 0.01,
                    params.goat_cost_high - 0.01,
                ],
            )?,
        };
        Self::assemble(
            ScenarioId::GoatHaySubsidy,
            b,
            treatment.unwrap_or(TreatmentKind::Continuous {
                eta: 0.0,
                xi_scale: 1.0,
                xi_exponent: 1.0 / 3.0,
            }),
            ScenarioParams::GoatHay(params),
        )
    }

    pub fn smooth_logistic() -> Self {
        Self::logistic_with(LogisticParams::default(), None)
            .expect("default logistic scenario is valid")
    }

    pub fn logistic_with(params: LogisticParams, price_box: Option<PriceBox>) -> Result<Self> {
        let b = match price_box {
            Some(b) => b,
            None => PriceBox::new(
                vec![params.cost_low.min(params.value_low) + 0.01],
                vec![params.cost_high.max(params.value_high) - 0.01],
            )?,
        };
        Self::assemble(
            ScenarioId::SmoothLogistic,
            b,
            TreatmentKind::Binary,
            ScenarioParams::Logistic(params),
        )
    }

    /// A scenario backed by a user sampler; the unit functions are probed on
    /// a grid and the box faces are checked against the Monte Carlo mean field.
    pub fn custom(
        custom: CustomScenario,
        price_box: PriceBox,
        treatment: TreatmentKind,
    ) -> Result<Self> {
        if custom.integration_samples < MIN_INTEGRATION_SAMPLES {
            return Err(Error::TooFewSamples {
                required: MIN_INTEGRATION_SAMPLES,
                got: custom.integration_samples,
            });
        }
        if !(custom.fd_step > 0.0) {
            return Err(Error::invalid("fd_step must be positive"));
        }
        Self::assemble(
            ScenarioId::Custom,
            price_box,
            treatment,
            ScenarioParams::Custom(custom),
        )
    }

    /// Replace the treatment semantics (e.g. a continuous tech subsidy).
    pub fn with_treatment(mut self, treatment: TreatmentKind) -> Result<Self> {
        treatment.validate()?;
        self.treatment = treatment;
        self.validate()?;
        Ok(self)
    }

    /// Draw one unit.
    pub fn sample_unit(&self, rng: &mut SimRng) -> Box<dyn Unit> {
        match &self.params {
            ScenarioParams::Tech(t) => Box::new(TechUnit {
                value: rng.gen_range(t.value_low..t.value_high),
                cost: rng.gen_range(t.cost_low..t.cost_high),
                boost: t.boost,
            }),
            ScenarioParams::GoatHay(g) => Box::new(GoatHayUnit {
                value: rng.gen_range(g.value_low..g.value_high),
                goat_cost: rng.gen_range(g.goat_cost_low..g.goat_cost_high),
                hay_cost: rng.gen_range(g.hay_cost_low..g.hay_cost_high),
            }),
            ScenarioParams::Logistic(l) => Box::new(LogisticUnit {
                value: rng.gen_range(l.value_low..l.value_high),
                cost: rng.gen_range(l.cost_low..l.cost_high),
                boost: l.boost,
                temperature: l.temperature,
            }),
            ScenarioParams::Custom(c) => (c.sampler)(rng),
        }
    }

    /// Whether the mean field is an exact closed form (as opposed to Monte Carlo).
    pub fn has_closed_form(&self) -> bool {
        !matches!(self.params, ScenarioParams::Custom(_))
    }

    /// Mean-field functions; built once and cached.
    pub fn mean_field(&self) -> Arc<dyn MeanField> {
        self.mean_field
            .get_or_init(|| self.build_mean_field())
            .clone()
    }

    fn build_mean_field(&self) -> Arc<dyn MeanField> {
        match &self.params {
            ScenarioParams::Tech(t) => Arc::new(TechMeanField {
                value: (t.value_low, t.value_high),
                cost: (t.cost_low, t.cost_high),
                boost: t.boost,
            }),
            ScenarioParams::GoatHay(g) => Arc::new(GoatHayMeanField {
                value: (g.value_low, g.value_high),
                goat_cost: (g.goat_cost_low, g.goat_cost_high),
                hay_cost: (g.hay_cost_low, g.hay_cost_high),
            }),
            ScenarioParams::Logistic(l) => Arc::new(LogisticMeanField {
                value: (l.value_low, l.value_high),
                cost: (l.cost_low, l.cost_high),
                boost: l.boost,
                temperature: l.temperature,
            }),
            ScenarioParams::Custom(c) => {
                let mut rng = rng::stream(c.integration_seed, Stream::Integration);
                let units = (0..c.integration_samples)
                    .map(|_| (c.sampler)(&mut rng))
                    .collect();
                Arc::new(SampleMeanField::new(units, self.num_goods, c.fd_step))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let j = self.num_goods;
        let expected = match &self.params {
            ScenarioParams::Tech(t) => {
                check_support("value", t.value_low, t.value_high)?;
                check_support("cost", t.cost_low, t.cost_high)?;
                if !(t.boost > -1.0) {
                    return Err(Error::invalid("boost must exceed -1"));
                }
                Some(1)
            }
            ScenarioParams::GoatHay(g) => {
                check_support("value", g.value_low, g.value_high)?;
                check_support("goat_cost", g.goat_cost_low, g.goat_cost_high)?;
                check_support("hay_cost", g.hay_cost_low, g.hay_cost_high)?;
                Some(2)
            }
            ScenarioParams::Logistic(l) => {
                check_support("value", l.value_low, l.value_high)?;
                check_support("cost", l.cost_low, l.cost_high)?;
                if !(l.boost > -1.0) {
                    return Err(Error::invalid("boost must exceed -1"));
                }
                if !(l.temperature > 0.0) {
                    return Err(Error::invalid("temperature must be positive"));
                }
                Some(1)
            }
            ScenarioParams::Custom(_) => None,
        };
        if let Some(e) = expected {
            if j != e {
                return Err(Error::invalid(format!(
                    "{} has {e} goods but the price box has {j}",
                    self.id
                )));
            }
        }
        if !self.has_closed_form() {
            self.probe_units()?;
        }
        self.check_boundary_signs()
    }

    /// Evaluate freshly drawn units on a grid through the box diagonal.
    fn probe_units(&self) -> Result<()> {
        let mut rng = rng::stream(0x5eed, Stream::Integration);
        let arms = self.treatment.arms(100);
        let mut d = vec![0.0; self.num_goods];
        let mut s = vec![0.0; self.num_goods];
        for _ in 0..20 {
            let unit = self.sample_unit(&mut rng);
            if unit.num_goods() != self.num_goods {
                return Err(Error::invalid(format!(
                    "custom unit reports {} goods, scenario has {}",
                    unit.num_goods(),
                    self.num_goods
                )));
            }
            for k in 0..PROBE_GRID {
                let t = k as f64 / (PROBE_GRID - 1) as f64;
                let p: Vec<f64> = self
                    .price_box
                    .lower
                    .iter()
                    .zip(&self.price_box.upper)
                    .map(|(l, u)| l + t * (u - l))
                    .collect();
                for w in [arms.treated, arms.control] {
                    unit.demand(w, &p, &mut d);
                    unit.supply(w, &p, &mut s);
                    let y = unit.outcome(w, &p);
                    let ok = d.iter().chain(&s).all(|v| *v >= 0.0 && *v <= PROBE_BOUND)
                        && y.is_finite()
                        && y.abs() <= PROBE_BOUND;
                    if !ok {
                        return Err(Error::invalid(format!(
                            "custom unit violates the demand/supply contract at p = {p:?}, w = {w}: D = {d:?}, S = {s:?}, Y = {y}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Mean-field excess demand must be (weakly, up to [`BOUNDARY_SLACK`])
    /// nonnegative at the lower corner and nonpositive at the upper corner.
    fn check_boundary_signs(&self) -> Result<()> {
        let mf = self.mean_field();
        let arms = self.treatment.arms(100);
        for w in [arms.treated, arms.control] {
            let zl = mf.excess_demand(w, &self.price_box.lower);
            let zu = mf.excess_demand(w, &self.price_box.upper);
            for j in 0..self.num_goods {
                if zl[j] < -BOUNDARY_SLACK || zu[j] > BOUNDARY_SLACK {
                    return Err(Error::invalid(format!(
                        "price box does not bracket the market for good {j} at w = {w}: z(l) = {:.4}, z(u) = {:.4}",
                        zl[j], zu[j]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Effective configuration, for echoing next to outputs.
    pub fn to_config(&self) -> ScenarioConfig {
        let params: BTreeMap<String, f64> = match &self.params {
            ScenarioParams::Tech(t) => to_map(t),
            ScenarioParams::GoatHay(g) => to_map(g),
            ScenarioParams::Logistic(l) => to_map(l),
            ScenarioParams::Custom(c) => BTreeMap::from([
                ("integration_samples".to_string(), c.integration_samples as f64),
                ("fd_step".to_string(), c.fd_step),
            ]),
        };
        ScenarioConfig {
            scenario: self.id.as_str().to_string(),
            params,
            price_lower: Some(self.price_box.lower.clone()),
            price_upper: Some(self.price_box.upper.clone()),
            treatment: Some(self.treatment),
        }
    }
}

fn to_map<T: Serialize>(t: &T) -> BTreeMap<String, f64> {
    serde_json::to_value(t)
        .ok()
        .and_then(|v| serde_json::from_value(v).ok())
        .unwrap_or_default()
}

fn check_support(name: &str, lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::invalid(format!(
            "{name} support must satisfy low < high, got [{lo}, {hi}]"
        )));
    }
    Ok(())
}

/// JSON form of a scenario. `params` keys are scenario-specific; unknown
/// keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price_lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price_upper: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub treatment: Option<TreatmentKind>,
}

impl ScenarioConfig {
    pub fn named(id: &str) -> Self {
        ScenarioConfig {
            scenario: id.to_string(),
            params: BTreeMap::new(),
            price_lower: None,
            price_upper: None,
            treatment: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("scenario config: {e}")))
    }
}

fn merge_params<T>(defaults: T, overrides: &BTreeMap<String, f64>) -> Result<T>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let mut map = to_map(&defaults);
    for (k, v) in overrides {
        if !map.contains_key(k) {
            let known: Vec<&String> = map.keys().collect();
            return Err(Error::invalid(format!(
                "unknown parameter `{k}`; expected one of {known:?}"
            )));
        }
        if !v.is_finite() {
            return Err(Error::invalid(format!("parameter `{k}` must be finite")));
        }
        map.insert(k.clone(), *v);
    }
    let value = serde_json::to_value(map).map_err(|e| Error::Internal(e.to_string()))?;
    serde_json::from_value(value).map_err(|e| Error::invalid(e.to_string()))
}

/// Build and validate a scenario from its configuration.
pub fn make_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    let id: ScenarioId = config.scenario.parse()?;
    let price_box = match (&config.price_lower, &config.price_upper) {
        (Some(l), Some(u)) => Some(PriceBox::new(l.clone(), u.clone())?),
        (None, None) => None,
        _ => {
            return Err(Error::invalid(
                "price_lower and price_upper must be given together",
            ))
        }
    };
    let scenario = match id {
        ScenarioId::TechIntervention => {
            Scenario::tech_with(merge_params(TechParams::default(), &config.params)?, price_box)?
        }
        ScenarioId::GoatHaySubsidy => Scenario::goat_hay_with(
            merge_params(GoatHayParams::default(), &config.params)?,
            price_box,
            config.treatment,
        )?,
        ScenarioId::SmoothLogistic => Scenario::logistic_with(
            merge_params(LogisticParams::default(), &config.params)?,
            price_box,
        )?,
        ScenarioId::Custom => {
            return Err(Error::invalid(
                "custom scenarios carry code and must be built with Scenario::custom",
            ))
        }
    };
    match config.treatment {
        Some(t) if t != scenario.treatment => scenario.with_treatment(t),
        _ => Ok(scenario),
    }
}

/// `n` i.i.d. units drawn from one seed.
#[derive(Debug)]
pub struct Population {
    pub units: Vec<Box<dyn Unit>>,
    pub scenario_id: ScenarioId,
    pub seed: u64,
}

impl Population {
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn num_goods(&self) -> usize {
        self.units.first().map_or(0, |u| u.num_goods())
    }
}

pub fn sample_population(scenario: &Scenario, n: usize, seed: u64) -> Result<Population> {
    if n < 2 {
        return Err(Error::invalid(format!("population size must be at least 2, got {n}")));
    }
    let mut rng = rng::stream(seed, Stream::Population);
    let units = (0..n).map(|_| scenario.sample_unit(&mut rng)).collect();
    Ok(Population {
        units,
        scenario_id: scenario.id,
        seed,
    })
}
