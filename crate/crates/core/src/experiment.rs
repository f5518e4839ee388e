//! The augmented randomized design: Bernoulli treatments plus independent
//! Rademacher price perturbations, and the data it produces.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{solve_finite_sample_price, SolverSettings};
use crate::error::{Error, Result};
use crate::model::{check_exponent, sample_population, Arms, Scenario, ScenarioId, Unit};
use crate::rng::{self, SimRng, Stream};

/// Treatment probability and perturbation schedule `h_n = c · n^(-α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub pi: f64,
    pub h_scale: f64,
    pub h_exponent: f64,
}

impl Default for Design {
    fn default() -> Self {
        Design {
            pi: 0.5,
            h_scale: 1.0,
            h_exponent: 1.0 / 3.0,
        }
    }
}

impl Design {
    pub fn new(pi: f64, h_scale: f64, h_exponent: f64) -> Result<Self> {
        let d = Design {
            pi,
            h_scale,
            h_exponent,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability(self.pi)?;
        if !(self.h_scale > 0.0 && self.h_scale.is_finite()) {
            return Err(Error::invalid(format!(
                "h_scale must be positive, got {}",
                self.h_scale
            )));
        }
        check_exponent("h_exponent", self.h_exponent)
    }

    /// Design used for a scenario's reference simulations.
    ///
    /// The tech and goat-hay markets need `h_n = 4 n^{-1/3}`: smaller
    /// perturbations leave the price-response regressions weakly identified
    /// and the indirect-effect intervals undercover.
    pub fn reference(id: ScenarioId) -> Self {
        match id {
            ScenarioId::TechIntervention | ScenarioId::GoatHaySubsidy => Design {
                h_scale: 4.0,
                ..Design::default()
            },
            _ => Design::default(),
        }
    }

    /// Perturbation size for a sample of `n` units.
    pub fn h(&self, n: usize) -> f64 {
        self.h_scale * (n as f64).powf(-self.h_exponent)
    }
}

pub(crate) fn check_probability(pi: f64) -> Result<()> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::invalid(format!(
            "treatment probability pi must lie strictly in (0, 1), got {pi}"
        )));
    }
    Ok(())
}

/// Each unit independently gets `arms.treated` with probability `pi`,
/// otherwise `arms.control`.
pub fn assign_treatments(n: usize, pi: f64, arms: Arms, rng: &mut SimRng) -> Result<Vec<f64>> {
    check_probability(pi)?;
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 units, got {n}")));
    }
    Ok((0..n)
        .map(|_| {
            if rng.gen::<f64>() < pi {
                arms.treated
            } else {
                arms.control
            }
        })
        .collect())
}

/// `n × J` matrix of independent `±h` entries.
pub fn draw_perturbations(n: usize, j: usize, h: f64, rng: &mut SimRng) -> Result<DMatrix<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("perturbation size must be positive, got {h}")));
    }
    // row-major draw order keeps unit i's perturbations together
    let mut u = DMatrix::zeros(n, j);
    for i in 0..n {
        for k in 0..j {
            u[(i, k)] = if rng.gen::<bool>() { h } else { -h };
        }
    }
    Ok(u)
}

/// Everything observed in one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentDataset {
    pub n: usize,
    pub num_goods: usize,
    pub pi: f64,
    pub h_n: f64,
    pub xi_n: Option<f64>,
    pub arms: Arms,
    pub seed: u64,
    pub w: Vec<f64>,
    /// `n × J`.
    pub u: DMatrix<f64>,
    pub y: Vec<f64>,
    pub d: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub p_tilde: Vec<f64>,
    /// `‖(1/n) Σ Z_i‖∞` at `P̃`.
    pub clearing_residual: f64,
}

/// Scalar metadata written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n: usize,
    pub num_goods: usize,
    pub pi: f64,
    pub h_n: f64,
    pub xi_n: Option<f64>,
    pub treated_value: f64,
    pub control_value: f64,
    pub seed: u64,
    pub p_tilde: Vec<f64>,
    pub clearing_residual: f64,
}

impl ExperimentDataset {
    /// Whether each unit sits in the treated (upper) arm.
    pub fn treated(&self) -> Vec<bool> {
        self.w.iter().map(|w| *w == self.arms.treated).collect()
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            n: self.n,
            num_goods: self.num_goods,
            pi: self.pi,
            h_n: self.h_n,
            xi_n: self.xi_n,
            treated_value: self.arms.treated,
            control_value: self.arms.control,
            seed: self.seed,
            p_tilde: self.p_tilde.clone(),
            clearing_residual: self.clearing_residual,
        }
    }

    pub fn csv_header(&self) -> Vec<String> {
        let j = self.num_goods;
        let mut h = vec!["i".to_string(), "W".to_string()];
        h.extend((1..=j).map(|k| format!("U_{k}")));
        h.push("Y".to_string());
        for name in ["D", "S", "Z"] {
            h.extend((1..=j).map(|k| format!("{name}_{k}")));
        }
        h
    }

    /// Unit-level table, one row per unit, shortest round-trip decimals.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(self.csv_header())?;
        let j = self.num_goods;
        let mut row = Vec::with_capacity(3 + 4 * j);
        for i in 0..self.n {
            row.clear();
            row.push(i.to_string());
            row.push(self.w[i].to_string());
            row.extend((0..j).map(|k| self.u[(i, k)].to_string()));
            row.push(self.y[i].to_string());
            for m in [&self.d, &self.s, &self.z] {
                row.extend((0..j).map(|k| m[(i, k)].to_string()));
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Writes `<stem>.csv` and `<stem>.meta.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(File::create(dir.join(format!("{stem}.csv")))?)?;
        let meta = serde_json::to_string_pretty(&self.meta())?;
        std::fs::write(dir.join(format!("{stem}.meta.json")), meta + "\n")?;
        Ok(())
    }
}

/// Record outcomes, demand and supply of every unit at its faced price `price + U_i`.
#[allow(clippy::too_many_arguments)]
pub fn observe(
    units: &[Box<dyn Unit>],
    w: Vec<f64>,
    u: DMatrix<f64>,
    price: Vec<f64>,
    pi: f64,
    h_n: f64,
    xi_n: Option<f64>,
    arms: Arms,
    seed: u64,
) -> ExperimentDataset {
    let n = units.len();
    let j = price.len();
    let (mut d, mut s) = (DMatrix::zeros(n, j), DMatrix::zeros(n, j));
    let mut y = Vec::with_capacity(n);
    let (mut q, mut di, mut si) = (vec![0.0; j], vec![0.0; j], vec![0.0; j]);
    for (i, unit) in units.iter().enumerate() {
        for k in 0..j {
            q[k] = price[k] + u[(i, k)];
        }
        y.push(unit.outcome(w[i], &q));
        unit.demand(w[i], &q, &mut di);
        unit.supply(w[i], &q, &mut si);
        for k in 0..j {
            d[(i, k)] = di[k];
            s[(i, k)] = si[k];
        }
    }
    let z = &d - &s;
    let clearing_residual = (0..j)
        .map(|k| (z.column(k).sum() / n as f64).abs())
        .fold(0.0, f64::max);
    ExperimentDataset {
        n,
        num_goods: j,
        pi,
        h_n,
        xi_n,
        arms,
        seed,
        w,
        u,
        y,
        d,
        s,
        z,
        p_tilde: price,
        clearing_residual,
    }
}

/// Sample a population, randomize, clear the perturbed market and record the data.
pub fn run_experiment(scenario: &Scenario, n: usize, design: &Design, seed: u64) -> Result<ExperimentDataset> {
    run_experiment_with(scenario, n, design, seed, &SolverSettings::default(), None)
}

/// [`run_experiment`] with explicit solver settings and a starting price.
pub fn run_experiment_with(
    scenario: &Scenario,
    n: usize,
    design: &Design,
    seed: u64,
    settings: &SolverSettings,
    start: Option<&[f64]>,
) -> Result<ExperimentDataset> {
    design.validate()?;
    let population = sample_population(scenario, n, seed)?;
    let arms = scenario.treatment.arms(n);
    let w = assign_treatments(n, design.pi, arms, &mut rng::stream(seed, Stream::Treatment))?;
    let h = design.h(n);
    let u = draw_perturbations(n, scenario.num_goods, h, &mut rng::stream(seed, Stream::Perturbation))?;
    let solved = solve_finite_sample_price(&population.units, &w, &u, &scenario.price_box, start, settings)?;
    Ok(observe(
        &population.units,
        w,
        u,
        solved.price,
        design.pi,
        h,
        scenario.treatment.xi(n),
        arms,
        seed,
    ))
}
