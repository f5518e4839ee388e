//! Seeded replication engine and summaries against mean-field oracles.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{true_effects, MeanFieldSolution, Policy, SolverSettings};
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimateReport, EstimatorOptions, Interval};
use crate::experiment::{run_experiment_with, Design};
use crate::model::{Scenario, ScenarioId};
use crate::rng::retry_seed;

/// Resampling attempts per replication before it counts as lost.
const MAX_ATTEMPTS: u64 = 20;

#[derive(Debug, Clone)]
pub struct ReplicationPlan {
    pub scenario: Scenario,
    pub design: Design,
    pub n: usize,
    pub num_reps: usize,
    pub base_seed: u64,
    pub estimator: EstimatorOptions,
    pub solver: SolverSettings,
}

impl ReplicationPlan {
    pub fn new(scenario: Scenario, design: Design, n: usize, num_reps: usize, base_seed: u64) -> Self {
        ReplicationPlan {
            scenario,
            design,
            n,
            num_reps,
            base_seed,
            estimator: EstimatorOptions::default(),
            solver: SolverSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_reps == 0 {
            return Err(Error::invalid("number of replications must be at least 1"));
        }
        if self.n < 2 {
            return Err(Error::invalid(format!("sample size must be at least 2, got {}", self.n)));
        }
        self.design.validate()?;
        self.solver.validate()
    }

    /// Largest number of failed attempts tolerated (1% of the replications).
    pub fn failure_limit(&self) -> usize {
        self.num_reps / 100
    }
}

/// Quantities tracked per replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "estimand", content = "good")]
pub enum Estimand {
    Ade,
    Aie,
    Dpe,
    Ipe,
    Mpe,
    /// `dp*/dπ` (binary) or `dp*/dη` (continuous) for one good.
    PriceResponse(usize),
    /// The finite-sample price `P̃` of one good.
    Price(usize),
}

impl Estimand {
    pub fn name(&self) -> String {
        match self {
            Estimand::Ade => "ade".into(),
            Estimand::Aie => "aie".into(),
            Estimand::Dpe => "dpe".into(),
            Estimand::Ipe => "ipe".into(),
            Estimand::Mpe => "mpe".into(),
            Estimand::PriceResponse(k) => format!("price_response_{}", k + 1),
            Estimand::Price(k) => format!("price_{}", k + 1),
        }
    }

    /// Estimands available for a scenario with `j` goods.
    pub fn all(j: usize, continuous: bool) -> Vec<Estimand> {
        let mut v = vec![Estimand::Ade, Estimand::Aie];
        if continuous {
            v.extend([Estimand::Dpe, Estimand::Ipe, Estimand::Mpe]);
        }
        v.extend((0..j).map(Estimand::PriceResponse));
        v.extend((0..j).map(Estimand::Price));
        v
    }

    fn value(&self, r: &EstimateReport) -> f64 {
        let policy = r.policy.as_ref();
        match *self {
            Estimand::Ade => r.tau_ade_hat,
            Estimand::Aie => r.tau_aie_hat,
            Estimand::Dpe => policy.map_or(f64::NAN, |p| p.dpe),
            Estimand::Ipe => policy.map_or(f64::NAN, |p| p.ipe),
            Estimand::Mpe => policy.map_or(f64::NAN, |p| p.mpe),
            Estimand::PriceResponse(k) => match policy {
                Some(p) => p.dp_deta[k],
                None => r.dpdpi_hat[k],
            },
            Estimand::Price(k) => r.p_tilde[k],
        }
    }

    fn truth(&self, t: &MeanFieldSolution) -> f64 {
        let policy = t.policy_effects.as_ref();
        match *self {
            Estimand::Ade => t.tau_ade_star,
            Estimand::Aie => t.tau_aie_star,
            Estimand::Dpe => policy.map_or(f64::NAN, |p| p.dpe),
            Estimand::Ipe => policy.map_or(f64::NAN, |p| p.ipe),
            Estimand::Mpe => policy.map_or(f64::NAN, |p| p.mpe),
            Estimand::PriceResponse(k) => match policy {
                Some(p) => p.dp_deta[k],
                None => t.dpdpi[k],
            },
            Estimand::Price(k) => t.p_star[k],
        }
    }

    fn interval(&self, r: &EstimateReport) -> Option<Interval> {
        match self {
            Estimand::Ade => Some(r.ci_ade),
            Estimand::Aie => Some(r.ci_aie),
            _ => None,
        }
    }

    /// Standard error implied by the plug-in variance.
    fn reported_se(&self, r: &EstimateReport) -> Option<f64> {
        let rn = (r.n as f64).sqrt();
        match self {
            Estimand::Ade => Some(r.sigma2_d_hat.sqrt() / rn),
            Estimand::Aie => {
                let s2 = if r.corrected_ci {
                    r.sigma2_i_corrected
                } else {
                    r.sigma2_i_hat
                };
                Some(s2.sqrt() / (rn * r.h_n))
            }
            _ => None,
        }
    }
}

/// One replication's estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    /// Attempts needed (1 = first draw succeeded).
    pub attempts: u64,
    pub report: EstimateReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandSummary {
    pub estimand: String,
    pub truth: f64,
    pub mean: f64,
    pub sd: f64,
    /// `mean − truth`.
    pub bias: f64,
    /// `truth − mean`.
    pub bias_truth_minus_estimate: f64,
    /// `sd / √reps`.
    pub mc_standard_error: f64,
    /// Fraction of intervals containing the truth.
    pub coverage: Option<f64>,
    /// Average standard error implied by the plug-in variance.
    pub mean_reported_se: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthSource {
    ClosedForm,
    NumericOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub scenario: ScenarioId,
    pub n: usize,
    pub num_reps: usize,
    pub base_seed: u64,
    pub design: Design,
    pub h_n: f64,
    pub xi_n: Option<f64>,
    pub truth_source: TruthSource,
    pub failed_rep_count: usize,
    pub rows: Vec<EstimandSummary>,
}

impl MonteCarloSummary {
    pub fn row(&self, estimand: Estimand) -> Option<&EstimandSummary> {
        let name = estimand.name();
        self.rows.iter().find(|r| r.estimand == name)
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloRun {
    pub truth: MeanFieldSolution,
    pub replications: Vec<Replication>,
    pub summary: MonteCarloSummary,
}

/// Mean-field truth for a plan.
pub fn plan_truth(plan: &ReplicationPlan) -> Result<MeanFieldSolution> {
    let policy = Policy::for_scenario(&plan.scenario, plan.design.pi, plan.n)?;
    true_effects(&plan.scenario, &policy, &plan.solver)
}

fn replicate_one(plan: &ReplicationPlan, index: usize, start: &[f64]) -> (Result<Replication>, usize) {
    let mut failures = 0;
    let mut last = None;
    for attempt in 0..MAX_ATTEMPTS {
        let seed = retry_seed(plan.base_seed, index as u64, attempt);
        let outcome = run_experiment_with(&plan.scenario, plan.n, &plan.design, seed, &plan.solver, Some(start))
            .and_then(|data| estimate(&data, &plan.estimator));
        match outcome {
            Ok(report) => {
                return (
                    Ok(Replication {
                        index,
                        seed,
                        attempts: attempt + 1,
                        report,
                    }),
                    failures,
                )
            }
            Err(e) if e.is_validation() => return (Err(e), failures),
            Err(e) => {
                failures += 1;
                last = Some(e);
            }
        }
    }
    (Err(last.expect("at least one attempt ran")), failures)
}

/// Run every replication (in the current rayon pool) and summarize.
///
/// Results are identical for any number of worker threads: replications are
/// collected in index order and folded sequentially.
pub fn run_replications(plan: &ReplicationPlan) -> Result<MonteCarloRun> {
    plan.validate()?;
    let truth = plan_truth(plan)?;
    let start = truth.p_star.clone();
    let results: Vec<(Result<Replication>, usize)> = (0..plan.num_reps)
        .into_par_iter()
        .map(|i| replicate_one(plan, i, &start))
        .collect();

    let total_failures: usize = results.iter().map(|(_, f)| f).sum();
    let limit = plan.failure_limit();
    let mut replications = Vec::with_capacity(plan.num_reps);
    for (r, _) in results {
        match r {
            Ok(rep) => replications.push(rep),
            Err(e) if e.is_validation() => return Err(e),
            Err(e) => {
                return Err(Error::TooManyFailures {
                    failed: total_failures,
                    total: plan.num_reps,
                    limit,
                    last: e.to_string(),
                })
            }
        }
    }
    if total_failures > limit {
        return Err(Error::TooManyFailures {
            failed: total_failures,
            total: plan.num_reps,
            limit,
            last: "replications needed resampling".into(),
        });
    }

    let continuous = plan.scenario.treatment.is_continuous();
    let estimands = Estimand::all(plan.scenario.num_goods, continuous);
    let rows = estimands
        .iter()
        .map(|e| summarize(*e, &replications, &truth))
        .collect();
    let summary = MonteCarloSummary {
        scenario: plan.scenario.id,
        n: plan.n,
        num_reps: plan.num_reps,
        base_seed: plan.base_seed,
        design: plan.design,
        h_n: plan.design.h(plan.n),
        xi_n: plan.scenario.treatment.xi(plan.n),
        truth_source: if plan.scenario.id == ScenarioId::TechIntervention {
            TruthSource::ClosedForm
        } else {
            TruthSource::NumericOracle
        },
        failed_rep_count: total_failures,
        rows,
    };
    Ok(MonteCarloRun {
        truth,
        replications,
        summary,
    })
}

/// Streaming mean and variance, folded in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample standard deviation; 0 for a single observation.
    pub fn sd(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).sqrt()
        }
    }
}

fn summarize(estimand: Estimand, reps: &[Replication], truth: &MeanFieldSolution) -> EstimandSummary {
    let t = estimand.truth(truth);
    let mut acc = Welford::default();
    let mut se = Welford::default();
    let mut intervals = Vec::new();
    for r in reps {
        acc.push(estimand.value(&r.report));
        if let Some(s) = estimand.reported_se(&r.report) {
            se.push(s);
        }
        if let Some(ci) = estimand.interval(&r.report) {
            intervals.push(ci);
        }
    }
    EstimandSummary {
        estimand: estimand.name(),
        truth: t,
        mean: acc.mean(),
        sd: acc.sd(),
        bias: acc.mean() - t,
        bias_truth_minus_estimate: t - acc.mean(),
        mc_standard_error: acc.sd() / (acc.count() as f64).sqrt(),
        coverage: (!intervals.is_empty()).then(|| coverage(&intervals, t)),
        mean_reported_se: (se.count() > 0).then(|| se.mean()),
    }
}

/// Fraction of intervals that contain `truth`.
pub fn coverage(intervals: &[Interval], truth: f64) -> f64 {
    if intervals.is_empty() {
        return f64::NAN;
    }
    intervals.iter().filter(|ci| ci.contains(truth)).count() as f64 / intervals.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

/// Points in the density grid.
pub const DENSITY_GRID: usize = 512;

/// Silverman's rule `0.9 · min(sd, IQR/1.34) · n^(-1/5)`.
pub fn silverman_bandwidth(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mut acc = Welford::default();
    x.iter().for_each(|v| acc.push(*v));
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { acc.sd().min(iqr / 1.34) } else { acc.sd() };
    0.9 * spread * n.powf(-0.2)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    quantile(&s, 0.5)
}

/// Gaussian kernel density on a grid spanning the data range ± 3 bandwidths.
pub fn density_data(estimates: &[f64], bandwidth: Option<f64>) -> Result<Density> {
    if estimates.len() < 2 {
        return Err(Error::invalid("density needs at least two estimates"));
    }
    if estimates.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("density input must be finite"));
    }
    let lo = estimates.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = estimates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Err(Error::invalid("density input has zero variance"));
    }
    let bw = match bandwidth {
        Some(b) if b > 0.0 && b.is_finite() => b,
        Some(b) => return Err(Error::invalid(format!("bandwidth must be positive, got {b}"))),
        None => silverman_bandwidth(estimates),
    };
    let (a, b) = (lo - 3.0 * bw, hi + 3.0 * bw);
    let norm = 1.0 / (estimates.len() as f64 * bw * (2.0 * std::f64::consts::PI).sqrt());
    let grid: Vec<f64> = (0..DENSITY_GRID)
        .map(|k| a + (b - a) * k as f64 / (DENSITY_GRID - 1) as f64)
        .collect();
    let density = grid
        .iter()
        .map(|g| {
            estimates
                .iter()
                .map(|x| {
                    let u = (g - x) / bw;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    Ok(Density {
        bandwidth: bw,
        grid,
        density,
    })
}

pub fn write_summary_csv<W: Write>(summary: &MonteCarloSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "estimand",
        "truth",
        "mean",
        "sd",
        "bias",
        "bias_truth_minus_estimate",
        "mc_standard_error",
        "coverage",
        "mean_reported_se",
    ])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in &summary.rows {
        w.write_record([
            r.estimand.clone(),
            r.truth.to_string(),
            r.mean.to_string(),
            r.sd.to_string(),
            r.bias.to_string(),
            r.bias_truth_minus_estimate.to_string(),
            r.mc_standard_error.to_string(),
            opt(r.coverage),
            opt(r.mean_reported_se),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per replication with every tracked estimate and both intervals.
pub fn write_replications_csv<W: Write>(run: &MonteCarloRun, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let estimands = Estimand::all(run.truth.p_star.len(), run.truth.policy_effects.is_some());
    let mut header = vec!["index".to_string(), "seed".to_string(), "attempts".to_string()];
    header.extend(estimands.iter().map(|e| e.name()));
    header.extend(["ade_lower", "ade_upper", "aie_lower", "aie_upper"].map(String::from));
    w.write_record(&header)?;
    for r in &run.replications {
        let mut row = vec![r.index.to_string(), r.seed.to_string(), r.attempts.to_string()];
        row.extend(estimands.iter().map(|e| e.value(&r.report).to_string()));
        let (a, b) = (r.report.ci_ade, r.report.ci_aie);
        row.extend([a.lower, a.upper, b.lower, b.upper].map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_density_csv<W: Write>(density: &Density, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "density"])?;
    for (x, d) in density.grid.iter().zip(&density.density) {
        w.write_record([x.to_string(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coverage_extremes() {
        let hit = [Interval { lower: -1.0, upper: 1.0 }; 3];
        assert_eq!(coverage(&hit, 0.0), 1.0);
        assert_eq!(coverage(&hit, 5.0), 0.0);
    }

    #[test]
    fn density_properties() {
        let d = density_data(&[0.0, 1.0], Some(0.5)).unwrap();
        assert_eq!(d.grid.len(), DENSITY_GRID);
        // grid is symmetric around 0.5, so mirror points agree
        for k in 0..DENSITY_GRID {
            let m = DENSITY_GRID - 1 - k;
            assert!((d.density[k] - d.density[m]).abs() < 1e-12);
        }
        let step = d.grid[1] - d.grid[0];
        let integral: f64 = d.density.windows(2).map(|w| 0.5 * (w[0] + w[1]) * step).sum();
        // each kernel loses its 3-bandwidth lower or upper tail
        let lost = statrs::function::erf::erfc(3.0 / 2f64.sqrt()) / 2.0;
        assert!((integral - (1.0 - lost)).abs() < 1e-4);

        // with many points only the extremes lose tail mass
        use rand::Rng;
        let mut rng = crate::rng::stream(11, crate::rng::Stream::Integration);
        let xs: Vec<f64> = (0..2000).map(|_| rng.gen::<f64>() + rng.gen::<f64>()).collect();
        let d = density_data(&xs, None).unwrap();
        let step = d.grid[1] - d.grid[0];
        let integral: f64 = d.density.windows(2).map(|w| 0.5 * (w[0] + w[1]) * step).sum();
        assert!((integral - 1.0).abs() < 1e-3, "{integral}");
        assert!(density_data(&[2.0, 2.0, 2.0], None).is_err());
        assert!(density_data(&[2.0], None).is_err());
    }

    #[test]
    fn single_replication_summary() {
        let plan = ReplicationPlan::new(Scenario::tech(), Design::default(), 200, 1, 4);
        let plan = ReplicationPlan {
            solver: SolverSettings {
                oracle_samples: 10_000,
                ..SolverSettings::default()
            },
            ..plan
        };
        let run = run_replications(&plan).unwrap();
        let ade = run.summary.row(Estimand::Ade).unwrap();
        assert_eq!(ade.mean, run.replications[0].report.tau_ade_hat);
        assert_eq!(ade.sd, 0.0);
        let zero = ReplicationPlan {
            num_reps: 0,
            ..plan
        };
        assert!(matches!(run_replications(&zero), Err(Error::Invalid(_))));
    }
}
