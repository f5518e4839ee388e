use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mktfx::equilibrium::{check_contraction, interior_grid, true_effects, Policy, SolverSettings};
use mktfx::estimators::{aie_from_elasticities, estimate, EstimatorOptions};
use mktfx::experiment::{run_experiment, Design};
use mktfx::montecarlo::{
    density_data, run_replications, write_density_csv, write_replications_csv, write_summary_csv, Estimand,
    ReplicationPlan,
};
use mktfx::{make_scenario, Error, Scenario, ScenarioConfig, ScenarioId, TreatmentKind};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "mktfx", version, about = "Treatment effects in markets with price interference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the mean-field market and print oracle effects.
    MeanField(Common),
    /// Run one augmented experiment and write the dataset and estimates.
    Simulate(Common),
    /// Run seeded replications and summarize against the mean-field truth.
    Replicate(Common),
    /// Indirect effect implied by supply and demand elasticities.
    TuitionExample(Tuition),
}

#[derive(Args, Default)]
struct Common {
    /// tech-intervention, goat-hay-subsidy or smooth-logistic (short aliases accepted).
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Treatment probability.
    #[arg(long)]
    pi: Option<f64>,
    #[arg(long)]
    h_scale: Option<f64>,
    #[arg(long)]
    h_exponent: Option<f64>,
    #[arg(long)]
    xi_scale: Option<f64>,
    #[arg(long)]
    xi_exponent: Option<f64>,
    /// Policy level around which arms are placed (continuous designs).
    #[arg(long)]
    eta: Option<f64>,
    /// Use a continuous policy (arms eta ± xi_n).
    #[arg(long)]
    continuous: bool,
    /// Use binary arms even when the scenario defaults to a continuous policy.
    #[arg(long, conflicts_with = "continuous")]
    binary: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads for replications.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file with any of the above keys (flags take precedence).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write kernel density data of the main estimates.
    #[arg(long)]
    density: bool,
    /// Also write one CSV row per replication.
    #[arg(long)]
    per_rep: bool,
}

#[derive(Args)]
struct Tuition {
    #[arg(long, allow_hyphen_values = true)]
    kappa_s: f64,
    #[arg(long, allow_hyphen_values = true)]
    kappa_d: f64,
    #[arg(long, allow_hyphen_values = true)]
    tau_ade: f64,
}

/// Settings read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    scenario: Option<String>,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    price_lower: Option<Vec<f64>>,
    price_upper: Option<Vec<f64>>,
    n: Option<usize>,
    pi: Option<f64>,
    h_scale: Option<f64>,
    h_exponent: Option<f64>,
    xi_scale: Option<f64>,
    xi_exponent: Option<f64>,
    eta: Option<f64>,
    continuous: Option<bool>,
    seed: Option<u64>,
    reps: Option<usize>,
    threads: Option<usize>,
    out: Option<PathBuf>,
    density: Option<bool>,
    per_rep: Option<bool>,
}

/// Fully resolved settings, echoed next to every output.
#[derive(Debug, Serialize)]
struct RunConfig {
    command: &'static str,
    scenario: ScenarioConfig,
    n: usize,
    pi: f64,
    design: Design,
    seed: u64,
    reps: usize,
    threads: Option<usize>,
    out: Option<PathBuf>,
    density: bool,
    per_rep: bool,
    #[serde(skip)]
    resolved: Option<Scenario>,
}

enum Failure {
    Validation(String),
    Compute(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Compute(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Compute(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Compute(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

const DEFAULT_N: usize = 1000;
const DEFAULT_REPS: usize = 1000;
const DEFAULT_PI: f64 = 0.5;

fn resolve(command: &'static str, flags: Common) -> CliResult<RunConfig> {
    let file = match &flags.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str::<FileConfig>(&text)
                .map_err(|e| invalid(format!("config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };

    let name = flags
        .scenario
        .or(file.scenario)
        .unwrap_or_else(|| ScenarioId::TechIntervention.as_str().to_string());
    let id: ScenarioId = name.parse()?;
    let base = ScenarioConfig {
        scenario: id.as_str().to_string(),
        params: file.params,
        price_lower: file.price_lower,
        price_upper: file.price_upper,
        treatment: None,
    };
    let mut scenario = make_scenario(&base)?;

    let continuous = if flags.continuous {
        true
    } else if flags.binary {
        false
    } else {
        file.continuous.unwrap_or(scenario.treatment.is_continuous())
    };
    let treatment = if continuous {
        let (eta0, xs0, xe0) = match scenario.treatment {
            TreatmentKind::Continuous {
                eta,
                xi_scale,
                xi_exponent,
            } => (eta, xi_scale, xi_exponent),
            TreatmentKind::Binary => (0.0, 1.0, 1.0 / 3.0),
        };
        TreatmentKind::Continuous {
            eta: flags.eta.or(file.eta).unwrap_or(eta0),
            xi_scale: flags.xi_scale.or(file.xi_scale).unwrap_or(xs0),
            xi_exponent: flags.xi_exponent.or(file.xi_exponent).unwrap_or(xe0),
        }
    } else {
        if flags.eta.or(flags.xi_scale).or(flags.xi_exponent).is_some() {
            return Err(invalid("--eta and --xi-* require a continuous design (--continuous)"));
        }
        TreatmentKind::Binary
    };
    scenario = scenario.with_treatment(treatment)?;

    let reference = Design::reference(id);
    let pi = flags.pi.or(file.pi).unwrap_or(DEFAULT_PI);
    let design = Design {
        pi,
        h_scale: flags.h_scale.or(file.h_scale).unwrap_or(reference.h_scale),
        h_exponent: flags.h_exponent.or(file.h_exponent).unwrap_or(reference.h_exponent),
    };
    let n = flags.n.or(file.n).unwrap_or(DEFAULT_N);
    let reps = flags.reps.or(file.reps).unwrap_or(DEFAULT_REPS);
    let threads = flags.threads.or(file.threads);

    // mean-field admits pi at the ends of [0, 1]; experiments do not
    if command == "mean-field" {
        if !(0.0..=1.0).contains(&pi) {
            return Err(invalid(format!("treatment probability pi must lie in [0, 1], got {pi}")));
        }
    } else {
        design.validate()?;
        if n < 2 {
            return Err(invalid(format!("sample size n must be at least 2, got {n}")));
        }
    }
    if command == "replicate" && reps == 0 {
        return Err(invalid("reps must be at least 1"));
    }
    if threads == Some(0) {
        return Err(invalid("threads must be at least 1"));
    }

    Ok(RunConfig {
        command,
        scenario: scenario.to_config(),
        n,
        pi,
        design,
        seed: flags.seed.or(file.seed).unwrap_or(0),
        reps,
        threads,
        out: flags.out.or(file.out),
        density: flags.density || file.density.unwrap_or(false),
        per_rep: flags.per_rep || file.per_rep.unwrap_or(false),
        resolved: Some(scenario),
    })
}

impl RunConfig {
    fn scenario(&self) -> &Scenario {
        self.resolved.as_ref().expect("resolved scenario")
    }

    fn out_dir(&self) -> CliResult<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("mktfx-out"));
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    fn echo(&self, dir: Option<&Path>) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self)?;
        eprintln!("effective config:\n{text}");
        if let Some(d) = dir {
            fs::write(d.join("config.json"), text + "\n")?;
        }
        Ok(())
    }
}

/// Print `key<TAB>value`, one component per line for vectors.
fn put(out: &mut impl Write, key: &str, v: &[f64]) -> CliResult<()> {
    if v.len() == 1 {
        writeln!(out, "{key}\t{}", v[0])?;
    } else {
        for (k, x) in v.iter().enumerate() {
            writeln!(out, "{key}_{}\t{x}", k + 1)?;
        }
    }
    Ok(())
}

fn mean_field(cfg: &RunConfig) -> CliResult<()> {
    cfg.echo(None)?;
    let scenario = cfg.scenario();
    let policy = Policy::for_scenario(scenario, cfg.pi, cfg.n)?;
    let settings = SolverSettings::default();
    let sol = true_effects(scenario, &policy, &settings)?;
    let grid = interior_grid(&scenario.price_box.lower, &scenario.price_box.upper, 9);
    let contraction = check_contraction(scenario, &policy, &grid)?;

    let mut out = std::io::stdout().lock();
    writeln!(out, "scenario\t{}", scenario.id.as_str())?;
    writeln!(out, "pi\t{}", cfg.pi)?;
    put(&mut out, "p_star", &sol.p_star)?;
    put(&mut out, "dp_star_dpi", &sol.dpdpi)?;
    writeln!(out, "tau_ade\t{}", sol.tau_ade_star)?;
    writeln!(out, "tau_aie\t{}", sol.tau_aie_star)?;
    match &sol.policy_effects {
        Some(pe) => {
            writeln!(out, "eta\t{}", pe.eta)?;
            put(&mut out, "dp_star_deta", &pe.dp_deta)?;
            writeln!(out, "tau_dpe\t{}", pe.dpe)?;
            writeln!(out, "tau_ipe\t{}", pe.ipe)?;
            writeln!(out, "tau_mpe\t{}", pe.mpe)?;
        }
        // marginal effect of raising pi: direct plus indirect
        None => writeln!(out, "tau_mpe\t{}", sol.tau_ade_star + sol.tau_aie_star)?,
    }
    if let Some(s) = sol.sigma2_d {
        writeln!(out, "sigma2_d\t{s}")?;
    }
    if let Some(s) = sol.sigma2_i {
        writeln!(out, "sigma2_i\t{s}")?;
    }
    writeln!(out, "contraction_at_p_star\t{}", sol.contraction_at_star)?;
    writeln!(out, "contraction_max_interior\t{}", contraction.max_norm)?;
    writeln!(out, "contracting\t{}", contraction.contracting)?;
    Ok(())
}

fn simulate(cfg: &RunConfig) -> CliResult<()> {
    let dir = cfg.out_dir()?;
    cfg.echo(Some(&dir))?;
    let data = run_experiment(cfg.scenario(), cfg.n, &cfg.design, cfg.seed)?;
    data.save(&dir, "dataset")?;
    let report = estimate(&data, &EstimatorOptions::default())?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;

    let mut out = std::io::stdout().lock();
    writeln!(out, "n\t{}", report.n)?;
    put(&mut out, "p_tilde", &report.p_tilde)?;
    writeln!(out, "clearing_residual\t{}", report.clearing_residual)?;
    writeln!(out, "tau_ade_hat\t{}", report.tau_ade_hat)?;
    writeln!(out, "ci_ade\t{}\t{}", report.ci_ade.lower, report.ci_ade.upper)?;
    writeln!(out, "tau_aie_hat\t{}", report.tau_aie_hat)?;
    writeln!(out, "ci_aie\t{}\t{}", report.ci_aie.lower, report.ci_aie.upper)?;
    if let Some(pe) = &report.policy {
        writeln!(out, "dpe_hat\t{}", pe.dpe)?;
        writeln!(out, "ipe_hat\t{}", pe.ipe)?;
        writeln!(out, "mpe_hat\t{}", pe.mpe)?;
    }
    writeln!(out, "output\t{}", dir.display())?;
    Ok(())
}

fn replicate(cfg: &RunConfig) -> CliResult<()> {
    let dir = cfg.out_dir()?;
    cfg.echo(Some(&dir))?;
    let plan = ReplicationPlan::new(cfg.scenario().clone(), cfg.design, cfg.n, cfg.reps, cfg.seed);
    let run = match cfg.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Failure::Compute(e.to_string()))?
            .install(|| run_replications(&plan))?,
        None => run_replications(&plan)?,
    };

    write_summary_csv(&run.summary, BufWriter::new(File::create(dir.join("summary.csv"))?))?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&run.summary)? + "\n")?;
    if cfg.per_rep {
        write_replications_csv(&run, BufWriter::new(File::create(dir.join("replications.csv"))?))?;
    }
    if cfg.density {
        let mut which = vec![Estimand::Ade, Estimand::Aie];
        if run.truth.policy_effects.is_some() {
            which.extend([Estimand::Dpe, Estimand::Mpe]);
        }
        for e in which {
            let xs: Vec<f64> = run
                .replications
                .iter()
                .map(|r| match e {
                    Estimand::Ade => r.report.tau_ade_hat,
                    Estimand::Aie => r.report.tau_aie_hat,
                    Estimand::Dpe => r.report.policy.as_ref().map_or(f64::NAN, |p| p.dpe),
                    _ => r.report.policy.as_ref().map_or(f64::NAN, |p| p.mpe),
                })
                .collect();
            let d = density_data(&xs, None)?;
            let path = dir.join(format!("density_{}.csv", e.name()));
            write_density_csv(&d, BufWriter::new(File::create(path)?))?;
        }
    }

    let mut out = std::io::stdout().lock();
    writeln!(out, "estimand\ttruth\tmean\tsd\tbias\tcoverage\tmc_se")?;
    for r in &run.summary.rows {
        let cov = r.coverage.map(|c| c.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{cov}\t{}",
            r.estimand, r.truth, r.mean, r.sd, r.bias, r.mc_standard_error
        )?;
    }
    writeln!(out, "failed_reps\t{}", run.summary.failed_rep_count)?;
    writeln!(out, "output\t{}", dir.display())?;
    Ok(())
}

fn tuition(args: &Tuition) -> CliResult<()> {
    let aie = aie_from_elasticities(args.kappa_s, args.kappa_d, args.tau_ade)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "tau_aie\t{aie}")?;
    writeln!(out, "tau_total\t{}", args.tau_ade + aie)?;
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::MeanField(c) => mean_field(&resolve("mean-field", c)?),
        Command::Simulate(c) => simulate(&resolve("simulate", c)?),
        Command::Replicate(c) => replicate(&resolve("replicate", c)?),
        Command::TuitionExample(t) => tuition(&t),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
