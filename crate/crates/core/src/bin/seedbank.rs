//! Command-line front end: T_MRCA sampling, partition event logs, oracle
//! evaluation, duality reports, and the batch experiment harness.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use seedbank::diffusion::{dual_moment_lhs, dual_moment_rhs};
use seedbank::engine::{decelerated_threshold, expected_a_exact, pure_death_extinction_mean};
use seedbank::experiments::{
    a_n_experiment, not_cdi_csv, not_cdi_probe, tmrca_csv, tmrca_grid, tmrca_replicates,
    AnConfig, DormantInit, GridConfig, NotCdiConfig,
};
use seedbank::oracles;
use seedbank::partition::{
    exchangeability_test, simulate_direct, simulate_graphical, PartitionQuery,
};
use seedbank::rng::derive_stream;
use seedbank::{RateMeasure, Variant};

#[derive(Parser)]
#[command(
    name = "seedbank",
    about = "Exact simulation and closed-form checks for the continuum seed-bank coalescent",
    version
)]
struct Cli {
    /// Worker threads for replicate-parallel commands (0 = rayon default).
    /// Outputs are bit-identical for any value.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct MeasureArgs {
    /// Inline measure config, e.g. '{"type":"atoms","atoms":[[1.0,1.0]]}'.
    #[arg(long, conflicts_with = "measure_file")]
    measure: Option<String>,
    /// Path to a JSON measure config.
    #[arg(long)]
    measure_file: Option<PathBuf>,
}

impl MeasureArgs {
    fn load(&self) -> Result<RateMeasure> {
        let text = match (&self.measure, &self.measure_file) {
            (Some(inline), None) => inline.clone(),
            (None, Some(path)) => fs::read_to_string(path)
                .with_context(|| format!("reading measure config {}", path.display()))?,
            _ => bail!("provide exactly one of --measure or --measure-file"),
        };
        Ok(RateMeasure::from_json(&text)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample T_MRCA replicates of the block-counting chain.
    Tmrca {
        #[command(flatten)]
        measure: MeasureArgs,
        /// standard | accelerated | decelerated
        #[arg(long, default_value = "standard")]
        variant: String,
        /// Decelerated gate exponent in (1/2, 1).
        #[arg(long, default_value_t = 0.75)]
        alpha: f64,
        /// Decelerated total-block threshold (>= 2).
        #[arg(long, default_value_t = 2)]
        m0_threshold: u64,
        /// Initial active blocks.
        #[arg(long)]
        n0: u64,
        /// Initial dormant blocks.
        #[arg(long, default_value_t = 0)]
        m0: u64,
        /// Fixed initial dormant rate instead of i.i.d. draws from ν.
        #[arg(long)]
        fixed_rate: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        reps: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Stop unabsorbed runs at this time (flagged, not an error).
        #[arg(long)]
        horizon: Option<f64>,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the marked-partition process and emit its event log.
    Partition {
        #[command(flatten)]
        measure: MeasureArgs,
        /// Sample size (1..=64).
        #[arg(long)]
        k: usize,
        /// graphical | direct
        #[arg(long, default_value = "direct")]
        simulator: String,
        /// Comma-separated initial flags (0 = active); default all active.
        #[arg(long)]
        flags: Option<String>,
        #[arg(long)]
        horizon: f64,
        /// Comma-separated times at which to print partition snapshots.
        #[arg(long)]
        snapshot_times: Option<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output CSV path for the event log (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the exchangeability comparison for a transposition.
    Exchangeability {
        #[command(flatten)]
        measure: MeasureArgs,
        #[arg(long, default_value_t = 4)]
        k: usize,
        /// Swap this 1-based individual with the next one.
        #[arg(long, default_value_t = 1)]
        swap: usize,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 100_000)]
        reps: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Evaluate a closed form or numeric oracle.
    Oracle {
        #[command(subcommand)]
        which: OracleCommand,
    },
    /// Compare the two sides of the moment-duality identity.
    Duality {
        #[command(flatten)]
        measure: MeasureArgs,
        #[arg(long)]
        x0: f64,
        /// Comma-separated per-atom initial bank frequencies.
        #[arg(long)]
        y0: String,
        #[arg(long)]
        n: u64,
        /// Comma-separated per-atom dormant multiplicities.
        #[arg(long)]
        m: String,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 10_000)]
        paths: u64,
        #[arg(long, default_value_t = 10_000)]
        reps: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Absolute slack added to the 3(SE+SE) pass window.
        #[arg(long, default_value_t = 0.05)]
        slack: f64,
    },
    /// Bounds-trend grid over (n, m) start sizes.
    Grid {
        /// JSON config file (see GridConfig).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Growth-in-n probe of not coming down from infinity.
    Notcdi {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deactivation statistic vs its exact mean.
    An {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum OracleCommand {
    /// E[T_MRCA(0, 2δ_λ)] for the single seed-bank.
    TmrcaTwo {
        #[arg(long)]
        c: f64,
        #[arg(long)]
        lambda: f64,
    },
    /// Solve the first-passage system f(λ) over the atoms.
    SolveF {
        #[command(flatten)]
        measure: MeasureArgs,
        /// Optional CSV output of (rate, f).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reflected-walk expected hitting time from j to m.
    RwHitting {
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        j: u32,
        #[arg(long)]
        m: u32,
    },
    /// Limiting probability that an ancestral line is active.
    ActiveLimit {
        #[command(flatten)]
        measure: MeasureArgs,
    },
    /// Single seed-bank active probability at time t.
    ActiveProb {
        #[arg(long)]
        c: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        t: f64,
    },
    /// Renewal-equation active probability on a time grid.
    Renewal {
        #[command(flatten)]
        measure: MeasureArgs,
        /// Comma-separated times.
        #[arg(long)]
        times: String,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Forward-ODE ancestral distribution at time t (discrete measure).
    Ode {
        #[command(flatten)]
        measure: MeasureArgs,
        #[arg(long, default_value_t = 1.0)]
        p0: f64,
        /// Comma-separated initial dormant masses (default all 0).
        #[arg(long)]
        q0: Option<String>,
        #[arg(long)]
        t: f64,
    },
    /// δ_{(1,1)} weight of the fixation law.
    FixationWeight {
        #[command(flatten)]
        measure: MeasureArgs,
        #[arg(long)]
        x: f64,
        /// Comma-separated per-atom y frequencies.
        #[arg(long)]
        y: String,
    },
    /// Mean extinction time of the pure death process of n blocks.
    PureDeath {
        #[command(flatten)]
        measure: MeasureArgs,
        #[arg(long)]
        n: u64,
    },
    /// Exact mean of the deactivation statistic.
    ExpectedA {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        c: f64,
    },
    /// Decelerated-chain threshold m0(ε).
    Threshold {
        #[arg(long)]
        c: f64,
        #[arg(long)]
        lambda_min: f64,
        #[arg(long)]
        lambda_max: f64,
        #[arg(long, default_value_t = 0.75)]
        alpha: f64,
        #[arg(long)]
        eps: f64,
    },
    /// Exploratory scan of f(λ) over a rate grid (no assertions).
    ProbeF {
        #[command(flatten)]
        measure: MeasureArgs,
        /// Comma-separated rates.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exploratory scan of f(λ, λ') in λ for fixed λ'.
    ProbePair {
        #[command(flatten)]
        measure: MeasureArgs,
        #[arg(long)]
        lambda_prime: f64,
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exploratory P_t comparison of two measures (no assertions).
    ProbePt {
        #[command(flatten)]
        measure: MeasureArgs,
        /// Second measure, inline JSON.
        #[arg(long)]
        other: String,
        #[arg(long)]
        times: String,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().context("parsing number list"))
        .collect()
}

fn parse_u64_list(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .map(|s| s.trim().parse::<u64>().context("parsing integer list"))
        .collect()
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, content).with_context(|| format!("writing {}", path.display()))?;
        }
        None => {
            std::io::stdout().write_all(content.as_bytes())?;
        }
    }
    Ok(())
}

/// Write the fully resolved config next to the output CSV.
fn emit_sidecar<T: serde::Serialize>(out: &Option<PathBuf>, config: &T) -> Result<()> {
    if let Some(path) = out {
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".config.json");
        let sidecar = path.with_file_name(name);
        fs::write(&sidecar, serde_json::to_string_pretty(config)?)
            .with_context(|| format!("writing {}", sidecar.display()))?;
    }
    Ok(())
}

fn parse_variant(name: &str, alpha: f64, m0: u64) -> Result<Variant> {
    let variant = match name {
        "standard" => Variant::Standard,
        "accelerated" => Variant::Accelerated,
        "decelerated" => Variant::Decelerated { alpha, m0 },
        other => bail!("unknown variant '{other}'"),
    };
    variant.validate()?;
    Ok(variant)
}

fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("initializing worker pool")?;
    }
    match cli.command {
        Command::Tmrca {
            measure,
            variant,
            alpha,
            m0_threshold,
            n0,
            m0,
            fixed_rate,
            reps,
            seed,
            horizon,
            out,
        } => {
            let measure = measure.load()?;
            let variant = parse_variant(&variant, alpha, m0_threshold)?;
            let init = match fixed_rate {
                Some(rate) => DormantInit::Fixed { rate },
                None => DormantInit::Iid,
            };
            let outcomes = tmrca_replicates(&measure, variant, n0, m0, init, reps, seed, horizon)?;
            emit(&out, &tmrca_csv(&outcomes))?;
        }
        Command::Partition {
            measure,
            k,
            simulator,
            flags,
            horizon,
            snapshot_times,
            seed,
            out,
        } => {
            let measure = measure.load()?;
            let flags = match flags {
                Some(text) => parse_f64_list(&text)?,
                None => vec![0.0; k],
            };
            if flags.len() != k {
                bail!("--flags must list exactly k = {k} values");
            }
            let mut rng = derive_stream(seed, &[]);
            let (events, snapshots) = match simulator.as_str() {
                "direct" => {
                    let traj = simulate_direct(&measure, horizon, &flags, &mut rng)?;
                    (traj.events().to_vec(), snapshot_list(&traj, &snapshot_times)?)
                }
                "graphical" => {
                    let traj = simulate_graphical(&measure, horizon, &flags, &mut rng)?;
                    (traj.events().to_vec(), snapshot_list(&traj, &snapshot_times)?)
                }
                other => bail!("unknown simulator '{other}'"),
            };
            let mut csv = String::from("time,kind,detail\n");
            for event in &events {
                let (kind, detail) = event.kind_and_detail();
                csv.push_str(&format!("{},{},{}\n", event.time, kind, detail));
            }
            emit(&out, &csv)?;
            for (t, rendered) in snapshots {
                println!("t={t}: {rendered}");
            }
        }
        Command::Exchangeability {
            measure,
            k,
            swap,
            t,
            reps,
            seed,
        } => {
            let measure = measure.load()?;
            if swap == 0 || swap >= k {
                bail!("--swap must name a 1-based individual below k");
            }
            let mut sigma: Vec<usize> = (0..k).collect();
            sigma.swap(swap - 1, swap);
            let mut rng = derive_stream(seed, &[]);
            let report = exchangeability_test(k, &measure, t, &sigma, reps, &mut rng)?;
            println!(
                "{}",
                json!({
                    "k": k,
                    "swap": [swap, swap + 1],
                    "chi2": report.chi2,
                    "df": report.df,
                    "p_value": report.p_value,
                })
            );
        }
        Command::Oracle { which } => run_oracle(which)?,
        Command::Duality {
            measure,
            x0,
            y0,
            n,
            m,
            t,
            dt,
            paths,
            reps,
            seed,
            slack,
        } => {
            let measure = measure.load()?;
            let y0 = parse_f64_list(&y0)?;
            let m = parse_u64_list(&m)?;
            let lhs = dual_moment_lhs(&measure, x0, &y0, n, &m, t, dt, paths, seed)?;
            let rhs = dual_moment_rhs(&measure, x0, &y0, n, &m, t, reps, seed + 1)?;
            let gap = (lhs.mean - rhs.mean).abs();
            let window = 3.0 * (lhs.se + rhs.se) + slack;
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "lhs": lhs.mean,
                    "se_lhs": lhs.se,
                    "rhs": rhs.mean,
                    "se_rhs": rhs.se,
                    "gap": gap,
                    "window": window,
                    "pass": gap <= window,
                }))?
            );
        }
        Command::Grid {
            config,
            seed,
            reps,
            out,
        } => {
            let mut config: GridConfig = load_config(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(reps) = reps {
                config.reps = reps;
            }
            if let Some(out) = out {
                config.out = Some(out.to_string_lossy().into_owned());
            }
            let measure = RateMeasure::from_config(&config.measure)?;
            let schedule: Vec<(u64, u64)> = config.schedule.iter().map(|&[n, m]| (n, m)).collect();
            let report = tmrca_grid(
                &measure,
                &schedule,
                config.reps,
                config.seed,
                config.init.unwrap_or_default(),
            )?;
            let out_path = config.out.clone().map(PathBuf::from);
            emit(&out_path, &report.to_csv())?;
            emit_sidecar(&out_path, &config)?;
        }
        Command::Notcdi {
            config,
            seed,
            reps,
            out,
        } => {
            let mut config: NotCdiConfig = load_config(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(reps) = reps {
                config.reps = reps;
            }
            if let Some(out) = out {
                config.out = Some(out.to_string_lossy().into_owned());
            }
            let measure = RateMeasure::from_config(&config.measure)?;
            let rows = not_cdi_probe(&measure, &config.n_grid, config.t, config.reps, config.seed)?;
            let out_path = config.out.clone().map(PathBuf::from);
            emit(&out_path, &not_cdi_csv(&rows))?;
            emit_sidecar(&out_path, &config)?;
        }
        Command::An {
            config,
            seed,
            reps,
            out,
        } => {
            let mut config: AnConfig = load_config(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(reps) = reps {
                config.reps = reps;
            }
            if let Some(out) = out {
                config.out = Some(out.to_string_lossy().into_owned());
            }
            let measure = RateMeasure::from_config(&config.measure)?;
            let report = a_n_experiment(&measure, config.n, config.reps, config.seed)?;
            let out_path = config.out.clone().map(PathBuf::from);
            emit(&out_path, &report.to_csv())?;
            emit_sidecar(&out_path, &config)?;
        }
    }
    Ok(())
}

fn snapshot_list<Q: PartitionQuery>(
    traj: &Q,
    times: &Option<String>,
) -> Result<Vec<(f64, String)>> {
    let Some(times) = times else {
        return Ok(Vec::new());
    };
    parse_f64_list(times)?
        .into_iter()
        .map(|t| Ok((t, traj.partition_at(t).render())))
        .collect()
}

fn run_oracle(which: OracleCommand) -> Result<()> {
    match which {
        OracleCommand::TmrcaTwo { c, lambda } => {
            println!("{}", oracles::tmrca_two_single_bank(c, lambda));
        }
        OracleCommand::SolveF { measure, out } => {
            let measure = measure.load()?;
            let solution = oracles::solve_f(&measure)?;
            let mut csv = String::from("rate,f\n");
            for (rate, f) in solution.f_values() {
                csv.push_str(&format!("{rate},{f}\n"));
            }
            eprintln!("condition number: {:.3e}", solution.condition);
            emit(&out, &csv)?;
        }
        OracleCommand::RwHitting { p, j, m } => {
            println!("{}", oracles::rw_hitting_time(p, j, m)?);
        }
        OracleCommand::ActiveLimit { measure } => {
            let measure = measure.load()?;
            let limit = oracles::ancestral_active_prob_limit(&measure);
            println!(
                "{}",
                json!({"active_prob": limit.active_prob, "degenerate": limit.degenerate})
            );
        }
        OracleCommand::ActiveProb { c, lambda, t } => {
            println!("{}", oracles::single_bank_active_prob(c, lambda, t));
        }
        OracleCommand::Renewal {
            measure,
            times,
            step,
            out,
        } => {
            let measure = measure.load()?;
            let grid = parse_f64_list(&times)?;
            let solution = oracles::renewal_active_prob(&measure, &grid, step)?;
            if !solution.converged {
                eprintln!(
                    "warning: step-halving delta {:.3e} above 1e-4",
                    solution.richardson_delta
                );
            }
            let mut csv = String::from("t,active_prob\n");
            for (t, p) in solution.times.iter().zip(&solution.values) {
                csv.push_str(&format!("{t},{p}\n"));
            }
            emit(&out, &csv)?;
        }
        OracleCommand::Ode { measure, p0, q0, t } => {
            let measure = measure.load()?;
            let atom_count = measure.atoms().map(|a| a.len()).unwrap_or(0);
            let q0 = match q0 {
                Some(text) => parse_f64_list(&text)?,
                None => vec![0.0; atom_count],
            };
            let (p, q) = oracles::ode_ancestral_distribution(&measure, p0, &q0, t)?;
            println!("{}", json!({"p": p, "q": q}));
        }
        OracleCommand::FixationWeight { measure, x, y } => {
            let measure = measure.load()?;
            let y = parse_f64_list(&y)?;
            println!("{}", oracles::fixation_weight(x, &y, &measure)?);
        }
        OracleCommand::PureDeath { measure, n } => {
            let measure = measure.load()?;
            println!("{}", pure_death_extinction_mean(n, &measure)?);
        }
        OracleCommand::ExpectedA { n, c } => {
            println!("{}", expected_a_exact(n, c));
        }
        OracleCommand::Threshold {
            c,
            lambda_min,
            lambda_max,
            alpha,
            eps,
        } => {
            println!(
                "{}",
                decelerated_threshold(c, lambda_min, lambda_max, alpha, eps)?
            );
        }
        OracleCommand::ProbeF { measure, grid, out } => {
            let measure = measure.load()?;
            let grid = parse_f64_list(&grid)?;
            let rows = oracles::probe_f_monotonicity(&measure, &grid)?;
            let mut csv = String::from("lambda,f\n");
            for row in rows {
                csv.push_str(&format!("{},{}\n", row.x, row.value));
            }
            emit(&out, &csv)?;
        }
        OracleCommand::ProbePair {
            measure,
            lambda_prime,
            grid,
            out,
        } => {
            let measure = measure.load()?;
            let grid = parse_f64_list(&grid)?;
            let rows = oracles::probe_pair_monotonicity(&measure, lambda_prime, &grid)?;
            let mut csv = String::from("lambda,f_pair\n");
            for row in rows {
                csv.push_str(&format!("{},{}\n", row.x, row.value));
            }
            emit(&out, &csv)?;
        }
        OracleCommand::ProbePt {
            measure,
            other,
            times,
            step,
            out,
        } => {
            let measure = measure.load()?;
            let other = RateMeasure::from_json(&other)?;
            let grid = parse_f64_list(&times)?;
            let rows = oracles::probe_pt_dominance(&measure, &other, &grid, step)?;
            let mut csv = String::from("t,p_mu,p_other\n");
            for (t, a, b) in rows {
                csv.push_str(&format!("{t},{a},{b}\n"));
            }
            emit(&out, &csv)?;
        }
    }
    Ok(())
}
