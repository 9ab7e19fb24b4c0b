use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use fdpcd::checks::quick_battery;
use fdpcd::config::linear_to_db;
use fdpcd::engine::{run_simulation_timed, si_exponent};
use fdpcd::experiment::{run_sweep, GroupSummary, SweepPoint, SweepSpec};
use fdpcd::{load_config, Scheme, SimConfig};

#[derive(Parser)]
#[command(
    name = "fdpcd",
    version,
    about = "Full-duplex mmWave V2V content distribution simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one replication of one scheme.
    Run(RunArgs),
    /// Sweep schemes, OBU counts, thresholds and SI levels with replications.
    Sweep(SweepArgs),
    /// Run the invariant self-test battery.
    Check {
        /// Configuration file (key = value lines).
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "fd-coalition")]
    scheme: Scheme,
    /// Master seed (overrides the configuration).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    obus: Option<usize>,
    #[arg(long)]
    thmin_db: Option<f64>,
    /// SI cancellation level as -log10(beta).
    #[arg(long)]
    si_exp: Option<f64>,
    /// Directory for the run and epoch CSVs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Measure game wall-clock time (CSV output is then not reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated scheme tags.
    #[arg(long, value_delimiter = ',', default_values = ["fd-coalition", "delay-coalition", "non-coop"])]
    scheme: Vec<Scheme>,
    #[arg(long, value_delimiter = ',', default_values = ["6", "8", "10", "12", "14"])]
    obus: Vec<usize>,
    /// Comma-separated SINR thresholds in dB (default: the configuration's).
    #[arg(long, value_delimiter = ',')]
    thmin_db: Vec<f64>,
    /// Comma-separated SI levels as -log10(beta) (default: the configuration's).
    #[arg(long, value_delimiter = ',')]
    si_exp: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    /// Seed of the first replication; replication r uses seed + r.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    timing: bool,
    /// Skip the per-epoch CSVs.
    #[arg(long)]
    no_epoch_csv: bool,
}

fn base_config(path: Option<&PathBuf>) -> Result<SimConfig> {
    match path {
        None => Ok(SimConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let cfg = load_config(&text).with_context(|| format!("parsing {}", p.display()))?;
            cfg.validate().with_context(|| format!("validating {}", p.display()))?;
            Ok(cfg)
        }
    }
}

fn print_groups(groups: &[GroupSummary]) {
    println!(
        "{:<16} {:>4} {:>6} {:>5} {:>5} {:>18} {:>16} {:>16}",
        "scheme", "N", "th_dB", "si", "runs", "possessed/OBU", "fairness", "switches"
    );
    for g in groups {
        let fair = g
            .mean_fairness
            .map_or("-".to_string(), |f| format!("{:.4}±{:.4}", f.mean, f.stderr));
        println!(
            "{:<16} {:>4} {:>6} {:>5} {:>5} {:>18} {:>16} {:>16}",
            g.scheme.as_str(),
            g.point.n_obus,
            g.point.th_min_db,
            g.point.si_exp,
            g.runs,
            format!(
                "{:.4}±{:.4}",
                g.final_mean_possessed.mean, g.final_mean_possessed.stderr
            ),
            fair,
            format!("{:.1}±{:.1}", g.total_switches.mean, g.total_switches.stderr),
        );
    }
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = base_config(args.config.as_ref())?;
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    let spec = SweepSpec {
        schemes: vec![args.scheme],
        obus: vec![args.obus.unwrap_or(cfg.n_obus)],
        sinr_threshold_db: vec![args.thmin_db.unwrap_or_else(|| linear_to_db(cfg.sinr_threshold))],
        si_exp: vec![args.si_exp.unwrap_or_else(|| si_exponent(cfg.si_cancellation))],
        replications: 1,
        base_seed: cfg.master_seed,
        jobs: 1,
        timing: args.timing,
        epoch_csv: true,
        ..SweepSpec::default()
    };
    let summary = match args.out {
        Some(out) => {
            let spec = SweepSpec { out_dir: out, ..spec };
            let res = run_sweep(&spec, &cfg)?;
            for f in &res.files {
                eprintln!("wrote {}", f.display());
            }
            res.runs[0].2[0].clone()
        }
        None => {
            let point = SweepPoint {
                n_obus: spec.obus[0],
                th_min_db: spec.sinr_threshold_db[0],
                si_exp: spec.si_exp[0],
            };
            run_simulation_timed(&point.apply(&cfg), args.scheme, 0, args.timing)?.summary
        }
    };
    let s = &summary;
    println!("scheme                  {}", s.scheme);
    println!("master_seed             {}", s.master_seed);
    println!("n_obus                  {}", s.n_obus);
    println!("th_min_db               {}", s.th_min_db);
    println!("si_exp                  {}", s.si_exp);
    println!("initial_mean_possessed  {:.4}", s.initial_mean_possessed);
    println!("final_mean_possessed    {:.4}", s.final_mean_possessed);
    println!(
        "mean_fairness           {}",
        s.mean_fairness.map_or("-".to_string(), |f| format!("{f:.4}"))
    );
    println!("total_switches          {}", s.total_switches);
    println!("total_game_wallclock_us {:.1}", s.total_game_wallclock_us);
    println!("total_deliveries        {}", s.total_deliveries);
    Ok(())
}

fn or_else(values: Vec<f64>, fallback: f64) -> Vec<f64> {
    if values.is_empty() {
        vec![fallback]
    } else {
        values
    }
}

fn sweep(args: SweepArgs) -> Result<()> {
    let cfg = base_config(args.config.as_ref())?;
    let spec = SweepSpec {
        schemes: args.scheme,
        obus: args.obus,
        sinr_threshold_db: or_else(args.thmin_db, linear_to_db(cfg.sinr_threshold)),
        si_exp: or_else(args.si_exp, si_exponent(cfg.si_cancellation)),
        replications: args.reps,
        base_seed: args.seed,
        out_dir: args.out,
        jobs: args.jobs,
        timing: args.timing,
        epoch_csv: !args.no_epoch_csv,
    };
    let res = run_sweep(&spec, &cfg)?;
    print_groups(&res.groups);
    eprintln!("wrote {} files to {}", res.files.len(), spec.out_dir.display());
    Ok(())
}

fn check(config: Option<PathBuf>) -> Result<bool> {
    let cfg = base_config(config.as_ref())?;
    let mut ok = true;
    for c in quick_battery(&cfg) {
        println!("{c}");
        ok &= c.passed;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a).map(|_| true),
        Command::Sweep(a) => sweep(a).map(|_| true),
        Command::Check { config } => check(config),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
