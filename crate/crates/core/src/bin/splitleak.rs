use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use splitleak::harness::report::{tradeoff_csv, write_file, write_run};
use splitleak::harness::{
    generate_synthetic, generate_toy_1d, sweep, train_run, write_csv, ExperimentConfig, MechanismKind, SyntheticSpec,
};
use splitleak::solver::SolverSettings;
use splitleak::{Error, Result};

#[derive(Parser)]
#[command(name = "splitleak", version, about = "Split-learning label leakage simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run and write run.csv and summary.csv
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep a mechanism's hyperparameter and write tradeoff.csv
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mechanism: String,
        /// Comma-separated hyperparameter values (t for iso, s for marvell)
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a dataset as `label,f1,...` CSV
    GenData {
        #[command(subcommand)]
        kind: GenKind,
    },
}

#[derive(Subcommand)]
enum GenKind {
    Synthetic {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        d_in: usize,
        #[arg(long, default_value_t = 0.1)]
        pos_frac: f64,
        #[arg(long, default_value_t = 2.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        noise_scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Toy1d {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.4}"))
}

fn run(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    let record = train_run(&cfg)?;
    write_run(&record, &dir)?;
    let s = &record.summary;
    println!(
        "{} test_auc={} test_loss={:.4} q95 norm_cut={} cos_cut={} norm_first={} cos_first={}",
        record.mechanism.name(),
        fmt_opt(record.test_auc),
        record.test_loss,
        fmt_opt(s.norm_cut),
        fmt_opt(s.cos_cut),
        fmt_opt(s.norm_first),
        fmt_opt(s.cos_first)
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn run_sweep(config: &Path, mechanism: &str, grid: &[f64], out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::from_file(config)?;
    let kind: MechanismKind = mechanism.parse()?;
    let solver = match cfg.mechanism {
        splitleak::protection::MechanismConfig::Marvell { solver, .. } => solver,
        _ => SolverSettings::default(),
    };
    let mechs = kind.grid(grid, solver);
    if mechs.is_empty() {
        return Err(Error::Config(format!("mechanism `{mechanism}` needs a nonempty --grid")));
    }
    for m in &mechs {
        m.validate().map_err(|e| Error::Config(e.to_string()))?;
    }
    let results = sweep(&cfg, &mechs)?;
    for (point, record) in &results {
        if let Some(r) = record {
            let sub = match point.hyperparameter {
                Some(h) => format!("{}_{h}", point.mechanism),
                None => point.mechanism.to_string(),
            };
            write_run(r, &out.join(sub))?;
        }
    }
    let points: Vec<_> = results.into_iter().map(|(p, _)| p).collect();
    let csv = tradeoff_csv(&points);
    write_file(&out.join("tradeoff.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn gen_data(kind: GenKind) -> Result<()> {
    let (ds, out) = match kind {
        GenKind::Synthetic {
            n,
            d_in,
            pos_frac,
            separation,
            noise_scale,
            seed,
            out,
        } => (
            generate_synthetic(&SyntheticSpec {
                n,
                d_in,
                pos_frac,
                separation,
                noise_scale,
                seed,
            })?,
            out,
        ),
        GenKind::Toy1d { n, seed, out } => (generate_toy_1d(n, seed)?, out),
    };
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    write_csv(&ds, &out)?;
    println!("wrote {} rows to {}", ds.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run { config, seed, out } => run(&config, seed, out),
        Command::Sweep {
            config,
            mechanism,
            grid,
            out,
        } => run_sweep(&config, &mechanism, &grid, &out),
        Command::GenData { kind } => gen_data(kind),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
