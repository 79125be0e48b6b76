use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rpmsim::config::AqmMode;
use rpmsim::experiments::{
    run_fairness, run_fct, run_reaction, write_fairness_csv, write_fct_csv, write_reaction_csv,
    FCT_SIZES,
};
use rpmsim::stability::{stability_report, StabilityReport};
use rpmsim::{run_scenario, ScenarioConfig};

#[derive(Parser)]
#[command(name = "rpmsim", about = "Reverse-path congestion marking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Fwd,
    Rpm,
    RpmPort,
}

impl From<ModeArg> for AqmMode {
    fn from(m: ModeArg) -> AqmMode {
        match m {
            ModeArg::Fwd => AqmMode::Fwd,
            ModeArg::Rpm => AqmMode::RpmPerFlow,
            ModeArg::RpmPort => AqmMode::RpmPerPort,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config file and export the event trace as CSV.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stability report for given capacity and delays (CSV rows).
    Stability {
        /// Bottleneck capacity, packets per second.
        #[arg(long)]
        c: f64,
        /// Full round-trip delay, seconds.
        #[arg(long)]
        d: f64,
        /// Short round-trip delay, seconds.
        #[arg(long)]
        ds: f64,
        /// Sweep a parameter instead of a single row; only "ds" is supported
        /// (samples d_s over [0.1 d, 0.9 d]).
        #[arg(long)]
        sweep: Option<String>,
        /// Number of sweep samples.
        #[arg(long, default_value_t = 17)]
        points: usize,
        /// s = s_factor * s_star for the eta recipe; values in (0, 1) stay
        /// inside the positive-eta band (s_star, 0).
        #[arg(long, default_value_t = 0.5)]
        s_factor: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fairness / FCT / reaction-time studies on the dumbbell testbed.
    Experiment {
        #[arg(value_parser = ["fairness", "fct", "reaction"])]
        which: String,
        #[arg(long, value_enum, default_value_t = ModeArg::Rpm)]
        mode: ModeArg,
        /// Capacity scale factor applied to the 100/10 Gbps reference rates.
        #[arg(long, default_value_t = 0.001)]
        scale: f64,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        /// Fairness experiment row (1..=3).
        #[arg(long, default_value_t = 2)]
        exp: u8,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn open_out(path: &PathBuf) -> Result<BufWriter<File>, String> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| format!("cannot create {}: {e}", path.display()))
}

fn run(cli: Cli) -> Result<(), (u8, String)> {
    match cli.command {
        Command::Simulate { config, out } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| (1, format!("cannot read {}: {e}", config.display())))?;
            let cfg = ScenarioConfig::from_toml_str(&text).map_err(|e| (1, e.to_string()))?;
            let trace = run_scenario(&cfg).map_err(|e| (1, e.to_string()))?;
            let mut w = open_out(&out).map_err(|e| (2, e))?;
            trace.write_csv(&mut w).map_err(|e| (2, e.to_string()))?;
        }
        Command::Stability {
            c,
            d,
            ds,
            sweep,
            points,
            s_factor,
            out,
        } => {
            let mut rows: Vec<StabilityReport> = Vec::new();
            match sweep.as_deref() {
                None => {
                    rows.push(stability_report(c, d, ds, s_factor).map_err(|e| (2, e.to_string()))?);
                }
                Some("ds") => {
                    if points < 2 {
                        return Err((1, "sweep needs at least 2 points".into()));
                    }
                    for k in 0..points {
                        let frac = 0.1 + 0.8 * k as f64 / (points - 1) as f64;
                        let row = stability_report(c, d, frac * d, s_factor)
                            .map_err(|e| (2, e.to_string()))?;
                        rows.push(row);
                    }
                }
                Some(other) => {
                    return Err((1, format!("unsupported sweep parameter {other:?}")));
                }
            }
            let mut w = open_out(&out).map_err(|e| (2, e))?;
            writeln!(w, "{}", StabilityReport::CSV_HEADER).map_err(|e| (2, e.to_string()))?;
            for r in rows {
                writeln!(w, "{}", r.csv_row()).map_err(|e| (2, e.to_string()))?;
            }
        }
        Command::Experiment {
            which,
            mode,
            scale,
            reps,
            exp,
            seed,
            out,
        } => {
            if scale <= 0.0 {
                return Err((1, "scale must be positive".into()));
            }
            if reps < 1 {
                return Err((1, "reps must be >= 1".into()));
            }
            let mode: AqmMode = mode.into();
            let mut w = open_out(&out).map_err(|e| (2, e))?;
            match which.as_str() {
                "fairness" => {
                    if !(1..=3).contains(&exp) {
                        return Err((1, "fairness --exp must be 1..=3".into()));
                    }
                    let res = run_fairness(exp, mode, scale, reps, seed)
                        .map_err(|e| (2, e.to_string()))?;
                    write_fairness_csv(&mut w, &res).map_err(|e| (2, e.to_string()))?;
                }
                "fct" => {
                    let rows = run_fct(mode, scale, reps, seed, &FCT_SIZES)
                        .map_err(|e| (2, e.to_string()))?;
                    write_fct_csv(&mut w, &rows).map_err(|e| (2, e.to_string()))?;
                }
                "reaction" => {
                    let res = run_reaction(mode, scale, seed).map_err(|e| (2, e.to_string()))?;
                    write_reaction_csv(&mut w, &res).map_err(|e| (2, e.to_string()))?;
                }
                _ => unreachable!("clap validates the experiment name"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // usage/config problems are exit code 1
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS // --help / --version
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
