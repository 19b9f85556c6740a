use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgMatches, Args, Command, FromArgMatches, Parser, Subcommand};
use midlink::protocol::write_trace_csv;
use midlink_cli::commands::{fidelity_summary, fig4, markov_json, markov_summary, simulate_point, PointOverride};
use midlink_cli::sweep::open_output;
use midlink_cli::{apply_overrides, emit, load_config, sweep_rates, CliError, RunConfig, KEYS};

#[derive(Parser)]
#[command(name = "midlink", version, about = "Rates and simulations for midpoint-source entanglement links")]
struct Cli {
    /// Config file of key=value lines.
    #[arg(long, global = true, env = "MIDLINK_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed-form rates over the distance sweep.
    Rates {
        #[command(flatten)]
        settings: Settings,
    },
    /// Simulate the protocol at one distance and print the statistics as JSON.
    Simulate {
        #[command(flatten)]
        settings: Settings,
        /// Per-side success probability; replaces the loss budget.
        #[arg(long)]
        p: Option<f64>,
        /// Cycles per transmission delay; replaces ceil(tau_t/tau_c).
        #[arg(long)]
        n: Option<u64>,
        /// Write the event trace (up to trace_limit events) to this CSV file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Solve the protocol Markov chain and compare with the closed form.
    Markov {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
        /// Print the chain and its stationary vector as JSON instead.
        #[arg(long)]
        json: bool,
    },
    /// Dark-count infidelities at one distance.
    Fidelity {
        #[command(flatten)]
        settings: Settings,
        /// Add a Monte Carlo estimate using cycles, seed and mode.
        #[arg(long)]
        mc: bool,
    },
    /// Rate tables for both loss profiles, one CSV per profile and scheme.
    Fig4 {
        #[command(flatten)]
        settings: Settings,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

/// One optional flag per config key.
#[derive(Debug, Default, Clone)]
struct Settings {
    values: Vec<(&'static str, String)>,
}

fn flag(key: &str) -> String {
    key.replace('_', "-")
}

impl FromArgMatches for Settings {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let mut s = Settings::default();
        s.update_from_arg_matches(m)?;
        Ok(s)
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        for (key, _) in KEYS {
            if let Some(v) = m.get_one::<String>(key) {
                self.values.retain(|(k, _)| k != key);
                self.values.push((key, v.clone()));
            }
        }
        Ok(())
    }
}

impl Args for Settings {
    fn augment_args(mut cmd: Command) -> Command {
        for (key, help) in KEYS {
            let mut arg = clap::Arg::new(*key)
                .long(flag(key))
                .value_name("VALUE")
                .allow_negative_numbers(true)
                .help(*help)
                .help_heading("Settings");
            if *key == "simulate" {
                arg = arg.num_args(0..=1).default_missing_value("true");
            }
            cmd = cmd.arg(arg);
        }
        cmd
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}

fn settle(config: Option<&std::path::Path>, settings: &Settings) -> Result<RunConfig, CliError> {
    let mut c = load_config(config)?;
    apply_overrides(&mut c, settings.values.iter().map(|(k, v)| (*k, v.as_str())))?;
    Ok(c)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = cli.config.as_deref();
    match cli.command {
        Cmd::Rates { settings } => {
            let c = settle(file, &settings)?;
            let reports = sweep_rates(&c, &c.sweep.distances())?;
            emit(&reports, c.format, open_output(c.output.as_deref())?)?;
        }
        Cmd::Simulate { settings, p, n, trace } => {
            let c = settle(file, &settings)?;
            let run = simulate_point(&c, PointOverride { p, n })?;
            let mut out = open_output(c.output.as_deref())?;
            serde_json::to_writer_pretty(&mut out, &run.stats)?;
            writeln!(out)?;
            out.flush()?;
            if let Some(path) = trace {
                write_trace_csv(open_output(Some(&path))?, &run.trace)?;
            }
        }
        Cmd::Markov { n, p, json } => {
            let mut out = std::io::stdout().lock();
            if json {
                serde_json::to_writer_pretty(&mut out, &markov_json(n, p)?)?;
                writeln!(out)?;
            } else {
                let (text, matched) = markov_summary(n, p)?;
                out.write_all(text.as_bytes())?;
                if !matched {
                    eprintln!("warning: numeric and closed-form pi(0,0) disagree");
                }
            }
        }
        Cmd::Fidelity { settings, mc } => {
            let c = settle(file, &settings)?;
            let mut out = open_output(c.output.as_deref())?;
            serde_json::to_writer_pretty(&mut out, &fidelity_summary(&c, mc)?)?;
            writeln!(out)?;
            out.flush()?;
        }
        Cmd::Fig4 { settings, out_dir } => {
            let c = settle(file, &settings)?;
            std::fs::create_dir_all(&out_dir).map_err(|source| CliError::File {
                path: out_dir.clone(),
                source,
            })?;
            for path in fig4(&c, &out_dir)? {
                eprintln!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
