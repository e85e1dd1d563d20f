//! Command-line front end.
//!
//! Subcommands:
//!   sweep      — T(epsilon; n) scaling sweep over a size list, CSV out
//!   run        — single configured run, CSV out
//!   lowerbound — worst-case instance demonstration on lazy cycles
//!   audit      — invariant battery; nonzero exit on any failure
//!   spectral   — spectral report for the configured graph
//!
//! Each subcommand takes `--config <file>` (flat key=value lines) plus
//! `key=value` overrides; `--out <path>` redirects CSV/report output.

use ddanet::harness::{
    audit_suite, lower_bound_demo, measure_t_epsilon, scaling_sweep, spectral_report,
    ExperimentConfig, CSV_HEADER,
};
use std::process::ExitCode;

struct Cli {
    command: String,
    config: ExperimentConfig,
    out: Option<String>,
    n_list: Vec<usize>,
}

const USAGE: &str = "usage: ddanet <sweep|run|lowerbound|audit|spectral> \
[--config FILE] [--out FILE] [--sizes n1,n2,...] [--full-scale] [key=value ...]";

fn parse_cli(args: &[String]) -> Result<Cli, String> {
    let command = args.first().ok_or(USAGE)?.clone();
    if !["sweep", "run", "lowerbound", "audit", "spectral"].contains(&command.as_str()) {
        return Err(format!("unknown subcommand {command:?}\n{USAGE}"));
    }
    let mut config = ExperimentConfig::default();
    let mut out = None;
    let mut n_list = Vec::new();
    let mut i = 1;
    while i < args.len() {
        match args[i].as_str() {
            "--config" => {
                i += 1;
                let path = args.get(i).ok_or("--config needs a path")?;
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("cannot read {path}: {e}"))?;
                config = ExperimentConfig::parse(&text).map_err(|e| e.to_string())?;
            }
            "--out" => {
                i += 1;
                out = Some(args.get(i).ok_or("--out needs a path")?.clone());
            }
            "--sizes" => {
                i += 1;
                let list = args.get(i).ok_or("--sizes needs a comma list")?;
                n_list = list
                    .split(',')
                    .map(|s| s.trim().parse().map_err(|_| format!("bad size {s:?}")))
                    .collect::<Result<_, _>>()?;
            }
            "--full-scale" => {
                // Full-scale grid from the original experiments; slow.
                n_list = vec![100, 225, 400, 625, 900];
                config.trials = 20;
            }
            other => {
                let (key, value) = other
                    .split_once('=')
                    .ok_or_else(|| format!("unexpected argument {other:?}\n{USAGE}"))?;
                config.set(key, value).map_err(|e| e.to_string())?;
            }
        }
        i += 1;
    }
    Ok(Cli {
        command,
        config,
        out,
        n_list,
    })
}

fn default_sizes(family: &str) -> Vec<usize> {
    match family {
        "grid" | "grid-toroidal" => vec![16, 36, 64, 144],
        "expander" => vec![16, 32, 64, 128],
        _ => vec![8, 16, 32, 64],
    }
}

fn emit(out: &Option<String>, text: &str) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("cannot write {path}: {e}")),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command.as_str() {
        "sweep" => {
            let sizes = if cli.n_list.is_empty() {
                default_sizes(&cli.config.family)
            } else {
                cli.n_list.clone()
            };
            let result = scaling_sweep(&cli.config, &sizes).map_err(|e| e.to_string())?;
            let mut text = result.to_csv();
            text.push_str(&format!(
                "# slope={} stderr={}\n",
                result.slope, result.slope_stderr
            ));
            emit(&cli.out, &text)?;
            Ok(ExitCode::SUCCESS)
        }
        "run" => {
            let mut text = String::from(CSV_HEADER);
            text.push('\n');
            for trial in 0..cli.config.trials {
                let (row, _) = measure_t_epsilon(&cli.config, cli.config.n, trial)
                    .map_err(|e| e.to_string())?;
                text.push_str(&row.csv_line());
                text.push('\n');
            }
            emit(&cli.out, &text)?;
            Ok(ExitCode::SUCCESS)
        }
        "lowerbound" => {
            let sizes = if cli.n_list.is_empty() {
                vec![8, 16, 32]
            } else {
                cli.n_list.clone()
            };
            let (rows, slope) =
                lower_bound_demo(&sizes, cli.config.hard_c, cli.config.t_max)
                    .map_err(|e| e.to_string())?;
            let mut text = String::from("n,sigma2,inverse_gap,t_star,t_star_predicted\n");
            for r in &rows {
                text.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.n,
                    r.sigma2,
                    1.0 / (1.0 - r.sigma2),
                    r.t_star,
                    r.t_star_predicted
                ));
            }
            text.push_str(&format!("# slope of t_star vs 1/(1-sigma2) = {slope}\n"));
            emit(&cli.out, &text)?;
            Ok(ExitCode::SUCCESS)
        }
        "audit" => {
            let report = audit_suite(cli.config.effective_seed()).map_err(|e| e.to_string())?;
            emit(&cli.out, &report.render())?;
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        "spectral" => {
            let report = spectral_report(&cli.config).map_err(|e| e.to_string())?;
            emit(&cli.out, &report)?;
            Ok(ExitCode::SUCCESS)
        }
        _ => unreachable!("validated in parse_cli"),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match parse_cli(&args).and_then(run) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
