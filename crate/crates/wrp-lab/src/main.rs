//! Command-line runner: `wrp-lab run <scenario>` executes a builtin or a
//! JSON scenario file and writes a deterministic report; `wrp-lab list`
//! prints the builtin catalog. Exit codes: 0 all checks passed, 1 a check
//! failed (the report is still written), 2 configuration or IO trouble.

use std::process::ExitCode;

use wrp_lab::scenario::{builtin_config, catalog_text, run, Overrides, ScenarioConfig};

const USAGE: &str = "usage:
  wrp-lab list
  wrp-lab run <builtin-name | scenario.json> [--seed N] [--out PATH] [--tolerance X]";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match dispatch(&args) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(args: &[String]) -> Result<ExitCode, String> {
    match args.first().map(String::as_str) {
        Some("list") => {
            print!("{}", catalog_text());
            Ok(ExitCode::SUCCESS)
        }
        Some("run") => run_command(&args[1..]),
        _ => Err(USAGE.to_string()),
    }
}

fn run_command(args: &[String]) -> Result<ExitCode, String> {
    let mut target: Option<&str> = None;
    let mut overrides = Overrides::default();
    let mut out_path: Option<String> = None;

    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        match arg.as_str() {
            "--seed" => {
                let value = iter.next().ok_or("--seed needs a value")?;
                overrides.seed = Some(value.parse().map_err(|_| "--seed needs an integer")?);
            }
            "--tolerance" => {
                let value = iter.next().ok_or("--tolerance needs a value")?;
                overrides.tolerance =
                    Some(value.parse().map_err(|_| "--tolerance needs a number")?);
            }
            "--out" => {
                out_path = Some(iter.next().ok_or("--out needs a path")?.clone());
            }
            other if target.is_none() && !other.starts_with('-') => target = Some(other),
            other => return Err(format!("unexpected argument '{other}'\n{USAGE}")),
        }
    }
    let target = target.ok_or(USAGE)?;

    let (label, config) = match builtin_config(target) {
        Some(config) => (target.to_string(), config),
        None => {
            let text = std::fs::read_to_string(target)
                .map_err(|e| format!("cannot read scenario '{target}': {e}"))?;
            let config = ScenarioConfig::from_json(&text)
                .map_err(|e| format!("cannot parse scenario '{target}': {e}"))?;
            let label = std::path::Path::new(target)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| target.to_string());
            (label, config)
        }
    };

    let destination = out_path.or_else(|| config.output().map(String::from));
    let outcome = run(&label, &config, &overrides).map_err(|e| e.to_string())?;

    match &destination {
        Some(path) => {
            std::fs::write(path, &outcome.report)
                .map_err(|e| format!("cannot write report to '{path}': {e}"))?;
            if let Some(csv) = &outcome.csv {
                let csv_path = format!("{path}.csv");
                std::fs::write(&csv_path, csv)
                    .map_err(|e| format!("cannot write csv to '{csv_path}': {e}"))?;
            }
        }
        None => print!("{}", outcome.report),
    }

    Ok(ExitCode::from(outcome.exit_code as u8))
}
