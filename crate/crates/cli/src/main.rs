//! Command-line entry point.
//!
//! Usage:
//!   kloosterlab run <config.toml> [--quick] [--out DIR]
//!   kloosterlab export --format csv|jsonl --input FILE [--out DIR]
//!
//! Exit status: 0 on success, 1 when a hard invariant (an exact identity or
//! equality audit) fails, 2 on configuration or usage errors. Bound-ratio
//! calibrations never fail a run; they are reported in the artifacts.

use kloosterlab::{config, experiments, writer};
use std::path::PathBuf;
use std::process::ExitCode;

fn usage() -> ExitCode {
    eprintln!("usage: kloosterlab run <config.toml> [--quick] [--out DIR]");
    eprintln!("       kloosterlab export --format csv|jsonl --input FILE [--out DIR]");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match args.first().map(|s| s.as_str()) {
        Some("run") => cmd_run(&args[1..]),
        Some("export") => cmd_export(&args[1..]),
        _ => usage(),
    }
}

fn cmd_run(args: &[String]) -> ExitCode {
    let mut config_path: Option<PathBuf> = None;
    let mut quick = false;
    let mut out_dir = PathBuf::from("out");
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--quick" => quick = true,
            "--out" => match it.next() {
                Some(dir) => out_dir = PathBuf::from(dir),
                None => return usage(),
            },
            other if !other.starts_with('-') && config_path.is_none() => {
                config_path = Some(PathBuf::from(other));
            }
            other => {
                eprintln!("unknown argument: {other}");
                return usage();
            }
        }
    }
    let Some(config_path) = config_path else {
        return usage();
    };
    let cfg = match config::load_config(&config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let run = match experiments::run_experiment(&cfg, quick) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("run error: {e}");
            return ExitCode::from(2);
        }
    };
    match writer::write_artifacts(&out_dir, &run) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("write error: {e}");
            return ExitCode::from(2);
        }
    }
    for (k, v) in &run.summary {
        println!("{k} = {v}");
    }
    if run.hard_failures.is_empty() {
        println!("{}: all hard invariants hold", run.name);
        ExitCode::SUCCESS
    } else {
        for f in &run.hard_failures {
            eprintln!("FAIL {f}");
        }
        eprintln!("{}: {} hard invariant failure(s)", run.name, run.hard_failures.len());
        ExitCode::from(1)
    }
}

fn cmd_export(args: &[String]) -> ExitCode {
    let mut format: Option<String> = None;
    let mut input: Option<PathBuf> = None;
    let mut out_dir = PathBuf::from("out");
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--format" => format = it.next().cloned(),
            "--input" => input = it.next().map(PathBuf::from),
            "--out" => match it.next() {
                Some(dir) => out_dir = PathBuf::from(dir),
                None => return usage(),
            },
            other => {
                eprintln!("unknown argument: {other}");
                return usage();
            }
        }
    }
    let (Some(format), Some(input)) = (format, input) else {
        return usage();
    };
    match writer::reexport(&input, &format, &out_dir) {
        Ok(path) => {
            println!("wrote {}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("export error: {e}");
            ExitCode::from(2)
        }
    }
}
