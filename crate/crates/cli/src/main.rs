use std::path::PathBuf;
use std::process::ExitCode;

use clap::{value_parser, Arg, ArgMatches, Command};
use dbq_cli::{run, schema_help, RunConfig, Values, SUBCOMMANDS};
use dbq_core::Result;

fn cli() -> Command {
    let global = [
        Arg::new("config")
            .long("config")
            .value_name("PATH")
            .value_parser(value_parser!(PathBuf))
            .global(true)
            .help("sectioned key = value file; omitted keys keep their defaults"),
        Arg::new("seed")
            .long("seed")
            .value_name("U64")
            .value_parser(value_parser!(u64))
            .global(true)
            .help("master seed, overrides [run] seed"),
        Arg::new("out")
            .long("out")
            .value_name("DIR")
            .value_parser(value_parser!(PathBuf))
            .global(true)
            .help("output directory, overrides [run] out"),
        Arg::new("threads")
            .long("threads")
            .value_name("N")
            .value_parser(value_parser!(usize))
            .global(true)
            .help("worker threads, overrides [run] threads; results do not depend on it"),
    ];
    let subs = SUBCOMMANDS
        .iter()
        .map(|(name, about, _)| Command::new(*name).about(*about).after_help(schema_help(name)));
    Command::new("dbq")
        .about("Deep BSDE solvers, quantum-accelerated Monte Carlo and hybrid networks")
        .after_help("Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 numeric failure.")
        .subcommand_required(true)
        .args(global)
        .subcommands(subs)
}

fn configure(name: &str, m: &ArgMatches) -> Result<RunConfig> {
    let mut values = match m.get_one::<PathBuf>("config") {
        Some(p) => Values::load(p)?,
        None => Values::default(),
    };
    if let Some(s) = m.get_one::<u64>("seed") {
        values.set("run", "seed", &s.to_string())?;
    }
    if let Some(o) = m.get_one::<PathBuf>("out") {
        values.set("run", "out", &o.to_string_lossy())?;
    }
    if let Some(t) = m.get_one::<usize>("threads") {
        values.set("run", "threads", &t.to_string())?;
    }
    RunConfig::new(name, &values)
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let outcome = configure(name, sub).and_then(|cfg| {
        if cfg.threads > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build_global()
                .map_err(|e| dbq_core::Error::config(format!("thread pool: {e}")))?;
        }
        run(&cfg)
    });
    match outcome {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
