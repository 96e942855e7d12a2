use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use pcurl::config::{load_config, Kind};
use pcurl::experiment::{csv_schemas, run_experiment};

const KINDS: [&str; 8] = [
    "evolve",
    "stationary",
    "decay",
    "plimit",
    "penalty-sweep",
    "cdep",
    "verify",
    "oracle-compare",
];

/// Runs one p-curl experiment from a config file.
///
/// Exit status: 0 when every verdict passes, 1 when a verdict fails,
/// 2 on a config error or a failed stage.
#[derive(Parser, Debug)]
#[command(name = "pcurl", version, after_help = csv_schemas())]
struct Cli {
    /// Experiment kind.
    #[arg(value_parser = KINDS)]
    kind: String,
    /// Config file (`[section]` headers, `key = value` lines, `#` comments).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `[output] dir` or `out/<kind>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `[experiment] seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let kind = Kind::parse(&cli.kind).expect("clap restricts the kind");
    let mut cfg = match load_config(&cli.config, kind) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("pcurl: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let base_dir = cli.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let out = cli
        .out
        .or_else(|| cfg.out.as_ref().map(|o| base_dir.join(o)))
        .unwrap_or_else(|| PathBuf::from("out").join(kind.name()));
    match run_experiment(&cfg, &base_dir, &out) {
        Ok(outcome) => {
            for v in &outcome.verdicts {
                println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.stage, v.detail);
            }
            println!("wrote {} files to {}", outcome.artifacts.len(), out.display());
            if outcome.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("pcurl: {e}");
            ExitCode::from(2)
        }
    }
}
