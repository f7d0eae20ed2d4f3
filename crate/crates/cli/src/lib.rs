//! Argument parsing and dispatch for the `drgame` binary.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use drgame::config::parse_config;
use drgame::run::{run, RunOutcome, Subcommand};
use drgame::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Command {
    Validate,
    Simulate,
    Drbsde,
    Value,
    Pde,
    DynkinOracle,
    DppCheck,
    Crosscheck,
    SqrtCheck,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Validate => Subcommand::Validate,
            Command::Simulate => Subcommand::Simulate,
            Command::Drbsde => Subcommand::Drbsde,
            Command::Value => Subcommand::Value,
            Command::Pde => Subcommand::Pde,
            Command::DynkinOracle => Subcommand::DynkinOracle,
            Command::DppCheck => Subcommand::DppCheck,
            Command::Crosscheck => Subcommand::Crosscheck,
            Command::SqrtCheck => Subcommand::SqrtCheck,
        }
    }
}

/// Lattice, Monte Carlo and obstacle-PDE solvers for doubly reflected BSDE games.
///
/// Exit status: 0 success, 1 a check failed, 2 numerical failure, 3 config error.
#[derive(Debug, Parser)]
#[command(name = "drgame", version)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,

    /// Configuration document.
    #[arg(long)]
    pub config: PathBuf,

    /// Output directory (overrides `[output] dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Random seed (overrides `[mc] seed`).
    #[arg(long)]
    pub seed: Option<u64>,

    /// Worker threads. Does not affect results.
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Loads the configuration, applies flag overrides and runs the subcommand.
pub fn execute(cli: &Cli) -> Result<RunOutcome, Error> {
    let text = std::fs::read_to_string(&cli.config).map_err(|e| Error::Config {
        line: None,
        msg: format!("cannot read {}: {e}", cli.config.display()),
    })?;
    let mut cfg = parse_config(&text)?;
    if let Some(dir) = &cli.out {
        cfg.output_dir = dir.to_string_lossy().into_owned();
    }
    if let Some(seed) = cli.seed {
        cfg.mc.seed = seed;
    }
    let sub = Subcommand::from(cli.command);
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("--threads {n}: {e}")))?
            .install(|| run(sub, &cfg)),
        None => run(sub, &cfg),
    }
}

/// Parses `args`, runs, reports on stdout/stderr and returns the exit status:
/// 0 success, 1 a check failed, 2 numerical failure, 3 config or usage error.
pub fn run_from_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            println!("{}: {}", Subcommand::from(cli.command).as_str(), outcome.summary);
            outcome.status as u8
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code() as u8
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use std::path::Path;

    fn write_config(dir: &Path, name: &str, doc: &str) -> String {
        let path = dir.join(name);
        fs::write(&path, doc).unwrap();
        path.to_string_lossy().into_owned()
    }

    fn cli(dir: &Path, sub: &str, cfg: &str, out: &str, extra: &[&str]) -> Cli {
        let out = dir.join(out);
        let mut args = vec!["drgame", sub, "--config", cfg, "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        Cli::try_parse_from(args).unwrap()
    }

    fn status(dir: &Path, sub: &str, cfg: &str, out: &str, extra: &[&str]) -> i32 {
        match execute(&cli(dir, sub, cfg, out, extra)) {
            Ok(o) => o.status,
            Err(e) => panic!("{sub}: {e}"),
        }
    }

    #[test]
    fn validate_every_preset() {
        let tmp = tempfile::tempdir().unwrap();
        for preset in ["linear-quadratic", "uncertain-volatility", "dynkin-flat", "bsb-convex"] {
            let cfg = write_config(tmp.path(), "p.cfg", &format!("[problem]\npreset = {preset}\n"));
            assert_eq!(status(tmp.path(), "validate", &cfg, preset, &[]), 0);
            let csv = fs::read_to_string(tmp.path().join(preset).join("validation.csv")).unwrap();
            assert!(csv.lines().count() > 1);
        }
    }

    #[test]
    fn config_errors_exit_three_with_line() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_config(tmp.path(), "bad.cfg", "[problem]\npreset = dynkin-flat\n[grid]\nn_steps = -1\n");
        let err = execute(&cli(tmp.path(), "value", &cfg, "out", &[])).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        let msg = err.to_string();
        assert!(msg.contains("line 4") && msg.contains("n_steps"), "{msg}");

        let missing = tmp.path().join("nope.cfg");
        assert_eq!(run_from_args(["drgame", "value", "--config", missing.to_str().unwrap()]), 3);
        assert_eq!(run_from_args(["drgame", "frobnicate", "--config", &cfg]), 3);
        assert_eq!(run_from_args(["drgame", "value"]), 3);
    }

    #[test]
    fn cfl_violation_exits_two_and_reports_maximum() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_config(
            tmp.path(),
            "cfl.cfg",
            "[problem]\npreset = dynkin-flat\n[grid]\nn_steps = 10\nn_nodes = 121\n",
        );
        let err = execute(&cli(tmp.path(), "pde", &cfg, "out", &[])).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        // dt = 0.1, dx = 0.1, sigma = 1: max r = 10
        let msg = err.to_string();
        assert!(msg.contains("= 9.99999") && msg.contains("exceeds 1"), "{msg}");
    }

    #[test]
    fn dynkin_oracle_reports_equal_values() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_config(tmp.path(), "d.cfg", "[problem]\npreset = dynkin-flat\n[solver]\ntree_depth = 2\n");
        assert_eq!(status(tmp.path(), "dynkin-oracle", &cfg, "out", &[]), 0);
        let text = fs::read_to_string(tmp.path().join("out/dynkin.csv")).unwrap();
        assert!(text.starts_with("tree,depth,recursion,brute_force,abs_diff\n"));
        for line in text.lines().skip(1) {
            let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            assert!((cells[2] - cells[3]).abs() <= 1e-12);
        }
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_config(
            tmp.path(),
            "mc.cfg",
            "[problem]\npreset = uncertain-volatility\n[grid]\nn_steps = 30\n[mc]\nn_paths = 9000\n[solver]\nmode = lsmc\nu_index = 1\n",
        );
        let mut outputs = Vec::new();
        for threads in ["1", "3", "8"] {
            assert_eq!(status(tmp.path(), "drbsde", &cfg, threads, &["--threads", threads]), 0);
            outputs.push(fs::read(tmp.path().join(threads).join("drbsde.csv")).unwrap());
        }
        assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn seed_flag_overrides_config_and_is_recorded() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_config(
            tmp.path(),
            "s.cfg",
            "[problem]\npreset = dynkin-flat\n[grid]\nn_steps = 8\n[mc]\nn_paths = 5\nseed = 1\n",
        );
        status(tmp.path(), "simulate", &cfg, "a", &[]);
        status(tmp.path(), "simulate", &cfg, "b", &["--seed", "1"]);
        status(tmp.path(), "simulate", &cfg, "c", &["--seed", "2"]);
        let read = |d: &str| fs::read(tmp.path().join(d).join("brownian.csv")).unwrap();
        assert_eq!(read("a"), read("b"));
        assert_ne!(read("a"), read("c"));
        let manifest = fs::read_to_string(tmp.path().join("c/run.txt")).unwrap();
        assert!(manifest.contains("seed = 2\n"));
        assert!(manifest.contains(&format!("dir = {}\n", tmp.path().join("c").display())));
    }

    #[test]
    fn manifest_is_a_valid_config() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_config(
            tmp.path(),
            "v.cfg",
            "[problem]\npreset = bsb-convex\namerican = true\n[grid]\nn_steps = 150\nn_nodes = 31\n",
        );
        assert_eq!(status(tmp.path(), "value", &cfg, "first", &[]), 0);
        let manifest = tmp.path().join("first/run.txt");
        assert_eq!(status(tmp.path(), "value", manifest.to_str().unwrap(), "second", &[]), 0);
        assert_eq!(
            fs::read(tmp.path().join("first/value.csv")).unwrap(),
            fs::read(tmp.path().join("second/value.csv")).unwrap()
        );
    }
}
