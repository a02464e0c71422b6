use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use distfreq::netsim::write_stream;
use distfreq::rng::purpose;
use distfreq::SeededRng;
use distfreq_harness::generate::generate_stream;
use distfreq_harness::output::{output_dir, read_csv, stem, write_report, OUT_ENV};
use distfreq_harness::{run_grid, Aggregate, ExperimentConfig, Generator, HarnessError, ProtocolId};

#[derive(Parser)]
#[command(name = "distfreq", version, about = "Distributed frequency-statistics experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated stream as `time site item` lines.
    Gen(GenArgs),
    /// Run trials over a grid of k and eps; writes CSV and JSON per point.
    Run(RunArgs),
    /// Recompute the aggregate of a trials CSV.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "zipf:1.1")]
    generator: Generator,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 256)]
    n: usize,
    #[arg(long, default_value_t = 10_000)]
    m: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    protocol: ProtocolId,
    #[arg(long, value_delimiter = ',', default_value = "4")]
    k: Vec<usize>,
    #[arg(long, default_value_t = 256)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    p: u32,
    #[arg(long, value_delimiter = ',', default_value = "0.3")]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    m: u64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "zipf:1.1")]
    generator: Generator,
    #[arg(long, default_value_t = 20)]
    checkpoints: usize,
    /// Reuse one input across trials.
    #[arg(long)]
    fixed_input: bool,
    /// Output directory.
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
}

fn gen(a: GenArgs) -> Result<(), HarnessError> {
    let rng = SeededRng::new(a.seed, 0).derive(&[purpose::GENERATOR]);
    let events = generate_stream(a.generator, a.k, a.n, a.m, &rng)?;
    match a.out {
        Some(path) => write_stream(BufWriter::new(File::create(path)?), &events)?,
        None => write_stream(io::stdout().lock(), &events)?,
    }
    Ok(())
}

fn run(a: RunArgs) -> Result<bool, HarnessError> {
    let base = ExperimentConfig {
        protocol: a.protocol,
        k: a.k[0],
        n: a.n,
        p: a.p,
        eps: a.eps[0],
        m: a.m,
        generator: a.generator,
        trials: a.trials,
        seed: a.seed,
        checkpoints: a.checkpoints,
        fixed_input: a.fixed_input,
    };
    let dir = output_dir(a.out.as_deref());
    let (reports, grid) = run_grid(&base, &a.k, &a.eps)?;
    let mut ok = true;
    for r in &reports {
        let (csv, _) = write_report(r, &dir, &stem(&r.config))?;
        let g = &r.aggregate;
        println!(
            "{} k={} eps={}: coverage {:.3}, mean bits {:.0}, mean rounds {:.1}, failures {} -> {}",
            r.config.protocol,
            r.config.k,
            r.config.eps,
            g.coverage,
            g.mean_bits,
            g.mean_rounds,
            r.failures.len(),
            csv.display()
        );
        for f in &r.failures {
            eprintln!("trial {} failed: {}", f.trial, f.message);
        }
        ok &= r.passed();
    }
    if grid.points.len() > 1 {
        let path = dir.join(format!("{}_grid.json", a.protocol));
        std::fs::write(&path, serde_json::to_string_pretty(&grid)? + "\n")?;
        println!(
            "k exponent {:?}, 1/eps exponent {:?} -> {}",
            grid.k_exponent,
            grid.inv_eps_exponent,
            path.display()
        );
    }
    Ok(ok)
}

/// The reader went away, e.g. `distfreq gen | head`.
fn closed_pipe(e: &HarnessError) -> bool {
    let kind = match e {
        HarnessError::Io(e) => Some(e.kind()),
        HarnessError::Core(distfreq::Error::Io { kind, .. }) => Some(*kind),
        HarnessError::Json(e) => e.io_error_kind(),
        _ => None,
    };
    kind == Some(io::ErrorKind::BrokenPipe)
}

fn main() -> ExitCode {
    let result = match Cli::parse().cmd {
        Command::Gen(a) => gen(a).map(|_| true),
        Command::Run(a) => run(a),
        Command::Report { input } => File::open(input)
            .map_err(HarnessError::from)
            .and_then(read_csv)
            .and_then(|rows| {
                let mut out = io::stdout().lock();
                serde_json::to_writer_pretty(&mut out, &Aggregate::from_rows(&rows))?;
                writeln!(out)?;
                Ok(true)
            }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Err(e) if closed_pipe(&e) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
