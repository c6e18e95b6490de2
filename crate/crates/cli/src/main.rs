use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use serde_json::Value;

use ivpcover::problem::{Mode, ProblemSpec};
use ivpcover_cli::{cover_json, run, stats_json, svg, RunError, RunOptions, RunOutput};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

/// Validated end covers for polynomial ODE initial value problems.
#[derive(Debug, Parser)]
#[command(name = "solve", version)]
struct Args {
    /// Problem file, or a corpus name eg1..eg8.
    #[arg(long)]
    problem: String,
    /// endenc | endcover | boundary; defaults to the problem file.
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Comma-separated horizons, each solved independently.
    #[arg(long, value_delimiter = ',')]
    times: Option<Vec<f64>>,
    /// Taylor order k.
    #[arg(long)]
    order: Option<usize>,
    /// Cover JSON output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Stats JSON output.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Oracle samples for the containment check; 0 disables it.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    check_bounds: Switch,
    /// Stage table CSV (endenc mode).
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn write(path: &PathBuf, text: &str) -> Result<(), RunError> {
    std::fs::write(path, text).map_err(|e| RunError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn one_or_many(vals: Vec<Value>) -> Value {
    if vals.len() == 1 {
        vals.into_iter().next().unwrap()
    } else {
        Value::Array(vals)
    }
}

fn main_inner(args: Args) -> Result<(), RunError> {
    let spec = ProblemSpec::load(&args.problem)?;
    let mut opts = RunOptions::from_spec(&spec);
    if let Some(m) = args.mode {
        opts.mode = m;
    }
    if let Some(e) = args.eps {
        opts.eps = e;
    }
    opts.order = args.order.or(opts.order);
    opts.samples = args.samples.unwrap_or(opts.samples);
    opts.seed = args.seed.unwrap_or(opts.seed);
    opts.workers = args.workers;
    opts.check_bounds = matches!(args.check_bounds, Switch::On);
    let horizons = match (&args.times, args.horizon) {
        (Some(ts), _) => ts.clone(),
        (None, Some(h)) => vec![h],
        (None, None) => vec![spec.horizon],
    };
    let mut outs: Vec<RunOutput> = Vec::new();
    for h in horizons {
        opts.horizon = h;
        let out = run(&spec, &opts)?;
        let s = &out.cover.stats;
        println!(
            "{} H={} eps={} kind={:?} boxes={} end_enc_calls={} time={:.3}s",
            spec.name,
            h,
            opts.eps,
            out.cover.kind,
            out.cover.boxes.len(),
            s.end_enc_calls,
            s.wall_time
        );
        if let Some(note) = &out.cover.note {
            println!("  note: {note}");
        }
        if let Some(c) = &out.containment {
            println!("  oracle: {} hits, {} misses", c.hits, c.misses);
        }
        if let Some(b) = &out.bounds {
            for c in &b.checks {
                println!(
                    "  bound {:<16} {} observed {} <= {}",
                    c.name,
                    if c.pass { "ok  " } else { "FAIL" },
                    c.observed,
                    c.bound
                );
            }
        }
        outs.push(out);
    }
    if let Some(p) = &args.out {
        let v = one_or_many(outs.iter().map(cover_json).collect());
        write(p, &serde_json::to_string_pretty(&v).unwrap())?;
    }
    if let Some(p) = &args.stats {
        let v = one_or_many(outs.iter().map(stats_json).collect());
        write(p, &serde_json::to_string_pretty(&v).unwrap())?;
    }
    if let Some(p) = &args.svg {
        let covers: Vec<_> = outs.iter().map(|o| &o.cover).collect();
        write(p, &svg(&covers))?;
    }
    if let Some(p) = &args.csv {
        let text: String = outs.iter().filter_map(|o| o.csv.clone()).collect();
        write(p, &text)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ENDCOVER_LOG", "error")).init();
    match main_inner(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
