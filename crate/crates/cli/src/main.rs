//! `hystloop`: run, tune and analyze waveform-control experiments.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hystloop_core::export::{read_csv_columns, write_run, write_tune};
use hystloop_core::signals::{dc_component, form_factor_percent, mean_rectified, rms, rmse, Shape};
use hystloop_core::{run_closed_loop, run_open_loop, tune, Error, SignalTrace};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "hystloop", version, about = "Model-free induction waveform control on a hysteretic plant")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write traces, loop and manifest.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Drive the plant with the reference, ignoring the controller.
        #[arg(long)]
        open_loop: bool,
    },
    /// Tune the controller gains per the `[tune]` section.
    Tune {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Waveform metrics of every column of a time-indexed CSV.
    Metrics {
        /// CSV with a leading `t` column.
        input: PathBuf,
        /// Theoretical form factor: sine, square, triangle, parabolic or a number.
        #[arg(long, default_value = "sine")]
        ff_theoretical: String,
        /// Only use the last N samples.
        #[arg(long)]
        last: Option<usize>,
        /// Restrict to these columns.
        #[arg(long = "column")]
        columns: Vec<String>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// `section.key=value`, repeatable.
    #[arg(long = "override")]
    overrides: Vec<String>,
    /// Print results as JSON.
    #[arg(long)]
    json: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Divergence { .. } | Error::Numeric { .. } => 3,
        Error::Io { .. } => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { run, open_loop } => simulate(&run, open_loop),
        Command::Tune { run } => tune_cmd(&run),
        Command::Metrics {
            input,
            ff_theoretical,
            last,
            columns,
            json,
        } => metrics(&input, &ff_theoretical, last, &columns, json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn summary_line(m: &hystloop_core::Metrics) -> String {
    format!(
        "FF(vB)={:.4}% FF(B)={:.4}% RMSE={:.6e}",
        m.ff_vb_percent, m.ff_b_percent, m.rmse_tracking
    )
}

fn simulate(args: &RunArgs, open_loop: bool) -> Result<(), Error> {
    let exp = config::load(&args.config, &args.overrides)?;
    let run = if open_loop {
        run_open_loop(&exp.config)?
    } else {
        run_closed_loop(&exp.config)?
    };
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
    let files = write_run(&args.out, &exp.name, &run)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&run.metrics)?);
    } else {
        println!("{}", summary_line(&run.metrics));
        for f in files {
            eprintln!("wrote {}", f.display());
        }
    }
    Ok(())
}

fn thread_cap() -> Result<Option<usize>, Error> {
    match std::env::var("HYSTLOOP_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| {
                Error::Configuration(format!("HYSTLOOP_THREADS must be a positive integer, got `{v}`"))
            }),
        Err(_) => Ok(None),
    }
}

fn tune_cmd(args: &RunArgs) -> Result<(), Error> {
    let exp = config::load(&args.config, &args.overrides)?;
    let spec = exp.tune_spec()?;
    let result = match thread_cap()? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Configuration(format!("thread pool: {e}")))?
            .install(|| tune(&spec))?,
        None => tune(&spec)?,
    };
    write_tune(&args.out, &exp.name, &spec, &result)?;

    let best_cfg = spec.config_at(
        &spec
            .search_space
            .iter()
            .map(|d| d.param.get(&result.best_params))
            .collect::<Vec<_>>(),
    );
    // the surrogate objective never runs the loop; the best point may not be runnable
    let best_run = run_closed_loop(&best_cfg);

    if args.json {
        println!("{}", serde_json::to_string_pretty(&result.best_params)?);
    } else {
        let params: Vec<String> = spec
            .search_space
            .iter()
            .map(|d| format!("{}={:e}", d.param.name(), d.param.get(&result.best_params)))
            .collect();
        println!(
            "best {} score={:e} evaluations={}",
            params.join(" "),
            result.best_score,
            result.evaluations
        );
    }
    match best_run {
        Ok(run) => {
            write_run(&args.out, &exp.name, &run)?;
            if !args.json {
                println!("{}", summary_line(&run.metrics));
            }
        }
        Err(e) => eprintln!("warning: best gains do not run cleanly: {e}"),
    }
    Ok(())
}

fn parse_ff(raw: &str) -> Result<f64, Error> {
    let ff = match raw.to_ascii_lowercase().as_str() {
        "sine" => Shape::Sine.form_factor(),
        "square" => Shape::Square.form_factor(),
        "triangle" => Shape::Triangle.form_factor(),
        "parabolic" => Shape::Triangle.integral_form_factor(),
        other => other.parse().map_err(|_| {
            Error::Configuration(format!("--ff-theoretical: `{raw}` is neither a shape nor a number"))
        })?,
    };
    if !(ff.is_finite() && ff > 0.0) {
        return Err(Error::Configuration(format!("--ff-theoretical must be > 0, got {ff}")));
    }
    Ok(ff)
}

#[derive(Serialize)]
struct ColumnMetrics {
    column: String,
    ff_percent: f64,
    rms: f64,
    mean_rectified: f64,
    dc: f64,
}

#[derive(Serialize)]
struct MetricsReport {
    samples: usize,
    dt: f64,
    ff_theoretical: f64,
    columns: Vec<ColumnMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rmse_ref_vb: Option<f64>,
}

fn metrics(
    input: &Path,
    ff_raw: &str,
    last: Option<usize>,
    only: &[String],
    json: bool,
) -> Result<(), Error> {
    let ff = parse_ff(ff_raw)?;
    let (dt, cols) = read_csv_columns(input)?;
    for c in only {
        if !cols.iter().any(|(h, _)| h == c) {
            return Err(Error::Configuration(format!(
                "{}: no column `{c}`",
                input.display()
            )));
        }
    }
    let total = cols[0].1.len();
    let n = last.unwrap_or(total);
    if n == 0 || n > total {
        return Err(Error::Configuration(format!(
            "--last {n} is outside 1..={total}"
        )));
    }
    let traces: Vec<SignalTrace> = cols
        .into_iter()
        .map(|(h, v)| SignalTrace::new(v[total - n..].to_vec(), dt, h))
        .collect::<Result<_, _>>()?;

    let mut report = MetricsReport {
        samples: n,
        dt,
        ff_theoretical: ff,
        columns: Vec::new(),
        rmse_ref_vb: None,
    };
    for t in &traces {
        if !only.is_empty() && !only.contains(&t.label) {
            continue;
        }
        report.columns.push(ColumnMetrics {
            column: t.label.clone(),
            // an all-zero column has no defined form factor
            ff_percent: form_factor_percent(t, ff).unwrap_or(f64::NAN),
            rms: rms(t)?,
            mean_rectified: mean_rectified(t)?,
            dc: dc_component(t)?,
        });
    }
    let find = |name: &str| traces.iter().find(|t| t.label == name);
    if let (Some(r), Some(v)) = (find("ref"), find("vB")) {
        report.rmse_ref_vb = Some(rmse(r, v)?);
    }

    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("{n} samples, dt={dt:e}, FF_theoretical={ff}");
        for c in &report.columns {
            println!(
                "{:>8}: FF={:.6}% RMS={:.9e} mean|x|={:.9e} DC={:.9e}",
                c.column, c.ff_percent, c.rms, c.mean_rectified, c.dc
            );
        }
        if let Some(e) = report.rmse_ref_vb {
            println!("RMSE(ref, vB)={e:.9e}");
        }
    }
    Ok(())
}
