use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use multiband_delay::harness::emit::{self, Format};
use multiband_delay::harness::{
    load_config, run_montecarlo, run_trial_full, sweep, synth_trial, Scenario, ScenarioFile,
    SweepAxis,
};
use multiband_delay::runner::trace_jsonl;

#[derive(Parser)]
#[command(
    name = "mbdelay",
    version,
    about = "Multiband delay estimation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one synthetic observation with its ground truth.
    Synth(Common),
    /// Run a single trial and write its full iteration trace.
    Run {
        #[command(flatten)]
        common: Common,
        /// Trial index within the master seed.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Monte-Carlo sweep over SNR (`sweep.snr_db` in the config).
    SweepSnr(Common),
    /// Monte-Carlo sweep over subcarriers per band (`sweep.n_sub`).
    SweepDatasize(Common),
    /// Empirical CDF of first-path delay errors.
    Cdf(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Trial count, overriding the config.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value = "csv")]
    format: String,
}

impl Common {
    fn load(&self) -> Result<(ScenarioFile, Format)> {
        let mut file = match &self.config {
            Some(p) => load_config(p)?,
            None => ScenarioFile {
                scenario: Scenario::default(),
                sweep_snr_db: None,
                sweep_n_sub: None,
            },
        };
        if let Some(seed) = self.seed {
            file.scenario.seed = seed;
        }
        if let Some(n) = self.trials {
            if n == 0 {
                bail!("config error: --trials must be at least 1");
            }
            file.scenario.n_trials = n;
        }
        file.scenario.validate()?;
        let format: Format = self.format.parse()?;
        Ok((file, format))
    }

    fn path(&self, stem: &str, format: Format) -> PathBuf {
        let ext = match format {
            Format::Csv => "csv",
            Format::Json => "json",
        };
        self.out.join(format!("{stem}.{ext}"))
    }
}

fn write(path: &Path, body: &str) -> Result<()> {
    emit::write_file(path, body).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run_sweep(c: &Common, axis: SweepAxis) -> Result<()> {
    let (file, format) = c.load()?;
    let (values, stem) = match axis {
        SweepAxis::SnrDb => (
            file.sweep_snr_db.unwrap_or_else(|| vec![-5.0, 0.0, 5.0]),
            "sweep_snr",
        ),
        SweepAxis::NSub => (
            file.sweep_n_sub.unwrap_or_else(|| vec![64.0, 128.0, 256.0]),
            "sweep_datasize",
        ),
    };
    let records = sweep(&file.scenario, axis, &values)?;
    let path = c.path(stem, format);
    emit::emit(&records, format, &path)?;
    println!("wrote {}", path.display());
    write(
        &c.out.join(format!("{stem}_trials.csv")),
        &emit::trials_csv(&records),
    )?;
    for r in &records {
        println!(
            "{:>8}  rmse_map {:.3} ns  rmse_mmse {:.3} ns  detect {:.3}  samples/iter {:.1}",
            r.axis_value, r.rmse_map_ns, r.rmse_mmse_ns, r.detect_rate, r.mean_samples_per_iter
        );
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(c) => {
            let (file, _) = c.load()?;
            let (truth, obs) = synth_trial(&file.scenario, 0)?;
            let body = serde_json::to_string_pretty(&serde_json::json!({
                "truth": truth,
                "observation": obs,
            }))?;
            write(&c.out.join("observation.json"), &body)
        }
        Command::Run { common: c, trial } => {
            let (file, _) = c.load()?;
            let out = run_trial_full(&file.scenario, trial)?;
            write(&c.out.join("trace.jsonl"), &trace_jsonl(&out.report.trace)?)?;
            let body = serde_json::to_string_pretty(&serde_json::json!({
                "record": out.record,
                "truth": out.truth,
                "coarse": out.coarse,
                "report": out.report,
            }))?;
            write(&c.out.join("report.json"), &body)?;
            let r = &out.record;
            println!(
                "model {} (true {:?})  tau1 map {:.3} ns  true {:.3} ns  iterations {}  converged {}",
                r.selected_model,
                r.true_model,
                r.tau1_map * 1e9,
                r.tau1_true * 1e9,
                r.iterations,
                r.converged
            );
            Ok(())
        }
        Command::SweepSnr(c) => run_sweep(&c, SweepAxis::SnrDb),
        Command::SweepDatasize(c) => run_sweep(&c, SweepAxis::NSub),
        Command::Cdf(c) => {
            let (file, format) = c.load()?;
            let m = run_montecarlo(&file.scenario)?;
            let path = c.path("cdf", format);
            emit::emit_cdf(&emit::error_cdf(&m), format, &path)?;
            println!("wrote {}", path.display());
            let path = c.path("summary", format);
            emit::emit(std::slice::from_ref(&m), format, &path)?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mbdelay: {e:#}");
            ExitCode::from(2)
        }
    }
}
