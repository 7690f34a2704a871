use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fluxfed::datagen::{read_federation, write_federation};
use fluxfed::federation::{mean_accuracy, ExperimentConfig, Mode};
use fluxfed::harness::{self, RunManifest};
use fluxfed::FluxError;

/// Clustered federated learning simulator.
#[derive(Parser)]
#[command(name = "flux-fed", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a federation and write it to a directory.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train on a federation (generated in memory unless --data is given).
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score test clients with the state saved by `train` in --out.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run a grid of experiments over seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run property suites: all, or any of prop1, bures, dp, clustering, gradient.
    Verify {
        #[arg(default_value = "all")]
        selector: String,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "dp-epsilon")]
    dp_epsilon: Option<f64>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> fluxfed::Result<ExperimentConfig> {
        let mut config = harness::load_config(&self.config)?;
        if let Some(m) = self.mode {
            config.mode = m;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(e) = self.dp_epsilon {
            config.dp_epsilon = Some(e);
        }
        if let Some(s) = self.scale {
            config.dbscan_scale = s;
        }
        config.validate()?;
        Ok(config)
    }
}

fn federation_for(config: &ExperimentConfig, data: Option<&Path>) -> fluxfed::Result<fluxfed::datagen::Federation> {
    match data {
        Some(dir) => read_federation(dir),
        None => harness::generate_data(config),
    }
}

fn gen_data(config: &Path, out: &Path, seed: Option<u64>) -> fluxfed::Result<()> {
    let mut config = harness::load_config(config)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let fed = harness::generate_data(&config)?;
    let manifest = write_federation(&fed, out)?;
    println!(
        "wrote {} training and {} test clients to {}",
        manifest.train.len(),
        manifest.test.len(),
        out.display()
    );
    Ok(())
}

fn train(run: &RunArgs, data: Option<&Path>) -> fluxfed::Result<()> {
    let config = run.load()?;
    let mut manifest = RunManifest::start(harness::config_hash(&config)?);
    let fed = federation_for(&config, data)?;
    let outcome = harness::with_threads(run.threads, || harness::train_run(&config, &fed, Some(&run.out)))??;
    manifest.finish(
        [harness::ROUND_LOG_FILE, harness::METRICS_FILE, harness::STATE_FILE]
            .iter()
            .map(|f| run.out.join(f).display().to_string())
            .collect(),
    );
    manifest.write(&run.out.join("manifest.json"))?;
    println!("{}", harness::METRICS_HEADER);
    println!("{}", outcome.metrics.to_csv());
    Ok(())
}

fn eval(run: &RunArgs, data: Option<&Path>) -> fluxfed::Result<()> {
    let config = run.load()?;
    let state = harness::load_state(&run.out)?;
    let fed = federation_for(&config, data)?;
    let ev = harness::with_threads(run.threads, || harness::evaluate(&state, &config, &fed))??;
    std::fs::write(run.out.join(harness::EVAL_FILE), serde_json::to_vec_pretty(&ev)?)?;
    println!("known_assoc_acc {:.6}", mean_accuracy(&ev.known_association));
    match &ev.test_phase {
        Some(tp) => println!("test_phase_acc {:.6}", mean_accuracy(tp)),
        None => println!("test_phase_acc {}", harness::NOT_APPLICABLE),
    }
    Ok(())
}

fn sweep(config: &Path, out: &Path, threads: Option<usize>) -> fluxfed::Result<bool> {
    let sweep = harness::load_sweep_config(config)?;
    let outcome = harness::with_threads(threads, || harness::run_sweep(&sweep, Some(out)))??;
    println!("{}", harness::SUMMARY_HEADER);
    for cell in &outcome.summary {
        println!("{}", cell.to_csv());
    }
    for (cfg, err) in &outcome.failures {
        eprintln!("failed: {} {} level {} seed {}: {err}", cfg.mode, cfg.shift_type, cfg.level, cfg.seed);
    }
    Ok(outcome.failures.is_empty())
}

fn verify(selector: &str, threads: Option<usize>) -> fluxfed::Result<bool> {
    let reports = harness::with_threads(threads, || harness::run_suites(selector))??;
    let mut ok = true;
    for r in &reports {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        println!("{status} {:<10} {:>6} checks {:>4} failures {:>6} ms", r.name, r.checks, r.failures, r.elapsed_ms);
        if let Some(d) = &r.detail {
            println!("     first failure: {d}");
        }
        ok &= r.passed();
    }
    Ok(ok)
}

fn exit_code(err: &FluxError) -> u8 {
    match err {
        FluxError::Config(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FLUX_FED_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::GenData { config, out, seed } => gen_data(config, out, *seed).map(|_| true),
        Command::Train { run, data } => train(run, data.as_deref()).map(|_| true),
        Command::Eval { run, data } => eval(run, data.as_deref()).map(|_| true),
        Command::Sweep { config, out, threads } => sweep(config, out, *threads),
        Command::Verify { selector, threads } => verify(selector, *threads),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            log::debug!("{e:?}");
            ExitCode::from(exit_code(&e))
        }
    }
}
