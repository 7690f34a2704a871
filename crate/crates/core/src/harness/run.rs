use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datagen::{
    gen_mnist_federation, gen_synthetic_federation, load_mnist_idx, Federation, MnistFederationSpec, ShiftType,
};
use crate::error::{FluxError, Result};
use crate::federation::{
    evaluate_known_association, infer_test_clients, mean_accuracy, ExperimentConfig, FederationState, Mode, RoundLog,
    Simulation, TestOutcome,
};
use crate::harness::manifest::config_hash;

pub const ROUND_LOG_FILE: &str = "round_log.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const STATE_FILE: &str = "state.json";
pub const EVAL_FILE: &str = "eval.json";

/// Column order of the metrics CSV (schema version 1).
pub const METRICS_HEADER: &str =
    "run_id,mode,shift_type,level,seed,known_assoc_acc,test_phase_acc,M_found,M_true,wall_time_ms";
pub const NOT_APPLICABLE: &str = "NA";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub mode: Mode,
    pub shift_type: ShiftType,
    pub level: u8,
    pub seed: u64,
    pub known_assoc_acc: f64,
    /// `None` where test-time routing cannot work (label-swap concept shift).
    pub test_phase_acc: Option<f64>,
    pub m_found: usize,
    pub m_true: usize,
    pub wall_time_ms: u64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{},{},{},{}",
            self.run_id,
            self.mode,
            self.shift_type,
            self.level,
            self.seed,
            self.known_assoc_acc,
            self.test_phase_acc
                .map_or_else(|| NOT_APPLICABLE.to_string(), |a| format!("{a:.6}")),
            self.m_found,
            self.m_true,
            self.wall_time_ms
        )
    }
}

pub fn run_id(config: &ExperimentConfig) -> Result<String> {
    let hash = config_hash(config)?;
    Ok(format!(
        "{}-{}-l{}-s{}-{}",
        config.mode,
        config.shift_type,
        config.level,
        config.seed,
        &hash[..8]
    ))
}

/// Builds the federation described by `config` (Gaussian blobs, or IDX
/// images when `config.mnist` is set).
pub fn generate_data(config: &ExperimentConfig) -> Result<Federation> {
    config.validate()?;
    match &config.mnist {
        None => gen_synthetic_federation(&config.synthetic(), &config.shift(), config.seed),
        Some(src) => {
            let (images, labels) = load_mnist_idx(&src.images, &src.labels, src.limit)?;
            let spec = MnistFederationSpec {
                clients: config.clients,
                samples_per_client: config.samples_per_client,
                test_clients_per_distribution: config.test_clients_per_distribution,
            };
            gen_mnist_federation(&images, &labels, &spec, &config.shift(), config.seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub known_association: Vec<TestOutcome>,
    pub test_phase: Option<Vec<TestOutcome>>,
}

/// Scores the held-out clients under both association conditions.
pub fn evaluate(state: &FederationState, config: &ExperimentConfig, federation: &Federation) -> Result<Evaluation> {
    let known_association = evaluate_known_association(state, &federation.ground_truth(), &federation.test)?;
    let test_phase = if config.shift_type == ShiftType::ConceptYgivenX {
        None
    } else {
        Some(infer_test_clients(state, config, &federation.test)?)
    };
    Ok(Evaluation {
        known_association,
        test_phase,
    })
}

pub struct RunOutcome {
    pub logs: Vec<RoundLog>,
    pub state: FederationState,
    pub evaluation: Evaluation,
    pub metrics: MetricsRow,
}

fn metrics_row(config: &ExperimentConfig, state: &FederationState, ev: &Evaluation, wall_ms: u64) -> Result<MetricsRow> {
    Ok(MetricsRow {
        run_id: run_id(config)?,
        mode: config.mode,
        shift_type: config.shift_type,
        level: config.level,
        seed: config.seed,
        known_assoc_acc: mean_accuracy(&ev.known_association),
        test_phase_acc: ev.test_phase.as_deref().map(mean_accuracy),
        m_found: state.models.len(),
        m_true: config.num_distributions,
        wall_time_ms: wall_ms,
    })
}

pub fn round_log_line(entry: &RoundLog) -> Result<String> {
    Ok(serde_json::to_string(entry)?)
}

/// Trains on `federation` and evaluates its test clients. With `out`, the
/// round log, metrics row and final state are written there.
pub fn train_run(config: &ExperimentConfig, federation: &Federation, out: Option<&Path>) -> Result<RunOutcome> {
    let started = Instant::now();
    let mut log_file = match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Some(std::io::BufWriter::new(fs::File::create(dir.join(ROUND_LOG_FILE))?))
        }
        None => None,
    };
    let mut sim = Simulation::new(config, federation)?;
    let logs = sim.run(|entry| {
        if let Some(f) = log_file.as_mut() {
            writeln!(f, "{}", round_log_line(entry)?)?;
        }
        Ok(())
    })?;
    if let Some(mut f) = log_file {
        f.flush()?;
    }
    let state = sim.into_state();
    let evaluation = evaluate(&state, config, federation)?;
    let metrics = metrics_row(config, &state, &evaluation, started.elapsed().as_millis() as u64)?;
    if let Some(dir) = out {
        fs::write(dir.join(METRICS_FILE), format!("{METRICS_HEADER}\n{}\n", metrics.to_csv()))?;
        fs::write(dir.join(STATE_FILE), serde_json::to_vec(&state)?)?;
    }
    Ok(RunOutcome {
        logs,
        state,
        evaluation,
        metrics,
    })
}

pub fn load_state(dir: &Path) -> Result<FederationState> {
    let path = dir.join(STATE_FILE);
    let bytes = fs::read(&path)
        .map_err(|e| FluxError::precondition(format!("cannot read {}: {e}", path.display())))?;
    let mut state: FederationState = serde_json::from_slice(&bytes)?;
    state.client_params = vec![None; state.client_cluster.len()];
    Ok(state)
}

/// Runs `f` on a dedicated pool of `threads` workers (the global pool when
/// `None`). Results do not depend on the worker count.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(FluxError::config("threads: must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| FluxError::precondition(format!("cannot start thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
