use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::ShiftType;
use crate::error::{FluxError, Result};
use crate::federation::{ExperimentConfig, Mode};
use crate::harness::run::{generate_data, round_log_line, train_run, MetricsRow, METRICS_HEADER};

pub const DEFAULT_SEEDS: [u64; 5] = [42, 43, 44, 45, 46];
pub const RUNS_FILE: &str = "runs.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SUMMARY_HEADER: &str =
    "mode,shift_type,level,runs,failed,known_assoc_mean,known_assoc_std,test_phase_mean,test_phase_std,M_found_mean,status";

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}

/// Grid of (mode, shift type, level) cells, each run once per seed.
/// Every grid axis defaults to the corresponding value of `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    #[serde(default)]
    pub modes: Vec<Mode>,
    #[serde(default)]
    pub shift_types: Vec<ShiftType>,
    #[serde(default)]
    pub levels: Vec<u8>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

impl SweepConfig {
    pub fn cells(&self) -> Vec<(Mode, ShiftType, u8)> {
        fn or<T: Copy>(v: &[T], d: T) -> Vec<T> {
            if v.is_empty() {
                vec![d]
            } else {
                v.to_vec()
            }
        }
        let modes = or(&self.modes, self.base.mode);
        let shifts = or(&self.shift_types, self.base.shift_type);
        let levels = or(&self.levels, self.base.level);
        let mut out = Vec::new();
        for &m in &modes {
            for &s in &shifts {
                for &l in &levels {
                    out.push((m, s, l));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(FluxError::config("seeds: need at least one seed"));
        }
        Ok(())
    }
}

pub fn load_sweep_config(path: &Path) -> Result<SweepConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| FluxError::Config(format!("cannot read sweep config {}: {e}", path.display())))?;
    let sweep: SweepConfig =
        serde_json::from_str(&text).map_err(|e| FluxError::Config(format!("invalid sweep config: {e}")))?;
    sweep.validate()?;
    Ok(sweep)
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub mode: Mode,
    pub shift_type: ShiftType,
    pub level: u8,
    pub runs: usize,
    pub failed: usize,
    pub known_assoc: Option<(f64, f64)>,
    pub test_phase: Option<(f64, f64)>,
    pub m_found_mean: Option<f64>,
}

impl CellSummary {
    pub fn to_csv(&self) -> String {
        let pair = |p: Option<(f64, f64)>| match p {
            Some((m, s)) => format!("{m:.6},{s:.6}"),
            None => "NA,NA".to_string(),
        };
        let status = if self.failed == 0 {
            "ok"
        } else if self.failed == self.runs {
            "failed"
        } else {
            "partial"
        };
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.mode,
            self.shift_type,
            self.level,
            self.runs,
            self.failed,
            pair(self.known_assoc),
            pair(self.test_phase),
            self.m_found_mean.map_or_else(|| "NA".to_string(), |m| format!("{m:.3}")),
            status
        )
    }
}

pub struct SweepOutcome {
    pub rows: Vec<MetricsRow>,
    /// `(run config, error message)` for failed runs.
    pub failures: Vec<(ExperimentConfig, String)>,
    pub summary: Vec<CellSummary>,
}

fn summarize(cell: (Mode, ShiftType, u8), rows: &[MetricsRow], runs: usize) -> CellSummary {
    let ka: Vec<f64> = rows.iter().map(|r| r.known_assoc_acc).collect();
    let tp: Vec<f64> = rows.iter().filter_map(|r| r.test_phase_acc).collect();
    let m: Vec<f64> = rows.iter().map(|r| r.m_found as f64).collect();
    CellSummary {
        mode: cell.0,
        shift_type: cell.1,
        level: cell.2,
        runs,
        failed: runs - rows.len(),
        known_assoc: mean_std(&ka),
        test_phase: if tp.len() == rows.len() { mean_std(&tp) } else { None },
        m_found_mean: mean_std(&m).map(|p| p.0),
    }
}

/// Runs every cell for every seed. A failing run is recorded and the sweep
/// moves on. With `out`, writes per-run round logs under `logs/`, all
/// metrics rows to `runs.csv` and the per-cell aggregate to `summary.csv`.
pub fn run_sweep(sweep: &SweepConfig, out: Option<&Path>) -> Result<SweepOutcome> {
    sweep.validate()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir.join("logs"))?;
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    for cell in sweep.cells() {
        let mut cell_rows = Vec::new();
        for &seed in &sweep.seeds {
            let config = ExperimentConfig {
                mode: cell.0,
                shift_type: cell.1,
                level: cell.2,
                seed,
                ..sweep.base.clone()
            };
            match run_one(&config, out) {
                Ok(row) => cell_rows.push(row),
                Err(e) => {
                    log::warn!("run {} {} level {} seed {seed} failed: {e}", cell.0, cell.1, cell.2);
                    failures.push((config, e.to_string()));
                }
            }
        }
        summary.push(summarize(cell, &cell_rows, sweep.seeds.len()));
        rows.extend(cell_rows);
    }
    if let Some(dir) = out {
        let mut runs = format!("{METRICS_HEADER}\n");
        for r in &rows {
            runs.push_str(&r.to_csv());
            runs.push('\n');
        }
        fs::write(dir.join(RUNS_FILE), runs)?;
        let mut text = format!("{SUMMARY_HEADER}\n");
        for s in &summary {
            text.push_str(&s.to_csv());
            text.push('\n');
        }
        fs::write(dir.join(SUMMARY_FILE), text)?;
    }
    Ok(SweepOutcome {
        rows,
        failures,
        summary,
    })
}

fn run_one(config: &ExperimentConfig, out: Option<&Path>) -> Result<MetricsRow> {
    config.validate()?;
    let federation = generate_data(config)?;
    let outcome = train_run(config, &federation, None)?;
    if let Some(dir) = out {
        let mut text = String::new();
        for entry in &outcome.logs {
            text.push_str(&round_log_line(entry)?);
            text.push('\n');
        }
        fs::write(dir.join("logs").join(format!("{}.jsonl", outcome.metrics.run_id)), text)?;
    }
    Ok(outcome.metrics)
}
