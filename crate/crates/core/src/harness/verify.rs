//! Fixed-seed property suites behind the `verify` subcommand.

use std::time::Instant;

use serde::Serialize;

use crate::clustering::dbscan_adaptive;
use crate::descriptor::{DescriptorLayout, DescriptorVector};
use crate::error::{FluxError, Result};
use crate::gaussmetric::{check_prop1_bound, reference, w2_squared_diag, GaussianSummary};
use crate::numcore::{Matrix, Mlp, MlpShape, RngStream};

pub const SUITES: [&str; 5] = ["prop1", "bures", "dp", "clustering", "gradient"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub checks: usize,
    pub failures: usize,
    pub elapsed_ms: u64,
    /// First failure, if any.
    pub detail: Option<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

struct Tally {
    checks: usize,
    failures: usize,
    detail: Option<String>,
}

impl Tally {
    fn new() -> Self {
        Self {
            checks: 0,
            failures: 0,
            detail: None,
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
            if self.detail.is_none() {
                self.detail = Some(what());
            }
        }
    }
}

/// Resolves a selector (`all`, one suite name, or a comma-separated list).
pub fn resolve_selector(selector: &str) -> Result<Vec<&'static str>> {
    if selector == "all" {
        return Ok(SUITES.to_vec());
    }
    selector
        .split(',')
        .map(|s| {
            SUITES
                .iter()
                .copied()
                .find(|&n| n == s.trim())
                .ok_or_else(|| FluxError::Config(format!("unknown property suite {s:?} (known: all, {})", SUITES.join(", "))))
        })
        .collect()
}

pub fn run_suites(selector: &str) -> Result<Vec<SuiteReport>> {
    resolve_selector(selector)?
        .into_iter()
        .map(|name| {
            let started = Instant::now();
            let tally = match name {
                "prop1" => prop1_suite(10_000)?,
                "bures" => bures_suite(1_000)?,
                "dp" => dp_suite()?,
                "clustering" => clustering_suite(200)?,
                "gradient" => gradient_suite(10, 100)?,
                _ => unreachable!("selector resolved"),
            };
            Ok(SuiteReport {
                name: name.to_string(),
                checks: tally.checks,
                failures: tally.failures,
                elapsed_ms: started.elapsed().as_millis() as u64,
                detail: tally.detail,
            })
        })
        .collect()
}

fn random_summary(rng: &mut RngStream, dim: usize, var_lo: f64, var_hi: f64) -> Result<GaussianSummary<f64>> {
    let mean = (0..dim).map(|_| rng.uniform(-2.0, 2.0)).collect();
    let sigma = (0..dim).map(|_| rng.uniform(var_lo, var_hi).sqrt()).collect();
    GaussianSummary::new(mean, sigma)
}

fn prop1_suite(pairs: usize) -> Result<Tally> {
    let mut rng = RngStream::new(0x5052_4f50);
    let mut t = Tally::new();
    for i in 0..pairs {
        let dim = 1 + rng.next_below(8);
        let a = random_summary(&mut rng, dim, 0.5, 2.0)?;
        let b = random_summary(&mut rng, dim, 0.5, 2.0)?;
        let c = check_prop1_bound(&a, &b, 0.5, 2.0)?;
        t.check(c.holds, || format!("pair {i}: W2^2 = {}, Delta^2 = {}", c.w2_sq, c.delta_sq));
    }
    Ok(t)
}

/// Orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
pub fn random_rotation(rng: &mut RngStream, n: usize) -> Matrix<f64> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();
        for r in &rows {
            let dot: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            rows.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    Matrix::from_rows(&rows).expect("square")
}

fn bures_suite(pairs: usize) -> Result<Tally> {
    let mut rng = RngStream::new(0x4255_5245);
    let mut t = Tally::new();
    for i in 0..pairs {
        let dim = 1 + rng.next_below(6);
        let a = random_summary(&mut rng, dim, 0.1, 3.0)?;
        let b = random_summary(&mut rng, dim, 0.1, 3.0)?;
        let fast = w2_squared_diag(&a, &b)?;
        let va: Vec<f64> = a.variances().collect();
        let vb: Vec<f64> = b.variances().collect();
        // every other pair is conjugated by a shared rotation: still commuting
        let rot = if i % 2 == 0 {
            Matrix::identity(dim)
        } else {
            random_rotation(&mut rng, dim)
        };
        let ra = reference::rotate_diagonal(&rot, &va)?;
        let rb = reference::rotate_diagonal(&rot, &vb)?;
        let mu_a = rotate_vec(&rot, &a.mean);
        let mu_b = rotate_vec(&rot, &b.mean);
        let slow = reference::w2_squared(&mu_a, &ra, &mu_b, &rb)?;
        t.check((fast - slow).abs() <= 1e-10, || format!("pair {i}: diagonal {fast}, dense {slow}"));
    }
    Ok(t)
}

fn rotate_vec(rot: &Matrix<f64>, v: &[f64]) -> Vec<f64> {
    rot.row_iter().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn dp_suite() -> Result<Tally> {
    let mut t = Tally::new();
    for (k, &b) in [0.1, 1.0, 5.0].iter().enumerate() {
        let mut rng = RngStream::new(0x4450 + k as u64);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| rng.next_laplace(b)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let mad = draws.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        // standard errors: mean b*sqrt(2/n), |x| b/sqrt(n), var ~ b^2 sqrt(20/n)
        t.check(mean.abs() < 5.0 * b * (2.0 / n as f64).sqrt(), || format!("b = {b}: mean {mean}"));
        t.check((mad - b).abs() < 5.0 * b / (n as f64).sqrt(), || format!("b = {b}: E|x| {mad}"));
        t.check((var - 2.0 * b * b).abs() < 5.0 * b * b * (20.0 / n as f64).sqrt(), || {
            format!("b = {b}: var {var}")
        });
    }
    Ok(t)
}

fn clustering_suite(trials: usize) -> Result<Tally> {
    let mut rng = RngStream::new(0x434c_5553);
    let mut t = Tally::new();
    for i in 0..trials {
        let n = 3 + rng.next_below(25);
        let dim = 1 + rng.next_below(5);
        let groups = 1 + rng.next_below(4);
        let centers: Vec<Vec<f64>> = (0..groups)
            .map(|_| (0..dim).map(|_| rng.uniform(-10.0, 10.0)).collect())
            .collect();
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let c = &centers[rng.next_below(groups)];
                c.iter().map(|v| v + 0.5 * rng.next_gaussian()).collect()
            })
            .collect();
        let descs = as_descriptors(&points);
        let state = dbscan_adaptive(&descs, 1.0)?;
        let mut seen = vec![false; state.m];
        let mut canonical = true;
        let mut next = 0;
        for &c in &state.assignment {
            if c >= state.m {
                canonical = false;
                break;
            }
            if !seen[c] {
                canonical &= c == next;
                seen[c] = true;
                next += 1;
            }
        }
        t.check(canonical && seen.iter().all(|&s| s), || {
            format!("trial {i}: assignment {:?} is not a canonical partition", state.assignment)
        });

        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let shuffled: Vec<Vec<f64>> = order.iter().map(|&j| points[j].clone()).collect();
        let other = dbscan_adaptive(&as_descriptors(&shuffled), 1.0)?;
        let same = (0..n).all(|a| {
            (0..n).all(|b| {
                (state.assignment[order[a]] == state.assignment[order[b]]) == (other.assignment[a] == other.assignment[b])
            })
        });
        t.check(same, || format!("trial {i}: partition changed under input permutation"));
    }
    Ok(t)
}

fn as_descriptors(points: &[Vec<f64>]) -> Vec<DescriptorVector<f64>> {
    let layout = DescriptorLayout {
        l: points[0].len(),
        classes: 0,
        with_sigma: false,
        with_class_blocks: false,
    };
    points
        .iter()
        .map(|p| DescriptorVector {
            values: p.clone(),
            layout,
            sample_count: 1,
            dp_epsilon: None,
        })
        .collect()
}

fn gradient_suite(configs: usize, weights: usize) -> Result<Tally> {
    let mut rng = RngStream::new(0x4752_4144);
    let mut t = Tally::new();
    for cfg in 0..configs {
        let shape = MlpShape::new(2 + rng.next_below(6), 2 + rng.next_below(6), 2 + rng.next_below(4));
        let mut model = Mlp::<f64>::init(shape, &mut rng);
        let n = 3 + rng.next_below(6);
        let x = Matrix::new(n, shape.input, (0..n * shape.input).map(|_| rng.next_gaussian()).collect())?;
        let y: Vec<usize> = (0..n).map(|_| rng.next_below(shape.classes)).collect();
        let (_, grad) = model.loss_and_grad(&x, &y)?;
        let p = shape.param_count();
        for _ in 0..weights {
            let i = rng.next_below(p);
            let h = 1e-5;
            let orig = model.params().0[i];
            model.params_mut().0[i] = orig + h;
            let up = model.loss(&x, &y)?;
            model.params_mut().0[i] = orig - h;
            let down = model.loss(&x, &y)?;
            model.params_mut().0[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grad.0[i];
            let scale = numeric.abs().max(analytic.abs());
            // weights feeding an inactive ReLU unit have zero gradient on both sides
            let rel = if scale < 1e-7 { 0.0 } else { (numeric - analytic).abs() / scale };
            t.check(rel <= 1e-4, || {
                format!("config {cfg}, weight {i}: analytic {analytic}, numeric {numeric}")
            });
        }
    }
    Ok(t)
}
