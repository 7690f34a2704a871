//! Single-hidden-layer perceptron (`input -> hidden (ReLU) -> classes`)
//! trained with mini-batch SGD + momentum on softmax cross-entropy.
//!
//! Parameters live in one flat [`ParamVector`] in the canonical order
//! `W1 (hidden x input), b1, W2 (classes x hidden), b2` so federated
//! aggregation can treat every model as a plain vector.

use serde::{Deserialize, Serialize};

use crate::error::{FluxError, Result};
use crate::numcore::{Matrix, RngStream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl MlpShape {
    pub fn new(input: usize, hidden: usize, classes: usize) -> Self {
        Self {
            input,
            hidden,
            classes,
        }
    }

    pub fn param_count(&self) -> usize {
        self.hidden * self.input + self.hidden + self.classes * self.hidden + self.classes
    }

    fn w1(&self) -> std::ops::Range<usize> {
        0..self.hidden * self.input
    }

    fn b1(&self) -> std::ops::Range<usize> {
        let s = self.hidden * self.input;
        s..s + self.hidden
    }

    fn w2(&self) -> std::ops::Range<usize> {
        let s = self.hidden * self.input + self.hidden;
        s..s + self.classes * self.hidden
    }

    fn b2(&self) -> std::ops::Range<usize> {
        let s = self.hidden * self.input + self.hidden + self.classes * self.hidden;
        s..s + self.classes
    }
}

/// Flat model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector<T>(pub Vec<T>);

impl<T: Scalar> ParamVector<T> {
    pub fn zeros(len: usize) -> Self {
        Self(vec![T::zero(); len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Weighted coordinate-wise mean `sum_i w_i p_i / sum_i w_i`.
///
/// Evaluated as `p_0 + sum_i (w_i / W) (p_i - p_0)`, which returns the input
/// exactly when all vectors are identical.
pub fn weighted_param_mean<T: Scalar>(
    params: &[&ParamVector<T>],
    weights: &[T],
) -> Result<ParamVector<T>> {
    let first = params
        .first()
        .ok_or_else(|| FluxError::precondition("weighted mean of an empty list"))?;
    if weights.len() != params.len() {
        return Err(FluxError::dim("weight count", params.len(), weights.len()));
    }
    if let Some(p) = params.iter().find(|p| p.len() != first.len()) {
        return Err(FluxError::dim("parameter vector length", first.len(), p.len()));
    }
    if weights.iter().any(|&w| !(w >= T::zero()) || !w.is_finite()) {
        return Err(FluxError::precondition("weights must be finite and non-negative"));
    }
    let total: T = weights.iter().copied().sum();
    if total <= T::zero() {
        return Err(FluxError::precondition("zero total weight"));
    }
    let mut out = (*first).clone();
    for (p, &w) in params.iter().zip(weights).skip(1) {
        let frac = w / total;
        for ((o, &x), &x0) in out.0.iter_mut().zip(&p.0).zip(&first.0) {
            *o = *o + frac * (x - x0);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            epochs: 2,
            lr: 0.005,
            momentum: 0.9,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    shape: MlpShape,
    params: ParamVector<T>,
}

impl<T: Scalar> Mlp<T> {
    /// Weights and biases uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init(shape: MlpShape, rng: &mut RngStream) -> Self {
        let mut params = Vec::with_capacity(shape.param_count());
        let b1 = T::one() / T::from_count(shape.input).sqrt();
        let b2 = T::one() / T::from_count(shape.hidden).sqrt();
        for _ in 0..shape.hidden * shape.input + shape.hidden {
            params.push(rng.uniform(-b1, b1));
        }
        for _ in 0..shape.classes * shape.hidden + shape.classes {
            params.push(rng.uniform(-b2, b2));
        }
        Self {
            shape,
            params: ParamVector(params),
        }
    }

    pub fn zeros(shape: MlpShape) -> Self {
        Self {
            shape,
            params: ParamVector::zeros(shape.param_count()),
        }
    }

    pub fn from_params(shape: MlpShape, params: ParamVector<T>) -> Result<Self> {
        if params.len() != shape.param_count() {
            return Err(FluxError::dim("parameter count", shape.param_count(), params.len()));
        }
        Ok(Self { shape, params })
    }

    pub fn shape(&self) -> MlpShape {
        self.shape
    }

    pub fn params(&self) -> &ParamVector<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamVector<T> {
        self.params
    }

    fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.shape.input {
            return Err(FluxError::Config(format!(
                "input has {} features, model expects {}",
                x.cols(),
                self.shape.input
            )));
        }
        Ok(())
    }

    /// Hidden pre-activations for every row.
    fn hidden_pre(&self, x: &Matrix<T>) -> Matrix<T> {
        let MlpShape { input, hidden, .. } = self.shape;
        let w1 = &self.params.0[self.shape.w1()];
        let b1 = &self.params.0[self.shape.b1()];
        let mut out = Matrix::zeros(x.rows(), hidden);
        for (r, xr) in x.row_iter().enumerate() {
            let hr = out.row_mut(r);
            for (j, h) in hr.iter_mut().enumerate() {
                let wj = &w1[j * input..(j + 1) * input];
                *h = b1[j] + wj.iter().zip(xr).fold(T::zero(), |a, (&w, &v)| a + w * v);
            }
        }
        out
    }

    fn logits_from_latents(&self, latents: &Matrix<T>) -> Matrix<T> {
        let MlpShape {
            hidden, classes, ..
        } = self.shape;
        let w2 = &self.params.0[self.shape.w2()];
        let b2 = &self.params.0[self.shape.b2()];
        let mut out = Matrix::zeros(latents.rows(), classes);
        for (r, hr) in latents.row_iter().enumerate() {
            let or = out.row_mut(r);
            for (c, o) in or.iter_mut().enumerate() {
                let wc = &w2[c * hidden..(c + 1) * hidden];
                *o = b2[c] + wc.iter().zip(hr).fold(T::zero(), |a, (&w, &v)| a + w * v);
            }
        }
        out
    }

    /// Returns `(logits, latents)`; latents are the post-ReLU hidden layer.
    pub fn forward(&self, x: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
        self.check_input(x)?;
        let latents = self.hidden_pre(x).map(relu);
        let logits = self.logits_from_latents(&latents);
        Ok((logits, latents))
    }

    pub fn latents(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x)?;
        Ok(self.hidden_pre(x).map(relu))
    }

    /// Arg-max class per row (lowest index on ties).
    pub fn predict(&self, x: &Matrix<T>) -> Result<Vec<usize>> {
        let (logits, _) = self.forward(x)?;
        Ok(logits.row_iter().map(argmax).collect())
    }

    /// Fraction of rows whose prediction matches `labels`.
    pub fn accuracy(&self, x: &Matrix<T>, labels: &[usize]) -> Result<f64> {
        if labels.len() != x.rows() {
            return Err(FluxError::dim("label count", x.rows(), labels.len()));
        }
        if labels.is_empty() {
            return Ok(0.0);
        }
        let pred = self.predict(x)?;
        let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
        Ok(hits as f64 / labels.len() as f64)
    }

    /// Mean cross-entropy over the rows of `x`.
    pub fn loss(&self, x: &Matrix<T>, labels: &[usize]) -> Result<T> {
        let (logits, _) = self.forward(x)?;
        self.check_labels(x, labels)?;
        let mut total = T::zero();
        for (row, &y) in logits.row_iter().zip(labels) {
            total = total + log_sum_exp(row) - row[y];
        }
        Ok(total / T::from_count(labels.len()))
    }

    fn check_labels(&self, x: &Matrix<T>, labels: &[usize]) -> Result<()> {
        if labels.len() != x.rows() {
            return Err(FluxError::dim("label count", x.rows(), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.shape.classes) {
            return Err(FluxError::Config(format!(
                "label {bad} out of range for {} classes",
                self.shape.classes
            )));
        }
        Ok(())
    }

    /// Mean cross-entropy and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, x: &Matrix<T>, labels: &[usize]) -> Result<(T, ParamVector<T>)> {
        self.check_input(x)?;
        self.check_labels(x, labels)?;
        let MlpShape {
            input,
            hidden,
            classes,
        } = self.shape;
        let n = T::from_count(x.rows().max(1));
        let pre = self.hidden_pre(x);
        let h = pre.map(relu);
        let logits = self.logits_from_latents(&h);
        let w2 = &self.params.0[self.shape.w2()];

        let mut grad = ParamVector::zeros(self.shape.param_count());
        let (gw1_r, gb1_r, gw2_r, gb2_r) =
            (self.shape.w1(), self.shape.b1(), self.shape.w2(), self.shape.b2());
        let mut loss = T::zero();
        let mut dlogit = vec![T::zero(); classes];
        let mut dh = vec![T::zero(); hidden];

        for (r, &y) in labels.iter().enumerate() {
            let row = logits.row(r);
            let lse = log_sum_exp(row);
            loss = loss + lse - row[y];
            for c in 0..classes {
                let p = (row[c] - lse).exp();
                let onehot = if c == y { T::one() } else { T::zero() };
                dlogit[c] = (p - onehot) / n;
            }
            let hr = h.row(r);
            dh.iter_mut().for_each(|v| *v = T::zero());
            {
                let g = &mut grad.0;
                for c in 0..classes {
                    let d = dlogit[c];
                    g[gb2_r.start + c] = g[gb2_r.start + c] + d;
                    let base = gw2_r.start + c * hidden;
                    let wc = &w2[c * hidden..(c + 1) * hidden];
                    for j in 0..hidden {
                        g[base + j] = g[base + j] + d * hr[j];
                        dh[j] = dh[j] + d * wc[j];
                    }
                }
                let pr = pre.row(r);
                let xr = x.row(r);
                for j in 0..hidden {
                    if pr[j] <= T::zero() {
                        continue;
                    }
                    let d = dh[j];
                    g[gb1_r.start + j] = g[gb1_r.start + j] + d;
                    let base = gw1_r.start + j * input;
                    for (gi, &xv) in g[base..base + input].iter_mut().zip(xr) {
                        *gi = *gi + d * xv;
                    }
                }
            }
        }
        Ok((loss / n, grad))
    }

    /// Local training on one client's data: `epochs` passes of shuffled
    /// mini-batch SGD with heavy-ball momentum (`v = m v + g; w -= lr v`).
    /// Momentum buffers start at zero on every call.
    pub fn train_local(
        &self,
        x: &Matrix<T>,
        labels: &[usize],
        cfg: &SgdConfig,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if cfg.epochs == 0 {
            return Err(FluxError::config("epochs must be at least 1"));
        }
        if cfg.batch_size == 0 {
            return Err(FluxError::config("batch_size must be at least 1"));
        }
        self.check_input(x)?;
        self.check_labels(x, labels)?;
        let mut model = self.clone();
        if x.rows() == 0 {
            return Ok(model);
        }
        let lr = T::lit(cfg.lr);
        let mu = T::lit(cfg.momentum);
        let mut velocity = vec![T::zero(); self.shape.param_count()];
        let mut order: Vec<usize> = (0..x.rows()).collect();
        for _ in 0..cfg.epochs {
            rng.shuffle(&mut order);
            for chunk in order.chunks(cfg.batch_size) {
                let bx = x.select_rows(chunk);
                let by: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                let (loss, grad) = model.loss_and_grad(&bx, &by)?;
                if !loss.is_finite() {
                    return Err(FluxError::NumericInstability(format!(
                        "non-finite training loss {loss}"
                    )));
                }
                for ((w, v), &g) in model.params.0.iter_mut().zip(&mut velocity).zip(&grad.0) {
                    *v = mu * *v + g;
                    *w = *w - lr * *v;
                }
            }
        }
        Ok(model)
    }
}

#[inline]
fn relu<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln()
}

/// Row-wise softmax.
pub fn softmax<T: Scalar>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let lse = log_sum_exp(row);
        row.iter_mut().for_each(|v| *v = (*v - lse).exp());
    }
    out
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
