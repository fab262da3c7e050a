//! Convolutional relatedness head over word-embedding sequences.
//!
//! Input is a `L x D` matrix: visual-context token vectors, one all-zero
//! separator row, then caption token vectors. Each kernel `k` has a window of
//! `n` rows and produces a feature map
//!
//! ```text
//! z_i = relu(<f_k, x[i..i+n]> + b_k),   i = 0..=L-n
//! ```
//!
//! which is max-pooled to one value per kernel. The pooled vector feeds a
//! single sigmoid unit. Training minimizes mean binary cross-entropy with plain
//! mini-batch gradient descent.
//!
//! Max-pool ties send the gradient to the first maximal position. ReLU has
//! zero subgradient at zero.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{load_jsonl, write_jsonl, EmbeddingTable};
use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};
use crate::textnorm::tokenize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnConfig {
    pub embed_dim: usize,
    /// Window sizes; `num_kernels` kernels are created for each.
    pub windows: Vec<usize>,
    pub num_kernels: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            embed_dim: 64,
            windows: vec![3],
            num_kernels: 100,
            seed: 42,
            learning_rate: 0.01,
            epochs: 5,
            batch_size: 16,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 2 {
            return Err(Error::invalid("embed_dim must be at least 2"));
        }
        if self.windows.is_empty() || self.windows.contains(&0) {
            return Err(Error::invalid("every window must be at least 1"));
        }
        if self.num_kernels == 0 {
            return Err(Error::invalid("num_kernels must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        Ok(())
    }
}

/// One convolution filter: `window x dim` weights (row-major) and a bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<T> {
    pub window: usize,
    pub weights: Vec<T>,
    pub bias: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams<T> {
    dim: usize,
    kernels: Vec<Kernel<T>>,
    out_weights: Vec<T>,
    out_bias: T,
}

impl<T: Scalar> CnnParams<T> {
    pub fn new(dim: usize, kernels: Vec<Kernel<T>>, out_weights: Vec<T>, out_bias: T) -> Result<Self> {
        let p = CnnParams {
            dim,
            kernels,
            out_weights,
            out_bias,
        };
        p.validate()?;
        Ok(p)
    }

    /// All-zero parameters with the shapes implied by `cfg`.
    pub fn zeros(cfg: &CnnConfig) -> Result<Self> {
        cfg.validate()?;
        let kernels: Vec<Kernel<T>> = cfg
            .windows
            .iter()
            .flat_map(|&n| {
                (0..cfg.num_kernels).map(move |_| Kernel {
                    window: n,
                    weights: vec![T::zero(); n * cfg.embed_dim],
                    bias: T::zero(),
                })
            })
            .collect();
        let k = kernels.len();
        CnnParams::new(cfg.embed_dim, kernels, vec![T::zero(); k], T::zero())
    }

    /// Kernels and biases uniform in `+-1/sqrt(n D)`, output weights uniform in
    /// `+-1/sqrt(K)`, output bias zero.
    pub fn init(cfg: &CnnConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self::init_with(cfg, &mut rng)
    }

    fn init_with(cfg: &CnnConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut p = Self::zeros(cfg)?;
        for k in &mut p.kernels {
            let a = 1.0 / ((k.window * cfg.embed_dim) as f64).sqrt();
            for w in &mut k.weights {
                *w = T::of(rng.gen_range(-a..a));
            }
            k.bias = T::of(rng.gen_range(-a..a));
        }
        let a = 1.0 / (p.kernels.len() as f64).sqrt();
        for w in &mut p.out_weights {
            *w = T::of(rng.gen_range(-a..a));
        }
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::invalid("embedding dim must be at least 2"));
        }
        if self.kernels.is_empty() {
            return Err(Error::invalid("model has no kernels"));
        }
        if self.out_weights.len() != self.kernels.len() {
            return Err(Error::invalid(format!(
                "{} output weights for {} kernels",
                self.out_weights.len(),
                self.kernels.len()
            )));
        }
        for (i, k) in self.kernels.iter().enumerate() {
            if k.window == 0 || k.weights.len() != k.window * self.dim {
                return Err(Error::invalid(format!(
                    "kernel {i}: {} weights for window {} and dim {}",
                    k.weights.len(),
                    k.window,
                    self.dim
                )));
            }
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("parameters contain NaN or Inf".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kernels(&self) -> &[Kernel<T>] {
        &self.kernels
    }

    pub fn out_weights(&self) -> &[T] {
        &self.out_weights
    }

    pub fn out_bias(&self) -> T {
        self.out_bias
    }

    pub fn max_window(&self) -> usize {
        self.kernels.iter().map(|k| k.window).max().unwrap_or(1)
    }

    pub fn is_finite(&self) -> bool {
        self.out_bias.is_finite()
            && self.out_weights.iter().all(|w| w.is_finite())
            && self
                .kernels
                .iter()
                .all(|k| k.bias.is_finite() && k.weights.iter().all(|w| w.is_finite()))
    }

    /// Total scalar parameter count.
    pub fn num_params(&self) -> usize {
        self.kernels.iter().map(|k| k.weights.len() + 1).sum::<usize>() + self.out_weights.len() + 1
    }

    /// Parameters flattened as: each kernel's weights then bias, then output
    /// weights, then output bias.
    pub fn to_flat(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.num_params());
        for k in &self.kernels {
            v.extend_from_slice(&k.weights);
            v.push(k.bias);
        }
        v.extend_from_slice(&self.out_weights);
        v.push(self.out_bias);
        v
    }

    fn visit_mut(&mut self, mut f: impl FnMut(&mut T)) {
        for k in &mut self.kernels {
            k.weights.iter_mut().for_each(&mut f);
            f(&mut k.bias);
        }
        self.out_weights.iter_mut().for_each(&mut f);
        f(&mut self.out_bias);
    }

    fn flat_mut(&mut self, idx: usize) -> &mut T {
        let mut i = idx;
        for k in &mut self.kernels {
            let n = k.weights.len();
            if i < n {
                return &mut k.weights[i];
            }
            if i == n {
                return &mut k.bias;
            }
            i -= n + 1;
        }
        if i < self.out_weights.len() {
            return &mut self.out_weights[i];
        }
        assert_eq!(i, self.out_weights.len(), "parameter index {idx} out of range");
        &mut self.out_bias
    }

    fn zeroed(&self) -> Self {
        let mut g = self.clone();
        g.visit_mut(|x| *x = T::zero());
        g
    }

    /// `self += scale * other`, shapes assumed equal.
    fn axpy(&mut self, scale: T, other: &Self) {
        for (k, o) in self.kernels.iter_mut().zip(&other.kernels) {
            for (w, g) in k.weights.iter_mut().zip(&o.weights) {
                *w = *w + scale * *g;
            }
            k.bias = k.bias + scale * o.bias;
        }
        for (w, g) in self.out_weights.iter_mut().zip(&other.out_weights) {
            *w = *w + scale * *g;
        }
        self.out_bias = self.out_bias + scale * other.out_bias;
    }

    /// Reorders kernels together with their output weights.
    pub fn permuted(&self, order: &[usize]) -> Self {
        CnnParams {
            dim: self.dim,
            kernels: order.iter().map(|&i| self.kernels[i].clone()).collect(),
            out_weights: order.iter().map(|&i| self.out_weights[i]).collect(),
            out_bias: self.out_bias,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_jsonl(path, &[WeightsLine::from_params(self)])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let lines: Vec<WeightsLine> = load_jsonl(path)?;
        match lines.as_slice() {
            [line] => line.to_params(),
            _ => Err(Error::Schema {
                path: path.to_path_buf(),
                line: lines.len().min(2),
                message: format!("expected exactly one weights object, found {}", lines.len()),
            }),
        }
    }
}

/// On-disk form of [`CnnParams`]: one JSON object per file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct WeightsLine {
    kernels: Vec<Vec<Vec<f64>>>,
    biases: Vec<f64>,
    out_weights: Vec<f64>,
    out_bias: f64,
}

impl WeightsLine {
    fn from_params<T: Scalar>(p: &CnnParams<T>) -> Self {
        WeightsLine {
            kernels: p
                .kernels
                .iter()
                .map(|k| {
                    k.weights
                        .chunks(p.dim)
                        .map(|row| row.iter().map(|x| x.as_f64()).collect())
                        .collect()
                })
                .collect(),
            biases: p.kernels.iter().map(|k| k.bias.as_f64()).collect(),
            out_weights: p.out_weights.iter().map(|x| x.as_f64()).collect(),
            out_bias: p.out_bias.as_f64(),
        }
    }

    fn to_params<T: Scalar>(&self) -> Result<CnnParams<T>> {
        let dim = self
            .kernels
            .first()
            .and_then(|k| k.first())
            .map(Vec::len)
            .ok_or_else(|| Error::invalid("weights file has no kernels"))?;
        if self.biases.len() != self.kernels.len() {
            return Err(Error::invalid(format!(
                "{} biases for {} kernels",
                self.biases.len(),
                self.kernels.len()
            )));
        }
        let mut kernels = Vec::with_capacity(self.kernels.len());
        for (i, (rows, &b)) in self.kernels.iter().zip(&self.biases).enumerate() {
            if rows.iter().any(|r| r.len() != dim) {
                return Err(Error::invalid(format!("kernel {i} has ragged rows")));
            }
            kernels.push(Kernel {
                window: rows.len(),
                weights: rows.iter().flatten().map(|&x| T::of(x)).collect(),
                bias: T::of(b),
            });
        }
        CnnParams::new(
            dim,
            kernels,
            self.out_weights.iter().map(|&x| T::of(x)).collect(),
            T::of(self.out_bias),
        )
    }
}

/// `L x D` input rows (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceInput<T> {
    dim: usize,
    rows: Vec<T>,
}

impl<T: Scalar> SequenceInput<T> {
    pub fn new(dim: usize, rows: Vec<T>) -> Result<Self> {
        if dim == 0 || rows.is_empty() || rows.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "{} values do not form a nonempty sequence of {dim}-dim rows",
                rows.len()
            )));
        }
        Ok(SequenceInput { dim, rows })
    }

    /// Context rows, one zero separator row, then caption rows.
    pub fn from_parts(dim: usize, context: &[Vec<T>], caption: &[Vec<T>]) -> Result<Self> {
        let mut rows = Vec::with_capacity((context.len() + caption.len() + 1) * dim);
        for r in context {
            if r.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: r.len(),
                });
            }
            rows.extend_from_slice(r);
        }
        rows.extend(std::iter::repeat(T::zero()).take(dim));
        for r in caption {
            if r.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: r.len(),
                });
            }
            rows.extend_from_slice(r);
        }
        SequenceInput::new(dim, rows)
    }

    /// Looks up every token of both texts in `emb`.
    pub fn from_texts(context: &str, caption: &str, emb: &EmbeddingTable<T>) -> Result<Self> {
        let lookup = |text: &str| -> Result<Vec<Vec<T>>> {
            tokenize(text)
                .iter()
                .map(|t| emb.require(t).map(<[T]>::to_vec))
                .collect()
        };
        SequenceInput::from_parts(emb.dim(), &lookup(context)?, &lookup(caption)?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows `start..start+n`, zero-padded past the end.
    fn window_into(&self, start: usize, n: usize, buf: &mut Vec<T>) {
        buf.clear();
        let end = (start + n).min(self.len());
        buf.extend_from_slice(&self.rows[start * self.dim..end * self.dim]);
        buf.resize(n * self.dim, T::zero());
    }
}

/// Output of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward<T> {
    pub probability: T,
    pub logit: T,
    pub feature_maps: Vec<Vec<T>>,
    pub pooled: Vec<T>,
    /// First position attaining each kernel's maximum.
    pub argmax: Vec<usize>,
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn forward<T: Scalar>(params: &CnnParams<T>, input: &SequenceInput<T>) -> Result<Forward<T>> {
    if params.dim != input.dim {
        return Err(Error::DimMismatch {
            expected: params.dim,
            actual: input.dim,
        });
    }
    let mut buf = Vec::new();
    let k = params.kernels.len();
    let mut feature_maps = Vec::with_capacity(k);
    let mut pooled = Vec::with_capacity(k);
    let mut argmax = Vec::with_capacity(k);
    for kernel in &params.kernels {
        let positions = input.len().max(kernel.window) - kernel.window + 1;
        let mut map = Vec::with_capacity(positions);
        let (mut best, mut best_i) = (T::neg_infinity(), 0);
        for i in 0..positions {
            input.window_into(i, kernel.window, &mut buf);
            let z = (dot(&kernel.weights, &buf) + kernel.bias).max(T::zero());
            if z > best {
                best = z;
                best_i = i;
            }
            map.push(z);
        }
        feature_maps.push(map);
        pooled.push(best);
        argmax.push(best_i);
    }
    let logit = dot(&params.out_weights, &pooled) + params.out_bias;
    Ok(Forward {
        probability: sigmoid(logit),
        logit,
        feature_maps,
        pooled,
        argmax,
    })
}

fn prob_clamp<T: Scalar>() -> T {
    T::of(1e-12).max(T::epsilon())
}

fn clamped<T: Scalar>(p: T) -> (T, bool) {
    let c = prob_clamp::<T>();
    if p < c {
        (c, true)
    } else if p > T::one() - c {
        (T::one() - c, true)
    } else {
        (p, false)
    }
}

fn bce<T: Scalar>(p: T, label: u8) -> T {
    let (p, _) = clamped(p);
    if label == 1 {
        -p.ln()
    } else {
        -(T::one() - p).ln()
    }
}

fn check_label(label: u8) -> Result<()> {
    if label > 1 {
        return Err(Error::invalid(format!("label {label} is not 0 or 1")));
    }
    Ok(())
}

/// Mean binary cross-entropy with probabilities clamped to `[1e-12, 1 - 1e-12]`.
pub fn loss<T: Scalar>(params: &CnnParams<T>, batch: &[(SequenceInput<T>, u8)]) -> Result<T> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut total = T::zero();
    for (x, y) in batch {
        check_label(*y)?;
        total = total + bce(forward(params, x)?.probability, *y);
    }
    Ok(total / T::of(batch.len() as f64))
}

/// Gradient of the single-example loss with respect to every parameter,
/// returned in the same shape as `params`.
pub fn gradient<T: Scalar>(
    params: &CnnParams<T>,
    input: &SequenceInput<T>,
    label: u8,
) -> Result<CnnParams<T>> {
    let mut g = params.zeroed();
    accumulate_gradient(params, input, label, T::one(), &mut g)?;
    Ok(g)
}

fn accumulate_gradient<T: Scalar>(
    params: &CnnParams<T>,
    input: &SequenceInput<T>,
    label: u8,
    scale: T,
    g: &mut CnnParams<T>,
) -> Result<()> {
    check_label(label)?;
    let fwd = forward(params, input)?;
    let (_, saturated) = clamped(fwd.probability);
    if saturated {
        return Ok(());
    }
    let dlogit = scale * (fwd.probability - T::of(f64::from(label)));
    g.out_bias = g.out_bias + dlogit;
    let mut buf = Vec::new();
    for (k, kernel) in params.kernels.iter().enumerate() {
        g.out_weights[k] = g.out_weights[k] + dlogit * fwd.pooled[k];
        if fwd.pooled[k] <= T::zero() {
            continue;
        }
        let dz = dlogit * params.out_weights[k];
        input.window_into(fwd.argmax[k], kernel.window, &mut buf);
        let gk = &mut g.kernels[k];
        for (w, &x) in gk.weights.iter_mut().zip(&buf) {
            *w = *w + dz * x;
        }
        gk.bias = gk.bias + dz;
    }
    Ok(())
}

/// Mean gradient over a batch.
pub fn batch_gradient<T: Scalar>(
    params: &CnnParams<T>,
    batch: &[(SequenceInput<T>, u8)],
) -> Result<CnnParams<T>> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut g = params.zeroed();
    let scale = T::one() / T::of(batch.len() as f64);
    for (x, y) in batch {
        accumulate_gradient(params, x, *y, scale, &mut g)?;
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck<T> {
    pub max_relative_error: T,
    /// Flat index (see [`CnnParams::to_flat`]) of the worst component.
    pub worst_index: usize,
    pub analytic: T,
    pub numeric: T,
}

/// Compares [`gradient`] with central finite differences of the example loss.
/// Relative error is `|a - f| / max(|a|, |f|, 1e-8)`.
pub fn grad_check<T: Scalar>(
    params: &CnnParams<T>,
    input: &SequenceInput<T>,
    label: u8,
    eps: T,
) -> Result<GradCheck<T>> {
    if !(eps > T::zero() && eps.is_finite()) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {eps}")));
    }
    let analytic = gradient(params, input, label)?.to_flat();
    let example = [(input.clone(), label)];
    let mut probe = params.clone();
    let floor = T::of(1e-8);
    let two = T::of(2.0);
    let mut report = GradCheck {
        max_relative_error: T::zero(),
        worst_index: 0,
        analytic: T::zero(),
        numeric: T::zero(),
    };
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *probe.flat_mut(i);
        *probe.flat_mut(i) = orig + eps;
        let up = loss(&probe, &example)?;
        *probe.flat_mut(i) = orig - eps;
        let down = loss(&probe, &example)?;
        *probe.flat_mut(i) = orig;
        let f = (up - down) / (two * eps);
        let rel = (a - f).abs() / a.abs().max(f.abs()).max(floor);
        if rel > report.max_relative_error {
            report = GradCheck {
                max_relative_error: rel,
                worst_index: i,
                analytic: a,
                numeric: f,
            };
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 0 is the initialization, then one entry per completed epoch.
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    pub params: CnnParams<T>,
    pub log: Vec<EpochLog>,
}

impl<T> TrainOutcome<T> {
    pub fn initial_loss(&self) -> f64 {
        self.log[0].loss
    }

    pub fn final_loss(&self) -> f64 {
        self.log.last().expect("log has the initial entry").loss
    }
}

/// Fraction of examples where `p >= 0.5` agrees with the label.
pub fn accuracy<T: Scalar>(params: &CnnParams<T>, data: &[(SequenceInput<T>, u8)]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    let half = T::of(0.5);
    let mut hits = 0usize;
    for (x, y) in data {
        let p = forward(params, x)?.probability;
        hits += usize::from(u8::from(p >= half) == *y);
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Mini-batch gradient descent. The seed drives both initialization and the
/// per-epoch shuffle, so identical inputs give bit-identical parameters.
pub fn train<T: Scalar>(data: &[(SequenceInput<T>, u8)], cfg: &CnnConfig) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if let Some((x, _)) = data.iter().find(|(x, _)| x.dim() != cfg.embed_dim) {
        return Err(Error::DimMismatch {
            expected: cfg.embed_dim,
            actual: x.dim(),
        });
    }
    for (_, y) in data {
        check_label(*y)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = CnnParams::init_with(cfg, &mut rng)?;
    let lr = T::of(cfg.learning_rate);
    let mut log = vec![EpochLog {
        epoch: 0,
        loss: loss(&params, data)?.as_f64(),
        accuracy: accuracy(&params, data)?,
    }];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch: Vec<(SequenceInput<T>, u8)> = Vec::with_capacity(cfg.batch_size);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            let g = batch_gradient(&params, &batch)?;
            params.axpy(-lr, &g);
            if !params.is_finite() {
                return Err(Error::NonFinite(format!(
                    "parameters became non-finite at epoch {epoch}, batch {b}"
                )));
            }
        }
        let l = loss(&params, data)?;
        if !l.is_finite() {
            return Err(Error::NonFinite(format!("loss is {l} after epoch {epoch}")));
        }
        log.push(EpochLog {
            epoch,
            loss: l.as_f64(),
            accuracy: accuracy(&params, data)?,
        });
    }
    Ok(TrainOutcome { params, log })
}

/// Synthetic related/unrelated sequences built from toy token embeddings.
///
/// Every sample has 1-3 context tokens and 4-8 caption tokens drawn from a
/// fixed vocabulary. Positives (every other sample) get the marker token
/// inserted at a random caption position; negatives never contain it.
pub fn separable_dataset(
    samples: usize,
    dim: usize,
    seed: u64,
) -> Result<Vec<(SequenceInput<f64>, u8)>> {
    separable_dataset_scaled(samples, dim, seed, MARKER_NORM)
}

pub const MARKER_NORM: f64 = 10.0;

pub fn separable_dataset_scaled(
    samples: usize,
    dim: usize,
    seed: u64,
    marker_norm: f64,
) -> Result<Vec<(SequenceInput<f64>, u8)>> {
    use crate::toy_embedder::embed_token;
    const MARKER: &str = "zebra";
    let vocab: Vec<Vec<f64>> = (0..40)
        .map(|i| embed_token(&format!("word{i}"), dim, seed))
        .collect::<Result<_>>()?;
    let marker: Vec<f64> = embed_token::<f64>(MARKER, dim, seed)?
        .into_iter()
        .map(|x| x * marker_norm)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(samples);
    for s in 0..samples {
        let label = u8::from(s % 2 == 0);
        let ctx: Vec<Vec<f64>> = (0..rng.gen_range(1..=3))
            .map(|_| vocab[rng.gen_range(0..vocab.len())].clone())
            .collect();
        let mut cap: Vec<Vec<f64>> = (0..rng.gen_range(4..=8))
            .map(|_| vocab[rng.gen_range(0..vocab.len())].clone())
            .collect();
        if label == 1 {
            let at = rng.gen_range(0..=cap.len());
            cap.insert(at, marker.clone());
        }
        out.push((SequenceInput::from_parts(dim, &ctx, &cap)?, label));
    }
    Ok(out)
}
