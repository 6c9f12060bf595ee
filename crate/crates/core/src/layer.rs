//! A trainable single-window attention layer.
//!
//! The pipeline for one window `x` (`k x d`):
//!
//! ```text
//! q, k, v  = x W_q, x W_k, x W_v
//! y        = Σ_λ channel_λ(q, k, v)        (pre, post or baseline)
//! pooled   = column mean of y over the k rows
//! logits   = pooled W_out
//! ```
//!
//! The baseline uses the single projector `{I}`, so it has exactly the same
//! weight shapes as the decomposed variants. Mean pooling after an
//! equivariant window map makes the logits invariant under the group.
//!
//! Gradients are derived by hand; the row-softmax Jacobian is applied in
//! closed form, `dS = A ⊙ (dA − rowsum(A ⊙ dA))`.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::attention::{decompose, AttentionInput, DecompositionOutput, Variant};
use crate::error::{Error, Result};
use crate::groups::FiniteGroup;
use crate::irreps::ProjectorSet;
use crate::metrics::equivariance_tracker;
use crate::numerics::{rand_matrix, softmax_rows, Matrix, Rng};
use crate::synth::{Dataset, SequenceWindow};

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

/// One of the four weight matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Param {
    Query,
    Key,
    Value,
    Output,
}

impl Param {
    pub const ALL: [Param; 4] = [Param::Query, Param::Key, Param::Value, Param::Output];
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseadLayer {
    w_q: Matrix,
    w_k: Matrix,
    w_v: Matrix,
    w_out: Matrix,
    variant: Variant,
    projectors: ProjectorSet,
    /// Changes on every weight update; forward caches remember it.
    stamp: u64,
}

impl PseadLayer {
    /// Seeded uniform initialisation in `±1/√d`. A baseline layer replaces
    /// `projectors` with `{I}` on the same window.
    pub fn new(
        variant: Variant,
        projectors: ProjectorSet,
        feature_dim: usize,
        classes: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if feature_dim == 0 || classes == 0 {
            return Err(Error::invalid("feature_dim and classes must be positive"));
        }
        let s = 1.0 / libm::sqrt(feature_dim as f64);
        let w_q = rand_matrix(rng, feature_dim, feature_dim, s)?;
        let w_k = rand_matrix(rng, feature_dim, feature_dim, s)?;
        let w_v = rand_matrix(rng, feature_dim, feature_dim, s)?;
        let w_out = rand_matrix(rng, feature_dim, classes, s)?;
        PseadLayer::from_weights(variant, projectors, w_q, w_k, w_v, w_out)
    }

    pub fn from_weights(
        variant: Variant,
        projectors: ProjectorSet,
        w_q: Matrix,
        w_k: Matrix,
        w_v: Matrix,
        w_out: Matrix,
    ) -> Result<Self> {
        let d = w_q.rows();
        for w in [&w_q, &w_k, &w_v] {
            if w.shape() != (d, d) {
                return Err(Error::dim("PseadLayer weights", (d, d), w.shape()));
            }
        }
        if w_out.rows() != d {
            return Err(Error::dim(
                "PseadLayer output weights",
                (d, w_out.cols()),
                w_out.shape(),
            ));
        }
        let projectors = match variant {
            Variant::Baseline => ProjectorSet::identity(projectors.window())?,
            _ => projectors,
        };
        Ok(PseadLayer {
            w_q,
            w_k,
            w_v,
            w_out,
            variant,
            projectors,
            stamp: fresh_stamp(),
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn projectors(&self) -> &ProjectorSet {
        &self.projectors
    }

    pub fn window(&self) -> usize {
        self.projectors.window()
    }

    pub fn feature_dim(&self) -> usize {
        self.w_q.rows()
    }

    pub fn classes(&self) -> usize {
        self.w_out.cols()
    }

    pub fn weight(&self, p: Param) -> &Matrix {
        match p {
            Param::Query => &self.w_q,
            Param::Key => &self.w_k,
            Param::Value => &self.w_v,
            Param::Output => &self.w_out,
        }
    }

    fn weight_mut(&mut self, p: Param) -> &mut Matrix {
        self.stamp = fresh_stamp();
        match p {
            Param::Query => &mut self.w_q,
            Param::Key => &mut self.w_k,
            Param::Value => &mut self.w_v,
            Param::Output => &mut self.w_out,
        }
    }

    /// Adds `delta` to one weight entry.
    pub fn nudge(&mut self, p: Param, r: usize, c: usize, delta: f64) -> Result<()> {
        let w = self.weight_mut(p);
        let v = w.get(r, c);
        w.set(r, c, v + delta)
    }

    /// Total number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        Param::ALL
            .iter()
            .map(|&p| self.weight(p).as_slice().len())
            .sum()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.shape() != (self.window(), self.feature_dim()) {
            return Err(Error::dim(
                "layer input",
                (self.window(), self.feature_dim()),
                x.shape(),
            ));
        }
        Ok(())
    }

    fn qkv(&self, x: &Matrix) -> Result<AttentionInput> {
        self.check_input(x)?;
        AttentionInput::new(
            x.matmul(&self.w_q)?,
            x.matmul(&self.w_k)?,
            x.matmul(&self.w_v)?,
        )
    }

    /// Per-irrep channels of the attention stage for one window.
    pub fn decompose(&self, x: &Matrix) -> Result<DecompositionOutput> {
        decompose(self.variant, &self.qkv(x)?, &self.projectors)
    }

    /// The equivariant window map `x -> y` (before pooling).
    pub fn window_output(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.decompose(x)?.total)
    }

    pub fn logits(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.0)
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Vec<f64>, ForwardCache)> {
        let inp = self.qkv(x)?;
        let scale = 1.0 / libm::sqrt(inp.scale_dim() as f64);
        let (y, stage) = match self.variant {
            Variant::Pre | Variant::Baseline => {
                let mut y = Matrix::zeros(x.rows(), self.feature_dim());
                let mut channels = Vec::with_capacity(self.projectors.len());
                for item in self.projectors.items() {
                    let p = &item.projector;
                    let q = p.matmul(inp.q())?;
                    let k = p.matmul(inp.k())?;
                    let v = p.matmul(inp.v())?;
                    let a = softmax_rows(&q.matmul_transposed(&k)?.scale(scale)?)?;
                    y = y.add(&a.matmul(&v)?)?;
                    channels.push(ChannelCache { q, k, v, a });
                }
                (y, Stage::Pre(channels))
            }
            Variant::Post => {
                let a = softmax_rows(&inp.q().matmul_transposed(inp.k())?.scale(scale)?)?;
                let out = a.matmul(inp.v())?;
                let mut y = Matrix::zeros(x.rows(), self.feature_dim());
                for item in self.projectors.items() {
                    y = y.add(&item.projector.matmul(&out)?)?;
                }
                (y, Stage::Post { a })
            }
        };
        let pooled = y.column_mean();
        let logits = pooled.matmul(&self.w_out)?.into_vec();
        let cache = ForwardCache {
            stamp: self.stamp,
            x: x.clone(),
            q: inp.q().clone(),
            k: inp.k().clone(),
            v: inp.v().clone(),
            stage,
            pooled,
            scale,
        };
        Ok((logits, cache))
    }

    /// Gradients of a scalar loss given `upstream = dL/dlogits`.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<Gradients> {
        if cache.stamp != self.stamp {
            return Err(Error::Contract(
                "forward cache is stale: weights changed since the forward pass".into(),
            ));
        }
        if upstream.len() != self.classes() {
            return Err(Error::dim(
                "upstream gradient",
                (1, self.classes()),
                (1, upstream.len()),
            ));
        }
        let k = cache.x.rows();
        let d = self.feature_dim();
        let g = Matrix::row_vector(upstream)?;
        let w_out = cache.pooled.transpose().matmul(&g)?;
        let d_pooled = g.matmul_transposed(&self.w_out)?;
        let d_row = d_pooled.scale(1.0 / k as f64)?;
        let dy = Matrix::from_vec(k, d, d_row.as_slice().repeat(k))?;

        let mut dq = Matrix::zeros(k, d);
        let mut dk = Matrix::zeros(k, d);
        let mut dv = Matrix::zeros(k, d);
        match &cache.stage {
            Stage::Pre(channels) => {
                for (item, ch) in self.projectors.items().iter().zip(channels) {
                    let pt = item.projector.transpose();
                    let da = dy.matmul_transposed(&ch.v)?;
                    let dvc = ch.a.transpose().matmul(&dy)?;
                    let ds = softmax_backward(&ch.a, &da)?.scale(cache.scale)?;
                    let dqc = ds.matmul(&ch.k)?;
                    let dkc = ds.transpose().matmul(&ch.q)?;
                    dq = dq.add(&pt.matmul(&dqc)?)?;
                    dk = dk.add(&pt.matmul(&dkc)?)?;
                    dv = dv.add(&pt.matmul(&dvc)?)?;
                }
            }
            Stage::Post { a } => {
                let mut d_out = Matrix::zeros(k, d);
                for item in self.projectors.items() {
                    d_out = d_out.add(&item.projector.transpose().matmul(&dy)?)?;
                }
                let da = d_out.matmul_transposed(&cache.v)?;
                dv = a.transpose().matmul(&d_out)?;
                let ds = softmax_backward(a, &da)?.scale(cache.scale)?;
                dq = ds.matmul(&cache.k)?;
                dk = ds.transpose().matmul(&cache.q)?;
            }
        }
        let xt = cache.x.transpose();
        Ok(Gradients {
            w_q: xt.matmul(&dq)?,
            w_k: xt.matmul(&dk)?,
            w_v: xt.matmul(&dv)?,
            w_out,
        })
    }

    /// `w -= lr * grad` for all four weights.
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        for p in Param::ALL {
            let g = grads.get(p);
            self.weight_mut(p).add_scaled(-lr, g)?;
        }
        Ok(())
    }

    /// Binary cross-entropy of the first logit.
    pub fn loss(&self, x: &Matrix, label: u8) -> Result<f64> {
        let logits = self.logits(x)?;
        Ok(loss_bce(logits[0], label).0)
    }
}

/// Row-wise softmax Jacobian-vector product.
fn softmax_backward(a: &Matrix, da: &Matrix) -> Result<Matrix> {
    let (rows, cols) = a.shape();
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let ar = a.row(r);
        let gr = da.row(r);
        let inner: f64 = ar.iter().zip(gr).map(|(p, g)| p * g).sum();
        out.extend(ar.iter().zip(gr).map(|(p, g)| p * (g - inner)));
    }
    Matrix::from_vec(rows, cols, out)
}

#[derive(Clone, Debug)]
struct ChannelCache {
    q: Matrix,
    k: Matrix,
    v: Matrix,
    a: Matrix,
}

#[derive(Clone, Debug)]
enum Stage {
    Pre(Vec<ChannelCache>),
    Post { a: Matrix },
}

/// Intermediates of one forward pass, valid until the layer's weights change.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    stamp: u64,
    x: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    stage: Stage,
    pooled: Matrix,
    scale: f64,
}

impl ForwardCache {
    /// Column mean of the window output, `1 x d`.
    pub fn pooled(&self) -> &Matrix {
        &self.pooled
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_out: Matrix,
}

impl Gradients {
    pub fn zeros_like(layer: &PseadLayer) -> Self {
        let z = |p: Param| {
            let (r, c) = layer.weight(p).shape();
            Matrix::zeros(r, c)
        };
        Gradients {
            w_q: z(Param::Query),
            w_k: z(Param::Key),
            w_v: z(Param::Value),
            w_out: z(Param::Output),
        }
    }

    pub fn get(&self, p: Param) -> &Matrix {
        match p {
            Param::Query => &self.w_q,
            Param::Key => &self.w_k,
            Param::Value => &self.w_v,
            Param::Output => &self.w_out,
        }
    }

    fn get_mut(&mut self, p: Param) -> &mut Matrix {
        match p {
            Param::Query => &mut self.w_q,
            Param::Key => &mut self.w_k,
            Param::Value => &mut self.w_v,
            Param::Output => &mut self.w_out,
        }
    }

    pub fn accumulate(&mut self, other: &Gradients, alpha: f64) -> Result<()> {
        for p in Param::ALL {
            self.get_mut(p).add_scaled(alpha, other.get(p))?;
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        Param::ALL.iter().all(|&p| self.get(p).is_zero())
    }
}

/// Stable binary cross-entropy with logits. Returns `(loss, dloss/dlogit)`.
pub fn loss_bce(logit: f64, label: u8) -> (f64, f64) {
    let y = if label == 0 { 0.0 } else { 1.0 };
    let loss = logit.max(0.0) - logit * y + libm::log1p(libm::exp(-logit.abs()));
    (loss, sigmoid(logit) - y)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Relative gap `|a − b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Outcome of comparing analytic gradients with central differences.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradientCheck {
    /// Largest [`relative_error`] over all weight entries.
    pub max_relative: f64,
    /// Largest absolute gap `|analytic − numeric|`.
    pub max_absolute: f64,
    pub entries: usize,
}

/// Central differences of the BCE loss against `backward`, over every
/// weight entry.
pub fn gradient_check_with<B>(
    layer: &PseadLayer,
    x: &Matrix,
    label: u8,
    eps: f64,
    backward: B,
) -> Result<GradientCheck>
where
    B: Fn(&PseadLayer, &ForwardCache, &[f64]) -> Result<Gradients>,
{
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(Error::invalid(format!(
            "finite-difference step {eps} outside [1e-7, 1e-4]"
        )));
    }
    let (logits, cache) = layer.forward(x)?;
    let upstream = loss_upstream(&logits, label);
    let grads = backward(layer, &cache, &upstream)?;
    let mut report = GradientCheck::default();
    for p in Param::ALL {
        let (rows, cols) = layer.weight(p).shape();
        for r in 0..rows {
            for c in 0..cols {
                let mut plus = layer.clone();
                plus.nudge(p, r, c, eps)?;
                let mut minus = layer.clone();
                minus.nudge(p, r, c, -eps)?;
                let numeric = (plus.loss(x, label)? - minus.loss(x, label)?) / (2.0 * eps);
                let analytic = grads.get(p).get(r, c);
                report.max_relative = report.max_relative.max(relative_error(analytic, numeric));
                report.max_absolute = report.max_absolute.max((analytic - numeric).abs());
                report.entries += 1;
            }
        }
    }
    Ok(report)
}

/// Full comparison report for the layer's own backward pass.
pub fn finite_diff_report(
    layer: &PseadLayer,
    x: &Matrix,
    label: u8,
    eps: f64,
) -> Result<GradientCheck> {
    gradient_check_with(layer, x, label, eps, |l, c, g| l.backward(c, g))
}

/// Largest relative error between the analytic and central-difference
/// gradients.
///
/// With `eps = 1e-5` one ulp of the loss already shifts a difference
/// quotient by about `5e-12`, so entries whose true gradient is below
/// roughly `5e-7` (or exactly zero) can exceed `1e-5` from rounding alone.
pub fn finite_diff_check(layer: &PseadLayer, x: &Matrix, label: u8, eps: f64) -> Result<f64> {
    Ok(finite_diff_report(layer, x, label, eps)?.max_relative)
}

/// `dL/dlogits` for BCE on the first logit; other logits get zero.
fn loss_upstream(logits: &[f64], label: u8) -> Vec<f64> {
    let mut g = vec![0.0; logits.len()];
    g[0] = loss_bce(logits[0], label).1;
    g
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Must be finite and non-negative; zero freezes the weights.
    pub learning_rate: f64,
    pub seed: u64,
    pub batch_size: usize,
    /// Random inputs per group element for the per-epoch equivariance check.
    pub tracker_trials: usize,
    /// Group used by the equivariance tracker. Defaults to the layer's own
    /// projector group, which is trivial for the baseline.
    pub symmetry: Option<FiniteGroup>,
}

impl TrainConfig {
    pub fn new(epochs: usize, learning_rate: f64, seed: u64) -> Self {
        TrainConfig {
            epochs,
            learning_rate,
            seed,
            batch_size: 1,
            tracker_trials: 4,
            symmetry: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(
                "learning rate must be finite and non-negative",
            ));
        }
        if self.batch_size == 0 || self.tracker_trials == 0 {
            return Err(Error::invalid(
                "batch_size and tracker_trials must be positive",
            ));
        }
        Ok(())
    }
}

/// Metrics recorded after each epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    /// `None` when the validation split is empty.
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
    pub equivariance_max: f64,
}

/// Mean BCE loss and accuracy (threshold at logit 0) over a window set.
pub fn evaluate(layer: &PseadLayer, windows: &[SequenceWindow]) -> Result<(f64, f64)> {
    if windows.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty set"));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for w in windows {
        let logit = layer.logits(&w.features)?[0];
        loss += loss_bce(logit, w.label).0;
        if u8::from(logit > 0.0) == w.label {
            correct += 1;
        }
    }
    let n = windows.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

fn diverged(epoch: usize, err: Error) -> Error {
    match err {
        Error::Diverged { .. } => err,
        other => Error::Diverged {
            epoch,
            detail: other.to_string(),
        },
    }
}

/// Mini-batch SGD on the BCE loss. Shuffling and the equivariance tracker
/// are seeded from `cfg.seed`, so identical inputs give identical histories.
pub fn train(
    layer: &mut PseadLayer,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<Vec<EpochMetrics>> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if layer.classes() != 1 {
        return Err(Error::invalid("binary training needs a single-logit layer"));
    }
    for w in data.train.iter().chain(&data.validation) {
        layer.check_input(&w.features)?;
    }
    let symmetry = cfg
        .symmetry
        .clone()
        .unwrap_or_else(|| layer.projectors().group().clone());
    let mut shuffle_rng = Rng::derive(cfg.seed, 0);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = Gradients::zeros_like(layer);
            for &i in batch {
                let w = &data.train[i];
                let (logits, cache) = layer.forward(&w.features).map_err(|e| diverged(epoch, e))?;
                let (loss, _) = loss_bce(logits[0], w.label);
                if !loss.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        detail: format!("non-finite loss {loss}"),
                    });
                }
                let grads = layer
                    .backward(&cache, &loss_upstream(&logits, w.label))
                    .map_err(|e| diverged(epoch, e))?;
                acc.accumulate(&grads, 1.0 / batch.len() as f64)
                    .map_err(|e| diverged(epoch, e))?;
            }
            if cfg.learning_rate > 0.0 {
                layer
                    .apply_gradients(&acc, cfg.learning_rate)
                    .map_err(|e| diverged(epoch, e))?;
            }
        }
        let (train_loss, train_acc) =
            evaluate(layer, &data.train).map_err(|e| diverged(epoch, e))?;
        if !train_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("non-finite training loss {train_loss}"),
            });
        }
        let (val_loss, val_acc) = if data.validation.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(layer, &data.validation).map_err(|e| diverged(epoch, e))?;
            (Some(l), Some(a))
        };
        let mut tracker_rng = Rng::derive(cfg.seed, 1_000 + epoch as u64);
        let equivariance_max =
            equivariance_tracker(&*layer, &symmetry, &mut tracker_rng, cfg.tracker_trials)?;
        history.push(EpochMetrics {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
            equivariance_max,
        });
    }
    Ok(history)
}
