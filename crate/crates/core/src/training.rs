//! Property-driven training: prediction loss plus the worst-case logical
//! loss over an ε-cube, balanced by gradient norms and optimized with AdamW.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{Arith, Plain, Tape};
use crate::backends::{backend_eval_with, Backend};
use crate::constraints::{sample_formula, ConstraintSpec, Target};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::logic::formula::Formula;
use crate::models::{argmax, forward, forward_input_with, forward_with, Network};

/// Upper bound on the balancing weight.
pub const LAMBDA_CAP: f64 = 1e6;

/// Axis-aligned input region.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl InputBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::Contract("box bounds must be finite with lower <= upper".into()));
        }
        Ok(InputBox { lower, upper })
    }

    /// The ε-cube around `x` intersected with `[lo, hi]`.
    pub fn around(x: &[f64], eps: f64, lo: &[f64], hi: &[f64]) -> Result<Self> {
        if !(eps >= 0.0) {
            return Err(Error::Contract(format!("radius must be non-negative, got {eps}")));
        }
        if x.len() != lo.len() || x.len() != hi.len() {
            return Err(Error::DimensionMismatch { expected: lo.len(), got: x.len() });
        }
        let lower = x.iter().zip(lo).map(|(v, l)| (v - eps).max(*l)).collect();
        let upper = x.iter().zip(hi).map(|(v, h)| (v + eps).min(*h)).collect();
        InputBox::new(lower, upper)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| l + 0.5 * (u - l)).collect()
    }

    /// Index and width of the longest edge, lowest index on ties.
    pub fn longest_edge(&self) -> (usize, f64) {
        let mut best = (0, 0.0);
        for (i, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if u - l > best.1 {
                best = (i, u - l);
            }
        }
        best
    }

    /// Halves the box at the midpoint of coordinate `i`.
    pub fn split(&self, i: usize) -> (InputBox, InputBox) {
        let mid = self.lower[i] + 0.5 * (self.upper[i] - self.lower[i]);
        let mut a = self.clone();
        let mut b = self.clone();
        a.upper[i] = mid;
        b.lower[i] = mid;
        (a, b)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), u)| v >= l && v <= u)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Uniform point of the box.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| if u > l { rng.random_range(l..=u) } else { l })
            .collect()
    }
}

/// Cross-entropy over any [`Arith`], shifted by the largest logit.
pub fn cross_entropy_with<A: Arith>(ar: &mut A, logits: &[A::V], class: usize) -> A::V {
    let m = logits.iter().map(|&z| ar.value(z)).fold(f64::NEG_INFINITY, f64::max);
    let shift = ar.constant(m);
    let exps: Vec<A::V> = logits
        .iter()
        .map(|&z| {
            let d = ar.sub(z, shift);
            ar.exp(d)
        })
        .collect();
    let s = ar.sum(&exps);
    let l = ar.ln(s);
    let lse = ar.add(l, shift);
    ar.sub(lse, logits[class])
}

/// `-log softmax(logits)[class]`.
pub fn cross_entropy(logits: &[f64], class: usize) -> f64 {
    cross_entropy_with(&mut Plain, logits, class)
}

/// `log(1 + e^z)`, stable for large `|z|`.
fn softplus_with<A: Arith>(ar: &mut A, z: A::V) -> A::V {
    let nz = ar.neg(z);
    let abs = ar.max2(z, nz);
    let na = ar.neg(abs);
    let e = ar.exp(na);
    let e1 = ar.add_const(e, 1.0);
    let l = ar.ln(e1);
    let r = ar.relu(z);
    ar.add(r, l)
}

/// Mean per-label logistic loss; label `j` is predicted present when
/// `y_j <= 0`, i.e. its logit is `-y_j`.
pub fn multilabel_loss_with<A: Arith>(ar: &mut A, outputs: &[A::V], present: &[bool]) -> A::V {
    let terms: Vec<A::V> = outputs
        .iter()
        .zip(present)
        .map(|(&y, &t)| {
            let z = ar.neg(y);
            let sp = softplus_with(ar, z);
            if t {
                ar.sub(sp, z)
            } else {
                sp
            }
        })
        .collect();
    let s = ar.sum(&terms);
    ar.scale(s, 1.0 / outputs.len() as f64)
}

/// Prediction loss for either kind of target.
pub fn prediction_loss_with<A: Arith>(ar: &mut A, outputs: &[A::V], target: &Target) -> A::V {
    match target {
        Target::Class(c) => cross_entropy_with(ar, outputs, *c),
        Target::Labels(p) => multilabel_loss_with(ar, outputs, p),
    }
}

/// Whether the prediction at `outputs` matches `target`: argmax (lowest index
/// on ties) for classes, exact match of `y_j <= 0` for multi-label targets.
pub fn prediction_correct(outputs: &[f64], target: &Target) -> bool {
    match target {
        Target::Class(c) => argmax(outputs) == *c,
        Target::Labels(p) => outputs.iter().zip(p).all(|(&y, &t)| (y <= 0.0) == t),
    }
}

/// Fraction of samples predicted correctly.
pub fn accuracy(net: &Network, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut ok = 0usize;
    for (x, t) in data.inputs.iter().zip(&data.targets) {
        ok += prediction_correct(&forward(net, x)?, t) as usize;
    }
    Ok(ok as f64 / data.len() as f64)
}

/// Training method: plain supervised learning or a differentiable logic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// `λ ≡ 0`, no inner attack.
    Baseline,
    Logic(Backend),
}

impl Method {
    pub fn backend(&self) -> Option<&Backend> {
        match self {
            Method::Baseline => None,
            Method::Logic(b) => Some(b),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Baseline => write!(f, "baseline"),
            Method::Logic(b) => write!(f, "{b}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "baseline" {
            Ok(Method::Baseline)
        } else {
            Ok(Method::Logic(s.parse()?))
        }
    }
}

/// Projected gradient ascent settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgdConfig {
    pub steps: usize,
    pub restarts: usize,
    pub step_size: f64,
}

impl PgdConfig {
    /// Step size `2.5 ε / steps`.
    pub fn with_default_step(eps: f64, steps: usize, restarts: usize) -> Self {
        let step_size = if steps == 0 { 0.0 } else { 2.5 * eps / steps as f64 };
        PgdConfig { steps, restarts, step_size }
    }
}

/// Objective for [`pgd_attack`]: value and gradient at a point.
pub type Objective<'a> = dyn FnMut(&[f64]) -> Result<(f64, Vec<f64>)> + 'a;

/// Sign-gradient ascent on `loss` inside `bx`.
///
/// The first restart starts at `x_hat` (clamped into the box), the others at
/// uniform points of the box. Every iterate is projected back onto the box.
/// Returns the visited point with the largest loss, earliest on ties.
pub fn pgd_attack(
    x_hat: &[f64],
    bx: &InputBox,
    loss: &mut Objective<'_>,
    cfg: &PgdConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    if x_hat.len() != bx.dim() {
        return Err(Error::DimensionMismatch { expected: bx.dim(), got: x_hat.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let consider = |v: f64, x: &[f64], best: &mut Option<(f64, Vec<f64>)>| {
        let better = match best {
            None => true,
            Some((bv, _)) => v > *bv || (bv.is_nan() && !v.is_nan()),
        };
        if better {
            *best = Some((v, x.to_vec()));
        }
    };
    for r in 0..cfg.restarts.max(1) {
        let mut x = if r == 0 {
            let mut x = x_hat.to_vec();
            bx.clamp(&mut x);
            x
        } else {
            bx.sample(&mut rng)
        };
        let (mut v, mut g) = loss(&x)?;
        consider(v, &x, &mut best);
        for _ in 0..cfg.steps {
            for (xi, gi) in x.iter_mut().zip(&g) {
                if gi.is_finite() && *gi != 0.0 {
                    *xi += cfg.step_size * gi.signum();
                }
            }
            bx.clamp(&mut x);
            (v, g) = loss(&x)?;
            consider(v, &x, &mut best);
        }
    }
    Ok(best.expect("at least one restart").1)
}

/// Logical loss of `phi` at input `x` and its gradient in `x`.
pub fn logic_loss_input_grad(
    net: &Network,
    backend: &Backend,
    phi: &Formula,
    x: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::with_capacity(4 * net.params().len());
    let xs: Vec<_> = x.iter().map(|&v| tape.input(v)).collect();
    let outs = forward_input_with(&mut tape, net, &xs)?;
    let root = backend_eval_with(&mut tape, backend, phi, &[], &outs)?;
    let v = tape.value(root);
    Ok((v, sanitize(tape.gradient(root))))
}

/// Logical loss of `phi` at `x` on plain floats.
pub fn logic_loss(net: &Network, backend: &Backend, phi: &Formula, x: &[f64]) -> Result<f64> {
    let mut pl = Plain;
    let outs = forward_input_with(&mut pl, net, x)?;
    backend_eval_with(&mut pl, backend, phi, &[], &outs)
}

/// Worst point of the ε-box around `x_hat` for the given logical loss.
pub fn attack_sample(
    net: &Network,
    backend: &Backend,
    phi: &Formula,
    x_hat: &[f64],
    bx: &InputBox,
    cfg: &PgdConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut obj = |x: &[f64]| logic_loss_input_grad(net, backend, phi, x);
    pgd_attack(x_hat, bx, &mut obj, cfg, seed)
}

fn sanitize(mut g: Vec<f64>) -> Vec<f64> {
    for v in &mut g {
        if !v.is_finite() {
            *v = 0.0;
        }
    }
    g
}

/// `λ = α ‖∇L_pred‖ / ‖∇L_con‖`, zero when the constraint gradient vanishes
/// and capped at [`LAMBDA_CAP`].
pub fn balance_lambda(grad_pred_norm: f64, grad_constraint_norm: f64, alpha: f64) -> f64 {
    if grad_constraint_norm == 0.0 {
        return 0.0;
    }
    (alpha * grad_pred_norm / grad_constraint_norm).min(LAMBDA_CAP)
}

/// Moment estimates of AdamW.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// Hyperparameters of [`adamw_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, weight_decay: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One AdamW update with decoupled weight decay and bias correction.
pub fn adamw_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: grads.len() });
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..n {
        let g = grads[i];
        params[i] -= cfg.lr * cfg.weight_decay * params[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Deterministic 64-bit mixing of several seed components.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Settings of [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Balance coefficient `α ∈ (0, 1]`.
    pub alpha: f64,
    /// Radius of the ε-cube.
    pub eps: f64,
    pub pgd_steps: usize,
    pub pgd_restarts: usize,
    /// `None` means `2.5 ε / pgd_steps`.
    pub pgd_step_size: Option<f64>,
    pub seed: u64,
    pub method: Method,
    pub constraint: ConstraintSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            lr: 1e-3,
            weight_decay: 1e-4,
            alpha: 0.5,
            eps: 0.05,
            pgd_steps: 20,
            pgd_restarts: 2,
            pgd_step_size: None,
            seed: 0,
            method: Method::Baseline,
            constraint: ConstraintSpec::ClassificationRobustness,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("lr must be positive and weight_decay non-negative");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return bad("eps must be non-negative");
        }
        if let Some(s) = self.pgd_step_size {
            if !(s >= 0.0) {
                return bad("pgd_step_size must be non-negative");
            }
        }
        Ok(())
    }

    pub fn pgd(&self) -> PgdConfig {
        match self.pgd_step_size {
            Some(step_size) => PgdConfig { steps: self.pgd_steps, restarts: self.pgd_restarts, step_size },
            None => PgdConfig::with_default_step(self.eps, self.pgd_steps, self.pgd_restarts),
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, weight_decay: self.weight_decay, ..AdamConfig::default() }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value {v:?} for {k}")))
        }
        match key {
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "eps" => self.eps = num(key, value)?,
            "pgd_steps" => self.pgd_steps = num(key, value)?,
            "pgd_restarts" => self.pgd_restarts = num(key, value)?,
            "pgd_step_size" => {
                self.pgd_step_size = if value == "auto" { None } else { Some(num(key, value)?) }
            }
            "seed" => self.seed = num(key, value)?,
            "backend" | "method" => self.method = value.parse()?,
            "constraint" => self.constraint = value.parse()?,
            other => return Err(Error::Config(format!("unknown training key {other:?}"))),
        }
        Ok(())
    }

    /// Parses flat `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (k, v) in parse_key_values(text)? {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Splits `key = value` lines, skipping blanks and `#` comments.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Averages of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss_pred: f64,
    pub loss_constraint: f64,
    pub lambda: f64,
    pub train_acc: f64,
}

/// Renders epoch logs as CSV.
pub fn epoch_log_csv(logs: &[EpochLog]) -> String {
    let mut s = String::from("epoch,loss_pred,loss_constraint,lambda,train_acc\n");
    for l in logs {
        s.push_str(&format!(
            "{},{:.9},{:.9},{:.9},{:.6}\n",
            l.epoch, l.loss_pred, l.loss_constraint, l.lambda, l.train_acc
        ));
    }
    s
}

struct SampleGrads {
    loss_pred: f64,
    grad_pred: Vec<f64>,
    loss_con: f64,
    grad_con: Vec<f64>,
}

/// Formula used for the logical loss of one sample.
pub fn training_formula(backend: &Backend, spec: &ConstraintSpec, n: usize, target: &Target) -> Result<Formula> {
    Ok(backend.training_formula(&sample_formula(spec, n, target)?))
}

fn sample_grads(
    net: &Network,
    x: &[f64],
    target: &Target,
    logic: Option<(&Backend, &Formula, &InputBox)>,
    pgd: &PgdConfig,
    seed: u64,
) -> Result<SampleGrads> {
    let sizes = net.sizes();
    let mut tape = Tape::with_capacity(8 * net.params().len());
    let params: Vec<_> = net.params().iter().map(|&p| tape.input(p)).collect();
    let xs: Vec<_> = x.iter().map(|&v| tape.constant(v)).collect();
    let outs = forward_with(&mut tape, sizes, &params, &xs)?;
    let pred = prediction_loss_with(&mut tape, &outs, target);
    let loss_pred = tape.value(pred);
    let grad_pred = sanitize(tape.gradient(pred));
    let (loss_con, grad_con) = match logic {
        None => (0.0, vec![0.0; params.len()]),
        Some((backend, phi, bx)) => {
            let adv = attack_sample(net, backend, phi, x, bx, pgd, seed)?;
            let xs: Vec<_> = adv.iter().map(|&v| tape.constant(v)).collect();
            let outs = forward_with(&mut tape, sizes, &params, &xs)?;
            let con = backend_eval_with(&mut tape, backend, phi, &[], &outs)?;
            (tape.value(con), sanitize(tape.gradient(con)))
        }
    };
    Ok(SampleGrads { loss_pred, grad_pred, loss_con, grad_con })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Trains `net` on `data`.
///
/// Each batch takes the mean prediction loss and, unless the method is the
/// baseline, the mean logical loss at PGD-found worst points of each
/// sample's ε-cube. The two mean gradients are combined with
/// [`balance_lambda`] and applied with AdamW. Samples of a batch are
/// processed in parallel and merged in index order, so results do not
/// depend on the thread count.
pub fn train(net: &Network, data: &Dataset, cfg: &TrainConfig) -> Result<(Network, Vec<EpochLog>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if data.input_dim() != net.input_dim() {
        return Err(Error::DimensionMismatch { expected: net.input_dim(), got: data.input_dim() });
    }
    let n = net.output_dim();
    if n != data.num_labels {
        return Err(Error::DimensionMismatch { expected: n, got: data.num_labels });
    }
    let formulas: Option<Vec<Formula>> = match cfg.method.backend() {
        None => None,
        Some(b) => Some(
            data.targets
                .iter()
                .map(|t| training_formula(b, &cfg.constraint, n, t))
                .collect::<Result<_>>()?,
        ),
    };
    let boxes: Vec<InputBox> = data
        .inputs
        .iter()
        .map(|x| InputBox::around(x, cfg.eps, &data.lower, &data.upper))
        .collect::<Result<_>>()?;
    let pgd = cfg.pgd();
    let adam = cfg.adam();
    let mut net = net.clone();
    let mut params = net.params().to_vec();
    let mut state = AdamState::new(params.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, epoch as u64]));
        order.shuffle(&mut rng);
        let (mut sum_pred, mut sum_con, mut sum_lambda, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let cur = &net;
            let results: Vec<Result<SampleGrads>> = chunk
                .par_iter()
                .map(|&i| {
                    let logic = match (&cfg.method, &formulas) {
                        (Method::Logic(be), Some(fs)) => Some((be, &fs[i], &boxes[i])),
                        _ => None,
                    };
                    let seed = mix_seed(&[cfg.seed, epoch as u64, b as u64, i as u64]);
                    sample_grads(cur, &data.inputs[i], &data.targets[i], logic, &pgd, seed)
                })
                .collect();
            let k = chunk.len() as f64;
            let mut gp = vec![0.0; params.len()];
            let mut gc = vec![0.0; params.len()];
            let (mut lp, mut lc) = (0.0, 0.0);
            for r in results {
                let r = r?;
                lp += r.loss_pred;
                lc += r.loss_con;
                for (a, g) in gp.iter_mut().zip(&r.grad_pred) {
                    *a += g;
                }
                for (a, g) in gc.iter_mut().zip(&r.grad_con) {
                    *a += g;
                }
            }
            for g in gp.iter_mut().chain(gc.iter_mut()) {
                *g /= k;
            }
            let lambda = match cfg.method {
                Method::Baseline => 0.0,
                Method::Logic(_) => balance_lambda(norm(&gp), norm(&gc), cfg.alpha),
            };
            let g: Vec<f64> = if lambda == 0.0 {
                gp
            } else {
                gp.iter().zip(&gc).map(|(p, c)| p + lambda * c).collect()
            };
            adamw_step(&mut params, &g, &mut state, &adam)?;
            net.set_params(params.clone())?;
            sum_pred += lp / k;
            sum_con += lc / k;
            sum_lambda += lambda;
            batches += 1;
        }
        let nb = batches as f64;
        logs.push(EpochLog {
            epoch: epoch + 1,
            loss_pred: sum_pred / nb,
            loss_constraint: sum_con / nb,
            lambda: sum_lambda / nb,
            train_acc: accuracy(&net, data)?,
        });
    }
    Ok((net, logs))
}
