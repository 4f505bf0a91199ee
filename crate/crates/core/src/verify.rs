//! Constraint metrics: random sampling (CAcc), attacks (CSec) and complete
//! verification by input-splitting branch and bound (CSat).
//!
//! Verification decides the Boolean semantics through `⟦φ⟧_∞ <= 0`, which is
//! equivalent by soundness. An upper bound of `⟦φ⟧_∞` over a box is built
//! from affine forms of the outputs: in the input itself when every ReLU
//! is stable on the box, otherwise in the last hidden layer's activations.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::backends::Backend;
use crate::constraints::{formula_satisfied, sample_formula, ConstraintSpec, Target};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::logic::formula::Formula;
use crate::models::{forward, Network};
use crate::training::{logic_loss_input_grad, mix_seed, pgd_attack, InputBox, PgdConfig};

/// Componentwise output bounds of `net` over `bx` by interval arithmetic.
pub fn interval_bounds(net: &Network, bx: &InputBox) -> Result<(Vec<f64>, Vec<f64>)> {
    let layers = layer_bounds(net, bx)?;
    let (lo, hi) = layers.last().unwrap().clone();
    Ok((lo, hi))
}

/// Pre-activation bounds of every layer.
fn layer_bounds(net: &Network, bx: &InputBox) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    if bx.dim() != net.input_dim() {
        return Err(Error::DimensionMismatch { expected: net.input_dim(), got: bx.dim() });
    }
    let mut lo = bx.lower.clone();
    let mut hi = bx.upper.clone();
    let mut out = Vec::with_capacity(net.num_layers());
    for l in 0..net.num_layers() {
        if l > 0 {
            for v in lo.iter_mut().chain(hi.iter_mut()) {
                *v = v.max(0.0);
            }
        }
        let (nl, nh) = affine_interval(net.weights(l), net.bias(l), &lo, &hi);
        out.push((nl.clone(), nh.clone()));
        lo = nl;
        hi = nh;
    }
    Ok(out)
}

fn affine_interval(w: &[f64], b: &[f64], lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let i = lo.len();
    let mut nl = Vec::with_capacity(b.len());
    let mut nh = Vec::with_capacity(b.len());
    for (r, &br) in b.iter().enumerate() {
        let (mut a, mut z) = (br, br);
        for c in 0..i {
            let wv = w[r * i + c];
            if wv >= 0.0 {
                a += wv * lo[c];
                z += wv * hi[c];
            } else {
                a += wv * hi[c];
                z += wv * lo[c];
            }
        }
        nl.push(a);
        nh.push(z);
    }
    (nl, nh)
}

/// Bounds of `Σ coef_j z_j + c` for `z` in `[zl, zu]`, widened by a margin
/// proportional to the magnitude of the terms to absorb rounding.
fn affine_range(coef: &[f64], c: f64, zl: &[f64], zu: &[f64]) -> (f64, f64) {
    let (mut a, mut b) = (c, c);
    let mut mag = c.abs();
    for ((&k, &l), &u) in coef.iter().zip(zl).zip(zu) {
        mag += k.abs() * l.abs().max(u.abs());
        if k >= 0.0 {
            a += k * l;
            b += k * u;
        } else {
            a += k * u;
            b += k * l;
        }
    }
    let slack = 1e-10 * mag;
    (a - slack, b + slack)
}

/// Outputs as affine maps `y = A z + d` of a basis `z ∈ [zl, zu]`.
struct OutputForms {
    a: Vec<Vec<f64>>,
    d: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
}

fn output_forms(net: &Network, bx: &InputBox) -> Result<OutputForms> {
    let layers = layer_bounds(net, bx)?;
    let depth = net.num_layers();
    let hidden_stable = layers[..depth - 1]
        .iter()
        .all(|(lo, hi)| lo.iter().zip(hi).all(|(l, h)| *l >= 0.0 || *h <= 0.0));
    if hidden_stable {
        // Compose the affine layers with fixed ReLU phases.
        let m = net.input_dim();
        let mut a: Vec<Vec<f64>> = (0..m)
            .map(|r| (0..m).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
            .collect();
        let mut d = vec![0.0; m];
        for l in 0..depth {
            let (w, b) = (net.weights(l), net.bias(l));
            let i = a.len();
            let mut na = Vec::with_capacity(b.len());
            let mut nd = Vec::with_capacity(b.len());
            for (r, &br) in b.iter().enumerate() {
                let active = l == depth - 1 || layers[l].0[r] >= 0.0;
                if !active {
                    na.push(vec![0.0; m]);
                    nd.push(0.0);
                    continue;
                }
                let mut row = vec![0.0; m];
                let mut off = br;
                for k in 0..i {
                    let wv = w[r * i + k];
                    if wv != 0.0 {
                        for (x, y) in row.iter_mut().zip(&a[k]) {
                            *x += wv * y;
                        }
                        off += wv * d[k];
                    }
                }
                na.push(row);
                nd.push(off);
            }
            a = na;
            d = nd;
        }
        return Ok(OutputForms { a, d, zl: bx.lower.clone(), zu: bx.upper.clone() });
    }
    let last = depth - 1;
    let (hl, hu) = &layers[last - 1];
    let zl: Vec<f64> = hl.iter().map(|v| v.max(0.0)).collect();
    let zu: Vec<f64> = hu.iter().map(|v| v.max(0.0)).collect();
    let w = net.weights(last);
    let i = zl.len();
    let a = (0..net.output_dim()).map(|r| w[r * i..(r + 1) * i].to_vec()).collect();
    Ok(OutputForms { a, d: net.bias(last).to_vec(), zl, zu })
}

#[derive(Debug, Clone)]
enum Sym {
    Aff(Vec<f64>, f64),
    Range(f64, f64),
}

impl Sym {
    fn range(&self, f: &OutputForms) -> (f64, f64) {
        match self {
            Sym::Aff(k, c) => affine_range(k, *c, &f.zl, &f.zu),
            Sym::Range(a, b) => (*a, *b),
        }
    }

    fn neg(self) -> Sym {
        match self {
            Sym::Aff(k, c) => Sym::Aff(k.into_iter().map(|x| -x).collect(), -c),
            Sym::Range(a, b) => Sym::Range(-b, -a),
        }
    }

    fn add(self, o: Sym, f: &OutputForms) -> Sym {
        match (self, o) {
            (Sym::Aff(k1, c1), Sym::Aff(k2, c2)) => {
                Sym::Aff(k1.iter().zip(&k2).map(|(a, b)| a + b).collect(), c1 + c2)
            }
            (a, b) => {
                let (al, ah) = a.range(f);
                let (bl, bh) = b.range(f);
                Sym::Range(al + bl, ah + bh)
            }
        }
    }
}

/// Max (`max = true`) or min of several operands. An operand that dominates
/// all others keeps its affine form.
fn extremum(xs: Vec<Sym>, max: bool, f: &OutputForms) -> Sym {
    let ranges: Vec<(f64, f64)> = xs.iter().map(|s| s.range(f)).collect();
    for (i, &(l, h)) in ranges.iter().enumerate() {
        let dominates = ranges.iter().enumerate().all(|(j, &(lj, hj))| {
            j == i || if max { l >= hj } else { h <= lj }
        });
        if dominates {
            return xs.into_iter().nth(i).unwrap();
        }
    }
    let pick = |g: fn(f64, f64) -> f64, it: &mut dyn Iterator<Item = f64>| it.fold(f64::NAN, g);
    if max {
        Sym::Range(pick(f64::max, &mut ranges.iter().map(|r| r.0)), pick(f64::max, &mut ranges.iter().map(|r| r.1)))
    } else {
        Sym::Range(pick(f64::min, &mut ranges.iter().map(|r| r.0)), pick(f64::min, &mut ranges.iter().map(|r| r.1)))
    }
}

fn symbolic(phi: &Formula, f: &OutputForms) -> Result<Sym> {
    let n = f.a.len();
    let width = f.zl.len();
    Ok(match phi {
        Formula::OutputVar(i) => {
            if *i >= n {
                return Err(Error::IndexOutOfBounds { index: *i, len: n });
            }
            Sym::Aff(f.a[*i].clone(), f.d[*i])
        }
        Formula::Literal(r) => {
            if !r.is_finite() {
                return Err(Error::Contract("verification needs finite literals".into()));
            }
            Sym::Aff(vec![0.0; width], *r)
        }
        Formula::LabelVar(_) => {
            return Err(Error::Contract("verification works on label-free formulas".into()))
        }
        Formula::Not(a) => symbolic(a, f)?.neg(),
        Formula::Implies(a, b) => symbolic(b, f)?.add(symbolic(a, f)?.neg(), f),
        Formula::LinAnd(a, b) | Formula::LinOr(a, b) => symbolic(a, f)?.add(symbolic(b, f)?, f),
        Formula::SoftAnd(a, b) => extremum(vec![symbolic(a, f)?, symbolic(b, f)?], true, f),
        Formula::SoftOr(a, b) => extremum(vec![symbolic(a, f)?, symbolic(b, f)?], false, f),
        Formula::BigSoftAnd(xs) | Formula::BigSoftOr(xs) => {
            if xs.is_empty() {
                return Err(Error::Contract("empty n-ary connective".into()));
            }
            let syms = xs.iter().map(|x| symbolic(x, f)).collect::<Result<Vec<_>>>()?;
            extremum(syms, matches!(phi, Formula::BigSoftAnd(_)), f)
        }
    })
}

/// Sound bounds of `⟦φ⟧_∞` over `bx` for a label-free formula.
pub fn formula_bounds(net: &Network, bx: &InputBox, phi: &Formula) -> Result<(f64, f64)> {
    let forms = output_forms(net, bx)?;
    Ok(symbolic(phi, &forms)?.range(&forms))
}

/// Outcome of [`decide_box`].
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Verified,
    /// A concrete input violating the constraint.
    Falsified(Vec<f64>),
    Unknown,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Verified => "verified",
            Verdict::Falsified(_) => "falsified",
            Verdict::Unknown => "unknown",
        }
    }
}

/// Search settings of the verifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    /// Maximum number of boxes examined.
    pub budget: usize,
    /// Attack run once on the whole box before splitting; `None` disables it.
    pub probe: Option<PgdConfig>,
    pub seed: u64,
}

impl VerifyConfig {
    pub fn new(budget: usize) -> Self {
        VerifyConfig { budget, probe: Some(PgdConfig { steps: 10, restarts: 1, step_size: 0.0 }), seed: 0 }
    }
}

/// Decides `∀x ∈ bx. ⟦φ⟧_B` for a label-free formula.
pub fn decide_formula(net: &Network, bx: &InputBox, phi: &Formula, cfg: &VerifyConfig) -> Result<Verdict> {
    if cfg.budget == 0 {
        return Err(Error::Contract("verification budget must be at least 1".into()));
    }
    let sat = |x: &[f64]| -> Result<bool> { formula_satisfied(phi, &forward(net, x)?) };
    if bx.longest_edge().1 == 0.0 {
        let c = bx.center();
        return Ok(if sat(&c)? { Verdict::Verified } else { Verdict::Falsified(c) });
    }
    if let Some(probe) = cfg.probe {
        let step = if probe.step_size > 0.0 {
            probe.step_size
        } else {
            2.5 * bx.longest_edge().1 / probe.steps.max(1) as f64
        };
        let pcfg = PgdConfig { step_size: step, ..probe };
        let qll = Backend::qll(f64::INFINITY)?;
        let mut obj = |x: &[f64]| logic_loss_input_grad(net, &qll, phi, x);
        let x = pgd_attack(&bx.center(), bx, &mut obj, &pcfg, cfg.seed)?;
        if !sat(&x)? {
            return Ok(Verdict::Falsified(x));
        }
    }
    let mut stack = vec![bx.clone()];
    let mut nodes = 0;
    while let Some(b) = stack.pop() {
        if nodes == cfg.budget {
            return Ok(Verdict::Unknown);
        }
        nodes += 1;
        let (_, hi) = formula_bounds(net, &b, phi)?;
        if hi <= 0.0 {
            continue;
        }
        let c = b.center();
        if !sat(&c)? {
            return Ok(Verdict::Falsified(c));
        }
        let (i, w) = b.longest_edge();
        if w == 0.0 {
            continue;
        }
        // The half with the larger bound is searched first; it is the more
        // likely place for a counterexample.
        let (l, r) = b.split(i);
        let (hl, hr) = (formula_bounds(net, &l, phi)?.1, formula_bounds(net, &r, phi)?.1);
        if hr > hl {
            stack.push(l);
            stack.push(r);
        } else {
            stack.push(r);
            stack.push(l);
        }
    }
    Ok(Verdict::Verified)
}

/// Decides the constraint for one sample's box.
pub fn decide_box(
    net: &Network,
    bx: &InputBox,
    spec: &ConstraintSpec,
    target: &Target,
    cfg: &VerifyConfig,
) -> Result<Verdict> {
    let phi = sample_formula(spec, net.output_dim(), target)?;
    decide_formula(net, bx, &phi, cfg)
}

/// Per-sample verdicts and their tallies.
#[derive(Debug, Clone, PartialEq)]
pub struct VerdictCounts {
    pub verified: usize,
    pub falsified: usize,
    pub unknown: usize,
    pub verdicts: Vec<Verdict>,
}

impl VerdictCounts {
    pub fn from_verdicts(verdicts: Vec<Verdict>) -> Self {
        let count = |l: &str| verdicts.iter().filter(|v| v.label() == l).count();
        VerdictCounts {
            verified: count("verified"),
            falsified: count("falsified"),
            unknown: count("unknown"),
            verdicts,
        }
    }

    pub fn total(&self) -> usize {
        self.verdicts.len()
    }

    fn pct(&self, k: usize) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            100.0 * k as f64 / self.total() as f64
        }
    }

    pub fn verified_pct(&self) -> f64 {
        self.pct(self.verified)
    }

    pub fn falsified_pct(&self) -> f64 {
        self.pct(self.falsified)
    }

    pub fn unknown_pct(&self) -> f64 {
        self.pct(self.unknown)
    }

    /// `sample_id,verdict,witness` with witness coordinates separated by
    /// spaces.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample_id,verdict,witness\n");
        for (i, v) in self.verdicts.iter().enumerate() {
            let w = match v {
                Verdict::Falsified(x) => x.iter().map(|c| format!("{c:?}")).collect::<Vec<_>>().join(" "),
                _ => String::new(),
            };
            writeln!(s, "{i},{},{w}", v.label()).unwrap();
        }
        s
    }
}

fn sample_box(data: &Dataset, i: usize, eps: f64) -> Result<InputBox> {
    InputBox::around(&data.inputs[i], eps, &data.lower, &data.upper)
}

/// Verified satisfaction over the ε-boxes of `data`.
pub fn c_sat(net: &Network, data: &Dataset, spec: &ConstraintSpec, eps: f64, cfg: &VerifyConfig) -> Result<VerdictCounts> {
    let verdicts = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let bx = sample_box(data, i, eps)?;
            let c = VerifyConfig { seed: mix_seed(&[cfg.seed, i as u64]), ..*cfg };
            decide_box(net, &bx, spec, &data.targets[i], &c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VerdictCounts::from_verdicts(verdicts))
}

/// Attack-based security: percentage and per-sample flags.
///
/// The attack maximizes `oracle`'s logical loss; a sample is insecure if any
/// visited iterate violates the constraint.
pub fn c_sec(
    net: &Network,
    data: &Dataset,
    spec: &ConstraintSpec,
    eps: f64,
    attack: &PgdConfig,
    oracle: &Backend,
    seed: u64,
) -> Result<(f64, Vec<bool>)> {
    let n = net.output_dim();
    let flags = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let bx = sample_box(data, i, eps)?;
            let target = &data.targets[i];
            let check = sample_formula(spec, n, target)?;
            let loss = oracle.training_formula(&check);
            let mut violated = false;
            let mut obj = |x: &[f64]| {
                let r = logic_loss_input_grad(net, oracle, &loss, x)?;
                if !formula_satisfied(&check, &forward(net, x)?)? {
                    violated = true;
                }
                Ok(r)
            };
            let x = pgd_attack(&data.inputs[i], &bx, &mut obj, attack, mix_seed(&[seed, i as u64]))?;
            Ok(!violated && formula_satisfied(&check, &forward(net, &x)?)?)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok((percent(&flags), flags))
}

/// Random-sampling constraint accuracy: percentage and per-sample fraction
/// of `samples` uniform points of the box that satisfy the constraint.
pub fn c_acc(
    net: &Network,
    data: &Dataset,
    spec: &ConstraintSpec,
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    if samples == 0 {
        return Err(Error::Contract("need at least one sample per point".into()));
    }
    let n = net.output_dim();
    let fractions = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let bx = sample_box(data, i, eps)?;
            let phi = sample_formula(spec, n, &data.targets[i])?;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, i as u64]));
            let mut ok = 0usize;
            for _ in 0..samples {
                let x = bx.sample(&mut rng);
                ok += formula_satisfied(&phi, &forward(net, &x)?)? as usize;
            }
            Ok(ok as f64 / samples as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = if fractions.is_empty() { 0.0 } else { 100.0 * fractions.iter().sum::<f64>() / fractions.len() as f64 };
    Ok((mean, fractions))
}

fn percent(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        0.0
    } else {
        100.0 * flags.iter().filter(|&&b| b).count() as f64 / flags.len() as f64
    }
}

/// Text form of a box: header, dimension, then one `lower upper` pair per
/// line.
pub fn box_to_text(bx: &InputBox) -> String {
    let mut s = format!("qll-box v1\ndim {}\n", bx.dim());
    for (l, u) in bx.lower.iter().zip(&bx.upper) {
        writeln!(s, "{l:.16e} {u:.16e}").unwrap();
    }
    s
}

pub fn box_from_text(text: &str) -> Result<InputBox> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("qll-box v1") {
        return Err(Error::Parse("not a box file".into()));
    }
    let dim: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("dim "))
        .and_then(|d| d.trim().parse().ok())
        .ok_or_else(|| Error::Parse("missing box dimension".into()))?;
    let (mut lo, mut hi) = (Vec::with_capacity(dim), Vec::with_capacity(dim));
    for _ in 0..dim {
        let l = lines.next().ok_or_else(|| Error::Parse("box file truncated".into()))?;
        let mut it = l.split_whitespace().map(str::parse::<f64>);
        match (it.next(), it.next()) {
            (Some(Ok(a)), Some(Ok(b))) => {
                lo.push(a);
                hi.push(b);
            }
            _ => return Err(Error::Parse(format!("bad box line {l:?}"))),
        }
    }
    InputBox::new(lo, hi)
}

/// The network, box and formula of one verification query, as text.
pub fn export_query(net: &Network, bx: &InputBox, phi: &Formula) -> (String, String, String) {
    (net.to_checkpoint(), box_to_text(bx), format!("{phi}\n"))
}
