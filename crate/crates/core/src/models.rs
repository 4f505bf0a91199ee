//! Dense feed-forward ReLU classifiers.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::autodiff::{Arith, Plain};
use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &str = "qll-network v1";

/// A dense ReLU network `f_θ: ℝ^m → ℝ^n`.
///
/// Parameters are stored flat, layer by layer: the weight matrix in
/// row-major order (`out × in`) followed by the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    sizes: Vec<usize>,
    params: Vec<f64>,
    /// Seed the parameters were initialized from, when known.
    pub seed: Option<u64>,
}

/// Number of parameters of a network with these layer sizes.
pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Network {
    pub fn new(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Contract(format!("invalid layer sizes {sizes:?}")));
        }
        let expected = param_count(&sizes);
        if params.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Contract("network parameters must be finite".into()));
        }
        Ok(Network { sizes, params, seed: None })
    }

    /// All-zero parameters.
    pub fn zeros(sizes: Vec<usize>) -> Result<Self> {
        let n = param_count(&sizes);
        Network::new(sizes, vec![0.0; n])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Replaces the parameter vector, keeping the architecture.
    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch { expected: self.params.len(), got: params.len() });
        }
        self.params = params;
        Ok(())
    }

    fn offset(&self, layer: usize) -> usize {
        param_count(&self.sizes[..=layer])
    }

    /// Row-major weights of `layer` (`out × in`).
    pub fn weights(&self, layer: usize) -> &[f64] {
        let (i, o) = (self.sizes[layer], self.sizes[layer + 1]);
        let off = self.offset(layer);
        &self.params[off..off + i * o]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let (i, o) = (self.sizes[layer], self.sizes[layer + 1]);
        let off = self.offset(layer) + i * o;
        &self.params[off..off + o]
    }

    /// Writes the versioned text checkpoint.
    pub fn to_checkpoint(&self) -> String {
        let mut s = String::new();
        let sizes: Vec<String> = self.sizes.iter().map(|x| x.to_string()).collect();
        writeln!(s, "{CHECKPOINT_MAGIC}").unwrap();
        writeln!(s, "sizes {}", sizes.join(",")).unwrap();
        match self.seed {
            Some(seed) => writeln!(s, "seed {seed}").unwrap(),
            None => writeln!(s, "seed none").unwrap(),
        }
        writeln!(s, "params {}", self.params.len()).unwrap();
        for p in &self.params {
            writeln!(s, "{p:.16e}").unwrap();
        }
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| Error::Parse(format!("checkpoint ends before {what}")))
        };
        if next("header")?.trim() != CHECKPOINT_MAGIC {
            return Err(Error::Parse("not a network checkpoint".into()));
        }
        let field = |line: &str, key: &str| -> Result<String> {
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(|r| r.trim().to_string())
                .ok_or_else(|| Error::Parse(format!("expected `{key}` line, got {line:?}")))
        };
        let sizes = field(next("sizes")?, "sizes")?
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad size {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let seed = match field(next("seed")?, "seed")?.as_str() {
            "none" => None,
            s => Some(s.parse().map_err(|_| Error::Parse(format!("bad seed {s:?}")))?),
        };
        let count: usize = field(next("params")?, "params")?
            .parse()
            .map_err(|_| Error::Parse("bad parameter count".into()))?;
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let l = next("parameter")?;
            params.push(l.trim().parse().map_err(|_| Error::Parse(format!("bad float {l:?}")))?);
        }
        let mut net = Network::new(sizes, params)?;
        net.seed = seed;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Network::from_checkpoint(&std::fs::read_to_string(path)?)
    }
}

/// Fan-in scaled uniform initialization `U(-√(6/in), √(6/in))`, zero biases.
///
/// Uses ChaCha8 seeded from `seed`, so the same seed gives bit-identical
/// parameters on every platform.
pub fn init_network(sizes: &[usize], seed: u64) -> Result<Network> {
    let mut net = Network::zeros(sizes.to_vec())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::with_capacity(net.params.len());
    for w in sizes.windows(2) {
        let (i, o) = (w[0], w[1]);
        let bound = (6.0 / i as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound)
            .map_err(|e| Error::Contract(format!("init range: {e}")))?;
        params.extend((0..i * o).map(|_| dist.sample(&mut rng)));
        params.extend(std::iter::repeat(0.0).take(o));
    }
    net.params = params;
    net.seed = Some(seed);
    Ok(net)
}

/// Forward pass with parameters and inputs as arithmetic values.
pub fn forward_with<A: Arith>(
    ar: &mut A,
    sizes: &[usize],
    params: &[A::V],
    x: &[A::V],
) -> Result<Vec<A::V>> {
    if sizes.len() < 2 {
        return Err(Error::Contract("network needs at least two layer sizes".into()));
    }
    if x.len() != sizes[0] {
        return Err(Error::DimensionMismatch { expected: sizes[0], got: x.len() });
    }
    if params.len() != param_count(sizes) {
        return Err(Error::DimensionMismatch { expected: param_count(sizes), got: params.len() });
    }
    let mut act: Vec<A::V> = x.to_vec();
    let mut off = 0;
    let last = sizes.len() - 2;
    let mut terms = Vec::new();
    for (l, w) in sizes.windows(2).enumerate() {
        let (i, o) = (w[0], w[1]);
        let bias_off = off + i * o;
        let mut next = Vec::with_capacity(o);
        for r in 0..o {
            terms.clear();
            for c in 0..i {
                terms.push(ar.mul(params[off + r * i + c], act[c]));
            }
            let s = ar.sum(&terms);
            let z = ar.add(s, params[bias_off + r]);
            next.push(if l == last { z } else { ar.relu(z) });
        }
        off = bias_off + o;
        act = next;
    }
    Ok(act)
}

/// Network evaluation on plain floats.
pub fn forward(net: &Network, x: &[f64]) -> Result<Vec<f64>> {
    forward_with(&mut Plain, &net.sizes, &net.params, x)
}

/// Forward pass with fixed parameters and differentiable inputs.
pub fn forward_input_with<A: Arith>(ar: &mut A, net: &Network, x: &[A::V]) -> Result<Vec<A::V>> {
    let params: Vec<A::V> = net.params.iter().map(|&p| ar.constant(p)).collect();
    forward_with(ar, &net.sizes, &params, x)
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut k = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[k] {
            k = i;
        }
    }
    k
}
