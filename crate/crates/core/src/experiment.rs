//! Experiment grids: train one network per (method, seed) cell, measure
//! every constraint metric and write the results as CSV.
//!
//! # Config format
//!
//! ```text
//! # comments start with '#'
//! [experiment]
//! backends   = baseline; dl2; stl:nu=5; qll:p=5; godel   # ';'-separated
//! seeds      = 0, 1, 2
//! arch       = 2, 16, 16, 3         # layer sizes, input first
//! train_data = blobs:seed=1,per_class=100
//! test_data  = blobs:seed=2,per_class=30   # defaults to train_data
//!
//! [train]                           # any training key except seed/backend
//! epochs     = 10
//! constraint = cr
//! eps        = 0.05
//!
//! [metrics]
//! points          = 60              # evaluated prefix of the test set
//! cacc_samples    = 100
//! attack_steps    = 20
//! attack_restarts = 2
//! attack_step_size = auto           # 2.5 eps / steps
//! oracle          = qll:p=inf
//! verify_budget   = 2000            # boxes per sample
//! probe_steps     = 10              # 0 disables the verifier's attack probe
//! ```
//!
//! # Output files
//!
//! * `runs.csv`: `backend,seed,pacc,cacc,csec_self,csec_oracle,csat_verified,csat_falsified,csat_unknown`
//! * `summary.csv`: `backend,cells` then `<metric>_mean,<metric>_std` for
//!   each metric above (sample standard deviation, 0 for one seed)
//! * `points.csv`: `backend,seed,sample_id,verdict,secure_self,secure_oracle,cacc_fraction`
//! * `epochs/<cell>.csv`, `verdicts/<cell>.csv`, `models/<cell>.ckpt`
//!
//! Percentages use six decimals. Reruns of one config give identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::backends::Backend;
use crate::constraints::Target;
use crate::data::{DataSource, Dataset};
use crate::error::{Error, Result};
use crate::models::{init_network, Network};
use crate::training::{accuracy, epoch_log_csv, mix_seed, train, EpochLog, Method, PgdConfig, TrainConfig};
use crate::verify::{c_acc, c_sat, c_sec, Verdict, VerdictCounts, VerifyConfig};

/// Metric settings of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsConfig {
    pub points: usize,
    pub cacc_samples: usize,
    pub attack_steps: usize,
    pub attack_restarts: usize,
    pub attack_step_size: Option<f64>,
    pub oracle: Backend,
    pub verify_budget: usize,
    pub probe_steps: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            points: 100,
            cacc_samples: 100,
            attack_steps: 20,
            attack_restarts: 2,
            attack_step_size: None,
            oracle: Backend::qll(f64::INFINITY).unwrap(),
            verify_budget: 2000,
            probe_steps: 10,
        }
    }
}

impl MetricsConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value {v:?} for {k}")))
        }
        match key {
            "points" => self.points = num(key, value)?,
            "cacc_samples" => self.cacc_samples = num(key, value)?,
            "attack_steps" => self.attack_steps = num(key, value)?,
            "attack_restarts" => self.attack_restarts = num(key, value)?,
            "attack_step_size" => {
                self.attack_step_size = if value == "auto" { None } else { Some(num(key, value)?) }
            }
            "oracle" => self.oracle = value.parse()?,
            "verify_budget" => self.verify_budget = num(key, value)?,
            "probe_steps" => self.probe_steps = num(key, value)?,
            other => return Err(Error::Config(format!("unknown metrics key {other:?}"))),
        }
        Ok(())
    }

    /// Attack used for both security metrics.
    pub fn attack(&self, eps: f64) -> PgdConfig {
        match self.attack_step_size {
            Some(step_size) => PgdConfig { steps: self.attack_steps, restarts: self.attack_restarts, step_size },
            None => PgdConfig::with_default_step(eps, self.attack_steps, self.attack_restarts),
        }
    }

    pub fn verifier(&self, seed: u64) -> VerifyConfig {
        let probe = (self.probe_steps > 0).then(|| PgdConfig { steps: self.probe_steps, restarts: 1, step_size: 0.0 });
        VerifyConfig { budget: self.verify_budget, probe, seed }
    }
}

/// A parsed experiment config.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub arch: Vec<usize>,
    pub train_data: DataSource,
    pub test_data: Option<DataSource>,
    /// Shared training settings; seed and method come from the grid.
    pub train: TrainConfig,
    pub metrics: MetricsConfig,
    /// Base directory for relative IDX paths.
    pub data_dir: Option<PathBuf>,
}

/// Splits sectioned `key = value` text into `(section, key, value)`.
pub fn parse_sections(text: &str) -> Result<Vec<(String, String, String)>> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        out.push((section.clone(), k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str, sep: char) -> Result<Vec<T>> {
    value
        .split(sep)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("bad entry {s:?} in {key}"))))
        .collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut methods = None;
        let mut seeds = None;
        let mut arch = None;
        let mut train_data = None;
        let mut test_data = None;
        let mut train = TrainConfig::default();
        let mut metrics = MetricsConfig::default();
        for (section, k, v) in parse_sections(text)? {
            match (section.as_str(), k.as_str()) {
                ("experiment", "backends") => {
                    methods = Some(
                        v.split(';')
                            .map(str::trim)
                            .filter(|s| !s.is_empty())
                            .map(str::parse)
                            .collect::<Result<Vec<Method>>>()?,
                    )
                }
                ("experiment", "seeds") => seeds = Some(parse_list(&k, &v, ',')?),
                ("experiment", "arch") => arch = Some(parse_list(&k, &v, ',')?),
                ("experiment", "train_data") => train_data = Some(v.parse()?),
                ("experiment", "test_data") => test_data = Some(v.parse()?),
                ("experiment", "name") => {}
                ("train", "seed" | "backend" | "method") => {
                    return Err(Error::Config(format!("{k} is set per cell by the [experiment] grid")))
                }
                ("train", _) => train.set(&k, &v)?,
                ("metrics", _) => metrics.set(&k, &v)?,
                (s, _) => return Err(Error::Config(format!("unknown key {k:?} in section [{s}]"))),
            }
        }
        let need = |what: &str| Error::Config(format!("[experiment] needs {what}"));
        let cfg = ExperimentConfig {
            methods: methods.ok_or_else(|| need("backends"))?,
            seeds: seeds.ok_or_else(|| need("seeds"))?,
            arch: arch.ok_or_else(|| need("arch"))?,
            train_data: train_data.ok_or_else(|| need("train_data"))?,
            test_data,
            train,
            metrics,
            data_dir: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        ExperimentConfig::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("need at least one backend and one seed".into()));
        }
        if self.arch.len() < 2 || self.arch.contains(&0) {
            return Err(Error::Config(format!("invalid arch {:?}", self.arch)));
        }
        if self.metrics.points == 0 || self.metrics.cacc_samples == 0 || self.metrics.verify_budget == 0 {
            return Err(Error::Config("points, cacc_samples and verify_budget must be positive".into()));
        }
        self.train.validate()
    }
}

/// Metrics of one trained cell, as percentages.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub backend: String,
    pub seed: u64,
    pub pacc: f64,
    pub cacc: f64,
    pub csec_self: f64,
    pub csec_oracle: f64,
    pub csat_verified: f64,
    pub csat_falsified: f64,
    pub csat_unknown: f64,
}

impl CellResult {
    fn values(&self) -> [f64; 7] {
        [
            self.pacc,
            self.cacc,
            self.csec_self,
            self.csec_oracle,
            self.csat_verified,
            self.csat_falsified,
            self.csat_unknown,
        ]
    }
}

pub const METRICS: [&str; 7] =
    ["pacc", "cacc", "csec_self", "csec_oracle", "csat_verified", "csat_falsified", "csat_unknown"];

/// Per-sample outcome of the metrics of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    pub backend: String,
    pub seed: u64,
    pub sample: usize,
    pub verdict: Verdict,
    pub secure_self: bool,
    pub secure_oracle: bool,
    pub cacc_fraction: f64,
}

impl PointRecord {
    /// Verified ⇒ secure under both attacks ⇒ every random sample satisfies.
    pub fn chain_holds(&self) -> bool {
        let verified = self.verdict == Verdict::Verified;
        let secure = self.secure_self && self.secure_oracle;
        (!verified || secure) && (!verified || self.cacc_fraction == 1.0)
    }
}

/// Mean and sample standard deviation of each metric over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub backend: String,
    pub cells: usize,
    pub mean: [f64; 7],
    pub std: [f64; 7],
}

impl SummaryRow {
    pub fn get(&self, metric: &str) -> Option<(f64, f64)> {
        let i = METRICS.iter().position(|m| *m == metric)?;
        Some((self.mean[i], self.std[i]))
    }
}

/// Everything one cell produced.
#[derive(Debug, Clone)]
pub struct CellOutput {
    pub result: CellResult,
    pub network: Network,
    pub epochs: Vec<EpochLog>,
    pub verdicts: VerdictCounts,
    pub points: Vec<PointRecord>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// In grid order: methods outer, seeds inner.
    pub cells: Vec<CellOutput>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentResult {
    pub fn row(&self, backend: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.backend == backend)
    }

    pub fn points(&self) -> impl Iterator<Item = &PointRecord> {
        self.cells.iter().flat_map(|c| c.points.iter())
    }

    pub fn runs_csv(&self) -> String {
        let mut s = format!("backend,seed,{}\n", METRICS.join(","));
        for c in &self.cells {
            let r = &c.result;
            let vals: Vec<String> = r.values().iter().map(|v| format!("{v:.6}")).collect();
            writeln!(s, "{},{},{}", r.backend, r.seed, vals.join(",")).unwrap();
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let cols: Vec<String> = METRICS.iter().flat_map(|m| [format!("{m}_mean"), format!("{m}_std")]).collect();
        let mut s = format!("backend,cells,{}\n", cols.join(","));
        for r in &self.summary {
            let vals: Vec<String> =
                r.mean.iter().zip(&r.std).flat_map(|(m, d)| [format!("{m:.6}"), format!("{d:.6}")]).collect();
            writeln!(s, "{},{},{}", r.backend, r.cells, vals.join(",")).unwrap();
        }
        s
    }

    pub fn points_csv(&self) -> String {
        let mut s = String::from("backend,seed,sample_id,verdict,secure_self,secure_oracle,cacc_fraction\n");
        for p in self.points() {
            writeln!(
                s,
                "{},{},{},{},{},{},{:.6}",
                p.backend,
                p.seed,
                p.sample,
                p.verdict.label(),
                p.secure_self as u8,
                p.secure_oracle as u8,
                p.cacc_fraction
            )
            .unwrap();
        }
        s
    }

    /// Writes all CSV files, checkpoints and per-cell logs under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for sub in ["epochs", "verdicts", "models"] {
            std::fs::create_dir_all(dir.join(sub))?;
        }
        std::fs::write(dir.join("runs.csv"), self.runs_csv())?;
        std::fs::write(dir.join("summary.csv"), self.summary_csv())?;
        std::fs::write(dir.join("points.csv"), self.points_csv())?;
        for c in &self.cells {
            let id = cell_id(&c.result.backend, c.result.seed);
            std::fs::write(dir.join("epochs").join(format!("{id}.csv")), epoch_log_csv(&c.epochs))?;
            std::fs::write(dir.join("verdicts").join(format!("{id}.csv")), c.verdicts.to_csv())?;
            c.network.save(&dir.join("models").join(format!("{id}.ckpt")))?;
        }
        Ok(())
    }
}

/// File-name friendly cell name, e.g. `qll-p-5_seed2`.
pub fn cell_id(backend: &str, seed: u64) -> String {
    let clean: String = backend.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '-' }).collect();
    format!("{clean}_seed{seed}")
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn fit_labels(mut data: Dataset, n: usize) -> Result<Dataset> {
    if data.num_labels > n {
        return Err(Error::DimensionMismatch { expected: n, got: data.num_labels });
    }
    if data.num_labels < n && data.targets.iter().all(|t| matches!(t, Target::Class(_))) {
        data.num_labels = n;
    }
    Ok(data)
}

/// Computes every metric of a trained network on the first `points`
/// samples of `test` (PAcc uses the whole set).
pub fn evaluate(
    net: &Network,
    test: &Dataset,
    method: &Method,
    train: &TrainConfig,
    metrics: &MetricsConfig,
    seed: u64,
) -> Result<(CellResult, VerdictCounts, Vec<PointRecord>)> {
    let eval = test.head(metrics.points);
    let spec = &train.constraint;
    let eps = train.eps;
    let attack = metrics.attack(eps);
    let pacc = 100.0 * accuracy(net, test)?;
    let (cacc, fractions) = c_acc(net, &eval, spec, eps, metrics.cacc_samples, mix_seed(&[seed, 1]))?;
    let self_oracle = method.backend().copied().unwrap_or(metrics.oracle);
    let (csec_self, sec_self) = c_sec(net, &eval, spec, eps, &attack, &self_oracle, mix_seed(&[seed, 2]))?;
    let (csec_oracle, sec_oracle) = c_sec(net, &eval, spec, eps, &attack, &metrics.oracle, mix_seed(&[seed, 3]))?;
    let verdicts = c_sat(net, &eval, spec, eps, &metrics.verifier(mix_seed(&[seed, 4])))?;
    let backend = method.to_string();
    let points = (0..eval.len())
        .map(|i| PointRecord {
            backend: backend.clone(),
            seed,
            sample: i,
            verdict: verdicts.verdicts[i].clone(),
            secure_self: sec_self[i],
            secure_oracle: sec_oracle[i],
            cacc_fraction: fractions[i],
        })
        .collect();
    let result = CellResult {
        backend,
        seed,
        pacc,
        cacc,
        csec_self,
        csec_oracle,
        csat_verified: verdicts.verified_pct(),
        csat_falsified: verdicts.falsified_pct(),
        csat_unknown: verdicts.unknown_pct(),
    };
    Ok((result, verdicts, points))
}

fn run_cell(cfg: &ExperimentConfig, train_set: &Dataset, test: &Dataset, method: &Method, seed: u64) -> Result<CellOutput> {
    let net = init_network(&cfg.arch, seed)?;
    let tc = TrainConfig { seed, method: *method, ..cfg.train.clone() };
    let (net, epochs) = train(&net, train_set, &tc)?;
    let (result, verdicts, points) = evaluate(&net, test, method, &tc, &cfg.metrics, seed)?;
    Ok(CellOutput { result, network: net, epochs, verdicts, points })
}

/// Runs every (method, seed) cell, in parallel, and aggregates in grid
/// order. With `out` set, results are written there.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentResult> {
    cfg.validate()?;
    let n = *cfg.arch.last().unwrap();
    let dir = cfg.data_dir.as_deref();
    let train_set = fit_labels(cfg.train_data.load(dir)?, n)?;
    let test = match &cfg.test_data {
        Some(src) => fit_labels(src.load(dir)?, n)?,
        None => train_set.clone(),
    };
    if train_set.input_dim() != cfg.arch[0] {
        return Err(Error::DimensionMismatch { expected: cfg.arch[0], got: train_set.input_dim() });
    }
    let grid: Vec<(Method, u64)> =
        cfg.methods.iter().flat_map(|m| cfg.seeds.iter().map(move |&s| (*m, s))).collect();
    let cells = grid
        .par_iter()
        .map(|(m, s)| {
            run_cell(cfg, &train_set, &test, m, *s).map_err(|e| Error::Cell {
                backend: m.to_string(),
                seed: *s,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = cfg
        .methods
        .iter()
        .map(|m| {
            let name = m.to_string();
            let rows: Vec<&CellResult> = cells.iter().map(|c| &c.result).filter(|r| r.backend == name).collect();
            let mut mean = [0.0; 7];
            let mut std = [0.0; 7];
            for k in 0..7 {
                let xs: Vec<f64> = rows.iter().map(|r| r.values()[k]).collect();
                (mean[k], std[k]) = mean_std(&xs);
            }
            SummaryRow { backend: name, cells: rows.len(), mean, std }
        })
        .collect();
    let result = ExperimentResult { cells, summary };
    if let Some(dir) = out {
        result.write(dir)?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "
        [experiment]
        backends = baseline; qll:p=5
        seeds = 1
        arch = 2, 4, 3
        train_data = blobs:seed=1,per_class=6
        [train]
        epochs = 1
        batch_size = 6
        pgd_steps = 2
        pgd_restarts = 1
        [metrics]
        points = 4
        cacc_samples = 5
        attack_steps = 2
        verify_budget = 50
    ";

    #[test]
    fn parses_sections() {
        let cfg = ExperimentConfig::parse(SMALL).unwrap();
        assert_eq!(cfg.methods.len(), 2);
        assert_eq!(cfg.arch, vec![2, 4, 3]);
        assert_eq!(cfg.train.epochs, 1);
        assert_eq!(cfg.metrics.points, 4);
        assert!(ExperimentConfig::parse("[experiment]\nseeds = 1\n").is_err());
        assert!(ExperimentConfig::parse(&format!("{SMALL}\n[train]\nseed = 3\n")).is_err());
        assert!(ExperimentConfig::parse(&format!("{SMALL}\n[other]\nx = 3\n")).is_err());
    }

    #[test]
    fn single_seed_has_zero_std() {
        let res = run_experiment(&ExperimentConfig::parse(SMALL).unwrap(), None).unwrap();
        assert_eq!(res.cells.len(), 2);
        for row in &res.summary {
            assert_eq!(row.std, [0.0; 7]);
            assert!(row.mean.iter().all(|v| (0.0..=100.0).contains(v)));
        }
        assert!(res.points().all(PointRecord::chain_holds));
        assert!(res.runs_csv().starts_with("backend,seed,pacc,"));
    }

    #[test]
    fn mean_and_sample_std() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert_eq!(cell_id("yager:r=2,tau=0.5", 3), "yager-r-2-tau-0.5_seed3");
    }
}
