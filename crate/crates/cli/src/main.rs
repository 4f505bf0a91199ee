//! `qll`: train, attack, verify and evaluate small networks against logical
//! constraints.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use qll_core::constraints::ConstraintSpec;
use qll_core::data::{DataSource, Dataset};
use qll_core::experiment::{evaluate, run_experiment, ExperimentConfig, MetricsConfig};
use qll_core::models::{init_network, Network};
use qll_core::training::{epoch_log_csv, mix_seed, train, InputBox, Method, TrainConfig};
use qll_core::verify::{c_sat, c_sec, export_query};

#[derive(Parser)]
#[command(name = "qll", version, about = "Logic-constrained training and verification")]
struct Cli {
    /// Base directory for relative IDX paths.
    #[arg(long, env = "QLL_DATA_DIR", global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Data {
    /// Dataset, e.g. `blobs:seed=2,per_class=30` or `idx:images=...,labels=...`.
    #[arg(long, default_value = "blobs:seed=2,per_class=30")]
    data: String,
    /// Constraint, e.g. `cr`, `scr:delta=0.7`, `groups:C=0,1;F=2`.
    #[arg(long, default_value = "cr")]
    constraint: String,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    /// Number of leading samples evaluated.
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network and write its checkpoint and epoch log.
    Train {
        /// Flat `key = value` training config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "blobs:seed=1,per_class=100")]
        data: String,
        /// Layer sizes, input first.
        #[arg(long, default_value = "2,16,16,3")]
        arch: String,
        #[arg(long)]
        backend: Option<String>,
        #[arg(long)]
        constraint: Option<String>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint path; the epoch log goes next to it as `.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Attack a network and report security per sample.
    Attack {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: Data,
        /// Backend whose loss drives the attack.
        #[arg(long, default_value = "qll:p=inf")]
        backend: String,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long, default_value_t = 2)]
        restarts: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify the constraint on each sample's input box.
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: Data,
        /// Boxes examined per sample.
        #[arg(long, default_value_t = 2000)]
        budget: usize,
        /// Verdict CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute every metric of a trained network.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: Data,
        /// Method the network was trained with; sets the self oracle.
        #[arg(long, default_value = "baseline")]
        backend: String,
        #[arg(long, default_value_t = 2000)]
        budget: usize,
    },
    /// Run a full experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the network, box and formula of one sample as text files.
    Export {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: Data,
        #[arg(long, default_value_t = 0)]
        sample: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_data(src: &str, dir: Option<&Path>, n: usize) -> Result<Dataset> {
    let src: DataSource = src.parse()?;
    let mut data = src.load(dir)?;
    if data.num_labels < n {
        data.num_labels = n;
    }
    Ok(data)
}

fn load_model(path: &Path) -> Result<Network> {
    Network::load(path).with_context(|| format!("loading {}", path.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let dir = cli.data_dir.as_deref();
    match cli.command {
        Command::Train { config, data, arch, backend, constraint, eps, seed, out } => {
            let mut cfg = match config {
                Some(p) => TrainConfig::parse(&std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?,
                None => TrainConfig::default(),
            };
            if let Some(b) = backend {
                cfg.method = b.parse()?;
            }
            if let Some(c) = constraint {
                cfg.constraint = c.parse()?;
            }
            if let Some(e) = eps {
                cfg.eps = e;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let sizes: Vec<usize> = arch
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .context("bad --arch")?;
            let net = init_network(&sizes, cfg.seed)?;
            let data = load_data(&data, dir, net.output_dim())?;
            let (net, logs) = train(&net, &data, &cfg)?;
            net.save(&out)?;
            std::fs::write(out.with_extension("csv"), epoch_log_csv(&logs))?;
            if let Some(last) = logs.last() {
                println!("epoch {} train_acc {:.6} lambda {:.6}", last.epoch, last.train_acc, last.lambda);
            }
        }
        Command::Attack { model, data, backend, steps, restarts, out } => {
            let net = load_model(&model)?;
            let spec: ConstraintSpec = data.constraint.parse()?;
            let ds = load_data(&data.data, dir, net.output_dim())?.head(data.points);
            let oracle = match backend.parse::<Method>()? {
                Method::Logic(b) => b,
                Method::Baseline => bail!("the attack needs a logic backend"),
            };
            let attack = MetricsConfig { attack_steps: steps, attack_restarts: restarts, ..Default::default() }.attack(data.eps);
            let (pct, flags) = c_sec(&net, &ds, &spec, data.eps, &attack, &oracle, data.seed)?;
            println!("csec {pct:.6}");
            if let Some(out) = out {
                let mut s = String::from("sample_id,secure\n");
                for (i, f) in flags.iter().enumerate() {
                    s.push_str(&format!("{i},{}\n", *f as u8));
                }
                std::fs::write(out, s)?;
            }
        }
        Command::Verify { model, data, budget, out } => {
            let net = load_model(&model)?;
            let spec: ConstraintSpec = data.constraint.parse()?;
            let ds = load_data(&data.data, dir, net.output_dim())?.head(data.points);
            let metrics = MetricsConfig { verify_budget: budget, ..Default::default() };
            let counts = c_sat(&net, &ds, &spec, data.eps, &metrics.verifier(data.seed))?;
            println!(
                "verified {} falsified {} unknown {} ({:.6}% verified)",
                counts.verified,
                counts.falsified,
                counts.unknown,
                counts.verified_pct()
            );
            if let Some(out) = out {
                std::fs::write(out, counts.to_csv())?;
            }
        }
        Command::Eval { model, data, backend, budget } => {
            let net = load_model(&model)?;
            let method: Method = backend.parse()?;
            let train = TrainConfig { constraint: data.constraint.parse()?, eps: data.eps, ..Default::default() };
            let ds = load_data(&data.data, dir, net.output_dim())?;
            let metrics = MetricsConfig { points: data.points, verify_budget: budget, ..Default::default() };
            let (r, _, _) = evaluate(&net, &ds, &method, &train, &metrics, mix_seed(&[data.seed]))?;
            println!("pacc,cacc,csec_self,csec_oracle,csat_verified,csat_falsified,csat_unknown");
            println!(
                "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                r.pacc, r.cacc, r.csec_self, r.csec_oracle, r.csat_verified, r.csat_falsified, r.csat_unknown
            );
        }
        Command::Run { config, out } => {
            let mut cfg = ExperimentConfig::load(&config).with_context(|| format!("reading {}", config.display()))?;
            cfg.data_dir = cli.data_dir.clone();
            let res = run_experiment(&cfg, Some(&out))?;
            print!("{}", res.summary_csv());
        }
        Command::Export { model, data, sample, out } => {
            let net = load_model(&model)?;
            let spec: ConstraintSpec = data.constraint.parse()?;
            let ds = load_data(&data.data, dir, net.output_dim())?;
            if sample >= ds.len() {
                bail!("sample {sample} out of range ({} samples)", ds.len());
            }
            let bx = InputBox::around(&ds.inputs[sample], data.eps, &ds.lower, &ds.upper)?;
            let phi = qll_core::constraints::sample_formula(&spec, net.output_dim(), &ds.targets[sample])?;
            let (n, b, f) = export_query(&net, &bx, &phi);
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("network.txt"), n)?;
            std::fs::write(out.join("box.txt"), b)?;
            std::fs::write(out.join("formula.txt"), f)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}
