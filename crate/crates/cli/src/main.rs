//! `vineq` — fits vine structures, trains vine-structured circuits to load
//! distributions into statevector amplitudes, and verifies resource and
//! expressivity properties of the ansatz.

mod config;
mod pipeline;

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use vineq::ansatz::{resource_report, schedule_blocks, BlockSpan};
use vineq::dla::verify_theorems;
use vineq::target::DiscreteDistribution;
use vineq::train::{train_through_vine, write_checkpoint, CheckpointMeta, TrainOutcome};

use config::{load_config_file, preset, InputSpec, RunConfig, VineMode};
use pipeline::{
    resolve_structure, resolve_target, write_projections, write_tau_csv, write_vine_json,
    Structure,
};

#[derive(Parser)]
#[command(
    name = "vineq",
    version,
    about = "Vine-structured amplitude loading of multivariate distributions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration (see README for the schema)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in experiment preset
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Price CSV (`date,<ticker>,...`) used as empirical input
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed for parameter initialization
    #[arg(long)]
    seed: Option<u64>,
    /// Bits per feature register
    #[arg(long)]
    k: Option<usize>,
    /// Univariate (hierarchical) layers per register
    #[arg(long = "layers-uni")]
    layers_uni: Option<usize>,
    /// Bivariate entangling layers per vine edge
    #[arg(long = "layers-biv")]
    layers_biv: Option<usize>,
    /// Structure mode: dvine | cvine | rvine | file:<path>
    #[arg(long, value_parser = VineMode::parse)]
    vine: Option<VineMode>,
}

#[derive(Subcommand)]
enum Command {
    /// Select a vine structure and write vine.json + tau.csv
    FitVine(CommonArgs),
    /// Run the full progressive training pipeline
    Train(CommonArgs),
    /// Train over a grid of layer counts, e.g. --grid 1x1,2x1,3x3
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated LUxLB pairs
        #[arg(long)]
        grid: String,
    },
    /// Print gate/parameter counts and the block-parallel depth
    Resources(CommonArgs),
    /// Run the Lie-closure expressivity checks
    VerifyDla {
        /// Bits per register to check up to (closures need 2k <= 6 qubits)
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Include the 6-qubit bivariate closure (so(64), slow)
        #[arg(long)]
        beb_k3: bool,
        /// Exit non-zero if any check fails
        #[arg(long)]
        strict: bool,
    },
}

fn main() {
    match run() {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn run() -> Result<i32> {
    let cli = Cli::parse();
    match cli.command {
        Command::FitVine(common) => cmd_fit_vine(&resolve(&common)?),
        Command::Train(common) => cmd_train(&resolve(&common)?),
        Command::Ablate { common, grid } => cmd_ablate(&resolve(&common)?, &grid),
        Command::Resources(common) => cmd_resources(&resolve(&common)?),
        Command::VerifyDla { k, beb_k3, strict } => cmd_verify_dla(k, beb_k3, strict),
    }
}

/// defaults < preset/config file < flags
fn resolve(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = if let Some(name) = &common.preset {
        preset(name)?
    } else if let Some(path) = &common.config {
        load_config_file(path)?
    } else {
        RunConfig::default()
    };
    if let Some(csv) = &common.csv {
        cfg.input = Some(InputSpec::Csv { path: csv.clone() });
    }
    if let Some(k) = common.k {
        cfg.k = k;
    }
    if let Some(l) = common.layers_uni {
        cfg.l_u = l;
    }
    if let Some(l) = common.layers_biv {
        cfg.l_b = l;
    }
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(vine) = &common.vine {
        cfg.vine = vine.clone();
    }
    Ok(cfg)
}

fn cmd_fit_vine(cfg: &RunConfig) -> Result<i32> {
    let s = resolve_structure(cfg)?;
    fs::create_dir_all(&cfg.out)?;
    let vine_path = cfg.out.join("vine.json");
    write_vine_json(&vine_path, &s.vine)?;
    write_tau_csv(&cfg.out.join("tau.csv"), &s.labels, &s.tau)?;
    println!(
        "vine over {} features: {} trees, {} edges -> {}",
        s.d,
        s.vine.trees.len(),
        s.vine.n_edges(),
        vine_path.display()
    );
    Ok(0)
}

fn run_training(cfg: &RunConfig, s: &Structure, out_dir: &PathBuf) -> Result<TrainOutcome> {
    let (target, codes) = resolve_target(cfg, s)?;
    eprintln!(
        "training d={} k={} l_u={} l_b={} seed={} over {} vine edges",
        s.d,
        cfg.k,
        cfg.l_u,
        cfg.l_b,
        cfg.train.seed,
        s.vine.n_edges()
    );
    let outcome = train_through_vine(
        &s.vine,
        s.d,
        cfg.k,
        cfg.l_u,
        cfg.l_b,
        &target,
        codes.as_deref(),
        &cfg.train,
    )?;

    fs::create_dir_all(out_dir)?;
    write_vine_json(&out_dir.join("vine.json"), &s.vine)?;
    write_tau_csv(&out_dir.join("tau.csv"), &s.labels, &s.tau)?;
    outcome.trace.write_json(&out_dir.join("trace.json"))?;
    outcome.trace.write_summary_csv(&out_dir.join("summary.csv"))?;
    outcome
        .trace
        .write_tvd_by_block_csv(&out_dir.join("tvd_by_block.csv"))?;

    let learned = outcome.final_state.born_probs();
    DiscreteDistribution::new(s.d, cfg.k, learned.clone(), target.bins().to_vec())?
        .write_csv(&out_dir.join("distribution.csv"))?;
    write_projections(out_dir, &target, &learned)?;

    let meta = CheckpointMeta {
        n_qubits: s.d * cfg.k,
        d: s.d,
        k: cfg.k,
        l_u: cfg.l_u,
        l_b: cfg.l_b,
        n_params: outcome.params.len(),
        blocks: outcome
            .trace
            .blocks
            .iter()
            .map(|b| BlockSpan {
                label: b.label.clone(),
                start_slot: b.start_slot,
                end_slot: b.end_slot,
            })
            .collect(),
    };
    write_checkpoint(
        &out_dir.join("checkpoint.bin"),
        &out_dir.join("checkpoint.json"),
        &outcome.params,
        &meta,
    )?;
    Ok(outcome)
}

fn cmd_train(cfg: &RunConfig) -> Result<i32> {
    let s = resolve_structure(cfg)?;
    let outcome = run_training(cfg, &s, &cfg.out)?;
    println!(
        "final infidelity {:.3e}, marginal TVD {:.4}, final TVD {:.4} -> {}",
        outcome.trace.final_infidelity,
        outcome.trace.marginal_tvd,
        outcome.trace.final_tvd,
        cfg.out.display()
    );
    Ok(0)
}

fn parse_grid(grid: &str) -> Result<Vec<(usize, usize)>> {
    let mut points = Vec::new();
    for part in grid.split(',').filter(|p| !p.trim().is_empty()) {
        let (lu, lb) = part
            .trim()
            .split_once('x')
            .with_context(|| format!("grid entry '{part}' is not LUxLB"))?;
        points.push((
            lu.parse().with_context(|| format!("bad L_u in '{part}'"))?,
            lb.parse().with_context(|| format!("bad L_b in '{part}'"))?,
        ));
    }
    if points.is_empty() {
        bail!("empty layer grid");
    }
    Ok(points)
}

fn cmd_ablate(cfg: &RunConfig, grid: &str) -> Result<i32> {
    let points = parse_grid(grid)?;
    let s = resolve_structure(cfg)?;
    fs::create_dir_all(&cfg.out)?;

    let mut rows = Vec::new();
    for &(l_u, l_b) in &points {
        let mut point_cfg = cfg.clone();
        point_cfg.l_u = l_u;
        point_cfg.l_b = l_b;
        let out_dir = cfg.out.join(format!("lu{l_u}_lb{l_b}"));
        let outcome = run_training(&point_cfg, &s, &out_dir)?;
        eprintln!(
            "grid point l_u={l_u} l_b={l_b}: tvd {:.4}",
            outcome.trace.final_tvd
        );
        rows.push((l_u, l_b, outcome));
    }
    let best = rows
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            a.2.trace
                .final_tvd
                .partial_cmp(&b.2.trace.final_tvd)
                .unwrap()
        })
        .map(|(i, _)| i)
        .unwrap();

    let path = cfg.out.join("summary.csv");
    let mut w = std::io::BufWriter::new(fs::File::create(&path)?);
    use std::io::Write;
    writeln!(w, "l_u,l_b,final_infidelity,final_tvd,seconds,best")?;
    for (i, (l_u, l_b, outcome)) in rows.iter().enumerate() {
        let secs: f64 = outcome.trace.blocks.iter().map(|b| b.seconds).sum();
        writeln!(
            w,
            "{l_u},{l_b},{},{},{secs},{}",
            outcome.trace.final_infidelity,
            outcome.trace.final_tvd,
            (i == best) as u8
        )?;
    }
    drop(w);
    let (bu, bb, ref outcome) = rows[best];
    println!(
        "best grid point l_u={bu} l_b={bb}: final TVD {:.4} -> {}",
        outcome.trace.final_tvd,
        path.display()
    );
    Ok(0)
}

fn cmd_resources(cfg: &RunConfig) -> Result<i32> {
    let s = resolve_structure_or_structural(cfg)?;
    let report = resource_report(s.d, cfg.k, cfg.l_u, cfg.l_b, &s.vine)?;
    let schedule = schedule_blocks(&s.vine);
    println!("{}", serde_json::to_string_pretty(&report)?);
    eprintln!(
        "block schedule: {} bivariate rounds (+1 marginal stage)",
        schedule.beb_rounds
    );
    if cfg.out != RunConfig::default().out || cfg.out.exists() {
        fs::create_dir_all(&cfg.out)?;
        let file = fs::File::create(cfg.out.join("resources.json"))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), &report)?;
    }
    Ok(0)
}

/// `resources` works without input data for the data-independent structures.
fn resolve_structure_or_structural(cfg: &RunConfig) -> Result<Structure> {
    if cfg.input.is_some() {
        return resolve_structure(cfg);
    }
    let d = cfg
        .d
        .context("resources without input data needs `d` in the config")?;
    let vine = match &cfg.vine {
        VineMode::Dvine => vineq::vine::build_dvine(&(1..=d).collect::<Vec<_>>())?,
        VineMode::Cvine => vineq::vine::build_cvine(d, &(1..d).collect::<Vec<_>>())?,
        VineMode::File(path) => {
            let vine: vineq::vine::VineStructure =
                serde_json::from_reader(fs::File::open(path)?)?;
            vine.validate()?;
            if vine.d != d {
                bail!("vine file is over {} features, config says {d}", vine.d);
            }
            vine
        }
        VineMode::Rvine => bail!("rvine structure selection needs input data"),
    };
    Ok(Structure {
        d,
        labels: (1..=d).map(|i| format!("x{i}")).collect(),
        tau: nalgebra::DMatrix::identity(d, d),
        vine,
        samples: None,
    })
}

fn cmd_verify_dla(k: usize, beb_k3: bool, strict: bool) -> Result<i32> {
    let checks = verify_theorems(k, beb_k3)?;
    println!(
        "{:<18} {:>6} {:>9} {:>6}  result",
        "generator set", "qubits", "expected", "found"
    );
    let mut passed = 0;
    for c in &checks {
        let verdict = if c.pass() {
            passed += 1;
            "PASS"
        } else if c.capped {
            "FAIL (dimension cap hit)"
        } else {
            "FAIL"
        };
        println!(
            "{:<18} {:>6} {:>9} {:>6}  {verdict}",
            c.label, c.n_qubits, c.expected, c.found
        );
    }
    println!("{passed}/{} checks passed", checks.len());
    if strict && passed != checks.len() {
        return Ok(1);
    }
    Ok(0)
}
