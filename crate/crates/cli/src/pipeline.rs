//! Shared command plumbing: input resolution, vine selection, and the
//! plot-ready output files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use vineq::target::{
    discretize, gaussian_target, log_returns, read_price_csv, DiscreteDistribution, RangePolicy,
    SampleSet,
};
use vineq::vine::{
    build_cvine, build_dvine, build_rvine_from_tau, dvine_order_from_tau, kendall_tau_gaussian,
    pseudo_obs, tau_matrix, VineStructure,
};

use crate::config::{InputSpec, RunConfig, VineMode};

/// Everything structure selection needs, before any target table is built.
pub struct Structure {
    pub d: usize,
    pub labels: Vec<String>,
    pub tau: DMatrix<f64>,
    pub vine: VineStructure,
    pub samples: Option<SampleSet>,
}

pub fn resolve_structure(config: &RunConfig) -> Result<Structure> {
    let input = config
        .input
        .as_ref()
        .context("no input: pass --preset, --csv, or a config file with an input block")?;

    let (d, labels, tau, samples) = match input {
        InputSpec::Gaussian { mu, sigma, .. } => {
            let d = mu.len();
            if sigma.len() != d || sigma.iter().any(|row| row.len() != d) {
                bail!("sigma must be {d}x{d} to match mu");
            }
            let mut tau = DMatrix::zeros(d, d);
            for i in 0..d {
                tau[(i, i)] = 1.0;
                for j in i + 1..d {
                    let rho = sigma[i][j] / (sigma[i][i] * sigma[j][j]).sqrt();
                    let t = kendall_tau_gaussian(rho);
                    tau[(i, j)] = t;
                    tau[(j, i)] = t;
                }
            }
            let labels = (1..=d).map(|i| format!("x{i}")).collect();
            (d, labels, tau, None)
        }
        InputSpec::Csv { path } => {
            let series = read_price_csv(path)?;
            let returns = log_returns(&series)?;
            let po = pseudo_obs(&returns.data)?;
            let tau = tau_matrix(&po.u)?;
            let d = returns.n_features();
            let labels = returns.labels.clone();
            (d, labels, tau, Some(returns))
        }
    };

    if let Some(cfg_d) = config.d {
        if cfg_d != d {
            bail!("config d={cfg_d} does not match input dimension {d}");
        }
    }

    let vine = match &config.vine {
        VineMode::Dvine => build_dvine(&dvine_order_from_tau(&tau)?)?,
        VineMode::Cvine => {
            // roots by descending total dependence
            let mut strength: Vec<(usize, f64)> = (0..d)
                .map(|i| {
                    let s: f64 = (0..d).filter(|&j| j != i).map(|j| tau[(i, j)].abs()).sum();
                    (i + 1, s)
                })
                .collect();
            strength.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let roots: Vec<usize> = strength.iter().take(d - 1).map(|&(f, _)| f).collect();
            build_cvine(d, &roots)?
        }
        VineMode::Rvine => build_rvine_from_tau(&tau)?,
        VineMode::File(path) => {
            let vine: VineStructure =
                serde_json::from_reader(File::open(path).with_context(|| {
                    format!("cannot open vine file {}", path.display())
                })?)?;
            vine.validate()?;
            if vine.d != d {
                bail!("vine file is over {} features, input has {d}", vine.d);
            }
            vine
        }
    };

    Ok(Structure {
        d,
        labels,
        tau,
        vine,
        samples,
    })
}

/// Discretized target plus sample codes when the input is empirical.
pub fn resolve_target(
    config: &RunConfig,
    structure: &Structure,
) -> Result<(DiscreteDistribution, Option<Vec<usize>>)> {
    let input = config.input.as_ref().context("no input")?;
    match input {
        InputSpec::Gaussian { mu, sigma, range } => {
            let d = mu.len();
            let flat: Vec<f64> = sigma.iter().flatten().copied().collect();
            let sigma = DMatrix::from_row_slice(d, d, &flat);
            let target = gaussian_target(mu, &sigma, config.k, range.as_deref())?;
            Ok((target, None))
        }
        InputSpec::Csv { .. } => {
            let samples = structure.samples.as_ref().context("csv input lost")?;
            let policy = if config.quantile_bins {
                RangePolicy::Quantile
            } else {
                RangePolicy::Padded {
                    pad: config.range_pad,
                }
            };
            let target = discretize(samples, config.k, policy)?;
            let codes = target.encode(samples)?;
            Ok((target, Some(codes)))
        }
    }
}

pub fn write_vine_json(path: &Path, vine: &VineStructure) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, vine)?;
    Ok(())
}

pub fn write_tau_csv(path: &Path, labels: &[String], tau: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "feature")?;
    for l in labels {
        write!(w, ",{l}")?;
    }
    writeln!(w)?;
    for (i, l) in labels.iter().enumerate() {
        write!(w, "{l}")?;
        for j in 0..labels.len() {
            write!(w, ",{}", tau[(i, j)])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// 1D and 2D marginal tables of the target and the learned distribution,
/// one file per axis / axis pair.
pub fn write_projections(
    out_dir: &Path,
    target: &DiscreteDistribution,
    learned: &[f64],
) -> Result<Vec<std::path::PathBuf>> {
    let learned_dist = DiscreteDistribution::new(
        target.d,
        target.k,
        learned.to_vec(),
        target.bins().to_vec(),
    )?;
    let mut written = Vec::new();
    for a in 1..=target.d {
        let t = target.marginal(&[a])?;
        let l = learned_dist.marginal(&[a])?;
        let path = out_dir.join(format!("projections_{a}.csv"));
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "bin,target,learned")?;
        for (bin, (tp, lp)) in t.probs().iter().zip(l.probs()).enumerate() {
            writeln!(w, "{bin},{tp},{lp}")?;
        }
        written.push(path);
    }
    for a in 1..=target.d {
        for b in a + 1..=target.d {
            let t = target.marginal(&[a, b])?;
            let l = learned_dist.marginal(&[a, b])?;
            let path = out_dir.join(format!("projections_{a}_{b}.csv"));
            let mut w = BufWriter::new(File::create(&path)?);
            writeln!(w, "bin_{a},bin_{b},target,learned")?;
            let nb = 1usize << target.k;
            for (idx, (tp, lp)) in t.probs().iter().zip(l.probs()).enumerate() {
                writeln!(w, "{},{},{tp},{lp}", idx >> target.k, idx & (nb - 1))?;
            }
            written.push(path);
        }
    }
    Ok(written)
}
