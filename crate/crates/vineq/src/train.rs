//! Progressive training: ADAM with patience-based learning-rate reduction,
//! per-block optimization with best-checkpoint retention, the per-register
//! marginal stage, and the edge-by-edge walk through the vine.
//!
//! Every block trains only freshly appended parameters; everything before
//! the frozen boundary stays bit-identical. New parameters start at
//! `Uniform(-a/2, a/2)` so each block begins as a small perturbation of the
//! identity.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{build_beb, build_sorb, build_univariate, BlockSpan};
use crate::error::{Error, Result};
use crate::statevec::{Circuit, RealState};
use crate::target::{tvd, DiscreteDistribution};
use crate::vine::VineStructure;

/// Loss improvements smaller than this count as "no improvement" for the
/// patience window (below fidelity numerical noise).
pub const IMPROVEMENT_EPS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Fidelity,
    Sample,
}

/// Optimizer and block-training hyperparameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Iterations without improvement before the learning rate is reduced.
    pub patience: usize,
    pub lr_factor: f64,
    pub min_lr: f64,
    pub max_iters: usize,
    /// Width `a` of the `Uniform(-a/2, a/2)` initialization.
    pub init_scale: f64,
    pub seed: u64,
    pub loss: LossKind,
    /// Train each register stage by stage against coarsened marginals; when
    /// false, every register trains all its stages jointly.
    pub hierarchical_marginals: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.05,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            patience: 50,
            lr_factor: 0.5,
            min_lr: 1e-5,
            max_iters: 2000,
            init_scale: 0.1,
            seed: 0,
            loss: LossKind::Fidelity,
            hierarchical_marginals: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::invalid_input("lr must be positive"));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return Err(Error::invalid_input("lr_factor must be in (0, 1)"));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::invalid_input("init_scale must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid_input("max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// ADAM with bias correction. Slots that always receive zero gradient keep
/// zero moments and are never moved.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    pub fn new(n_params: usize, config: &TrainConfig) -> Self {
        Adam {
            lr: config.lr,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: config.adam_eps,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::LengthMismatch {
                expected: self.m.len(),
                got: params.len().min(grads.len()),
            });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// What a block minimizes: infidelity against target amplitudes, or the
/// negated mean squared amplitude over sample bitstrings.
pub enum Objective<'a> {
    Fidelity { target_amps: &'a [f64] },
    Sample { weights: &'a [f64] },
}

impl Objective<'_> {
    fn loss(&self, state: &RealState) -> Result<f64> {
        match self {
            Objective::Fidelity { target_amps } => Ok(1.0 - state.fidelity(target_amps)?),
            Objective::Sample { weights } => {
                if weights.len() != state.amps().len() {
                    return Err(Error::LengthMismatch {
                        expected: state.amps().len(),
                        got: weights.len(),
                    });
                }
                Ok(-state
                    .amps()
                    .iter()
                    .zip(*weights)
                    .map(|(a, w)| w * a * a)
                    .sum::<f64>())
            }
        }
    }

    fn grad(&self, circuit: &Circuit, params: &[f64], input: &RealState) -> Result<Vec<f64>> {
        let mut g = match self {
            Objective::Fidelity { target_amps } => {
                circuit.grad_fidelity(params, input, target_amps)?
            }
            Objective::Sample { weights } => circuit.grad_weighted_prob(params, input, weights)?,
        };
        g.iter_mut().for_each(|x| *x = -*x);
        Ok(g)
    }
}

/// Mean squared amplitude over sample bitstring codes (maximized when
/// training with the sample loss).
pub fn sample_loss(
    circuit: &Circuit,
    params: &[f64],
    input: &RealState,
    sample_codes: &[usize],
) -> Result<f64> {
    let out = circuit.run(params, input)?;
    let dim = out.amps().len();
    let mut acc = 0.0;
    for &code in sample_codes {
        if code >= dim {
            return Err(Error::LengthMismatch {
                expected: dim,
                got: code,
            });
        }
        acc += out.amps()[code] * out.amps()[code];
    }
    Ok(acc / sample_codes.len() as f64)
}

/// Per-basis-state weights `count/|D|` for the sample loss.
pub fn sample_weights(sample_codes: &[usize], dim: usize) -> Vec<f64> {
    let mut w = vec![0.0; dim];
    let unit = 1.0 / sample_codes.len() as f64;
    for &code in sample_codes {
        w[code] += unit;
    }
    w
}

/// Outcome of one trained block.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockRecord {
    pub label: String,
    pub start_slot: usize,
    pub end_slot: usize,
    /// Objective value at every iteration.
    pub losses: Vec<f64>,
    /// Best objective value (the parameters returned are the best iterate).
    pub final_loss: f64,
    /// Infidelity of the state this block leaves behind, against the target
    /// this block was measured on.
    pub final_infidelity: f64,
    /// TVD between the Born distribution after this block and its target.
    pub tvd_after: f64,
    pub seconds: f64,
}

/// Full progressive-training history.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainTrace {
    pub blocks: Vec<BlockRecord>,
    /// Global TVD after the marginal stage (step 0 of the progressive run).
    pub marginal_tvd: f64,
    pub final_tvd: f64,
    pub final_infidelity: f64,
}

impl TrainTrace {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// `block,final_loss,tvd,seconds` summary.
    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "block,final_loss,tvd,seconds")?;
        for b in &self.blocks {
            writeln!(w, "{},{},{},{}", b.label, b.final_loss, b.tvd_after, b.seconds)?;
        }
        Ok(())
    }

    /// Progressive TVD table: the marginal stage as step 0, then one row per
    /// vine block.
    pub fn write_tvd_by_block_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "step,block,tvd,infidelity")?;
        let marginal_infid = self
            .blocks
            .iter()
            .filter(|b| b.label.starts_with('M'))
            .next_back()
            .map_or(f64::NAN, |b| b.final_infidelity);
        writeln!(w, "0,M,{},{marginal_infid}", self.marginal_tvd)?;
        let mut step = 1;
        for b in self.blocks.iter().filter(|b| b.label.starts_with('T')) {
            writeln!(w, "{step},{},{},{}", b.label, b.tvd_after, b.final_infidelity)?;
            step += 1;
        }
        Ok(())
    }
}

/// Trains the non-frozen suffix of `circuit` against `objective`, starting
/// from `input`. Parameters below the frozen boundary are untouched; the
/// best iterate (not the last) is kept.
pub fn train_block(
    circuit: &Circuit,
    params: &mut [f64],
    input: &RealState,
    objective: &Objective,
    config: &TrainConfig,
    label: &str,
) -> Result<BlockRecord> {
    config.validate()?;
    let started = Instant::now();
    let boundary = circuit.frozen_below();
    let psi_prev = circuit.frozen_prefix().run(params, input)?;
    let active = circuit.active_suffix();

    let mut adam = Adam::new(params.len(), config);
    let mut losses = Vec::with_capacity(config.max_iters);
    let mut best_loss = f64::INFINITY;
    let mut best_params = params[boundary..].to_vec();
    let mut stale = 0usize;
    let mut state = psi_prev.clone();

    for iter in 0..config.max_iters {
        state.clone_from(&psi_prev);
        active.apply(params, &mut state)?;
        let loss = objective.loss(&state)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                label: label.to_owned(),
                iter,
            });
        }
        losses.push(loss);
        if loss < best_loss - IMPROVEMENT_EPS {
            best_loss = loss;
            best_params.copy_from_slice(&params[boundary..]);
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= config.patience {
            if adam.lr() <= config.min_lr {
                break; // plateaued through the extra window at min_lr
            }
            adam.set_lr((adam.lr() * config.lr_factor).max(config.min_lr));
            stale = 0;
        }
        let grads = objective.grad(&active, params, &psi_prev)?;
        adam.step(params, &grads)?;
    }
    best_loss = best_loss.min(losses[0]);
    params[boundary..].copy_from_slice(&best_params);

    Ok(BlockRecord {
        label: label.to_owned(),
        start_slot: boundary,
        end_slot: params.len(),
        losses,
        final_loss: best_loss,
        final_infidelity: best_loss,
        tvd_after: f64::NAN,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Result of the marginal stage: the assembled product circuit over all
/// registers, its parameters, and per-stage records.
pub struct MarginalOutcome {
    pub circuit: Circuit,
    pub params: Vec<f64>,
    pub records: Vec<BlockRecord>,
    /// Born distribution of each trained register.
    pub register_probs: Vec<Vec<f64>>,
}

/// Trains one hierarchical univariate circuit per register against its
/// marginal target and assembles the product circuit. Each `targets[r]`
/// must be a single-feature distribution with a common `k`.
pub fn train_marginals(
    targets: &[DiscreteDistribution],
    l_u: usize,
    config: &TrainConfig,
) -> Result<MarginalOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    train_marginals_impl(targets, l_u, config, &mut rng)
}

pub(crate) fn train_marginals_impl(
    targets: &[DiscreteDistribution],
    l_u: usize,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<MarginalOutcome> {
    config.validate()?;
    if targets.is_empty() {
        return Err(Error::invalid_input("no marginal targets"));
    }
    let k = targets[0].k;
    if targets.iter().any(|t| t.d != 1 || t.k != k) {
        return Err(Error::invalid_input(
            "marginal targets must be single-feature distributions with a common k",
        ));
    }
    if l_u == 0 {
        return Err(Error::invalid_input("l_u must be at least 1"));
    }
    let d = targets.len();
    let local_input = RealState::uniform(k)?;

    let mut per_register_params: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut register_probs = Vec::with_capacity(d);
    let mut records: Vec<BlockRecord> = Vec::new();
    // global slot offset of each register's fragment, fixed by construction
    let mut register_offsets = Vec::with_capacity(d);
    let mut offset = 0usize;

    for (idx, target) in targets.iter().enumerate() {
        let r = idx + 1;
        register_offsets.push(offset);
        let mut local = Circuit::new(k);
        let mut params: Vec<f64> = Vec::new();

        if config.hierarchical_marginals {
            for j in 1..=k {
                let start = local.n_params();
                let stage = build_sorb(1, j, l_u, start);
                stage.append_to(&mut local)?;
                init_params(&mut params, local.n_params(), config, rng);
                local.set_frozen_below(start);
                let stage_target = stage_target_amps(target, j, k)?;
                let mut rec = train_block(
                    &local,
                    &mut params,
                    &local_input,
                    &Objective::Fidelity {
                        target_amps: &stage_target,
                    },
                    config,
                    &format!("M{r}.{j}"),
                )?;
                let state = local.run(&params, &local_input)?;
                let stage_probs: Vec<f64> = stage_target.iter().map(|a| a * a).collect();
                rec.tvd_after = tvd(&state.born_probs(), &stage_probs)?;
                rec.start_slot += offset;
                rec.end_slot += offset;
                records.push(rec);
            }
        } else {
            let (frag, _) = build_univariate(1, k, l_u, 0);
            frag.append_to(&mut local)?;
            init_params(&mut params, local.n_params(), config, rng);
            let target_amps = target.target_amplitudes();
            let mut rec = train_block(
                &local,
                &mut params,
                &local_input,
                &Objective::Fidelity {
                    target_amps: &target_amps,
                },
                config,
                &format!("M{r}"),
            )?;
            let state = local.run(&params, &local_input)?;
            rec.tvd_after = tvd(&state.born_probs(), target.probs())?;
            rec.start_slot += offset;
            rec.end_slot += offset;
            records.push(rec);
        }

        let state = local.run(&params, &local_input)?;
        register_probs.push(state.born_probs());
        offset += params.len();
        per_register_params.push(params);
    }

    // assemble the product circuit over all d registers
    let mut circuit = Circuit::new(d * k);
    let mut params = Vec::with_capacity(offset);
    for (idx, local_params) in per_register_params.into_iter().enumerate() {
        let (frag, _) = build_univariate(idx + 1, k, l_u, register_offsets[idx]);
        frag.append_to(&mut circuit)?;
        params.extend(local_params);
    }
    circuit.set_frozen_below(circuit.n_params());

    Ok(MarginalOutcome {
        circuit,
        params,
        records,
        register_probs,
    })
}

/// Stage-`j` target on a `k`-qubit register: the coarsened marginal on the
/// `j` most significant qubits, uniform on the rest.
fn stage_target_amps(target: &DiscreteDistribution, j: usize, k: usize) -> Result<Vec<f64>> {
    let coarse = if j == k {
        target.clone()
    } else {
        target.coarsen(j)?
    };
    let coarse_amps = coarse.target_amplitudes();
    let rest = k - j;
    let fill = (1u64 << rest) as f64;
    let fill_amp = fill.sqrt().recip();
    let mut amps = vec![0.0; 1 << k];
    for (idx, amp) in amps.iter_mut().enumerate() {
        *amp = coarse_amps[idx >> rest] * fill_amp;
    }
    Ok(amps)
}

fn init_params(params: &mut Vec<f64>, up_to: usize, config: &TrainConfig, rng: &mut ChaCha8Rng) {
    let half = config.init_scale / 2.0;
    while params.len() < up_to {
        params.push(rng.random_range(-half..half));
    }
}

/// Trained circuit, parameters, history, and the final state.
pub struct TrainOutcome {
    pub circuit: Circuit,
    pub params: Vec<f64>,
    pub trace: TrainTrace,
    pub final_state: RealState,
}

/// The full progressive run: marginal stage, then one bivariate entangling
/// block per vine edge in vine order, freezing everything trained before.
pub fn train_through_vine(
    vine: &VineStructure,
    d: usize,
    k: usize,
    l_u: usize,
    l_b: usize,
    target: &DiscreteDistribution,
    sample_codes: Option<&[usize]>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    vine.validate()?;
    if vine.d != d || target.d != d || target.k != k {
        return Err(Error::invalid_input(format!(
            "inconsistent dimensions: vine d={}, target d={} k={}, requested d={d} k={k}",
            vine.d, target.d, target.k
        )));
    }
    if l_b == 0 {
        return Err(Error::invalid_input("l_b must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let marginal_targets: Vec<DiscreteDistribution> = (1..=d)
        .map(|r| target.marginal(&[r]))
        .collect::<Result<_>>()?;
    let marg = train_marginals_impl(&marginal_targets, l_u, config, &mut rng)?;
    let mut circuit = marg.circuit;
    let mut params = marg.params;
    let mut blocks = marg.records;

    let input = RealState::uniform(d * k)?;
    let target_amps = target.target_amplitudes();
    let state = circuit.run(&params, &input)?;
    let marginal_tvd = tvd(&state.born_probs(), target.probs())?;

    let weights = match (config.loss, sample_codes) {
        (LossKind::Sample, Some(codes)) => {
            if codes.is_empty() {
                return Err(Error::invalid_input("sample loss needs a non-empty dataset"));
            }
            Some(sample_weights(codes, target.probs().len()))
        }
        (LossKind::Sample, None) => {
            return Err(Error::invalid_input(
                "sample loss requires discretized sample codes",
            ))
        }
        (LossKind::Fidelity, _) => None,
    };
    let objective = match &weights {
        Some(w) => Objective::Sample { weights: w },
        None => Objective::Fidelity {
            target_amps: &target_amps,
        },
    };

    for (ti, ei, edge) in vine.edges() {
        let (x, y) = edge.feature_pair();
        let start = circuit.n_params();
        let frag = build_beb(x, y, k, l_b, start);
        frag.append_to(&mut circuit)?;
        circuit.set_frozen_below(start);
        init_params(&mut params, circuit.n_params(), config, &mut rng);
        let label = format!("T{ti},{ei}");
        let mut rec = train_block(&circuit, &mut params, &input, &objective, config, &label)?;
        let state = circuit.run(&params, &input)?;
        rec.tvd_after = tvd(&state.born_probs(), target.probs())?;
        rec.final_infidelity = 1.0 - state.fidelity(&target_amps)?;
        blocks.push(rec);
    }

    let final_state = circuit.run(&params, &input)?;
    let final_tvd = tvd(&final_state.born_probs(), target.probs())?;
    let final_infidelity = 1.0 - final_state.fidelity(&target_amps)?;
    circuit.set_frozen_below(circuit.n_params());

    Ok(TrainOutcome {
        circuit,
        params,
        trace: TrainTrace {
            blocks,
            marginal_tvd,
            final_tvd,
            final_infidelity,
        },
        final_state,
    })
}

/// Raw little-endian f64 parameter dump plus a JSON sidecar describing block
/// boundaries.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub n_qubits: usize,
    pub d: usize,
    pub k: usize,
    pub l_u: usize,
    pub l_b: usize,
    pub n_params: usize,
    pub blocks: Vec<BlockSpan>,
}

pub fn write_checkpoint(
    bin_path: &Path,
    meta_path: &Path,
    params: &[f64],
    meta: &CheckpointMeta,
) -> Result<()> {
    if meta.n_params != params.len() {
        return Err(Error::LengthMismatch {
            expected: meta.n_params,
            got: params.len(),
        });
    }
    let mut w = BufWriter::new(File::create(bin_path)?);
    for p in params {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    let mw = BufWriter::new(File::create(meta_path)?);
    serde_json::to_writer_pretty(mw, meta)?;
    Ok(())
}

pub fn read_checkpoint(bin_path: &Path, meta_path: &Path) -> Result<(Vec<f64>, CheckpointMeta)> {
    let meta: CheckpointMeta = serde_json::from_reader(File::open(meta_path)?)?;
    let mut bytes = Vec::new();
    File::open(bin_path)?.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * meta.n_params {
        return Err(Error::LengthMismatch {
            expected: 8 * meta.n_params,
            got: bytes.len(),
        });
    }
    let params = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((params, meta))
}
