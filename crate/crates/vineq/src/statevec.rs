//! Real-amplitude statevector engine for RY/CRY circuits.
//!
//! The gate set generates only special-orthogonal operators, so amplitudes
//! stay real under evolution and are stored as plain `f64`. Qubits are
//! 1-based and qubit 1 is the most significant bit of the basis index, so
//! feature register `r` with `k` qubits occupies qubits `k(r-1)+1 ..= kr`.
//!
//! Gradients of fidelity-type losses are exact, computed by a reverse-mode
//! sweep that undoes gates one by one (the inverse of an RY/CRY is the same
//! gate with negated angle) and contracts the generator action against a
//! back-propagated costate.

use crate::error::{Error, Result};

/// Largest register the dense simulator will allocate by default.
pub const DEFAULT_MAX_QUBITS: usize = 26;

/// Real amplitude vector over `n` qubits, unit norm.
#[derive(Clone, Debug, PartialEq)]
pub struct RealState {
    n_qubits: usize,
    amps: Vec<f64>,
}

impl RealState {
    /// Uniform superposition `|+>^n`: every amplitude `2^{-n/2}`.
    pub fn uniform(n_qubits: usize) -> Result<Self> {
        Self::uniform_with_limit(n_qubits, DEFAULT_MAX_QUBITS)
    }

    /// Uniform superposition with an explicit capacity cap.
    pub fn uniform_with_limit(n_qubits: usize, limit: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > limit {
            return Err(Error::CapacityExceeded {
                requested: n_qubits,
                limit,
            });
        }
        let dim = 1usize << n_qubits;
        let amp = (dim as f64).sqrt().recip();
        Ok(RealState {
            n_qubits,
            amps: vec![amp; dim],
        })
    }

    /// Computational basis state `|index>`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > DEFAULT_MAX_QUBITS {
            return Err(Error::CapacityExceeded {
                requested: n_qubits,
                limit: DEFAULT_MAX_QUBITS,
            });
        }
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::LengthMismatch {
                expected: dim,
                got: index,
            });
        }
        let mut amps = vec![0.0; dim];
        amps[index] = 1.0;
        Ok(RealState { n_qubits, amps })
    }

    /// Wraps an amplitude vector; length must be a power of two and the
    /// norm must be 1 within 1e-10.
    pub fn from_amplitudes(amps: Vec<f64>) -> Result<Self> {
        let dim = amps.len();
        if dim == 0 || !dim.is_power_of_two() {
            return Err(Error::invalid_input(format!(
                "amplitude vector length {dim} is not a power of two"
            )));
        }
        let n_qubits = dim.trailing_zeros() as usize;
        let norm: f64 = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::invalid_input(format!(
                "amplitude vector norm {norm} is not 1"
            )));
        }
        Ok(RealState { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amps(&self) -> &[f64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    fn check_qubit(&self, qubit: usize) -> Result<usize> {
        if qubit == 0 || qubit > self.n_qubits {
            return Err(Error::QubitOutOfRange {
                qubit,
                n_qubits: self.n_qubits,
            });
        }
        // qubit 1 is the most significant bit
        Ok(self.n_qubits - qubit)
    }

    /// Applies `RY(theta)` on `target` in place.
    pub fn apply_ry(&mut self, target: usize, theta: f64) -> Result<()> {
        let bit = self.check_qubit(target)?;
        let (c, s) = half_angle(theta);
        let block = 1usize << bit;
        let mut base = 0;
        while base < self.amps.len() {
            for i in base..base + block {
                let j = i + block;
                let a = self.amps[i];
                let b = self.amps[j];
                self.amps[i] = c * a - s * b;
                self.amps[j] = s * a + c * b;
            }
            base += 2 * block;
        }
        Ok(())
    }

    /// Applies `CRY(theta)` with the given control and target in place;
    /// identity on the control-0 subspace.
    pub fn apply_cry(&mut self, control: usize, target: usize, theta: f64) -> Result<()> {
        if control == target {
            return Err(Error::InvalidGate(control));
        }
        let tbit = self.check_qubit(target)?;
        let cbit = self.check_qubit(control)?;
        let (c, s) = half_angle(theta);
        let block = 1usize << tbit;
        let cmask = 1usize << cbit;
        let mut base = 0;
        while base < self.amps.len() {
            for i in base..base + block {
                if i & cmask == 0 {
                    continue;
                }
                let j = i + block;
                let a = self.amps[i];
                let b = self.amps[j];
                self.amps[i] = c * a - s * b;
                self.amps[j] = s * a + c * b;
            }
            base += 2 * block;
        }
        Ok(())
    }

    /// Squared amplitudes (the Born distribution over basis states).
    pub fn born_probs(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a * a).collect()
    }

    /// `|<self|target>|^2`.
    pub fn fidelity(&self, target_amps: &[f64]) -> Result<f64> {
        let dot = self.dot(target_amps)?;
        Ok(dot * dot)
    }

    /// Plain inner product with another real amplitude vector.
    pub fn dot(&self, other: &[f64]) -> Result<f64> {
        if other.len() != self.amps.len() {
            return Err(Error::LengthMismatch {
                expected: self.amps.len(),
                got: other.len(),
            });
        }
        Ok(self
            .amps
            .iter()
            .zip(other)
            .map(|(a, b)| a * b)
            .sum::<f64>())
    }

    /// Flat (bitstring, amplitude) export, qubit 1 leftmost.
    pub fn bitstring_amplitudes(&self) -> impl Iterator<Item = (String, f64)> + '_ {
        let n = self.n_qubits;
        self.amps
            .iter()
            .enumerate()
            .map(move |(i, &a)| (format!("{i:0n$b}"), a))
    }
}

#[inline]
fn half_angle(theta: f64) -> (f64, f64) {
    let h = 0.5 * theta;
    (h.cos(), h.sin())
}

/// A single parameterized gate bound to a slot in a parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateOp {
    Ry { target: usize, slot: usize },
    Cry { control: usize, target: usize, slot: usize },
}

impl GateOp {
    pub fn slot(&self) -> usize {
        match self {
            GateOp::Ry { slot, .. } | GateOp::Cry { slot, .. } => *slot,
        }
    }

    pub fn is_cry(&self) -> bool {
        matches!(self, GateOp::Cry { .. })
    }

    /// Qubits the gate touches.
    pub fn qubits(&self) -> (usize, Option<usize>) {
        match self {
            GateOp::Ry { target, .. } => (*target, None),
            GateOp::Cry {
                control, target, ..
            } => (*target, Some(*control)),
        }
    }
}

/// Ordered RY/CRY gate sequence over a parameter vector. Slots below
/// `frozen_below` are frozen during training and report zero gradient.
#[derive(Clone, Debug)]
pub struct Circuit {
    n_qubits: usize,
    ops: Vec<GateOp>,
    n_params: usize,
    frozen_below: usize,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Circuit {
            n_qubits,
            ops: Vec::new(),
            n_params: 0,
            frozen_below: 0,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ops(&self) -> &[GateOp] {
        &self.ops
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn frozen_below(&self) -> usize {
        self.frozen_below
    }

    /// Freezes every slot below `boundary`. Slot layout is sequential in
    /// construction order, so the frozen ops form a prefix of `ops`.
    pub fn set_frozen_below(&mut self, boundary: usize) {
        self.frozen_below = boundary.min(self.n_params);
    }

    /// Appends a gate, growing the parameter vector if the slot is new.
    pub fn push(&mut self, op: GateOp) -> Result<()> {
        let (target, control) = op.qubits();
        if target == 0 || target > self.n_qubits {
            return Err(Error::QubitOutOfRange {
                qubit: target,
                n_qubits: self.n_qubits,
            });
        }
        if let Some(c) = control {
            if c == 0 || c > self.n_qubits {
                return Err(Error::QubitOutOfRange {
                    qubit: c,
                    n_qubits: self.n_qubits,
                });
            }
            if c == target {
                return Err(Error::InvalidGate(c));
            }
        }
        self.n_params = self.n_params.max(op.slot() + 1);
        self.ops.push(op);
        Ok(())
    }

    /// The circuit made of ops whose slots are frozen. `n_params` is kept so
    /// the full parameter vector remains valid for it.
    pub fn frozen_prefix(&self) -> Circuit {
        let ops: Vec<GateOp> = self
            .ops
            .iter()
            .copied()
            .filter(|op| op.slot() < self.frozen_below)
            .collect();
        Circuit {
            n_qubits: self.n_qubits,
            ops,
            n_params: self.n_params,
            frozen_below: self.frozen_below,
        }
    }

    /// The trainable suffix (ops with slots at or above the frozen boundary).
    pub fn active_suffix(&self) -> Circuit {
        let ops: Vec<GateOp> = self
            .ops
            .iter()
            .copied()
            .filter(|op| op.slot() >= self.frozen_below)
            .collect();
        Circuit {
            n_qubits: self.n_qubits,
            ops,
            n_params: self.n_params,
            frozen_below: self.frozen_below,
        }
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params {
            return Err(Error::LengthMismatch {
                expected: self.n_params,
                got: params.len(),
            });
        }
        Ok(())
    }

    /// Applies the circuit to `state` in place.
    pub fn apply(&self, params: &[f64], state: &mut RealState) -> Result<()> {
        self.check_params(params)?;
        if state.n_qubits != self.n_qubits {
            return Err(Error::LengthMismatch {
                expected: 1 << self.n_qubits,
                got: state.amps.len(),
            });
        }
        for op in &self.ops {
            apply_op(state, *op, params[op.slot()])?;
        }
        Ok(())
    }

    /// Applies the circuit to a copy of `input`.
    pub fn run(&self, params: &[f64], input: &RealState) -> Result<RealState> {
        let mut state = input.clone();
        self.apply(params, &mut state)?;
        Ok(state)
    }

    /// Gradient of the fidelity `|<psi(theta)|target>|^2` with respect to
    /// every parameter slot; frozen slots report 0.
    pub fn grad_fidelity(
        &self,
        params: &[f64],
        input: &RealState,
        target_amps: &[f64],
    ) -> Result<Vec<f64>> {
        let output = self.run(params, input)?;
        let overlap = output.dot(target_amps)?;
        // dF/dpsi = 2 <psi|t> t
        let seed: Vec<f64> = target_amps.iter().map(|t| 2.0 * overlap * t).collect();
        self.backward(params, output, seed)
    }

    /// Gradient of the weighted probability mass `sum_x w_x psi_x^2`
    /// (the sample-loss objective for non-negative weights).
    pub fn grad_weighted_prob(
        &self,
        params: &[f64],
        input: &RealState,
        weights: &[f64],
    ) -> Result<Vec<f64>> {
        let output = self.run(params, input)?;
        if weights.len() != output.amps.len() {
            return Err(Error::LengthMismatch {
                expected: output.amps.len(),
                got: weights.len(),
            });
        }
        let seed: Vec<f64> = output
            .amps
            .iter()
            .zip(weights)
            .map(|(a, w)| 2.0 * w * a)
            .collect();
        self.backward(params, output, seed)
    }

    /// Reverse-mode sweep. `output` is the forward result, `seed` is
    /// dLoss/dpsi at the output. Gates are undone in reverse order while the
    /// costate is transported alongside; each gate's contribution is the
    /// contraction of the costate with the generator action on the pre-gate
    /// state.
    fn backward(&self, params: &[f64], output: RealState, seed: Vec<f64>) -> Result<Vec<f64>> {
        let mut grads = vec![0.0; self.n_params];
        let mut phi = output;
        let mut lam = RealState {
            n_qubits: self.n_qubits,
            amps: seed,
        };
        for op in self.ops.iter().rev() {
            let theta = params[op.slot()];
            // undo the gate: RY/CRY inverses are the same gate at -theta
            apply_op(&mut phi, *op, -theta)?;
            if op.slot() >= self.frozen_below {
                grads[op.slot()] += contract_generator(&lam, &phi, *op, theta);
            }
            // transport the costate: U^T = U(-theta)
            apply_op(&mut lam, *op, -theta)?;
        }
        Ok(grads)
    }
}

fn apply_op(state: &mut RealState, op: GateOp, theta: f64) -> Result<()> {
    match op {
        GateOp::Ry { target, .. } => state.apply_ry(target, theta),
        GateOp::Cry {
            control, target, ..
        } => state.apply_cry(control, target, theta),
    }
}

/// Computes `<lam| dU/dtheta |phi>` for a single RY/CRY without
/// materializing the derivative state. `dRY(theta)/dtheta` is
/// `(1/2) RY(theta + pi)`; for CRY the same acts on the control-1 subspace
/// and annihilates the control-0 subspace.
fn contract_generator(lam: &RealState, phi: &RealState, op: GateOp, theta: f64) -> f64 {
    let n = phi.n_qubits;
    let (c, s) = half_angle(theta);
    // derivative 2x2 block: 0.5 * [[-s, -c], [c, -s]]
    let (target, control) = op.qubits();
    let block = 1usize << (n - target);
    let cmask = control.map(|q| 1usize << (n - q));
    let mut acc = 0.0;
    let mut base = 0;
    while base < phi.amps.len() {
        for i in base..base + block {
            if let Some(m) = cmask {
                if i & m == 0 {
                    continue;
                }
            }
            let j = i + block;
            let a = phi.amps[i];
            let b = phi.amps[j];
            let da = -s * a - c * b;
            let db = c * a - s * b;
            acc += lam.amps[i] * da + lam.amps[j] * db;
        }
        base += 2 * block;
    }
    0.5 * acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn uniform_state_examples() {
        let s = RealState::uniform(2).unwrap();
        assert_eq!(s.amps(), &[0.5, 0.5, 0.5, 0.5]);
        let s = RealState::uniform(1).unwrap();
        assert_abs_diff_eq!(s.amps()[0], FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amps()[1], FRAC_1_SQRT_2, epsilon = 1e-15);
        let s = RealState::uniform(9).unwrap();
        let expect = 2f64.powf(-4.5);
        assert!(s.amps().iter().all(|&a| (a - expect).abs() < 1e-15));
        assert_abs_diff_eq!(s.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_rejects_over_capacity() {
        assert!(matches!(
            RealState::uniform(27),
            Err(Error::CapacityExceeded { .. })
        ));
        assert!(RealState::uniform_with_limit(5, 4).is_err());
    }

    #[test]
    fn ry_identity_at_zero() {
        let mut s = RealState::uniform(3).unwrap();
        let before = s.clone();
        s.apply_ry(2, 0.0).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn ry_pi_flips_basis() {
        // |0>, theta=pi -> |1>
        let mut s = RealState::basis(1, 0).unwrap();
        s.apply_ry(1, std::f64::consts::PI).unwrap();
        assert_abs_diff_eq!(s.amps()[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amps()[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ry_half_pi_makes_plus() {
        let mut s = RealState::basis(1, 0).unwrap();
        s.apply_ry(1, std::f64::consts::FRAC_PI_2).unwrap();
        assert_abs_diff_eq!(s.amps()[0], FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amps()[1], FRAC_1_SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn cry_inactive_on_control_zero() {
        // |01>: control qubit 1 is 0 -> unchanged
        let mut s = RealState::basis(2, 0b01).unwrap();
        let before = s.clone();
        s.apply_cry(1, 2, 1.234).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn cry_pi_on_one_one() {
        // |11> with theta=pi on (control=1, target=2): RY(pi)|1> = -|0>, so -|10>
        let mut s = RealState::basis(2, 0b11).unwrap();
        s.apply_cry(1, 2, std::f64::consts::PI).unwrap();
        assert_abs_diff_eq!(s.amps()[0b10], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amps()[0b11], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn cry_rejects_control_equals_target() {
        let mut s = RealState::uniform(2).unwrap();
        assert!(matches!(s.apply_cry(1, 1, 0.3), Err(Error::InvalidGate(1))));
    }

    #[test]
    fn empty_circuit_is_identity() {
        let c = Circuit::new(3);
        let s = RealState::uniform(3).unwrap();
        let out = c.run(&[], &s).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn zero_angles_are_identity() {
        let c = sorb_layer_2q();
        let s = RealState::uniform(2).unwrap();
        let out = c.run(&[0.0; 4], &s).unwrap();
        for (a, b) in out.amps().iter().zip(s.amps()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn run_rejects_param_length_mismatch() {
        let c = sorb_layer_2q();
        let s = RealState::uniform(2).unwrap();
        assert!(matches!(
            c.run(&[0.0; 3], &s),
            Err(Error::LengthMismatch { .. })
        ));
    }

    // single SORB layer on 2 qubits: CRY(1,2), CRY(2,1), RY(1), RY(2)
    fn sorb_layer_2q() -> Circuit {
        let mut c = Circuit::new(2);
        c.push(GateOp::Cry {
            control: 1,
            target: 2,
            slot: 0,
        })
        .unwrap();
        c.push(GateOp::Cry {
            control: 2,
            target: 1,
            slot: 1,
        })
        .unwrap();
        c.push(GateOp::Ry { target: 1, slot: 2 }).unwrap();
        c.push(GateOp::Ry { target: 2, slot: 3 }).unwrap();
        c
    }

    // dense 4x4 oracle: build each gate's matrix from the definitions and
    // multiply in application order
    fn dense_gate(n: usize, op: GateOp, theta: f64) -> Vec<Vec<f64>> {
        let dim = 1 << n;
        let (c, s) = half_angle(theta);
        let mut m = vec![vec![0.0; dim]; dim];
        let (target, control) = op.qubits();
        let tmask = 1usize << (n - target);
        let cmask = control.map(|q| 1usize << (n - q));
        for col in 0..dim {
            let active = cmask.map_or(true, |m| col & m != 0);
            if !active {
                m[col][col] = 1.0;
                continue;
            }
            let partner = col ^ tmask;
            if col & tmask == 0 {
                // |0> column: cos|0> + sin|1>
                m[col][col] = c;
                m[partner][col] = s;
            } else {
                // |1> column: -sin|0> + cos|1>
                m[partner][col] = -s;
                m[col][col] = c;
            }
        }
        m
    }

    #[test]
    fn run_matches_dense_matrix_oracle() {
        let circuit = sorb_layer_2q();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let params: Vec<f64> = (0..4)
                .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
                .collect();
            let input = RealState::uniform(2).unwrap();
            let out = circuit.run(&params, &input).unwrap();

            // oracle: multiply dense matrices onto the input vector in order
            let mut v = input.amps().to_vec();
            for op in circuit.ops() {
                let m = dense_gate(2, *op, params[op.slot()]);
                let mut w = vec![0.0; 4];
                for (row, wr) in w.iter_mut().enumerate() {
                    for (col, vc) in v.iter().enumerate() {
                        *wr += m[row][col] * vc;
                    }
                }
                v = w;
            }
            for (a, b) in out.amps().iter().zip(&v) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
            assert_abs_diff_eq!(out.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn sorb_layer_dense_matrix_is_orthogonal() {
        let circuit = sorb_layer_2q();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params: Vec<f64> = (0..4)
            .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
            .collect();
        // reconstruct the dense unitary column by column
        let dim = 4;
        let mut u = vec![vec![0.0; dim]; dim];
        for col in 0..dim {
            let e = RealState::basis(2, col).unwrap();
            let out = circuit.run(&params, &e).unwrap();
            for row in 0..dim {
                u[row][col] = out.amps()[row];
            }
        }
        for i in 0..dim {
            for j in 0..dim {
                let dot: f64 = (0..dim).map(|r| u[r][i] * u[r][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(dot, expect, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn fidelity_examples() {
        let s = RealState::uniform(2).unwrap();
        assert_abs_diff_eq!(s.fidelity(s.amps()).unwrap(), 1.0, epsilon = 1e-12);
        let a = RealState::basis(2, 0).unwrap();
        let b = RealState::basis(2, 3).unwrap();
        assert_abs_diff_eq!(a.fidelity(b.amps()).unwrap(), 0.0, epsilon = 1e-15);
        let plus = RealState::uniform(1).unwrap();
        let zero = RealState::basis(1, 0).unwrap();
        assert_abs_diff_eq!(zero.fidelity(plus.amps()).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn born_probs_examples() {
        let s = RealState::uniform(2).unwrap();
        assert_eq!(s.born_probs(), vec![0.25; 4]);
        let b = RealState::basis(3, 5).unwrap();
        let p = b.born_probs();
        assert_eq!(p[5], 1.0);
        assert_eq!(p.iter().sum::<f64>(), 1.0);

        // random state: element-wise square oracle
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut v: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        let s = RealState::from_amplitudes(v.clone()).unwrap();
        for (p, a) in s.born_probs().iter().zip(&v) {
            assert_abs_diff_eq!(*p, a * a, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(s.born_probs().iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn grad_of_empty_circuit_is_empty() {
        let c = Circuit::new(2);
        let s = RealState::uniform(2).unwrap();
        let g = c.grad_fidelity(&[], &s, s.amps()).unwrap();
        assert!(g.is_empty());
    }

    #[test]
    fn grad_single_ry_closed_form() {
        // F = cos^2(theta/2) against |0>; dF/dtheta = -sin(theta)/2
        let mut c = Circuit::new(1);
        c.push(GateOp::Ry { target: 1, slot: 0 }).unwrap();
        let input = RealState::basis(1, 0).unwrap();
        let target = [1.0, 0.0];
        let theta = std::f64::consts::FRAC_PI_2;
        let g = c.grad_fidelity(&[theta], &input, &target).unwrap();
        assert_abs_diff_eq!(g[0], -0.5, epsilon = 1e-12);
        for t in [-2.1, -0.4, 0.0, 0.9, 2.7] {
            let g = c.grad_fidelity(&[t], &input, &target).unwrap();
            assert_abs_diff_eq!(g[0], -0.5 * t.sin(), epsilon = 1e-12);
        }
    }

    fn random_circuit(n: usize, n_gates: usize, rng: &mut ChaCha8Rng) -> Circuit {
        let mut c = Circuit::new(n);
        for slot in 0..n_gates {
            if n > 1 && rng.random_range(0..2) == 0 {
                let control = rng.random_range(1..=n);
                let mut target = rng.random_range(1..=n);
                while target == control {
                    target = rng.random_range(1..=n);
                }
                c.push(GateOp::Cry {
                    control,
                    target,
                    slot,
                })
                .unwrap();
            } else {
                let target = rng.random_range(1..=n);
                c.push(GateOp::Ry { target, slot }).unwrap();
            }
        }
        c
    }

    fn random_target(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut t: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = t.iter().map(|a| a * a).sum::<f64>().sqrt();
        t.iter_mut().for_each(|a| *a /= norm);
        t
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 6;
        let circuit = random_circuit(n, 50, &mut rng);
        let input = RealState::uniform(n).unwrap();
        let target = random_target(1 << n, &mut rng);
        let params: Vec<f64> = (0..50).map(|_| rng.random_range(-3.0..3.0)).collect();

        let g = circuit.grad_fidelity(&params, &input, &target).unwrap();
        let h = 1e-5;
        for slot in 0..params.len() {
            let mut up = params.clone();
            up[slot] += h;
            let mut dn = params.clone();
            dn[slot] -= h;
            let fu = circuit.run(&up, &input).unwrap().fidelity(&target).unwrap();
            let fd = circuit.run(&dn, &input).unwrap().fidelity(&target).unwrap();
            let fdg = (fu - fd) / (2.0 * h);
            let rel = (g[slot] - fdg).abs() / g[slot].abs().max(fdg.abs()).max(1e-3);
            assert!(
                rel <= 1e-5,
                "slot {slot}: adjoint {} vs fd {} (rel {rel})",
                g[slot],
                fdg
            );
        }
    }

    #[test]
    fn grad_frozen_slots_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut circuit = random_circuit(4, 12, &mut rng);
        circuit.set_frozen_below(7);
        let input = RealState::uniform(4).unwrap();
        let target = random_target(16, &mut rng);
        let params: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = circuit.grad_fidelity(&params, &input, &target).unwrap();
        assert!(g[..7].iter().all(|&x| x == 0.0));
        assert!(g[7..].iter().any(|&x| x != 0.0));
    }

    #[test]
    fn grad_weighted_prob_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 4;
        let circuit = random_circuit(n, 16, &mut rng);
        let input = RealState::uniform(n).unwrap();
        let weights: Vec<f64> = (0..1 << n).map(|_| rng.random_range(0.0..1.0)).collect();
        let params: Vec<f64> = (0..16).map(|_| rng.random_range(-2.0..2.0)).collect();
        let loss = |p: &[f64]| -> f64 {
            let out = circuit.run(p, &input).unwrap();
            out.amps()
                .iter()
                .zip(&weights)
                .map(|(a, w)| w * a * a)
                .sum()
        };
        let g = circuit
            .grad_weighted_prob(&params, &input, &weights)
            .unwrap();
        let h = 1e-5;
        for slot in 0..params.len() {
            let mut up = params.clone();
            up[slot] += h;
            let mut dn = params.clone();
            dn[slot] -= h;
            let fdg = (loss(&up) - loss(&dn)) / (2.0 * h);
            let rel = (g[slot] - fdg).abs() / g[slot].abs().max(fdg.abs()).max(1e-3);
            assert!(rel <= 1e-5, "slot {slot}");
        }
    }

    #[test]
    fn norm_preserved_under_random_gate_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..1000 {
            let n = rng.random_range(1..=10usize);
            let mut s = RealState::uniform(n).unwrap();
            for _ in 0..30 {
                let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                let target = rng.random_range(1..=n);
                if n > 1 && rng.random_range(0..2) == 0 {
                    let mut control = rng.random_range(1..=n);
                    while control == target {
                        control = rng.random_range(1..=n);
                    }
                    s.apply_cry(control, target, theta).unwrap();
                } else {
                    s.apply_ry(target, theta).unwrap();
                }
            }
            assert!((s.norm() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn bitstring_export_is_big_endian() {
        let s = RealState::basis(3, 0b110).unwrap();
        let rows: Vec<(String, f64)> = s.bitstring_amplitudes().collect();
        assert_eq!(rows.len(), 8);
        assert_eq!(rows[6].0, "110");
        assert_eq!(rows[6].1, 1.0);
    }
}
