//! Circuit-block constructors: the special-orthogonal ring block (SORB),
//! the hierarchical univariate circuit, and the bivariate entangling block
//! (BEB), plus resource accounting and block-parallel depth schedules.
//!
//! Parameter slots are allocated sequentially in construction order, so a
//! progressive extension appends slots and freezing is an index threshold.
//! A ring over a single qubit degenerates to one RY per layer (the wrap CRY
//! would be a self-loop); resource reports surface the difference from the
//! closed-form counts, which assume the full ring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statevec::{Circuit, GateOp};
use crate::vine::VineStructure;

/// The block families the ansatz is assembled from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    Sorb,
    Univariate,
    Beb,
}

/// A block placement: which registers, how many bits each, how many layers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub registers: (usize, Option<usize>),
    pub k: usize,
    pub layers: usize,
}

impl BlockSpec {
    pub fn build(&self, param_offset: usize) -> Result<Fragment> {
        if self.layers == 0 || self.k == 0 {
            return Err(Error::invalid_input("block needs k >= 1 and layers >= 1"));
        }
        let r1 = register_first_qubit(self.registers.0, self.k);
        match self.kind {
            BlockKind::Sorb => Ok(build_sorb(r1, self.k, self.layers, param_offset)),
            BlockKind::Univariate => {
                Ok(build_univariate(self.registers.0, self.k, self.layers, param_offset).0)
            }
            BlockKind::Beb => {
                let q = self.registers.1.ok_or_else(|| {
                    Error::invalid_input("bivariate block needs two registers")
                })?;
                if q == self.registers.0 {
                    return Err(Error::invalid_input(
                        "bivariate block registers must be distinct",
                    ));
                }
                Ok(build_beb(self.registers.0, q, self.k, self.layers, param_offset))
            }
        }
    }
}

/// First qubit of feature register `r` when every register has `k` qubits.
pub fn register_first_qubit(r: usize, k: usize) -> usize {
    k * (r - 1) + 1
}

/// A gate sequence with parameter slots `param_offset..param_offset+n_params`,
/// ready to be appended to a circuit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fragment {
    pub ops: Vec<GateOp>,
    pub n_params: usize,
    pub param_offset: usize,
}

impl Fragment {
    fn new(param_offset: usize) -> Self {
        Fragment {
            ops: Vec::new(),
            n_params: 0,
            param_offset,
        }
    }

    fn ry(&mut self, target: usize) {
        let slot = self.param_offset + self.n_params;
        self.ops.push(GateOp::Ry { target, slot });
        self.n_params += 1;
    }

    fn cry(&mut self, control: usize, target: usize) {
        let slot = self.param_offset + self.n_params;
        self.ops.push(GateOp::Cry {
            control,
            target,
            slot,
        });
        self.n_params += 1;
    }

    fn concat(&mut self, other: Fragment) {
        debug_assert_eq!(other.param_offset, self.param_offset + self.n_params);
        self.ops.extend(other.ops);
        self.n_params += other.n_params;
    }

    pub fn n_ry(&self) -> usize {
        self.ops.iter().filter(|op| !op.is_cry()).count()
    }

    pub fn n_cry(&self) -> usize {
        self.ops.iter().filter(|op| op.is_cry()).count()
    }

    /// Appends onto `circuit`, requiring the slot layout to stay sequential.
    pub fn append_to(&self, circuit: &mut Circuit) -> Result<()> {
        if circuit.n_params() != self.param_offset {
            return Err(Error::invalid_input(format!(
                "fragment expects parameter offset {}, circuit has {} slots",
                self.param_offset,
                circuit.n_params()
            )));
        }
        for op in &self.ops {
            circuit.push(*op)?;
        }
        Ok(())
    }
}

/// SORB layers on the `kappa` qubits starting at `r1`. Per layer: CRYs on
/// even-index adjacent pairs, then odd-index pairs, then the wrap CRY, then
/// one RY per qubit — `2*kappa` parameters. A single-qubit ring degenerates
/// to one RY per layer.
pub fn build_sorb(r1: usize, kappa: usize, layers: usize, param_offset: usize) -> Fragment {
    let mut f = Fragment::new(param_offset);
    for _ in 0..layers {
        if kappa == 1 {
            f.ry(r1);
            continue;
        }
        let mut j = 0;
        while j + 1 < kappa {
            f.cry(r1 + j, r1 + j + 1);
            j += 2;
        }
        let mut j = 1;
        while j + 1 < kappa {
            f.cry(r1 + j, r1 + j + 1);
            j += 2;
        }
        f.cry(r1 + kappa - 1, r1);
        for j in 0..kappa {
            f.ry(r1 + j);
        }
    }
    f
}

/// Hierarchical univariate circuit for register `register`: stage `j` is an
/// `l_u`-layer SORB over the register's `j` most significant qubits, for
/// `j = 1..=k`. Returns the fragment and the absolute parameter boundary
/// after each stage, so training can extend stage by stage.
pub fn build_univariate(
    register: usize,
    k: usize,
    l_u: usize,
    param_offset: usize,
) -> (Fragment, Vec<usize>) {
    let r1 = register_first_qubit(register, k);
    let mut f = Fragment::new(param_offset);
    let mut boundaries = Vec::with_capacity(k);
    for j in 1..=k {
        let stage = build_sorb(r1, j, l_u, param_offset + f.n_params);
        f.concat(stage);
        boundaries.push(param_offset + f.n_params);
    }
    (f, boundaries)
}

/// Bivariate entangling block over registers `r` and `q`. Per layer: a SORB
/// layer on each register, `k` cross-register CRYs between matching
/// resolution bits, then one RY on each of the `2k` qubits — `7k` parameters
/// when `k >= 2`.
pub fn build_beb(r: usize, q: usize, k: usize, l_b: usize, param_offset: usize) -> Fragment {
    let r1 = register_first_qubit(r, k);
    let q1 = register_first_qubit(q, k);
    let mut f = Fragment::new(param_offset);
    for _ in 0..l_b {
        let ring_r = build_sorb(r1, k, 1, param_offset + f.n_params);
        f.concat(ring_r);
        let ring_q = build_sorb(q1, k, 1, param_offset + f.n_params);
        f.concat(ring_q);
        for j in 0..k {
            f.cry(r1 + j, q1 + j);
        }
        for j in 0..k {
            f.ry(r1 + j);
        }
        for j in 0..k {
            f.ry(q1 + j);
        }
    }
    f
}

/// Label and slot span of one progressively trained block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpan {
    pub label: String,
    pub start_slot: usize,
    pub end_slot: usize,
}

/// The complete vine circuit: univariate circuits for every register, then
/// one BEB per vine edge in vine order. Returns the circuit and the slot
/// span of each block.
pub fn build_full_circuit(
    vine: &VineStructure,
    k: usize,
    l_u: usize,
    l_b: usize,
) -> Result<(Circuit, Vec<BlockSpan>)> {
    let d = vine.d;
    let mut circuit = Circuit::new(d * k);
    let mut spans = Vec::new();
    for r in 1..=d {
        let start = circuit.n_params();
        let (frag, _) = build_univariate(r, k, l_u, start);
        frag.append_to(&mut circuit)?;
        spans.push(BlockSpan {
            label: format!("M{r}"),
            start_slot: start,
            end_slot: circuit.n_params(),
        });
    }
    for (ti, ei, edge) in vine.edges() {
        let (x, y) = edge.feature_pair();
        let start = circuit.n_params();
        let frag = build_beb(x, y, k, l_b, start);
        frag.append_to(&mut circuit)?;
        spans.push(BlockSpan {
            label: format!("T{ti},{ei}"),
            start_slot: start,
            end_slot: circuit.n_params(),
        });
    }
    Ok((circuit, spans))
}

/// Gate and parameter counts of the assembled ansatz, with the closed-form
/// counts alongside for comparison.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub n_trees: usize,
    pub n_edges: usize,
    pub n_nodes: usize,
    pub n_params: usize,
    pub n_ry: usize,
    pub n_cry: usize,
    pub formula_params: usize,
    pub formula_ry: usize,
    pub formula_cry: usize,
    /// CRYs (and their parameters) the closed-form counts include but the
    /// construction omits, because a one-qubit ring has no wrap gate.
    pub degenerate_ring_correction: usize,
    pub block_depth: usize,
}

/// Evaluates the closed-form resource counts and measures the constructed
/// circuit against them.
pub fn resource_report(
    d: usize,
    k: usize,
    l_u: usize,
    l_b: usize,
    vine: &VineStructure,
) -> Result<ResourceReport> {
    if vine.d != d {
        return Err(Error::invalid_input(format!(
            "vine is over {} features, expected {d}",
            vine.d
        )));
    }
    vine.validate()?;
    let (circuit, _) = build_full_circuit(vine, k, l_u, l_b)?;
    let n_ry = circuit.ops().iter().filter(|op| !op.is_cry()).count();
    let n_cry = circuit.ops().iter().filter(|op| op.is_cry()).count();

    let n_edges = vine.n_edges();
    let n_nodes = d + vine
        .trees
        .iter()
        .take(d.saturating_sub(2))
        .map(|t| t.len())
        .sum::<usize>();

    let formula_params = l_u * (k + 1) * k * d + 7 * l_b * k * d * (d - 1) / 2;
    let formula_ry = l_u * k * (k + 1) * d / 2 + 2 * l_b * k * d * (d - 1);
    let formula_cry = l_u * k * (k + 1) * d / 2 + 3 * l_b * k * d * (d - 1) / 2;
    // every register's 1-qubit stage omits one wrap CRY per layer; for k=1
    // both rings inside every BEB layer degenerate too
    let degenerate = l_u * d + if k == 1 { 2 * l_b * n_edges } else { 0 };

    Ok(ResourceReport {
        n_trees: vine.trees.len(),
        n_edges,
        n_nodes,
        n_params: circuit.n_params(),
        n_ry,
        n_cry,
        formula_params,
        formula_ry,
        formula_cry,
        degenerate_ring_correction: degenerate,
        block_depth: schedule_blocks(vine).block_depth,
    })
}

/// Block-parallel schedule: within a tree, BEBs whose register pairs are
/// disjoint share a round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    /// Per tree, the rounds, each holding the register pairs placed in it.
    pub rounds: Vec<Vec<Vec<(usize, usize)>>>,
    /// Total rounds over all trees.
    pub beb_rounds: usize,
    /// `beb_rounds` plus one round for the univariate stage.
    pub block_depth: usize,
}

/// Greedy first-fit edge coloring of each tree in edge order.
pub fn schedule_blocks(vine: &VineStructure) -> Schedule {
    let mut rounds: Vec<Vec<Vec<(usize, usize)>>> = Vec::with_capacity(vine.trees.len());
    for tree in &vine.trees {
        let mut tree_rounds: Vec<Vec<(usize, usize)>> = Vec::new();
        for edge in tree {
            let (x, y) = edge.feature_pair();
            let fit = tree_rounds.iter_mut().find(|round| {
                round
                    .iter()
                    .all(|&(a, b)| a != x && a != y && b != x && b != y)
            });
            match fit {
                Some(round) => round.push((x, y)),
                None => tree_rounds.push(vec![(x, y)]),
            }
        }
        rounds.push(tree_rounds);
    }
    let beb_rounds = rounds.iter().map(|r| r.len()).sum();
    Schedule {
        rounds,
        beb_rounds,
        block_depth: beb_rounds + 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vine::{build_cvine, build_dvine};

    #[test]
    fn sorb_kappa3_matches_reference_gate_set() {
        let f = build_sorb(1, 3, 1, 0);
        let expect = vec![
            GateOp::Cry {
                control: 1,
                target: 2,
                slot: 0,
            },
            GateOp::Cry {
                control: 2,
                target: 3,
                slot: 1,
            },
            GateOp::Cry {
                control: 3,
                target: 1,
                slot: 2,
            },
            GateOp::Ry { target: 1, slot: 3 },
            GateOp::Ry { target: 2, slot: 4 },
            GateOp::Ry { target: 3, slot: 5 },
        ];
        assert_eq!(f.ops, expect);
        assert_eq!(f.n_params, 6);
    }

    #[test]
    fn sorb_kappa1_degenerates_to_ry_per_layer() {
        let f = build_sorb(4, 1, 2, 0);
        assert_eq!(
            f.ops,
            vec![
                GateOp::Ry { target: 4, slot: 0 },
                GateOp::Ry { target: 4, slot: 1 }
            ]
        );
        assert_eq!(f.n_params, 2);
    }

    #[test]
    fn sorb_kappa2_from_generator_set() {
        let f = build_sorb(3, 2, 1, 10);
        assert_eq!(
            f.ops,
            vec![
                GateOp::Cry {
                    control: 3,
                    target: 4,
                    slot: 10
                },
                GateOp::Cry {
                    control: 4,
                    target: 3,
                    slot: 11
                },
                GateOp::Ry {
                    target: 3,
                    slot: 12
                },
                GateOp::Ry {
                    target: 4,
                    slot: 13
                },
            ]
        );
        assert_eq!(f.n_params, 4);
    }

    #[test]
    fn sorb_even_pairs_before_odd_pairs() {
        let f = build_sorb(1, 5, 1, 0);
        let crys: Vec<(usize, usize)> = f
            .ops
            .iter()
            .filter_map(|op| match op {
                GateOp::Cry {
                    control, target, ..
                } => Some((*control, *target)),
                _ => None,
            })
            .collect();
        assert_eq!(crys, vec![(1, 2), (3, 4), (2, 3), (4, 5), (5, 1)]);
    }

    #[test]
    fn univariate_k1_is_single_ry_stage() {
        let (f, bounds) = build_univariate(1, 1, 1, 0);
        assert_eq!(f.ops, vec![GateOp::Ry { target: 1, slot: 0 }]);
        assert_eq!(bounds, vec![1]);
    }

    #[test]
    fn univariate_k3_stage_sizes() {
        let (f, bounds) = build_univariate(1, 3, 1, 0);
        // stages of sizes (1, 4, 6) under the degenerate first stage
        assert_eq!(bounds, vec![1, 5, 11]);
        assert_eq!(f.n_params, 11);
        // closed-form convention counts k(k+1)L_u = 12 per register
        assert_eq!(f.n_params + 1, 12);
    }

    #[test]
    fn univariate_respects_register_offset() {
        let (f, _) = build_univariate(2, 3, 1, 0);
        // register 2 occupies qubits 4..=6
        for op in &f.ops {
            let (t, c) = op.qubits();
            assert!((4..=6).contains(&t));
            if let Some(c) = c {
                assert!((4..=6).contains(&c));
            }
        }
    }

    #[test]
    fn beb_k3_counts() {
        let f = build_beb(1, 2, 3, 1, 0);
        assert_eq!(f.n_params, 21);
        assert_eq!(f.n_ry(), 12);
        assert_eq!(f.n_cry(), 9);
    }

    #[test]
    fn beb_k1_degenerate_counts() {
        // closed-form says 7k = 7; degenerate rings leave 5
        let f = build_beb(1, 2, 1, 1, 0);
        assert_eq!(f.n_params, 5);
        assert_eq!(f.n_ry(), 4);
        assert_eq!(f.n_cry(), 1);
    }

    #[test]
    fn beb_layers_double_counts() {
        let one = build_beb(1, 2, 3, 1, 0);
        let two = build_beb(1, 2, 3, 2, 0);
        assert_eq!(two.n_params, 2 * one.n_params);
        assert_eq!(two.n_ry(), 2 * one.n_ry());
        assert_eq!(two.n_cry(), 2 * one.n_cry());
    }

    #[test]
    fn beb_layer_order_rings_cross_rys() {
        let f = build_beb(1, 2, 2, 1, 0);
        // ring on r (2 CRY, 2 RY), ring on q, cross CRYs, 4 RYs
        let kinds: Vec<bool> = f.ops.iter().map(|op| op.is_cry()).collect();
        assert_eq!(
            kinds,
            vec![
                true, true, false, false, // ring r
                true, true, false, false, // ring q
                true, true, // cross
                false, false, false, false // final RYs
            ]
        );
        let cross: Vec<(usize, usize)> = f.ops[8..10]
            .iter()
            .map(|op| match op {
                GateOp::Cry {
                    control, target, ..
                } => (*control, *target),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(cross, vec![(1, 3), (2, 4)]);
    }

    #[test]
    fn block_builders_are_pure() {
        let a = build_beb(2, 3, 3, 2, 17);
        let b = build_beb(2, 3, 3, 2, 17);
        assert_eq!(a, b);
        let spec = BlockSpec {
            kind: BlockKind::Beb,
            registers: (2, Some(3)),
            k: 3,
            layers: 2,
        };
        assert_eq!(spec.build(17).unwrap(), a);
    }

    #[test]
    fn resource_report_d3_k3() {
        let vine = build_dvine(&[1, 2, 3]).unwrap();
        let r = resource_report(3, 3, 1, 1, &vine).unwrap();
        assert_eq!(r.formula_params, 99); // 36 + 63
        assert_eq!(r.formula_ry, 54); // 18 + 36
        assert_eq!(r.formula_cry, 45); // 18 + 27
        assert_eq!(r.degenerate_ring_correction, 3);
        assert_eq!(r.n_params, r.formula_params - 3);
        assert_eq!(r.n_ry, r.formula_ry);
        assert_eq!(r.n_cry, r.formula_cry - 3);
    }

    #[test]
    fn resource_report_structural_counts() {
        let vine = build_dvine(&[1, 2, 3, 4]).unwrap();
        let r = resource_report(4, 3, 1, 1, &vine).unwrap();
        assert_eq!(r.n_trees, 3);
        assert_eq!(r.n_edges, 6);
        assert_eq!(r.n_nodes, 9);

        let vine = build_dvine(&[1, 2]).unwrap();
        let r = resource_report(2, 2, 1, 1, &vine).unwrap();
        assert_eq!(r.n_trees, 1);
        assert_eq!(r.n_edges, 1);
    }

    #[test]
    fn formula_matches_actual_after_correction_spot_grid() {
        for d in [2usize, 3, 4] {
            let order: Vec<usize> = (1..=d).collect();
            let vine = build_dvine(&order).unwrap();
            for k in [1usize, 2, 3] {
                for l_u in [1usize, 2] {
                    for l_b in [1usize, 2] {
                        let r = resource_report(d, k, l_u, l_b, &vine).unwrap();
                        let c = r.degenerate_ring_correction;
                        assert_eq!(r.n_params + c, r.formula_params, "d={d} k={k}");
                        assert_eq!(r.n_cry + c, r.formula_cry, "d={d} k={k}");
                        assert_eq!(r.n_ry, r.formula_ry, "d={d} k={k}");
                    }
                }
            }
        }
    }

    #[test]
    fn schedule_dvine_d4() {
        let vine = build_dvine(&[1, 2, 3, 4]).unwrap();
        let s = schedule_blocks(&vine);
        assert_eq!(s.rounds[0].len(), 2); // (1,2),(3,4) then (2,3)
        assert_eq!(s.rounds[1].len(), 1); // (1,3),(2,4) disjoint
        assert_eq!(s.rounds[2].len(), 1);
        assert_eq!(s.beb_rounds, 4);
        assert_eq!(s.block_depth, 5);
        assert!(s.beb_rounds <= 2 * (4 - 1));
    }

    #[test]
    fn schedule_d2() {
        let vine = build_dvine(&[1, 2]).unwrap();
        let s = schedule_blocks(&vine);
        assert_eq!(s.beb_rounds, 1);
    }

    #[test]
    fn schedule_cvine_star_needs_one_round_per_edge() {
        let vine = build_cvine(4, &[1, 2, 3]).unwrap();
        let s = schedule_blocks(&vine);
        // all T1 edges share the hub
        assert_eq!(s.rounds[0].len(), 3);
    }

    #[test]
    fn schedule_rounds_have_disjoint_registers() {
        for d in 2..=8usize {
            let order: Vec<usize> = (1..=d).collect();
            for vine in [build_dvine(&order).unwrap(), build_cvine(d, &order[..d - 1]).unwrap()]
            {
                let s = schedule_blocks(&vine);
                for tree in &s.rounds {
                    for round in tree {
                        for (i, &(a, b)) in round.iter().enumerate() {
                            for &(c, e) in &round[i + 1..] {
                                assert!(a != c && a != e && b != c && b != e);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn full_circuit_spans_cover_all_params() {
        let vine = build_dvine(&[1, 2, 3]).unwrap();
        let (circuit, spans) = build_full_circuit(&vine, 2, 1, 1).unwrap();
        assert_eq!(spans.first().unwrap().start_slot, 0);
        assert_eq!(spans.last().unwrap().end_slot, circuit.n_params());
        for w in spans.windows(2) {
            assert_eq!(w[0].end_slot, w[1].start_slot);
        }
    }
}
