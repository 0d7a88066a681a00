//! Shared test oracles, independent of the library's implementation paths:
//! a complex-arithmetic reference simulator, a Pruefer-sequence spanning
//! tree enumerator, and random circuit/target generators.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vineq::statevec::{Circuit, GateOp};

/// Reference statevector simulator in complex arithmetic. Gates are built
/// from the literal matrix exponential expansion
/// `cos(theta/2) I - i sin(theta/2) Y`, so any realness of the output is a
/// property of the gate set, not of the representation.
pub struct ComplexSim {
    pub n_qubits: usize,
    pub amps: Vec<Complex64>,
}

impl ComplexSim {
    pub fn uniform(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        let a = Complex64::new((dim as f64).sqrt().recip(), 0.0);
        ComplexSim {
            n_qubits,
            amps: vec![a; dim],
        }
    }

    fn gate_matrix(theta: f64) -> [[Complex64; 2]; 2] {
        let c = Complex64::new((0.5 * theta).cos(), 0.0);
        let s = Complex64::new((0.5 * theta).sin(), 0.0);
        let minus_i = Complex64::new(0.0, -1.0);
        let y01 = Complex64::new(0.0, -1.0); // <0|Y|1>
        let y10 = Complex64::new(0.0, 1.0); // <1|Y|0>
        // cos(t/2) I - i sin(t/2) Y, evaluated entrywise
        [
            [c, minus_i * s * y01],
            [minus_i * s * y10, c],
        ]
    }

    pub fn apply(&mut self, op: GateOp, theta: f64) {
        let m = Self::gate_matrix(theta);
        let (target, control) = op.qubits();
        let tmask = 1usize << (self.n_qubits - target);
        let cmask = control.map(|q| 1usize << (self.n_qubits - q));
        for i in 0..self.amps.len() {
            if i & tmask != 0 {
                continue;
            }
            if let Some(cm) = cmask {
                if i & cm == 0 {
                    continue;
                }
            }
            let j = i | tmask;
            let a = self.amps[i];
            let b = self.amps[j];
            self.amps[i] = m[0][0] * a + m[0][1] * b;
            self.amps[j] = m[1][0] * a + m[1][1] * b;
        }
    }

    pub fn run(&mut self, circuit: &Circuit, params: &[f64]) {
        for op in circuit.ops() {
            self.apply(*op, params[op.slot()]);
        }
    }

    pub fn max_imag(&self) -> f64 {
        self.amps.iter().map(|a| a.im.abs()).fold(0.0, f64::max)
    }
}

/// All spanning trees of the complete graph on `d` nodes, by decoding every
/// Pruefer sequence. Edges are 0-based.
pub fn all_spanning_trees(d: usize) -> Vec<Vec<(usize, usize)>> {
    if d == 2 {
        return vec![vec![(0, 1)]];
    }
    let seq_len = d - 2;
    let count = d.pow(seq_len as u32);
    let mut trees = Vec::with_capacity(count);
    for code in 0..count {
        let mut seq = Vec::with_capacity(seq_len);
        let mut c = code;
        for _ in 0..seq_len {
            seq.push(c % d);
            c /= d;
        }
        let mut degree = vec![1usize; d];
        for &s in &seq {
            degree[s] += 1;
        }
        let mut edges = Vec::with_capacity(d - 1);
        for &s in &seq {
            let leaf = (0..d).find(|&v| degree[v] == 1).unwrap();
            edges.push((leaf.min(s), leaf.max(s)));
            degree[leaf] -= 1;
            degree[s] -= 1;
        }
        let rest: Vec<usize> = (0..d).filter(|&v| degree[v] == 1).collect();
        edges.push((rest[0], rest[1]));
        trees.push(edges);
    }
    trees
}

/// Random RY/CRY circuit over `n` qubits, one slot per gate.
pub fn random_circuit(n: usize, n_gates: usize, rng: &mut ChaCha8Rng) -> Circuit {
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
            c.push(GateOp::Ry {
                target: rng.random_range(1..=n),
                slot,
            })
            .unwrap();
        }
    }
    c
}

pub fn random_unit_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= norm);
    v
}

/// Random shuffled permutation of `1..=d`.
pub fn random_order(d: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (1..=d).collect();
    for i in (1..d).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    order
}

/// Synthetic 4-asset price CSV driven by a common factor, `rows`+1 price
/// lines so the return matrix has `rows` rows.
pub fn write_synthetic_price_csv(path: &std::path::Path, rows: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tickers = ["IDX", "AAA", "BBB", "CCC"];
    let betas = [1.0, 1.2, 0.8, 0.5];
    let mut prices = [100.0f64, 50.0, 80.0, 120.0];
    let mut out = String::from("date,IDX,AAA,BBB,CCC\n");
    let mut day = 0u32;
    let base = 730_000i32; // arbitrary epoch for chrono day counting
    let _ = tickers;
    for t in 0..=rows {
        let market: f64 = 0.01 * (rng.random_range(-1.0..1.0f64) + rng.random_range(-1.0..1.0f64));
        let date = chrono_date(base + day as i32);
        day += 1;
        out.push_str(&date);
        for (i, p) in prices.iter_mut().enumerate() {
            if t > 0 {
                let idio: f64 = 0.008 * rng.random_range(-1.0..1.0f64);
                *p *= (betas[i] * market + idio).exp();
            }
            out.push_str(&format!(",{:.6}", p));
        }
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}

// minimal proleptic-Gregorian day-number to ISO date (kept here so the
// oracle side does not depend on the library's date handling)
fn chrono_date(days_from_ce: i32) -> String {
    // days_from_ce = days since 0000-12-31
    let mut y = (days_from_ce as f64 / 365.2425) as i32;
    loop {
        let start = days_to_ce(y);
        let end = days_to_ce(y + 1);
        if days_from_ce < start {
            y -= 1;
        } else if days_from_ce >= end {
            y += 1;
        } else {
            let mut rem = days_from_ce - start; // 0-based day of year
            let leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
            let lens = [
                31,
                if leap { 29 } else { 28 },
                31,
                30,
                31,
                30,
                31,
                31,
                30,
                31,
                30,
                31,
            ];
            for (m, &len) in lens.iter().enumerate() {
                if rem < len {
                    return format!("{y:04}-{:02}-{:02}", m + 1, rem + 1);
                }
                rem -= len;
            }
            unreachable!()
        }
    }
}

fn days_to_ce(y: i32) -> i32 {
    // days from 0000-12-31 to Jan 1 of year y
    let py = y - 1;
    365 * py + py / 4 - py / 100 + py / 400 + 1
}
