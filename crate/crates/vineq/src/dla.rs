//! Dynamical Lie algebra closure at small width, for verifying that the
//! ring, hierarchical, and bivariate generator sets span the full
//! special-orthogonal algebra of their register.
//!
//! Generators are the real skew-symmetric matrices `-iY` and `-iCY`
//! embedded into the `2^m`-dimensional operator space. The closure iterates
//! commutators of the frontier against the generators, maintaining an
//! orthonormal basis of vectorized matrices (Gram-Schmidt, rank tolerance
//! 1e-9) until no new directions appear.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense feasibility bound: `m <= 6` keeps matrices at 64x64.
pub const MAX_CLOSURE_QUBITS: usize = 6;

/// `dim so(n) = n(n-1)/2`.
pub fn so_dim(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Labeled real skew-symmetric generator matrices over `m` qubits.
#[derive(Clone, Debug)]
pub struct GeneratorSet {
    pub n_qubits: usize,
    pub mats: Vec<DMatrix<f64>>,
    pub labels: Vec<String>,
}

fn identity2() -> DMatrix<f64> {
    DMatrix::identity(2, 2)
}

/// `-i Y` on one qubit: [[0, -1], [1, 0]].
fn skew_y2() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
}

/// `|1><1|` on one qubit.
fn proj1() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])
}

/// Embeds per-qubit factors (qubit 1 leftmost/most significant).
fn embed(m: usize, factors: &[(usize, DMatrix<f64>)]) -> DMatrix<f64> {
    let mut out = DMatrix::identity(1, 1);
    for q in 1..=m {
        let f = factors
            .iter()
            .find(|(fq, _)| *fq == q)
            .map(|(_, f)| f.clone())
            .unwrap_or_else(identity2);
        out = out.kronecker(&f);
    }
    out
}

impl GeneratorSet {
    fn push(&mut self, label: String, mat: DMatrix<f64>) {
        if !self.labels.contains(&label) {
            self.labels.push(label);
            self.mats.push(mat);
        }
    }

    fn y(&mut self, j: usize) {
        let m = self.n_qubits;
        self.push(format!("Y({j})"), embed(m, &[(j, skew_y2())]));
    }

    fn cy(&mut self, j: usize, k: usize) {
        let m = self.n_qubits;
        self.push(
            format!("CY({j},{k})"),
            embed(m, &[(j, proj1()), (k, skew_y2())]),
        );
    }

    fn add_ring(&mut self, first: usize, kappa: usize) {
        if kappa == 1 {
            self.y(first);
            return;
        }
        for j in 0..kappa - 1 {
            self.cy(first + j, first + j + 1);
        }
        self.cy(first + kappa - 1, first);
        for j in 0..kappa {
            self.y(first + j);
        }
    }

    /// Ring generator set over `kappa` qubits.
    pub fn ring(kappa: usize) -> Result<Self> {
        check_width(kappa)?;
        let mut g = GeneratorSet {
            n_qubits: kappa,
            mats: Vec::new(),
            labels: Vec::new(),
        };
        g.add_ring(1, kappa);
        Ok(g)
    }

    /// Hierarchical generator set: union of rings over the first `j` qubits
    /// for `j = 1..=k`.
    pub fn univariate(k: usize) -> Result<Self> {
        check_width(k)?;
        let mut g = GeneratorSet {
            n_qubits: k,
            mats: Vec::new(),
            labels: Vec::new(),
        };
        for j in 1..=k {
            g.add_ring(1, j);
        }
        Ok(g)
    }

    /// Bivariate entangling generator set over two `k`-qubit registers.
    pub fn beb(k: usize) -> Result<Self> {
        check_width(2 * k)?;
        let mut g = GeneratorSet {
            n_qubits: 2 * k,
            mats: Vec::new(),
            labels: Vec::new(),
        };
        for j in 1..=k {
            g.y(j);
            g.y(k + j);
        }
        for j in 1..=k {
            g.cy(j, k + j);
        }
        g.add_ring(1, k);
        g.add_ring(k + 1, k);
        Ok(g)
    }

    /// Every generator must be skew-symmetric.
    pub fn check_skew(&self) -> Result<()> {
        for (mat, label) in self.mats.iter().zip(&self.labels) {
            let sym = mat + mat.transpose();
            if sym.iter().any(|v| v.abs() > 1e-12) {
                return Err(Error::invalid_input(format!(
                    "generator {label} is not skew-symmetric"
                )));
            }
        }
        Ok(())
    }
}

fn check_width(m: usize) -> Result<()> {
    if m == 0 || m > MAX_CLOSURE_QUBITS {
        return Err(Error::invalid_input(format!(
            "closure width {m} outside 1..={MAX_CLOSURE_QUBITS}"
        )));
    }
    Ok(())
}

/// Result of a closure run.
#[derive(Clone, Debug)]
pub struct LieClosure {
    pub dim: usize,
    /// Orthonormal (Frobenius) basis of the span reached.
    pub basis: Vec<DMatrix<f64>>,
    /// True when `max_dim` was hit while independent directions remained.
    pub capped: bool,
}

const RANK_TOL: f64 = 1e-9;

struct SpanBasis {
    vecs: Vec<DVector<f64>>,
    mats: Vec<DMatrix<f64>>,
}

impl SpanBasis {
    /// Orthonormalizes `mat` against the basis; returns the independent
    /// residual without committing it.
    fn residual(&self, mat: &DMatrix<f64>) -> Option<DVector<f64>> {
        let mut v = DVector::from_column_slice(mat.as_slice());
        let norm0 = v.norm();
        if norm0 < 1e-12 {
            return None;
        }
        v /= norm0;
        for _ in 0..2 {
            for b in &self.vecs {
                let proj = b.dot(&v);
                v.axpy(-proj, b, 1.0);
            }
        }
        let res = v.norm();
        if res > RANK_TOL {
            v /= res;
            Some(v)
        } else {
            None
        }
    }

    fn commit(&mut self, v: DVector<f64>, rows: usize) -> DMatrix<f64> {
        let mat = DMatrix::from_column_slice(rows, rows, v.as_slice());
        self.vecs.push(v);
        self.mats.push(mat.clone());
        mat
    }
}

/// Iterated-commutator span of the generator set, stopped at `max_dim`.
pub fn lie_closure(gens: &GeneratorSet, max_dim: usize) -> Result<LieClosure> {
    check_width(gens.n_qubits)?;
    gens.check_skew()?;
    let rows = 1usize << gens.n_qubits;
    let mut basis = SpanBasis {
        vecs: Vec::new(),
        mats: Vec::new(),
    };
    let mut frontier: std::collections::VecDeque<DMatrix<f64>> = Default::default();
    let mut capped = false;

    for g in &gens.mats {
        if let Some(v) = basis.residual(g) {
            if basis.vecs.len() >= max_dim {
                capped = true;
                break;
            }
            let mat = basis.commit(v, rows);
            frontier.push_back(mat);
        }
    }

    'closure: while let Some(h) = frontier.pop_front() {
        if capped {
            break;
        }
        for g in &gens.mats {
            let c = g * &h - &h * g;
            if let Some(v) = basis.residual(&c) {
                if basis.vecs.len() >= max_dim {
                    capped = true;
                    break 'closure;
                }
                let mat = basis.commit(v, rows);
                frontier.push_back(mat);
            }
        }
    }

    Ok(LieClosure {
        dim: basis.mats.len(),
        basis: basis.mats,
        capped,
    })
}

/// One generator-set check: found vs expected closure dimension.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TheoremCheck {
    pub label: String,
    pub n_qubits: usize,
    pub expected: usize,
    pub found: usize,
    pub capped: bool,
}

impl TheoremCheck {
    pub fn pass(&self) -> bool {
        !self.capped && self.found == self.expected
    }
}

/// Runs every closure the register width allows: rings and hierarchical
/// sets up to `k` qubits (at most 3), bivariate sets up to `2k` qubits.
/// The 6-qubit bivariate closure (so(64), dimension 2016) runs only when
/// `heavy_beb` is set.
pub fn verify_theorems(k: usize, heavy_beb: bool) -> Result<Vec<TheoremCheck>> {
    if k == 0 {
        return Err(Error::invalid_input("k must be at least 1"));
    }
    let mut checks = Vec::new();
    let run = |label: String, gens: GeneratorSet, expected: usize| -> Result<TheoremCheck> {
        let closure = lie_closure(&gens, expected + 8)?;
        Ok(TheoremCheck {
            label,
            n_qubits: gens.n_qubits,
            expected,
            found: closure.dim,
            capped: closure.capped,
        })
    };

    for kappa in 1..=k.min(3) {
        let expected = so_dim(1 << kappa);
        checks.push(run(
            format!("ring kappa={kappa}"),
            GeneratorSet::ring(kappa)?,
            expected,
        )?);
    }
    for kk in 1..=k.min(3) {
        let expected = so_dim(1 << kk);
        checks.push(run(
            format!("univariate k={kk}"),
            GeneratorSet::univariate(kk)?,
            expected,
        )?);
    }
    let beb_max = k.min(if heavy_beb { 3 } else { 2 });
    for kb in 1..=beb_max {
        let expected = so_dim(1 << (2 * kb));
        checks.push(run(
            format!("beb k={kb}"),
            GeneratorSet::beb(kb)?,
            expected,
        )?);
    }
    Ok(checks)
}
