//! Vine structure selection: dependence measures, spanning trees, and the
//! D-vine / C-vine / greedy R-vine constructions.
//!
//! Features are 1-based throughout, matching the feature-register layout of
//! the circuit side. A vine over `d` features is a sequence of trees
//! `T_1..T_{d-1}`; the nodes of `T_j` are the edges of `T_{j-1}` and two
//! nodes may be joined only if their edges share a node (the proximity
//! condition). Each edge carries a conditioned feature pair and a
//! conditioning set; the conditioned pair is where a bivariate entangling
//! block is placed.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One vine edge: the conditioned pair `{x, y}` given the conditioning set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VineEdge {
    /// The two features the edge models, stored as `(min, max)`.
    pub conditioned: (usize, usize),
    /// The conditioning set, sorted ascending.
    pub conditioning: Vec<usize>,
}

impl VineEdge {
    pub fn new(x: usize, y: usize, mut conditioning: Vec<usize>) -> Self {
        conditioning.sort_unstable();
        VineEdge {
            conditioned: (x.min(y), x.max(y)),
            conditioning,
        }
    }

    /// The conditioned features `{x, y}` — the symmetric difference of the
    /// edge's two node sets.
    pub fn feature_pair(&self) -> (usize, usize) {
        self.conditioned
    }

    /// The two node sets `(S_v, S_w)`: conditioning set plus one conditioned
    /// feature each.
    pub fn node_sets(&self) -> (BTreeSet<usize>, BTreeSet<usize>) {
        let base: BTreeSet<usize> = self.conditioning.iter().copied().collect();
        let mut sv = base.clone();
        sv.insert(self.conditioned.0);
        let mut sw = base;
        sw.insert(self.conditioned.1);
        (sv, sw)
    }

    /// Union of conditioned pair and conditioning set.
    pub fn complete_union(&self) -> BTreeSet<usize> {
        let mut u: BTreeSet<usize> = self.conditioning.iter().copied().collect();
        u.insert(self.conditioned.0);
        u.insert(self.conditioned.1);
        u
    }
}

/// The conditioned feature pair of an edge.
pub fn edge_feature_pair(edge: &VineEdge) -> (usize, usize) {
    edge.feature_pair()
}

/// Trees `T_1..T_{d-1}` of a regular vine over features `1..=d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VineStructure {
    pub d: usize,
    pub trees: Vec<Vec<VineEdge>>,
}

impl VineStructure {
    /// Total edge count over all trees (`d(d-1)/2` for a valid vine).
    pub fn n_edges(&self) -> usize {
        self.trees.iter().map(|t| t.len()).sum()
    }

    /// Edges in training order: `(tree index, edge index, edge)`, 1-based.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, &VineEdge)> {
        self.trees.iter().enumerate().flat_map(|(ti, tree)| {
            tree.iter()
                .enumerate()
                .map(move |(ei, e)| (ti + 1, ei + 1, e))
        })
    }

    /// Checks every structural invariant: tree sizes, spanning-tree shape,
    /// matching of node sets against the previous tree, and the proximity
    /// condition. Independent of how the structure was built.
    pub fn validate(&self) -> Result<()> {
        let d = self.d;
        if d < 2 {
            return Err(Error::InvalidVine("vine needs at least 2 features".into()));
        }
        if self.trees.len() != d - 1 {
            return Err(Error::InvalidVine(format!(
                "expected {} trees, got {}",
                d - 1,
                self.trees.len()
            )));
        }

        // Tree 1: spanning tree over the features themselves.
        let t1 = &self.trees[0];
        if t1.len() != d - 1 {
            return Err(Error::InvalidVine(format!(
                "tree 1 must have {} edges, got {}",
                d - 1,
                t1.len()
            )));
        }
        for e in t1 {
            if !e.conditioning.is_empty() {
                return Err(Error::InvalidVine(
                    "tree 1 edges must have empty conditioning sets".into(),
                ));
            }
            self.check_features(e)?;
        }
        let t1_pairs: Vec<(usize, usize)> = t1.iter().map(|e| e.conditioned).collect();
        if !is_tree(d, &t1_pairs.iter().map(|&(a, b)| (a - 1, b - 1)).collect::<Vec<_>>()) {
            return Err(Error::InvalidVine("tree 1 is not a spanning tree".into()));
        }

        // Higher trees: nodes are the previous tree's edges, matched through
        // complete unions.
        let mut prev_unions: Vec<BTreeSet<usize>> =
            t1.iter().map(|e| e.complete_union()).collect();
        // Endpoints of each previous edge as node ids of its own level
        // (features for level 1, previous-edge indices above).
        let mut prev_endpoints: Vec<(usize, usize)> = t1.iter().map(|e| e.conditioned).collect();

        for level in 2..d {
            let tree = &self.trees[level - 1];
            if tree.len() != d - level {
                return Err(Error::InvalidVine(format!(
                    "tree {} must have {} edges, got {}",
                    level,
                    d - level,
                    tree.len()
                )));
            }
            let mut endpoints = Vec::with_capacity(tree.len());
            let mut unions = Vec::with_capacity(tree.len());
            for e in tree {
                self.check_features(e)?;
                if e.conditioning.len() != level - 1 {
                    return Err(Error::InvalidVine(format!(
                        "tree {} edge {:?} must condition on {} features",
                        level,
                        e.conditioned,
                        level - 1
                    )));
                }
                if e.conditioning.contains(&e.conditioned.0)
                    || e.conditioning.contains(&e.conditioned.1)
                {
                    return Err(Error::InvalidVine(format!(
                        "edge {:?} conditions on its own conditioned pair",
                        e.conditioned
                    )));
                }
                let (sv, sw) = e.node_sets();
                let a = prev_unions.iter().position(|u| *u == sv);
                let b = prev_unions.iter().position(|u| *u == sw);
                let (a, b) = match (a, b) {
                    (Some(a), Some(b)) if a != b => (a, b),
                    _ => {
                        return Err(Error::InvalidVine(format!(
                            "tree {} edge {:?}|{:?} does not join two distinct edges of tree {}",
                            level,
                            e.conditioned,
                            e.conditioning,
                            level - 1
                        )))
                    }
                };
                // proximity: the two previous edges share a node
                let (p1, q1) = prev_endpoints[a];
                let (p2, q2) = prev_endpoints[b];
                if p1 != p2 && p1 != q2 && q1 != p2 && q1 != q2 {
                    return Err(Error::InvalidVine(format!(
                        "tree {} edge {:?}|{:?} violates the proximity condition",
                        level, e.conditioned, e.conditioning
                    )));
                }
                endpoints.push((a, b));
                unions.push(e.complete_union());
            }
            let n_nodes = d - level + 1;
            if !is_tree(n_nodes, &endpoints) {
                return Err(Error::InvalidVine(format!(
                    "tree {level} is not a spanning tree over the previous edges"
                )));
            }
            prev_unions = unions;
            prev_endpoints = endpoints;
        }
        Ok(())
    }

    fn check_features(&self, e: &VineEdge) -> Result<()> {
        let (x, y) = e.conditioned;
        let ok = |f: usize| f >= 1 && f <= self.d;
        if x == y || !ok(x) || !ok(y) || e.conditioning.iter().any(|&f| !ok(f)) {
            return Err(Error::InvalidVine(format!(
                "edge {:?}|{:?} references invalid features for d={}",
                e.conditioned, e.conditioning, self.d
            )));
        }
        let mut seen: BTreeSet<usize> = e.conditioning.iter().copied().collect();
        if seen.len() != e.conditioning.len() || !seen.insert(x) || !seen.insert(y) {
            return Err(Error::InvalidVine(format!(
                "edge {:?}|{:?} repeats a feature",
                e.conditioned, e.conditioning
            )));
        }
        Ok(())
    }
}

/// Connected and acyclic over `n` nodes (0-based edge endpoints).
fn is_tree(n: usize, edges: &[(usize, usize)]) -> bool {
    if edges.len() + 1 != n {
        return false;
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    for &(a, b) in edges {
        if a >= n || b >= n {
            return false;
        }
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            return false; // cycle
        }
        parent[ra] = rb;
    }
    true
}

/// Rank-transformed samples, `u = rank/(n+1)` with average ranks for ties.
#[derive(Clone, Debug)]
pub struct PseudoObs {
    /// n x d matrix of values in (0, 1).
    pub u: DMatrix<f64>,
    /// Columns that were constant (flagged, not fatal).
    pub degenerate: Vec<usize>,
}

/// Per-column rank transform of an n x d sample matrix.
pub fn pseudo_obs(samples: &DMatrix<f64>) -> Result<PseudoObs> {
    let (n, d) = samples.shape();
    if n < 2 {
        return Err(Error::invalid_input(
            "pseudo-observations need at least 2 samples",
        ));
    }
    let mut u = DMatrix::zeros(n, d);
    let mut degenerate = Vec::new();
    for j in 0..d {
        let col: Vec<f64> = samples.column(j).iter().copied().collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| col[a].partial_cmp(&col[b]).expect("non-finite sample"));
        let mut i = 0;
        while i < n {
            let mut k = i;
            while k + 1 < n && col[order[k + 1]] == col[order[i]] {
                k += 1;
            }
            // positions i..=k share the average rank
            let avg_rank = (i + k) as f64 / 2.0 + 1.0;
            for &idx in &order[i..=k] {
                u[(idx, j)] = avg_rank / (n as f64 + 1.0);
            }
            i = k + 1;
        }
        if col.iter().all(|&v| v == col[0]) {
            degenerate.push(j + 1);
        }
    }
    Ok(PseudoObs { u, degenerate })
}

/// Tie-corrected Kendall's tau (tau-b) by O(n^2) pair enumeration.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::invalid_input("Kendall's tau needs at least 2 points"));
    }
    let mut net = 0i64; // concordant - discordant
    let mut ties_x = 0i64;
    let mut ties_y = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                ties_x += 1;
            }
            if dy == 0.0 {
                ties_y += 1;
            }
            if dx != 0.0 && dy != 0.0 {
                net += if (dx > 0.0) == (dy > 0.0) { 1 } else { -1 };
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    let denom = (((pairs - ties_x) as f64) * ((pairs - ties_y) as f64)).sqrt();
    if denom == 0.0 {
        return Err(Error::UndefinedTau);
    }
    Ok(net as f64 / denom)
}

/// Pairwise Kendall's tau matrix. Constant columns yield 0 against
/// everything (their tau is undefined; 0 keeps structure selection running).
pub fn tau_matrix(samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (_, d) = samples.shape();
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        m[(i, i)] = 1.0;
        let xi: Vec<f64> = samples.column(i).iter().copied().collect();
        for j in i + 1..d {
            let xj: Vec<f64> = samples.column(j).iter().copied().collect();
            let t = match kendall_tau(&xi, &xj) {
                Ok(t) => t,
                Err(Error::UndefinedTau) => 0.0,
                Err(e) => return Err(e),
            };
            m[(i, j)] = t;
            m[(j, i)] = t;
        }
    }
    Ok(m)
}

/// Kendall's tau of a bivariate Gaussian with correlation `rho`:
/// `(2/pi) asin(rho)`. Used to select structures for analytic targets, where
/// there are no samples to rank.
pub fn kendall_tau_gaussian(rho: f64) -> f64 {
    (2.0 / std::f64::consts::PI) * rho.clamp(-1.0, 1.0).asin()
}

/// Maximum spanning tree over a symmetric non-negative weight matrix
/// (Prim, deterministic tie-break by smallest `(min, max)` feature pair).
/// Returns 1-based feature pairs in insertion order.
pub fn first_tree_mst(weights: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let d = weights.nrows();
    let mut in_tree = vec![false; d];
    in_tree[0] = true;
    let mut edges = Vec::with_capacity(d.saturating_sub(1));
    for _ in 1..d {
        let mut best: Option<(f64, usize, usize)> = None;
        for u in 0..d {
            if !in_tree[u] {
                continue;
            }
            for v in 0..d {
                if in_tree[v] {
                    continue;
                }
                let w = weights[(u, v)];
                let key = (u.min(v), u.max(v));
                let better = match best {
                    None => true,
                    Some((bw, bu, bv)) => {
                        w > bw || (w == bw && key < (bu.min(bv), bu.max(bv)))
                    }
                };
                if better {
                    best = Some((w, u, v));
                }
            }
        }
        let (_, u, v) = best.expect("weight matrix is complete");
        in_tree[v] = true;
        edges.push((u.min(v) + 1, u.max(v) + 1));
    }
    edges
}

/// D-vine over a feature ordering: `T_1` is the path along `order`, and
/// `T_j` joins `order[i]` with `order[i+j]` given everything in between.
pub fn build_dvine(order: &[usize]) -> Result<VineStructure> {
    let d = order.len();
    check_permutation(order, d)?;
    let mut trees = Vec::with_capacity(d - 1);
    for j in 1..d {
        let mut tree = Vec::with_capacity(d - j);
        for i in 0..d - j {
            tree.push(VineEdge::new(
                order[i],
                order[i + j],
                order[i + 1..i + j].to_vec(),
            ));
        }
        trees.push(tree);
    }
    let vine = VineStructure { d, trees };
    vine.validate()?;
    Ok(vine)
}

/// C-vine: tree `T_j` is a star rooted at `roots[j-1]`, conditioned on the
/// roots before it. `roots` must list `d-1` (or `d`) distinct features.
pub fn build_cvine(d: usize, roots: &[usize]) -> Result<VineStructure> {
    if d < 2 {
        return Err(Error::invalid_input("C-vine needs at least 2 features"));
    }
    if roots.len() + 1 < d || roots.len() > d {
        return Err(Error::invalid_input(format!(
            "C-vine over {} features needs {} root features, got {}",
            d,
            d - 1,
            roots.len()
        )));
    }
    let mut seen = vec![false; d + 1];
    for &r in roots {
        if r == 0 || r > d || seen[r] {
            return Err(Error::invalid_input(format!("invalid C-vine root {r}")));
        }
        seen[r] = true;
    }
    let mut trees = Vec::with_capacity(d - 1);
    for j in 1..d {
        let root = roots[j - 1];
        let conditioning = roots[..j - 1].to_vec();
        let mut tree = Vec::new();
        for leaf in 1..=d {
            if leaf != root && !roots[..j].contains(&leaf) {
                tree.push(VineEdge::new(root, leaf, conditioning.clone()));
            }
        }
        trees.push(tree);
    }
    let vine = VineStructure { d, trees };
    vine.validate()?;
    Ok(vine)
}

/// Greedy feature ordering for a D-vine: start from the strongest `|tau|`
/// pair and extend the path at whichever end gains the most dependence.
pub fn dvine_order(samples: &DMatrix<f64>) -> Result<Vec<usize>> {
    let po = pseudo_obs(samples)?;
    let tau = tau_matrix(&po.u)?;
    dvine_order_from_tau(&tau)
}

/// Same heuristic, driven by a precomputed tau matrix.
pub fn dvine_order_from_tau(tau: &DMatrix<f64>) -> Result<Vec<usize>> {
    let d = tau.nrows();
    if d < 2 {
        return Err(Error::invalid_input("ordering needs at least 2 features"));
    }
    let mut best = (0, 1, f64::NEG_INFINITY);
    for i in 0..d {
        for j in i + 1..d {
            let w = tau[(i, j)].abs();
            if w > best.2 {
                best = (i, j, w);
            }
        }
    }
    let mut path = std::collections::VecDeque::with_capacity(d);
    path.push_back(best.0);
    path.push_back(best.1);
    let mut used = vec![false; d];
    used[best.0] = true;
    used[best.1] = true;
    while path.len() < d {
        let front = *path.front().unwrap();
        let back = *path.back().unwrap();
        let mut pick: Option<(bool, usize, f64)> = None; // (at_front, feature, w)
        for f in 0..d {
            if used[f] {
                continue;
            }
            for (at_front, w) in [(true, tau[(front, f)].abs()), (false, tau[(back, f)].abs())] {
                if pick.map_or(true, |(_, _, bw)| w > bw) {
                    pick = Some((at_front, f, w));
                }
            }
        }
        let (at_front, f, _) = pick.unwrap();
        used[f] = true;
        if at_front {
            path.push_front(f);
        } else {
            path.push_back(f);
        }
    }
    Ok(path.into_iter().map(|f| f + 1).collect())
}

/// Data-driven R-vine: `T_1` is the maximum spanning tree on `|tau|`; each
/// higher tree is a maximum spanning tree over proximity-allowed node pairs,
/// weighted by the unconditional `|tau|` of the candidate conditioned pair.
pub fn build_rvine_greedy(samples: &DMatrix<f64>) -> Result<VineStructure> {
    let po = pseudo_obs(samples)?;
    let tau = tau_matrix(&po.u)?;
    build_rvine_from_tau(&tau)
}

/// R-vine selection from a precomputed tau matrix.
pub fn build_rvine_from_tau(tau: &DMatrix<f64>) -> Result<VineStructure> {
    let d = tau.nrows();
    if d < 2 {
        return Err(Error::invalid_input("R-vine needs at least 2 features"));
    }
    let abs = tau.map(f64::abs);
    let t1 = first_tree_mst(&abs);
    let mut trees: Vec<Vec<VineEdge>> = vec![t1
        .iter()
        .map(|&(x, y)| VineEdge::new(x, y, Vec::new()))
        .collect()];

    // Node ids at the previous level: features for T1, edge indices above.
    let mut prev_endpoints: Vec<(usize, usize)> = t1.clone();
    let mut prev_unions: Vec<BTreeSet<usize>> =
        trees[0].iter().map(|e| e.complete_union()).collect();

    for _level in 2..d {
        let m = prev_unions.len();
        // candidate weights over previous-edge pairs satisfying proximity
        let mut allowed = DMatrix::from_element(m, m, f64::NEG_INFINITY);
        for a in 0..m {
            for b in a + 1..m {
                let (p1, q1) = prev_endpoints[a];
                let (p2, q2) = prev_endpoints[b];
                if p1 == p2 || p1 == q2 || q1 == p2 || q1 == q2 {
                    let diff: Vec<usize> = prev_unions[a]
                        .symmetric_difference(&prev_unions[b])
                        .copied()
                        .collect();
                    debug_assert_eq!(diff.len(), 2);
                    let w = abs[(diff[0] - 1, diff[1] - 1)];
                    allowed[(a, b)] = w;
                    allowed[(b, a)] = w;
                }
            }
        }
        // Prim over the allowed graph
        let mut in_tree = vec![false; m];
        in_tree[0] = true;
        let mut picked: Vec<(usize, usize)> = Vec::with_capacity(m - 1);
        for _ in 1..m {
            let mut best: Option<(f64, usize, usize)> = None;
            for a in 0..m {
                if !in_tree[a] {
                    continue;
                }
                for b in 0..m {
                    if in_tree[b] || allowed[(a, b)] == f64::NEG_INFINITY {
                        continue;
                    }
                    let w = allowed[(a, b)];
                    let key = (a.min(b), a.max(b));
                    let better = match best {
                        None => true,
                        Some((bw, bu, bv)) => {
                            w > bw || (w == bw && key < (bu.min(bv), bu.max(bv)))
                        }
                    };
                    if better {
                        best = Some((w, a, b));
                    }
                }
            }
            let (_, a, b) = best.ok_or_else(|| {
                Error::InvalidVine("proximity graph is not connected".into())
            })?;
            in_tree[b] = true;
            picked.push((a, b));
        }
        let mut tree = Vec::with_capacity(picked.len());
        let mut endpoints = Vec::with_capacity(picked.len());
        let mut unions = Vec::with_capacity(picked.len());
        for &(a, b) in &picked {
            let diff: Vec<usize> = prev_unions[a]
                .symmetric_difference(&prev_unions[b])
                .copied()
                .collect();
            let conditioning: Vec<usize> = prev_unions[a]
                .intersection(&prev_unions[b])
                .copied()
                .collect();
            let edge = VineEdge::new(diff[0], diff[1], conditioning);
            unions.push(edge.complete_union());
            tree.push(edge);
            endpoints.push((a, b));
        }
        trees.push(tree);
        prev_endpoints = endpoints;
        prev_unions = unions;
    }

    let vine = VineStructure { d, trees };
    vine.validate()?;
    Ok(vine)
}

fn check_permutation(order: &[usize], d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::invalid_input("need at least 2 features"));
    }
    let mut seen = vec![false; d + 1];
    for &f in order {
        if f == 0 || f > d || seen[f] {
            return Err(Error::invalid_input(format!(
                "order {order:?} is not a permutation of 1..={d}"
            )));
        }
        seen[f] = true;
    }
    Ok(())
}
