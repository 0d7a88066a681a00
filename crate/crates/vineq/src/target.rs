//! Target distributions: discretization of samples and analytic densities
//! into `2^{dk}` probability tables, target amplitude vectors, marginals,
//! and the total variation distance.
//!
//! Feature `r` owns the `r`-th most significant `k`-bit block of the basis
//! index, mirroring the qubit register layout.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ingested sample matrix (rows are observations, columns are features).
#[derive(Clone, Debug)]
pub struct SampleSet {
    pub labels: Vec<String>,
    pub data: DMatrix<f64>,
}

impl SampleSet {
    pub fn new(labels: Vec<String>, data: DMatrix<f64>) -> Result<Self> {
        if labels.len() != data.ncols() {
            return Err(Error::LengthMismatch {
                expected: data.ncols(),
                got: labels.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_input("sample matrix contains non-finite entries"));
        }
        Ok(SampleSet { labels, data })
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.data.ncols()
    }
}

/// Per-feature bin layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FeatureBins {
    /// Equal-width bins: bin `l` covers `[lo + l*width, lo + (l+1)*width)`.
    Uniform { lo: f64, width: f64 },
    /// Explicit ascending edges (`2^k + 1` of them), for quantile binning.
    Edges(Vec<f64>),
}

impl FeatureBins {
    fn index_of(&self, x: f64, n_bins: usize) -> usize {
        match self {
            FeatureBins::Uniform { lo, width } => {
                let raw = ((x - lo) / width).floor();
                (raw.max(0.0) as usize).min(n_bins - 1)
            }
            FeatureBins::Edges(edges) => {
                let pos = edges[1..edges.len() - 1].partition_point(|&e| e <= x);
                pos.min(n_bins - 1)
            }
        }
    }
}

/// Probability table over `{0,1}^{dk}` with the bin grids that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    pub d: usize,
    pub k: usize,
    probs: Vec<f64>,
    bins: Vec<FeatureBins>,
}

impl DiscreteDistribution {
    /// Wraps a raw table; `probs` must be non-negative, sum to 1 within
    /// 1e-9, and have length `2^{dk}`.
    pub fn new(d: usize, k: usize, probs: Vec<f64>, bins: Vec<FeatureBins>) -> Result<Self> {
        if probs.len() != 1usize << (d * k) {
            return Err(Error::LengthMismatch {
                expected: 1 << (d * k),
                got: probs.len(),
            });
        }
        if probs.iter().any(|&p| p < 0.0) {
            return Err(Error::invalid_input("negative probability"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid_input(format!(
                "probability table sums to {total}, not 1"
            )));
        }
        Ok(DiscreteDistribution { d, k, probs, bins })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn bins(&self) -> &[FeatureBins] {
        &self.bins
    }

    pub fn n_bits(&self) -> usize {
        self.d * self.k
    }

    /// Amplitudes `sqrt(p_y)`, renormalized to unit norm.
    pub fn target_amplitudes(&self) -> Vec<f64> {
        let mut amps: Vec<f64> = self.probs.iter().map(|&p| p.sqrt()).collect();
        let norm: f64 = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 0.0 {
            amps.iter_mut().for_each(|a| *a /= norm);
        }
        amps
    }

    /// Extracts feature `r`'s bin index from a full table index.
    pub fn feature_bin(&self, index: usize, r: usize) -> usize {
        let shift = (self.d - r) * self.k;
        (index >> shift) & ((1 << self.k) - 1)
    }

    /// Marginal over the given features (1-based, distinct); the output
    /// feature order follows the argument order.
    pub fn marginal(&self, features: &[usize]) -> Result<DiscreteDistribution> {
        if features.is_empty() {
            return Err(Error::invalid_input("marginal needs a non-empty feature set"));
        }
        let mut seen = vec![false; self.d + 1];
        for &f in features {
            if f == 0 || f > self.d || seen[f] {
                return Err(Error::invalid_input(format!(
                    "invalid marginal feature {f} for d={}",
                    self.d
                )));
            }
            seen[f] = true;
        }
        let d_out = features.len();
        let mut probs = vec![0.0; 1usize << (d_out * self.k)];
        for (index, &p) in self.probs.iter().enumerate() {
            let mut out = 0usize;
            for &f in features {
                out = (out << self.k) | self.feature_bin(index, f);
            }
            probs[out] += p;
        }
        let bins = features.iter().map(|&f| self.bins[f - 1].clone()).collect();
        DiscreteDistribution::new(d_out, self.k, probs, bins)
    }

    /// Keeps only each feature's `new_k` most significant bits, summing the
    /// dropped low bits.
    pub fn coarsen(&self, new_k: usize) -> Result<DiscreteDistribution> {
        if new_k == 0 || new_k > self.k {
            return Err(Error::invalid_input(format!(
                "cannot coarsen k={} to {new_k}",
                self.k
            )));
        }
        let drop = self.k - new_k;
        let mut probs = vec![0.0; 1usize << (self.d * new_k)];
        for (index, &p) in self.probs.iter().enumerate() {
            let mut out = 0usize;
            for r in 1..=self.d {
                out = (out << new_k) | (self.feature_bin(index, r) >> drop);
            }
            probs[out] += p;
        }
        let bins = self
            .bins
            .iter()
            .map(|b| match b {
                FeatureBins::Uniform { lo, width } => FeatureBins::Uniform {
                    lo: *lo,
                    width: width * (1usize << drop) as f64,
                },
                FeatureBins::Edges(edges) => FeatureBins::Edges(
                    edges.iter().copied().step_by(1 << drop).collect(),
                ),
            })
            .collect();
        DiscreteDistribution::new(self.d, new_k, probs, bins)
    }

    /// Bin code of one sample row under this distribution's grids.
    pub fn encode_row(&self, row: &[f64]) -> Result<usize> {
        if row.len() != self.d {
            return Err(Error::LengthMismatch {
                expected: self.d,
                got: row.len(),
            });
        }
        let n_bins = 1usize << self.k;
        let mut code = 0usize;
        for (x, bins) in row.iter().zip(&self.bins) {
            code = (code << self.k) | bins.index_of(*x, n_bins);
        }
        Ok(code)
    }

    /// Bin codes for a whole sample set.
    pub fn encode(&self, samples: &SampleSet) -> Result<Vec<usize>> {
        (0..samples.n_samples())
            .map(|i| {
                let row: Vec<f64> = samples.data.row(i).iter().copied().collect();
                self.encode_row(&row)
            })
            .collect()
    }

    /// Writes `bitstring,probability` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "bitstring,probability")?;
        let bits = self.n_bits();
        for (i, p) in self.probs.iter().enumerate() {
            writeln!(w, "{i:0bits$b},{p}")?;
        }
        Ok(())
    }
}

/// How `discretize` chooses per-feature bin ranges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum RangePolicy {
    /// Equal-width bins over `[min - p, max + p]` with `p = pad*(max-min)`.
    Padded { pad: f64 },
    /// Equal-mass bins at empirical quantiles.
    Quantile,
}

impl Default for RangePolicy {
    fn default() -> Self {
        RangePolicy::Padded { pad: 0.01 }
    }
}

/// Bins each feature into `2^k` bins and returns the relative-frequency
/// table. A constant feature falls back to a unit-width range around it.
pub fn discretize(
    samples: &SampleSet,
    k: usize,
    policy: RangePolicy,
) -> Result<DiscreteDistribution> {
    if k == 0 {
        return Err(Error::invalid_input("k must be at least 1"));
    }
    let n = samples.n_samples();
    let d = samples.n_features();
    if n == 0 || d == 0 {
        return Err(Error::invalid_input("need at least one sample and one feature"));
    }
    if d * k > crate::statevec::DEFAULT_MAX_QUBITS {
        return Err(Error::CapacityExceeded {
            requested: d * k,
            limit: crate::statevec::DEFAULT_MAX_QUBITS,
        });
    }
    let n_bins = 1usize << k;
    let mut bins = Vec::with_capacity(d);
    for j in 0..d {
        let col = samples.data.column(j);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in col.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let fb = match policy {
            RangePolicy::Padded { pad } => {
                if hi > lo {
                    let p = pad * (hi - lo);
                    FeatureBins::Uniform {
                        lo: lo - p,
                        width: (hi - lo + 2.0 * p) / n_bins as f64,
                    }
                } else {
                    // constant feature: unit-width fallback
                    FeatureBins::Uniform {
                        lo: lo - 0.5,
                        width: 1.0 / n_bins as f64,
                    }
                }
            }
            RangePolicy::Quantile => {
                let mut sorted: Vec<f64> = col.iter().copied().collect();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let span = (hi - lo).max(1.0);
                let mut edges = Vec::with_capacity(n_bins + 1);
                edges.push(lo - 1e-9 * span);
                for l in 1..n_bins {
                    edges.push(sorted[(l * n / n_bins).min(n - 1)]);
                }
                edges.push(hi + 1e-9 * span);
                FeatureBins::Edges(edges)
            }
        };
        bins.push(fb);
    }

    let mut probs = vec![0.0; 1usize << (d * k)];
    let weight = 1.0 / n as f64;
    for i in 0..n {
        let mut code = 0usize;
        for (j, fb) in bins.iter().enumerate() {
            code = (code << k) | fb.index_of(samples.data[(i, j)], n_bins);
        }
        probs[code] += weight;
    }
    DiscreteDistribution::new(d, k, probs, bins)
}

/// Multivariate normal, discretized by evaluating the density at each bin
/// center, multiplying by the bin volume, and renormalizing. The default
/// grid covers `mu_i - 3*sigma_i ..= mu_i + 3*sigma_i` per feature.
pub fn gaussian_target(
    mu: &[f64],
    sigma: &DMatrix<f64>,
    k: usize,
    range: Option<&[(f64, f64)]>,
) -> Result<DiscreteDistribution> {
    let d = mu.len();
    if k == 0 || d == 0 {
        return Err(Error::invalid_input("need d >= 1 and k >= 1"));
    }
    if sigma.nrows() != d || sigma.ncols() != d {
        return Err(Error::LengthMismatch {
            expected: d,
            got: sigma.nrows(),
        });
    }
    if d * k > crate::statevec::DEFAULT_MAX_QUBITS {
        return Err(Error::CapacityExceeded {
            requested: d * k,
            limit: crate::statevec::DEFAULT_MAX_QUBITS,
        });
    }
    for i in 0..d {
        for j in 0..d {
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 {
                return Err(Error::invalid_input("covariance matrix is not symmetric"));
            }
        }
    }
    let chol = sigma.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    if let Some(r) = range {
        if r.len() != d {
            return Err(Error::LengthMismatch {
                expected: d,
                got: r.len(),
            });
        }
    }

    let n_bins = 1usize << k;
    let mut bins = Vec::with_capacity(d);
    for i in 0..d {
        let (lo, hi) = match range {
            Some(r) => r[i],
            None => {
                let s = sigma[(i, i)].sqrt();
                (mu[i] - 3.0 * s, mu[i] + 3.0 * s)
            }
        };
        if !(hi > lo) {
            return Err(Error::invalid_input(format!(
                "empty range for feature {}",
                i + 1
            )));
        }
        bins.push(FeatureBins::Uniform {
            lo,
            width: (hi - lo) / n_bins as f64,
        });
    }
    let volume: f64 = bins
        .iter()
        .map(|b| match b {
            FeatureBins::Uniform { width, .. } => *width,
            FeatureBins::Edges(_) => unreachable!(),
        })
        .product();
    let log_norm = -0.5 * (d as f64) * (2.0 * std::f64::consts::PI).ln()
        - (0..d).map(|i| chol.l()[(i, i)].ln()).sum::<f64>();

    let dim = 1usize << (d * k);
    let mut probs = vec![0.0; dim];
    let mut center = nalgebra::DVector::zeros(d);
    for (index, p) in probs.iter_mut().enumerate() {
        for r in 1..=d {
            let bin = (index >> ((d - r) * k)) & (n_bins - 1);
            let FeatureBins::Uniform { lo, width } = &bins[r - 1] else {
                unreachable!()
            };
            center[r - 1] = lo + (bin as f64 + 0.5) * width - mu[r - 1];
        }
        let quad = chol.solve(&center).dot(&center);
        *p = (log_norm - 0.5 * quad).exp() * volume;
    }
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid_input("density mass vanished on the grid"));
    }
    probs.iter_mut().for_each(|p| *p /= total);
    DiscreteDistribution::new(d, k, probs, bins)
}

/// Total variation distance of two probability tables.
pub fn tvd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Aligned end-of-day price rows, one column per ticker.
#[derive(Clone, Debug)]
pub struct PriceSeries {
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    pub prices: DMatrix<f64>,
}

/// Reads `date,<ticker1>,<ticker2>,...` CSV with ISO-8601 dates. Missing
/// cells and non-monotone dates are rejected with their line number.
pub fn read_price_csv(path: &Path) -> Result<PriceSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::CsvParse {
            line: 1,
            msg: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::CsvParse {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    if headers.is_empty() || headers[0].to_ascii_lowercase() != "date" {
        return Err(Error::CsvParse {
            line: 1,
            msg: "header must start with 'date'".into(),
        });
    }
    let tickers: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    if tickers.is_empty() {
        return Err(Error::CsvParse {
            line: 1,
            msg: "no ticker columns".into(),
        });
    }

    let mut dates = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::CsvParse {
            line: 0,
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != tickers.len() + 1 {
            return Err(Error::CsvParse {
                line,
                msg: format!("expected {} cells, got {}", tickers.len() + 1, record.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|e| {
            Error::CsvParse {
                line,
                msg: format!("bad date '{}': {e}", &record[0]),
            }
        })?;
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(Error::CsvParse {
                    line,
                    msg: format!("dates not strictly increasing at {date}"),
                });
            }
        }
        dates.push(date);
        for cell in record.iter().skip(1) {
            if cell.is_empty() {
                return Err(Error::CsvParse {
                    line,
                    msg: "missing cell".into(),
                });
            }
            let v: f64 = cell.parse().map_err(|_| Error::CsvParse {
                line,
                msg: format!("bad number '{cell}'"),
            })?;
            rows.push(v);
        }
    }
    if dates.is_empty() {
        return Err(Error::CsvParse {
            line: 1,
            msg: "no data rows".into(),
        });
    }
    let prices = DMatrix::from_row_slice(dates.len(), tickers.len(), &rows);
    Ok(PriceSeries {
        dates,
        tickers,
        prices,
    })
}

/// Row `t` is the element-wise `ln(p(t)/p(t-1))`; length `T-1`.
pub fn log_returns(series: &PriceSeries) -> Result<SampleSet> {
    let t = series.prices.nrows();
    let d = series.prices.ncols();
    if t < 2 {
        return Err(Error::invalid_input("need at least 2 price rows"));
    }
    let mut data = DMatrix::zeros(t - 1, d);
    for row in 0..t {
        for col in 0..d {
            let p = series.prices[(row, col)];
            if p <= 0.0 {
                return Err(Error::NonPositivePrice {
                    ticker: series.tickers[col].clone(),
                    row: row + 1,
                    value: p,
                });
            }
            if row > 0 {
                data[(row - 1, col)] = (p / series.prices[(row - 1, col)]).ln();
            }
        }
    }
    SampleSet::new(series.tickers.clone(), data)
}
