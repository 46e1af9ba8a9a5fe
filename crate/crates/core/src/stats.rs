//! Small numerical helpers shared by the estimators.

use serde::{Deserialize, Serialize};

/// Mean and standard error of the mean; the error is zero below two samples.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let mut acc = Accumulator::default();
    xs.iter().for_each(|&x| acc.push(x));
    (acc.mean(), acc.se())
}

/// Mergeable running moments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn se(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.sd() / (self.n as f64).sqrt()
        }
    }
}

/// Log-spaced bin edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogBins {
    pub edges: Vec<f64>,
}

impl LogBins {
    /// Edges `lo * 10^(k / per_decade)` up to and including `hi`.
    pub fn new(lo: f64, hi: f64, per_decade: usize) -> Self {
        assert!(lo > 0.0 && hi > lo && per_decade > 0);
        let decades = (hi / lo).log10();
        let n = (decades * per_decade as f64).round().max(1.0) as usize;
        let step = decades / n as f64;
        let edges = (0..=n).map(|k| lo * 10f64.powf(step * k as f64)).collect();
        LogBins { edges }
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, x: f64) -> Option<usize> {
        if !(x >= self.edges[0]) || x >= *self.edges.last().unwrap() {
            return None;
        }
        Some(self.edges.partition_point(|&e| e <= x) - 1)
    }

    pub fn bounds(&self, i: usize) -> (f64, f64) {
        (self.edges[i], self.edges[i + 1])
    }
}

/// Per-bin accumulators of `(x, y)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedXY {
    pub bins: LogBins,
    pub x: Vec<Accumulator>,
    pub y: Vec<Accumulator>,
}

impl BinnedXY {
    pub fn new(bins: LogBins) -> Self {
        let n = bins.len();
        Self {
            bins,
            x: vec![Accumulator::default(); n],
            y: vec![Accumulator::default(); n],
        }
    }

    pub fn push(&mut self, x: f64, y: f64) -> bool {
        match self.bins.index(x) {
            Some(i) => {
                self.x[i].push(x);
                self.y[i].push(y);
                true
            }
            None => false,
        }
    }

    pub fn merge(&mut self, other: &BinnedXY) {
        assert_eq!(self.bins, other.bins);
        for i in 0..self.x.len() {
            self.x[i].merge(&other.x[i]);
            self.y[i].merge(&other.y[i]);
        }
    }
}

/// Weighted least squares for `y = a + b x`; returns `(a, b, cov)` with
/// `cov = (X' W X)^-1`.
pub fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64, [[f64; 2]; 2])> {
    let (mut sw, mut swx, mut swy, mut swxx, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&xi, &yi), &wi) in x.iter().zip(y).zip(w) {
        sw += wi;
        swx += wi * xi;
        swy += wi * yi;
        swxx += wi * xi * xi;
        swxy += wi * xi * yi;
    }
    let det = sw * swxx - swx * swx;
    if !(det.abs() > 1e-300) || x.len() < 2 {
        return None;
    }
    let b = (sw * swxy - swx * swy) / det;
    let a = (swy - b * swx) / sw;
    let cov = [[swxx / det, -swx / det], [-swx / det, sw / det]];
    Some((a, b, cov))
}

/// Ordinary least squares slope with its standard error.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 3 {
        return None;
    }
    let w = vec![1.0; n];
    let (a, b, cov) = weighted_line(x, y, &w)?;
    let rss: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - a - b * xi).powi(2)).sum();
    let s2 = rss / (n - 2) as f64;
    Some((b, (cov[1][1] * s2).sqrt()))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Solve a small dense linear system in place (Gaussian elimination with
/// partial pivoting). Returns `None` when singular.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let (top, rest) = a.split_at_mut(row);
            for (t, p) in rest[0][col..n].iter_mut().zip(&top[col][col..n]) {
                *t -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Inverse of a small dense matrix.
pub fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cols.push(solve(a.to_vec(), e)?);
    }
    Some((0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
}
