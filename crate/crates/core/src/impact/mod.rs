//! Impact estimators: metaorder square-root law, per-child profile and the
//! impact of single market orders in volume time.

mod fit;
mod tail;

pub use self::fit::{
    child_curve, fit_child_curve, fit_power_curve, fit_pure_power, ChildCurveFit, Point,
    PowerFit, BETA_GRID, OFFSET_GRID,
};
pub use self::tail::{fit_tail_exponent, hurwitz_zeta, TailFit, MIN_TAIL_SAMPLES};

use crate::metaorder::Metaorder;
use crate::stats::{ols_slope, Accumulator, BinnedXY, LogBins};
use crate::tape::{EventKind, SeasonalityProfile, Session};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImpactError {
    #[error("fewer than two usable bins ({usable})")]
    InsufficientData { usable: usize },
    #[error("every bin has a non-positive mean")]
    NonPositiveMean,
    #[error("only {populated} populated ranks")]
    InsufficientRanks { populated: usize },
    #[error("too few tail samples ({samples}, need {required} above x_min)")]
    TooFewTailSamples { samples: usize, required: usize },
    #[error("session ends before the volume clock advances by q")]
    TruncatedWindow,
    #[error("no seasonality bin covers time {ts}")]
    MissingSeasonality { ts: i64 },
}

pub const DEFAULT_MIN_BIN_COUNT: u64 = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBin {
    pub lo: f64,
    pub hi: f64,
    /// Mean abscissa of the observations in the bin.
    pub mean_x: f64,
    pub mean: f64,
    pub se: f64,
    pub count: u64,
    pub in_fit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactCurve {
    pub bins: Vec<CurveBin>,
    pub min_bin_count: u64,
    pub fit: Option<PowerFit>,
}

impl ImpactCurve {
    /// Bins `(x, y)` observations and fits `y = Y x^delta` on the populated bins.
    pub fn from_pairs(pairs: &[(f64, f64)], edges: &LogBins, min_bin_count: u64) -> Self {
        let mut acc = BinnedXY::new(edges.clone());
        for &(x, y) in pairs {
            acc.push(x, y);
        }
        Self::from_binned(&acc, min_bin_count)
    }

    pub fn from_binned(acc: &BinnedXY, min_bin_count: u64) -> Self {
        let mut bins = Vec::new();
        for i in 0..acc.bins.len() {
            let (xs, ys) = (&acc.x[i], &acc.y[i]);
            if ys.n == 0 {
                continue;
            }
            let (lo, hi) = acc.bins.bounds(i);
            let se = if ys.n > 1 { ys.se() } else { f64::NAN };
            bins.push(CurveBin {
                lo,
                hi,
                mean_x: xs.mean(),
                mean: ys.mean(),
                se,
                count: ys.n,
                in_fit: ys.n >= min_bin_count && se.is_finite() && ys.mean() > 0.0,
            });
        }
        let points: Vec<Point> = bins
            .iter()
            .filter(|b| b.in_fit)
            .map(|b| Point { x: b.mean_x, y: b.mean, se: b.se })
            .collect();
        let fit = fit_power_curve(&points).ok();
        Self { bins, min_bin_count, fit }
    }

    pub fn fit(&self) -> Result<&PowerFit, ImpactError> {
        self.fit.as_ref().ok_or(ImpactError::InsufficientData {
            usable: self.bins.iter().filter(|b| b.in_fit).count(),
        })
    }

    /// `bin_lo,bin_hi,mean,se,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,mean,se,count\n");
        for b in &self.bins {
            let _ = writeln!(out, "{},{},{},{},{}", b.lo, b.hi, b.mean, b.se, b.count);
        }
        out
    }
}

/// Options shared by the binned estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveOptions {
    pub edges: LogBins,
    pub min_bin_count: u64,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            edges: LogBins::new(1e-6, 1.0, 4),
            min_bin_count: DEFAULT_MIN_BIN_COUNT,
        }
    }
}

/// Residual trend of impact against execution time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTrend {
    /// Slope of `eps dp / sigma - Y f^delta` against `ln T`.
    pub slope: f64,
    pub se: f64,
    pub n: usize,
}

impl TimeTrend {
    pub fn consistent_with_zero(&self, n_se: f64) -> bool {
        self.slope.abs() <= n_se * self.se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeStratum {
    /// Execution-time range in seconds, `[lo, hi)`.
    pub t_lo: f64,
    pub t_hi: f64,
    pub curve: ImpactCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaorderImpact {
    pub curve: ImpactCurve,
    pub strata: Vec<TimeStratum>,
    pub trend: Option<TimeTrend>,
    /// Metaorders without a usable `sigma_D`, `V_D` or endpoint quotes.
    pub excluded: usize,
}

struct MetaPoint {
    f: f64,
    y: f64,
    t: f64,
}

fn metaorder_point(m: &Metaorder) -> Option<MetaPoint> {
    let sigma = m.session_sigma.filter(|s| *s > 0.0)?;
    let f = m.fraction();
    if !(f > 0.0) {
        return None;
    }
    Some(MetaPoint {
        f,
        y: m.signed_impact()? / sigma,
        t: m.duration_secs(),
    })
}

/// Mean of `eps dp / sigma_D` against `f = Q / V_D`, with a power-law fit and
/// the same curve split into execution-time terciles. Single-child
/// metaorders have `T = 0` and stay out of the strata.
pub fn metaorder_impact_curve(
    metaorders: &[Metaorder],
    opts: &CurveOptions,
) -> Result<MetaorderImpact, ImpactError> {
    let points: Vec<MetaPoint> = metaorders.iter().filter_map(metaorder_point).collect();
    let excluded = metaorders.len() - points.len();
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.f, p.y)).collect();
    let curve = ImpactCurve::from_pairs(&pairs, &opts.edges, opts.min_bin_count);
    let fit = curve.fit()?.clone();

    let mut ts: Vec<f64> = points.iter().map(|p| p.t).filter(|t| *t > 0.0).collect();
    ts.sort_by(f64::total_cmp);
    let mut strata = Vec::new();
    if !ts.is_empty() {
        let q = |p: f64| ts[((ts.len() - 1) as f64 * p).round() as usize];
        let cuts = [ts[0], q(1.0 / 3.0), q(2.0 / 3.0), f64::INFINITY];
        for w in cuts.windows(2) {
            let sub: Vec<(f64, f64)> = points
                .iter()
                .filter(|p| p.t >= w[0] && p.t < w[1])
                .map(|p| (p.f, p.y))
                .collect();
            if sub.is_empty() {
                continue;
            }
            strata.push(TimeStratum {
                t_lo: w[0],
                t_hi: w[1],
                curve: ImpactCurve::from_pairs(&sub, &opts.edges, opts.min_bin_count),
            });
        }
    }

    let (lx, r): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| p.t > 0.0 && opts.edges.index(p.f).is_some())
        .map(|p| (p.t.ln(), p.y - fit.eval(p.f)))
        .unzip();
    let trend = ols_slope(&lx, &r).map(|(slope, se)| TimeTrend { slope, se, n: lx.len() });
    Ok(MetaorderImpact { curve, strata, trend, excluded })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankPoint {
    pub rank: usize,
    pub mean: f64,
    pub se: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildProfile {
    pub ranks: Vec<RankPoint>,
    /// Largest rank used in the fits.
    pub i_max: usize,
    /// Free fit of `(A, i0, beta)`.
    pub free: ChildCurveFit,
    /// Fit with `beta = 1/2`.
    pub square_root: ChildCurveFit,
    /// Fit of `A i^gamma` (no offset).
    pub pure_power: PowerFit,
}

impl ChildProfile {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,mean,se,count\n");
        for r in &self.ranks {
            let _ = writeln!(out, "{},{},{},{}", r.rank, r.mean, r.se, r.count);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileOptions {
    pub i_max: usize,
    /// Ranks are reported up to this value.
    pub report_max: usize,
    /// Ranks with fewer metaorders are left out of the fits.
    pub min_rank_count: u64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self { i_max: 50, report_max: 100, min_rank_count: 10 }
    }
}

/// Log mid just before child `i + 1`; ranks need a following child.
fn mid_after(m: &Metaorder, i: usize) -> Option<f64> {
    m.children.get(i).and_then(|c| c.pre_log_mid)
}

/// `eps (p_{i+1} - p_1) / (sigma_D sqrt(qbar / V_D))` per metaorder and rank,
/// where `p_{i+1}` is the mid just before child `i + 1`. A metaorder
/// contributes to rank `i` only when it has a child after it.
pub fn child_impact_profile(
    metaorders: &[Metaorder],
    opts: &ProfileOptions,
) -> Result<ChildProfile, ImpactError> {
    let mut acc = vec![Accumulator::default(); opts.report_max];
    for m in metaorders {
        let Some(sigma) = m.session_sigma.filter(|s| *s > 0.0) else {
            continue;
        };
        if m.session_volume == 0 {
            continue;
        }
        let Some(p1) = m.children[0].pre_log_mid else {
            continue;
        };
        let scale = sigma * (m.mean_child_size() / m.session_volume as f64).sqrt();
        for i in 1..m.n().min(opts.report_max + 1) {
            if let Some(p) = mid_after(m, i) {
                acc[i - 1].push(m.sign() * (p - p1) / scale);
            }
        }
    }
    let ranks: Vec<RankPoint> = acc
        .iter()
        .enumerate()
        .filter(|(_, a)| a.n > 0)
        .map(|(i, a)| RankPoint {
            rank: i + 1,
            mean: a.mean(),
            se: if a.n > 1 { a.se() } else { f64::NAN },
            count: a.n,
        })
        .collect();
    fit_profile(ranks, opts)
}

/// Fits a rank profile; exposed for profiles built elsewhere.
pub fn fit_profile(ranks: Vec<RankPoint>, opts: &ProfileOptions) -> Result<ChildProfile, ImpactError> {
    let used: Vec<&RankPoint> = ranks
        .iter()
        .filter(|r| r.rank <= opts.i_max && r.count >= opts.min_rank_count)
        .collect();
    if used.len() < 5 {
        return Err(ImpactError::InsufficientRanks { populated: used.len() });
    }
    let xs: Vec<f64> = used.iter().map(|r| r.rank as f64).collect();
    let ys: Vec<f64> = used.iter().map(|r| r.mean).collect();
    let ws: Vec<f64> = if used.iter().all(|r| r.se.is_finite() && r.se > 0.0) {
        used.iter().map(|r| 1.0 / (r.se * r.se)).collect()
    } else {
        vec![1.0; used.len()]
    };
    Ok(ChildProfile {
        free: fit_child_curve(&xs, &ys, &ws, None)?,
        square_root: fit_child_curve(&xs, &ys, &ws, Some(0.5))?,
        pure_power: fit_pure_power(&xs, &ys, &ws)?,
        i_max: opts.i_max,
        ranks,
    })
}

/// Impact of the first child, `eps (p_2 - p_1) / sigma_D`, against `q_1 / V_D`.
pub fn first_child_curve(metaorders: &[Metaorder], opts: &CurveOptions) -> ImpactCurve {
    let pairs: Vec<(f64, f64)> = metaorders
        .iter()
        .filter_map(|m| {
            let sigma = m.session_sigma.filter(|s| *s > 0.0)?;
            if m.session_volume == 0 {
                return None;
            }
            let dp = mid_after(m, 1)? - m.children[0].pre_log_mid?;
            Some((
                m.children[0].size as f64 / m.session_volume as f64,
                m.sign() * dp / sigma,
            ))
        })
        .collect();
    ImpactCurve::from_pairs(&pairs, &opts.edges, opts.min_bin_count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleMoImpact {
    pub all: ImpactCurve,
    /// Orders no larger than the opposite best queue.
    pub no_immediate: ImpactCurve,
    /// Lag-0 impact `eps (post - pre) / sigma_b` over the no-immediate stratum.
    pub lag0_no_immediate_mean: f64,
    pub lag0_no_immediate_max_abs: f64,
    /// Orders excluded because the session ended first.
    pub truncated: usize,
    /// Orders in a bin without seasonality data or quotes.
    pub skipped: usize,
}

/// Mergeable accumulators behind [`single_mo_impact`].
#[derive(Debug, Clone)]
pub struct SingleMoAccumulator {
    pub all: BinnedXY,
    pub no_immediate: BinnedXY,
    pub lag0: Accumulator,
    pub lag0_max_abs: f64,
    pub truncated: usize,
    pub skipped: usize,
}

impl SingleMoAccumulator {
    pub fn new(edges: &LogBins) -> Self {
        Self {
            all: BinnedXY::new(edges.clone()),
            no_immediate: BinnedXY::new(edges.clone()),
            lag0: Accumulator::default(),
            lag0_max_abs: 0.0,
            truncated: 0,
            skipped: 0,
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.all.merge(&other.all);
        self.no_immediate.merge(&other.no_immediate);
        self.lag0.merge(&other.lag0);
        self.lag0_max_abs = self.lag0_max_abs.max(other.lag0_max_abs);
        self.truncated += other.truncated;
        self.skipped += other.skipped;
    }

    /// Adds every market order of `session`.
    ///
    /// The impact of an order of size `q` is read once the volume executed
    /// strictly after it reaches `q`, at the end of the timestamp batch of the
    /// execution that crosses the threshold.
    pub fn push_session(&mut self, session: &Session, seasonality: &SeasonalityProfile) {
        let mut cum = Vec::with_capacity(session.events.len());
        let mut acc = 0u64;
        for e in &session.events {
            if e.kind == EventKind::Execution {
                acc += e.size;
            }
            cum.push(acc);
        }
        for mo in session.market_orders() {
            let Some(bin) = seasonality.bin_for(mo.ts_ns).filter(|b| b.sigma > 0.0 && b.volume > 0.0)
            else {
                self.skipped += 1;
                continue;
            };
            let Some(pre) = mo.pre_log_mid else {
                self.skipped += 1;
                continue;
            };
            let target = cum[mo.last_index] + mo.size;
            let j = cum.partition_point(|&c| c < target);
            if j >= cum.len() {
                self.truncated += 1;
                continue;
            }
            let Some(after) = session.log_mid_at(session.batch_end(j)) else {
                self.skipped += 1;
                continue;
            };
            let eps = mo.side.signum();
            let x = mo.size as f64 / bin.volume;
            let y = eps * (after - pre) / bin.sigma;
            self.all.push(x, y);
            if mo.no_immediate_impact() {
                self.no_immediate.push(x, y);
                if let Some(post) = mo.post_log_mid {
                    let l0 = eps * (post - pre) / bin.sigma;
                    self.lag0.push(l0);
                    self.lag0_max_abs = self.lag0_max_abs.max(l0.abs());
                }
            }
        }
    }

    pub fn finish(&self, min_bin_count: u64) -> SingleMoImpact {
        SingleMoImpact {
            all: ImpactCurve::from_binned(&self.all, min_bin_count),
            no_immediate: ImpactCurve::from_binned(&self.no_immediate, min_bin_count),
            lag0_no_immediate_mean: if self.lag0.n > 0 { self.lag0.mean() } else { 0.0 },
            lag0_no_immediate_max_abs: self.lag0_max_abs,
            truncated: self.truncated,
            skipped: self.skipped,
        }
    }
}

/// Impact of every market order at volume time `q`, rescaled by the volatility
/// and volume of its intraday bin.
pub fn single_mo_impact(
    sessions: &[Session],
    seasonality: &SeasonalityProfile,
    opts: &CurveOptions,
) -> SingleMoImpact {
    let mut acc = SingleMoAccumulator::new(&opts.edges);
    for s in sessions {
        acc.push_session(s, seasonality);
    }
    acc.finish(opts.min_bin_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metaorder::{Child, Metaorder};
    use crate::tape::{Half, SessionKey, Side};
    use chrono::NaiveDate;

    fn meta(side: Side, sizes: &[u64], mids: &[f64], vd: u64, sigma: f64) -> Metaorder {
        // mids[k] is the log mid before child k; mids[N] the mid after the last child
        let children = sizes
            .iter()
            .enumerate()
            .map(|(k, &size)| Child {
                ts_ns: 36_000_000_000_000 + k as i64 * 1_000_000_000,
                size,
                pre_log_mid: Some(mids[k]),
                post_log_mid: Some(mids[k + 1]),
                event_index: k,
                no_immediate_impact: false,
            })
            .collect();
        Metaorder {
            session: SessionKey { date: NaiveDate::from_ymd_opt(2016, 1, 4).unwrap(), half: Half::Am },
            trader_id: "T".into(),
            side,
            children,
            volume: sizes.iter().sum(),
            session_volume: vd,
            session_sigma: Some(sigma),
            truncated: false,
        }
    }

    fn exact_sqrt_set() -> Vec<Metaorder> {
        let vd = 1_000_000u64;
        let sigma = 0.02;
        let mut out = Vec::new();
        // one f value per bin so bin means are exact
        for k in 0..400u64 {
            let q = 20 * 10u64.pow((k % 4) as u32);
            let dp = sigma * (q as f64 / vd as f64).sqrt();
            let side = if k % 2 == 0 { Side::Buy } else { Side::Sell };
            let s = side.signum();
            out.push(meta(side, &[q / 2, q - q / 2], &[4.6, 4.6 + s * dp / 3.0, 4.6 + s * dp], vd, sigma));
        }
        out
    }

    #[test]
    fn exact_square_root_metaorders() {
        let opts = CurveOptions { edges: LogBins::new(1e-5, 1e-1, 4), min_bin_count: 5 };
        let r = metaorder_impact_curve(&exact_sqrt_set(), &opts).unwrap();
        let f = r.curve.fit().unwrap();
        assert!((f.prefactor - 1.0).abs() < 1e-9, "{f:?}");
        assert!((f.exponent - 0.5).abs() < 1e-9);
    }

    #[test]
    fn sign_flip_leaves_curve_unchanged() {
        let opts = CurveOptions { edges: LogBins::new(1e-5, 1e-1, 4), min_bin_count: 5 };
        let set = exact_sqrt_set();
        let flipped: Vec<Metaorder> = set
            .iter()
            .map(|m| {
                let mut m = m.clone();
                m.side = m.side.opposite();
                for c in &mut m.children {
                    c.pre_log_mid = c.pre_log_mid.map(|p| -p);
                    c.post_log_mid = c.post_log_mid.map(|p| -p);
                }
                m
            })
            .collect();
        let a = metaorder_impact_curve(&set, &opts).unwrap().curve;
        let b = metaorder_impact_curve(&flipped, &opts).unwrap().curve;
        for (x, y) in a.bins.iter().zip(&b.bins) {
            assert!((x.mean - y.mean).abs() < 1e-12);
        }
    }

    #[test]
    fn insufficient_bins() {
        let opts = CurveOptions::default();
        assert!(matches!(
            metaorder_impact_curve(&exact_sqrt_set()[..3], &opts),
            Err(ImpactError::InsufficientData { .. })
        ));
    }

    #[test]
    fn single_child_rank_one() {
        // q / V_D = 1e-4, sigma = 1, A = 1, i0 = 4: J(1) = 0.01 (sqrt 5 - 2)
        let j = 0.01 * child_curve(1.0, 4.0, 0.5, 1.0);
        assert!((j - 0.002_360_68).abs() < 1e-8);
    }

    #[test]
    fn profile_noiseless_inversion() {
        let vd = 1_000_000u64;
        let q = 100u64;
        let scale = 0.02 * (q as f64 / vd as f64).sqrt();
        let mids: Vec<f64> = (0..=60).map(|i| 4.6 + scale * 2.0 * ((i as f64 + 4.0).sqrt() - 2.0)).collect();
        let set: Vec<Metaorder> = (0..20).map(|_| meta(Side::Buy, &[q; 60], &mids, vd, 0.02)).collect();
        let p = child_impact_profile(&set, &ProfileOptions::default()).unwrap();
        assert!((p.free.offset - 4.0).abs() < 1e-6 && (p.free.beta - 0.5).abs() < 1e-6, "{:?}", p.free);
        assert!((p.square_root.amplitude - 2.0).abs() < 1e-6);
        assert_eq!(p.ranks.len(), 59);
    }

    #[test]
    fn profile_needs_five_ranks() {
        let set = vec![meta(Side::Buy, &[10; 3], &[0.0, 0.1, 0.2, 0.3], 1000, 0.01); 20];
        assert!(matches!(
            child_impact_profile(&set, &ProfileOptions::default()),
            Err(ImpactError::InsufficientRanks { .. })
        ));
    }

    #[test]
    fn curve_csv_header() {
        let c = ImpactCurve::from_pairs(&[(1e-3, 1.0), (1e-3, 2.0)], &LogBins::new(1e-4, 1e-2, 2), 1);
        let csv = c.to_csv();
        assert!(csv.starts_with("bin_lo,bin_hi,mean,se,count\n"));
        assert_eq!(csv.lines().count(), 2);
    }
}
