//! Synthetic metaorders from in-session permutations of market-order trader IDs.
//!
//! The permutation is the Fisher-Yates shuffle of `rand::seq::SliceRandom`
//! driven by ChaCha8 seeded from the 64-bit seed; session `k` of a batch uses
//! ChaCha stream `k`. Both are portable, so a `(tape, seed)` pair always
//! produces the same synthetic tape.

use crate::impact::{metaorder_impact_curve, CurveOptions, ImpactCurve, ImpactError, MetaorderImpact};
use crate::metaorder::{reconstruct, Metaorder};
use crate::tape::{EventKind, Session};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShuffleError {
    #[error("session has {0} market orders, need at least 2")]
    TooFewOrders(usize),
    #[error("curves do not share bin edges")]
    BinMismatch,
    #[error(transparent)]
    Impact(#[from] ImpactError),
}

#[derive(Debug, Clone)]
pub struct ShuffledSession {
    pub session: Session,
    pub seed: u64,
    pub stream: u64,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Permutes the trader IDs of the session's `M` rows; every other field and
/// every non-market row is left as is.
pub fn shuffle_ids(session: &Session, seed: u64) -> Result<ShuffledSession, ShuffleError> {
    shuffle_stream(session, seed, 0)
}

fn shuffle_stream(session: &Session, seed: u64, stream: u64) -> Result<ShuffledSession, ShuffleError> {
    let rows: Vec<usize> = session
        .events
        .iter()
        .enumerate()
        .filter(|(_, e)| e.kind == EventKind::Market)
        .map(|(i, _)| i)
        .collect();
    if rows.len() < 2 {
        return Err(ShuffleError::TooFewOrders(rows.len()));
    }
    let mut ids: Vec<String> = rows.iter().map(|&i| session.events[i].trader_id.clone()).collect();
    ids.shuffle(&mut rng_for(seed, stream));
    let mut out = session.clone();
    for (&i, id) in rows.iter().zip(ids) {
        out.events[i].trader_id = id;
    }
    Ok(ShuffledSession { session: out, seed, stream })
}

/// Shuffles each session on its own stream; sessions with fewer than two
/// market orders are passed through unchanged.
pub fn shuffle_sessions(sessions: &[Session], seed: u64) -> Vec<Session> {
    sessions
        .iter()
        .enumerate()
        .map(|(k, s)| match shuffle_stream(s, seed, k as u64) {
            Ok(sh) => sh.session,
            Err(_) => s.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub count: usize,
    pub mean_volume: f64,
    pub mean_children: f64,
    pub total_children: usize,
}

impl SizeSummary {
    pub fn of(ms: &[Metaorder]) -> Self {
        let n = ms.len().max(1) as f64;
        let total_children = ms.iter().map(Metaorder::n).sum();
        Self {
            count: ms.len(),
            mean_volume: ms.iter().map(|m| m.volume as f64).sum::<f64>() / n,
            mean_children: total_children as f64 / n,
            total_children,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticReport {
    pub seed: u64,
    pub real_metaorders: Vec<Metaorder>,
    pub synthetic_metaorders: Vec<Metaorder>,
    pub real: MetaorderImpact,
    pub synthetic: MetaorderImpact,
    pub real_sizes: SizeSummary,
    pub synthetic_sizes: SizeSummary,
    pub comparison: CurveComparison,
}

/// Reconstructs metaorders from real and shuffled IDs and compares the two
/// impact curves.
pub fn synthetic_pipeline(sessions: &[Session], seed: u64, opts: &CurveOptions) -> Result<SyntheticReport, ShuffleError> {
    let real_metaorders: Vec<Metaorder> = sessions.iter().flat_map(reconstruct).collect();
    let shuffled = shuffle_sessions(sessions, seed);
    let synthetic_metaorders: Vec<Metaorder> = shuffled.iter().flat_map(reconstruct).collect();
    let real = metaorder_impact_curve(&real_metaorders, opts)?;
    let synthetic = metaorder_impact_curve(&synthetic_metaorders, opts)?;
    let comparison = compare_curves(&real.curve, &synthetic.curve)?;
    Ok(SyntheticReport {
        seed,
        real_sizes: SizeSummary::of(&real_metaorders),
        synthetic_sizes: SizeSummary::of(&synthetic_metaorders),
        real_metaorders,
        synthetic_metaorders,
        real,
        synthetic,
        comparison,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinZ {
    pub lo: f64,
    pub hi: f64,
    pub z: f64,
    pub in_chi2: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveComparison {
    pub bins: Vec<BinZ>,
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
}

fn same_edge(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

/// Per-bin `z = (a - b) / sqrt(se_a^2 + se_b^2)` and `chi2 = sum z^2` over
/// shared bins populated in both curves.
pub fn compare_curves(a: &ImpactCurve, b: &ImpactCurve) -> Result<CurveComparison, ShuffleError> {
    let mut bins = Vec::new();
    for x in &a.bins {
        let Some(y) = b.bins.iter().find(|y| y.lo < x.hi && x.lo < y.hi) else {
            continue;
        };
        if !same_edge(x.lo, y.lo) || !same_edge(x.hi, y.hi) {
            return Err(ShuffleError::BinMismatch);
        }
        let var = x.se * x.se + y.se * y.se;
        let z = if var > 0.0 { (x.mean - y.mean) / var.sqrt() } else { 0.0 };
        let in_chi2 = x.count >= a.min_bin_count && y.count >= b.min_bin_count && var > 0.0 && z.is_finite();
        bins.push(BinZ { lo: x.lo, hi: x.hi, z, in_chi2 });
    }
    if bins.is_empty() && !a.bins.is_empty() && !b.bins.is_empty() {
        return Err(ShuffleError::BinMismatch);
    }
    let used: Vec<f64> = bins.iter().filter(|b| b.in_chi2).map(|b| b.z).collect();
    let chi2: f64 = used.iter().map(|z| z * z).sum();
    let dof = used.len();
    let p_value = if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64).map(|d| 1.0 - d.cdf(chi2)).unwrap_or(f64::NAN)
    };
    Ok(CurveComparison { bins, chi2, dof, p_value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impact::CurveBin;
    use crate::tape::Side;
    use crate::testutil::SessionBuilder;
    use std::collections::BTreeMap;

    fn ids(s: &Session) -> Vec<String> {
        s.events.iter().filter(|e| e.kind == EventKind::Market).map(|e| e.trader_id.clone()).collect()
    }

    fn hist(v: &[String]) -> BTreeMap<String, usize> {
        let mut h = BTreeMap::new();
        for x in v {
            *h.entry(x.clone()).or_default() += 1;
        }
        h
    }

    fn aab() -> Session {
        let mut b = SessionBuilder::new();
        b.market("A", Side::Buy, 5).wait(1.0).limit("L", Side::Buy, 7).market("A", Side::Sell, 3).wait(1.0).market("B", Side::Buy, 2);
        b.build()
    }

    #[test]
    fn preserves_histogram_and_other_fields() {
        let s = aab();
        for seed in 0..20 {
            let sh = shuffle_ids(&s, seed).unwrap().session;
            assert_eq!(hist(&ids(&sh)), hist(&ids(&s)));
            assert_eq!(sh.events.len(), s.events.len());
            for (x, y) in sh.events.iter().zip(&s.events) {
                assert_eq!((x.ts_ns, x.kind, x.side, x.price, x.size, x.best_bid), (y.ts_ns, y.kind, y.side, y.price, y.size, y.best_bid));
                if x.kind != EventKind::Market {
                    assert_eq!(x.trader_id, y.trader_id);
                }
            }
            assert_eq!(sh.volume, s.volume);
            assert_eq!(sh.sigma().unwrap(), s.sigma().unwrap());
        }
    }

    #[test]
    fn deterministic() {
        let s = aab();
        assert_eq!(ids(&shuffle_ids(&s, 42).unwrap().session), ids(&shuffle_ids(&s, 42).unwrap().session));
    }

    #[test]
    fn too_few_orders() {
        let mut b = SessionBuilder::new();
        b.market("A", Side::Buy, 1);
        assert!(matches!(shuffle_ids(&b.build(), 1), Err(ShuffleError::TooFewOrders(1))));
    }

    #[test]
    fn two_ids_swap_half_the_time() {
        let mut b = SessionBuilder::new();
        b.market("A", Side::Buy, 1).wait(1.0).market("B", Side::Buy, 1);
        let s = b.build();
        let n = 100_000;
        let swapped = (0..n).filter(|&k| ids(&shuffle_ids(&s, k).unwrap().session)[0] == "B").count();
        let frac = swapped as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
    }

    #[test]
    fn child_count_conserved() {
        let mut b = SessionBuilder::new();
        for k in 0..40 {
            let side = if k % 7 < 4 { Side::Buy } else { Side::Sell };
            b.market(["A", "B", "C"][k % 3], side, 1 + k as u64).wait(2.0);
        }
        let s = b.build();
        let real: usize = reconstruct(&s).iter().map(Metaorder::n).sum();
        for seed in 0..10 {
            let syn: usize = reconstruct(&shuffle_ids(&s, seed).unwrap().session).iter().map(Metaorder::n).sum();
            assert_eq!(syn, real);
        }
    }

    fn curve(points: &[(f64, f64, f64, f64, u64)]) -> ImpactCurve {
        ImpactCurve {
            bins: points
                .iter()
                .map(|&(lo, hi, mean, se, count)| CurveBin { lo, hi, mean_x: (lo * hi).sqrt(), mean, se, count, in_fit: true })
                .collect(),
            min_bin_count: 50,
            fit: None,
        }
    }

    #[test]
    fn compare_identical_and_shifted() {
        let a = curve(&[(1.0, 2.0, 1.0, 0.1, 100), (2.0, 4.0, 2.0, 0.1, 100)]);
        let c = compare_curves(&a, &a).unwrap();
        assert!(c.bins.iter().all(|b| b.z == 0.0));
        assert_eq!(c.p_value, 1.0);
        let se = 0.1;
        let b = curve(&[(1.0, 2.0, 1.0 + 3.0 * (2.0f64).sqrt() * se, se, 100), (2.0, 4.0, 2.0, se, 100)]);
        let c = compare_curves(&a, &b).unwrap();
        assert!((c.bins[0].z.abs() - 3.0).abs() < 1e-9);
        assert_eq!(c.dof, 2);
        // chi-square with 2 dof: survival = exp(-x / 2)
        assert!((c.p_value - (-4.5f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn compare_rejects_misaligned_bins() {
        let a = curve(&[(1.0, 2.0, 1.0, 0.1, 100)]);
        let b = curve(&[(1.5, 3.0, 1.0, 0.1, 100)]);
        assert_eq!(compare_curves(&a, &b), Err(ShuffleError::BinMismatch));
    }
}
