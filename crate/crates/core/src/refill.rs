//! Refill sequences of liquidity providers and their price-degradation
//! ("refill") function `K(i) = C / i^kappa`.

use crate::impact::{fit_power_curve, fit_tail_exponent, ImpactError, Point, TailFit};
use crate::stats::{spearman, Accumulator};
use crate::tape::{EventKind, Session, SessionKey, Side};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefillError {
    #[error("provider has {have} usable sequences, need {need}")]
    InsufficientSequences { have: usize, need: usize },
    #[error(transparent)]
    Fit(#[from] ImpactError),
}

/// Threshold on `C` separating wary from aggressive providers.
pub const WARY_C: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefillFill {
    pub ts_ns: i64,
    /// Total filled size of the limit order.
    pub size: u64,
    /// Log price of its first fill.
    pub log_price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefillSequence {
    pub provider_id: String,
    pub session: SessionKey,
    /// Side of the filled limit orders.
    pub side: Side,
    pub fills: Vec<RefillFill>,
    pub session_sigma: Option<f64>,
}

impl RefillSequence {
    pub fn n(&self) -> usize {
        self.fills.len()
    }

    /// Sign of the market orders that hit the sequence.
    pub fn taker_sign(&self) -> f64 {
        -self.side.signum()
    }

    pub fn volume(&self) -> u64 {
        self.fills.iter().map(|f| f.size).sum()
    }
}

/// Sign-run decomposition of each provider's stream of filled limit orders.
///
/// A limit order joins the stream at its first fill; later partial fills add
/// to its size without creating a new element.
pub fn extract_refill_sequences(session: &Session) -> Vec<RefillSequence> {
    let sigma = session.sigma().ok();
    let mut out: Vec<RefillSequence> = Vec::new();
    let mut open: HashMap<&str, usize> = HashMap::new();
    let mut seen: HashMap<(&str, &str), (usize, usize)> = HashMap::new();
    for e in session.events.iter().filter(|e| e.kind == EventKind::Execution) {
        let who = e.trader_id.as_str();
        if let Some(&(s, f)) = seen.get(&(who, e.order_id.as_str())) {
            out[s].fills[f].size += e.size;
            continue;
        }
        let fill = RefillFill {
            ts_ns: e.ts_ns,
            size: e.size,
            log_price: (e.price as f64).ln(),
        };
        let s = match open.get(who) {
            Some(&s) if out[s].side == e.side => s,
            _ => {
                out.push(RefillSequence {
                    provider_id: who.to_string(),
                    session: session.key,
                    side: e.side,
                    fills: Vec::new(),
                    session_sigma: sigma,
                });
                open.insert(who, out.len() - 1);
                out.len() - 1
            }
        };
        out[s].fills.push(fill);
        seen.insert((who, e.order_id.as_str()), (s, out[s].fills.len() - 1));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthDistribution {
    /// `(n, count)`.
    pub histogram: Vec<(u64, u64)>,
    pub fit: TailFit,
}

pub fn length_distribution(sequences: &[RefillSequence]) -> Result<LengthDistribution, RefillError> {
    let lengths: Vec<u64> = sequences.iter().map(|s| s.n() as u64).collect();
    let mut h: BTreeMap<u64, u64> = BTreeMap::new();
    for &n in &lengths {
        *h.entry(n).or_default() += 1;
    }
    Ok(LengthDistribution {
        histogram: h.into_iter().collect(),
        fit: fit_tail_exponent(&lengths)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProviderKind {
    Wary,
    Aggressive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankMean {
    pub rank: usize,
    pub mean: f64,
    pub se: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefillFit {
    pub provider_id: String,
    pub c: f64,
    pub kappa: f64,
    pub c_se: f64,
    pub kappa_se: f64,
    pub n_sequences: usize,
    /// Provider's fraction of filled-limit volume; set by [`fit_providers`].
    pub liq_share: f64,
    pub kind: ProviderKind,
    pub profile: Vec<RankMean>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefillOptions {
    pub min_sequences: usize,
    /// Ranks with fewer observations are left out of the fit.
    pub min_rank_count: u64,
    pub max_rank: usize,
    /// Number of most active providers fitted per stock.
    pub top_providers: usize,
}

impl Default for RefillOptions {
    fn default() -> Self {
        Self { min_sequences: 30, min_rank_count: 5, max_rank: 50, top_providers: 100 }
    }
}

/// `K(i) = E[eps (p_{i+1} - p_i) / sigma_D | i]` over sequences with `n >= i + 1`,
/// and its fit `C / i^kappa`. All sequences should come from one provider.
pub fn refill_function(sequences: &[RefillSequence], opts: &RefillOptions) -> Result<RefillFit, RefillError> {
    let usable: Vec<&RefillSequence> = sequences
        .iter()
        .filter(|s| s.n() >= 2 && s.session_sigma.is_some_and(|x| x > 0.0))
        .collect();
    if usable.len() < opts.min_sequences {
        return Err(RefillError::InsufficientSequences { have: usable.len(), need: opts.min_sequences });
    }
    let mut acc = vec![Accumulator::default(); opts.max_rank];
    for s in &usable {
        let sigma = s.session_sigma.unwrap();
        for (i, w) in s.fills.windows(2).enumerate().take(opts.max_rank) {
            acc[i].push(s.taker_sign() * (w[1].log_price - w[0].log_price) / sigma);
        }
    }
    let profile: Vec<RankMean> = acc
        .iter()
        .enumerate()
        .filter(|(_, a)| a.n > 0)
        .map(|(i, a)| RankMean { rank: i + 1, mean: a.mean(), se: if a.n > 1 { a.se() } else { f64::NAN }, count: a.n })
        .collect();
    let points: Vec<Point> = profile
        .iter()
        .filter(|r| r.count >= opts.min_rank_count)
        .map(|r| Point { x: r.rank as f64, y: r.mean, se: r.se })
        .collect();
    let fit = fit_power_curve(&points)?;
    Ok(RefillFit {
        provider_id: usable[0].provider_id.clone(),
        c: fit.prefactor,
        kappa: -fit.exponent,
        c_se: fit.prefactor_se(),
        kappa_se: fit.exponent_se(),
        n_sequences: usable.len(),
        liq_share: f64::NAN,
        kind: if fit.prefactor >= WARY_C { ProviderKind::Wary } else { ProviderKind::Aggressive },
        profile,
    })
}

/// Fits the most active providers and fills in their liquidity shares.
/// Providers without enough sequences are skipped.
pub fn fit_providers(sequences: &[RefillSequence], opts: &RefillOptions) -> Vec<RefillFit> {
    let total: u64 = sequences.iter().map(RefillSequence::volume).sum();
    let mut by: BTreeMap<&str, Vec<RefillSequence>> = BTreeMap::new();
    for s in sequences {
        by.entry(&s.provider_id).or_default().push(s.clone());
    }
    let mut ranked: Vec<(&str, Vec<RefillSequence>)> = by.into_iter().collect();
    ranked.sort_by_key(|(id, v)| (std::cmp::Reverse(v.iter().map(RefillSequence::n).sum::<usize>()), *id));
    ranked
        .into_iter()
        .take(opts.top_providers)
        .filter_map(|(_, v)| {
            let mut f = refill_function(&v, opts).ok()?;
            let vol: u64 = v.iter().map(RefillSequence::volume).sum();
            f.liq_share = if total > 0 { vol as f64 / total as f64 } else { 0.0 };
            Some(f)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareCurve {
    /// `(C, share)` after pair averaging, sorted by `C`.
    pub points: Vec<(f64, f64)>,
    /// Rank correlation of `C` and share over the unsmoothed fits.
    pub spearman: Option<f64>,
}

/// Liquidity share against `C`, averaging consecutive pairs (by `C`) so that
/// no single provider's point is exposed. An odd last point is dropped.
pub fn liquidity_share_vs_c(fits: &[RefillFit]) -> ShareCurve {
    let mut raw: Vec<(f64, f64)> = fits.iter().map(|f| (f.c, f.liq_share)).collect();
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let points = raw
        .chunks_exact(2)
        .map(|p| ((p[0].0 + p[1].0) / 2.0, (p[0].1 + p[1].1) / 2.0))
        .collect();
    let (cs, ss): (Vec<f64>, Vec<f64>) = raw.iter().copied().unzip();
    ShareCurve { points, spearman: spearman(&cs, &ss) }
}

/// Salted SHA-256 of a provider id, first 16 hex digits.
pub fn provider_hash(salt: &str, id: &str) -> String {
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update([0u8]);
    h.update(id.as_bytes());
    hex::encode(&h.finalize()[..8])
}

/// `provider_hash,C,kappa,n_sequences,liq_share`.
pub fn fit_table_csv(fits: &[RefillFit], salt: &str) -> String {
    let mut out = String::from("provider_hash,C,kappa,n_sequences,liq_share\n");
    for f in fits {
        let _ = writeln!(out, "{},{},{},{},{}", provider_hash(salt, &f.provider_id), f.c, f.kappa, f.n_sequences, f.liq_share);
    }
    out
}
