use super::SimError;
use crate::propagator::PropagatorParams;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Slow takers: one metaorder per active trader and session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowTakers {
    pub count: usize,
    /// Probability that a trader runs a metaorder in a given session.
    pub participation: f64,
    /// Metaorder sizes: `Q = floor(size_min * U^(-1/size_tail))`, redrawn above `size_max`.
    pub size_min: u64,
    pub size_max: u64,
    pub size_tail: f64,
    /// `N = round(n_ref * (Q / q_ref)^n_exponent)`, clamped to `[1, n_max]`.
    pub n_ref: f64,
    pub q_ref: f64,
    pub n_exponent: f64,
    pub n_max: usize,
    /// Child spacing in seconds: `U(spacing_lo, spacing_hi) * (Q / q_ref)^spacing_growth`.
    pub spacing_lo: f64,
    pub spacing_hi: f64,
    pub spacing_growth: f64,
}

/// Fast takers: market orders whose sign flips every order, separated by
/// `min_gap` plus an exponential wait.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastTakers {
    pub count: usize,
    /// Rate of the exponential part of the gap, per second.
    pub rate: f64,
    /// Dead time after each order, in seconds. Keeps the next (opposite)
    /// order out of the window in which the market digests the current one.
    pub min_gap: f64,
    /// Log-uniform order sizes.
    pub size_lo: u64,
    pub size_hi: u64,
}

/// A group of scripted liquidity providers sharing one refill function `C / i^kappa`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSpec {
    pub c: f64,
    pub kappa: f64,
    pub weight: f64,
    pub count: usize,
}

/// Unscripted resting liquidity (market makers or one-sided slow providers).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MakerSpec {
    pub count: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub stock_id: String,
    pub start_date: NaiveDate,
    /// Trading days; each yields an AM and a PM session.
    pub days: u32,
    pub tick_size: f64,
    pub initial_mid_ticks: i64,
    /// Even number of ticks, so mids are whole ticks.
    pub spread_ticks: i64,
    /// Log-price noise volatility per square-root second.
    pub noise: f64,
    /// Period of quote snapshots between trades, seconds.
    pub grid_secs: f64,
    pub propagator: PropagatorParams,
    /// Latent book slope, shares per tick squared; the deep fill of a
    /// book-walking order sits `sqrt(2 q / gamma)` ticks past the best.
    pub gamma: f64,
    /// Typical queue size at the best quotes.
    pub best_size_lo: u64,
    pub best_size_hi: u64,
    /// Chance that a market order walks the book and moves the quotes at
    /// once. Drawn per order, whoever sends it.
    pub immediate_prob: f64,
    pub slow: SlowTakers,
    pub fast: FastTakers,
    pub providers: Vec<ProviderSpec>,
    /// Tail exponent of refill-sequence lengths.
    pub refill_tail: f64,
    /// Standard deviation of the per-fill refill jitter, in units of `sigma_D`.
    pub refill_noise: f64,
    pub market_makers: MakerSpec,
    pub slow_providers: MakerSpec,
}

impl SimConfig {
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let c: SimConfig = toml::from_str(text).map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn n_traders(&self) -> usize {
        self.slow.count
            + self.fast.count
            + self.providers.iter().map(|p| p.count).sum::<usize>()
            + self.market_makers.count
            + self.slow_providers.count
    }

    pub fn sessions(&self) -> usize {
        2 * self.days as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::ConfigInvalid(m.to_string()));
        self.propagator
            .validate()
            .map_err(|e| SimError::ConfigInvalid(format!("propagator: {e}")))?;
        if self.days == 0 {
            return bad("days must be positive");
        }
        if self.stock_id.is_empty() || self.stock_id.contains(',') {
            return bad("stock_id must be non-empty and comma-free");
        }
        if !(self.tick_size > 0.0) {
            return bad("tick_size must be positive");
        }
        if self.spread_ticks < 2 || self.spread_ticks % 2 != 0 {
            return bad("spread_ticks must be even and at least 2");
        }
        if self.initial_mid_ticks <= 1000 * self.spread_ticks {
            return bad("initial_mid_ticks too small for the spread");
        }
        if !(self.noise >= 0.0) || !(self.grid_secs > 0.0) || !(self.gamma > 0.0) {
            return bad("noise must be non-negative, grid_secs and gamma positive");
        }
        if self.best_size_lo == 0 || self.best_size_hi < self.best_size_lo {
            return bad("best sizes must satisfy 0 < lo <= hi");
        }
        if !(0.0..=1.0).contains(&self.immediate_prob) {
            return bad("immediate_prob must lie in [0, 1]");
        }
        let s = &self.slow;
        if s.count > 0 {
            if !(0.0..=1.0).contains(&s.participation) {
                return bad("participation must lie in [0, 1]");
            }
            if s.size_min < 2 || s.size_max < s.size_min {
                return bad("slow sizes must satisfy 2 <= size_min <= size_max");
            }
            if !(s.size_tail > 0.0 && s.size_tail <= 5.0) {
                return bad("size_tail must lie in (0, 5]");
            }
            if !(s.n_ref >= 1.0) || !(s.q_ref > 0.0) || s.n_max == 0 || !(s.n_exponent.abs() <= 2.0) {
                return bad("child-count law out of range");
            }
            if !(s.spacing_lo > 0.0 && s.spacing_hi >= s.spacing_lo) || !(s.spacing_growth.abs() <= 2.0) {
                return bad("spacing must satisfy 0 < lo <= hi");
            }
        }
        let f = &self.fast;
        if f.count > 0 && (!(f.rate > 0.0) || !(f.min_gap >= 0.0) || f.size_lo < 2 || f.size_hi < f.size_lo) {
            return bad("fast takers need a positive rate, a non-negative gap and sizes 2 <= lo <= hi");
        }
        for p in &self.providers {
            if !(p.c >= 0.0) || !(p.kappa >= 0.0 && p.kappa <= 3.0) || !(p.weight > 0.0) {
                return bad("provider C and weight must be positive, kappa in [0, 3]");
            }
        }
        if !(self.refill_tail > 1.0 && self.refill_tail <= 5.0) || !(self.refill_noise >= 0.0) {
            return bad("refill_tail must lie in (1, 5], refill_noise non-negative");
        }
        for m in [&self.market_makers, &self.slow_providers] {
            if m.count > 0 && !(m.weight > 0.0) {
                return bad("maker weights must be positive");
            }
        }
        if self.slow_providers.count < 2 {
            return bad("at least two slow providers are needed so both sides always have liquidity");
        }
        Ok(())
    }

    /// Calibrated so the emitted tape shows realistic participation rates,
    /// fragmentation and ecology. The impact prefactor is a free choice that
    /// puts `Y` of order one.
    pub fn preset_paper_like() -> Self {
        SimConfig {
            seed: 7,
            stock_id: "SIM".into(),
            start_date: NaiveDate::from_ymd_opt(2016, 1, 4).unwrap(),
            days: 160,
            tick_size: 0.001,
            initial_mid_ticks: 10_000_000,
            spread_ticks: 4,
            noise: 7e-5,
            grid_secs: 30.0,
            propagator: PropagatorParams { g0: 8.5e-6, s0: 60.0, beta: 0.5, dt: 60.0 },
            gamma: 1.0,
            best_size_lo: 100,
            best_size_hi: 400,
            immediate_prob: 0.9,
            slow: SlowTakers {
                count: 300,
                participation: 0.6,
                size_min: 2000,
                size_max: 100_000,
                size_tail: 1.5,
                n_ref: 10.0,
                q_ref: 20_000.0,
                n_exponent: 0.3,
                n_max: 31,
                spacing_lo: 240.0,
                spacing_hi: 270.0,
                spacing_growth: 0.0,
            },
            fast: FastTakers { count: 10, rate: 1.0 / 80.0, min_gap: 30.0, size_lo: 500, size_hi: 4000 },
            providers: vec![
                ProviderSpec { c: 0.05, kappa: 0.5, weight: 1.0, count: 3 },
                ProviderSpec { c: 0.01, kappa: 1.0, weight: 3.0, count: 3 },
            ],
            refill_tail: 2.0,
            refill_noise: 0.005,
            market_makers: MakerSpec { count: 2, weight: 3.0 },
            slow_providers: MakerSpec { count: 30, weight: 0.25 },
        }
    }

    /// Short, evenly spaced metaorders of fairly large children, for rank
    /// profiles. Execution spans a small part of the session so that the
    /// daily-range normalisation does not bend the profile, and children are
    /// large next to the fast flow so each rank is well resolved.
    pub fn preset_child_profile() -> Self {
        let mut c = Self::preset_paper_like();
        c.noise = 3e-5;
        c.propagator = PropagatorParams { g0: 8.5e-6, s0: 20.0, beta: 0.5, dt: 5.0 };
        c.slow = SlowTakers {
            count: 10,
            participation: 1.0,
            size_min: 70_000,
            size_max: 140_000,
            size_tail: 1.5,
            n_ref: 70.0,
            q_ref: 70_000.0,
            n_exponent: 0.0,
            n_max: 70,
            spacing_lo: 5.0,
            spacing_hi: 5.0,
            spacing_growth: 0.0,
        };
        c.immediate_prob = 1.0;
        c
    }
}
