//! Synthetic tapes with known impact dynamics.
//!
//! Prices follow a non-linear propagator: each market order of size `q` and
//! sign `eps` adds `eps G0 sqrt(q) (dt / (tau + s0))^beta` to the log mid,
//! on top of an independent Gaussian random walk. The lag `tau` runs from
//! the moment the market has traded another `q` shares after the order. An
//! order that walks the book moves the quotes at once by the lag-zero value
//! and holds it until then; an order that fits inside the best queue leaves
//! the quotes untouched until then. Which of the two happens is drawn per
//! order with the same odds for every agent, so that market orders are
//! interchangeable.
//!
//! Agents:
//! - slow takers split one metaorder per session into equal, evenly spaced
//!   children;
//! - fast takers send market orders with a dead time between them and flip
//!   sign every order;
//! - scripted providers fill in runs with power-law lengths, and their fill
//!   prices degrade by `C / i^kappa` session volatilities between fills;
//! - market makers alternate sides on every fill;
//! - slow providers rest on one side for the whole session.
//!
//! Sessions are generated independently from `(seed, session index)`, so
//! output does not depend on the number of threads.

mod config;
mod engine;
mod ledger;

pub use self::config::{FastTakers, MakerSpec, ProviderSpec, SimConfig, SlowTakers};
pub use self::ledger::{
    AgentLabel, AgentRole, GroundTruthLedger, IntendedMetaorder, ProviderScript, SessionTruth,
    TruthOrder,
};

use self::engine::{generate_session, Roster};
use crate::tape::{Session, TapeMeta, TapeWriter};
use rayon::prelude::*;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A generated tape, split into sessions, with its ground truth.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub meta: TapeMeta,
    pub sessions: Vec<Session>,
    pub ledger: GroundTruthLedger,
}

impl Simulation {
    pub fn events(&self) -> usize {
        self.sessions.iter().map(|s| s.events.len()).sum()
    }

    pub fn write_tape<W: Write>(&self, out: W) -> std::io::Result<W> {
        let mut w = TapeWriter::new(out)?;
        for s in &self.sessions {
            for e in &s.events {
                w.write(e)?;
            }
        }
        w.finish()
    }
}

pub fn tape_meta(config: &SimConfig) -> TapeMeta {
    TapeMeta {
        stock_id: config.stock_id.clone(),
        session_date: config.start_date,
        tick_size: config.tick_size,
    }
}

pub fn simulate(config: &SimConfig) -> Result<Simulation, SimError> {
    config.validate()?;
    let roster = Roster::new(config);
    let (sessions, truths): (Vec<Session>, Vec<SessionTruth>) = (0..config.sessions())
        .into_par_iter()
        .map(|i| generate_session(config, &roster, i))
        .unzip();
    Ok(Simulation {
        meta: tape_meta(config),
        sessions,
        ledger: GroundTruthLedger {
            params: config.propagator,
            agents: roster.labels,
            providers: roster.scripts,
            sessions: truths,
        },
    })
}

/// Writes the tape session by session without keeping it in memory.
/// Returns the number of rows written.
pub fn stream_tape<W: Write>(config: &SimConfig, out: W) -> Result<u64, SimError> {
    config.validate()?;
    let roster = Roster::new(config);
    let mut w = TapeWriter::new(out)?;
    let chunk = rayon::current_num_threads().max(1) * 2;
    let n = config.sessions();
    let mut i = 0;
    while i < n {
        let hi = (i + chunk).min(n);
        let batch: Vec<Session> = (i..hi)
            .into_par_iter()
            .map(|k| generate_session(config, &roster, k).0)
            .collect();
        for s in &batch {
            for e in &s.events {
                w.write(e)?;
            }
        }
        i = hi;
    }
    let rows = w.rows();
    w.finish()?;
    Ok(rows)
}

#[cfg(test)]
mod tests;
