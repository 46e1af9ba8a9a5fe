use crate::ecology::TraderClass;
use crate::propagator::PropagatorParams;
use crate::tape::{SessionKey, Side};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentRole {
    SlowTaker,
    FastTaker,
    Provider,
    MarketMaker,
    SlowProvider,
}

impl AgentRole {
    pub fn class(self) -> TraderClass {
        match self {
            AgentRole::SlowTaker | AgentRole::SlowProvider => TraderClass::Slow,
            _ => TraderClass::Fast,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentLabel {
    pub id: String,
    pub role: AgentRole,
    pub class: TraderClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderScript {
    pub id: String,
    pub c: f64,
    pub kappa: f64,
    pub weight: f64,
    pub tail: f64,
}

/// A metaorder as the generator intended it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntendedMetaorder {
    pub trader_id: String,
    pub side: Side,
    pub volume: u64,
    pub n: usize,
    pub child_times: Vec<i64>,
    pub child_sizes: Vec<u64>,
}

/// One emitted market order with its noiseless impact bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthOrder {
    pub ts_ns: i64,
    pub trader_id: String,
    pub side: Side,
    pub size: u64,
    /// Walked the book and moved the quotes at once.
    pub immediate: bool,
    /// When the kernel starts decaying: once the market has traded `size`
    /// shares after the order. `None` if the session closed first.
    pub kernel_start_ns: Option<i64>,
    /// Noiseless log-mid displacement just before the order.
    pub pre_impact: f64,
    /// Noiseless displacement once the whole batch is applied.
    pub post_impact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTruth {
    pub key: SessionKey,
    pub volume: u64,
    /// Volatility proxy of the emitted quotes.
    pub sigma: f64,
    pub metaorders: Vec<IntendedMetaorder>,
    pub orders: Vec<TruthOrder>,
    /// Scripted run lengths per provider, in the order they were drawn.
    /// The last run of each provider may have been cut by the close.
    pub runs: Vec<(String, Vec<u64>)>,
}

impl SessionTruth {
    /// Noiseless impact a metaorder's own children contribute right after
    /// its last child's fills, in signed log-price units.
    pub fn own_impact(&self, m: &IntendedMetaorder, params: &PropagatorParams) -> f64 {
        let t_end = *m.child_times.last().expect("metaorder has children");
        let mut total = 0.0;
        for &t in &m.child_times {
            let k = self
                .orders
                .binary_search_by_key(&t, |o| o.ts_ns)
                .expect("every child is an emitted order");
            let o = &self.orders[k];
            let amp = params.g0 * (o.size as f64).sqrt();
            total += match o.kernel_start_ns {
                // kernels switched on by the last child's own batch show up after its fills
                Some(s) if s < t_end => amp * kernel_shape(params, (t_end - s) as f64 / 1e9),
                _ if o.immediate => amp * kernel_shape(params, 0.0),
                _ => 0.0,
            };
        }
        total
    }
}

/// `(dt / (tau + s0))^beta`.
pub(crate) fn kernel_shape(p: &PropagatorParams, tau: f64) -> f64 {
    let x = p.dt / (tau + p.s0);
    if p.beta == 0.5 {
        x.sqrt()
    } else {
        x.powf(p.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthLedger {
    pub params: PropagatorParams,
    pub agents: Vec<AgentLabel>,
    pub providers: Vec<ProviderScript>,
    pub sessions: Vec<SessionTruth>,
}

impl GroundTruthLedger {
    pub fn label(&self, id: &str) -> Option<&AgentLabel> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("ledger serializes")
    }
}
