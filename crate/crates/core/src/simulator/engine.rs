use super::config::SimConfig;
use super::ledger::{
    kernel_shape, AgentLabel, AgentRole, IntendedMetaorder, ProviderScript, SessionTruth, TruthOrder,
};
use crate::tape::{EventKind, Half, OrderEvent, Session, Side, NS_PER_DAY, NS_PER_SECOND};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal, Zeta};

pub(crate) const QUOTE_AGENT: &str = "Q";

/// Agent roster shared by every session.
pub(crate) struct Roster {
    pub labels: Vec<AgentLabel>,
    pub slow: Vec<usize>,
    pub fast: Vec<usize>,
    pub providers: Vec<usize>,
    pub makers: Vec<usize>,
    pub lps: Vec<usize>,
    pub scripts: Vec<ProviderScript>,
}

impl Roster {
    pub fn new(cfg: &SimConfig) -> Self {
        let mut r = Roster {
            labels: Vec::new(),
            slow: Vec::new(),
            fast: Vec::new(),
            providers: Vec::new(),
            makers: Vec::new(),
            lps: Vec::new(),
            scripts: Vec::new(),
        };
        let add = |labels: &mut Vec<AgentLabel>, id: String, role: AgentRole| {
            labels.push(AgentLabel { id, role, class: role.class() });
            labels.len() - 1
        };
        for i in 0..cfg.slow.count {
            r.slow.push(add(&mut r.labels, format!("S{:04}", i + 1), AgentRole::SlowTaker));
        }
        for i in 0..cfg.fast.count {
            r.fast.push(add(&mut r.labels, format!("F{:03}", i + 1), AgentRole::FastTaker));
        }
        let mut k = 0;
        for spec in &cfg.providers {
            for _ in 0..spec.count {
                k += 1;
                let id = format!("P{k:03}");
                r.providers.push(add(&mut r.labels, id.clone(), AgentRole::Provider));
                r.scripts.push(ProviderScript {
                    id,
                    c: spec.c,
                    kappa: spec.kappa,
                    weight: spec.weight,
                    tail: cfg.refill_tail,
                });
            }
        }
        for i in 0..cfg.market_makers.count {
            r.makers.push(add(&mut r.labels, format!("M{:03}", i + 1), AgentRole::MarketMaker));
        }
        for i in 0..cfg.slow_providers.count {
            r.lps.push(add(&mut r.labels, format!("L{:03}", i + 1), AgentRole::SlowProvider));
        }
        r
    }
}

struct Planned {
    ts: i64,
    agent: usize,
    side: Side,
    size: u64,
    immediate: bool,
    meta: Option<(usize, usize)>,
}

/// Who is resting where.
struct Book {
    prov_side: Vec<Side>,
    prov_left: Vec<u64>,
    prov_pos: Vec<u64>,
    runs: Vec<Vec<u64>>,
    maker_side: Vec<Side>,
    lp_side: Vec<Side>,
}

enum Resting {
    Provider(usize),
    Maker(usize),
    Lp(usize),
}

/// A scripted fill whose price is set once `sigma_D` is known.
struct ScriptedFill {
    provider: usize,
    pos: u64,
    taker_sign: f64,
    rows: [usize; 2],
}

fn random_side(rng: &mut ChaCha8Rng) -> Side {
    if rng.random::<bool>() {
        Side::Buy
    } else {
        Side::Sell
    }
}

fn draw_run(rng: &mut ChaCha8Rng, zeta: &Zeta<f64>) -> u64 {
    let x: f64 = zeta.sample(rng);
    x.min(1e12) as u64
}

pub(crate) fn session_window(index: usize) -> (i64, Half, i64, i64) {
    let day = (index / 2) as i64;
    let half = if index.is_multiple_of(2) { Half::Am } else { Half::Pm };
    let (s, e) = half.trimmed();
    (day, half, day * NS_PER_DAY + s, day * NS_PER_DAY + e)
}

pub(crate) fn generate_session(cfg: &SimConfig, roster: &Roster, index: usize) -> (Session, SessionTruth) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    let (day, half, start, end) = session_window(index);
    let secs = |ns: i64| ns as f64 / NS_PER_SECOND as f64;
    let length = secs(end - start);

    // order schedule
    let mut planned: Vec<Planned> = Vec::new();
    let mut intended: Vec<IntendedMetaorder> = Vec::new();
    let sc = &cfg.slow;
    for &agent in &roster.slow {
        if rng.random::<f64>() >= sc.participation {
            continue;
        }
        let q_total = loop {
            let u: f64 = 1.0 - rng.random::<f64>();
            let q = (sc.size_min as f64 * u.powf(-1.0 / sc.size_tail)).floor();
            if q <= sc.size_max as f64 {
                break q as u64;
            }
        };
        let rel = q_total as f64 / sc.q_ref;
        let mut n = ((sc.n_ref * rel.powf(sc.n_exponent)).round() as usize)
            .clamp(1, sc.n_max)
            .min(q_total as usize);
        let d = rng.random_range(sc.spacing_lo..=sc.spacing_hi) * rel.powf(sc.spacing_growth);
        if (n - 1) as f64 * d > length - 2.0 {
            n = ((length - 2.0) / d).floor() as usize + 1;
        }
        let span = (n - 1) as f64 * d;
        let t0 = 1.0 + rng.random::<f64>() * (length - 2.0 - span);
        let side = random_side(&mut rng);
        let base = q_total / n as u64;
        let extra = (q_total % n as u64) as usize;
        let m = intended.len();
        let mut m_sizes = Vec::with_capacity(n);
        for k in 0..n {
            let size = base + u64::from(k < extra);
            let immediate = size >= 2 && rng.random::<f64>() < cfg.immediate_prob;
            planned.push(Planned {
                ts: start + ((t0 + k as f64 * d) * 1e9).round() as i64,
                agent,
                side,
                size,
                immediate,
                meta: Some((m, k)),
            });
            m_sizes.push(size);
        }
        intended.push(IntendedMetaorder {
            trader_id: roster.labels[agent].id.clone(),
            side,
            volume: q_total,
            n,
            child_times: vec![0; n],
            child_sizes: m_sizes,
        });
    }
    let fc = &cfg.fast;
    if fc.count > 0 {
        let gap = Exp::new(fc.rate).expect("positive rate");
        let (llo, lhi) = ((fc.size_lo as f64).ln(), (fc.size_hi as f64).ln());
        for &agent in &roster.fast {
            let mut side = random_side(&mut rng);
            let mut t = 1.0 + fc.min_gap * rng.random::<f64>() + gap.sample(&mut rng);
            while t < length - 1.0 {
                let size = rng.random_range(llo..=lhi).exp().round().max(2.0) as u64;
                let immediate = rng.random::<f64>() < cfg.immediate_prob;
                let m = intended.len();
                intended.push(IntendedMetaorder {
                    trader_id: roster.labels[agent].id.clone(),
                    side,
                    volume: size,
                    n: 1,
                    child_times: vec![0],
                    child_sizes: vec![size],
                });
                planned.push(Planned {
                    ts: start + (t * 1e9).round() as i64,
                    agent,
                    side,
                    size,
                    immediate,
                    meta: Some((m, 0)),
                });
                side = side.opposite();
                t += fc.min_gap + gap.sample(&mut rng);
            }
        }
    }
    planned.sort_by_key(|p| (p.ts, p.agent));
    for k in 1..planned.len() {
        if planned[k].ts <= planned[k - 1].ts {
            planned[k].ts = planned[k - 1].ts + 1;
        }
    }
    for p in &planned {
        if let Some((m, k)) = p.meta {
            intended[m].child_times[k] = p.ts;
        }
    }
    intended.sort_by(|a, b| (a.child_times[0], &a.trader_id).cmp(&(b.child_times[0], &b.trader_id)));

    // digestion: the batch where the market has traded `q` more shares
    let n_orders = planned.len();
    let mut cum = Vec::with_capacity(n_orders);
    let mut acc = 0u64;
    for p in &planned {
        acc += p.size;
        cum.push(acc);
    }
    let mut digest_at: Vec<Vec<usize>> = vec![Vec::new(); n_orders];
    let mut kernel_start: Vec<Option<usize>> = vec![None; n_orders];
    for j in 0..n_orders {
        let target = cum[j] + planned[j].size;
        let k = cum.partition_point(|&c| c < target);
        if k < n_orders {
            digest_at[k].push(j);
            kernel_start[j] = Some(k);
        }
    }

    // timeline of trades and quote snapshots
    let grid_ns = (cfg.grid_secs * 1e9).round() as i64;
    let mut grid = Vec::new();
    let mut g = start + grid_ns;
    while g < end {
        let mut t = g;
        while planned.binary_search_by_key(&t, |p| p.ts).is_ok() {
            t += 1;
        }
        grid.push(t);
        g += grid_ns;
    }

    let params = &cfg.propagator;
    let k0 = kernel_shape(params, 0.0);
    let amp: Vec<f64> = planned
        .iter()
        .map(|p| p.side.signum() * params.g0 * (p.size as f64).sqrt())
        .collect();
    let mut started: Vec<(f64, f64)> = Vec::new();
    let mut held = 0.0;
    let impact_at = |started: &[(f64, f64)], held: f64, t: f64| -> f64 {
        held + started.iter().map(|&(s, a)| a * kernel_shape(params, t - s)).sum::<f64>()
    };

    let ln_m0 = (cfg.initial_mid_ticks as f64).ln();
    let half_spread = (cfg.spread_ticks / 2) as f64;
    let quote = |x: f64| -> (i64, i64) {
        let mid = (ln_m0 + x).exp();
        let bid = (mid - half_spread).round() as i64;
        (bid, bid + cfg.spread_ticks)
    };
    let best = |rng: &mut ChaCha8Rng| rng.random_range(cfg.best_size_lo..=cfg.best_size_hi);

    let zeta = Zeta::new(cfg.refill_tail).expect("valid tail");
    let n_prov = roster.providers.len();
    let mut book = Book {
        prov_side: Vec::with_capacity(n_prov),
        prov_left: Vec::with_capacity(n_prov),
        prov_pos: vec![0; n_prov],
        runs: vec![Vec::new(); n_prov],
        maker_side: (0..roster.makers.len()).map(|_| random_side(&mut rng)).collect(),
        lp_side: Vec::new(),
    };
    for p in 0..n_prov {
        book.prov_side.push(random_side(&mut rng));
        let n = draw_run(&mut rng, &zeta);
        book.prov_left.push(n);
        book.runs[p].push(n);
    }
    let lp_offset = rng.random_range(0..2usize);
    book.lp_side = (0..roster.lps.len())
        .map(|k| if (k + lp_offset) % 2 == 0 { Side::Buy } else { Side::Sell })
        .collect();

    let mut events: Vec<OrderEvent> = Vec::with_capacity(n_orders * 8 + grid.len());
    let mut scripted: Vec<ScriptedFill> = Vec::new();
    let mut truth_orders: Vec<TruthOrder> = Vec::with_capacity(n_orders);
    let mut next_id = 0u64;
    let mut new_id = || {
        next_id += 1;
        format!("{}{}-{}", half, day, next_id)
    };
    let noise_sd = cfg.noise;
    let mut w = 0.0;
    let mut t_prev = start;
    let mut gi = 0;
    let mut grid_side = Side::Buy;
    let id = |a: usize| roster.labels[a].id.clone();

    let row = |ts: i64,
               order_id: String,
               trader_id: String,
               kind: EventKind,
               side: Side,
               price: i64,
               size: u64,
               q: (i64, i64, u64, u64)| OrderEvent {
        ts_ns: ts,
        order_id,
        trader_id,
        kind,
        side,
        price,
        size,
        best_bid: Some(q.0),
        best_ask: Some(q.1),
        bid_size: Some(q.2),
        ask_size: Some(q.3),
    };

    for k in 0..=n_orders {
        let t_order = if k < n_orders { planned[k].ts } else { end };
        // snapshots strictly before this trade
        while gi < grid.len() && grid[gi] < t_order {
            let t = grid[gi];
            w += noise_sd * (secs(t - t_prev)).sqrt() * rng.sample::<f64, _>(StandardNormal);
            t_prev = t;
            let (bid, ask) = quote(w + impact_at(&started, held, secs(t)));
            let q = (bid, ask, best(&mut rng), best(&mut rng));
            let (price, size) = match grid_side {
                Side::Buy => (bid, q.2),
                Side::Sell => (ask, q.3),
            };
            events.push(row(t, new_id(), QUOTE_AGENT.into(), EventKind::Limit, grid_side, price, size, q));
            grid_side = grid_side.opposite();
            gi += 1;
        }
        if k == n_orders {
            break;
        }
        let p = &planned[k];
        let t = p.ts;
        let ts = secs(t);
        w += noise_sd * (secs(t - t_prev)).sqrt() * rng.sample::<f64, _>(StandardNormal);
        t_prev = t;

        let pre_imp = impact_at(&started, held, ts);
        let (bid, ask) = quote(w + pre_imp);
        let resting = p.side.opposite();
        let immediate = p.immediate && p.size >= 2;
        let opposite = if immediate {
            best(&mut rng).min(p.size - 1)
        } else {
            p.size + rng.random_range(1..=p.size.max(cfg.best_size_lo))
        };
        let same = best(&mut rng);
        let pre_q = match p.side {
            Side::Buy => (bid, ask, same, opposite),
            Side::Sell => (bid, ask, opposite, same),
        };
        let best_opp = if p.side == Side::Buy { ask } else { bid };
        let mut fills: Vec<(u64, i64)> = Vec::new();
        if immediate {
            let dist = ((2.0 * p.size as f64 / cfg.gamma).sqrt().round() as i64).max(1);
            fills.push((opposite, best_opp));
            fills.push((p.size - opposite, best_opp + p.side.sign() * dist));
        } else {
            fills.push((p.size, best_opp));
        }

        // resting orders appear just before they are hit
        let mut fill_rows = Vec::new();
        for &(size, price) in &fills {
            let who = pick_resting(&mut rng, cfg, &book, resting);
            let (agent, pos) = match who {
                Resting::Provider(i) => {
                    book.prov_pos[i] += 1;
                    let pos = book.prov_pos[i];
                    book.prov_left[i] -= 1;
                    if book.prov_left[i] == 0 {
                        book.prov_side[i] = book.prov_side[i].opposite();
                        let n = draw_run(&mut rng, &zeta);
                        book.prov_left[i] = n;
                        book.runs[i].push(n);
                        book.prov_pos[i] = 0;
                    }
                    (roster.providers[i], Some((i, pos)))
                }
                Resting::Maker(i) => {
                    book.maker_side[i] = book.maker_side[i].opposite();
                    (roster.makers[i], None)
                }
                Resting::Lp(i) => (roster.lps[i], None),
            };
            let oid = new_id();
            events.push(row(t, oid.clone(), id(agent), EventKind::Limit, resting, price, size, pre_q));
            fill_rows.push((agent, oid, size, price, pos, events.len() - 1));
        }
        events.push(row(t, new_id(), id(p.agent), EventKind::Market, p.side, best_opp, p.size, pre_q));

        let fill_q = if immediate {
            let (b, a) = quote(w + pre_imp + amp[k] * k0);
            (b, a, best(&mut rng), best(&mut rng))
        } else {
            match p.side {
                Side::Buy => (pre_q.0, pre_q.1, pre_q.2, opposite - p.size),
                Side::Sell => (pre_q.0, pre_q.1, opposite - p.size, pre_q.3),
            }
        };
        let mut requoting = Vec::new();
        for (agent, oid, size, price, pos, l_row) in fill_rows {
            events.push(row(t, oid, id(agent), EventKind::Execution, resting, price, size, fill_q));
            if let Some((i, pos)) = pos {
                scripted.push(ScriptedFill {
                    provider: i,
                    pos,
                    taker_sign: p.side.signum(),
                    rows: [l_row, events.len() - 1],
                });
                if !requoting.contains(&agent) {
                    requoting.push(agent);
                }
            }
        }

        if immediate {
            held += amp[k] * k0;
        }
        for &j in &digest_at[k] {
            if planned[j].immediate && planned[j].size >= 2 {
                held -= amp[j] * k0;
            }
            started.push((ts, amp[j]));
        }
        let post_imp = impact_at(&started, held, ts);
        let (b, a) = quote(w + post_imp);
        let post_q = (b, a, best(&mut rng), best(&mut rng));
        for agent in requoting {
            let (price, size) = match p.side {
                Side::Buy => (post_q.0, post_q.2),
                Side::Sell => (post_q.1, post_q.3),
            };
            events.push(row(t, new_id(), id(agent), EventKind::Limit, p.side, price, size, post_q));
        }
        let (price, size) = match p.side {
            Side::Buy => (post_q.0, post_q.2),
            Side::Sell => (post_q.1, post_q.3),
        };
        events.push(row(t, new_id(), QUOTE_AGENT.into(), EventKind::Limit, p.side, price, size, post_q));

        truth_orders.push(TruthOrder {
            ts_ns: t,
            trader_id: id(p.agent),
            side: p.side,
            size: p.size,
            immediate,
            kernel_start_ns: kernel_start[k].map(|s| planned[s].ts),
            pre_impact: pre_imp,
            post_impact: post_imp,
        });
    }

    let base_date = cfg.start_date;
    let mut session = Session::from_events(&cfg.stock_id, base_date, day, half, events);
    let sigma = session.sigma().unwrap_or(0.0);

    // scripted refill prices: p_{i+1} = p_i + eps sigma_D (C / i^kappa + jitter)
    let mut last_lp = vec![0.0f64; n_prov];
    for f in &scripted {
        let script = &roster.scripts[f.provider];
        let lp = if f.pos == 1 {
            (session.events[f.rows[0]].price as f64).ln()
        } else {
            let i = (f.pos - 1) as f64;
            let jitter: f64 = cfg.refill_noise * rng.sample::<f64, _>(StandardNormal);
            last_lp[f.provider] + f.taker_sign * sigma * (script.c / i.powf(script.kappa) + jitter)
        };
        last_lp[f.provider] = lp;
        let price = lp.exp().round() as i64;
        for &r in &f.rows {
            session.events[r].price = price;
        }
    }

    let truth = SessionTruth {
        key: session.key,
        volume: session.volume,
        sigma,
        metaorders: intended,
        orders: truth_orders,
        runs: roster
            .providers
            .iter()
            .zip(book.runs)
            .map(|(&a, r)| (id(a), r))
            .collect(),
    };
    (session, truth)
}

fn pick_resting(rng: &mut ChaCha8Rng, cfg: &SimConfig, book: &Book, side: Side) -> Resting {
    let mut total = 0.0;
    let mut weights: Vec<(f64, Resting)> = Vec::new();
    let mut k = 0;
    for spec in &cfg.providers {
        for _ in 0..spec.count {
            if book.prov_side[k] == side {
                weights.push((spec.weight, Resting::Provider(k)));
                total += spec.weight;
            }
            k += 1;
        }
    }
    for (i, s) in book.maker_side.iter().enumerate() {
        if *s == side {
            weights.push((cfg.market_makers.weight, Resting::Maker(i)));
            total += cfg.market_makers.weight;
        }
    }
    for (i, s) in book.lp_side.iter().enumerate() {
        if *s == side {
            weights.push((cfg.slow_providers.weight, Resting::Lp(i)));
            total += cfg.slow_providers.weight;
        }
    }
    let mut u = rng.random::<f64>() * total;
    let n = weights.len();
    for (i, (wt, r)) in weights.into_iter().enumerate() {
        if u < wt || i + 1 == n {
            return r;
        }
        u -= wt;
    }
    unreachable!("slow providers cover both sides")
}
