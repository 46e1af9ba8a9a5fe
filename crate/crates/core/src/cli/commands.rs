use super::output::{file_digest, sha256_hex, FileDigest, OutputDir, RunManifest};
use super::{report, AnalysisConfig, Cli, CliError, Command, Preset, TapeArgs};
use crate::ecology::{classify_session, EcologySummary, ReversalMode};
use crate::impact::{
    child_impact_profile, metaorder_impact_curve, single_mo_impact, CurveOptions, ImpactCurve, PowerFit,
    ProfileOptions,
};
use crate::metaorder::{execution_profile, metaorders_csv, reconstruct, stylized_facts, Metaorder};
use crate::propagator::calibrate;
use crate::refill::{
    extract_refill_sequences, fit_providers, fit_table_csv, length_distribution, liquidity_share_vs_c,
    RefillOptions, RefillSequence,
};
use crate::shuffle::{compare_curves, shuffle_sessions};
use crate::simulator::{simulate, SimConfig};
use crate::stats::LogBins;
use crate::tape::{
    seasonality_profile, session_stats, BinaryReader, Session, SessionSplitter, TapeMeta, TapeReader,
    BINARY_MAGIC,
};
use rayon::prelude::*;
use serde_json::json;
use std::fmt::Write as _;
use std::io::{BufReader, Read};
use std::path::Path;

const DEFAULT_SEED: u64 = 7;

struct Ctx {
    command: &'static str,
    args: Vec<String>,
    config_hash: Option<String>,
    inputs: Vec<FileDigest>,
    seeds: Vec<u64>,
}

impl Ctx {
    fn manifest(self) -> RunManifest {
        RunManifest {
            command: self.command.to_string(),
            args: self.args,
            config_hash: self.config_hash,
            inputs: self.inputs,
            seeds: self.seeds,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn analysis_config(cli: &Cli) -> Result<(AnalysisConfig, String), CliError> {
    let cfg = match &cli.config {
        Some(p) => toml::from_str::<AnalysisConfig>(&read_text(p)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => AnalysisConfig::default(),
    };
    cfg.validate()?;
    let text = toml::to_string(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok((cfg, text))
}

fn curve_options(cfg: &AnalysisConfig) -> CurveOptions {
    CurveOptions {
        edges: LogBins::new(cfg.f_min, cfg.f_max, cfg.bins_per_decade),
        min_bin_count: cfg.min_bin_count,
    }
}

/// Reads a whole tape, CSV or binary, and splits it into sessions.
pub(super) fn load_tape(args: &TapeArgs) -> Result<(TapeMeta, Vec<Session>, Vec<FileDigest>), CliError> {
    let meta_path = args.meta.clone().unwrap_or_else(|| TapeMeta::sidecar_path(&args.tape));
    let meta = TapeMeta::load(&meta_path)?;
    let open = || std::fs::File::open(&args.tape).map_err(|e| CliError::data(format!("{}: {e}", args.tape.display())));
    let mut head = [0u8; 8];
    let n = open()?.read(&mut head).map_err(|e| CliError::data(e.to_string()))?;
    let binary = n == head.len() && &head == BINARY_MAGIC;
    let input = BufReader::with_capacity(1 << 20, open()?);
    let sessions: Result<Vec<Session>, _> = if binary {
        SessionSplitter::new(BinaryReader::new(input), &meta).collect()
    } else {
        SessionSplitter::new(TapeReader::new(input), &meta).collect()
    };
    let sessions: Vec<Session> = sessions?.into_iter().filter(|s| !s.empty).collect();
    if sessions.is_empty() {
        return Err(CliError::data(format!("{}: no events inside the trading windows", args.tape.display())));
    }
    let inputs = vec![file_digest(&args.tape)?, file_digest(&meta_path)?];
    Ok((meta, sessions, inputs))
}

fn metaorders_of(sessions: &[Session]) -> Vec<Metaorder> {
    sessions.par_iter().map(reconstruct).collect::<Vec<_>>().into_iter().flatten().collect()
}

/// `bin_lo,bin_hi,mean_x,mean,se,count,in_fit`, the layout `report` reads.
fn curve_csv(curve: &ImpactCurve) -> String {
    let mut out = String::from("bin_lo,bin_hi,mean_x,mean,se,count,in_fit\n");
    append_curve(&mut out, curve, None);
    out
}

fn append_curve(out: &mut String, curve: &ImpactCurve, label: Option<&str>) {
    for b in curve.bins.iter().filter(|b| b.count > 0) {
        if let Some(l) = label {
            let _ = write!(out, "{l},");
        }
        let _ = writeln!(out, "{},{},{},{},{},{},{}", b.lo, b.hi, b.mean_x, b.mean, b.se, b.count, b.in_fit);
    }
}

fn labelled_curves(key: &str, curves: &[(String, &ImpactCurve)]) -> String {
    let mut out = format!("{key},bin_lo,bin_hi,mean_x,mean,se,count,in_fit\n");
    for (label, c) in curves {
        append_curve(&mut out, c, Some(label));
    }
    out
}

fn fit_json(fit: &PowerFit) -> serde_json::Value {
    json!({
        "Y": fit.prefactor,
        "delta": fit.exponent,
        "Y_se": fit.prefactor_se(),
        "delta_se": fit.exponent_se(),
        "n_points": fit.n_points,
        "chi2": fit.chi2,
    })
}

pub(super) fn dispatch(cli: &Cli, args: Vec<String>) -> Result<RunManifest, CliError> {
    let mut ctx = Ctx {
        command: cli.command.name(),
        args,
        config_hash: None,
        inputs: Vec::new(),
        seeds: Vec::new(),
    };
    match &cli.command {
        Command::Simulate { preset, days } => return simulate_cmd(cli, ctx, *preset, *days),
        Command::Report { input } => {
            let mut out = OutputDir::create(&cli.out)?;
            ctx.inputs = report::render_all(input, &mut out)?;
            return out.finish(ctx.manifest());
        }
        _ => {}
    }

    let (cfg, cfg_text) = analysis_config(cli)?;
    ctx.config_hash = Some(sha256_hex(cfg_text.as_bytes()));
    let tape = match &cli.command {
        Command::Ingest(t)
        | Command::Metaorders(t)
        | Command::Impact(t)
        | Command::ChildProfile(t)
        | Command::SingleMo(t)
        | Command::Ecology(t)
        | Command::Refill(t) => t,
        Command::Shuffle { tape, .. } => tape,
        Command::Simulate { .. } | Command::Report { .. } => unreachable!(),
    };
    let (_meta, sessions, inputs) = load_tape(tape)?;
    ctx.inputs = inputs;
    let mut out = OutputDir::create(&cli.out)?;
    let opts = curve_options(&cfg);

    match &cli.command {
        Command::Ingest(_) => ingest(&sessions, &cfg, &mut out)?,
        Command::Metaorders(_) => {
            let ms = metaorders_of(&sessions);
            out.write("metaorders.csv", metaorders_csv(&ms).as_bytes())?;
            let facts = stylized_facts(&ms, &opts.edges);
            let mut csv = String::from("quantity,bin_lo,bin_hi,mean,sd,count\n");
            for (name, bins) in [("gap_s", &facts.gap_vs_f), ("children", &facts.count_vs_f)] {
                for b in bins.iter().filter(|b| b.count > 0) {
                    let _ = writeln!(csv, "{name},{},{},{},{},{}", b.lo, b.hi, b.mean, b.sd, b.count);
                }
            }
            for (lo, hi, d) in &facts.f_density {
                let _ = writeln!(csv, "f_density,{lo},{hi},{d},0,0");
            }
            out.write("facts.csv", csv.as_bytes())?;
            let schedule = execution_profile(&ms, 20);
            let mut csv = String::from("bin_lo,bin_hi,mean_time,mean_fraction,count\n");
            for b in &schedule.bins {
                let _ = writeln!(csv, "{},{},{},{},{}", b.lo, b.hi, b.mean_time, b.mean_fraction, b.count);
            }
            out.write("schedule.csv", csv.as_bytes())?;
            out.write_json(
                "metaorders.json",
                &json!({
                    "sessions": sessions.len(),
                    "metaorders": ms.len(),
                    "multi_child": ms.iter().filter(|m| m.n() >= 2).count(),
                    "f_mode": facts.f_mode(),
                    "schedule_max_deviation": schedule.max_diagonal_deviation(),
                    "schedule_degenerate": schedule.degenerate,
                }),
            )?;
        }
        Command::Impact(_) => {
            let ms = metaorders_of(&sessions);
            let r = metaorder_impact_curve(&ms, &opts)?;
            let fit = r.curve.fit()?;
            out.write("impact_curve.csv", curve_csv(&r.curve).as_bytes())?;
            let strata: Vec<(String, &ImpactCurve)> =
                r.strata.iter().map(|s| (format!("{}-{}", s.t_lo, s.t_hi), &s.curve)).collect();
            out.write("impact_strata.csv", labelled_curves("t_range_s", &strata).as_bytes())?;
            let strata_fits: Vec<_> = r
                .strata
                .iter()
                .map(|s| json!({"t_lo": s.t_lo, "t_hi": s.t_hi, "fit": s.curve.fit().ok().map(fit_json)}))
                .collect();
            out.write_json(
                "impact_fit.json",
                &json!({
                    "metaorders": ms.len(),
                    "excluded": r.excluded,
                    "fit": fit_json(fit),
                    "time_trend": r.trend,
                    "strata": strata_fits,
                }),
            )?;
        }
        Command::ChildProfile(_) => {
            let ms = metaorders_of(&sessions);
            let popts = ProfileOptions { i_max: cfg.profile_max_rank, ..ProfileOptions::default() };
            let p = child_impact_profile(&ms, &popts)?;
            out.write("child_profile.csv", p.to_csv().as_bytes())?;
            let gaps: Vec<f64> = ms.iter().filter_map(Metaorder::mean_gap_secs).collect();
            let mean_dt = gaps.iter().sum::<f64>() / gaps.len().max(1) as f64;
            let kernel = calibrate(&p.free, mean_dt).ok();
            out.write_json(
                "child_fit.json",
                &json!({
                    "i_max": p.i_max,
                    "free": p.free,
                    "square_root": p.square_root,
                    "no_offset": fit_json(&p.pure_power),
                    "mean_child_gap_s": mean_dt,
                    "kernel": kernel,
                }),
            )?;
        }
        Command::SingleMo(_) => {
            let seas = seasonality_profile(&sessions, cfg.seasonality_minutes);
            let r = single_mo_impact(&sessions, &seas, &opts);
            let curves = [("all".to_string(), &r.all), ("no_immediate".to_string(), &r.no_immediate)];
            out.write("single_mo.csv", labelled_curves("stratum", &curves).as_bytes())?;
            let all = r.all.fit()?;
            out.write_json(
                "single_mo.json",
                &json!({
                    "all": fit_json(all),
                    "no_immediate": r.no_immediate.fit().ok().map(fit_json),
                    "lag0_no_immediate_mean": r.lag0_no_immediate_mean,
                    "lag0_no_immediate_max_abs": r.lag0_no_immediate_max_abs,
                    "truncated": r.truncated,
                    "skipped": r.skipped,
                }),
            )?;
        }
        Command::Shuffle { shuffles, .. } => {
            let base = cli.seed.unwrap_or(DEFAULT_SEED);
            let n = shuffles.unwrap_or(cfg.shuffles);
            if n == 0 {
                return Err(CliError::Usage("--shuffles must be positive".into()));
            }
            let real_ms = metaorders_of(&sessions);
            let real = metaorder_impact_curve(&real_ms, &opts)?;
            drop(real_ms);
            let mut runs = Vec::new();
            for seed in base..base + n {
                let shuffled = shuffle_sessions(&sessions, seed);
                let syn = metaorder_impact_curve(&metaorders_of(&shuffled), &opts)?;
                let cmp = compare_curves(&real.curve, &syn.curve)?;
                if seed == base {
                    let curves = [("real".to_string(), &real.curve), ("synthetic".to_string(), &syn.curve)];
                    out.write("shuffle_curves.csv", labelled_curves("curve", &curves).as_bytes())?;
                }
                runs.push(json!({
                    "seed": seed,
                    "chi2": cmp.chi2,
                    "dof": cmp.dof,
                    "p_value": cmp.p_value,
                    "synthetic_fit": syn.curve.fit().ok().map(fit_json),
                    "bins": cmp.bins,
                }));
                ctx.seeds.push(seed);
            }
            out.write_json("shuffle.json", &json!({"real_fit": real.curve.fit().ok().map(fit_json), "runs": runs}))?;
        }
        Command::Ecology(_) => {
            let per: Vec<_> = sessions.par_iter().map(|s| classify_session(s, ReversalMode::AllOrders)).collect();
            let mut summary = EcologySummary::new(20);
            let mut csv = String::from("session,v_d,v_fast_share,n_fast_share,against_fast_share\n");
            for (s, e) in sessions.iter().zip(&per) {
                summary.push(e);
                let _ = writeln!(csv, "{},{},{},{},{}", s.key, e.v_d, e.v_fast_share, e.n_fast_share, e.against_fast_share);
            }
            out.write("ecology.csv", summary.to_csv().as_bytes())?;
            out.write("ecology_sessions.csv", csv.as_bytes())?;
            out.write_json(
                "ecology.json",
                &json!({
                    "sessions": sessions.len(),
                    "v_fast_mode": summary.v_fast.mode(),
                    "n_fast_mode": summary.n_fast.mode(),
                    "against_fast_mode": summary.against_fast.mode(),
                }),
            )?;
        }
        Command::Refill(_) => {
            let seqs: Vec<RefillSequence> =
                sessions.par_iter().map(extract_refill_sequences).collect::<Vec<_>>().into_iter().flatten().collect();
            let lengths = length_distribution(&seqs)?;
            let mut csv = String::from("length,count\n");
            for (n, c) in &lengths.histogram {
                let _ = writeln!(csv, "{n},{c}");
            }
            out.write("refill_lengths.csv", csv.as_bytes())?;
            let fits = fit_providers(&seqs, &RefillOptions::default());
            if fits.is_empty() {
                return Err(CliError::fit("no provider has enough refill sequences"));
            }
            out.write("refill_fits.csv", fit_table_csv(&fits, &cfg.provider_salt).as_bytes())?;
            let share = liquidity_share_vs_c(&fits);
            out.write_json(
                "refill.json",
                &json!({
                    "sequences": seqs.len(),
                    "length_tail": lengths.fit,
                    "providers_fitted": fits.len(),
                    "share_vs_c": share.points,
                    "spearman": share.spearman,
                }),
            )?;
        }
        Command::Simulate { .. } | Command::Report { .. } => unreachable!(),
    }
    out.finish(ctx.manifest())
}

fn ingest(sessions: &[Session], cfg: &AnalysisConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let mut csv = String::from("session,events,market_orders,volume,sigma\n");
    for s in sessions {
        let (v, sigma) = match session_stats(s) {
            Ok(x) => (x.0.to_string(), x.1.to_string()),
            Err(_) => (s.volume.to_string(), String::new()),
        };
        let _ = writeln!(csv, "{},{},{},{v},{sigma}", s.key, s.events.len(), s.market_orders().len());
    }
    out.write("sessions.csv", csv.as_bytes())?;
    let seas = seasonality_profile(sessions, cfg.seasonality_minutes);
    let mut csv = String::from("half,start_ns,end_ns,sigma,volume,volume_se,n_sessions,flagged\n");
    for b in &seas.bins {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            b.half, b.start, b.end, b.sigma, b.volume, b.volume_se, b.n_sessions, b.flagged
        );
    }
    out.write("seasonality.csv", csv.as_bytes())
}

fn simulate_cmd(cli: &Cli, mut ctx: Ctx, preset: Preset, days: Option<u32>) -> Result<RunManifest, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => {
            ctx.inputs.push(file_digest(p)?);
            SimConfig::from_toml(&read_text(p)?)?
        }
        None => match preset {
            Preset::PaperLike => SimConfig::preset_paper_like(),
            Preset::ChildProfile => SimConfig::preset_child_profile(),
        },
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = days {
        cfg.days = d;
    }
    cfg.validate()?;
    let text = cfg.to_toml();
    ctx.config_hash = Some(sha256_hex(text.as_bytes()));
    ctx.seeds.push(cfg.seed);
    let sim = simulate(&cfg)?;
    let mut out = OutputDir::create(&cli.out)?;
    out.write("config.toml", text.as_bytes())?;
    out.write_with("tape.csv", |w| sim.write_tape(w).map(|_| ()))?;
    out.write("tape.meta", sim.meta.to_text().as_bytes())?;
    out.write("ledger.json", sim.ledger.to_json().as_bytes())?;
    out.finish(ctx.manifest())
}
