//! The command-line surface: exit codes, manifests, reproducibility.

use dsqrt_core::cli::{run, RunManifest, EXIT_DATA, EXIT_FIT, EXIT_OK, EXIT_USAGE};
use dsqrt_core::simulator::SimConfig;
use std::path::Path;

fn dsqrt(args: &[&str]) -> i32 {
    run(std::iter::once("dsqrt").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn manifest(dir: &Path, command: &str) -> RunManifest {
    let text = std::fs::read_to_string(dir.join(format!("{command}.manifest.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn simulate_analyse_report() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, res, fig) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("res"), tmp.path().join("fig"));
    for dir in [&a, &b] {
        assert_eq!(dsqrt(&["simulate", "--preset", "paper-like", "--days", "6", "--seed", "3", "-o", p(dir)]), EXIT_OK);
    }
    // same inputs, same bytes
    let (ma, mb) = (manifest(&a, "simulate"), manifest(&b, "simulate"));
    assert_eq!(ma.outputs, mb.outputs);
    assert_eq!(ma.seeds, vec![3]);
    assert!(ma.config_hash.is_some());
    assert!(ma.outputs.iter().any(|o| o.path == "tape.csv"));
    assert_eq!(std::fs::read(a.join("tape.csv")).unwrap(), std::fs::read(b.join("tape.csv")).unwrap());

    let tape = a.join("tape.csv");
    for cmd in ["ingest", "metaorders", "impact", "child-profile", "single-mo", "ecology", "refill"] {
        assert_eq!(dsqrt(&[cmd, p(&tape), "-o", p(&res)]), EXIT_OK, "{cmd}");
        let m = manifest(&res, cmd);
        assert_eq!(m.inputs.len(), 2, "{cmd}");
        assert!(!m.outputs.is_empty(), "{cmd}");
    }
    assert_eq!(dsqrt(&["shuffle", p(&tape), "--shuffles", "2", "--seed", "11", "-o", p(&res)]), EXIT_OK);
    assert_eq!(manifest(&res, "shuffle").seeds, vec![11, 12]);
    let before = std::fs::read(res.join("impact_fit.json")).unwrap();
    assert_eq!(dsqrt(&["impact", p(&tape), "--jobs", "1", "-o", p(&res)]), EXIT_OK);
    assert_eq!(before, std::fs::read(res.join("impact_fit.json")).unwrap());

    assert_eq!(dsqrt(&["report", p(&res), "-o", p(&fig)]), EXIT_OK);
    for n in 2..=9 {
        let found = std::fs::read_dir(&fig)
            .unwrap()
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|f| f.starts_with(&format!("fig{n}_")))
            .count();
        assert_eq!(found, 2, "figure {n}");
    }
    let svg = std::fs::read_to_string(fig.join("fig2_impact.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<circle"));
    // no stray temporary files
    assert!(std::fs::read_dir(&res).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(dsqrt(&["impact", "--bogus"]), EXIT_USAGE);
    assert_eq!(dsqrt(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(dsqrt(&["impact", p(&tmp.path().join("missing.csv")), "-o", p(&out)]), EXIT_DATA);

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "spread_ticks = 3\n").unwrap();
    assert_eq!(dsqrt(&["simulate", "--config", p(&bad), "-o", p(&out)]), EXIT_USAGE);
    let bad_analysis = tmp.path().join("analysis.toml");
    std::fs::write(&bad_analysis, "bins_per_decade = 0\n").unwrap();
    assert_eq!(dsqrt(&["impact", "x.csv", "--config", p(&bad_analysis), "-o", p(&out)]), EXIT_USAGE);

    // a tape without split orders has no child profile to fit
    let mut cfg = SimConfig::preset_paper_like();
    cfg.days = 1;
    cfg.slow.count = 0;
    let cfg_path = tmp.path().join("sim.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).unwrap();
    let sim = tmp.path().join("sim");
    assert_eq!(dsqrt(&["simulate", "--config", p(&cfg_path), "-o", p(&sim)]), EXIT_OK);
    assert_eq!(manifest(&sim, "simulate").inputs.len(), 1);
    assert_eq!(dsqrt(&["child-profile", p(&sim.join("tape.csv")), "-o", p(&out)]), EXIT_FIT);

    // a malformed tape is a data error
    let broken = tmp.path().join("broken.csv");
    std::fs::write(&broken, "not,a,tape\n1,2\n").unwrap();
    std::fs::copy(sim.join("tape.meta"), tmp.path().join("broken.meta")).unwrap();
    assert_eq!(dsqrt(&["ingest", p(&broken), "-o", p(&out)]), EXIT_DATA);
}

#[test]
fn preset_tape_gives_square_root_impact() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(dsqrt(&["simulate", "--preset", "paper-like", "--seed", "7", "-o", p(&out)]), EXIT_OK);
    assert_eq!(dsqrt(&["impact", p(&out.join("tape.csv")), "-o", p(&out)]), EXIT_OK);
    let fit: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("impact_fit.json")).unwrap()).unwrap();
    let delta = fit["fit"]["delta"].as_f64().unwrap();
    assert!((0.45..=0.55).contains(&delta), "{delta}");
}
