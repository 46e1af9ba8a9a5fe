//! Figure analogues from the CSV files of earlier commands. Each figure is
//! written twice: the data it plots (`figN_*.csv`) and an SVG rendering.

use super::output::{file_digest, FileDigest, OutputDir};
use super::svg::{render, Chart, Series, Style};
use super::CliError;
use std::collections::BTreeMap;
use std::path::Path;

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    raw: String,
}

impl Table {
    fn read(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let mut lines = raw.lines();
        let header: Vec<String> = lines.next().unwrap_or("").split(',').map(str::to_string).collect();
        let rows: Vec<Vec<String>> = lines
            .filter(|l| !l.is_empty())
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect();
        if rows.iter().any(|r| r.len() != header.len()) {
            return Err(CliError::data(format!("{}: ragged rows", path.display())));
        }
        Ok(Self { header, rows, raw })
    }

    fn col(&self, name: &str) -> Result<usize, CliError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::data(format!("missing column {name}")))
    }

    fn nums(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let c = self.col(name)?;
        self.rows
            .iter()
            .map(|r| r[c].parse::<f64>().map_err(|_| CliError::data(format!("column {name}: not a number: {}", r[c]))))
            .collect()
    }

    /// Rows grouped by the value of column `key`, in order of first appearance.
    fn groups(&self, key: &str) -> Result<Vec<(String, Table)>, CliError> {
        let c = self.col(key)?;
        let mut order: Vec<String> = Vec::new();
        let mut by: BTreeMap<String, Vec<Vec<String>>> = BTreeMap::new();
        for r in &self.rows {
            if !by.contains_key(&r[c]) {
                order.push(r[c].clone());
            }
            by.entry(r[c].clone()).or_default().push(r.clone());
        }
        Ok(order
            .into_iter()
            .map(|k| {
                let rows = by.remove(&k).unwrap_or_default();
                (k, Table { header: self.header.clone(), rows, raw: String::new() })
            })
            .collect())
    }
}

fn curve_series(label: &str, t: &Table, fitted_only: bool) -> Result<Series, CliError> {
    let (x, y, se) = (t.nums("mean_x")?, t.nums("mean")?, t.nums("se")?);
    let keep: Vec<bool> = match (fitted_only, t.col("in_fit")) {
        (true, Ok(c)) => t.rows.iter().map(|r| r[c] == "true").collect(),
        _ => vec![true; x.len()],
    };
    let mut pts = Vec::new();
    let mut errs = Vec::new();
    for i in 0..x.len() {
        if keep[i] {
            pts.push((x[i], y[i]));
            errs.push(se[i]);
        }
    }
    Ok(Series::new(label, pts, Style::Markers).with_errors(errs))
}

fn chart(title: &str, x: &str, y: &str, log: (bool, bool), series: Vec<Series>) -> Chart {
    Chart {
        title: title.into(),
        x_label: x.into(),
        y_label: y.into(),
        log_x: log.0,
        log_y: log.1,
        series,
    }
}

type Builder = fn(&Path) -> Result<(Table, Chart), CliError>;

fn impact(dir: &Path) -> Result<(Table, Chart), CliError> {
    let t = Table::read(&dir.join("impact_curve.csv"))?;
    let mut series = vec![curve_series("all metaorders", &t, true)?];
    if let Ok(strata) = Table::read(&dir.join("impact_strata.csv")) {
        for (label, g) in strata.groups("t_range_s")? {
            let mut s = curve_series(&format!("T in {label} s"), &g, true)?;
            s.style = Style::Line;
            s.errors = None;
            series.push(s);
        }
    }
    let c = chart("Metaorder impact", "Q / V_D", "I / sigma_D", (true, true), series);
    Ok((t, c))
}

fn schedule(dir: &Path) -> Result<(Table, Chart), CliError> {
    let t = Table::read(&dir.join("schedule.csv"))?;
    let pts: Vec<(f64, f64)> = t.nums("mean_time")?.into_iter().zip(t.nums("mean_fraction")?).collect();
    let series = vec![
        Series::new("executed fraction", pts, Style::Markers),
        Series::new("constant rate", vec![(0.0, 0.0), (1.0, 1.0)], Style::Line),
    ];
    let c = chart("Execution schedule", "rescaled time", "executed fraction", (false, false), series);
    Ok((t, c))
}

fn child_profile(dir: &Path) -> Result<(Table, Chart), CliError> {
    let t = Table::read(&dir.join("child_profile.csv"))?;
    let pts: Vec<(f64, f64)> = t.nums("rank")?.into_iter().zip(t.nums("mean")?).collect();
    let series = vec![Series::new("mean price path", pts, Style::Markers).with_errors(t.nums("se")?)];
    let c = chart("Impact along the children", "child rank i", "impact / sqrt(q / V_D)", (true, true), series);
    Ok((t, c))
}

fn grouped_curves(file: &str, key: &str, title: &str, x: &str, dir: &Path) -> Result<(Table, Chart), CliError> {
    let t = Table::read(&dir.join(file))?;
    let series = t
        .groups(key)?
        .iter()
        .map(|(label, g)| curve_series(label, g, false))
        .collect::<Result<Vec<_>, _>>()?;
    let c = chart(title, x, "impact / sigma", (true, true), series);
    Ok((t, c))
}

fn single_mo(dir: &Path) -> Result<(Table, Chart), CliError> {
    grouped_curves("single_mo.csv", "stratum", "Single market-order impact", "q / V_bin", dir)
}

fn shuffle(dir: &Path) -> Result<(Table, Chart), CliError> {
    grouped_curves("shuffle_curves.csv", "curve", "Real and shuffled metaorders", "Q / V_D", dir)
}

fn ecology(dir: &Path) -> Result<(Table, Chart), CliError> {
    let t = Table::read(&dir.join("ecology.csv"))?;
    let (lo, hi) = (t.nums("bin_lo")?, t.nums("bin_hi")?);
    let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let series = ["v_fast", "n_fast", "against_fast"]
        .iter()
        .map(|name| Ok(Series::new(name, mid.iter().cloned().zip(t.nums(name)?).collect(), Style::Line)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let c = chart("Fast-trader shares across sessions", "share", "sessions", (false, false), series);
    Ok((t, c))
}

fn refill_lengths(dir: &Path) -> Result<(Table, Chart), CliError> {
    let t = Table::read(&dir.join("refill_lengths.csv"))?;
    let (n, c) = (t.nums("length")?, t.nums("count")?);
    let total: f64 = c.iter().sum();
    // complementary cumulative distribution
    let mut above = total;
    let mut pts = Vec::new();
    for (x, k) in n.iter().zip(&c) {
        pts.push((*x, above / total));
        above -= k;
    }
    let series = vec![Series::new("P(length >= n)", pts, Style::Markers)];
    let ch = chart("Refill sequence lengths", "n", "survival", (true, true), series);
    Ok((t, ch))
}

fn liquidity_share(dir: &Path) -> Result<(Table, Chart), CliError> {
    let t = Table::read(&dir.join("refill_fits.csv"))?;
    let pts: Vec<(f64, f64)> = t.nums("C")?.into_iter().zip(t.nums("liq_share")?).collect();
    let series = vec![Series::new("providers", pts, Style::Markers)];
    let c = chart("Liquidity share against refill strength", "C", "liquidity share", (true, false), series);
    Ok((t, c))
}

const FIGURES: [(&str, &str, Builder); 8] = [
    ("fig2_impact", "impact_curve.csv", impact),
    ("fig3_schedule", "schedule.csv", schedule),
    ("fig4_child_profile", "child_profile.csv", child_profile),
    ("fig5_single_mo", "single_mo.csv", single_mo),
    ("fig6_shuffle", "shuffle_curves.csv", shuffle),
    ("fig7_ecology", "ecology.csv", ecology),
    ("fig8_refill_lengths", "refill_lengths.csv", refill_lengths),
    ("fig9_liquidity_share", "refill_fits.csv", liquidity_share),
];

/// Renders every figure whose source file exists in `input`. Returns the
/// digests of the files read.
pub fn render_all(input: &Path, out: &mut OutputDir) -> Result<Vec<FileDigest>, CliError> {
    if !input.is_dir() {
        return Err(CliError::data(format!("{}: not a directory", input.display())));
    }
    let mut inputs = Vec::new();
    for (name, source, build) in FIGURES {
        let path = input.join(source);
        if !path.exists() {
            continue;
        }
        let (table, chart) = build(input)?;
        out.write(&format!("{name}.csv"), table.raw.as_bytes())?;
        out.write(&format!("{name}.svg"), render(&chart).as_bytes())?;
        inputs.push(file_digest(&path)?);
    }
    if inputs.is_empty() {
        return Err(CliError::data(format!("{}: no outputs of earlier commands found", input.display())));
    }
    Ok(inputs)
}
