//! Report rows, CSV round-tripping, and the grouped ASRD bar chart.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluated (dataset, attack, ε, feature source, detector) cell.
/// Percentages are stored at full precision; rounding happens at emission.
/// `None` metric fields are the explicit absent markers — a cell whose
/// detector could not be scored never reports a fake zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub dataset: String,
    pub attack: String,
    /// l∞ budget in pixel scale; None for the unbudgeted l2 methods.
    pub epsilon: Option<f64>,
    /// Feature source: "bb" or "wb".
    pub source: String,
    /// Detector kind: "lr" or "rf".
    pub detector: String,
    /// Attack success rate in percent; None only if the cell failed outright.
    pub asr: Option<f64>,
    /// Detection F1 in percent.
    pub f1: Option<f64>,
    /// Detector false-negative rate in percent.
    pub fnr: Option<f64>,
    /// FNR·ASR in percent.
    pub asrd: Option<f64>,
    pub n_samples: usize,
    pub seed: u64,
    /// Failure reason or caveat; carried in cell caches, not in the CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Clean/adversarial pairs each cell was budgeted; recorded in the CSV
    /// header comment.
    pub pairs_budget: usize,
    pub rows: Vec<EvalRow>,
}

pub const CSV_HEADER: &str = "dataset,attack,epsilon,source,detector,asr,f1,fnr,asrd,n_samples,seed";

/// Round half-up to two decimals (0.125 → 0.13). Emission-time only.
pub fn round2(x: f64) -> f64 {
    (x * 100.0 + 0.5).floor() / 100.0
}

fn fmt_metric(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:.2}", round2(x)),
        None => "*".to_string(),
    }
}

pub(crate) fn fmt_epsilon(eps: Option<f64>) -> String {
    match eps {
        Some(e) => format!("{e:.6}"),
        None => "-".to_string(),
    }
}

pub fn csv_string(report: &EvalReport) -> String {
    let mut out = format!("# pairs_budget={}\n{CSV_HEADER}\n", report.pairs_budget);
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.dataset,
            r.attack,
            fmt_epsilon(r.epsilon),
            r.source,
            r.detector,
            fmt_metric(r.asr),
            fmt_metric(r.f1),
            fmt_metric(r.fnr),
            fmt_metric(r.asrd),
            r.n_samples,
            r.seed,
        ));
    }
    out
}

pub fn emit_csv(report: &EvalReport, path: &Path) -> Result<()> {
    if report.rows.is_empty() {
        return Err(Error::contract("refusing to emit an empty report"));
    }
    std::fs::write(path, csv_string(report))?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<EvalReport> {
    let mut pairs_budget = 0usize;
    let mut saw_header = false;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(v) = comment.trim().strip_prefix("pairs_budget=") {
                pairs_budget = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::format(format!("line {}: bad pairs_budget", lineno + 1)))?;
            }
            continue;
        }
        if !saw_header {
            if line != CSV_HEADER {
                return Err(Error::format(format!(
                    "line {}: header {line:?} does not match the report schema",
                    lineno + 1
                )));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::format(format!(
                "line {}: expected 11 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let metric = |s: &str| -> Result<Option<f64>> {
            if s == "*" {
                return Ok(None);
            }
            s.parse::<f64>()
                .map(Some)
                .map_err(|_| Error::format(format!("line {}: bad number {s:?}", lineno + 1)))
        };
        let epsilon = if fields[2] == "-" {
            None
        } else {
            Some(fields[2].parse::<f64>().map_err(|_| {
                Error::format(format!("line {}: bad epsilon {:?}", lineno + 1, fields[2]))
            })?)
        };
        rows.push(EvalRow {
            dataset: fields[0].to_string(),
            attack: fields[1].to_string(),
            epsilon,
            source: fields[3].to_string(),
            detector: fields[4].to_string(),
            asr: metric(fields[5])?,
            f1: metric(fields[6])?,
            fnr: metric(fields[7])?,
            asrd: metric(fields[8])?,
            n_samples: fields[9]
                .parse()
                .map_err(|_| Error::format(format!("line {}: bad n_samples", lineno + 1)))?,
            seed: fields[10]
                .parse()
                .map_err(|_| Error::format(format!("line {}: bad seed", lineno + 1)))?,
            note: None,
        });
    }
    if !saw_header {
        return Err(Error::format("report text holds no header line"));
    }
    Ok(EvalReport { pairs_budget, rows })
}

/// Field a bar chart groups its x axis by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Dataset,
    Attack,
    Epsilon,
    Source,
    Detector,
}

impl GroupBy {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "dataset" => GroupBy::Dataset,
            "attack" => GroupBy::Attack,
            "epsilon" => GroupBy::Epsilon,
            "source" => GroupBy::Source,
            "detector" => GroupBy::Detector,
            other => {
                return Err(Error::config(format!(
                    "unknown grouping '{other}'; valid: dataset, attack, epsilon, source, detector"
                )))
            }
        })
    }

    fn field(&self, row: &EvalRow) -> String {
        match self {
            GroupBy::Dataset => row.dataset.clone(),
            GroupBy::Attack => row.attack.clone(),
            GroupBy::Epsilon => fmt_epsilon(row.epsilon),
            GroupBy::Source => row.source.clone(),
            GroupBy::Detector => row.detector.clone(),
        }
    }
}

const PLOT_W_PER_SLOT: f64 = 22.0;
const PLOT_H: f64 = 240.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOT: f64 = 56.0;
const GROUP_GAP: f64 = 26.0;
const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#9c755f",
];

/// Grouped bar chart of ASRD percentages: one x-axis group per distinct
/// `group_by` value, one colored series per distinct combination of the
/// remaining identity fields that actually vary in the report. Rows without
/// an ASRD value are skipped; a group in which nothing is plottable is an
/// error, as is an empty report.
pub fn svg_string(report: &EvalReport, group_by: GroupBy) -> Result<String> {
    if report.rows.is_empty() {
        return Err(Error::contract("cannot chart an empty report"));
    }
    let all: [GroupBy; 5] =
        [GroupBy::Dataset, GroupBy::Attack, GroupBy::Epsilon, GroupBy::Source, GroupBy::Detector];
    // series = the non-grouped fields that vary across rows
    let varying: Vec<GroupBy> = all
        .iter()
        .copied()
        .filter(|g| *g != group_by)
        .filter(|g| {
            let mut values: Vec<String> = report.rows.iter().map(|r| g.field(r)).collect();
            values.sort();
            values.dedup();
            values.len() > 1
        })
        .collect();
    let series_label = |row: &EvalRow| -> String {
        if varying.is_empty() {
            "asrd".to_string()
        } else {
            varying.iter().map(|g| g.field(row)).collect::<Vec<_>>().join("/")
        }
    };

    let mut groups: Vec<String> = Vec::new();
    let mut series: Vec<String> = Vec::new();
    for row in &report.rows {
        let g = group_by.field(row);
        if !groups.contains(&g) {
            groups.push(g);
        }
        let s = series_label(row);
        if !series.contains(&s) {
            series.push(s);
        }
    }

    let slots = series.len().max(1);
    let group_w = slots as f64 * PLOT_W_PER_SLOT;
    let legend_w = 24.0 + 8.0 * series.iter().map(|s| s.len()).max().unwrap_or(4) as f64;
    let width = MARGIN_L + groups.len() as f64 * (group_w + GROUP_GAP) + 30.0 + legend_w;
    let height = MARGIN_TOP + PLOT_H + MARGIN_BOT;
    let base_y = MARGIN_TOP + PLOT_H;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{width:.0}\" height=\"{height:.0}\" fill=\"white\"/>\n"
    ));
    // y axis: 0..100 percent with ticks every 25
    for tick in (0..=4).map(|t| t as f64 * 25.0) {
        let y = base_y - tick / 100.0 * PLOT_H;
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#ddd\"/>\n",
            width - legend_w - 20.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{tick:.0}</text>\n",
            MARGIN_L - 6.0,
            y + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{:.2}\" transform=\"rotate(-90 14 {:.2})\" text-anchor=\"middle\">ASRD (%)</text>\n",
        MARGIN_TOP + PLOT_H / 2.0,
        MARGIN_TOP + PLOT_H / 2.0
    ));

    let mut drew_any_group;
    for (gi, gname) in groups.iter().enumerate() {
        let gx = MARGIN_L + GROUP_GAP / 2.0 + gi as f64 * (group_w + GROUP_GAP);
        drew_any_group = false;
        for row in report.rows.iter().filter(|r| &group_by.field(r) == gname) {
            let Some(asrd) = row.asrd else { continue };
            let si = series.iter().position(|s| *s == series_label(row)).unwrap();
            let h = (asrd.clamp(0.0, 100.0) / 100.0) * PLOT_H;
            let x = gx + si as f64 * PLOT_W_PER_SLOT;
            let y = base_y - h;
            svg.push_str(&format!(
                "<rect class=\"bar\" x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{h:.2}\" \
                 fill=\"{}\"><title>{} {}: {:.2}</title></rect>\n",
                PLOT_W_PER_SLOT - 4.0,
                PALETTE[si % PALETTE.len()],
                gname,
                series[si],
                round2(asrd),
            ));
            drew_any_group = true;
        }
        if !drew_any_group {
            return Err(Error::contract(format!("group {gname:?} has no plottable ASRD values")));
        }
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{gname}</text>\n",
            gx + group_w / 2.0,
            base_y + 16.0
        ));
    }
    // axis line and legend
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{base_y:.2}\" x2=\"{:.2}\" y2=\"{base_y:.2}\" stroke=\"#333\"/>\n",
        width - legend_w - 20.0
    ));
    let lx = width - legend_w;
    for (si, sname) in series.iter().enumerate() {
        let y = MARGIN_TOP + si as f64 * 18.0;
        svg.push_str(&format!(
            "<rect x=\"{lx:.2}\" y=\"{y:.2}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
            PALETTE[si % PALETTE.len()]
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\">{sname}</text>\n",
            lx + 16.0,
            y + 10.0
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_svg_bars(report: &EvalReport, group_by: GroupBy, path: &Path) -> Result<()> {
    let svg = svg_string(report, group_by)?;
    std::fs::write(path, svg)?;
    Ok(())
}
