//! Report rendering as JSON, CSV or a fixed-width text table.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EvalError, Report};

const BASELINES_JSON: &str = include_str!("../../data/baselines.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Table,
}

impl ReportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Table => "txt",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "table" | "text" | "table-text" | "txt" => Ok(ReportFormat::Table),
            _ => Err(EvalError::UnknownFormat(s.to_string())),
        }
    }
}

/// A published reference row shown next to a run's numbers. Values are kept
/// as the published text so they render with their original precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub method: String,
    pub dtg: String,
    pub sr: String,
    pub spl: String,
    pub note: String,
}

impl Baseline {
    /// Numeric `(dtg, sr, spl)`.
    pub fn values(&self) -> (f64, f64, f64) {
        let num = |s: &str| s.parse().expect("validated when loaded");
        (num(&self.dtg), num(&self.sr), num(&self.spl))
    }
}

#[derive(Deserialize)]
struct BaselineEntry {
    dtg: String,
    sr: String,
    spl: String,
    #[serde(default)]
    note: String,
}

/// Parses a baseline file: a JSON object mapping method name to `{dtg, sr, spl}`.
pub fn parse_baselines(text: &str) -> Result<Vec<Baseline>, EvalError> {
    let map: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(text).map_err(|e| EvalError::Baselines(e.to_string()))?;
    map.into_iter()
        .map(|(method, value)| {
            let entry: BaselineEntry =
                serde_json::from_value(value).map_err(|e| EvalError::Baselines(e.to_string()))?;
            for text in [&entry.dtg, &entry.sr, &entry.spl] {
                if text.parse::<f64>().map_or(true, |v| !v.is_finite()) {
                    return Err(EvalError::Baselines(format!("{method}: {text:?} is not a number")));
                }
            }
            Ok(Baseline {
                method,
                dtg: entry.dtg,
                sr: entry.sr,
                spl: entry.spl,
                note: entry.note,
            })
        })
        .collect()
}

/// Baseline rows shipped with the crate, in file order.
pub fn bundled_baselines() -> Vec<Baseline> {
    parse_baselines(BASELINES_JSON).expect("bundled baseline file is valid")
}

#[derive(Serialize)]
struct JsonReport<'a> {
    #[serde(flatten)]
    report: &'a Report,
    #[serde(skip_serializing_if = "Option::is_none")]
    published_baselines: Option<&'a [Baseline]>,
}

pub fn emit_report(
    report: &Report,
    format: ReportFormat,
    baselines: Option<&[Baseline]>,
) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&JsonReport {
                report,
                published_baselines: baselines,
            })
            .expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut s = String::from("episode_id,dtg,success,shortest_path_length,path_length,spl_term\n");
            for e in &report.per_episode {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    csv_field(&e.episode_id),
                    e.dtg,
                    u8::from(e.success),
                    e.shortest_path_length,
                    e.path_length,
                    e.spl_term
                );
            }
            // summary row: dtg column holds the mean, success holds SR %, spl_term holds SPL %
            let _ = writeln!(s, "summary,{},{},,,{}", report.dtg_mean, report.sr, report.spl);
            if let Some(rows) = baselines {
                for b in rows {
                    let _ = writeln!(
                        s,
                        "{},{},{},,,{}",
                        csv_field(&format!("published:{}", b.method)),
                        b.dtg,
                        b.sr,
                        b.spl
                    );
                }
            }
            s
        }
        ReportFormat::Table => {
            let mut s = String::new();
            let _ = writeln!(s, "{:<34} {:>9} {:>8} {:>8}", "Method", "DTG (m)", "SR (%)", "SPL (%)");
            let _ = writeln!(s, "{}", "-".repeat(62));
            let label = format!("This run (N={})", report.n_episodes);
            let _ = writeln!(
                s,
                "{:<34} {:>9.3} {:>8.1} {:>8.1}",
                label, report.dtg_mean, report.sr, report.spl
            );
            if let Some(rows) = baselines {
                let _ = writeln!(s, "{}", "-".repeat(62));
                for b in rows {
                    let label = format!("{} [published]", b.method);
                    let _ = writeln!(
                        s,
                        "{:<34} {:>9} {:>8} {:>8}",
                        label,
                        b.dtg,
                        b.sr,
                        b.spl
                    );
                }
                let _ = writeln!(s, "Published rows are reported numbers for context, not reproduced here.");
            }
            s
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
