//! Reference values for the shipped presets, with Monte Carlo tolerance
//! intervals sized for their replication counts.

use std::path::Path;

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::montecarlo::{Metrics, MetricsReport};

const BUNDLED: &str = include_str!("../data/goldens.csv");

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenRow {
    pub table_id: String,
    pub preset: String,
    pub estimator: EstimatorKind,
    pub metric: String,
    pub paper_value: f64,
    pub lower: f64,
    pub upper: f64,
}

impl GoldenRow {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

pub fn bundled_goldens() -> Vec<GoldenRow> {
    parse_goldens(BUNDLED.as_bytes()).expect("bundled goldens are well formed")
}

pub fn load_goldens(path: &Path) -> Result<Vec<GoldenRow>> {
    parse_goldens(std::fs::File::open(path)?)
}

fn parse_goldens<R: std::io::Read>(src: R) -> Result<Vec<GoldenRow>> {
    let mut rdr = csv::Reader::from_reader(src);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 7 {
            return Err(Error::Data(format!("goldens row {}: expected 7 fields, got {}", i + 2, rec.len())));
        }
        let num = |k: usize| {
            rec[k].parse::<f64>().map_err(|_| Error::Data(format!("goldens row {}: bad number '{}'", i + 2, &rec[k])))
        };
        let row = GoldenRow {
            table_id: rec[0].to_string(),
            preset: rec[1].to_string(),
            estimator: EstimatorKind::parse(&rec[2])?,
            metric: rec[3].to_string(),
            paper_value: num(4)?,
            lower: num(5)?,
            upper: num(6)?,
        };
        if !Metrics::NAMES.contains(&row.metric.as_str()) {
            return Err(Error::Data(format!("goldens row {}: unknown metric '{}'", i + 2, row.metric)));
        }
        out.push(row);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenCheck {
    pub description: String,
    pub passed: bool,
}

const BIAS_METRICS: [&str; 2] = ["ABias2_beta1", "Bias2_beta2"];

/// Interval checks for every row matching the report's scenario, plus the
/// oracle ≤ SIMEX < RC < average < naive bias ranking wherever the reference
/// values themselves are ranked that way.
pub fn check_goldens(report: &MetricsReport, goldens: &[GoldenRow]) -> Vec<GoldenCheck> {
    let rows: Vec<&GoldenRow> = goldens.iter().filter(|g| g.preset == report.scenario).collect();
    let mut out = Vec::new();
    for g in &rows {
        let (passed, description) = match report.value(g.estimator, &g.metric) {
            Some(v) => (
                g.contains(v),
                format!("{} {} = {v:.4} in [{:.4}, {:.4}]", g.estimator, g.metric, g.lower, g.upper),
            ),
            None => (false, format!("{} {} missing from report", g.estimator, g.metric)),
        };
        out.push(GoldenCheck { description, passed });
    }
    for metric in BIAS_METRICS {
        let reference = |k: EstimatorKind| rows.iter().find(|g| g.estimator == k && g.metric == metric).map(|g| g.paper_value);
        for pair in EstimatorKind::ALL.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let weak = a == EstimatorKind::Oracle;
            let ordered = |x: f64, y: f64| if weak { x <= y } else { x < y };
            let (Some(ra), Some(rb)) = (reference(a), reference(b)) else { continue };
            if !ordered(ra, rb) {
                continue;
            }
            let rel = if weak { "<=" } else { "<" };
            let check = match (report.value(a, metric), report.value(b, metric)) {
                (Some(va), Some(vb)) => GoldenCheck {
                    passed: ordered(va, vb),
                    description: format!("{metric}: {a} ({va:.4}) {rel} {b} ({vb:.4})"),
                },
                _ => GoldenCheck { passed: false, description: format!("{metric}: {a} or {b} missing from report") },
            };
            out.push(check);
        }
    }
    out
}
