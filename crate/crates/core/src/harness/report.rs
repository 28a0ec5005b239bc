//! Experiment reports and their plain-text rendering.
//!
//! Stored reports are JSON documents behind a `PVRNN-REPORT <version>`
//! header; rendered tables are tab-separated with nine significant digits.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::io::{read_tagged, write_tagged};
use crate::harness::stats::{mean, sample_std, stars, welch_t};

pub const REPORT_MAGIC: &str = "PVRNN-REPORT";
pub const REPORT_VERSION: u32 = 1;

/// Base-10 with nine significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.8e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    /// One value per report quantity.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub label: String,
    pub rows: Vec<SeedRow>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Condition {
    pub fn new(label: impl Into<String>, rows: Vec<SeedRow>) -> Self {
        let width = rows.first().map_or(0, |r| r.values.len());
        let col = |j: usize| rows.iter().map(|r| r.values[j]).collect::<Vec<_>>();
        Self {
            label: label.into(),
            mean: (0..width).map(|j| mean(&col(j))).collect(),
            std: (0..width).map(|j| sample_std(&col(j))).collect(),
            rows,
        }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.values[j]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub quantity: String,
    pub a: String,
    pub b: String,
    pub t: f64,
    pub p: f64,
    pub stars: String,
}

/// A directional claim counted over seeds or models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionCheck {
    pub name: String,
    pub hits: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub quantities: Vec<String>,
    pub conditions: Vec<Condition>,
    pub tests: Vec<PairTest>,
    pub checks: Vec<DirectionCheck>,
    /// Further named scalars.
    pub extras: Vec<(String, f64)>,
}

impl ExperimentReport {
    /// Build a report with Welch tests for every pair of conditions and quantity.
    pub fn new(name: &str, quantities: Vec<String>, conditions: Vec<Condition>) -> Result<Self> {
        let mut tests = Vec::new();
        for i in 0..conditions.len() {
            for j in i + 1..conditions.len() {
                for (q, quantity) in quantities.iter().enumerate() {
                    let (a, b) = (&conditions[i], &conditions[j]);
                    if a.rows.len() < 2 || b.rows.len() < 2 {
                        continue;
                    }
                    let r = welch_t(&a.column(q), &b.column(q))?;
                    tests.push(PairTest {
                        quantity: quantity.clone(),
                        a: a.label.clone(),
                        b: b.label.clone(),
                        t: r.t,
                        p: r.p,
                        stars: stars(r.p).to_string(),
                    });
                }
            }
        }
        Ok(Self {
            name: name.to_string(),
            quantities,
            conditions,
            tests,
            checks: Vec::new(),
            extras: Vec::new(),
        })
    }

    pub fn condition(&self, label: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.label == label)
    }

    pub fn quantity_index(&self, name: &str) -> Option<usize> {
        self.quantities.iter().position(|q| q == name)
    }

    pub fn check(&self, name: &str) -> Option<&DirectionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_tagged(path, REPORT_MAGIC, REPORT_VERSION, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_tagged(path, REPORT_MAGIC, REPORT_VERSION)
    }

    /// Per-seed values of every condition.
    pub fn seed_table(&self) -> String {
        let mut out = format!("condition\tseed\t{}\n", self.quantities.join("\t"));
        for c in &self.conditions {
            for r in &c.rows {
                out.push_str(&format!("{}\t{}", c.label, r.seed));
                push_nums(&mut out, &r.values);
            }
        }
        out
    }

    /// Mean and sample standard deviation per condition.
    pub fn summary_table(&self) -> String {
        let mut out = String::from("condition\tstat");
        for q in &self.quantities {
            out.push('\t');
            out.push_str(q);
        }
        out.push('\n');
        for c in &self.conditions {
            out.push_str(&format!("{}\tmean", c.label));
            push_nums(&mut out, &c.mean);
            out.push_str(&format!("{}\tstd", c.label));
            push_nums(&mut out, &c.std);
        }
        out
    }

    pub fn tests_table(&self) -> String {
        let mut out = String::from("quantity\ta\tb\tt\tp\tsignificance\n");
        for t in &self.tests {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                t.quantity,
                t.a,
                t.b,
                fmt_num(t.t),
                fmt_num(t.p),
                t.stars
            ));
        }
        out
    }

    /// Everything as one text document.
    pub fn render(&self) -> String {
        let mut out = format!("# {}\n\n## summary\n{}", self.name, self.summary_table());
        out.push_str(&format!(
            "\n## welch tests (* p<0.05, ** p<0.01, *** p<0.001)\n{}",
            self.tests_table()
        ));
        if !self.checks.is_empty() {
            out.push_str("\n## direction checks\ncheck\thits\ttotal\n");
            for c in &self.checks {
                out.push_str(&format!("{}\t{}\t{}\n", c.name, c.hits, c.total));
            }
        }
        if !self.extras.is_empty() {
            out.push_str("\n## extras\nname\tvalue\n");
            for (k, v) in &self.extras {
                out.push_str(&format!("{k}\t{}\n", fmt_num(*v)));
            }
        }
        out.push_str(&format!("\n## per seed\n{}", self.seed_table()));
        out
    }
}

fn push_nums(out: &mut String, values: &[f64]) {
    for v in values {
        out.push('\t');
        out.push_str(&fmt_num(*v));
    }
    out.push('\n');
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> ExperimentReport {
        let rows = |off: f64| {
            (0..4)
                .map(|s| SeedRow {
                    seed: s,
                    values: vec![off + s as f64 * 1e-3, 1.0 + s as f64],
                })
                .collect::<Vec<_>>()
        };
        ExperimentReport::new(
            "demo",
            vec!["x".into(), "y".into()],
            vec![
                Condition::new("a", rows(0.0)),
                Condition::new("b", rows(1.0)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.1), "1.00000000e-1");
        assert_eq!(fmt_num(-12345.678901), "-1.23456789e4");
        assert_eq!(fmt_num(0.0), "0.00000000e0");
    }

    #[test]
    fn tests_cover_pairs_and_stars() {
        let r = report();
        assert_eq!(r.tests.len(), 2);
        assert_eq!(r.tests[0].stars, "***");
        assert_eq!(r.tests[1].p, 1.0);
        assert!(r.tests.iter().all(|t| (0.0..=1.0).contains(&t.p)));
        let text = r.render();
        assert!(text.contains("x\ta\tb\t"));
        assert!(text.contains("***"));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.report");
        let r = report();
        r.save(&path).unwrap();
        assert_eq!(ExperimentReport::load(&path).unwrap(), r);
    }
}
