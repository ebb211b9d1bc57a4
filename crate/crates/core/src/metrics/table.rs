//! Aligned plain-text tables.

use std::fmt;

use crate::decide::Quadrant;

use super::eval::EvalReport;
use super::intervene::InterventionReport;
use super::route::{IaaReport, QuadrantReport};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        self.rows.push(row.into_iter().map(Into::into).collect());
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cols = self.headers.len();
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate().take(cols) {
                widths[i] = widths[i].max(cell.chars().count());
            }
        }
        let line = |f: &mut fmt::Formatter<'_>, cells: &[String]| -> fmt::Result {
            let parts: Vec<String> = (0..cols)
                .map(|i| {
                    let cell = cells.get(i).map(String::as_str).unwrap_or("");
                    if i == 0 {
                        format!("{cell:<w$}", w = widths[i])
                    } else {
                        format!("{cell:>w$}", w = widths[i])
                    }
                })
                .collect();
            writeln!(f, "{}", parts.join("  ").trim_end())
        };
        line(f, &self.headers)?;
        let total: usize = widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1);
        writeln!(f, "{}", "-".repeat(total))?;
        for row in &self.rows {
            line(f, row)?;
        }
        Ok(())
    }
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

fn p_value(p: f64) -> String {
    if p < 1e-3 {
        "<.001".into()
    } else {
        format!("{p:.3}")
    }
}

pub fn eval_table(r: &EvalReport) -> Table {
    let mut t = Table::new(["metric", "value", "p"]);
    t.push(["n".to_string(), r.n.to_string(), String::new()]);
    t.push(["Acc (%)".to_string(), pct(r.acc), String::new()]);
    t.push(["rho_epi".to_string(), format!("{:.3}", r.rho_epi.rho), p_value(r.rho_epi.p)]);
    for c in &r.rho_ale {
        let (rho, p) = match c.correlation {
            Some(c) => (format!("{:.3}", c.rho), p_value(c.p)),
            None => ("n/a".into(), String::new()),
        };
        t.push([format!("rho_ale[{}]", c.concept), rho, p]);
    }
    t.push(["rho_ale (macro)".to_string(), format!("{:.3}", r.rho_ale_macro), p_value(r.rho_ale_macro_p)]);
    t.push(["ECE".to_string(), format!("{:.4}", r.ece), String::new()]);
    t.push(["mean width".to_string(), format!("{:.4}", r.mean_interval_width), String::new()]);
    t
}

pub fn intervention_table(reports: &[InterventionReport]) -> Table {
    let mut t = Table::new(["strategy", "m", "Acc before (%)", "Acc after (%)", "dAcc (%)"]);
    for r in reports {
        t.push([
            r.strategy.to_string(),
            r.m.to_string(),
            pct(r.acc_original),
            pct(r.acc_corrected),
            format!("{:+.1}", 100.0 * r.delta_acc),
        ]);
    }
    t
}

pub fn quadrant_table(r: &QuadrantReport) -> Table {
    let mut t = Table::new(["quadrant", "epi", "ale", "count", "Acc (%)"]);
    for row in &r.rows {
        let (epi, ale) = match row.quadrant {
            Quadrant::Trust => ("low", "low"),
            Quadrant::Data => ("high", "low"),
            Quadrant::Review => ("low", "high"),
            Quadrant::Abstain => ("high", "high"),
        };
        t.push([
            row.quadrant.to_string(),
            epi.to_string(),
            ale.to_string(),
            row.count.to_string(),
            row.accuracy.map(pct).unwrap_or_else(|| "-".into()),
        ]);
    }
    t
}

pub fn iaa_table(r: &IaaReport) -> Table {
    let mut t = Table::new(["concept", "kappa", "alpha", "note"]);
    for c in &r.per_concept {
        t.push([
            c.concept.clone(),
            format!("{:.3}", c.kappa.value),
            format!("{:.3}", c.alpha.value),
            if c.flagged { "constant".into() } else { String::new() },
        ]);
    }
    t.push(["macro".to_string(), format!("{:.3}", r.macro_kappa), format!("{:.3}", r.macro_alpha), String::new()]);
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_align() {
        let mut t = Table::new(["name", "value"]);
        t.push(["a", "1.0"]);
        t.push(["longer", "10.25"]);
        let s = t.to_string();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "name    value");
        assert_eq!(lines[1], "-------------");
        assert_eq!(lines[2], "a         1.0");
        assert_eq!(lines[3], "longer  10.25");
    }
}
