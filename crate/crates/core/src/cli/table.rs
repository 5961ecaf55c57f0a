//! Box-drawing output tables and number formatting.
//!
//! Tables are byte-deterministic for identical inputs: column widths are
//! the widest cell plus one space of padding each side, cells are
//! centered with the extra space on the right. Numbers use 6 significant
//! digits, switching to scientific notation below 1e-4 and at 1e6 and
//! above (printf `%g` semantics).

use std::collections::BTreeMap;

use crate::counters::DeltaSet;
use crate::metrics::MetricReport;

/// 6-significant-digit `%g` formatting.
pub fn format_g6(v: f64) -> String {
    if !v.is_finite() {
        return "-".to_string();
    }
    if v == 0.0 {
        return "0".to_string();
    }
    // Exponent after rounding to 6 significant digits.
    let sci = format!("{:.5e}", v);
    let (_, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("numeric exponent");
    if !(-4..6).contains(&exp) {
        let (mantissa, _) = sci.split_once('e').expect("exponent present");
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, v))
    }
}

fn trim_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Undefined metrics print as `-`.
pub fn format_metric(v: Option<f64>) -> String {
    match v {
        Some(v) => format_g6(v),
        None => "-".to_string(),
    }
}

/// Render a box table. `rows` must all have `header.len()` cells.
pub fn render_box_table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let widths: Vec<usize> = widths.into_iter().map(|w| w + 2).collect();

    let mut out = String::new();
    let rule = |out: &mut String| {
        for w in &widths {
            out.push('+');
            out.push_str(&"-".repeat(*w));
        }
        out.push_str("+\n");
    };
    let line = |out: &mut String, cells: &[String]| {
        for (i, w) in widths.iter().enumerate().take(cols) {
            let cell = cells.get(i).map(String::as_str).unwrap_or("");
            let pad = w - cell.len();
            let left = pad / 2;
            out.push('|');
            out.push_str(&" ".repeat(left));
            out.push_str(cell);
            out.push_str(&" ".repeat(pad - left));
        }
        out.push_str("|\n");
    };
    rule(&mut out);
    line(&mut out, header);
    rule(&mut out);
    for row in rows {
        line(&mut out, row);
    }
    rule(&mut out);
    out
}

/// Raw event count table: one row per event, one column per CPU.
pub fn render_event_table(event_names: &[String], deltas: &DeltaSet) -> String {
    let cpus: Vec<u32> = {
        let mut set: Vec<u32> = deltas.values.keys().map(|(os, _)| *os).collect();
        set.sort_unstable();
        set.dedup();
        set
    };
    let mut header = vec!["Event".to_string()];
    header.extend(cpus.iter().map(|os| format!("core {os}")));
    let rows: Vec<Vec<String>> = event_names
        .iter()
        .map(|name| {
            let mut row = vec![name.clone()];
            for os in &cpus {
                let v = deltas
                    .values
                    .get(&(*os, name.clone()))
                    .copied()
                    .unwrap_or(0);
                row.push(v.to_string());
            }
            row
        })
        .collect();
    render_box_table(&header, &rows)
}

/// Derived metric table: one row per metric, one column per CPU.
pub fn render_metric_table(report: &MetricReport) -> String {
    let cpus: Vec<u32> = report.per_cpu.keys().copied().collect();
    let mut header = vec!["Metric".to_string()];
    header.extend(cpus.iter().map(|os| format!("core {os}")));
    let mut rows = Vec::new();
    for (i, label) in report.metric_labels.iter().enumerate() {
        let mut row = vec![label.clone()];
        for os in &cpus {
            row.push(format_metric(report.per_cpu[os].values[i]));
        }
        rows.push(row);
    }
    render_box_table(&header, &rows)
}

/// Per-core call count table for a marker region.
pub fn render_call_table(calls: &BTreeMap<u32, u64>) -> String {
    let mut header = vec!["".to_string()];
    header.extend(calls.keys().map(|os| format!("core {os}")));
    let mut row = vec!["Region calls".to_string()];
    row.extend(calls.values().map(|c| c.to_string()));
    render_box_table(&header, &[row])
}

pub fn horizontal_rule() -> String {
    "-".repeat(61)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g6_matches_printf_reference() {
        // reference strings from C printf("%.6g")
        let cases: &[(f64, &str)] = &[
            (0.0, "0"),
            (1.0, "1"),
            (0.6934934220577292, "0.693493"),
            (1.3403667984453193, "1.34037"),
            (16.4815, "16.4815"),
            (6998.71, "6998.71"),
            (313742.0, "313742"),
            (0.0130224, "0.0130224"),
            (0.00561973, "0.00561973"),
            (7.679061e-05, "7.67906e-05"),
            (0.000177944, "0.000177944"),
            (18802400.0, "1.88024e+07"),
            (1624.08, "1624.08"),
            (-2.5, "-2.5"),
            (1e-10, "1e-10"),
            (999999.4, "999999"),
            (999999.5, "1e+06"),
        ];
        for (v, want) in cases {
            assert_eq!(format_g6(*v), *want, "value {v}");
        }
    }

    #[test]
    fn undefined_prints_dash() {
        assert_eq!(format_metric(None), "-");
        assert_eq!(format_metric(Some(2.0)), "2");
    }

    #[test]
    fn box_table_layout_matches_reference() {
        // centering: floor((width - len) / 2) spaces on the left
        let header = vec!["Metric".into(), "core 0".into()];
        let rows = vec![
            vec!["Runtime [s]".into(), "7.67906e-05".into()],
            vec!["CPI".into(), "0.693493".into()],
        ];
        let table = render_box_table(&header, &rows);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], "+-------------+-------------+");
        assert_eq!(lines[1], "|   Metric    |   core 0    |");
        assert_eq!(lines[3], "| Runtime [s] | 7.67906e-05 |");
        assert_eq!(lines[4], "|     CPI     |  0.693493   |");
    }

    #[test]
    fn tables_are_deterministic() {
        let header = vec!["A".into(), "B".into()];
        let rows = vec![vec!["1".into(), "2".into()]];
        assert_eq!(
            render_box_table(&header, &rows),
            render_box_table(&header, &rows)
        );
    }
}
