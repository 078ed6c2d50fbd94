use std::path::Path;

use super::RenderError;

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub aggregator: String,
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

/// Four significant digits, trailing zeros kept; scientific outside [1e-4, 1e4).
pub fn format_sig4(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0.000".into();
    }
    let sci = format!("{v:.3e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-4..4).contains(&exp) {
        format!("{:.*}", (3 - exp) as usize, v)
    } else {
        sci
    }
}

/// `method,aggregator,point,lo,hi` with shortest round-trip floats.
pub fn summary_csv(rows: &[SummaryRow]) -> Result<String, RenderError> {
    if rows.is_empty() {
        return Err(RenderError::EmptyTable);
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(["method", "aggregator", "point", "lo", "hi"]).unwrap();
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.aggregator.clone(),
            r.point.to_string(),
            r.lo.to_string(),
            r.hi.to_string(),
        ])
        .unwrap();
    }
    Ok(String::from_utf8(w.into_inner().unwrap()).unwrap())
}

pub fn summary_markdown(rows: &[SummaryRow]) -> Result<String, RenderError> {
    if rows.is_empty() {
        return Err(RenderError::EmptyTable);
    }
    let cell = |s: &str| s.replace('|', "\\|");
    let mut out = String::from("| method | aggregator | point | lo | hi |\n|---|---|---:|---:|---:|\n");
    for r in rows {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            cell(&r.method),
            cell(&r.aggregator),
            format_sig4(r.point),
            format_sig4(r.lo),
            format_sig4(r.hi)
        ));
    }
    Ok(out)
}

pub fn emit_summary_table(rows: &[SummaryRow], format: TableFormat, out: &Path) -> Result<(), RenderError> {
    let text = match format {
        TableFormat::Csv => summary_csv(rows)?,
        TableFormat::Markdown => summary_markdown(rows)?,
    };
    std::fs::write(out, text).map_err(|e| RenderError::Io {
        path: out.to_path_buf(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> SummaryRow {
        SummaryRow {
            method: "PPO".into(),
            aggregator: "Mean".into(),
            point: 0.5,
            lo: 0.4,
            hi: 0.6,
        }
    }

    #[test]
    fn csv_and_markdown() {
        assert_eq!(summary_csv(&[row()]).unwrap(), "method,aggregator,point,lo,hi\nPPO,Mean,0.5,0.4,0.6\n");
        let md = summary_markdown(&[row()]).unwrap();
        assert!(md.ends_with("| PPO | Mean | 0.5000 | 0.4000 | 0.6000 |\n"));
        assert!(matches!(summary_csv(&[]), Err(RenderError::EmptyTable)));
    }

    #[test]
    fn sig4() {
        assert_eq!(format_sig4(0.123456), "0.1235");
        assert_eq!(format_sig4(9.99996), "10.00");
        assert_eq!(format_sig4(1234.6), "1235");
        assert_eq!(format_sig4(12345.0), "1.234e4");
        assert_eq!(format_sig4(-0.0001234), "-0.0001234");
    }
}
