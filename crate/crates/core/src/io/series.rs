//! Record series as CSV.
//!
//! `series.csv`: `t, energy_defect`, then the direction-reduced columns.
//! `directions.csv`: `t, direction`, then the same columns per direction.
//! Floats use 17 significant digits, so parsing reproduces them exactly.

use std::io::Write;

use crate::config::ModelConfig;
use crate::diagnostics::{DiagnosticsRecord, DirectionFunctionals};

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Streams records to a CSV sink.
pub struct SeriesWriter<W: Write> {
    out: W,
    columns: Vec<String>,
    per_direction: bool,
}

impl<W: Write> SeriesWriter<W> {
    pub fn new(out: W, config: &ModelConfig, per_direction: bool) -> Self {
        SeriesWriter {
            out,
            columns: DirectionFunctionals::column_names(config),
            per_direction,
        }
    }

    pub fn header(&mut self) -> std::io::Result<()> {
        let lead = if self.per_direction {
            "t,direction"
        } else {
            "t,energy_defect"
        };
        writeln!(self.out, "{lead},{}", self.columns.join(","))
    }

    pub fn write(&mut self, r: &DiagnosticsRecord) -> std::io::Result<()> {
        let row = |lead: String, d: &DirectionFunctionals| {
            let mut line = lead;
            for v in d.values() {
                line.push(',');
                line.push_str(&fmt(v));
            }
            line
        };
        if self.per_direction {
            for (j, d) in r.directions.iter().enumerate() {
                writeln!(self.out, "{}", row(format!("{},{j}", fmt(r.t)), d))?;
            }
        } else {
            writeln!(
                self.out,
                "{}",
                row(format!("{},{}", fmt(r.t), fmt(r.energy_defect)), &r.reduced)
            )?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

fn emit(records: &[DiagnosticsRecord], config: &ModelConfig, per_direction: bool) -> String {
    let mut buf = Vec::new();
    let mut w = SeriesWriter::new(&mut buf, config, per_direction);
    w.header().expect("writing to memory");
    for r in records {
        w.write(r).expect("writing to memory");
    }
    String::from_utf8(buf).expect("ascii output")
}

pub fn emit_series(records: &[DiagnosticsRecord], config: &ModelConfig) -> String {
    emit(records, config, false)
}

pub fn emit_directions(records: &[DiagnosticsRecord], config: &ModelConfig) -> String {
    emit(records, config, true)
}

fn parse_row(line: &str, lineno: usize) -> Result<Vec<f64>, String> {
    line.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| format!("line {lineno}: bad number `{f}`"))
        })
        .collect()
}

fn check_header(header: Option<&str>, lead: &str, config: &ModelConfig) -> Result<(), String> {
    let want = format!(
        "{lead},{}",
        DirectionFunctionals::column_names(config).join(",")
    );
    match header {
        Some(h) if h.trim_end() == want => Ok(()),
        Some(_) => Err("header does not match the configured columns".into()),
        None => Err("missing header".into()),
    }
}

/// Parses `series.csv` and, if given, `directions.csv` back into records.
pub fn parse_series(
    series: &str,
    directions: Option<&str>,
    config: &ModelConfig,
) -> Result<Vec<DiagnosticsRecord>, String> {
    let mut lines = series.lines();
    check_header(lines.next(), "t,energy_defect", config)?;
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v = parse_row(line, i + 2)?;
        let reduced = DirectionFunctionals::from_values(&v[2.min(v.len())..], config)
            .ok_or_else(|| format!("line {}: wrong column count", i + 2))?;
        records.push(DiagnosticsRecord {
            t: v[0],
            energy_defect: v[1],
            reduced,
            directions: Vec::new(),
        });
    }
    if let Some(text) = directions {
        let mut lines = text.lines();
        check_header(lines.next(), "t,direction", config)?;
        let mut k = 0;
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v = parse_row(line, i + 2)?;
            let d = DirectionFunctionals::from_values(&v[2.min(v.len())..], config)
                .ok_or_else(|| format!("directions line {}: wrong column count", i + 2))?;
            let j = v[1] as usize;
            while k < records.len() && records[k].t != v[0] {
                k += 1;
            }
            let r = records
                .get_mut(k)
                .ok_or_else(|| format!("directions line {}: time not in series", i + 2))?;
            if j != r.directions.len() {
                return Err(format!(
                    "directions line {}: direction {j} out of order",
                    i + 2
                ));
            }
            r.directions.push(d);
        }
    }
    Ok(records)
}
