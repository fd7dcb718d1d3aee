//! CSV run log and tracking-error metrics.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::geometry::wrap_angle;
use crate::modes::Mode;

pub const HEADER: &str =
    "t,q1_x,q1_y,q1_z,q2_x,q2_y,q2_z,box_x,box_y,box_z,box_yaw,box_phi,mode,t1,t2,ref_x,ref_y,ref_yaw,ref_phi";
const COLUMNS: usize = 19;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub t: f64,
    pub quads: [[f64; 3]; 2],
    pub box_position: [f64; 3],
    pub box_yaw: f64,
    pub box_phi: f64,
    pub mode: Mode,
    pub tensions: [f64; 2],
    /// Reference `[x, y, yaw, phi]`.
    pub reference: [f64; 4],
}

impl LogRecord {
    pub fn write_row<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let mut fields: Vec<String> = Vec::with_capacity(COLUMNS);
        let mut push = |v: f64| fields.push(format!("{v:.8e}"));
        push(self.t);
        self.quads.iter().flatten().for_each(|v| push(*v));
        self.box_position.iter().for_each(|v| push(*v));
        push(self.box_yaw);
        push(self.box_phi);
        fields.push(self.mode.label().to_string());
        let mut push = |v: f64| fields.push(format!("{v:.8e}"));
        self.tensions.iter().for_each(|v| push(*v));
        self.reference.iter().for_each(|v| push(*v));
        writeln!(out, "{}", fields.join(","))
    }

    fn parse(line: &str) -> Result<Self, String> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != COLUMNS {
            return Err(format!("expected {COLUMNS} fields, found {}", fields.len()));
        }
        let num = |i: usize| -> Result<f64, String> {
            let v: f64 = fields[i].trim().parse().map_err(|_| format!("field {} is not a number: '{}'", i + 1, fields[i]))?;
            if v.is_finite() { Ok(v) } else { Err(format!("field {} is not finite", i + 1)) }
        };
        let mode = Mode::from_label(fields[12].trim()).ok_or_else(|| format!("unknown mode '{}'", fields[12]))?;
        Ok(Self {
            t: num(0)?,
            quads: [[num(1)?, num(2)?, num(3)?], [num(4)?, num(5)?, num(6)?]],
            box_position: [num(7)?, num(8)?, num(9)?],
            box_yaw: num(10)?,
            box_phi: num(11)?,
            mode,
            tensions: [num(13)?, num(14)?],
            reference: [num(15)?, num(16)?, num(17)?, num(18)?],
        })
    }
}

/// Writes the config echo and the header row.
pub fn write_preamble<W: Write>(out: &mut W, config_json: &str) -> io::Result<()> {
    for line in config_json.lines() {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "{HEADER}")
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("malformed log at row {row}: {message}")]
    MalformedLog { row: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Reads a log. Rows are numbered from 1 at the first line of the file.
pub fn read_log<R: BufRead>(input: R) -> Result<Vec<LogRecord>, LogError> {
    let mut records = Vec::new();
    let mut header_seen = false;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let row = i + 1;
        if line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line.trim() != HEADER {
                return Err(LogError::MalformedLog { row, message: "missing or wrong header".into() });
            }
            header_seen = true;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let record = LogRecord::parse(&line).map_err(|message| LogError::MalformedLog { row, message })?;
        if records.last().is_some_and(|r: &LogRecord| record.t <= r.t) {
            return Err(LogError::MalformedLog { row, message: "time is not increasing".into() });
        }
        records.push(record);
    }
    if !header_seen {
        return Err(LogError::MalformedLog { row: 0, message: "empty log".into() });
    }
    Ok(records)
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Tracking statistics over a log.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub rows: usize,
    /// Mean and population standard deviation of box minus reference.
    pub error_x: (f64, f64),
    pub error_y: (f64, f64),
    pub error_yaw: (f64, f64),
    pub rms_planar: f64,
    pub rms_yaw: f64,
    /// Fraction of rows spent in each mode.
    pub mode_fractions: BTreeMap<&'static str, f64>,
}

impl Metrics {
    /// Statistics over rows with `t >= from`.
    pub fn compute(records: &[LogRecord], from: f64) -> Self {
        let rows: Vec<&LogRecord> = records.iter().filter(|r| r.t >= from).collect();
        let ex = rows.iter().map(|r| r.box_position[0] - r.reference[0]);
        let ey = rows.iter().map(|r| r.box_position[1] - r.reference[1]);
        let eyaw = rows.iter().map(|r| wrap_angle(r.box_yaw - r.reference[2]));
        let n = rows.len().max(1) as f64;
        let rms_planar = (ex.clone().zip(ey.clone()).map(|(x, y)| x * x + y * y).sum::<f64>() / n).sqrt();
        let rms_yaw = (eyaw.clone().map(|e| e * e).sum::<f64>() / n).sqrt();
        let mode_fractions = Mode::ALL
            .iter()
            .map(|m| (m.label(), rows.iter().filter(|r| r.mode == *m).count() as f64 / n))
            .collect();
        Self {
            rows: rows.len(),
            error_x: mean_std(ex),
            error_y: mean_std(ey),
            error_yaw: mean_std(eyaw),
            rms_planar,
            rms_yaw,
            mode_fractions,
        }
    }

    /// `key=value` lines.
    pub fn report(&self) -> String {
        let mut lines = vec![
            format!("rows={}", self.rows),
            format!("mean_x={}", self.error_x.0),
            format!("std_x={}", self.error_x.1),
            format!("mean_y={}", self.error_y.0),
            format!("std_y={}", self.error_y.1),
            format!("mean_yaw={}", self.error_yaw.0),
            format!("std_yaw={}", self.error_yaw.1),
            format!("rms_planar={}", self.rms_planar),
            format!("rms_yaw={}", self.rms_yaw),
        ];
        for (mode, f) in &self.mode_fractions {
            lines.push(format!("fraction_{mode}={f}"));
        }
        lines.join("\n") + "\n"
    }
}
