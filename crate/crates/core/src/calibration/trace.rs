use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "t_seconds,loop_name,command,residual";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopName {
    Timing,
    PolarizationA,
    PolarizationB,
    Wavelength,
    Phase,
}

impl LoopName {
    pub const ALL: [LoopName; 5] = [
        LoopName::Timing,
        LoopName::PolarizationA,
        LoopName::PolarizationB,
        LoopName::Wavelength,
        LoopName::Phase,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LoopName::Timing => "timing",
            LoopName::PolarizationA => "polarization_a",
            LoopName::PolarizationB => "polarization_b",
            LoopName::Wavelength => "wavelength",
            LoopName::Phase => "phase",
        }
    }

    pub fn polarization(arm: usize) -> Self {
        if arm == 0 {
            LoopName::PolarizationA
        } else {
            LoopName::PolarizationB
        }
    }
}

impl fmt::Display for LoopName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LoopName {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        LoopName::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown loop name {s:?}"))
    }
}

/// One sensor reading together with the command in force when it was
/// taken.
///
/// `command` units: ps (timing), rad of the first EPC plate (polarization),
/// °C (wavelength), rad (phase). `residual` units: ps, reflected fraction,
/// HOM value, monitor dark fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t_seconds: f64,
    pub loop_name: LoopName,
    pub command: f64,
    pub residual: f64,
}

pub fn write_trace<W: Write>(mut w: W, records: &[TraceRecord]) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in records {
        writeln!(w, "{},{},{},{}", r.t_seconds, r.loop_name, r.command, r.residual)?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(r: R) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if n == 1 {
            if line.trim() != TRACE_HEADER {
                return Err(Error::Parse {
                    line: n,
                    reason: format!("expected header {TRACE_HEADER:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::Parse {
                line: n,
                reason: format!("expected 4 fields, found {}", f.len()),
            });
        }
        let num = |s: &str, what: &str| {
            s.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: n,
                reason: format!("{what}: {e}"),
            })
        };
        out.push(TraceRecord {
            t_seconds: num(f[0], "t_seconds")?,
            loop_name: f[1].trim().parse().map_err(|reason| Error::Parse { line: n, reason })?,
            command: num(f[2], "command")?,
            residual: num(f[3], "residual")?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let recs = vec![
            TraceRecord {
                t_seconds: 0.1,
                loop_name: LoopName::Timing,
                command: -130.0,
                residual: 1.234e-3,
            },
            TraceRecord {
                t_seconds: 7200.0,
                loop_name: LoopName::PolarizationB,
                command: 0.1 + 0.2,
                residual: 5e-300,
            },
        ];
        let mut buf = Vec::new();
        write_trace(&mut buf, &recs).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("t_seconds,loop_name,command,residual\n"));
        assert_eq!(read_trace(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = format!("{TRACE_HEADER}\n1,phase,0,0\n2,warp,0,0\n");
        match read_trace(bad.as_bytes()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
        assert!(read_trace("a,b\n".as_bytes()).is_err());
    }
}
