//! Trajectory CSV: a `phase,t,<joint>...` header, then one row per waypoint
//! with values printed to 9 decimals.

use std::io::{Read, Write};

use vkc_core::trajopt::Trajectory;

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Row { line: usize, msg: String },
    #[error("{0}")]
    Header(String),
}

/// One phase's waypoints with the index of the phase in the scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseTrajectory {
    pub phase: usize,
    pub trajectory: Trajectory,
}

/// `v` to `places` decimals, never printed as negative zero.
pub fn fixed(v: f64, places: usize) -> String {
    let s = format!("{v:.places$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

pub fn write_csv<W: Write>(out: W, phases: &[PhaseTrajectory]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = phases.first() else {
        w.write_record(["phase", "t"])?;
        w.flush()?;
        return Ok(());
    };
    let names = first.trajectory.names();
    let mut header = vec!["phase".to_string(), "t".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for p in phases {
        if p.trajectory.names() != names {
            return Err(CsvError::Header(format!("phase {} has different columns", p.phase)));
        }
        for (t, row) in p.trajectory.rows().enumerate() {
            let mut rec = vec![p.phase.to_string(), t.to_string()];
            rec.extend(row.iter().map(|&v| fixed(v, 9)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<PhaseTrajectory>, CsvError> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let header = r.headers()?.clone();
    if header.len() < 2 || &header[0] != "phase" || &header[1] != "t" {
        return Err(CsvError::Header("header must start with phase,t".into()));
    }
    let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut groups: Vec<(usize, Vec<Vec<f64>>)> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != header.len() {
            return Err(CsvError::Row { line, msg: format!("expected {} columns, got {}", header.len(), rec.len()) });
        }
        let num = |s: &str| -> Result<f64, CsvError> {
            s.trim().parse().map_err(|_| CsvError::Row { line, msg: format!("\"{s}\" is not a number") })
        };
        let phase: usize =
            rec[0].trim().parse().map_err(|_| CsvError::Row { line, msg: format!("bad phase \"{}\"", &rec[0]) })?;
        let t: usize = rec[1].trim().parse().map_err(|_| CsvError::Row { line, msg: format!("bad step \"{}\"", &rec[1]) })?;
        let row = rec.iter().skip(2).map(num).collect::<Result<Vec<_>, _>>()?;
        match groups.last_mut() {
            Some((p, rows)) if *p == phase => {
                if t != rows.len() {
                    return Err(CsvError::Row { line, msg: format!("expected step {}, got {t}", rows.len()) });
                }
                rows.push(row);
            }
            _ => {
                if t != 0 {
                    return Err(CsvError::Row { line, msg: format!("phase {phase} must start at step 0") });
                }
                groups.push((phase, vec![row]));
            }
        }
    }
    groups
        .into_iter()
        .map(|(phase, rows)| {
            let trajectory = Trajectory::new(names.clone(), &rows).map_err(|e| CsvError::Header(e.to_string()))?;
            Ok(PhaseTrajectory { phase, trajectory })
        })
        .collect()
}
