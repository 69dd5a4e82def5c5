//! CSV readers and writers for the pipeline artifacts.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::cif::{CifPair, TransitionTable};
use crate::classify::{CompetingRisksData, EventCode};
use crate::ipd::ReconstructedIpd;
use crate::microsim::{CohortResult, State};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: row {row}: {message}")]
    Content {
        path: PathBuf,
        row: usize,
        message: String,
    },
    #[error("{path}: expected columns {expected}")]
    Header { path: PathBuf, expected: String },
}

fn create_parent(path: &Path) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| IoError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    Ok(())
}

/// Write a text file, creating its directory.
pub fn write_text(path: &Path, body: &str) -> Result<(), IoError> {
    create_parent(path)?;
    std::fs::write(path, body).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Write a header and rows of already formatted fields.
pub fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), IoError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    create_parent(path)?;
    let err = |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(err)?;
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(err)?;
    }
    w.flush().map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Read rows of numbers, checking the header.
fn read_numeric(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>, IoError> {
    let err = |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(err)?;
    let found: Vec<String> = r.headers().map_err(err)?.iter().map(str::to_string).collect();
    if found != header {
        return Err(IoError::Header {
            path: path.to_path_buf(),
            expected: header.join(","),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(err)?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| IoError::Content {
                path: path.to_path_buf(),
                row: i + 1,
                message: e.to_string(),
            })?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_ipd(path: &Path, ipd: &ReconstructedIpd) -> Result<(), IoError> {
    write_rows(
        path,
        &["time", "indicator"],
        ipd.times
            .iter()
            .zip(&ipd.indicators)
            .map(|(t, d)| [t.to_string(), d.to_string()]),
    )
}

pub fn read_ipd(path: &Path) -> Result<ReconstructedIpd, IoError> {
    let rows = read_numeric(path, &["time", "indicator"])?;
    let mut times = Vec::with_capacity(rows.len());
    let mut ind = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        if r[1] != 0.0 && r[1] != 1.0 {
            return Err(IoError::Content {
                path: path.to_path_buf(),
                row: i + 1,
                message: "indicator must be 0 or 1".into(),
            });
        }
        times.push(r[0]);
        ind.push(r[1] as u8);
    }
    Ok(ReconstructedIpd::new(times, ind))
}

pub fn write_classified(path: &Path, data: &CompetingRisksData) -> Result<(), IoError> {
    write_rows(
        path,
        &["time", "code"],
        data.times
            .iter()
            .zip(&data.codes)
            .map(|(t, c)| [t.to_string(), (*c as u8).to_string()]),
    )
}

pub fn read_classified(path: &Path) -> Result<CompetingRisksData, IoError> {
    let rows = read_numeric(path, &["time", "code"])?;
    let mut times = Vec::with_capacity(rows.len());
    let mut codes = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let code = (r[1].fract() == 0.0 && r[1] >= 0.0)
            .then(|| EventCode::from_u8(r[1] as u8))
            .flatten()
            .ok_or_else(|| IoError::Content {
                path: path.to_path_buf(),
                row: i + 1,
                message: "code must be 0, 1 or 2".into(),
            })?;
        times.push(r[0]);
        codes.push(code);
    }
    Ok(CompetingRisksData::new(times, codes, 0.0))
}

pub fn write_cif(path: &Path, cif: &CifPair) -> Result<(), IoError> {
    write_rows(
        path,
        &["time", "f_prog", "f_death", "s_all"],
        (0..cif.grid.len()).map(|i| {
            [
                cif.grid[i].to_string(),
                cif.f_prog[i].to_string(),
                cif.f_death[i].to_string(),
                cif.s_all[i].to_string(),
            ]
        }),
    )
}

pub fn write_transitions(path: &Path, table: &TransitionTable) -> Result<(), IoError> {
    write_rows(
        path,
        &["cycle", "h_prog", "h_death"],
        (0..table.cycles()).map(|c| [c.to_string(), table.h_prog[c].to_string(), table.h_death[c].to_string()]),
    )
}

pub fn read_transitions(path: &Path) -> Result<TransitionTable, IoError> {
    let rows = read_numeric(path, &["cycle", "h_prog", "h_death"])?;
    Ok(TransitionTable::new(
        rows.iter().map(|r| r[1]).collect(),
        rows.iter().map(|r| r[2]).collect(),
    ))
}

pub fn write_survival(path: &Path, values: &[f64]) -> Result<(), IoError> {
    write_rows(
        path,
        &["cycle", "survival"],
        values.iter().enumerate().map(|(c, v)| [c.to_string(), v.to_string()]),
    )
}

/// A `cycle,survival` file with rows for cycles `0, 1, 2, ...` in order.
pub fn read_survival(path: &Path) -> Result<Vec<f64>, IoError> {
    let rows = read_numeric(path, &["cycle", "survival"])?;
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            if r[0] != i as f64 {
                return Err(IoError::Content {
                    path: path.to_path_buf(),
                    row: i + 1,
                    message: format!("expected cycle {i}"),
                });
            }
            Ok(r[1])
        })
        .collect()
}

pub fn write_occupancy(path: &Path, cohort: &CohortResult) -> Result<(), IoError> {
    write_rows(
        path,
        &["cycle", "state", "count"],
        cohort.occupancy.iter().enumerate().flat_map(|(c, counts)| {
            State::ALL
                .iter()
                .map(move |s| [c.to_string(), s.name().to_string(), counts[*s as usize].to_string()])
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let ipd = ReconstructedIpd::new(vec![0.5, 1.25, 3.0], vec![1, 0, 1]);
        let p = dir.path().join("a/ipd.csv");
        write_ipd(&p, &ipd).unwrap();
        assert_eq!(read_ipd(&p).unwrap(), ipd);

        let data = CompetingRisksData::new(vec![1.0, 2.0], vec![EventCode::Death, EventCode::Censored], 0.0);
        let p = dir.path().join("c.csv");
        write_classified(&p, &data).unwrap();
        assert_eq!(read_classified(&p).unwrap(), data);

        let t = TransitionTable::new(vec![0.1, 0.2], vec![0.05, 0.0]);
        let p = dir.path().join("t.csv");
        write_transitions(&p, &t).unwrap();
        assert_eq!(read_transitions(&p).unwrap(), t);
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "cycle,h_prog,h_death\n0,0.1,0.05\n1,0.2,0\n");
    }

    #[test]
    fn bad_header_and_codes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "t,indicator\n1,1\n").unwrap();
        assert!(matches!(read_ipd(&p), Err(IoError::Header { .. })));
        std::fs::write(&p, "time,code\n1,3\n").unwrap();
        assert!(matches!(read_classified(&p), Err(IoError::Content { row: 1, .. })));
    }
}
