//! CSV serialization of waveforms and spectra.
//!
//! Waveforms: header `time,<channel>...`. Spectra: header
//! `freq_hz,amplitude_v`. Values are written in scientific notation with
//! 13 significant digits.

use std::io::{Read, Write};

use thiserror::Error;

use crate::analysis::{Spectrum, WindowKind};
use crate::engine::{Channel, Waveforms};

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad header: expected {expected}, found {found}")]
    Header { expected: String, found: String },
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error("empty file")]
    Empty,
}

fn fmt(x: f64) -> String {
    format!("{x:.12e}")
}

pub fn write_waveforms<W: Write>(out: W, w: &Waveforms) -> Result<(), CsvError> {
    let mut wr = csv::Writer::from_writer(out);
    let mut header = vec!["time".to_string()];
    header.extend(w.channels.iter().map(|c| c.name.clone()));
    wr.write_record(&header)?;
    for (k, t) in w.times.iter().enumerate() {
        let mut row = vec![fmt(*t)];
        row.extend(w.channels.iter().map(|c| fmt(c.values[k])));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

fn parse_rows<R: Read>(input: R) -> Result<(Vec<String>, Vec<Vec<f64>>), CsvError> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(CsvError::Empty);
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|v| {
                v.trim().parse::<f64>().map_err(|_| CsvError::Row {
                    row: i + 2,
                    msg: format!("not a number: '{v}'"),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if row.len() != header.len() {
            return Err(CsvError::Row {
                row: i + 2,
                msg: format!("{} fields, header has {}", row.len(), header.len()),
            });
        }
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn read_waveforms<R: Read>(input: R) -> Result<Waveforms, CsvError> {
    let (header, rows) = parse_rows(input)?;
    if header[0] != "time" {
        return Err(CsvError::Header {
            expected: "time,...".into(),
            found: header.join(","),
        });
    }
    let times = rows.iter().map(|r| r[0]).collect();
    let channels = header[1..]
        .iter()
        .enumerate()
        .map(|(j, name)| Channel {
            name: name.clone(),
            values: rows.iter().map(|r| r[j + 1]).collect(),
        })
        .collect();
    Ok(Waveforms::new(times, channels))
}

pub const SPECTRUM_HEADER: [&str; 2] = ["freq_hz", "amplitude_v"];

pub fn write_spectrum<W: Write>(out: W, s: &Spectrum) -> Result<(), CsvError> {
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record(SPECTRUM_HEADER)?;
    for (f, a) in s.freqs.iter().zip(&s.amplitudes) {
        wr.write_record([fmt(*f), fmt(*a)])?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads a spectrum file. The window is not stored, so it is reported as
/// `assumed`.
pub fn read_spectrum<R: Read>(input: R, assumed: WindowKind) -> Result<Spectrum, CsvError> {
    let (header, rows) = parse_rows(input)?;
    if header != SPECTRUM_HEADER {
        return Err(CsvError::Header {
            expected: SPECTRUM_HEADER.join(","),
            found: header.join(","),
        });
    }
    if rows.is_empty() {
        return Err(CsvError::Empty);
    }
    let freqs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let resolution = if freqs.len() > 1 { freqs[1] - freqs[0] } else { 0.0 };
    Ok(Spectrum {
        freqs,
        amplitudes: rows.iter().map(|r| r[1]).collect(),
        resolution,
        window_kind: assumed,
    })
}
