//! Iterate log CSV: `k,t_wall_s,L_bar,L_bar_best,step,extra1,extra2,extra3`.
//! Reals are written with 17 significant digits; missing values are empty.

use std::io::{Read, Write};

use thiserror::Error;

use super::LogRow;

pub const LOG_HEADER: [&str; 8] = ["k", "t_wall_s", "L_bar", "L_bar_best", "step", "extra1", "extra2", "extra3"];

#[derive(Debug, Error)]
pub enum LogCsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unexpected header {0:?}")]
    Header(Vec<String>),
    #[error("row {row}, column {column}: cannot parse `{text}`")]
    Field { row: usize, column: &'static str, text: String },
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(real).unwrap_or_default()
}

pub fn write_log_csv<W: Write>(rows: &[LogRow], out: W) -> Result<(), LogCsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LOG_HEADER)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            real(r.t),
            real(r.value),
            real(r.best),
            opt(r.step),
            opt(r.extra[0]),
            opt(r.extra[1]),
            opt(r.extra[2]),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_log_csv<R: Read>(input: R) -> Result<Vec<LogRow>, LogCsvError> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    if header != LOG_HEADER {
        return Err(LogCsvError::Header(header));
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| -> Result<Option<f64>, LogCsvError> {
            let text = rec.get(c).unwrap_or("");
            if text.is_empty() {
                return Ok(None);
            }
            text.parse().map(Some).map_err(|_| LogCsvError::Field { row: i + 1, column: LOG_HEADER[c], text: text.into() })
        };
        let need = |c: usize| -> Result<f64, LogCsvError> {
            field(c)?.ok_or_else(|| LogCsvError::Field { row: i + 1, column: LOG_HEADER[c], text: String::new() })
        };
        let k_text = rec.get(0).unwrap_or("");
        let k = k_text.parse().map_err(|_| LogCsvError::Field { row: i + 1, column: "k", text: k_text.into() })?;
        rows.push(LogRow { k, t: need(1)?, value: need(2)?, best: need(3)?, step: field(4)?, extra: [field(5)?, field(6)?, field(7)?] });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let rows = vec![
            LogRow { k: 1, t: 0.1 + 0.2, value: -1.0 / 3.0, best: -1.0 / 3.0, step: Some(1e-300), extra: [None, Some(2.5), None] },
            LogRow { k: 2, t: 7.0, value: 12345.678901234567, best: -1.0 / 3.0, step: None, extra: [Some(-0.0), None, Some(f64::MAX)] },
        ];
        let mut buf = Vec::new();
        write_log_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("k,t_wall_s,L_bar,L_bar_best,step,extra1,extra2,extra3\n"));
        assert!(text.contains("3.0000000000000004e-1"));
        let back = read_log_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn bad_header() {
        assert!(matches!(read_log_csv("a,b\n1,2\n".as_bytes()), Err(LogCsvError::Header(_))));
    }
}
