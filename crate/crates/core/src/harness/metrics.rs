use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluation row of `metrics.csv`; the columns follow the field order.
///
/// Quantities an algorithm does not produce (no model, no critic, no
/// importance weights) are left empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// Environment steps taken so far.
    pub step: u64,
    /// Episodes completed so far.
    pub episode: u64,
    /// Mean return over the evaluation rollouts.
    pub eval_return: f64,
    /// Mean environment-specific final metric of the evaluation rollouts.
    pub eval_final_metric: Option<f64>,
    pub model_nll: Option<f64>,
    pub value_loss: Option<f64>,
    pub grad_norm_pre: Option<f64>,
    pub grad_norm_post: Option<f64>,
    pub mean_importance_weight: Option<f64>,
}

pub const METRICS_COLUMNS: [&str; 9] = [
    "step",
    "episode",
    "eval_return",
    "eval_final_metric",
    "model_nll",
    "value_loss",
    "grad_norm_pre",
    "grad_norm_post",
    "mean_importance_weight",
];

/// Streams rows to a CSV file, flushing after each one.
pub struct MetricsWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl MetricsWriter {
    /// Creates the file and writes the header.
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(BufWriter::new(File::create(path)?));
        inner.write_record(METRICS_COLUMNS).map_err(csv_error)?;
        inner.flush()?;
        Ok(MetricsWriter { inner })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner.serialize(row).map_err(csv_error)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read_metrics<R: Read>(r: R) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_reader(r);
    let header: Vec<String> = reader.headers().map_err(csv_error)?.iter().map(String::from).collect();
    if header != METRICS_COLUMNS {
        return Err(Error::Format(format!("unexpected metrics header {header:?}")));
    }
    reader
        .deserialize()
        .map(|row| row.map_err(csv_error))
        .collect()
}

pub fn write_metrics<W: Write>(w: W, rows: &[MetricsRow]) -> Result<()> {
    let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    inner.write_record(METRICS_COLUMNS).map_err(csv_error)?;
    for row in rows {
        inner.serialize(row).map_err(csv_error)?;
    }
    inner.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("metrics csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_matches_field_order() {
        let row = MetricsRow {
            step: 1,
            episode: 2,
            eval_return: 3.0,
            eval_final_metric: None,
            model_nll: Some(4.0),
            value_loss: None,
            grad_norm_pre: Some(5.0),
            grad_norm_post: Some(6.0),
            mean_importance_weight: None,
        };
        let mut with_header = csv::Writer::from_writer(Vec::new());
        with_header.serialize(&row).unwrap();
        let text = String::from_utf8(with_header.into_inner().unwrap()).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRICS_COLUMNS.join(","));
    }

    #[test]
    fn rows_round_trip() {
        let rows = vec![
            MetricsRow {
                step: 10,
                episode: 1,
                eval_return: -1.25,
                eval_final_metric: Some(0.1),
                model_nll: Some(-3.5),
                value_loss: Some(0.01),
                grad_norm_pre: Some(2.0),
                grad_norm_post: Some(1.0),
                mean_importance_weight: Some(0.99),
            },
            MetricsRow {
                step: 20,
                episode: 2,
                eval_return: 1e-300,
                eval_final_metric: None,
                model_nll: None,
                value_loss: None,
                grad_norm_pre: None,
                grad_norm_post: None,
                mean_importance_weight: None,
            },
        ];
        let mut buf = Vec::new();
        write_metrics(&mut buf, &rows).unwrap();
        assert_eq!(read_metrics(&buf[..]).unwrap(), rows);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(2).unwrap().ends_with(",,,,,,"));
    }
}
