use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "epoch,seed,env,difficulty,aggregator,beta,cache_flag,metric_name,value";

/// One long-format metrics record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub seed: u64,
    pub env: String,
    pub difficulty: String,
    pub aggregator: String,
    pub beta: f64,
    /// `on` or `off`.
    pub cache_flag: String,
    pub metric_name: String,
    pub value: f64,
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file)))
}

/// Append-only writer for one run's metrics file.
pub struct MetricsWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(MetricsWriter {
            inner: csv_writer(path)?,
        })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner.serialize(row)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io("metrics", e))
    }
}

/// Reads a metrics file, refusing any header but the expected one.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != METRICS_HEADER {
        return Err(Error::config(format!("{}: unexpected metrics header `{header}`", path.display())));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_line_endings() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let row = MetricsRow {
            epoch: 3,
            seed: 1,
            env: "predator_prey".into(),
            difficulty: "easy".into(),
            aggregator: "slim".into(),
            beta: 64.0,
            cache_flag: "on".into(),
            metric_name: "mean_steps".into(),
            value: 12.5,
        };
        let mut w = MetricsWriter::create(&path).unwrap();
        w.write(&row).unwrap();
        w.flush().unwrap();
        drop(w);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{METRICS_HEADER}\n3,1,predator_prey,easy,slim,64.0,on,mean_steps,12.5\n"));
        assert_eq!(read_metrics(&path).unwrap(), vec![row]);

        std::fs::write(&path, "epoch,value\n1,2\n").unwrap();
        assert!(read_metrics(&path).is_err());
    }
}
