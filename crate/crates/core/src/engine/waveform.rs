use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Named channels sampled on a shared uniform time grid. The first channel
/// is always `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Waveform {
    /// Empty waveform with `time` followed by `channels`.
    pub fn new<S: AsRef<str>>(channels: &[S]) -> Self {
        let mut names = vec!["time".to_string()];
        names.extend(channels.iter().map(|s| s.as_ref().to_string()));
        let columns = vec![Vec::new(); names.len()];
        Self { names, columns }
    }

    pub fn with_capacity<S: AsRef<str>>(channels: &[S], rows: usize) -> Self {
        let mut w = Self::new(channels);
        w.columns.iter_mut().for_each(|c| c.reserve(rows));
        w
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Appends one sample; `row[0]` is the time.
    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch");
        for (col, &v) in self.columns.iter_mut().zip(row) {
            col.push(v);
        }
    }

    pub fn len(&self) -> usize {
        self.columns[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self) -> &[f64] {
        &self.columns[0]
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub(crate) fn require(&self, name: &str) -> Result<&[f64]> {
        self.channel(name)
            .ok_or_else(|| Error::Signal(format!("waveform has no `{name}` channel")))
    }

    /// Grid spacing, taken from the first two samples.
    pub fn sample_interval(&self) -> Option<f64> {
        let t = self.time();
        (t.len() >= 2).then(|| t[1] - t[0])
    }

    /// Samples with `t0 <= time <= t1`.
    pub fn window(&self, t0: f64, t1: f64) -> Waveform {
        let t = self.time();
        let start = t.partition_point(|&x| x < t0);
        let end = t.partition_point(|&x| x <= t1);
        Waveform {
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| c[start..end.max(start)].to_vec())
                .collect(),
        }
    }

    /// Header row of channel names, then one row per sample, LF line ends.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(&self.names)?;
        let mut row = Vec::with_capacity(self.names.len());
        for i in 0..self.len() {
            row.clear();
            row.extend(self.columns.iter().map(|c| format!("{}", c[i])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Waveform> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(input);
        let names: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if names.first().map(String::as_str) != Some("time") {
            return Err(Error::Parse("first CSV column must be `time`".into()));
        }
        let mut columns = vec![Vec::new(); names.len()];
        for (line, record) in r.records().enumerate() {
            let record = record?;
            for (col, field) in columns.iter_mut().zip(record.iter()) {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Parse(format!("row {}: `{field}` is not a number", line + 2))
                })?;
                col.push(v);
            }
        }
        let w = Waveform { names, columns };
        w.check()?;
        Ok(w)
    }

    /// Equal channel lengths and strictly increasing time.
    pub fn check(&self) -> Result<()> {
        let n = self.len();
        if self.columns.iter().any(|c| c.len() != n) {
            return Err(Error::Signal("channels differ in length".into()));
        }
        if self.time().windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Signal("time is not strictly increasing".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Waveform {
        let mut w = Waveform::new(&["a", "b"]);
        for k in 0..5 {
            let t = k as f64 * 1e-7;
            w.push_row(&[t, k as f64 * 0.1, -(k as f64) / 3.0]);
        }
        w
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let w = sample();
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("time,a,b\n"));
        assert!(!text.contains('\r'));
        assert!(!text.contains("e-"), "decimal notation expected: {text}");
        let back = Waveform::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn window_selects_inclusive_range() {
        let w = sample().window(1e-7, 3e-7);
        assert_eq!(w.len(), 3);
        assert_eq!(w.channel("a").unwrap()[0], 0.1);
    }

    #[test]
    fn bad_csv_rejected() {
        assert!(Waveform::read_csv("x,a\n0,1\n".as_bytes()).is_err());
        assert!(Waveform::read_csv("time,a\n0,1\n0,2\n".as_bytes()).is_err());
        assert!(Waveform::read_csv("time,a\n0,zz\n".as_bytes()).is_err());
    }
}
