//! Snapshot data: independent observation vectors grouped by time.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::dist::{DistSpec, Sampler};
use crate::error::{Error, Result};
use crate::models::{Model, Problem};

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotData {
    times: Vec<f64>,
    /// `obs[i][n]` is observation `n` at `times[i]`.
    obs: Vec<Vec<Vec<f64>>>,
    dim: usize,
}

impl SnapshotData {
    pub fn new(times: Vec<f64>, obs: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if times.is_empty() || times.len() != obs.len() {
            return Err(Error::Data(format!("{} times but {} observation groups", times.len(), obs.len())));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Data("times must be strictly ascending".into()));
        }
        let dim = obs.iter().flatten().next().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::Data("no observations".into()));
        }
        for (t, group) in times.iter().zip(&obs) {
            if group.is_empty() {
                return Err(Error::Data(format!("no observations at t = {t}")));
            }
            if group.iter().any(|y| y.len() != dim) {
                return Err(Error::Data(format!("observations at t = {t} do not all have dimension {dim}")));
            }
            if group.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("non-finite observation at t = {t}")));
            }
        }
        Ok(Self { times, obs, dim })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn at(&self, i: usize) -> &[Vec<f64>] {
        &self.obs[i]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn len(&self) -> usize {
        self.obs.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Draw `n` fresh units per observation time from the true model.
    pub fn simulate<M: Model, R: Rng + ?Sized>(problem: &Problem<M>, spec: &DistSpec, n: usize, rng: &mut R) -> Result<Self> {
        let sampler = Sampler::new(spec)?;
        let q = problem.n_outputs();
        let nt = problem.n_times();
        let mut obs = vec![Vec::with_capacity(n); nt];
        let mut theta = vec![0.0; sampler.dim()];
        // each unit is destroyed by its measurement, so every time gets its own draws
        for (i, group) in obs.iter_mut().enumerate() {
            for k in 0..n {
                sampler.sample(rng, &mut theta);
                let y = problem.outputs(&theta).map_err(|e| Error::Sample {
                    index: i * n + k,
                    source: Box::new(e),
                })?;
                group.push(y[i * q..(i + 1) * q].to_vec());
            }
        }
        Self::new(problem.plan.times.clone(), obs)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["time".to_string(), "rep".to_string()];
        header.extend((1..=self.dim).map(|j| format!("y{j}")));
        wr.write_record(&header).map_err(csv_err)?;
        for (t, group) in self.times.iter().zip(&self.obs) {
            for (n, y) in group.iter().enumerate() {
                let mut row = vec![format!("{t}"), format!("{}", n + 1)];
                row.extend(y.iter().map(|v| format!("{v:e}")));
                wr.write_record(&row).map_err(csv_err)?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Lines starting with `#` are ignored.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let header = rd.headers().map_err(csv_err)?.clone();
        let cols: Vec<&str> = header.iter().map(str::trim).collect();
        let q = cols.len().saturating_sub(2);
        let expected: Vec<String> = ["time", "rep"]
            .iter()
            .map(|s| s.to_string())
            .chain((1..=q).map(|j| format!("y{j}")))
            .collect();
        if q == 0 || cols != expected {
            return Err(Error::Data(format!("header must be `time,rep,y1[,y2,...]`, got `{}`", cols.join(","))));
        }
        let mut times: Vec<f64> = Vec::new();
        let mut obs: Vec<Vec<Vec<f64>>> = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let num = |k: usize| -> Result<f64> {
                rec.get(k)
                    .map(str::trim)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::Data(format!("row {}: column {} is not a number", line + 2, cols[k])))
            };
            let t = num(0)?;
            let y = (2..2 + q).map(num).collect::<Result<Vec<_>>>()?;
            match times.iter().position(|&s| s == t) {
                Some(i) => obs[i].push(y),
                None => {
                    times.push(t);
                    obs.push(vec![y]);
                }
            }
        }
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        Self::new(
            order.iter().map(|&i| times[i]).collect(),
            order.iter().map(|&i| std::mem::take(&mut obs[i])).collect(),
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let d = SnapshotData::new(vec![0.5, 2.0], vec![vec![vec![1.0, 2.5], vec![-3.0, 1e-7]], vec![vec![0.1, 0.2]]]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("time,rep,y1,y2\n"));
        assert_eq!(SnapshotData::read_csv(&buf[..]).unwrap(), d);
    }

    #[test]
    fn unsorted_rows_are_grouped() {
        let text = "time,rep,y1\n2,1,5\n1,1,3\n2,2,6\n";
        let d = SnapshotData::read_csv(text.as_bytes()).unwrap();
        assert_eq!(d.times(), &[1.0, 2.0]);
        assert_eq!(d.at(1), &[vec![5.0], vec![6.0]]);
    }

    #[test]
    fn comment_lines_are_skipped() {
        let text = "# seed=3\ntime,rep,y1\n# note\n1,1,3\n";
        let d = SnapshotData::read_csv(text.as_bytes()).unwrap();
        assert_eq!(d.at(0), &[vec![3.0]]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(SnapshotData::read_csv("t,rep,y1\n1,1,2\n".as_bytes()).is_err());
        assert!(SnapshotData::read_csv("time,rep,y1\n1,1,x\n".as_bytes()).is_err());
        assert!(SnapshotData::read_csv("time,rep,y1\n".as_bytes()).is_err());
        assert!(SnapshotData::new(vec![1.0], vec![vec![vec![1.0], vec![1.0, 2.0]]]).is_err());
    }
}
