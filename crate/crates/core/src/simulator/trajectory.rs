use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::pv_plant::Schema;

/// Sampled states, inputs and state derivatives on a uniform time grid.
///
/// Rows are samples; `x` is `N x n`, `u` is `N x m`, `xdot` is `N x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub schema: Schema,
    pub dt: f64,
    pub times: Vec<f64>,
    pub x: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub xdot: DMatrix<f64>,
}

impl Trajectory {
    pub fn new(
        schema: Schema,
        dt: f64,
        times: Vec<f64>,
        x: DMatrix<f64>,
        u: DMatrix<f64>,
        xdot: DMatrix<f64>,
    ) -> Result<Self> {
        let n = times.len();
        if x.nrows() != n || u.nrows() != n || xdot.nrows() != n {
            return Err(Error::SchemaMismatch(format!(
                "row counts differ: times {n}, x {}, u {}, xdot {}",
                x.nrows(),
                u.nrows(),
                xdot.nrows()
            )));
        }
        if x.ncols() != schema.n_states() || xdot.ncols() != schema.n_states() {
            return Err(Error::SchemaMismatch(format!(
                "{schema} trajectory needs {} state columns",
                schema.n_states()
            )));
        }
        if u.ncols() != schema.n_inputs() {
            return Err(Error::SchemaMismatch(format!(
                "{schema} trajectory needs {} input columns",
                schema.n_inputs()
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            schema,
            dt,
            times,
            x,
            u,
            xdot,
        })
    }

    pub(crate) fn from_rows(
        schema: Schema,
        dt: f64,
        times: Vec<f64>,
        x_rows: &[f64],
        u_rows: &[f64],
        xdot_rows: &[f64],
    ) -> Result<Self> {
        let n = times.len();
        let x = DMatrix::from_row_slice(n, schema.n_states(), x_rows);
        let u = DMatrix::from_row_slice(n, schema.n_inputs(), u_rows);
        let xdot = DMatrix::from_row_slice(n, schema.n_states(), xdot_rows);
        Self::new(schema, dt, times, x, u, xdot)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.times.first().copied().unwrap_or(0.0)
    }

    pub fn duration(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn state_row(&self, k: usize) -> Vec<f64> {
        self.x.row(k).iter().copied().collect()
    }

    pub fn input_row(&self, k: usize) -> Vec<f64> {
        self.u.row(k).iter().copied().collect()
    }

    pub fn state_column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.schema.state_index(name)?;
        Some(self.x.column(j).iter().copied().collect())
    }

    pub fn input_column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.schema.input_index(name)?;
        Some(self.u.column(j).iter().copied().collect())
    }

    /// Rows `start..end` as a new trajectory.
    pub fn slice(&self, start: usize, end: usize) -> Trajectory {
        let rows = end - start;
        Trajectory {
            schema: self.schema,
            dt: self.dt,
            times: self.times[start..end].to_vec(),
            x: self.x.rows(start, rows).into_owned(),
            u: self.u.rows(start, rows).into_owned(),
            xdot: self.xdot.rows(start, rows).into_owned(),
        }
    }

    /// Appends `other` below `self`; grids must share `dt` and schema.
    pub fn concat(&self, other: &Trajectory) -> Result<Trajectory> {
        if self.schema != other.schema || self.dt != other.dt {
            return Err(Error::GridMismatch("cannot concatenate different grids".into()));
        }
        let stack = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
            let mut m = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
            m.rows_mut(0, a.nrows()).copy_from(a);
            m.rows_mut(a.nrows(), b.nrows()).copy_from(b);
            m
        };
        let mut times = self.times.clone();
        times.extend_from_slice(&other.times);
        Trajectory::new(
            self.schema,
            self.dt,
            times,
            stack(&self.x, &other.x),
            stack(&self.u, &other.u),
            stack(&self.xdot, &other.xdot),
        )
    }

    /// Header: `t,<states>,<inputs>,<d_states>`, shortest round-trip floats.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        let mut header = vec!["t".to_string()];
        header.extend(self.schema.state_names().iter().map(|s| s.to_string()));
        header.extend(self.schema.input_names().iter().map(|s| s.to_string()));
        header.extend(self.schema.state_names().iter().map(|s| format!("d_{s}")));
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for k in 0..self.len() {
            line.clear();
            line.push_str(&self.times[k].to_string());
            for m in [&self.x, &self.u, &self.xdot] {
                for v in m.row(k).iter() {
                    line.push(',');
                    line.push_str(&v.to_string());
                }
            }
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(f)
    }

    /// Reads a CSV written by [`Trajectory::write_csv`]. The schema is
    /// recognised from the header; `dt` is the mean sample spacing.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Trajectory> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty trajectory file".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        let schema = [Schema::SingleStage, Schema::TwoStage, Schema::ClosedLoop]
            .into_iter()
            .find(|s| {
                let n = s.n_states();
                let m = s.n_inputs();
                cols.len() == 1 + 2 * n + m
                    && cols[1..=n] == *s.state_names()
                    && cols[1 + n..1 + n + m] == *s.input_names()
            })
            .ok_or_else(|| Error::Parse(format!("unrecognised trajectory header `{header}`")))?;

        let (n, m) = (schema.n_states(), schema.n_inputs());
        let (mut times, mut xs, mut us, mut ds) = (vec![], vec![], vec![], vec![]);
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
            if vals.len() != 1 + 2 * n + m {
                return Err(Error::Parse(format!(
                    "line {}: expected {} fields, got {}",
                    lineno + 2,
                    1 + 2 * n + m,
                    vals.len()
                )));
            }
            times.push(vals[0]);
            xs.extend_from_slice(&vals[1..1 + n]);
            us.extend_from_slice(&vals[1 + n..1 + n + m]);
            ds.extend_from_slice(&vals[1 + n + m..]);
        }
        if times.len() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                got: times.len(),
            });
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        Trajectory::from_rows(schema, dt, times, &xs, &us, &ds)
    }

    pub fn load_csv(path: &Path) -> Result<Trajectory> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}
