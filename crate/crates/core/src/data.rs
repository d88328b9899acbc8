//! Observations `(x, a, y)` stored column-wise.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub a: u8,
    pub y: f64,
}

/// `n` observations in dimension `d`; `x` is row-major `n x d`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub d: usize,
    pub x: Vec<f64>,
    pub a: Vec<u8>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn with_capacity(d: usize, n: usize) -> Self {
        Dataset {
            d,
            x: Vec::with_capacity(n * d),
            a: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn push(&mut self, x: &[f64], a: u8, y: f64) {
        debug_assert_eq!(x.len(), self.d);
        self.x.extend_from_slice(x);
        self.a.push(a);
        self.y.push(y);
    }

    pub fn get(&self, i: usize) -> Observation {
        Observation {
            x: self.x(i).to_vec(),
            a: self.a[i],
            y: self.y[i],
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut out = Dataset::with_capacity(self.d, idx.len());
        for &i in idx {
            out.push(self.x(i), self.a[i], self.y[i]);
        }
        out
    }

    pub fn from_observations(d: usize, obs: &[Observation]) -> Result<Self> {
        let mut out = Dataset::with_capacity(d, obs.len());
        for o in obs {
            if o.x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: o.x.len(),
                });
            }
            out.push(&o.x, o.a, o.y);
        }
        Ok(out)
    }

    /// CSV with header `x_1,..,x_d,a,y`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header: Vec<String> = (1..=self.d).map(|j| format!("x_{j}")).collect();
        header.push("a".into());
        header.push("y".into());
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut line: Vec<String> = self.x(i).iter().map(|v| v.to_string()).collect();
            line.push(self.a[i].to_string());
            line.push(self.y[i].to_string());
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::config("empty data file"))??;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let d = cols
            .iter()
            .filter(|c| c.starts_with("x_"))
            .count();
        if d == 0 || cols.len() != d + 2 || cols[d] != "a" || cols[d + 1] != "y" {
            return Err(Error::config("data header must be x_1..x_d,a,y"));
        }
        let mut out = Dataset::with_capacity(d, 0);
        let mut x = vec![0.0; d];
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::config(format!("malformed data row {}", lineno + 2));
            if fields.len() != d + 2 {
                return Err(bad());
            }
            for j in 0..d {
                x[j] = fields[j].parse().map_err(|_| bad())?;
            }
            let a: u8 = fields[d].parse().map_err(|_| bad())?;
            if a > 1 {
                return Err(bad());
            }
            let y: f64 = fields[d + 1].parse().map_err(|_| bad())?;
            out.push(&x, a, y);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut ds = Dataset::with_capacity(2, 2);
        ds.push(&[0.25, 0.5], 1, 0.125);
        ds.push(&[0.75, 0.1], 0, -3.0);
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
    }
}
