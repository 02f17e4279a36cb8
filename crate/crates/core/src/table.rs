use std::fmt;
use std::io;
use std::path::Path;

use crate::error::{Error, Result};

/// Dense real table indexed by `(state, action)`, stored row-major.
///
/// Used for policies (rows are action distributions), softmax parameters,
/// Q-values and advantages.
#[derive(Clone, PartialEq)]
pub struct StateActionTable {
    n_states: usize,
    n_actions: usize,
    data: Vec<f64>,
}

impl StateActionTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::filled(n_states, n_actions, 0.0)
    }

    pub fn filled(n_states: usize, n_actions: usize, value: f64) -> Self {
        Self {
            n_states,
            n_actions,
            data: vec![value; n_states * n_actions],
        }
    }

    /// Uniform action distribution in every state.
    pub fn uniform_policy(n_states: usize, n_actions: usize) -> Self {
        Self::filled(n_states, n_actions, 1.0 / n_actions as f64)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_actions = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != n_actions) {
            return Err(Error::InvalidParameter("ragged table rows".into()));
        }
        Ok(Self {
            n_states: rows.len(),
            n_actions,
            data: rows.concat(),
        })
    }

    pub fn from_vec(n_states: usize, n_actions: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_states * n_actions {
            return Err(Error::InvalidParameter(format!(
                "expected {} entries, got {}",
                n_states * n_actions,
                data.len()
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            data,
        })
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.data[s * self.n_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.data[s * self.n_actions + a] = value;
    }

    #[inline]
    pub fn add(&mut self, s: usize, a: usize, delta: f64) {
        self.data[s * self.n_actions + a] += delta;
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.n_actions..(s + 1) * self.n_actions]
    }

    #[inline]
    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.data[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_actions.max(1))
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_states == other.n_states && self.n_actions == other.n_actions
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert!(self.same_shape(other), "table shapes differ");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    /// Checks every row is a distribution summing to one within `tol`.
    pub fn check_distribution_rows(&self, tol: f64) -> Result<()> {
        for (s, row) in self.rows().enumerate() {
            if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
                return Err(Error::InvalidPolicy(format!(
                    "state {s} has entry {p} outside [0, 1]"
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > tol {
                return Err(Error::InvalidPolicy(format!(
                    "state {s} row sums to {total}"
                )));
            }
        }
        Ok(())
    }

    /// Writes `s,a,value` rows with a header.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["s", "a", "value"])?;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                w.write_record([s.to_string(), a.to_string(), fmt_f64(self.get(s, a))])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads the `s,a,value` format written by [`write_csv`](Self::write_csv).
    /// Missing pairs are rejected.
    pub fn read_csv<R: io::Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut entries = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse_err = |what: &str| Error::InvalidParameter(format!("bad {what} in table csv"));
            let s: usize = rec.get(0).and_then(|v| v.parse().ok()).ok_or_else(|| parse_err("state"))?;
            let a: usize = rec.get(1).and_then(|v| v.parse().ok()).ok_or_else(|| parse_err("action"))?;
            let v: f64 = rec.get(2).and_then(|v| v.parse().ok()).ok_or_else(|| parse_err("value"))?;
            entries.push((s, a, v));
        }
        let n_states = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
        let n_actions = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
        if entries.len() != n_states * n_actions {
            return Err(Error::InvalidParameter("table csv does not cover every pair".into()));
        }
        let mut table = Self::filled(n_states, n_actions, f64::NAN);
        for (s, a, v) in entries {
            table.set(s, a, v);
        }
        if table.data.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("duplicate pair in table csv".into()));
        }
        Ok(table)
    }
}

impl fmt::Debug for StateActionTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for row in self.rows() {
            list.entry(&row);
        }
        list.finish()
    }
}

/// Shortest round-trip decimal representation, used for every CSV float.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}
