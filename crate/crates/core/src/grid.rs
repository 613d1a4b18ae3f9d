//! Observation grids: measured or simulated error at `(n, L)` cells.

use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Training-set size.
    pub n: u64,
    /// Storage per example (bytes, or coordinates for the simulated model).
    pub l: f64,
    pub err: f64,
    pub stderr: Option<f64>,
    pub replicates: Option<u32>,
}

impl Observation {
    pub fn new(n: u64, l: f64, err: f64) -> Self {
        Observation { n, l, err, stderr: None, replicates: None }
    }

    fn check(&self) -> Result<()> {
        let ok = self.l.is_finite()
            && self.l > 0.0
            && self.err.is_finite()
            && self.err >= 0.0
            && self.stderr.map_or(true, |s| s.is_finite() && s >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::DomainError(alloc::format!(
                "observation needs finite L > 0, err >= 0, stderr >= 0: {self:?}"
            )))
        }
    }
}

/// Rows of `(n, L, err[, stderr][, replicates])` with unique `(n, L)` cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationGrid {
    rows: Vec<Observation>,
}

impl ObservationGrid {
    pub fn new(rows: Vec<Observation>) -> Result<Self> {
        let mut grid = ObservationGrid { rows: Vec::with_capacity(rows.len()) };
        for row in rows {
            grid.push(row)?;
        }
        Ok(grid)
    }

    pub fn push(&mut self, row: Observation) -> Result<()> {
        row.check()?;
        if self.rows.iter().any(|r| r.n == row.n && r.l == row.l) {
            return Err(Error::DuplicateCell { n: row.n, l: row.l });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn distinct_n(&self) -> usize {
        let mut ns: Vec<u64> = self.rows.iter().map(|r| r.n).collect();
        ns.sort_unstable();
        ns.dedup();
        ns.len()
    }

    pub fn distinct_l(&self) -> usize {
        let mut ls: Vec<f64> = self.rows.iter().map(|r| r.l).collect();
        ls.sort_by(f64::total_cmp);
        ls.dedup();
        ls.len()
    }
}
