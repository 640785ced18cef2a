use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::FilterValues;

/// Resolution and overlap for one filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverSpec {
    pub n_intervals: usize,
    pub overlap: f64,
}

impl CoverSpec {
    pub fn new(n_intervals: usize, overlap: f64) -> Self {
        CoverSpec {
            n_intervals,
            overlap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_intervals == 0 {
            return Err(Error::Config("a cover needs at least one interval".into()));
        }
        if !(self.overlap > 0.0 && self.overlap < 1.0) {
            return Err(Error::Config(format!(
                "overlap must lie strictly between 0 and 1, got {}",
                self.overlap
            )));
        }
        Ok(())
    }
}

/// A closed interval of a cover; `index` runs from 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub index: usize,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// The `n` overlapping intervals covering `[a, b]`.
///
/// With `Δ = (b − a)/n`, interval `s` is
/// `[a + (s − 1 − p/2)Δ, a + (s + p/2)Δ]`, so neighbours share a segment of
/// length `pΔ`. A constant range `a = b` yields the single interval `[a, a]`.
pub fn build_cover(range: (f64, f64), spec: CoverSpec) -> Result<Vec<Interval>> {
    spec.validate()?;
    let (a, b) = range;
    if !a.is_finite() || !b.is_finite() || b < a {
        return Err(Error::Config(format!("invalid filter range [{a}, {b}]")));
    }
    if a == b {
        return Ok(vec![Interval {
            lo: a,
            hi: a,
            index: 1,
        }]);
    }
    let p = spec.overlap;
    let delta = (b - a) / spec.n_intervals as f64;
    Ok((1..=spec.n_intervals)
        .map(|s| {
            let s = s as f64;
            Interval {
                lo: a + (s - 1.0 - p / 2.0) * delta,
                hi: a + (s + p / 2.0) * delta,
                index: s as usize,
            }
        })
        .collect())
}

/// A pullback cell: the rows whose filter values fall in one interval per
/// filter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub address: Vec<usize>,
    pub members: Vec<usize>,
}

/// Groups rows into (possibly overlapping) cells. Empty cells are omitted and
/// cells come out in lexicographic address order with ascending members.
pub fn pullback_cells(filters: &[FilterValues], covers: &[Vec<Interval>]) -> Result<Vec<Cell>> {
    if filters.is_empty() {
        return Err(Error::Config("at least one filter is required".into()));
    }
    if filters.len() != covers.len() {
        return Err(Error::Config(format!(
            "{} filters but {} covers",
            filters.len(),
            covers.len()
        )));
    }
    let n = filters[0].len();
    if filters.iter().any(|f| f.len() != n) {
        return Err(Error::Config("filters disagree on the number of rows".into()));
    }

    let mut cells: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    let mut per_filter: Vec<Vec<usize>> = vec![Vec::new(); filters.len()];
    for row in 0..n {
        for ((slots, f), cover) in per_filter.iter_mut().zip(filters).zip(covers) {
            slots.clear();
            let v = f.values[row];
            slots.extend(cover.iter().filter(|iv| iv.contains(v)).map(|iv| iv.index));
        }
        // Cartesian product of the interval indices hit on each axis.
        let mut addresses: Vec<Vec<usize>> = vec![Vec::new()];
        for slots in &per_filter {
            addresses = addresses
                .into_iter()
                .flat_map(|prefix| {
                    slots.iter().map(move |&s| {
                        let mut a = prefix.clone();
                        a.push(s);
                        a
                    })
                })
                .collect();
        }
        for addr in addresses {
            cells.entry(addr).or_default().push(row);
        }
    }
    Ok(cells
        .into_iter()
        .map(|(address, members)| Cell { address, members })
        .collect())
}
