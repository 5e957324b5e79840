//! Storage for quantities indexed by unordered variable pairs `i < j`.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Values on the strict upper triangle of a `p × p` matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UpperTri<T> {
    p: usize,
    values: Vec<T>,
}

/// Number of unordered pairs among `p` variables.
#[inline]
pub fn pair_count(p: usize) -> usize {
    p * p.saturating_sub(1) / 2
}

/// All pairs `(i, j)` with `i < j` in row-major order.
pub fn pairs(p: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..p).flat_map(move |i| ((i + 1)..p).map(move |j| (i, j)))
}

impl<T: Clone> UpperTri<T> {
    pub fn filled(p: usize, value: T) -> Self {
        UpperTri {
            p,
            values: vec![value; pair_count(p)],
        }
    }

    pub fn from_fn(p: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        UpperTri {
            p,
            values: pairs(p).map(|(i, j)| f(i, j)).collect(),
        }
    }

    pub fn from_values(p: usize, values: Vec<T>) -> Option<Self> {
        (values.len() == pair_count(p)).then_some(UpperTri { p, values })
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        debug_assert!(i != j && j < self.p);
        i * (2 * self.p - i - 1) / 2 + (j - i - 1)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.values[self.index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let k = self.index(i, j);
        self.values[k] = v;
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &T)> {
        pairs(self.p).zip(self.values.iter())
    }
}

/// Selection pattern of an undirected graph (the off-diagonal of `A`).
pub type Adjacency = UpperTri<bool>;

impl UpperTri<bool> {
    pub fn empty(p: usize) -> Self {
        Self::filled(p, false)
    }

    pub fn complete(p: usize) -> Self {
        Self::filled(p, true)
    }

    pub fn edge_count(&self) -> usize {
        self.values.iter().filter(|v| **v).count()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.iter().filter(|(_, v)| **v).map(|(ij, _)| ij)
    }

    /// Canonical key: one `0`/`1` character per pair in row-major order.
    pub fn key(&self) -> String {
        self.values.iter().map(|v| if *v { '1' } else { '0' }).collect()
    }

    pub fn from_key(p: usize, key: &str) -> Option<Self> {
        let values: Option<Vec<bool>> = key
            .chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect();
        Self::from_values(p, values?)
    }
}

impl fmt::Display for UpperTri<bool> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}
