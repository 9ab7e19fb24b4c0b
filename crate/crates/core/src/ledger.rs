//! Content catalog and per-vehicle possession state.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::config::SimConfig;

#[derive(Debug, Error, PartialEq)]
pub enum LedgerError {
    #[error("OBU {obu} already holds content {content}")]
    AlreadyDelivered { obu: usize, content: usize },
    #[error("OBU {obu} does not hold content {content}")]
    NotPossessed { obu: usize, content: usize },
    #[error("cannot credit a negative amount ({0} bits)")]
    NegativeCredit(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContentCatalog {
    pub sizes_bits: Vec<f64>,
}

impl ContentCatalog {
    pub fn len(&self) -> usize {
        self.sizes_bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes_bits.is_empty()
    }

    pub fn size(&self, content: usize) -> f64 {
        self.sizes_bits[content]
    }
}

/// Content sizes drawn uniformly over the configured range.
pub fn init_catalog<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> ContentCatalog {
    let [lo, hi] = cfg.content_size_range_bits;
    let sizes_bits = (0..cfg.n_contents)
        .map(|_| if lo == hi { lo } else { rng.gen_range(lo..=hi) })
        .collect();
    ContentCatalog { sizes_bits }
}

/// Who holds what, plus partial downloads keyed by `(receiver, content)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PossessionLedger {
    n_contents: usize,
    delivered: Vec<bool>,
    progress: BTreeMap<(usize, usize), f64>,
}

impl PossessionLedger {
    /// A ledger from explicit rows. Used by tests and by `init_possession`.
    pub fn from_rows(rows: &[Vec<bool>]) -> Self {
        let n_contents = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_contents), "ragged rows");
        Self {
            n_contents,
            delivered: rows.iter().flatten().copied().collect(),
            progress: BTreeMap::new(),
        }
    }

    pub fn n_obus(&self) -> usize {
        self.delivered.len().checked_div(self.n_contents).unwrap_or(0)
    }

    pub fn n_contents(&self) -> usize {
        self.n_contents
    }

    pub fn has(&self, obu: usize, content: usize) -> bool {
        self.delivered[obu * self.n_contents + content]
    }

    pub fn possessed(&self, obu: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_contents).filter(move |&c| self.has(obu, c))
    }

    pub fn count(&self, obu: usize) -> usize {
        self.possessed(obu).count()
    }

    pub fn total_delivered(&self) -> usize {
        self.delivered.iter().filter(|d| **d).count()
    }

    /// Average number of contents held per OBU.
    pub fn mean_possessed(&self) -> f64 {
        self.total_delivered() as f64 / self.n_obus() as f64
    }

    pub fn progress_bits(&self, obu: usize, content: usize) -> f64 {
        self.progress.get(&(obu, content)).copied().unwrap_or(0.0)
    }

    /// Adds `bits` towards `(rx, c)`; returns `true` when this call completes
    /// the content.
    pub fn credit_bits(
        &mut self,
        rx: usize,
        content: usize,
        bits: f64,
        catalog: &ContentCatalog,
    ) -> Result<bool, LedgerError> {
        if self.has(rx, content) {
            return Err(LedgerError::AlreadyDelivered { obu: rx, content });
        }
        if bits < 0.0 {
            return Err(LedgerError::NegativeCredit(bits));
        }
        if bits == 0.0 {
            return Ok(false);
        }
        let entry = self.progress.entry((rx, content)).or_insert(0.0);
        *entry += bits;
        if *entry >= catalog.size(content) {
            self.progress.remove(&(rx, content));
            self.delivered[rx * self.n_contents + content] = true;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Members of `neighbors` that lack `content`, which `obu` must hold.
    pub fn needy_neighbors(&self, obu: usize, content: usize, neighbors: &[usize]) -> Result<Vec<usize>, LedgerError> {
        if !self.has(obu, content) {
            return Err(LedgerError::NotPossessed { obu, content });
        }
        Ok(neighbors.iter().copied().filter(|&j| !self.has(j, content)).collect())
    }

    /// One line per OBU: `obu: c1 c2 ...` in ascending content order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for obu in 0..self.n_obus() {
            let ids: Vec<String> = self.possessed(obu).map(|c| c.to_string()).collect();
            writeln!(out, "{obu}: {}", ids.join(" ")).unwrap();
        }
        out
    }
}

/// Bernoulli(`init_possession_prob`) possession per `(obu, content)`. Rows that
/// hold nothing or everything are redrawn; after a bounded number of tries a
/// row is repaired by granting or removing one uniformly chosen content.
pub fn init_possession<R: Rng + ?Sized>(cfg: &SimConfig, catalog: &ContentCatalog, rng: &mut R) -> PossessionLedger {
    const REDRAWS: usize = 64;
    let c = catalog.len();
    assert!(c >= 2, "need at least two contents");
    let q = cfg.init_possession_prob;
    let rows: Vec<Vec<bool>> = (0..cfg.n_obus)
        .map(|_| {
            for _ in 0..REDRAWS {
                let row: Vec<bool> = (0..c).map(|_| rng.gen_bool(q)).collect();
                let k = row.iter().filter(|b| **b).count();
                if k >= 1 && k < c {
                    return row;
                }
            }
            let mut row = vec![false; c];
            if q >= 1.0 {
                row = vec![true; c];
                row[rng.gen_range(0..c)] = false;
            } else {
                row[rng.gen_range(0..c)] = true;
            }
            row
        })
        .collect();
    PossessionLedger::from_rows(&rows)
}
