//! Broadcast content selection.
//!
//! Every broadcaster picks one possessed content and up to `B_t` receivers.
//! A content is ranked by how many unclaimed neighbors need it (capped at
//! `B_t`); ties go to the content whose slowest kept receiver needs the fewest
//! slots. Receivers are kept in order of increasing slot estimate. Broadcasters
//! are served in ascending id order and each claimed receiver becomes
//! unavailable to the ones after it.

use thiserror::Error;

use crate::config::SimConfig;
use crate::ledger::{ContentCatalog, PossessionLedger};
use crate::radio::{slots_needed, Geometry, Link};

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("OBU {rx} is not a neighbor of OBU {tx}")]
    NotNeighbor { tx: usize, rx: usize },
}

/// Everything selection and the game read about the network in one epoch.
#[derive(Debug, Clone, Copy)]
pub struct NetworkView<'a> {
    pub cfg: &'a SimConfig,
    pub geometry: &'a Geometry,
    pub ledger: &'a PossessionLedger,
    pub catalog: &'a ContentCatalog,
}

impl NetworkView<'_> {
    pub fn n_obus(&self) -> usize {
        self.geometry.len()
    }

    /// Slots needed to move content `c` over the interference-free link `i -> j`.
    pub fn estimate_t(&self, i: usize, j: usize, c: usize) -> Result<f64, SelectionError> {
        if i == j || !self.geometry.is_neighbor(i, j) {
            return Err(SelectionError::NotNeighbor { tx: i, rx: j });
        }
        Ok(self.slots(i, j, c))
    }

    fn slots(&self, i: usize, j: usize, c: usize) -> f64 {
        slots_needed(self.catalog.size(c), self.geometry.clear_rate(i, j), self.cfg)
            .expect("neighbor links have a positive rate")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BroadcastRecord {
    pub content: Option<usize>,
    /// Claimed receivers, in order of increasing slot estimate.
    pub receivers: Vec<usize>,
}

/// Per-OBU broadcast decision, indexed by OBU id.
#[derive(Debug, Clone, PartialEq)]
pub struct BroadcastPlan {
    pub records: Vec<BroadcastRecord>,
}

impl BroadcastPlan {
    pub fn empty(n: usize) -> Self {
        Self {
            records: vec![BroadcastRecord::default(); n],
        }
    }

    pub fn content_of(&self, obu: usize) -> Option<usize> {
        self.records[obu].content
    }

    pub fn receivers_of(&self, obu: usize) -> &[usize] {
        &self.records[obu].receivers
    }

    /// All scheduled links, broadcaster-major.
    pub fn links(&self) -> Vec<Link> {
        let mut out = Vec::with_capacity(self.records.iter().map(|r| r.receivers.len()).sum());
        for (tx, r) in self.records.iter().enumerate() {
            out.extend(r.receivers.iter().map(|&rx| Link::new(tx, rx)));
        }
        out
    }

    pub fn broadcasters(&self) -> impl Iterator<Item = usize> + '_ {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.content.is_some())
            .map(|(i, _)| i)
    }

    /// Checks the structural invariants against the network view: receiver
    /// budget, exclusive receivers, possession of the broadcast content,
    /// and that receivers are needy neighbors.
    pub fn violations(&self, view: &NetworkView<'_>) -> Vec<String> {
        let mut out = Vec::new();
        let mut claimed_by = vec![None; self.records.len()];
        for (i, r) in self.records.iter().enumerate() {
            match r.content {
                None if !r.receivers.is_empty() => out.push(format!("OBU {i} has receivers but no content")),
                None => {}
                Some(c) => {
                    if !view.ledger.has(i, c) {
                        out.push(format!("OBU {i} broadcasts unpossessed content {c}"));
                    }
                    if r.receivers.is_empty() {
                        out.push(format!("OBU {i} broadcasts to nobody"));
                    }
                    if r.receivers.len() > view.cfg.max_beams {
                        out.push(format!("OBU {i} claims {} receivers", r.receivers.len()));
                    }
                    for &j in &r.receivers {
                        if let Some(prev) = claimed_by[j].replace(i) {
                            out.push(format!("OBU {j} claimed by {prev} and {i}"));
                        }
                        if !view.geometry.is_neighbor(i, j) {
                            out.push(format!("OBU {j} is not a neighbor of {i}"));
                        }
                        if view.ledger.has(j, c) {
                            out.push(format!("OBU {j} already holds content {c}"));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Best `(content, receivers)` for broadcaster `i` given receivers already
/// claimed by earlier broadcasters. `ops` counts (content, neighbor) visits.
pub fn choose_for(i: usize, claimed: &[bool], view: &NetworkView<'_>, ops: &mut u64) -> Option<(usize, Vec<usize>)> {
    let budget = view.cfg.max_beams;
    // For a fixed content T is inversely proportional to the clear rate, so
    // the rate order is the (T, id) order.
    let order = view.geometry.neighbors_by_rate(i);
    let mut best: Option<(usize, f64, usize, Vec<usize>)> = None;
    let mut picked: Vec<usize> = Vec::with_capacity(budget);
    for c in view.ledger.possessed(i) {
        picked.clear();
        for &j in order {
            *ops += 1;
            if !claimed[j] && !view.ledger.has(j, c) {
                picked.push(j);
                if picked.len() == budget {
                    break;
                }
            }
        }
        let Some(&last) = picked.last() else {
            continue;
        };
        let count = picked.len();
        let max_t = view.slots(i, last, c);
        let better = match &best {
            None => true,
            Some((bc, bt, _, _)) => count > *bc || (count == *bc && max_t < *bt),
        };
        if better {
            best = Some((count, max_t, c, picked.clone()));
        }
    }
    best.map(|(_, _, c, r)| (c, r))
}

/// Runs selection for `broadcasters` (any order; processed ascending). OBUs
/// outside the list get empty records but may still be claimed as receivers.
pub fn select_broadcasts(broadcasters: &[usize], view: &NetworkView<'_>) -> BroadcastPlan {
    select_broadcasts_counted(broadcasters, view).0
}

pub fn select_broadcasts_counted(broadcasters: &[usize], view: &NetworkView<'_>) -> (BroadcastPlan, u64) {
    let n = view.n_obus();
    let mut order = broadcasters.to_vec();
    order.sort_unstable();
    order.dedup();
    let mut plan = BroadcastPlan::empty(n);
    let mut claimed = vec![false; n];
    let mut ops = 0;
    for i in order {
        if let Some((c, receivers)) = choose_for(i, &claimed, view, &mut ops) {
            for &j in &receivers {
                claimed[j] = true;
            }
            plan.records[i] = BroadcastRecord {
                content: Some(c),
                receivers,
            };
        }
    }
    (plan, ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::ObuState;

    fn line(positions: &[f64]) -> Vec<ObuState> {
        positions
            .iter()
            .enumerate()
            .map(|(id, &x)| ObuState {
                obu_id: id,
                lane: 0,
                pos_m: x,
                speed_mps: 30.0,
            })
            .collect()
    }

    struct Fixture {
        cfg: SimConfig,
        geom: Geometry,
        ledger: PossessionLedger,
        catalog: ContentCatalog,
    }

    impl Fixture {
        fn new(positions: &[f64], rows: &[Vec<bool>], sizes: &[f64]) -> Self {
            let cfg = SimConfig::default();
            let geom = Geometry::new(&line(positions), &cfg);
            Self {
                geom,
                ledger: PossessionLedger::from_rows(rows),
                catalog: ContentCatalog {
                    sizes_bits: sizes.to_vec(),
                },
                cfg,
            }
        }

        fn view(&self) -> NetworkView<'_> {
            NetworkView {
                cfg: &self.cfg,
                geometry: &self.geom,
                ledger: &self.ledger,
                catalog: &self.catalog,
            }
        }
    }

    #[test]
    fn estimate_matches_slot_arithmetic() {
        let f = Fixture::new(
            &[0.0, 100.0, 50.0],
            &[vec![true, false], vec![false, true], vec![false, false]],
            &[50e6, 100e6],
        );
        let v = f.view();
        let t = v.estimate_t(0, 1, 0).unwrap();
        let expected = 50e6 / (f.geom.clear_rate(0, 1) * 1e-4);
        assert!((t - expected).abs() < 1e-9);
        assert!(v.estimate_t(0, 2, 0).unwrap() < t);
        assert!(v.estimate_t(0, 1, 1).unwrap() > t);
        assert_eq!(v.estimate_t(0, 0, 0), Err(SelectionError::NotNeighbor { tx: 0, rx: 0 }));
    }

    #[test]
    fn strict_count_dominance() {
        // OBU 0 holds c0 and c1; 1, 2, 3 lack c0; only 1 lacks c1.
        let f = Fixture::new(
            &[0.0, 100.0, 200.0, 300.0],
            &[
                vec![true, true],
                vec![false, false],
                vec![false, true],
                vec![false, true],
            ],
            &[400e6, 50e6],
        );
        let plan = select_broadcasts(&[0], &f.view());
        assert_eq!(plan.content_of(0), Some(0));
        assert_eq!(plan.receivers_of(0), &[1, 2, 3]);
    }

    #[test]
    fn tied_counts_go_to_the_faster_content() {
        // Two needy receivers per content; c0 is smaller, so its max T is lower.
        let f = Fixture::new(
            &[0.0, 100.0, 200.0, 300.0, 400.0],
            &[
                vec![true, true],
                vec![false, true],
                vec![false, true],
                vec![true, false],
                vec![true, false],
            ],
            &[80e6, 95e6],
        );
        let v = f.view();
        let t0 = v.estimate_t(0, 2, 0).unwrap();
        let t1 = v.estimate_t(0, 4, 1).unwrap();
        assert!(t0 < t1);
        let plan = select_broadcasts(&[0], &v);
        assert_eq!(plan.content_of(0), Some(0));
        assert_eq!(plan.receivers_of(0), &[1, 2]);
    }

    #[test]
    fn pruning_keeps_fastest_receivers() {
        let positions = [0.0, 500.0, 100.0, 1400.0, 200.0, 300.0];
        let f = Fixture::new(
            &positions,
            &[
                vec![true, false],
                vec![false, false],
                vec![false, false],
                vec![false, false],
                vec![false, false],
                vec![false, false],
            ],
            &[100e6, 100e6],
        );
        let plan = select_broadcasts(&[0], &f.view());
        assert_eq!(plan.receivers_of(0), &[2, 4, 5]);
    }

    #[test]
    fn claims_are_exclusive_and_idle_obus_broadcast_nothing() {
        let f = Fixture::new(
            &[0.0, 100.0, 200.0, 300.0],
            &[
                vec![true, false],
                vec![true, false],
                vec![false, true],
                vec![false, true],
            ],
            &[100e6, 100e6],
        );
        let plan = select_broadcasts(&[0, 1, 2, 3], &f.view());
        assert!(plan.violations(&f.view()).is_empty());
        // 0 grabs both needy OBUs (2, 3) for c0; 1 has nobody left for c0.
        assert_eq!(plan.receivers_of(0), &[2, 3]);
        assert_eq!(plan.content_of(1), None);
        // 2 and 3 serve c1 to whoever is still free.
        assert_eq!(plan.receivers_of(2), &[1, 0]);
        assert_eq!(plan.content_of(3), None);
    }

    #[test]
    fn everyone_saturated_means_silence() {
        let f = Fixture::new(&[0.0, 100.0], &[vec![true, false], vec![true, false]], &[1e6, 1e6]);
        let plan = select_broadcasts(&[0, 1], &f.view());
        assert!(plan.links().is_empty());
        assert_eq!(plan.broadcasters().count(), 0);
    }

    #[test]
    fn operation_count_is_bounded() {
        let n = 12;
        let positions: Vec<f64> = (0..n).map(|k| k as f64 * 120.0).collect();
        let rows: Vec<Vec<bool>> = (0..n)
            .map(|i| (0..20).map(|c| (i * 7 + c * 3) % 5 == 0).collect())
            .collect();
        let f = Fixture::new(&positions, &rows, &[100e6; 20]);
        let all: Vec<usize> = (0..n).collect();
        let (_, ops) = select_broadcasts_counted(&all, &f.view());
        assert!(ops <= (20 * n * (n - 1)) as u64);
    }
}
