//! Coalition formation among broadcasting OBUs.
//!
//! A coalition is a set of OBUs that broadcast in the same slots. Its plan is
//! the broadcast selection restricted to its members; a member's profit `ψ` is
//! the number of its claimed receivers that still clear the SINR threshold
//! when every member transmits at once (unit fading, residual
//! self-interference included). The coalition value is `α Σψ − C(S)` with
//! `C(S) = μ|S|` for `|S| > 1`.
//!
//! OBUs move between coalitions by switch operations. OBU `i` in `S_k` may
//! join `S_m` (possibly empty) when `V(S_m ∪ {i}) > V(S_k)`, no incumbent of
//! `S_m` loses profit, and `S_m ∪ {i}` is not a coalition `i` has already been
//! a member of during this run (left or joined).

use std::collections::{HashMap, HashSet};
use std::rc::Rc;
use std::time::Instant;

use rand::Rng;
use thiserror::Error;

use crate::radio::{sinr_all, ConcurrentSet, FadingTable, Link};
use crate::selection::{select_broadcasts, BroadcastPlan, NetworkView};

#[derive(Debug, Error, PartialEq)]
pub enum GameError {
    #[error("no convergence after {switches} switches (ceiling {ceiling})")]
    SwitchCeiling { switches: usize, ceiling: usize },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
}

/// Which coalition value drives the switch rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    /// `α Σψ − C(S)` with the incumbent profit guard.
    Profit,
    /// `−α · mean slot estimate − μ|S|`, no profit guard. Stands in for a
    /// delay-minimizing comparison scheme.
    Delay,
}

/// Sorted member list; identifies a coalition.
pub type Fingerprint = Vec<usize>;

#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionEval {
    pub members: Fingerprint,
    /// Records for members only; everybody else is empty.
    pub plan: BroadcastPlan,
    /// `ψ` per member, aligned with `members`. Left empty under the delay
    /// value, which never reads it.
    pub psi: Vec<u32>,
    pub links: Vec<Link>,
    pub utility: f64,
    pub cost: f64,
    pub value: f64,
}

impl CoalitionEval {
    pub fn psi_of(&self, obu: usize) -> Option<u32> {
        self.members
            .binary_search(&obu)
            .ok()
            .and_then(|k| self.psi.get(k).copied())
    }

    /// Profits of members that broadcast something, recomputed when the
    /// evaluation skipped them.
    pub fn broadcaster_psi(&self, view: &NetworkView<'_>) -> Vec<u32> {
        let computed;
        let psi = if self.psi.len() == self.members.len() {
            &self.psi
        } else {
            computed = member_profits(&self.members, &self.links, view);
            &computed
        };
        self.members
            .iter()
            .zip(psi)
            .filter(|(m, _)| self.plan.content_of(**m).is_some())
            .map(|(_, p)| *p)
            .collect()
    }
}

pub fn cost(size: usize, pricing_factor: f64) -> f64 {
    if size > 1 {
        pricing_factor * size as f64
    } else {
        0.0
    }
}

pub fn utility(psi: &[u32], utility_factor: f64) -> f64 {
    utility_factor * psi.iter().map(|&p| f64::from(p)).sum::<f64>()
}

/// Selection restricted to `members`, then per-member profit under the
/// coalition's full concurrent set.
pub fn coalition_plan(members: &[usize], view: &NetworkView<'_>) -> (BroadcastPlan, Vec<u32>) {
    let plan = select_broadcasts(members, view);
    let psi = member_profits(members, &plan.links(), view);
    (plan, psi)
}

/// `ψ` of each member: its links that clear the threshold when all of
/// `links` are active (unit fading, self-interference included).
pub fn member_profits(members: &[usize], links: &[Link], view: &NetworkView<'_>) -> Vec<u32> {
    let n = view.n_obus();
    let set = ConcurrentSet::new(n, links.to_vec(), view.cfg.max_beams)
        .expect("selection output satisfies the concurrency constraints");
    let sinrs = sinr_all(&set, &FadingTable::unit(n), view.geometry, view.cfg);
    let mut per_obu = vec![0u32; n];
    for (l, s) in links.iter().zip(sinrs) {
        if s >= view.cfg.sinr_threshold {
            per_obu[l.tx] += 1;
        }
    }
    members.iter().map(|&m| per_obu[m]).collect()
}

/// Mean slot estimate over the scheduled links, 0 when there are none.
pub fn mean_slot_estimate(plan: &BroadcastPlan, view: &NetworkView<'_>) -> f64 {
    let links = plan.links();
    if links.is_empty() {
        return 0.0;
    }
    let total: f64 = links
        .iter()
        .map(|l| {
            let c = plan.content_of(l.tx).expect("linked broadcasters have content");
            view.estimate_t(l.tx, l.rx, c).expect("receivers are neighbors")
        })
        .sum();
    total / links.len() as f64
}

pub fn delay_value(plan: &BroadcastPlan, size: usize, view: &NetworkView<'_>) -> f64 {
    -view.cfg.utility_factor * mean_slot_estimate(plan, view) - view.cfg.pricing_factor * size as f64
}

/// Fresh (uncached) evaluation of one coalition.
pub fn evaluate(members: &[usize], view: &NetworkView<'_>, kind: ValueKind) -> CoalitionEval {
    let mut members = members.to_vec();
    members.sort_unstable();
    members.dedup();
    let plan = select_broadcasts(&members, view);
    let links = plan.links();
    let (psi, utility, cost, value) = match kind {
        ValueKind::Profit => {
            let psi = member_profits(&members, &links, view);
            let u = utility(&psi, view.cfg.utility_factor);
            let c = cost(members.len(), view.cfg.pricing_factor);
            (psi, u, c, u - c)
        }
        ValueKind::Delay => {
            let c = view.cfg.pricing_factor * members.len() as f64;
            let v = delay_value(&plan, members.len(), view);
            (Vec::new(), v + c, c, v)
        }
    };
    CoalitionEval {
        members,
        plan,
        psi,
        links,
        utility,
        cost,
        value,
    }
}

/// Memoizes coalition evaluations for one network snapshot.
pub struct Evaluator<'a> {
    view: NetworkView<'a>,
    kind: ValueKind,
    cache: HashMap<Fingerprint, Rc<CoalitionEval>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(view: NetworkView<'a>, kind: ValueKind) -> Self {
        Self {
            view,
            kind,
            cache: HashMap::new(),
        }
    }

    pub fn view(&self) -> &NetworkView<'a> {
        &self.view
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
    }

    pub fn eval(&mut self, members: &[usize]) -> Rc<CoalitionEval> {
        if let Some(e) = self.cache.get(members) {
            return Rc::clone(e);
        }
        let e = Rc::new(evaluate(members, &self.view, self.kind));
        self.cache.insert(members.to_vec(), Rc::clone(&e));
        e
    }

    /// Whether `i`, currently in `current`, strictly prefers joining `target`
    /// (which must not contain `i`; empty means going alone).
    pub fn prefers(&mut self, i: usize, target: &[usize], current: &[usize]) -> bool {
        debug_assert!(current.contains(&i) && !target.contains(&i));
        self.prefers_joined(target, &with_member(target, i), current)
    }

    /// `prefers` with `joined = target ∪ {i}` already built.
    fn prefers_joined(&mut self, target: &[usize], joined: &[usize], current: &[usize]) -> bool {
        let after = self.eval(joined);
        let before = self.eval(current);
        if !(after.value > before.value) {
            return false;
        }
        if self.kind == ValueKind::Profit && !target.is_empty() {
            let incumbents = self.eval(target);
            for (k, &j) in incumbents.members.iter().enumerate() {
                let now = after.psi_of(j).expect("incumbent stays in the joined coalition");
                if now < incumbents.psi[k] {
                    return false;
                }
            }
        }
        true
    }
}

fn with_member(coalition: &[usize], i: usize) -> Fingerprint {
    let mut v = coalition.to_vec();
    let pos = v.binary_search(&i).unwrap_or_else(|p| p);
    v.insert(pos, i);
    v
}

/// Disjoint cover of the OBUs, coalitions kept sorted by fingerprint.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    coalitions: Vec<Fingerprint>,
}

impl Partition {
    pub fn singletons(n: usize) -> Self {
        Self {
            coalitions: (0..n).map(|i| vec![i]).collect(),
        }
    }

    /// Each OBU joins one of `n` labelled groups uniformly at random.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut groups = vec![Vec::new(); n];
        for i in 0..n {
            groups[rng.gen_range(0..n)].push(i);
        }
        Self::from_coalitions(groups, n).expect("random grouping is a cover")
    }

    pub fn from_coalitions(coalitions: Vec<Vec<usize>>, n: usize) -> Result<Self, GameError> {
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for mut c in coalitions {
            if c.is_empty() {
                continue;
            }
            c.sort_unstable();
            for &i in &c {
                if i >= n {
                    return Err(GameError::InvalidPartition(format!("OBU {i} out of range")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(GameError::InvalidPartition(format!("OBU {i} appears twice")));
                }
            }
            out.push(c);
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(GameError::InvalidPartition(format!("OBU {i} is uncovered")));
        }
        out.sort();
        Ok(Self { coalitions: out })
    }

    pub fn coalitions(&self) -> &[Fingerprint] {
        &self.coalitions
    }

    pub fn n_obus(&self) -> usize {
        self.coalitions.iter().map(Vec::len).sum()
    }

    pub fn coalition_of(&self, i: usize) -> &Fingerprint {
        self.coalitions
            .iter()
            .find(|c| c.binary_search(&i).is_ok())
            .expect("every OBU is covered")
    }

    /// Moves `i` out of its coalition and into `target` (empty for alone).
    fn switch(&mut self, i: usize, target: &[usize]) {
        let mut next: Vec<Fingerprint> = Vec::with_capacity(self.coalitions.len() + 1);
        for c in self.coalitions.drain(..) {
            if c.as_slice() == target {
                continue;
            }
            if c.binary_search(&i).is_ok() {
                let rest: Vec<usize> = c.into_iter().filter(|&m| m != i).collect();
                if !rest.is_empty() {
                    next.push(rest);
                }
            } else {
                next.push(c);
            }
        }
        next.push(with_member(target, i));
        next.sort();
        self.coalitions = next;
    }
}

/// One admitted switch, recorded for audits.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchEvent {
    pub obu: usize,
    pub from: Fingerprint,
    /// The joined coalition before `obu` entered it.
    pub to: Fingerprint,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GameTrace {
    pub switch_count: usize,
    /// Distinct partitions seen, including the initial one.
    pub visited_partitions: usize,
    pub wallclock_s: f64,
    pub switches: Vec<SwitchEvent>,
}

/// Candidate targets for `i`: every other coalition plus the empty one (when
/// `i` is not already alone), in ascending fingerprint order.
fn candidates(partition: &Partition, i: usize) -> Vec<Fingerprint> {
    let current = partition.coalition_of(i);
    let mut out = Vec::with_capacity(partition.coalitions.len());
    if current.len() > 1 {
        out.push(Vec::new());
    }
    out.extend(
        partition
            .coalitions
            .iter()
            .filter(|c| c.binary_search(&i).is_err())
            .cloned(),
    );
    out
}

/// Runs switch operations until a full pass over all OBUs admits none.
///
/// OBUs are drawn uniformly at random; an OBU already found idle since the
/// last switch is skipped without re-evaluation since nothing it depends on
/// has changed.
pub fn form_partition<R: Rng + ?Sized>(
    initial: Partition,
    evaluator: &mut Evaluator<'_>,
    ceiling: usize,
    rng: &mut R,
) -> Result<(Partition, GameTrace), GameError> {
    let start = Instant::now();
    let n = initial.n_obus();
    let mut partition = initial;
    let mut trace = GameTrace::default();
    let mut history: Vec<HashSet<Fingerprint>> = vec![HashSet::new(); n];
    let mut visited: HashSet<Partition> = HashSet::new();
    visited.insert(partition.clone());

    let mut idle = vec![false; n];
    let mut remaining = n;
    while remaining > 0 {
        let i = rng.gen_range(0..n);
        if idle[i] {
            continue;
        }
        let current = partition.coalition_of(i).clone();
        let mut chosen = None;
        let alone = if current.len() > 1 { Some(Vec::new()) } else { None };
        for target in alone.iter().chain(partition.coalitions.iter()) {
            if target.binary_search(&i).is_ok() {
                continue;
            }
            let joined = with_member(target, i);
            if history[i].contains(&joined) {
                continue;
            }
            if evaluator.prefers_joined(target, &joined, &current) {
                chosen = Some(target.clone());
                break;
            }
        }
        match chosen {
            None => {
                idle[i] = true;
                remaining -= 1;
            }
            Some(target) => {
                // Both ends count as visited. Recording only the coalition
                // left lets an OBU re-enter a coalition it joined earlier
                // once the others walked out, which can cycle forever.
                history[i].insert(current.clone());
                history[i].insert(with_member(&target, i));
                partition.switch(i, &target);
                trace.switch_count += 1;
                trace.switches.push(SwitchEvent {
                    obu: i,
                    from: current,
                    to: target,
                });
                visited.insert(partition.clone());
                if trace.switch_count > ceiling {
                    return Err(GameError::SwitchCeiling {
                        switches: trace.switch_count,
                        ceiling,
                    });
                }
                idle.iter_mut().for_each(|x| *x = false);
                remaining = n;
            }
        }
    }
    trace.visited_partitions = visited.len();
    trace.wallclock_s = start.elapsed().as_secs_f64();
    Ok((partition, trace))
}

/// Exhaustive check, ignoring visit history, that no OBU strictly prefers any
/// other coalition of `partition` or going alone.
pub fn is_nash_stable(partition: &Partition, view: NetworkView<'_>, kind: ValueKind) -> bool {
    first_deviation(partition, view, kind).is_none()
}

/// A profitable unilateral deviation `(obu, target)`, if any exists.
pub fn first_deviation(partition: &Partition, view: NetworkView<'_>, kind: ValueKind) -> Option<(usize, Fingerprint)> {
    let mut fresh = Evaluator::new(view, kind);
    for i in 0..partition.n_obus() {
        let current = partition.coalition_of(i).clone();
        for target in candidates(partition, i) {
            if fresh.prefers(i, &target, &current) {
                return Some((i, target));
            }
        }
    }
    None
}

/// The coalition that gets airtime: highest value among coalitions that
/// schedule at least one link, ties to the smallest fingerprint.
pub fn active_coalition(partition: &Partition, evaluator: &mut Evaluator<'_>) -> Option<Rc<CoalitionEval>> {
    let mut best: Option<Rc<CoalitionEval>> = None;
    for c in partition.coalitions() {
        let e = evaluator.eval(c);
        if e.links.is_empty() {
            continue;
        }
        if best.as_ref().is_none_or(|b| e.value > b.value) {
            best = Some(e);
        }
    }
    best
}
