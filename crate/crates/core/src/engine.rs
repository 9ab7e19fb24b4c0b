//! Epoch loop: mobility, fading, selection, coalition formation, and slotted
//! transmission, for the coalition schemes and the uncoordinated baseline.

use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use thiserror::Error;

use crate::config::{linear_to_db, SimConfig};
use crate::game::{active_coalition, form_partition, Evaluator, GameError, GameTrace, Partition, ValueKind};
use crate::ledger::{init_catalog, init_possession, ContentCatalog, LedgerError, PossessionLedger};
use crate::mobility::{advance, initial_placement, MobilityError, ObuState};
use crate::radio::{capacity, sinr_all, ConcurrentSet, FadingTable, Geometry, Link, RadioError};
use crate::rng::Streams;
use crate::selection::{select_broadcasts, NetworkView};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("all {0} slots already simulated")]
    Finished(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    FdCoalition,
    DelayCoalition,
    NonCooperative,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::FdCoalition, Scheme::DelayCoalition, Scheme::NonCooperative];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::FdCoalition => "fd-coalition",
            Scheme::DelayCoalition => "delay-coalition",
            Scheme::NonCooperative => "non-coop",
        }
    }

    fn value_kind(self) -> Option<ValueKind> {
        match self {
            Scheme::FdCoalition => Some(ValueKind::Profit),
            Scheme::DelayCoalition => Some(ValueKind::Delay),
            Scheme::NonCooperative => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown scheme {s:?} (expected fd-coalition, delay-coalition or non-coop)"))
    }
}

/// Jain's index `(Σx)² / (n Σx²)`; 1 for an all-zero vector.
pub fn jain_fairness(profits: &[f64]) -> f64 {
    assert!(!profits.is_empty(), "fairness of an empty profit vector");
    let sum: f64 = profits.iter().sum();
    let sq: f64 = profits.iter().map(|x| x * x).sum();
    if sq == 0.0 {
        1.0
    } else {
        sum * sum / (profits.len() as f64 * sq)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch_index: usize,
    pub start_slot: usize,
    pub scheme: Scheme,
    pub mean_possessed: f64,
    /// Over the active broadcasters; `None` when nobody broadcast.
    pub fairness: Option<f64>,
    pub switches: usize,
    /// Zero unless wall-clock timing is enabled.
    pub game_wallclock_s: f64,
    pub active_coalition_size: usize,
    pub broadcasters: usize,
    pub deliveries_this_epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub scheme: Scheme,
    pub master_seed: u64,
    pub n_obus: usize,
    pub th_min_db: f64,
    pub si_exp: f64,
    pub initial_mean_possessed: f64,
    pub final_mean_possessed: f64,
    /// Unweighted mean over epochs with at least one broadcaster; `None` if
    /// there were none.
    pub mean_fairness: Option<f64>,
    pub total_switches: usize,
    pub total_game_wallclock_us: f64,
    pub total_deliveries: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub epochs: Vec<EpochMetrics>,
    pub summary: RunSummary,
}

/// `-log10 β`, or infinity for perfect cancellation.
pub fn si_exponent(beta: f64) -> f64 {
    -beta.log10()
}

/// Per-link outcome of one epoch's transmission window.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Transmission {
    link: Link,
    content: usize,
    /// Whether progress can be credited (the receiver lacks the content).
    useful: bool,
}

/// One replication's mutable state.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: SimConfig,
    scheme: Scheme,
    states: Vec<ObuState>,
    catalog: ContentCatalog,
    ledger: PossessionLedger,
    streams: Streams,
    epoch: usize,
    slot: usize,
    timing: bool,
}

impl Simulation {
    pub fn new(cfg: &SimConfig, scheme: Scheme, replication: u64) -> Result<Self, EngineError> {
        cfg.validate()?;
        let mut streams = Streams::new(cfg.master_seed, replication);
        let states = initial_placement(cfg, &mut streams.mobility)?;
        let catalog = init_catalog(cfg, &mut streams.possession);
        let ledger = init_possession(cfg, &catalog, &mut streams.possession);
        Ok(Self {
            cfg: cfg.clone(),
            scheme,
            states,
            catalog,
            ledger,
            streams,
            epoch: 0,
            slot: 0,
            timing: false,
        })
    }

    /// Record game wall-clock time in the metrics. Off by default so that
    /// metric streams replay bit for bit.
    pub fn with_timing(mut self, on: bool) -> Self {
        self.timing = on;
        self
    }

    pub fn ledger(&self) -> &PossessionLedger {
        &self.ledger
    }

    pub fn catalog(&self) -> &ContentCatalog {
        &self.catalog
    }

    pub fn states(&self) -> &[ObuState] {
        &self.states
    }

    pub fn is_finished(&self) -> bool {
        self.slot >= self.cfg.n_slots
    }

    pub fn run_epoch(&mut self) -> Result<EpochMetrics, EngineError> {
        if self.is_finished() {
            return Err(EngineError::Finished(self.cfg.n_slots));
        }
        let cfg = &self.cfg;
        let interval = cfg.mobility_update_interval_slots;
        let window = interval.min(cfg.n_slots - self.slot);

        self.states = advance(&self.states, interval, cfg, &mut self.streams.mobility);
        let n = self.states.len();
        let fading = FadingTable::draw(n, cfg.nakagami_m, &mut self.streams.fading);
        let geometry = Geometry::new(&self.states, cfg);

        let (transmissions, psi, switches, wallclock, active_size) = match self.scheme.value_kind() {
            Some(kind) => {
                let view = NetworkView {
                    cfg,
                    geometry: &geometry,
                    ledger: &self.ledger,
                    catalog: &self.catalog,
                };
                coalition_round(view, kind, &mut self.streams.game_order)?
            }
            None => {
                let view = NetworkView {
                    cfg,
                    geometry: &geometry,
                    ledger: &self.ledger,
                    catalog: &self.catalog,
                };
                let (tx, psi) = uncoordinated_round(view, &mut self.streams.baseline)?;
                (tx, psi, 0, 0.0, 0)
            }
        };
        let broadcasters = psi.len();

        let deliveries = transmit(
            &transmissions,
            window,
            &fading,
            &geometry,
            cfg,
            &self.catalog,
            &mut self.ledger,
        )?;

        let fairness = if psi.is_empty() {
            None
        } else {
            let p: Vec<f64> = psi.iter().map(|&x| f64::from(x)).collect();
            Some(jain_fairness(&p))
        };
        let metrics = EpochMetrics {
            epoch_index: self.epoch,
            start_slot: self.slot,
            scheme: self.scheme,
            mean_possessed: self.ledger.mean_possessed(),
            fairness,
            switches,
            game_wallclock_s: if self.timing { wallclock } else { 0.0 },
            active_coalition_size: active_size,
            broadcasters,
            deliveries_this_epoch: deliveries,
        };
        self.epoch += 1;
        self.slot += window;
        Ok(metrics)
    }
}

type Round = (Vec<Transmission>, Vec<u32>, usize, f64, usize);

/// Selection, game, and activation of the highest-value coalition.
fn coalition_round<R: Rng + ?Sized>(view: NetworkView<'_>, kind: ValueKind, rng: &mut R) -> Result<Round, EngineError> {
    let n = view.n_obus();
    let everyone: Vec<usize> = (0..n).collect();
    let global = select_broadcasts(&everyone, &view);
    if global.links().is_empty() {
        return Ok((Vec::new(), Vec::new(), 0, 0.0, 0));
    }
    let initial = if view.cfg.random_initial_partition {
        Partition::random(n, rng)
    } else {
        Partition::singletons(n)
    };
    let mut evaluator = Evaluator::new(view, kind);
    let (partition, trace): (Partition, GameTrace) =
        form_partition(initial, &mut evaluator, view.cfg.switch_ceiling, rng)?;
    let Some(active) = active_coalition(&partition, &mut evaluator) else {
        return Ok((Vec::new(), Vec::new(), trace.switch_count, trace.wallclock_s, 0));
    };
    let transmissions = active
        .links
        .iter()
        .map(|&link| Transmission {
            link,
            content: active.plan.content_of(link.tx).expect("linked broadcaster has content"),
            useful: true,
        })
        .collect();
    Ok((
        transmissions,
        active.broadcaster_psi(&view),
        trace.switch_count,
        trace.wallclock_s,
        active.members.len(),
    ))
}

/// Every OBU broadcasts a random possessed content to up to `B_t` random
/// neighbors; a receiver picked by several OBUs listens to one of them.
fn uncoordinated_round<R: Rng + ?Sized>(
    view: NetworkView<'_>,
    rng: &mut R,
) -> Result<(Vec<Transmission>, Vec<u32>), EngineError> {
    let n = view.n_obus();
    let cfg = view.cfg;
    let mut choice: Vec<Option<usize>> = vec![None; n];
    let mut claimants: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let held: Vec<usize> = view.ledger.possessed(i).collect();
        let Some(&c) = held.choose(rng) else {
            continue;
        };
        choice[i] = Some(c);
        let nb = view.geometry.neighbors(i);
        let k = cfg.max_beams.min(nb.len());
        let mut picks: Vec<usize> = index::sample(rng, nb.len(), k).into_iter().map(|x| nb[x]).collect();
        picks.sort_unstable();
        for j in picks {
            claimants[j].push(i);
        }
    }
    let mut transmissions = Vec::new();
    for (rx, tx_list) in claimants.iter().enumerate() {
        let Some(&tx) = tx_list.choose(rng) else {
            continue;
        };
        let content = choice[tx].expect("claimant chose a content");
        transmissions.push(Transmission {
            link: Link::new(tx, rx),
            content,
            useful: !view.ledger.has(rx, content),
        });
    }
    transmissions.sort_by_key(|t| t.link);

    let links: Vec<Link> = transmissions.iter().map(|t| t.link).collect();
    let set = ConcurrentSet::new(n, links, cfg.max_beams)?;
    let sinrs = sinr_all(&set, &FadingTable::unit(n), view.geometry, cfg);
    let mut psi = vec![0u32; n];
    let mut broadcasting = vec![false; n];
    for (t, s) in transmissions.iter().zip(sinrs) {
        broadcasting[t.link.tx] = true;
        if t.useful && s >= cfg.sinr_threshold {
            psi[t.link.tx] += 1;
        }
    }
    let psi = (0..n).filter(|&i| broadcasting[i]).map(|i| psi[i]).collect();
    Ok((transmissions, psi))
}

/// Runs the epoch's slots. A link only carries data while its faded,
/// interfered SINR clears the threshold; a receiver that completes its
/// content stops listening and the remaining links are re-evaluated.
fn transmit(
    transmissions: &[Transmission],
    window: usize,
    fading: &FadingTable,
    geometry: &Geometry,
    cfg: &SimConfig,
    catalog: &ContentCatalog,
    ledger: &mut PossessionLedger,
) -> Result<usize, EngineError> {
    let n = geometry.len();
    // Links to receivers that already hold the content keep radiating.
    let mut live: Vec<bool> = vec![true; transmissions.len()];
    let mut bits_per_slot: Vec<f64> = Vec::new();
    let mut dirty = true;
    let mut deliveries = 0;
    for _ in 0..window {
        if dirty {
            let links: Vec<Link> = transmissions
                .iter()
                .zip(&live)
                .filter(|(_, l)| **l)
                .map(|(t, _)| t.link)
                .collect();
            let set = ConcurrentSet::new(n, links, cfg.max_beams)?;
            let sinrs = sinr_all(&set, fading, geometry, cfg);
            let mut k = 0;
            bits_per_slot = live
                .iter()
                .map(|&l| {
                    if !l {
                        return 0.0;
                    }
                    let s = sinrs[k];
                    k += 1;
                    if s >= cfg.sinr_threshold {
                        capacity(s, cfg) * cfg.slot_duration_s
                    } else {
                        0.0
                    }
                })
                .collect();
            dirty = false;
        }
        for (idx, t) in transmissions.iter().enumerate() {
            if !live[idx] || !t.useful || bits_per_slot[idx] == 0.0 {
                continue;
            }
            if ledger.credit_bits(t.link.rx, t.content, bits_per_slot[idx], catalog)? {
                deliveries += 1;
                live[idx] = false;
                dirty = true;
            }
        }
    }
    Ok(deliveries)
}

/// Runs every epoch of one replication.
pub fn run_simulation(cfg: &SimConfig, scheme: Scheme, replication: u64) -> Result<RunOutput, EngineError> {
    run_simulation_timed(cfg, scheme, replication, false)
}

pub fn run_simulation_timed(
    cfg: &SimConfig,
    scheme: Scheme,
    replication: u64,
    timing: bool,
) -> Result<RunOutput, EngineError> {
    let mut sim = Simulation::new(cfg, scheme, replication)?.with_timing(timing);
    let initial = sim.ledger.mean_possessed();
    let mut epochs = Vec::with_capacity(cfg.n_epochs());
    while !sim.is_finished() {
        epochs.push(sim.run_epoch()?);
    }
    let fair: Vec<f64> = epochs.iter().filter_map(|e| e.fairness).collect();
    let summary = RunSummary {
        scheme,
        master_seed: cfg.master_seed,
        n_obus: cfg.n_obus,
        th_min_db: linear_to_db(cfg.sinr_threshold),
        si_exp: si_exponent(cfg.si_cancellation),
        initial_mean_possessed: initial,
        final_mean_possessed: sim.ledger.mean_possessed(),
        mean_fairness: if fair.is_empty() {
            None
        } else {
            Some(fair.iter().sum::<f64>() / fair.len() as f64)
        },
        total_switches: epochs.iter().map(|e| e.switches).sum(),
        total_game_wallclock_us: epochs.iter().map(|e| e.game_wallclock_s).sum::<f64>() * 1e6,
        total_deliveries: epochs.iter().map(|e| e.deliveries_this_epoch).sum(),
    };
    Ok(RunOutput { epochs, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jain_examples() {
        assert_eq!(jain_fairness(&[1.0, 1.0, 1.0]), 1.0);
        assert!((jain_fairness(&[3.0, 1.0]) - 0.8).abs() < 1e-12);
        assert!((jain_fairness(&[2.0, 2.0, 0.0]) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(jain_fairness(&[0.0, 0.0]), 1.0);
        assert_eq!(jain_fairness(&[5.0]), 1.0);
    }

    #[test]
    fn scheme_tags_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.as_str().parse::<Scheme>().unwrap(), s);
        }
        assert!("coop".parse::<Scheme>().is_err());
    }

    fn line(positions: &[f64]) -> (Vec<ObuState>, SimConfig) {
        let cfg = SimConfig::default();
        let states = positions
            .iter()
            .enumerate()
            .map(|(id, &x)| ObuState {
                obu_id: id,
                lane: 0,
                pos_m: x,
                speed_mps: 30.0,
            })
            .collect();
        (states, cfg)
    }

    #[test]
    fn single_link_credits_rate_times_window() {
        let (states, cfg) = line(&[0.0, 100.0]);
        let geom = Geometry::new(&states, &cfg);
        let catalog = ContentCatalog {
            sizes_bits: vec![5e8, 5e8],
        };
        let mut ledger = PossessionLedger::from_rows(&[vec![true, false], vec![false, true]]);
        let tx = [Transmission {
            link: Link::new(0, 1),
            content: 0,
            useful: true,
        }];
        let delivered = transmit(&tx, 10, &FadingTable::unit(2), &geom, &cfg, &catalog, &mut ledger).unwrap();
        assert_eq!(delivered, 0);
        let snr = cfg.tx_power_w * cfg.max_gain_linear() * geom.path_gain(0, 1) / cfg.noise_power_w();
        let expected = capacity(snr, &cfg) * 10.0 * cfg.slot_duration_s;
        assert!((ledger.progress_bits(1, 0) - expected).abs() < 1e-6 * expected);
    }

    #[test]
    fn fixed_rate_window_credit() {
        // A 20 dB link carries 5.3266e9 bit/s; 10 slots move 5.3266e6 bits.
        let cfg = SimConfig::default();
        let rate = capacity(100.0, &cfg);
        let bits = rate * 10.0 * cfg.slot_duration_s;
        assert!((bits - 5.3266e6).abs() / 5.3266e6 < 1e-4);
    }

    #[test]
    fn completed_receiver_goes_idle() {
        let (states, cfg) = line(&[0.0, 100.0]);
        let geom = Geometry::new(&states, &cfg);
        // Content takes ~3 slots at ~1.4 Mbit per slot.
        let catalog = ContentCatalog {
            sizes_bits: vec![4e6, 4e6],
        };
        let mut ledger = PossessionLedger::from_rows(&[vec![true, false], vec![false, true]]);
        let tx = [Transmission {
            link: Link::new(0, 1),
            content: 0,
            useful: true,
        }];
        let delivered = transmit(&tx, 10, &FadingTable::unit(2), &geom, &cfg, &catalog, &mut ledger).unwrap();
        assert_eq!(delivered, 1);
        assert!(ledger.has(1, 0));
    }

    #[test]
    fn epoch_count_and_monotone_possession() {
        let cfg = SimConfig {
            n_slots: 200,
            ..SimConfig::default()
        };
        let out = run_simulation(&cfg, Scheme::FdCoalition, 0).unwrap();
        assert_eq!(out.epochs.len(), 20);
        let mut prev = out.summary.initial_mean_possessed;
        for e in &out.epochs {
            assert!(e.mean_possessed >= prev);
            prev = e.mean_possessed;
        }
        let one = SimConfig {
            n_slots: 10,
            ..SimConfig::default()
        };
        assert_eq!(run_simulation(&one, Scheme::NonCooperative, 0).unwrap().epochs.len(), 1);
        let ragged = SimConfig {
            n_slots: 25,
            ..SimConfig::default()
        };
        let out = run_simulation(&ragged, Scheme::DelayCoalition, 0).unwrap();
        assert_eq!(out.epochs.len(), 3);
        assert_eq!(out.epochs[2].start_slot, 20);
    }

    #[test]
    fn idle_network_still_reports() {
        // Everybody already holds everything but content 0, which nobody has.
        let cfg = SimConfig {
            n_slots: 30,
            n_obus: 4,
            ..SimConfig::default()
        };
        let mut sim = Simulation::new(&cfg, Scheme::FdCoalition, 0).unwrap();
        let rows: Vec<Vec<bool>> = (0..4).map(|_| (0..20).map(|c| c != 0).collect()).collect();
        sim.ledger = PossessionLedger::from_rows(&rows);
        let m = sim.run_epoch().unwrap();
        assert_eq!(m.deliveries_this_epoch, 0);
        assert_eq!(m.switches, 0);
        assert_eq!(m.fairness, None);
        assert_eq!(m.mean_possessed, 19.0);
    }

    #[test]
    fn finished_simulation_refuses_more_epochs() {
        let cfg = SimConfig {
            n_slots: 10,
            ..SimConfig::default()
        };
        let mut sim = Simulation::new(&cfg, Scheme::NonCooperative, 0).unwrap();
        sim.run_epoch().unwrap();
        assert!(matches!(sim.run_epoch(), Err(EngineError::Finished(10))));
    }
}
