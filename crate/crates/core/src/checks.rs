//! Self-test battery: reference values, statistical checks and exhaustive
//! oracles. Sizes are parameters so the CLI can run a quick pass and the
//! acceptance tests the full one.

use std::collections::HashSet;
use std::fmt;

use rand::Rng;

use crate::config::{db_to_linear, linear_to_db, SimConfig};
use crate::engine::Scheme;
use crate::experiment::SweepResult;
use crate::game::{evaluate, first_deviation, form_partition, Evaluator, Partition, ValueKind};
use crate::ledger::{init_catalog, init_possession, ContentCatalog, PossessionLedger};
use crate::mobility::{advance, advance_counted, initial_placement, lane_cycle, BranchCounts, ObuState};
use crate::radio::{capacity, draw_fading, path_loss, slots_needed_ceil, snr_interference_free, Geometry};
use crate::rng::{stream_from_seed, StreamLabel, Streams};
use crate::selection::{select_broadcasts, BroadcastPlan, NetworkView};

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

pub fn link_budget(cfg: &SimConfig) -> Check {
    let pl = path_loss(100.0, cfg).expect("positive distance");
    let snr_db = linear_to_db(snr_interference_free(100.0, cfg).expect("positive distance"));
    let rate = capacity(db_to_linear(20.0), cfg);
    let slots = slots_needed_ceil(50e6, rate, cfg).expect("positive rate");
    let passed = rel(pl, 7.2695e-11) < 1e-3 && rel(snr_db, 53.6) < 1e-3 && rel(rate, 5.3266e9) < 1e-3 && slots == 94;
    Check::new(
        "link budget",
        passed,
        format!(
            "PL(100 m) = {pl:.5e}, SNR(100 m) = {snr_db:.3} dB, C(20 dB) = {rate:.5e} bit/s, T(50 Mb) = {slots} slots"
        ),
    )
}

/// CDF of gamma(shape m, scale 1/m) for integer `m`.
fn gamma_cdf_integer_shape(x: f64, m: u32) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let y = f64::from(m) * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..m {
        term *= y / f64::from(j);
        sum += term;
    }
    1.0 - (-y).exp() * sum
}

/// Moments and Kolmogorov-Smirnov distance of fading draws against the
/// gamma(m, 1/m) law. Needs an integer `m`.
pub fn fading_statistics(cfg: &SimConfig, draws: usize, seed: u64) -> Check {
    let m = cfg.nakagami_m;
    if m.fract() != 0.0 || m < 1.0 {
        return Check::new(
            "fading statistics",
            false,
            format!("closed-form CDF needs integer m, got {m}"),
        );
    }
    let mut rng = stream_from_seed(seed, StreamLabel::Fading, 0);
    let mut xs: Vec<f64> = (0..draws).map(|_| draw_fading(&mut rng, m)).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    xs.sort_by(f64::total_cmp);
    let ks = xs
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = gamma_cdf_integer_shape(x, m as u32);
            (f - k as f64 / n).abs().max((f - (k + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max);
    let passed = (mean - 1.0).abs() <= 0.02 && (var - 1.0 / m).abs() <= 0.02 && ks < 0.002;
    Check::new(
        "fading statistics",
        passed,
        format!("{draws} draws: mean {mean:.4}, variance {var:.4}, KS {ks:.5}"),
    )
}

/// Speed bounds, per-lane order and random-branch frequencies over many ticks.
pub fn mobility_invariants(cfg: &SimConfig, ticks: usize, seeds: u64) -> Check {
    let mut counts = BranchCounts::default();
    let mut speed_violations = 0usize;
    let mut order_violations = 0usize;
    for seed in 0..seeds {
        let mut rng = stream_from_seed(seed, StreamLabel::Mobility, 0);
        let mut states = match initial_placement(cfg, &mut rng) {
            Ok(s) => s,
            Err(e) => return Check::new("mobility invariants", false, e.to_string()),
        };
        let cycles = [lane_cycle(&states, 0), lane_cycle(&states, 1)];
        for _ in 0..ticks {
            states = advance_counted(&states, cfg.mobility_update_interval_slots, cfg, &mut rng, &mut counts);
            speed_violations += states
                .iter()
                .filter(|s| !(cfg.v_min_mps..=cfg.v_max_mps).contains(&s.speed_mps))
                .count();
            if [lane_cycle(&states, 0), lane_cycle(&states, 1)] != cycles {
                order_violations += 1;
            }
        }
    }
    let draws = counts.random_draws() as f64;
    let p = cfg.speed_change_prob;
    let freq = [
        counts.accelerate as f64 / draws,
        counts.decelerate as f64 / draws,
        counts.keep as f64 / draws,
    ];
    let freq_ok =
        (freq[0] - p).abs() <= 0.01 && (freq[1] - p).abs() <= 0.01 && (freq[2] - (1.0 - 2.0 * p)).abs() <= 0.01;
    Check::new(
        "mobility invariants",
        speed_violations == 0 && order_violations == 0 && freq_ok,
        format!(
            "{ticks} ticks x {seeds} seeds: {speed_violations} speed and {order_violations} order violations; \
             branch frequencies {:.4}/{:.4}/{:.4} over {draws} draws; {} brake, {} release",
            freq[0], freq[1], freq[2], counts.headway_brake, counts.headway_release
        ),
    )
}

/// A random small network: positions packed into a random stretch of road,
/// holdings, content sizes and a threshold high enough that some pairs are
/// not neighbors.
pub struct SmallInstance {
    pub cfg: SimConfig,
    pub geometry: Geometry,
    pub ledger: PossessionLedger,
    pub catalog: ContentCatalog,
}

impl SmallInstance {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, max_obus: usize, max_contents: usize) -> Self {
        let n = rng.gen_range(2..=max_obus);
        let c = rng.gen_range(1..=max_contents);
        let cfg = SimConfig {
            n_obus: n,
            n_contents: c,
            max_beams: rng.gen_range(1..=3),
            sinr_threshold: db_to_linear(rng.gen_range(20.0..60.0)),
            ..SimConfig::default()
        };
        let span = rng.gen_range(100.0..cfg.road_length_m);
        let states: Vec<ObuState> = (0..n)
            .map(|id| ObuState {
                obu_id: id,
                lane: (id % 2) as u8,
                pos_m: rng.gen_range(0.0..span),
                speed_mps: cfg.v_min_mps,
            })
            .collect();
        let rows: Vec<Vec<bool>> = (0..n).map(|_| (0..c).map(|_| rng.gen_bool(0.4)).collect()).collect();
        let catalog = ContentCatalog {
            sizes_bits: (0..c).map(|_| rng.gen_range(5e7..5e8)).collect(),
        };
        Self {
            geometry: Geometry::new(&states, &cfg),
            ledger: PossessionLedger::from_rows(&rows),
            catalog,
            cfg,
        }
    }

    pub fn view(&self) -> NetworkView<'_> {
        NetworkView {
            cfg: &self.cfg,
            geometry: &self.geometry,
            ledger: &self.ledger,
            catalog: &self.catalog,
        }
    }
}

/// Brute force over every (content, receiver subset) for each broadcaster in
/// ascending order: most receivers first, then the smallest largest slot
/// estimate, then the lowest content id.
pub fn exhaustive_selection(view: &NetworkView<'_>) -> BroadcastPlan {
    let n = view.n_obus();
    let budget = view.cfg.max_beams;
    let mut plan = BroadcastPlan::empty(n);
    let mut claimed = vec![false; n];
    for i in 0..n {
        let mut best: Option<(usize, f64, usize, Vec<usize>)> = None;
        for c in 0..view.catalog.len() {
            if !view.ledger.has(i, c) {
                continue;
            }
            let pool: Vec<usize> = (0..n)
                .filter(|&j| j != i && view.geometry.is_neighbor(i, j) && !claimed[j] && !view.ledger.has(j, c))
                .collect();
            for mask in 1u32..(1 << pool.len()) {
                let subset: Vec<usize> = (0..pool.len())
                    .filter(|b| mask >> b & 1 == 1)
                    .map(|b| pool[b])
                    .collect();
                if subset.len() > budget {
                    continue;
                }
                let max_t = subset
                    .iter()
                    .map(|&j| view.estimate_t(i, j, c).expect("neighbor"))
                    .fold(f64::NEG_INFINITY, f64::max);
                let better = match &best {
                    None => true,
                    Some((bn, bt, bc, _)) => {
                        subset.len() > *bn || (subset.len() == *bn && (max_t < *bt || (max_t == *bt && c < *bc)))
                    }
                };
                if better {
                    best = Some((subset.len(), max_t, c, subset));
                }
            }
        }
        if let Some((_, _, c, receivers)) = best {
            for &j in &receivers {
                claimed[j] = true;
            }
            plan.records[i].content = Some(c);
            plan.records[i].receivers = receivers;
        }
    }
    plan
}

fn same_plan(a: &BroadcastPlan, b: &BroadcastPlan) -> bool {
    a.records.len() == b.records.len()
        && a.records.iter().zip(&b.records).all(|(x, y)| {
            let mut rx = x.receivers.clone();
            let mut ry = y.receivers.clone();
            rx.sort_unstable();
            ry.sort_unstable();
            x.content == y.content && rx == ry
        })
}

pub fn selection_oracle(instances: usize, seed: u64) -> Check {
    let mut rng = stream_from_seed(seed, StreamLabel::Possession, 7);
    let mut mismatches = 0;
    let mut first = None;
    let mut links = 0;
    for k in 0..instances {
        let inst = SmallInstance::random(&mut rng, 5, 4);
        let view = inst.view();
        let fast = select_broadcasts(&(0..view.n_obus()).collect::<Vec<_>>(), &view);
        let slow = exhaustive_selection(&view);
        links += slow.links().len();
        if !same_plan(&fast, &slow) {
            mismatches += 1;
            first.get_or_insert(k);
        }
    }
    Check::new(
        "selection oracle",
        mismatches == 0,
        format!(
            "{} of {instances} instances agree ({links} scheduled links){}",
            instances - mismatches,
            first.map_or(String::new(), |k| format!("; first mismatch at instance {k}"))
        ),
    )
}

/// Network snapshot at the start of the first epoch of replication 0.
pub struct Snapshot {
    pub cfg: SimConfig,
    pub states: Vec<ObuState>,
    pub geometry: Geometry,
    pub ledger: PossessionLedger,
    pub catalog: ContentCatalog,
}

impl Snapshot {
    pub fn first_epoch(cfg: &SimConfig) -> Result<Self, crate::engine::EngineError> {
        let mut streams = Streams::new(cfg.master_seed, 0);
        let states = initial_placement(cfg, &mut streams.mobility)?;
        let catalog = init_catalog(cfg, &mut streams.possession);
        let ledger = init_possession(cfg, &catalog, &mut streams.possession);
        let states = advance(&states, cfg.mobility_update_interval_slots, cfg, &mut streams.mobility);
        let geometry = Geometry::new(&states, cfg);
        Ok(Self {
            cfg: cfg.clone(),
            states,
            geometry,
            ledger,
            catalog,
        })
    }

    pub fn view(&self) -> NetworkView<'_> {
        NetworkView {
            cfg: &self.cfg,
            geometry: &self.geometry,
            ledger: &self.ledger,
            catalog: &self.catalog,
        }
    }
}

/// Results of running the game over many snapshots.
#[derive(Debug, Clone, Default)]
pub struct GameAudit {
    pub games: usize,
    pub unstable: Vec<(u64, usize, String)>,
    pub ceiling_hits: Vec<(u64, usize)>,
    pub switches: usize,
    pub max_switches: usize,
    pub guard_checked: usize,
    pub guard_violations: Vec<String>,
    pub history_violations: Vec<String>,
}

/// Runs the profit game on the first-epoch snapshot of every `(seed, N)` and
/// audits the outcome: Nash stability by exhaustive search, incumbent
/// profits on every admitted join, and history soundness.
pub fn audit_games(base: &SimConfig, seeds: u64, sizes: &[usize], kind: ValueKind) -> GameAudit {
    let mut audit = GameAudit::default();
    for &n in sizes {
        for seed in 0..seeds {
            let cfg = SimConfig {
                n_obus: n,
                master_seed: seed,
                ..base.clone()
            };
            let snap = Snapshot::first_epoch(&cfg).expect("valid configuration");
            let view = snap.view();
            let mut rng = stream_from_seed(seed, StreamLabel::GameOrder, 0);
            let initial = if cfg.random_initial_partition {
                Partition::random(n, &mut rng)
            } else {
                Partition::singletons(n)
            };
            let mut evaluator = Evaluator::new(view, kind);
            audit.games += 1;
            let (partition, trace) = match form_partition(initial, &mut evaluator, cfg.switch_ceiling, &mut rng) {
                Ok(x) => x,
                Err(_) => {
                    audit.ceiling_hits.push((seed, n));
                    continue;
                }
            };
            audit.switches += trace.switch_count;
            audit.max_switches = audit.max_switches.max(trace.switch_count);
            if let Some((i, target)) = first_deviation(&partition, view, kind) {
                audit.unstable.push((seed, n, format!("OBU {i} prefers {target:?}")));
            }
            let mut joined: Vec<HashSet<Vec<usize>>> = vec![HashSet::new(); n];
            let mut left: Vec<HashSet<Vec<usize>>> = vec![HashSet::new(); n];
            for ev in &trace.switches {
                let mut after = ev.to.clone();
                after.push(ev.obu);
                after.sort_unstable();
                if left[ev.obu].contains(&after) || !joined[ev.obu].insert(after.clone()) {
                    audit
                        .history_violations
                        .push(format!("seed {seed} N {n}: OBU {} re-entered {after:?}", ev.obu));
                }
                left[ev.obu].insert(ev.from.clone());
                if kind != ValueKind::Profit || ev.to.is_empty() {
                    continue;
                }
                let before = evaluate(&ev.to, &view, kind);
                let now = evaluate(&after, &view, kind);
                for (k, &j) in before.members.iter().enumerate() {
                    audit.guard_checked += 1;
                    let psi_now = now.psi_of(j).expect("incumbent present");
                    if psi_now < before.psi[k] {
                        audit.guard_violations.push(format!(
                            "seed {seed} N {n}: OBU {} joining {:?} cut psi of {j} from {} to {psi_now}",
                            ev.obu, ev.to, before.psi[k]
                        ));
                    }
                }
            }
        }
    }
    audit
}

impl GameAudit {
    pub fn stability_check(&self) -> Check {
        let detail = format!(
            "{} games: {} unstable, {} hit the switch ceiling; {} switches in total, at most {} in one game{}",
            self.games,
            self.unstable.len(),
            self.ceiling_hits.len(),
            self.switches,
            self.max_switches,
            self.unstable
                .first()
                .map_or(String::new(), |(s, n, d)| format!("; e.g. seed {s} N {n}: {d}"))
        );
        Check::new(
            "Nash stability",
            self.unstable.is_empty() && self.ceiling_hits.is_empty(),
            detail,
        )
    }

    pub fn guard_check(&self) -> Check {
        Check::new(
            "profit guard",
            self.guard_violations.is_empty() && self.history_violations.is_empty(),
            format!(
                "{} incumbent profits rechecked, {} decreased; {} history violations{}",
                self.guard_checked,
                self.guard_violations.len(),
                self.history_violations.len(),
                self.guard_violations
                    .first()
                    .or(self.history_violations.first())
                    .map_or(String::new(), |d| format!("; e.g. {d}"))
            ),
        )
    }
}

/// Mean total holdings (all OBUs) of a sweep group.
fn total_possessed(res: &SweepResult, scheme: Scheme, n: usize, th: f64, si: f64) -> Option<f64> {
    res.group(scheme, n, th, si).map(|g| g.total_possessed().mean)
}

fn per_obu(res: &SweepResult, scheme: Scheme, n: usize, th: f64, si: f64) -> Option<f64> {
    res.group(scheme, n, th, si).map(|g| g.final_mean_possessed.mean)
}

fn fmt_series(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ")
}

/// Possessed contents grow with N under the proposed scheme and beat the
/// uncoordinated baseline everywhere, by more than half at the largest N.
pub fn trend_vs_obus(res: &SweepResult, obus: &[usize], th: f64, si: f64) -> Check {
    let series = |s: Scheme, f: fn(&SweepResult, Scheme, usize, f64, f64) -> Option<f64>| -> Option<Vec<f64>> {
        obus.iter().map(|&n| f(res, s, n, th, si)).collect()
    };
    let (Some(fd), Some(nc), Some(fd_mean), Some(nc_mean)) = (
        series(Scheme::FdCoalition, total_possessed),
        series(Scheme::NonCooperative, total_possessed),
        series(Scheme::FdCoalition, per_obu),
        series(Scheme::NonCooperative, per_obu),
    ) else {
        return Check::new("possessed contents vs N", false, "sweep lacks a required group".into());
    };
    let monotone = fd.windows(2).all(|w| w[1] >= w[0]);
    let dominates = fd.iter().zip(&nc).all(|(a, b)| a > b);
    let ratio = fd[fd.len() - 1] / nc[nc.len() - 1];
    Check::new(
        "possessed contents vs N",
        monotone && dominates && ratio > 1.5,
        format!(
            "totals fd [{}], non-coop [{}]; per OBU fd [{}], non-coop [{}]; non-decreasing {monotone}, \
             fd > non-coop {dominates}, ratio at N={} {ratio:.3} (needs > 1.5)",
            fmt_series(&fd),
            fmt_series(&nc),
            fmt_series(&fd_mean),
            fmt_series(&nc_mean),
            obus[obus.len() - 1]
        ),
    )
}

pub fn trend_fairness(res: &SweepResult, n: usize, th: f64, si: f64) -> Check {
    let fair = |s| res.group(s, n, th, si).and_then(|g| g.mean_fairness).map(|f| f.mean);
    match (fair(Scheme::FdCoalition), fair(Scheme::DelayCoalition)) {
        (Some(fd), Some(delay)) => Check::new(
            "fairness vs delay baseline",
            fd >= delay,
            format!("N={n}: fd {fd:.4}, delay {delay:.4}"),
        ),
        _ => Check::new(
            "fairness vs delay baseline",
            false,
            format!("no fairness data at N={n}"),
        ),
    }
}

/// Rises then falls over the threshold grid with an interior peak inside
/// `peak_window`.
pub fn trend_vs_threshold(
    res: &SweepResult,
    scheme: Scheme,
    n: usize,
    ths: &[f64],
    si: f64,
    peak_window: &[f64],
) -> Check {
    let Some(ys) = ths
        .iter()
        .map(|&t| per_obu(res, scheme, n, t, si))
        .collect::<Option<Vec<f64>>>()
    else {
        return Check::new(
            "possessed contents vs threshold",
            false,
            "sweep lacks a required group".into(),
        );
    };
    let peak = (0..ys.len()).fold(0, |b, k| if ys[k] > ys[b] { k } else { b });
    let rises = ys[..=peak].windows(2).all(|w| w[1] >= w[0]);
    let falls = ys[peak..].windows(2).all(|w| w[1] <= w[0]);
    let interior = peak > 0 && peak + 1 < ys.len();
    let in_window = peak_window.contains(&ths[peak]);
    Check::new(
        "possessed contents vs threshold",
        rises && falls && interior && in_window,
        format!(
            "per OBU at th {:?} dB: [{}]; peak at {} dB, unimodal {}",
            ths,
            fmt_series(&ys),
            ths[peak],
            rises && falls && interior
        ),
    )
}

/// Non-decreasing as cancellation improves up to `plateau_from`, then flat
/// within `tolerance` up to the last level.
pub fn trend_vs_si(
    res: &SweepResult,
    scheme: Scheme,
    n: usize,
    th: f64,
    si_exps: &[f64],
    plateau_from: f64,
    tolerance: f64,
) -> Check {
    let Some(ys) = si_exps
        .iter()
        .map(|&s| per_obu(res, scheme, n, th, s))
        .collect::<Option<Vec<f64>>>()
    else {
        return Check::new(
            "possessed contents vs SI level",
            false,
            "sweep lacks a required group".into(),
        );
    };
    let Some(k) = si_exps.iter().position(|&s| s == plateau_from) else {
        return Check::new(
            "possessed contents vs SI level",
            false,
            "plateau level not in sweep".into(),
        );
    };
    let rising = ys[..=k].windows(2).all(|w| w[1] >= w[0]);
    let change = rel(ys[ys.len() - 1], ys[k]);
    Check::new(
        "possessed contents vs SI level",
        rising && change < tolerance,
        format!(
            "per OBU at -lg(beta) {:?}: [{}]; non-decreasing up to {plateau_from}: {rising}; change {plateau_from} -> {}: {:.2}%",
            si_exps,
            fmt_series(&ys),
            si_exps[si_exps.len() - 1],
            100.0 * change
        ),
    )
}

/// Quick battery for the CLI.
pub fn quick_battery(cfg: &SimConfig) -> Vec<Check> {
    let audit = audit_games(cfg, 5, &[6, 10], ValueKind::Profit);
    vec![
        link_budget(cfg),
        fading_statistics(cfg, 1_000_000, 1),
        mobility_invariants(cfg, 2_000, 3),
        selection_oracle(200, 1),
        audit.stability_check(),
        audit.guard_check(),
    ]
}
