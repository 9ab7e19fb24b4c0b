//! mmWave link budget: path loss, gamma fading, the sectored antenna pattern,
//! SINR under concurrent links and residual self-interference, and capacity.
//!
//! Only the transmitter side of an interfering link is directional: the
//! desired link gets the boresight gain `G0`, an interferer `(k, r)` reaches a
//! victim receiver `j` with the pattern gain at the angle between the bearings
//! `k -> r` and `k -> j`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use thiserror::Error;

use crate::config::{db_to_linear, SimConfig};
use crate::mobility::{pairwise_distance, ObuState};

#[derive(Debug, Error, PartialEq)]
pub enum RadioError {
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("link {tx}->{rx} is not in the concurrent set")]
    LinkNotScheduled { tx: usize, rx: usize },
    #[error("OBU {0} is the receiver of more than one concurrent link")]
    DuplicateReceiver(usize),
    #[error("OBU {obu} transmits {beams} beams, budget is {budget}")]
    BeamBudget { obu: usize, beams: usize, budget: usize },
    #[error("link {0}->{0} loops back to its transmitter")]
    SelfLink(usize),
}

/// Directed link, transmitter to receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Link {
    pub tx: usize,
    pub rx: usize,
}

impl Link {
    pub fn new(tx: usize, rx: usize) -> Self {
        Self { tx, rx }
    }
}

/// `(λ / 4π)^α`, the path gain at one metre.
pub fn unit_path_gain(cfg: &SimConfig) -> f64 {
    (cfg.wavelength_m() / (4.0 * std::f64::consts::PI)).powf(cfg.pathloss_exponent)
}

/// Path gain `D · d^-α` (a loss expressed as a gain below one).
pub fn path_loss(d: f64, cfg: &SimConfig) -> Result<f64, RadioError> {
    if !(d > 0.0) {
        return Err(RadioError::NonPositiveDistance(d));
    }
    Ok(unit_path_gain(cfg) * d.powf(-cfg.pathloss_exponent))
}

/// One channel power gain from gamma(shape = m, scale = 1/m): unit mean,
/// variance 1/m.
pub fn draw_fading<R: Rng + ?Sized>(rng: &mut R, m: f64) -> f64 {
    Gamma::new(m, 1.0 / m).expect("nakagami m must be positive").sample(rng)
}

/// Sectored pattern gain in dBi at `theta_deg` off boresight.
pub fn antenna_gain_db(theta_deg: f64, cfg: &SimConfig) -> f64 {
    let rolloff = 12.0 * (theta_deg / cfg.beamwidth_3db_deg).powi(2);
    cfg.max_gain_dbi - rolloff.min(cfg.max_attenuation_db)
}

pub fn antenna_gain_linear(theta_deg: f64, cfg: &SimConfig) -> f64 {
    db_to_linear(antenna_gain_db(theta_deg, cfg))
}

/// Received power of a desired link at boresight gain.
pub fn rx_power_desired(distance_m: f64, h: f64, cfg: &SimConfig) -> Result<f64, RadioError> {
    Ok(cfg.tx_power_w * cfg.max_gain_linear() * h * path_loss(distance_m, cfg)?)
}

/// Shannon capacity `W log2(1 + sinr)` in bit/s.
pub fn capacity(sinr: f64, cfg: &SimConfig) -> f64 {
    cfg.bandwidth_hz * (1.0 + sinr).log2()
}

/// SNR of a link with unit fading, no interference and no self-interference.
pub fn snr_interference_free(distance_m: f64, cfg: &SimConfig) -> Result<f64, RadioError> {
    Ok(rx_power_desired(distance_m, 1.0, cfg)? / cfg.noise_power_w())
}

/// Whether `j` can hear `i` above the SINR threshold on an interference-free,
/// unit-fading channel.
pub fn is_neighbor(i: &ObuState, j: &ObuState, cfg: &SimConfig) -> bool {
    match snr_interference_free(pairwise_distance(i, j, cfg), cfg) {
        Ok(snr) => snr >= cfg.sinr_threshold,
        // Co-located vehicles cannot form a link.
        Err(_) => false,
    }
}

/// Fractional number of slots to move `content_bits` at `rate_bps`.
pub fn slots_needed(content_bits: f64, rate_bps: f64, cfg: &SimConfig) -> Result<f64, RadioError> {
    if !(rate_bps > 0.0) {
        return Err(RadioError::NonPositiveRate(rate_bps));
    }
    Ok(content_bits / (rate_bps * cfg.slot_duration_s))
}

pub fn slots_needed_ceil(content_bits: f64, rate_bps: f64, cfg: &SimConfig) -> Result<u64, RadioError> {
    Ok(slots_needed(content_bits, rate_bps, cfg)?.ceil() as u64)
}

fn fold_angle(deg: f64) -> f64 {
    let d = deg.abs() % 360.0;
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

/// All-pairs geometry of one snapshot: distances, bearings, path gains, and
/// the interference-free neighbor relation.
#[derive(Debug, Clone)]
pub struct Geometry {
    n: usize,
    distance: Vec<f64>,
    bearing_deg: Vec<f64>,
    path_gain: Vec<f64>,
    /// Interference-free unit-fading capacity of each ordered pair.
    clear_rate: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
    /// Neighbors by descending clear rate, ties by id.
    fastest: Vec<Vec<usize>>,
    /// Linear pattern gain of beam `tx -> rx` towards `other`, indexed
    /// `(tx * n + rx) * n + other`. Empty for very large snapshots.
    beam_gain: Vec<f64>,
}

/// Largest snapshot for which beam gains are tabulated up front.
const BEAM_TABLE_MAX_OBUS: usize = 64;

impl Geometry {
    pub fn new(states: &[ObuState], cfg: &SimConfig) -> Self {
        let n = states.len();
        let road = cfg.road_length_m;
        let mut distance = vec![0.0; n * n];
        let mut bearing_deg = vec![0.0; n * n];
        let mut path_gain = vec![0.0; n * n];
        let mut clear_rate = vec![0.0; n * n];
        let mut neighbors = vec![Vec::new(); n];
        let unit = unit_path_gain(cfg);
        let noise = cfg.noise_power_w();
        let g0 = cfg.max_gain_linear();
        for (i, a) in states.iter().enumerate() {
            for (j, b) in states.iter().enumerate() {
                if i == j {
                    continue;
                }
                let k = i * n + j;
                // Shortest signed displacement around the ring.
                let dx = (b.pos_m - a.pos_m + road / 2.0).rem_euclid(road) - road / 2.0;
                let dy = b.lateral_m(cfg) - a.lateral_m(cfg);
                let d = dx.hypot(dy);
                distance[k] = d;
                bearing_deg[k] = dy.atan2(dx).to_degrees();
                if d > 0.0 {
                    path_gain[k] = unit * d.powf(-cfg.pathloss_exponent);
                    let snr = cfg.tx_power_w * g0 * path_gain[k] / noise;
                    clear_rate[k] = capacity(snr, cfg);
                    if snr >= cfg.sinr_threshold {
                        neighbors[i].push(j);
                    }
                }
            }
        }
        let fastest = neighbors
            .iter()
            .enumerate()
            .map(|(i, nb)| {
                let mut v = nb.clone();
                v.sort_by(|&a, &b| clear_rate[i * n + b].total_cmp(&clear_rate[i * n + a]).then(a.cmp(&b)));
                v
            })
            .collect();
        let mut geom = Self {
            n,
            distance,
            bearing_deg,
            path_gain,
            clear_rate,
            neighbors,
            fastest,
            beam_gain: Vec::new(),
        };
        if n <= BEAM_TABLE_MAX_OBUS {
            let mut table = vec![0.0; n * n * n];
            for tx in 0..n {
                for rx in 0..n {
                    for other in 0..n {
                        if tx != rx && tx != other {
                            table[(tx * n + rx) * n + other] =
                                antenna_gain_linear(geom.off_boresight_deg(tx, rx, other), cfg);
                        }
                    }
                }
            }
            geom.beam_gain = table;
        }
        geom
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distance[i * self.n + j]
    }

    pub fn path_gain(&self, i: usize, j: usize) -> f64 {
        self.path_gain[i * self.n + j]
    }

    pub fn clear_rate(&self, i: usize, j: usize) -> f64 {
        self.clear_rate[i * self.n + j]
    }

    /// Angle in `[0, 180]` degrees between the beam of link `tx -> rx` and the
    /// direction from `tx` towards `other`.
    pub fn off_boresight_deg(&self, tx: usize, rx: usize, other: usize) -> f64 {
        let n = self.n;
        fold_angle(self.bearing_deg[tx * n + other] - self.bearing_deg[tx * n + rx])
    }

    /// Linear gain of the beam `tx -> rx` in the direction of `other`.
    pub fn beam_gain(&self, tx: usize, rx: usize, other: usize, cfg: &SimConfig) -> f64 {
        if self.beam_gain.is_empty() {
            antenna_gain_linear(self.off_boresight_deg(tx, rx, other), cfg)
        } else {
            self.beam_gain[(tx * self.n + rx) * self.n + other]
        }
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Neighbors of `i` from the fastest clear link down.
    pub fn neighbors_by_rate(&self, i: usize) -> &[usize] {
        &self.fastest[i]
    }

    pub fn is_neighbor(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }
}

/// Channel power gains of every ordered pair for one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingTable {
    n: usize,
    /// Empty for the all-ones table.
    gains: Vec<f64>,
}

impl FadingTable {
    pub fn unit(n: usize) -> Self {
        Self { n, gains: Vec::new() }
    }

    pub fn draw<R: Rng + ?Sized>(n: usize, m: f64, rng: &mut R) -> Self {
        let dist = Gamma::new(m, 1.0 / m).expect("nakagami m must be positive");
        let gains = (0..n * n)
            .map(|k| if k / n == k % n { 1.0 } else { dist.sample(rng) })
            .collect();
        Self { n, gains }
    }

    pub fn gain(&self, tx: usize, rx: usize) -> f64 {
        if self.gains.is_empty() {
            assert!(tx < self.n && rx < self.n, "OBU out of range");
            1.0
        } else {
            self.gains[tx * self.n + rx]
        }
    }
}

/// Links active in the same slot. Construction enforces one incoming link per
/// receiver and the per-OBU transmit-beam budget.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcurrentSet {
    links: Vec<Link>,
    tx_beams: Vec<usize>,
}

impl ConcurrentSet {
    pub fn new(n_obus: usize, links: Vec<Link>, max_beams: usize) -> Result<Self, RadioError> {
        let mut tx_beams = vec![0usize; n_obus];
        let mut receiving = vec![false; n_obus];
        for l in &links {
            if l.tx == l.rx {
                return Err(RadioError::SelfLink(l.tx));
            }
            if std::mem::replace(&mut receiving[l.rx], true) {
                return Err(RadioError::DuplicateReceiver(l.rx));
            }
            tx_beams[l.tx] += 1;
            if tx_beams[l.tx] > max_beams {
                return Err(RadioError::BeamBudget {
                    obu: l.tx,
                    beams: tx_beams[l.tx],
                    budget: max_beams,
                });
            }
        }
        Ok(Self { links, tx_beams })
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn tx_beams(&self, obu: usize) -> usize {
        self.tx_beams[obu]
    }

    pub fn contains(&self, link: Link) -> bool {
        self.links.contains(&link)
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }
}

/// Interference power at `link.rx` from every other concurrent link, using
/// the transmitter-side pattern gain towards the victim.
fn interference(link: Link, concurrent: &ConcurrentSet, fading: &FadingTable, geom: &Geometry, cfg: &SimConfig) -> f64 {
    concurrent
        .links
        .iter()
        .filter(|o| o.tx != link.tx && o.rx != link.rx && o.tx != link.rx)
        .map(|o| {
            cfg.tx_power_w
                * geom.beam_gain(o.tx, o.rx, link.rx, cfg)
                * fading.gain(o.tx, link.rx)
                * geom.path_gain(o.tx, link.rx)
        })
        .sum()
}

fn sinr_unchecked(
    link: Link,
    concurrent: &ConcurrentSet,
    fading: &FadingTable,
    geom: &Geometry,
    cfg: &SimConfig,
) -> f64 {
    let desired =
        cfg.tx_power_w * cfg.max_gain_linear() * fading.gain(link.tx, link.rx) * geom.path_gain(link.tx, link.rx);
    let rsi = concurrent.tx_beams(link.rx) as f64 * cfg.si_cancellation * cfg.tx_power_w;
    desired / (cfg.noise_power_w() + interference(link, concurrent, fading, geom, cfg) + rsi)
}

/// SINR of `link` given every other link in `concurrent`. Residual
/// self-interference counts one `β P_t` per beam the receiver is itself
/// transmitting.
pub fn sinr(
    link: Link,
    concurrent: &ConcurrentSet,
    fading: &FadingTable,
    geom: &Geometry,
    cfg: &SimConfig,
) -> Result<f64, RadioError> {
    if !concurrent.contains(link) {
        return Err(RadioError::LinkNotScheduled {
            tx: link.tx,
            rx: link.rx,
        });
    }
    Ok(sinr_unchecked(link, concurrent, fading, geom, cfg))
}

/// SINR of every link in the set, in set order.
pub fn sinr_all(concurrent: &ConcurrentSet, fading: &FadingTable, geom: &Geometry, cfg: &SimConfig) -> Vec<f64> {
    concurrent
        .links
        .iter()
        .map(|&l| sinr_unchecked(l, concurrent, fading, geom, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::linear_to_db;
    use crate::rng::{stream_from_seed, StreamLabel};

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn obu(id: usize, lane: u8, pos: f64) -> ObuState {
        ObuState {
            obu_id: id,
            lane,
            pos_m: pos,
            speed_mps: 30.0,
        }
    }

    #[test]
    fn path_loss_golden_values() {
        let cfg = SimConfig::default();
        // λ = c / 28 GHz = 1.0714e-2 m; (λ / 4π)^2 = 7.2695e-7 within 1e-3.
        let pl1 = path_loss(1.0, &cfg).unwrap();
        assert!(rel(pl1, 7.2695e-7) < 1e-3, "{pl1}");
        assert!((linear_to_db(pl1) + 61.4).abs() < 0.05);
        let pl100 = path_loss(100.0, &cfg).unwrap();
        assert!(rel(pl100, 7.2695e-11) < 1e-3);
        let ratio = path_loss(10.0, &cfg).unwrap() / pl100;
        assert!((ratio - 100.0).abs() < 1e-9);
        assert_eq!(path_loss(0.0, &cfg), Err(RadioError::NonPositiveDistance(0.0)));
        assert!(path_loss(-3.0, &cfg).is_err());
    }

    #[test]
    fn antenna_pattern_points() {
        let cfg = SimConfig::default();
        assert_eq!(antenna_gain_db(0.0, &cfg), 20.0);
        assert!((antenna_gain_db(17.5, &cfg) - 8.0).abs() < 1e-12);
        assert_eq!(antenna_gain_db(90.0, &cfg), -6.0);
        assert_eq!(antenna_gain_db(180.0, &cfg), -6.0);
        for k in 0..=1800 {
            let g = antenna_gain_db(k as f64 / 10.0, &cfg);
            assert!((-6.0..=20.0).contains(&g));
        }
    }

    #[test]
    fn desired_power() {
        let cfg = SimConfig::default();
        let p = rx_power_desired(100.0, 1.0, &cfg).unwrap();
        assert!(rel(p, 7.2695e-9) < 1e-3);
        assert!((linear_to_db(p) + 30.0 + 51.4).abs() < 0.05);
        assert!(rel(rx_power_desired(100.0, 0.5, &cfg).unwrap(), p / 2.0) < 1e-12);
        assert!(rel(rx_power_desired(200.0, 1.0, &cfg).unwrap(), p / 4.0) < 1e-12);
    }

    #[test]
    fn capacity_points() {
        let cfg = SimConfig::default();
        assert!(rel(capacity(100.0, &cfg), 5.3266e9) < 1e-4);
        assert_eq!(capacity(0.0, &cfg), 0.0);
        assert_eq!(capacity(1.0, &cfg), cfg.bandwidth_hz);
    }

    #[test]
    fn slot_estimates() {
        let cfg = SimConfig::default();
        let t = slots_needed(50e6, 5.3266e9, &cfg).unwrap();
        assert!((t - 93.87).abs() < 0.01, "{t}");
        assert_eq!(slots_needed_ceil(50e6, 5.3266e9, &cfg).unwrap(), 94);
        assert_eq!(slots_needed(0.0, 5.3266e9, &cfg).unwrap(), 0.0);
        assert!(rel(slots_needed(100e6, 5.3266e9, &cfg).unwrap(), 2.0 * t) < 1e-12);
        assert_eq!(slots_needed(1.0, 0.0, &cfg), Err(RadioError::NonPositiveRate(0.0)));
    }

    #[test]
    fn single_link_sinr_and_self_interference() {
        let cfg = SimConfig::default();
        let states = vec![obu(0, 0, 0.0), obu(2, 0, 100.0), obu(4, 0, 300.0)];
        let geom = Geometry::new(&states, &cfg);
        let fading = FadingTable::unit(3);
        let l = Link::new(0, 1);

        let alone = ConcurrentSet::new(3, vec![l], 3).unwrap();
        let s = sinr(l, &alone, &fading, &geom, &cfg).unwrap();
        assert!(rel(s, 7.2695e-9 / 3.185e-14) < 1e-3);
        assert!((linear_to_db(s) - 53.58).abs() < 0.02);

        // Receiver 1 also transmits one beam: RSI of 1e-8 W swamps the noise.
        let fd = ConcurrentSet::new(3, vec![l, Link::new(1, 2)], 3).unwrap();
        let s = sinr(l, &fd, &fading, &geom, &cfg).unwrap();
        assert!((s - 0.727).abs() < 0.005, "{s}");

        let quiet = SimConfig {
            si_cancellation: 0.0,
            ..cfg.clone()
        };
        let s = sinr(l, &alone, &fading, &geom, &quiet).unwrap();
        assert_eq!(
            s,
            quiet.tx_power_w * quiet.max_gain_linear() * geom.path_gain(0, 1) / quiet.noise_power_w()
        );

        assert_eq!(
            sinr(Link::new(1, 0), &alone, &fading, &geom, &cfg),
            Err(RadioError::LinkNotScheduled { tx: 1, rx: 0 })
        );
    }

    #[test]
    fn unit_fading_golden_sinr() {
        // h = 1, β = 0, pure geometry: 73.58 dB at 10 m, then -20 dB/decade.
        let cfg = SimConfig {
            si_cancellation: 0.0,
            ..SimConfig::default()
        };
        for (d, db) in [(10.0, 73.58), (100.0, 53.58), (1000.0, 33.58)] {
            let states = vec![obu(0, 0, 0.0), obu(2, 0, d)];
            let geom = Geometry::new(&states, &cfg);
            let set = ConcurrentSet::new(2, vec![Link::new(0, 1)], 3).unwrap();
            let s = sinr(Link::new(0, 1), &set, &FadingTable::unit(2), &geom, &cfg).unwrap();
            assert!((linear_to_db(s) - db).abs() < 0.01, "{d}: {}", linear_to_db(s));
        }
    }

    #[test]
    fn interference_depends_on_beam_direction() {
        let cfg = SimConfig {
            si_cancellation: 0.0,
            ..SimConfig::default()
        };
        // 0 -> 1 at 100 m. Interferer 2 sits 200 m behind 0.
        let states = vec![
            obu(0, 0, 500.0),
            obu(1, 0, 600.0),
            obu(2, 0, 300.0),
            obu(3, 0, 900.0),
            obu(4, 0, 100.0),
        ];
        let geom = Geometry::new(&states, &cfg);
        let fading = FadingTable::unit(5);
        let l = Link::new(0, 1);
        let alone = ConcurrentSet::new(5, vec![l], 3).unwrap();
        let base = sinr(l, &alone, &fading, &geom, &cfg).unwrap();
        // Aimed straight through receiver 1 at boresight.
        let aimed = ConcurrentSet::new(5, vec![l, Link::new(2, 3)], 3).unwrap();
        let s_aimed = sinr(l, &aimed, &fading, &geom, &cfg).unwrap();
        // Aimed away from it: attenuated by A_m.
        let away = ConcurrentSet::new(5, vec![l, Link::new(2, 4)], 3).unwrap();
        let s_away = sinr(l, &away, &fading, &geom, &cfg).unwrap();
        assert!(s_aimed < s_away && s_away < base);
        // Boresight interferer at 300 m vs desired at 100 m: SIR = 9.
        assert!((s_aimed - 9.0).abs() / 9.0 < 1e-3, "{s_aimed}");
        // Back lobe is 26 dB down from boresight.
        let sir_away = 9.0 * db_to_linear(26.0);
        let expected = 1.0 / (1.0 / base + 1.0 / sir_away);
        assert!(rel(s_away, expected) < 1e-9);
    }

    #[test]
    fn neighbor_relation() {
        let cfg = SimConfig::default();
        let a = obu(0, 0, 0.0);
        assert!(is_neighbor(&a, &obu(2, 0, 100.0), &cfg));
        // 1480 m: 53.58 - 20 log10(14.8) = 30.2 dB.
        assert!(is_neighbor(&a, &obu(2, 0, 1480.0), &cfg));
        let strict = SimConfig {
            sinr_threshold: db_to_linear(40.0),
            ..cfg.clone()
        };
        assert!(!is_neighbor(&a, &obu(2, 0, 1480.0), &strict));
        // Put the threshold exactly at the link's SNR: inclusive.
        let snr = snr_interference_free(700.0, &cfg).unwrap();
        let edge = SimConfig {
            sinr_threshold: snr,
            ..cfg.clone()
        };
        assert!(is_neighbor(&a, &obu(2, 0, 700.0), &edge));
        assert!(!is_neighbor(&a, &obu(2, 0, 700.0001), &edge));
    }

    #[test]
    fn fading_moments_quick() {
        let mut rng = stream_from_seed(1, StreamLabel::Fading, 0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| draw_fading(&mut rng, 2.0)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02);
        assert!((var - 0.5).abs() < 0.02);
        let ys: Vec<f64> = (0..n).map(|_| draw_fading(&mut rng, 200.0)).collect();
        let var = ys.iter().map(|y| (y - 1.0).powi(2)).sum::<f64>() / n as f64;
        assert!((var - 0.005).abs() < 0.001);
    }

    #[test]
    fn concurrent_set_constraints() {
        let l = Link::new;
        assert_eq!(
            ConcurrentSet::new(4, vec![l(0, 1), l(2, 1)], 3),
            Err(RadioError::DuplicateReceiver(1))
        );
        assert_eq!(
            ConcurrentSet::new(5, vec![l(0, 1), l(0, 2), l(0, 3)], 2),
            Err(RadioError::BeamBudget {
                obu: 0,
                beams: 3,
                budget: 2
            })
        );
        assert_eq!(ConcurrentSet::new(2, vec![l(1, 1)], 2), Err(RadioError::SelfLink(1)));
        let s = ConcurrentSet::new(4, vec![l(0, 1), l(1, 2), l(1, 3)], 2).unwrap();
        assert_eq!(s.tx_beams(1), 2);
        assert_eq!(s.tx_beams(2), 0);
    }

    #[test]
    fn sinr_never_increases_when_links_are_added() {
        let cfg = SimConfig::default();
        let mut rng = stream_from_seed(9, StreamLabel::Fading, 0);
        for trial in 0..200 {
            let states: Vec<ObuState> = (0..8)
                .map(|id| obu(id, (id % 2) as u8, rng.gen_range(0.0..3000.0)))
                .collect();
            let geom = Geometry::new(&states, &cfg);
            let fading = FadingTable::draw(8, 2.0, &mut rng);
            let mut links = vec![Link::new(0, 1)];
            let mut prev = f64::INFINITY;
            for (tx, rx) in [(2, 3), (4, 5), (6, 7), (2, 0), (3, 6)] {
                links.push(Link::new(tx, rx));
                let set = ConcurrentSet::new(8, links.clone(), 3).unwrap();
                let s = sinr(Link::new(0, 1), &set, &fading, &geom, &cfg).unwrap();
                assert!(s <= prev, "trial {trial}");
                prev = s;
            }
        }
    }
}
