//! Two-lane freeway mobility on a ring road.
//!
//! Lane 0 drives towards increasing positions, lane 1 towards decreasing
//! positions. Vehicles never change lanes or overtake: a follower whose gap to
//! its predecessor falls to `d_min` drops to `v_min`, and one whose gap reaches
//! `d_max` speeds up to `v_max`. Otherwise the speed random-walks by `±a` with
//! probability `p` each.

use rand::Rng;
use thiserror::Error;

use crate::config::SimConfig;

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("need at least 2 OBUs, got {0}")]
    TooFewObus(usize),
    #[error("lane {lane} cannot hold {count} vehicles: {count} x d_min = {needed} m exceeds road length {road} m")]
    Infeasible {
        lane: u8,
        count: usize,
        needed: f64,
        road: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObuState {
    pub obu_id: usize,
    /// 0 or 1.
    pub lane: u8,
    pub pos_m: f64,
    pub speed_mps: f64,
}

impl ObuState {
    /// +1 for lane 0, -1 for lane 1.
    pub fn heading(&self) -> f64 {
        if self.lane == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn lateral_m(&self, cfg: &SimConfig) -> f64 {
        f64::from(self.lane) * cfg.lane_separation_m
    }
}

pub fn lane_of(obu_id: usize) -> u8 {
    (obu_id % 2) as u8
}

fn wrap(x: f64, road: f64) -> f64 {
    let r = x.rem_euclid(road);
    // rem_euclid can round up to exactly `road` for tiny negative inputs.
    if r >= road {
        0.0
    } else {
        r
    }
}

/// Places `cfg.n_obus` vehicles: ids alternate between the lanes, each lane is
/// laid out as a platoon with headways drawn from `[d_min, d_max]`, and the
/// remaining ring distance closes the loop behind the platoon leader.
pub fn initial_placement<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<Vec<ObuState>, MobilityError> {
    let n = cfg.n_obus;
    if n < 2 {
        return Err(MobilityError::TooFewObus(n));
    }
    let road = cfg.road_length_m;
    for lane in 0..2u8 {
        let count = (0..n).filter(|&id| lane_of(id) == lane).count();
        let needed = count as f64 * cfg.d_min_m;
        if needed > road {
            return Err(MobilityError::Infeasible {
                lane,
                count,
                needed,
                road,
            });
        }
    }

    let mut states: Vec<ObuState> = (0..n)
        .map(|id| ObuState {
            obu_id: id,
            lane: lane_of(id),
            pos_m: 0.0,
            speed_mps: 0.0,
        })
        .collect();

    for lane in 0..2u8 {
        let ids: Vec<usize> = (0..n).filter(|&id| lane_of(id) == lane).collect();
        let mut gaps: Vec<f64> = (1..ids.len())
            .map(|_| rng.gen_range(cfg.d_min_m..=cfg.d_max_m))
            .collect();
        let platoon: f64 = gaps.iter().sum();
        if platoon > road - cfg.d_min_m {
            // Squeeze towards d_min so the closing gap is exactly d_min.
            let slack: f64 = gaps.iter().map(|g| g - cfg.d_min_m).sum();
            let k = (road - ids.len() as f64 * cfg.d_min_m) / slack;
            for g in &mut gaps {
                *g = cfg.d_min_m + (*g - cfg.d_min_m) * k;
            }
        }
        let heading = if lane == 0 { 1.0 } else { -1.0 };
        // ids[0] trails; each subsequent id is ahead of the previous one.
        let mut x = rng.gen_range(0.0..road);
        states[ids[0]].pos_m = x;
        for (k, &id) in ids.iter().enumerate().skip(1) {
            x = wrap(x + heading * gaps[k - 1], road);
            states[id].pos_m = x;
        }
    }

    for s in &mut states {
        s.speed_mps = rng.gen_range(cfg.v_min_mps..=cfg.v_max_mps);
    }
    Ok(states)
}

/// Which rule produced the next speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeedBranch {
    /// Gap at or below `d_min`: forced to `v_min`.
    HeadwayBrake,
    /// Gap at or above `d_max`: forced to `v_max`.
    HeadwayRelease,
    Accelerate,
    Decelerate,
    Keep,
}

pub fn speed_step<R: Rng + ?Sized>(v: f64, gap_ahead_m: f64, cfg: &SimConfig, rng: &mut R) -> (f64, SpeedBranch) {
    if gap_ahead_m <= cfg.d_min_m {
        return (cfg.v_min_mps, SpeedBranch::HeadwayBrake);
    }
    if gap_ahead_m >= cfg.d_max_m {
        return (cfg.v_max_mps, SpeedBranch::HeadwayRelease);
    }
    let p = cfg.speed_change_prob;
    let u: f64 = rng.gen();
    if u < p {
        ((v + cfg.accel_mps2).min(cfg.v_max_mps), SpeedBranch::Accelerate)
    } else if u < 2.0 * p {
        ((v - cfg.accel_mps2).max(cfg.v_min_mps), SpeedBranch::Decelerate)
    } else {
        (v, SpeedBranch::Keep)
    }
}

pub fn update_speed<R: Rng + ?Sized>(v: f64, gap_ahead_m: f64, cfg: &SimConfig, rng: &mut R) -> f64 {
    speed_step(v, gap_ahead_m, cfg, rng).0
}

/// Forward distance (along the direction of travel) from `s` to the nearest
/// same-lane vehicle ahead. A vehicle alone in its lane sees the full ring.
pub fn gap_ahead(states: &[ObuState], idx: usize, cfg: &SimConfig) -> f64 {
    let me = &states[idx];
    let road = cfg.road_length_m;
    states
        .iter()
        .enumerate()
        .filter(|(j, o)| *j != idx && o.lane == me.lane)
        .map(|(_, o)| {
            let d = wrap(me.heading() * (o.pos_m - me.pos_m), road);
            if d == 0.0 {
                road
            } else {
                d
            }
        })
        .fold(road, f64::min)
}

/// Tally of speed rules applied, for frequency checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BranchCounts {
    pub headway_brake: u64,
    pub headway_release: u64,
    pub accelerate: u64,
    pub decelerate: u64,
    pub keep: u64,
}

impl BranchCounts {
    fn record(&mut self, b: SpeedBranch) {
        match b {
            SpeedBranch::HeadwayBrake => self.headway_brake += 1,
            SpeedBranch::HeadwayRelease => self.headway_release += 1,
            SpeedBranch::Accelerate => self.accelerate += 1,
            SpeedBranch::Decelerate => self.decelerate += 1,
            SpeedBranch::Keep => self.keep += 1,
        }
    }

    /// Number of draws that went through the random rule.
    pub fn random_draws(&self) -> u64 {
        self.accelerate + self.decelerate + self.keep
    }
}

/// One mobility tick covering `n_slots` slots: every speed is updated once
/// against the current gaps, then every vehicle moves at its new speed.
pub fn advance<R: Rng + ?Sized>(states: &[ObuState], n_slots: usize, cfg: &SimConfig, rng: &mut R) -> Vec<ObuState> {
    advance_counted(states, n_slots, cfg, rng, &mut BranchCounts::default())
}

pub fn advance_counted<R: Rng + ?Sized>(
    states: &[ObuState],
    n_slots: usize,
    cfg: &SimConfig,
    rng: &mut R,
    counts: &mut BranchCounts,
) -> Vec<ObuState> {
    assert!(n_slots >= 1, "advance needs at least one slot");
    let dt = n_slots as f64 * cfg.slot_duration_s;
    let gaps: Vec<f64> = (0..states.len()).map(|i| gap_ahead(states, i, cfg)).collect();
    states
        .iter()
        .zip(gaps)
        .map(|(s, gap)| {
            assert!(gap > 0.0, "OBU {} has non-positive headway {gap}", s.obu_id);
            let (v, branch) = speed_step(s.speed_mps, gap, cfg, rng);
            counts.record(branch);
            ObuState {
                pos_m: wrap(s.pos_m + s.heading() * v * dt, cfg.road_length_m),
                speed_mps: v,
                ..s.clone()
            }
        })
        .collect()
}

/// Ids of one lane in driving order, rotated to start at the smallest id.
/// Equal cycles before and after a run mean nobody overtook.
pub fn lane_cycle(states: &[ObuState], lane: u8) -> Vec<usize> {
    let mut members: Vec<&ObuState> = states.iter().filter(|s| s.lane == lane).collect();
    let heading = if lane == 0 { 1.0 } else { -1.0 };
    members.sort_by(|a, b| (heading * a.pos_m).total_cmp(&(heading * b.pos_m)));
    let mut ids: Vec<usize> = members.iter().map(|s| s.obu_id).collect();
    if let Some(start) = ids.iter().enumerate().min_by_key(|(_, id)| **id).map(|(k, _)| k) {
        ids.rotate_left(start);
    }
    ids
}

/// Longitudinal separation on the ring.
pub fn ring_distance(x1: f64, x2: f64, road: f64) -> f64 {
    let dx = (x1 - x2).abs() % road;
    dx.min(road - dx)
}

/// Euclidean distance with a ring longitudinal component and the lane offset
/// as lateral component.
pub fn pairwise_distance(a: &ObuState, b: &ObuState, cfg: &SimConfig) -> f64 {
    let dx = ring_distance(a.pos_m, b.pos_m, cfg.road_length_m);
    let dy = a.lateral_m(cfg) - b.lateral_m(cfg);
    dx.hypot(dy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_from_seed, StreamLabel};
    use proptest::prelude::*;

    fn rng(seed: u64) -> crate::rng::RngStream {
        stream_from_seed(seed, StreamLabel::Mobility, 0)
    }

    fn obu(id: usize, lane: u8, pos: f64, speed: f64) -> ObuState {
        ObuState {
            obu_id: id,
            lane,
            pos_m: pos,
            speed_mps: speed,
        }
    }

    #[test]
    fn placement_of_ten_vehicles() {
        let cfg = SimConfig::default();
        for seed in 0..50 {
            let states = initial_placement(&cfg, &mut rng(seed)).unwrap();
            assert_eq!(states.len(), 10);
            for lane in 0..2 {
                let ids: Vec<_> = (0..10).filter(|&i| lane_of(i) == lane).collect();
                assert_eq!(ids.len(), 5);
                // Platoon headways between consecutive ids.
                for w in ids.windows(2) {
                    let g = ring_distance(states[w[0]].pos_m, states[w[1]].pos_m, cfg.road_length_m);
                    assert!((50.0 - 1e-9..=300.0 + 1e-9).contains(&g), "gap {g}");
                }
            }
            for s in &states {
                assert!((20.0..=40.0).contains(&s.speed_mps));
                assert!((0.0..3000.0).contains(&s.pos_m));
            }
        }
    }

    #[test]
    fn two_vehicles_one_per_lane() {
        let cfg = SimConfig {
            n_obus: 2,
            ..SimConfig::default()
        };
        let states = initial_placement(&cfg, &mut rng(1)).unwrap();
        assert_eq!(states[0].lane, 0);
        assert_eq!(states[1].lane, 1);
    }

    #[test]
    fn over_dense_lane_is_rejected() {
        let cfg = SimConfig {
            n_obus: 200,
            ..SimConfig::default()
        };
        let err = initial_placement(&cfg, &mut rng(1)).unwrap_err();
        assert!(matches!(err, MobilityError::Infeasible { count: 100, .. }));
        let cfg = SimConfig {
            n_obus: 1,
            ..SimConfig::default()
        };
        assert_eq!(
            initial_placement(&cfg, &mut rng(1)).unwrap_err(),
            MobilityError::TooFewObus(1)
        );
    }

    #[test]
    fn tight_ring_is_squeezed_not_broken() {
        // 10 per lane on 600 m: d_min x 10 = 500 fits, drawn headways do not.
        let cfg = SimConfig {
            n_obus: 20,
            road_length_m: 600.0,
            ..SimConfig::default()
        };
        for seed in 0..20 {
            let states = initial_placement(&cfg, &mut rng(seed)).unwrap();
            for i in 0..states.len() {
                assert!(gap_ahead(&states, i, &cfg) >= cfg.d_min_m - 1e-6);
            }
        }
    }

    #[test]
    fn headway_overrides() {
        let cfg = SimConfig::default();
        let mut r = rng(3);
        assert_eq!(update_speed(30.0, 40.0, &cfg, &mut r), 20.0);
        assert_eq!(update_speed(30.0, 50.0, &cfg, &mut r), 20.0);
        assert_eq!(update_speed(21.0, 300.0, &cfg, &mut r), 40.0);
    }

    #[test]
    fn random_branch_clamps() {
        let cfg = SimConfig::default();
        let mut r = rng(4);
        for _ in 0..1000 {
            let v = update_speed(40.0, 100.0, &cfg, &mut r);
            assert!(v == 40.0 || v == 39.0);
            let v = update_speed(20.0, 100.0, &cfg, &mut r);
            assert!(v == 20.0 || v == 21.0);
        }
    }

    #[test]
    fn branch_frequencies() {
        let cfg = SimConfig::default();
        let mut r = rng(5);
        let (mut up, mut down, mut keep) = (0u32, 0u32, 0u32);
        let n = 1_000_000;
        for _ in 0..n {
            match update_speed(30.0, 100.0, &cfg, &mut r) {
                31.0 => up += 1,
                29.0 => down += 1,
                _ => keep += 1,
            }
        }
        let f = |c: u32| c as f64 / n as f64;
        assert!((f(up) - 0.1).abs() < 0.01);
        assert!((f(down) - 0.1).abs() < 0.01);
        assert!((f(keep) - 0.8).abs() < 0.01);
    }

    #[test]
    fn displacement_and_wrap() {
        let cfg = SimConfig::default();
        // Lone vehicles see the whole ring ahead, so they run at v_max.
        let states = vec![obu(0, 0, 100.0, 40.0), obu(1, 1, 100.0, 40.0)];
        let next = advance(&states, 10, &cfg, &mut rng(6));
        assert!((next[0].pos_m - 100.04).abs() < 1e-9);
        assert!((next[1].pos_m - 99.96).abs() < 1e-9);

        let states = vec![obu(0, 0, 2999.99, 40.0), obu(1, 1, 0.01, 40.0)];
        let next = advance(&states, 10, &cfg, &mut rng(6));
        assert!((next[0].pos_m - 0.03).abs() < 1e-9);
        assert!((next[1].pos_m - 2999.97).abs() < 1e-9);
    }

    #[test]
    fn distances() {
        let cfg = SimConfig::default();
        let d = |a, b| pairwise_distance(&a, &b, &cfg);
        assert_eq!(d(obu(0, 0, 0.0, 30.0), obu(2, 0, 100.0, 30.0)), 100.0);
        assert_eq!(d(obu(0, 0, 10.0, 30.0), obu(1, 1, 10.0, 30.0)), 4.0);
        assert!((d(obu(0, 0, 2975.0, 30.0), obu(2, 0, 25.0, 30.0)) - 50.0).abs() < 1e-9);
        assert!((d(obu(0, 0, 0.0, 30.0), obu(2, 0, 2950.0, 30.0)) - 50.0).abs() < 1e-9);
    }

    #[test]
    fn gap_follows_heading() {
        let cfg = SimConfig::default();
        let states = vec![
            obu(0, 0, 100.0, 30.0),
            obu(1, 1, 100.0, 30.0),
            obu(2, 0, 250.0, 30.0),
            obu(3, 1, 20.0, 30.0),
        ];
        assert_eq!(gap_ahead(&states, 0, &cfg), 150.0);
        assert_eq!(gap_ahead(&states, 2, &cfg), 2850.0);
        assert_eq!(gap_ahead(&states, 1, &cfg), 80.0);
        assert_eq!(gap_ahead(&states, 3, &cfg), 2920.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn speeds_bounded_and_order_kept(seed in any::<u64>(), n in 2usize..16, ticks in 1usize..400) {
            let cfg = SimConfig { n_obus: n, ..SimConfig::default() };
            let mut r = rng(seed);
            let mut states = initial_placement(&cfg, &mut r).unwrap();
            let cycles = [lane_cycle(&states, 0), lane_cycle(&states, 1)];
            for _ in 0..ticks {
                states = advance(&states, 10, &cfg, &mut r);
                for s in &states {
                    prop_assert!(s.speed_mps >= cfg.v_min_mps && s.speed_mps <= cfg.v_max_mps);
                    prop_assert!(s.pos_m >= 0.0 && s.pos_m < cfg.road_length_m);
                }
            }
            prop_assert_eq!(&cycles[0], &lane_cycle(&states, 0));
            prop_assert_eq!(&cycles[1], &lane_cycle(&states, 1));
        }
    }
}
