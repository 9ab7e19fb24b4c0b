use std::collections::HashSet;

use proptest::prelude::*;

use fdpcd::checks::{audit_games, exhaustive_selection, SmallInstance};
use fdpcd::game::{evaluate, form_partition, Evaluator, Partition, ValueKind};
use fdpcd::rng::{stream_from_seed, StreamLabel};
use fdpcd::selection::select_broadcasts;
use fdpcd::SimConfig;

fn instance(seed: u64, max_obus: usize) -> SmallInstance {
    SmallInstance::random(&mut stream_from_seed(seed, StreamLabel::Possession, 1), max_obus, 5)
}

fn joined(to: &[usize], obu: usize) -> Vec<usize> {
    let mut v = to.to_vec();
    v.push(obu);
    v.sort_unstable();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Random instances are far from the reference deployment and the game
    /// can end with a profitable deviation left, but only into a coalition
    /// the deviator has already been a member of.
    #[test]
    fn profit_game_ends_history_stable_and_guarded(seed in any::<u64>(), random_start in any::<bool>()) {
        let inst = instance(seed, 9);
        let view = inst.view();
        let n = view.n_obus();
        let mut rng = stream_from_seed(seed, StreamLabel::GameOrder, 0);
        let initial = if random_start { Partition::random(n, &mut rng) } else { Partition::singletons(n) };
        let mut ev = Evaluator::new(view, ValueKind::Profit);
        let (partition, trace) = form_partition(initial, &mut ev, 10_000, &mut rng).unwrap();
        prop_assert_eq!(trace.switch_count, trace.switches.len());

        let mut visited: Vec<HashSet<Vec<usize>>> = vec![HashSet::new(); n];
        for s in &trace.switches {
            let after = joined(&s.to, s.obu);
            let gain = evaluate(&after, &view, ValueKind::Profit).value;
            let was = evaluate(&s.from, &view, ValueKind::Profit).value;
            prop_assert!(gain > was, "switch {:?} did not raise the value", s);
            if !s.to.is_empty() {
                let before = evaluate(&s.to, &view, ValueKind::Profit);
                let now = evaluate(&after, &view, ValueKind::Profit);
                for (k, &j) in before.members.iter().enumerate() {
                    prop_assert!(now.psi_of(j).unwrap() >= before.psi[k]);
                }
            }
            visited[s.obu].insert(s.from.clone());
            visited[s.obu].insert(after);
        }

        let mut fresh = Evaluator::new(view, ValueKind::Profit);
        for i in 0..n {
            let current = partition.coalition_of(i).clone();
            let mut targets: Vec<Vec<usize>> =
                partition.coalitions().iter().filter(|c| !c.contains(&i)).cloned().collect();
            if current.len() > 1 {
                targets.push(Vec::new());
            }
            for t in targets {
                if fresh.prefers(i, &t, &current) {
                    prop_assert!(visited[i].contains(&joined(&t, i)), "OBU {} free to join {:?}", i, t);
                }
            }
        }
    }

    #[test]
    fn no_obu_reenters_a_visited_coalition(seed in any::<u64>(), delay in any::<bool>()) {
        let inst = instance(seed, 9);
        let view = inst.view();
        let n = view.n_obus();
        let kind = if delay { ValueKind::Delay } else { ValueKind::Profit };
        let mut rng = stream_from_seed(seed, StreamLabel::GameOrder, 0);
        let mut ev = Evaluator::new(view, kind);
        let (_, trace) = form_partition(Partition::singletons(n), &mut ev, 10_000, &mut rng).unwrap();
        let mut seen: Vec<HashSet<Vec<usize>>> = vec![HashSet::new(); n];
        for s in &trace.switches {
            seen[s.obu].insert(s.from.clone());
            prop_assert!(seen[s.obu].insert(joined(&s.to, s.obu)), "OBU {} re-entered {:?}", s.obu, s.to);
        }
        prop_assert!(trace.visited_partitions <= trace.switch_count + 1);
    }

    #[test]
    fn selection_matches_exhaustive_search(seed in any::<u64>()) {
        let inst = instance(seed, 5);
        let view = inst.view();
        let all: Vec<usize> = (0..view.n_obus()).collect();
        let fast = select_broadcasts(&all, &view);
        let slow = exhaustive_selection(&view);
        prop_assert!(fast.violations(&view).is_empty());
        for (a, b) in fast.records.iter().zip(&slow.records) {
            let mut ra = a.receivers.clone();
            let mut rb = b.receivers.clone();
            ra.sort_unstable();
            rb.sort_unstable();
            prop_assert_eq!(a.content, b.content);
            prop_assert_eq!(ra, rb);
        }
    }
}

#[test]
fn coalition_value_matches_its_parts() {
    let inst = instance(11, 8);
    let view = inst.view();
    let all: Vec<usize> = (0..view.n_obus()).collect();
    let e = evaluate(&all, &view, ValueKind::Profit);
    let psi: u32 = e.psi.iter().sum();
    let want = inst.cfg.utility_factor * f64::from(psi) - inst.cfg.pricing_factor * all.len() as f64;
    assert!((e.value - want).abs() < 1e-12, "{} vs {want}", e.value);
}

#[test]
fn reference_snapshots_end_nash_stable() {
    let audit = audit_games(&SimConfig::default(), 20, &[6, 14], ValueKind::Profit);
    assert!(audit.stability_check().passed, "{}", audit.stability_check());
    assert!(audit.guard_check().passed, "{}", audit.guard_check());
}
