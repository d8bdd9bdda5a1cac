mod common;

use std::collections::{HashMap, HashSet};

use common::{oracle_r_precision, oracle_second_phase, oracle_target, review_state, task};
use proptest::prelude::*;
use tar_bench::corpus::TopicTask;
use tar_bench::evaluation::{
    build_recorded_ranking, r_precision, relative_cost, review_cost, second_phase_counts, target_count, CostStructure,
    PhaseCounts,
};

/// A task, a reviewed subset containing the seed, and scores for the rest.
/// Scores come from a small grid so ties are common.
fn instance() -> impl Strategy<Value = (TopicTask, HashSet<String>, HashMap<String, f64>)> {
    (2usize..=50).prop_flat_map(|n| {
        (
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(0u8..=10, n),
            0..n,
        )
            .prop_map(move |(rel, rev, grid, forced)| {
                let mut relevant: Vec<usize> = (0..n).filter(|&i| rel[i]).collect();
                if relevant.is_empty() {
                    relevant.push(forced);
                }
                let t = task(n, &relevant);
                let mut reviewed: HashSet<String> = (0..n).filter(|&i| rev[i]).map(|i| t.doc_ids[i].clone()).collect();
                reviewed.insert(t.seed_doc.clone());
                let scores = t
                    .doc_ids
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| !reviewed.contains(*d))
                    .map(|(i, d)| (d.clone(), f64::from(grid[i]) / 10.0))
                    .collect();
                (t, reviewed, scores)
            })
    })
}

fn sorted(set: &HashSet<String>) -> Vec<String> {
    let mut v: Vec<String> = set.iter().cloned().collect();
    v.sort();
    v
}

const RHOS: [(usize, usize); 4] = [(1, 2), (4, 5), (19, 20), (1, 1)];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn r_precision_matches_brute_force((t, reviewed, scores) in instance()) {
        let state = review_state(&t, &sorted(&reviewed));
        let ranking = build_recorded_ranking(&state, &scores, &t).unwrap();
        prop_assert_eq!(r_precision(&ranking, &t).unwrap(), oracle_r_precision(&t, &reviewed, &scores));
    }

    #[test]
    fn second_phase_matches_brute_force_and_is_monotone((t, reviewed, scores) in instance()) {
        let state = review_state(&t, &sorted(&reviewed));
        let mut last = (0, 0);
        for (num, den) in RHOS {
            let rho = num as f64 / den as f64;
            prop_assert_eq!(target_count(rho, t.r()).unwrap(), oracle_target(num, den, t.r()));
            let got = second_phase_counts(&state, &scores, &t, rho).unwrap();
            let want = oracle_second_phase(&t, &reviewed, &scores, oracle_target(num, den, t.r()));
            prop_assert_eq!(got, want);
            prop_assert!(got.0 >= last.0 && got.1 >= last.1, "{:?} after {:?}", got, last);
            last = got;
        }
    }

    #[test]
    fn r_precision_is_at_least_reviewed_recall((t, reviewed, scores) in instance()) {
        let state = review_state(&t, &sorted(&reviewed));
        let ranking = build_recorded_ranking(&state, &scores, &t).unwrap();
        let t_p = reviewed.iter().filter(|d| t.is_relevant(d)).count();
        prop_assert!(r_precision(&ranking, &t).unwrap() >= t_p as f64 / t.r() as f64);
    }

    #[test]
    fn cost_is_the_linear_form(
        counts in (0usize..100_000, 0usize..100_000, 0usize..100_000, 0usize..100_000),
        coef in (0.0f64..100.0, 0.0f64..100.0, 0.0f64..100.0, 0.0f64..100.0),
    ) {
        let cs = CostStructure::new(coef.0, coef.1, coef.2, coef.3).unwrap();
        let (t_p, t_n, m_p, m_n) = counts;
        let c = review_cost(PhaseCounts { t_p, t_n, m_p, m_n }, &cs);
        let closed = coef.0 * t_p as f64 + coef.1 * t_n as f64 + coef.2 * m_p as f64 + coef.3 * m_n as f64;
        prop_assert_eq!(c.total, closed);
    }

    #[test]
    fn relative_cost_of_self_is_one(costs in prop::collection::btree_map("[a-z]{1,4}", 1.0f64..1e6, 1..30)) {
        let rc = relative_cost(&costs, &costs).unwrap();
        prop_assert_eq!(rc.mean_of_ratios, 1.0);
        prop_assert_eq!(rc.ratio_of_sums, 1.0);
        prop_assert_eq!(rc.n_topics, costs.len());
    }
}
