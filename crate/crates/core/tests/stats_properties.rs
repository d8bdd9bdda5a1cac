mod common;

use std::collections::BTreeMap;

use common::simpson_two_sided;
use proptest::prelude::*;
use tar_bench::stats::{assign_bins, bonferroni, difficulty, paired_t_test, student_t_two_sided, PairedSample};

#[test]
fn tail_agrees_with_numeric_integration() {
    for &df in &[1.0, 2.0, 3.0, 5.0, 10.0, 30.0] {
        for &t in &[0.1, 0.5, 1.0, 2.0, 3.872983346207417, 6.0] {
            let got = student_t_two_sided(t, df);
            let want = simpson_two_sided(t, df);
            assert!((got - want).abs() < 1e-8, "df {df}, t {t}: {got} vs {want}");
        }
    }
}

proptest! {
    #[test]
    fn swapping_sides_negates_t(pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..30)) {
        let (c, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let fwd = paired_t_test(&PairedSample::new(c.clone(), b.clone()).unwrap());
        let rev = paired_t_test(&PairedSample::new(b, c).unwrap());
        match (fwd, rev) {
            (Ok(f), Ok(r)) => {
                prop_assert!((f.t + r.t).abs() <= 1e-12 * f.t.abs().max(1.0));
                prop_assert!((f.p - r.p).abs() <= 1e-12);
                prop_assert!((0.0..=1.0).contains(&f.p));
            }
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "asymmetric outcome {:?}", other),
        }
    }

    #[test]
    fn identical_arrays_give_p_one(xs in prop::collection::vec(-1e6f64..1e6, 2..30)) {
        let t = paired_t_test(&PairedSample::new(xs.clone(), xs).unwrap()).unwrap();
        prop_assert_eq!((t.t, t.p), (0.0, 1.0));
    }

    #[test]
    fn bonferroni_is_monotone_and_capped(p in 0.0f64..=1.0, q in 0.0f64..=1.0, m in 1usize..50, k in 1usize..50) {
        let a = bonferroni(p, m).unwrap();
        prop_assert!(a <= 1.0 && a >= p);
        if p <= q {
            prop_assert!(a <= bonferroni(q, m).unwrap());
        }
        if m <= k {
            prop_assert!(a <= bonferroni(p, k).unwrap());
        }
    }

    #[test]
    fn bins_partition_and_ignore_input_order(
        rs in prop::collection::vec(1usize..12_000, 1..40),
        seed in any::<u64>(),
    ) {
        let topics: Vec<(String, usize)> = rs.iter().enumerate().map(|(i, r)| (format!("t{i}"), *r)).collect();
        let bins = assign_bins(&topics);
        prop_assert_eq!(bins.len(), topics.len());
        for (t, r) in &topics {
            prop_assert_eq!(bins[t].0, difficulty(*r));
        }
        let mut shuffled = topics.clone();
        let mut rng = tar_bench::rng::SplitMix64::new(seed);
        rng.shuffle(&mut shuffled);
        prop_assert_eq!(assign_bins(&shuffled), bins.clone());

        // Within a class, a larger R never lands in a lower prevalence bin.
        let mut by_class: BTreeMap<_, Vec<(usize, _)>> = BTreeMap::new();
        for (t, r) in &topics {
            by_class.entry(bins[t].0).or_default().push((*r, bins[t].1));
        }
        for members in by_class.values_mut() {
            members.sort();
            prop_assert!(members.windows(2).all(|w| w[0].1 <= w[1].1));
        }
    }
}
