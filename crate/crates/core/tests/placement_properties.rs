use edgecache::clustering::prop2_condition;
use edgecache::model::{
    group_load, spectral_profile, CachePlacement, FileLibrary, InterferenceSchedule,
};
use edgecache::placement::{
    brute_force_place, greedy_place, marginal_gain, within_proximity_assumption,
};
use edgecache::popularity::{zipf_popularity, ZipfParams};
use edgecache::{Execution, NetworkParams};
use proptest::prelude::*;

fn instance(
    segs: &[u64],
    skew: f64,
    bits: f64,
    k: usize,
    dbh: f64,
) -> (FileLibrary, NetworkParams) {
    let q = zipf_popularity(ZipfParams {
        files: segs.len(),
        skew,
    })
    .unwrap();
    let lib = FileLibrary::new(q, segs.to_vec(), bits).unwrap();
    let net = NetworkParams {
        backhaul_delay_s: dbh,
        ..NetworkParams::default()
    }
    .with_cluster_size(k, &InterferenceSchedule::default())
    .unwrap();
    (lib, net)
}

fn gain(counts: &[u64], h: usize, lib: &FileLibrary, net: &NetworkParams) -> f64 {
    let p = CachePlacement::new(counts.to_vec(), counts.iter().sum()).unwrap();
    let omega = group_load(&p, lib, net.cluster_size).unwrap();
    marginal_gain(&p, h, &omega, &spectral_profile(net).unwrap(), lib, net).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn admissible_gains_are_positive_and_shrink_along_own_file(
        segs in proptest::collection::vec(1u64..30, 1..6),
        fracs in proptest::collection::vec(0.0f64..1.0, 6),
        skew in 0.0f64..2.0,
        bits in 1e3f64..1e5,
        k in 1usize..=4,
        h in 0usize..6,
    ) {
        let (lib, net) = instance(&segs, skew, bits, k, 0.2);
        prop_assume!(prop2_condition(&net, &lib).unwrap());
        let h = h % segs.len();
        let mut counts: Vec<u64> = segs.iter().zip(&fracs).map(|(&s, f)| (s as f64 * f) as u64).collect();
        counts[h] = counts[h].min(segs[h] - 1);
        let first = gain(&counts, h, &lib, &net);
        prop_assert!(first > 0.0);
        if counts[h] + 2 <= segs[h] && within_proximity_assumption(counts[h] + 1, segs[h], k) {
            let mut next = counts.clone();
            next[h] += 1;
            let second = gain(&next, h, &lib, &net);
            prop_assert!(second > 0.0);
            prop_assert!(first >= second - 1e-15 * first.abs(), "{} then {}", first, second);
        }
    }

    #[test]
    fn greedy_within_guarantee_of_optimum(
        segs in proptest::collection::vec(1u64..=5, 1..=4),
        skew in 0.0f64..2.0,
        k in 1usize..=3,
        budget in 0u64..=12,
    ) {
        let (lib, net) = instance(&segs, skew, 1000.0, k, 0.2);
        let g = greedy_place(&lib, &net, budget).unwrap();
        let b = brute_force_place(&lib, &net, budget, Execution::Parallel).unwrap();
        prop_assert!(b.delay.total_s <= g.delay.total_s + 1e-15);
        prop_assert!(g.objective_gain >= (1.0 - (-1.0f64).exp()) * b.objective_gain - 1e-15);
        prop_assert!(g.objective_gain >= 0.0);
    }
}

#[test]
fn four_file_oracle_example() {
    let (lib, net) = instance(&[4, 4, 4, 4], 1.0, 1000.0, 2, 0.2);
    let g = greedy_place(&lib, &net, 6).unwrap();
    let b = brute_force_place(&lib, &net, 6, Execution::Sequential).unwrap();
    assert!(g.objective_gain >= (1.0 - (-1.0f64).exp()) * b.objective_gain);
    assert!(b.objective_gain > 0.0);
}
