use std::collections::BTreeSet;

use mramsim_core::characterization::{characterize_detailed, STATS_CSV_HEADER};
use mramsim_core::*;
use proptest::prelude::*;

fn chip(model: ModelId, words: usize, seed: u64) -> ChipModel {
    ChipModel::new(ChipProfile::preset(model).with_capacity(words), seed).unwrap()
}

fn char_map(model: ModelId, words: usize, seed: u64, n: usize) -> ErrorMap {
    let mut c = chip(model, words, seed);
    characterize(&mut c, 5.0, n, &Pattern::SOLID_ZEROS, &Environment::ROOM).unwrap()
}

#[test]
fn more_rounds_only_add_addresses() {
    for m in ModelId::ALL {
        let one = char_map(m, 2048, 3, 1);
        let ten = char_map(m, 2048, 3, 10);
        let fifty = char_map(m, 2048, 3, 50);
        assert!(one.is_subset_of(&ten), "{m}");
        assert!(ten.is_subset_of(&fifty), "{m}");
        assert_eq!(
            &fifty.per_measurement_counts[..10],
            &ten.per_measurement_counts[..]
        );
    }
}

#[test]
fn rounds_do_not_depend_on_thread_count() {
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| char_map(ModelId::C2, 1024, 8, 12))
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn nominal_pulse_gives_an_empty_map() {
    let mut c = chip(ModelId::C2, 1024, 1);
    let map = characterize(&mut c, 15.0, 5, &Pattern::SOLID_ZEROS, &Environment::ROOM).unwrap();
    assert!(map.is_empty());
    assert_eq!(map.per_measurement_counts, vec![0; 5]);
}

#[test]
fn half_toggling_patterns_are_immune() {
    for m in ModelId::ALL {
        for p in [
            "solid:AAAA",
            "solid:5555",
            "row-striped:AAAA",
            "col-striped:5555",
            "checkerboard:AAAA",
        ] {
            let mut c = chip(m, 2048, 4);
            let map =
                characterize(&mut c, 5.0, 5, &p.parse().unwrap(), &Environment::ROOM).unwrap();
            assert!(map.is_empty(), "{m} {p}");
        }
    }
}

#[test]
fn stats_of_a_map_against_itself() {
    let map = char_map(ModelId::C1, 4096, 2, 20);
    let s = compute_stats(&map, &map).unwrap();
    assert_eq!(s.c_a_pct, Some(100.0));
    assert_eq!(s.c_b_pct, Some(100.0));
    assert_eq!(s.e_a_pct, s.m_a_pct);
    assert_eq!(s.e_b_pct, s.m_b_pct);
}

#[test]
fn error_map_json_round_trip() {
    let map = char_map(ModelId::C5, 1024, 6, 3);
    let back = ErrorMap::from_json(&map.to_json().unwrap()).unwrap();
    assert_eq!(back, map);
    assert_eq!(back.to_json().unwrap(), map.to_json().unwrap());
}

#[test]
fn stats_csv_layout() {
    assert_eq!(
        STATS_CSV_HEADER.join(","),
        "chip,pattern,t_w_ns,e_a_pct,e_b_pct,m_a_pct,m_b_pct,c_a_pct,c_b_pct"
    );
}

#[test]
fn sweep_is_monotone_and_zero_at_nominal() {
    let ts = [2.5, 3.0, 4.0, 5.0, 7.5, 10.0, 15.0];
    let points = sweep_t_w(
        || ChipModel::new(ChipProfile::preset(ModelId::C1).with_capacity(4096), 21),
        &ts,
        &Pattern::SOLID_ZEROS,
        &Environment::ROOM,
    )
    .unwrap();
    for w in points.windows(2) {
        assert!(w[1].failed_bits <= w[0].failed_bits, "{w:?}");
    }
    assert_eq!(points.last().unwrap().failed_bits, 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sorting_is_a_permutation_ordered_by_severity(
        masks in prop::collection::btree_map(0u32..256, 1u16.., 0..64),
        intended in prop::collection::vec(any::<u16>(), 256),
        byte in any::<bool>(),
    ) {
        let map = ErrorMap::from_masks("x", 5.0, "p", 256, masks.clone());
        let stored: Vec<u16> = intended.iter().enumerate().map(|(a, &w)| w ^ map.mask(a as u32)).collect();
        let g = if byte { Granularity::Byte } else { Granularity::Word };
        let sorted = sort_addresses(&map, &intended, &stored, g).unwrap();
        let got: BTreeSet<u32> = sorted.addresses().collect();
        let want: BTreeSet<u32> = masks.keys().copied().collect();
        prop_assert_eq!(got, want);
        prop_assert_eq!(sorted.len(), masks.len());
        for w in sorted.entries.windows(2) {
            prop_assert!((w[0].severity, w[0].addr) < (w[1].severity, w[1].addr));
        }
        for e in &sorted.entries {
            prop_assert_eq!(e.severity, g.severity(intended[e.addr as usize], stored[e.addr as usize]));
        }
    }

    #[test]
    fn detailed_run_agrees_with_the_map(seed in any::<u64>(), n in 1usize..6) {
        let mut c = chip(ModelId::C2, 256, seed);
        let d = characterize_detailed(&mut c, 5.0, n, &Pattern::SOLID_ZEROS, &Environment::ROOM).unwrap();
        prop_assert_eq!(d.intended.len(), 256);
        prop_assert_eq!(c.contents(), &d.stored[..]);
        // The last round's errors are part of the union.
        for (a, (&want, &got)) in d.intended.iter().zip(&d.stored).enumerate() {
            prop_assert_eq!((want ^ got) & !d.map.mask(a as u32), 0);
        }
    }
}
