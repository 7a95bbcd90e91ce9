use mramsim_core::device::{ChipSnapshot, WORD_BITS};
use mramsim_core::*;
use proptest::prelude::*;

fn chip(model: ModelId, words: usize, seed: u64) -> ChipModel {
    ChipModel::new(ChipProfile::preset(model).with_capacity(words), seed).unwrap()
}

fn model() -> impl Strategy<Value = ModelId> {
    prop::sample::select(ModelId::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn same_inputs_same_outcome(
        m in model(),
        seed in any::<u64>(),
        writes in prop::collection::vec((0usize..32, any::<u16>(), 1.0f64..16.0), 1..40),
    ) {
        let mut a = chip(m, 32, seed);
        let mut b = chip(m, 32, seed);
        for &(addr, data, t_w) in &writes {
            let t = WriteTimings::with_pulse_width(t_w);
            let oa = a.write_word(addr, data, &t, &Environment::ROOM).unwrap();
            let ob = b.write_word(addr, data, &t, &Environment::ROOM).unwrap();
            prop_assert_eq!(oa, ob);
        }
        prop_assert_eq!(a.contents(), b.contents());
    }

    #[test]
    fn writes_only_touch_toggled_bits_of_their_word(
        m in model(),
        seed in any::<u64>(),
        init in any::<u16>(),
        addr in 0usize..16,
        data in any::<u16>(),
        t_w in 0.5f64..20.0,
    ) {
        let mut c = chip(m, 16, seed);
        c.reset_memory(init);
        let before = c.contents().to_vec();
        let out = c
            .write_word(addr, data, &WriteTimings::with_pulse_width(t_w), &Environment::ROOM)
            .unwrap();
        prop_assert_eq!(out.toggled, init ^ data);
        prop_assert_eq!(out.failed & !out.toggled, 0);
        // Failed bits keep the old value, everything else lands.
        prop_assert_eq!(out.stored, (data & !out.failed) | (init & out.failed));
        for (a, (&now, &was)) in c.contents().iter().zip(&before).enumerate() {
            if a != addr {
                prop_assert_eq!(now, was);
            }
        }
    }

    #[test]
    fn longer_pulses_fail_a_subset(
        m in model(),
        seed in any::<u64>(),
        data in any::<u16>(),
        t_short in 1.0f64..10.0,
        extra in 0.0f64..10.0,
    ) {
        let base = chip(m, 64, seed);
        let run = |t_w: f64| {
            let mut c = base.clone();
            let t = WriteTimings::with_pulse_width(t_w);
            (0..64).map(|a| c.write_word(a, data, &t, &Environment::ROOM).unwrap().failed).collect::<Vec<_>>()
        };
        let short = run(t_short);
        let long = run(t_short + extra);
        for (s, l) in short.iter().zip(&long) {
            prop_assert_eq!(l & !s, 0);
        }
    }

    #[test]
    fn hotter_chips_fail_a_superset(m in model(), seed in any::<u64>(), data in any::<u16>()) {
        let base = chip(m, 64, seed);
        let (lo, hi) = base.profile().grade.temperature_range();
        let run = |temp: f64| {
            let mut c = base.clone();
            let t = WriteTimings::with_pulse_width(4.0);
            let env = Environment::at_temperature(temp);
            (0..64).map(|a| c.write_word(a, data, &t, &env).unwrap().failed).collect::<Vec<_>>()
        };
        let temps = [lo, 20.0, 26.0, 45.0, 65.0, hi];
        let runs: Vec<_> = temps.iter().map(|&t| run(t)).collect();
        for w in runs.windows(2) {
            for (cool, hot) in w[0].iter().zip(&w[1]) {
                prop_assert_eq!(cool & !hot, 0);
            }
        }
    }

    #[test]
    fn nominal_pulse_never_fails(
        m in model(),
        seed in any::<u64>(),
        init in any::<u16>(),
        data in any::<u16>(),
        field in 0.0f64..=10.0,
        temp_frac in 0.0f64..=1.0,
    ) {
        let mut c = chip(m, 64, seed);
        let (lo, hi) = c.profile().grade.temperature_range();
        let env = Environment { temperature: lo + (hi - lo) * temp_frac, magnetic_field: field };
        c.reset_memory(init);
        let failed = c.write_all(|_| data, &WriteTimings::NOMINAL, &env).unwrap();
        prop_assert_eq!(failed, 0);
        prop_assert!(c.contents().iter().all(|&w| w == data));
    }
}

#[test]
fn half_toggling_words_survive_short_pulses() {
    for m in ModelId::ALL {
        let mut c = chip(m, 4096, 11);
        for (init, data) in [
            (0xFFFF, 0xAAAA),
            (0xFFFF, 0x5555),
            (0x0000, 0x00FF),
            (0xAAAA, 0xAA55),
        ] {
            c.reset_memory(init);
            let t = WriteTimings::with_pulse_width(5.0);
            let toggles = (init ^ data).count_ones();
            let failed = c.write_all(|_| data, &t, &Environment::ROOM).unwrap();
            assert!(toggles <= WORD_BITS / 2);
            assert_eq!(failed, 0, "{m}: {init:04X} -> {data:04X}");
        }
    }
}

#[test]
fn snapshot_resumes_identically() {
    let mut a = chip(ModelId::C2, 128, 5);
    let t = WriteTimings::with_pulse_width(4.0);
    a.write_all(|i| i as u16, &t, &Environment::ROOM).unwrap();
    let json = a.snapshot().to_json().unwrap();
    let mut b = ChipModel::restore(ChipSnapshot::from_json(&json).unwrap()).unwrap();
    assert_eq!(a.contents(), b.contents());
    let fa = a.write_all(|_| 0, &t, &Environment::ROOM).unwrap();
    let fb = b.write_all(|_| 0, &t, &Environment::ROOM).unwrap();
    assert_eq!(fa, fb);
    assert_eq!(a.contents(), b.contents());
}

#[test]
fn presets_round_trip_through_json() {
    for m in ModelId::ALL {
        let p = ChipProfile::preset(m);
        assert_eq!(ChipProfile::from_json(&p.to_json()).unwrap(), p);
        assert_eq!(p.capacity_words, 65536);
        assert_eq!(p.grade, m.grade());
    }
}
