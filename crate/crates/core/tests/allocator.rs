use std::collections::BTreeSet;

use mramsim_core::allocator::Mapping;
use mramsim_core::*;
use proptest::prelude::*;

fn pool(capacity: usize, masks: &std::collections::BTreeMap<u32, u16>) -> (ErrorMap, AddressPool) {
    let map = ErrorMap::from_masks("x", 5.0, "solid:0000", capacity, masks.clone());
    let intended = vec![0u16; capacity];
    let stored: Vec<u16> = (0..capacity as u32).map(|a| map.mask(a)).collect();
    let sorted = sort_addresses(&map, &intended, &stored, Granularity::Word).unwrap();
    let pool = build_pool(&map, capacity, &sorted).unwrap();
    (map, pool)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pools_partition_the_address_space(masks in prop::collection::btree_map(0u32..512, 1u16.., 0..200)) {
        let (map, p) = pool(512, &masks);
        let acc: BTreeSet<u32> = p.accurate.iter().copied().collect();
        let apx: BTreeSet<u32> = p.approximate.addresses().collect();
        prop_assert!(acc.is_disjoint(&apx));
        prop_assert_eq!(acc.len() + apx.len(), 512);
        prop_assert_eq!(apx, map.addresses().collect::<BTreeSet<_>>());
        prop_assert!(p.accurate.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn allocations_are_safe_and_conserved(
        masks in prop::collection::btree_map(0u32..256, 1u16.., 0..128),
        requests in prop::collection::vec((1usize..40, any::<bool>()), 1..20),
        approx_first in any::<bool>(),
    ) {
        let (map, p) = pool(256, &masks);
        let mut a = Allocator::new(p).unwrap().approx_uses_accurate(approx_first);
        let mut granted = 0usize;
        let mut seen = BTreeSet::new();
        for &(words, critical) in &requests {
            let before = (a.accurate_free(), a.approximate_free(), a.table().len());
            match a.allocate(AllocationRequest { words, critical }) {
                Ok(got) => {
                    prop_assert_eq!(got.len(), words);
                    granted += words;
                    for &addr in &got {
                        prop_assert!(seen.insert(addr), "address handed out twice");
                        if critical {
                            prop_assert!(!map.contains(addr));
                        }
                    }
                }
                Err(Error::AllocationFailed { .. }) => {
                    prop_assert_eq!(before, (a.accurate_free(), a.approximate_free(), a.table().len()));
                }
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
        prop_assert_eq!(a.table().len(), granted);
        prop_assert_eq!(granted + a.accurate_free() + a.approximate_free(), 256);
        for (v, Mapping { paddr, critical }) in &a.table().mappings {
            prop_assert_eq!(translate(a.table(), *v).unwrap(), (*paddr, *critical));
        }
    }
}

#[test]
fn overhead_of_a_gibibyte() {
    assert_eq!(tracking_overhead(1 << 30, 32).unwrap() / 8, 4 * 1024 * 1024);
}
