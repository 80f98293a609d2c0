use std::collections::BTreeSet;

use neurosym::codec::{make_alphabet, AlphabetParams, SymbolId};
use neurosym::tasks::{make_marcus_dataset, MarcusConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn marcus_dataset_is_well_formed(seed in any::<u64>(), n_train in 2usize..5, n_test in 2usize..5, n in 1usize..30) {
        let a = make_alphabet(&MarcusConfig::default().alphabet, 3).unwrap();
        let d = make_marcus_dataset(&a, n_train, n_test, n, seed).unwrap();
        let train: BTreeSet<SymbolId> = d.train_tokens.iter().copied().collect();
        let test: BTreeSet<SymbolId> = d.test_tokens.iter().copied().collect();
        prop_assert_eq!(train.len(), n_train);
        prop_assert_eq!(test.len(), n_test);
        prop_assert!(train.is_disjoint(&test));
        for (set, tokens) in [(&d.train, &train), (&d.test, &test)] {
            prop_assert_eq!(set.len(), n);
            for (s, label) in set {
                let t = &s.tokens;
                prop_assert_eq!(t.len(), 3);
                prop_assert!(t.iter().all(|x| tokens.contains(x)));
                prop_assert_ne!(t[0], t[1]);
                let want = if t[0] == t[2] { SymbolId::SAME } else { SymbolId::DIFF };
                prop_assert_eq!(*label, want);
            }
        }
        prop_assert_eq!(&d, &make_marcus_dataset(&a, n_train, n_test, n, seed).unwrap());
    }
}

#[test]
fn marcus_dataset_rejects_small_alphabets() {
    let a = make_alphabet(&AlphabetParams { n: 8, ..AlphabetParams::default() }, 3).unwrap();
    assert!(make_marcus_dataset(&a, 3, 3, 10, 0).is_err());
    assert!(make_marcus_dataset(&a, 1, 3, 10, 0).is_err());
}
