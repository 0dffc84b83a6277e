mod common;

use common::{compare_instance, seeded, Instance};

#[test]
fn matches_reference_on_random_small_instances() {
    let mut rng = seeded(7);
    for case in 0..1000 {
        let inst = Instance::random(&mut rng);
        if let Err(e) = compare_instance(&inst, 6, &mut rng) {
            panic!("case {case}: {e}");
        }
    }
}

#[test]
fn reference_agrees_on_hand_example() {
    // 3 PRBs, shares 0.5/0.5: quotas alternate 1/2 and 2/1.
    use common::{reference_tti, RefSlice, RefState, RefUe};
    let slices = vec![
        RefSlice { id: 1, share: 0.5, priority: 0, high: false, control_first: false },
        RefSlice { id: 2, share: 0.5, priority: 0, high: false, control_first: false },
    ];
    let mut ues = vec![
        RefUe { rnti: 1, slice: 1, control: false, bytes: 10_000, bits_per_prb: 600 },
        RefUe { rnti: 2, slice: 2, control: false, bytes: 10_000, bits_per_prb: 600 },
    ];
    let mut st = RefState::default();
    let a = reference_tti(3, &slices, &mut ues, true, &mut st);
    let b = reference_tti(3, &slices, &mut ues, true, &mut st);
    assert_eq!(a.quotas.values().copied().collect::<Vec<_>>(), vec![2, 1]);
    assert_eq!(b.quotas.values().copied().collect::<Vec<_>>(), vec![1, 2]);
}
