use std::collections::HashSet;

use nicdrv::memory::{FreeError, Mempool};
use nicdrv::model::DmaBus;
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Alloc(usize),
    Free(usize),
    Drop(usize),
    Replay(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0usize..12).prop_map(Op::Alloc),
        any::<usize>().prop_map(Op::Free),
        any::<usize>().prop_map(Op::Drop),
        any::<usize>().prop_map(Op::Replay),
    ]
}

fn pool(capacity: usize, entry: usize) -> Mempool {
    let region = DmaBus::new().allocate(capacity * entry).unwrap();
    Mempool::new(region, capacity, entry).unwrap()
}

proptest! {
    #[test]
    fn conservation_and_no_aliasing(ops in prop::collection::vec(op(), 0..200)) {
        let p = pool(16, 64);
        let mut held = Vec::new();
        let mut consumed = Vec::new();
        let mut expected_violations = 0;
        for op in ops {
            match op {
                Op::Alloc(n) => {
                    let before = p.free_count();
                    let got = p.alloc_batch(n);
                    prop_assert_eq!(got.len(), n.min(before));
                    held.extend(got);
                }
                Op::Free(i) if !held.is_empty() => {
                    let b = held.swap_remove(i % held.len());
                    consumed.push(b.token());
                    prop_assert_eq!(p.free(b), Ok(()));
                }
                Op::Drop(i) if !held.is_empty() => {
                    let b = held.swap_remove(i % held.len());
                    consumed.push(b.token());
                }
                Op::Replay(i) if !consumed.is_empty() => {
                    let t = consumed[i % consumed.len()];
                    let r = p.free(p.forge(t));
                    let detected = matches!(r, Err(FreeError::DoubleFree { .. }) | Err(FreeError::StaleHandle { .. }));
                    prop_assert!(detected, "replay not detected: {:?}", r);
                    expected_violations += 1;
                }
                _ => {}
            }
            prop_assert_eq!(p.free_count() + held.len(), p.capacity());
            let idx: HashSet<_> = held.iter().map(|b| b.index()).collect();
            prop_assert_eq!(idx.len(), held.len());
        }
        prop_assert_eq!(p.violations(), expected_violations);
        drop(held);
        prop_assert_eq!(p.free_count(), p.capacity());
    }

    #[test]
    fn every_access_is_bounds_checked(offset in 0usize..4200, len in 0usize..80) {
        let p = pool(2, 2048);
        let mut b = p.alloc().unwrap();
        let fits = offset + len <= 2048;
        prop_assert_eq!(b.write(offset, &vec![1u8; len]).is_ok(), fits);
        prop_assert_eq!(b.read(offset, len).is_ok(), fits);
    }
}

#[test]
fn boundary_offsets() {
    let p = pool(1, 2048);
    let mut b = p.alloc().unwrap();
    for (off, ok) in [(2047, true), (2048, false), (2049, false)] {
        assert_eq!(b.write(off, &[0]).is_ok(), ok, "offset {off}");
        assert_eq!(b.read(off, 1).is_ok(), ok, "offset {off}");
    }
    assert!(b.read(2047, 2).is_err());
}
