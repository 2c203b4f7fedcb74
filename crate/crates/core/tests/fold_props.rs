use proptest::prelude::*;
use walsh_core::drivers::{skorokhod_fold, PathKind, SamplePath, TimeGrid};

fn path(values: Vec<f64>) -> SamplePath {
    let n = values.len() - 1;
    SamplePath::new(TimeGrid::new(1.0, n).unwrap(), values, PathKind::Driver).unwrap()
}

fn driver() -> impl Strategy<Value = Vec<f64>> {
    (-2.0f64..2.0, prop::collection::vec(-1.0f64..1.0, 1..200)).prop_map(|(u0, incs)| {
        let mut v = vec![u0];
        for d in incs {
            let last = *v.last().unwrap();
            v.push(last + d);
        }
        v
    })
}

proptest! {
    #[test]
    fn fold_is_exact_and_minimal(u in driver()) {
        let up = path(u.clone());
        let (s, l) = skorokhod_fold(&up);
        for k in 0..u.len() {
            prop_assert_eq!(s.values[k], u[k] + l.values[k]);
            prop_assert!(s.values[k] >= 0.0);
            prop_assert!(l.values[k] >= 0.0);
            if k > 0 {
                prop_assert!(l.values[k] >= l.values[k - 1]);
                if l.values[k] > l.values[k - 1] {
                    prop_assert_eq!(s.values[k], 0.0);
                }
            }
            // no smaller nondecreasing regulator keeps u + Λ ≥ 0 on 0..=k
            let need = (0..=k).map(|j| -u[j]).fold(0.0f64, f64::max);
            prop_assert_eq!(l.values[k], need);
        }
    }

    #[test]
    fn fold_of_nonnegative_driver_is_identity(incs in prop::collection::vec(0.0f64..1.0, 1..100)) {
        let mut v = vec![0.0];
        for d in incs {
            let last = *v.last().unwrap();
            v.push(last + d);
        }
        let (s, l) = skorokhod_fold(&path(v.clone()));
        prop_assert_eq!(s.values, v);
        prop_assert!(l.values.iter().all(|&x| x == 0.0));
    }
}
