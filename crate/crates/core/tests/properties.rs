use proptest::prelude::*;

use fuzzreg::cert::{Certificate, Check};
use fuzzreg::covering::linf_cover;
use fuzzreg::distal::staircase;
use fuzzreg::io::{predicate_from_csv, predicate_to_csv};
use fuzzreg::{expectation, localize, morley_product, Axis, DiscreteMeasure, FuzzyPredicate};

fn matrix(max: usize) -> impl Strategy<Value = FuzzyPredicate> {
    (1..=max, 1..=max).prop_flat_map(|(r, c)| {
        prop::collection::vec(prop::collection::vec(0.0..=1.0f64, c), r)
            .prop_map(|rows| FuzzyPredicate::from_rows("x", "y", &rows).unwrap())
    })
}

fn measure(axis: &'static str, n: usize) -> impl Strategy<Value = DiscreteMeasure> {
    prop::collection::vec(0.01..1.0f64, n).prop_map(move |w| DiscreteMeasure::from_unnormalized(axis, w).unwrap())
}

fn with_measures(max: usize) -> impl Strategy<Value = (FuzzyPredicate, DiscreteMeasure, DiscreteMeasure)> {
    matrix(max).prop_flat_map(|phi| {
        let (r, c) = (phi.rows(), phi.cols());
        (Just(phi), measure("x", r), measure("y", c))
    })
}

fn subset_of(n: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(any::<bool>(), n).prop_map(|bits| (0..bits.len()).filter(|&i| bits[i]).collect())
}

proptest! {
    #[test]
    fn morley_product_commutes((phi, mu, nu) in with_measures(6)) {
        let forward = morley_product(&mu, &nu, &phi).unwrap();
        let back = morley_product(&nu.renamed("y"), &mu.renamed("x"), &phi.transpose().unwrap()).unwrap();
        prop_assert!((forward - back).abs() < 1e-12);
    }

    #[test]
    fn expectation_is_affine_in_each_measure(
        (phi, mu, nu) in with_measures(5),
        alpha in 0.0..=1.0f64,
        seed in prop::collection::vec(0.01..1.0f64, 5),
    ) {
        let other = DiscreteMeasure::from_unnormalized("x", seed[..phi.rows()].to_vec()).unwrap();
        let mixed = mu.mix(alpha, &other).unwrap();
        let lhs = expectation(&phi, &[mixed, nu.clone()]).unwrap();
        let rhs = alpha * expectation(&phi, &[mu, nu.clone()]).unwrap()
            + (1.0 - alpha) * expectation(&phi, &[other, nu]).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn localizations_compose(
        mu in measure("x", 6),
        t1 in prop::collection::vec(0.05..=1.0f64, 6),
        t2 in prop::collection::vec(0.05..=1.0f64, 6),
    ) {
        let stepwise = localize(&localize(&mu, &t1).unwrap(), &t2).unwrap();
        let product: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| a * b).collect();
        let direct = localize(&mu, &product).unwrap();
        for (a, b) in stepwise.weights().iter().zip(direct.weights()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn staircase_partitions_the_rectangle(
        a in prop::collection::vec(subset_of(5), 1..=3),
        b_bits in prop::collection::vec(subset_of(5), 3),
    ) {
        prop_assume!(a.iter().all(|s| !s.is_empty()));
        let b: Vec<Vec<usize>> = a.iter().zip(&b_bits).map(|(ai, bi)| ai.iter().copied().filter(|x| bi.contains(x)).collect()).collect();
        let pieces = staircase(&a, &b);
        let shape: Vec<usize> = a.iter().map(|s| s.len()).collect();
        let total: usize = shape.iter().product();
        let mut count = 0;
        fuzzreg::fuzzy::for_each_index(&shape, |k| {
            let point: Vec<usize> = k.iter().enumerate().map(|(i, &j)| a[i][j]).collect();
            let hits = pieces.iter().filter(|p| p.iter().zip(&point).all(|(s, x)| s.contains(x))).count();
            assert_eq!(hits, 1, "point {point:?}");
            count += 1;
        });
        prop_assert_eq!(count, total);
        if b.iter().all(|s| !s.is_empty()) {
            prop_assert_eq!(&pieces[0], &b);
        }
    }

    #[test]
    fn linf_cover_reaches_every_vector(
        vectors in prop::collection::vec(prop::collection::vec(0.0..=1.0f64, 4), 1..12),
        eps in 0.05..1.0f64,
    ) {
        let cover = linf_cover(&vectors, eps).unwrap();
        for v in &vectors {
            let d = cover.centers.iter()
                .map(|&c| vectors[c].iter().zip(v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
                .fold(f64::INFINITY, f64::min);
            prop_assert!(d <= eps + 1e-9);
        }
    }

    #[test]
    fn csv_round_trip_is_lossless(phi in matrix(6)) {
        let text = predicate_to_csv(&phi).unwrap();
        let back = predicate_from_csv(&text).unwrap();
        prop_assert_eq!(&back, &phi);
        prop_assert_eq!(predicate_to_csv(&back).unwrap(), text);
    }

    #[test]
    fn certificate_round_trip_keeps_digest(
        values in prop::collection::vec((any::<f64>(), 0.0..1.0f64), 1..6),
    ) {
        let mut c = Certificate::new("property");
        for (i, (m, l)) in values.iter().enumerate() {
            c.check(Check::at_most(format!("c{i}"), "m ≤ l", *m, *l));
        }
        c.seal();
        let back = Certificate::from_json(&c.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.compute_digest(), c.digest.clone());
        prop_assert_eq!(back.pass, c.pass);
    }
}

#[test]
fn product_axes_keep_names() {
    let phi = FuzzyPredicate::from_fn(vec![Axis::new("p", 2), Axis::new("q", 3)], |i| (i[0] * i[1]) as f64 / 2.0).unwrap();
    assert_eq!(phi.transpose().unwrap().axis(0).name, "q");
}
