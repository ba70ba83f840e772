mod common;

use forestmix::affinity::{build_affinity, AffinityMatrix};
use forestmix::data::{read_csv, standardize};
use forestmix::dual::{connected_components, mutual_exclusion, seed_constraints, threshold_filter, Latent};
use forestmix::forest::{forest_density, train_forest};
use forestmix::metrics::{accuracy, hungarian, nmi};
use forestmix::spectral::{jacobi_eigen, normalized_laplacian, SymMatrix};
use forestmix::{AffinityMode, Dataset, LearnerFamily, LearnerSchedule, PipelineConfig, RandomStream};
use proptest::prelude::*;
use rand::Rng;

fn random_dataset(seed: u64, n: usize, d: usize) -> Dataset {
    let mut rng = RandomStream::new(seed, 3);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let shift = if i % 2 == 0 { 0.0 } else { 3.0 };
            (0..d).map(|_| shift + rng.random::<f64>()).collect()
        })
        .collect();
    Dataset::from_rows(&rows, None).unwrap()
}

fn small_config(seed: u64, trees: usize, family: Option<LearnerFamily>) -> PipelineConfig {
    PipelineConfig {
        num_trees: trees,
        min_leaf: 2,
        seed,
        learner_schedule: family.map_or_else(LearnerSchedule::default, LearnerSchedule::uniform),
        ..PipelineConfig::default()
    }
}

fn family() -> impl Strategy<Value = Option<LearnerFamily>> {
    prop_oneof![
        Just(None),
        Just(Some(LearnerFamily::AxisAligned)),
        Just(Some(LearnerFamily::Linear)),
        Just(Some(LearnerFamily::Quadratic)),
        Just(Some(LearnerFamily::Gmm)),
    ]
}

fn random_affinity(seed: u64, n: usize) -> AffinityMatrix {
    let mut rng = RandomStream::new(seed, 5);
    let mut a = AffinityMatrix::identity(n, AffinityMode::Uniform);
    for i in 0..n {
        for j in i + 1..n {
            let v = if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random::<f64>() };
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    a
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn affinity_matches_path_oracles(seed in 0u64..10_000, n in 4usize..30, d in 1usize..4,
                                     trees in 1usize..4, fam in family()) {
        let ds = random_dataset(seed, n, d);
        let forest = train_forest(&ds, &small_config(seed, trees, fam)).unwrap();
        let binary = build_affinity(&forest, &ds, AffinityMode::Binary).unwrap();
        let uniform = build_affinity(&forest, &ds, AffinityMode::Uniform).unwrap();
        let adaptive = build_affinity(&forest, &ds, AffinityMode::Adaptive).unwrap();
        for i in 0..n {
            for j in 0..n {
                let (xi, xj) = (ds.row(i), ds.row(j));
                let t = forest.trees.len() as f64;
                let mut b = 0.0;
                let mut u = 0.0;
                let mut w = 0.0;
                for tree in &forest.trees {
                    let (pi, pj) = (common::path_of(tree, xi), common::path_of(tree, xj));
                    b += f64::from(u8::from(pi.last() == pj.last()));
                    u += common::uniform_score(tree, xi, xj);
                    w += common::adaptive_score(tree, xi, xj);
                }
                prop_assert!((binary.get(i, j) - b / t).abs() < 1e-12);
                prop_assert!((uniform.get(i, j) - u / t).abs() < 1e-12);
                prop_assert!((adaptive.get(i, j) - w / t).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn affinity_is_permutation_equivariant(seed in 0u64..10_000, n in 4usize..30) {
        let ds = random_dataset(seed, n, 2);
        let forest = train_forest(&ds, &small_config(seed, 3, None)).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = RandomStream::new(seed, 1);
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let shuffled = ds.permuted(&perm).unwrap();
        for mode in [AffinityMode::Binary, AffinityMode::Uniform, AffinityMode::Adaptive] {
            let a = build_affinity(&forest, &ds, mode).unwrap();
            let b = build_affinity(&forest, &shuffled, mode).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(b.get(i, j), a.get(perm[i], perm[j]));
                }
            }
        }
    }

    #[test]
    fn leaf_counts_partition_and_density_is_nonnegative(seed in 0u64..10_000, n in 10usize..40) {
        let ds = random_dataset(seed, n, 2);
        let forest = train_forest(&ds, &small_config(seed, 3, None)).unwrap();
        for tree in &forest.trees {
            let mut hits = vec![0usize; tree.nodes.len()];
            for x in ds.rows() {
                hits[tree.leaf_of(x)] += 1;
            }
            for (id, node) in tree.nodes.iter().enumerate() {
                if node.is_leaf() {
                    prop_assert_eq!(hits[id], node.count());
                }
            }
            prop_assert_eq!(hits.iter().sum::<usize>(), n);
        }
        for x in ds.rows() {
            let p = forest_density(&forest, x).unwrap();
            prop_assert!(p.is_finite() && p >= 0.0);
        }
    }

    #[test]
    fn threshold_filter_is_idempotent_and_monotone(seed in 0u64..10_000, n in 2usize..25,
                                                   t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let a = random_affinity(seed, n);
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let f_lo = threshold_filter(&a, lo);
        let f_hi = threshold_filter(&a, hi);
        prop_assert_eq!(&threshold_filter(&f_lo, lo), &f_lo);
        for (x, y) in f_hi.values().iter().zip(f_lo.values()) {
            prop_assert!(x <= y);
        }
        // raising the threshold only splits components
        let comp_of = |comps: &[Vec<usize>]| {
            let mut id = vec![0; n];
            for (c, members) in comps.iter().enumerate() {
                for &i in members {
                    id[i] = c;
                }
            }
            id
        };
        let lo_id = comp_of(&connected_components(&f_lo));
        for members in connected_components(&f_hi) {
            prop_assert!(members.iter().all(|&i| lo_id[i] == lo_id[members[0]]));
        }
    }

    #[test]
    fn mutual_exclusion_leaves_no_cross_edges(seed in 0u64..10_000, n in 6usize..30, k in 1usize..4) {
        let a = threshold_filter(&random_affinity(seed, n), 0.85);
        let Ok(seeds) = seed_constraints(&a, k, 2) else {
            return Ok(());
        };
        // bridge two seeds so the exclusion has something to do
        let mut bridged = a.clone();
        let first = (0..n).find_map(|i| seeds.get(i).fixed().map(|c| (i, c)));
        let other = first.and_then(|(_, c0)| {
            (0..n).find(|&j| matches!(seeds.get(j), Latent::Fixed(c) if c != c0))
        });
        if let (Some((i, _)), Some(j)) = (first, other) {
            bridged.set(i, j, 0.9);
            bridged.set(j, i, 0.9);
        }
        let out = mutual_exclusion(&bridged, &seeds);
        for i in 0..n {
            for j in 0..n {
                if i != j && bridged.get(i, j) > 0.0 {
                    if let (Latent::Fixed(x), Latent::Fixed(y)) = (out.get(i), out.get(j)) {
                        prop_assert_eq!(x, y);
                    }
                }
            }
            // exclusion only ever frees samples
            if let Latent::Fixed(c) = out.get(i) {
                prop_assert_eq!(seeds.get(i), Latent::Fixed(c));
            }
        }
    }

    #[test]
    fn standardize_is_idempotent_and_csv_round_trips(seed in 0u64..10_000, n in 1usize..20, d in 1usize..4) {
        let mut rng = RandomStream::new(seed, 2);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1e3..1e3)).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let labels = if n > 1 { Some(labels) } else { Some(vec![0]) };
        let ds = Dataset::from_rows(&rows, labels).unwrap();
        let s = standardize(&ds);
        prop_assert_eq!(&standardize(&s), &s);
        prop_assert!(s.features().iter().all(|v| (0.0..=1.0).contains(v)));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        ds.save_csv(&path).unwrap();
        let back = read_csv(std::fs::File::open(&path).unwrap(), true, false).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn accuracy_matches_exhaustive_matching(seed in 0u64..10_000, n in 1usize..40,
                                            kp in 1usize..5, kt in 1usize..5) {
        let mut rng = RandomStream::new(seed, 4);
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..kp)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..kt)).collect();
        let acc = accuracy(&pred, &truth).unwrap();
        prop_assert!((acc - common::brute_force_accuracy(&pred, &truth)).abs() < 1e-9);
        let score = nmi(&pred, &truth).unwrap();
        prop_assert!((0.0..=1.0).contains(&score));
        prop_assert!((score - nmi(&truth, &pred).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn hungarian_matches_exhaustive_search(seed in 0u64..10_000, rows in 1usize..7, cols in 1usize..7) {
        let mut rng = RandomStream::new(seed, 6);
        let cost: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-10.0..10.0)).collect();
        let a = hungarian(&cost, rows, cols).unwrap();
        prop_assert_eq!(a.pairs.len(), rows.min(cols));
        prop_assert!((a.cost - common::brute_force_assignment(&cost, rows, cols)).abs() < 1e-9);
    }

    #[test]
    fn laplacian_spectrum_lies_in_zero_two(seed in 0u64..10_000, n in 2usize..25) {
        let l = normalized_laplacian(&random_affinity(seed, n));
        let eig = jacobi_eigen(&l).unwrap();
        prop_assert!(eig.values.iter().all(|&v| (-1e-10..=2.0 + 1e-10).contains(&v)));
        prop_assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn jacobi_pairs_have_small_residuals(seed in 0u64..10_000, n in 1usize..16) {
        let mut rng = RandomStream::new(seed, 8);
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = rng.random_range(-5.0..5.0);
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        let m = SymMatrix::from_values(n, values.clone()).unwrap();
        let eig = jacobi_eigen(&m).unwrap();
        for (lambda, v) in eig.values.iter().zip(&eig.vectors) {
            let mut r = 0.0;
            for i in 0..n {
                let mv: f64 = (0..n).map(|j| values[i * n + j] * v[j]).sum();
                r += (mv - lambda * v[i]).powi(2);
            }
            prop_assert!(r.sqrt() < 1e-8);
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-12);
            let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            prop_assert!(pivot > 0.0);
        }
    }
}
