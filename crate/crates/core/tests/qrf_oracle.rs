//! Forest weights, CDF and quantiles against an exact brute-force
//! reimplementation that enumerates leaf membership row by row.

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safespeed::qrf::{Dataset, Forest, ForestParams, TreeNode};

type Q = Ratio<i128>;

/// Leaf node position reached by `x`, walking the pre-order node list.
fn leaf_of(nodes: &[TreeNode<f64>], x: &[f64]) -> usize {
    // Recover right children by skipping the left subtree.
    fn subtree_end(nodes: &[TreeNode<f64>], i: usize) -> usize {
        match &nodes[i] {
            TreeNode::Leaf { .. } => i + 1,
            TreeNode::Split { .. } => subtree_end(nodes, subtree_end(nodes, i + 1)),
        }
    }
    let mut i = 0;
    loop {
        match &nodes[i] {
            TreeNode::Leaf { .. } => return i,
            TreeNode::Split {
                feature, threshold, ..
            } => {
                i = if x[*feature] <= *threshold {
                    i + 1
                } else {
                    subtree_end(nodes, i + 1)
                };
            }
        }
    }
}

fn oracle_weights(forest: &Forest<f64>, data: &Dataset<f64>, x: &[f64]) -> Vec<Q> {
    let n = data.len();
    let t = forest.trees().len() as i128;
    let mut w = vec![Q::from_integer(0); n];
    for tree in forest.trees() {
        let nodes = tree.nodes();
        let target = leaf_of(nodes, x);
        let same: Vec<usize> = (0..n)
            .filter(|&i| leaf_of(nodes, data.row(i)) == target)
            .collect();
        assert!(
            !same.is_empty(),
            "a leaf reached by a query holds no training rows"
        );
        for &i in &same {
            w[i] += Q::new(1, t * same.len() as i128);
        }
    }
    w
}

fn oracle_quantile(targets: &[f64], w: &[Q], alpha: Q) -> f64 {
    let mut ys: Vec<f64> = targets
        .iter()
        .zip(w)
        .filter(|(_, w)| **w > Q::from_integer(0))
        .map(|(y, _)| *y)
        .collect();
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ys.dedup();
    for y in ys {
        let cum: Q = targets
            .iter()
            .zip(w)
            .filter(|(t, _)| **t <= y)
            .map(|(_, w)| *w)
            .sum();
        if cum >= alpha {
            return y;
        }
    }
    unreachable!("total weight is one")
}

fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Dataset<f64>, ForestParams) {
    let n = rng.gen_range(5..=50);
    let p = rng.gen_range(1..=6);
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .map(|_| {
            // a coarse grid forces tied feature values and tied targets
            let x = (0..p).map(|_| rng.gen_range(0..8) as f64 * 0.5).collect();
            let y = 40.0 + rng.gen_range(0..30) as f64;
            (x, y)
        })
        .collect();
    let data = Dataset::from_rows(rows.iter().map(|(x, y)| (x.as_slice(), *y))).unwrap();
    let params = ForestParams {
        n_estimators: rng.gen_range(1..=5),
        min_samples_leaf: rng.gen_range(1..=5).min(n),
        max_depth: if rng.gen_bool(0.3) {
            Some(rng.gen_range(1..5))
        } else {
            None
        },
        mtry: None,
        bootstrap: rng.gen_bool(0.8),
    };
    (data, params)
}

#[test]
fn forest_matches_brute_force_oracle() {
    let started = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..60 {
        let (data, params) = random_instance(&mut rng);
        let forest = Forest::fit(&data, params, rng.gen()).unwrap();
        let p = data.n_features();
        for _ in 0..10 {
            let x: Vec<f64> = (0..p).map(|_| rng.gen_range(-0.5..4.5)).collect();
            let exact = oracle_weights(&forest, &data, &x);
            let w = forest.weights(&x).unwrap();
            for (a, b) in w.iter().zip(&exact) {
                assert!(
                    (a - to_f64(*b)).abs() <= 1e-12,
                    "case {case}: weight {a} vs {b}"
                );
            }
            for y in [39.0, 45.0, 52.5, 60.0, 75.0] {
                let f: Q = data
                    .targets()
                    .iter()
                    .zip(&exact)
                    .filter(|(t, _)| **t <= y)
                    .map(|(_, w)| *w)
                    .sum();
                assert!(
                    (forest.cdf(&x, y).unwrap() - to_f64(f)).abs() <= 1e-12,
                    "case {case}: cdf at {y}"
                );
            }
            for k in [1, 10, 25, 33, 50, 67, 75, 90, 99] {
                let got = forest.predict_quantile(&x, k as f64 / 100.0).unwrap();
                let want = oracle_quantile(data.targets(), &exact, Q::new(k, 100));
                assert_eq!(got, want, "case {case}: quantile {k}%");
            }
        }
    }
    assert!(started.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn recorded_leaf_members_cover_every_row() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..30 {
        let (data, params) = random_instance(&mut rng);
        let forest = Forest::fit(&data, params, rng.gen()).unwrap();
        for tree in forest.trees() {
            let nodes = tree.nodes();
            let mut seen = vec![0usize; data.len()];
            for (at, node) in nodes.iter().enumerate() {
                if let TreeNode::Leaf { members, in_bag } = node {
                    assert!(*in_bag >= params.min_samples_leaf || nodes.len() == 1);
                    for &m in members {
                        assert_eq!(leaf_of(nodes, data.row(m as usize)), at);
                        seen[m as usize] += 1;
                    }
                }
            }
            assert!(seen.iter().all(|&c| c == 1));
        }
    }
}

#[test]
fn weights_normalized_and_cdf_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut pairs = 0;
    while pairs < 1000 {
        let (data, params) = random_instance(&mut rng);
        let forest = Forest::fit(&data, params, rng.gen()).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..data.n_features())
                .map(|_| rng.gen_range(-1.0..5.0))
                .collect();
            let w = forest.weights(&x).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            let mut prev = 0.0;
            for y in (380..=720).map(|v| v as f64 / 10.0) {
                let f = forest.cdf(&x, y).unwrap();
                assert!(f >= prev);
                prev = f;
            }
            let q: Vec<f64> = (1..20)
                .map(|k| forest.predict_quantile(&x, k as f64 / 20.0).unwrap())
                .collect();
            assert!(q.windows(2).all(|p| p[0] <= p[1]));
            pairs += 1;
        }
    }
}

#[test]
fn fit_independent_of_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<(Vec<f64>, f64)> = (0..400)
        .map(|_| {
            let x: Vec<f64> = (0..5).map(|_| rng.gen::<f64>()).collect();
            let y = 50.0 + 10.0 * x[0] + rng.gen::<f64>();
            (x, y)
        })
        .collect();
    let data = Dataset::from_rows(rows.iter().map(|(x, y)| (x.as_slice(), *y))).unwrap();
    let params = ForestParams {
        n_estimators: 24,
        ..Default::default()
    };
    let fit_with = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| Forest::fit(&data, params, 17).unwrap())
    };
    let one = fit_with(1);
    assert_eq!(one, fit_with(4));
    assert_eq!(one, fit_with(7));
}
