use bicause_tree::dataset::split_train_test;
use bicause_tree::estimators::{tree_ate, LeafEstimator};
use bicause_tree::eval::adjusted_rand_index;
use bicause_tree::synthgen::{gen_natural_experiment, gen_positivity, NATURAL_EXPERIMENT_ATE};
use bicause_tree::tree::{explain_path, fit, FitConfig};
use bicause_tree::{ColumnSchema, Dataset, Tree};

#[test]
fn natural_experiment_tree_recovers_the_four_cells() {
    let sim = gen_natural_experiment(20_000, 11).unwrap();
    let tree = fit(&sim.dataset, &FitConfig::default()).unwrap();
    assert_eq!(tree.n_leaves(), 4);
    assert!(tree.violating_leaves().is_empty());
    let leaves = tree.assign_rows(&sim.dataset).unwrap();
    let ari = adjusted_rand_index(&leaves, &sim.cells).unwrap();
    assert!(ari > 0.95, "ARI {ari}");
}

#[test]
fn held_out_estimate_is_close_to_the_truth() {
    let sim = gen_natural_experiment(20_000, 12).unwrap();
    let (train, test) = split_train_test(&sim.dataset, 0.5, 12).unwrap();
    let tree = fit(&train, &FitConfig::default()).unwrap();
    for est in [LeafEstimator::Marginal, LeafEstimator::Ipw] {
        let r = tree_ate(&tree, &test, est).unwrap();
        assert!((r.ate - NATURAL_EXPERIMENT_ATE).abs() < 0.04, "{est:?}: {}", r.ate);
        assert_eq!(r.kept_fraction, 1.0);
    }
}

#[test]
fn csv_round_trip_keeps_every_value() {
    let sim = gen_positivity(500, 3).unwrap();
    let mut buf = Vec::new();
    sim.dataset.write_csv_to(&mut buf).unwrap();
    let schema = ColumnSchema::default().with_potential_outcomes("y0", "y1");
    let back = Dataset::from_csv_reader(&buf[..], &schema).unwrap();
    assert_eq!(back.feature_names(), sim.dataset.feature_names());
    assert_eq!(back.columns(), sim.dataset.columns());
    assert_eq!(back.treatment(), sim.dataset.treatment());
    assert_eq!(back.outcome(), sim.dataset.outcome());
    assert_eq!(back.potential_outcomes(), sim.dataset.potential_outcomes());
}

#[test]
fn csv_values_survive_fifteen_significant_digits() {
    let xs = [0.123456789012345, -98765.4321098765, 1e-300, 6.02214076e23];
    let mut text = String::from("x,T,Y\n");
    for (i, x) in xs.iter().enumerate() {
        text += &format!("{x:.14e},{},{}\n", i % 2, x / 3.0);
    }
    let ds = Dataset::from_csv_reader(text.as_bytes(), &ColumnSchema::default()).unwrap();
    let mut buf = Vec::new();
    ds.write_csv_to(&mut buf).unwrap();
    let back = Dataset::from_csv_reader(&buf[..], &ColumnSchema::default()).unwrap();
    for (a, b) in ds.column(0).iter().zip(&xs) {
        assert!(((a - b) / b).abs() < 1e-14);
    }
    assert_eq!(back.columns(), ds.columns());
}

#[test]
fn tree_file_round_trip_and_leaf_rules_partition_the_rows() {
    let sim = gen_positivity(5_000, 4).unwrap();
    let tree = fit(&sim.dataset, &FitConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tree.json");
    std::fs::write(&path, tree.to_json().unwrap()).unwrap();
    let back = Tree::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, tree);

    let rules: Vec<_> = tree.leaves().map(|l| explain_path(&tree, l.id).unwrap()).collect();
    let leaves = tree.assign_rows(&sim.dataset).unwrap();
    for (i, &leaf) in leaves.iter().enumerate() {
        let x = sim.dataset.row(i);
        let hits: Vec<usize> = rules.iter().filter(|r| r.matches(&x)).map(|r| r.leaf_id).collect();
        assert_eq!(hits, [leaf]);
    }
}
