use super::*;
use crate::rng::SeededRng;
use crate::stats::{fisher_exact_p, Table2x2};

fn dataset(columns: Vec<Vec<f64>>, t: Vec<bool>) -> Dataset {
    let names = (0..columns.len()).map(|j| format!("x{j}")).collect();
    let y = t.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    Dataset::new(columns, names, t, y, None).unwrap()
}

/// Treatment probability 0.8 when x0 > 0.5, otherwise 0.2; x1 is noise.
fn confounded(n: usize, seed: u64) -> Dataset {
    let mut rng = SeededRng::new(seed);
    let mut x0 = Vec::with_capacity(n);
    let mut x1 = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    for _ in 0..n {
        let a = rng.uniform();
        x0.push(a);
        x1.push(rng.normal(0.0, 1.0));
        t.push(rng.bernoulli(if a > 0.5 { 0.8 } else { 0.2 }));
    }
    dataset(vec![x0, x1], t)
}

#[test]
fn engineered_split_picks_separating_cut() {
    let x = vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0];
    let t = vec![true, true, true, true, false, false, false, false];
    let ds = dataset(vec![x], t);
    let cfg = FitConfig {
        min_treat_group_size: 0,
        ..FitConfig::default()
    };
    let (v, p) = select_split_value(&ds, 0, &cfg).unwrap();
    assert_eq!(v, 2.0);
    assert!((p - 2.0 / 70.0).abs() < 1e-12, "{p}");
    // Every other cut is strictly worse.
    for (cut, table) in [(1.0, Table2x2::new(0, 4, 2, 2)), (3.0, Table2x2::new(2, 2, 4, 0))] {
        assert!(fisher_exact_p(&table) > p, "cut {cut}");
    }
}

#[test]
fn binary_feature_has_one_candidate() {
    let x = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0];
    let t = vec![true, true, false, false, false, true, false, true];
    let ds = dataset(vec![x], t);
    let cfg = FitConfig {
        min_treat_group_size: 0,
        ..FitConfig::default()
    };
    assert_eq!(select_split_value(&ds, 0, &cfg).unwrap().0, 0.0);
}

#[test]
fn constant_feature_is_rejected() {
    let ds = dataset(vec![vec![1.0; 4]], vec![true, false, true, false]);
    assert!(select_split_value(&ds, 0, &FitConfig::default()).is_err());
}

#[test]
fn group_size_filter_discards_thin_children() {
    let x = vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0];
    let t = vec![true, true, true, true, false, false, false, false];
    let ds = dataset(vec![x], t);
    // Every cut leaves some child without control or treated units.
    assert!(select_split_value(&ds, 0, &FitConfig::default()).is_err());
}

#[test]
fn feature_copying_treatment_is_selected() {
    let mut rng = SeededRng::new(3);
    let t: Vec<bool> = (0..50).map(|_| rng.bernoulli(0.5)).collect();
    let noise: Vec<f64> = (0..50).map(|_| rng.normal(0.0, 1.0)).collect();
    let copy: Vec<f64> = t.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let ds = dataset(vec![noise, copy], t);
    let (j, score) = select_feature(&ds, FeatureSelection::MaxAsmd, &mut rng).unwrap();
    assert_eq!(j, 1);
    assert!(score.is_infinite());
}

#[test]
fn single_feature_selected_in_every_mode() {
    let ds = confounded(200, 1);
    let ds = ds.subset(&(0..200).collect::<Vec<_>>());
    let one = dataset(vec![ds.column(0).to_vec()], ds.treatment().to_vec());
    let mut rng = SeededRng::new(0);
    for mode in [FeatureSelection::MaxAsmd, FeatureSelection::Random, FeatureSelection::CombinedSq] {
        assert_eq!(select_feature(&one, mode, &mut rng).unwrap().0, 0);
    }
}

#[test]
fn max_asmd_ties_go_to_lowest_index() {
    let x = vec![0.0, 1.0, 0.0, 1.0];
    let ds = dataset(vec![x.clone(), x], vec![true, true, false, false]);
    let mut rng = SeededRng::new(0);
    assert_eq!(select_feature(&ds, FeatureSelection::MaxAsmd, &mut rng).unwrap().0, 0);
}

#[test]
fn balanced_data_gives_root_only() {
    let x: Vec<f64> = (0..200).map(|i| (i / 2) as f64).collect();
    let t: Vec<bool> = (0..200).map(|i| i % 2 == 0).collect();
    let ds = dataset(vec![x], t);
    let tree = fit(&ds, &FitConfig::default()).unwrap();
    assert_eq!(tree.nodes.len(), 1);
    assert_eq!(tree.assign_leaf(&[123.0]).unwrap(), 0);
}

#[test]
fn confounder_is_split_near_boundary() {
    let ds = confounded(4000, 11);
    let tree = fit(&ds, &FitConfig::default()).unwrap();
    let split = tree.root().split.as_ref().expect("root split");
    assert_eq!(split.feature_index, 0);
    assert!((split.value - 0.5).abs() < 0.05, "{}", split.value);
    assert!(split.p_adjusted.unwrap() <= 0.05);
}

#[test]
fn max_depth_one_allows_one_split() {
    let ds = confounded(2000, 5);
    let cfg = FitConfig {
        max_depth: 1,
        ..FitConfig::default()
    };
    let tree = fit(&ds, &cfg).unwrap();
    assert!(tree.nodes.len() <= 3);
    assert!(tree.depth() <= 1);
}

#[test]
fn refit_is_byte_identical() {
    let ds = confounded(3000, 8);
    for mode in [FeatureSelection::MaxAsmd, FeatureSelection::Random, FeatureSelection::CombinedSq] {
        let cfg = FitConfig {
            feature_selection: mode,
            seed: 4,
            ..FitConfig::default()
        };
        let a = fit(&ds, &cfg).unwrap().to_json().unwrap();
        let b = fit(&ds, &cfg).unwrap().to_json().unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn json_round_trip_and_validation() {
    let ds = confounded(2000, 9);
    let tree = fit(&ds, &FitConfig::default()).unwrap();
    let json = tree.to_json().unwrap();
    assert!(json.contains("\"bicause_tree_v1\""));
    assert_eq!(Tree::from_json(&json).unwrap(), tree);

    let mut broken = tree.clone();
    broken.version = "v0".into();
    assert!(Tree::from_json(&broken.to_json().unwrap()).is_err());
    let mut broken = tree.clone();
    broken.nodes[0].n += 1;
    assert!(Tree::from_json(&broken.to_json().unwrap()).is_err());
    assert!(Tree::from_json("{").is_err());
}

#[test]
fn rows_are_conserved_and_estimates_only_on_leaves() {
    let ds = confounded(3000, 2);
    let tree = fit(&ds, &FitConfig::default()).unwrap();
    let total: usize = tree.leaves().map(|l| l.n).sum();
    assert_eq!(total, ds.n());
    let assigned = tree.assign_rows(&ds).unwrap();
    for leaf in tree.leaves() {
        assert_eq!(assigned.iter().filter(|&&l| l == leaf.id).count(), leaf.n);
    }
    for node in &tree.nodes {
        assert_eq!(node.leaf_estimate.is_some(), node.is_leaf());
    }
    assert!(tree.n_leaves() <= 1 << tree.config.max_depth);
}

#[test]
fn assign_leaf_tie_goes_left_and_checks_arity() {
    let ds = confounded(4000, 11);
    let tree = fit(&ds, &FitConfig::default()).unwrap();
    let root = tree.root();
    let split = root.split.as_ref().unwrap();
    let (l, _) = root.children.unwrap();
    let mut x = vec![0.0; 2];
    x[split.feature_index] = split.value;
    let leaf = tree.assign_leaf(&x).unwrap();
    assert!(leaf >= l && leaf < root.children.unwrap().1);
    assert!(matches!(tree.assign_leaf(&[0.0]), Err(Error::Arity { expected: 2, got: 1 })));
}

#[test]
fn explain_paths() {
    let ds = confounded(4000, 11);
    let tree = fit(&ds, &FitConfig::default()).unwrap();
    for leaf in tree.leaves() {
        let rule = explain_path(&tree, leaf.id).unwrap();
        assert_eq!(rule.predicates.len(), leaf.depth);
        for i in 0..ds.n() {
            let x = ds.row(i);
            assert_eq!(rule.matches(&x), tree.assign_leaf(&x).unwrap() == leaf.id);
        }
    }
    assert!(matches!(explain_path(&tree, 0), Err(Error::NotALeaf(0))));
    assert!(matches!(explain_path(&tree, 999), Err(Error::UnknownNode(999))));

    let balanced = dataset(vec![vec![0.0, 1.0, 0.0, 1.0]], vec![true, true, false, false]);
    let root_only = fit(&balanced, &FitConfig::default()).unwrap();
    assert_eq!(explain_path(&root_only, 0).unwrap().to_string(), "TRUE");
}

#[test]
fn dot_marks_violating_leaves() {
    let ds = confounded(1000, 3);
    let mut tree = fit(&ds, &FitConfig::default()).unwrap();
    let leaf = tree.leaves().last().unwrap().id;
    tree.nodes[leaf].violating = true;
    let dot = tree.to_dot();
    assert!(dot.starts_with("digraph"));
    assert_eq!(dot.matches("fillcolor=red").count(), 1);
    assert!(dot.contains(&format!("n{leaf} [")));
}

fn node(id: usize, depth: usize, n: usize, p: Option<f64>, children: Option<(usize, usize)>) -> Node {
    Node {
        id,
        depth,
        n,
        n_treated: n / 2,
        n_control: n - n / 2,
        split: p.map(|p| Split {
            feature_index: 0,
            feature: "x0".into(),
            value: id as f64,
            p_raw: p,
            p_adjusted: None,
            asmd: 0.5,
            test: TestKind::Fisher,
        }),
        children,
        violating: false,
        leaf_estimate: None,
    }
}

fn handmade(nodes: Vec<Node>) -> Tree {
    let tree = Tree {
        version: TREE_FORMAT_VERSION.into(),
        config: FitConfig::default(),
        fit_metadata: FitMetadata {
            n_train: nodes[0].n,
            feature_names: vec!["x0".into()],
            timestamp: None,
        },
        positivity: None,
        nodes,
    };
    tree.validate().unwrap();
    tree
}

#[test]
fn pruning_keeps_ancestors_of_a_deep_significant_split() {
    //        0 (p=.4)
    //     1 (p=.3)       6 (p=.2)
    //   2 (p=1e-6)  5   7  8
    //  3  4
    let tree = handmade(vec![
        node(0, 0, 80, Some(0.4), Some((1, 6))),
        node(1, 1, 40, Some(0.3), Some((2, 5))),
        node(2, 2, 20, Some(1e-6), Some((3, 4))),
        node(3, 3, 10, None, None),
        node(4, 3, 10, None, None),
        node(5, 2, 20, None, None),
        node(6, 1, 40, Some(0.2), Some((7, 8))),
        node(7, 2, 20, None, None),
        node(8, 2, 20, None, None),
    ]);
    let pruned = prune(&tree, 0.05, Correction::Holm).unwrap();
    pruned.validate().unwrap();
    let shape: Vec<Option<(usize, usize)>> = pruned.nodes.iter().map(|n| n.children).collect();
    assert_eq!(
        shape,
        vec![Some((1, 6)), Some((2, 5)), Some((3, 4)), None, None, None, None]
    );
    // Holm over four tests: 4e-6, then 3 * 0.2, then max(0.6, 2 * 0.3), then 0.6 vs 0.4.
    let adj: Vec<f64> = pruned.nodes[..3].iter().map(|n| n.split.as_ref().unwrap().p_adjusted.unwrap()).collect();
    assert!((adj[0] - 0.6).abs() < 1e-12 && (adj[1] - 0.6).abs() < 1e-12 && (adj[2] - 4e-6).abs() < 1e-18);
    assert_eq!(pruned.nodes[6].n, 40);
}

#[test]
fn pruning_extremes() {
    let all_sig = handmade(vec![
        node(0, 0, 40, Some(1e-4), Some((1, 2))),
        node(1, 1, 20, None, None),
        node(2, 1, 20, Some(1e-3), Some((3, 4))),
        node(3, 2, 10, None, None),
        node(4, 2, 10, None, None),
    ]);
    let pruned = prune(&all_sig, 0.05, Correction::Holm).unwrap();
    assert_eq!(pruned.nodes.len(), all_sig.nodes.len());

    let none_sig = handmade(vec![
        node(0, 0, 40, Some(0.5), Some((1, 2))),
        node(1, 1, 20, None, None),
        node(2, 1, 20, Some(0.9), Some((3, 4))),
        node(3, 2, 10, None, None),
        node(4, 2, 10, None, None),
    ]);
    let pruned = prune(&none_sig, 0.05, Correction::Holm).unwrap();
    assert_eq!(pruned.nodes.len(), 1);
    assert!(pruned.root().split.is_none());
}

#[test]
fn positivity_flags_extreme_leaves() {
    // Prevalence 0.98 where x0 > 0.8, 0.5 elsewhere.
    let mut rng = SeededRng::new(21);
    let n = 5000;
    let x: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    let t: Vec<bool> = x.iter().map(|&v| rng.bernoulli(if v > 0.8 { 0.98 } else { 0.5 })).collect();
    let ds = dataset(vec![x], t);
    let tree = fit(&ds, &FitConfig::default()).unwrap();
    let cut = tree.positivity.unwrap();
    for leaf in tree.leaves() {
        assert_eq!(leaf.violating, !cut.contains(leaf.prevalence()));
    }
    assert!(tree.leaves().any(|l| l.violating && l.prevalence() > 0.9));
    assert!(tree.leaves().any(|l| !l.violating));

    let sp = FitConfig {
        positivity_method: PositivityKind::SymmetricPrevalence,
        ..FitConfig::default()
    };
    let tree = fit(&ds, &sp).unwrap();
    assert!(tree.positivity.unwrap().prevalence.is_some());
}

#[test]
fn even_prevalence_flags_nothing() {
    let ds = dataset(vec![vec![0.0, 1.0, 0.0, 1.0, 2.0, 2.0]], vec![true, true, false, false, true, false]);
    let tree = fit(&ds, &FitConfig::default()).unwrap();
    assert!(tree.violating_leaves().is_empty());
}

#[test]
fn single_arm_is_rejected() {
    let ds = dataset(vec![vec![0.0, 1.0]], vec![true, true]);
    assert!(matches!(fit(&ds, &FitConfig::default()), Err(Error::SingleArm(..))));
}

#[test]
fn split_candidate_cap_uses_quantiles() {
    let ds = confounded(4000, 11);
    let cfg = FitConfig {
        max_split_candidates: Some(19),
        ..FitConfig::default()
    };
    let (v, _) = select_split_value(&ds, 0, &cfg).unwrap();
    assert!((v - 0.5).abs() < 0.06, "{v}");
}
