//! Bodies of the fuzz targets. The main workspace replays the checked-in
//! corpus through these same functions.

use bicause_tree::{ColumnSchema, Dataset, Tree};

/// Loading arbitrary bytes never panics, and whatever loads survives a
/// write/read round trip unchanged.
pub fn csv_dataset(data: &[u8]) {
    let schemas = [
        ColumnSchema::default(),
        ColumnSchema::default().with_potential_outcomes("y0", "y1"),
    ];
    for schema in &schemas {
        let Ok(ds) = Dataset::from_csv_reader(data, schema) else {
            continue;
        };
        let mut buf = Vec::new();
        ds.write_csv_to(&mut buf).expect("writing a loaded dataset");
        let back = Dataset::from_csv_reader(&buf[..], schema).expect("reloading written csv");
        assert_eq!(back.n(), ds.n());
        assert_eq!(back.feature_names(), ds.feature_names());
        assert_eq!(back.columns(), ds.columns());
        assert_eq!(back.treatment(), ds.treatment());
        assert_eq!(back.outcome(), ds.outcome());
    }
}

/// Any tree that parses can be serialized, rendered, explained and used to
/// route a row.
pub fn tree_json(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(tree) = Tree::from_json(text) else {
        return;
    };
    let again = Tree::from_json(&tree.to_json().expect("serializing a parsed tree")).expect("reparsing");
    assert_eq!(again, tree);
    let _ = tree.to_dot();
    for leaf in tree.leaves() {
        bicause_tree::tree::explain_path(&tree, leaf.id).expect("every leaf has a path");
    }
    let leaf = tree.assign_leaf(&vec![0.0; tree.n_features()]).expect("routing a row");
    assert!(tree.nodes[leaf].is_leaf());
}

/// Config text either maps to flag tokens or is rejected with an error;
/// accepted tokens always name a flag of the subcommand.
pub fn cli_config(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    for sub in ["fit", "estimate", "audit", "explain", "simulate", "benchmark"] {
        if let Ok(tokens) = bicause_cli::config_tokens(text, sub) {
            if let Some(first) = tokens.first() {
                assert!(first.to_string_lossy().starts_with("--"));
            }
            let mut args = vec!["bicause".into(), sub.into()];
            args.extend(tokens);
            let _ = bicause_cli::parse(args);
        }
    }
}
