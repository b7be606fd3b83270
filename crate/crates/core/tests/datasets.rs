//! Checks against the public German credit graph. The files are not shipped;
//! set `MORAL_GERMAN_EDGES` and `MORAL_GERMAN_ATTRIBUTES` to run them.

use std::path::PathBuf;

use moral_core::graph::load_graph;
use moral_core::GroupId;

fn german_paths() -> Option<(PathBuf, PathBuf)> {
    let edges = std::env::var_os("MORAL_GERMAN_EDGES")?;
    let attrs = std::env::var_os("MORAL_GERMAN_ATTRIBUTES")?;
    Some((edges.into(), attrs.into()))
}

#[test]
fn german_graph_size_and_group_mix() {
    let Some((edges, attrs)) = german_paths() else {
        eprintln!("skipping: German dataset paths not set");
        return;
    };
    let graph = load_graph(&edges, &attrs).unwrap();
    assert_eq!(graph.node_count(), 1000);
    assert_eq!(graph.edge_count(), 15220);
    let dist = graph.empirical_distribution::<f64>(graph.edges()).unwrap();
    for (g, share) in [
        (GroupId::new(0, 1), 0.20),
        (GroupId::new(0, 0), 0.61),
        (GroupId::new(1, 1), 0.19),
    ] {
        assert!(
            (dist.mass(g) - share).abs() <= 0.005,
            "{g}: {}",
            dist.mass(g)
        );
    }
}
