//! Clusters redundant features by mutual-information distance and picks
//! one representative per group under two different cost weightings.
//!
//! cargo run --release --example feature_grouping

use std::collections::BTreeSet;

use flowforest::analysis::{dbscan_cluster, mi_distance_matrix, select_representatives, weight_schedule, DEFAULT_EPS};
use flowforest::features::extract_full_flows;
use flowforest::synth::{two_class_trace, TraceConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = two_class_trace(&TraceConfig {
        flows: 2000,
        ..TraceConfig::default()
    });
    let full = extract_full_flows(&ds)?;
    let cols = full.x.defined_columns();
    let d = mi_distance_matrix(&full.x, &cols)?;
    let names = |g: &[usize]| g.iter().map(|&i| full.x.columns[cols[i]].to_string()).collect::<Vec<_>>();
    for eps in [DEFAULT_EPS, 0.8] {
        let groups = dbscan_cluster(&d, eps, 1);
        let shared: Vec<_> = groups.groups.iter().filter(|g| g.len() > 1).map(|g| names(g)).collect();
        println!("eps {eps}: {} groups, shared: {:?}", groups.groups.len(), shared);
    }
    let groups = dbscan_cluster(&d, 0.8, 1);
    let columns: Vec<_> = cols.iter().map(|&j| full.x.columns[j].clone()).collect();
    for i in [0, 9] {
        let w = weight_schedule(i, 10);
        let reps = select_representatives(&groups, &columns, &w, &BTreeSet::new());
        let picked: Vec<_> = names(&reps)
            .into_iter()
            .filter(|n| groups.groups.iter().any(|g| g.len() > 1 && names(g).contains(n)))
            .collect();
        println!(
            "model {i}: w_m={:.2} w_c={:.2} w_d={:.2} -> picks {:?} from the shared groups",
            w.w_m, w.w_c, w.w_d, picked
        );
    }
    Ok(())
}
