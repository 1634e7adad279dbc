//! Grid-searches a random forest on one packet-count context, ranks the
//! features by impurity decrease and keeps the smallest prefix that still
//! reaches the score threshold.
//!
//! cargo run --release --example train_forest

use flowforest::features::extract_dataset;
use flowforest::forest::{grid_search, mdi_importance, param_grid, rank_features, select_min_features, ClassWeights};
use flowforest::synth::{two_class_trace, TraceConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = two_class_trace(&TraceConfig {
        flows: 2000,
        ..TraceConfig::default()
    });
    let ctx = extract_dataset(&ds, 4)?;
    let x = ctx.x.select_columns(&ctx.x.defined_columns());
    let grid = param_grid(&[4, 8], &[8, 16], &[ClassWeights::Uniform, ClassWeights::InverseFrequency], 1);
    let best = grid_search(&x, &ctx.y, 2, &grid, 6)?;
    println!(
        "best: depth {} trees {} -> CV F1 {:.3}",
        best.params.max_depth, best.params.n_trees, best.score
    );
    let imp = mdi_importance(&best.forest);
    let ranking = rank_features(&imp);
    for &j in ranking.iter().take(5) {
        println!("  {:<10} {:.3}", x.columns[j].to_string(), imp[j]);
    }
    let min = select_min_features(&x, &ctx.y, 2, &best.params, &ranking, 0.95, 6)?;
    let kept: Vec<String> = min.columns.iter().map(|&j| x.columns[j].to_string()).collect();
    println!("{} feature(s) reach {:.3}: {:?}", kept.len(), min.score, kept);
    Ok(())
}
