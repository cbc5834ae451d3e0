//! Reconstruction error under spatial refinement at the default angular count.

use aoi_harness::config::{ExperimentConfig, GridConfig, HMode};
use aoi_harness::run_pipeline;

fn beam_line_error(n: usize) -> f64 {
    let cfg = ExperimentConfig {
        grid: GridConfig {
            nx: n,
            ny: n,
            extent: [1.0, 1.0],
        },
        mode: HMode::Direct,
        ..ExperimentConfig::default()
    };
    run_pipeline(&cfg).unwrap().report.beam_line_relative_sup
}

#[test]
fn spatial_refinement_does_not_increase_error() {
    let errs: Vec<f64> = [16, 32, 64].iter().map(|&n| beam_line_error(n)).collect();
    println!("beam-line sup error at 16, 32, 64 cells: {errs:?}");
    assert!(errs.windows(2).all(|w| w[1] <= w[0] * 1.05), "{errs:?}");
}
