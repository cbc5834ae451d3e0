//! Twin-media experiment: two media differing by a small bump are run through
//! the pipeline and the amplification `sup |dsigma| / sup |dH|` is recorded.

use aoi_core::reconstruct::perturbation_ratio;
use aoi_harness::config::{CoefficientSpec, ExperimentConfig, GridConfig, HMode, MediaConfig, PipelineConfig};
use aoi_harness::run_pipeline;

fn cfg(kn: f64, bump: f64) -> ExperimentConfig {
    ExperimentConfig {
        grid: GridConfig {
            nx: 32,
            ny: 32,
            extent: [1.0, 1.0],
        },
        n_dirs: 32,
        mode: HMode::Direct,
        media: MediaConfig {
            sigma_s: CoefficientSpec::GaussianBump {
                base: 1.0,
                amplitude: bump,
                center: [0.5, 0.5],
                width: 0.1,
            },
            ..MediaConfig::default()
        },
        pipeline: PipelineConfig {
            kn,
            h: 4.0 * std::f64::consts::PI / 32.0,
        },
        ..ExperimentConfig::default()
    }
}

fn amplification(kn: f64) -> f64 {
    let a = run_pipeline(&cfg(kn, 0.0)).unwrap();
    let b = run_pipeline(&cfg(kn, 0.05)).unwrap();
    perturbation_ratio(&a.sigma_hat, &b.sigma_hat, &a.internal.values, &b.internal.values).unwrap()
}

#[test]
fn perturbation_amplification_grows_as_kn_decreases() {
    let ratios: Vec<f64> = [1.0, 0.5, 0.25].iter().map(|&kn| amplification(kn)).collect();
    println!("amplification at Kn = 1, 1/2, 1/4: {ratios:?}");
    assert!(ratios.iter().all(|r| r.is_finite() && *r > 0.0));
    assert!(ratios.windows(2).all(|w| w[0] < w[1]), "{ratios:?}");
}
