//! Timing and calibration runs for a single grid point.
//!
//! cargo run --release -p glm-breakdown --example pilot -- <design> <alpha0> <r_inner> <r_outer> [s]

use std::time::Instant;

use glm_breakdown::glm::FamilyKind;
use glm_breakdown::harness::{
    grid_point, run_outer_rep, DesignChoice, ExperimentConfig, NonconvergencePolicy,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let design = args.get(1).map_or("ar1", String::as_str);
    let alpha0: f64 = args.get(2).map_or(0.45, |s| s.parse().unwrap());
    let r_inner: usize = args.get(3).map_or(500, |s| s.parse().unwrap());
    let r_outer: usize = args.get(4).map_or(4, |s| s.parse().unwrap());
    let s: usize = args.get(5).map_or(0, |s| s.parse().unwrap());
    let (choice, rho) = match design {
        "stiefel" => (DesignChoice::Stiefel, 0.0),
        "ar1-0.5" => (DesignChoice::Ar1, 0.5),
        "ar1-0.8" => (DesignChoice::Ar1, 0.8),
        _ => (DesignChoice::Ar1, 0.0),
    };
    let config = ExperimentConfig {
        n: 1000,
        delta: 0.05,
        r_inner,
        r_outer,
        design: choice,
        rho,
        s,
        signal_magnitude: 3.0,
        family: FamilyKind::Logistic,
        dispersion: 1.0,
        tested_coordinate: 1,
        master_seed: 1,
        nonconvergence_policy: NonconvergencePolicy::Exclude,
        workers: 1,
        output_dir: "pilot".into(),
        alpha_grid: Some(vec![alpha0]),
        fixed_beta0: false,
        rescale_columns: false,
        include_intercept: false,
    };
    let g = grid_point(0, config.n, alpha0).unwrap();
    let start = Instant::now();
    let mut rejected = 0;
    for outer in 0..r_outer {
        let row = run_outer_rep(&g, outer, &config).unwrap();
        if row.ks_pvalue < 0.05 {
            rejected += 1;
        }
        println!(
            "p={} outer={} ks_p={:.4} ad_p={:.4} conv={} div={} sd_ratio={:.3} elapsed={:.1}s",
            g.p,
            outer,
            row.ks_pvalue,
            row.ad_pvalue,
            row.n_converged,
            row.n_diverged,
            row.sd_beta1 / (2.0 / (config.n as f64).sqrt()),
            start.elapsed().as_secs_f64()
        );
    }
    println!("rejected {rejected}/{r_outer}");
}
