//! The interpolated sup-error has a floor that does not depend on the
//! scheme: even a path reproduced exactly at every coarse node is off by
//! the Brownian-bridge oscillation between nodes, of order
//! `sqrt(h log(1/h))`. Over `h = 2^-5 .. 2^-10` this caps the fitted slope
//! near 0.43.

use cirsim::analysis::fit_rate;
use cirsim::analysis::strong::sup_interp_error;
use cirsim::paths::{cumulative_path, generate_increments, TimeGrid};

#[test]
fn exact_nodes_still_fit_below_one_half() {
    let fine = TimeGrid::with_step(1.0, 2f64.powi(-14)).unwrap();
    let levels: Vec<i32> = (5..=10).collect();
    let n_paths = 2000;
    let mut sums = vec![0.0; levels.len()];
    for i in 0..n_paths {
        let w = cumulative_path(&generate_increments(2024, i, &fine));
        for (s, &k) in sums.iter_mut().zip(&levels) {
            let factor = 1usize << (14 - k);
            let nodes: Vec<f64> = w.iter().step_by(factor).copied().collect();
            *s += sup_interp_error(&w, &nodes, factor);
        }
    }
    let h: Vec<f64> = levels.iter().map(|&k| 2f64.powi(-k)).collect();
    let errors: Vec<f64> = sums.iter().map(|s| s / n_paths as f64).collect();
    let slope = fit_rate(&h, &errors).unwrap().fitted_slope;
    println!("exact-node slope {slope:.4}");
    assert!((0.40..0.45).contains(&slope), "slope {slope}");
}
