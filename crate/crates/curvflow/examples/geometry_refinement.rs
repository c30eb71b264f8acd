// cargo run --release --example geometry_refinement
//
// Grid-refinement study: the second fundamental form assembled from the
// scalar graph formulas against the independent embedding oracle, and the
// Gauss-equation residual R + 2 kappa_1 kappa_2 in the flat ambient. Both
// should shrink at second order or better under doubling.

use curvflow::dispatch::run_oracle_suite;

fn main() {
    let report = run_oracle_suite().unwrap();
    for pair in &report.pairs {
        println!("{}:", pair.name);
        for (np, err) in pair.grid_points.iter().zip(pair.errors.iter()) {
            println!("    N = {np:>4}: max |h_formula - h_oracle| = {err:.3e}");
        }
        println!("    observed order {:.2} (pass: {})", pair.order, pair.pass);
    }
    println!("{}:", report.gauss.name);
    for (np, err) in report
        .gauss
        .grid_points
        .iter()
        .zip(report.gauss.errors.iter())
    {
        println!("    N = {np:>4}: max |R + 2 k1 k2| = {err:.3e}");
    }
    println!(
        "    observed order {:.2} (pass: {})",
        report.gauss.order, report.gauss.pass
    );
}
