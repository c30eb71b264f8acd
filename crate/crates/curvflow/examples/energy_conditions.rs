// cargo run --release --example energy_conditions
//
// Samples the timelike convergence condition Ric(V,V) >= 0 and the
// non-positive timelike sectional curvature condition R(V,W,V,W) >= 0 on
// the metric presets, and fits the constant-curvature form of the de
// Sitter-like preset. The reports are informational: the flow itself never
// gates on them.

use curvflow::ambient::{AmbientSpec, SampleRegion};
use std::f64::consts::TAU;

fn print_report(name: &str, report: &curvflow::ambient::ConditionReport) {
    println!(
        "{name:<28} {}: min {:+.3e}, max {:+.3e}, violating fraction {:.2}",
        report.condition, report.min_value, report.max_value, report.violating_fraction
    );
}

fn main() {
    let region = SampleRegion {
        t: (-2.0, -0.5),
        x: [(0.0, TAU), (0.0, TAU), (0.0, 1.0)],
    };

    let flat = AmbientSpec::minkowski_torus(2, &[TAU, TAU]).unwrap();
    let flat_region = SampleRegion {
        t: (-1.0, 1.0),
        ..region
    };
    print_report("minkowski-torus", &flat.tcc_sample(&flat_region, 200).unwrap());
    print_report("minkowski-torus", &flat.nptsc_sample(&flat_region, 200).unwrap());

    // contracting power law: both conditions hold
    let powerlaw = AmbientSpec::conformal_powerlaw(2, &[TAU, TAU], -1.5).unwrap();
    print_report("conformal-powerlaw p=-1.5", &powerlaw.tcc_sample(&region, 200).unwrap());
    print_report("conformal-powerlaw p=-1.5", &powerlaw.nptsc_sample(&region, 200).unwrap());

    // expanding de Sitter-like preset: both conditions fail, and the
    // curvature tensor has the constant-curvature form with K = 1
    let ds = AmbientSpec::conformal_de_sitter(2, &[TAU, TAU]).unwrap();
    print_report("conformal-desitter", &ds.tcc_sample(&region, 200).unwrap());
    print_report("conformal-desitter", &ds.nptsc_sample(&region, 200).unwrap());

    let t = -1.2;
    let x = [0.7, 1.1, 0.0];
    let sample = ds.riemann(t, &x).unwrap();
    let g = ds.metric_lower(t, &x);
    let mut num = 0.0;
    let mut den = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                for d in 0..3 {
                    let model = g[a][c] * g[b][d] - g[a][d] * g[b][c];
                    num += sample.comps[a][b][c][d] * model;
                    den += model * model;
                }
            }
        }
    }
    println!(
        "de Sitter-like constant-curvature fit: K = {:.6} (symmetry violation {:.2e})",
        num / den,
        sample.raw_violation
    );
}
