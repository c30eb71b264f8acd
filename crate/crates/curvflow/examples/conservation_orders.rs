// cargo run --release --example conservation_orders
//
// Conservation drift under time-step refinement. In the flat torus with the
// volume-preserving term the enclosed volume is conserved exactly at every
// Runge-Kutta stage (the functional is linear in u there), so its drift sits
// at roundoff for any dt; in the curved power-law preset the functional is
// nonlinear and the drift shrinks at the integrator's order.

use curvflow::ambient::AmbientSpec;
use curvflow::curvfun::{CurvatureFunctionSpec, SupplementaryKind};
use curvflow::flow::{Flow, FlowConfig, ForceMode};
use curvflow::grid::{Grid, ScalarField};
use std::f64::consts::TAU;

fn drift_at(c_safe: f64, k: usize) -> (f64, f64) {
    let ambient = AmbientSpec::conformal_powerlaw(1, &[TAU], -1.0).unwrap();
    let grid = Grid::new(1, &[64], &[TAU]).unwrap();
    let curvature = if k == 0 {
        CurvatureFunctionSpec::mean_gamma1()
    } else {
        CurvatureFunctionSpec::mean_gamma1()
    };
    let mut config = FlowConfig::new(
        ambient,
        curvature,
        SupplementaryKind::Identity,
        ForceMode::Preserve { k },
    );
    config.c_safe = c_safe;
    config.tol_eta = 0.0; // run to the horizon
    config.t_max = 1.0;
    config.cadence = 10;
    let flow = Flow::new(config);
    let u0 = ScalarField::from_fn(grid, |x| -1.0 + 0.1 * x[0].sin());
    // representative step size (the final step is clamped to the horizon)
    let dt = flow.dt_select(&flow.evaluate(&u0).unwrap()).unwrap();
    let out = flow.run(&u0).unwrap();
    let name = if k == 0 { "volume" } else { "area" };
    let drift = out
        .report
        .drifts
        .iter()
        .find(|d| d.name == name)
        .unwrap()
        .max_rel_drift;
    (dt, drift)
}

fn main() {
    for k in [0usize, 1] {
        let name = if k == 0 { "enclosed volume" } else { "area" };
        println!("preserve({k}): {name} drift over t in [0, 1], power-law ambient, N = 64");
        let mut previous: Option<(f64, f64)> = None;
        for c_safe in [0.45, 0.3, 0.15] {
            let (dt, drift) = drift_at(c_safe, k);
            let order = previous
                .map(|(dt0, d0)| (d0 / drift).ln() / (dt0 / dt).ln())
                .map(|o| format!("order {o:.2}"))
                .unwrap_or_default();
            println!("    dt = {dt:.3e}: drift = {drift:.3e} {order}");
            previous = Some((dt, drift));
        }
        if k == 1 {
            println!(
                "    (the area functional saturates at its O(dx^4) stencil-commutation floor,\n     \
                 so time-step refinement bottoms out there; the volume functional has no floor)"
            );
        }
    }
}
