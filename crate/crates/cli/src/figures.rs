//! The four reference figures: inverse curves of the rotation system and the
//! loop/cusp pair at `α = 1/3`.

use std::path::Path;

use fractrace_core::dynamics::{
    classify_double_point, evolve_inverse_curve, inverse_curve, ivp_residual, linspace, real_block, solve_trajectory,
    vector, FractionalSystem, RESIDUAL_STEP, RESIDUAL_WINDOW,
};
use fractrace_core::matrix_ops::RealVector;
use fractrace_core::ml_zeros::{find_zeros, SearchRegion};
use fractrace_core::scalar_ml::MlParams;
use fractrace_core::Complex64;

use crate::commands::{tolerances, Failure, Outcome};
use crate::emit::{num, Csv, Plot};

const ROTATION_ALPHA: f64 = 0.9;
const ROTATION_X0: [f64; 2] = [2.0, 1.0];
const GAMMA_SPAN: f64 = 3.0;
const EVOLVE_AT: [f64; 2] = [0.5, 1.2];
const LAUNCH_TIMES: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
const CURVE_SAMPLES: usize = 200;

const LOOP_ALPHA: f64 = 1.0 / 3.0;
const LOOP_WINDOW: (f64, f64) = (0.5, 2.0);
const LOOP_SAMPLES: usize = 1501;
/// Approximate zeros of `E_{1/3,0}`: the first gives the loop, the second the cusp.
const LOOP_SEEDS: [Complex64; 2] = [Complex64::new(2.21095, -1.60243), Complex64::new(1.47895, 1.349246)];

const MAX_RESIDUAL: f64 = 5e-3;

/// Accumulates `curve,t,x1,x2` rows alongside the matching plot.
struct Figure {
    csv: Csv,
    plot: Plot,
}

impl Figure {
    fn new(title: &str) -> Self {
        Self { csv: Csv::new(&["curve", "t", "x1", "x2"]), plot: Plot::new(title) }
    }

    fn add(&mut self, label: &str, samples: &[(f64, RealVector)]) {
        for (t, x) in samples {
            self.csv.row([label.to_string(), num(*t), num(x[0]), num(x[1])]);
        }
        self.plot.curve(label, samples.iter().map(|(_, x)| (x[0], x[1])).collect());
    }
}

fn save(dir: &Path, stem: &str, csv: &Csv, plot: &Plot) -> Outcome {
    std::fs::write(dir.join(format!("{stem}.csv")), csv.as_str())?;
    std::fs::write(dir.join(format!("{stem}.svg")), plot.render())?;
    Ok(())
}

/// Checks the L1 Caputo residual of `u(·; x0)` and returns it.
fn validated(sys: &FractionalSystem, x0: &RealVector, what: &str) -> Result<f64, Failure> {
    let r = ivp_residual(sys, x0, RESIDUAL_WINDOW, RESIDUAL_STEP)?.relative;
    if r > MAX_RESIDUAL {
        return Err(Failure::Domain(format!("{what}: IVP residual {r:e} exceeds {MAX_RESIDUAL:e}")));
    }
    Ok(r)
}

/// Grid over `window` with extra exact times merged in.
fn grid_with(window: (f64, f64), n: usize, extra: &[f64]) -> Vec<f64> {
    let mut g = linspace(window.0, window.1, n);
    g.extend(extra.iter().copied().filter(|t| (window.0..=window.1).contains(t)));
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

pub fn reproduce(dir: &Path) -> Outcome {
    std::fs::create_dir_all(dir)?;
    let tol = tolerances()?;
    let rotation = FractionalSystem::new(ROTATION_ALPHA, real_block(Complex64::new(0.0, 1.0)))?.with_tolerances(tol);
    let x0 = vector(&ROTATION_X0);
    let span = linspace(0.0, GAMMA_SPAN, CURVE_SAMPLES);

    // fig1: γ_{x0} and trajectories launched from it, each arriving at x0.
    let gamma = inverse_curve(&rotation, &x0, &span)?;
    let mut fig = Figure::new("fig1: inverse curve and trajectories through x0 = (2, 1)");
    fig.add("gamma", &gamma.samples);
    let mut worst = validated(&rotation, &x0, "fig1 x0")?;
    for &t in &LAUNCH_TIMES {
        let start = inverse_curve(&rotation, &x0, &[t])?.samples.remove(0).1;
        let traj = solve_trajectory(&rotation, &start, &linspace(0.0, t, CURVE_SAMPLES))?;
        fig.add(&format!("u from gamma({t})"), &traj.samples);
        worst = worst.max(validated(&rotation, &start, "fig1 trajectory")?);
    }
    save(dir, "fig1", &fig.csv, &fig.plot)?;
    println!("fig1: {} curves, IVP residual <= {:.2e}", LAUNCH_TIMES.len() + 1, worst);

    // fig2: γ carried along the trajectory of x0.
    let mut fig = Figure::new("fig2: inverse curve evolved along u(t; x0)");
    fig.add("gamma", &gamma.samples);
    let mut worst_gap = 0.0f64;
    for &tt in &EVOLVE_AT {
        let ev = evolve_inverse_curve(&rotation, &x0, tt, &span)?;
        fig.add(&format!("gamma at {tt}"), &ev.direct.samples);
        worst_gap = worst_gap.max(ev.max_discrepancy);
    }
    let path = solve_trajectory(&rotation, &x0, &linspace(0.0, GAMMA_SPAN, CURVE_SAMPLES))?;
    fig.add("u(t; x0)", &path.samples);
    save(dir, "fig2", &fig.csv, &fig.plot)?;
    println!(
        "fig2: evolved curves agree to {worst_gap:.2e}, IVP residual <= {:.2e}",
        validated(&rotation, &x0, "fig2")?
    );

    // fig3: loop and cusp. With A = [[a, b], [-b, a]] for a zero a - ib of
    // E_{1/3,0}, the critical time is exactly 1.
    let zeros = find_zeros(MlParams::new(LOOP_ALPHA, 0.0)?, &SearchRegion::new(1.0, 3.0, -2.0, 2.0)?, usize::MAX)?;
    let nearest = |seed: Complex64| {
        zeros
            .zeros
            .iter()
            .map(|z| z.location)
            .min_by(|a, b| (a - seed).norm().total_cmp(&(b - seed).norm()))
            .ok_or_else(|| Failure::Domain("no zeros of E_{1/3,0} found".into()))
    };
    let start = vector(&[1.0, 0.0]);

    let node_sys = FractionalSystem::new(LOOP_ALPHA, real_block(nearest(LOOP_SEEDS[0])?))?.with_tolerances(tol);
    let dp = classify_double_point(&node_sys, &start, 1.0)?;
    let cr = dp.crossing.ok_or_else(|| Failure::Domain("fig3a: no self-crossing found".into()))?;
    let traj = solve_trajectory(&node_sys, &start, &grid_with(LOOP_WINDOW, LOOP_SAMPLES, &[cr.t1, cr.t2]))?;
    let mut csv = Csv::new(&["t", "x1", "x2"]);
    for (t, x) in &traj.samples {
        csv.row([num(*t), num(x[0]), num(x[1])]);
    }
    let mut plot = Plot::new("fig3a: self-intersection, alpha = 1/3");
    plot.curve("u(t; (1, 0))", traj.samples.iter().map(|(_, x)| (x[0], x[1])).collect());
    save(dir, "fig3a", &csv, &plot)?;
    println!(
        "fig3a: node u({}) = u({}), gap {:.2e}, IVP residual {:.2e}",
        num(cr.t1),
        num(cr.t2),
        cr.state_gap,
        validated(&node_sys, &start, "fig3a")?
    );

    let cusp_sys = FractionalSystem::new(LOOP_ALPHA, real_block(nearest(LOOP_SEEDS[1])?))?.with_tolerances(tol);
    let traj = solve_trajectory(&cusp_sys, &start, &grid_with(LOOP_WINDOW, LOOP_SAMPLES, &[1.0]))?;
    let mut csv = Csv::new(&["t", "x1", "x2", "speed"]);
    let mut slowest = (f64::INFINITY, 0.0);
    for (t, x) in &traj.samples {
        let speed = cusp_sys.velocity(&start, *t)?.norm();
        if speed < slowest.0 {
            slowest = (speed, *t);
        }
        csv.row([num(*t), num(x[0]), num(x[1]), num(speed)]);
    }
    let mut plot = Plot::new("fig3b: cusp, alpha = 1/3");
    plot.curve("u(t; (1, 0))", traj.samples.iter().map(|(_, x)| (x[0], x[1])).collect());
    save(dir, "fig3b", &csv, &plot)?;
    println!(
        "fig3b: minimum speed {:.2e} at t = {}, IVP residual {:.2e}",
        slowest.0,
        num(slowest.1),
        validated(&cusp_sys, &start, "fig3b")?
    );
    Ok(())
}
