use std::fmt::Write as _;
use std::path::Path;

use fractrace_core::dynamics::{
    classify, default_search_bound, eidt_witnesses, eist_preimage, evolve_inverse_curve, inverse_curve, linspace,
    multiple_points, solve_trajectory, EistPreimage, FractionalSystem, PointKind, Tolerances, Verdict,
};
use fractrace_core::matrix_ops::RealVector;
use fractrace_core::ml_operator::{invertibility_scan, CriticalPair};
use fractrace_core::ml_zeros::{find_zeros, SearchRegion, ZeroTable};
use fractrace_core::scalar_ml::{ml_deriv, ml_eval, MlParams};

use crate::args::*;
use crate::emit::{num, write_to, Csv, Plot};
use crate::parse;

/// Exit status 2: the arguments themselves are malformed.
/// Exit status 1: the library rejected a well-formed request, or I/O failed.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Domain(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Domain(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Domain(m) => m,
        }
    }
}

impl From<fractrace_core::Error> for Failure {
    fn from(e: fractrace_core::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Domain(format!("i/o: {e}"))
    }
}

pub type Outcome = Result<(), Failure>;

fn usage<T>(r: Result<T, String>) -> Result<T, Failure> {
    r.map_err(Failure::Usage)
}

pub const TOL_SCALE_VAR: &str = "FRACTRACE_TOL_SCALE";

pub fn tolerances() -> Result<Tolerances, Failure> {
    match std::env::var(TOL_SCALE_VAR) {
        Err(_) => Ok(Tolerances::default()),
        Ok(s) => match s.trim().parse::<f64>() {
            Ok(f) if f > 0.0 && f.is_finite() => Ok(Tolerances::default().scaled(f)),
            _ => Err(Failure::Usage(format!("{TOL_SCALE_VAR} must be a positive number, got '{s}'"))),
        },
    }
}

fn system(args: &SystemArgs) -> Result<FractionalSystem, Failure> {
    let a = usage(parse::matrix(&args.matrix))?;
    Ok(FractionalSystem::new(args.alpha, a)?.with_tolerances(tolerances()?))
}

fn state(sys: &FractionalSystem, s: &str, name: &str) -> Result<RealVector, Failure> {
    let v = usage(parse::vector(s))?;
    if v.len() != sys.dim() {
        return Err(Failure::Usage(format!("--{name} has {} entries, the matrix is {n}×{n}", v.len(), n = sys.dim())));
    }
    Ok(v)
}

fn grid(t_min: f64, t_max: f64, samples: usize) -> Result<Vec<f64>, Failure> {
    if !(t_min >= 0.0 && t_max > t_min && t_max.is_finite()) {
        return Err(Failure::Usage(format!("need 0 <= t-min < t-max, got {t_min}, {t_max}")));
    }
    if samples < 2 {
        return Err(Failure::Usage("need at least two samples".into()));
    }
    Ok(linspace(t_min, t_max, samples))
}

fn params(alpha: f64, beta: f64) -> Result<MlParams, Failure> {
    Ok(MlParams::new(alpha, beta)?)
}

fn components(v: &RealVector) -> impl Iterator<Item = String> + '_ {
    v.iter().map(|&x| num(x))
}

fn xy(v: &RealVector) -> (f64, f64) {
    (v[0], if v.len() > 1 { v[1] } else { 0.0 })
}

fn save_svg(path: Option<&Path>, plot: &Plot) -> Outcome {
    if let Some(p) = path {
        std::fs::write(p, plot.render())?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::MlEval(a) => ml_eval_cmd(&a),
        Command::Zeros(a) => zeros_cmd(&a),
        Command::Classify(a) => classify_cmd(&a),
        Command::Trajectory(a) => trajectory_cmd(&a),
        Command::InverseCurve(a) => inverse_curve_cmd(&a),
        Command::Eist(a) => eist_cmd(&a),
        Command::Eidt(a) => eidt_cmd(&a),
        Command::SelfIntersect(a) => self_intersect_cmd(&a),
        Command::ReproduceFigures(a) => crate::figures::reproduce(&a.outdir),
    }
}

fn ml_eval_cmd(a: &MlEvalArgs) -> Outcome {
    let p = params(a.alpha, a.beta)?;
    let mut csv = Csv::new(&["alpha", "beta", "z_re", "z_im", "re", "im", "deriv_re", "deriv_im", "est_rel_error"]);
    for s in &a.points {
        let z = usage(parse::complex(s))?;
        let e = ml_eval(p, z)?;
        let d = ml_deriv(p, z)?;
        csv.row(
            [a.alpha, a.beta, z.re, z.im, e.value.re, e.value.im, d.value.re, d.value.im, e.est_rel_error].map(num),
        );
    }
    Ok(write_to(a.out.as_deref(), csv.as_str())?)
}

/// Rows `alpha,beta,re,im,residual,index`, ordered by modulus then argument.
pub fn zeros_csv(alpha: f64, beta: f64, zeros: &[fractrace_core::ml_zeros::MlZero]) -> Csv {
    let mut csv = Csv::new(&["alpha", "beta", "re", "im", "residual", "index"]);
    for z in zeros {
        csv.row([num(alpha), num(beta), num(z.location.re), num(z.location.im), num(z.residual), z.index.to_string()]);
    }
    csv
}

fn zeros_cmd(a: &ZerosArgs) -> Outcome {
    let p = params(a.alpha, a.beta)?;
    let (zeros, warnings) = match (&a.re, &a.im, a.radius) {
        (Some(re), Some(im), None) => {
            let (re, im) = (usage(parse::range(re))?, usage(parse::range(im))?);
            let region = SearchRegion::new(re.0, re.1, im.0, im.1)?;
            let set = find_zeros(p, &region, usize::MAX)?;
            (set.zeros, set.warnings)
        }
        (None, None, Some(r)) => {
            let t = ZeroTable::build(p, r)?;
            (t.zeros, t.warnings)
        }
        _ => return Err(Failure::Usage("give either --re and --im, or --radius".into())),
    };
    for w in &warnings {
        eprintln!("warning: {} zeros unresolved within {:e} of {}", w.count, w.diameter, w.center);
    }
    Ok(write_to(a.out.as_deref(), zeros_csv(a.alpha, a.beta, &zeros).as_str())?)
}

fn classify_cmd(a: &ClassifyArgs) -> Outcome {
    let sys = system(&a.system)?;
    let r = a.radius.unwrap_or_else(|| default_search_bound(sys.alpha()));
    let c = classify(&sys, r, sys.tolerances().angular)?;
    let mut s = String::new();
    let verdict = match c.verdict {
        Verdict::TypeI => "Type I",
        Verdict::TypeII => "Type II",
    };
    let _ = writeln!(s, "verdict: {verdict}");
    let _ = writeln!(s, "search bound: {}", num(c.search_bound));
    for e in sys.eigenvalues() {
        let _ = writeln!(s, "eigenvalue: {} {}", num(e.re), num(e.im));
    }
    for k in &c.criticals {
        let _ = writeln!(
            s,
            "critical: T={} eigenvalue={}{:+}i zero={}{:+}i mismatch={:e}",
            num(k.t_critical),
            k.eigenvalue.re,
            k.eigenvalue.im,
            k.zero.location.re,
            k.zero.location.im,
            k.arg_mismatch
        );
    }
    if c.asymptotic_flags.is_empty() {
        let _ = writeln!(s, "asymptotic flags: none");
    }
    for f in &c.asymptotic_flags {
        let _ = writeln!(s, "asymptotic flag: eigenvalue {}{:+}i lies near the sector edge |arg| = απ/2", f.re, f.im);
    }
    print!("{s}");

    if let Some(out) = &a.out {
        let g = grid(0.0, a.t_max, a.samples)?;
        let pairs: Vec<CriticalPair> = c.criticals.iter().map(CriticalPair::from).collect();
        let scan = invertibility_scan(params(sys.alpha(), 1.0)?, sys.matrix(), &g, &pairs)?;
        let mut csv = Csv::new(&["t", "det_re", "det_im", "invertible"]);
        for r in scan {
            csv.row([num(r.t), num(r.det_value.re), num(r.det_value.im), r.invertible.to_string()]);
        }
        write_to(Some(out), csv.as_str())?;
    }
    Ok(())
}

fn trajectory_cmd(a: &TrajectoryArgs) -> Outcome {
    let sys = system(&a.system)?;
    let x0 = state(&sys, &a.x0, "x0")?;
    let traj = solve_trajectory(&sys, &x0, &grid(a.t_min, a.t_max, a.samples)?)?;
    let mut csv = Csv::with_columns(&["t"], "x", sys.dim());
    for (t, x) in &traj.samples {
        csv.row(std::iter::once(num(*t)).chain(components(x)));
    }
    write_to(a.output.out.as_deref(), csv.as_str())?;
    let mut plot = Plot::new(format!("u(t; x0), alpha = {}", sys.alpha()));
    plot.curve("u", traj.samples.iter().map(|(_, x)| xy(x)).collect());
    save_svg(a.output.svg.as_deref(), &plot)
}

fn inverse_curve_cmd(a: &InverseCurveArgs) -> Outcome {
    let sys = system(&a.system)?;
    let x0 = state(&sys, &a.x0, "x0")?;
    let g = grid(a.t_min, a.t_max, a.samples)?;
    let base = inverse_curve(&sys, &x0, &g)?;
    let mut csv = Csv::with_columns(&["t_tilde", "t"], "x", sys.dim());
    let mut plot = Plot::new(format!("inverse curves, alpha = {}", sys.alpha()));
    for (t, x) in &base.samples {
        csv.row([num(0.0), num(*t)].into_iter().chain(components(x)));
    }
    plot.curve("gamma", base.samples.iter().map(|(_, x)| xy(x)).collect());
    for &tt in &a.evolve {
        if !(tt > 0.0 && tt.is_finite()) {
            return Err(Failure::Usage(format!("--evolve times must be positive, got {tt}")));
        }
        let ev = evolve_inverse_curve(&sys, &x0, tt, &g)?;
        for (t, x) in &ev.direct.samples {
            csv.row([num(tt), num(*t)].into_iter().chain(components(x)));
        }
        plot.curve(format!("evolved {tt}"), ev.direct.samples.iter().map(|(_, x)| xy(x)).collect());
    }
    write_to(a.output.out.as_deref(), csv.as_str())?;
    save_svg(a.output.svg.as_deref(), &plot)
}

fn eist_cmd(a: &EistArgs) -> Outcome {
    let sys = system(&a.system)?;
    let p = state(&sys, &a.p, "p")?;
    let mut csv = Csv::with_columns(&["role"], "x", sys.dim());
    match eist_preimage(&sys, &p, a.t)? {
        EistPreimage::Unique(x) => csv.row(std::iter::once("unique".to_string()).chain(components(&x))),
        EistPreimage::Fiber(set) => {
            csv.row(std::iter::once("base".to_string()).chain(components(&set.base)));
            for d in &set.directions.vectors {
                csv.row(std::iter::once("direction".to_string()).chain(components(d)));
            }
        }
    }
    Ok(write_to(a.out.as_deref(), csv.as_str())?)
}

fn eidt_cmd(a: &EidtArgs) -> Outcome {
    let sys = system(&a.system)?;
    let x0 = state(&sys, &a.x0, "x0")?;
    let x = state(&sys, &a.x, "x")?;
    let (w0, w1) = (usage(parse::range(&a.window_x0))?, usage(parse::range(&a.window_x))?);
    let found = eidt_witnesses(&sys, &x0, &x, w0, w1, a.grid)?;
    let mut csv = Csv::with_columns(&["t_x0", "t_x", "residual"], "p", sys.dim());
    for w in &found {
        csv.row([num(w.t_x0), num(w.t_x), num(w.residual)].into_iter().chain(components(&w.meeting_point)));
    }
    Ok(write_to(a.out.as_deref(), csv.as_str())?)
}

fn kind_name(k: PointKind) -> &'static str {
    match k {
        PointKind::Node => "node",
        PointKind::Cusp => "cusp",
        PointKind::Unresolved => "unresolved",
    }
}

fn self_intersect_cmd(a: &SelfIntersectArgs) -> Outcome {
    let sys = system(&a.system)?;
    let x0 = state(&sys, &a.x0, "x0")?;
    let r = a.radius.unwrap_or_else(|| default_search_bound(sys.alpha()));
    let pts = multiple_points(&sys, &x0, r)?;
    let mut csv = Csv::with_columns(&["t_critical", "kind", "velocity_norm", "t1", "t2"], "p", sys.dim());
    for m in &pts {
        let (t1, t2) = m.crossing.map_or((String::new(), String::new()), |c| (num(c.t1), num(c.t2)));
        csv.row(
            [num(m.t_critical), kind_name(m.kind).to_string(), num(m.velocity_norm), t1, t2]
                .into_iter()
                .chain(components(&m.p)),
        );
    }
    Ok(write_to(a.out.as_deref(), csv.as_str())?)
}
