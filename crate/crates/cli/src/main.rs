//! `shapeflow` command-line driver.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 usage or input error.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use shapeflow::adjoint::{eval_cost, solve_adjoint, CostKind};
use shapeflow::fem::{FeSpace, FluidParams};
use shapeflow::flow::{solve_ns, state_residual, target_field, FlowField, NewtonOptions, Seed, TargetField};
use shapeflow::mesh::io::{read_mesh, write_mesh, write_vtk, PointData};
use shapeflow::mesh::{gen_annulus, BoundaryCurve, Marker};
use shapeflow::optim::{run_with, IterRecord, OptConfig};
use shapeflow::shape::{check_gradient, gradient_density, h1_descent};
use shapeflow::{Error, Mesh};

#[derive(Parser)]
#[command(name = "shapeflow", version, about = "Shape optimization for stationary Navier-Stokes flow in an annulus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an annulus mesh around an inner curve.
    Mesh(MeshArgs),
    /// Solve the state equation on a mesh.
    Solve(SolveArgs),
    /// Solve the adjoint equation and write the shape-gradient density.
    Adjoint(AdjointArgs),
    /// Run the gradient algorithm from a JSON configuration.
    Optimize(OptimizeArgs),
    /// Compare adjoint Eulerian derivatives with finite differences.
    VerifyGradient(VerifyArgs),
}

#[derive(Args)]
struct MeshArgs {
    /// `circle:R` or `ellipse:A,B` (semi-axes along x and y).
    #[arg(long)]
    inner: String,
    /// Target edge length.
    #[arg(long, default_value_t = 0.11)]
    h: f64,
    /// Mesh file to write; a `.vtk` copy is written next to it.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct FlowArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    alpha: f64,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    flow: FlowArgs,
    /// VTK file for the velocity and pressure.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TargetArgs {
    #[arg(long, default_value = "j1")]
    cost: CostKind,
    /// Inner curve of the target domain (J1 only).
    #[arg(long, default_value = "circle:0.2")]
    target: String,
    /// Edge length of the target mesh; defaults to that of `--mesh`.
    #[arg(long)]
    target_h: Option<f64>,
}

#[derive(Args)]
struct AdjointArgs {
    #[command(flatten)]
    flow: FlowArgs,
    #[command(flatten)]
    target: TargetArgs,
    /// VTK file for state, adjoint and descent field.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    /// JSON configuration.
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "shapeflow-out")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    flow: FlowArgs,
    #[command(flatten)]
    target: TargetArgs,
    /// Number of Fourier modes, k = 0..modes-1.
    #[arg(long, default_value_t = 5)]
    modes: usize,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 0.05)]
    threshold: f64,
    /// CSV report; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Numerical(_) => 1,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::Parse(_) | Error::Geometry(_) => Failure::Usage(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical(format!("i/o error: {e}"))
    }
}

type CmdResult = Result<(), Failure>;

fn g(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_curve(spec: &str) -> Result<BoundaryCurve<f64>, Failure> {
    let bad = || Failure::Usage(format!("bad curve '{spec}' (expected circle:R or ellipse:A,B)"));
    let (kind, rest) = spec.split_once(':').ok_or_else(bad)?;
    let nums: Vec<f64> = rest.split(',').map(|s| s.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let curve = match (kind.trim().to_ascii_lowercase().as_str(), nums.as_slice()) {
        ("circle", [r]) => BoundaryCurve::circle(*r),
        ("ellipse", [a, b]) => BoundaryCurve::Ellipse { a: *a, b: *b },
        _ => return Err(bad()),
    };
    curve.validate()?;
    Ok(curve)
}

fn load_mesh(path: &Path) -> Result<Mesh, Failure> {
    let f = File::open(path).map_err(|e| Failure::Usage(format!("cannot open {}: {e}", path.display())))?;
    read_mesh(BufReader::new(f)).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn params(alpha: f64) -> Result<FluidParams<f64>, Failure> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Failure::Usage(format!("--alpha must be positive, got {alpha}")));
    }
    Ok(FluidParams::benchmark(alpha)?)
}

fn target(args: &TargetArgs, mesh: &Mesh, params: &FluidParams<f64>) -> Result<Option<TargetField<f64>>, Failure> {
    if !args.cost.needs_target() {
        return Ok(None);
    }
    let curve = parse_curve(&args.target)?;
    let h = args.target_h.unwrap_or_else(|| mesh.characteristic_h());
    if !(h > 0.0) {
        return Err(Failure::Usage(format!("--target-h must be positive, got {h}")));
    }
    Ok(Some(target_field(gen_annulus(&curve, h)?, params)?))
}

fn with_extension(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<(), Error>) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn flow_data(prefix: &str, field: &FlowField<f64>) -> Vec<PointData> {
    vec![
        PointData::Vectors { name: format!("{prefix}velocity"), values: field.nodal_velocity() },
        PointData::Scalars { name: format!("{prefix}pressure"), values: field.pressure().to_vec() },
    ]
}

fn solve_state(space: &std::sync::Arc<FeSpace<f64>>, p: &FluidParams<f64>) -> Result<FlowField<f64>, Failure> {
    let (y, report) = solve_ns(space, p, &NewtonOptions::default(), Seed::Stokes)?;
    println!("newton_iterations {}", report.iterations);
    for (k, r) in report.residuals.iter().enumerate() {
        println!("residual {k} {}", g(*r));
    }
    if report.continuation_steps > 0 {
        println!("continuation_steps {}", report.continuation_steps);
    }
    Ok(y)
}

fn cmd_mesh(a: &MeshArgs) -> CmdResult {
    let curve = parse_curve(&a.inner)?;
    if !(a.h > 0.0) {
        return Err(Failure::Usage(format!("--h must be positive, got {}", a.h)));
    }
    let mesh = gen_annulus(&curve, a.h)?;
    write_file(&a.output, |w| write_mesh(&mesh, w))?;
    let vtk = with_extension(&a.output, "vtk");
    write_file(&vtk, |w| write_vtk(&mesh, "shapeflow mesh", &[], w))?;
    let q = mesh.quality();
    println!("nodes {}", mesh.num_nodes());
    println!("triangles {}", mesh.num_triangles());
    println!("inner_nodes {}", mesh.boundary_loop(Marker::Inner)?.len());
    println!("min_angle {}", g(q.min_angle));
    println!("wrote {} {}", a.output.display(), vtk.display());
    Ok(())
}

fn cmd_solve(a: &SolveArgs) -> CmdResult {
    let p = params(a.flow.alpha)?;
    let mesh = load_mesh(&a.flow.mesh)?;
    let space = FeSpace::new(mesh)?;
    let y = solve_state(&space, &p)?;
    println!("state_residual {}", g(state_residual(&y, &p)?));
    println!("max_divergence {}", g(y.max_divergence()));
    println!("pressure_mean {}", g(y.pressure_mean()));
    if let Some(out) = &a.output {
        write_file(out, |w| write_vtk(y.mesh(), "shapeflow state", &flow_data("", &y), w))?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn cmd_adjoint(a: &AdjointArgs) -> CmdResult {
    let p = params(a.flow.alpha)?;
    let mesh = load_mesh(&a.flow.mesh)?;
    let tf = target(&a.target, &mesh, &p)?;
    let space = FeSpace::new(mesh)?;
    let y = solve_state(&space, &p)?;
    let kind = a.target.cost;
    let v = solve_adjoint(&y, &p, kind, tf.as_ref())?;
    let density = gradient_density(&y, &v, &p, kind, tf.as_ref())?;
    let d = h1_descent(y.mesh(), &density)?;
    println!("cost {kind} {}", g(eval_cost(&y, &p, kind, tf.as_ref())?));
    println!("adjoint_max_divergence {}", g(v.max_divergence()));
    let gmax = density.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    println!("density_max_abs {}", g(gmax));
    if let Some(out) = &a.output {
        let mut data = flow_data("state_", &y);
        data.extend(flow_data("adjoint_", &v));
        data.push(PointData::Vectors { name: "descent".into(), values: d.values().to_vec() });
        write_file(out, |w| write_vtk(y.mesh(), "shapeflow adjoint", &data, w))?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct RunManifest {
    toolkit_version: &'static str,
    command: &'static str,
    config: OptConfig,
    started_unix: u64,
    phases: Vec<(String, f64)>,
    stop: String,
    accepted_iterations: usize,
    initial_cost: Option<f64>,
    final_cost: Option<f64>,
    outputs: Vec<PathBuf>,
}

fn cmd_optimize(a: &OptimizeArgs) -> CmdResult {
    let text = fs::read_to_string(&a.config)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", a.config.display())))?;
    let cfg = OptConfig::from_json(&text)?;
    fs::create_dir_all(&a.out)?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let t0 = Instant::now();
    let mut outputs = Vec::new();

    let config_path = a.out.join("config.json");
    fs::write(&config_path, cfg.to_json())?;
    outputs.push(config_path);
    let trace_path = a.out.join("trace.csv");
    let mut trace = BufWriter::new(File::create(&trace_path)?);
    writeln!(trace, "{}", IterRecord::CSV_HEADER)?;
    outputs.push(trace_path);

    let mut snapshots = Vec::new();
    let out = run_with::<f64>(&cfg, |rec, mesh| {
        writeln!(trace, "{}", rec.csv_row())?;
        trace.flush()?;
        eprintln!("k={} J={} h={} accepted={}", rec.k, g(rec.cost), g(rec.h), rec.accepted);
        if cfg.snapshot_every > 0 && (rec.k + 1) % cfg.snapshot_every == 0 {
            let path = a.out.join(format!("snapshot_{:04}.mesh", rec.k + 1));
            let mut w = BufWriter::new(File::create(&path)?);
            write_mesh(mesh, &mut w)?;
            w.flush()?;
            snapshots.push(path);
        }
        Ok(())
    })?;
    drop(trace);
    let t_loop = t0.elapsed().as_secs_f64();
    outputs.extend(snapshots);

    let initial_path = a.out.join("initial.mesh");
    write_file(&initial_path, |w| write_mesh(&out.initial_mesh, w))?;
    outputs.push(initial_path);
    let final_path = a.out.join("final.mesh");
    write_file(&final_path, |w| write_mesh(&out.mesh, w))?;
    outputs.push(final_path);
    let vtk_path = a.out.join("final.vtk");
    let data = out.state.as_ref().map(|y| flow_data("", y)).unwrap_or_default();
    write_file(&vtk_path, |w| write_vtk(&out.mesh, "shapeflow final shape", &data, w))?;
    outputs.push(vtk_path);

    let manifest_path = a.out.join("manifest.json");
    outputs.push(manifest_path.clone());
    let manifest = RunManifest {
        toolkit_version: env!("CARGO_PKG_VERSION"),
        command: "optimize",
        config: cfg.clone(),
        started_unix: started,
        phases: vec![("optimize".into(), t_loop), ("total".into(), t0.elapsed().as_secs_f64())],
        stop: out.stop.to_string(),
        accepted_iterations: out.trace.accepted(),
        initial_cost: out.trace.records.first().map(|r| r.cost),
        final_cost: out.final_cost,
        outputs,
    };
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).expect("plain data"))?;

    println!("accepted_iterations {}", out.trace.accepted());
    if let (Some(j0), Some(j)) = (manifest.initial_cost, out.final_cost) {
        println!("initial_cost {}", g(j0));
        println!("final_cost {}", g(j));
    }
    println!("stop {}", out.stop);
    if out.stop.is_success() {
        Ok(())
    } else {
        Err(Failure::Numerical(out.stop.to_string()))
    }
}

fn cmd_verify(a: &VerifyArgs) -> CmdResult {
    let p = params(a.flow.alpha)?;
    if !(a.eps > 0.0) || !(a.threshold >= 0.0) {
        return Err(Failure::Usage("--eps must be positive and --threshold non-negative".into()));
    }
    let mesh = load_mesh(&a.flow.mesh)?;
    let tf = target(&a.target, &mesh, &p)?;
    let rows = check_gradient(&mesh, &p, a.target.cost, tf.as_ref(), a.modes, a.eps)?;
    let mut csv = String::from("k,adjoint,volume,fd,rel_err,pass\n");
    let mut worst = 0.0f64;
    for r in &rows {
        let pass = r.rel_err <= a.threshold;
        worst = worst.max(r.rel_err);
        csv.push_str(&format!("{},{},{},{},{},{}\n", r.k, g(r.adjoint), g(r.volume), g(r.fd), g(r.rel_err), pass));
    }
    match &a.output {
        Some(path) => {
            write_file(path, |w| w.write_all(csv.as_bytes()).map_err(Error::from))?;
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    if worst > a.threshold {
        return Err(Failure::Numerical(format!(
            "largest relative error {} exceeds threshold {}",
            g(worst),
            g(a.threshold)
        )));
    }
    Ok(())
}

fn configure_threads() -> CmdResult {
    let Ok(v) = std::env::var("SHAPEFLOW_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("SHAPEFLOW_THREADS must be a positive integer, got '{v}'")))?;
    // a second initialization only happens in tests; keep the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match &cli.command {
        Command::Mesh(a) => cmd_mesh(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Adjoint(a) => cmd_adjoint(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::VerifyGradient(a) => cmd_verify(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Usage(m) | Failure::Numerical(m)) = &f;
            eprintln!("error: {m}");
            ExitCode::from(f.code())
        }
    }
}
