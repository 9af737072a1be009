use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hybrid_mixed::condense::Variant;
use hybrid_mixed::config::{MeshSource, RunConfig};
use hybrid_mixed::equivcheck::{verify_lemma32, verify_theorem22};
use hybrid_mixed::export::export_fields;
use hybrid_mixed::march::run;
use hybrid_mixed::mms::{mms_study, MmsCase};
use hybrid_mixed::Result;

/// Hybridized RT0 mixed finite elements for nonlinear Darcy-Forchheimer flow.
#[derive(Parser)]
#[command(name = "hybrid-mixed", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one stationary problem and write p.csv, flux.csv and log.csv.
    Steady(RunArgs),
    /// Implicit Euler time stepping. The initial pressure is given in the
    /// config either as physical pressure P (initial_physical) or in the
    /// transformed variable p = |P| P (initial_transformed).
    March(MarchArgs),
    /// Solve, then check the mixed and nonconforming equivalence identities.
    Verify(RunArgs),
    /// Manufactured-solution convergence study on n = 4, 8, 16, ...
    Mms(MmsArgs),
    /// Print mesh statistics.
    MeshInfo(MeshInfoArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `structured:N` or a mesh file; overrides the config.
    #[arg(long)]
    mesh: Option<String>,
    /// flux-only, closed-form or coupled; overrides the config.
    #[arg(long)]
    variant: Option<Variant>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a legacy VTK file.
    #[arg(long)]
    vtk: bool,
}

#[derive(Args)]
struct MarchArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct MmsArgs {
    /// Number of refinement levels starting at n = 4.
    #[arg(long, default_value_t = 4)]
    levels: usize,
    /// darcy, forchheimer or both.
    #[arg(long, default_value = "both")]
    case: String,
    #[arg(long, default_value = "closed-form")]
    variant: Variant,
    /// Write mms_<case>.csv into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MeshInfoArgs {
    #[arg(long)]
    mesh: String,
    /// Write the mesh in text format to this file.
    #[arg(long)]
    write: Option<PathBuf>,
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = &args.mesh {
        cfg.mesh = MeshSource::parse(m)?;
        if matches!(cfg.mesh, MeshSource::File(_)) {
            // command-line paths are relative to the working directory
            cfg.mesh = MeshSource::File(std::env::current_dir()?.join(m));
        }
    }
    if let Some(v) = args.variant {
        cfg.variant = v;
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    cfg.vtk |= args.vtk;
    Ok(cfg)
}

fn steady(args: &RunArgs) -> Result<bool> {
    let cfg = load_config(args)?;
    let problem = cfg.build_problem(0.0)?;
    let mut state = problem.zero_state();
    let report = problem.newton_solve(&mut state)?;
    let mb = problem.mass_balance(&state);
    println!(
        "converged in {} iterations, residual {:.3e}, mass balance {:.3e} (element) {:.3e} (global)",
        report.iterations,
        report.final_residual(),
        mb.element_max,
        mb.global
    );
    export_fields(problem.mesh(), &problem.recover_fields(&state), &cfg.output_dir, "", cfg.vtk)?;
    report.save_csv(cfg.output_dir.join("log.csv"))?;
    println!("wrote results to {}", cfg.output_dir.display());
    Ok(true)
}

fn march(args: &MarchArgs) -> Result<bool> {
    let mut cfg = load_config(&args.run)?;
    if let Some(dt) = args.dt {
        cfg.dt = dt;
    }
    if let Some(s) = args.steps {
        cfg.steps = s;
    }
    cfg.validate()?;
    let mut problem = cfg.build_problem(0.0)?;
    let schedule = cfg.schedule(problem.mesh())?;
    let mesh = problem.mesh_arc().clone();
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir)?;
    let (f, g) = (cfg.source.clone(), cfg.boundary.clone());
    let every = cfg.every;
    let traj = run(
        &mut problem,
        &schedule,
        |x, t| f.at(x, t),
        |x, t| g.at(x, t),
        |state| {
            let last = state.step == schedule.steps;
            if last || (every > 0 && state.step % every == 0) {
                let fields = hybrid_mixed::globalsys::recover_fields(&mesh, state);
                export_fields(&mesh, &fields, &dir, &format!("_{:04}", state.step), cfg.vtk)?;
            }
            Ok(())
        },
    )?;
    let mut log = std::io::BufWriter::new(std::fs::File::create(dir.join("log.csv"))?);
    writeln!(log, "step,iteration,residual,damping")?;
    for (k, rep) in traj.reports.iter().enumerate() {
        for (i, r) in rep.residuals.iter().enumerate() {
            let t = if i == 0 { 0.0 } else { rep.steps[i - 1] };
            writeln!(log, "{},{i},{r:.16e},{t:.16e}", k + 1)?;
        }
    }
    log.flush()?;
    let mut budget = std::io::BufWriter::new(std::fs::File::create(dir.join("budget.csv"))?);
    writeln!(budget, "step,time,mass,outflow,source,relative_defect")?;
    for b in &traj.budget {
        writeln!(
            budget,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            b.step, b.time, b.mass, b.outflow, b.source, b.relative_defect
        )?;
    }
    budget.flush()?;
    let iters: Vec<usize> = traj.reports.iter().map(|r| r.iterations).collect();
    println!(
        "{} steps, Newton iterations per step {:?}, max mass budget defect {:.3e}",
        schedule.steps,
        iters,
        traj.max_budget_defect()
    );
    println!("wrote results to {}", dir.display());
    Ok(true)
}

fn verify(args: &RunArgs) -> Result<bool> {
    let cfg = load_config(args)?;
    let problem = cfg.build_problem(0.0)?;
    let mut state = problem.zero_state();
    let report = problem.newton_solve(&mut state)?;
    println!("converged in {} iterations", report.iterations);
    let t = verify_theorem22(&problem, &state);
    let l = verify_lemma32(&problem, &state)?;
    print!("{t}{l}");
    std::fs::create_dir_all(&cfg.output_dir)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(cfg.output_dir.join("verify.csv"))?);
    t.write_csv(&mut out)?;
    for c in &l.checks {
        writeln!(out, "{},{:.16e},{:.16e},{}", c.name, c.value, c.tolerance, c.passed())?;
    }
    out.flush()?;
    let ok = t.passed() && l.passed();
    println!("{}", if ok { "all checks passed" } else { "verification FAILED" });
    Ok(ok)
}

fn mms(args: &MmsArgs) -> Result<bool> {
    if args.levels < 2 {
        return Err(hybrid_mixed::Error::InvalidParameter("mms needs at least 2 levels".into()));
    }
    let levels: Vec<usize> = (0..args.levels).map(|i| 4 << i).collect();
    let cases: Vec<(&str, MmsCase)> = match args.case.as_str() {
        "darcy" => vec![("darcy", MmsCase::darcy())],
        "forchheimer" => vec![("forchheimer", MmsCase::forchheimer())],
        "both" => vec![("darcy", MmsCase::darcy()), ("forchheimer", MmsCase::forchheimer())],
        other => {
            return Err(hybrid_mixed::Error::InvalidParameter(format!(
                "unknown case '{other}' (expected darcy, forchheimer or both)"
            )))
        }
    };
    for (name, case) in cases {
        let case = MmsCase {
            variant: args.variant,
            ..case
        };
        let table = mms_study(&case, &levels)?;
        println!("{name} (beta = {}):", case.beta);
        print!("{table}");
        println!("fitted pressure order {:.3}", table.overall_pressure_order());
        if let Some(dir) = &args.out {
            std::fs::create_dir_all(dir)?;
            let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("mms_{name}.csv")))?);
            table.write_csv(&mut f)?;
            f.flush()?;
        }
    }
    Ok(true)
}

fn mesh_info(args: &MeshInfoArgs) -> Result<bool> {
    let cfg = RunConfig {
        mesh: MeshSource::parse(&args.mesh)?,
        ..RunConfig::default()
    };
    let mesh = cfg.build_mesh()?;
    let area: f64 = (0..mesh.num_triangles()).map(|k| mesh.area(k)).sum();
    println!("vertices        {}", mesh.num_vertices());
    println!("triangles       {}", mesh.num_triangles());
    println!("edges           {}", mesh.num_edges());
    println!("interior edges  {}", mesh.interior_edges().len());
    println!("boundary edges  {}", mesh.boundary_edges().len());
    println!("mesh size h     {:.6e}", mesh.mesh_size());
    println!("total area      {area:.6e}");
    if let Some(p) = &args.write {
        std::fs::write(p, mesh.to_text())?;
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Steady(a) => steady(a),
        Command::March(a) => march(a),
        Command::Verify(a) => verify(a),
        Command::Mms(a) => mms(a),
        Command::MeshInfo(a) => mesh_info(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
