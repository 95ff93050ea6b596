//! The subcommands.

use std::path::Path;

use sqra::diagnostics::{
    decay_rate_fit, write_energy_csv, write_error_csv, write_longtime_csv, write_newton_csv, write_snapshot_csv,
    Recorder, RunReport,
};
use sqra::experiments::{convergence_study, metadata, steady_state_study, SteadyTarget};
use sqra::mesh::{validate_admissibility, Mesh, Tolerances, Triangulation};
use sqra::solver::time_march;

use crate::config::{Command, Config, MeshConfig, TargetKind};
use crate::error::CliError;
use crate::output::{display, OutputDir};

fn on_grid(t: f64, grid: &[f64]) -> bool {
    grid.iter().any(|g| (g - t).abs() <= 1e-9 * t.abs().max(1.0))
}

fn write_run_outputs(out: &OutputDir, report: &RunReport, hash: &str) -> Result<(), CliError> {
    out.write("energy.csv", |w| write_energy_csv(w, &report.energy.records, Some(hash)))?;
    out.write("newton.csv", |w| write_newton_csv(w, &report.newton, Some(hash)))?;
    Ok(())
}

fn summarize(report: &RunReport) {
    let e = &report.energy.records;
    let (first, last) = (e[0], e[e.len() - 1]);
    let iters: usize = report.newton.iter().map(|n| n.1).sum();
    println!("cells            {}", report.metadata.n_cells);
    println!("steps            {} (final time {})", report.newton.len(), last.time);
    println!("newton iters     {iters}");
    println!("F_tot            {:.10e} -> {:.10e}", first.total, last.total);
    if !report.newton.is_empty() {
        println!("density range    [{:.6e}, {:.6e}]", report.min_density, report.max_density);
    }
}

pub fn run(cfg: &Config, out: &OutputDir, hash: &str) -> Result<(), CliError> {
    let mesh = cfg.build_mesh()?;
    let eps = cfg.epsilon.expect("resolved");
    let data = cfg.problem(eps)?.discretize(&mesh)?;
    let schedule = cfg.schedule();
    let snapshots = cfg.run.as_ref().map(|r| r.snapshots.clone()).unwrap_or_default();
    let mut grid = schedule.times();
    grid.insert(0, 0.0);
    if let Some(t) = snapshots.iter().find(|t| !on_grid(**t, &grid)) {
        return Err(CliError::Usage(format!("snapshot time {t} is not a step time of the schedule")));
    }

    let rho0 = &data.rho0_cell;
    let mut recorder = Recorder::new(rho0, &mesh, &data, metadata(&mesh, eps, Some(hash.to_string())));
    if !snapshots.is_empty() {
        let times = snapshots.clone();
        recorder = recorder.keep_states(rho0, move |t| on_grid(t, &times));
    }
    time_march(rho0, &mesh, &data, &schedule, &cfg.newton(), &mut [&mut recorder])
        .map_err(|e| CliError::Failure(e.to_string()))?;
    let report = recorder.finish();

    write_run_outputs(out, &report, hash)?;
    if let Some(traj) = &report.trajectory {
        let mut traj = traj.clone();
        if !on_grid(0.0, &snapshots) {
            traj.times.remove(0);
            traj.states.remove(0);
        }
        out.write("snapshots.csv", |w| write_snapshot_csv(w, &traj, Some(hash)))?;
    }
    summarize(&report);
    Ok(())
}

fn eps_label(eps: f64) -> String {
    format!("{eps}")
}

pub fn convergence(cfg: &Config, out: &OutputDir, hash: &str) -> Result<(), CliError> {
    let c = cfg.convergence.as_ref().expect("resolved");
    let interval = match cfg.mesh.as_ref().expect("resolved") {
        MeshConfig::Uniform1d { interval, .. } => *interval,
        _ => unreachable!("validated to be a uniform grid"),
    };
    let epsilons = c.epsilons.clone().expect("resolved");
    let tables = convergence_study(
        |eps| cfg.problem(eps).expect("validated"),
        interval,
        &epsilons,
        c.cells.as_ref().expect("resolved"),
        c.reference_cells.expect("resolved"),
        &cfg.schedule(),
        &cfg.newton(),
    )?;
    for t in &tables {
        let name = format!("convergence_eps{}.csv", eps_label(t.epsilon));
        out.write(&name, |w| write_error_csv(w, &t.rows, Some(hash)))?;
        println!("epsilon = {}", t.epsilon);
        println!("  NbCells  errLinfL1");
        for (n, e) in &t.rows {
            println!("  {n:>7}  {e:.6e}");
        }
        match t.order {
            Some(o) => println!("  observed order {o:.4}"),
            None => println!("  observed order unavailable"),
        }
        println!("  density range [{:.6e}, {:.6e}]", t.min_density, t.max_density);
    }
    Ok(())
}

pub fn steady_state(cfg: &Config, out: &OutputDir, hash: &str) -> Result<(), CliError> {
    let mesh = cfg.build_mesh()?;
    let eps = cfg.epsilon.expect("resolved");
    let data = cfg.problem(eps)?.discretize(&mesh)?;
    let s = cfg.steady_state.as_ref().expect("resolved");
    let target = match s.target.expect("resolved") {
        TargetKind::Equilibrium => SteadyTarget::Equilibrium(s.level.expect("resolved")),
        TargetKind::FinalState => SteadyTarget::FinalState,
    };
    let result =
        steady_state_study(&mesh, &data, &cfg.schedule(), target, &cfg.newton(), None, Some(hash.to_string()))?;
    out.write("longtime.csv", |w| write_longtime_csv(w, &result.series, Some(hash)))?;
    write_run_outputs(out, &result.report, hash)?;
    summarize(&result.report);
    let window = s.window.expect("resolved");
    match decay_rate_fit(&result.series, (window[0], window[1])) {
        Ok(fit) => println!(
            "decay fit on [{}, {}]: rate {:.6e}, R^2 {:.6}, {} samples",
            window[0], window[1], fit.rate, fit.r_squared, fit.samples
        ),
        Err(e) => println!("decay fit on [{}, {}] unavailable: {e}", window[0], window[1]),
    }
    Ok(())
}

pub fn validate_mesh(path: &Path) -> Result<(), CliError> {
    let tri = Triangulation::read(path).map_err(|e| CliError::mesh_input(path, e))?;
    let mesh = Mesh::assemble_triangulation(&tri).map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))?;
    let report = validate_admissibility(&mesh, &Tolerances::default());
    let q = report.quality;
    println!("mesh             {}", display(path));
    println!("cells            {}", mesh.n_cells());
    println!("size delta_T     {:.6e}", q.size);
    println!("regularity zeta_T {:.6e}", q.regularity);
    println!("min d_sigma      {:.6e}", q.min_face_distance);
    println!("orthogonality    {:.3e} rad", q.orthogonality_defect);
    println!("identity residual {:.3e}", report.identity_residual);
    if report.is_admissible() {
        println!("admissible");
        Ok(())
    } else {
        for v in &report.violations {
            println!("violation: {v}");
        }
        Err(CliError::Failure(format!("mesh is not admissible ({} violations)", report.violations.len())))
    }
}

pub fn execute(command: Command, cfg: &Config) -> Result<(), CliError> {
    let hash = cfg.hash();
    let out = OutputDir::create(cfg.out_dir())?;
    out.write_text("config.toml", &cfg.to_toml())?;
    println!("config hash      {hash}");
    println!("output           {}", display(&cfg.out_dir()));
    match command {
        Command::Run => run(cfg, &out, &hash),
        Command::Convergence => convergence(cfg, &out, &hash),
        Command::SteadyState => steady_state(cfg, &out, &hash),
    }
}
