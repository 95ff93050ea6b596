//! Runs, convergence studies and long-time studies built from the library
//! pieces.

use std::thread;

use thiserror::Error;

use crate::diagnostics::{
    decay_rate_fit, error_linf_l1, observed_order, steady_state_distance, DecayFit, DiagnosticsError, Recorder,
    RunMetadata, RunReport, Trajectory,
};
use crate::mesh::{validate_admissibility, Mesh, MeshError, Tolerances};
use crate::physics::{DiscreteData, PhysicsError, ProblemSpec};
use crate::solver::{time_march, NewtonConfig, Schedule, SolverError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("invalid study: {0}")]
    Invalid(String),
}

pub fn metadata(mesh: &Mesh, epsilon: f64, config_hash: Option<String>) -> RunMetadata {
    let quality = validate_admissibility(mesh, &Tolerances::default()).quality;
    RunMetadata {
        n_cells: mesh.n_cells(),
        mesh_size: quality.size,
        regularity: quality.regularity,
        epsilon,
        config_hash,
    }
}

/// Which states a run keeps in its trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Keep {
    None,
    All,
    /// States at times up to and including this one.
    Until(f64),
}

/// Marches `data` on `mesh` from its discretized initial density.
pub fn run(
    mesh: &Mesh,
    data: &DiscreteData,
    schedule: &Schedule,
    newton: &NewtonConfig,
    keep: Keep,
    config_hash: Option<String>,
) -> Result<RunReport, ExperimentError> {
    let rho0 = &data.rho0_cell;
    let mut recorder = Recorder::new(rho0, mesh, data, metadata(mesh, data.epsilon, config_hash));
    recorder = match keep {
        Keep::None => recorder,
        Keep::All => recorder.keep_states(rho0, |_| true),
        Keep::Until(t) => recorder.keep_states(rho0, move |s| s <= t * (1.0 + 1e-12)),
    };
    time_march(rho0, mesh, data, schedule, newton, &mut [&mut recorder])?;
    Ok(recorder.finish())
}

/// Runs the closures on scoped threads and collects their results in order.
fn parallel<T: Send>(jobs: Vec<Box<dyn FnOnce() -> T + Send + '_>>) -> Vec<T> {
    thread::scope(|s| {
        let handles: Vec<_> = jobs.into_iter().map(|job| s.spawn(job)).collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub epsilon: f64,
    /// `(number of cells, relative L^∞(L^1) error)`.
    pub rows: Vec<(usize, f64)>,
    /// Least-squares order in the cell size; `None` with fewer than two
    /// nonzero errors.
    pub order: Option<f64>,
    /// Extreme cell values over every run of the study, reference included.
    pub min_density: f64,
    pub max_density: f64,
}

/// Spatial convergence on uniform grids of `interval`: each cell count is
/// compared with a reference run on `reference_cells`, all with the same
/// time grid.
pub fn convergence_study(
    problem: impl Fn(f64) -> ProblemSpec + Sync,
    interval: [f64; 2],
    epsilons: &[f64],
    cells: &[usize],
    reference_cells: usize,
    schedule: &Schedule,
    newton: &NewtonConfig,
) -> Result<Vec<ConvergenceTable>, ExperimentError> {
    if cells.is_empty() || epsilons.is_empty() {
        return Err(ExperimentError::Invalid("need at least one cell count and one epsilon".into()));
    }
    if let Some(n) = cells.iter().find(|&&n| n == 0 || !reference_cells.is_multiple_of(n)) {
        return Err(ExperimentError::Invalid(format!(
            "{n} cells does not divide the reference grid of {reference_cells} cells"
        )));
    }
    let problem = &problem;
    let mut jobs: Vec<Box<dyn FnOnce() -> Result<(f64, usize, RunReport, Mesh), ExperimentError> + Send + '_>> =
        Vec::new();
    for &eps in epsilons {
        for &n in cells.iter().chain(std::iter::once(&reference_cells)) {
            jobs.push(Box::new(move || {
                let mesh = Mesh::uniform_1d(n, interval)?;
                let data = problem(eps).discretize(&mesh)?;
                let report = run(&mesh, &data, schedule, newton, Keep::All, None)?;
                Ok((eps, n, report, mesh))
            }));
        }
    }
    let results = parallel(jobs).into_iter().collect::<Result<Vec<_>, _>>()?;

    let per_eps = cells.len() + 1;
    let mut tables = Vec::new();
    for (i, &eps) in epsilons.iter().enumerate() {
        let group = &results[i * per_eps..(i + 1) * per_eps];
        let (_, _, reference, fine) = &group[cells.len()];
        let ref_traj = reference.trajectory.as_ref().expect("trajectory kept");
        let mut rows = Vec::new();
        let (mut lo, mut hi) = (reference.min_density, reference.max_density);
        for (_, n, report, mesh) in &group[..cells.len()] {
            let traj = report.trajectory.as_ref().expect("trajectory kept");
            rows.push((*n, error_linf_l1(traj, ref_traj, mesh, fine)?));
            lo = lo.min(report.min_density);
            hi = hi.max(report.max_density);
        }
        let nonzero: Vec<_> = rows.iter().filter(|r| r.1 > 0.0).collect();
        let order = if nonzero.len() >= 2 {
            let errs: Vec<f64> = nonzero.iter().map(|r| r.1).collect();
            let sizes: Vec<f64> = nonzero.iter().map(|r| (interval[1] - interval[0]) / r.0 as f64).collect();
            Some(observed_order(&errs, &sizes)?)
        } else {
            None
        };
        tables.push(ConvergenceTable { epsilon: eps, rows, order, min_density: lo, max_density: hi });
    }
    Ok(tables)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalConvergence {
    /// `(τ, relative L^∞(L^1) error)`.
    pub rows: Vec<(f64, f64)>,
    pub order: f64,
}

/// Temporal convergence on a fixed mesh: runs with each `tau` are compared
/// with a run at `reference_tau` on the common time grid.
pub fn temporal_convergence_study(
    mesh: &Mesh,
    data: &DiscreteData,
    final_time: f64,
    taus: &[f64],
    reference_tau: f64,
    newton: &NewtonConfig,
) -> Result<TemporalConvergence, ExperimentError> {
    for &tau in taus {
        let ratio = tau / reference_tau;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(ExperimentError::Invalid(format!(
                "time step {tau} is not a multiple of the reference step {reference_tau}"
            )));
        }
    }
    let coarsest = taus.iter().copied().fold(reference_tau, f64::max);
    let on_coarse_grid = move |t: f64| {
        let q = t / coarsest;
        (q - q.round()).abs() <= 1e-9 * q.max(1.0)
    };
    let mut jobs: Vec<Box<dyn FnOnce() -> Result<Trajectory, ExperimentError> + Send + '_>> = Vec::new();
    for &tau in taus.iter().chain(std::iter::once(&reference_tau)) {
        jobs.push(Box::new(move || {
            let rho0 = &data.rho0_cell;
            let mut recorder =
                Recorder::new(rho0, mesh, data, metadata(mesh, data.epsilon, None)).keep_states(rho0, on_coarse_grid);
            time_march(rho0, mesh, data, &Schedule::uniform(tau, final_time), newton, &mut [&mut recorder])?;
            Ok(recorder.finish().trajectory.expect("trajectory kept"))
        }));
    }
    let trajs = parallel(jobs).into_iter().collect::<Result<Vec<_>, _>>()?;
    let reference = &trajs[taus.len()];
    let mut rows = Vec::new();
    for (tau, traj) in taus.iter().zip(&trajs) {
        rows.push((*tau, error_linf_l1(traj, reference, mesh, mesh)?));
    }
    let errs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let order = observed_order(&errs, taus)?;
    Ok(TemporalConvergence { rows, order })
}

/// Steady state the long-time distance is measured against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SteadyTarget {
    /// The discrete thermal equilibrium at this level.
    Equilibrium(f64),
    /// The state at the end of the schedule.
    FinalState,
}

#[derive(Debug, Clone)]
pub struct SteadyStateResult {
    /// `(t, |ρ(t) - ρ^∞|_{L²})` over the first schedule phase, `t = 0` included.
    pub series: Vec<(f64, f64)>,
    pub steady: Vec<f64>,
    pub fit: Option<DecayFit>,
    pub report: RunReport,
}

/// Long-time study: runs the schedule, measures the distance to the steady
/// state over the first phase and fits an exponential rate over `window`.
pub fn steady_state_study(
    mesh: &Mesh,
    data: &DiscreteData,
    schedule: &Schedule,
    target: SteadyTarget,
    newton: &NewtonConfig,
    window: Option<(f64, f64)>,
    config_hash: Option<String>,
) -> Result<SteadyStateResult, ExperimentError> {
    let phase_end = schedule.phases.first().map_or(0.0, |p| p.until);
    let report = run(mesh, data, schedule, newton, Keep::Until(phase_end), config_hash)?;
    let traj = report.trajectory.as_ref().expect("trajectory kept");
    let steady = match target {
        SteadyTarget::Equilibrium(level) => data.equilibrium_density(level),
        SteadyTarget::FinalState => report.final_state.clone(),
    };
    let series = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, s)| Ok((*t, steady_state_distance(s, &steady, mesh)?)))
        .collect::<Result<Vec<_>, DiagnosticsError>>()?;
    let fit = window.map(|w| decay_rate_fit(&series, w)).transpose()?;
    Ok(SteadyStateResult { series, steady, fit, report })
}
