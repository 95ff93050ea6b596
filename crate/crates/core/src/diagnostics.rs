//! Error norms, convergence orders, steady-state distances, run records and
//! their CSV serialization.

use std::io::{self, Write};

use thiserror::Error;

use crate::mesh::Mesh;
use crate::physics::DiscreteData;
use crate::scheme::{EnergyLedger, EnergyRecord};
use crate::solver::{SolverError, StepObserver, StepRecord};

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("meshes are not nested: {0}")]
    NonNestedMeshes(String),
    #[error("time grids differ: {0}")]
    TimeGridMismatch(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("no samples in the window [{0}, {1}]")]
    EmptyWindow(f64, f64),
    #[error("non-positive distance {distance} at t = {time}")]
    NonPositiveDistance { time: f64, distance: f64 },
}

/// States recorded at a sequence of times.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(t0: f64, rho0: &[f64]) -> Self {
        Trajectory { times: vec![t0], states: vec![rho0.to_vec()] }
    }

    pub fn push(&mut self, t: f64, rho: &[f64]) {
        self.times.push(t);
        self.states.push(rho.to_vec());
    }
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Conservative projection of a fine 1D state onto a coarse nested grid.
fn project(fine: &[f64], fine_mesh: &Mesh, ratio: usize) -> Vec<f64> {
    if ratio == 1 {
        return fine.to_vec();
    }
    fine.chunks(ratio)
        .zip(fine_mesh.measures().chunks(ratio))
        .map(|(v, m)| v.iter().zip(m).map(|(a, b)| a * b).sum::<f64>() / m.iter().sum::<f64>())
        .collect()
}

fn nesting_ratio(coarse: &Mesh, fine: &Mesh) -> Result<usize, DiagnosticsError> {
    if coarse.dimension() != 1 || fine.dimension() != 1 {
        return Err(DiagnosticsError::NonNestedMeshes("only uniform 1D grids are supported".into()));
    }
    let (nc, nf) = (coarse.n_cells(), fine.n_cells());
    if nf % nc != 0 {
        return Err(DiagnosticsError::NonNestedMeshes(format!("{nf} cells is not a multiple of {nc}")));
    }
    let ends = |m: &Mesh| {
        let p = m.cell_polygons();
        (p[0][0][0], p[p.len() - 1][1][0])
    };
    let ((a0, b0), (a1, b1)) = (ends(coarse), ends(fine));
    let tol = 1e-12 * (b0 - a0).abs();
    if (a0 - a1).abs() > tol || (b0 - b1).abs() > tol {
        return Err(DiagnosticsError::NonNestedMeshes(format!("intervals [{a0}, {b0}] and [{a1}, {b1}] differ")));
    }
    let ratio = nf / nc;
    for (k, cell) in coarse.cell_polygons().iter().enumerate() {
        let f = &fine.cell_polygons()[k * ratio];
        if (cell[0][0] - f[0][0]).abs() > tol {
            return Err(DiagnosticsError::NonNestedMeshes(format!("coarse cell {k} is not a union of fine cells")));
        }
    }
    Ok(ratio)
}

/// Relative `L^∞(L^1)` error
/// `max_n |P ρ_ref^n - ρ_h^n|_{L^1} / max_n |P ρ_ref^n|_{L^1}` over the
/// times of `run`. The reference may be recorded on a finer time grid that
/// contains the run's times.
pub fn error_linf_l1(
    run: &Trajectory,
    reference: &Trajectory,
    coarse: &Mesh,
    fine: &Mesh,
) -> Result<f64, DiagnosticsError> {
    let ratio = nesting_ratio(coarse, fine)?;
    let mut j = 0;
    let (mut err, mut norm) = (0.0f64, 0.0f64);
    for (t, state) in run.times.iter().zip(&run.states) {
        while j < reference.times.len() && !same_time(reference.times[j], *t) && reference.times[j] < *t {
            j += 1;
        }
        if j == reference.times.len() || !same_time(reference.times[j], *t) {
            return Err(DiagnosticsError::TimeGridMismatch(format!("reference has no state at t = {t}")));
        }
        let r = &reference.states[j];
        if r.len() != fine.n_cells() || state.len() != coarse.n_cells() {
            return Err(DiagnosticsError::DimensionMismatch { expected: coarse.n_cells(), found: state.len() });
        }
        let p = project(r, fine, ratio);
        let m = coarse.measures();
        err = err.max(p.iter().zip(state).zip(m).map(|((a, b), w)| w * (a - b).abs()).sum());
        norm = norm.max(p.iter().zip(m).map(|(a, w)| w * a.abs()).sum());
    }
    if run.times.is_empty() {
        return Err(DiagnosticsError::TimeGridMismatch("empty trajectory".into()));
    }
    if norm == 0.0 {
        return Err(DiagnosticsError::Degenerate("reference has zero norm".into()));
    }
    Ok(err / norm)
}

/// Least-squares fit `y = a + b x`, returning `(a, b, R²)`.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (intercept, slope, r2)
}

/// Least-squares slope of `log(error)` against `log(size)`.
pub fn observed_order(errors: &[f64], sizes: &[f64]) -> Result<f64, DiagnosticsError> {
    if errors.len() != sizes.len() {
        return Err(DiagnosticsError::DimensionMismatch { expected: sizes.len(), found: errors.len() });
    }
    if errors.len() < 2 {
        return Err(DiagnosticsError::Degenerate("need at least two samples".into()));
    }
    if let Some(e) = errors.iter().chain(sizes).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(DiagnosticsError::Degenerate(format!("non-positive value {e}")));
    }
    let lx: Vec<f64> = sizes.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    if lx.iter().all(|v| *v == lx[0]) {
        return Err(DiagnosticsError::Degenerate("all sizes are equal".into()));
    }
    Ok(linear_fit(&lx, &ly).1)
}

/// `(Σ_K m_K (ρ_K - ρ^∞_K)²)^{1/2}`.
pub fn steady_state_distance(state: &[f64], steady: &[f64], mesh: &Mesh) -> Result<f64, DiagnosticsError> {
    for v in [state, steady] {
        if v.len() != mesh.n_cells() {
            return Err(DiagnosticsError::DimensionMismatch { expected: mesh.n_cells(), found: v.len() });
        }
    }
    Ok(mesh.measures().iter().zip(state.iter().zip(steady)).map(|(m, (a, b))| m * (a - b).powi(2)).sum::<f64>().sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Slope of `log(distance)` in time.
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Fits `log(distance) ≈ intercept + rate t` over samples with `t` in the
/// closed window.
pub fn decay_rate_fit(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit, DiagnosticsError> {
    let inside: Vec<(f64, f64)> = series.iter().copied().filter(|(t, _)| *t >= window.0 && *t <= window.1).collect();
    if inside.is_empty() {
        return Err(DiagnosticsError::EmptyWindow(window.0, window.1));
    }
    if let Some(&(time, distance)) = inside.iter().find(|(_, d)| !(*d > 0.0)) {
        return Err(DiagnosticsError::NonPositiveDistance { time, distance });
    }
    let t: Vec<f64> = inside.iter().map(|p| p.0).collect();
    let y: Vec<f64> = inside.iter().map(|p| p.1.ln()).collect();
    let (intercept, rate, r_squared) = linear_fit(&t, &y);
    Ok(DecayFit { rate, intercept, r_squared, samples: inside.len() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetadata {
    pub n_cells: usize,
    pub mesh_size: f64,
    pub regularity: f64,
    pub epsilon: f64,
    pub config_hash: Option<String>,
}

/// Everything recorded during a run: energies, Newton counts, density bounds
/// and optionally the states themselves.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub metadata: RunMetadata,
    pub energy: EnergyLedger,
    pub newton: Vec<(f64, usize)>,
    /// Extreme cell values over all accepted steps (initial state excluded).
    pub min_density: f64,
    pub max_density: f64,
    pub trajectory: Option<Trajectory>,
    /// State after the last accepted step.
    pub final_state: Vec<f64>,
}

/// Observer that builds a [`RunReport`].
pub struct Recorder<'a> {
    mesh: &'a Mesh,
    data: &'a DiscreteData,
    pub report: RunReport,
    keep_states: Option<Box<dyn Fn(f64) -> bool + 'a>>,
}

impl<'a> Recorder<'a> {
    pub fn new(rho0: &[f64], mesh: &'a Mesh, data: &'a DiscreteData, metadata: RunMetadata) -> Self {
        Recorder {
            mesh,
            data,
            report: RunReport {
                metadata,
                energy: EnergyLedger::new(rho0, mesh, data, 0.0),
                newton: Vec::new(),
                min_density: f64::INFINITY,
                max_density: f64::NEG_INFINITY,
                trajectory: None,
                final_state: rho0.to_vec(),
            },
            keep_states: None,
        }
    }

    /// Also records the states at the initial time and at every step time
    /// accepted by `keep`.
    pub fn keep_states(mut self, rho0: &[f64], keep: impl Fn(f64) -> bool + 'a) -> Self {
        self.report.trajectory = Some(Trajectory::new(0.0, rho0));
        self.keep_states = Some(Box::new(keep));
        self
    }

    pub fn finish(self) -> RunReport {
        self.report
    }
}

impl StepObserver for Recorder<'_> {
    fn on_step(&mut self, step: &StepRecord<'_>) -> Result<(), SolverError> {
        let r = &mut self.report;
        r.energy.step(step.time, step.tau, step.rho, step.flux, self.mesh, self.data)?;
        r.newton.push((step.time, step.stats.iters));
        r.final_state.copy_from_slice(step.rho);
        for &v in step.rho {
            r.min_density = r.min_density.min(v);
            r.max_density = r.max_density.max(v);
        }
        if let (Some(keep), Some(traj)) = (&self.keep_states, &mut r.trajectory) {
            if keep(step.time) {
                traj.push(step.time, step.rho);
            }
        }
        Ok(())
    }
}

fn header(out: &mut impl Write, hash: Option<&str>, columns: &str) -> io::Result<()> {
    if let Some(h) = hash {
        writeln!(out, "# config={h}")?;
    }
    writeln!(out, "{columns}")
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_energy_csv(out: &mut impl Write, records: &[EnergyRecord], hash: Option<&str>) -> io::Result<()> {
    header(out, hash, "time,NRG_tot,NRG_int,D_primal,D_dual,ineq_residual")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            num(r.time),
            num(r.total),
            num(r.bulk),
            num(r.d_primal),
            num(r.d_dual),
            num(r.ineq_residual)
        )?;
    }
    Ok(())
}

pub fn write_newton_csv(out: &mut impl Write, newton: &[(f64, usize)], hash: Option<&str>) -> io::Result<()> {
    header(out, hash, "time,iterations")?;
    for (t, n) in newton {
        writeln!(out, "{},{n}", num(*t))?;
    }
    Ok(())
}

pub fn write_error_csv(out: &mut impl Write, rows: &[(usize, f64)], hash: Option<&str>) -> io::Result<()> {
    header(out, hash, "NbCells,errLinfL1")?;
    for (n, e) in rows {
        writeln!(out, "{n},{}", num(*e))?;
    }
    Ok(())
}

pub fn write_longtime_csv(out: &mut impl Write, rows: &[(f64, f64)], hash: Option<&str>) -> io::Result<()> {
    header(out, hash, "time,errL2")?;
    for (t, e) in rows {
        writeln!(out, "{},{}", num(*t), num(*e))?;
    }
    Ok(())
}

pub fn write_snapshot_csv(out: &mut impl Write, traj: &Trajectory, hash: Option<&str>) -> io::Result<()> {
    header(out, hash, "time,cell_index,rho")?;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        for (k, r) in s.iter().enumerate() {
            writeln!(out, "{},{k},{}", num(*t), num(*r))?;
        }
    }
    Ok(())
}
