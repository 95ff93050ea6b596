//! Newton's method for the implicit Euler step and time marching.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::linalg::{linear_solve, LinalgError};
use crate::mesh::Mesh;
use crate::physics::DiscreteData;
use crate::scheme::{fluxes, jacobian, residual, FluxField, SchemeError};

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("Newton did not converge in {iters} iterations (last relative increment {increment:e})")]
    NonConvergence { iters: usize, increment: f64 },
    #[error(transparent)]
    Linear(#[from] LinalgError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("step {step} (t = {time}): {source}")]
    AtStep {
        step: usize,
        time: f64,
        #[source]
        source: Box<SolverError>,
    },
    #[error("observer aborted the run: {0}")]
    Observer(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// Stop when `|δρ|_inf / |ρ^{ℓ+1}|_inf` falls below this.
    pub rel_tol: f64,
    pub max_iters: usize,
    /// Iterates are projected onto `[clip, 1 - clip]`.
    pub clip: f64,
    /// Retry a failed step as two half steps, down to `τ/2^10`.
    pub step_halving: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { rel_tol: 1e-12, max_iters: 50, clip: 1e-14, step_halving: false }
    }
}

pub const MAX_HALVINGS: u32 = 10;

impl NewtonConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(SolverError::InvalidConfig(format!("rel_tol = {} not in (0, 1)", self.rel_tol)));
        }
        if self.max_iters == 0 {
            return Err(SolverError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.clip > 0.0 && self.clip < 1e-6) {
            return Err(SolverError::InvalidConfig(format!("clip = {} not in (0, 1e-6)", self.clip)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    /// Newton iterations, summed over substeps.
    pub iters: usize,
    pub final_increment: f64,
    /// Number of sparse factorizations performed.
    pub linear_solves: usize,
    /// 1 unless the step was split by halving.
    pub substeps: usize,
    /// Whether the projection onto `[clip, 1 - clip]` changed the final iterate.
    pub clip_active: bool,
    pub wall_time: Duration,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Plain Newton for one step of length `tau`, starting from the projection of
/// `rho_old`.
fn newton_once(
    rho_old: &[f64],
    mesh: &Mesh,
    data: &DiscreteData,
    tau: f64,
    cfg: &NewtonConfig,
) -> Result<(Vec<f64>, StepStats), SolverError> {
    let start = Instant::now();
    let (lo, hi) = (cfg.clip, 1.0 - cfg.clip);
    let mut rho: Vec<f64> = rho_old.iter().map(|r| r.clamp(lo, hi)).collect();
    let mut increment = f64::INFINITY;
    for iter in 1..=cfg.max_iters {
        let h = residual(&rho, rho_old, mesh, data, tau)?;
        let j = jacobian(&rho, mesh, data, tau)?;
        let rhs: Vec<f64> = h.iter().map(|x| -x).collect();
        let delta = linear_solve(&j, &rhs)?;
        if delta.iter().any(|d| !d.is_finite()) {
            return Err(LinalgError::LinearSolveFailure("non-finite Newton increment".into()).into());
        }
        let mut clip_active = false;
        for (r, d) in rho.iter_mut().zip(&delta) {
            let raw = *r + d;
            *r = raw.clamp(lo, hi);
            clip_active |= *r != raw;
        }
        increment = inf_norm(&delta) / inf_norm(&rho);
        log::trace!("newton iteration {iter}: relative increment {increment:e}");
        if increment <= cfg.rel_tol {
            return Ok((
                rho,
                StepStats {
                    iters: iter,
                    final_increment: increment,
                    linear_solves: iter,
                    substeps: 1,
                    clip_active,
                    wall_time: start.elapsed(),
                },
            ));
        }
    }
    Err(SolverError::NonConvergence { iters: cfg.max_iters, increment })
}

/// Advances by `tau`, splitting into halves on non-convergence when enabled.
/// `emit` receives every accepted (sub)step as `(tau, rho_old, rho_new, stats)`.
fn advance(
    rho_old: &[f64],
    mesh: &Mesh,
    data: &DiscreteData,
    tau: f64,
    cfg: &NewtonConfig,
    depth: u32,
    emit: &mut dyn FnMut(f64, &[f64], &[f64], StepStats) -> Result<(), SolverError>,
) -> Result<Vec<f64>, SolverError> {
    match newton_once(rho_old, mesh, data, tau, cfg) {
        Ok((rho, stats)) => {
            emit(tau, rho_old, &rho, stats)?;
            Ok(rho)
        }
        Err(SolverError::NonConvergence { .. }) if cfg.step_halving && depth < MAX_HALVINGS => {
            log::debug!("halving time step {tau:e} (depth {})", depth + 1);
            let mid = advance(rho_old, mesh, data, tau / 2.0, cfg, depth + 1, emit)?;
            advance(&mid, mesh, data, tau / 2.0, cfg, depth + 1, emit)
        }
        Err(e) => Err(e),
    }
}

/// Solves one implicit Euler step. With halving enabled the returned stats
/// aggregate all substeps.
pub fn newton_solve(
    rho_old: &[f64],
    mesh: &Mesh,
    data: &DiscreteData,
    tau: f64,
    cfg: &NewtonConfig,
) -> Result<(Vec<f64>, StepStats), SolverError> {
    cfg.validate()?;
    if !(tau > 0.0) {
        return Err(SolverError::InvalidConfig(format!("time step must be positive, got {tau}")));
    }
    if rho_old.len() != mesh.n_cells() {
        return Err(SchemeError::DimensionMismatch { expected: mesh.n_cells(), found: rho_old.len() }.into());
    }
    let mut total = StepStats::default();
    let rho = advance(rho_old, mesh, data, tau, cfg, 0, &mut |_, _, _, s| {
        total.iters += s.iters;
        total.linear_solves += s.linear_solves;
        total.substeps += 1;
        total.final_increment = s.final_increment;
        total.clip_active = s.clip_active;
        total.wall_time += s.wall_time;
        Ok(())
    })?;
    Ok((rho, total))
}

/// Piecewise-constant time steps: `tau` is used until time `until`; the last
/// step of a phase is shortened to land on `until` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub phases: Vec<Phase>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub tau: f64,
    pub until: f64,
}

impl Schedule {
    pub fn uniform(tau: f64, final_time: f64) -> Self {
        Schedule { phases: vec![Phase { tau, until: final_time }] }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let mut prev = 0.0;
        for p in &self.phases {
            if !(p.tau > 0.0 && p.tau.is_finite()) {
                return Err(SolverError::InvalidConfig(format!("time step must be positive, got {}", p.tau)));
            }
            if !(p.until >= prev) {
                return Err(SolverError::InvalidConfig(format!(
                    "phase end times must be nondecreasing, got {} after {prev}",
                    p.until
                )));
            }
            prev = p.until;
        }
        Ok(())
    }

    pub fn final_time(&self) -> f64 {
        self.phases.last().map_or(0.0, |p| p.until)
    }

    /// The time grid `t_1 < t_2 < ...` after `t = 0`.
    pub fn times(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut t = 0.0;
        for p in &self.phases {
            let start = t;
            let n = ((p.until - start) / p.tau - 1e-9).ceil().max(0.0) as usize;
            for i in 1..=n {
                t = if i == n { p.until } else { start + i as f64 * p.tau };
                out.push(t);
            }
        }
        out
    }
}

/// An accepted time step, as seen by observers.
#[derive(Debug)]
pub struct StepRecord<'a> {
    /// 1-based index of the accepted step.
    pub index: usize,
    pub time: f64,
    pub tau: f64,
    pub rho_old: &'a [f64],
    pub rho: &'a [f64],
    pub flux: &'a FluxField,
    pub stats: &'a StepStats,
}

pub trait StepObserver {
    fn on_step(&mut self, step: &StepRecord<'_>) -> Result<(), SolverError>;
}

impl<F: FnMut(&StepRecord<'_>) -> Result<(), SolverError>> StepObserver for F {
    fn on_step(&mut self, step: &StepRecord<'_>) -> Result<(), SolverError> {
        self(step)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarchOutcome {
    pub rho: Vec<f64>,
    pub time: f64,
    pub steps: usize,
    pub newton_iters: usize,
}

/// Runs the schedule from `rho0`, feeding every accepted step to the
/// observers in order.
pub fn time_march(
    rho0: &[f64],
    mesh: &Mesh,
    data: &DiscreteData,
    schedule: &Schedule,
    cfg: &NewtonConfig,
    observers: &mut [&mut dyn StepObserver],
) -> Result<MarchOutcome, SolverError> {
    cfg.validate()?;
    schedule.validate()?;
    if rho0.len() != mesh.n_cells() {
        return Err(SchemeError::DimensionMismatch { expected: mesh.n_cells(), found: rho0.len() }.into());
    }
    let mut rho = rho0.to_vec();
    let mut t = 0.0;
    let mut steps = 0;
    let mut newton_iters = 0;
    for target in schedule.times() {
        let step_start = t;
        let mut clock = step_start;
        let result = advance(&rho, mesh, data, target - step_start, cfg, 0, &mut |tau, old, new, stats| {
            clock = if (clock + tau - target).abs() <= 1e-12 * target.abs().max(1.0) { target } else { clock + tau };
            steps += 1;
            newton_iters += stats.iters;
            let flux = fluxes(new, mesh, data)?;
            let record =
                StepRecord { index: steps, time: clock, tau, rho_old: old, rho: new, flux: &flux, stats: &stats };
            for obs in observers.iter_mut() {
                obs.on_step(&record)?;
            }
            Ok(())
        });
        rho = result.map_err(|e| SolverError::AtStep { step: steps + 1, time: target, source: Box::new(e) })?;
        t = target;
    }
    Ok(MarchOutcome { rho, time: t, steps, newton_iters })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::staggered_unit_square;
    use crate::physics::{InitialDensity, ProblemSpec, ScalarField};
    use proptest::prelude::*;

    fn spec(eps: f64, rho0: InitialDensity) -> ProblemSpec {
        ProblemSpec {
            phi: ScalarField::affine(1.0, -1.0, 0.0),
            alpha: ScalarField::constant(1.0),
            beta: ScalarField::constant(0.5),
            rho0,
            epsilon: eps,
        }
    }

    fn equilibrium(eps: f64) -> ProblemSpec {
        ProblemSpec {
            phi: ScalarField::affine(1.0, -1.0, 0.0),
            alpha: ScalarField::new(move |x| 1.0 + (-(0.5 - x[0]) / eps).exp()),
            beta: ScalarField::new(move |x| (-(0.5 - x[0]) / eps).exp()),
            rho0: InitialDensity::Equilibrium { level: 0.5 },
            epsilon: eps,
        }
    }

    #[test]
    fn schedule_grid() {
        let s = Schedule::uniform(1e-2, 2.0);
        let t = s.times();
        assert_eq!(t.len(), 200);
        assert_eq!(*t.last().unwrap(), 2.0);
        let s = Schedule { phases: vec![Phase { tau: 0.1, until: 0.25 }, Phase { tau: 1.0, until: 2.0 }] };
        let t = s.times();
        assert_eq!(t.len(), 5);
        assert!((t[1] - 0.2).abs() < 1e-15);
        assert_eq!(t[2], 0.25);
        assert_eq!(t[3], 1.25);
        assert_eq!(t[4], 2.0);
        assert!(Schedule::uniform(1.0, 0.0).times().is_empty());
        assert!(Schedule::uniform(-1.0, 1.0).validate().is_err());
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let mesh = Mesh::uniform_1d(50, [0.0, 1.0]).unwrap();
        let data = equilibrium(0.1).discretize(&mesh).unwrap();
        let (rho, stats) = newton_solve(&data.rho0_cell, &mesh, &data, 0.1, &NewtonConfig::default()).unwrap();
        assert!(stats.iters <= 1);
        let diff = rho.iter().zip(&data.rho0_cell).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff <= 1e-12, "{diff}");
    }

    fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn single_cell_matches_bisection() {
        let mesh = Mesh::uniform_1d(1, [0.0, 1.0]).unwrap();
        for (eps, r0, tau) in [(1.0, 0.9, 0.1), (0.1, 0.0, 1.0), (0.02, 1.0, 0.01)] {
            let mut data = spec(eps, InitialDensity::Equilibrium { level: 0.0 }).discretize(&mesh).unwrap();
            data.rho0_cell = vec![r0];
            let (rho, _) = newton_solve(&[r0], &mesh, &data, tau, &NewtonConfig::default()).unwrap();
            let root = bisect(0.0, 1.0, |r| residual(&[r], &[r0], &mesh, &data, tau).unwrap()[0]);
            assert!((rho[0] - root).abs() <= 1e-10, "{} vs {root}", rho[0]);
        }
    }

    #[test]
    fn march_counts_steps_and_observes() {
        let mesh = Mesh::uniform_1d(20, [0.0, 1.0]).unwrap();
        let data = spec(1.0, InitialDensity::Step1d { jump: 0.5, left: 1.0, right: 0.0 }).discretize(&mesh).unwrap();
        let mut seen = Vec::new();
        let mut obs = |s: &StepRecord<'_>| {
            assert!(s.rho.iter().all(|&r| r > 0.0 && r < 1.0));
            seen.push(s.time);
            Ok(())
        };
        let out = time_march(
            &data.rho0_cell,
            &mesh,
            &data,
            &Schedule::uniform(0.01, 2.0),
            &NewtonConfig::default(),
            &mut [&mut obs],
        )
        .unwrap();
        assert_eq!(out.steps, 200);
        assert_eq!(seen.len(), 200);
        assert_eq!(out.time, 2.0);
        assert_eq!(*seen.last().unwrap(), 2.0);
    }

    #[test]
    fn zero_final_time_returns_initial_state() {
        let mesh = Mesh::uniform_1d(5, [0.0, 1.0]).unwrap();
        let data = spec(1.0, InitialDensity::Field(ScalarField::constant(0.3))).discretize(&mesh).unwrap();
        let out =
            time_march(&data.rho0_cell, &mesh, &data, &Schedule::uniform(0.1, 0.0), &NewtonConfig::default(), &mut [])
                .unwrap();
        assert_eq!(out.rho, data.rho0_cell);
        assert_eq!(out.steps, 0);
    }

    #[test]
    fn halving_recovers_from_tight_iteration_budget() {
        let mesh = Mesh::from_triangulation(&staggered_unit_square(4)).unwrap();
        let data = ProblemSpec {
            phi: ScalarField::affine(1.0, 0.0, -1.0),
            alpha: ScalarField::constant(1.0),
            beta: ScalarField::constant(0.3),
            rho0: InitialDensity::Field(ScalarField::new(|x| if x[0] < 0.5 && x[1] < 0.5 { 1.0 } else { 0.0 })),
            epsilon: 0.05,
        }
        .discretize(&mesh)
        .unwrap();
        let strict = NewtonConfig { max_iters: 3, ..NewtonConfig::default() };
        let err = newton_solve(&data.rho0_cell, &mesh, &data, 1.0, &strict).unwrap_err();
        assert!(matches!(err, SolverError::NonConvergence { iters: 3, .. }));
        let halving = NewtonConfig { step_halving: true, ..strict };
        let (_, stats) = newton_solve(&data.rho0_cell, &mesh, &data, 1.0, &halving).unwrap();
        assert!(stats.substeps > 1);
    }

    #[test]
    fn errors_carry_step_index() {
        let mesh = Mesh::uniform_1d(10, [0.0, 1.0]).unwrap();
        let data = spec(0.01, InitialDensity::Step1d { jump: 0.5, left: 1.0, right: 0.0 }).discretize(&mesh).unwrap();
        let cfg = NewtonConfig { max_iters: 1, ..NewtonConfig::default() };
        let err = time_march(&data.rho0_cell, &mesh, &data, &Schedule::uniform(0.1, 1.0), &cfg, &mut []).unwrap_err();
        assert!(matches!(err, SolverError::AtStep { step: 1, .. }), "{err}");
        assert!(NewtonConfig { clip: 0.1, ..cfg }.validate().is_err());
    }

    #[test]
    fn deterministic() {
        let mesh = Mesh::from_triangulation(&staggered_unit_square(4)).unwrap();
        let data = equilibrium(0.2).discretize(&mesh).unwrap();
        let start: Vec<f64> = (0..mesh.n_cells()).map(|k| 0.1 + 0.8 * ((k * 7) % 11) as f64 / 11.0).collect();
        let run = || {
            time_march(&start, &mesh, &data, &Schedule::uniform(0.05, 0.5), &NewtonConfig::default(), &mut [])
                .unwrap()
                .rho
        };
        let (a, b) = (run(), run());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn l1_contraction(seed_a in proptest::collection::vec(0.0f64..1.0, 12),
                          seed_b in proptest::collection::vec(0.0f64..1.0, 12),
                          eps in 0.05f64..1.0, tau in 0.005f64..0.2) {
            let mesh = Mesh::uniform_1d(12, [0.0, 1.0]).unwrap();
            let data = spec(eps, InitialDensity::Field(ScalarField::constant(0.5))).discretize(&mesh).unwrap();
            let cfg = NewtonConfig::default();
            let (mut a, mut b) = (seed_a, seed_b);
            let dist = |a: &[f64], b: &[f64]| -> f64 {
                mesh.measures().iter().zip(a.iter().zip(b)).map(|(m, (x, y))| m * (x - y).abs()).sum()
            };
            let mut prev = dist(&a, &b);
            for _ in 0..10 {
                a = newton_solve(&a, &mesh, &data, tau, &cfg).unwrap().0;
                b = newton_solve(&b, &mesh, &data, tau, &cfg).unwrap().0;
                let d = dist(&a, &b);
                prop_assert!(d <= prev + 1e-10, "{d} > {prev}");
                prev = d;
            }
        }
    }
}
