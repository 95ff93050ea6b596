use approx::assert_relative_eq;

use sqra::diagnostics::{write_energy_csv, write_newton_csv, write_snapshot_csv};
use sqra::experiments::{run, Keep};
use sqra::mesh::{staggered_unit_square, validate_admissibility, Mesh, Tolerances, Triangulation};
use sqra::physics::{InitialDensity, ProblemSpec, ScalarField};
use sqra::presets::{Preset, Start};
use sqra::solver::{time_march, NewtonConfig, Schedule, SolverError, StepRecord};

fn newton() -> NewtonConfig {
    NewtonConfig::default()
}

#[test]
fn mesh_file_round_trip_keeps_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("square.mesh");
    staggered_unit_square(6).write(&path).unwrap();
    let mesh = Mesh::from_triangulation(&Triangulation::read(&path).unwrap()).unwrap();
    assert!(validate_admissibility(&mesh, &Tolerances::default()).is_admissible());

    let data = Preset::Eq2d.problem(0.1, Start::Equilibrium).discretize(&mesh).unwrap();
    let report = run(&mesh, &data, &Schedule::uniform(0.5, 5.0), &newton(), Keep::None, None).unwrap();
    for (a, b) in report.final_state.iter().zip(&data.rho0_cell) {
        assert!((a - b).abs() <= 1e-13);
    }
}

#[test]
fn mass_changes_only_through_the_boundary() {
    let mesh = Mesh::from_triangulation(&staggered_unit_square(7)).unwrap();
    let data = Preset::Noneq2d.problem(0.05, Start::Default).discretize(&mesh).unwrap();
    let mass = |rho: &[f64]| mesh.measures().iter().zip(rho).map(|(m, r)| m * r).sum::<f64>();
    let mut outflow = 0.0;
    let mut rho_end = data.rho0_cell.clone();
    let mut obs = |s: &StepRecord<'_>| -> Result<(), SolverError> {
        outflow +=
            s.tau * mesh.boundary_faces().iter().zip(&s.flux.boundary).map(|(f, fl)| f.measure * fl).sum::<f64>();
        rho_end.copy_from_slice(s.rho);
        Ok(())
    };
    time_march(&data.rho0_cell, &mesh, &data, &Schedule::uniform(0.1, 3.0), &newton(), &mut [&mut obs]).unwrap();
    let change = mass(&rho_end) - mass(&data.rho0_cell);
    assert!(change.abs() > 1e-3);
    assert!((change + outflow).abs() <= 1e-12);
}

/// Problem on `(0, 1)` and its image under `x -> 1 - x`.
fn mirrored(eps: f64, flip: bool) -> ProblemSpec {
    let at = move |x: [f64; 2]| if flip { 1.0 - x[0] } else { x[0] };
    ProblemSpec {
        phi: ScalarField::new(move |x| (3.0 * at(x)).sin()),
        alpha: ScalarField::new(move |x| 1.0 + at(x)),
        beta: ScalarField::new(move |x| 0.2 + 0.5 * at(x)),
        rho0: InitialDensity::Field(ScalarField::new(move |x| 0.5 + 0.4 * (5.0 * at(x)).cos())),
        epsilon: eps,
    }
}

#[test]
fn reflection_symmetry_in_1d() {
    let mesh = Mesh::uniform_1d(40, [0.0, 1.0]).unwrap();
    for eps in [1.0, 0.1] {
        let schedule = Schedule::uniform(0.05, 1.0);
        let a = run(&mesh, &mirrored(eps, false).discretize(&mesh).unwrap(), &schedule, &newton(), Keep::None, None)
            .unwrap();
        let b = run(&mesh, &mirrored(eps, true).discretize(&mesh).unwrap(), &schedule, &newton(), Keep::None, None)
            .unwrap();
        for (x, y) in a.final_state.iter().zip(b.final_state.iter().rev()) {
            assert_relative_eq!(x, y, max_relative = 1e-10);
        }
        assert_relative_eq!(a.energy.last().total, b.energy.last().total, max_relative = 1e-10);
    }
}

#[test]
fn halving_is_inactive_on_easy_problems() {
    let mesh = Mesh::uniform_1d(30, [0.0, 1.0]).unwrap();
    let data = Preset::Conv1d.problem(0.2, Start::Default).discretize(&mesh).unwrap();
    let schedule = Schedule::uniform(0.05, 0.5);
    let plain = run(&mesh, &data, &schedule, &newton(), Keep::None, None).unwrap();
    let cfg = NewtonConfig { step_halving: true, ..newton() };
    let halving = run(&mesh, &data, &schedule, &cfg, Keep::None, None).unwrap();
    assert_eq!(plain.final_state, halving.final_state);
    assert_eq!(plain.newton, halving.newton);
}

#[test]
fn csv_outputs_have_one_row_per_record() {
    let mesh = Mesh::uniform_1d(10, [0.0, 1.0]).unwrap();
    let data = Preset::Conv1d.problem(1.0, Start::Default).discretize(&mesh).unwrap();
    let report = run(&mesh, &data, &Schedule::uniform(0.1, 1.0), &newton(), Keep::All, Some("abc".into())).unwrap();

    let mut energy = Vec::new();
    write_energy_csv(&mut energy, &report.energy.records, Some("abc")).unwrap();
    let energy = String::from_utf8(energy).unwrap();
    let lines: Vec<&str> = energy.lines().collect();
    assert_eq!(lines[0], "# config=abc");
    assert_eq!(lines.len(), 2 + 11);
    let columns = lines[1].split(',').count();
    for row in &lines[2..] {
        let values: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(values.len(), columns);
    }

    let mut newton_csv = Vec::new();
    write_newton_csv(&mut newton_csv, &report.newton, None).unwrap();
    assert_eq!(String::from_utf8(newton_csv).unwrap().lines().count(), 1 + 10);

    let mut snapshots = Vec::new();
    write_snapshot_csv(&mut snapshots, report.trajectory.as_ref().unwrap(), None).unwrap();
    assert!(String::from_utf8(snapshots).unwrap().lines().count() > 11);
}

#[test]
fn gradient_bound_accumulates() {
    let mesh = Mesh::uniform_1d(50, [0.0, 1.0]).unwrap();
    let data = Preset::Conv1d.problem(1.0, Start::Default).discretize(&mesh).unwrap();
    let report = run(&mesh, &data, &Schedule::uniform(0.02, 1.0), &newton(), Keep::None, None).unwrap();
    let l2h1: Vec<f64> = report.energy.records.iter().map(|r| r.l2h1).collect();
    assert!(l2h1.windows(2).all(|w| w[1] >= w[0]));
    assert!(l2h1.last().unwrap().is_finite() && *l2h1.last().unwrap() > 0.0);
}
