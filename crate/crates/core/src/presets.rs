//! Built-in test problems.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::physics::{InitialDensity, ProblemSpec, ScalarField};
use crate::solver::{Phase, Schedule};

/// Default number of lattice columns for the 2D problems (1125 triangles).
pub const LATTICE_COLUMNS: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// 1D drift through `(0, 1)` from a step, `α = 1`, `β = 1/2`, `φ = 1 - x`.
    Conv1d,
    /// 1D problem with equilibrium boundary rates, started at equilibrium.
    Eq1d,
    /// 2D unit square, `φ = 1 - x₂`, boundary rates admitting a thermal
    /// equilibrium; started from the indicator of `(0, 1/2)²`.
    Eq2d,
    /// 2D unit square with generic boundary rates and no thermal equilibrium.
    Noneq2d,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Uniform1d { cells: usize },
    Lattice { nx: usize },
}

/// How the initial density of a preset is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Start {
    #[default]
    Default,
    Equilibrium,
}

/// Electrochemical potential of the thermal equilibrium for the equilibrium
/// presets.
pub const EQUILIBRIUM_LEVEL: f64 = 0.5;

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Conv1d, Preset::Eq1d, Preset::Eq2d, Preset::Noneq2d];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Conv1d => "conv-1d",
            Preset::Eq1d => "eq-1d",
            Preset::Eq2d => "eq-2d",
            Preset::Noneq2d => "noneq-2d",
        }
    }

    pub fn default_epsilon(self) -> f64 {
        match self {
            Preset::Conv1d => 1.0,
            Preset::Eq1d | Preset::Eq2d => 0.1,
            Preset::Noneq2d => 0.01,
        }
    }

    pub fn default_mesh(self) -> MeshSource {
        match self {
            Preset::Conv1d | Preset::Eq1d => MeshSource::Uniform1d { cells: 100 },
            Preset::Eq2d | Preset::Noneq2d => MeshSource::Lattice { nx: LATTICE_COLUMNS },
        }
    }

    pub fn default_schedule(self) -> Schedule {
        match self {
            Preset::Conv1d | Preset::Eq1d => Schedule::uniform(1e-2, 2.0),
            Preset::Eq2d => Schedule::uniform(0.1, 50.0),
            Preset::Noneq2d => {
                Schedule { phases: vec![Phase { tau: 0.1, until: 200.0 }, Phase { tau: 100.0, until: 1e4 }] }
            }
        }
    }

    /// The thermal equilibrium level, if the boundary data admit one.
    pub fn equilibrium_level(self) -> Option<f64> {
        match self {
            Preset::Eq1d | Preset::Eq2d => Some(EQUILIBRIUM_LEVEL),
            Preset::Conv1d | Preset::Noneq2d => None,
        }
    }

    pub fn problem(self, epsilon: f64, start: Start) -> ProblemSpec {
        let one_minus_x = ScalarField::affine(1.0, -1.0, 0.0);
        let one_minus_y = ScalarField::affine(1.0, 0.0, -1.0);
        let box_indicator =
            InitialDensity::Field(ScalarField::new(|x| if x[0] < 0.5 && x[1] < 0.5 { 1.0 } else { 0.0 }));
        let (phi, alpha, beta, rho0) = match self {
            Preset::Conv1d => (
                one_minus_x,
                ScalarField::constant(1.0),
                ScalarField::constant(0.5),
                InitialDensity::Step1d { jump: 0.5, left: 1.0, right: 0.0 },
            ),
            Preset::Eq1d | Preset::Eq2d => {
                let phi = if self == Preset::Eq1d { one_minus_x } else { one_minus_y };
                let (a, b) = equilibrium_rates(&phi, epsilon);
                let rho0 = if self == Preset::Eq1d {
                    InitialDensity::Equilibrium { level: EQUILIBRIUM_LEVEL }
                } else {
                    box_indicator
                };
                (phi, a, b, rho0)
            }
            Preset::Noneq2d => (
                one_minus_y,
                ScalarField::constant(1.0),
                ScalarField::new(|x| {
                    0.1 + 0.8 * ((1.5 * PI * x[1]).cos().powi(2) + (2.0 * x[1] - 1.0) * (PI * x[0]).sin())
                }),
                box_indicator,
            ),
        };
        let rho0 = match start {
            Start::Default => rho0,
            Start::Equilibrium => InitialDensity::Equilibrium { level: EQUILIBRIUM_LEVEL },
        };
        ProblemSpec { phi, alpha, beta, rho0, epsilon }
    }
}

/// `α = 1 + e^{-(φ - 1/2)/ε}`, `β = e^{-(φ - 1/2)/ε}`.
pub fn equilibrium_rates(phi: &ScalarField, epsilon: f64) -> (ScalarField, ScalarField) {
    let (p1, p2) = (phi.clone(), phi.clone());
    let rate = move |p: f64| (-(p - EQUILIBRIUM_LEVEL) / epsilon).exp();
    (ScalarField::new(move |x| 1.0 + rate(p1.eval(x))), ScalarField::new(move |x| rate(p2.eval(x))))
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
            format!("unknown preset `{s}` (expected one of {})", names.join(", "))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{staggered_unit_square, Mesh};

    #[test]
    fn names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("nope".parse::<Preset>().is_err());
    }

    #[test]
    fn boundary_data_is_admissible() {
        let square = Mesh::from_triangulation(&staggered_unit_square(8)).unwrap();
        let line = Mesh::uniform_1d(10, [0.0, 1.0]).unwrap();
        for p in Preset::ALL {
            let mesh = if matches!(p.default_mesh(), MeshSource::Uniform1d { .. }) { &line } else { &square };
            let data = p.problem(p.default_epsilon(), Start::Default).discretize(mesh).unwrap();
            assert!(data.rho0_cell.iter().all(|r| (0.0..=1.0).contains(r)));
        }
    }

    #[test]
    fn nonequilibrium_rates_range() {
        let beta = Preset::Noneq2d.problem(0.01, Start::Default).beta;
        assert!((beta.eval([0.0, 0.0]) - 0.9).abs() < 1e-15);
        assert!((beta.eval([0.5, 0.0]) - 0.1).abs() < 1e-15);
        assert!((beta.eval([0.5, 1.0]) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn schedules() {
        assert_eq!(Preset::Conv1d.default_schedule().times().len(), 200);
        let s = Preset::Noneq2d.default_schedule();
        assert_eq!(s.times().len(), 2000 + 98);
        assert_eq!(s.final_time(), 1e4);
    }
}
