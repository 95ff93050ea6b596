//! Continuous problem data, its sampling on a mesh, and the scalar
//! functions shared by the scheme and the diagnostics.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::mesh::{Mesh, Point};

#[derive(Debug, Error, PartialEq)]
pub enum PhysicsError {
    #[error("{function} is undefined at rho = {rho}")]
    Domain { function: &'static str, rho: f64 },
    #[error("boundary face {face}: need alpha > beta > 0, got alpha = {alpha}, beta = {beta}")]
    BoundaryData { face: usize, alpha: f64, beta: f64 },
    #[error("invalid problem parameter: {0}")]
    Parameter(String),
}

/// A scalar field on the closure of the domain.
#[derive(Clone)]
pub struct ScalarField(Arc<dyn Fn(Point) -> f64 + Send + Sync>);

impl ScalarField {
    pub fn new(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField(Arc::new(f))
    }

    pub fn constant(value: f64) -> Self {
        Self::new(move |_| value)
    }

    /// `c0 + cx x + cy y`.
    pub fn affine(c0: f64, cx: f64, cy: f64) -> Self {
        Self::new(move |p| c0 + cx * p[0] + cy * p[1])
    }

    pub fn eval(&self, p: Point) -> f64 {
        (self.0)(p)
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarField")
    }
}

#[derive(Debug, Clone)]
pub enum InitialDensity {
    /// Cell averages by sub-cell quadrature.
    Field(ScalarField),
    /// `left` for `x < jump`, `right` otherwise; averaged exactly in 1D.
    Step1d { jump: f64, left: f64, right: f64 },
    /// The discrete thermal equilibrium with electrochemical potential `level`.
    Equilibrium { level: f64 },
}

/// Continuous data of a drift-diffusion problem with Butler-Volmer boundary
/// exchange: potential `phi`, boundary rates `alpha > beta > 0`, initial
/// density and inverse Péclet number.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub phi: ScalarField,
    pub alpha: ScalarField,
    pub beta: ScalarField,
    pub rho0: InitialDensity,
    pub epsilon: f64,
}

/// Problem data sampled on a mesh. Boundary arrays follow
/// [`Mesh::boundary_faces`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteData {
    pub epsilon: f64,
    pub phi_cell: Vec<f64>,
    pub phi_face: Vec<f64>,
    pub alpha_face: Vec<f64>,
    pub beta_face: Vec<f64>,
    /// `ξ^Γ_σ = φ_σ - ε log(α_σ/β_σ - 1)`.
    pub xi_gamma_face: Vec<f64>,
    pub rho0_cell: Vec<f64>,
}

/// `η(ρ) = ρ(1-ρ)`.
pub fn mobility(rho: f64) -> f64 {
    rho * (1.0 - rho)
}

fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `x log x - y log y` given `d = x - y` exactly, accurate relative to `|d|`.
fn xlogx_difference(x: f64, y: f64, d: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else if d < 0.0 {
        -xlogx_difference(y, x, -d)
    } else if y <= 0.0 {
        xlogx(x)
    } else {
        x * (d / y).ln_1p() + d * y.ln()
    }
}

/// `u - log(1 + u)` for `|u| <= 1/2`, from `log(1 + u) = 2 atanh(w)` with
/// `w = u/(2 + u)`, so that `u - 2w = u w` exactly.
fn log1p_defect(u: f64) -> f64 {
    let w = u / (2.0 + u);
    let w2 = w * w;
    let series = (0..20).rev().fold(0.0, |acc, k| acc * w2 + 1.0 / f64::from(2 * k + 3));
    u * w - 2.0 * w * w2 * series
}

/// `h(a) - h(b)` without cancellation for nearby arguments.
///
/// Split as `d h'(b) + a log(1+u) + (1-a) log(1+v)` with `d = a - b`,
/// `u = d/b`, `v = -d/(1-b)`. For small `u, v` the first-order parts of the
/// logarithms cancel exactly: `a u + (1-a) v = d²/η(b)`.
pub fn entropy_difference(a: f64, b: f64) -> f64 {
    if a < b {
        return -entropy_difference(b, a);
    }
    let d = a - b;
    if d == 0.0 {
        return 0.0;
    }
    if !(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0) {
        return xlogx_difference(a, b, d) + xlogx_difference(1.0 - a, 1.0 - b, -d);
    }
    let (u, v) = (d / b, -d / (1.0 - b));
    let curvature = if u.abs() <= 0.5 && v.abs() <= 0.5 {
        d * d / mobility(b) - a * log1p_defect(u) - (1.0 - a) * log1p_defect(v)
    } else {
        a * u.ln_1p() + (1.0 - a) * v.ln_1p()
    };
    d * chemical_potential(b) + curvature
}

/// `log(ρ/(1-ρ))` for `ρ ∈ (0, 1)`, written as one `log1p` of a quotient
/// whose numerator is exact near `ρ = 1/2`.
fn chemical_potential(rho: f64) -> f64 {
    if rho >= 0.5 {
        ((2.0 * rho - 1.0) / (1.0 - rho)).ln_1p()
    } else {
        -((1.0 - 2.0 * rho) / rho).ln_1p()
    }
}

/// Mixing entropy `h(ρ) = ρ log ρ + (1-ρ) log(1-ρ) + log 2`, extended by
/// continuity at 0 and 1.
pub fn entropy(rho: f64) -> f64 {
    xlogx(rho) + xlogx(1.0 - rho) + std::f64::consts::LN_2
}

/// Chemical potential `h'(ρ) = log(ρ/(1-ρ))`.
pub fn entropy_prime(rho: f64) -> Result<f64, PhysicsError> {
    if rho > 0.0 && rho < 1.0 {
        Ok(chemical_potential(rho))
    } else {
        Err(PhysicsError::Domain { function: "entropy_prime", rho })
    }
}

/// `h'(a) - h'(b)`, evaluated as a single logarithm so that nearby arguments
/// do not cancel.
pub fn entropy_prime_difference(a: f64, b: f64) -> Result<f64, PhysicsError> {
    for rho in [a, b] {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(PhysicsError::Domain { function: "entropy_prime_difference", rho });
        }
    }
    let (hi, lo, sign) = if a >= b { (a, b, 1.0) } else { (b, a, -1.0) };
    Ok(sign * ((hi - lo) / (lo * (1.0 - hi))).ln_1p())
}

/// `1/(1+e^{-x})` without overflow.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(PhysicsError::Parameter(format!(
                "inverse Peclet number must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Samples the data: cell values at centers, boundary values at face
    /// points, cell averages of the initial density.
    pub fn discretize(&self, mesh: &Mesh) -> Result<DiscreteData, PhysicsError> {
        self.validate()?;
        let eps = self.epsilon;
        let phi_cell: Vec<f64> = mesh.centers().iter().map(|&x| self.phi.eval(x)).collect();
        let nb = mesh.boundary_faces().len();
        let (mut phi_face, mut alpha_face, mut beta_face, mut xi_gamma_face) =
            (Vec::with_capacity(nb), Vec::with_capacity(nb), Vec::with_capacity(nb), Vec::with_capacity(nb));
        for (j, f) in mesh.boundary_faces().iter().enumerate() {
            let (phi, alpha, beta) = (self.phi.eval(f.point), self.alpha.eval(f.point), self.beta.eval(f.point));
            if !(beta > 0.0 && alpha > beta && alpha.is_finite()) {
                return Err(PhysicsError::BoundaryData { face: j, alpha, beta });
            }
            phi_face.push(phi);
            alpha_face.push(alpha);
            beta_face.push(beta);
            xi_gamma_face.push(phi - eps * ((alpha - beta) / beta).ln());
        }

        let rho0_cell = match &self.rho0 {
            InitialDensity::Equilibrium { level } => phi_cell.iter().map(|&p| logistic((level - p) / eps)).collect(),
            InitialDensity::Step1d { jump, left, right } if mesh.dimension() == 1 => mesh
                .cell_polygons()
                .iter()
                .map(|c| {
                    let (a, b) = (c[0][0], c[1][0]);
                    let frac = ((jump - a) / (b - a)).clamp(0.0, 1.0);
                    frac * left + (1.0 - frac) * right
                })
                .collect(),
            InitialDensity::Step1d { jump, left, right } => {
                let (jump, left, right) = (*jump, *left, *right);
                let f = ScalarField::new(move |p| if p[0] < jump { left } else { right });
                cell_averages(mesh, &f)
            }
            InitialDensity::Field(f) => cell_averages(mesh, f),
        };
        let rho0_cell = rho0_cell.into_iter().map(|r: f64| r.clamp(0.0, 1.0)).collect();

        Ok(DiscreteData { epsilon: eps, phi_cell, phi_face, alpha_face, beta_face, xi_gamma_face, rho0_cell })
    }
}

impl DiscreteData {
    /// `ρ_K^∞ = 1/(1 + e^{(φ_K - z)/ε})`, the discrete thermal equilibrium
    /// with constant electrochemical potential `z`.
    pub fn equilibrium_density(&self, level: f64) -> Vec<f64> {
        self.phi_cell.iter().map(|&p| logistic((level - p) / self.epsilon)).collect()
    }
}

/// Free-function form of [`DiscreteData::equilibrium_density`].
pub fn equilibrium_density(data: &DiscreteData, level: f64) -> Vec<f64> {
    data.equilibrium_density(level)
}

/// Second-order cell averages: midpoint rule on 4 sub-intervals in 1D, on the
/// 4 midpoint sub-triangles of each fan triangle in 2D.
pub fn cell_averages(mesh: &Mesh, f: &ScalarField) -> Vec<f64> {
    mesh.cell_polygons()
        .iter()
        .map(|poly| {
            if mesh.dimension() == 1 {
                let (a, b) = (poly[0][0], poly[1][0]);
                (0..4).map(|i| f.eval([a + (i as f64 + 0.5) * (b - a) / 4.0, 0.0])).sum::<f64>() / 4.0
            } else {
                let mut total = 0.0;
                let mut area = 0.0;
                for i in 1..poly.len() - 1 {
                    let (a, b, c) = (poly[0], poly[i], poly[i + 1]);
                    let ar = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]));
                    let mid = |p: Point, q: Point| [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
                    let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
                    let centroid =
                        |p: Point, q: Point, r: Point| [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0];
                    let s = f.eval(centroid(a, ab, ca))
                        + f.eval(centroid(ab, b, bc))
                        + f.eval(centroid(ca, bc, c))
                        + f.eval(centroid(ab, bc, ca));
                    total += ar * s / 4.0;
                    area += ar;
                }
                total / area
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn spec_1d(rho0: InitialDensity) -> ProblemSpec {
        ProblemSpec {
            phi: ScalarField::affine(1.0, -1.0, 0.0),
            alpha: ScalarField::constant(1.0),
            beta: ScalarField::constant(0.5),
            rho0,
            epsilon: 1.0,
        }
    }

    #[test]
    fn mobility_values() {
        assert_eq!(mobility(0.0), 0.0);
        assert_eq!(mobility(1.0), 0.0);
        assert_eq!(mobility(0.5), 0.25);
    }

    #[test]
    fn entropy_values() {
        assert!(entropy(0.5).abs() < 1e-16);
        assert_relative_eq!(entropy(0.0), std::f64::consts::LN_2);
        assert_relative_eq!(entropy(1.0), std::f64::consts::LN_2);
        assert_eq!(entropy_prime(0.5).unwrap(), 0.0);
        assert!(matches!(entropy_prime(0.0), Err(PhysicsError::Domain { .. })));
        assert!(matches!(entropy_prime(1.0), Err(PhysicsError::Domain { .. })));
    }

    #[test]
    fn entropy_difference_near_half() {
        // 50-digit reference; the two logarithmic terms cancel to 1 part in 1300.
        let (a, b) = (0.5001349604337658, 0.5001349605798358);
        let reference = -7.8854691159188711695761950308822462e-14;
        assert_relative_eq!(entropy_difference(a, b), reference, max_relative = 1e-14);
    }

    #[test]
    fn discretize_potential() {
        let mesh = Mesh::uniform_1d(2, [0.0, 1.0]).unwrap();
        let data = spec_1d(InitialDensity::Equilibrium { level: 0.0 }).discretize(&mesh).unwrap();
        assert_eq!(data.phi_cell, vec![0.75, 0.25]);
        assert_eq!(data.phi_face, vec![1.0, 0.0]);
        // log(1/0.5 - 1) = 0
        assert_eq!(data.xi_gamma_face, data.phi_face);
    }

    #[test]
    fn step_averages() {
        let step = InitialDensity::Step1d { jump: 0.5, left: 1.0, right: 0.0 };
        let mesh = Mesh::uniform_1d(4, [0.0, 1.0]).unwrap();
        let data = spec_1d(step.clone()).discretize(&mesh).unwrap();
        assert_eq!(data.rho0_cell, vec![1.0, 1.0, 0.0, 0.0]);

        let mesh = Mesh::uniform_1d(3, [0.0, 1.0]).unwrap();
        let data = spec_1d(step).discretize(&mesh).unwrap();
        assert_eq!(data.rho0_cell[0], 1.0);
        assert_relative_eq!(data.rho0_cell[1], 0.5, max_relative = 1e-14);
        assert_eq!(data.rho0_cell[2], 0.0);
    }

    #[test]
    fn quadrature_is_exact_for_affine_fields() {
        let mesh = Mesh::from_triangulation(&crate::mesh::staggered_unit_square(5)).unwrap();
        let f = ScalarField::affine(0.3, 0.2, -0.1);
        let avg = cell_averages(&mesh, &f);
        for (k, poly) in mesh.cell_polygons().iter().enumerate() {
            let c = [poly.iter().map(|p| p[0]).sum::<f64>() / 3.0, poly.iter().map(|p| p[1]).sum::<f64>() / 3.0];
            assert_relative_eq!(avg[k], f.eval(c), max_relative = 1e-13);
        }
    }

    #[test]
    fn bad_boundary_data() {
        let mesh = Mesh::uniform_1d(2, [0.0, 1.0]).unwrap();
        let mut spec = spec_1d(InitialDensity::Equilibrium { level: 0.0 });
        spec.beta = ScalarField::affine(0.5, 1.0, 0.0); // beta(1) = 1.5 > alpha
        assert_eq!(spec.discretize(&mesh), Err(PhysicsError::BoundaryData { face: 1, alpha: 1.0, beta: 1.5 }));
        spec.beta = ScalarField::constant(0.0);
        assert!(matches!(spec.discretize(&mesh), Err(PhysicsError::BoundaryData { face: 0, .. })));
        spec.beta = ScalarField::constant(0.5);
        spec.epsilon = 0.0;
        assert!(matches!(spec.discretize(&mesh), Err(PhysicsError::Parameter(_))));
    }

    #[test]
    fn equilibrium_values() {
        let eps = 0.1;
        let z = 0.3;
        let data = DiscreteData {
            epsilon: eps,
            phi_cell: vec![z, 1e6, z - eps * 3f64.ln()],
            phi_face: vec![],
            alpha_face: vec![],
            beta_face: vec![],
            xi_gamma_face: vec![],
            rho0_cell: vec![],
        };
        let rho = equilibrium_density(&data, z);
        assert_eq!(rho[0], 0.5);
        assert!(rho[1] >= 0.0 && rho[1] < 1e-300);
        assert_relative_eq!(rho[2], 0.75, max_relative = 1e-14);
    }

    fn sqrt_mobility(a: f64, b: f64) -> f64 {
        (mobility(a) * mobility(b)).sqrt()
    }

    proptest! {
        #[test]
        fn entropy_symmetric_and_nonnegative(rho in 0.0f64..=1.0) {
            prop_assert!(entropy(rho) >= 0.0);
            prop_assert!((entropy(rho) - entropy(1.0 - rho)).abs() <= 1e-15);
        }

        #[test]
        fn entropy_prime_increasing(a in 1e-9f64..0.999, d in 1e-6f64..1e-3) {
            let b = (a + d).min(1.0 - 1e-12);
            prop_assume!(b > a);
            prop_assert!(entropy_prime(b).unwrap() > entropy_prime(a).unwrap());
        }

        #[test]
        fn entropy_difference_matches(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let d = entropy_difference(a, b);
            prop_assert!((d - (entropy(a) - entropy(b))).abs() <= 1e-14);
            prop_assert_eq!(d, -entropy_difference(b, a));
        }

        #[test]
        fn entropy_difference_small_steps(b in 1e-6f64..0.999, t in -1.0f64..1.0) {
            // Second-order Taylor expansion as the oracle; the cubic remainder is below 1e-24.
            let d = 1e-8 * t * b.min(1.0 - b);
            let a = b + d;
            let d = a - b;
            let slope = if (0.25..=0.75).contains(&b) { 2.0 * (2.0 * b - 1.0).atanh() } else { b.ln() - (-b).ln_1p() };
            let taylor = slope * d + d * d / (2.0 * mobility(b));
            prop_assert!((entropy_difference(a, b) - taylor).abs() <= 1e-13 * taylor.abs() + 1e-300);
        }

        #[test]
        fn entropy_prime_difference_matches(a in 1e-6f64..0.999, b in 1e-6f64..0.999) {
            let naive = entropy_prime(a).unwrap() - entropy_prime(b).unwrap();
            let d = entropy_prime_difference(a, b).unwrap();
            prop_assert!((d - naive).abs() <= 1e-13 * (1.0 + naive.abs()));
            prop_assert_eq!(d, -entropy_prime_difference(b, a).unwrap());
        }

        #[test]
        fn sinh_identity(a in 1e-3f64..0.999, b in 1e-3f64..0.999) {
            let g = entropy_prime(a).unwrap() - entropy_prime(b).unwrap();
            let lhs = sqrt_mobility(a, b) * 2.0 * (g / 2.0).sinh();
            prop_assert!((lhs - (a - b)).abs() <= 1e-12 * (a - b).abs().max(1e-3));
        }

        #[test]
        fn cosh_identity(a in 1e-3f64..0.999, b in 1e-3f64..0.999) {
            let g = entropy_prime(a).unwrap() - entropy_prime(b).unwrap();
            let lhs = sqrt_mobility(a, b) * 2.0 * (g / 2.0).cosh();
            let rhs = mobility(a) + mobility(b) + (a - b).powi(2);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
        }
    }
}
