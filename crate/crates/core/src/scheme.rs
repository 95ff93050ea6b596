//! SQRA fluxes, the implicit Euler residual and its Jacobian, and the
//! free-energy / dissipation functionals.

use thiserror::Error;

use crate::linalg::SparseMatrix;
use crate::mesh::Mesh;
use crate::physics::{
    entropy, entropy_difference, entropy_prime, entropy_prime_difference, mobility, DiscreteData, PhysicsError,
};

#[derive(Debug, Error, PartialEq)]
pub enum SchemeError {
    #[error("dimension mismatch: expected {expected} cell values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Domain(#[from] PhysicsError),
    #[error("degenerate face mobility on {face}")]
    DegenerateMobility { face: String },
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

fn step(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `c e^{s}` that is zero when `c` is, even if the exponential overflows.
fn scaled_exp(c: f64, s: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * s.exp()
    }
}

/// Flux from `K` to `L` across an interior face,
/// `(ε/d)[ρ_K(1-ρ_L) e^{(φ_K-φ_L)/2ε} - ρ_L(1-ρ_K) e^{(φ_L-φ_K)/2ε}]`
/// with positive parts on every density factor.
pub fn interior_flux(rho_k: f64, rho_l: f64, phi_k: f64, phi_l: f64, d: f64, eps: f64) -> f64 {
    let s = (phi_k - phi_l) / (2.0 * eps);
    let m = s.abs();
    let a = pos(rho_k) * pos(1.0 - rho_l);
    let b = pos(rho_l) * pos(1.0 - rho_k);
    let (fwd, bwd) = (a * (s - m).exp(), b * (-s - m).exp());
    let mut diff = fwd - bwd;
    if (0.0..=1.0).contains(&rho_k) && (0.0..=1.0).contains(&rho_l) {
        // Same quantity as (ρ_K - ρ_L) cosh s + (ρ_K + ρ_L - 2ρ_Kρ_L) sinh s,
        // scaled by e^{-|s|}; used when its terms cancel less.
        let e = (-2.0 * m).exp();
        let cosh = (rho_k - rho_l) * (1.0 + e) / 2.0;
        let sinh = (a + b) * (-(-2.0 * m).exp_m1() / 2.0).copysign(s);
        if cosh.abs().max(sinh.abs()) < fwd.max(bwd) {
            diff = cosh + sinh;
        }
    }
    if diff == 0.0 {
        return 0.0;
    }
    eps / d * scaled_exp(diff, m)
}

/// Partial derivatives of [`interior_flux`] in `ρ_K` and `ρ_L`.
pub fn interior_flux_derivatives(rho_k: f64, rho_l: f64, phi_k: f64, phi_l: f64, d: f64, eps: f64) -> (f64, f64) {
    let s = (phi_k - phi_l) / (2.0 * eps);
    let c = eps / d;
    let dk = c * (scaled_exp(step(rho_k) * pos(1.0 - rho_l), s) + scaled_exp(pos(rho_l) * step(1.0 - rho_k), -s));
    let dl = -c * (scaled_exp(pos(rho_k) * step(1.0 - rho_l), s) + scaled_exp(step(rho_l) * pos(1.0 - rho_k), -s));
    (dk, dl)
}

/// Numerator, denominator and their `ρ_K` derivatives of the boundary
/// density, all scaled by `e^{-|s|}`.
fn boundary_parts(rho_k: f64, phi_k: f64, phi_sigma: f64, alpha: f64, beta: f64, d: f64, eps: f64) -> [f64; 4] {
    let s = (phi_k - phi_sigma) / (2.0 * eps);
    let m = s.abs();
    let (ep, em, e0) = ((s - m).exp(), (-s - m).exp(), (-m).exp());
    let num = d * beta * e0 + eps * pos(rho_k) * ep;
    let den = d * alpha * e0 + eps * pos(rho_k) * ep + eps * pos(1.0 - rho_k) * em;
    let dnum = eps * step(rho_k) * ep;
    let dden = dnum - eps * step(1.0 - rho_k) * em;
    [num, den, dnum, dden]
}

/// The boundary value `ρ_σ` that makes the two-point flux from `K` to the
/// boundary equal to the Butler-Volmer flux `α ρ_σ - β`.
pub fn boundary_density(rho_k: f64, phi_k: f64, phi_sigma: f64, alpha: f64, beta: f64, d: f64, eps: f64) -> f64 {
    let [num, den, _, _] = boundary_parts(rho_k, phi_k, phi_sigma, alpha, beta, d, eps);
    if den > 0.0 {
        num / den
    } else {
        // Every scaled term underflowed; the exponentials dominate and the
        // limit is the equilibrium value.
        beta / alpha
    }
}

/// `∂ρ_σ/∂ρ_K`.
pub fn boundary_density_derivative(
    rho_k: f64,
    phi_k: f64,
    phi_sigma: f64,
    alpha: f64,
    beta: f64,
    d: f64,
    eps: f64,
) -> f64 {
    let [num, den, dnum, dden] = boundary_parts(rho_k, phi_k, phi_sigma, alpha, beta, d, eps);
    if den > 0.0 {
        (dnum * den - num * dden) / (den * den)
    } else {
        0.0
    }
}

/// Outward Butler-Volmer flux `α ρ_σ - β`.
pub fn boundary_flux(rho_sigma: f64, alpha: f64, beta: f64) -> f64 {
    alpha * rho_sigma - beta
}

/// One flux value per face: interior fluxes oriented from `cells[0]` to
/// `cells[1]`, boundary fluxes outward. Boundary densities are carried along.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxField {
    pub interior: Vec<f64>,
    pub boundary: Vec<f64>,
    pub rho_face: Vec<f64>,
}

fn check_len(mesh: &Mesh, v: &[f64]) -> Result<(), SchemeError> {
    if v.len() != mesh.n_cells() {
        return Err(SchemeError::DimensionMismatch { expected: mesh.n_cells(), found: v.len() });
    }
    Ok(())
}

/// Boundary densities for every boundary face.
pub fn boundary_densities(rho: &[f64], mesh: &Mesh, data: &DiscreteData) -> Vec<f64> {
    mesh.boundary_faces()
        .iter()
        .enumerate()
        .map(|(j, f)| {
            boundary_density(
                rho[f.cell],
                data.phi_cell[f.cell],
                data.phi_face[j],
                data.alpha_face[j],
                data.beta_face[j],
                f.distance,
                data.epsilon,
            )
        })
        .collect()
}

pub fn fluxes(rho: &[f64], mesh: &Mesh, data: &DiscreteData) -> Result<FluxField, SchemeError> {
    check_len(mesh, rho)?;
    let eps = data.epsilon;
    let interior = mesh
        .interior_faces()
        .iter()
        .map(|f| {
            let [k, l] = f.cells;
            interior_flux(rho[k], rho[l], data.phi_cell[k], data.phi_cell[l], f.distance, eps)
        })
        .collect();
    let rho_face = boundary_densities(rho, mesh, data);
    let boundary =
        rho_face.iter().enumerate().map(|(j, &r)| boundary_flux(r, data.alpha_face[j], data.beta_face[j])).collect();
    Ok(FluxField { interior, boundary, rho_face })
}

/// Implicit Euler residual
/// `H_K = m_K (ρ_K - ρ_K^old)/τ + Σ_σ m_σ F_{Kσ}(ρ)`.
pub fn residual(
    rho_new: &[f64],
    rho_old: &[f64],
    mesh: &Mesh,
    data: &DiscreteData,
    tau: f64,
) -> Result<Vec<f64>, SchemeError> {
    check_len(mesh, rho_old)?;
    let flux = fluxes(rho_new, mesh, data)?;
    Ok(residual_from_fluxes(rho_new, rho_old, &flux, mesh, tau))
}

pub(crate) fn residual_from_fluxes(
    rho_new: &[f64],
    rho_old: &[f64],
    flux: &FluxField,
    mesh: &Mesh,
    tau: f64,
) -> Vec<f64> {
    let mut h: Vec<f64> =
        mesh.measures().iter().zip(rho_new.iter().zip(rho_old)).map(|(m, (r, r0))| m * (r - r0) / tau).collect();
    for (f, &fl) in mesh.interior_faces().iter().zip(&flux.interior) {
        h[f.cells[0]] += f.measure * fl;
        h[f.cells[1]] -= f.measure * fl;
    }
    for (f, &fl) in mesh.boundary_faces().iter().zip(&flux.boundary) {
        h[f.cell] += f.measure * fl;
    }
    h
}

/// Distance below which a density is considered to sit on a kink of the
/// positive parts.
pub const KINK_TOLERANCE: f64 = 1e-14;

/// Analytic Jacobian of [`residual`] in `ρ_new`. Its pattern is the cell
/// adjacency plus the diagonal. At positive-part kinks the zero
/// sub-derivative is used and a warning is logged.
pub fn jacobian(rho_new: &[f64], mesh: &Mesh, data: &DiscreteData, tau: f64) -> Result<SparseMatrix, SchemeError> {
    check_len(mesh, rho_new)?;
    if let Some(k) = rho_new.iter().position(|&r| !(KINK_TOLERANCE..=1.0 - KINK_TOLERANCE).contains(&r)) {
        log::warn!("jacobian evaluated at rho[{k}] = {} on a positive-part kink", rho_new[k]);
    }
    let eps = data.epsilon;
    let n = mesh.n_cells();
    let mut entries = Vec::with_capacity(n + 4 * mesh.interior_faces().len());
    let mut diag: Vec<f64> = mesh.measures().iter().map(|m| m / tau).collect();
    for f in mesh.interior_faces() {
        let [k, l] = f.cells;
        let (dk, dl) =
            interior_flux_derivatives(rho_new[k], rho_new[l], data.phi_cell[k], data.phi_cell[l], f.distance, eps);
        let m = f.measure;
        diag[k] += m * dk;
        diag[l] -= m * dl;
        entries.push((k, l, m * dl));
        entries.push((l, k, -m * dk));
    }
    for (j, f) in mesh.boundary_faces().iter().enumerate() {
        let k = f.cell;
        let drho = boundary_density_derivative(
            rho_new[k],
            data.phi_cell[k],
            data.phi_face[j],
            data.alpha_face[j],
            data.beta_face[j],
            f.distance,
            eps,
        );
        diag[k] += f.measure * data.alpha_face[j] * drho;
    }
    entries.extend(diag.into_iter().enumerate().map(|(k, v)| (k, k, v)));
    Ok(SparseMatrix::from_triplets(n, &entries))
}

/// Electrochemical potentials `ξ = ε h'(ρ) + φ` on cells and boundary faces.
pub fn electro_potential(
    rho_cell: &[f64],
    rho_face: &[f64],
    data: &DiscreteData,
) -> Result<(Vec<f64>, Vec<f64>), SchemeError> {
    let eps = data.epsilon;
    let xi = |r: f64, p: f64| -> Result<f64, SchemeError> { Ok(eps * entropy_prime(r)? + p) };
    let cell = rho_cell.iter().zip(&data.phi_cell).map(|(&r, &p)| xi(r, p)).collect::<Result<_, _>>()?;
    let face = rho_face.iter().zip(&data.phi_face).map(|(&r, &p)| xi(r, p)).collect::<Result<_, _>>()?;
    Ok((cell, face))
}

/// `Ψ(z) = 2z asinh(z/2) - 2√(z²+4) + 4`.
pub fn psi(z: f64) -> f64 {
    let r = (z * z + 4.0).sqrt();
    2.0 * z * (z / 2.0).asinh() - 2.0 * z * z / (r + 2.0)
}

/// `Ψ*(s) = 4(cosh(s/2) - 1)`, the Legendre transform of [`psi`].
pub fn psi_star(s: f64) -> f64 {
    8.0 * (s / 4.0).sinh().powi(2)
}

/// Per-face data entering the dissipation: transmissibility `a_σ`, face
/// mobility `η_σ`, flux and potential drop.
struct FaceTerm {
    a: f64,
    d: f64,
    eta: f64,
    flux: f64,
    g: f64,
}

fn face_terms(rho: &[f64], flux: &FluxField, mesh: &Mesh, data: &DiscreteData) -> Result<Vec<FaceTerm>, SchemeError> {
    let eps = data.epsilon;
    let g = |a: f64, b: f64, pa: f64, pb: f64| -> Result<f64, SchemeError> {
        Ok(eps * entropy_prime_difference(a, b)? + (pa - pb))
    };
    let mut out = Vec::with_capacity(flux.interior.len() + flux.boundary.len());
    for (i, (f, &fl)) in mesh.interior_faces().iter().zip(&flux.interior).enumerate() {
        let [k, l] = f.cells;
        let eta = (mobility(rho[k]) * mobility(rho[l])).sqrt();
        if !(eta > 0.0) {
            return Err(SchemeError::DegenerateMobility { face: format!("interior face {i}") });
        }
        out.push(FaceTerm {
            a: f.transmissibility(),
            d: f.distance,
            eta,
            flux: fl,
            g: g(rho[k], rho[l], data.phi_cell[k], data.phi_cell[l])?,
        });
    }
    for (j, (f, &fl)) in mesh.boundary_faces().iter().zip(&flux.boundary).enumerate() {
        let eta = (mobility(rho[f.cell]) * mobility(flux.rho_face[j])).sqrt();
        if !(eta > 0.0) {
            return Err(SchemeError::DegenerateMobility { face: format!("boundary face {j}") });
        }
        out.push(FaceTerm {
            a: f.transmissibility(),
            d: f.distance,
            eta,
            flux: fl,
            g: g(rho[f.cell], flux.rho_face[j], data.phi_cell[f.cell], data.phi_face[j])?,
        });
    }
    Ok(out)
}

/// Primal and dual dissipation, summed over all faces:
/// `D = Σ a_σ η_σ ε² Ψ(d_σ F/(ε η_σ))`, `D* = Σ a_σ η_σ ε² Ψ*(G/ε)`.
/// At `ε = 1` these are the classical `Σ a η Ψ(dF/η)` and `Σ a η Ψ*(G)`;
/// the `ε²` weight makes `D + D* = Σ m_σ F G` for every `ε`.
pub fn dissipation_potentials(
    rho: &[f64],
    flux: &FluxField,
    mesh: &Mesh,
    data: &DiscreteData,
) -> Result<(f64, f64), SchemeError> {
    let eps = data.epsilon;
    let terms = face_terms(rho, flux, mesh, data)?;
    let primal = terms.iter().map(|t| t.a * t.eta * eps * eps * psi(t.d * t.flux / (eps * t.eta))).sum();
    let dual = terms.iter().map(|t| t.a * t.eta * eps * eps * psi_star(t.g / eps)).sum();
    Ok((primal, dual))
}

/// `Σ_σ m_σ F_{Kσ} G_{Kσ}`, the exact dissipation rate of the flux field.
pub fn flux_potential_product(
    rho: &[f64],
    flux: &FluxField,
    mesh: &Mesh,
    data: &DiscreteData,
) -> Result<f64, SchemeError> {
    Ok(face_terms(rho, flux, mesh, data)?.iter().map(|t| t.a * t.d * t.flux * t.g).sum())
}

/// `Σ_K m_K (ε h(ρ_K) + φ_K ρ_K)`.
pub fn bulk_energy(rho: &[f64], mesh: &Mesh, data: &DiscreteData) -> f64 {
    mesh.measures()
        .iter()
        .zip(rho.iter().zip(&data.phi_cell))
        .map(|(m, (&r, &p))| m * (data.epsilon * entropy(r) + p * r))
        .sum()
}

/// `Σ_K m_K (ρ_K - ρ_K^old) + τ Σ_ext m_σ F_{Kσ}`, zero up to the Newton
/// residual for a converged step.
pub fn mass_balance_defect(rho_new: &[f64], rho_old: &[f64], flux: &FluxField, mesh: &Mesh, tau: f64) -> f64 {
    let change: f64 = mesh.measures().iter().zip(rho_new.iter().zip(rho_old)).map(|(m, (a, b))| m * (a - b)).sum();
    let outflow: f64 = mesh.boundary_faces().iter().zip(&flux.boundary).map(|(f, fl)| f.measure * fl).sum();
    change + tau * outflow
}

/// Energy bookkeeping at one recorded time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord {
    pub time: f64,
    pub bulk: f64,
    /// `Σ_{p≤n} τ_p Σ_ext m_σ ξ^Γ_σ F^p_{Kσ}`.
    pub exchange: f64,
    /// `bulk + exchange`, accumulated from the per-step increments.
    pub total: f64,
    pub d_primal: f64,
    pub d_dual: f64,
    /// `(F_tot^n - F_tot^{n-1})/τ + D + D*`; non-positive up to rounding.
    pub ineq_residual: f64,
    /// `Σ_{p≤n} τ_p Σ_σ a_σ (ρ_K^p - ρ_{Kσ}^p)²`.
    pub l2h1: f64,
    /// `τ Σ_K |ξ_K H_K|` for the residual `H` left by the nonlinear solver.
    /// An exact solution of the step decreases `F_tot`; the computed one
    /// satisfies `F_tot^n - F_tot^{n-1} ≤ τ Σ_K ξ_K H_K ≤ residual_work`.
    pub residual_work: f64,
}

/// Time series of [`EnergyRecord`]s. The initial record carries `NaN` for the
/// quantities defined only after a step.
///
/// The total energy is accumulated from per-step increments computed cell by
/// cell, so a step that decreases the energy cannot raise the recorded total
/// through cancellation in the sums.
#[derive(Debug, Clone, Default)]
pub struct EnergyLedger {
    pub records: Vec<EnergyRecord>,
    state: Vec<f64>,
}

impl EnergyLedger {
    pub fn new(rho0: &[f64], mesh: &Mesh, data: &DiscreteData, t0: f64) -> Self {
        let bulk = bulk_energy(rho0, mesh, data);
        EnergyLedger {
            records: vec![EnergyRecord {
                time: t0,
                bulk,
                exchange: 0.0,
                total: bulk,
                d_primal: f64::NAN,
                d_dual: f64::NAN,
                ineq_residual: f64::NAN,
                l2h1: 0.0,
                residual_work: f64::NAN,
            }],
            state: rho0.to_vec(),
        }
    }

    pub fn last(&self) -> &EnergyRecord {
        self.records.last().expect("ledger always holds the initial record")
    }

    /// Appends the record of a converged step of length `tau` ending at `time`.
    pub fn step(
        &mut self,
        time: f64,
        tau: f64,
        rho_new: &[f64],
        flux: &FluxField,
        mesh: &Mesh,
        data: &DiscreteData,
    ) -> Result<&EnergyRecord, SchemeError> {
        if rho_new.len() != self.state.len() {
            return Err(SchemeError::DimensionMismatch { expected: self.state.len(), found: rho_new.len() });
        }
        let prev = *self.last();
        let bulk = bulk_energy(rho_new, mesh, data);
        let bulk_change: f64 = mesh
            .measures()
            .iter()
            .zip(rho_new.iter().zip(&self.state))
            .zip(&data.phi_cell)
            .map(|((m, (&a, &b)), p)| m * (data.epsilon * entropy_difference(a, b) + p * (a - b)))
            .sum();
        let exchange_change = tau
            * mesh
                .boundary_faces()
                .iter()
                .zip(&flux.boundary)
                .zip(&data.xi_gamma_face)
                .map(|((f, fl), xg)| f.measure * xg * fl)
                .sum::<f64>();
        let change = bulk_change + exchange_change;
        let h = residual_from_fluxes(rho_new, &self.state, flux, mesh, tau);
        let residual_work = tau
            * rho_new
                .iter()
                .zip(&data.phi_cell)
                .zip(&h)
                .map(|((&r, &p), hk)| Ok((data.epsilon * entropy_prime(r)? + p).abs() * hk.abs()))
                .sum::<Result<f64, SchemeError>>()?;
        let total = prev.total + change;
        let (d_primal, d_dual) = dissipation_potentials(rho_new, flux, mesh, data)?;
        let jumps: f64 = mesh
            .interior_faces()
            .iter()
            .map(|f| f.transmissibility() * (rho_new[f.cells[0]] - rho_new[f.cells[1]]).powi(2))
            .chain(
                mesh.boundary_faces()
                    .iter()
                    .zip(&flux.rho_face)
                    .map(|(f, r)| f.transmissibility() * (rho_new[f.cell] - r).powi(2)),
            )
            .sum();
        self.records.push(EnergyRecord {
            time,
            bulk,
            exchange: prev.exchange + exchange_change,
            total,
            d_primal,
            d_dual,
            ineq_residual: change / tau + d_primal + d_dual,
            l2h1: prev.l2h1 + tau * jumps,
            residual_work,
        });
        self.state.copy_from_slice(rho_new);
        Ok(self.last())
    }
}
