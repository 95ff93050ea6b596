use std::fmt;

use super::{cross, dot, norm, sub, Mesh, MeshError};

/// Thresholds used by [`validate_admissibility`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Largest accepted angle (radians) between `x_L - x_K` and the face normal.
    pub angle: f64,
    /// Faces with `d_σ < min_distance_rel * δ_T` are rejected.
    pub min_distance_rel: f64,
    /// Relative tolerance for exact geometric identities.
    pub identity_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { angle: 1e-8, min_distance_rel: 1e-12, identity_rel: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshQuality {
    /// `δ_T`, the largest cell diameter.
    pub size: f64,
    /// `ζ_T = max_K max_{σ∈E_K} (diam K / d_σ + d_σ / diam K)`.
    pub regularity: f64,
    pub min_face_distance: f64,
    /// Largest angle between a center-to-center segment and its face normal.
    pub orthogonality_defect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    CoincidentCenters { cells: [usize; 2], distance: f64 },
    CenterOnBoundary { face: usize, cell: usize, distance: f64 },
    CenterOutsideDomain { face: usize, cell: usize, half_distance: f64 },
    FootOutsideFace { face: usize, cell: usize },
    NonOrthogonal { face: usize, cells: [usize; 2], defect: f64 },
    WrongOrientation { face: usize, cells: [usize; 2] },
    HalfDistanceMismatch { face: usize, residual: f64 },
    GeometricIdentity { cell: usize, residual: f64 },
    DomainMeasure { residual: f64 },
}

impl Violation {
    fn is_orthogonality(&self) -> bool {
        matches!(self, Violation::NonOrthogonal { .. } | Violation::WrongOrientation { .. })
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::CoincidentCenters { cells, distance } => {
                write!(f, "cells {} and {} have coincident centers (distance {distance:.3e})", cells[0], cells[1])
            }
            Violation::CenterOnBoundary { face, cell, distance } => {
                write!(f, "center of cell {cell} lies on boundary face {face} (distance {distance:.3e})")
            }
            Violation::CenterOutsideDomain { face, cell, half_distance } => write!(
                f,
                "center of cell {cell} lies outside the domain across boundary face {face} \
                 (signed distance {half_distance:.3e})"
            ),
            Violation::FootOutsideFace { face, cell } => {
                write!(f, "perpendicular foot from cell {cell} misses boundary face {face}")
            }
            Violation::NonOrthogonal { face, cells, defect } => write!(
                f,
                "interior face {face} between cells {} and {} is not orthogonal (angle {defect:.3e} rad)",
                cells[0], cells[1]
            ),
            Violation::WrongOrientation { face, cells } => write!(
                f,
                "centers of cells {} and {} are on the wrong sides of interior face {face}",
                cells[0], cells[1]
            ),
            Violation::HalfDistanceMismatch { face, residual } => {
                write!(f, "interior face {face}: d_K + d_L differs from d_sigma by {residual:.3e}")
            }
            Violation::GeometricIdentity { cell, residual } => {
                write!(f, "cell {cell}: measure identity residual {residual:.3e}")
            }
            Violation::DomainMeasure { residual } => {
                write!(f, "cell measures do not sum to the domain measure (residual {residual:.3e})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub quality: MeshQuality,
    pub violations: Vec<Violation>,
    /// Largest relative residual of `m_K = (1/d) Σ m_σ d_{Kσ}`.
    pub identity_residual: f64,
}

impl AdmissibilityReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }

    /// Turns the report into the error a mesh constructor returns.
    ///
    /// Orthogonality problems are only reported as such when they are the sole
    /// kind of violation.
    pub fn into_result(self) -> Result<MeshQuality, MeshError> {
        if self.violations.is_empty() {
            Ok(self.quality)
        } else if self.violations.iter().all(Violation::is_orthogonality) {
            Err(MeshError::OrthogonalityViolation(self.violations))
        } else {
            Err(MeshError::NonAdmissible(self.violations))
        }
    }
}

/// Checks every admissibility condition and collects quality metrics.
///
/// Never fails: all problems are listed in the returned report.
pub fn validate_admissibility(mesh: &Mesh, tol: &Tolerances) -> AdmissibilityReport {
    let size = mesh.size();
    let min_distance = tol.min_distance_rel * size;
    let mut violations = Vec::new();
    let mut defect: f64 = 0.0;
    let mut min_face_distance = f64::INFINITY;

    let mut degenerate = vec![false; mesh.interior_faces().len()];
    for (i, f) in mesh.interior_faces().iter().enumerate() {
        let [k, l] = f.cells;
        min_face_distance = min_face_distance.min(f.distance);
        if !(f.distance >= min_distance) {
            degenerate[i] = true;
            violations.push(Violation::CoincidentCenters { cells: [k, l], distance: f.distance });
            continue;
        }
        let v = sub(mesh.centers()[l], mesh.centers()[k]);
        let sin = (cross(v, f.normal).abs() / f.distance).min(1.0);
        let angle = sin.asin();
        if dot(v, f.normal) <= 0.0 {
            defect = defect.max(std::f64::consts::PI - angle);
            violations.push(Violation::WrongOrientation { face: i, cells: [k, l] });
            continue;
        }
        defect = defect.max(angle);
        if angle > tol.angle {
            violations.push(Violation::NonOrthogonal { face: i, cells: [k, l], defect: angle });
            continue;
        }
        let residual = (f.half_distances[0] + f.half_distances[1] - f.distance).abs();
        if residual > tol.identity_rel * f.distance {
            violations.push(Violation::HalfDistanceMismatch { face: i, residual });
        }
    }

    // Pairwise distinct centers, not only across faces.
    let mut order: Vec<usize> = (0..mesh.n_cells()).collect();
    let centers = mesh.centers();
    order.sort_by(|&a, &b| centers[a][0].total_cmp(&centers[b][0]));
    for (pos, &a) in order.iter().enumerate() {
        for &b in &order[pos + 1..] {
            if centers[b][0] - centers[a][0] > min_distance {
                break;
            }
            let d = norm(sub(centers[a], centers[b]));
            let pair = [a.min(b), a.max(b)];
            let already = mesh
                .interior_faces()
                .iter()
                .zip(&degenerate)
                .any(|(f, &deg)| deg && (f.cells == pair || f.cells == [pair[1], pair[0]]));
            if d < min_distance && !already {
                violations.push(Violation::CoincidentCenters { cells: pair, distance: d });
            }
        }
    }

    for (j, f) in mesh.boundary_faces().iter().enumerate() {
        min_face_distance = min_face_distance.min(f.distance);
        if !(f.distance >= min_distance) {
            violations.push(Violation::CenterOnBoundary { face: j, cell: f.cell, distance: f.distance });
        } else if f.half_distance <= 0.0 {
            violations.push(Violation::CenterOutsideDomain { face: j, cell: f.cell, half_distance: f.half_distance });
        }
        if mesh.dimension() == 2 && !foot_on_face(mesh, j) {
            violations.push(Violation::FootOutsideFace { face: j, cell: f.cell });
        }
    }

    let d = mesh.dimension() as f64;
    let mut identity_residual: f64 = 0.0;
    for (k, faces) in mesh.cell_faces().iter().enumerate() {
        let recon: f64 = faces.iter().map(|&s| mesh.face_measure(s) * mesh.half_distance(k, s)).sum::<f64>() / d;
        let m = mesh.measures()[k];
        let rel = (recon - m).abs() / m;
        identity_residual = identity_residual.max(rel);
        if rel > tol.identity_rel {
            violations.push(Violation::GeometricIdentity { cell: k, residual: rel });
        }
    }

    let total: f64 = mesh.measures().iter().sum();
    let residual = (total - mesh.domain_measure()).abs() / mesh.domain_measure();
    if residual > tol.identity_rel {
        violations.push(Violation::DomainMeasure { residual });
    }

    AdmissibilityReport {
        quality: MeshQuality { size, regularity: regularity(mesh), min_face_distance, orthogonality_defect: defect },
        violations,
        identity_residual,
    }
}

fn regularity(mesh: &Mesh) -> f64 {
    let mut zeta: f64 = 0.0;
    for (k, faces) in mesh.cell_faces().iter().enumerate() {
        let diam = mesh.diameters()[k];
        for &s in faces {
            let d = mesh.face_distance(s);
            zeta = zeta.max(diam / d + d / diam);
        }
    }
    zeta
}

fn foot_on_face(mesh: &Mesh, j: usize) -> bool {
    let f = &mesh.boundary_faces()[j];
    let [a, b] = f.endpoints;
    let t = sub(b, a);
    let along = dot(sub(f.point, a), t) / dot(t, t);
    (-1e-12..=1.0 + 1e-12).contains(&along)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{staggered_unit_square, Mesh, Triangulation};
    use approx::assert_relative_eq;

    #[test]
    fn uniform_mesh_quality() {
        let mesh = Mesh::uniform_1d(4, [0.0, 1.0]).unwrap();
        let report = validate_admissibility(&mesh, &Tolerances::default());
        assert!(report.is_admissible(), "{:?}", report.violations);
        assert_eq!(report.quality.orthogonality_defect, 0.0);
        assert_relative_eq!(report.quality.regularity, 2.5);
        assert_relative_eq!(report.quality.size, 0.25);
        assert!(report.identity_residual < 1e-10);
    }

    #[test]
    fn lattice_meshes_are_admissible() {
        for nx in [2, 3, 5, 9, 20] {
            let mesh = Mesh::from_triangulation(&staggered_unit_square(nx)).unwrap();
            let report = validate_admissibility(&mesh, &Tolerances::default());
            assert!(report.is_admissible());
            assert!(report.quality.regularity >= 2.0);
            assert!(report.quality.size <= mesh.domain_diameter());
            let total: f64 = mesh.measures().iter().sum();
            assert_relative_eq!(total, 1.0, max_relative = 1e-10);
            assert!(report.identity_residual < 1e-10);
        }
    }

    #[test]
    fn perturbed_center_is_named() {
        let tri = staggered_unit_square(4);
        let mut mesh = Mesh::assemble_triangulation(&tri).unwrap();
        // Rotate one face normal slightly, as if the center segment were tilted.
        let theta: f64 = 1e-3;
        let face = 7;
        {
            let f = &mut mesh.interior_faces_mut()[face];
            let [nx, ny] = f.normal;
            f.normal = [nx * theta.cos() - ny * theta.sin(), nx * theta.sin() + ny * theta.cos()];
        }
        let report = validate_admissibility(&mesh, &Tolerances::default());
        let named: Vec<usize> = report
            .violations
            .iter()
            .filter_map(|v| match v {
                Violation::NonOrthogonal { face, .. } => Some(*face),
                _ => None,
            })
            .collect();
        assert_eq!(named, vec![face]);
        assert_relative_eq!(report.quality.orthogonality_defect, theta, max_relative = 1e-6);
    }

    #[test]
    fn shifted_center_breaks_orthogonality() {
        let tri = staggered_unit_square(4);
        let cells: Vec<Vec<usize>> = tri.triangles.iter().map(|t| t.to_vec()).collect();
        let base = Mesh::assemble_triangulation(&tri).unwrap();
        let mut centers = base.centers().to_vec();
        centers[10][0] += 1e-3;
        let mesh = Mesh::from_polygons(&tri.nodes, &cells, &centers, &[]).unwrap();
        let report = validate_admissibility(&mesh, &Tolerances::default());
        assert!(!report.is_admissible());
        for v in &report.violations {
            match v {
                Violation::NonOrthogonal { cells, .. } => assert!(cells.contains(&10)),
                Violation::HalfDistanceMismatch { .. } | Violation::FootOutsideFace { .. } => {}
                other => panic!("unexpected violation {other}"),
            }
        }
        // The measure identity holds for any center inside or outside the cell.
        assert!(report.identity_residual < 1e-10);
    }

    #[test]
    fn non_delaunay_flip_is_an_orthogonality_violation() {
        // Two triangles over a thin rhombus with the long diagonal: the
        // circumcenters end up on the wrong sides of the shared edge.
        let tri = Triangulation {
            nodes: vec![[0.0, 0.0], [1.0, -0.2], [2.0, 0.0], [1.0, 0.2]],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
            boundary: vec![],
        };
        let err = Mesh::from_triangulation(&tri).unwrap_err();
        let MeshError::OrthogonalityViolation(v) = &err else {
            panic!("unexpected error {err:?}");
        };
        assert!(v.iter().any(|v| matches!(v, Violation::WrongOrientation { face: 0, .. })));
    }

    #[test]
    fn obtuse_boundary_triangle_has_center_outside() {
        let tri = Triangulation {
            nodes: vec![[0.0, 0.0], [2.0, 0.0], [1.0, 0.3]],
            triangles: vec![[0, 1, 2]],
            boundary: vec![],
        };
        let err = Mesh::from_triangulation(&tri).unwrap_err();
        let MeshError::NonAdmissible(v) = err else { panic!() };
        assert!(v.iter().any(|v| matches!(v, Violation::CenterOutsideDomain { face: _, cell: 0, .. })));
    }
}
