//! Admissible two-point-flux meshes.
//!
//! A [`Mesh`] stores everything the flux scheme needs: cell centers and
//! measures, the interior/exterior face partition, face measures, center
//! distances `d_σ` and the signed half distances `d_{Kσ}`. Meshes are
//! immutable once built.
//!
//! Interior faces are oriented from their first cell `K` to their second
//! cell `L`; boundary faces are oriented outward.

mod io;
mod lattice;
mod validate;

pub use io::Triangulation;
pub use lattice::staggered_unit_square;
pub use validate::{validate_admissibility, AdmissibilityReport, MeshQuality, Tolerances, Violation};

use std::collections::HashMap;

use thiserror::Error;

/// A point of the plane. One-dimensional meshes use the first coordinate only.
pub type Point = [f64; 2];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid mesh input: {0}")]
    InvalidInput(String),
    #[error("mesh is not admissible: {}", describe(.0))]
    NonAdmissible(Vec<Violation>),
    #[error("orthogonality condition violated: {}", describe(.0))]
    OrthogonalityViolation(Vec<Violation>),
    #[error("mesh file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn describe(violations: &[Violation]) -> String {
    const SHOWN: usize = 5;
    let mut parts: Vec<String> = violations.iter().take(SHOWN).map(|v| v.to_string()).collect();
    if violations.len() > SHOWN {
        parts.push(format!("and {} more", violations.len() - SHOWN));
    }
    parts.join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaceRef {
    Interior(usize),
    Boundary(usize),
}

/// Face `σ = K|L` shared by two cells.
#[derive(Debug, Clone)]
pub struct InteriorFace {
    /// `[K, L]`; the normal points from `K` to `L`.
    pub cells: [usize; 2],
    /// `m_σ` (equals 1 in 1D).
    pub measure: f64,
    /// `d_σ = |x_L - x_K|`.
    pub distance: f64,
    /// Intersection of `[x_K, x_L]` with the face hyperplane.
    pub point: Point,
    /// Signed `[d_{Kσ}, d_{Lσ}]`.
    pub half_distances: [f64; 2],
    /// Unit normal outward with respect to `K`.
    pub normal: Point,
}

impl InteriorFace {
    pub fn transmissibility(&self) -> f64 {
        self.measure / self.distance
    }
}

/// Face lying on the domain boundary.
#[derive(Debug, Clone)]
pub struct BoundaryFace {
    pub cell: usize,
    pub measure: f64,
    /// `d_σ = |x_σ - x_K|`.
    pub distance: f64,
    /// Foot of the perpendicular from the cell center.
    pub point: Point,
    /// Signed `d_{Kσ}`; positive when the cell center lies inside the domain.
    pub half_distance: f64,
    pub normal: Point,
    /// End points of the face (both equal to `point` in 1D).
    pub endpoints: [Point; 2],
    pub marker: Option<i64>,
}

impl BoundaryFace {
    pub fn transmissibility(&self) -> f64 {
        self.measure / self.distance
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    centers: Vec<Point>,
    measures: Vec<f64>,
    diameters: Vec<f64>,
    polygons: Vec<Vec<Point>>,
    interior: Vec<InteriorFace>,
    boundary: Vec<BoundaryFace>,
    cell_faces: Vec<Vec<FaceRef>>,
    domain_measure: f64,
    domain_diameter: f64,
}

impl Mesh {
    /// Uniform grid of `n_cells` cells on `[a, b]` with cell-midpoint centers.
    pub fn uniform_1d(n_cells: usize, interval: [f64; 2]) -> Result<Self, MeshError> {
        let [a, b] = interval;
        if n_cells == 0 {
            return Err(MeshError::InvalidInput("a 1D mesh needs at least one cell".into()));
        }
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(MeshError::InvalidInput(format!("invalid interval [{a}, {b}]")));
        }
        let h = (b - a) / n_cells as f64;
        let node = |i: usize| if i == n_cells { b } else { a + i as f64 * h };

        let mut centers = Vec::with_capacity(n_cells);
        let mut polygons = Vec::with_capacity(n_cells);
        for i in 0..n_cells {
            let (l, r) = (node(i), node(i + 1));
            centers.push([0.5 * (l + r), 0.0]);
            polygons.push(vec![[l, 0.0], [r, 0.0]]);
        }
        let mut cell_faces = vec![Vec::with_capacity(2); n_cells];
        let mut interior = Vec::with_capacity(n_cells.saturating_sub(1));
        for i in 0..n_cells.saturating_sub(1) {
            let x = node(i + 1);
            let dk = x - centers[i][0];
            let dl = centers[i + 1][0] - x;
            interior.push(InteriorFace {
                cells: [i, i + 1],
                measure: 1.0,
                distance: centers[i + 1][0] - centers[i][0],
                point: [x, 0.0],
                half_distances: [dk, dl],
                normal: [1.0, 0.0],
            });
            cell_faces[i].push(FaceRef::Interior(i));
            cell_faces[i + 1].push(FaceRef::Interior(i));
        }
        let last = n_cells - 1;
        let boundary = vec![
            BoundaryFace {
                cell: 0,
                measure: 1.0,
                distance: centers[0][0] - a,
                point: [a, 0.0],
                half_distance: centers[0][0] - a,
                normal: [-1.0, 0.0],
                endpoints: [[a, 0.0]; 2],
                marker: None,
            },
            BoundaryFace {
                cell: last,
                measure: 1.0,
                distance: b - centers[last][0],
                point: [b, 0.0],
                half_distance: b - centers[last][0],
                normal: [1.0, 0.0],
                endpoints: [[b, 0.0]; 2],
                marker: None,
            },
        ];
        cell_faces[0].push(FaceRef::Boundary(0));
        cell_faces[last].push(FaceRef::Boundary(1));

        Ok(Mesh {
            dim: 1,
            measures: polygons.iter().map(|p| p[1][0] - p[0][0]).collect(),
            diameters: polygons.iter().map(|p| p[1][0] - p[0][0]).collect(),
            centers,
            polygons,
            interior,
            boundary,
            cell_faces,
            domain_measure: b - a,
            domain_diameter: b - a,
        })
    }

    /// Circumcenter-based mesh of a triangulation, rejected unless admissible.
    pub fn from_triangulation(tri: &Triangulation) -> Result<Self, MeshError> {
        let mesh = Self::assemble_triangulation(tri)?;
        let report = validate_admissibility(&mesh, &Tolerances::default());
        report.into_result()?;
        Ok(mesh)
    }

    /// Geometry of a triangulation with circumcenters as cell centers, without
    /// checking admissibility.
    pub fn assemble_triangulation(tri: &Triangulation) -> Result<Self, MeshError> {
        let cells: Vec<Vec<usize>> = tri.triangles.iter().map(|t| t.to_vec()).collect();
        let mut centers = Vec::with_capacity(cells.len());
        for (k, t) in tri.triangles.iter().enumerate() {
            let p = t.map(|i| tri.nodes.get(i).copied());
            let [Some(a), Some(b), Some(c)] = p else {
                return Err(MeshError::InvalidInput(format!("triangle {k} references a missing node")));
            };
            centers.push(
                circumcenter(a, b, c).ok_or_else(|| MeshError::InvalidInput(format!("triangle {k} is degenerate")))?,
            );
        }
        Self::from_polygons(&tri.nodes, &cells, &centers, &tri.boundary)
    }

    /// General 2D assembly from convex polygonal cells with arbitrary centers.
    ///
    /// Interior face points are the intersection of the center segment with the
    /// face line; boundary face points are feet of perpendiculars. Nothing is
    /// validated beyond topology; see [`validate_admissibility`].
    pub fn from_polygons(
        nodes: &[Point],
        cells: &[Vec<usize>],
        centers: &[Point],
        markers: &[(usize, usize, i64)],
    ) -> Result<Self, MeshError> {
        if cells.is_empty() {
            return Err(MeshError::InvalidInput("no cells".into()));
        }
        if centers.len() != cells.len() {
            return Err(MeshError::InvalidInput(format!("{} centers for {} cells", centers.len(), cells.len())));
        }

        // Counter-clockwise vertex loops.
        let mut loops = Vec::with_capacity(cells.len());
        for (k, cell) in cells.iter().enumerate() {
            if cell.len() < 3 {
                return Err(MeshError::InvalidInput(format!("cell {k} has fewer than 3 vertices")));
            }
            if let Some(&bad) = cell.iter().find(|&&i| i >= nodes.len()) {
                return Err(MeshError::InvalidInput(format!("cell {k} references missing node {bad}")));
            }
            let mut lp = cell.clone();
            let area = signed_area(lp.iter().map(|&i| nodes[i]));
            if area.abs() <= f64::EPSILON * bbox_scale(lp.iter().map(|&i| nodes[i])).powi(2) {
                return Err(MeshError::InvalidInput(format!("cell {k} has zero area")));
            }
            if area < 0.0 {
                lp.reverse();
            }
            loops.push(lp);
        }

        let mut edge_owner: HashMap<(usize, usize), (usize, usize, usize)> = HashMap::new();
        let mut interior = Vec::new();
        let mut cell_faces = vec![Vec::new(); cells.len()];
        let mut pending: Vec<(usize, usize)> = Vec::new();
        for (k, lp) in loops.iter().enumerate() {
            for j in 0..lp.len() {
                let (a, b) = (lp[j], lp[(j + 1) % lp.len()]);
                if a == b {
                    return Err(MeshError::InvalidInput(format!("cell {k} repeats node {a}")));
                }
                let key = (a.min(b), a.max(b));
                match edge_owner.remove(&key) {
                    None => {
                        edge_owner.insert(key, (k, a, b));
                    }
                    Some((owner, oa, ob)) => {
                        if owner == k || (oa, ob) == (a, b) {
                            return Err(MeshError::InvalidInput(format!(
                                "edge ({a}, {b}) is shared inconsistently by cells {owner} and {k}"
                            )));
                        }
                        let face = interior_face(nodes[oa], nodes[ob], [owner, k], centers);
                        cell_faces[owner].push(FaceRef::Interior(interior.len()));
                        cell_faces[k].push(FaceRef::Interior(interior.len()));
                        interior.push(face);
                        pending.push(key);
                    }
                }
            }
        }
        // An edge seen a third time would have been re-inserted as a boundary
        // candidate after being consumed by an interior face.
        let shared: std::collections::HashSet<_> = pending.into_iter().collect();
        if let Some(key) = edge_owner.keys().find(|k| shared.contains(*k)) {
            return Err(MeshError::InvalidInput(format!("edge ({}, {}) belongs to more than two cells", key.0, key.1)));
        }

        let marker_map: HashMap<(usize, usize), i64> =
            markers.iter().map(|&(i, j, m)| ((i.min(j), i.max(j)), m)).collect();
        for key in marker_map.keys() {
            if !edge_owner.contains_key(key) {
                return Err(MeshError::InvalidInput(format!(
                    "boundary marker on ({}, {}), which is not a boundary edge",
                    key.0, key.1
                )));
            }
        }

        // Deterministic boundary ordering.
        let mut boundary_edges: Vec<_> = edge_owner.into_iter().collect();
        boundary_edges.sort_unstable_by_key(|&(key, _)| key);
        let mut boundary = Vec::with_capacity(boundary_edges.len());
        let mut enclosed = 0.0;
        for (key, (k, a, b)) in boundary_edges {
            let (pa, pb) = (nodes[a], nodes[b]);
            enclosed += 0.5 * cross(pa, pb);
            let normal = outward_normal(pa, pb);
            let xk = centers[k];
            let t = sub(pb, pa);
            let s = dot(sub(xk, pa), t) / dot(t, t);
            let foot = add(pa, scale(t, s));
            cell_faces[k].push(FaceRef::Boundary(boundary.len()));
            boundary.push(BoundaryFace {
                cell: k,
                measure: norm(t),
                distance: norm(sub(foot, xk)),
                point: foot,
                half_distance: dot(sub(pa, xk), normal),
                normal,
                endpoints: [pa, pb],
                marker: marker_map.get(&key).copied(),
            });
        }

        let polygons: Vec<Vec<Point>> = loops.iter().map(|lp| lp.iter().map(|&i| nodes[i]).collect()).collect();
        let mut hull_points: Vec<Point> = Vec::new();
        for lp in &loops {
            for j in 0..lp.len() {
                let key = (lp[j].min(lp[(j + 1) % lp.len()]), lp[j].max(lp[(j + 1) % lp.len()]));
                if !shared.contains(&key) {
                    hull_points.push(nodes[lp[j]]);
                }
            }
        }

        Ok(Mesh {
            dim: 2,
            centers: centers.to_vec(),
            measures: polygons.iter().map(|p| signed_area(p.iter().copied())).collect(),
            diameters: polygons.iter().map(|p| diameter(p)).collect(),
            polygons,
            interior,
            boundary,
            cell_faces,
            domain_measure: enclosed,
            domain_diameter: diameter(&hull_points),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }
    pub fn n_cells(&self) -> usize {
        self.centers.len()
    }
    pub fn centers(&self) -> &[Point] {
        &self.centers
    }
    pub fn measures(&self) -> &[f64] {
        &self.measures
    }
    pub fn diameters(&self) -> &[f64] {
        &self.diameters
    }
    /// Vertices of each cell, counter-clockwise in 2D, `[left, right]` in 1D.
    pub fn cell_polygons(&self) -> &[Vec<Point>] {
        &self.polygons
    }
    pub fn interior_faces(&self) -> &[InteriorFace] {
        &self.interior
    }
    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary
    }
    /// `E_K` for every cell.
    pub fn cell_faces(&self) -> &[Vec<FaceRef>] {
        &self.cell_faces
    }
    /// Measure of the domain, computed from the boundary alone.
    pub fn domain_measure(&self) -> f64 {
        self.domain_measure
    }
    pub fn domain_diameter(&self) -> f64 {
        self.domain_diameter
    }
    /// `δ_T`.
    pub fn size(&self) -> f64 {
        self.diameters.iter().copied().fold(0.0, f64::max)
    }

    /// Signed `d_{Kσ}` for a face of cell `k`.
    pub fn half_distance(&self, k: usize, face: FaceRef) -> f64 {
        match face {
            FaceRef::Interior(i) => {
                let f = &self.interior[i];
                if f.cells[0] == k {
                    f.half_distances[0]
                } else {
                    f.half_distances[1]
                }
            }
            FaceRef::Boundary(j) => self.boundary[j].half_distance,
        }
    }

    pub fn face_measure(&self, face: FaceRef) -> f64 {
        match face {
            FaceRef::Interior(i) => self.interior[i].measure,
            FaceRef::Boundary(j) => self.boundary[j].measure,
        }
    }

    pub fn face_distance(&self, face: FaceRef) -> f64 {
        match face {
            FaceRef::Interior(i) => self.interior[i].distance,
            FaceRef::Boundary(j) => self.boundary[j].distance,
        }
    }

    #[cfg(test)]
    pub(crate) fn interior_faces_mut(&mut self) -> &mut [InteriorFace] {
        &mut self.interior
    }
}

fn interior_face(pa: Point, pb: Point, cells: [usize; 2], centers: &[Point]) -> InteriorFace {
    let normal = outward_normal(pa, pb);
    let (xk, xl) = (centers[cells[0]], centers[cells[1]]);
    let v = sub(xl, xk);
    let t = sub(pb, pa);
    let denom = cross(v, t);
    let point = if denom.abs() > 1e-300 {
        // xk + λ v lies on the face line.
        let lambda = cross(sub(pa, xk), t) / denom;
        add(xk, scale(v, lambda))
    } else {
        scale(add(pa, pb), 0.5)
    };
    InteriorFace {
        cells,
        measure: norm(t),
        distance: norm(v),
        point,
        half_distances: [dot(sub(pa, xk), normal), dot(sub(xl, pa), normal)],
        normal,
    }
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}
pub(crate) fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}
pub(crate) fn scale(a: Point, s: f64) -> Point {
    [a[0] * s, a[1] * s]
}
pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}
pub(crate) fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}
pub(crate) fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

/// Unit normal to the right of the directed edge `a -> b` (outward for a
/// counter-clockwise cell).
fn outward_normal(a: Point, b: Point) -> Point {
    let t = sub(b, a);
    let len = norm(t);
    [t[1] / len, -t[0] / len]
}

fn signed_area(points: impl Iterator<Item = Point> + Clone) -> f64 {
    let pts: Vec<Point> = points.collect();
    let n = pts.len();
    0.5 * (0..n).map(|i| cross(pts[i], pts[(i + 1) % n])).sum::<f64>()
}

fn bbox_scale(points: impl Iterator<Item = Point>) -> f64 {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    norm(sub(hi, lo))
}

fn diameter(points: &[Point]) -> f64 {
    let mut best: f64 = 0.0;
    for (i, &p) in points.iter().enumerate() {
        for &q in &points[i + 1..] {
            best = best.max(norm(sub(p, q)));
        }
    }
    best
}

/// Circumcenter of a non-degenerate triangle.
pub fn circumcenter(a: Point, b: Point, c: Point) -> Option<Point> {
    let (ab, ac) = (sub(b, a), sub(c, a));
    let d = 2.0 * cross(ab, ac);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let (nb, nc) = (dot(ab, ab), dot(ac, ac));
    let ux = (ac[1] * nb - ab[1] * nc) / d;
    let uy = (ab[0] * nc - ac[0] * nb) / d;
    Some([a[0] + ux, a[1] + uy])
}
