use super::Triangulation;

/// Delaunay triangulation of the unit square built on a staggered
/// (near-equilateral) lattice with `nx` columns.
///
/// Every other row is shifted by half a column and closed off with nodes on
/// the vertical sides, so all boundary triangles have their circumcenters
/// strictly inside the square. The row count is chosen to make interior
/// triangles as close to equilateral as the unit square allows. This is a
/// test and preset fixture, not a general mesh generator.
pub fn staggered_unit_square(nx: usize) -> Triangulation {
    let nx = nx.max(1);
    let ny = ((nx as f64) * 2.0 / 3f64.sqrt()).round().max(1.0) as usize;
    let h = 1.0 / nx as f64;

    let mut nodes = Vec::new();
    let mut rows: Vec<Vec<usize>> = Vec::with_capacity(ny + 1);
    for j in 0..=ny {
        let y = if j == ny { 1.0 } else { j as f64 / ny as f64 };
        let xs: Vec<f64> = if j % 2 == 0 {
            (0..=nx).map(|i| if i == nx { 1.0 } else { i as f64 * h }).collect()
        } else {
            std::iter::once(0.0).chain((0..nx).map(|i| (i as f64 + 0.5) * h)).chain(std::iter::once(1.0)).collect()
        };
        rows.push(
            xs.into_iter()
                .map(|x| {
                    nodes.push([x, y]);
                    nodes.len() - 1
                })
                .collect(),
        );
    }

    let mut triangles = Vec::new();
    for j in 0..ny {
        let (lower, upper) = (&rows[j], &rows[j + 1]);
        let (mut a, mut b) = (0, 0);
        let x = |i: usize| nodes[i][0];
        while a + 1 < lower.len() || b + 1 < upper.len() {
            let advance_lower = if a + 1 == lower.len() {
                false
            } else if b + 1 == upper.len() {
                true
            } else {
                let (nl, nu) = (x(lower[a + 1]), x(upper[b + 1]));
                if nl != nu {
                    nl < nu
                } else {
                    x(lower[a]) < x(upper[b])
                }
            };
            if advance_lower {
                triangles.push([lower[a], lower[a + 1], upper[b]]);
                a += 1;
            } else {
                triangles.push([lower[a], upper[b + 1], upper[b]]);
                b += 1;
            }
        }
    }

    Triangulation { nodes, triangles, boundary: Vec::new() }
}
