//! Mesh generators for simple domains: intervals, rectangles, cuboids and
//! the unit disk.

use super::{Mesh, MeshError};

fn check_grid(g: &[f64]) -> Result<(), MeshError> {
    if g.len() < 2 || g.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MeshError::NonMonotoneGrid);
    }
    Ok(())
}

/// 1D mesh on the given grid: segments between consecutive grid points.
pub fn interval_mesh(x: &[f64]) -> Result<Mesh, MeshError> {
    check_grid(x)?;
    let n = x.len();
    let elems: Vec<usize> = (0..n - 1).flat_map(|i| [i, i + 1]).collect();
    Mesh::new(1, x.to_vec(), elems, None)
}

/// Triangulates the rectangle spanned by grid vectors `x` and `y`.
/// job = 1 splits each cell into 4 triangles around its centroid,
/// job = 2 and job = 3 split into 2 triangles with the two diagonal
/// orientations.
pub fn rect2tri(x: &[f64], y: &[f64], job: u8) -> Result<Mesh, MeshError> {
    check_grid(x)?;
    check_grid(y)?;
    if !(1..=3).contains(&job) {
        return Err(MeshError::Invalid(format!("job must be 1, 2 or 3, got {job}")));
    }
    let (nx, ny) = (x.len(), y.len());
    let mut coords = Vec::with_capacity(nx * ny * 2);
    for j in 0..ny {
        for i in 0..nx {
            coords.push(x[i]);
            coords.push(y[j]);
        }
    }
    let id = |i: usize, j: usize| j * nx + i;
    let mut elems = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            match job {
                1 => {
                    let c = coords.len() / 2;
                    coords.push(0.5 * (x[i] + x[i + 1]));
                    coords.push(0.5 * (y[j] + y[j + 1]));
                    elems.extend_from_slice(&[v00, v10, c, v10, v11, c, v11, v01, c, v01, v00, c]);
                }
                2 => {
                    elems.extend_from_slice(&[v00, v10, v11, v00, v11, v01]);
                }
                3 => {
                    elems.extend_from_slice(&[v00, v10, v01, v10, v11, v01]);
                }
                _ => unreachable!(),
            }
        }
    }
    Mesh::new(2, coords, elems, None)
}

/// Tetrahedralizes the cuboid spanned by `x`, `y`, `z`: each subcuboid is
/// divided into 6 tetrahedra (Kuhn decomposition, conforming across cells).
pub fn cube2tet(x: &[f64], y: &[f64], z: &[f64]) -> Result<Mesh, MeshError> {
    check_grid(x)?;
    check_grid(y)?;
    check_grid(z)?;
    let (nx, ny, nz) = (x.len(), y.len(), z.len());
    let mut coords = Vec::with_capacity(nx * ny * nz * 3);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                coords.extend_from_slice(&[x[i], y[j], z[k]]);
            }
        }
    }
    let id = |i: usize, j: usize, k: usize| (k * ny + j) * nx + i;
    // the 6 permutations of the unit-cube path decomposition
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut elems = Vec::new();
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                for perm in PERMS {
                    let mut off = [0usize; 3];
                    let mut tet = [id(i, j, k); 4];
                    for (step, &axis) in perm.iter().enumerate() {
                        off[axis] = 1;
                        tet[step + 1] = id(i + off[0], j + off[1], k + off[2]);
                    }
                    elems.extend_from_slice(&tet);
                }
            }
        }
    }
    Mesh::new(3, coords, elems, None)
}

/// Triangular mesh of the unit disk built from `jmax` concentric rings;
/// ring j carries 6j equally spaced vertices, so the boundary vertices lie
/// exactly on the unit circle.
pub fn circle2tri(jmax: usize) -> Result<Mesh, MeshError> {
    if jmax < 1 {
        return Err(MeshError::Invalid("jmax must be at least 1".into()));
    }
    let mut coords = vec![0.0, 0.0];
    let mut ring_start = vec![0usize]; // index of first vertex of ring j
    for j in 1..=jmax {
        ring_start.push(coords.len() / 2);
        let r = j as f64 / jmax as f64;
        let n = 6 * j;
        for k in 0..n {
            let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            coords.push(r * a.cos());
            coords.push(r * a.sin());
        }
    }
    let mut elems = Vec::new();
    // innermost fan
    for k in 0..6 {
        elems.extend_from_slice(&[0, ring_start[1] + k, ring_start[1] + (k + 1) % 6]);
    }
    // annuli between rings j-1 and j, triangulated by an angular merge walk
    for j in 2..=jmax {
        let (n1, n2) = (6 * (j - 1), 6 * j);
        let (s1, s2) = (ring_start[j - 1], ring_start[j]);
        let (mut i, mut k) = (0usize, 0usize);
        while i < n1 || k < n2 {
            let t_inner = (i + 1) as f64 / n1 as f64;
            let t_outer = (k + 1) as f64 / n2 as f64;
            if k < n2 && (i == n1 || t_outer <= t_inner) {
                elems.extend_from_slice(&[s1 + i % n1, s2 + k, s2 + (k + 1) % n2]);
                k += 1;
            } else {
                elems.extend_from_slice(&[s1 + i % n1, s2 + k % n2, s1 + (i + 1) % n1]);
                i += 1;
            }
        }
    }
    Mesh::new(2, coords, elems, None)
}
