//! Uniform (red) refinement of simplicial meshes.

use super::Mesh;
use std::collections::HashMap;

pub(super) fn uniform_refine(mesh: &Mesh, level: usize) -> (Mesh, Vec<usize>) {
    let mut current = mesh.clone();
    let mut parent: Vec<usize> = (0..mesh.n_elements()).collect();
    for _ in 0..level {
        let (next, step_parent) = refine_once(&current);
        parent = step_parent.iter().map(|&p| parent[p]).collect();
        current = next;
    }
    (current, parent)
}

fn refine_once(mesh: &Mesh) -> (Mesh, Vec<usize>) {
    let d = mesh.dim();
    let mut coords = mesh.coords().to_vec();
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, coords: &mut Vec<f64>| -> usize {
        let key = (a.min(b), a.max(b));
        if let Some(&m) = midpoints.get(&key) {
            return m;
        }
        let m = coords.len() / d;
        for r in 0..d {
            let v = 0.5 * (coords[a * d + r] + coords[b * d + r]);
            coords.push(v);
        }
        midpoints.insert(key, m);
        m
    };
    let mut elems = Vec::with_capacity(mesh.elems().len() * (1 << d));
    let mut parent = Vec::with_capacity(mesh.n_elements() * (1 << d));
    for e in 0..mesh.n_elements() {
        let vs = mesh.elem(e).to_vec();
        match d {
            1 => {
                let m = mid(vs[0], vs[1], &mut coords);
                elems.extend_from_slice(&[vs[0], m, m, vs[1]]);
                parent.extend_from_slice(&[e, e]);
            }
            2 => {
                let (a, b, c) = (vs[0], vs[1], vs[2]);
                let mab = mid(a, b, &mut coords);
                let mbc = mid(b, c, &mut coords);
                let mca = mid(c, a, &mut coords);
                elems.extend_from_slice(&[
                    a, mab, mca, mab, b, mbc, mca, mbc, c, mab, mbc, mca,
                ]);
                parent.extend_from_slice(&[e; 4]);
            }
            3 => {
                let (a, b, c, dd) = (vs[0], vs[1], vs[2], vs[3]);
                let m01 = mid(a, b, &mut coords);
                let m02 = mid(a, c, &mut coords);
                let m03 = mid(a, dd, &mut coords);
                let m12 = mid(b, c, &mut coords);
                let m13 = mid(b, dd, &mut coords);
                let m23 = mid(c, dd, &mut coords);
                // four corner tetrahedra
                elems.extend_from_slice(&[
                    a, m01, m02, m03, b, m01, m12, m13, c, m02, m12, m23, dd, m03, m13, m23,
                ]);
                // central octahedron, split around its shortest interior diagonal
                let dist2 = |p: usize, q: usize| -> f64 {
                    (0..3).map(|r| (coords[p * 3 + r] - coords[q * 3 + r]).powi(2)).sum()
                };
                let diags = [
                    ((m01, m23), [m02, m12, m13, m03]),
                    ((m02, m13), [m01, m12, m23, m03]),
                    ((m03, m12), [m01, m13, m23, m02]),
                ];
                let ((p, q), ring) = diags
                    .iter()
                    .min_by(|a, b| dist2(a.0 .0, a.0 .1).partial_cmp(&dist2(b.0 .0, b.0 .1)).unwrap())
                    .copied()
                    .map(|(dg, ring)| (dg, ring))
                    .unwrap();
                for k in 0..4 {
                    elems.extend_from_slice(&[p, q, ring[k], ring[(k + 1) % 4]]);
                }
                parent.extend_from_slice(&[e; 8]);
            }
            _ => unreachable!(),
        }
    }
    let fine = Mesh::new(d, coords, elems, None).expect("refinement preserves validity");
    (fine, parent)
}
