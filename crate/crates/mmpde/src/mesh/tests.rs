use super::*;
use crate::metric::MetricField;

fn grid(n: usize) -> Vec<f64> {
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

fn unit_square(n: usize) -> Mesh {
    rect2tri(&grid(n), &grid(n), 2).unwrap()
}

#[test]
fn rect2tri_counts() {
    let m2 = rect2tri(&[0.0, 1.0], &[0.0, 1.0], 2).unwrap();
    assert_eq!(m2.n_elements(), 2);
    assert_eq!(m2.n_vertices(), 4);
    let m1 = rect2tri(&[0.0, 1.0], &[0.0, 1.0], 1).unwrap();
    assert_eq!(m1.n_elements(), 4);
    assert_eq!(m1.n_vertices(), 5);
}

#[test]
fn rect2tri_area_sums_to_domain() {
    let m = rect2tri(&[0.0, 0.5, 1.0], &[0.0, 1.0], 3).unwrap();
    assert_eq!(m.n_elements(), 4);
    assert!((m.total_volume() - 1.0).abs() < 1e-14);
}

#[test]
fn rect2tri_rejects_bad_grid() {
    assert!(matches!(rect2tri(&[0.0, 0.0], &[0.0, 1.0], 2), Err(MeshError::NonMonotoneGrid)));
    assert!(matches!(rect2tri(&[1.0], &[0.0, 1.0], 2), Err(MeshError::NonMonotoneGrid)));
}

#[test]
fn cube2tet_counts_and_volume() {
    let g = [0.0, 1.0];
    let m = cube2tet(&g, &g, &g).unwrap();
    assert_eq!(m.n_elements(), 6);
    assert!((m.total_volume() - 1.0).abs() < 1e-12);
    let m2 = cube2tet(&[0.0, 0.5, 1.0], &g, &g).unwrap();
    assert_eq!(m2.n_elements(), 12);
    // no inverted elements under the fixed orientation
    for e in 0..m2.n_elements() {
        assert!(m2.signed_volume(e) > 0.0);
    }
}

#[test]
fn cube2tet_is_conforming() {
    // every interior facet shared by exactly 2 elements
    let g = [0.0, 0.5, 1.0];
    let m = cube2tet(&g, &g, &g).unwrap();
    let mut counts = std::collections::HashMap::new();
    for e in 0..m.n_elements() {
        let vs = m.elem(e);
        for skip in 0..4 {
            let mut key: Vec<usize> = (0..4).filter(|&k| k != skip).map(|k| vs[k]).collect();
            key.sort_unstable();
            *counts.entry(key).or_insert(0usize) += 1;
        }
    }
    assert!(counts.values().all(|&c| c == 1 || c == 2));
    let nb = counts.values().filter(|&&c| c == 1).count();
    assert_eq!(nb, m.n_boundary_facets());
}

#[test]
fn circle2tri_area_and_boundary() {
    let pi = std::f64::consts::PI;
    let coarse = circle2tri(1).unwrap();
    assert!((coarse.total_volume() - pi).abs() / pi < 0.4);
    let fine = circle2tri(6).unwrap();
    assert!((fine.total_volume() - pi).abs() / pi < 0.02);
    // all vertices inside the closed disk, boundary vertices exactly on it
    for v in 0..fine.n_vertices() {
        let x = fine.vertex(v);
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        assert!(r <= 1.0 + 1e-12);
    }
    let on_bd = fine.boundary_vertices();
    for v in 0..fine.n_vertices() {
        if on_bd[v] {
            let x = fine.vertex(v);
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            assert!((r - 1.0).abs() < 1e-12);
        }
    }
    assert!(matches!(circle2tri(0), Err(MeshError::Invalid(_))));
}

#[test]
fn free_boundary_square_and_cube() {
    let sq = unit_square(1);
    assert_eq!(sq.n_boundary_facets(), 4);
    let g = [0.0, 1.0];
    let cube = cube2tet(&g, &g, &g).unwrap();
    // brute-force facet counting oracle
    let mut counts = std::collections::HashMap::new();
    for e in 0..cube.n_elements() {
        let vs = cube.elem(e);
        for skip in 0..4 {
            let mut key: Vec<usize> = (0..4).filter(|&k| k != skip).map(|k| vs[k]).collect();
            key.sort_unstable();
            *counts.entry(key).or_insert(0usize) += 1;
        }
    }
    let expect = counts.values().filter(|&&c| c == 1).count();
    assert_eq!(cube.n_boundary_facets(), expect);
    assert_eq!(cube.n_boundary_facets(), 12);
}

#[test]
fn refined_boundary_quadruples_in_3d() {
    let g = [0.0, 1.0];
    let cube = cube2tet(&g, &g, &g).unwrap();
    let (fine, _) = cube.uniform_refine(1);
    assert_eq!(fine.n_boundary_facets(), 4 * cube.n_boundary_facets());
    let (finer, _) = fine.uniform_refine(1);
    assert_eq!(finer.n_boundary_facets(), 4 * fine.n_boundary_facets());
}

#[test]
fn face_normals_on_square_and_cube() {
    let sq = unit_square(1);
    let normals = sq.face_normals().unwrap();
    let mut centroid = [0.0; 2];
    for f in 0..sq.n_boundary_facets() {
        sq.facet_centroid(f, &mut centroid);
        let n = &normals[f * 2..(f + 1) * 2];
        if centroid[1].abs() < 1e-12 {
            assert!((n[0] - 0.0).abs() < 1e-12 && (n[1] + 1.0).abs() < 1e-12);
        }
        // outward everywhere: n . (centroid - domain center) > 0
        let dot = n[0] * (centroid[0] - 0.5) + n[1] * (centroid[1] - 0.5);
        assert!(dot > 0.0);
    }
    let g = [0.0, 1.0];
    let cube = cube2tet(&g, &g, &g).unwrap();
    let normals = cube.face_normals().unwrap();
    let mut c3 = [0.0; 3];
    for f in 0..cube.n_boundary_facets() {
        cube.facet_centroid(f, &mut c3);
        let n = &normals[f * 3..(f + 1) * 3];
        if (c3[0] - 1.0).abs() < 1e-12 {
            assert!((n[0] - 1.0).abs() < 1e-12 && n[1].abs() < 1e-12 && n[2].abs() < 1e-12);
        }
    }
}

#[test]
fn vertex_normals_interior_convention() {
    let sq = unit_square(2);
    let vn = sq.vertex_normals().unwrap();
    let on_bd = sq.boundary_vertices();
    let inv_sqrt2 = 1.0 / 2f64.sqrt();
    for v in 0..sq.n_vertices() {
        if !on_bd[v] {
            assert!((vn[v * 2] - inv_sqrt2).abs() < 1e-14);
            assert!((vn[v * 2 + 1] - inv_sqrt2).abs() < 1e-14);
        } else {
            let len = (vn[v * 2].powi(2) + vn[v * 2 + 1].powi(2)).sqrt();
            assert!((len - 1.0).abs() < 1e-12);
        }
    }
    // 1D: endpoint normals are +-1
    let line = interval_mesh(&grid(4)).unwrap();
    let fnorm = line.face_normals().unwrap();
    let vals: Vec<f64> = (0..line.n_boundary_facets())
        .map(|f| fnorm[f] * line.vertex(line.facet(f)[0])[0].signum().max(0.0).mul_add(2.0, -1.0))
        .collect();
    // left endpoint (x=0): normal -1; right endpoint (x=1): +1
    for (f, v) in vals.iter().enumerate() {
        let x = line.vertex(line.facet(f)[0])[0];
        if x < 0.5 {
            assert_eq!(fnorm[f], -1.0);
        } else {
            assert_eq!(fnorm[f], 1.0);
        }
        let _ = v;
    }
}

#[test]
fn merge_shared_edge_unifies_vertices() {
    let left = unit_square(1);
    let right_coords: Vec<f64> = left
        .coords()
        .chunks(2)
        .flat_map(|p| [p[0] + 1.0, p[1]])
        .collect();
    let right = Mesh::new(2, right_coords, left.elems().to_vec(), None).unwrap();
    let merged = left.merge(&right).unwrap();
    assert_eq!(merged.n_vertices(), 6);
    assert_eq!(merged.n_elements(), 4);
    // interface edges (x = 1) are interior now
    for f in 0..merged.n_boundary_facets() {
        let mut c = [0.0; 2];
        merged.facet_centroid(f, &mut c);
        assert!((c[0] - 1.0).abs() > 1e-9);
    }
    assert!((merged.total_volume() - 2.0).abs() < 1e-12);
}

#[test]
fn merge_disjoint_sums_counts() {
    let a = unit_square(1);
    let b_coords: Vec<f64> = a.coords().chunks(2).flat_map(|p| [p[0] + 5.0, p[1]]).collect();
    let b = Mesh::new(2, b_coords, a.elems().to_vec(), None).unwrap();
    let m = a.merge(&b).unwrap();
    assert_eq!(m.n_vertices(), a.n_vertices() + b.n_vertices());
    assert_eq!(m.n_elements(), a.n_elements() + b.n_elements());
}

#[test]
fn merge_with_empty_is_identity() {
    let a = unit_square(1);
    let m = a.merge(&Mesh::empty(2)).unwrap();
    assert_eq!(m.n_vertices(), a.n_vertices());
    assert_eq!(m.n_elements(), a.n_elements());
    assert_eq!(m.coords(), a.coords());
    let dim_err = a.merge(&Mesh::empty(3));
    assert!(matches!(dim_err, Err(MeshError::DimMismatch(2, 3))));
}

#[test]
fn remove_nodes_drops_incident_elements() {
    let sq = unit_square(1); // vertices 0..4, 2 triangles
    // removing one corner that belongs to a single triangle leaves 1 triangle
    let per_vertex = sq.vertex_patches();
    let corner = (0..4).find(|&v| per_vertex[v].len() == 1).unwrap();
    let m = sq.remove_nodes(&[corner]).unwrap();
    assert_eq!(m.n_elements(), 1);
    assert_eq!(m.n_vertices(), 3);

    let same = sq.remove_nodes(&[]).unwrap();
    assert_eq!(same.n_vertices(), sq.n_vertices());
    assert_eq!(same.n_elements(), sq.n_elements());
    assert_eq!(same.coords(), sq.coords());

    assert!(matches!(
        sq.remove_nodes(&[99]),
        Err(MeshError::BadVertexIndex { idx: 99, .. })
    ));
    assert!(sq.remove_nodes(&[0, 1, 2, 3]).is_err());
}

#[test]
fn uniform_refine_counts_and_volume() {
    let sq = unit_square(1);
    let (fine, parent) = sq.uniform_refine(1);
    assert_eq!(fine.n_elements(), 8);
    assert_eq!(parent.len(), 8);
    assert!(parent.iter().all(|&p| p < 2));
    assert!((fine.total_volume() - sq.total_volume()).abs() < 1e-12);

    let (same, parent0) = sq.uniform_refine(0);
    assert_eq!(same.n_elements(), sq.n_elements());
    assert_eq!(parent0, vec![0, 1]);

    let g = [0.0, 1.0];
    let cube = cube2tet(&g, &g, &g).unwrap();
    let (fine3, parent3) = cube.uniform_refine(1);
    assert_eq!(fine3.n_elements(), 48);
    assert!((fine3.total_volume() - 1.0).abs() < 1e-12);
    // each parent has exactly 8 children
    let mut counts = [0usize; 6];
    for &p in &parent3 {
        counts[p] += 1;
    }
    assert!(counts.iter().all(|&c| c == 8));
    // conforming after refinement in 3d
    let mut fcnt = std::collections::HashMap::new();
    for e in 0..fine3.n_elements() {
        let vs = fine3.elem(e);
        for skip in 0..4 {
            let mut key: Vec<usize> = (0..4).filter(|&k| k != skip).map(|k| vs[k]).collect();
            key.sort_unstable();
            *fcnt.entry(key).or_insert(0usize) += 1;
        }
    }
    assert!(fcnt.values().all(|&c| c <= 2));
}

#[test]
fn lin_interp_reproduces_linears() {
    let m = unit_square(3);
    let f: Vec<f64> = (0..m.n_vertices())
        .map(|v| {
            let x = m.vertex(v);
            2.0 * x[0] + 3.0 * x[1] + 0.5
        })
        .collect();
    let qp = [0.33, 0.57, 0.011, 0.93, 0.5, 0.5];
    for use_del in [false, true] {
        let out = lin_interp(&f, 1, &m, &qp, use_del).unwrap();
        for (q, chunk) in qp.chunks(2).enumerate() {
            let want = 2.0 * chunk[0] + 3.0 * chunk[1] + 0.5;
            assert!((out[q] - want).abs() < 1e-12, "use_del={use_del}");
        }
    }
}

#[test]
fn lin_interp_at_vertices_returns_vertex_values() {
    let m = circle2tri(3).unwrap();
    let f: Vec<f64> = (0..m.n_vertices()).map(|v| (v as f64).sin()).collect();
    let out = lin_interp(&f, 1, &m, m.coords(), false).unwrap();
    for v in 0..m.n_vertices() {
        assert!((out[v] - f[v]).abs() < 1e-10);
    }
}

#[test]
fn lin_interp_converges_on_quadratics() {
    // interpolation error of u = x^2 + y^2 shrinks ~4x per refinement
    let probe = [0.41, 0.13, 0.77, 0.68, 0.23, 0.55];
    let exact: Vec<f64> = probe.chunks(2).map(|p| p[0] * p[0] + p[1] * p[1]).collect();
    let mut errs = Vec::new();
    for n in [4usize, 8, 16] {
        let m = unit_square(n);
        let f: Vec<f64> = (0..m.n_vertices())
            .map(|v| {
                let x = m.vertex(v);
                x[0] * x[0] + x[1] * x[1]
            })
            .collect();
        let out = lin_interp(&f, 1, &m, &probe, false).unwrap();
        let err = out
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        errs.push(err);
    }
    assert!(errs[1] < errs[0] / 2.5);
    assert!(errs[2] < errs[1] / 2.5);
}

#[test]
fn lin_interp_extends_linearly_outside() {
    let m = unit_square(2);
    let f: Vec<f64> = (0..m.n_vertices()).map(|v| m.vertex(v)[0]).collect();
    let out = lin_interp(&f, 1, &m, &[1.25, 0.5], false).unwrap();
    assert!((out[0] - 1.25).abs() < 1e-10);
    assert!(lin_interp(&f, 1, &Mesh::empty(2), &[0.0, 0.0], false).is_err());
}

#[test]
fn delaunay_of_grid_covers_domain_3d() {
    let g = [0.0, 0.5, 1.0];
    let m = cube2tet(&g, &g, &g).unwrap();
    let del = delaunay(3, m.coords()).unwrap();
    assert!((del.total_volume() - 1.0).abs() < 1e-10);
    let f: Vec<f64> = (0..m.n_vertices())
        .map(|v| {
            let x = m.vertex(v);
            x[0] - 2.0 * x[1] + 0.25 * x[2]
        })
        .collect();
    let qp = [0.31, 0.77, 0.21, 0.5, 0.5, 0.5];
    let out = lin_interp(&f, 1, &m, &qp, true).unwrap();
    for (q, p) in qp.chunks(3).enumerate() {
        let want = p[0] - 2.0 * p[1] + 0.25 * p[2];
        assert!((out[q] - want).abs() < 1e-10);
    }
}

#[test]
fn quality_perfect_mesh_is_one() {
    let m = unit_square(4);
    let metric = MetricField::identity(2, m.n_vertices());
    let xi = m.clone();
    let rep = quality_measures(&m, &metric, true, Some(&xi)).unwrap();
    assert!((rep.qeq - 1.0).abs() < 1e-10);
    assert!((rep.qali - 1.0).abs() < 1e-10);
    assert!((rep.qgeo - 1.0).abs() < 1e-10);
    let (qmax, ql2) = quality_measure2(&m, &metric, Some(&xi)).unwrap();
    assert!((qmax - 1.0).abs() < 1e-10);
    assert!((ql2 - 1.0).abs() < 1e-10);
}

#[test]
fn quality_detects_shrunk_element() {
    let m = unit_square(2);
    let xi = m.clone();
    // pull one interior vertex towards a corner
    let mut coords = m.coords().to_vec();
    let interior = (0..m.n_vertices())
        .find(|&v| {
            let x = m.vertex(v);
            (x[0] - 0.5).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12
        })
        .unwrap();
    coords[interior * 2] = 0.3;
    coords[interior * 2 + 1] = 0.3;
    let distorted = m.with_coords(coords).unwrap();
    let metric = MetricField::identity(2, m.n_vertices());
    let rep = quality_measures(&distorted, &metric, true, Some(&xi)).unwrap();
    assert!(rep.qeq > 1.0 + 1e-6);
}

#[test]
fn quality_measures_at_least_one() {
    // random-ish valid mesh via jittered interior vertices
    let m = unit_square(4);
    let on_bd = m.boundary_vertices();
    let mut coords = m.coords().to_vec();
    let mut state = 42u64;
    let mut rng = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    for v in 0..m.n_vertices() {
        if !on_bd[v] {
            coords[v * 2] += 0.08 * rng();
            coords[v * 2 + 1] += 0.08 * rng();
        }
    }
    let jittered = m.with_coords(coords).unwrap();
    let metric = MetricField::identity(2, m.n_vertices());
    for xi in [None, Some(&m)] {
        let rep = quality_measures(&jittered, &metric, true, xi.map(|x| x as _)).unwrap();
        assert!(rep.qeq >= 1.0 - 1e-12);
        assert!(rep.qali >= 1.0 - 1e-12);
        assert!(rep.qgeo >= 1.0 - 1e-12);
    }
}

#[test]
fn mesh_text_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mesh.txt");
    let m = circle2tri(2).unwrap();
    write_mesh_text(&path, &m).unwrap();
    let back = read_mesh_text(&path).unwrap();
    assert_eq!(back.dim(), 2);
    assert_eq!(back.n_vertices(), m.n_vertices());
    assert_eq!(back.n_elements(), m.n_elements());
    assert_eq!(back.n_boundary_facets(), m.n_boundary_facets());
    for (a, b) in m.coords().iter().zip(back.coords()) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn vtk_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mesh.vtk");
    let m = unit_square(2);
    let u: Vec<f64> = (0..m.n_vertices()).map(|v| v as f64 * 0.5).collect();
    write_vtk(&path, &m, &[VtkField { name: "u", ncomp: 1, values: &u }]).unwrap();
    let (back, fields) = read_vtk(&path).unwrap();
    assert_eq!(back.dim(), 2);
    assert_eq!(back.n_vertices(), m.n_vertices());
    assert_eq!(back.n_elements(), m.n_elements());
    assert_eq!(fields.len(), 1);
    assert_eq!(fields[0].0, "u");
    for (a, b) in u.iter().zip(&fields[0].2) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn interval_mesh_basics() {
    let m = interval_mesh(&grid(4)).unwrap();
    assert_eq!(m.dim(), 1);
    assert_eq!(m.n_elements(), 4);
    assert_eq!(m.n_boundary_facets(), 2);
    assert!((m.total_volume() - 1.0).abs() < 1e-15);
    let (fine, _) = m.uniform_refine(1);
    assert_eq!(fine.n_elements(), 8);
}
