use super::*;
use crate::mesh::{cube2tet, interval_mesh, quality_measures, rect2tri};
use crate::smallmat::MatBatch;

fn grid(n: usize) -> Vec<f64> {
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

fn square(n: usize) -> Mesh {
    rect2tri(&grid(n), &grid(n), 2).unwrap()
}

/// Deterministic jitter of the interior vertices, kept small enough to stay
/// untangled.
fn jittered(mesh: &Mesh, amp: f64, seed: u64) -> Mesh {
    let d = mesh.dim();
    let on_bd = mesh.boundary_vertices();
    let mut coords = mesh.coords().to_vec();
    let mut state = seed;
    let mut rng = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    for v in 0..mesh.n_vertices() {
        if !on_bd[v] {
            for r in 0..d {
                coords[v * d + r] += amp * rng();
            }
        }
    }
    mesh.with_coords(coords).unwrap()
}

/// Smooth SPD metric field: I + v v^T with a position-dependent vector.
fn wavy_metric(mesh: &Mesh) -> MetricField {
    let d = mesh.dim();
    let nv = mesh.n_vertices();
    let mut vals = MatBatch::identity(d, nv);
    for v in 0..nv {
        let x = mesh.vertex(v);
        let mut w = [0.0; 3];
        w[0] = 0.8 * (3.0 * x[0]).sin();
        if d > 1 {
            w[1] = 0.6 * (2.0 * x[1] + x[0]).cos();
        }
        if d > 2 {
            w[2] = 0.5 * (x[2] - x[0]).sin();
        }
        for r in 0..d {
            for c in 0..d {
                let cur = vals.get(v, r, c);
                vals.set(v, r, c, cur + w[r] * w[c]);
            }
        }
    }
    MetricField::new(vals).unwrap()
}

fn test_mesh(d: usize, jit: f64, seed: u64) -> Mesh {
    let base = match d {
        1 => interval_mesh(&grid(8)).unwrap(),
        2 => square(4),
        _ => cube2tet(&grid(2), &grid(2), &grid(2)).unwrap(),
    };
    jittered(&base, jit, seed)
}

fn fd_gradient(
    mesh: &Mesh,
    metric: &MetricField,
    xi_ref: Option<&Mesh>,
    params: &MmpdeParams,
    h: f64,
) -> Vec<f64> {
    let n = mesh.coords().len();
    let mut g = vec![0.0; n];
    for i in 0..n {
        let mut cp = mesh.coords().to_vec();
        cp[i] += h;
        let ep = energy(&mesh.with_coords(cp).unwrap(), metric, xi_ref, params).unwrap();
        let mut cm = mesh.coords().to_vec();
        cm[i] -= h;
        let em = energy(&mesh.with_coords(cm).unwrap(), metric, xi_ref, params).unwrap();
        g[i] = (ep - em) / (2.0 * h);
    }
    g
}

#[test]
fn energy_hand_value_on_uniform_grid() {
    // J = I per element: I_h = |Omega| d^{dp/2} (1 - theta)
    let m = square(3);
    let metric = MetricField::identity(2, m.n_vertices());
    let params = MmpdeParams::new(1.0);
    let ih = energy(&m, &metric, Some(&m), &params).unwrap();
    let want = 1.0 * 2f64.powf(2.0 * 1.5 / 2.0) * (1.0 - 1.0 / 3.0);
    assert!((ih - want).abs() < 1e-12 * want, "{ih} vs {want}");
}

#[test]
fn energy_scaling_law_in_metric() {
    // I_h(c M) = c^{d(1-p)/2} I_h(M)
    for d in 1..=3usize {
        let mesh = test_mesh(d, 0.04, 11 + d as u64);
        let metric = wavy_metric(&mesh);
        let params = MmpdeParams::new(1.0);
        let base = energy(&mesh, &metric, None, &params).unwrap();
        let c = 3.7;
        let mut scaled_vals = metric.values().clone();
        for v in scaled_vals.data().to_vec().iter().enumerate().map(|(i, &x)| (i, x)) {
            scaled_vals.row_mut(v.0 / (d * d))[v.0 % (d * d)] = c * v.1;
        }
        let scaled = MetricField::new(scaled_vals).unwrap();
        let got = energy(&mesh, &scaled, None, &params).unwrap();
        let want = c.powf(d as f64 * (1.0 - params.p) / 2.0) * base;
        assert!(
            (got - want).abs() < 1e-10 * want.abs(),
            "d={d}: {got} vs {want}"
        );
    }
}

#[test]
fn gradient_matches_central_differences() {
    for d in 1..=3usize {
        for (seed, use_ref) in [(5u64, false), (17, true)] {
            let mesh = test_mesh(d, 0.05, seed);
            let metric = wavy_metric(&mesh);
            let params = MmpdeParams::new(1.0);
            let xi = test_mesh(d, 0.0, 0);
            let xi_ref = use_ref.then_some(&xi);
            let ana = energy_grad(&mesh, &metric, xi_ref, &params).unwrap();
            let h = 1e-6 / (mesh.n_elements() as f64).powf(1.0 / d as f64);
            let fd = fd_gradient(&mesh, &metric, xi_ref, &params, h);
            let scale = ana.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            for i in 0..ana.len() {
                assert!(
                    (ana[i] - fd[i]).abs() < 1e-5 * scale.max(1.0),
                    "d={d} seed={seed} i={i}: {} vs {}",
                    ana[i],
                    fd[i]
                );
            }
        }
    }
}

#[test]
fn interior_gradient_vanishes_on_uniform_grid() {
    let m = square(4);
    let metric = MetricField::identity(2, m.n_vertices());
    let params = MmpdeParams::new(1.0);
    let g = energy_grad(&m, &metric, Some(&m), &params).unwrap();
    let on_bd = m.boundary_vertices();
    for v in 0..m.n_vertices() {
        if !on_bd[v] {
            assert!(g[v * 2].abs() < 1e-10);
            assert!(g[v * 2 + 1].abs() < 1e-10);
        }
    }
}

#[test]
fn gradient_sums_to_zero_for_constant_metric() {
    // translation invariance of the functional
    for d in 1..=3usize {
        let mesh = test_mesh(d, 0.05, 23);
        let metric = MetricField::identity(d, mesh.n_vertices());
        let params = MmpdeParams::new(1.0);
        let g = energy_grad(&mesh, &metric, None, &params).unwrap();
        for r in 0..d {
            let s: f64 = (0..mesh.n_vertices()).map(|v| g[v * d + r]).sum();
            let scale = g.iter().fold(1e-30f64, |a, &v| a.max(v.abs()));
            assert!(s.abs() < 1e-10 * scale * mesh.n_vertices() as f64);
        }
    }
}

fn corners_of_square(m: &Mesh) -> Vec<usize> {
    (0..m.n_vertices())
        .filter(|&v| {
            let x = m.vertex(v);
            (x[0].abs() < 1e-12 || (x[0] - 1.0).abs() < 1e-12)
                && (x[1].abs() < 1e-12 || (x[1] - 1.0).abs() < 1e-12)
        })
        .collect()
}

#[test]
fn move_x_keeps_uniform_mesh_stationary() {
    let m = square(3);
    let fixed = corners_of_square(&m);
    let params = MmpdeParams::new(0.1);
    let res = move_x([0.0, 0.1], &m, &params, &fixed, Some(&m)).unwrap();
    for (a, b) in res.xnew.iter().zip(m.coords()) {
        assert!((a - b).abs() < 1e-8);
    }
    assert!(res.kmin > 0.0);
}

/// The shared 1D concentration setup: metric peaked at x = 0.5.
pub(crate) fn concentration_1d(n: usize) -> (Mesh, MetricField) {
    let m = interval_mesh(&grid(n)).unwrap();
    let nv = m.n_vertices();
    let mut vals = MatBatch::zeros(1, nv);
    for v in 0..nv {
        let x = m.vertex(v)[0];
        vals.set(v, 0, 0, 1.0 + 100.0 * (-(x - 0.5) * (x - 0.5) / (0.04 * 0.04)).exp());
    }
    (m, MetricField::new(vals).unwrap())
}

#[test]
fn move_x_metric_concentrates_nodes_1d() {
    let (m, metric) = concentration_1d(40);
    let nv = m.n_vertices();
    let before = quality_measures(&m, &metric, true, Some(&m)).unwrap();
    let params = MmpdeParams::new(0.01);
    let res = move_x_metric([0.0, 1.0], &m, &metric, &params, &[0, nv - 1], Some(&m)).unwrap();
    let moved = m.with_coords(res.xnew.clone()).unwrap();
    let after = quality_measures(&moved, &metric, true, Some(&m)).unwrap();
    assert!(
        after.qeq < 0.8 * before.qeq,
        "equidistribution should improve: {} -> {}",
        before.qeq,
        after.qeq
    );
    // nodes cluster near the peak: spacing at 0.5 much smaller than at 0
    let mut xs: Vec<f64> = res.xnew.clone();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let gap_near = xs
        .windows(2)
        .filter(|w| (w[0] - 0.5).abs() < 0.1)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let gap_far = xs
        .windows(2)
        .filter(|w| w[0] < 0.2)
        .map(|w| w[1] - w[0])
        .fold(0.0f64, f64::max);
    assert!(gap_near < 0.5 * gap_far);
}

#[test]
fn velocity_invariant_under_metric_scaling() {
    let mesh = test_mesh(2, 0.05, 31);
    let metric = wavy_metric(&mesh);
    let params = MmpdeParams::new(0.05);
    let mut scaled_vals = metric.values().clone();
    let dd = 4;
    for v in 0..scaled_vals.len() {
        for k in 0..dd {
            scaled_vals.row_mut(v)[k] *= 4.0;
        }
    }
    let scaled = MetricField::new(scaled_vals).unwrap();
    // nodal velocity = -det(M_v)^{(p-1)/2}/tau * grad_v, identical for M and 4M
    let g1 = energy_grad(&mesh, &metric, None, &params).unwrap();
    let g4 = energy_grad(&mesh, &scaled, None, &params).unwrap();
    let mut vmax: f64 = 0.0;
    let mut dmax: f64 = 0.0;
    for v in 0..mesh.n_vertices() {
        let p1 = metric.det_at(v).powf((params.p - 1.0) / 2.0);
        let p4 = scaled.det_at(v).powf((params.p - 1.0) / 2.0);
        for r in 0..2 {
            let v1 = p1 * g1[v * 2 + r];
            let v4 = p4 * g4[v * 2 + r];
            vmax = vmax.max(v1.abs());
            dmax = dmax.max((v1 - v4).abs());
        }
    }
    assert!(dmax <= 1e-10 * vmax, "relative deviation {}", dmax / vmax);
    // and the resulting trajectories coincide
    let fixed = corners_of_square(&test_mesh(2, 0.0, 0));
    let r1 = move_x_metric([0.0, 0.02], &mesh, &metric, &params, &fixed, None).unwrap();
    let r4 = move_x_metric([0.0, 0.02], &mesh, &scaled, &params, &fixed, None).unwrap();
    for (a, b) in r1.xnew.iter().zip(&r4.xnew) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn energy_decreases_along_flow() {
    let mesh = jittered(&square(4), 0.09, 77);
    let metric = wavy_metric(&mesh);
    let params = MmpdeParams::new(0.05);
    let fixed = corners_of_square(&test_mesh(2, 0.0, 0));
    let res = move_x_metric([0.0, 0.5], &mesh, &metric, &params, &fixed, None).unwrap();
    let tol = 10.0 * params.abstol_value();
    for w in res.energy_trace.windows(2) {
        assert!(w[1] <= w[0] + tol, "energy rose: {} -> {}", w[0], w[1]);
    }
    assert!(res.ih <= res.energy_trace.first().copied().unwrap_or(f64::INFINITY) + tol);
}

#[test]
fn fixed_nodes_never_move_and_boundary_stays_planar() {
    let mesh = jittered(&square(4), 0.08, 41);
    let metric = wavy_metric(&mesh);
    let params = MmpdeParams::new(0.05);
    let fixed = corners_of_square(&mesh);
    let res = move_x_metric([0.0, 0.2], &mesh, &metric, &params, &fixed, None).unwrap();
    for &v in &fixed {
        assert_eq!(&res.xnew[v * 2..v * 2 + 2], mesh.vertex(v));
    }
    let on_bd = mesh.boundary_vertices();
    for v in 0..mesh.n_vertices() {
        if on_bd[v] {
            let x = &res.xnew[v * 2..v * 2 + 2];
            // every boundary vertex of the square sits on one of the 4 lines
            let dist = [x[0], 1.0 - x[0], x[1], 1.0 - x[1]]
                .iter()
                .map(|d| d.abs())
                .fold(f64::INFINITY, f64::min);
            assert!(dist < 1e-9, "boundary vertex drifted: {x:?}");
        }
    }
}

#[test]
fn move_xi_identity_when_uniform() {
    let m = square(3);
    let metric = MetricField::identity(2, m.n_vertices());
    let params = MmpdeParams::new(0.1);
    let fixed = corners_of_square(&m);
    let res = move_xi([0.0, 0.1], &m, &m, &metric, &params, &fixed).unwrap();
    for (a, b) in res.xnew.iter().zip(m.coords()) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn move_xi_clusters_like_move_x_metric() {
    let (m, metric) = concentration_1d(40);
    let nv = m.n_vertices();
    let before = quality_measures(&m, &metric, true, Some(&m)).unwrap();
    let params = MmpdeParams::new(0.01);
    let res = move_xi([0.0, 1.0], &m, &m, &metric, &params, &[0, nv - 1]).unwrap();
    let moved = m.with_coords(res.xnew.clone()).unwrap();
    let after = quality_measures(&moved, &metric, true, Some(&m)).unwrap();
    // the xi-formulation equidistributes much harder than a single
    // frozen-metric x-flow
    assert!(after.qeq < before.qeq / 2.0, "{} -> {}", before.qeq, after.qeq);
    // both formulations cluster nodes at the peak
    let resx = move_x_metric([0.0, 1.0], &m, &metric, &params, &[0, nv - 1], Some(&m)).unwrap();
    let gap_at = |coords: &[f64], x0: f64| -> f64 {
        let mut xs = coords.to_vec();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.windows(2)
            .filter(|w| (w[0] - x0).abs() < 0.1)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    };
    assert!(gap_at(&res.xnew, 0.5) < 0.5 * gap_at(&res.xnew, 0.05));
    assert!(gap_at(&resx.xnew, 0.5) < 0.5 * gap_at(&resx.xnew, 0.05));
    // connectivity untouched
    assert_eq!(moved.elems(), m.elems());
}

#[test]
fn rejects_bad_params() {
    let m = square(2);
    let metric = MetricField::identity(2, m.n_vertices());
    let mut params = MmpdeParams::new(0.0);
    assert!(matches!(
        energy(&m, &metric, None, &params),
        Err(MovMeshError::BadParams(_))
    ));
    params.tau = 1.0;
    params.theta = 0.9;
    assert!(matches!(
        energy(&m, &metric, None, &params),
        Err(MovMeshError::BadParams(_))
    ));
    params.theta = 1.0 / 3.0;
    assert!(matches!(
        move_x_metric([1.0, 0.5], &m, &metric, &params, &[], None),
        Err(MovMeshError::BadParams(_))
    ));
}
