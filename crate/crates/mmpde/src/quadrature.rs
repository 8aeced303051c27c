//! Fixed quadrature rules on reference simplices.
//!
//! Points are stored in barycentric coordinates (`nverts` per point) and
//! weights are normalized so that `int_K f ≈ |K| * sum_q w_q f(x_q)`.
//! Assembly uses degree-2 rules, error norms use rules exact for degree >= 4.

use std::sync::OnceLock;

#[derive(Debug, Clone)]
pub struct QuadRule {
    /// Barycentric coordinates, `len = n_points * nverts`.
    pub points: Vec<f64>,
    /// Weights summing to 1.
    pub weights: Vec<f64>,
    /// Vertices of the simplex the rule lives on (d+1 for volume, d for facet).
    pub nverts: usize,
}

impl QuadRule {
    pub fn n_points(&self) -> usize {
        self.weights.len()
    }

    pub fn point(&self, q: usize) -> &[f64] {
        &self.points[q * self.nverts..(q + 1) * self.nverts]
    }
}

/// Gauss-Legendre nodes/weights on [0, 1].
fn gauss01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w): (Vec<f64>, Vec<f64>) = match n {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = 1.0 / 3f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = (3.0f64 / 5.0).sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => {
            let a = (3.0f64 / 7.0 - 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
            let b = (3.0f64 / 7.0 + 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
            let wa = (18.0 + 30f64.sqrt()) / 36.0;
            let wb = (18.0 - 30f64.sqrt()) / 36.0;
            (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
        }
        _ => unimplemented!("gauss01 up to n = 4"),
    };
    (
        x.iter().map(|v| 0.5 * (v + 1.0)).collect(),
        w.iter().map(|v| 0.5 * v).collect(),
    )
}

fn segment_rule(n: usize) -> QuadRule {
    let (x, w) = gauss01(n);
    let mut points = Vec::with_capacity(2 * n);
    for &xi in &x {
        points.push(1.0 - xi);
        points.push(xi);
    }
    QuadRule { points, weights: w, nverts: 2 }
}

/// Symmetric orbit rule on a triangle: each row is (a, b, b) permuted.
fn triangle_orbits(orbits: &[(f64, f64)]) -> QuadRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for &(a, w) in orbits {
        let b = 0.5 * (1.0 - a);
        for perm in [[a, b, b], [b, a, b], [b, b, a]] {
            points.extend_from_slice(&perm);
            weights.push(w);
        }
    }
    QuadRule { points, weights, nverts: 3 }
}

fn volume_rule_d(d: usize) -> QuadRule {
    match d {
        1 => segment_rule(2),
        2 => {
            // 3-point degree-2 rule, barycentric (2/3, 1/6, 1/6) orbit
            triangle_orbits(&[(2.0 / 3.0, 1.0 / 3.0)])
        }
        3 => {
            // 4-point degree-2 rule, barycentric (a, b, b, b) orbit
            let a = (5.0 + 3.0 * 5f64.sqrt()) / 20.0;
            let b = (5.0 - 5f64.sqrt()) / 20.0;
            let mut points = Vec::new();
            let mut weights = Vec::new();
            for i in 0..4 {
                let mut p = [b; 4];
                p[i] = a;
                points.extend_from_slice(&p);
                weights.push(0.25);
            }
            QuadRule { points, weights, nverts: 4 }
        }
        _ => unreachable!(),
    }
}

fn facet_rule_d(d: usize) -> QuadRule {
    match d {
        1 => QuadRule { points: vec![1.0], weights: vec![1.0], nverts: 1 },
        2 => segment_rule(2),
        3 => triangle_orbits(&[(2.0 / 3.0, 1.0 / 3.0)]),
        _ => unreachable!(),
    }
}

fn error_rule_d(d: usize) -> QuadRule {
    match d {
        1 => segment_rule(3),
        2 => {
            // 6-point degree-4 rule (two symmetric orbits)
            let mut points = Vec::new();
            let mut weights = Vec::new();
            for &(a, b, w) in &[
                (0.108103018168070, 0.445948490915965, 0.223381589678011),
                (0.816847572980459, 0.091576213509771, 0.109951743655322),
            ] {
                for perm in [[a, b, b], [b, a, b], [b, b, a]] {
                    points.extend_from_slice(&perm);
                    weights.push(w / 3.0 * 3.0); // weights already normalized to sum 1 over 6 pts
                }
            }
            // normalize defensively
            let s: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= s;
            }
            QuadRule { points, weights, nverts: 3 }
        }
        3 => {
            // Duffy-transformed 4x4x4 Gauss product rule: positive weights,
            // exact for polynomials of total degree <= 5 on the tetrahedron
            let (x, w) = gauss01(4);
            let mut points = Vec::new();
            let mut weights = Vec::new();
            for (iu, &u) in x.iter().enumerate() {
                for (iv, &v) in x.iter().enumerate() {
                    for (iw, &t) in x.iter().enumerate() {
                        let l1 = u;
                        let l2 = v * (1.0 - u);
                        let l3 = t * (1.0 - u) * (1.0 - v);
                        let l0 = 1.0 - l1 - l2 - l3;
                        points.extend_from_slice(&[l0, l1, l2, l3]);
                        // Jacobian (1-u)^2 (1-v); factor d! = 6 normalizes sum to 1
                        weights.push(6.0 * w[iu] * w[iv] * w[iw] * (1.0 - u) * (1.0 - u) * (1.0 - v));
                    }
                }
            }
            QuadRule { points, weights, nverts: 4 }
        }
        _ => unreachable!(),
    }
}

macro_rules! cached_rule {
    ($fn_name:ident, $builder:ident) => {
        pub fn $fn_name(d: usize) -> &'static QuadRule {
            static CACHE: [OnceLock<QuadRule>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
            assert!((1..=3).contains(&d), "dimension must be 1, 2 or 3");
            CACHE[d - 1].get_or_init(|| $builder(d))
        }
    };
}

cached_rule!(volume_rule, volume_rule_d);
cached_rule!(facet_rule, facet_rule_d);
cached_rule!(error_rule, error_rule_d);
