//! 3-stage Radau IIA (order 5, stiffly accurate) for implicit systems
//! r(t, y, y') = 0, with simplified Newton on the stacked stage system and a
//! two-step error estimator for adaptive step selection.

use super::{controller, wrms, OdeError, MAX_VETOES};
use crate::sparse::{bicgstab_ilu, CsrMatrix, DirectSolver};

/// A fully implicit first-order system r(t, y, y') = 0 with a sparse,
/// pattern-stable pair of Jacobians dr/dy and dr/dy'.
pub trait ImplicitSystem {
    fn dim(&self) -> usize;
    fn residual(&mut self, t: f64, y: &[f64], ydot: &[f64], out: &mut [f64]);
    fn jacobians(
        &mut self,
        t: f64,
        y: &[f64],
        ydot: &[f64],
    ) -> Result<(CsrMatrix, CsrMatrix), OdeError>;
}

/// Stage data of one accepted step; defines the degree-3 collocation
/// polynomial on [t0, t0 + h].
#[derive(Debug, Clone)]
pub struct CollocationStep {
    pub t0: f64,
    pub h: f64,
    pub y0: Vec<f64>,
    pub k: [Vec<f64>; 3],
}

impl CollocationStep {
    /// Evaluates the collocation polynomial at absolute time `t`
    /// (extrapolates for t outside the step).
    pub fn eval(&self, lag: &[LagrangeIntegral; 3], t: f64, out: &mut [f64]) {
        let theta = (t - self.t0) / self.h;
        let l = [lag[0].eval(theta), lag[1].eval(theta), lag[2].eval(theta)];
        for i in 0..self.y0.len() {
            out[i] = self.y0[i]
                + self.h * (l[0] * self.k[0][i] + l[1] * self.k[1][i] + l[2] * self.k[2][i]);
        }
    }
}

/// Integrated Lagrange basis polynomial: L(theta) = int_0^theta l_j(s) ds.
#[derive(Debug, Clone, Copy)]
pub struct LagrangeIntegral {
    c0: f64, // coefficient of theta
    c1: f64, // of theta^2
    c2: f64, // of theta^3
}

impl LagrangeIntegral {
    fn new(cj: f64, ca: f64, cb: f64) -> Self {
        let denom = (cj - ca) * (cj - cb);
        Self { c0: ca * cb / denom, c1: -(ca + cb) / (2.0 * denom), c2: 1.0 / (3.0 * denom) }
    }

    pub fn eval(&self, theta: f64) -> f64 {
        theta * (self.c0 + theta * (self.c1 + theta * self.c2))
    }
}

/// Result of one Radau step.
#[derive(Debug, Clone)]
pub struct RadauStep {
    pub y_new: Vec<f64>,
    pub k: [Vec<f64>; 3],
    pub newton_iters: usize,
}

/// Step rejection signal from the stage solver.
#[derive(Debug, Clone, Copy)]
pub struct RadauReject;

#[derive(Debug, Clone)]
pub struct RadauOptions {
    pub abstol: f64,
    pub reltol: f64,
    /// Direct sparse LU when true, ILU(0)-preconditioned BiCGSTAB otherwise.
    pub direct: bool,
    /// Optional nonnegative per-component weights for the error norm.
    pub weights: Option<Vec<f64>>,
    /// Newton convergence threshold in tolerance-scaled units.
    pub newton_kappa: f64,
}

impl Default for RadauOptions {
    fn default() -> Self {
        Self { abstol: 1e-6, reltol: 1e-4, direct: true, weights: None, newton_kappa: 1e-2 }
    }
}

/// Error estimate from two consecutive steps: the difference between the
/// current stiffly-accurate end value and the previous step's collocation
/// polynomial extrapolated to the current endpoint.
pub fn two_step_error(prev: &CollocationStep, curr: &CollocationStep) -> Vec<f64> {
    let lag = lagrange_integrals();
    let n = curr.y0.len();
    let t_end = curr.t0 + curr.h;
    let mut extrap = vec![0.0; n];
    prev.eval(&lag, t_end, &mut extrap);
    let mut y_end = vec![0.0; n];
    curr.eval(&lag, t_end, &mut y_end);
    (0..n).map(|i| y_end[i] - extrap[i]).collect()
}

fn radau_nodes() -> [f64; 3] {
    let s6 = 6f64.sqrt();
    [(4.0 - s6) / 10.0, (4.0 + s6) / 10.0, 1.0]
}

fn lagrange_integrals() -> [LagrangeIntegral; 3] {
    let c = radau_nodes();
    [
        LagrangeIntegral::new(c[0], c[1], c[2]),
        LagrangeIntegral::new(c[1], c[0], c[2]),
        LagrangeIntegral::new(c[2], c[0], c[1]),
    ]
}

pub struct RadauIntegrator {
    pub opts: RadauOptions,
    c: [f64; 3],
    a: [[f64; 3]; 3],
    lag: [LagrangeIntegral; 3],
    emb: [f64; 2], // first-step fallback weights on stages 1, 2
    prev: Option<CollocationStep>,
    jac: Option<(CsrMatrix, CsrMatrix)>,
    solver: DirectSolver,
    w_mat: Option<CsrMatrix>,
    w_h: f64,
}

impl RadauIntegrator {
    pub fn new(opts: RadauOptions) -> Self {
        let c = radau_nodes();
        let lag = lagrange_integrals();
        // collocation: a_ij = L_j(c_i)
        let mut a = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] = lag[j].eval(c[i]);
            }
        }
        // two-stage embedded quadrature on {c1, c2}
        let emb = [
            (0.5 - c[1]) / (c[0] - c[1]),
            (0.5 - c[0]) / (c[1] - c[0]),
        ];
        Self {
            opts,
            c,
            a,
            lag,
            emb,
            prev: None,
            jac: None,
            solver: DirectSolver::new(),
            w_mat: None,
            w_h: f64::NAN,
        }
    }

    pub fn tableau(&self) -> (&[f64; 3], &[[f64; 3]; 3]) {
        (&self.c, &self.a)
    }

    /// Forgets step history and cached Jacobians (e.g. after the state was
    /// changed externally).
    pub fn reset(&mut self) {
        self.prev = None;
        self.jac = None;
        self.w_mat = None;
    }

    /// Invalidate the cached Jacobian (state changed).
    fn invalidate_jacobian(&mut self) {
        self.jac = None;
        self.w_mat = None;
    }

    fn ensure_w(
        &mut self,
        sys: &mut dyn ImplicitSystem,
        t: f64,
        y: &[f64],
        h: f64,
    ) -> Result<(), OdeError> {
        let n = sys.dim();
        if self.jac.is_none() {
            let ydot = vec![0.0; n];
            self.jac = Some(sys.jacobians(t, y, &ydot)?);
            self.w_mat = None;
        }
        if self.w_mat.is_some() && (self.w_h - h).abs() <= 1e-14 * h.abs() {
            return Ok(());
        }
        let (jy, jyd) = self.jac.as_ref().unwrap();
        // W[(r,i),(c,j)] = h a_ij Jy[r,c] + delta_ij Jyd[r,c], dof-major
        let mut trips = Vec::with_capacity(9 * jy.nnz() + 3 * jyd.nnz());
        for r in 0..n {
            let (cols, vals) = jy.row(r);
            for (c, v) in cols.iter().zip(vals) {
                for i in 0..3 {
                    for j in 0..3 {
                        trips.push((r * 3 + i, *c * 3 + j, h * self.a[i][j] * v));
                    }
                }
            }
            let (cols, vals) = jyd.row(r);
            for (c, v) in cols.iter().zip(vals) {
                for i in 0..3 {
                    trips.push((r * 3 + i, *c * 3 + i, *v));
                }
            }
        }
        let w = CsrMatrix::from_triplets(3 * n, 3 * n, &trips);
        if self.opts.direct {
            self.solver.factorize(&w)?;
        }
        self.w_mat = Some(w);
        self.w_h = h;
        Ok(())
    }

    /// One Radau IIA step of size `h` from (t, y), solving the stage system
    /// by simplified Newton. Returns a rejection signal on divergence.
    pub fn step_once(
        &mut self,
        sys: &mut dyn ImplicitSystem,
        t: f64,
        y: &[f64],
        h: f64,
    ) -> Result<Result<RadauStep, RadauReject>, OdeError> {
        let n = sys.dim();
        self.ensure_w(sys, t, y, h)?;
        let mut k = vec![0.0; 3 * n]; // dof-major stages
        if let Some(prev) = &self.prev {
            if prev.y0.len() == n && (prev.t0 + prev.h - t).abs() <= 1e-10 * h.abs().max(1.0) {
                // warm start: derivative of the previous collocation polynomial
                for i in 0..3 {
                    let tau = t + self.c[i] * h;
                    let theta: f64 = (tau - prev.t0) / prev.h;
                    // l_j(theta) = d/d theta L_j
                    for dof in 0..n {
                        let mut s = 0.0;
                        for j in 0..3 {
                            let lj = self.lag[j];
                            let deriv = lj.c0 + theta * (2.0 * lj.c1 + 3.0 * lj.c2 * theta);
                            s += deriv * prev.k[j][dof];
                        }
                        k[dof * 3 + i] = s;
                    }
                }
            }
        }
        let mut stage_y = vec![vec![0.0; n]; 3];
        let mut stage_k = vec![0.0; n];
        let mut res = vec![0.0; n];
        let mut rhs = vec![0.0; 3 * n];
        let mut prev_dn = f64::INFINITY;
        let mut iters = 0usize;
        let mut converged = false;
        for it in 0..10 {
            iters = it + 1;
            for i in 0..3 {
                for dof in 0..n {
                    let mut acc = 0.0;
                    for j in 0..3 {
                        acc += self.a[i][j] * k[dof * 3 + j];
                    }
                    stage_y[i][dof] = y[dof] + h * acc;
                }
            }
            for i in 0..3 {
                for dof in 0..n {
                    stage_k[dof] = k[dof * 3 + i];
                }
                sys.residual(t + self.c[i] * h, &stage_y[i], &stage_k, &mut res);
                for dof in 0..n {
                    rhs[dof * 3 + i] = -res[dof];
                }
            }
            if !rhs.iter().all(|v| v.is_finite()) {
                return Ok(Err(RadauReject));
            }
            if self.opts.direct {
                self.solver.solve_in_place(&mut rhs)?;
            } else {
                let w = self.w_mat.as_ref().unwrap();
                let sol = bicgstab_ilu(w, &rhs, None, 1e-9, 1e-12, 400)?;
                rhs.copy_from_slice(&sol);
            }
            let mut scaled = 0.0;
            let mut cnt = 0usize;
            let mut inc_inf: f64 = 0.0;
            for dof in 0..n {
                let scale = self.opts.abstol + self.opts.reltol * y[dof].abs();
                for i in 0..3 {
                    let v = rhs[dof * 3 + i] / scale;
                    scaled += v * v;
                    cnt += 1;
                    inc_inf = inc_inf.max(rhs[dof * 3 + i].abs());
                }
            }
            let dn = (scaled / cnt as f64).sqrt();
            let mut k_inf: f64 = 0.0;
            for dof in 0..3 * n {
                k[dof] += rhs[dof];
                k_inf = k_inf.max(k[dof].abs());
            }
            if dn <= self.opts.newton_kappa || inc_inf <= 1e-13 * k_inf.max(1e-30) {
                converged = true;
                break;
            }
            if !dn.is_finite() || dn > 4.0 * prev_dn.max(1e-18) {
                return Ok(Err(RadauReject));
            }
            prev_dn = dn;
        }
        if !converged {
            return Ok(Err(RadauReject));
        }
        // stiffly accurate: y_{n+1} = y_n + h sum_j a_3j K_j
        let mut y_new = vec![0.0; n];
        for dof in 0..n {
            let mut acc = 0.0;
            for j in 0..3 {
                acc += self.a[2][j] * k[dof * 3 + j];
            }
            y_new[dof] = y[dof] + h * acc;
        }
        if !y_new.iter().all(|v| v.is_finite()) {
            return Ok(Err(RadauReject));
        }
        let k_arr = [
            (0..n).map(|d| k[d * 3]).collect::<Vec<_>>(),
            (0..n).map(|d| k[d * 3 + 1]).collect::<Vec<_>>(),
            (0..n).map(|d| k[d * 3 + 2]).collect::<Vec<_>>(),
        ];
        Ok(Ok(RadauStep { y_new, k: k_arr, newton_iters: iters }))
    }

    /// Local error estimate for a candidate step: the two-step estimator
    /// when consecutive history is available, otherwise the embedded
    /// two-stage fallback.
    fn error_estimate(&self, t: f64, y: &[f64], h: f64, step: &RadauStep) -> Vec<f64> {
        let n = y.len();
        if let Some(prev) = &self.prev {
            if prev.y0.len() == n && (prev.t0 + prev.h - t).abs() <= 1e-10 * h.abs().max(1.0) {
                let curr = CollocationStep {
                    t0: t,
                    h,
                    y0: y.to_vec(),
                    k: step.k.clone(),
                };
                return two_step_error(prev, &curr);
            }
        }
        (0..n)
            .map(|i| {
                let emb = y[i] + h * (self.emb[0] * step.k[0][i] + self.emb[1] * step.k[1][i]);
                step.y_new[i] - emb
            })
            .collect()
    }

    /// Advances one adaptive step of at most `dt`: returns the new state,
    /// the step actually taken and the predicted next step.
    pub fn step_adaptive(
        &mut self,
        sys: &mut dyn ImplicitSystem,
        t: f64,
        y: &[f64],
        dt: f64,
        fixed_step: bool,
    ) -> Result<(Vec<f64>, f64, f64, f64), OdeError> {
        if dt <= 0.0 {
            return Err(OdeError::BadInput("dt must be positive".into()));
        }
        let mut h = dt;
        let weights3 = self.opts.weights.as_ref().map(|w| {
            let mut out = vec![0.0; w.len()];
            out.copy_from_slice(w);
            out
        });
        for attempt in 0..MAX_VETOES {
            let _ = attempt;
            match self.step_once(sys, t, y, h)? {
                Err(RadauReject) => {
                    if fixed_step {
                        return Err(OdeError::NewtonFailure { t });
                    }
                    h *= 0.5;
                    self.invalidate_jacobian();
                    if h < 1e-14 * dt {
                        return Err(OdeError::StepUnderflow { t, dt: h });
                    }
                }
                Ok(step) => {
                    let est = self.error_estimate(t, y, h, &step);
                    let err = wrms(
                        &est,
                        y,
                        self.opts.abstol,
                        self.opts.reltol,
                        weights3.as_deref(),
                    );
                    if fixed_step || err <= 1.0 {
                        self.prev = Some(CollocationStep {
                            t0: t,
                            h,
                            y0: y.to_vec(),
                            k: step.k.clone(),
                        });
                        self.invalidate_jacobian();
                        let dt_next = controller(h, err, 5.0);
                        return Ok((step.y_new, h, dt_next, err));
                    }
                    h = controller(h, err, 5.0).min(0.9 * h);
                    if h < 1e-14 * dt {
                        return Err(OdeError::StepUnderflow { t, dt: h });
                    }
                }
            }
        }
        Err(OdeError::TooManyRejections { t, count: MAX_VETOES })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct ScalarLinear {
        lambda: f64,
        shift: f64,
    }

    impl ImplicitSystem for ScalarLinear {
        fn dim(&self) -> usize {
            1
        }
        fn residual(&mut self, _t: f64, y: &[f64], ydot: &[f64], out: &mut [f64]) {
            out[0] = ydot[0] - self.lambda * (y[0] - self.shift);
        }
        fn jacobians(
            &mut self,
            _t: f64,
            _y: &[f64],
            _ydot: &[f64],
        ) -> Result<(CsrMatrix, CsrMatrix), OdeError> {
            let jy = CsrMatrix::from_triplets(1, 1, &[(0, 0, -self.lambda)]);
            let jyd = CsrMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]);
            Ok((jy, jyd))
        }
    }

    fn tight() -> RadauOptions {
        RadauOptions { abstol: 1e-13, reltol: 1e-13, newton_kappa: 1e-3, ..Default::default() }
    }

    #[test]
    fn tableau_matches_closed_forms() {
        let integ = RadauIntegrator::new(RadauOptions::default());
        let (c, a) = integ.tableau();
        let s6 = 6f64.sqrt();
        assert!((c[0] - (4.0 - s6) / 10.0).abs() < 1e-15);
        assert!((c[2] - 1.0).abs() < 1e-15);
        // row sums equal the abscissae
        for i in 0..3 {
            let s: f64 = a[i].iter().sum();
            assert!((s - c[i]).abs() < 1e-13);
        }
        // known entries of the last (quadrature) row
        assert!((a[2][0] - (16.0 - s6) / 36.0).abs() < 1e-13);
        assert!((a[2][1] - (16.0 + s6) / 36.0).abs() < 1e-13);
        assert!((a[2][2] - 1.0 / 9.0).abs() < 1e-13);
    }

    #[test]
    fn zero_rhs_step_is_identity() {
        let mut sys = ScalarLinear { lambda: 0.0, shift: 0.0 };
        let mut integ = RadauIntegrator::new(tight());
        let step = integ.step_once(&mut sys, 0.0, &[3.25], 0.5).unwrap().unwrap();
        assert_eq!(step.y_new[0], 3.25);
    }

    #[test]
    fn one_step_reproduces_pade_2_3() {
        // R(z) = (1 + 2z/5 + z^2/20) / (1 - 3z/5 + 3z^2/20 - z^3/60)
        let pade = |z: f64| {
            (1.0 + 2.0 * z / 5.0 + z * z / 20.0)
                / (1.0 - 3.0 * z / 5.0 + 3.0 * z * z / 20.0 - z * z * z / 60.0)
        };
        for (lambda, h) in [(-2.0, 0.5), (-10.0, 0.13), (1.5, 0.2)] {
            let mut sys = ScalarLinear { lambda, shift: 0.0 };
            let mut integ = RadauIntegrator::new(tight());
            let step = integ.step_once(&mut sys, 0.0, &[1.0], h).unwrap().unwrap();
            let want = pade(lambda * h);
            assert!(
                (step.y_new[0] - want).abs() < 1e-10 * want.abs().max(1.0),
                "lambda={lambda}, h={h}: {} vs {want}",
                step.y_new[0]
            );
        }
    }

    #[test]
    fn order_five_convergence() {
        // y' = -10 y over [0, 1]; halving h shrinks the global error ~2^5
        let run = |nsteps: usize| -> f64 {
            let mut sys = ScalarLinear { lambda: -10.0, shift: 0.0 };
            let mut integ = RadauIntegrator::new(tight());
            let h = 1.0 / nsteps as f64;
            let mut y = vec![1.0];
            for s in 0..nsteps {
                let t = s as f64 * h;
                let step = integ.step_once(&mut sys, t, &y, h).unwrap().unwrap();
                y = step.y_new;
            }
            (y[0] - (-10.0f64).exp()).abs()
        };
        let e20 = run(20);
        let e40 = run(40);
        let ratio = e20 / e40;
        assert!((24.0..=40.0).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn translation_invariance_for_shifted_linear_rhs() {
        let c = 2.5;
        let mut s1 = ScalarLinear { lambda: -3.0, shift: 0.0 };
        let mut s2 = ScalarLinear { lambda: -3.0, shift: c };
        let mut i1 = RadauIntegrator::new(tight());
        let mut i2 = RadauIntegrator::new(tight());
        let a = i1.step_once(&mut s1, 0.0, &[1.0], 0.3).unwrap().unwrap();
        let b = i2.step_once(&mut s2, 0.0, &[1.0 + c], 0.3).unwrap().unwrap();
        assert!((b.y_new[0] - (a.y_new[0] + c)).abs() < 1e-11);
    }

    #[test]
    fn adaptive_step_tracks_tolerance() {
        let opts = RadauOptions { abstol: 1e-8, reltol: 1e-8, ..Default::default() };
        let mut sys = ScalarLinear { lambda: -1.0, shift: 0.0 };
        let mut integ = RadauIntegrator::new(opts);
        let mut t = 0.0;
        let mut y = vec![1.0];
        let mut dt = 0.05f64;
        while t < 1.0 {
            let step_dt = dt.min(1.0 - t);
            let (y_new, used, next, _err) =
                integ.step_adaptive(&mut sys, t, &y, step_dt, false).unwrap();
            // local error of the accepted step vs exact propagation
            let exact = y[0] * (-used).exp();
            let scale = 1e-8 + 1e-8 * y[0].abs();
            assert!((y_new[0] - exact).abs() <= 2000.0 * scale);
            t += used;
            y = y_new;
            dt = next;
        }
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn looser_tolerance_means_larger_steps() {
        let run = |tol: f64| -> f64 {
            let opts = RadauOptions { abstol: tol, reltol: tol, ..Default::default() };
            let mut sys = ScalarLinear { lambda: -1.0, shift: 0.0 };
            let mut integ = RadauIntegrator::new(opts);
            let mut t = 0.0;
            let mut y = vec![1.0];
            let mut dt = 0.01f64;
            let mut count = 0usize;
            while t < 1.0 {
                let (y_new, used, next, _) =
                    integ.step_adaptive(&mut sys, t, &y, dt.min(1.0 - t), false).unwrap();
                t += used;
                y = y_new;
                dt = next;
                count += 1;
            }
            count as f64
        };
        assert!(run(1e-4) < run(1e-8));
    }

    #[test]
    fn zero_rhs_estimator_grows_dt_to_cap() {
        let mut sys = ScalarLinear { lambda: 0.0, shift: 0.0 };
        let mut integ = RadauIntegrator::new(RadauOptions::default());
        let (_, used, next, err) = integ.step_adaptive(&mut sys, 0.0, &[1.0], 0.1, false).unwrap();
        assert_eq!(used, 0.1);
        assert!(err == 0.0);
        assert!((next - 0.5).abs() < 1e-12, "dt capped at 5x");
        // second step: two-step estimator also exactly zero
        let (_, _, next2, err2) = integ.step_adaptive(&mut sys, 0.1, &[1.0], next, false).unwrap();
        assert!(err2 == 0.0);
        assert!((next2 - 2.5).abs() < 1e-12);
    }

    #[test]
    fn two_step_error_is_zero_for_cubics() {
        // k stages of the exact cubic: estimator extrapolates exactly
        let lag = lagrange_integrals();
        let c = radau_nodes();
        let poly_deriv = |t: f64| 3.0 * t * t - 2.0 * t + 0.5;
        let poly = |t: f64| t * t * t - t * t + 0.5 * t + 2.0;
        let make = |t0: f64, h: f64| CollocationStep {
            t0,
            h,
            y0: vec![poly(t0)],
            k: [
                vec![poly_deriv(t0 + c[0] * h)],
                vec![poly_deriv(t0 + c[1] * h)],
                vec![poly_deriv(t0 + c[2] * h)],
            ],
        };
        let prev = make(0.0, 0.2);
        let curr = make(0.2, 0.3);
        // sanity: the collocation polynomial reproduces the cubic
        let mut val = vec![0.0];
        prev.eval(&lag, 0.13, &mut val);
        assert!((val[0] - poly(0.13)).abs() < 1e-13);
        let est = two_step_error(&prev, &curr);
        assert!(est[0].abs() < 1e-12);
    }
}
