//! Adaptive implicit integrator for stiff mesh equations: variable-step
//! BDF of order 1-2 with a finite-difference Jacobian (dense, or colored
//! sparse when the problem carries a sparsity pattern).

use super::{controller, wrms, OdeError, OdeProblem, OdeSolution, StepRecord, MAX_VETOES};
use crate::sparse::{distance2_coloring, CsrMatrix, DenseLu, DirectSolver};

enum Jac {
    Dense(Vec<f64>),
    Sparse(CsrMatrix),
}

enum Factor {
    Dense(DenseLu),
    Sparse(DirectSolver),
}

struct Workspace<'a> {
    n: usize,
    sparsity: Option<&'a [Vec<usize>]>,
    colors: Option<Vec<usize>>,
    jac: Option<Jac>,
    factor: Option<Factor>,
    factored_gamma: f64, // beta * h of the current factorization
}

impl<'a> Workspace<'a> {
    fn new(n: usize, sparsity: Option<&'a [Vec<usize>]>) -> Self {
        let colors = sparsity.map(|s| distance2_coloring(s));
        Self { n, sparsity, colors, jac: None, factor: None, factored_gamma: f64::NAN }
    }

    fn refresh_jacobian(&mut self, p: &OdeProblem<'_>, t: f64, y: &[f64], f0: &[f64]) {
        let n = self.n;
        match (self.sparsity, self.colors.as_ref()) {
            (Some(rows), Some(colors)) => {
                let mut jac = CsrMatrix::from_pattern(n, rows);
                let ncolors = colors.iter().max().map(|&c| c + 1).unwrap_or(0);
                let mut yp = y.to_vec();
                let mut fp = vec![0.0; n];
                for color in 0..ncolors {
                    let mut deltas = vec![0.0; n];
                    for j in 0..n {
                        if colors[j] == color {
                            let d = 1.5e-8 * (y[j].abs() + 1.0);
                            deltas[j] = d;
                            yp[j] = y[j] + d;
                        }
                    }
                    (p.rhs)(t, &yp, &mut fp);
                    for j in 0..n {
                        if colors[j] != color {
                            continue;
                        }
                        for &i in &rows[j] {
                            if let Some(slot) = jac.slot(i, j) {
                                jac.values_mut()[slot] = (fp[i] - f0[i]) / deltas[j];
                            }
                        }
                        yp[j] = y[j];
                    }
                }
                self.jac = Some(Jac::Sparse(jac));
            }
            _ => {
                let mut jac = vec![0.0; n * n];
                let mut yp = y.to_vec();
                let mut fp = vec![0.0; n];
                for j in 0..n {
                    let d = 1.5e-8 * (y[j].abs() + 1.0);
                    yp[j] = y[j] + d;
                    (p.rhs)(t, &yp, &mut fp);
                    for i in 0..n {
                        jac[i * n + j] = (fp[i] - f0[i]) / d;
                    }
                    yp[j] = y[j];
                }
                self.jac = Some(Jac::Dense(jac));
            }
        }
        self.factor = None;
    }

    /// Factors W = I - gamma * J.
    fn factorize(&mut self, gamma: f64) -> Result<(), OdeError> {
        let n = self.n;
        match self.jac.as_ref().expect("jacobian must be refreshed first") {
            Jac::Dense(j) => {
                let mut w = vec![0.0; n * n];
                for i in 0..n {
                    for k in 0..n {
                        w[i * n + k] = -gamma * j[i * n + k];
                    }
                    w[i * n + i] += 1.0;
                }
                self.factor = Some(Factor::Dense(DenseLu::factorize(n, &w)?));
            }
            Jac::Sparse(j) => {
                let mut trips = Vec::with_capacity(j.nnz() + n);
                for r in 0..n {
                    let (cols, vals) = j.row(r);
                    for (c, v) in cols.iter().zip(vals) {
                        trips.push((r, *c, -gamma * v));
                    }
                    trips.push((r, r, 1.0));
                }
                let w = CsrMatrix::from_triplets(n, n, &trips);
                let mut solver = DirectSolver::new();
                solver.factorize(&w)?;
                self.factor = Some(Factor::Sparse(solver));
            }
        }
        self.factored_gamma = gamma;
        Ok(())
    }

    fn solve(&self, b: &mut [f64]) -> Result<(), OdeError> {
        match self.factor.as_ref().expect("factorization missing") {
            Factor::Dense(lu) => {
                lu.solve_in_place(b);
                Ok(())
            }
            Factor::Sparse(s) => {
                s.solve_in_place(b)?;
                Ok(())
            }
        }
    }
}

/// Integrates a stiff system with variable-step BDF(1,2); the per-step error
/// contract matches the explicit integrator and the result lands exactly on
/// `tspan[1]`.
pub fn integrate_stiff(p: &OdeProblem<'_>) -> Result<OdeSolution, OdeError> {
    p.validate()?;
    let n = p.y0.len();
    let span = p.tspan[1] - p.tspan[0];
    let mut t = p.tspan[0];
    let mut y = p.y0.to_vec();
    // history: (t, y) of the two previous accepted states (most recent last)
    let mut history: Vec<(f64, Vec<f64>)> = vec![(t, y.clone())];
    let mut h = p.dt0.min(span);
    let mut ws = Workspace::new(n, p.sparsity);
    let mut f0 = vec![0.0; n];
    let mut steps = Vec::new();
    let mut rejections = 0usize;
    let mut steps_since_jac = 0usize;
    while t < p.tspan[1] - 1e-14 * span {
        h = h.min(p.tspan[1] - t);
        if h < 1e-14 * span {
            return Err(OdeError::StepUnderflow { t, dt: h });
        }
        let order2 = history.len() >= 2;
        let (beta, rhs_const) = if order2 {
            let (tp, yp) = (&history[history.len() - 2].0, &history[history.len() - 2].1);
            let h_prev = t - tp;
            let rho = h / h_prev;
            let beta = (1.0 + rho) / (1.0 + 2.0 * rho);
            // (1+rho)^2/(1+2rho) y - rho^2/(1+2rho) y_prev, written
            // incrementally so constant states are preserved exactly
            let c2 = rho * rho / (1.0 + 2.0 * rho);
            let rc: Vec<f64> = (0..n).map(|i| y[i] + c2 * (y[i] - yp[i])).collect();
            (beta, rc)
        } else {
            (1.0, y.clone())
        };
        // predictor by Lagrange extrapolation through the history
        (p.rhs)(t, &y, &mut f0);
        let y_pred: Vec<f64> = match history.len() {
            1 => (0..n).map(|i| y[i] + h * f0[i]).collect(),
            2 => {
                let (tp, yp) = (&history[0].0, &history[0].1);
                let r = h / (t - tp);
                (0..n).map(|i| y[i] + r * (y[i] - yp[i])).collect()
            }
            _ => {
                let (t2, y2) = (&history[history.len() - 3].0, &history[history.len() - 3].1);
                let (t1, y1) = (&history[history.len() - 2].0, &history[history.len() - 2].1);
                let tn = t + h;
                let l2 = (tn - t1) * (tn - t) / ((t2 - t1) * (t2 - t));
                let l1 = (tn - t2) * (tn - t) / ((t1 - t2) * (t1 - t));
                let l0 = (tn - t2) * (tn - t1) / ((t - t2) * (t - t1));
                (0..n).map(|i| l2 * y2[i] + l1 * y1[i] + l0 * y[i]).collect()
            }
        };
        let gamma = beta * h;
        if ws.jac.is_none() || steps_since_jac > 25 {
            ws.refresh_jacobian(p, t, &y, &f0);
            steps_since_jac = 0;
        }
        if ws.factor.is_none() || (ws.factored_gamma - gamma).abs() > 0.2 * gamma.abs() {
            ws.factorize(gamma)?;
        }
        // Newton on G(u) = u - gamma f(t+h, u) - rhs_const
        let mut newton_ok = false;
        let mut fresh = false;
        'newton_attempts: for _attempt in 0..2 {
            let mut u = y_pred.clone();
            let mut g = vec![0.0; n];
            let mut fu = vec![0.0; n];
            let mut prev_dn = f64::INFINITY;
            for _it in 0..8 {
                (p.rhs)(t + h, &u, &mut fu);
                for i in 0..n {
                    g[i] = -(u[i] - gamma * fu[i] - rhs_const[i]);
                }
                if !g.iter().all(|v| v.is_finite()) {
                    break;
                }
                ws.solve(&mut g)?;
                for i in 0..n {
                    u[i] += g[i];
                }
                let dn = wrms(&g, &y, p.abstol, p.reltol, None);
                if !dn.is_finite() {
                    break;
                }
                if dn <= 0.03 {
                    newton_ok = true;
                    break;
                }
                if dn > 2.0 * prev_dn {
                    break;
                }
                prev_dn = dn;
            }
            if newton_ok {
                // candidate accepted by Newton; evaluate error below
                let est: Vec<f64> = (0..n).map(|i| 0.5 * (u[i] - y_pred[i])).collect();
                let e = wrms(&est, &y, p.abstol, p.reltol, None);
                let vetoed = !u.iter().all(|v| v.is_finite())
                    || p.accept_check.map(|chk| !chk(&u)).unwrap_or(false);
                if vetoed {
                    rejections += 1;
                    if rejections >= MAX_VETOES {
                        return Err(OdeError::TooManyRejections { t, count: rejections });
                    }
                    h *= 0.5;
                    break 'newton_attempts;
                }
                let order = if order2 { 3.0 } else { 2.0 };
                if e <= 1.0 {
                    rejections = 0;
                    t += h;
                    y = u;
                    if let Some(hook) = p.post_step {
                        hook(t, &mut y);
                    }
                    history.push((t, y.clone()));
                    if history.len() > 3 {
                        history.remove(0);
                    }
                    steps.push(StepRecord { t, dt: h, err: e });
                    steps_since_jac += 1;
                } else {
                    rejections += 1;
                    if rejections >= MAX_VETOES {
                        return Err(OdeError::TooManyRejections { t, count: rejections });
                    }
                }
                // growth capped at 2 for zero-stability of variable-step BDF2
                h = controller(h, e, order).min(2.0 * h);
                break 'newton_attempts;
            }
            if !fresh {
                // retry once with a fresh Jacobian before shrinking the step
                ws.refresh_jacobian(p, t, &y, &f0);
                ws.factorize(gamma)?;
                steps_since_jac = 0;
                fresh = true;
            } else {
                rejections += 1;
                if rejections >= MAX_VETOES {
                    return Err(OdeError::NewtonFailure { t });
                }
                h *= 0.25;
                ws.factor = None;
                break 'newton_attempts;
            }
        }
    }
    Ok(OdeSolution { y_end: y, steps })
}
