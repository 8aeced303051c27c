//! Adaptive embedded explicit Runge-Kutta (Dormand-Prince 5(4)).

use super::{controller, wrms, OdeError, OdeProblem, OdeSolution, StepRecord, MAX_VETOES};

const STAGES: usize = 7;
const C: [f64; STAGES] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; STAGES] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; STAGES] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; STAGES] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates with an order-4/5 embedded pair and PI-free step control;
/// lands exactly on `tspan[1]`.
pub fn integrate_explicit(p: &OdeProblem<'_>) -> Result<OdeSolution, OdeError> {
    p.validate()?;
    let n = p.y0.len();
    let span = p.tspan[1] - p.tspan[0];
    let mut t = p.tspan[0];
    let mut y = p.y0.to_vec();
    let mut h = p.dt0.min(span);
    let mut k = vec![vec![0.0; n]; STAGES];
    let mut ytmp = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut steps = Vec::new();
    let mut vetoes = 0usize;
    while t < p.tspan[1] - 1e-14 * span {
        h = h.min(p.tspan[1] - t);
        if h < 1e-14 * span {
            return Err(OdeError::StepUnderflow { t, dt: h });
        }
        (p.rhs)(t, &y, &mut k[0]);
        for s in 1..STAGES {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().take(s).enumerate() {
                    acc += A[s][j] * kj[i];
                }
                ytmp[i] = y[i] + h * acc;
            }
            (p.rhs)(t + C[s] * h, &ytmp, &mut k[s]);
        }
        let mut finite = true;
        for i in 0..n {
            let mut acc5 = 0.0;
            let mut acc4 = 0.0;
            for (j, kj) in k.iter().enumerate() {
                acc5 += B5[j] * kj[i];
                acc4 += B4[j] * kj[i];
            }
            y5[i] = y[i] + h * acc5;
            err[i] = h * (acc5 - acc4);
            finite &= y5[i].is_finite();
        }
        let vetoed = !finite || p.accept_check.map(|chk| !chk(&y5)).unwrap_or(false);
        if vetoed {
            vetoes += 1;
            if vetoes >= MAX_VETOES {
                return Err(OdeError::TooManyRejections { t, count: vetoes });
            }
            h *= 0.5;
            continue;
        }
        let e = wrms(&err, &y, p.abstol, p.reltol, None);
        if e <= 1.0 {
            vetoes = 0;
            t += h;
            y.copy_from_slice(&y5);
            if let Some(hook) = p.post_step {
                hook(t, &mut y);
            }
            steps.push(StepRecord { t, dt: h, err: e });
        }
        h = controller(h, e, 5.0);
    }
    Ok(OdeSolution { y_end: y, steps })
}
