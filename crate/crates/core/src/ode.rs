//! Embedded Dormand–Prince 5(4) integrator for small fixed-size systems.

use crate::scalar::Real;

#[derive(Clone, Copy, Debug)]
pub struct Tolerances<T> {
    pub rtol: T,
    pub atol: T,
    pub max_steps: usize,
}

impl<T: Real> Default for Tolerances<T> {
    fn default() -> Self {
        Tolerances { rtol: T::lit(1e-12), atol: T::lit(1e-12), max_steps: 2_000_000 }
    }
}

/// State carried between calls so that consecutive segments reuse the last step size.
#[derive(Clone, Copy, Debug)]
pub struct Stepper<T> {
    pub h: T,
    pub steps: usize,
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = rhs(x, y)` from `x0` to `x1` (either direction).
///
/// Returns `None` when the step budget is exhausted or the state becomes non-finite.
pub fn integrate<T: Real, const N: usize>(
    rhs: &mut impl FnMut(T, &[T; N]) -> [T; N],
    x0: T,
    y0: [T; N],
    x1: T,
    tol: &Tolerances<T>,
    stepper: &mut Stepper<T>,
) -> Option<[T; N]> {
    let span = x1 - x0;
    if span == T::zero() {
        return Some(y0);
    }
    let dir = span.signum();
    let mut x = x0;
    let mut y = y0;
    let mut h = if stepper.h > T::zero() { stepper.h } else { span.abs() * T::lit(1e-3) };
    h = h.min(span.abs());
    let mut k = [[T::zero(); N]; 7];
    k[0] = rhs(x, &y);
    let safety = T::lit(0.9);
    let min_factor = T::lit(0.2);
    let max_factor = T::lit(5.0);
    let exponent = T::lit(-0.2);
    loop {
        let remaining = (x1 - x) * dir;
        if remaining <= T::zero() {
            break;
        }
        let untruncated = h;
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        let hs = h * dir;
        for stage in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(stage) {
                let a = T::lit(A[stage][j]);
                if a != T::zero() {
                    for i in 0..N {
                        ys[i] += hs * a * kj[i];
                    }
                }
            }
            k[stage] = rhs(x + hs * T::lit(C[stage]), &ys);
        }
        // stage 6 evaluated at the fifth-order solution (FSAL)
        let mut y_new = y;
        for i in 0..N {
            let mut acc = T::zero();
            for j in 0..6 {
                acc += T::lit(A[6][j]) * k[j][i];
            }
            y_new[i] += hs * acc;
        }
        let k7 = rhs(x + hs, &y_new);
        let mut err = T::zero();
        for i in 0..N {
            let mut e = T::zero();
            for j in 0..6 {
                e += T::lit(E[j]) * k[j][i];
            }
            e += T::lit(E[6]) * k7[i];
            e = e * hs;
            let sc = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sc) * (e / sc);
        }
        err = (err / T::from_usize_lossy(N)).sqrt();
        stepper.steps += 1;
        if stepper.steps > tol.max_steps || !err.is_finite() {
            return None;
        }
        if err <= T::one() {
            x = if last { x1 } else { x + hs };
            y = y_new;
            k[0] = k7;
            let factor = if err == T::zero() {
                max_factor
            } else {
                (safety * err.powf(exponent)).min(max_factor).max(min_factor)
            };
            let proposal = h * factor;
            if last {
                stepper.h = proposal.max(untruncated);
                break;
            }
            h = proposal;
        } else {
            let factor = (safety * err.powf(exponent)).max(min_factor);
            h = h * factor;
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(y)
}
