//! Quadrature rules: composite Simpson on uniform samples, Gauss–Legendre,
//! and adaptive Gauss–Kronrod.

use crate::scalar::Real;

/// Composite Simpson rule on `values` sampled uniformly with spacing `h`.
///
/// Requires an odd number of samples (even number of panels).
pub fn simpson<T: Real>(values: &[T], h: T) -> T {
    let n = values.len();
    assert!(n >= 3 && n % 2 == 1, "Simpson needs an odd number (>= 3) of samples");
    let mut odd = T::zero();
    let mut even = T::zero();
    for (i, &v) in values.iter().enumerate().take(n - 1).skip(1) {
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    h / T::lit(3.0) * (values[0] + values[n - 1] + T::lit(4.0) * odd + T::lit(2.0) * even)
}

/// Simpson estimate together with a Richardson error estimate from the
/// half-resolution rule. Needs `values.len() ≡ 1 (mod 4)`.
pub fn simpson_with_error<T: Real>(values: &[T], h: T) -> (T, T) {
    let fine = simpson(values, h);
    let n = values.len();
    if n < 5 || (n - 1) % 4 != 0 {
        return (fine, T::zero());
    }
    let coarse_samples: Vec<T> = values.iter().step_by(2).copied().collect();
    let coarse = simpson(&coarse_samples, h + h);
    (fine, (fine - coarse).abs() / T::lit(15.0))
}

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussLegendre<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> GaussLegendre<T> {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![T::zero(); n];
        let mut weights = vec![T::zero(); n];
        let nf = T::from_usize_lossy(n);
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n
            let k = T::from_usize_lossy(i + 1);
            let mut x = (T::PI() * (k - T::lit(0.25)) / (nf + T::lit(0.5))).cos();
            let mut dp = T::one();
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= T::epsilon() * T::lit(4.0) {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d.is_finite() { d } else { dp };
            let w = T::lit(2.0) / ((T::one() - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate(&self, a: T, b: T, mut f: impl FnMut(T) -> T) -> T {
        let half = T::lit(0.5) * (b - a);
        let mid = T::lit(0.5) * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&x, &w)| acc + w * f(mid + half * x))
            * half
    }

    /// Mapped nodes and weights on `[a, b]`.
    pub fn on_interval(&self, a: T, b: T) -> impl Iterator<Item = (T, T)> + '_ {
        let half = T::lit(0.5) * (b - a);
        let mid = T::lit(0.5) * (a + b);
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (mid + half * x, w * half))
    }
}

fn legendre_with_derivative<T: Real>(n: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    for k in 2..=n {
        let kf = T::from_usize_lossy(k);
        let p2 = ((T::lit(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = T::from_usize_lossy(n);
    let d = nf * (x * p1 - p0) / (x * x - T::one());
    (p1, d)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<T: Real>(f: &mut impl FnMut(T) -> T, a: T, b: T) -> (T, T) {
    let half = T::lit(0.5) * (b - a);
    let mid = T::lit(0.5) * (a + b);
    let fc = f(mid);
    let mut k = fc * T::lit(WGK[7]);
    let mut g = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = half * T::lit(XGK[j]);
        let s = f(mid - dx) + f(mid + dx);
        k += T::lit(WGK[j]) * s;
        if j % 2 == 1 {
            g += T::lit(WG[j / 2]) * s;
        }
    }
    (k * half, ((k - g) * half).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integration to relative tolerance `rel_tol`.
///
/// Returns the integral and the accumulated error estimate.
pub fn adaptive_integrate<T: Real>(
    mut f: impl FnMut(T) -> T,
    a: T,
    b: T,
    rel_tol: T,
) -> (T, T) {
    let mut pending = vec![(a, b, kronrod15(&mut f, a, b))];
    let mut done_value = T::zero();
    let mut done_error = T::zero();
    let mut iterations = 0;
    while let Some((lo, hi, (v, e))) = pending.pop() {
        iterations += 1;
        let total: T = done_value + v + pending.iter().map(|p| p.2 .0).sum::<T>();
        let budget = rel_tol * total.abs().max(T::min_positive_value());
        let width_fraction = (hi - lo) / (b - a);
        if e <= budget * width_fraction || iterations > 5000 || (hi - lo) <= T::epsilon() * (b - a)
        {
            done_value += v;
            done_error += e;
            continue;
        }
        let m = T::lit(0.5) * (lo + hi);
        pending.push((lo, m, kronrod15(&mut f, lo, m)));
        pending.push((m, hi, kronrod15(&mut f, m, hi)));
    }
    (done_value, done_error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn simpson_is_exact_on_cubics() {
        let h = 0.25;
        let vals: Vec<f64> = (0..9).map(|i| (i as f64 * h).powi(3)).collect();
        // integral of x^3 over [0, 2]
        assert!((simpson(&vals, h) - 4.0).abs() < 1e-12);
        let (v, e) = simpson_with_error(&vals, h);
        assert!((v - 4.0).abs() < 1e-12 && e < 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_high_degree_polynomials() {
        let gl = GaussLegendre::<f64>::new(64);
        assert!((gl.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let v = gl.integrate(0.0, 1.0, |x| x.powi(100));
        assert!((v - 1.0 / 101.0).abs() < 1e-15);
        let s = gl.integrate(0.0, PI, |x| x.sin());
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_reaches_tight_tolerance() {
        let (v, e) = adaptive_integrate(|x: f64| (0.3 * x * (PI - x)).exp(), 0.0, PI, 1e-13);
        let reference = GaussLegendre::<f64>::new(80).integrate(0.0, PI, |x| (0.3 * x * (PI - x)).exp());
        assert!((v - reference).abs() < 1e-12 * reference, "{v} vs {reference}");
        assert!(e < 1e-10);
        let (w, _) = adaptive_integrate(|x: f64| x.sqrt(), 0.0, 1.0, 1e-10);
        assert!((w - 2.0 / 3.0).abs() < 1e-9);
    }
}
