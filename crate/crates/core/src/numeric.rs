//! Small numerical primitives shared by the exact engines.

/// `1 - e^{-x}`, accurate near zero.
#[inline]
pub fn e1(x: f64) -> f64 {
    -(-x).exp_m1()
}

/// `e^{-x} - 1 + x`, accurate near zero.
///
/// For |x| < 0.1 a Taylor series is used; the direct form loses about
/// `log10(1/x)` digits to cancellation there.
#[inline]
pub fn e2(x: f64) -> f64 {
    if x.abs() < 0.1 {
        // x^2/2 - x^3/6 + x^4/24 - ...
        let mut term = x * x / 2.0;
        let mut sum = term;
        let mut k = 3.0;
        while term.abs() > 1e-18 * sum.abs() && k < 30.0 {
            term *= -x / k;
            sum += term;
            k += 1.0;
        }
        sum
    } else {
        (-x).exp_m1() + x
    }
}

/// Neumaier-compensated summation.
///
/// The result depends only on the order of `values`, so callers that need
/// reproducibility under parallelism collect in a fixed order first.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean and standard error of the mean.
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    let var = ss / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Greatest common divisor.
pub fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}
