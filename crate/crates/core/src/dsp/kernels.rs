use super::{ComputePath, CorrelationMethod, Float, C};

const LANES: usize = 8;

#[inline(always)]
fn product<T: Float>(a: C<T>, b: C<T>, conjugate_b: bool) -> C<T> {
    let b = if conjugate_b { b.conj() } else { b };
    a * b
}

#[inline(always)]
fn power<T: Float>(z: C<T>) -> T {
    z.re * z.re + z.im * z.im
}

pub(crate) fn multiply<T: Float>(a: &[C<T>], b: &[C<T>], conjugate_b: bool, path: ComputePath) -> Vec<C<T>> {
    debug_assert_eq!(a.len(), b.len());
    match path {
        ComputePath::ScalarLoop => {
            let mut out = Vec::with_capacity(a.len());
            for i in 0..a.len() {
                out.push(product(a[i], b[i], conjugate_b));
            }
            out
        }
        ComputePath::Accelerated => {
            let mut out = vec![C::new(T::zero(), T::zero()); a.len()];
            let mut o = out.chunks_exact_mut(LANES);
            let mut x = a.chunks_exact(LANES);
            let mut y = b.chunks_exact(LANES);
            for ((o, x), y) in (&mut o).zip(&mut x).zip(&mut y) {
                for j in 0..LANES {
                    o[j] = product(x[j], y[j], conjugate_b);
                }
            }
            for ((o, x), y) in o.into_remainder().iter_mut().zip(x.remainder()).zip(y.remainder()) {
                *o = product(*x, *y, conjugate_b);
            }
            out
        }
    }
}

pub(crate) fn magnitude_sq<T: Float>(a: &[C<T>], path: ComputePath) -> Vec<f64> {
    match path {
        ComputePath::ScalarLoop => {
            let mut out = Vec::with_capacity(a.len());
            for &z in a {
                out.push(power(z).into());
            }
            out
        }
        ComputePath::Accelerated => {
            let mut out = vec![0.0f64; a.len()];
            let mut o = out.chunks_exact_mut(LANES);
            let mut x = a.chunks_exact(LANES);
            for (o, x) in (&mut o).zip(&mut x) {
                for j in 0..LANES {
                    o[j] = power(x[j]).into();
                }
            }
            for (o, x) in o.into_remainder().iter_mut().zip(x.remainder()) {
                *o = power(*x).into();
            }
            out
        }
    }
}

/// Sequential left-to-right accumulation on both paths; the accelerated path
/// only batches the products ahead of the (unchanged) running sum.
pub(crate) fn dot<T: Float>(a: &[C<T>], b: &[C<T>], conjugate_b: bool, path: ComputePath) -> C<T> {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = C::new(T::zero(), T::zero());
    match path {
        ComputePath::ScalarLoop => {
            for i in 0..a.len() {
                acc = acc + product(a[i], b[i], conjugate_b);
            }
        }
        ComputePath::Accelerated => {
            let mut lanes = [C::new(T::zero(), T::zero()); LANES];
            let mut x = a.chunks_exact(LANES);
            let mut y = b.chunks_exact(LANES);
            for (x, y) in (&mut x).zip(&mut y) {
                for j in 0..LANES {
                    lanes[j] = product(x[j], y[j], conjugate_b);
                }
                for p in lanes {
                    acc = acc + p;
                }
            }
            for (x, y) in x.remainder().iter().zip(y.remainder()) {
                acc = acc + product(*x, *y, conjugate_b);
            }
        }
    }
    acc
}

/// All-lag circular cross-correlation by explicit shifting,
/// `out[lag] = sum_n x[n] * conj(y[(n - lag) mod N])`.
///
/// Returns the output and the number of complex multiplications executed.
pub(crate) fn correlate_direct<T: Float>(x: &[C<T>], y: &[C<T>]) -> (Vec<C<T>>, u64) {
    let n = x.len();
    let mut out = Vec::with_capacity(n);
    let mut multiplications = 0u64;
    for lag in 0..n {
        let mut acc = C::new(T::zero(), T::zero());
        // n in [lag, N) pairs with y[n - lag]; n in [0, lag) wraps to y[n + N - lag]
        for (xv, yv) in x[lag..].iter().zip(&y[..n - lag]) {
            acc = acc + product(*xv, *yv, true);
        }
        for (xv, yv) in x[..lag].iter().zip(&y[n - lag..]) {
            acc = acc + product(*xv, *yv, true);
        }
        multiplications += n as u64;
        out.push(acc);
    }
    (out, multiplications)
}

/// Nominal complex multiplication count of one length-`n` correlation.
///
/// `Direct` is exact (`n` products for each of `n` lags). `FrequencyDomain`
/// counts three radix-2 style transforms at `n/2 * ceil(log2 n)` products each
/// plus the `n` spectral products.
pub fn correlation_multiplications(method: CorrelationMethod, n: usize) -> u64 {
    let n = n as u64;
    match method {
        CorrelationMethod::Direct => n * n,
        CorrelationMethod::FrequencyDomain => {
            let stages = if n <= 1 { 0 } else { 64 - (n - 1).leading_zeros() as u64 };
            3 * (n / 2) * stages + n
        }
    }
}
