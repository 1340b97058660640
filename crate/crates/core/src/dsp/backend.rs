use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::kernels;
use super::{
    select_compute_path, widen, ComplexSeq, ComputePath, ComputePathPolicy, Float, IqBuffer, Samples,
    Spectrum, C,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationMethod {
    /// `ifft(fft(x) * conj(fft(y)))`
    FrequencyDomain,
    /// Every lag computed as an explicit shifted dot product.
    Direct,
}

#[derive(Debug, Clone)]
pub struct CorrelationOutput {
    pub output: IqBuffer,
    pub method: CorrelationMethod,
    /// Complex multiplications attributed to this correlation (see
    /// [`super::correlation_multiplications`]).
    pub multiplications: u64,
}

/// Snapshot of the backend's submission counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DspCounters {
    /// Transform submissions: each `fft`/`ifft` call counts one, a whole
    /// `batch_fft` call counts one.
    pub dispatches: u64,
    pub batch_dispatches: u64,
    pub forward_transforms: u64,
    pub inverse_transforms: u64,
}

impl DspCounters {
    pub fn transforms(&self) -> u64 {
        self.forward_transforms + self.inverse_transforms
    }
}

#[derive(Default)]
struct Counters {
    dispatches: AtomicU64,
    batch_dispatches: AtomicU64,
    forward: AtomicU64,
    inverse: AtomicU64,
}

/// The compute backend: FFT plan caches, the element-wise path policy and the
/// dispatch counters.
///
/// A `Dsp` is `Sync`; workers share one instance by reference. Plan lookup
/// takes a short lock, transforms themselves run outside it.
pub struct Dsp {
    policy: ComputePathPolicy,
    planner32: Mutex<FftPlanner<f32>>,
    planner64: Mutex<FftPlanner<f64>>,
    counters: Counters,
}

impl Default for Dsp {
    fn default() -> Self {
        Self::new(ComputePathPolicy::default())
    }
}

impl std::fmt::Debug for Dsp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dsp")
            .field("policy", &self.policy)
            .field("counters", &self.counters())
            .finish()
    }
}

enum Direction {
    Forward,
    Inverse,
}

trait Planned: Float {
    fn plan(dsp: &Dsp, len: usize, dir: Direction) -> Arc<dyn Fft<Self>>;
}

impl Planned for f32 {
    fn plan(dsp: &Dsp, len: usize, dir: Direction) -> Arc<dyn Fft<f32>> {
        let mut planner = dsp.planner32.lock().unwrap_or_else(|e| e.into_inner());
        match dir {
            Direction::Forward => planner.plan_fft_forward(len),
            Direction::Inverse => planner.plan_fft_inverse(len),
        }
    }
}

impl Planned for f64 {
    fn plan(dsp: &Dsp, len: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
        let mut planner = dsp.planner64.lock().unwrap_or_else(|e| e.into_inner());
        match dir {
            Direction::Forward => planner.plan_fft_forward(len),
            Direction::Inverse => planner.plan_fft_inverse(len),
        }
    }
}

/// Transforms `data` in place as consecutive blocks of `len` in one call.
fn transform<T: Planned>(dsp: &Dsp, data: &mut [C<T>], len: usize, dir: Direction) {
    let inverse = matches!(dir, Direction::Inverse);
    let plan = T::plan(dsp, len, dir);
    let mut scratch = vec![C::new(T::zero(), T::zero()); plan.get_inplace_scratch_len()];
    plan.process_with_scratch(data, &mut scratch);
    if inverse {
        let scale = T::one() / T::from_usize(len).expect("transform length fits the float type");
        for z in data.iter_mut() {
            *z = *z * scale;
        }
    }
}

fn check_same(a: &Samples, b: &Samples) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.precision() != b.precision() {
        return Err(Error::invalid(format!(
            "precision mismatch: {} vs {}",
            a.precision(),
            b.precision()
        )));
    }
    Ok(())
}

impl Dsp {
    pub fn new(policy: ComputePathPolicy) -> Self {
        Self {
            policy,
            planner32: Mutex::new(FftPlanner::new()),
            planner64: Mutex::new(FftPlanner::new()),
            counters: Counters::default(),
        }
    }

    pub fn policy(&self) -> ComputePathPolicy {
        self.policy
    }

    pub fn path_for(&self, len: usize) -> ComputePath {
        select_compute_path(len, self.policy)
    }

    pub fn counters(&self) -> DspCounters {
        DspCounters {
            dispatches: self.counters.dispatches.load(Ordering::Relaxed),
            batch_dispatches: self.counters.batch_dispatches.load(Ordering::Relaxed),
            forward_transforms: self.counters.forward.load(Ordering::Relaxed),
            inverse_transforms: self.counters.inverse.load(Ordering::Relaxed),
        }
    }

    /// Unnormalized forward DFT, `X[k] = sum_n x[n] e^(-2 pi i k n / N)`.
    pub fn fft(&self, buf: &IqBuffer) -> Result<Spectrum> {
        if buf.is_empty() {
            return Err(Error::invalid("cannot transform an empty buffer"));
        }
        let n = buf.len();
        let bins = match buf.samples() {
            Samples::Single(v) => {
                let mut d = v.clone();
                transform(self, &mut d, n, Direction::Forward);
                Samples::Single(d)
            }
            Samples::Double(v) => {
                let mut d = v.clone();
                transform(self, &mut d, n, Direction::Forward);
                Samples::Double(d)
            }
        };
        self.counters.dispatches.fetch_add(1, Ordering::Relaxed);
        self.counters.forward.fetch_add(1, Ordering::Relaxed);
        Spectrum::new(bins, buf.sample_rate_hz())
    }

    /// Inverse DFT carrying the `1/N` factor, so `ifft(fft(x)) == x`.
    pub fn ifft(&self, spec: &Spectrum) -> Result<IqBuffer> {
        if spec.is_empty() {
            return Err(Error::invalid("cannot transform an empty spectrum"));
        }
        let n = spec.len();
        let samples = match spec.bins() {
            Samples::Single(v) => {
                let mut d = v.clone();
                transform(self, &mut d, n, Direction::Inverse);
                Samples::Single(d)
            }
            Samples::Double(v) => {
                let mut d = v.clone();
                transform(self, &mut d, n, Direction::Inverse);
                Samples::Double(d)
            }
        };
        self.counters.dispatches.fetch_add(1, Ordering::Relaxed);
        self.counters.inverse.fetch_add(1, Ordering::Relaxed);
        IqBuffer::new(samples, spec.sample_rate_hz())
    }

    /// Forward transforms of equal-length buffers submitted as one batch.
    ///
    /// The inputs are copied into one contiguous region and handed to the
    /// transform in a single call; the dispatch counter moves by one
    /// regardless of the batch size.
    pub fn batch_fft(&self, bufs: &[IqBuffer]) -> Result<Vec<Spectrum>> {
        let first = bufs.first().ok_or_else(|| Error::invalid("empty batch"))?;
        let (n, precision, fs) = (first.len(), first.precision(), first.sample_rate_hz());
        if let Some(bad) = bufs.iter().find(|b| b.len() != n || b.precision() != precision) {
            return Err(Error::invalid(format!(
                "ragged batch: expected {n} {precision} samples, found {} {}",
                bad.len(),
                bad.precision()
            )));
        }

        fn run<T: Planned>(dsp: &Dsp, parts: Vec<&Vec<C<T>>>, n: usize) -> Vec<Vec<C<T>>> {
            let mut contiguous: Vec<C<T>> = Vec::with_capacity(n * parts.len());
            for p in parts {
                contiguous.extend_from_slice(p);
            }
            transform(dsp, &mut contiguous, n, Direction::Forward);
            contiguous.chunks_exact(n).map(<[C<T>]>::to_vec).collect()
        }

        let outputs: Vec<Samples> = match precision {
            super::Precision::Single => {
                let parts = bufs
                    .iter()
                    .map(|b| match b.samples() {
                        Samples::Single(v) => v,
                        Samples::Double(_) => unreachable!("precision checked above"),
                    })
                    .collect();
                run(self, parts, n).into_iter().map(Samples::Single).collect()
            }
            super::Precision::Double => {
                let parts = bufs
                    .iter()
                    .map(|b| match b.samples() {
                        Samples::Double(v) => v,
                        Samples::Single(_) => unreachable!("precision checked above"),
                    })
                    .collect();
                run(self, parts, n).into_iter().map(Samples::Double).collect()
            }
        };
        self.counters.dispatches.fetch_add(1, Ordering::Relaxed);
        self.counters.batch_dispatches.fetch_add(1, Ordering::Relaxed);
        self.counters.forward.fetch_add(bufs.len() as u64, Ordering::Relaxed);
        outputs.into_iter().map(|s| Spectrum::new(s, fs)).collect()
    }

    /// `out[n] = a[n] * b[n]` or `a[n] * conj(b[n])`.
    pub fn pointwise_multiply<S: ComplexSeq>(&self, a: &S, b: &S, conjugate_b: bool) -> Result<S> {
        self.pointwise_multiply_on(self.path_for(a.samples().len()), a, b, conjugate_b)
    }

    /// Same as [`Dsp::pointwise_multiply`] with an explicitly chosen path.
    pub fn pointwise_multiply_on<S: ComplexSeq>(
        &self,
        path: ComputePath,
        a: &S,
        b: &S,
        conjugate_b: bool,
    ) -> Result<S> {
        check_same(a.samples(), b.samples())?;
        let out = match (a.samples(), b.samples()) {
            (Samples::Single(x), Samples::Single(y)) => {
                Samples::Single(kernels::multiply(x, y, conjugate_b, path))
            }
            (Samples::Double(x), Samples::Double(y)) => {
                Samples::Double(kernels::multiply(x, y, conjugate_b, path))
            }
            _ => unreachable!("precision checked above"),
        };
        Ok(a.with_samples(out))
    }

    /// `sum_n a[n] * b[n]` (or `* conj(b[n])`), accumulated left to right in
    /// the buffers' precision and widened on return.
    pub fn dot_product(&self, a: &IqBuffer, b: &IqBuffer, conjugate_b: bool) -> Result<Complex64> {
        self.dot_product_on(self.path_for(a.len()), a, b, conjugate_b)
    }

    pub fn dot_product_on(
        &self,
        path: ComputePath,
        a: &IqBuffer,
        b: &IqBuffer,
        conjugate_b: bool,
    ) -> Result<Complex64> {
        check_same(a.samples(), b.samples())?;
        Ok(match (a.samples(), b.samples()) {
            (Samples::Single(x), Samples::Single(y)) => widen(kernels::dot(x, y, conjugate_b, path)),
            (Samples::Double(x), Samples::Double(y)) => kernels::dot(x, y, conjugate_b, path),
            _ => unreachable!("precision checked above"),
        })
    }

    /// `re^2 + im^2` per sample, computed in the buffer's precision.
    pub fn magnitude_sq<S: ComplexSeq>(&self, buf: &S) -> Result<Vec<f64>> {
        self.magnitude_sq_on(self.path_for(buf.samples().len()), buf)
    }

    pub fn magnitude_sq_on<S: ComplexSeq>(&self, path: ComputePath, buf: &S) -> Result<Vec<f64>> {
        Ok(match buf.samples() {
            Samples::Single(v) if !v.is_empty() => kernels::magnitude_sq(v, path),
            Samples::Double(v) if !v.is_empty() => kernels::magnitude_sq(v, path),
            _ => return Err(Error::invalid("magnitude of an empty sequence")),
        })
    }

    /// Circular cross-correlation `out[lag] = sum_n x[n] * conj(y[(n - lag) mod N])`.
    pub fn circular_correlate(
        &self,
        x: &IqBuffer,
        y: &IqBuffer,
        method: CorrelationMethod,
    ) -> Result<CorrelationOutput> {
        check_same(x.samples(), y.samples())?;
        let n = x.len();
        match method {
            CorrelationMethod::FrequencyDomain => {
                let fx = self.fft(x)?;
                let fy = self.fft(y)?;
                let product = self.pointwise_multiply(&fx, &fy, true)?;
                Ok(CorrelationOutput {
                    output: self.ifft(&product)?,
                    method,
                    multiplications: kernels::correlation_multiplications(method, n),
                })
            }
            CorrelationMethod::Direct => {
                let (samples, multiplications) = match (x.samples(), y.samples()) {
                    (Samples::Single(a), Samples::Single(b)) => {
                        let (o, m) = kernels::correlate_direct(a, b);
                        (Samples::Single(o), m)
                    }
                    (Samples::Double(a), Samples::Double(b)) => {
                        let (o, m) = kernels::correlate_direct(a, b);
                        (Samples::Double(o), m)
                    }
                    _ => unreachable!("precision checked above"),
                };
                Ok(CorrelationOutput {
                    output: IqBuffer::new(samples, x.sample_rate_hz())?,
                    method,
                    multiplications,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::Precision;

    fn buf(values: &[(f64, f64)], precision: Precision) -> IqBuffer {
        IqBuffer::from_c64(
            values.iter().map(|&(r, i)| Complex64::new(r, i)).collect(),
            1.0,
            precision,
        )
        .unwrap()
    }

    fn close(a: &Samples, expected: &[(f64, f64)], tol: f64) {
        assert_eq!(a.len(), expected.len());
        for (i, &(r, im)) in expected.iter().enumerate() {
            let z = a.get(i);
            assert!((z.re - r).abs() < tol && (z.im - im).abs() < tol, "bin {i}: {z} vs {r}+{im}i");
        }
    }

    #[test]
    fn impulse_and_constant_transforms() {
        let dsp = Dsp::default();
        for p in [Precision::Single, Precision::Double] {
            let imp = dsp.fft(&buf(&[(1., 0.), (0., 0.), (0., 0.), (0., 0.)], p)).unwrap();
            close(imp.bins(), &[(1., 0.); 4], 1e-6);
            let dc = dsp.fft(&buf(&[(1., 0.); 4], p)).unwrap();
            close(dc.bins(), &[(4., 0.), (0., 0.), (0., 0.), (0., 0.)], 1e-6);
            let back = dsp.ifft(&dc).unwrap();
            close(back.samples(), &[(1., 0.); 4], 1e-6);
            assert_eq!(dc.precision(), p);
        }
    }

    #[test]
    fn conjugate_product_is_squared_magnitude() {
        let dsp = Dsp::default();
        let a = buf(&[(1., 1.)], Precision::Single);
        let out = dsp.pointwise_multiply(&a, &a, true).unwrap();
        close(out.samples(), &[(2., 0.)], 0.0 + f64::EPSILON);
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let dsp = Dsp::default();
        let a = buf(&[(1., 0.); 4], Precision::Single);
        let b = buf(&[(1., 0.); 3], Precision::Single);
        let c = buf(&[(1., 0.); 4], Precision::Double);
        assert!(dsp.pointwise_multiply(&a, &b, false).is_err());
        assert!(dsp.pointwise_multiply(&a, &c, false).is_err());
        assert!(dsp.dot_product(&a, &b, false).is_err());
        assert!(dsp.circular_correlate(&a, &b, CorrelationMethod::Direct).is_err());
        assert!(dsp.batch_fft(&[a.clone(), b]).is_err());
        assert!(dsp.batch_fft(&[a, c]).is_err());
        assert!(dsp.batch_fft(&[]).is_err());
    }

    #[test]
    fn dot_products_of_small_sequences() {
        let dsp = Dsp::default();
        let ones = buf(&[(1., 0.); 4], Precision::Single);
        assert_eq!(dsp.dot_product(&ones, &ones, true).unwrap(), Complex64::new(4.0, 0.0));
        let a = buf(&[(1., 0.), (1., 0.), (-1., 0.), (-1., 0.)], Precision::Single);
        let b = buf(&[(1., 0.), (-1., 0.), (1., 0.), (-1., 0.)], Precision::Single);
        assert_eq!(dsp.dot_product(&a, &b, false).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn magnitude_of_known_values() {
        let dsp = Dsp::default();
        assert_eq!(dsp.magnitude_sq(&buf(&[(3., 4.)], Precision::Double)).unwrap(), vec![25.0]);
        assert_eq!(
            dsp.magnitude_sq(&buf(&[(0., 0.); 5], Precision::Single)).unwrap(),
            vec![0.0; 5]
        );
    }

    #[test]
    fn impulse_correlates_to_impulse() {
        let dsp = Dsp::default();
        let imp = buf(&[(1., 0.), (0., 0.), (0., 0.), (0., 0.), (0., 0.)], Precision::Double);
        for m in [CorrelationMethod::Direct, CorrelationMethod::FrequencyDomain] {
            let out = dsp.circular_correlate(&imp, &imp, m).unwrap();
            close(out.output.samples(), &[(1., 0.), (0., 0.), (0., 0.), (0., 0.), (0., 0.)], 1e-12);
        }
    }

    #[test]
    fn counters_track_dispatches() {
        let dsp = Dsp::default();
        let bufs: Vec<_> = (0..10).map(|i| buf(&[(i as f64, 1.); 16], Precision::Single)).collect();
        dsp.batch_fft(&bufs).unwrap();
        assert_eq!(dsp.counters().dispatches, 1);
        assert_eq!(dsp.counters().forward_transforms, 10);
        for b in &bufs {
            dsp.fft(b).unwrap();
        }
        assert_eq!(dsp.counters().dispatches, 11);
        assert_eq!(dsp.counters().batch_dispatches, 1);
    }
}
