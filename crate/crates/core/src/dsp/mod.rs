//! Precision-parameterized DSP kernels.
//!
//! Every buffer carries a [`Precision`] tag and stores its samples at that
//! width. Kernels dispatch on the tag instead of exposing parallel `f32`/`f64`
//! APIs, so the same code path serves both sides of a precision comparison.
//!
//! Element-wise kernels (pointwise multiply, magnitude, dot product) have two
//! implementations: a plain indexed loop and a chunked loop the compiler can
//! vectorize. [`select_compute_path`] picks one from the buffer length and a
//! [`ComputePathPolicy`]. Both paths perform the same floating point operations
//! in the same order, so the choice never changes a result.

mod backend;
mod kernels;

use num_complex::{Complex, Complex32, Complex64};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use backend::{CorrelationMethod, CorrelationOutput, Dsp, DspCounters};
pub use kernels::correlation_multiplications;

/// Numeric width of stored samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Single,
    Double,
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Precision::Single => "single",
            Precision::Double => "double",
        })
    }
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Precision::Single),
            "double" => Ok(Precision::Double),
            other => Err(Error::invalid(format!("unknown precision '{other}'"))),
        }
    }
}

/// Complex samples stored at one of the two supported widths.
#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    Single(Vec<Complex32>),
    Double(Vec<Complex64>),
}

impl Samples {
    /// Narrows (or keeps) double precision values into the requested width.
    pub fn from_c64(values: Vec<Complex64>, precision: Precision) -> Self {
        match precision {
            Precision::Double => Samples::Double(values),
            Precision::Single => Samples::Single(
                values
                    .into_iter()
                    .map(|z| Complex32::new(z.re as f32, z.im as f32))
                    .collect(),
            ),
        }
    }

    pub fn zeros(len: usize, precision: Precision) -> Self {
        match precision {
            Precision::Single => Samples::Single(vec![Complex32::default(); len]),
            Precision::Double => Samples::Double(vec![Complex64::default(); len]),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Samples::Single(v) => v.len(),
            Samples::Double(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn precision(&self) -> Precision {
        match self {
            Samples::Single(_) => Precision::Single,
            Samples::Double(_) => Precision::Double,
        }
    }

    /// Sample `i` widened to double precision.
    pub fn get(&self, i: usize) -> Complex64 {
        match self {
            Samples::Single(v) => widen(v[i]),
            Samples::Double(v) => v[i],
        }
    }

    pub fn to_c64(&self) -> Vec<Complex64> {
        match self {
            Samples::Single(v) => v.iter().copied().map(widen).collect(),
            Samples::Double(v) => v.clone(),
        }
    }

    pub fn to_precision(&self, precision: Precision) -> Samples {
        match (self, precision) {
            (Samples::Single(_), Precision::Single) | (Samples::Double(_), Precision::Double) => {
                self.clone()
            }
            (Samples::Single(v), Precision::Double) => {
                Samples::Double(v.iter().copied().map(widen).collect())
            }
            (Samples::Double(v), Precision::Single) => Samples::from_c64(v.clone(), Precision::Single),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Samples::Single(v) => v.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
            Samples::Double(v) => v.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
        }
    }

    fn slice(&self, range: std::ops::Range<usize>) -> Samples {
        match self {
            Samples::Single(v) => Samples::Single(v[range].to_vec()),
            Samples::Double(v) => Samples::Double(v[range].to_vec()),
        }
    }
}

pub(crate) fn widen(z: Complex32) -> Complex64 {
    Complex64::new(f64::from(z.re), f64::from(z.im))
}

/// A finite run of complex baseband samples at a known sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct IqBuffer {
    samples: Samples,
    sample_rate_hz: f64,
}

impl IqBuffer {
    pub fn new(samples: Samples, sample_rate_hz: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("buffer must hold at least one sample"));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!("sample rate must be > 0, got {sample_rate_hz}")));
        }
        if !samples.is_finite() {
            return Err(Error::invalid("buffer contains non-finite samples"));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn from_c64(values: Vec<Complex64>, sample_rate_hz: f64, precision: Precision) -> Result<Self> {
        Self::new(Samples::from_c64(values, precision), sample_rate_hz)
    }

    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    pub fn into_samples(self) -> Samples {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn precision(&self) -> Precision {
        self.samples.precision()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    pub fn to_precision(&self, precision: Precision) -> IqBuffer {
        IqBuffer {
            samples: self.samples.to_precision(precision),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Copies `range` out as a new buffer.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<IqBuffer> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::invalid(format!(
                "slice {}..{} out of bounds for buffer of {}",
                range.start,
                range.end,
                self.len()
            )));
        }
        Ok(IqBuffer {
            samples: self.samples.slice(range),
            sample_rate_hz: self.sample_rate_hz,
        })
    }
}

/// Frequency-domain coefficients produced by a forward transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    bins: Samples,
    sample_rate_hz: f64,
}

impl Spectrum {
    pub fn new(bins: Samples, sample_rate_hz: f64) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::invalid("spectrum must hold at least one bin"));
        }
        Ok(Self {
            bins,
            sample_rate_hz,
        })
    }

    pub fn bins(&self) -> &Samples {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn precision(&self) -> Precision {
        self.bins.precision()
    }

    /// Rate of the time-domain buffer this spectrum came from.
    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }
}

/// Shared view over the two complex sequence kinds so element-wise kernels
/// accept either.
pub trait ComplexSeq: Sized {
    fn samples(&self) -> &Samples;
    fn with_samples(&self, samples: Samples) -> Self;
}

impl ComplexSeq for IqBuffer {
    fn samples(&self) -> &Samples {
        &self.samples
    }

    fn with_samples(&self, samples: Samples) -> Self {
        IqBuffer {
            samples,
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

impl ComplexSeq for Spectrum {
    fn samples(&self) -> &Samples {
        &self.bins
    }

    fn with_samples(&self, bins: Samples) -> Self {
        Spectrum {
            bins,
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

/// Length threshold below which element-wise kernels run as plain loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputePathPolicy {
    pub min_iterations: usize,
}

impl Default for ComputePathPolicy {
    fn default() -> Self {
        Self { min_iterations: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComputePath {
    ScalarLoop,
    Accelerated,
}

pub fn select_compute_path(length: usize, policy: ComputePathPolicy) -> ComputePath {
    if length < policy.min_iterations {
        ComputePath::ScalarLoop
    } else {
        ComputePath::Accelerated
    }
}

/// Marker for the two float widths the kernels are instantiated at.
pub(crate) trait Float: rustfft::FftNum + rustfft::num_traits::Float + Into<f64> {}

impl Float for f32 {}
impl Float for f64 {}

pub(crate) type C<T> = Complex<T>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_non_finite_buffers_are_rejected() {
        assert!(IqBuffer::new(Samples::Single(vec![]), 1.0).is_err());
        let nan = Samples::Double(vec![Complex64::new(f64::NAN, 0.0)]);
        assert!(IqBuffer::new(nan, 1.0).is_err());
        let ok = Samples::Double(vec![Complex64::new(1.0, 0.0)]);
        assert!(IqBuffer::new(ok.clone(), 0.0).is_err());
        assert!(IqBuffer::new(ok, 1.0).is_ok());
    }

    #[test]
    fn precision_tag_follows_storage() {
        let b = IqBuffer::from_c64(vec![Complex64::new(0.5, -0.25)], 10.0, Precision::Single).unwrap();
        assert_eq!(b.precision(), Precision::Single);
        assert!(matches!(b.samples(), Samples::Single(_)));
        let d = b.to_precision(Precision::Double);
        assert_eq!(d.precision(), Precision::Double);
        assert_eq!(d.samples().get(0), Complex64::new(0.5, -0.25));
    }

    #[test]
    fn compute_path_boundary_is_inclusive_for_accelerated() {
        let policy = ComputePathPolicy { min_iterations: 64 };
        assert_eq!(select_compute_path(16, policy), ComputePath::ScalarLoop);
        assert_eq!(select_compute_path(63, policy), ComputePath::ScalarLoop);
        assert_eq!(select_compute_path(64, policy), ComputePath::Accelerated);
        assert_eq!(select_compute_path(0, ComputePathPolicy { min_iterations: 0 }), ComputePath::Accelerated);
    }
}
