//! Nomographic target functions: `f(d_1..d_K) = post(Σ_k pre_k(d_k))`.

use crate::error::invalid;
use crate::{AirCompError, Real, Result};

/// Names accepted by [`make_function`].
pub const FUNCTION_NAMES: [&str; 6] = [
    "arithmetic_mean",
    "weighted_sum",
    "geometric_mean",
    "euclidean_norm",
    "polynomial",
    "soft_max",
];

#[derive(Debug, Clone, PartialEq)]
pub enum FunctionKind<T> {
    ArithmeticMean,
    /// `Σ w_k d_k`. Empty weights mean unit weights.
    WeightedSum { weights: Vec<T> },
    GeometricMean,
    EuclideanNorm,
    /// `Σ_k p(d_k)` with `p(x) = Σ_j c_j x^j`.
    Polynomial { coefficients: Vec<T> },
    /// Log-sum-exp `r + ln(Σ exp(β(d_k - r))) / β`, an upper approximation of
    /// `max_k d_k` with error at most `ln(K) / β`. The reference `r` keeps the
    /// exponentials in range and does not change the value.
    SoftMax { beta: T, reference: T },
}

/// Interval of valid per-device data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataDomain<T> {
    pub lower: T,
    pub upper: T,
    pub lower_open: bool,
}

impl<T: Real> DataDomain<T> {
    fn real_line() -> Self {
        Self {
            lower: T::neg_infinity(),
            upper: T::infinity(),
            lower_open: true,
        }
    }

    pub fn contains(&self, x: T) -> bool {
        let above = if self.lower_open {
            x > self.lower
        } else {
            x >= self.lower
        };
        above && x <= self.upper && x.is_finite()
    }
}

/// Affine map applied to pre-processed values before transmission so the
/// transmitted symbols have zero mean and unit variance under the data prior.
/// The server undoes it after detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceNormalization<T> {
    pub mean: T,
    pub scale: T,
}

impl<T: Real> SourceNormalization<T> {
    pub fn identity() -> Self {
        Self {
            mean: T::zero(),
            scale: T::one(),
        }
    }

    pub fn new(mean: T, scale: T) -> Result<Self> {
        if !mean.is_finite() || !(scale > T::zero()) || !scale.is_finite() {
            return Err(invalid(format!(
                "normalization needs finite mean and positive scale, got ({mean}, {scale})"
            )));
        }
        Ok(Self { mean, scale })
    }

    pub fn normalize(&self, x: T) -> T {
        (x - self.mean) / self.scale
    }
}

impl<T: Real> Default for SourceNormalization<T> {
    fn default() -> Self {
        Self::identity()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NomographicFunction<T> {
    kind: FunctionKind<T>,
    domain: DataDomain<T>,
    normalization: SourceNormalization<T>,
}

/// Looks up a registered function by name with default parameters:
/// unit weights, polynomial `x + x^2`, soft-max with `β = 10` around zero.
pub fn make_function<T: Real>(name: &str) -> Result<NomographicFunction<T>> {
    match name {
        "arithmetic_mean" => Ok(NomographicFunction::arithmetic_mean()),
        "weighted_sum" => Ok(NomographicFunction::weighted_sum(Vec::new())),
        "geometric_mean" => Ok(NomographicFunction::geometric_mean()),
        "euclidean_norm" => Ok(NomographicFunction::euclidean_norm()),
        "polynomial" => Ok(NomographicFunction::polynomial(vec![
            T::zero(),
            T::one(),
            T::one(),
        ])),
        "soft_max" => NomographicFunction::soft_max(T::lit(10.0), T::zero()),
        other => Err(AirCompError::NotFound(other.to_string())),
    }
}

impl<T: Real> NomographicFunction<T> {
    fn with_kind(kind: FunctionKind<T>, domain: DataDomain<T>) -> Self {
        Self {
            kind,
            domain,
            normalization: SourceNormalization::identity(),
        }
    }

    pub fn arithmetic_mean() -> Self {
        Self::with_kind(FunctionKind::ArithmeticMean, DataDomain::real_line())
    }

    pub fn weighted_sum(weights: Vec<T>) -> Self {
        Self::with_kind(FunctionKind::WeightedSum { weights }, DataDomain::real_line())
    }

    pub fn geometric_mean() -> Self {
        Self::with_kind(
            FunctionKind::GeometricMean,
            DataDomain {
                lower: T::zero(),
                upper: T::infinity(),
                lower_open: true,
            },
        )
    }

    pub fn euclidean_norm() -> Self {
        Self::with_kind(FunctionKind::EuclideanNorm, DataDomain::real_line())
    }

    pub fn polynomial(coefficients: Vec<T>) -> Self {
        Self::with_kind(FunctionKind::Polynomial { coefficients }, DataDomain::real_line())
    }

    /// Soft-max with sharpness `beta` centred on `reference`. Values may lie
    /// at most `w = ln(MAX) / 2β` above `reference`, so `exp(β(d - r))` and sums
    /// of up to `sqrt(MAX)` such terms stay finite. Smaller values may underflow,
    /// but the largest value of a data set must be at least `reference - w`.
    pub fn soft_max(beta: T, reference: T) -> Result<Self> {
        if !(beta > T::zero()) || !beta.is_finite() || !reference.is_finite() {
            return Err(invalid("soft_max needs a finite positive beta and finite reference"));
        }
        let half_width = T::max_value().ln() / (T::lit(2.0) * beta);
        Ok(Self::with_kind(
            FunctionKind::SoftMax { beta, reference },
            DataDomain {
                lower: T::neg_infinity(),
                upper: reference + half_width,
                lower_open: true,
            },
        ))
    }

    pub fn with_normalization(mut self, normalization: SourceNormalization<T>) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            FunctionKind::ArithmeticMean => "arithmetic_mean",
            FunctionKind::WeightedSum { .. } => "weighted_sum",
            FunctionKind::GeometricMean => "geometric_mean",
            FunctionKind::EuclideanNorm => "euclidean_norm",
            FunctionKind::Polynomial { .. } => "polynomial",
            FunctionKind::SoftMax { .. } => "soft_max",
        }
    }

    pub fn kind(&self) -> &FunctionKind<T> {
        &self.kind
    }

    pub fn domain(&self) -> DataDomain<T> {
        self.domain
    }

    pub fn normalization(&self) -> SourceNormalization<T> {
        self.normalization
    }

    /// `ln(K) / β` for soft-max, `None` for the exact functions.
    pub fn max_approximation_error(&self, num_devices: usize) -> Option<T> {
        match self.kind {
            FunctionKind::SoftMax { beta, .. } => {
                Some(T::from_usize(num_devices).expect("K fits scalar").ln() / beta)
            }
            _ => None,
        }
    }

    /// Device-side pre-processing of device `device`'s value.
    pub fn pre(&self, device: usize, value: T) -> T {
        match &self.kind {
            FunctionKind::ArithmeticMean => value,
            FunctionKind::WeightedSum { weights } => {
                weights.get(device).copied().unwrap_or_else(T::one) * value
            }
            FunctionKind::GeometricMean => value.ln(),
            FunctionKind::EuclideanNorm => value * value,
            FunctionKind::Polynomial { coefficients } => coefficients
                .iter()
                .rev()
                .fold(T::zero(), |acc, &c| acc * value + c),
            FunctionKind::SoftMax { beta, reference } => (*beta * (value - *reference)).exp(),
        }
    }

    /// Server-side post-processing of the (estimated) sum over `num_devices`
    /// devices. Noisy sums outside the range of `sqrt`/`ln` are clamped to the
    /// nearest valid input.
    pub fn post(&self, sum: T, num_devices: usize) -> T {
        let k = T::from_usize(num_devices).expect("K fits scalar");
        match &self.kind {
            FunctionKind::ArithmeticMean => sum / k,
            FunctionKind::WeightedSum { .. } | FunctionKind::Polynomial { .. } => sum,
            FunctionKind::GeometricMean => (sum / k).exp(),
            FunctionKind::EuclideanNorm => sum.max(T::zero()).sqrt(),
            FunctionKind::SoftMax { beta, reference } => {
                *reference + sum.max(T::min_positive_value()).ln() / *beta
            }
        }
    }

    pub fn check_domain(&self, data: &[T]) -> Result<()> {
        if data.is_empty() {
            return Err(invalid("need at least one data value"));
        }
        if let FunctionKind::WeightedSum { weights } = &self.kind {
            if !weights.is_empty() && weights.len() != data.len() {
                return Err(invalid(format!(
                    "weighted_sum has {} weights for {} devices",
                    weights.len(),
                    data.len()
                )));
            }
        }
        let bad = data.iter().position(|&d| !self.domain.contains(d)).or_else(|| match self.kind {
            FunctionKind::SoftMax { reference, .. } => {
                let floor = reference - (self.domain.upper - reference);
                let (top, max) = data
                    .iter()
                    .enumerate()
                    .fold((0, T::neg_infinity()), |(i, m), (j, &d)| if d > m { (j, d) } else { (i, m) });
                (max < floor).then_some(top)
            }
            _ => None,
        });
        match bad {
            Some(device) => Err(AirCompError::Domain {
                function: self.name(),
                value: data[device].to_f64_lossy(),
                device,
            }),
            None => Ok(()),
        }
    }

    /// `post(Σ pre(d_k))`.
    pub fn evaluate_nomographic(&self, data: &[T]) -> Result<T> {
        self.check_domain(data)?;
        let sum = data
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (k, &d)| acc + self.pre(k, d));
        Ok(self.post(sum, data.len()))
    }

    /// The target function evaluated directly, without the pre/sum/post split.
    pub fn evaluate_direct(&self, data: &[T]) -> Result<T> {
        self.check_domain(data)?;
        let k = T::from_usize(data.len()).expect("K fits scalar");
        let value = match &self.kind {
            FunctionKind::ArithmeticMean => data.iter().copied().sum::<T>() / k,
            FunctionKind::WeightedSum { weights } => {
                if weights.is_empty() {
                    data.iter().copied().sum()
                } else {
                    weights.iter().zip(data).map(|(&w, &d)| w * d).sum()
                }
            }
            FunctionKind::GeometricMean => {
                let root = k.recip();
                data.iter().fold(T::one(), |acc, &d| acc * d.powf(root))
            }
            FunctionKind::EuclideanNorm => data.iter().fold(T::zero(), |acc, &d| acc.hypot(d)),
            FunctionKind::Polynomial { coefficients } => coefficients
                .iter()
                .enumerate()
                .map(|(j, &c)| c * data.iter().map(|&d| d.powi(j as i32)).sum::<T>())
                .sum(),
            FunctionKind::SoftMax { beta, .. } => {
                let m = data.iter().copied().fold(T::neg_infinity(), T::max);
                let tail: T = data.iter().map(|&d| (*beta * (d - m)).exp()).sum();
                m + tail.ln() / *beta
            }
        };
        Ok(value)
    }
}
