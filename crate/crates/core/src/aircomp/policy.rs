//! Transmit power control with magnitude alignment.
//!
//! Device `k` transmits `b_k s_k` over gain `h_k`; the server scales the
//! received sum by `1/√η`. With `p_k = |b_k|^2` and phase pre-compensation,
//! device `k` arrives with amplitude `a_k = |h_k| √p_k / √η`. Inversion devices
//! have `a_k = 1`; full-power devices fall short (`a_k < 1`) and excluded
//! devices contribute nothing.
//!
//! For unit-variance independent sources the computation error of the
//! average is
//!
//! ```text
//! MSE = (1/K^2) · [ Σ_k (a_k - 1)^2 + σ^2 / η ]
//! ```
//!
//! a misalignment term plus the noise amplified by the de-noising factor.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;

use crate::channel::ChannelRealization;
use crate::error::invalid;
use crate::{AirCompError, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeviceMode {
    /// `|h_k|^2 p_k = η`: perfectly aligned.
    Inversion,
    /// `p_k = P` with `|h_k|^2 P < η`.
    FullPower,
    /// Silent (`b_k = 0`).
    Excluded,
}

/// How the server scales the aggregate when devices were excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum AveragingMode {
    /// Excluded devices count as contributing their prior mean.
    AllDevices,
    /// The surviving devices' sum is rescaled by `K / K_active`, i.e. the
    /// estimate is the conditional mean over the surviving devices.
    #[default]
    SurvivingDevices,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    UniformInversion,
    TruncatedInversion,
    ThresholdOptimal,
    /// Binary allocation at a caller-chosen alignment factor.
    FixedAlignment,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::UniformInversion => "uniform_inversion",
            PolicyKind::TruncatedInversion => "truncated_inversion",
            PolicyKind::ThresholdOptimal => "threshold_optimal",
            PolicyKind::FixedAlignment => "fixed_alignment",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = AirCompError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform_inversion" => Ok(PolicyKind::UniformInversion),
            "truncated_inversion" => Ok(PolicyKind::TruncatedInversion),
            "threshold_optimal" => Ok(PolicyKind::ThresholdOptimal),
            other => Err(AirCompError::NotFound(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation<T> {
    tx_scalars: Vec<Complex<T>>,
    alignment_factor: T,
    power_budget: T,
    modes: Vec<DeviceMode>,
    policy: PolicyKind,
    averaging: AveragingMode,
}

impl<T: Real> PowerAllocation<T> {
    pub fn tx_scalars(&self) -> &[Complex<T>] {
        &self.tx_scalars
    }

    /// η.
    pub fn alignment_factor(&self) -> T {
        self.alignment_factor
    }

    pub fn power_budget(&self) -> T {
        self.power_budget
    }

    pub fn modes(&self) -> &[DeviceMode] {
        &self.modes
    }

    pub fn policy(&self) -> PolicyKind {
        self.policy
    }

    pub fn averaging(&self) -> AveragingMode {
        self.averaging
    }

    pub fn with_averaging(mut self, averaging: AveragingMode) -> Self {
        self.averaging = averaging;
        self
    }

    pub fn num_devices(&self) -> usize {
        self.tx_scalars.len()
    }

    pub fn num_active(&self) -> usize {
        self.modes.iter().filter(|m| **m != DeviceMode::Excluded).count()
    }

    /// `|b_k|^2`.
    pub fn transmit_powers(&self) -> Vec<T> {
        self.tx_scalars.iter().map(|b| b.norm_sqr()).collect()
    }

    pub fn excluded_devices(&self) -> Vec<usize> {
        self.devices_in(DeviceMode::Excluded)
    }

    pub fn full_power_devices(&self) -> Vec<usize> {
        self.devices_in(DeviceMode::FullPower)
    }

    fn devices_in(&self, mode: DeviceMode) -> Vec<usize> {
        self.modes
            .iter()
            .enumerate()
            .filter(|(_, m)| **m == mode)
            .map(|(k, _)| k)
            .collect()
    }

    /// Post-scaling amplitude `a_k` with which each device's symbol reaches the
    /// detector. Inversion devices are aligned by construction and report
    /// exactly one.
    pub fn received_amplitudes(&self, channel: &ChannelRealization<T>) -> Result<Vec<T>> {
        check_same_k(channel, self)?;
        let sqrt_eta = self.alignment_factor.sqrt();
        Ok(self
            .modes
            .iter()
            .zip(channel.gains().iter().zip(&self.tx_scalars))
            .map(|(mode, (h, b))| match mode {
                DeviceMode::Inversion => T::one(),
                DeviceMode::FullPower => (h * b).norm() / sqrt_eta,
                DeviceMode::Excluded => T::zero(),
            })
            .collect())
    }
}

fn check_same_k<T: Real>(channel: &ChannelRealization<T>, alloc: &PowerAllocation<T>) -> Result<()> {
    if channel.num_devices() != alloc.num_devices() {
        return Err(invalid(format!(
            "allocation has {} devices, channel has {}",
            alloc.num_devices(),
            channel.num_devices()
        )));
    }
    Ok(())
}

fn check_budget<T: Real>(power_budget: T) -> Result<()> {
    if !(power_budget > T::zero()) || !power_budget.is_finite() {
        return Err(invalid(format!("power budget must be positive, got {power_budget}")));
    }
    Ok(())
}

fn check_nonzero<T: Real>(power_gains: &[T]) -> Result<()> {
    match power_gains.iter().position(|g| !(*g > T::zero())) {
        Some(device) => Err(AirCompError::DegenerateChannel { device }),
        None => Ok(()),
    }
}

/// `√p · conj(h) / |h|`: phase-compensating coefficient at transmit power `p`.
fn precoder<T: Real>(h: Complex<T>, power: T) -> Complex<T> {
    h.conj() * (power.sqrt() / h.norm())
}

/// Every device inverts its channel; η is set by the weakest device, which
/// transmits at exactly the power budget.
pub fn uniform_inversion_policy<T: Real>(
    channel: &ChannelRealization<T>,
    power_budget: T,
) -> Result<PowerAllocation<T>> {
    check_budget(power_budget)?;
    let gains = channel.power_gains();
    check_nonzero(&gains)?;
    let g_min = gains.iter().copied().fold(T::infinity(), T::min);
    let eta = power_budget * g_min;
    let sqrt_eta = eta.sqrt();
    let tx_scalars = channel
        .gains()
        .iter()
        .zip(&gains)
        .map(|(h, &g)| h.conj() * (sqrt_eta / g))
        .collect();
    Ok(PowerAllocation {
        tx_scalars,
        alignment_factor: eta,
        power_budget,
        modes: vec![DeviceMode::Inversion; gains.len()],
        policy: PolicyKind::UniformInversion,
        averaging: AveragingMode::default(),
    })
}

/// Devices with `|h_k|^2 < threshold` stay silent; the rest invert with η set
/// by the weakest surviving device.
pub fn truncated_inversion_policy<T: Real>(
    channel: &ChannelRealization<T>,
    power_budget: T,
    truncation_threshold: T,
) -> Result<PowerAllocation<T>> {
    check_budget(power_budget)?;
    if !(truncation_threshold >= T::zero()) || !truncation_threshold.is_finite() {
        return Err(invalid(format!(
            "truncation threshold must be finite and >= 0, got {truncation_threshold}"
        )));
    }
    let gains = channel.power_gains();
    let included: Vec<bool> = gains.iter().map(|&g| g >= truncation_threshold).collect();
    let survivors: Vec<T> = gains
        .iter()
        .zip(&included)
        .filter(|(_, inc)| **inc)
        .map(|(g, _)| *g)
        .collect();
    if survivors.is_empty() {
        return Err(AirCompError::EmptyAggregation);
    }
    if let Some(pos) = gains
        .iter()
        .zip(&included)
        .position(|(g, inc)| *inc && !(*g > T::zero()))
    {
        return Err(AirCompError::DegenerateChannel { device: pos });
    }
    let g_min = survivors.iter().copied().fold(T::infinity(), T::min);
    let eta = power_budget * g_min;
    let sqrt_eta = eta.sqrt();
    let (tx_scalars, modes) = channel
        .gains()
        .iter()
        .zip(gains.iter().zip(&included))
        .map(|(h, (&g, &inc))| {
            if inc {
                (h.conj() * (sqrt_eta / g), DeviceMode::Inversion)
            } else {
                (Complex::new(T::zero(), T::zero()), DeviceMode::Excluded)
            }
        })
        .unzip();
    Ok(PowerAllocation {
        tx_scalars,
        alignment_factor: eta,
        power_budget,
        modes,
        policy: PolicyKind::TruncatedInversion,
        averaging: AveragingMode::default(),
    })
}

/// Binary allocation for a given η: `p_k = min(P, η/|h_k|^2)`. Devices with
/// `|h_k|^2 < η/P` transmit at full power, all others invert exactly.
pub fn binary_allocation<T: Real>(
    channel: &ChannelRealization<T>,
    power_budget: T,
    alignment_factor: T,
) -> Result<PowerAllocation<T>> {
    check_budget(power_budget)?;
    if !(alignment_factor > T::zero()) || !alignment_factor.is_finite() {
        return Err(invalid(format!(
            "alignment factor must be positive, got {alignment_factor}"
        )));
    }
    let gains = channel.power_gains();
    check_nonzero(&gains)?;
    let threshold = alignment_factor / power_budget;
    let (tx_scalars, modes) = channel
        .gains()
        .iter()
        .zip(&gains)
        .map(|(h, &g)| {
            if g < threshold {
                (precoder(*h, power_budget), DeviceMode::FullPower)
            } else {
                let p = (alignment_factor / g).min(power_budget);
                (precoder(*h, p), DeviceMode::Inversion)
            }
        })
        .unzip();
    Ok(PowerAllocation {
        tx_scalars,
        alignment_factor,
        power_budget,
        modes,
        policy: PolicyKind::FixedAlignment,
        averaging: AveragingMode::default(),
    })
}

/// Binary policy with η chosen to minimize the closed-form MSE.
///
/// In `u = 1/√η` the objective between two consecutive breakpoints `P|h_k|^2`
/// is a convex quadratic, so it is unimodal on every segment. Each segment is
/// searched with golden-section in `ln η` to `1e-10` relative width and the
/// best of all segment minima and breakpoints is kept. η never exceeds
/// `P·max|h_k|^2`, so the strongest device always inverts.
pub fn threshold_optimal_policy<T: Real>(
    channel: &ChannelRealization<T>,
    power_budget: T,
) -> Result<PowerAllocation<T>> {
    check_budget(power_budget)?;
    let gains = channel.power_gains();
    check_nonzero(&gains)?;
    let eta = optimal_alignment_factor(&gains, power_budget, channel.noise_variance());
    let mut alloc = binary_allocation(channel, power_budget, eta)?;
    alloc.policy = PolicyKind::ThresholdOptimal;
    Ok(alloc)
}

/// `Σ (min(1, √(P g_k / η)) - 1)^2 + σ^2/η`, i.e. `K^2 · MSE` of the binary policy.
fn binary_objective<T: Real>(gains: &[T], power_budget: T, noise_variance: T, eta: T) -> T {
    let misalignment: T = gains
        .iter()
        .map(|&g| {
            let a = (power_budget * g / eta).sqrt().min(T::one());
            (a - T::one()) * (a - T::one())
        })
        .sum();
    misalignment + noise_variance / eta
}

/// Search interval for η: `[1e-6·P·min g, P·max g]`.
pub fn alignment_search_interval<T: Real>(gains: &[T], power_budget: T) -> (T, T) {
    let g_min = gains.iter().copied().fold(T::infinity(), T::min);
    let g_max = gains.iter().copied().fold(T::zero(), T::max);
    (T::lit(1e-6) * power_budget * g_min, power_budget * g_max)
}

fn golden_section<T: Real>(f: impl Fn(T) -> T, lo: T, hi: T, rel_tol: T) -> (T, T) {
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c.exp()), f(d.exp()));
    while b - a > rel_tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d.exp());
        }
    }
    if fc <= fd {
        (c.exp(), fc)
    } else {
        (d.exp(), fd)
    }
}

fn optimal_alignment_factor<T: Real>(gains: &[T], power_budget: T, noise_variance: T) -> T {
    let objective = |eta: T| binary_objective(gains, power_budget, noise_variance, eta);
    let (lo, hi) = alignment_search_interval(gains, power_budget);
    let rel_tol = T::lit(1e-10).max(T::epsilon() * T::lit(8.0));

    let mut knots: Vec<T> = gains
        .iter()
        .map(|&g| power_budget * g)
        .filter(|&x| x > lo && x < hi)
        .collect();
    knots.push(lo);
    knots.push(hi);
    knots.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    knots.dedup();

    // Ties go to the larger η.
    let mut best = (lo, objective(lo));
    let mut consider = |eta: T, value: T| {
        if value <= best.1 {
            best = (eta, value);
        }
    };
    for pair in knots.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        consider(a, objective(a));
        if b > a {
            let (eta, value) = golden_section(objective, a, b, rel_tol);
            consider(eta, value);
        }
        consider(b, objective(b));
    }
    best.0
}

/// Closed-form computation error of the average for unit-variance
/// independent sources (see the module docs).
pub fn analytic_mse<T: Real>(channel: &ChannelRealization<T>, alloc: &PowerAllocation<T>) -> Result<T> {
    check_same_k(channel, alloc)?;
    let sqrt_eta = alloc.alignment_factor.sqrt();
    let misalignment: T = channel
        .gains()
        .iter()
        .zip(&alloc.tx_scalars)
        .map(|(h, b)| {
            let a = (h * b).norm() / sqrt_eta;
            (a - T::one()) * (a - T::one())
        })
        .sum();
    let k = T::from_usize(channel.num_devices()).expect("K fits scalar");
    Ok((misalignment + channel.noise_variance() / alloc.alignment_factor) / (k * k))
}

/// Dispatches on `policy`; `truncation_threshold` only matters for truncated
/// inversion.
pub fn apply_policy<T: Real>(
    policy: PolicyKind,
    channel: &ChannelRealization<T>,
    power_budget: T,
    truncation_threshold: T,
) -> Result<PowerAllocation<T>> {
    match policy {
        PolicyKind::UniformInversion => uniform_inversion_policy(channel, power_budget),
        PolicyKind::TruncatedInversion => {
            truncated_inversion_policy(channel, power_budget, truncation_threshold)
        }
        PolicyKind::ThresholdOptimal => threshold_optimal_policy(channel, power_budget),
        PolicyKind::FixedAlignment => Err(invalid(
            "fixed_alignment needs an explicit alignment factor; use binary_allocation",
        )),
    }
}
