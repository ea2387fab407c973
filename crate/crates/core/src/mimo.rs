//! Aggregation beamforming at an `N`-antenna server.
//!
//! The server combines its antennas with a unit-norm receive beamformer `f`,
//! turning device `k`'s channel vector `h_k` into the scalar effective gain
//! `g_k = fᴴ h_k`. Devices then zero-force that scalar (channel inversion),
//! so every device is aligned and the weakest effective gain sets
//! `η = P · min_k |fᴴ h_k|^2`. The computation error reduces to the noise
//! term
//!
//! ```text
//! MSE(f) = σ^2 / (K^2 · P · min_k |fᴴ h_k|^2)
//! ```
//!
//! which is strictly decreasing in `min_k |fᴴ h_k|^2`. Designing `f` is therefore
//! the max-min problem `max_{‖f‖=1} min_k |fᴴ h_k|^2`. Two constructions are
//! provided: a closed-form weighted-subspace heuristic and a multi-start local
//! ascent on the unit sphere used as the reference optimizer.

use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;

use crate::aircomp::{analytic_mse, uniform_inversion_policy};
use crate::channel::{ChannelRealization, MimoChannelRealization};
use crate::error::invalid;
use crate::rng::{complex_gaussian, derive_seed, seeded, SimRng};
use crate::{AirCompError, Real, Result};

type CVec<T> = Vec<Complex<T>>;

/// `aᴴ b`.
fn inner<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter()
        .zip(b)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}

fn norm<T: Real>(a: &[Complex<T>]) -> T {
    a.iter().map(|x| x.norm_sqr()).sum::<T>().sqrt()
}

/// `Re(aᴴ b)`: the real inner product of the underlying `R^{2N}` vectors.
fn real_inner<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> T {
    inner(a, b).re
}

fn normalized<T: Real>(a: &[Complex<T>]) -> Option<CVec<T>> {
    let n = norm(a);
    (n > T::zero() && n.is_finite()).then(|| a.iter().map(|x| x / n).collect())
}

fn axpy<T: Real>(x: &[Complex<T>], t: T, d: &[Complex<T>]) -> CVec<T> {
    x.iter().zip(d).map(|(a, b)| a + b * t).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BeamformerConstruction {
    SubspaceHeuristic,
    LocalSearch,
    Fixed,
}

/// Unit-norm receive beamformer.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationBeamformer<T> {
    vector: CVec<T>,
    construction: BeamformerConstruction,
}

impl<T: Real> AggregationBeamformer<T> {
    /// Normalizes `vector` and tags it as a fixed beamformer.
    pub fn new(vector: CVec<T>) -> Result<Self> {
        Self::built(vector, BeamformerConstruction::Fixed)
    }

    fn built(vector: CVec<T>, construction: BeamformerConstruction) -> Result<Self> {
        let vector =
            normalized(&vector).ok_or_else(|| invalid("beamformer must be a non-zero vector"))?;
        Ok(Self {
            vector,
            construction,
        })
    }

    pub fn vector(&self) -> &[Complex<T>] {
        &self.vector
    }

    pub fn construction(&self) -> BeamformerConstruction {
        self.construction
    }

    pub fn dimension(&self) -> usize {
        self.vector.len()
    }

    /// Same beamformer rotated by a common phase.
    pub fn rotated(&self, phase: T) -> Self {
        let r = Complex::from_polar(T::one(), phase);
        Self {
            vector: self.vector.iter().map(|x| x * r).collect(),
            construction: self.construction,
        }
    }

    /// `min_k |fᴴ h_k|^2`.
    pub fn objective(&self, channel: &MimoChannelRealization<T>) -> Result<T> {
        check_dims(channel, self)?;
        Ok(min_gain(channel.vectors(), &self.vector))
    }
}

fn check_dims<T: Real>(channel: &MimoChannelRealization<T>, f: &AggregationBeamformer<T>) -> Result<()> {
    if channel.num_antennas() != f.dimension() {
        return Err(invalid(format!(
            "beamformer has {} entries, server has {} antennas",
            f.dimension(),
            channel.num_antennas()
        )));
    }
    Ok(())
}

fn min_gain<T: Real>(vectors: &[CVec<T>], f: &[Complex<T>]) -> T {
    vectors
        .iter()
        .map(|h| inner(f, h).norm_sqr())
        .fold(T::infinity(), T::min)
}

/// Scalar effective channel `g_k = fᴴ h_k`. Noise power is unchanged by a
/// unit-norm combiner.
pub fn effective_gains<T: Real>(
    channel: &MimoChannelRealization<T>,
    f: &AggregationBeamformer<T>,
) -> Result<ChannelRealization<T>> {
    check_dims(channel, f)?;
    let gains = channel.vectors().iter().map(|h| inner(&f.vector, h)).collect();
    ChannelRealization::new(gains, channel.noise_variance())
}

/// Principal eigenvector of `Σ_k w_k h_k h_kᴴ / ‖h_k‖^2` with `w_k = 1/‖h_k‖^2`,
/// so weak channels pull the beamformer toward their subspace.
///
/// Power iteration starts from the phase-aligned sum of the unit channel
/// directions; when the top eigenvalue is degenerate the result stays in the
/// span of that start.
pub fn subspace_heuristic_beamformer<T: Real>(
    channel: &MimoChannelRealization<T>,
) -> Result<AggregationBeamformer<T>> {
    let n = channel.num_antennas();
    let mut directions = Vec::with_capacity(channel.num_devices());
    let mut weights = Vec::with_capacity(channel.num_devices());
    for (k, h) in channel.vectors().iter().enumerate() {
        let power = h.iter().map(|x| x.norm_sqr()).sum::<T>();
        if !(power > T::zero()) {
            return Err(AirCompError::DegenerateChannel { device: k });
        }
        directions.push(normalized(h).expect("non-zero channel"));
        weights.push(power.recip());
    }

    let mut matrix = vec![Complex::new(T::zero(), T::zero()); n * n];
    for (u, &w) in directions.iter().zip(&weights) {
        for i in 0..n {
            for j in 0..n {
                matrix[i * n + j] = matrix[i * n + j] + u[i] * u[j].conj() * w;
            }
        }
    }
    let apply = |v: &[Complex<T>]| -> CVec<T> {
        (0..n)
            .map(|i| {
                (0..n).fold(Complex::new(T::zero(), T::zero()), |acc, j| {
                    acc + matrix[i * n + j] * v[j]
                })
            })
            .collect()
    };

    let reference = &directions[0];
    let mut start = vec![Complex::new(T::zero(), T::zero()); n];
    for (u, &w) in directions.iter().zip(&weights) {
        let overlap = inner(reference, u);
        let align = if overlap.norm() > T::zero() {
            overlap.conj() / overlap.norm()
        } else {
            Complex::new(T::one(), T::zero())
        };
        start = axpy(&start, w, &u.iter().map(|x| x * align).collect::<Vec<_>>());
    }
    let mut v = normalized(&start).unwrap_or_else(|| reference.clone());

    let tol = T::epsilon() * T::lit(64.0);
    for _ in 0..20_000 {
        let Some(next) = normalized(&apply(&v)) else {
            break;
        };
        let change = norm(&axpy(&next, -T::one(), &v));
        v = next;
        if change <= tol {
            break;
        }
    }
    AggregationBeamformer::built(v, BeamformerConstruction::SubspaceHeuristic)
}

/// Minimum-norm point of the convex hull of `points` (Frank-Wolfe with exact
/// line search).
fn min_norm_in_hull<T: Real>(points: &[CVec<T>]) -> CVec<T> {
    let mut x = points
        .iter()
        .min_by(|a, b| norm(a).partial_cmp(&norm(b)).expect("finite norms"))
        .expect("non-empty")
        .clone();
    for _ in 0..200 {
        let (best, value) = points
            .iter()
            .map(|p| (p, real_inner(&x, p)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite"))
            .expect("non-empty");
        let xx = real_inner(&x, &x);
        let gap = xx - value;
        if gap <= T::epsilon() * T::lit(16.0) * xx {
            break;
        }
        let diff = axpy(best, -T::one(), &x);
        let dd = real_inner(&diff, &diff);
        if !(dd > T::zero()) {
            break;
        }
        let gamma = (gap / dd).min(T::one());
        x = axpy(&x, gamma, &diff);
    }
    x
}

/// Tangent-space gradient of `|h_kᴴ f|^2` at unit `f`.
fn tangent_gradient<T: Real>(h: &[Complex<T>], f: &[Complex<T>]) -> CVec<T> {
    let proj = inner(h, f);
    let g: CVec<T> = h.iter().map(|x| x * proj * T::lit(2.0)).collect();
    let radial = real_inner(f, &g);
    axpy(&g, -radial, f)
}

fn random_tangent<T: Real>(rng: &mut SimRng, f: &[Complex<T>]) -> CVec<T> {
    let raw: CVec<T> = f.iter().map(|_| complex_gaussian(rng, T::one())).collect();
    let radial = real_inner(f, &raw);
    let t = axpy(&raw, -radial, f);
    // Remove the common-phase direction, along which the objective is flat.
    let i_f: CVec<T> = f.iter().map(|x| x * Complex::new(T::zero(), T::one())).collect();
    let along = real_inner(&i_f, &t);
    axpy(&t, -along, &i_f)
}

const MAX_ASCENT_STEPS: usize = 1000;
const RANDOM_PROBES: usize = 8;

/// Monotone ascent of `min_k |fᴴ h_k|^2` from `start`. Returns the final point
/// and the objective after every accepted step (first entry is the start).
fn ascend<T: Real>(vectors: &[CVec<T>], start: CVec<T>, rng: &mut SimRng) -> (CVec<T>, Vec<T>) {
    let mut f = normalized(&start).unwrap_or_else(|| normalized(&vectors[0]).expect("non-zero"));
    let mut obj = min_gain(vectors, &f);
    let mut trace = vec![obj];
    let mut step = T::lit(0.25);
    let min_step = T::lit(1e-12);

    for _ in 0..MAX_ASCENT_STEPS {
        let gains: Vec<T> = vectors.iter().map(|h| inner(&f, h).norm_sqr()).collect();
        let mut accepted: Option<(CVec<T>, T, T)> = None;

        let try_direction = |dir: &[Complex<T>], from_step: T| -> Option<(CVec<T>, T, T)> {
            let unit = normalized(dir)?;
            let mut t = from_step;
            while t >= min_step {
                let cand = normalized(&axpy(&f, t, &unit))?;
                let value = min_gain(vectors, &cand);
                if value > obj {
                    return Some((cand, value, t));
                }
                t = t * T::lit(0.5);
            }
            None
        };

        for slack in [0.1, 1e-2, 1e-3, 1e-6, 0.0] {
            let cutoff = obj + T::lit(slack) * obj.max(T::epsilon());
            let active: Vec<CVec<T>> = vectors
                .iter()
                .zip(&gains)
                .filter(|(_, g)| **g <= cutoff)
                .map(|(h, _)| tangent_gradient(h, &f))
                .collect();
            let direction = min_norm_in_hull(&active);
            if norm(&direction) <= T::epsilon() {
                continue;
            }
            accepted = try_direction(&direction, step);
            if accepted.is_some() {
                break;
            }
        }
        if accepted.is_none() {
            for _ in 0..RANDOM_PROBES {
                let dir = random_tangent(rng, &f);
                accepted = try_direction(&dir, step.max(T::lit(1e-3)));
                if accepted.is_some() {
                    break;
                }
            }
        }
        let Some((next, value, t)) = accepted else {
            break;
        };
        debug_assert!(value >= obj);
        f = next;
        obj = value;
        step = (t * T::lit(2.0)).min(T::one());
        trace.push(obj);
    }
    (f, trace)
}

/// Multi-start local ascent for `max_{‖f‖=1} min_k |fᴴ h_k|^2`.
///
/// Restart 0 starts from [`subspace_heuristic_beamformer`], the others from
/// random directions; restarts run in parallel with independent generators
/// split from one draw of `rng`. The best final point wins, ties going to the
/// lower restart index. A single device gets the matched filter `h/‖h‖`.
pub fn local_search_beamformer<T: Real, R: Rng + ?Sized>(
    channel: &MimoChannelRealization<T>,
    restarts: usize,
    rng: &mut R,
) -> Result<AggregationBeamformer<T>> {
    local_search_with_trace(channel, restarts, rng).map(|(f, _)| f)
}

/// [`local_search_beamformer`] that also returns every restart's objective trace.
pub fn local_search_with_trace<T: Real, R: Rng + ?Sized>(
    channel: &MimoChannelRealization<T>,
    restarts: usize,
    rng: &mut R,
) -> Result<(AggregationBeamformer<T>, Vec<Vec<T>>)> {
    if restarts == 0 {
        return Err(invalid("local search needs at least one restart"));
    }
    let heuristic = subspace_heuristic_beamformer(channel)?;
    let base = rng.random::<u64>();
    if let [h] = channel.vectors() {
        // The matched filter is optimal; ascent would only wander at rounding level.
        let f = normalized(h).expect("checked by the heuristic");
        let trace = vec![min_gain(channel.vectors(), &f)];
        let f = AggregationBeamformer::built(f, BeamformerConstruction::LocalSearch)?;
        return Ok((f, vec![trace; restarts]));
    }
    let vectors = channel.vectors();
    let n = channel.num_antennas();

    let runs: Vec<(CVec<T>, Vec<T>)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut local = seeded(derive_seed(base, r as u64));
            let start = if r == 0 {
                heuristic.vector.clone()
            } else {
                (0..n).map(|_| complex_gaussian(&mut local, T::one())).collect()
            };
            ascend(vectors, start, &mut local)
        })
        .collect();

    let best = runs
        .iter()
        .enumerate()
        .fold(0, |best, (i, run)| {
            if last(&run.1) > last(&runs[best].1) {
                i
            } else {
                best
            }
        });
    let traces = runs.iter().map(|(_, t)| t.clone()).collect();
    let f = AggregationBeamformer::built(runs[best].0.clone(), BeamformerConstruction::LocalSearch)?;
    Ok((f, traces))
}

fn last<T: Real>(trace: &[T]) -> T {
    *trace.last().expect("trace has the start point")
}

/// Zero-forcing MSE `σ^2 / (K^2 P min_k |fᴴ h_k|^2)`, computed by composing
/// [`effective_gains`], uniform inversion and the closed-form MSE.
pub fn mimo_mse<T: Real>(
    channel: &MimoChannelRealization<T>,
    f: &AggregationBeamformer<T>,
    power_budget: T,
) -> Result<T> {
    let scalar = effective_gains(channel, f)?;
    let alloc = uniform_inversion_policy(&scalar, power_budget)?;
    analytic_mse(&scalar, &alloc)
}
