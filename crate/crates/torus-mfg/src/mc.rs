//! Feynman–Kac Monte Carlo for the backward recursion.
//!
//! The Hopf–Cole transform `f ↦ e^{-f}` turns the backward cost recursion
//! into a discrete heat flow with a multiplicative potential weight, so
//! `e^{-f_{j/n}}(x)` has a path-integral representation: draw the endpoint
//! displacement `y ~ N(0, (|j|/n)·Id)`, draw a Brownian bridge `w̃` pinned to
//! zero at both `j/n` and `0`, and average
//!
//! ```text
//! e^{-f_0(x - y)} · exp{ (1/n) Σ_r P_{(r+1)/n}( x - a_y(r/n) - w̃(r/n) ) }
//! ```
//!
//! where `a_y` is the straight path from `0` at time `j/n` to `y` at time
//! `0`. The estimator is an independent cross-check of the grid recursion:
//! it never touches the wrapped-Gaussian convolutions.
//!
//! Randomness is a counter-based `splitmix64` stream keyed by
//! `(seed, node, path)`, so estimates are bit-reproducible and independent of
//! any parallel schedule; reductions use compensated summation.

use rayon::prelude::*;

use crate::grid::{wrap01, GridField};
use crate::{Error, Result, Scalar};

/// `splitmix64`: the 64-bit counter-based generator used everywhere
/// randomness is needed. Named in reports so runs can be reproduced.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

pub const RNG_ALGORITHM: &str = "splitmix64";

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    /// An independent stream keyed by `(seed, tags...)`.
    pub fn stream(seed: u64, tags: &[u64]) -> Self {
        let mut state = SplitMix64::new(seed).next_u64();
        for &t in tags {
            state = SplitMix64::new(state ^ t.wrapping_mul(0x9E37_79B9_7F4A_7C15)).next_u64();
        }
        SplitMix64 { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `(0, 1)`: 53 random bits, never exactly zero.
    pub fn uniform(&mut self) -> f64 {
        (((self.next_u64() >> 11) as f64) + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal via Box–Muller.
    pub fn normal(&mut self) -> f64 {
        let u = self.uniform();
        let v = self.uniform();
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }
}

/// Compensated (Kahan) accumulator; makes reductions schedule-stable.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan<S> {
    sum: S,
    carry: S,
}

impl<S: Scalar> Kahan<S> {
    pub fn add(&mut self, x: S) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn total(&self) -> S {
        self.sum
    }
}

/// A Brownian bridge sampled at the step times of the horizon `[j/n, 0]`,
/// pinned to zero at both ends. `values[k]` is `w̃((j+k)/n)`; the final pin
/// at time zero is implicit.
#[derive(Debug, Clone)]
pub struct BridgePath<S> {
    times: Vec<S>,
    values: Vec<[S; 2]>,
}

impl<S: Scalar> BridgePath<S> {
    pub fn times(&self) -> &[S] {
        &self.times
    }

    pub fn values(&self) -> &[[S; 2]] {
        &self.values
    }
}

/// Sample the bridge by sequential conditioning: given `w̃(t_k)`, the next
/// value is Gaussian with mean `w̃(t_k)·(0 - t_{k+1})/(0 - t_k)` and variance
/// `(t_{k+1} - t_k)(0 - t_{k+1})/(0 - t_k)`. Deterministic given the seed.
pub fn sample_bridge<S: Scalar>(p: usize, j: i64, n: usize, seed: u64) -> Result<BridgePath<S>> {
    if j > -1 {
        return Err(Error::Config(format!("bridge start index j = {j}, need j <= -1")));
    }
    if !(1..=2).contains(&p) {
        return Err(Error::Config(format!("bridge dimension {p}")));
    }
    let mut rng = SplitMix64::stream(seed, &[j as u64, n as u64]);
    let s = (-j) as usize;
    let nf = S::of_usize(n);
    let times: Vec<S> = (0..s).map(|k| (S::of(j as f64) + S::of_usize(k)) / nf).collect();
    let mut values = vec![[S::zero(); 2]; s];
    sample_bridge_into(p, &times, &mut values, &mut rng);
    Ok(BridgePath { times, values })
}

/// Fill `values` with one bridge draw; `values[0]` is exactly zero.
fn sample_bridge_into<S: Scalar>(
    p: usize,
    times: &[S],
    values: &mut [[S; 2]],
    rng: &mut SplitMix64,
) {
    values[0] = [S::zero(); 2];
    for k in 0..times.len() - 1 {
        let t0 = times[k];
        let t1 = times[k + 1];
        let pull = -t1 / -t0; // (0 - t1) / (0 - t0)
        let var = (t1 - t0) * (-t1) / (-t0);
        let sd = var.sqrt();
        let mut next = [S::zero(); 2];
        for (axis, slot) in next.iter_mut().enumerate().take(p) {
            *slot = values[k][axis] * pull + sd * S::of(rng.normal());
        }
        values[k + 1] = next;
    }
}

/// Feynman–Kac estimate of `e^{-f_{j/n}(x)}` at grid node `x`.
///
/// `potentials[k]` must be the field `P` used by the recursion for the step
/// arriving at time `(j+k+1)/n`, i.e. the same slice the scheme consumed.
/// Returns the Monte Carlo mean and its standard error over `paths` draws.
pub fn feynman_kac<S: Scalar>(
    x: usize,
    j: i64,
    n: usize,
    f0: &GridField<S>,
    potentials: &[GridField<S>],
    paths: usize,
    seed: u64,
) -> Result<(S, S)> {
    if j > -1 {
        return Err(Error::Config(format!("horizon index j = {j}, need j <= -1")));
    }
    let s = (-j) as usize;
    if potentials.len() != s {
        return Err(Error::Config(format!(
            "need {s} per-step potentials, got {}",
            potentials.len()
        )));
    }
    for p in potentials {
        if p.grid() != f0.grid() {
            return Err(Error::GridMismatch("feynman_kac potentials".into()));
        }
    }
    if paths == 0 {
        return Err(Error::Config("need at least one path".into()));
    }
    let grid = f0.grid();
    let p = grid.dim();
    let x_pt = grid.node::<S>(x);
    let nf = S::of_usize(n);
    let endpoint_sd = (S::of_usize(s) / nf).sqrt();
    let inv_n = S::one() / nf;
    let times: Vec<S> = (0..s).map(|k| (S::of(j as f64) + S::of_usize(k)) / nf).collect();

    let mut acc = Kahan::<S>::default();
    let mut acc_sq = Kahan::<S>::default();
    let mut bridge = vec![[S::zero(); 2]; s];
    for path in 0..paths {
        let mut rng = SplitMix64::stream(seed, &[x as u64, path as u64]);
        // endpoint displacement y ~ N(0, (|j|/n) Id), kept unwrapped: the
        // straight path depends on the real displacement
        let mut y = [S::zero(); 2];
        for slot in y.iter_mut().take(p) {
            *slot = endpoint_sd * S::of(rng.normal());
        }
        sample_bridge_into(p, &times, &mut bridge, &mut rng);
        // weight exponent (1/n) Σ_k P_{t_{k+1}}(x - a_y(t_k) - w̃(t_k))
        let mut expo = S::zero();
        for (k, pot) in potentials.iter().enumerate() {
            let frac = S::of_usize(k) / S::of_usize(s); // a_y(t_k) = (k/s)·y
            let mut pos = [S::zero(); 2];
            for axis in 0..p {
                pos[axis] = wrap01(x_pt[axis] - frac * y[axis] - bridge[k][axis]);
            }
            expo += pot.sample(pos);
        }
        let mut z = [S::zero(); 2];
        for axis in 0..p {
            z[axis] = wrap01(x_pt[axis] - y[axis]);
        }
        let val = (expo * inv_n - f0.sample(z)).exp();
        acc.add(val);
        acc_sq.add(val * val);
    }
    let count = S::of_usize(paths);
    let mean = acc.total() / count;
    let var = if paths > 1 {
        ((acc_sq.total() - count * mean * mean) / (count - S::one())).max(S::zero())
    } else {
        S::zero()
    };
    Ok((mean, (var / count).sqrt()))
}

/// [`feynman_kac`] at every grid node, parallel over nodes. The per-node
/// streams make the result independent of the thread schedule.
pub fn feynman_kac_field<S: Scalar>(
    j: i64,
    n: usize,
    f0: &GridField<S>,
    potentials: &[GridField<S>],
    paths: usize,
    seed: u64,
) -> Result<Vec<(S, S)>> {
    (0..f0.grid().len())
        .into_par_iter()
        .map(|x| feynman_kac(x, j, n, f0, potentials, paths, seed))
        .collect()
}
