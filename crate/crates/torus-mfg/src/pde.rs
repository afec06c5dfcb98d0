//! Explicit finite-difference reference solvers for the limiting equations,
//! independent of the scheme's convolution machinery.
//!
//! Backward viscous Hamilton–Jacobi (time runs from `0` down to `T < 0`):
//!
//! ```text
//! ∂_t u = -ν Δu + ½|∂_x u|² + P(t,x),    u(0,·) = f0,
//! ```
//!
//! with centered second and first differences (the viscous regime keeps
//! centered advection stable under the CFL bound `dt ≤ dx²/(4ν)`).
//!
//! Forward Fokker–Planck in conservative flux form (time runs from `T` up
//! to `0`):
//!
//! ```text
//! ∂_t ρ = ν Δρ - ∂_x(ρ Y),    ρ(T,·) = μ,
//! ```
//!
//! with face fluxes `F_{i+1/2} = Y_{i+1/2}(ρ_i + ρ_{i+1})/2 - ν(ρ_{i+1} -
//! ρ_i)/dx`, so the discrete mass telescopes exactly; dust below `-1e-12`
//! aborts, milder dust is clipped and the mass renormalized.
//!
//! The viscosity `ν` is an explicit parameter everywhere. The scheme's
//! kernel carries variance `1/n` per step of length `1/n`, whose continuum
//! generator is `½Δ`, so comparisons against the scheme use `ν = ½`; the
//! unit coefficient is available for side-by-side runs.
//!
//! Both solvers are one-dimensional (`p = 1`).

use crate::grid::{GridField, TorusGrid};
use crate::measures::Density;
use crate::{Error, Result, Scalar};

/// Time-stamped fields on the way from one end of the horizon to the other.
#[derive(Debug, Clone)]
pub struct TimeSeries<S> {
    pub times: Vec<S>,
    pub fields: Vec<GridField<S>>,
}

impl<S: Scalar> TimeSeries<S> {
    /// The stored field nearest the requested time.
    pub fn at(&self, t: S) -> &GridField<S> {
        let mut best = 0;
        let mut gap = S::infinity();
        for (i, &ti) in self.times.iter().enumerate() {
            let d = (ti - t).abs();
            if d < gap {
                gap = d;
                best = i;
            }
        }
        &self.fields[best]
    }

    /// Linear interpolation in time (clamped at the ends).
    pub fn interpolate(&self, t: S) -> GridField<S> {
        if t <= self.times[0] {
            return self.fields[0].clone();
        }
        let last = self.times.len() - 1;
        if t >= self.times[last] {
            return self.fields[last].clone();
        }
        let mut k = 0;
        while self.times[k + 1] < t {
            k += 1;
        }
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        self.fields[k]
            .scale(S::one() - w)
            .add(&self.fields[k + 1].scale(w))
            .expect("shared grid")
    }
}

fn check_setup<S: Scalar>(grid: TorusGrid, nu: S, t_start: S, dt: S) -> Result<()> {
    if grid.dim() != 1 {
        return Err(Error::Unsupported("reference solvers are one-dimensional".into()));
    }
    if !(nu > S::zero()) {
        return Err(Error::Config("viscosity must be positive".into()));
    }
    if !(t_start < S::zero()) {
        return Err(Error::Config("start time must be negative".into()));
    }
    let dx = grid.dx::<S>();
    if !(dt > S::zero()) || dt > dx * dx / (S::of(4.0) * nu) {
        return Err(Error::Config(format!(
            "dt = {dt} violates the stability bound dx²/(4ν) = {}",
            dx * dx / (S::of(4.0) * nu)
        )));
    }
    Ok(())
}

fn record_steps<S: Scalar>(record_times: &[S], t_start: S, dt: S) -> Result<Vec<usize>> {
    let mut steps = Vec::with_capacity(record_times.len());
    for &rt in record_times {
        if rt > S::zero() || rt < t_start - S::tol(1e-9) {
            return Err(Error::Config(format!("record time {rt} outside [{t_start}, 0]")));
        }
        steps.push((rt.abs() / dt).round().as_f64() as usize);
    }
    Ok(steps)
}

/// Integrate the backward viscous Hamilton–Jacobi equation from `u(0) = f0`
/// down to `t_start`, recording the solution at the requested times
/// (snapped to the step grid).
pub fn solve_hj<S: Scalar>(
    f0: &GridField<S>,
    potential: &impl Fn(S) -> GridField<S>,
    nu: S,
    t_start: S,
    dt: S,
    record_times: &[S],
) -> Result<TimeSeries<S>> {
    let grid = f0.grid();
    check_setup(grid, nu, t_start, dt)?;
    let wanted = record_steps(record_times, t_start, dt)?;
    let total_steps = *wanted.iter().max().unwrap_or(&0);
    let n = grid.nodes_per_axis();
    let dx = grid.dx::<S>();
    let inv2dx = S::of(0.5) / dx;
    let invdx2 = S::one() / (dx * dx);

    let mut u = f0.values().to_vec();
    let mut out = TimeSeries { times: Vec::new(), fields: Vec::new() };
    let capture = |series: &mut TimeSeries<S>, step: usize, u: &[S]| -> Result<()> {
        for (slot, &w) in wanted.iter().enumerate() {
            if w == step {
                series.times.push(record_times[slot]);
                series.fields.push(GridField::new(grid, u.to_vec())?);
            }
        }
        Ok(())
    };
    capture(&mut out, 0, &u)?;
    let mut next = vec![S::zero(); n];
    for step in 0..total_steps {
        let t = -dt * S::of_usize(step);
        let pot = potential(t);
        if pot.grid() != grid {
            return Err(Error::GridMismatch("potential provider".into()));
        }
        for i in 0..n {
            let up = u[(i + 1) % n];
            let dn = u[(i + n - 1) % n];
            let lap = (up - S::of(2.0) * u[i] + dn) * invdx2;
            let grad = (up - dn) * inv2dx;
            // u(t - dt) = u(t) - dt·(-νΔu + ½|∂u|² + P)
            next[i] = u[i]
                - dt * (-nu * lap + S::of(0.5) * grad * grad + pot.values()[i]);
        }
        std::mem::swap(&mut u, &mut next);
        let sup = u.iter().fold(S::zero(), |m, v| m.max(v.abs()));
        if !sup.is_finite() || sup > S::of(1e6) {
            return Err(Error::Numerical(format!(
                "Hamilton–Jacobi reference blew up at step {step} (sup {sup})"
            )));
        }
        capture(&mut out, step + 1, &u)?;
    }
    // order the records by requested order
    let mut ordered = TimeSeries { times: Vec::new(), fields: Vec::new() };
    for &rt in record_times {
        let idx = out
            .times
            .iter()
            .position(|&t| t == rt)
            .expect("every record time was captured");
        ordered.times.push(rt);
        ordered.fields.push(out.fields[idx].clone());
    }
    Ok(ordered)
}

/// Integrate the conservative Fokker–Planck equation forward from
/// `ρ(t_start) = μ` to time 0, recording at the requested times.
pub fn solve_fp<S: Scalar>(
    mu: &Density<S>,
    drift: &impl Fn(S) -> GridField<S>,
    nu: S,
    t_start: S,
    dt: S,
    record_times: &[S],
) -> Result<TimeSeries<S>> {
    let grid = mu.grid();
    check_setup(grid, nu, t_start, dt)?;
    // map record times onto forward step counts from t_start
    let mut wanted = Vec::with_capacity(record_times.len());
    let total_steps = (t_start.abs() / dt).round().as_f64() as usize;
    for &rt in record_times {
        if rt > S::zero() || rt < t_start - S::tol(1e-9) {
            return Err(Error::Config(format!("record time {rt} outside [{t_start}, 0]")));
        }
        wanted.push(((rt - t_start) / dt).round().as_f64() as usize);
    }
    let n = grid.nodes_per_axis();
    let dx = grid.dx::<S>();
    let invdx = S::one() / dx;

    let mut rho = mu.values().to_vec();
    let mut out = TimeSeries { times: Vec::new(), fields: Vec::new() };
    let capture = |series: &mut TimeSeries<S>, step: usize, rho: &[S]| -> Result<()> {
        for (slot, &w) in wanted.iter().enumerate() {
            if w == step {
                series.times.push(record_times[slot]);
                series.fields.push(GridField::new(grid, rho.to_vec())?);
            }
        }
        Ok(())
    };
    capture(&mut out, 0, &rho)?;
    let mut flux = vec![S::zero(); n];
    let last_record = *wanted.iter().max().unwrap_or(&0);
    for step in 0..total_steps.min(last_record) {
        let t = t_start + dt * S::of_usize(step);
        let y = drift(t);
        if y.grid() != grid {
            return Err(Error::GridMismatch("drift provider".into()));
        }
        for (i, f) in flux.iter_mut().enumerate() {
            let j = (i + 1) % n;
            let y_face = (y.values()[i] + y.values()[j]) * S::of(0.5);
            *f = y_face * (rho[i] + rho[j]) * S::of(0.5) - nu * (rho[j] - rho[i]) * invdx;
        }
        let mut mass = S::zero();
        for i in 0..n {
            let prev = (i + n - 1) % n;
            rho[i] -= dt * invdx * (flux[i] - flux[prev]);
            mass += rho[i];
        }
        // clip rounding dust, abort on real negativity
        let dust = -S::tol(1e-12);
        for r in rho.iter_mut() {
            if *r < dust {
                return Err(Error::Numerical(format!(
                    "Fokker–Planck reference went negative ({}) at step {step}",
                    *r
                )));
            }
            if *r < S::zero() {
                *r = S::zero();
            }
        }
        let mass = mass * grid.cell_volume::<S>();
        if (mass - S::one()).abs() > S::tol(1e-8) {
            return Err(Error::Numerical(format!("mass drift {} at step {step}", mass - S::one())));
        }
        let scale = S::one() / mass;
        for r in rho.iter_mut() {
            *r *= scale;
        }
        capture(&mut out, step + 1, &rho)?;
    }
    let mut ordered = TimeSeries { times: Vec::new(), fields: Vec::new() };
    for &rt in record_times {
        let idx = out
            .times
            .iter()
            .position(|&t| t == rt)
            .expect("every record time was captured");
        ordered.times.push(rt);
        ordered.fields.push(out.fields[idx].clone());
    }
    Ok(ordered)
}
