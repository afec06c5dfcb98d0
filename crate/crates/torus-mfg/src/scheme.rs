//! Multi-step machinery: backward recursion for the linearized costs,
//! forward propagation of the density trajectory, the mean-field fixed
//! point, the discrete value function, and its diagnostics.
//!
//! A horizon of `s` steps at step count `n` covers the times
//! `t_k = (k - s)/n`, `k = 0..=s`. Step `k` carries the density from `t_k`
//! to `t_{k+1}` through the Gibbs kernel built from the arrival cost
//! `f_{t_{k+1}}` and the arrival-time potential
//! `P_{t_{k+1}} = V(t_{k+1},·) + W^{μ_{t_{k+1}}}`. Costs satisfy
//!
//! ```text
//! f_{t_k} = -(1/n) P_{t_{k+1}} - log( G_{1/n} ⊛ e^{-f_{t_{k+1}}} ),
//! ```
//!
//! seeded by the terminal derivative `f_{t_s} = U'(μ_0)`.
//!
//! The coupling (the potential and the terminal derivative depend on the
//! trajectory, the trajectory depends on the costs) is closed by damped
//! Picard iteration from a frozen-transport initial guess. An uncounted
//! initialization pass first turns the guess into a propagated trajectory,
//! so a fully decoupled problem converges in exactly one counted iteration
//! with zero residual. Non-convergence is reported, never raised.
//!
//! The value is assembled per step from the relative-entropy form of the
//! running cost plus the half-weight interaction term; the per-step
//! normalization `(p/2)·log(n/2π)` is already netted out inside
//! [`step_cost_split`], which keeps the total bounded as `n → ∞`.

use crate::grid::GridField;
use crate::measures::{wasserstein1, Density};
use crate::model::{FinalCondition, InteractionWeight, PotentialSpec};
use crate::step::{build_kernel, push_forward, step_cost_split, GibbsKernel};
use crate::{Error, Result, Scalar};

/// Parameters of a multi-step solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig<S> {
    /// Steps per unit time; the kernel variance is `1/n`.
    pub n: usize,
    /// Number of steps; the start time is `-s/n`.
    pub s: usize,
    /// Horizon bound in whole time units; requires `s ≤ m·n`.
    pub m: usize,
    /// Picard relaxation weight `α ∈ (0, 1]`.
    pub damping: S,
    /// Fixed-point tolerance on `sup_t d₁`.
    pub fp_tol: S,
    /// Iteration cap; hitting it is a reported state, not an error.
    pub max_iter: usize,
}

impl<S: Scalar> SchemeConfig<S> {
    pub fn new(n: usize, s: usize, m: usize) -> Self {
        SchemeConfig { n, s, m, damping: S::of(0.5), fp_tol: S::of(1e-8), max_iter: 200 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::Config("n and m must be positive".into()));
        }
        if self.s == 0 || self.s > self.m * self.n {
            return Err(Error::Config(format!(
                "step count s = {} outside 1..={}·{}",
                self.s, self.m, self.n
            )));
        }
        if !(self.damping > S::zero() && self.damping <= S::one()) {
            return Err(Error::Config("damping must lie in (0, 1]".into()));
        }
        if !(self.fp_tol > S::zero()) || self.max_iter == 0 {
            return Err(Error::Config("need fp_tol > 0 and max_iter >= 1".into()));
        }
        Ok(())
    }

    /// The step times `(k - s)/n`, `k = 0..=s`.
    pub fn times(&self) -> Vec<S> {
        let nf = S::of_usize(self.n);
        (0..=self.s)
            .map(|k| (S::of_usize(k) - S::of_usize(self.s)) / nf)
            .collect()
    }

    /// Start time `-s/n`.
    pub fn start_time(&self) -> S {
        -S::of_usize(self.s) / S::of_usize(self.n)
    }
}

/// Value of the solved problem, split into its components. All components
/// are net of the per-step normalization, whose folded-in total is recorded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueReport<S> {
    /// `kinetic_entropy + potential + final_value`.
    pub total: S,
    /// Relative-entropy running cost, nonnegative.
    pub kinetic_entropy: S,
    /// `-(1/n) Σ_k ∫ (V + ½W^μ) dμ` over the steps.
    pub potential: S,
    /// `U(μ_0)` at the trajectory endpoint.
    pub final_value: S,
    /// `s·(p/2)·log(n/2π)`, already subtracted from the running cost.
    pub normalization: S,
}

/// A solved trajectory: densities, costs, kernels, value, and the
/// fixed-point outcome.
#[derive(Debug, Clone)]
pub struct SchemeSolution<S> {
    pub config: SchemeConfig<S>,
    /// `s + 1` step times.
    pub times: Vec<S>,
    /// Densities `μ_{t_k}`, `k = 0..=s`.
    pub densities: Vec<Density<S>>,
    /// Linearized costs `f_{t_k}`, `k = 0..=s` (`costs[s]` is `U'(μ_0)`).
    pub costs: Vec<GridField<S>>,
    /// Kernels of the `s` steps.
    pub kernels: Vec<GibbsKernel<S>>,
    pub value: ValueReport<S>,
    /// Final fixed-point residual (`sup_t d₁` between the last propagated
    /// trajectory and the trajectory its inputs came from).
    pub fp_residual: S,
    pub iterations: usize,
    pub converged: bool,
}

impl<S: Scalar> SchemeSolution<S> {
    /// Re-run the stored recursion and propagation and report the largest
    /// deviations `(recursion, propagation)` from the stored data.
    pub fn replay_residuals(&self) -> Result<(S, S)> {
        let n = self.config.n;
        let mut rec = S::zero();
        let mut prop = S::zero();
        for k in (0..self.kernels.len()).rev() {
            let kern = build_kernel(&self.costs[k + 1], self.kernels[k].potential(), n)?;
            rec = rec.max(kern.cost_prev().sup_distance(&self.costs[k])?);
        }
        for k in 0..self.kernels.len() {
            let next = push_forward(&self.densities[k], &self.kernels[k])?;
            prop = prop.max(next.field().sup_distance(self.densities[k + 1].field())?);
        }
        Ok((rec, prop))
    }
}

/// Backward recursion `f_{t_k} = -(1/n)P_{t_{k+1}} - log(G ⊛ e^{-f_{t_{k+1}}})`
/// from the terminal cost down. `potentials[k]` is the field at arrival time
/// `t_{k+1}`; the result holds the `s + 1` costs, terminal last.
pub fn backward_recursion<S: Scalar>(
    f0: &GridField<S>,
    potentials: &[GridField<S>],
    n: usize,
) -> Result<Vec<GridField<S>>> {
    Ok(backward_pass(f0, potentials, n)?.0)
}

#[allow(clippy::type_complexity)]
fn backward_pass<S: Scalar>(
    f0: &GridField<S>,
    potentials: &[GridField<S>],
    n: usize,
) -> Result<(Vec<GridField<S>>, Vec<GibbsKernel<S>>)> {
    let s = potentials.len();
    let mut costs = vec![GridField::zeros(f0.grid()); s + 1];
    let mut kernels = Vec::with_capacity(s);
    costs[s] = f0.clone();
    for k in (0..s).rev() {
        let kern = build_kernel(&costs[k + 1], &potentials[k], n).map_err(|e| {
            Error::Numerical(format!(
                "backward recursion failed at time index {}: {e}",
                k as i64 - s as i64
            ))
        })?;
        costs[k] = kern.cost_prev().clone();
        kernels.push(kern);
    }
    kernels.reverse();
    Ok((costs, kernels))
}

/// Forward propagation of `mu_start` through the kernels determined by
/// `costs` and `potentials`; returns the `s + 1` densities.
pub fn forward_propagate<S: Scalar>(
    mu_start: &Density<S>,
    costs: &[GridField<S>],
    potentials: &[GridField<S>],
    n: usize,
) -> Result<Vec<Density<S>>> {
    if costs.len() != potentials.len() + 1 {
        return Err(Error::Config("need one more cost than potentials".into()));
    }
    let mut densities = Vec::with_capacity(costs.len());
    densities.push(mu_start.clone());
    for k in 0..potentials.len() {
        let kern = build_kernel(&costs[k + 1], &potentials[k], n)?;
        let next = push_forward(densities.last().expect("nonempty"), &kern)?;
        densities.push(next);
    }
    Ok(densities)
}

/// `sup_t` distance between two trajectories: exact `d₁` for `p = 1`, the
/// teleport bound `½‖·‖_{L1}` for `p = 2` (an upper bound on `d₁`, so
/// stopping on it is conservative).
pub fn trajectory_distance<S: Scalar>(a: &[Density<S>], b: &[Density<S>]) -> Result<S> {
    if a.len() != b.len() {
        return Err(Error::Config("trajectory lengths differ".into()));
    }
    let mut worst = S::zero();
    for (x, y) in a.iter().zip(b) {
        let d = if x.grid().dim() == 1 {
            wasserstein1(x, y)?
        } else {
            x.l1_distance(y)? * S::of(0.5)
        };
        worst = worst.max(d);
    }
    Ok(worst)
}

struct SweepInputs<S> {
    potentials: Vec<GridField<S>>,
    f0: GridField<S>,
}

fn sweep_inputs<S: Scalar>(
    trajectory: &[Density<S>],
    times: &[S],
    u: &FinalCondition<S>,
    spec: &PotentialSpec<S>,
) -> Result<SweepInputs<S>> {
    let s = trajectory.len() - 1;
    let potentials = (0..s)
        .map(|k| spec.total_potential(times[k + 1], &trajectory[k + 1], InteractionWeight::Full))
        .collect();
    let f0 = u.derivative(&trajectory[s])?;
    Ok(SweepInputs { potentials, f0 })
}

/// Solve the mean-field fixed point by damped Picard iteration from the
/// frozen-transport guess. See the module docs for the iteration layout;
/// non-convergence is reported in the solution, not raised.
pub fn solve_fixed_point<S: Scalar>(
    mu: &Density<S>,
    u: &FinalCondition<S>,
    spec: &PotentialSpec<S>,
    cfg: &SchemeConfig<S>,
) -> Result<SchemeSolution<S>> {
    solve_fixed_point_seeded(mu, u, spec, cfg, None)
}

/// [`solve_fixed_point`] with an explicit initial trajectory (used by
/// idempotence checks and nested solves).
pub fn solve_fixed_point_seeded<S: Scalar>(
    mu: &Density<S>,
    u: &FinalCondition<S>,
    spec: &PotentialSpec<S>,
    cfg: &SchemeConfig<S>,
    seed_trajectory: Option<&[Density<S>]>,
) -> Result<SchemeSolution<S>> {
    solve_fixed_point_observed(mu, u, spec, cfg, seed_trajectory, |_, _| {})
}

/// [`solve_fixed_point_seeded`] with an observer called after every counted
/// sweep with the sweep index and the freshly propagated trajectory.
pub fn solve_fixed_point_observed<S: Scalar>(
    mu: &Density<S>,
    u: &FinalCondition<S>,
    spec: &PotentialSpec<S>,
    cfg: &SchemeConfig<S>,
    seed_trajectory: Option<&[Density<S>]>,
    mut observer: impl FnMut(usize, &[Density<S>]),
) -> Result<SchemeSolution<S>> {
    cfg.validate()?;
    if u.grid() != mu.grid() {
        return Err(Error::GridMismatch("final condition vs initial density".into()));
    }
    let times = cfg.times();
    let s = cfg.s;

    // initialization pass (uncounted): one propagation from the guess
    let guess: Vec<Density<S>> = match seed_trajectory {
        Some(t) => {
            if t.len() != s + 1 {
                return Err(Error::Config("seed trajectory has the wrong length".into()));
            }
            t.to_vec()
        }
        None => vec![mu.clone(); s + 1],
    };
    let init = sweep_inputs(&guess, &times, u, spec)?;
    let (mut costs, mut kernels) = backward_pass(&init.f0, &init.potentials, cfg.n)?;
    let mut trajectory = forward_propagate_kernels(mu, &kernels)?;

    let mut iterations = 0;
    let mut residual = S::infinity();
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let used = trajectory.clone();
        let inputs = sweep_inputs(&used, &times, u, spec)?;
        let (new_costs, new_kernels) = backward_pass(&inputs.f0, &inputs.potentials, cfg.n)?;
        let propagated = forward_propagate_kernels(mu, &new_kernels)?;
        observer(iterations, &propagated);
        residual = trajectory_distance(&propagated, &used)?;
        costs = new_costs;
        kernels = new_kernels;
        if residual < cfg.fp_tol {
            trajectory = propagated;
            converged = true;
            break;
        }
        let alpha = cfg.damping;
        if alpha == S::one() {
            trajectory = propagated;
        } else {
            let mut mixed = Vec::with_capacity(s + 1);
            for (new, old) in propagated.iter().zip(&used) {
                mixed.push(new.mix(old, alpha)?);
            }
            mixed[0] = mu.clone();
            trajectory = mixed;
        }
    }

    let value = value_report(&trajectory, &kernels, &times, u, spec, cfg)?;
    Ok(SchemeSolution {
        config: *cfg,
        times,
        densities: trajectory,
        costs,
        kernels,
        value,
        fp_residual: residual,
        iterations,
        converged,
    })
}

fn forward_propagate_kernels<S: Scalar>(
    mu_start: &Density<S>,
    kernels: &[GibbsKernel<S>],
) -> Result<Vec<Density<S>>> {
    let mut densities = Vec::with_capacity(kernels.len() + 1);
    densities.push(mu_start.clone());
    for kern in kernels {
        let next = push_forward(densities.last().expect("nonempty"), kern)?;
        densities.push(next);
    }
    Ok(densities)
}

fn value_report<S: Scalar>(
    densities: &[Density<S>],
    kernels: &[GibbsKernel<S>],
    times: &[S],
    u: &FinalCondition<S>,
    spec: &PotentialSpec<S>,
    cfg: &SchemeConfig<S>,
) -> Result<ValueReport<S>> {
    let mut ke = S::zero();
    let mut pot = S::zero();
    for (k, kern) in kernels.iter().enumerate() {
        let (dke, dpot) = step_cost_split(&densities[k], kern, times[k], spec)?;
        ke += dke;
        pot += dpot;
    }
    let final_value = u.value(&densities[densities.len() - 1])?;
    let p = densities[0].grid().dim();
    let normalization = S::of_usize(cfg.s)
        * S::of_usize(p)
        * S::of(0.5)
        * (S::of_usize(cfg.n) / (S::of(2.0) * S::PI())).ln();
    Ok(ValueReport {
        total: ke + pot + final_value,
        kinetic_entropy: ke,
        potential: pot,
        final_value,
        normalization,
    })
}

/// Recompute the value report of a solution from its stored pieces.
pub fn discrete_value<S: Scalar>(
    sol: &SchemeSolution<S>,
    u: &FinalCondition<S>,
    spec: &PotentialSpec<S>,
) -> Result<ValueReport<S>> {
    value_report(&sol.densities, &sol.kernels, &sol.times, u, spec, &sol.config)
}

/// Composition check of the value: `A` is the full `s`-step value at `μ`;
/// `B` sums the first `s2` step costs of the full solve and adds the value
/// of a fresh `s1`-step solve started from the intermediate density.
/// Returns `|A - B|`; a degenerate split is zero by convention.
pub fn semigroup_check<S: Scalar>(
    mu: &Density<S>,
    u: &FinalCondition<S>,
    spec: &PotentialSpec<S>,
    cfg: &SchemeConfig<S>,
    s1: usize,
    s2: usize,
) -> Result<S> {
    cfg.validate()?;
    if s1 + s2 != cfg.s {
        return Err(Error::Config(format!("split {s1}+{s2} != s = {}", cfg.s)));
    }
    if s1 == 0 || s2 == 0 {
        return Ok(S::zero());
    }
    let full = solve_fixed_point(mu, u, spec, cfg)?;
    let a = full.value.total;
    let mut early = S::zero();
    for k in 0..s2 {
        let (ke, pot) =
            step_cost_split(&full.densities[k], &full.kernels[k], full.times[k], spec)?;
        early += ke + pot;
    }
    let nu = full.densities[s2].clone();
    let inner_cfg = SchemeConfig { s: s1, ..*cfg };
    let inner = solve_fixed_point(&nu, u, spec, &inner_cfg)?;
    let b = early + inner.value.total;
    Ok((a - b).abs())
}

/// Per-node vector data, one field per component.
#[derive(Debug, Clone)]
pub struct VectorField<S> {
    pub comps: Vec<GridField<S>>,
}

impl<S: Scalar> VectorField<S> {
    /// `sup_x |v(x)|_2`.
    pub fn sup_norm(&self) -> S {
        let grid = self.comps[0].grid();
        let mut worst = S::zero();
        for i in 0..grid.len() {
            let mut acc = S::zero();
            for c in &self.comps {
                let v = c.values()[i];
                acc += v * v;
            }
            worst = worst.max(acc.sqrt());
        }
        worst
    }
}

/// Per-node symmetric matrix data, entries row-major.
#[derive(Debug, Clone)]
pub struct MatrixField<S> {
    pub p: usize,
    pub entries: Vec<GridField<S>>,
}

impl<S: Scalar> MatrixField<S> {
    pub fn at(&self, node: usize) -> [[S; 2]; 2] {
        let mut m = [[S::zero(); 2]; 2];
        for a in 0..self.p {
            for b in 0..self.p {
                m[a][b] = self.entries[a * self.p + b].values()[node];
            }
        }
        m
    }

    /// `sup_x ‖M(x) - Id‖` in the symmetric spectral norm.
    pub fn sup_deviation_from_identity(&self) -> S {
        let grid = self.entries[0].grid();
        let mut worst = S::zero();
        for i in 0..grid.len() {
            let m = self.at(i);
            let norm = if self.p == 1 {
                (m[0][0] - S::one()).abs()
            } else {
                let a = m[0][0] - S::one();
                let d = m[1][1] - S::one();
                let b = m[0][1];
                let mid = (a + d) * S::of(0.5);
                let rad = (((a - d) * S::of(0.5)).powi(2) + b * b).sqrt();
                (mid + rad).abs().max((mid - rad).abs())
            };
            worst = worst.max(norm);
        }
        worst
    }
}

/// Gaussian surrogate data of one cost field: `Q = (Id + f''/n)^{-1}` and
/// `β = Q f'/n`, built from centered differences. The kernel row at `x` is
/// close to `N(β(x), Q(x)/n)`.
#[derive(Debug, Clone)]
pub struct GaussianSurrogate<S> {
    pub beta: VectorField<S>,
    pub q: MatrixField<S>,
}

/// Surrogates for a slice of cost fields, with the recorded bound constant
/// `D = n · sup_t (‖β‖_∞ + ‖Q - Id‖_∞)`.
#[derive(Debug, Clone)]
pub struct GaussianDiagnostics<S> {
    pub per_time: Vec<GaussianSurrogate<S>>,
    pub beta_sup: S,
    pub q_dev_sup: S,
    pub bound_constant: S,
}

pub fn gaussian_diagnostics<S: Scalar>(
    costs: &[GridField<S>],
    n: usize,
) -> Result<GaussianDiagnostics<S>> {
    if costs.is_empty() {
        return Err(Error::Config("no cost fields".into()));
    }
    let nf = S::of_usize(n);
    let mut per_time = Vec::with_capacity(costs.len());
    let mut beta_sup = S::zero();
    let mut q_dev_sup = S::zero();
    for f in costs {
        let p = f.grid().dim();
        let grad: Vec<GridField<S>> = (0..p).map(|a| f.axis_derivative(a)).collect();
        let hess: Vec<GridField<S>> = (0..p * p).map(|i| f.axis_second(i / p, i % p)).collect();
        let grid = f.grid();
        let mut q_entries = vec![GridField::zeros(grid); p * p];
        let mut beta_comps = vec![GridField::zeros(grid); p];
        for node in 0..grid.len() {
            if p == 1 {
                let den = S::one() + hess[0].values()[node] / nf;
                if !(den > S::zero()) {
                    return Err(Error::Numerical(
                        "Id + f''/n not positive definite; n too small for the surrogate".into(),
                    ));
                }
                let q = S::one() / den;
                q_entries[0].values_mut()[node] = q;
                beta_comps[0].values_mut()[node] = q * grad[0].values()[node] / nf;
            } else {
                let a = S::one() + hess[0].values()[node] / nf;
                let b = hess[1].values()[node] / nf;
                let c = hess[2].values()[node] / nf;
                let d = S::one() + hess[3].values()[node] / nf;
                let det = a * d - b * c;
                if !(det > S::zero()) {
                    return Err(Error::Numerical(
                        "Id + f''/n not positive definite; n too small for the surrogate".into(),
                    ));
                }
                let (qa, qb, qc, qd) = (d / det, -b / det, -c / det, a / det);
                q_entries[0].values_mut()[node] = qa;
                q_entries[1].values_mut()[node] = qb;
                q_entries[2].values_mut()[node] = qc;
                q_entries[3].values_mut()[node] = qd;
                let g0 = grad[0].values()[node];
                let g1 = grad[1].values()[node];
                beta_comps[0].values_mut()[node] = (qa * g0 + qb * g1) / nf;
                beta_comps[1].values_mut()[node] = (qc * g0 + qd * g1) / nf;
            }
        }
        let beta = VectorField { comps: beta_comps };
        let q = MatrixField { p, entries: q_entries };
        beta_sup = beta_sup.max(beta.sup_norm());
        q_dev_sup = q_dev_sup.max(q.sup_deviation_from_identity());
        per_time.push(GaussianSurrogate { beta, q });
    }
    let bound_constant = nf * (beta_sup + q_dev_sup);
    Ok(GaussianDiagnostics { per_time, beta_sup, q_dev_sup, bound_constant })
}

/// Largest deviation of a field from its reflection `x ↦ -x`.
pub fn evenness_residual<S: Scalar>(f: &GridField<S>) -> S {
    let g = f.grid();
    let n = g.nodes_per_axis();
    let mut worst = S::zero();
    for i in 0..g.len() {
        let ix = g.split(i);
        let refl = g.flat([(n - ix[0]) % n, (n - ix[1]) % n]);
        worst = worst.max((f.values()[i] - f.values()[refl]).abs());
    }
    worst
}
