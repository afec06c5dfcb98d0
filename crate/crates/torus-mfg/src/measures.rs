//! Probability densities on the grid, Wasserstein-1 distance, and the raw
//! kinetic-entropy action `A_h`.
//!
//! On the circle (`p = 1`) the transport distance with ground metric
//! `|x-y|_T` has a closed form: with `F_μ`, `F_ν` the cumulative functions,
//!
//! ```text
//! d_1(μ, ν) = min_c ∫_0^1 |F_μ - F_ν - c| dx,
//! ```
//!
//! minimized by the median of `F_μ - F_ν`. A brute-force linear-program
//! oracle (successive shortest paths on the bipartite transport graph) covers
//! small instances in any dimension and cross-checks the formula.
//!
//! The raw action of a velocity law `γ(x, ·)` against a density `μ`,
//!
//! ```text
//! A_h(γ,(x,v)) = (1/2h)|v|² γ + γ log γ,
//! ```
//!
//! integrated over `(x, v)`, is the running cost of one entropy-penalized
//! step before any closed-form reduction; the optimized scheme never
//! materializes it, so it stays available as an independent oracle.

use crate::grid::{GridField, TorusGrid};
use crate::{Error, Result, Scalar};

/// Probability density on the grid: nonnegative values with unit quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct Density<S> {
    field: GridField<S>,
}

impl<S: Scalar> Density<S> {
    /// Normalize a nonnegative field into a density. Values more negative
    /// than a rounding allowance are rejected; dust in `[-tol, 0)` is
    /// clipped.
    pub fn normalized(field: GridField<S>) -> Result<Self> {
        let tol = S::tol(1e-12);
        let mut f = field;
        for v in f.values_mut() {
            if *v < -tol {
                return Err(Error::Numerical(format!("density has negative value {v}")));
            }
            if *v < S::zero() {
                *v = S::zero();
            }
        }
        let mass = f.quadrature();
        if !(mass > S::zero()) || !mass.is_finite() {
            return Err(Error::Numerical(format!("density mass {mass} not positive")));
        }
        Ok(Density { field: f.scale(S::one() / mass) })
    }

    /// Wrap a field that is already normalized. Values within rounding of
    /// unit mass are kept verbatim (so stored densities round-trip
    /// bit-exactly); small drift up to `1e-8` is rescaled; more is an error.
    pub fn from_normalized(field: GridField<S>) -> Result<Self> {
        let tol = S::tol(1e-12);
        let mut f = field;
        for v in f.values_mut() {
            if *v < -tol {
                return Err(Error::Numerical(format!("density has negative value {v}")));
            }
            if *v < S::zero() {
                *v = S::zero();
            }
        }
        let mass = f.quadrature();
        let drift = (mass - S::one()).abs();
        if drift <= S::tol(1e-10) {
            Ok(Density { field: f })
        } else if drift <= S::tol(1e-8) {
            Ok(Density { field: f.scale(S::one() / mass) })
        } else {
            Err(Error::Numerical(format!("stored density mass {mass} too far from 1")))
        }
    }

    /// Uniform density.
    pub fn uniform(grid: TorusGrid) -> Self {
        Density { field: GridField::constant(grid, S::one()) }
    }

    /// A single grid column of height `1/dx^p` at `node`.
    pub fn delta_column(grid: TorusGrid, node: usize) -> Self {
        let mut f = GridField::zeros(grid);
        f.values_mut()[node] = S::one() / grid.cell_volume();
        Density { field: f }
    }

    pub fn field(&self) -> &GridField<S> {
        &self.field
    }

    pub fn grid(&self) -> TorusGrid {
        self.field.grid()
    }

    pub fn values(&self) -> &[S] {
        self.field.values()
    }

    pub fn mass(&self) -> S {
        self.field.quadrature()
    }

    /// Convex combination `t·self + (1-t)·other`; stays a density.
    pub fn mix(&self, other: &Self, t: S) -> Result<Self> {
        let f = self.field.scale(t).add(&other.field.scale(S::one() - t))?;
        Ok(Density { field: f })
    }

    /// `L1` distance `∫ |μ - ν| dx`.
    pub fn l1_distance(&self, other: &Self) -> Result<S> {
        let d = self.field.sub(&other.field)?;
        Ok(d.map(|v| v.abs()).quadrature())
    }
}

/// Exact Wasserstein-1 on the circle via cumulative functions.
///
/// For `p = 2` there is no exact closed form at grid scale; callers get an
/// error pointing at [`w1_lp_oracle`].
pub fn wasserstein1<S: Scalar>(mu: &Density<S>, nu: &Density<S>) -> Result<S> {
    if mu.grid() != nu.grid() {
        return Err(Error::GridMismatch("wasserstein1".into()));
    }
    if mu.grid().dim() != 1 {
        return Err(Error::Unsupported(
            "exact wasserstein1 needs p = 1; use w1_lp_oracle for small p = 2 instances".into(),
        ));
    }
    let dx = mu.grid().dx::<S>();
    let n = mu.grid().len();
    let mut cum = Vec::with_capacity(n);
    let mut acc = S::zero();
    for i in 0..n {
        acc += (mu.values()[i] - nu.values()[i]) * dx;
        cum.push(acc);
    }
    // optimal rotation: the median of the cumulative difference (any point
    // between the central order statistics gives the same total)
    let mut sorted = cum.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite cumulative values"));
    let c = sorted[n / 2];
    let total: S = cum.iter().map(|&g| (g - c).abs()).sum();
    Ok(total * dx)
}

/// Discrete transport linear program with cost `|x-y|_T`, solved exactly by
/// successive shortest paths with node potentials. Meant as a slow oracle:
/// instances are capped at 1024 grid nodes.
pub fn w1_lp_oracle<S: Scalar>(mu: &Density<S>, nu: &Density<S>) -> Result<S> {
    if mu.grid() != nu.grid() {
        return Err(Error::GridMismatch("w1_lp_oracle".into()));
    }
    let grid = mu.grid();
    let n = grid.len();
    if n > 1024 {
        return Err(Error::TooLarge(format!("{n} nodes exceeds the 1024-node oracle cap")));
    }
    let vol = grid.cell_volume::<S>();
    let mut supply: Vec<S> = mu.values().iter().map(|&v| v * vol).collect();
    let mut demand: Vec<S> = nu.values().iter().map(|&v| v * vol).collect();
    // shared mass stays in place at zero cost
    for i in 0..n {
        let common = supply[i].min(demand[i]);
        supply[i] -= common;
        demand[i] -= common;
    }
    let dust = S::epsilon() * S::of(64.0);
    let cost = |i: usize, j: usize| -> S {
        let off = grid.node_offset::<S>(i, j);
        (off[0] * off[0] + off[1] * off[1]).sqrt()
    };

    let nn = 2 * n; // left nodes 0..n, right nodes n..2n
    let mut potential = vec![S::zero(); nn];
    let mut flow = vec![S::zero(); n * n];
    let max_aug = 100 * (n + 1);
    let mut remaining: S = supply.iter().copied().sum();

    let mut aug = 0usize;
    while remaining > dust {
        aug += 1;
        if aug > max_aug {
            return Err(Error::Diverged(
                "transport LP exceeded its augmentation budget".into(),
            ));
        }
        // Dijkstra over reduced costs from all unexhausted supplies
        let inf = S::infinity();
        let mut dist = vec![inf; nn];
        let mut prev = vec![usize::MAX; nn];
        let mut done = vec![false; nn];
        for (i, &s) in supply.iter().enumerate() {
            if s > dust {
                dist[i] = S::zero();
            }
        }
        let mut target = usize::MAX;
        loop {
            let mut u = usize::MAX;
            let mut best = inf;
            for v in 0..nn {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u >= n && demand[u - n] > dust {
                target = u;
                break;
            }
            if u < n {
                // forward arcs u -> every demand node
                for j in 0..n {
                    let rc = cost(u, j) + potential[u] - potential[n + j];
                    let nd = dist[u] + rc;
                    if nd < dist[n + j] {
                        dist[n + j] = nd;
                        prev[n + j] = u;
                    }
                }
            } else {
                // backward arcs along positive flows
                let j = u - n;
                for i in 0..n {
                    if flow[i * n + j] > S::zero() {
                        let rc = -cost(i, j) + potential[u] - potential[i];
                        let nd = dist[u] + rc;
                        if nd < dist[i] {
                            dist[i] = nd;
                            prev[i] = u;
                        }
                    }
                }
            }
        }
        if target == usize::MAX {
            return Err(Error::Numerical(
                "transport LP: no augmenting path though mass remains".into(),
            ));
        }
        // bottleneck along the path
        let mut delta = demand[target - n];
        let mut v = target;
        loop {
            let u = prev[v];
            if u == usize::MAX {
                delta = delta.min(supply[v]);
                break;
            }
            if v >= n {
                // forward edge u->v has unlimited capacity
            } else {
                delta = delta.min(flow[v * n + (u - n)]);
            }
            v = u;
        }
        // apply
        let mut v = target;
        loop {
            let u = prev[v];
            if u == usize::MAX {
                supply[v] -= delta;
                break;
            }
            if v >= n {
                flow[u * n + (v - n)] += delta;
            } else {
                flow[v * n + (u - n)] -= delta;
            }
            v = u;
        }
        demand[target - n] -= delta;
        remaining -= delta;
        // potential update keeps reduced costs nonnegative
        let dt = dist[target];
        for v in 0..nn {
            let d = if dist[v] < dt { dist[v] } else { dt };
            potential[v] += d;
        }
    }

    let mut total = S::zero();
    for i in 0..n {
        for j in 0..n {
            let f = flow[i * n + j];
            if f > S::zero() {
                total += f * cost(i, j);
            }
        }
    }
    Ok(total)
}

/// Uniform velocity grid on the box `[-v_max, v_max]^p`, nodes at cell
/// centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityGrid<S> {
    p: usize,
    n_v: usize,
    v_max: S,
}

impl<S: Scalar> VelocityGrid<S> {
    pub fn new(p: usize, n_v: usize, v_max: S) -> Result<Self> {
        if !(1..=2).contains(&p) {
            return Err(Error::Config(format!("velocity grid dimension {p}")));
        }
        if n_v < 2 {
            return Err(Error::Config("velocity grid needs at least 2 nodes".into()));
        }
        if !(v_max > S::zero()) {
            return Err(Error::Config("velocity box must have positive half-width".into()));
        }
        Ok(VelocityGrid { p, n_v, v_max })
    }

    /// Defaults sized for step `h`: half-width `6·max(√h, drift_scale)` and
    /// spacing at most `√h / 8`, so the Gaussian tail outside the box is
    /// negligible and a standard deviation is well resolved.
    pub fn sized_for(p: usize, h: S, drift_scale: S) -> Result<Self> {
        let v_max = S::of(6.0) * h.sqrt().max(drift_scale);
        let dv_target = h.sqrt() / S::of(8.0);
        let n_v = ((S::of(2.0) * v_max / dv_target).as_f64().ceil() as usize).max(16);
        VelocityGrid::new(p, n_v, v_max)
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.n_v
    }

    pub fn len(&self) -> usize {
        self.n_v.pow(self.p as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dv(&self) -> S {
        S::of(2.0) * self.v_max / S::of_usize(self.n_v)
    }

    /// `dv^p`, the quadrature weight of a velocity cell.
    pub fn cell_volume(&self) -> S {
        self.dv().powi(self.p as i32)
    }

    pub fn v_max(&self) -> S {
        self.v_max
    }

    /// Velocity node coordinate (cell center); first `p` entries meaningful.
    pub fn node(&self, idx: usize) -> [S; 2] {
        let i = idx % self.n_v;
        let j = idx / self.n_v;
        let at = |k: usize| -self.v_max + (S::of_usize(k) + S::of(0.5)) * self.dv();
        [at(i), at(j)]
    }

    pub fn speed_sq(&self, idx: usize) -> S {
        let v = self.node(idx);
        match self.p {
            1 => v[0] * v[0],
            _ => v[0] * v[0] + v[1] * v[1],
        }
    }
}

/// A velocity law tabulated on (space grid) × (velocity grid): `γ(x_i, v_j)`
/// with every row a probability density on the box.
#[derive(Debug, Clone)]
pub struct RawKernel<S> {
    grid: TorusGrid,
    v_grid: VelocityGrid<S>,
    /// Row-major: `values[x * v_grid.len() + v]`.
    values: Vec<S>,
}

impl<S: Scalar> RawKernel<S> {
    /// Wrap a table, checking membership: every row integrates to
    /// `1 ± 1e-8`. With `renormalize`, rows are rescaled to exact unit mass
    /// first (still an error if a row is more than 1e-3 off, which signals an
    /// undersized velocity box rather than rounding).
    pub fn new(
        grid: TorusGrid,
        v_grid: VelocityGrid<S>,
        mut values: Vec<S>,
        renormalize: bool,
    ) -> Result<Self> {
        if grid.dim() != v_grid.dim() {
            return Err(Error::Config("space and velocity dimensions differ".into()));
        }
        let nv = v_grid.len();
        if values.len() != grid.len() * nv {
            return Err(Error::Config("kernel table size mismatch".into()));
        }
        if values.iter().any(|&v| v < S::zero() || !v.is_finite()) {
            return Err(Error::Numerical("kernel has negative or non-finite entries".into()));
        }
        let dv = v_grid.cell_volume();
        for x in 0..grid.len() {
            let row = &mut values[x * nv..(x + 1) * nv];
            let mass: S = row.iter().copied().sum::<S>() * dv;
            if renormalize {
                if (mass - S::one()).abs() > S::of(5e-2) {
                    return Err(Error::Numerical(format!(
                        "row {x} mass {mass} too far from 1 to renormalize"
                    )));
                }
                for v in row.iter_mut() {
                    *v /= mass;
                }
            } else if (mass - S::one()).abs() > S::tol(1e-8) {
                return Err(Error::Numerical(format!("row {x} mass {mass} violates membership")));
            }
        }
        Ok(RawKernel { grid, v_grid, values })
    }

    /// The x-independent Gaussian `N(0, variance·Id)` tabulated on the box.
    pub fn gaussian(grid: TorusGrid, v_grid: VelocityGrid<S>, variance: S) -> Result<Self> {
        let p = v_grid.dim();
        let norm = (S::of(2.0) * S::PI() * variance).powi(p as i32).sqrt().recip();
        let mut row = Vec::with_capacity(v_grid.len());
        for j in 0..v_grid.len() {
            let s2 = v_grid.speed_sq(j);
            row.push(norm * (-s2 / (S::of(2.0) * variance)).exp());
        }
        let mut values = Vec::with_capacity(grid.len() * v_grid.len());
        for _ in 0..grid.len() {
            values.extend_from_slice(&row);
        }
        RawKernel::new(grid, v_grid, values, true)
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn velocity_grid(&self) -> VelocityGrid<S> {
        self.v_grid
    }

    pub fn row(&self, x: usize) -> &[S] {
        let nv = self.v_grid.len();
        &self.values[x * nv..(x + 1) * nv]
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn row_mass(&self, x: usize) -> S {
        self.row(x).iter().copied().sum::<S>() * self.v_grid.cell_volume()
    }

    /// Largest L1 row distance to another kernel on the same grids.
    pub fn max_row_l1(&self, other: &Self) -> Result<S> {
        if self.grid != other.grid || self.v_grid != other.v_grid {
            return Err(Error::GridMismatch("max_row_l1".into()));
        }
        let dv = self.v_grid.cell_volume();
        let mut worst = S::zero();
        for x in 0..self.grid.len() {
            let d: S = self
                .row(x)
                .iter()
                .zip(other.row(x))
                .map(|(&a, &b)| (a - b).abs())
                .sum();
            worst = worst.max(d * dv);
        }
        Ok(worst)
    }
}

/// `∫∫ A_h(γ,(x,v)) dμ dv` by grid quadrature, with `0·log 0 = 0`.
pub fn action_raw<S: Scalar>(gamma: &RawKernel<S>, mu: &Density<S>, h: S) -> Result<S> {
    if gamma.grid() != mu.grid() {
        return Err(Error::GridMismatch("action_raw".into()));
    }
    if !(h > S::zero()) {
        return Err(Error::Config("step size h must be positive".into()));
    }
    let vg = gamma.velocity_grid();
    let dv = vg.cell_volume();
    let dxp = mu.grid().cell_volume::<S>();
    let half_inv_h = S::one() / (S::of(2.0) * h);
    let mut total = S::zero();
    for (x, &m) in mu.values().iter().enumerate() {
        if m == S::zero() {
            continue;
        }
        let mut row_acc = S::zero();
        for (j, &g) in gamma.row(x).iter().enumerate() {
            if g > S::zero() {
                row_acc += half_inv_h * vg.speed_sq(j) * g + g * g.ln();
            }
        }
        total += m * row_acc;
    }
    Ok(total * dxp * dv)
}
