//! The one-step objects of the entropy-penalized scheme.
//!
//! For a step of size `1/n` with arrival cost `f` and potential `P`, the
//! minimizing velocity law has the factored Gibbs form
//!
//! ```text
//! γ(x,v) = N(0, (1/n)Id)(v) · exp(-f(x-v) + b(x)),
//! b(x)   = -log (G_{1/n} ⊛ e^{-f})(x),
//! ```
//!
//! and the backward-recursion output is `f_prev = -P/n + b`, so the kernel is
//! never materialized as an `(x,v)` table: everything reduces to circular
//! convolutions against the wrapped heat kernel `G_{1/n}`. The convolution is
//! stabilized by shifting `f` by its minimum before exponentiating, which
//! keeps every intermediate finite for arbitrarily large `‖f‖_∞`.
//!
//! The per-step cost uses the closed identity
//!
//! ```text
//! ∫∫ [ (n/2)|v|² + log γ ] γ dμ dv = (p/2) log(n/2π) + ∫ [ b - K⟨f⟩ ] dμ,
//! K⟨f⟩(x) = ∫ f(x-v) γ(x,v) dv,
//! ```
//!
//! obtained by substituting the Gibbs form into the integrand; `b - K⟨f⟩` is
//! the relative entropy of the row against the pure heat kernel, hence
//! nonnegative with equality only for constant `f`. The identity is verified
//! against the raw quadrature action in the tests before anything relies on
//! it.

use crate::grid::{circular_convolve, GridField, TorusGrid, WrappedGaussian};
use crate::measures::{Density, RawKernel, VelocityGrid};
use crate::model::{InteractionWeight, PotentialSpec};
use crate::{Error, Result, Scalar};

/// Closed-form minimum of the one-step kinetic-entropy action over velocity
/// laws with mean kinetic energy pinned to `p·eps/2`:
///
/// ```text
/// p·eps/2 - (p/2)·log(2π·eps·h) - p/2,
/// ```
///
/// attained by the Gaussian of variance `eps·h`. The map is minimized over
/// `eps` at `eps = 1`, the unconstrained optimum.
pub fn entropy_kinetic_minimum<S: Scalar>(p: usize, h: S, eps: S) -> Result<S> {
    if !(1..=2).contains(&p) {
        return Err(Error::Config(format!("dimension {p}")));
    }
    if !(h > S::zero()) || !(eps > S::zero()) {
        return Err(Error::Config("need h > 0 and eps > 0".into()));
    }
    let pf = S::of_usize(p);
    let half_p = pf / S::of(2.0);
    Ok(half_p * eps - half_p * (S::of(2.0) * S::PI() * eps * h).ln() - half_p)
}

/// One-step transition law in factored form `(f, b, variance 1/n)`.
#[derive(Debug, Clone)]
pub struct GibbsKernel<S> {
    f: GridField<S>,
    potential: GridField<S>,
    b: GridField<S>,
    f_prev: GridField<S>,
    n: usize,
    heat: WrappedGaussian<S>,
    /// `min f`, the log-sum-exp shift.
    shift: S,
    /// `G_{1/n} ⊛ e^{-(f - shift)}`, strictly positive.
    conv_shifted: GridField<S>,
}

/// Build the kernel for arrival cost `f` and full-weight potential `P` at
/// step count `n`. Also yields the backward-recursion output
/// `f_prev = -(1/n)P - log(G_{1/n} ⊛ e^{-f})`.
pub fn build_kernel<S: Scalar>(
    f: &GridField<S>,
    potential: &GridField<S>,
    n: usize,
) -> Result<GibbsKernel<S>> {
    if f.grid() != potential.grid() {
        return Err(Error::GridMismatch("build_kernel".into()));
    }
    if n == 0 {
        return Err(Error::Config("steps per unit time must be at least 1".into()));
    }
    let grid = f.grid();
    let heat = WrappedGaussian::new(grid, S::one() / S::of_usize(n))?;
    let shift = f.values().iter().copied().fold(S::infinity(), |m, v| m.min(v));
    let conv_shifted = circular_convolve(&heat, &f.map(|v| (-(v - shift)).exp()))?;
    if conv_shifted.values().iter().any(|&v| !(v > S::zero()) || !v.is_finite()) {
        return Err(Error::Numerical(
            "kernel normalizer vanished or overflowed despite rescaling".into(),
        ));
    }
    let b = conv_shifted.map(|v| shift - v.ln());
    let f_prev = b.sub(&potential.scale(S::one() / S::of_usize(n)))?;
    if b.values().iter().chain(f_prev.values()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite kernel normalization".into()));
    }
    Ok(GibbsKernel { f: f.clone(), potential: potential.clone(), b, f_prev, n, heat, shift, conv_shifted })
}

impl<S: Scalar> GibbsKernel<S> {
    pub fn grid(&self) -> TorusGrid {
        self.f.grid()
    }

    /// Arrival-time cost `f`.
    pub fn cost(&self) -> &GridField<S> {
        &self.f
    }

    /// Row normalizer `b = f_prev + P/n`.
    pub fn normalizer(&self) -> &GridField<S> {
        &self.b
    }

    /// Backward-recursion output, the cost one step earlier.
    pub fn cost_prev(&self) -> &GridField<S> {
        &self.f_prev
    }

    pub fn potential(&self) -> &GridField<S> {
        &self.potential
    }

    pub fn steps_per_unit(&self) -> usize {
        self.n
    }

    pub fn variance(&self) -> S {
        S::one() / S::of_usize(self.n)
    }

    pub fn heat_kernel(&self) -> &WrappedGaussian<S> {
        &self.heat
    }

    /// Row mass `∫ γ(x,·)` by wrapped quadrature; 1 up to rounding.
    pub fn row_mass(&self, x: usize) -> S {
        let grid = self.grid();
        let mut acc = S::zero();
        for z in 0..grid.len() {
            acc += self.row_value(x, z);
        }
        acc * grid.cell_volume()
    }

    /// Kernel density at departure node `x` and arrival node `z`, i.e.
    /// `γ(x, v)` for the wrapped jump `v = x - z`.
    pub fn row_value(&self, x: usize, z: usize) -> S {
        let grid = self.grid();
        let ix = grid.split(x);
        let iz = grid.split(z);
        let n = grid.nodes_per_axis();
        let off = grid.flat([(ix[0] + n - iz[0]) % n, (ix[1] + n - iz[1]) % n]);
        let g = self.heat.values()[off];
        g * (-(self.f.values()[z] - self.shift)).exp() / self.conv_shifted.values()[x]
    }

    /// First and second central moments of row `x` over the wrapped lattice,
    /// jumps resolved to the representative nearest zero.
    pub fn moments(&self, x: usize) -> ([S; 2], [[S; 2]; 2]) {
        let grid = self.grid();
        let p = grid.dim();
        let vol = grid.cell_volume::<S>();
        let mut mass = S::zero();
        let mut mean = [S::zero(); 2];
        for z in 0..grid.len() {
            let w = self.row_value(x, z) * vol;
            let v = grid.node_offset::<S>(x, z);
            mass += w;
            for axis in 0..p {
                mean[axis] += w * v[axis];
            }
        }
        for m in mean.iter_mut() {
            *m /= mass;
        }
        let mut cov = [[S::zero(); 2]; 2];
        for z in 0..grid.len() {
            let w = self.row_value(x, z) * vol / mass;
            let v = grid.node_offset::<S>(x, z);
            for a in 0..p {
                for b in 0..p {
                    cov[a][b] += w * (v[a] - mean[a]) * (v[b] - mean[b]);
                }
            }
        }
        (mean, cov)
    }

    /// Largest row value and smallest central row value across all rows;
    /// the empirical constants of the two-sided kernel bound. On the torus
    /// every wrapped jump satisfies `|v| ≤ √p/2`, so the central region is
    /// the whole row.
    pub fn row_bounds(&self) -> (S, S) {
        let grid = self.grid();
        let mut hi = S::zero();
        let mut lo = S::infinity();
        for x in 0..grid.len() {
            for z in 0..grid.len() {
                let v = self.row_value(x, z);
                hi = hi.max(v);
                lo = lo.min(v);
            }
        }
        (hi, lo)
    }

    /// Apply the kernel to a test function:
    /// `(Kg)(x) = ∫ g(x-v) γ(x,v) dv = (G ⊛ g e^{-f}) / (G ⊛ e^{-f})`.
    /// Scaled by the step count, `n(Kg - g)` is the discrete generator whose
    /// limit is `½Δg - ∂_x u · ∂_x g`.
    pub fn apply_to_function(&self, g: &GridField<S>) -> Result<GridField<S>> {
        if g.grid() != self.grid() {
            return Err(Error::GridMismatch("apply_to_function".into()));
        }
        let weighted = g.zip_map(&self.f, |gv, fv| gv * (-(fv - self.shift)).exp())?;
        let num = circular_convolve(&self.heat, &weighted)?;
        num.zip_map(&self.conv_shifted, |a, b| a / b)
    }

    /// Tabulate the kernel on a velocity box (rows renormalized there), for
    /// comparison against raw-kernel oracles. The cost is interpolated at
    /// off-grid arrival points.
    pub fn materialize(&self, v_grid: VelocityGrid<S>) -> Result<RawKernel<S>> {
        let grid = self.grid();
        if v_grid.dim() != grid.dim() {
            return Err(Error::Config("velocity grid dimension mismatch".into()));
        }
        let nf = S::of_usize(self.n);
        let p = grid.dim() as i32;
        let norm = (nf / (S::of(2.0) * S::PI())).powi(p).sqrt();
        let mut values = Vec::with_capacity(grid.len() * v_grid.len());
        for x in 0..grid.len() {
            let xp = grid.node::<S>(x);
            let row_norm = self.conv_shifted.values()[x].recip(); // e^{b - shift}
            for j in 0..v_grid.len() {
                let v = v_grid.node(j);
                let gauss = norm * (-nf * v_grid.speed_sq(j) / S::of(2.0)).exp();
                let arrival = [xp[0] - v[0], xp[1] - v[1]];
                values.push(gauss * (-(self.f.sample(arrival) - self.shift)).exp() * row_norm);
            }
        }
        RawKernel::new(grid, v_grid, values, true)
    }
}

/// Distribution after one jump: `ρ_next(z) = e^{-f(z)} (G_{1/n} ⊛ e^{b} μ)(z)`,
/// renormalized, with the drift of the renormalization checked.
pub fn push_forward<S: Scalar>(mu: &Density<S>, kernel: &GibbsKernel<S>) -> Result<Density<S>> {
    if mu.grid() != kernel.grid() {
        return Err(Error::GridMismatch("push_forward".into()));
    }
    // e^{b}μ = e^{shift}·μ/conv_shifted; the e^{shift} factors cancel against
    // e^{-(f-shift)} below, so neither is ever formed.
    let weighted = GridField::new(
        mu.grid(),
        mu.values()
            .iter()
            .zip(kernel.conv_shifted.values())
            .map(|(&m, &c)| m / c)
            .collect(),
    )?;
    let spread = circular_convolve(&kernel.heat, &weighted)?;
    let unnorm = spread.zip_map(&kernel.f, |s, fv| s * (-(fv - kernel.shift)).exp())?;
    let mass = unnorm.quadrature();
    if (mass - S::one()).abs() > S::tol(1e-8) {
        return Err(Error::Numerical(format!("push-forward mass drift {}", mass - S::one())));
    }
    let out = Density::normalized(unnorm)?;
    debug_assert!((out.mass() - S::one()).abs() < S::tol(1e-10));
    Ok(out)
}

/// Per-step cost of the value functional, net of the `(p/2)·log(n/2π)`
/// normalization: the relative-entropy term plus the potential term
/// `-(1/n)∫(V(t,·) + ½W^μ) dμ`.
pub fn step_cost<S: Scalar>(
    mu: &Density<S>,
    kernel: &GibbsKernel<S>,
    t: S,
    spec: &PotentialSpec<S>,
) -> Result<S> {
    let (ke, pot) = step_cost_split(mu, kernel, t, spec)?;
    Ok(ke + pot)
}

/// The two components of [`step_cost`]: (kinetic-entropy net of its
/// normalization, potential term).
pub fn step_cost_split<S: Scalar>(
    mu: &Density<S>,
    kernel: &GibbsKernel<S>,
    t: S,
    spec: &PotentialSpec<S>,
) -> Result<(S, S)> {
    if mu.grid() != kernel.grid() {
        return Err(Error::GridMismatch("step_cost".into()));
    }
    // K⟨f⟩ = (G ⊛ f e^{-(f-shift)}) / (G ⊛ e^{-(f-shift)})
    let weighted = kernel.f.map(|v| v * (-(v - kernel.shift)).exp());
    let conv_f = circular_convolve(&kernel.heat, &weighted)?;
    let mean_f = conv_f.zip_map(&kernel.conv_shifted, |num, den| num / den)?;
    let ke = kernel.b.sub(&mean_f)?.inner(mu.field())?;
    let half_pot = spec.total_potential(t, mu, InteractionWeight::Half);
    let pot = -half_pot.inner(mu.field())? / S::of_usize(kernel.n);
    Ok((ke, pot))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::action_raw;

    const TAU: f64 = 2.0 * std::f64::consts::PI;

    fn grid1(n: usize) -> TorusGrid {
        TorusGrid::new(1, n).unwrap()
    }

    #[test]
    fn closed_form_values() {
        let v = entropy_kinetic_minimum(1, 1.0 / TAU, 1.0).unwrap();
        assert!(v.abs() < 1e-14, "v = {v}");
        let v2 = entropy_kinetic_minimum(1, 0.1, 2.0).unwrap();
        let expected = 1.0 - 0.5 * (0.4 * std::f64::consts::PI).ln() - 0.5;
        assert!((v2 - expected).abs() < 1e-14);
        assert!(entropy_kinetic_minimum(1, -0.1, 1.0).is_err());
        assert!(entropy_kinetic_minimum(3, 0.1, 1.0).is_err());
    }

    #[test]
    fn closed_form_is_minimized_at_unit_eps() {
        for &(p, h) in &[(1usize, 0.05f64), (1, 0.5), (2, 0.125)] {
            let mut best = (f64::INFINITY, 0.0);
            let mut eps = 0.2;
            while eps <= 3.0 {
                let v = entropy_kinetic_minimum(p, h, eps).unwrap();
                if v < best.0 {
                    best = (v, eps);
                }
                eps += 0.005;
            }
            assert!((best.1 - 1.0).abs() < 0.005, "argmin {} for p={p}, h={h}", best.1);
        }
    }

    #[test]
    fn constant_cost_gives_heat_kernel() {
        let g = grid1(64);
        let kappa = 1.3_f64;
        let f = GridField::constant(g, kappa);
        let k = build_kernel(&f, &GridField::zeros(g), 8).unwrap();
        assert!(k.normalizer().sup_distance(&f).unwrap() < 1e-12);
        assert!(k.cost_prev().sup_distance(&f).unwrap() < 1e-12);
        // rows coincide with the wrapped heat kernel
        for z in 0..g.len() {
            let expect = k.heat_kernel().values()[z];
            assert!((k.row_value(0, z) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn heat_multiplier_identity() {
        let g = grid1(64);
        let n = 4usize;
        let f = GridField::from_fn(g, |x: [f64; 2]| -(1.0 + 0.5 * (TAU * x[0]).cos()).ln());
        let k = build_kernel(&f, &GridField::zeros(g), n).unwrap();
        let decay = (-TAU * std::f64::consts::PI / n as f64).exp(); // e^{-2π²/n}
        let expected = GridField::from_fn(g, |x: [f64; 2]| 1.0 + 0.5 * decay * (TAU * x[0]).cos());
        let got = k.cost_prev().map(|v| (-v).exp());
        assert!(got.sup_distance(&expected).unwrap() < 1e-8);
    }

    #[test]
    fn rows_are_probability_densities() {
        let g = grid1(48);
        let f = GridField::from_fn(g, |x: [f64; 2]| {
            0.4 * (TAU * x[0]).cos() + 0.2 * (2.0 * TAU * x[0] + 0.3).sin()
        });
        let p = GridField::from_fn(g, |x: [f64; 2]| 0.1 * (TAU * x[0]).sin());
        let k = build_kernel(&f, &p, 16).unwrap();
        for x in 0..g.len() {
            assert!((k.row_mass(x) - 1.0).abs() < 1e-10, "row {x}");
        }
        // b = f_prev + P/n identically
        let recon = k.cost_prev().add(&p.scale(1.0 / 16.0)).unwrap();
        assert!(recon.sup_distance(k.normalizer()).unwrap() < 1e-13);
    }

    #[test]
    fn large_costs_stay_finite() {
        let g = grid1(32);
        let f = GridField::from_fn(g, |x: [f64; 2]| 900.0 * (TAU * x[0]).cos());
        let k = build_kernel(&f, &GridField::zeros(g), 8).unwrap();
        assert!(k.normalizer().values().iter().all(|v| v.is_finite()));
        for x in [0usize, 7, 16] {
            assert!((k.row_mass(x) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn push_forward_fixes_uniform_and_spreads_delta() {
        let g = grid1(64);
        let n = 16usize;
        let f = GridField::constant(g, 0.7);
        let k = build_kernel(&f, &GridField::zeros(g), n).unwrap();
        let u = push_forward(&Density::uniform(g), &k).unwrap();
        assert!(
            u.field().sup_distance(Density::<f64>::uniform(g).field()).unwrap() < 1e-12
        );
        let node = 20usize;
        let d = push_forward(&Density::delta_column(g, node), &k).unwrap();
        let heat = WrappedGaussian::new(g, 1.0 / n as f64).unwrap();
        let expect = GridField::new(g, heat.values().to_vec()).unwrap().translate([node, 0]);
        assert!(d.field().sup_distance(&expect).unwrap() < 1e-10);
        assert!((d.mass() - 1.0).abs() < 1e-12);
        assert!(d.field().min() >= 0.0);
    }

    #[test]
    fn step_cost_of_constants() {
        let g = grid1(32);
        let n = 8usize;
        let f = GridField::constant(g, 2.2);
        let spec = PotentialSpec::<f64>::default();
        let k = build_kernel(&f, &GridField::zeros(g), n).unwrap();
        let mu = Density::uniform(g);
        let c = step_cost(&mu, &k, 0.0, &spec).unwrap();
        assert!(c.abs() < 1e-12, "c = {c}");

        // constant external potential only contributes -v0/n
        let v0 = 0.9;
        let spec_v = PotentialSpec::new(
            vec![crate::model::VTerm { ell: 0, k: [0, 0], amp: v0, phase_t: 0.0, phase_x: 0.0 }],
            vec![],
        );
        let kv = build_kernel(&f, &GridField::constant(g, v0), n).unwrap();
        let cv = step_cost(&mu, &kv, 0.0, &spec_v).unwrap();
        assert!((cv + v0 / n as f64).abs() < 1e-12, "cv = {cv}");
    }

    /// The closed identity behind step_cost against the raw quadrature
    /// action on a materialized kernel.
    #[test]
    fn step_cost_matches_raw_action() {
        let g = grid1(64);
        let n = 8usize;
        let h = 1.0 / n as f64;
        let f = GridField::from_fn(g, |x: [f64; 2]| {
            0.3 * (TAU * x[0]).cos() + 0.1 * (2.0 * TAU * x[0] + 0.5).sin()
        });
        let spec = PotentialSpec::<f64>::default();
        let k = build_kernel(&f, &GridField::zeros(g), n).unwrap();
        let mu = Density::normalized(GridField::from_fn(g, |x: [f64; 2]| {
            1.0 + 0.4 * (TAU * x[0] + 0.2).cos()
        }))
        .unwrap();
        let (ke, _) = step_cost_split(&mu, &k, 0.0, &spec).unwrap();

        let vg = VelocityGrid::new(1, 192, 6.0 * h.sqrt()).unwrap();
        let raw = k.materialize(vg).unwrap();
        let action = action_raw(&raw, &mu, h).unwrap();
        let norm = 0.5 * (n as f64 / TAU).ln();
        assert!(
            (action - (norm + ke)).abs() < 1e-4,
            "raw {action} vs identity {}",
            norm + ke
        );
        // the normalized running cost is a relative entropy: strictly
        // positive whenever f is not constant
        assert!(ke > 0.0, "ke = {ke}");
    }

    #[test]
    fn moments_of_pure_heat_row() {
        let g = grid1(256);
        let n = 400usize;
        let f = GridField::constant(g, 0.1_f64);
        let k = build_kernel(&f, &GridField::zeros(g), n).unwrap();
        let (mean, cov) = k.moments(31);
        assert!(mean[0].abs() < 1e-8, "mean {}", mean[0]);
        assert!((cov[0][0] - 1.0 / n as f64).abs() < 1e-8, "cov {}", cov[0][0]);
    }

    #[test]
    fn row_bounds_are_finite_and_positive() {
        let g = grid1(32);
        let f = GridField::from_fn(g, |x: [f64; 2]| 0.5 * (TAU * x[0]).cos());
        let k = build_kernel(&f, &GridField::zeros(g), 8).unwrap();
        let (hi, lo) = k.row_bounds();
        assert!(hi.is_finite() && hi > 0.0);
        assert!(lo.is_finite() && lo > 0.0);
        assert!(hi >= lo);
    }
}
