//! The problem-definition layer: external potential `V(t,x)`, even
//! interaction potential `W(x)`, the mean field `W^μ = W ∗ μ`, and final
//! conditions `U` on densities with exact derivatives.
//!
//! `V` and `W` are truncated cosine series. `W` uses the basis
//! `cos(2πk·x) - 1`, so evenness and `W(0) = 0` hold by construction instead
//! of by validation. Because `W` has finitely many modes, the mean field is
//! computed by mode projection,
//!
//! ```text
//! (W ∗ μ)(x) = Σ_k c_k [ cos(2πk·x) ⟨cos(2πk·y), μ⟩
//!                      + sin(2πk·x) ⟨sin(2πk·y), μ⟩ - 1 ],
//! ```
//!
//! which agrees with the grid circular convolution exactly (same trig
//! identity, reordered).
//!
//! Final conditions come in three families (linear, product of linears, and
//! a smooth polynomial function of a linear), each with a closed-form
//! derivative `U'(ρ)`, a Wasserstein-1 Lipschitz constant, and a uniform
//! bound on `‖U'(ρ)‖_∞`.

use crate::grid::{GridField, TorusGrid};
use crate::measures::Density;
use crate::{Error, Result, Scalar};

/// One term of `V`: `amp · cos(2π·ell·t + phase_t) · cos(2π k·x + phase_x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VTerm<S> {
    pub ell: i64,
    pub k: [i64; 2],
    pub amp: S,
    pub phase_t: S,
    pub phase_x: S,
}

/// One term of `W`: `amp · (cos(2π k·x) - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WTerm<S> {
    pub k: [i64; 2],
    pub amp: S,
}

/// Truncated Fourier data for `V(t,x)` and `W(x)`.
#[derive(Debug, Clone, Default)]
pub struct PotentialSpec<S> {
    pub v_terms: Vec<VTerm<S>>,
    pub w_terms: Vec<WTerm<S>>,
}

/// Weight of the interaction term: the value functional uses `½W^μ`, the
/// kernels and the backward recursion use the full `W^μ` (the derivative of
/// the symmetric energy `½∬W dμ dμ` is `W^μ`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteractionWeight {
    Half,
    Full,
}

impl InteractionWeight {
    pub fn factor<S: Scalar>(self) -> S {
        match self {
            InteractionWeight::Half => S::of(0.5),
            InteractionWeight::Full => S::one(),
        }
    }
}

fn dot_k<S: Scalar>(k: [i64; 2], x: [S; 2], p: usize) -> S {
    let mut acc = S::of(k[0] as f64) * x[0];
    if p == 2 {
        acc += S::of(k[1] as f64) * x[1];
    }
    acc
}

fn k_norm(k: [i64; 2], p: usize) -> f64 {
    let a = k[0] as f64;
    let b = if p == 2 { k[1] as f64 } else { 0.0 };
    (a * a + b * b).sqrt()
}

impl<S: Scalar> PotentialSpec<S> {
    pub fn new(v_terms: Vec<VTerm<S>>, w_terms: Vec<WTerm<S>>) -> Self {
        PotentialSpec { v_terms, w_terms }
    }

    /// `V(t, ·)` sampled at the grid nodes. `t` wraps mod 1 first, so `t`
    /// and `t + 1` produce bit-identical fields.
    pub fn eval_v(&self, t: S, grid: TorusGrid) -> GridField<S> {
        let t = crate::grid::wrap01(t);
        let tau = S::of(2.0) * S::PI();
        let p = grid.dim();
        GridField::from_fn(grid, |x| {
            let mut acc = S::zero();
            for term in &self.v_terms {
                let tf = (tau * S::of(term.ell as f64) * t + term.phase_t).cos();
                let xf = (tau * dot_k(term.k, x, p) + term.phase_x).cos();
                acc += term.amp * tf * xf;
            }
            acc
        })
    }

    /// `W` sampled at the grid nodes.
    pub fn eval_w(&self, grid: TorusGrid) -> GridField<S> {
        let tau = S::of(2.0) * S::PI();
        let p = grid.dim();
        GridField::from_fn(grid, |x| {
            let mut acc = S::zero();
            for term in &self.w_terms {
                acc += term.amp * ((tau * dot_k(term.k, x, p)).cos() - S::one());
            }
            acc
        })
    }

    /// Mean field `W^μ(x) = ∫ W(x-y) dμ(y)` by mode projection.
    pub fn mean_field(&self, mu: &Density<S>) -> GridField<S> {
        let grid = mu.grid();
        let tau = S::of(2.0) * S::PI();
        let p = grid.dim();
        let vol = grid.cell_volume::<S>();
        let mut out = GridField::zeros(grid);
        for term in &self.w_terms {
            let mut cos_mom = S::zero();
            let mut sin_mom = S::zero();
            for (i, &m) in mu.values().iter().enumerate() {
                let y = grid.node::<S>(i);
                let ang = tau * dot_k(term.k, y, p);
                cos_mom += ang.cos() * m;
                sin_mom += ang.sin() * m;
            }
            cos_mom *= vol;
            sin_mom *= vol;
            for (i, v) in out.values_mut().iter_mut().enumerate() {
                let x = grid.node::<S>(i);
                let ang = tau * dot_k(term.k, x, p);
                *v += term.amp * (ang.cos() * cos_mom + ang.sin() * sin_mom - S::one());
            }
        }
        out
    }

    /// `V(t,·) + w · W^μ`.
    pub fn total_potential(
        &self,
        t: S,
        mu: &Density<S>,
        weight: InteractionWeight,
    ) -> GridField<S> {
        let v = self.eval_v(t, mu.grid());
        let wf = self.mean_field(mu).scale(weight.factor());
        v.add(&wf).expect("same grid by construction")
    }

    /// Coefficient bound `Σ|amp|` on `‖V‖_∞`.
    pub fn v_sup_bound(&self) -> S {
        self.v_terms.iter().map(|t| t.amp.abs()).sum()
    }

    /// `‖V‖_∞` sampled over the grid and a uniform time grid.
    pub fn v_sup_sampled(&self, grid: TorusGrid, t_samples: usize) -> S {
        let mut sup = S::zero();
        for i in 0..t_samples.max(1) {
            let t = S::of_usize(i) / S::of_usize(t_samples.max(1));
            sup = sup.max(self.eval_v(t, grid).max_abs());
        }
        sup
    }

    /// Coefficient bound `2 Σ|amp|` on `‖W‖_∞` (each basis term has range
    /// `[-2, 0]` scaled by its amplitude).
    pub fn w_sup_bound(&self) -> S {
        self.w_terms.iter().map(|t| S::of(2.0) * t.amp.abs()).sum()
    }

    /// Coefficient bound on the spatial Lipschitz constant of `V`.
    pub fn v_lip_bound(&self, p: usize) -> S {
        let tau = S::of(2.0) * S::PI();
        self.v_terms.iter().map(|t| t.amp.abs() * tau * S::of(k_norm(t.k, p))).sum()
    }

    /// Coefficient bound on the Lipschitz constant of `W`.
    pub fn w_lip_bound(&self, p: usize) -> S {
        let tau = S::of(2.0) * S::PI();
        self.w_terms.iter().map(|t| t.amp.abs() * tau * S::of(k_norm(t.k, p))).sum()
    }
}

/// Dense polynomial in one variable, `coeffs[i]·s^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial<S> {
    coeffs: Vec<S>,
}

impl<S: Scalar> Polynomial<S> {
    pub fn new(coeffs: Vec<S>) -> Self {
        Polynomial { coeffs }
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    pub fn eval(&self, s: S) -> S {
        self.coeffs.iter().rev().fold(S::zero(), |acc, &c| acc * s + c)
    }

    pub fn derivative(&self) -> Polynomial<S> {
        if self.coeffs.len() <= 1 {
            return Polynomial::new(vec![S::zero()]);
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, &c)| c * S::of_usize(i))
            .collect();
        Polynomial::new(coeffs)
    }

    /// `max |self|` on `[-a, a]` by dense sampling.
    pub fn max_abs_on(&self, a: S) -> S {
        let samples = 4096;
        let mut m = S::zero();
        for i in 0..=samples {
            let s = -a + S::of(2.0) * a * S::of_usize(i) / S::of_usize(samples);
            m = m.max(self.eval(s).abs());
        }
        m
    }
}

/// Per-axis grid Lipschitz constant combined into an `ℓ2` bound, valid for
/// transport between grid nodes.
fn grid_lipschitz<S: Scalar>(f: &GridField<S>) -> S {
    let g = f.grid();
    let n = g.nodes_per_axis();
    let inv_dx = S::of_usize(n);
    let mut total = S::zero();
    for axis in 0..g.dim() {
        let mut worst = S::zero();
        for i in 0..g.len() {
            let ix = g.split(i);
            let mut up = ix;
            up[axis] = (ix[axis] + 1) % n;
            let d = (f.values()[g.flat(up)] - f.values()[i]).abs() * inv_dx;
            worst = worst.max(d);
        }
        total += worst * worst;
    }
    total.sqrt()
}

/// A functional `U` on densities with an exact derivative `U'(ρ)`: the
/// terminal condition of the backward scheme.
#[derive(Debug, Clone)]
pub enum FinalCondition<S> {
    /// `U(ρ) = ⟨f, ρ⟩`.
    Linear { f: GridField<S> },
    /// `U(ρ) = Π_i ⟨f_i, ρ⟩`.
    ProductOfLinear { fs: Vec<GridField<S>> },
    /// `U(ρ) = Φ(⟨f, ρ⟩)` with polynomial `Φ`.
    SmoothOfLinear { phi: Polynomial<S>, f: GridField<S> },
}

impl<S: Scalar> FinalCondition<S> {
    pub fn linear(f: GridField<S>) -> Self {
        FinalCondition::Linear { f }
    }

    pub fn product(fs: Vec<GridField<S>>) -> Result<Self> {
        if fs.is_empty() {
            return Err(Error::Config("product final condition needs factors".into()));
        }
        let g = fs[0].grid();
        if fs.iter().any(|f| f.grid() != g) {
            return Err(Error::GridMismatch("product final condition".into()));
        }
        Ok(FinalCondition::ProductOfLinear { fs })
    }

    pub fn smooth(phi: Polynomial<S>, f: GridField<S>) -> Self {
        FinalCondition::SmoothOfLinear { phi, f }
    }

    pub fn grid(&self) -> TorusGrid {
        match self {
            FinalCondition::Linear { f } => f.grid(),
            FinalCondition::ProductOfLinear { fs } => fs[0].grid(),
            FinalCondition::SmoothOfLinear { f, .. } => f.grid(),
        }
    }

    /// `U(ρ)`.
    pub fn value(&self, rho: &Density<S>) -> Result<S> {
        match self {
            FinalCondition::Linear { f } => f.inner(rho.field()),
            FinalCondition::ProductOfLinear { fs } => {
                let mut acc = S::one();
                for f in fs {
                    acc *= f.inner(rho.field())?;
                }
                Ok(acc)
            }
            FinalCondition::SmoothOfLinear { phi, f } => Ok(phi.eval(f.inner(rho.field())?)),
        }
    }

    /// `U'(ρ)` as a grid function.
    pub fn derivative(&self, rho: &Density<S>) -> Result<GridField<S>> {
        match self {
            FinalCondition::Linear { f } => Ok(f.clone()),
            FinalCondition::ProductOfLinear { fs } => {
                let inners: Vec<S> =
                    fs.iter().map(|f| f.inner(rho.field())).collect::<Result<_>>()?;
                let mut out = GridField::zeros(self.grid());
                for (i, f) in fs.iter().enumerate() {
                    let mut coeff = S::one();
                    for (j, &v) in inners.iter().enumerate() {
                        if j != i {
                            coeff *= v;
                        }
                    }
                    out = out.add(&f.scale(coeff))?;
                }
                Ok(out)
            }
            FinalCondition::SmoothOfLinear { phi, f } => {
                let s = f.inner(rho.field())?;
                Ok(f.scale(phi.derivative().eval(s)))
            }
        }
    }

    /// Wasserstein-1 Lipschitz constant, computed symbolically per family.
    pub fn lipschitz_d1(&self) -> S {
        match self {
            FinalCondition::Linear { f } => grid_lipschitz(f),
            FinalCondition::ProductOfLinear { fs } => {
                let lips: Vec<S> = fs.iter().map(grid_lipschitz).collect();
                let sups: Vec<S> = fs.iter().map(|f| f.max_abs()).collect();
                let mut total = S::zero();
                for i in 0..fs.len() {
                    let mut term = lips[i];
                    for (j, &s) in sups.iter().enumerate() {
                        if j != i {
                            term *= s;
                        }
                    }
                    total += term;
                }
                total
            }
            FinalCondition::SmoothOfLinear { phi, f } => {
                phi.derivative().max_abs_on(f.max_abs()) * grid_lipschitz(f)
            }
        }
    }

    /// Uniform bound `M` on `‖U'(ρ)‖_∞` over densities.
    pub fn derivative_bound(&self) -> S {
        match self {
            FinalCondition::Linear { f } => f.max_abs(),
            FinalCondition::ProductOfLinear { fs } => {
                let sups: Vec<S> = fs.iter().map(|f| f.max_abs()).collect();
                let mut total = S::zero();
                for i in 0..fs.len() {
                    let mut term = sups[i];
                    for (j, &s) in sups.iter().enumerate() {
                        if j != i {
                            term *= s;
                        }
                    }
                    total += term;
                }
                total
            }
            FinalCondition::SmoothOfLinear { phi, f } => {
                phi.derivative().max_abs_on(f.max_abs()) * f.max_abs()
            }
        }
    }

    /// Bound on `sup_ρ |U(ρ)|`.
    pub fn sup_value(&self) -> S {
        match self {
            FinalCondition::Linear { f } => f.max_abs(),
            FinalCondition::ProductOfLinear { fs } => {
                fs.iter().map(|f| f.max_abs()).fold(S::one(), |a, b| a * b)
            }
            FinalCondition::SmoothOfLinear { phi, f } => phi.max_abs_on(f.max_abs()),
        }
    }
}
