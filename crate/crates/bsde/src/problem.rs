//! Semilinear parabolic problems
//! `u_t + ½Tr(σσᵀ Hess u) + ∇u·μ + f(t, x, u, σᵀ∇u) = 0`, `u(T, x) = g(x)`.

use std::sync::Arc;

use dbq_core::sde::SdeSpec;
use dbq_core::{Error, Result};

/// `(t, x, u, z) ↦ f` with `z = σᵀ∇u`.
pub type NonlinearityFn = Arc<dyn Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync>;
/// `(t, x, u, z, f_z) ↦ f_u`, writing `∂f/∂z` into `f_z`.
pub type NonlinearityPartials = Arc<dyn Fn(f64, &[f64], f64, &[f64], &mut [f64]) -> f64 + Send + Sync>;
pub type TerminalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct PdeProblem {
    pub name: String,
    pub sde: SdeSpec,
    pub f: NonlinearityFn,
    pub f_partials: NonlinearityPartials,
    pub g: TerminalFn,
}

impl std::fmt::Debug for PdeProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PdeProblem")
            .field("name", &self.name)
            .field("sde", &self.sde)
            .finish_non_exhaustive()
    }
}

impl PdeProblem {
    pub fn d(&self) -> usize {
        self.sde.d
    }

    pub fn t0(&self) -> f64 {
        self.sde.t0
    }

    pub fn t_end(&self) -> f64 {
        self.sde.t_end
    }
}

fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// HJB instance: `σ = 2I`, `μ = 0`, `x0 = 0`, `f = ‖∇u‖²`, `g(x) = ln((1+‖x‖²)/2)`.
/// With `σ = 2I`, `∇u = z/2`, so `f = ‖z‖²/4`.
pub fn make_hjb(d: usize, t_end: f64) -> Result<PdeProblem> {
    if d == 0 {
        return Err(Error::invalid("HJB needs d ≥ 1"));
    }
    make_hjb_at(vec![0.0; d], t_end)
}

/// HJB instance started from an arbitrary `x0`.
pub fn make_hjb_at(x0: Vec<f64>, t_end: f64) -> Result<PdeProblem> {
    Ok(PdeProblem {
        name: "hjb".into(),
        sde: SdeSpec::constant(x0, t_end, 0.0, 2.0)?,
        f: Arc::new(|_, _, _, z| 0.25 * sq_norm(z)),
        f_partials: Arc::new(|_, _, _, z, fz| {
            for (o, zi) in fz.iter_mut().zip(z) {
                *o = 0.5 * zi;
            }
            0.0
        }),
        g: Arc::new(|x| ((1.0 + sq_norm(x)) / 2.0).ln()),
    })
}

/// `f ≡ 0`, `σ = I`, `μ = 0`, `g(x) = c·x`; exact solution `u(t, x) = c·x`, `σᵀ∇u = c`.
pub fn make_linear(c: Vec<f64>, x0: Vec<f64>, t_end: f64) -> Result<PdeProblem> {
    if c.len() != x0.len() {
        return Err(Error::invalid("coefficient and start point dimensions differ"));
    }
    Ok(PdeProblem {
        name: "linear".into(),
        sde: SdeSpec::constant(x0, t_end, 0.0, 1.0)?,
        f: Arc::new(|_, _, _, _| 0.0),
        f_partials: Arc::new(|_, _, _, _, fz| {
            fz.fill(0.0);
            0.0
        }),
        g: Arc::new(move |x| x.iter().zip(&c).map(|(a, b)| a * b).sum()),
    })
}

/// Allen–Cahn: `σ = √2·I`, `μ = 0`, `f = u − u³`, `g(x) = 1/(2 + 0.4‖x‖²)`.
pub fn make_allen_cahn(d: usize, t_end: f64) -> Result<PdeProblem> {
    if d == 0 {
        return Err(Error::invalid("Allen–Cahn needs d ≥ 1"));
    }
    Ok(PdeProblem {
        name: "allen-cahn".into(),
        sde: SdeSpec::constant(vec![0.0; d], t_end, 0.0, std::f64::consts::SQRT_2)?,
        f: Arc::new(|_, _, u, _| u - u * u * u),
        f_partials: Arc::new(|_, _, u, _, fz| {
            fz.fill(0.0);
            1.0 - 3.0 * u * u
        }),
        g: Arc::new(|x| 1.0 / (2.0 + 0.4 * sq_norm(x))),
    })
}

/// Black–Scholes with default risk: geometric Brownian motion (drift 0.02,
/// volatility 0.2) from `x0 = 100`, `g(x) = min_i x_i`,
/// `f = −(1−δ)Q(u)u − Ru` with `Q` piecewise linear between `(v_h, γ_h)` and `(v_l, γ_l)`.
pub fn make_black_scholes_default(d: usize, t_end: f64) -> Result<PdeProblem> {
    if d == 0 {
        return Err(Error::invalid("Black–Scholes needs d ≥ 1"));
    }
    const DELTA: f64 = 2.0 / 3.0;
    const R: f64 = 0.02;
    const V_H: f64 = 50.0;
    const V_L: f64 = 70.0;
    const GAMMA_H: f64 = 0.2;
    const GAMMA_L: f64 = 0.02;
    let slope = (GAMMA_H - GAMMA_L) / (V_H - V_L);
    let q = move |u: f64| -> (f64, f64) {
        if u < V_H {
            (GAMMA_H, 0.0)
        } else if u >= V_L {
            (GAMMA_L, 0.0)
        } else {
            (slope * (u - V_H) + GAMMA_H, slope)
        }
    };
    Ok(PdeProblem {
        name: "black-scholes-default".into(),
        sde: SdeSpec::gbm(vec![100.0; d], t_end, 0.02, 0.2)?,
        f: Arc::new(move |_, _, u, _| -(1.0 - DELTA) * q(u).0 * u - R * u),
        f_partials: Arc::new(move |_, _, u, _, fz| {
            fz.fill(0.0);
            let (qv, dq) = q(u);
            -(1.0 - DELTA) * (dq * u + qv) - R
        }),
        g: Arc::new(|x| x.iter().copied().fold(f64::INFINITY, f64::min)),
    })
}
