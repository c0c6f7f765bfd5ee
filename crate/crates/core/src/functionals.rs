//! The constrained variational structure: model parameters with their
//! exponent window, the energy `J`, the Pohozaev functional `P`, the
//! variational gradient, and the closed-form fiber reduction
//! `phi(t) = J(u_t, v_t)` with its unique projection time.

use crate::grid::Field;
use crate::scalar::GNConstants;
use crate::spectral::MixedOperator;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Relative tolerance for the projection-time root finder.
const PROJECTION_TIME_RTOL: f64 = 1e-12;

/// All model constants of the coupled system. The exponents `p`, `q` and
/// `r1 + r2` must lie strictly inside the mass-supercritical,
/// Sobolev-subcritical window `(2(1+3s)/(1+s), 2(1+s)/(1-s))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub s: f64,
    pub p: f64,
    pub q: f64,
    pub r1: f64,
    pub r2: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
}

impl ModelParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        s: f64,
        p: f64,
        q: f64,
        r1: f64,
        r2: f64,
        mu1: f64,
        mu2: f64,
        beta: f64,
        a: f64,
        b: f64,
    ) -> Result<Self> {
        let params = ModelParams {
            s,
            p,
            q,
            r1,
            r2,
            mu1,
            mu2,
            beta,
            a,
            b,
        };
        params.validate()?;
        Ok(params)
    }

    /// Lower end of the exponent window, `2(1+3s)/(1+s)`.
    pub fn window_lower(&self) -> f64 {
        2.0 * (1.0 + 3.0 * self.s) / (1.0 + self.s)
    }

    /// Upper end of the exponent window, `2_s = 2(1+s)/(1-s)`.
    pub fn window_upper(&self) -> f64 {
        2.0 * (1.0 + self.s) / (1.0 - self.s)
    }

    /// Checks every invariant, naming the first violated constraint.
    pub fn validate(&self) -> Result<()> {
        let fin = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!("{name} must be finite")))
            }
        };
        for (name, v) in [
            ("s", self.s),
            ("p", self.p),
            ("q", self.q),
            ("r1", self.r1),
            ("r2", self.r2),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("beta", self.beta),
            ("a", self.a),
            ("b", self.b),
        ] {
            fin(name, v)?;
        }
        if !(self.s > 0.5 && self.s < 1.0) {
            return Err(Error::InvalidParams(format!(
                "s must lie in (1/2, 1); got s = {}",
                self.s
            )));
        }
        for (name, v) in [("mu1", self.mu1), ("mu2", self.mu2), ("beta", self.beta)] {
            if v <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "{name} must be positive; got {v}"
                )));
            }
        }
        for (name, v) in [("r1", self.r1), ("r2", self.r2)] {
            if v <= 1.0 {
                return Err(Error::InvalidParams(format!(
                    "{name} must exceed 1; got {v}"
                )));
            }
        }
        for (name, v) in [("a", self.a), ("b", self.b)] {
            if v <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "prescribed mass {name} must be positive; got {v}"
                )));
            }
        }
        let lo = self.window_lower();
        let hi = self.window_upper();
        for (name, v) in [("p", self.p), ("q", self.q), ("r1+r2", self.r1 + self.r2)] {
            if v <= lo {
                return Err(Error::InvalidParams(format!(
                    "{name} must exceed 2(1+3s)/(1+s) = {lo}; got {v}"
                )));
            }
            if v >= hi {
                return Err(Error::InvalidParams(format!(
                    "{name} must stay below 2(1+s)/(1-s) = {hi}; got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Fiber exponent of the `p` term, `(1+s)(p-2)/2`.
    pub fn exp_p(&self) -> f64 {
        (1.0 + self.s) * (self.p - 2.0) / 2.0
    }

    pub fn exp_q(&self) -> f64 {
        (1.0 + self.s) * (self.q - 2.0) / 2.0
    }

    pub fn exp_coupling(&self) -> f64 {
        (1.0 + self.s) * (self.r1 + self.r2 - 2.0) / 2.0
    }

    /// Parameters with the two components' roles exchanged.
    pub fn swapped(&self) -> ModelParams {
        ModelParams {
            s: self.s,
            p: self.q,
            q: self.p,
            r1: self.r2,
            r2: self.r1,
            mu1: self.mu2,
            mu2: self.mu1,
            beta: self.beta,
            a: self.b,
            b: self.a,
        }
    }
}

/// A pair of fields on a shared grid.
#[derive(Debug, Clone)]
pub struct StatePair {
    pub u: Field,
    pub v: Field,
}

impl StatePair {
    pub fn new(u: Field, v: Field) -> Result<Self> {
        if u.grid() != v.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(StatePair { u, v })
    }

    pub fn masses(&self) -> (f64, f64) {
        (self.u.mass(), self.v.mass())
    }
}

/// The four scalar integrals and three exponents that make the fiber
/// reduction `phi(t)` a closed-form function of `t` alone.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FiberIntegrals {
    /// `kinetic(u) + kinetic(v)`.
    pub kinetic: f64,
    /// `(mu1/p) * integral |u|^p`.
    pub pot_p: f64,
    /// `(mu2/q) * integral |v|^q`.
    pub pot_q: f64,
    /// `beta * integral |u|^{r1} |v|^{r2}`.
    pub pot_coupling: f64,
    pub exp_p: f64,
    pub exp_q: f64,
    pub exp_coupling: f64,
    pub s: f64,
}

impl FiberIntegrals {
    /// Sum of the three potential terms.
    pub fn potential(&self) -> f64 {
        self.pot_p + self.pot_q + self.pot_coupling
    }

    fn terms(&self) -> [(f64, f64); 3] {
        [
            (self.pot_p, self.exp_p),
            (self.pot_q, self.exp_q),
            (self.pot_coupling, self.exp_coupling),
        ]
    }
}

/// Computes the four integrals of the fiber reduction for a state.
pub fn fiber_integrals(state: &StatePair, params: &ModelParams) -> Result<FiberIntegrals> {
    let op = MixedOperator::new(state.u.grid(), params.s)?;
    Ok(fiber_integrals_with(state, params, &op))
}

pub(crate) fn fiber_integrals_with(
    state: &StatePair,
    params: &ModelParams,
    op: &MixedOperator,
) -> FiberIntegrals {
    let kinetic = op.kinetic(&state.u) + op.kinetic(&state.v);
    let pot_p = params.mu1 / params.p * state.u.lp_integral(params.p);
    let pot_q = params.mu2 / params.q * state.v.lp_integral(params.q);
    let pot_coupling = params.beta
        * state
            .u
            .coupling_integral(&state.v, params.r1, params.r2)
            .expect("state pair shares a grid");
    let fi = FiberIntegrals {
        kinetic,
        pot_p,
        pot_q,
        pot_coupling,
        exp_p: params.exp_p(),
        exp_q: params.exp_q(),
        exp_coupling: params.exp_coupling(),
        s: params.s,
    };
    debug_assert!(fi.exp_p > 2.0 * params.s && fi.exp_q > 2.0 * params.s);
    fi
}

/// The energy
/// `J = (1/2)(kinetic(u)+kinetic(v)) - (mu1/p)|u|_p^p - (mu2/q)|v|_q^q
///  - beta * integral |u|^{r1}|v|^{r2}`.
///
/// Evaluated through the fiber integrals at `t = 1`, so the identity
/// `phi(1) = J` holds bitwise.
pub fn energy(state: &StatePair, params: &ModelParams) -> Result<f64> {
    Ok(fiber_value(&fiber_integrals(state, params)?, 1.0))
}

/// The Pohozaev functional; vanishes on the natural constraint manifold and
/// equals `phi'(1)` bitwise.
pub fn pohozaev(state: &StatePair, params: &ModelParams) -> Result<f64> {
    Ok(fiber_derivative(&fiber_integrals(state, params)?, 1.0))
}

/// `phi(t) = (1/2) A t^{2s} - B_p t^{e_p} - B_q t^{e_q} - B_r t^{e_r}`.
pub fn fiber_value(fi: &FiberIntegrals, t: f64) -> f64 {
    assert!(t > 0.0, "fiber scale must be positive, got {t}");
    let mut val = 0.5 * fi.kinetic * t.powf(2.0 * fi.s);
    for (b, e) in fi.terms() {
        val -= b * t.powf(e);
    }
    val
}

/// `phi'(t) = s A t^{2s-1} - sum e B t^{e-1}`.
pub fn fiber_derivative(fi: &FiberIntegrals, t: f64) -> f64 {
    assert!(t > 0.0, "fiber scale must be positive, got {t}");
    let mut val = fi.s * fi.kinetic * t.powf(2.0 * fi.s - 1.0);
    for (b, e) in fi.terms() {
        val -= e * b * t.powf(e - 1.0);
    }
    val
}

/// `phi''(t)`, the analytic second derivative.
pub fn fiber_second(fi: &FiberIntegrals, t: f64) -> f64 {
    assert!(t > 0.0, "fiber scale must be positive, got {t}");
    let s2 = 2.0 * fi.s;
    let mut val = fi.s * (s2 - 1.0) * fi.kinetic * t.powf(s2 - 2.0);
    for (b, e) in fi.terms() {
        val -= e * (e - 1.0) * b * t.powf(e - 2.0);
    }
    val
}

/// `phi''(1)` rewritten through `P = 0`:
/// `-sum B e (e - 2s)`, strictly negative inside the exponent window.
pub fn fiber_second_on_manifold(fi: &FiberIntegrals) -> f64 {
    let s2 = 2.0 * fi.s;
    -fi.terms()
        .iter()
        .map(|&(b, e)| b * e * (e - s2))
        .sum::<f64>()
}

/// The unique positive critical point of `phi`, i.e. the projection time
/// onto the Pohozaev manifold. Found by geometric bracketing followed by
/// safeguarded Newton with bisection fallback.
///
/// The sign law holds: `t0 < 1  <=>  phi'(1) < 0  <=>  P < 0`.
pub fn pohozaev_time(fi: &FiberIntegrals) -> Result<f64> {
    if fi.kinetic <= 0.0 {
        return Err(Error::Degenerate(
            "projection requires positive kinetic energy".into(),
        ));
    }
    if fi.potential() <= 0.0 {
        return Err(Error::Degenerate(
            "projection requires at least one positive potential integral".into(),
        ));
    }
    let s2 = 2.0 * fi.s;
    // phi'(t) / t^{2s-1}: strictly decreasing from sA > 0 to -infinity.
    let g = |t: f64| -> f64 {
        let mut val = fi.s * fi.kinetic;
        for (b, e) in fi.terms() {
            val -= e * b * t.powf(e - s2);
        }
        val
    };
    let dg = |t: f64| -> f64 {
        let mut val = 0.0;
        for (b, e) in fi.terms() {
            val -= e * (e - s2) * b * t.powf(e - s2 - 1.0);
        }
        val
    };

    let mut lo = 1.0;
    let mut hi = 1.0;
    if g(1.0) > 0.0 {
        for _ in 0..2000 {
            hi *= 2.0;
            if g(hi) <= 0.0 {
                break;
            }
            lo = hi;
        }
    } else {
        for _ in 0..2000 {
            lo *= 0.5;
            if g(lo) >= 0.0 {
                break;
            }
            hi = lo;
        }
    }
    if g(lo) < 0.0 || g(hi) > 0.0 {
        return Err(Error::NotBracketed(format!(
            "projection time not bracketed in [{lo}, {hi}]"
        )));
    }

    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let gt = g(t);
        if gt > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let slope = dg(t);
        let newton = if slope < 0.0 { t - gt / slope } else { f64::NAN };
        t = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= PROJECTION_TIME_RTOL * t {
            break;
        }
    }
    Ok(t)
}

/// Variational gradient of `J`, represented in the grid L² inner product:
/// the directional derivative of `J` at `state` along `(h, k)` equals
/// `<g_u, h> + <g_v, k>`.
pub fn gradient(state: &StatePair, params: &ModelParams) -> Result<StatePair> {
    let op = MixedOperator::new(state.u.grid(), params.s)?;
    Ok(gradient_with(state, params, &op))
}

pub(crate) fn gradient_with(
    state: &StatePair,
    params: &ModelParams,
    op: &MixedOperator,
) -> StatePair {
    let (nl_u, nl_v) = nonlinear_terms(state, params);
    let gu = op.apply(&state.u).axpy(-1.0, &nl_u);
    let gv = op.apply(&state.v).axpy(-1.0, &nl_v);
    StatePair { u: gu, v: gv }
}

/// The nonlinear parts of the two Euler–Lagrange operators:
/// `mu1 |u|^{p-2} u + beta r1 |u|^{r1-2} u |v|^{r2}` and its counterpart.
pub(crate) fn nonlinear_terms(state: &StatePair, params: &ModelParams) -> (Field, Field) {
    let grid = state.u.grid().clone();
    let n = grid.len();
    let mut nu = vec![0.0; n];
    let mut nv = vec![0.0; n];
    let uv = state.u.values();
    let vv = state.v.values();
    for i in 0..n {
        let u = uv[i];
        let v = vv[i];
        let au = u.abs();
        let av = v.abs();
        // |u|^{p-2} u written as sign(u) |u|^{p-1}; powers of |.| keep
        // negative intermediate iterates well-defined.
        let su = if u >= 0.0 { 1.0 } else { -1.0 };
        let sv = if v >= 0.0 { 1.0 } else { -1.0 };
        let self_u = params.mu1 * su * au.powf(params.p - 1.0);
        let self_v = params.mu2 * sv * av.powf(params.q - 1.0);
        let cross_u = params.beta * params.r1 * su * au.powf(params.r1 - 1.0) * av.powf(params.r2);
        let cross_v = params.beta * params.r2 * au.powf(params.r1) * sv * av.powf(params.r2 - 1.0);
        nu[i] = self_u + cross_u;
        nv[i] = self_v + cross_v;
    }
    (
        Field::from_values(&grid, nu).expect("nonlinear terms finite"),
        Field::from_values(&grid, nv).expect("nonlinear terms finite"),
    )
}

/// The coercivity constants of the manifold-restricted energy:
/// `tau = max{2s/((p-2)(1+s)), 2s/((q-2)(1+s)), 2s/((r1+r2-2)(1+s))}` and
/// `C0 = 1/2 - tau`, positive inside the exponent window.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CoercivityConstants {
    pub tau: f64,
    pub c0: f64,
}

pub fn coercivity_constants(params: &ModelParams) -> CoercivityConstants {
    let s = params.s;
    let ratio = |x: f64| 2.0 * s / ((x - 2.0) * (1.0 + s));
    let tau = ratio(params.p)
        .max(ratio(params.q))
        .max(ratio(params.r1 + params.r2));
    CoercivityConstants {
        tau,
        c0: 0.5 - tau,
    }
}

/// Kinetic-energy lower bound `delta_{(a,b)}` on the constrained manifold:
/// the minimum of the three case bounds, each of the form
/// `(3 coef mu C_H)^{-4s/D} (a+b)^{-(2sx - (x-2)(1+s))/D}` with
/// `D = (1+s)(x-2) - 4s` for `x` in `{p, q, r1+r2}`.
///
/// Each case uses the combined Gagliardo–Nirenberg constant for its own
/// exponent, so three [`GNConstants`] are required.
pub fn delta_lower_bound(
    params: &ModelParams,
    gn_p: &GNConstants,
    gn_q: &GNConstants,
    gn_r: &GNConstants,
) -> f64 {
    let s = params.s;
    let mass_sum = params.a + params.b;
    let case = |x: f64, strength: f64, with_x_divisor: bool, c_h: f64| -> f64 {
        let d = (1.0 + s) * (x - 2.0) - 4.0 * s;
        let coef = if with_x_divisor {
            (x - 2.0) * (1.0 + s) / (2.0 * s * x)
        } else {
            (x - 2.0) * (1.0 + s) / (2.0 * s)
        };
        let lead = (3.0 * coef * strength * c_h).powf(-4.0 * s / d);
        let mass_exp = (2.0 * s * x - (x - 2.0) * (1.0 + s)) / d;
        lead * mass_sum.powf(-mass_exp)
    };
    let v_p = case(params.p, params.mu1, true, gn_p.c_h);
    let v_q = case(params.q, params.mu2, true, gn_q.c_h);
    let v_r = case(params.r1 + params.r2, params.beta, false, gn_r.c_h);
    v_p.min(v_q).min(v_r)
}
