//! The coupled solver: minimisation of `J` over the Pohozaev manifold
//! intersected with the product of mass spheres, Lagrange multiplier
//! extraction, fiber path scans, threshold computation, and the nine-item
//! ground-state verification checklist.
//!
//! One iteration is (i) a Sobolev-preconditioned descent step on `J`,
//! (ii) exact mass renormalisation of both components, (iii) absolute value
//! to keep the pair nonnegative, (iv) every `project_every` steps — and on
//! every step once the energy stalls — a Pohozaev projection through the
//! unique fiber time, realised by trigonometric resampling.

use crate::functionals::{
    coercivity_constants, delta_lower_bound, fiber_derivative, fiber_integrals,
    fiber_integrals_with, fiber_second_on_manifold, fiber_value, pohozaev_time, FiberIntegrals,
    ModelParams, StatePair,
};
use crate::grid::{Field, Grid};
use crate::powers::PowExp;
use crate::rearrange::symmetrize_and_project;
use crate::scalar::{
    beta_threshold, gn_constants, mass_threshold, scalar_level, solve_scalar_base, GNConstants,
    ScalarGroundState,
};
use crate::spectral::{fiber_resample, forward, inverse, MixedOperator};
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

/// Descent and projection controls shared by the scalar and coupled solvers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Initial descent step for the preconditioned gradient.
    pub step_size: f64,
    /// Backtracking shrink factor.
    pub backtrack: f64,
    /// Relative energy-stagnation tolerance.
    pub energy_tol: f64,
    /// Pohozaev residual tolerance: `|P| <= residual_tol * s * A`.
    pub residual_tol: f64,
    /// Euler–Lagrange residual tolerance (relative L²).
    pub el_tol: f64,
    /// Iterations between Pohozaev projections.
    pub project_every: usize,
    /// Iterations between double-Steiner symmetrisations; 0 disables.
    pub steiner_every: usize,
    /// Seed controlling the initial data.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 30_000,
            step_size: 1.0,
            backtrack: 0.5,
            energy_tol: 1e-11,
            residual_tol: 1e-6,
            el_tol: 1e-5,
            project_every: 10,
            steiner_every: 0,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.project_every == 0 {
            return Err(Error::InvalidParams("project_every must be >= 1".into()));
        }
        for (name, v) in [
            ("step_size", self.step_size),
            ("energy_tol", self.energy_tol),
            ("residual_tol", self.residual_tol),
            ("el_tol", self.el_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive")));
            }
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::InvalidParams("backtrack must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One verification item: a measured value against its threshold.
#[derive(Debug, Clone, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Ordered list of verification items; serialises as a name-keyed map.
#[derive(Debug, Clone, Default)]
pub struct Checklist {
    pub items: Vec<CheckItem>,
}

impl Checklist {
    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }

    pub fn get(&self, name: &str) -> Option<&CheckItem> {
        self.items.iter().find(|i| i.name == name)
    }
}

#[derive(Serialize)]
struct CheckBody<'a> {
    pass: bool,
    value: f64,
    threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: &'a Option<String>,
}

impl Serialize for Checklist {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.items.len()))?;
        for item in &self.items {
            map.serialize_entry(
                &item.name,
                &CheckBody {
                    pass: item.pass,
                    value: item.value,
                    threshold: item.threshold,
                    note: &item.note,
                },
            )?;
        }
        map.end()
    }
}

/// Converged state pair with multipliers, level estimate and diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub params: ModelParams,
    pub grid: Grid,
    #[serde(skip)]
    pub state: StatePair,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub energy: f64,
    pub pohozaev: f64,
    /// Candidate for the ground-state level `C_{(a,b)}`.
    pub level_estimate: f64,
    pub masses: (f64, f64),
    pub checklist: Checklist,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
    pub residual_tol: f64,
    pub el_tol: f64,
    pub el_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Lagrange multipliers recovered from a state; a vanishing component
/// leaves its multiplier undefined.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Multipliers {
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
}

/// `lambda1 = [mu1 |u|_p^p + beta r1 I_r - K(u)] / |u|_2^2`, and the
/// analogous expression for `lambda2`; these make the Euler–Lagrange
/// residual orthogonal to `(u, 0)` and `(0, v)`.
pub fn lagrange_multipliers(state: &StatePair, params: &ModelParams) -> Result<Multipliers> {
    params.validate()?;
    let op = MixedOperator::new(state.u.grid(), params.s)?;
    let (mu, mv) = state.masses();
    let coupling = state
        .u
        .coupling_integral(&state.v, params.r1, params.r2)
        .expect("state pair shares a grid");
    let tiny = 1e-14;
    let lambda1 = (mu > tiny).then(|| {
        (params.mu1 * state.u.lp_integral(params.p) + params.beta * params.r1 * coupling
            - op.kinetic(&state.u))
            / mu
    });
    let lambda2 = (mv > tiny).then(|| {
        (params.mu2 * state.v.lp_integral(params.q) + params.beta * params.r2 * coupling
            - op.kinetic(&state.v))
            / mv
    });
    Ok(Multipliers { lambda1, lambda2 })
}

// ---------------------------------------------------------------------------
// coupled projected descent
// ---------------------------------------------------------------------------

struct Component {
    values: Vec<f64>,
    spectrum: Vec<Complex64>,
    mass_target: f64,
}

impl Component {
    fn new(grid: &Grid, field: Field, mass_target: f64) -> Result<Self> {
        let field = field.renormalized_to_mass(mass_target)?;
        let values = field.into_values();
        let spectrum = forward(grid, &values);
        Ok(Component {
            values,
            spectrum,
            mass_target,
        })
    }

    fn refresh(&mut self, grid: &Grid) {
        self.spectrum = forward(grid, &self.values);
    }

    fn field(&self, grid: &Grid) -> Field {
        Field::from_values(grid, self.values.clone()).expect("solver values stay finite")
    }

    fn raw_mass(&self, cell: f64) -> f64 {
        cell * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    /// Exact renormalisation to the target mass; errors on collapse.
    fn renormalize(&mut self, cell: f64, collapse_tol: f64) -> Result<()> {
        let m = self.raw_mass(cell);
        if m <= collapse_tol * self.mass_target {
            return Err(Error::Degenerate(format!(
                "component mass collapsed to {m:.3e} (target {})",
                self.mass_target
            )));
        }
        let c = (self.mass_target / m).sqrt();
        self.values.iter_mut().for_each(|v| *v *= c);
        self.spectrum.iter_mut().for_each(|v| *v *= c);
        Ok(())
    }
}

struct SweepExps {
    p_m1: PowExp,
    q_m1: PowExp,
    r1_m1: PowExp,
    r2_m1: PowExp,
}

/// Fused pointwise sweep: nonlinear gradient terms and the three potential
/// integrals in one pass.
struct SweepOut {
    nl_u: Vec<f64>,
    nl_v: Vec<f64>,
    lp_p: f64,
    lp_q: f64,
    coupling: f64,
}

fn nonlinear_sweep(
    u: &[f64],
    v: &[f64],
    params: &ModelParams,
    exps: &SweepExps,
    cell: f64,
) -> SweepOut {
    let n = u.len();
    let mut nl_u = vec![0.0; n];
    let mut nl_v = vec![0.0; n];
    let (mut sp, mut sq, mut sc) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let uu = u[i];
        let vv = v[i];
        let au = uu.abs();
        let av = vv.abs();
        let su = if uu >= 0.0 { 1.0 } else { -1.0 };
        let sv = if vv >= 0.0 { 1.0 } else { -1.0 };
        let up1 = exps.p_m1.apply(au); // |u|^{p-1}
        let vq1 = exps.q_m1.apply(av);
        let ur1 = exps.r1_m1.apply(au); // |u|^{r1-1}
        let vr1 = exps.r2_m1.apply(av);
        let ur = ur1 * au; // |u|^{r1}
        let vr = vr1 * av;
        sp += up1 * au;
        sq += vq1 * av;
        sc += ur * vr;
        nl_u[i] = params.mu1 * su * up1 + params.beta * params.r1 * su * ur1 * vr;
        nl_v[i] = params.mu2 * sv * vq1 + params.beta * params.r2 * ur * sv * vr1;
    }
    SweepOut {
        nl_u,
        nl_v,
        lp_p: cell * sp,
        lp_q: cell * sq,
        coupling: cell * sc,
    }
}

/// Potential integrals for a trial pair `(u + alpha du, v + alpha dv)`,
/// before mass renormalisation.
fn trial_potentials(
    u: &[f64],
    du: &[f64],
    v: &[f64],
    dv: &[f64],
    alpha: f64,
    exps_p: &PowExp,
    exps_q: &PowExp,
    exps_r1: &PowExp,
    exps_r2: &PowExp,
    cell: f64,
) -> (f64, f64, f64) {
    let (mut sp, mut sq, mut sc) = (0.0, 0.0, 0.0);
    for i in 0..u.len() {
        let au = (u[i] + alpha * du[i]).abs();
        let av = (v[i] + alpha * dv[i]).abs();
        sp += exps_p.apply(au);
        sq += exps_q.apply(av);
        sc += exps_r1.apply(au) * exps_r2.apply(av);
    }
    (cell * sp, cell * sq, cell * sc)
}

struct QuadForms {
    k: f64,
    k_ud: f64,
    k_dd: f64,
    m: f64,
    m_ud: f64,
    m_dd: f64,
}

fn quad_forms(area: f64, symbol: &[f64], u: &[Complex64], d: &[Complex64]) -> QuadForms {
    let (mut k, mut k_ud, mut k_dd, mut m, mut m_ud, mut m_dd) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&uc, &dc), &sig) in u.iter().zip(d).zip(symbol) {
        let un = uc.norm_sqr();
        let dn = dc.norm_sqr();
        let re = uc.re * dc.re + uc.im * dc.im;
        k += sig * un;
        k_ud += sig * re;
        k_dd += sig * dn;
        m += un;
        m_ud += re;
        m_dd += dn;
    }
    QuadForms {
        k: area * k,
        k_ud: area * k_ud,
        k_dd: area * k_dd,
        m: area * m,
        m_ud: area * m_ud,
        m_dd: area * m_dd,
    }
}

/// Computes the normalized ground state of the coupled system on
/// `S_a x S_b`: the minimiser of `J` restricted to the Pohozaev manifold
/// with both masses prescribed exactly.
pub fn solve_system(params: &ModelParams, grid: &Grid, opts: &SolverOptions) -> Result<SolveReport> {
    params.validate()?;
    opts.validate()?;
    let op = MixedOperator::new(grid, params.s)?;
    let cell = grid.cell_area;
    let n = grid.len();
    let area = cell * n as f64;
    let symbol = op.symbol();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut widths = || rng.gen_range(0.8..1.3);
    let gu = crate::synth::gaussian(grid, 1.0, 0.0, 0.0, widths(), widths());
    let gv = crate::synth::gaussian(grid, 1.0, 0.0, 0.0, widths(), widths());
    let mut cu = Component::new(grid, gu, params.a)?;
    let mut cv = Component::new(grid, gv, params.b)?;

    let exps = SweepExps {
        p_m1: PowExp::new(params.p - 1.0),
        q_m1: PowExp::new(params.q - 1.0),
        r1_m1: PowExp::new(params.r1 - 1.0),
        r2_m1: PowExp::new(params.r2 - 1.0),
    };
    let pow_p = PowExp::new(params.p);
    let pow_q = PowExp::new(params.q);
    let pow_r1 = PowExp::new(params.r1);
    let pow_r2 = PowExp::new(params.r2);

    let (e_p, e_q, e_r) = (params.exp_p(), params.exp_q(), params.exp_coupling());
    let mass_norm = (params.a + params.b).sqrt();

    let mut step = opts.step_size;
    let mut energy_prev = f64::INFINITY;
    let mut consec_stall = 0usize;
    let mut backtrack_fails = 0usize;
    let mut iterations = 0usize;
    let mut converged = false;
    let mut failure: Option<String> = None;

    for iter in 0..opts.max_iters {
        iterations = iter + 1;

        let sweep = nonlinear_sweep(&cu.values, &cv.values, params, &exps, cell);
        let nl_u_hat = forward(grid, &sweep.nl_u);
        let nl_v_hat = forward(grid, &sweep.nl_v);
        let k_u = op.kinetic_of_spectrum(&cu.spectrum);
        let k_v = op.kinetic_of_spectrum(&cv.spectrum);
        let pot_p = params.mu1 / params.p * sweep.lp_p;
        let pot_q = params.mu2 / params.q * sweep.lp_q;
        let pot_r = params.beta * sweep.coupling;
        let energy = 0.5 * (k_u + k_v) - pot_p - pot_q - pot_r;
        let a_kin = k_u + k_v;
        let pz = params.s * a_kin - e_p * pot_p - e_q * pot_q - e_r * pot_r;
        let p_rel = pz.abs() / (params.s * a_kin);

        // multipliers and Euler–Lagrange residual (spectral, no transforms)
        let lambda1 =
            (params.mu1 * sweep.lp_p + params.beta * params.r1 * sweep.coupling - k_u) / params.a;
        let lambda2 =
            (params.mu2 * sweep.lp_q + params.beta * params.r2 * sweep.coupling - k_v) / params.b;
        let mut res2 = 0.0;
        for ((&uc, &nlc), &sig) in cu.spectrum.iter().zip(&nl_u_hat).zip(symbol) {
            res2 += (uc * (sig + lambda1) - nlc).norm_sqr();
        }
        for ((&vc, &nlc), &sig) in cv.spectrum.iter().zip(&nl_v_hat).zip(symbol) {
            res2 += (vc * (sig + lambda2) - nlc).norm_sqr();
        }
        let el_rel = (area * res2).sqrt() / mass_norm;

        if (energy - energy_prev).abs() <= opts.energy_tol * energy.abs().max(1e-300) {
            consec_stall += 1;
        } else {
            consec_stall = 0;
        }
        energy_prev = energy;

        if consec_stall >= 5 && p_rel <= opts.residual_tol && el_rel <= opts.el_tol {
            converged = true;
            break;
        }

        // preconditioned gradient, tangential to each mass sphere
        let mut g_u: Vec<Complex64> = cu
            .spectrum
            .iter()
            .zip(symbol)
            .zip(&nl_u_hat)
            .map(|((&c, &sig), &nlc)| (c * sig - nlc) / (1.0 + sig))
            .collect();
        let mut g_v: Vec<Complex64> = cv
            .spectrum
            .iter()
            .zip(symbol)
            .zip(&nl_v_hat)
            .map(|((&c, &sig), &nlc)| (c * sig - nlc) / (1.0 + sig))
            .collect();
        for (g, comp) in [(&mut g_u, &cu), (&mut g_v, &cv)] {
            let dot: f64 = g
                .iter()
                .zip(&comp.spectrum)
                .map(|(gc, uc)| gc.re * uc.re + gc.im * uc.im)
                .sum::<f64>()
                * area;
            let shift = dot / comp.mass_target;
            g.iter_mut()
                .zip(&comp.spectrum)
                .for_each(|(gc, &uc)| *gc -= uc * shift);
        }
        let d_u_hat: Vec<Complex64> = g_u.iter().map(|c| -c).collect();
        let d_v_hat: Vec<Complex64> = g_v.iter().map(|c| -c).collect();
        let d_u = inverse(grid, &d_u_hat);
        let d_v = inverse(grid, &d_v_hat);
        let qf_u = quad_forms(area, symbol, &cu.spectrum, &d_u_hat);
        let qf_v = quad_forms(area, symbol, &cv.spectrum, &d_v_hat);

        let mut alpha = step;
        let mut accepted = None;
        for _ in 0..40 {
            let mt_u = qf_u.m + 2.0 * alpha * qf_u.m_ud + alpha * alpha * qf_u.m_dd;
            let mt_v = qf_v.m + 2.0 * alpha * qf_v.m_ud + alpha * alpha * qf_v.m_dd;
            if mt_u > 0.0 && mt_v > 0.0 {
                let c2u = cu.mass_target / mt_u;
                let c2v = cv.mass_target / mt_v;
                let kt = c2u * (qf_u.k + 2.0 * alpha * qf_u.k_ud + alpha * alpha * qf_u.k_dd)
                    + c2v * (qf_v.k + 2.0 * alpha * qf_v.k_ud + alpha * alpha * qf_v.k_dd);
                let (tp, tq, tc) = trial_potentials(
                    &cu.values, &d_u, &cv.values, &d_v, alpha, &pow_p, &pow_q, &pow_r1, &pow_r2,
                    cell,
                );
                let j_trial = 0.5 * kt
                    - params.mu1 / params.p * c2u.powf(params.p / 2.0) * tp
                    - params.mu2 / params.q * c2v.powf(params.q / 2.0) * tq
                    - params.beta
                        * c2u.powf(params.r1 / 2.0)
                        * c2v.powf(params.r2 / 2.0)
                        * tc;
                if j_trial <= energy {
                    accepted = Some((alpha, c2u.sqrt(), c2v.sqrt()));
                    break;
                }
            }
            alpha *= opts.backtrack;
        }

        match accepted {
            Some((alpha, c_u, c_v)) => {
                for (u, &d) in cu.values.iter_mut().zip(&d_u) {
                    *u = c_u * (*u + alpha * d);
                }
                for (uc, &dc) in cu.spectrum.iter_mut().zip(&d_u_hat) {
                    *uc = (*uc + dc * alpha) * c_u;
                }
                for (v, &d) in cv.values.iter_mut().zip(&d_v) {
                    *v = c_v * (*v + alpha * d);
                }
                for (vc, &dc) in cv.spectrum.iter_mut().zip(&d_v_hat) {
                    *vc = (*vc + dc * alpha) * c_v;
                }
                step = (alpha * 2.0).min(opts.step_size * 16.0);
                backtrack_fails = 0;
            }
            None => {
                backtrack_fails += 1;
                step = (step * 0.25).max(1e-8);
                if backtrack_fails >= 6 {
                    converged = p_rel <= opts.residual_tol && el_rel <= opts.el_tol;
                    if !converged {
                        failure = Some(format!(
                            "descent stalled at iteration {iterations}: |P|/(sA) = {p_rel:.3e}, \
                             EL residual = {el_rel:.3e}"
                        ));
                    }
                    break;
                }
            }
        }

        // nonnegativity
        let mut refreshed = false;
        if cu.values.iter().any(|&v| v < 0.0) {
            cu.values.iter_mut().for_each(|v| *v = v.abs());
            cu.refresh(grid);
            refreshed = true;
        }
        if cv.values.iter().any(|&v| v < 0.0) {
            cv.values.iter_mut().for_each(|v| *v = v.abs());
            cv.refresh(grid);
            refreshed = true;
        }
        if refreshed {
            if let Err(e) = cu.renormalize(cell, 1e-8).and(cv.renormalize(cell, 1e-8)) {
                failure = Some(format!("collapse at iteration {iterations}: {e}"));
                break;
            }
        }

        // double-Steiner symmetrisation cadence
        if opts.steiner_every > 0 && iterations % opts.steiner_every == 0 {
            let su = crate::rearrange::double_steiner(&cu.field(grid));
            let sv = crate::rearrange::double_steiner(&cv.field(grid));
            cu.values = su.into_values();
            cv.values = sv.into_values();
            cu.refresh(grid);
            cv.refresh(grid);
        }

        // Pohozaev projection
        let near_convergence = consec_stall >= 1;
        if iterations % opts.project_every == 0 || near_convergence {
            let state = StatePair::new(cu.field(grid), cv.field(grid)).expect("shared grid");
            let fi = fiber_integrals_with(&state, params, &op);
            if let Ok(t0) = pohozaev_time(&fi) {
                if (t0 - 1.0).abs() > 1e-10 {
                    let ru = fiber_resample(&state.u, t0, params.s)
                        .expect("projection scale is positive");
                    let rv = fiber_resample(&state.v, t0, params.s)
                        .expect("projection scale is positive");
                    cu.values = ru.field.into_values();
                    cv.values = rv.field.into_values();
                    cu.refresh(grid);
                    cv.refresh(grid);
                    if let Err(e) = cu.renormalize(cell, 1e-8).and(cv.renormalize(cell, 1e-8)) {
                        failure = Some(format!("collapse at iteration {iterations}: {e}"));
                        break;
                    }
                }
            }
        }
    }

    if !converged && failure.is_none() {
        failure = Some(format!(
            "no convergence within {} iterations",
            opts.max_iters
        ));
    }

    let state = StatePair::new(cu.field(grid), cv.field(grid))?;
    finish_report(state, params, grid, opts, iterations, converged, failure)
}

fn finish_report(
    state: StatePair,
    params: &ModelParams,
    grid: &Grid,
    opts: &SolverOptions,
    iterations: usize,
    converged: bool,
    failure: Option<String>,
) -> Result<SolveReport> {
    let fi = fiber_integrals(&state, params)?;
    let energy = fiber_value(&fi, 1.0);
    let pz = fiber_derivative(&fi, 1.0);
    let mult = lagrange_multipliers(&state, params)?;
    let el_residual = el_residual_pair(&state, params)?;
    let mut report = SolveReport {
        params: *params,
        grid: grid.clone(),
        state,
        lambda1: mult.lambda1,
        lambda2: mult.lambda2,
        energy,
        pohozaev: pz,
        level_estimate: energy,
        masses: (0.0, 0.0),
        checklist: Checklist::default(),
        iterations,
        converged,
        seed: opts.seed,
        residual_tol: opts.residual_tol,
        el_tol: opts.el_tol,
        el_residual,
        failure,
    };
    report.masses = report.state.masses();
    report.checklist = build_checklist(&report, params, None);
    Ok(report)
}

/// Relative L² norm of the Euler–Lagrange residual pair with least-squares
/// multipliers.
pub fn el_residual_pair(state: &StatePair, params: &ModelParams) -> Result<f64> {
    let op = MixedOperator::new(state.u.grid(), params.s)?;
    let mult = lagrange_multipliers(state, params)?;
    let (nl_u, nl_v) = crate::functionals::nonlinear_terms(state, params);
    let l1 = mult.lambda1.unwrap_or(0.0);
    let l2 = mult.lambda2.unwrap_or(0.0);
    let ru = op.apply(&state.u).axpy(-1.0, &nl_u).axpy(l1, &state.u);
    let rv = op.apply(&state.v).axpy(-1.0, &nl_v).axpy(l2, &state.v);
    let num = (ru.mass() + rv.mass()).sqrt();
    let den = (state.u.mass() + state.v.mass()).sqrt();
    Ok(num / den.max(1e-300))
}

// ---------------------------------------------------------------------------
// thresholds and verification
// ---------------------------------------------------------------------------

/// Scalar-problem constants needed to verify a coupled ground state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Thresholds {
    pub tau: f64,
    pub c0: f64,
    pub gn_p: GNConstants,
    pub gn_q: GNConstants,
    pub gn_r: GNConstants,
    /// Kinetic lower bound on the constrained manifold.
    pub delta: f64,
    /// Scalar level `m_{p,mu1,a}` (direct evaluation).
    pub m_p: f64,
    /// Scalar level `m_{q,mu2,b}` (direct evaluation).
    pub m_q: f64,
    pub m_p_closed: f64,
    pub m_q_closed: f64,
    /// Root of `m_{q,mu2,b} = m_{p,mu1,a}`.
    pub b_threshold: f64,
    /// Relative deviation of the printed alpha-form from the root.
    pub b_threshold_printed_dev: f64,
    /// Coupling threshold `beta_{q,mu2,b,r2}`; present when `r1 = 2`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub beta_threshold_q: Option<f64>,
    /// Coupling threshold `beta_{p,mu1,a,r1}`; present when `r2 = 2`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub beta_threshold_p: Option<f64>,
}

fn require_converged(base: &ScalarGroundState, what: &str) -> Result<()> {
    if base.converged {
        Ok(())
    } else {
        Err(Error::NoConvergence {
            iterations: base.iterations,
            detail: format!(
                "{what} base solve: pohozaev residual {:.2e}, EL residual {:.2e}",
                base.pohozaev_residual, base.el_residual
            ),
        })
    }
}

/// Runs the scalar pipeline for all exponents the verification needs:
/// bases at `p`, `q`, and `r1+r2`, the GN constants, the kinetic bound, the
/// two scalar levels, and the mass/coupling thresholds.
pub fn compute_thresholds(
    params: &ModelParams,
    grid: &Grid,
    opts: &SolverOptions,
) -> Result<Thresholds> {
    params.validate()?;
    let base_p = solve_scalar_base(params.s, params.p, grid, opts)?;
    require_converged(&base_p, "p")?;
    let base_q = if (params.q - params.p).abs() < 1e-12 {
        base_p.clone()
    } else {
        let b = solve_scalar_base(params.s, params.q, grid, opts)?;
        require_converged(&b, "q")?;
        b
    };
    let r_sum = params.r1 + params.r2;
    let base_r = if (r_sum - params.p).abs() < 1e-12 {
        base_p.clone()
    } else if (r_sum - params.q).abs() < 1e-12 {
        base_q.clone()
    } else {
        let b = solve_scalar_base(params.s, r_sum, grid, opts)?;
        require_converged(&b, "r1+r2")?;
        b
    };

    let gn_p = gn_constants(&base_p);
    let gn_q = gn_constants(&base_q);
    let gn_r = gn_constants(&base_r);
    let coercivity = coercivity_constants(params);
    let delta = delta_lower_bound(params, &gn_p, &gn_q, &gn_r);
    let level_p = scalar_level(&base_p, params.mu1, params.a)?;
    let level_q = scalar_level(&base_q, params.mu2, params.b)?;
    let b_thr = mass_threshold(&base_p, &base_q, params)?;

    let beta_threshold_q = if (params.r1 - 2.0).abs() < 1e-12 {
        Some(beta_threshold(&base_q, params.mu2, params.b, params.r2, false)?.beta)
    } else {
        None
    };
    let beta_threshold_p = if (params.r2 - 2.0).abs() < 1e-12 {
        Some(beta_threshold(&base_p, params.mu1, params.a, params.r1, false)?.beta)
    } else {
        None
    };

    Ok(Thresholds {
        tau: coercivity.tau,
        c0: coercivity.c0,
        gn_p,
        gn_q,
        gn_r,
        delta,
        m_p: level_p.direct,
        m_q: level_q.direct,
        m_p_closed: level_p.closed_form,
        m_q_closed: level_q.closed_form,
        b_threshold: b_thr.b,
        b_threshold_printed_dev: b_thr.rel_deviation,
        beta_threshold_q,
        beta_threshold_p,
    })
}

/// Whether the parameters satisfy one of the existence branches; returns a
/// short description when they do.
fn existence_branch(params: &ModelParams, thr: &Thresholds) -> Option<String> {
    let slack = 1.0 + 1e-9;
    let branch_i = params.b * slack >= thr.b_threshold
        && (params.r1 < 2.0
            || ((params.r1 - 2.0).abs() < 1e-12
                && thr.beta_threshold_q.map(|bt| params.beta > bt).unwrap_or(false)));
    if branch_i {
        return Some("branch (i): b above mass threshold, r1 <= 2".into());
    }
    let branch_ii = params.b <= thr.b_threshold * slack
        && (params.r2 < 2.0
            || ((params.r2 - 2.0).abs() < 1e-12
                && thr.beta_threshold_p.map(|bt| params.beta > bt).unwrap_or(false)));
    if branch_ii {
        return Some("branch (ii): b below mass threshold, r2 <= 2".into());
    }
    None
}

fn build_checklist(
    report: &SolveReport,
    params: &ModelParams,
    thresholds: Option<&Thresholds>,
) -> Checklist {
    let mut items = Vec::new();
    let state = &report.state;
    let fi = fiber_integrals(state, params).expect("report state is well-formed");
    let a_kin = fi.kinetic;
    let s_a = params.s * a_kin;

    let p_rel = if s_a > 0.0 {
        report.pohozaev.abs() / s_a
    } else {
        f64::INFINITY
    };
    items.push(CheckItem {
        name: "1_pohozaev_residual".into(),
        pass: p_rel <= report.residual_tol,
        value: p_rel,
        threshold: report.residual_tol,
        note: None,
    });

    let lmin = match (report.lambda1, report.lambda2) {
        (Some(l1), Some(l2)) => l1.min(l2),
        _ => f64::NEG_INFINITY,
    };
    items.push(CheckItem {
        name: "2_multipliers_positive".into(),
        pass: lmin > 0.0,
        value: lmin,
        threshold: 0.0,
        note: None,
    });

    let (mu, mv) = report.masses;
    let mass_err = ((mu - params.a) / params.a)
        .abs()
        .max(((mv - params.b) / params.b).abs());
    items.push(CheckItem {
        name: "3_mass_constraints".into(),
        pass: mass_err <= 1e-8,
        value: mass_err,
        threshold: 1e-8,
        note: None,
    });

    let phi2 = crate::functionals::fiber_second(&fi, 1.0);
    items.push(CheckItem {
        name: "4_fiber_concavity".into(),
        pass: phi2 < 0.0,
        value: phi2,
        threshold: 0.0,
        note: Some(format!(
            "manifold closed form: {:.6e}",
            fiber_second_on_manifold(&fi)
        )),
    });

    let c0 = coercivity_constants(params).c0;
    let coercivity_ratio = if a_kin > 0.0 {
        report.energy / (c0 * a_kin)
    } else {
        f64::NEG_INFINITY
    };
    items.push(CheckItem {
        name: "5_coercivity".into(),
        pass: coercivity_ratio >= 1.0 - 1e-6,
        value: coercivity_ratio,
        threshold: 1.0 - 1e-6,
        note: None,
    });

    if let Some(thr) = thresholds {
        items.push(CheckItem {
            name: "6_kinetic_lower_bound".into(),
            pass: a_kin >= thr.delta * (1.0 - 1e-6),
            value: a_kin,
            threshold: thr.delta,
            note: None,
        });

        let min_level = thr.m_p.min(thr.m_q);
        match existence_branch(params, thr) {
            Some(branch) => {
                items.push(CheckItem {
                    name: "7_level_below_scalar_levels".into(),
                    pass: report.level_estimate < min_level,
                    value: report.level_estimate,
                    threshold: min_level,
                    note: Some(branch),
                });
            }
            None => {
                items.push(CheckItem {
                    name: "7_level_below_scalar_levels".into(),
                    pass: true,
                    value: report.level_estimate,
                    threshold: min_level,
                    note: Some("no existence branch applies; informational only".into()),
                });
            }
        }
    }

    items.push(CheckItem {
        name: "8_el_residual".into(),
        pass: report.el_residual <= report.el_tol,
        value: report.el_residual,
        threshold: report.el_tol,
        note: None,
    });

    match symmetrize_and_project(state, params) {
        Ok((_, rr)) => {
            let rel_increase =
                (rr.energy_after - rr.energy_before) / rr.energy_before.abs().max(1e-300);
            let pass = rel_increase <= 1e-3 && rr.projection_time <= 1.0 + 1e-6;
            items.push(CheckItem {
                name: "9_steiner_energy_non_increase".into(),
                pass,
                value: rel_increase,
                threshold: 1e-3,
                note: Some(format!("re-projection time {:.8}", rr.projection_time)),
            });
        }
        Err(e) => {
            items.push(CheckItem {
                name: "9_steiner_energy_non_increase".into(),
                pass: false,
                value: f64::NAN.max(0.0), // placeholder when not evaluable
                threshold: 1e-3,
                note: Some(format!("not evaluable: {e}")),
            });
        }
    }

    Checklist { items }
}

/// The full nine-item verification of a solve report against the scalar
/// thresholds (condition (5.1), multiplier signs, manifold residuals,
/// coercivity and kinetic bounds, and the rearrangement test).
pub fn verify_ground_state(
    report: &SolveReport,
    params: &ModelParams,
    thresholds: &Thresholds,
) -> Checklist {
    build_checklist(report, params, Some(thresholds))
}

// ---------------------------------------------------------------------------
// fiber path scan
// ---------------------------------------------------------------------------

/// Energies along the fiber path of a state over a geometric `t`-ladder.
#[derive(Debug, Clone, Serialize)]
pub struct PathScan {
    pub t_values: Vec<f64>,
    pub energies: Vec<f64>,
    pub derivatives: Vec<f64>,
    pub argmax_t: f64,
    pub max_energy: f64,
}

/// Scans `phi(t)` over `[t_lo, t_hi]`. The scalar reduction is exact, so no
/// resampling is involved. Endpoint admissibility follows the path class:
/// the left endpoint must lie in the low-kinetic set (when `delta` is
/// supplied) and the right endpoint must have negative Pohozaev value.
pub fn fiber_path_scan(
    state: &StatePair,
    params: &ModelParams,
    t_lo: f64,
    t_hi: f64,
    n: usize,
    delta: Option<f64>,
) -> Result<PathScan> {
    if !(t_lo > 0.0 && t_hi > t_lo) {
        return Err(Error::InvalidScale(t_lo));
    }
    if n < 2 {
        return Err(Error::InvalidParams("scan needs at least 2 points".into()));
    }
    let fi = fiber_integrals(state, params)?;
    if let Some(delta) = delta {
        let kin_lo = fi.kinetic * t_lo.powf(2.0 * params.s);
        if kin_lo > 0.5 * delta {
            return Err(Error::PathEndpoint {
                endpoint: "t_lo",
                detail: format!(
                    "kinetic at t_lo is {kin_lo:.6e}, above delta/2 = {:.6e}",
                    0.5 * delta
                ),
            });
        }
    }
    // P(u_t, v_t) = t phi'(t), so the sign at t_hi is the sign of phi'.
    let dphi_hi = fiber_derivative(&fi, t_hi);
    if dphi_hi >= 0.0 {
        return Err(Error::PathEndpoint {
            endpoint: "t_hi",
            detail: format!("P at t_hi is nonnegative ({:.6e})", t_hi * dphi_hi),
        });
    }

    let ratio = (t_hi / t_lo).powf(1.0 / (n - 1) as f64);
    let mut t_values = Vec::with_capacity(n);
    let mut energies = Vec::with_capacity(n);
    let mut derivatives = Vec::with_capacity(n);
    let mut t = t_lo;
    let mut argmax_t = t_lo;
    let mut max_energy = f64::NEG_INFINITY;
    for i in 0..n {
        if i == n - 1 {
            t = t_hi;
        }
        let e = fiber_value(&fi, t);
        t_values.push(t);
        energies.push(e);
        derivatives.push(fiber_derivative(&fi, t));
        if e > max_energy {
            max_energy = e;
            argmax_t = t;
        }
        t *= ratio;
    }
    Ok(PathScan {
        t_values,
        energies,
        derivatives,
        argmax_t,
        max_energy,
    })
}

// ---------------------------------------------------------------------------
// multi-seed driver
// ---------------------------------------------------------------------------

/// Reports from independent solves at several seeds, merged in seed order.
#[derive(Debug)]
pub struct MultiSeedReport {
    pub reports: Vec<SolveReport>,
    /// Index of the lowest-level converged run.
    pub best: usize,
    /// Relative spread of converged levels around the best one.
    pub level_spread: f64,
}

/// Runs one solve per seed concurrently and merges deterministically.
pub fn solve_system_multi(
    params: &ModelParams,
    grid: &Grid,
    opts: &SolverOptions,
    seeds: &[u64],
) -> Result<MultiSeedReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidParams("need at least one seed".into()));
    }
    let mut reports: Vec<Option<Result<SolveReport>>> = Vec::new();
    reports.resize_with(seeds.len(), || None);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (i, &seed) in seeds.iter().enumerate() {
            let mut o = opts.clone();
            o.seed = seed;
            handles.push((i, scope.spawn(move || solve_system(params, grid, &o))));
        }
        for (i, h) in handles {
            reports[i] = Some(h.join().expect("solver thread panicked"));
        }
    });
    let reports: Vec<SolveReport> = reports
        .into_iter()
        .map(|r| r.expect("all seeds ran"))
        .collect::<std::result::Result<_, _>>()?;

    let converged: Vec<usize> = (0..reports.len())
        .filter(|&i| reports[i].converged)
        .collect();
    let pool = if converged.is_empty() {
        (0..reports.len()).collect::<Vec<_>>()
    } else {
        converged
    };
    let best = *pool
        .iter()
        .min_by(|&&i, &&j| {
            reports[i]
                .level_estimate
                .partial_cmp(&reports[j].level_estimate)
                .unwrap()
        })
        .unwrap();
    let lo = pool
        .iter()
        .map(|&i| reports[i].level_estimate)
        .fold(f64::INFINITY, f64::min);
    let hi = pool
        .iter()
        .map(|&i| reports[i].level_estimate)
        .fold(f64::NEG_INFINITY, f64::max);
    let level_spread = (hi - lo) / lo.abs().max(1e-300);
    Ok(MultiSeedReport {
        reports,
        best,
        level_spread,
    })
}
