//! Second-order flow of the bulk couplings `(g_j, ν_j)` and of the
//! observable coefficients `λ_{o,j}, λ_{x,j}`, together with critical-point
//! location by shooting in `ν_0`.
//!
//! One step reads
//!
//! ```text
//! g_{j+1} = g_j − β_j g_j²
//! ν_{j+1} = ν_j + η′_j g_j,                 η′_j = (n+2) Γ_{j+1}(0)
//! λ_{j+1} = λ_j (1 − δ_j),                  δ_j = (ν_j + η′_j g_j) Γ^{(1)}_{j+1} + η′_j g_j w^{(1)}_j
//! ```
//!
//! The ν-direction is unstable: a perturbation of `ν_0` is carried unchanged
//! while the admissible domain shrinks like `L^{−(2−η)j} r_j`. A forward
//! trajectory computed in double precision therefore leaves the domain after
//! a few dozen scales even when started from the closest float to `ν_c`.
//! [`find_critical_nu`] uses the direction of that exit; [`critical_trajectory`]
//! builds the surviving trajectory directly by summing `ν_j = −Σ_{k≥j} η′_k g_k`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frd::ScaleTables;

/// Default number of scales of a flow.
pub const DEFAULT_J_MAX: usize = 400;

/// Default bisection tolerance in `ν_0`.
pub const DEFAULT_NU_TOL: f64 = 1e-12;

/// Coupling constants at one scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingState {
    pub j: usize,
    pub g: f64,
    /// Reference coupling `g̃_j` entering the domain bound: follows the
    /// `g`-recursion at the upper critical dimension and stays at `g_0` above it.
    pub g_tilde: f64,
    pub nu: f64,
    pub lambda_o: f64,
    pub lambda_x: f64,
    pub u: f64,
}

impl CouplingState {
    pub fn initial(g: f64, nu: f64) -> Self {
        Self { j: 0, g, g_tilde: g, nu, lambda_o: 1.0, lambda_x: 1.0, u: 0.0 }
    }
}

/// Per-scale coefficients of the step map, already extended to `0..j_max`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowParams {
    pub n: usize,
    pub d: usize,
    pub eta: f64,
    pub l: usize,
    /// `Γ_{j+1}(0)` at index `j`.
    pub gamma_zero: Vec<f64>,
    /// `Γ^{(1)}_{j+1}` at index `j`.
    pub gamma_sum: Vec<f64>,
    /// `w^{(1)}_j` at index `j`.
    pub w_sum: Vec<f64>,
    /// `β_j` at index `j`.
    pub beta: Vec<f64>,
    /// Number of scales whose coefficients come from computed tables; the
    /// rest are extrapolated.
    pub computed: usize,
    pub j_max: usize,
    /// Per-scale ratios continuing `Γ(0)`, `Γ^{(1)}` and `β` beyond the
    /// given coefficients.
    pub extension: [f64; 3],
    /// Constant `C_D` of the domain bound.
    pub domain_constant: f64,
    /// Multiple of the domain bound that counts as divergence.
    pub safety: f64,
    /// Consecutive out-of-domain scales needed to declare divergence.
    pub patience: usize,
}

/// Ratio of the last two entries, used for geometric extrapolation.
fn last_ratio(v: &[f64]) -> Option<f64> {
    match v {
        [.., a, b] if *a != 0.0 && a.is_finite() && b.is_finite() => Some(b / a),
        _ => None,
    }
}

impl FlowParams {
    /// Builds the coefficients from computed tables and extends them to
    /// `j_max` scales. For a massless operator `Γ(0)` and `Γ^{(1)}` continue
    /// with their exact scaling ratios `L^{−(d−2+η)}` and `L^{2−η}`, otherwise
    /// with the last measured ratios. `β_j` is frozen at its last value at the
    /// upper critical dimension and continues geometrically (ratio clamped
    /// below 1) above it.
    pub fn from_tables(tables: &ScaleTables, n: usize, j_max: usize) -> Result<Self> {
        let computed = tables.levels();
        if computed < 2 {
            return Err(Error::InvalidParameter("flow tables need at least two scales".into()));
        }
        let eta = tables.op.eta;
        let beta = tables.betas(n);
        let mut w_sum = tables.w_sum.clone();
        w_sum.truncate(computed);
        let mut p = Self::assemble(n, tables.d, eta, tables.l, tables.gamma_zero.clone(), tables.gamma_sum.clone(), w_sum, beta, computed)?;
        if tables.op.a_mass == 0.0 {
            let l = tables.l as f64;
            p.extension[0] = l.powf(-(tables.d as f64 - 2.0 + eta));
            p.extension[1] = l.powf(2.0 - eta);
        }
        Ok(p.with_j_max(j_max))
    }

    /// Coefficients given explicitly for every scale `0..j_max`, where
    /// `j_max` is the common length of the sequences.
    #[allow(clippy::too_many_arguments)]
    pub fn from_sequences(
        n: usize,
        d: usize,
        eta: f64,
        l: usize,
        gamma_zero: Vec<f64>,
        gamma_sum: Vec<f64>,
        w_sum: Vec<f64>,
        beta: Vec<f64>,
    ) -> Result<Self> {
        let len = gamma_zero.len();
        Self::assemble(n, d, eta, l, gamma_zero, gamma_sum, w_sum, beta, len)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        n: usize,
        d: usize,
        eta: f64,
        l: usize,
        gamma_zero: Vec<f64>,
        gamma_sum: Vec<f64>,
        w_sum: Vec<f64>,
        beta: Vec<f64>,
        computed: usize,
    ) -> Result<Self> {
        let j_max = gamma_zero.len();
        if j_max == 0 || [gamma_sum.len(), w_sum.len(), beta.len()].iter().any(|&m| m != j_max) {
            return Err(Error::InvalidParameter("flow coefficient sequences must share a nonzero length".into()));
        }
        if n == 0 || l < 2 {
            return Err(Error::InvalidParameter(format!("invalid flow parameters n = {n}, L = {l}")));
        }
        if [&gamma_zero, &gamma_sum, &w_sum, &beta].iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidParameter("flow coefficients must be finite".into()));
        }
        let extension = [
            last_ratio(&gamma_zero).unwrap_or(0.0).clamp(0.0, 1.0),
            last_ratio(&gamma_sum).unwrap_or(1.0).max(0.0),
            if is_upper_critical(d, eta) { 1.0 } else { last_ratio(&beta).unwrap_or(0.0).clamp(0.0, 0.999) },
        ];
        Ok(Self {
            n,
            d,
            eta,
            l,
            gamma_zero,
            gamma_sum,
            w_sum,
            beta,
            computed,
            j_max,
            extension,
            domain_constant: 10.0,
            safety: 10.0,
            patience: 3,
        })
    }

    /// `η′_j = (n+2) Γ_{j+1}(0)`.
    pub fn eta_prime(&self, j: usize) -> f64 {
        (self.n as f64 + 2.0) * self.gamma_zero[j]
    }

    /// Whether `d = 4 − 2η`.
    pub fn at_upper_critical(&self) -> bool {
        is_upper_critical(self.d, self.eta)
    }

    /// Exponent `d − 4 + 2η` of the decay factor `r_j = L^{−(d−4+2η)j}`.
    pub fn r_exponent(&self) -> f64 {
        (self.d as f64 - 4.0 + 2.0 * self.eta).max(0.0)
    }

    /// Limiting `β_∞`, taken as the last computed value.
    pub fn beta_inf(&self) -> f64 {
        self.beta[self.computed.max(1) - 1]
    }

    /// Natural log of the domain bound `safety·C_D·L^{−(2−η)j} r_j g̃_j`.
    pub fn log_domain_bound(&self, j: usize, g_tilde: f64) -> f64 {
        let ln_l = (self.l as f64).ln();
        (self.safety * self.domain_constant).ln() - ((2.0 - self.eta) + self.r_exponent()) * j as f64 * ln_l + g_tilde.ln()
    }

    /// First scale at which `Γ^{(1)}` overflows or `Γ(0)` leaves the normal
    /// range; the observable coefficients are held fixed from there on.
    pub fn horizon(&self) -> usize {
        (0..self.j_max)
            .find(|&j| !self.gamma_sum[j].is_finite() || (self.gamma_zero[j] != 0.0 && !self.gamma_zero[j].is_normal()))
            .unwrap_or(self.j_max)
    }

    /// Copy with a different number of scales, extending the last ratios.
    pub fn with_j_max(&self, j_max: usize) -> Self {
        let mut out = self.clone();
        let extend = |v: &mut Vec<f64>, ratio: f64| {
            while v.len() < j_max {
                let last = *v.last().unwrap();
                v.push(last * ratio);
            }
            v.truncate(j_max);
        };
        let [rz, rs, rb] = self.extension;
        extend(&mut out.gamma_zero, rz);
        extend(&mut out.gamma_sum, rs);
        extend(&mut out.beta, rb);
        while out.w_sum.len() < j_max {
            let j = out.w_sum.len();
            out.w_sum.push(out.w_sum[j - 1] + out.gamma_sum[j - 1]);
        }
        out.w_sum.truncate(j_max);
        out.j_max = j_max;
        out.computed = self.computed.min(j_max);
        out
    }
}

fn is_upper_critical(d: usize, eta: f64) -> bool {
    (d as f64 - (4.0 - 2.0 * eta)).abs() < 1e-12
}

/// How a trajectory ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    DivergedUp,
    DivergedDown,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Completed => "completed",
            Self::DivergedUp => "diverged_up",
            Self::DivergedDown => "diverged_down",
        })
    }
}

/// Sequence of states produced by the step map.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub states: Vec<CouplingState>,
    pub termination: Termination,
}

impl FlowTrajectory {
    pub fn last(&self) -> &CouplingState {
        self.states.last().expect("trajectory holds its initial state")
    }

    /// Side of the exit: the termination itself when the flow diverged, the
    /// sign of the final `ν` otherwise.
    pub fn direction(&self) -> Termination {
        match self.termination {
            Termination::Completed if self.last().nu < 0.0 => Termination::DivergedDown,
            Termination::Completed => Termination::DivergedUp,
            t => t,
        }
    }

    /// Writes `j, g, nu, lambda_o, lambda_x, beta_j, eta'_j` rows.
    pub fn write_csv(&self, params: &FlowParams, w: &mut impl Write) -> Result<()> {
        writeln!(w, "j,g,nu,lambda_o,lambda_x,beta_j,eta'_j")?;
        for s in &self.states {
            let (b, e) = if s.j < params.j_max { (params.beta[s.j], params.eta_prime(s.j)) } else { (f64::NAN, f64::NAN) };
            writeln!(w, "{},{:e},{:e},{:e},{:e},{:e},{:e}", s.j, s.g, s.nu, s.lambda_o, s.lambda_x, b, e)?;
        }
        Ok(())
    }
}

/// `δ_j` of the observable recursion at the given state.
pub fn lambda_increment(state: &CouplingState, params: &FlowParams) -> f64 {
    let j = state.j;
    let eg = params.eta_prime(j) * state.g;
    (state.nu + eg) * params.gamma_sum[j] + eg * params.w_sum[j]
}

/// One application of the step map. `state.j` must be below `params.j_max`.
pub fn step(state: &CouplingState, params: &FlowParams) -> CouplingState {
    let j = state.j;
    let b = params.beta[j];
    let ep = params.eta_prime(j);
    let g0 = params.gamma_zero[j];
    let n = params.n as f64;
    let delta = if j < params.horizon() { lambda_increment(state, params) } else { 0.0 };
    let g_tilde = if params.at_upper_critical() { state.g_tilde - b * state.g_tilde * state.g_tilde } else { state.g_tilde };
    CouplingState {
        j: j + 1,
        g: state.g - b * state.g * state.g,
        g_tilde,
        nu: state.nu + ep * state.g,
        lambda_o: state.lambda_o * (1.0 - delta),
        lambda_x: state.lambda_x * (1.0 - delta),
        u: state.u + 0.5 * n * state.nu * g0 + 0.25 * n * (n + 2.0) * state.g * g0 * g0,
    }
}

fn out_of_domain(state: &CouplingState, params: &FlowParams) -> Option<Termination> {
    if !(state.g > 0.0) {
        return Some(Termination::DivergedDown);
    }
    if state.nu == 0.0 {
        return None;
    }
    (state.nu.abs().ln() > params.log_domain_bound(state.j, state.g_tilde))
        .then(|| if state.nu > 0.0 { Termination::DivergedUp } else { Termination::DivergedDown })
}

/// Iterates the step map from `initial` until `params.j_max` or divergence.
pub fn run_flow(initial: CouplingState, params: &FlowParams) -> FlowTrajectory {
    let mut states = vec![initial];
    let mut streak = (None, 0usize);
    let mut s = initial;
    while s.j < params.j_max {
        s = step(&s, params);
        states.push(s);
        match out_of_domain(&s, params) {
            Some(Termination::DivergedDown) if !(s.g > 0.0) => {
                return FlowTrajectory { states, termination: Termination::DivergedDown };
            }
            Some(t) => {
                streak = if streak.0 == Some(t) { (Some(t), streak.1 + 1) } else { (Some(t), 1) };
                if streak.1 >= params.patience {
                    return FlowTrajectory { states, termination: t };
                }
            }
            None => streak = (None, 0),
        }
    }
    FlowTrajectory { states, termination: Termination::Completed }
}

/// Result of the shooting driver.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub nu_c: f64,
    pub bracket: (f64, f64),
    pub iterations: usize,
    /// Largest exit scale met during bisection; trajectories near `ν_c` leave
    /// the domain no later than this, so `ν_c` does not move when `j_max`
    /// grows beyond it.
    pub stabilisation_scale: usize,
    /// Whether the last trajectory inside the bracket stayed bounded up to
    /// `j_max`.
    pub survived: bool,
}

/// Bisection in `ν_0` on the exit direction of the flow.
pub fn find_critical_nu(params: &FlowParams, g0: f64, nu_bracket: (f64, f64), tol: f64) -> Result<CriticalPoint> {
    if !(g0 > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("need g0 > 0 and tol > 0, got g0 = {g0}, tol = {tol}")));
    }
    let (mut lo, mut hi) = if nu_bracket.0 <= nu_bracket.1 { nu_bracket } else { (nu_bracket.1, nu_bracket.0) };
    let run = |nu: f64| run_flow(CouplingState::initial(g0, nu), params);
    let (tl, th) = (run(lo), run(hi));
    let (dl, dh) = (tl.direction(), th.direction());
    if dl == dh {
        if tl.termination == Termination::Completed && th.termination == Termination::Completed {
            return Err(Error::Inconclusive { j_max: params.j_max, nu0: 0.5 * (lo + hi) });
        }
        return Err(Error::BracketInvalid(dl.to_string()));
    }
    let up_is_high = dh == Termination::DivergedUp;
    let mut stabilisation_scale = tl.last().j.max(th.last().j);
    let mut survived = false;
    let mut iterations = 0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let t = run(mid);
        stabilisation_scale = stabilisation_scale.max(t.last().j);
        survived = t.termination == Termination::Completed;
        if (t.direction() == Termination::DivergedUp) == up_is_high {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    Ok(CriticalPoint { nu_c: 0.5 * (lo + hi), bracket: (lo, hi), iterations, stabilisation_scale, survived })
}

/// First-order estimate `−Σ_j η′_j g_j` of `ν_c` with the `g`-flow inserted.
pub fn first_order_nu_c(params: &FlowParams, g0: f64) -> f64 {
    let g = g_sequence(params, g0);
    -(0..params.j_max).map(|j| params.eta_prime(j) * g[j]).sum::<f64>()
}

fn g_sequence(params: &FlowParams, g0: f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(params.j_max + 1);
    g.push(g0);
    for j in 0..params.j_max {
        let x = g[j];
        g.push(x - params.beta[j] * x * x);
    }
    g
}

/// The trajectory on the stable manifold: `g_j` from its recursion and
/// `ν_j = −Σ_{k≥j} η′_k g_k`, with the sum beyond `j_max` closed by a
/// geometric tail. Successive states satisfy the step map up to rounding.
pub fn critical_trajectory(params: &FlowParams, g0: f64, lambda_o: f64, lambda_x: f64) -> Result<FlowTrajectory> {
    if !(g0 > 0.0) {
        return Err(Error::InvalidParameter(format!("g0 = {g0} must be positive")));
    }
    let m = params.j_max;
    let g = g_sequence(params, g0);
    if g.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidParameter(format!("g-flow from g0 = {g0} leaves (0, ∞)")));
    }
    let inc: Vec<f64> = (0..m).map(|j| params.eta_prime(j) * g[j]).collect();
    let ratio = last_ratio(&inc).unwrap_or(0.0).clamp(0.0, 0.999);
    let mut nu = vec![0.0; m + 1];
    nu[m] = -inc[m - 1] * ratio / (1.0 - ratio);
    for j in (0..m).rev() {
        nu[j] = nu[j + 1] - inc[j];
    }
    let mut states = Vec::with_capacity(m + 1);
    let mut s = CouplingState { j: 0, g: g0, g_tilde: g0, nu: nu[0], lambda_o, lambda_x, u: 0.0 };
    states.push(s);
    for j in 0..m {
        let mut next = step(&s, params);
        next.g = g[j + 1];
        next.nu = nu[j + 1];
        states.push(next);
        s = next;
    }
    Ok(FlowTrajectory { states, termination: Termination::Completed })
}

/// Limit of the observable coefficient with an estimate of its accuracy.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LambdaLimit {
    pub value: f64,
    /// `|λ_{j_max} − λ_∞|`.
    pub residual: f64,
    /// Fitted decay of the increments: the ratio for geometric tails, the
    /// power for algebraic ones.
    pub decay: f64,
    pub algebraic: bool,
    /// Disagreement between two extrapolation windows.
    pub spread: f64,
}

/// Extrapolates the partial products `λ_j` to `j → ∞`.
///
/// The tail `Σ_{k>J}(λ_{k+1} − λ_k)` is estimated from the last increments:
/// a geometric sum when their ratio stays well below one, otherwise a power
/// law `d_k ∝ k^{−p}` fitted over the last decade of scales.
pub fn lambda_limit(lambda: &[f64]) -> Result<LambdaLimit> {
    let m = lambda.len();
    if m < 4 {
        return Err(Error::InvalidParameter("need at least four partial products".into()));
    }
    if lambda.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonConvergent("partial products are not finite".into()));
    }
    let last = lambda[m - 1];
    let diffs: Vec<f64> = lambda.windows(2).map(|w| w[1] - w[0]).collect();
    let k = diffs.len();
    let (d1, d0) = (diffs[k - 1], diffs[k - 2]);
    let scale = lambda.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    if d1.abs() <= f64::EPSILON * scale {
        return Ok(LambdaLimit { value: last, residual: d1.abs(), decay: 0.0, algebraic: false, spread: 0.0 });
    }
    let ratio = if d0 != 0.0 { d1 / d0 } else { f64::INFINITY };
    if ratio.abs() < 0.9 {
        let tail = d1 * ratio / (1.0 - ratio);
        return Ok(LambdaLimit { value: last + tail, residual: tail.abs(), decay: ratio, algebraic: false, spread: 0.0 });
    }
    let far = k.saturating_sub(1 + k / 10).max(1);
    let (a, b) = (diffs[far - 1], d1);
    if a == 0.0 || a.signum() != b.signum() {
        return Err(Error::NonConvergent(format!("increments change sign; last partial product {last}, last increment {d1:e}")));
    }
    let p = -(b / a).ln() / ((k as f64) / far as f64).ln();
    if !(p > 1.0) {
        return Err(Error::NonConvergent(format!(
            "increments decay like j^-{p:.3}; last partial product {last}, last increment {d1:e}"
        )));
    }
    let tail = d1 * k as f64 / (p - 1.0);
    Ok(LambdaLimit { value: last + tail, residual: tail.abs(), decay: p, algebraic: true, spread: 0.0 })
}

/// `λ_{o,∞}` of a completed trajectory.
///
/// Above the upper critical dimension the increments decay geometrically and
/// [`lambda_limit`] applies. At the upper critical dimension the leading parts
/// of `δ_j` cancel on the critical trajectory and the remainder settles to
/// `δ_j ≈ K g_j²`. The tail product is then `exp(−K Σ_{k≥J} g_k²)`, with the
/// sum taken along the `g`-flow continued at frozen `β_∞`. `K` is read off at
/// the last scale; the change of the result when it is read at `3J/4`
/// instead is reported as the spread.
pub fn lambda_limit_flow(trajectory: &FlowTrajectory, params: &FlowParams) -> Result<LambdaLimit> {
    if trajectory.termination != Termination::Completed {
        return Err(Error::InvalidParameter(format!("trajectory {} before j_max", trajectory.termination)));
    }
    let end = params.horizon().min(trajectory.states.len() - 1);
    let lambda: Vec<f64> = trajectory.states[..=end].iter().map(|s| s.lambda_o).collect();
    let b = params.beta_inf();
    if !params.at_upper_critical() || !(b > 0.0) {
        return lambda_limit(&lambda);
    }
    if end < 8 {
        return Err(Error::InvalidParameter("need at least eight scales below the horizon".into()));
    }
    let ratio = |j: usize| {
        let s = &trajectory.states[j];
        lambda_increment(s, params) / (s.g * s.g)
    };
    let mut tail = 0.0;
    let mut x = trajectory.states[end].g;
    for _ in 0..1_000_000 {
        tail += x * x;
        x -= b * x * x;
    }
    tail += x / b;
    let last = lambda[end];
    let k = ratio(end - 1);
    let value = last * (-k * tail).exp();
    let coarse = last * (-ratio(3 * end / 4) * tail).exp();
    if !value.is_finite() {
        return Err(Error::NonConvergent(format!("tail extrapolation failed; last partial product {last}")));
    }
    Ok(LambdaLimit { value, residual: (value - last).abs(), decay: 2.0, algebraic: true, spread: (value - coarse).abs() })
}

/// Summary of the `g`-flow against its asymptotic form.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GAsymptoteReport {
    pub upper_critical: bool,
    /// Last computed `β_j`.
    pub beta_inf: f64,
    /// `(n+8) ln L / (8π²)`, the continuum value of `β_∞`.
    pub beta_continuum: f64,
    /// Fitted exponent of `g_j` against `j` over `[50, 200]` (upper critical
    /// dimension only).
    pub fitted_exponent: Option<f64>,
    /// Range of `g_j β_∞ j` over `[100, 300]` (upper critical dimension only).
    pub g_beta_j_range: Option<(f64, f64)>,
    /// `g_∞` estimated by the final state (above the upper critical dimension).
    pub g_inf: Option<f64>,
    /// Fitted per-scale decay of `|g_j − g_∞|` and its expected value
    /// `L^{−(d−4+2η)}`.
    pub fitted_rate: Option<f64>,
    pub expected_rate: f64,
    /// Smallest `C` with `|g_j − g_∞| ≤ C r_j g_0²`.
    pub deviation_constant: Option<f64>,
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Checks the `g`-flow of a trajectory against `g_j ≈ 1/(β_∞ j)` at the
/// upper critical dimension and against geometric convergence above it.
/// The rate fit uses scales `1..=fit_end`.
pub fn g_asymptote_check(trajectory: &FlowTrajectory, params: &FlowParams, fit_end: usize) -> GAsymptoteReport {
    let g: Vec<f64> = trajectory.states.iter().map(|s| s.g).collect();
    let beta_inf = params.beta_inf();
    let beta_continuum = (params.n as f64 + 8.0) * (params.l as f64).ln() / (8.0 * std::f64::consts::PI.powi(2));
    let expected_rate = (params.l as f64).powf(-params.r_exponent());
    let mut report = GAsymptoteReport {
        upper_critical: params.at_upper_critical(),
        beta_inf,
        beta_continuum,
        fitted_exponent: None,
        g_beta_j_range: None,
        g_inf: None,
        fitted_rate: None,
        expected_rate,
        deviation_constant: None,
    };
    if report.upper_critical {
        if g.len() > 200 {
            let js: Vec<f64> = (50..=200).map(|j| (j as f64).ln()).collect();
            let ys: Vec<f64> = (50..=200).map(|j| g[j].ln()).collect();
            report.fitted_exponent = Some(fit_slope(&js, &ys));
        }
        if g.len() > 300 {
            let vals = (100..=300).map(|j| g[j] * beta_inf * j as f64);
            report.g_beta_j_range = Some(vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v))));
        }
    } else {
        let g_inf = *g.last().unwrap();
        let dev: Vec<f64> = g.iter().map(|x| x - g_inf).collect();
        let end = fit_end.min(g.len() - 1);
        let pts: Vec<(f64, f64)> = (1..=end).filter(|&j| dev[j] > 0.0).map(|j| (j as f64, dev[j].ln())).collect();
        if pts.len() >= 2 {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            report.fitted_rate = Some(fit_slope(&x, &y).exp());
        }
        let g0 = g[0];
        let c = dev
            .iter()
            .enumerate()
            .map(|(j, v)| v.abs() / (expected_rate.powi(j as i32) * g0 * g0))
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max);
        report.g_inf = Some(g_inf);
        report.deviation_constant = Some(c);
    }
    report
}
