//! Closed-form flocking certificates.
//!
//! For the continuous flow with free parameters `x_inf` (an a-priori bound
//! on the position diameter) and a window length `delta`:
//!
//! ```text
//! C1 = exp(-k2 bU^2 delta) / gamma! * (delta bL^2 / N)^gamma
//! C2 = exp(-k1 bU delta)   / gamma! * (delta bL / N)^gamma
//! RV = Ru(0) / bL * exp(k2 delta bU D(B0) / (C1 zeta(x_inf)^gamma))
//! ```
//!
//! and the sufficient condition
//!
//! ```text
//! D(X0) + D(V0) delta / (C2 phi^g)
//!       + sqrt(2) N k1 RV D(B0) delta^2 / min(C1 zeta^g, C2 phi^g)^2
//!       + 2 k1 RV D(B0) delta^2 / (C1 zeta^g)  <=  x_inf.
//! ```
//!
//! The discrete model replaces the window by `n0` steps of size `h`, with
//! `D1 = binom(n0, gamma) (1 - h k2 bU^2)^(n0 - gamma) (h bL^2 / N)^gamma`
//! and `D2` analogous in `k1`, `bU`, `bL`.
//!
//! All factorials and binomials are handled in log space.

use crate::dynamics::{diameters, EnsembleState, ModelSpec};
use crate::error::{Error, Result};
use crate::kernel::CommKernel;

/// Scalars entering the certificates, taken from the initial data.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateInputs {
    pub phi: CommKernel,
    pub zeta: CommKernel,
    pub n: usize,
    pub gamma: usize,
    pub beta_lower: f64,
    pub beta_upper: f64,
    pub dx0: f64,
    pub dv0: f64,
    pub db0: f64,
    pub ru0: f64,
}

impl CertificateInputs {
    pub fn from_state(model: &ModelSpec, s: &EnsembleState) -> Result<Self> {
        if s.n() != model.n() {
            return Err(Error::domain("state and model disagree on the number of agents"));
        }
        let d = diameters(s);
        let inputs = Self {
            phi: model.phi().clone(),
            zeta: model.zeta().clone(),
            n: model.n(),
            gamma: model.gamma(),
            beta_lower: s.beta_min(),
            beta_upper: s.beta_max(),
            dx0: d.dx,
            dv0: d.dv,
            db0: d.dbeta,
            ru0: d.ru,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn kappa1(&self) -> f64 {
        self.phi.kappa()
    }

    pub fn kappa2(&self) -> f64 {
        self.zeta.kappa()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::domain("N must be positive"));
        }
        if !(self.beta_lower > 0.0 && self.beta_upper >= self.beta_lower && self.beta_upper.is_finite()) {
            return Err(Error::domain(format!(
                "need 0 < beta_L <= beta_U, got {} and {}",
                self.beta_lower, self.beta_upper
            )));
        }
        for (name, value) in [("D(X0)", self.dx0), ("D(V0)", self.dv0), ("D(B0)", self.db0), ("Ru(0)", self.ru0)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::domain(format!("{name} = {value} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Largest step for which the discrete certificate applies:
    /// `min(1 / (k2 bU^2), bL / (2 k1 bU^2))`.
    pub fn discrete_step_bound(&self) -> f64 {
        let bu2 = self.beta_upper * self.beta_upper;
        (1.0 / (self.kappa2() * bu2)).min(self.beta_lower / (2.0 * self.kappa1() * bu2))
    }

    fn ln_kernel_power(&self, kernel: &CommKernel, x_inf: f64) -> Result<f64> {
        Ok(self.gamma as f64 * kernel.eval(x_inf)?.ln())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousParams {
    pub x_inf: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteParams {
    pub x_inf: f64,
    pub n0: usize,
    pub h: f64,
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::domain(format!("{name} = {value} must be positive and finite")));
    }
    Ok(())
}

fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (1..=k).map(|i| ((n - k + i) as f64).ln() - (i as f64).ln()).sum()
}

/// `exponent * ln(base)` with `0 * ln(0) = 0`.
fn ln_power(base: f64, exponent: usize) -> f64 {
    if exponent == 0 {
        0.0
    } else {
        exponent as f64 * base.ln()
    }
}

fn ln_c1(inp: &CertificateInputs, delta: f64) -> Result<f64> {
    inp.validate()?;
    check_positive("delta", delta)?;
    let bl = inp.beta_lower;
    let bu = inp.beta_upper;
    Ok(-inp.kappa2() * bu * bu * delta - ln_factorial(inp.gamma)
        + ln_power(delta * bl * bl / inp.n as f64, inp.gamma))
}

fn ln_c2(inp: &CertificateInputs, delta: f64) -> Result<f64> {
    inp.validate()?;
    check_positive("delta", delta)?;
    Ok(-inp.kappa1() * inp.beta_upper * delta - ln_factorial(inp.gamma)
        + ln_power(delta * inp.beta_lower / inp.n as f64, inp.gamma))
}

/// Lower bound on the ergodicity coefficient of the coldness transition
/// matrix over a window of length `delta`, before the kernel factor.
pub fn c1(inp: &CertificateInputs, delta: f64) -> Result<f64> {
    Ok(ln_c1(inp, delta)?.exp())
}

/// Velocity counterpart of [`c1`].
pub fn c2(inp: &CertificateInputs, delta: f64) -> Result<f64> {
    Ok(ln_c2(inp, delta)?.exp())
}

/// `Ru0 / bL * exp(rate * D(B0) / decay)`, with the degenerate cases that
/// would produce `0 * inf` resolved exactly.
fn velocity_bound(inp: &CertificateInputs, rate: f64, decay: f64) -> Result<f64> {
    if !(decay > 0.0) {
        return Err(Error::domain("coldness decay factor vanishes; velocity bound undefined"));
    }
    if inp.ru0 == 0.0 {
        return Ok(0.0);
    }
    if inp.db0 == 0.0 {
        return Ok(inp.ru0 / inp.beta_lower);
    }
    Ok(inp.ru0 / inp.beta_lower * (rate * inp.db0 / decay).exp())
}

/// Coldness and velocity decay factors `C1 zeta(x_inf)^g`, `C2 phi(x_inf)^g`.
fn continuous_decay(inp: &CertificateInputs, p: &ContinuousParams) -> Result<(f64, f64)> {
    check_positive("x_inf", p.x_inf)?;
    let a_b = (ln_c1(inp, p.delta)? + inp.ln_kernel_power(&inp.zeta, p.x_inf)?).exp();
    let a_v = (ln_c2(inp, p.delta)? + inp.ln_kernel_power(&inp.phi, p.x_inf)?).exp();
    Ok((a_b, a_v))
}

/// Uniform velocity bound `R_V^c(x_inf, delta)`.
pub fn rv_c(inp: &CertificateInputs, p: &ContinuousParams) -> Result<f64> {
    let (a_b, _) = continuous_decay(inp, p)?;
    velocity_bound(inp, inp.kappa2() * p.delta * inp.beta_upper, a_b)
}

/// Shared shape of both sufficient conditions. `span` is `delta` or
/// `h n0`, the time covered by one window.
fn condition_lhs(inp: &CertificateInputs, span: f64, a_b: f64, a_v: f64, rv: f64) -> f64 {
    let k1 = inp.kappa1();
    let velocity = if inp.dv0 == 0.0 { 0.0 } else { inp.dv0 * span / a_v };
    let (cross, coupling) = if inp.db0 == 0.0 {
        (0.0, 0.0)
    } else {
        let m = a_b.min(a_v);
        (
            2f64.sqrt() * inp.n as f64 * k1 * rv * inp.db0 * span * span / (m * m),
            2.0 * k1 * rv * inp.db0 * span * span / a_b,
        )
    };
    inp.dx0 + velocity + cross + coupling
}

pub fn theorem31_lhs(inp: &CertificateInputs, p: &ContinuousParams) -> Result<f64> {
    let (a_b, a_v) = continuous_decay(inp, p)?;
    let rv = velocity_bound(inp, inp.kappa2() * p.delta * inp.beta_upper, a_b)?;
    Ok(condition_lhs(inp, p.delta, a_b, a_v, rv))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Continuous,
    Discrete,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Continuous => "continuous",
            Mode::Discrete => "discrete",
        }
    }
}

/// `C1, C2, C3, R_V^c` or `D1, D2, D3, R_V^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateConstants {
    pub coldness: f64,
    pub velocity: f64,
    pub forcing: f64,
    pub velocity_bound: f64,
}

impl CertificateConstants {
    pub fn named(&self, mode: Mode) -> [(&'static str, f64); 4] {
        let names = match mode {
            Mode::Continuous => ["C1", "C2", "C3", "R_V^c"],
            Mode::Discrete => ["D1", "D2", "D3", "R_V^d"],
        };
        [
            (names[0], self.coldness),
            (names[1], self.velocity),
            (names[2], self.forcing),
            (names[3], self.velocity_bound),
        ]
    }
}

/// Parameters of the geometric decay envelopes; `k = floor(t / window)`:
///
/// ```text
/// D(B) <= coldness_base^k D(B0)
/// D(V) <= velocity_base^k D(V0) + coupling coldness_base^k + forcing k cross_base^(k-1)
/// ```
///
/// where the last term is absent for `k = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub window: f64,
    pub coldness_base: f64,
    pub velocity_base: f64,
    pub cross_base: f64,
    pub db0: f64,
    pub dv0: f64,
    pub coupling: f64,
    pub forcing: f64,
}

impl Envelope {
    pub fn coldness(&self, k: u64) -> f64 {
        if self.db0 == 0.0 {
            return 0.0;
        }
        self.coldness_base.powf(k as f64) * self.db0
    }

    pub fn velocity(&self, k: u64) -> f64 {
        let kf = k as f64;
        let mut total = 0.0;
        if self.dv0 != 0.0 {
            total += self.velocity_base.powf(kf) * self.dv0;
        }
        if self.coupling != 0.0 {
            total += self.coupling * self.coldness_base.powf(kf);
        }
        if k > 0 && self.forcing != 0.0 {
            total += self.forcing * kf * self.cross_base.powf(kf - 1.0);
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlockingCertificate {
    pub mode: Mode,
    pub constants: CertificateConstants,
    pub lhs: f64,
    pub x_inf: f64,
    /// Window length `delta` (continuous) or step count `n0` (discrete).
    pub window: f64,
    /// Step size of the discrete certificate.
    pub h: Option<f64>,
    pub h_certified: Option<bool>,
    /// Constants are finite and both decay bases lie in `[0, 1)`.
    pub usable: bool,
    pub satisfied: bool,
    pub envelope: Envelope,
    pub reason: Option<String>,
}

impl FlockingCertificate {
    /// `lhs / x_inf`; below or at 1 when the condition holds.
    pub fn ratio(&self) -> f64 {
        self.lhs / self.x_inf
    }
}

struct Assembled {
    a_b: f64,
    a_v: f64,
    constants: CertificateConstants,
    lhs: f64,
    envelope: Envelope,
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    inp: &CertificateInputs,
    window: f64,
    span: f64,
    coldness: f64,
    velocity: f64,
    a_b: f64,
    a_v: f64,
    rv: f64,
) -> Assembled {
    let k1 = inp.kappa1();
    let (forcing, coupling) = if inp.db0 == 0.0 {
        (0.0, 0.0)
    } else {
        (
            2f64.sqrt() * inp.n as f64 * k1 * rv * inp.db0 * span,
            2.0 * span * k1 * rv * inp.db0,
        )
    };
    let coldness_base = 1.0 - a_b;
    let velocity_base = 1.0 - a_v;
    Assembled {
        a_b,
        a_v,
        constants: CertificateConstants { coldness, velocity, forcing, velocity_bound: rv },
        lhs: condition_lhs(inp, span, a_b, a_v, rv),
        envelope: Envelope {
            window,
            coldness_base,
            velocity_base,
            cross_base: coldness_base.max(velocity_base),
            db0: inp.db0,
            dv0: inp.dv0,
            coupling,
            forcing,
        },
    }
}

fn usability(a: &Assembled) -> Option<String> {
    let c = &a.constants;
    if !(c.coldness > 0.0 && c.velocity > 0.0) {
        return Some("decay constants underflow to zero".into());
    }
    if !(a.a_b > 0.0 && a.a_b <= 1.0 && a.a_v > 0.0 && a.a_v <= 1.0) {
        return Some(format!(
            "decay factors {} and {} must lie in (0, 1]",
            a.a_b, a.a_v
        ));
    }
    let e = &a.envelope;
    if !((0.0..1.0).contains(&e.coldness_base) && (0.0..1.0).contains(&e.velocity_base)) {
        return Some("decay bases outside [0, 1)".into());
    }
    if !(c.velocity_bound.is_finite() && c.forcing.is_finite() && a.lhs.is_finite()) {
        return Some("velocity bound overflows".into());
    }
    None
}

pub fn check_theorem31(inp: &CertificateInputs, p: &ContinuousParams) -> Result<FlockingCertificate> {
    let coldness = c1(inp, p.delta)?;
    let velocity = c2(inp, p.delta)?;
    let (a_b, a_v) = continuous_decay(inp, p)?;
    let rv = if a_b > 0.0 {
        velocity_bound(inp, inp.kappa2() * p.delta * inp.beta_upper, a_b)?
    } else {
        f64::INFINITY
    };
    let a = assemble(inp, p.delta, p.delta, coldness, velocity, a_b, a_v, rv);
    let reason = usability(&a);
    let usable = reason.is_none();
    let satisfied = usable && a.lhs <= p.x_inf;
    Ok(FlockingCertificate {
        mode: Mode::Continuous,
        constants: a.constants,
        lhs: a.lhs,
        x_inf: p.x_inf,
        window: p.delta,
        h: None,
        h_certified: None,
        usable,
        satisfied,
        envelope: a.envelope,
        reason,
    })
}

fn check_t(t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::domain(format!("time {t} must be finite and >= 0")));
    }
    Ok(())
}

fn require_mode(cert: &FlockingCertificate, mode: Mode) -> Result<()> {
    if cert.mode != mode {
        return Err(Error::domain(format!("certificate is {}, not {}", cert.mode.as_str(), mode.as_str())));
    }
    if !cert.usable {
        return Err(Error::domain("certificate is not usable"));
    }
    Ok(())
}

/// Coldness-diameter envelope at continuous time `t`.
pub fn envelope_b_continuous(cert: &FlockingCertificate, t: f64) -> Result<f64> {
    require_mode(cert, Mode::Continuous)?;
    check_t(t)?;
    Ok(cert.envelope.coldness((t / cert.window).floor() as u64))
}

/// Velocity-diameter envelope at continuous time `t`.
pub fn envelope_v_continuous(cert: &FlockingCertificate, t: f64) -> Result<f64> {
    require_mode(cert, Mode::Continuous)?;
    check_t(t)?;
    Ok(cert.envelope.velocity((t / cert.window).floor() as u64))
}

fn check_discrete(inp: &CertificateInputs, h: f64, n0: usize) -> Result<()> {
    inp.validate()?;
    check_positive("h", h)?;
    if n0 < inp.gamma || n0 == 0 {
        return Err(Error::domain(format!("n0 = {n0} must be positive and >= gamma = {}", inp.gamma)));
    }
    Ok(())
}

fn ln_discrete_constant(inp: &CertificateInputs, h: f64, n0: usize, base: f64, beta_power: i32) -> Result<f64> {
    check_discrete(inp, h, n0)?;
    if base < 0.0 {
        return Err(Error::domain(format!("step h = {h} makes the contraction base {base} negative")));
    }
    let g = inp.gamma;
    Ok(ln_binomial(n0, g)
        + ln_power(base, n0 - g)
        + ln_power(h * inp.beta_lower.powi(beta_power) / inp.n as f64, g))
}

fn ln_d1(inp: &CertificateInputs, h: f64, n0: usize) -> Result<f64> {
    let base = 1.0 - h * inp.kappa2() * inp.beta_upper * inp.beta_upper;
    ln_discrete_constant(inp, h, n0, base, 2)
}

fn ln_d2(inp: &CertificateInputs, h: f64, n0: usize) -> Result<f64> {
    let base = 1.0 - h * inp.kappa1() * inp.beta_upper;
    ln_discrete_constant(inp, h, n0, base, 1)
}

pub fn d1(inp: &CertificateInputs, h: f64, n0: usize) -> Result<f64> {
    Ok(ln_d1(inp, h, n0)?.exp())
}

pub fn d2(inp: &CertificateInputs, h: f64, n0: usize) -> Result<f64> {
    Ok(ln_d2(inp, h, n0)?.exp())
}

fn discrete_decay(inp: &CertificateInputs, p: &DiscreteParams) -> Result<(f64, f64)> {
    check_positive("x_inf", p.x_inf)?;
    let a_b = (ln_d1(inp, p.h, p.n0)? + inp.ln_kernel_power(&inp.zeta, p.x_inf)?).exp();
    let a_v = (ln_d2(inp, p.h, p.n0)? + inp.ln_kernel_power(&inp.phi, p.x_inf)?).exp();
    Ok((a_b, a_v))
}

fn discrete_rate(inp: &CertificateInputs, p: &DiscreteParams) -> f64 {
    p.h * p.n0 as f64 * inp.kappa2() * inp.beta_upper
}

/// Uniform velocity bound `R_V^d(x_inf, n0)`.
pub fn rv_d(inp: &CertificateInputs, p: &DiscreteParams) -> Result<f64> {
    let (a_b, _) = discrete_decay(inp, p)?;
    velocity_bound(inp, discrete_rate(inp, p), a_b)
}

/// Left-hand side of the discrete condition. Evaluated for any `h` that
/// keeps both contraction bases nonnegative; whether `h` is small enough
/// is a separate question answered by [`check_theorem41`].
pub fn theorem41_lhs(inp: &CertificateInputs, p: &DiscreteParams) -> Result<f64> {
    let (a_b, a_v) = discrete_decay(inp, p)?;
    let rv = velocity_bound(inp, discrete_rate(inp, p), a_b)?;
    Ok(condition_lhs(inp, p.h * p.n0 as f64, a_b, a_v, rv))
}

pub fn check_theorem41(inp: &CertificateInputs, p: &DiscreteParams) -> Result<FlockingCertificate> {
    check_discrete(inp, p.h, p.n0)?;
    check_positive("x_inf", p.x_inf)?;
    let h_certified = p.h <= inp.discrete_step_bound();
    let span = p.h * p.n0 as f64;
    let (a, reason) = match (d1(inp, p.h, p.n0), d2(inp, p.h, p.n0)) {
        (Ok(coldness), Ok(velocity)) => {
            let (a_b, a_v) = discrete_decay(inp, p)?;
            let rv = if a_b > 0.0 {
                velocity_bound(inp, discrete_rate(inp, p), a_b)?
            } else {
                f64::INFINITY
            };
            let a = assemble(inp, p.n0 as f64, span, coldness, velocity, a_b, a_v, rv);
            let reason = usability(&a);
            (a, reason)
        }
        (Err(e), _) | (_, Err(e)) => {
            let nan = f64::NAN;
            let a = Assembled {
                a_b: nan,
                a_v: nan,
                constants: CertificateConstants { coldness: nan, velocity: nan, forcing: nan, velocity_bound: nan },
                lhs: f64::INFINITY,
                envelope: Envelope {
                    window: p.n0 as f64,
                    coldness_base: nan,
                    velocity_base: nan,
                    cross_base: nan,
                    db0: inp.db0,
                    dv0: inp.dv0,
                    coupling: nan,
                    forcing: nan,
                },
            };
            (a, Some(e.to_string()))
        }
    };
    let usable = reason.is_none();
    let reason = match (reason, h_certified) {
        (Some(r), _) => Some(r),
        (None, false) => Some(format!(
            "h = {} exceeds the step bound {}",
            p.h,
            inp.discrete_step_bound()
        )),
        (None, true) => None,
    };
    let satisfied = usable && h_certified && a.lhs <= p.x_inf;
    Ok(FlockingCertificate {
        mode: Mode::Discrete,
        constants: a.constants,
        lhs: a.lhs,
        x_inf: p.x_inf,
        window: p.n0 as f64,
        h: Some(p.h),
        h_certified: Some(h_certified),
        usable,
        satisfied,
        envelope: a.envelope,
        reason,
    })
}

/// Coldness-diameter envelope after `t` discrete steps.
pub fn envelope_b_discrete(cert: &FlockingCertificate, t: u64) -> Result<f64> {
    require_mode(cert, Mode::Discrete)?;
    Ok(cert.envelope.coldness(t / cert.window as u64))
}

/// Velocity-diameter envelope after `t` discrete steps.
pub fn envelope_v_discrete(cert: &FlockingCertificate, t: u64) -> Result<f64> {
    require_mode(cert, Mode::Discrete)?;
    Ok(cert.envelope.velocity(t / cert.window as u64))
}

/// One row of [`continuum_limit_check`]. `lhs_discrete` and `gap` are
/// `None` when the step could not be evaluated (`skipped` names why).
#[derive(Debug, Clone, PartialEq)]
pub struct LimitRow {
    pub h: f64,
    pub n0: usize,
    pub lhs_discrete: Option<f64>,
    pub lhs_continuous: f64,
    pub gap: Option<f64>,
    pub skipped: Option<String>,
}

/// `floor(delta / h)`, treating ratios within `1e-9` of an integer as that
/// integer so that `h = delta / k` gives `n0 = k`.
pub fn window_steps(delta: f64, h: f64) -> usize {
    let ratio = delta / h;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.floor() as usize
    }
}

/// Compares the discrete condition with `n0 = floor(delta / h)` against the
/// continuous condition at the same `(x_inf, delta)`.
pub fn continuum_limit_check(inp: &CertificateInputs, p: &ContinuousParams, h_values: &[f64]) -> Result<Vec<LimitRow>> {
    let lhs_continuous = theorem31_lhs(inp, p)?;
    let rows = h_values
        .iter()
        .map(|&h| {
            let n0 = if h.is_finite() && h > 0.0 { window_steps(p.delta, h) } else { 0 };
            let skip = |reason: String| LimitRow {
                h,
                n0,
                lhs_discrete: None,
                lhs_continuous,
                gap: None,
                skipped: Some(reason),
            };
            if n0 < inp.gamma.max(1) {
                return skip(format!("n0 = {n0} < gamma = {}", inp.gamma));
            }
            if !lhs_continuous.is_finite() {
                return skip("continuous condition overflows".into());
            }
            match theorem41_lhs(inp, &DiscreteParams { x_inf: p.x_inf, n0, h }) {
                Ok(lhs) if !lhs.is_finite() => skip("discrete condition overflows".into()),
                Ok(lhs) => LimitRow {
                    h,
                    n0,
                    lhs_discrete: Some(lhs),
                    lhs_continuous,
                    gap: Some((lhs - lhs_continuous).abs()),
                    skipped: None,
                },
                Err(e) => skip(e.to_string()),
            }
        })
        .collect();
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// Satisfied certificate with the smallest `lhs / x_inf`.
    pub best: Option<FlockingCertificate>,
    /// Grid indices `(x_inf, window)` of `best`.
    pub best_index: Option<(usize, usize)>,
    /// Closest failing point, reported when nothing is satisfied.
    pub best_failing: Option<FlockingCertificate>,
    pub evaluated: usize,
}

fn search<F>(x_grid: &[f64], window_len: usize, mut check: F) -> SearchOutcome
where
    F: FnMut(f64, usize) -> Result<FlockingCertificate>,
{
    let mut out = SearchOutcome { best: None, best_index: None, best_failing: None, evaluated: 0 };
    for (ix, &x_inf) in x_grid.iter().enumerate() {
        for iw in 0..window_len {
            let Ok(cert) = check(x_inf, iw) else { continue };
            out.evaluated += 1;
            let ratio = cert.ratio();
            if cert.satisfied {
                if out.best.as_ref().is_none_or(|b| ratio < b.ratio()) {
                    out.best = Some(cert);
                    out.best_index = Some((ix, iw));
                }
            } else if out.best_failing.as_ref().is_none_or(|b| ratio.is_finite() && ratio < b.ratio()) {
                out.best_failing = Some(cert);
            }
        }
    }
    if out.best.is_some() {
        out.best_failing = None;
    }
    out
}

/// Grid search over `(x_inf, delta)` for the continuous condition. Ties keep
/// the first grid point in row-major order.
pub fn search_continuous(inp: &CertificateInputs, x_grid: &[f64], delta_grid: &[f64]) -> SearchOutcome {
    search(x_grid, delta_grid.len(), |x_inf, i| {
        check_theorem31(inp, &ContinuousParams { x_inf, delta: delta_grid[i] })
    })
}

/// Grid search over `(x_inf, n0)` for the discrete condition at step `h`.
pub fn search_discrete(inp: &CertificateInputs, h: f64, x_grid: &[f64], n0_grid: &[usize]) -> SearchOutcome {
    search(x_grid, n0_grid.len(), |x_inf, i| {
        check_theorem41(inp, &DiscreteParams { x_inf, n0: n0_grid[i], h })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_inputs(n: usize, gamma: usize) -> CertificateInputs {
        CertificateInputs {
            phi: CommKernel::constant(1.0).unwrap(),
            zeta: CommKernel::constant(1.0).unwrap(),
            n,
            gamma,
            beta_lower: 1.0,
            beta_upper: 1.0,
            dx0: 0.0,
            dv0: 0.0,
            db0: 0.0,
            ru0: 0.0,
        }
    }

    fn generic_inputs() -> CertificateInputs {
        CertificateInputs {
            phi: CommKernel::algebraic(1.2, 0.5).unwrap(),
            zeta: CommKernel::exponential(0.8, 3.0).unwrap(),
            n: 4,
            gamma: 2,
            beta_lower: 0.9,
            beta_upper: 1.1,
            dx0: 0.3,
            dv0: 1e-3,
            db0: 2e-3,
            ru0: 0.7,
        }
    }

    #[test]
    fn c1_examples() {
        let mut inp = unit_inputs(1, 0);
        inp.kappa_check();
        assert_relative_eq!(c1(&inp, 0.7).unwrap(), (-0.7f64).exp(), max_relative = 1e-15);
        let inp = unit_inputs(2, 1);
        assert_relative_eq!(c1(&inp, 1.0).unwrap(), 0.183_939_720_585_721_16, max_relative = 1e-14);
    }

    #[test]
    fn c1_recomputation() {
        let inp = generic_inputs();
        for delta in [0.25, 0.5, 1.0, 2.0] {
            let (k2, bu, bl, n) = (0.8, 1.1f64, 0.9f64, 4.0);
            let direct = (-k2 * bu * bu * delta).exp() / 2.0 * (delta * bl * bl / n).powi(2);
            assert_relative_eq!(c1(&inp, delta).unwrap(), direct, max_relative = 1e-13);
        }
        let one = unit_inputs(3, 1);
        let ratio = c1(&one, 2.0).unwrap() / c1(&one, 1.0).unwrap();
        assert_relative_eq!(ratio, 2.0 * (-1.0f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn c2_examples() {
        let inp = unit_inputs(1, 0);
        assert_relative_eq!(c2(&inp, 0.3).unwrap(), (-0.3f64).exp(), max_relative = 1e-15);
        let inp = unit_inputs(2, 1);
        assert_relative_eq!(c2(&inp, 1.0).unwrap(), (-1.0f64).exp() / 2.0, max_relative = 1e-14);
        assert_eq!(c1(&inp, 1.0).unwrap(), c2(&inp, 1.0).unwrap());
        let g = generic_inputs();
        let direct = (-1.2f64 * 1.1 * 0.5).exp() / 2.0 * (0.5f64 * 0.9 / 4.0).powi(2);
        assert_relative_eq!(c2(&g, 0.5).unwrap(), direct, max_relative = 1e-13);
    }

    #[test]
    fn constants_reject_bad_inputs() {
        let mut inp = unit_inputs(2, 1);
        assert!(c1(&inp, 0.0).is_err());
        assert!(c1(&inp, -1.0).is_err());
        inp.beta_lower = 0.0;
        assert!(c1(&inp, 1.0).is_err());
        let mut inp = unit_inputs(2, 1);
        inp.dv0 = -1.0;
        assert!(c2(&inp, 1.0).is_err());
    }

    #[test]
    fn huge_depth_stays_finite_in_log_space() {
        let inp = unit_inputs(400, 300);
        let v = c1(&inp, 1.0).unwrap();
        assert!(v >= 0.0 && v.is_finite());
        let d = d1(&unit_inputs(400, 300), 1e-3, 10_000).unwrap();
        assert!(d.is_finite());
    }

    #[test]
    fn rv_c_examples() {
        let p = ContinuousParams { x_inf: 1.0, delta: 1.0 };
        let mut inp = unit_inputs(2, 1);
        inp.ru0 = 2.0;
        inp.beta_lower = 0.5;
        assert_eq!(rv_c(&inp, &p).unwrap(), 4.0);
        let mut inp = unit_inputs(2, 1);
        inp.db0 = 1.0;
        assert_eq!(rv_c(&inp, &p).unwrap(), 0.0);
        inp.ru0 = 2.0;
        let c1v = c1(&inp, 1.0).unwrap();
        let expected = 2.0 * (1.0 / c1v).exp();
        assert_relative_eq!(rv_c(&inp, &p).unwrap(), expected, max_relative = 1e-13);
        assert_relative_eq!(expected, 2.0 * (2.0 * std::f64::consts::E).exp(), max_relative = 1e-13);
    }

    #[test]
    fn theorem31_special_cases() {
        let p = ContinuousParams { x_inf: 0.5, delta: 1.0 };
        let cert = check_theorem31(&unit_inputs(3, 1), &p).unwrap();
        assert_eq!(cert.lhs, 0.0);
        assert!(cert.satisfied && cert.usable);

        let mut iso = generic_inputs();
        iso.db0 = 0.0;
        let p = ContinuousParams { x_inf: 2.0, delta: 0.5 };
        let a_v = c2(&iso, 0.5).unwrap() * iso.phi.eval(2.0).unwrap().powi(2);
        let expected = iso.dx0 + iso.dv0 * 0.5 / a_v;
        assert_relative_eq!(theorem31_lhs(&iso, &p).unwrap(), expected, max_relative = 1e-13);
    }

    #[test]
    fn theorem31_generic_recomputation() {
        let inp = generic_inputs();
        let p = ContinuousParams { x_inf: 1.5, delta: 0.8 };
        let (k1, k2, n) = (1.2f64, 0.8f64, 4.0f64);
        let (bl, bu) = (0.9f64, 1.1f64);
        let c1v = (-k2 * bu * bu * 0.8).exp() / 2.0 * (0.8 * bl * bl / n).powi(2);
        let c2v = (-k1 * bu * 0.8).exp() / 2.0 * (0.8 * bl / n).powi(2);
        let zeta = 0.8 * (-1.5f64 / 3.0).exp();
        let phi = 1.2 / (1.0 + 1.5f64 * 1.5).sqrt();
        let ab = c1v * zeta * zeta;
        let av = c2v * phi * phi;
        let rv = 0.7 / bl * (k2 * 0.8 * bu * 2e-3 / ab).exp();
        let lhs = 0.3 + 1e-3 * 0.8 / av
            + 2f64.sqrt() * n * k1 * rv * 2e-3 * 0.64 / ab.min(av).powi(2)
            + 2.0 * k1 * rv * 2e-3 * 0.64 / ab;
        assert_relative_eq!(rv_c(&inp, &p).unwrap(), rv, max_relative = 1e-12);
        assert_relative_eq!(theorem31_lhs(&inp, &p).unwrap(), lhs, max_relative = 1e-12);
        let cert = check_theorem31(&inp, &p).unwrap();
        assert_eq!(cert.satisfied, lhs <= 1.5);
        assert_relative_eq!(cert.envelope.coldness_base, 1.0 - ab, max_relative = 1e-13);
        assert_relative_eq!(cert.constants.forcing, 2f64.sqrt() * n * k1 * rv * 2e-3 * 0.8, max_relative = 1e-12);
    }

    #[test]
    fn continuous_envelopes() {
        let inp = generic_inputs();
        let p = ContinuousParams { x_inf: 1.5, delta: 0.8 };
        let cert = check_theorem31(&inp, &p).unwrap();
        let e = cert.envelope;
        assert_eq!(envelope_b_continuous(&cert, 0.0).unwrap(), inp.db0);
        assert_eq!(envelope_b_continuous(&cert, 0.79).unwrap(), inp.db0);
        let b = e.coldness_base;
        assert_relative_eq!(envelope_b_continuous(&cert, 3.0 * 0.8 + 0.1).unwrap(), b.powf(3.0) * inp.db0, max_relative = 1e-14);
        assert_relative_eq!(
            envelope_v_continuous(&cert, 0.5).unwrap(),
            inp.dv0 + 2.0 * 0.8 * 1.2 * cert.constants.velocity_bound * inp.db0,
            max_relative = 1e-13
        );
        let k = 5.0;
        let t = 5.0 * 0.8 + 0.3;
        let expected = e.velocity_base.powf(k) * inp.dv0
            + 2.0 * 0.8 * 1.2 * cert.constants.velocity_bound * inp.db0 * b.powf(k)
            + cert.constants.forcing * k * e.velocity_base.max(b).powf(k - 1.0);
        assert_relative_eq!(envelope_v_continuous(&cert, t).unwrap(), expected, max_relative = 1e-13);
        assert!(envelope_b_continuous(&cert, -1.0).is_err());
        // nonincreasing coldness envelope
        let mut prev = f64::INFINITY;
        for i in 0..100 {
            let v = envelope_b_continuous(&cert, i as f64 * 0.37).unwrap();
            assert!(v <= prev);
            prev = v;
        }

        let mut iso = generic_inputs();
        iso.db0 = 0.0;
        let cert = check_theorem31(&iso, &p).unwrap();
        assert_eq!(envelope_b_continuous(&cert, 10.0).unwrap(), 0.0);
        let base = cert.envelope.velocity_base;
        assert_relative_eq!(envelope_v_continuous(&cert, 4.0).unwrap(), base.powf(5.0) * iso.dv0, max_relative = 1e-14);
    }

    #[test]
    fn d_constant_examples() {
        let inp = unit_inputs(2, 1);
        assert_relative_eq!(d1(&inp, 0.1, 4).unwrap(), 0.1458, max_relative = 1e-13);
        assert_relative_eq!(d2(&inp, 0.1, 4).unwrap(), 0.1458, max_relative = 1e-13);
        let g = generic_inputs();
        let h: f64 = 0.05;
        assert_relative_eq!(d1(&g, h, 2).unwrap(), (h * 0.81 / 4.0).powi(2), max_relative = 1e-13);
        let zero = unit_inputs(1, 0);
        assert_relative_eq!(d1(&zero, 0.2, 7).unwrap(), 0.8f64.powi(7), max_relative = 1e-13);
        assert!(d1(&inp, 1.5, 4).is_err());
        assert!(d1(&g, 0.05, 1).is_err());
        assert!(d1(&inp, 0.0, 4).is_err());
        // base exactly zero with n0 = gamma is fine: 0^0 = 1
        assert_relative_eq!(d1(&inp, 1.0, 1).unwrap(), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn d_constant_recomputation() {
        let g = generic_inputs();
        let (h, n0) = (0.02f64, 30usize);
        let binom = 30.0 * 29.0 / 2.0;
        let d1v = binom * (1.0 - h * 0.8 * 1.21).powi(28) * (h * 0.81 / 4.0).powi(2);
        let d2v = binom * (1.0 - h * 1.2 * 1.1).powi(28) * (h * 0.9 / 4.0).powi(2);
        assert_relative_eq!(d1(&g, h, n0).unwrap(), d1v, max_relative = 1e-12);
        assert_relative_eq!(d2(&g, h, n0).unwrap(), d2v, max_relative = 1e-12);
        let p = DiscreteParams { x_inf: 1.5, n0, h };
        let zeta = 0.8 * (-0.5f64).exp();
        let rv = 0.7 / 0.9 * (h * 30.0 * 0.8 * 1.1 * 2e-3 / (d1v * zeta * zeta)).exp();
        assert_relative_eq!(rv_d(&g, &p).unwrap(), rv, max_relative = 1e-12);
        let phi = 1.2 / 3.25f64.sqrt();
        let (ab, av) = (d1v * zeta * zeta, d2v * phi * phi);
        let span = h * 30.0;
        let lhs = 0.3 + span * 1e-3 / av
            + 2f64.sqrt() * span * span * 4.0 * 1.2 * rv * 2e-3 / ab.min(av).powi(2)
            + 2.0 * span * span * 1.2 * rv * 2e-3 / ab;
        assert_relative_eq!(theorem41_lhs(&g, &p).unwrap(), lhs, max_relative = 1e-12);
    }

    #[test]
    fn rv_d_trivial_cases() {
        let p = DiscreteParams { x_inf: 1.0, n0: 3, h: 0.1 };
        let mut inp = unit_inputs(2, 1);
        inp.ru0 = 3.0;
        inp.beta_lower = 0.5;
        assert_eq!(rv_d(&inp, &p).unwrap(), 6.0);
        let mut inp = unit_inputs(2, 1);
        inp.db0 = 0.4;
        assert_eq!(rv_d(&inp, &p).unwrap(), 0.0);
    }

    #[test]
    fn theorem41_consensus_and_step_bound() {
        let mut inp = unit_inputs(3, 1);
        inp.dx0 = 0.4;
        let ok = check_theorem41(&inp, &DiscreteParams { x_inf: 0.5, n0: 2, h: 0.2 }).unwrap();
        assert_eq!(ok.lhs, 0.4);
        assert!(ok.satisfied && ok.h_certified == Some(true));
        let tight = check_theorem41(&inp, &DiscreteParams { x_inf: 0.3, n0: 2, h: 0.2 }).unwrap();
        assert!(!tight.satisfied);
        // bL / (2 k1 bU^2) = 0.5 is the binding bound
        let big = check_theorem41(&inp, &DiscreteParams { x_inf: 0.5, n0: 2, h: 0.6 }).unwrap();
        assert_eq!(big.h_certified, Some(false));
        assert!(!big.satisfied);
        let huge = check_theorem41(&inp, &DiscreteParams { x_inf: 0.5, n0: 2, h: 5.0 }).unwrap();
        assert!(!huge.usable && !huge.satisfied && huge.lhs.is_infinite());
    }

    #[test]
    fn discrete_envelopes() {
        let g = generic_inputs();
        let cert = check_theorem41(&g, &DiscreteParams { x_inf: 1.5, n0: 30, h: 0.02 }).unwrap();
        assert_eq!(envelope_b_discrete(&cert, 29).unwrap(), g.db0);
        let e = cert.envelope;
        let k = 4.0;
        let expected = e.velocity_base.powf(k) * g.dv0
            + 2.0 * 0.02 * 30.0 * 1.2 * cert.constants.velocity_bound * e.coldness_base.powf(k) * g.db0
            + 2f64.sqrt() * 0.02 * 30.0 * 4.0 * 1.2 * cert.constants.velocity_bound * g.db0 * k * e.cross_base.powf(k - 1.0);
        assert_relative_eq!(envelope_v_discrete(&cert, 125).unwrap(), expected, max_relative = 1e-12);
        assert_relative_eq!(envelope_b_discrete(&cert, 125).unwrap(), e.coldness_base.powf(4.0) * g.db0, max_relative = 1e-13);
        assert!(envelope_b_continuous(&cert, 1.0).is_err());

        let mut iso = generic_inputs();
        iso.db0 = 0.0;
        let cert = check_theorem41(&iso, &DiscreteParams { x_inf: 1.5, n0: 30, h: 0.02 }).unwrap();
        let base = cert.envelope.velocity_base;
        assert_relative_eq!(envelope_v_discrete(&cert, 95).unwrap(), base.powf(3.0) * iso.dv0, max_relative = 1e-14);
    }

    #[test]
    fn limit_check_zero_diameters() {
        let inp = unit_inputs(3, 1);
        let p = ContinuousParams { x_inf: 1.0, delta: 1.0 };
        let rows = continuum_limit_check(&inp, &p, &[0.5, 0.1, 0.01]).unwrap();
        assert!(rows.iter().all(|r| r.gap == Some(0.0)));
    }

    #[test]
    fn limit_check_isothermal() {
        let mut inp = generic_inputs();
        inp.db0 = 0.0;
        let p = ContinuousParams { x_inf: 1.5, delta: 0.8 };
        let hs: Vec<f64> = [8.0, 64.0, 512.0, 4096.0].iter().map(|k| 0.8 / k).collect();
        let rows = continuum_limit_check(&inp, &p, &hs).unwrap();
        let cont_term = theorem31_lhs(&inp, &p).unwrap() - inp.dx0;
        for r in &rows {
            let h = r.h;
            let disc_term = h * r.n0 as f64 * inp.dv0 / (d2(&inp, h, r.n0).unwrap() * inp.phi.eval(1.5).unwrap().powi(2));
            assert_relative_eq!(r.gap.unwrap(), (disc_term - cont_term).abs(), max_relative = 1e-9);
        }
        assert!(rows.windows(2).all(|w| w[1].gap < w[0].gap));
        assert!(rows.last().unwrap().gap.unwrap() / rows[0].lhs_continuous < 1e-3);
    }

    #[test]
    fn limit_check_flags_short_windows() {
        let inp = generic_inputs();
        let p = ContinuousParams { x_inf: 1.5, delta: 0.8 };
        let rows = continuum_limit_check(&inp, &p, &[0.5, 0.1]).unwrap();
        assert!(rows[0].skipped.is_some() && rows[0].gap.is_none());
        assert!(rows[1].skipped.is_none());
        assert_eq!(window_steps(0.8, 0.8 / 1024.0), 1024);
        assert_eq!(window_steps(1.0, 0.3), 3);
    }

    #[test]
    fn limit_check_skips_overflow() {
        let mut inp = generic_inputs();
        inp.db0 = 1.0;
        let p = ContinuousParams { x_inf: 50.0, delta: 8.0 };
        assert!(theorem31_lhs(&inp, &p).unwrap().is_infinite());
        let rows = continuum_limit_check(&inp, &p, &[0.1]).unwrap();
        assert!(rows[0].gap.is_none() && rows[0].skipped.is_some());
    }

    #[test]
    fn search_consensus_takes_first_point() {
        let inp = unit_inputs(3, 1);
        let out = search_continuous(&inp, &[0.5, 1.0], &[0.5, 1.0]);
        assert_eq!(out.best_index, Some((0, 0)));
        assert_eq!(out.evaluated, 4);
    }

    #[test]
    fn search_reports_best_failure() {
        let mut inp = generic_inputs();
        inp.dx0 = 5.0;
        let out = search_continuous(&inp, &[0.5, 1.0], &[0.5, 1.0]);
        assert!(out.best.is_none());
        let failing = out.best_failing.unwrap();
        assert!(!failing.satisfied);
    }

    #[test]
    fn search_matches_exhaustive_grid() {
        let mut inp = generic_inputs();
        inp.dx0 = 0.1;
        inp.dv0 = 1e-7;
        inp.db0 = 1e-9;
        let xs = [0.5, 1.0, 2.0, 4.0];
        let ds = [0.25, 0.5, 1.0, 2.0, 4.0];
        let out = search_continuous(&inp, &xs, &ds);
        let mut best: Option<(f64, usize, usize)> = None;
        for (i, &x) in xs.iter().enumerate() {
            for (j, &d) in ds.iter().enumerate() {
                let lhs = theorem31_lhs(&inp, &ContinuousParams { x_inf: x, delta: d }).unwrap();
                if lhs <= x && best.is_none_or(|b| lhs / x < b.0) {
                    best = Some((lhs / x, i, j));
                }
            }
        }
        let (_, i, j) = best.expect("grid has a feasible point");
        assert_eq!(out.best_index, Some((i, j)));
    }

    #[test]
    fn constants_decrease_with_beta_upper() {
        let mut inp = generic_inputs();
        let mut prev = (f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY);
        for k in 0..20 {
            inp.beta_upper = 1.0 + 0.05 * k as f64;
            let cur = (
                c1(&inp, 0.7).unwrap(),
                c2(&inp, 0.7).unwrap(),
                d1(&inp, 0.05, 12).unwrap(),
                d2(&inp, 0.05, 12).unwrap(),
            );
            assert!(cur.0 < prev.0 && cur.1 < prev.1 && cur.2 < prev.2 && cur.3 < prev.3);
            assert!(cur.0 > 0.0 && cur.1 > 0.0 && cur.2 > 0.0 && cur.3 > 0.0);
            prev = cur;
        }
    }

    impl CertificateInputs {
        fn kappa_check(&mut self) {
            assert!(self.kappa1() > 0.0 && self.kappa2() > 0.0);
        }
    }
}
