//! The thermomechanical Cucker–Smale flows in coldness variables
//! `beta_i = 1 / theta_i`.
//!
//! Continuous model:
//!
//! ```text
//! x_i' = v_i
//! v_i' = (1/N) sum_j chi_ij phi(|x_i - x_j|) (beta_j v_j - beta_i v_i)
//! beta_i' = (1/N) sum_j chi_ij zeta(|x_i - x_j|) beta_i^2 (beta_j - beta_i)
//! ```
//!
//! The discrete model is the forward step of size `h` with the coldness
//! updated through its reciprocal:
//! `1/beta_i[t+1] = 1/beta_i[t] + (h/N) sum_j chi_ij zeta (beta_i - beta_j)`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::graph::Digraph;
use crate::kernel::CommKernel;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    pub t: f64,
    /// `N x d` positions.
    pub x: Matrix,
    /// `N x d` velocities.
    pub v: Matrix,
    /// Coldness per agent, strictly positive.
    pub beta: DVector<f64>,
}

impl EnsembleState {
    pub fn new(t: f64, x: Matrix, v: Matrix, beta: DVector<f64>) -> Result<Self> {
        let s = Self { t, x, v, beta };
        s.validate()?;
        Ok(s)
    }

    /// State from temperatures rather than coldness.
    pub fn from_temperatures(t: f64, x: Matrix, v: Matrix, theta: &[f64]) -> Result<Self> {
        if let Some(th) = theta.iter().find(|th| !(th.is_finite() && **th > 0.0)) {
            return Err(Error::construction(format!("temperature {th} must be positive and finite")));
        }
        let beta = DVector::from_iterator(theta.len(), theta.iter().map(|th| 1.0 / th));
        Self::new(t, x, v, beta)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.beta.len();
        if n == 0 {
            return Err(Error::construction("ensemble has no agents"));
        }
        if self.x.nrows() != n || self.v.nrows() != n {
            return Err(Error::construction(format!(
                "agent count mismatch: x has {}, v has {}, beta has {n}",
                self.x.nrows(),
                self.v.nrows()
            )));
        }
        if self.x.ncols() != self.v.ncols() || self.x.ncols() == 0 {
            return Err(Error::construction("positions and velocities must share a positive dimension"));
        }
        if !self.t.is_finite() {
            return Err(Error::construction("time must be finite"));
        }
        if self.x.iter().chain(self.v.iter()).any(|z| !z.is_finite()) {
            return Err(Error::construction("positions and velocities must be finite"));
        }
        if let Some(b) = self.beta.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(Error::construction(format!("coldness {b} must be positive and finite")));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.beta.len()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn theta(&self) -> DVector<f64> {
        self.beta.map(|b| 1.0 / b)
    }

    pub fn beta_min(&self) -> f64 {
        self.beta.min()
    }

    pub fn beta_max(&self) -> f64 {
        self.beta.max()
    }
}

/// Topology plus the two communication kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    graph: Digraph,
    phi: CommKernel,
    zeta: CommKernel,
    gamma: usize,
}

impl ModelSpec {
    /// Fails with [`Error::NoSpanningTree`] when the digraph is not rooted.
    pub fn new(graph: Digraph, phi: CommKernel, zeta: CommKernel) -> Result<Self> {
        let gamma = graph.smallest_depth()?;
        Ok(Self { graph, phi, zeta, gamma })
    }

    pub fn graph(&self) -> &Digraph {
        &self.graph
    }

    pub fn phi(&self) -> &CommKernel {
        &self.phi
    }

    pub fn zeta(&self) -> &CommKernel {
        &self.zeta
    }

    /// Smallest spanning-tree depth of the topology.
    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    fn check_state(&self, s: &EnsembleState) -> Result<()> {
        if s.n() != self.n() {
            return Err(Error::domain(format!(
                "state has {} agents but the digraph has {}",
                s.n(),
                self.n()
            )));
        }
        Ok(())
    }
}

/// Pairwise kernel weights `chi_ij kernel(|x_i - x_j|)`, zero off the graph.
struct Weights {
    phi: Matrix,
    zeta: Matrix,
}

fn weights(x: &Matrix, m: &ModelSpec) -> Result<Weights> {
    let n = x.nrows();
    let d = x.ncols();
    let mut phi = Matrix::zeros(n, n);
    let mut zeta = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if !m.graph.chi(i, j) {
                continue;
            }
            let r = if i == j {
                0.0
            } else {
                (0..d).map(|k| (x[(i, k)] - x[(j, k)]).powi(2)).sum::<f64>().sqrt()
            };
            if !r.is_finite() {
                return Err(Error::Numeric(format!("distance between agents {i} and {j} is not finite")));
            }
            phi[(i, j)] = m.phi.eval_unchecked(r);
            zeta[(i, j)] = m.zeta.eval_unchecked(r);
        }
    }
    Ok(Weights { phi, zeta })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    pub dx: Matrix,
    pub dv: Matrix,
    pub dbeta: DVector<f64>,
}

fn rhs_raw(x: &Matrix, v: &Matrix, beta: &DVector<f64>, m: &ModelSpec) -> Result<Derivative> {
    let n = beta.len();
    let d = x.ncols();
    let w = weights(x, m)?;
    let inv_n = 1.0 / n as f64;
    let mut dv = Matrix::zeros(n, d);
    let mut dbeta = DVector::zeros(n);
    for i in 0..n {
        let bi = beta[i];
        let mut acc_b = 0.0;
        for j in 0..n {
            // the self-loop term vanishes identically
            if i == j || !m.graph.chi(i, j) {
                continue;
            }
            let bj = beta[j];
            let p = w.phi[(i, j)];
            for k in 0..d {
                dv[(i, k)] += p * (bj * v[(j, k)] - bi * v[(i, k)]);
            }
            acc_b += w.zeta[(i, j)] * (bj - bi);
        }
        dbeta[i] = inv_n * bi * bi * acc_b;
        for k in 0..d {
            dv[(i, k)] *= inv_n;
        }
    }
    let out = Derivative { dx: v.clone(), dv, dbeta };
    if out.dv.iter().chain(out.dbeta.iter()).any(|z| !z.is_finite()) {
        return Err(Error::Numeric("right-hand side is not finite".into()));
    }
    Ok(out)
}

/// Vector field of the continuous model at `s`.
pub fn rhs_continuous(s: &EnsembleState, m: &ModelSpec) -> Result<Derivative> {
    m.check_state(s)?;
    rhs_raw(&s.x, &s.v, &s.beta, m)
}

fn check_step(h: f64) -> Result<()> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::domain(format!("step size {h} must be positive and finite")));
    }
    Ok(())
}

fn stage(s: &EnsembleState, k: &Derivative, a: f64) -> (Matrix, Matrix, DVector<f64>) {
    (&s.x + &k.dx * a, &s.v + &k.dv * a, &s.beta + &k.dbeta * a)
}

fn rk4_increment(s: &EnsembleState, m: &ModelSpec, h: f64) -> Result<[Derivative; 4]> {
    let k1 = rhs_raw(&s.x, &s.v, &s.beta, m)?;
    let (x2, v2, b2) = stage(s, &k1, 0.5 * h);
    let k2 = rhs_raw(&x2, &v2, &b2, m)?;
    let (x3, v3, b3) = stage(s, &k2, 0.5 * h);
    let k3 = rhs_raw(&x3, &v3, &b3, m)?;
    let (x4, v4, b4) = stage(s, &k3, h);
    let k4 = rhs_raw(&x4, &v4, &b4, m)?;
    Ok([k1, k2, k3, k4])
}

fn combine(s: &EnsembleState, k: &[Derivative; 4], h: f64, t_new: f64) -> Result<EnsembleState> {
    let c = h / 6.0;
    let x = &s.x + (&k[0].dx + &k[1].dx * 2.0 + &k[2].dx * 2.0 + &k[3].dx) * c;
    let v = &s.v + (&k[0].dv + &k[1].dv * 2.0 + &k[2].dv * 2.0 + &k[3].dv) * c;
    let beta = &s.beta + (&k[0].dbeta + &k[1].dbeta * 2.0 + &k[2].dbeta * 2.0 + &k[3].dbeta) * c;
    if let Some(b) = beta.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
        return Err(Error::Integration {
            t: t_new,
            reason: format!("coldness became {b}; reduce the step size"),
        });
    }
    if x.iter().chain(v.iter()).any(|z| !z.is_finite()) {
        return Err(Error::Integration { t: t_new, reason: "state is no longer finite".into() });
    }
    Ok(EnsembleState { t: t_new, x, v, beta })
}

/// One classical RK4 step of size `h`.
pub fn step_rk4(s: &EnsembleState, m: &ModelSpec, h: f64) -> Result<EnsembleState> {
    check_step(h)?;
    m.check_state(s)?;
    let k = rk4_increment(s, m, h)?;
    combine(s, &k, h, s.t + h)
}

/// Diameter diagnostics of one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diameters {
    pub dx: f64,
    pub dv: f64,
    pub dbeta: f64,
    pub dtheta: f64,
    /// `max_i |beta_i v_i|`
    pub ru: f64,
}

fn row_spread(z: &Matrix) -> f64 {
    let (n, d) = z.shape();
    let mut best: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let r2: f64 = (0..d).map(|k| (z[(i, k)] - z[(j, k)]).powi(2)).sum();
            best = best.max(r2);
        }
    }
    best.sqrt()
}

pub fn diameters(s: &EnsembleState) -> Diameters {
    let theta = s.theta();
    let ru = (0..s.n())
        .map(|i| s.beta[i] * s.v.row(i).norm())
        .fold(0.0, f64::max);
    Diameters {
        dx: row_spread(&s.x),
        dv: row_spread(&s.v),
        dbeta: s.beta.max() - s.beta.min(),
        dtheta: theta.max() - theta.min(),
        ru,
    }
}

/// Time-ordered samples of a run. Diagnostics are always recomputed from
/// the stored states.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    samples: Vec<EnsembleState>,
    uncertified_steps: usize,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a sample; times must increase strictly.
    pub fn push(&mut self, s: EnsembleState) -> Result<()> {
        if let Some(last) = self.samples.last() {
            if !(s.t > last.t) {
                return Err(Error::domain(format!(
                    "sample time {} does not follow {}",
                    s.t, last.t
                )));
            }
        }
        self.samples.push(s);
        Ok(())
    }

    pub fn samples(&self) -> &[EnsembleState] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&EnsembleState> {
        self.samples.last()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn diagnostics(&self) -> Vec<Diameters> {
        self.samples.iter().map(diameters).collect()
    }

    /// Discrete steps taken with `h` above the temperature-confinement bound.
    pub fn uncertified_steps(&self) -> usize {
        self.uncertified_steps
    }
}

/// A run that stopped early; `partial` holds everything sampled before the
/// failure.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{error}")]
pub struct Interrupted {
    pub partial: Trajectory,
    pub error: Error,
}

impl From<Interrupted> for Error {
    fn from(i: Interrupted) -> Self {
        i.error
    }
}

fn early(error: Error) -> Interrupted {
    Interrupted { partial: Trajectory::new(), error }
}

/// Number of whole steps of size `h` covering `span`, treating spans within
/// a relative `1e-9` of a multiple of `h` as exact multiples.
fn steps_covering(span: f64, h: f64) -> usize {
    let ratio = span / h;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Fixed-step RK4 from `s0.t` to `t_end`; the last step is shortened so the
/// run lands exactly on `t_end`. Every `sample_every`-th step is recorded,
/// together with the initial and final states.
pub fn simulate_continuous(
    s0: &EnsembleState,
    m: &ModelSpec,
    h: f64,
    t_end: f64,
    sample_every: usize,
) -> std::result::Result<Trajectory, Interrupted> {
    check_step(h).map_err(early)?;
    m.check_state(s0).map_err(early)?;
    s0.validate().map_err(early)?;
    if !(t_end >= s0.t) || !t_end.is_finite() {
        return Err(early(Error::domain(format!("t_end = {t_end} precedes t0 = {}", s0.t))));
    }
    if sample_every == 0 {
        return Err(early(Error::domain("sample_every must be >= 1")));
    }
    let t0 = s0.t;
    let steps = steps_covering(t_end - t0, h);
    let mut traj = Trajectory::new();
    traj.push(s0.clone()).expect("first sample");
    let mut state = s0.clone();
    for k in 1..=steps {
        let t_next = if k == steps { t_end } else { t0 + k as f64 * h };
        let step = t_next - state.t;
        let next = rk4_increment(&state, m, step).and_then(|inc| combine(&state, &inc, step, t_next));
        match next {
            Ok(s) => state = s,
            Err(error) => {
                let error = match error {
                    Error::Numeric(reason) => Error::Integration { t: t_next, reason },
                    other => other,
                };
                return Err(Interrupted { partial: traj, error });
            }
        }
        if k % sample_every == 0 || k == steps {
            traj.push(state.clone()).expect("times increase");
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteStep {
    pub state: EnsembleState,
    /// Whether `h <= 1 / (kappa2 * max_i beta_i^2)` held at the start of the step.
    pub certified: bool,
}

/// One step of the discrete model, all couplings evaluated at time `t`.
pub fn step_discrete(s: &EnsembleState, m: &ModelSpec, h: f64) -> Result<DiscreteStep> {
    check_step(h)?;
    m.check_state(s)?;
    let n = s.n();
    let d = s.dim();
    let w = weights(&s.x, m)?;
    let hn = h / n as f64;
    let x = &s.x + &s.v * h;
    let mut v = s.v.clone();
    let mut beta = s.beta.clone();
    for i in 0..n {
        let bi = s.beta[i];
        let mut acc_b = 0.0;
        for j in 0..n {
            if i == j || !m.graph.chi(i, j) {
                continue;
            }
            let bj = s.beta[j];
            let p = w.phi[(i, j)];
            for k in 0..d {
                v[(i, k)] += hn * p * (bj * s.v[(j, k)] - bi * s.v[(i, k)]);
            }
            acc_b += w.zeta[(i, j)] * (bi - bj);
        }
        let increment = hn * acc_b;
        if increment != 0.0 {
            let reciprocal = 1.0 / bi + increment;
            if !(reciprocal.is_finite() && reciprocal > 0.0) {
                return Err(Error::Integration {
                    t: s.t + h,
                    reason: format!("reciprocal coldness of agent {i} became {reciprocal}; reduce h"),
                });
            }
            beta[i] = 1.0 / reciprocal;
        }
    }
    if x.iter().chain(v.iter()).any(|z| !z.is_finite()) {
        return Err(Error::Integration { t: s.t + h, reason: "state is no longer finite".into() });
    }
    let certified = h * m.zeta.kappa() * s.beta_max().powi(2) <= 1.0;
    Ok(DiscreteStep { state: EnsembleState { t: s.t + h, x, v, beta }, certified })
}

/// Iterates [`step_discrete`] `n_steps` times; sample `k` sits at
/// `s0.t + k h`.
pub fn simulate_discrete(
    s0: &EnsembleState,
    m: &ModelSpec,
    h: f64,
    n_steps: usize,
    sample_every: usize,
) -> std::result::Result<Trajectory, Interrupted> {
    check_step(h).map_err(early)?;
    m.check_state(s0).map_err(early)?;
    s0.validate().map_err(early)?;
    if sample_every == 0 {
        return Err(early(Error::domain("sample_every must be >= 1")));
    }
    let mut traj = Trajectory::new();
    traj.push(s0.clone()).expect("first sample");
    let mut state = s0.clone();
    for k in 1..=n_steps {
        match step_discrete(&state, m, h) {
            Ok(step) => {
                if !step.certified {
                    traj.uncertified_steps += 1;
                }
                state = step.state;
                state.t = s0.t + k as f64 * h;
            }
            Err(error) => return Err(Interrupted { partial: traj, error }),
        }
        if k % sample_every == 0 || k == n_steps {
            traj.push(state.clone()).expect("times increase");
        }
    }
    Ok(traj)
}

fn laplacian(a: &Matrix) -> Matrix {
    let n = a.nrows();
    let mut l = -a.clone();
    for i in 0..n {
        // the diagonal of `a` cancels against its own row sum
        l[(i, i)] = (0..n).filter(|&j| j != i).map(|j| a[(i, j)]).sum();
    }
    l
}

fn coldness_generator_raw(x: &Matrix, beta: &DVector<f64>, m: &ModelSpec) -> Result<Matrix> {
    let w = weights(x, m)?;
    let n = beta.len();
    let mut g = laplacian(&w.zeta);
    for i in 0..n {
        let scale = -beta[i] * beta[i] / n as f64;
        g.row_mut(i).scale_mut(scale);
    }
    Ok(g)
}

fn velocity_generator_raw(x: &Matrix, beta: &DVector<f64>, m: &ModelSpec) -> Result<(Matrix, Matrix)> {
    let w = weights(x, m)?;
    let n = beta.len();
    let mut g = laplacian(&w.phi);
    let mut coupling = w.phi.clone();
    for i in 0..n {
        g.row_mut(i).scale_mut(-beta[i] / n as f64);
        for j in 0..n {
            coupling[(i, j)] *= beta[j] - beta[i];
        }
    }
    Ok((g, coupling))
}

/// `-(1/N) Gamma^2 L` with `L` the zeta-weighted Laplacian and
/// `Gamma = diag(beta)`; `beta' = G beta`.
pub fn coldness_generator(s: &EnsembleState, m: &ModelSpec) -> Result<Matrix> {
    m.check_state(s)?;
    coldness_generator_raw(&s.x, &s.beta, m)
}

/// Returns `(-(1/N) Gamma L~, (1/N) B V)` where `L~` is the phi-weighted
/// Laplacian and `B_ij = chi_ij phi_ij (beta_j - beta_i)`; `v' = G v + residual`.
pub fn velocity_generator(s: &EnsembleState, m: &ModelSpec) -> Result<(Matrix, Matrix)> {
    m.check_state(s)?;
    let (g, coupling) = velocity_generator_raw(&s.x, &s.beta, m)?;
    let residual = (coupling * &s.v) / s.n() as f64;
    Ok((g, residual))
}

/// Transition matrices of the coldness and velocity generators over one
/// window, obtained by integrating them jointly with the state.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTransition {
    pub end: EnsembleState,
    pub coldness: Matrix,
    pub velocity: Matrix,
    /// Largest position diameter seen at the step points of the window.
    pub max_dx: f64,
}

/// Advances `s` by `steps` RK4 steps of size `h` while carrying the
/// state-transition matrices `Phi' = G(t) Phi` of both generators.
pub fn window_transition(s: &EnsembleState, m: &ModelSpec, h: f64, steps: usize) -> Result<WindowTransition> {
    check_step(h)?;
    m.check_state(s)?;
    let n = s.n();
    let mut state = s.clone();
    let mut cold = Matrix::identity(n, n);
    let mut vel = Matrix::identity(n, n);
    let mut max_dx = row_spread(&s.x);
    let gens = |x: &Matrix, b: &DVector<f64>| -> Result<(Matrix, Matrix)> {
        Ok((coldness_generator_raw(x, b, m)?, velocity_generator_raw(x, b, m)?.0))
    };
    let t0 = s.t;
    for k in 1..=steps {
        let k_state = rk4_increment(&state, m, h)?;
        // generators at the four RK4 stage states
        let (c1, v1) = gens(&state.x, &state.beta)?;
        let (x2, _, b2) = stage(&state, &k_state[0], 0.5 * h);
        let (c2, v2) = gens(&x2, &b2)?;
        let (x3, _, b3) = stage(&state, &k_state[1], 0.5 * h);
        let (c3, v3) = gens(&x3, &b3)?;
        let (x4, _, b4) = stage(&state, &k_state[2], h);
        let (c4, v4) = gens(&x4, &b4)?;
        cold = rk4_matrix_step(&cold, [&c1, &c2, &c3, &c4], h);
        vel = rk4_matrix_step(&vel, [&v1, &v2, &v3, &v4], h);
        state = combine(&state, &k_state, h, t0 + k as f64 * h)?;
        max_dx = max_dx.max(row_spread(&state.x));
    }
    Ok(WindowTransition { end: state, coldness: cold, velocity: vel, max_dx })
}

fn rk4_matrix_step(phi: &Matrix, g: [&Matrix; 4], h: f64) -> Matrix {
    let k1 = g[0] * phi;
    let k2 = g[1] * (phi + &k1 * (0.5 * h));
    let k3 = g[2] * (phi + &k2 * (0.5 * h));
    let k4 = g[3] * (phi + &k3 * h);
    phi + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}
