//! Nonnegative and stochastic matrix machinery: the ergodicity coefficient,
//! scrambling tests, the row-diameter contraction estimate, and
//! state-transition matrices of linear time-varying systems.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::Digraph;

pub type Matrix = DMatrix<f64>;

/// Row-sum tolerance for matrices handed in as stochastic.
pub const STOCHASTIC_INPUT_TOL: f64 = 1e-12;
/// Row-sum tolerance for computed transition matrices.
pub const STOCHASTIC_COMPUTED_TOL: f64 = 1e-10;
/// Default Peano–Baker truncation order.
pub const PEANO_BAKER_ORDER: usize = 12;
/// Default number of quadrature panels per Peano–Baker level.
pub const PEANO_BAKER_PANELS: usize = 64;

fn check_square_nonnegative(a: &Matrix) -> Result<()> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(Error::domain(format!(
            "expected a nonempty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if let Some(x) = a.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::domain(format!("entry {x} is not a finite nonnegative number")));
    }
    Ok(())
}

/// `mu(a) = min_{i,j} sum_k min(a_ik, a_jk)`.
///
/// The diagonal pairs `i == j` are included; they never attain the minimum
/// for `n >= 2` and give `mu = a_11` when `n == 1`.
pub fn ergodicity_coefficient(a: &Matrix) -> Result<f64> {
    check_square_nonnegative(a)?;
    let n = a.nrows();
    let mut mu = f64::INFINITY;
    for i in 0..n {
        for j in i..n {
            let overlap: f64 = (0..n).map(|k| a[(i, k)].min(a[(j, k)])).sum();
            mu = mu.min(overlap);
        }
    }
    Ok(mu)
}

/// Every pair of rows shares a positive column.
pub fn is_scrambling(a: &Matrix) -> Result<bool> {
    Ok(ergodicity_coefficient(a)? > 0.0)
}

pub fn min_positive_entry(a: &Matrix) -> Result<f64> {
    a.iter()
        .copied()
        .filter(|&x| x > 0.0)
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::domain("matrix has no positive entry"))
}

pub fn is_stochastic(a: &Matrix, tol: f64) -> bool {
    a.is_square()
        && a.iter().all(|&x| x >= 0.0 && x.is_finite())
        && a.row_iter().all(|row| (row.sum() - 1.0).abs() <= tol)
}

/// Largest Euclidean distance between two rows.
pub fn row_diameter(z: &Matrix) -> f64 {
    let n = z.nrows();
    let mut best: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (z.row(i) - z.row(j)).norm();
            best = best.max(d);
        }
    }
    best
}

/// `a^k` by repeated squaring; `a^0 = I`.
pub fn matrix_power(a: &Matrix, mut k: usize) -> Matrix {
    let n = a.nrows();
    let mut result = Matrix::identity(n, n);
    let mut base = a.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBound {
    /// `mu(a^gamma)`
    pub lhs: f64,
    /// `(min positive entry of a)^gamma`
    pub rhs: f64,
    pub holds: bool,
}

/// Evaluates both sides of `mu(a^gamma) >= underline(a)^gamma` for a
/// nonnegative matrix with positive diagonal whose support digraph has a
/// spanning tree of smallest depth `gamma`.
pub fn lemma21_bound_check(a: &Matrix, gamma: usize) -> Result<PowerBound> {
    check_square_nonnegative(a)?;
    if let Some(i) = (0..a.nrows()).find(|&i| a[(i, i)] <= 0.0) {
        return Err(Error::domain(format!("diagonal entry {i} is not positive")));
    }
    let depth = Digraph::from_support(a)?
        .smallest_depth()
        .map_err(|_| Error::domain("support digraph has no spanning tree"))?;
    if depth != gamma {
        return Err(Error::domain(format!(
            "gamma = {gamma} but the support digraph has smallest depth {depth}"
        )));
    }
    let exponent = i32::try_from(gamma).map_err(|_| Error::domain("gamma too large"))?;
    let lhs = ergodicity_coefficient(&matrix_power(a, gamma))?;
    let rhs = min_positive_entry(a)?.powi(exponent);
    Ok(PowerBound { lhs, rhs, holds: lhs >= rhs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionStep {
    pub w: Matrix,
    pub diam_w: f64,
    pub bound: f64,
}

/// `w = a z + b` together with the estimate
/// `diam(w) <= (1 - mu(a)) diam(z) + sqrt(2) |b|_F` for stochastic `a`.
pub fn contraction_step(a: &Matrix, z: &Matrix, b: &Matrix) -> Result<ContractionStep> {
    check_square_nonnegative(a)?;
    if !is_stochastic(a, STOCHASTIC_INPUT_TOL) {
        return Err(Error::domain("matrix is not stochastic"));
    }
    if z.nrows() != a.ncols() || b.shape() != (a.nrows(), z.ncols()) {
        return Err(Error::domain(format!(
            "shape mismatch: a {:?}, z {:?}, b {:?}",
            a.shape(),
            z.shape(),
            b.shape()
        )));
    }
    let w = a * z + b;
    let diam_w = row_diameter(&w);
    let bound = (1.0 - ergodicity_coefficient(a)?) * row_diameter(z) + 2f64.sqrt() * b.norm();
    Ok(ContractionStep { w, diam_w, bound })
}

fn checked_generator<F>(gen: &F, t: f64) -> Result<Matrix>
where
    F: Fn(f64) -> Matrix,
{
    let g = gen(t);
    if !g.is_square() {
        return Err(Error::Numeric(format!("generator at t = {t} is not square")));
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!("generator at t = {t} has a non-finite entry")));
    }
    Ok(g)
}

/// State-transition matrix `Phi(t1, t0)` of `xi' = gen(t) xi`, integrated
/// with `steps` classical RK4 steps from the identity.
pub fn transition_matrix_ode<F>(gen: F, t0: f64, t1: f64, steps: usize) -> Result<Matrix>
where
    F: Fn(f64) -> Matrix,
{
    if !(t1 >= t0) || steps == 0 {
        return Err(Error::domain("need t1 >= t0 and at least one step"));
    }
    let n = checked_generator(&gen, t0)?.nrows();
    let mut phi = Matrix::identity(n, n);
    if t1 == t0 {
        return Ok(phi);
    }
    let h = (t1 - t0) / steps as f64;
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let g1 = checked_generator(&gen, t)?;
        let g2 = checked_generator(&gen, t + 0.5 * h)?;
        let g4 = checked_generator(&gen, t + h)?;
        let k1 = &g1 * &phi;
        let k2 = &g2 * (&phi + &k1 * (0.5 * h));
        let k3 = &g2 * (&phi + &k2 * (0.5 * h));
        let k4 = &g4 * (&phi + &k3 * h);
        phi += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    if phi.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("transition matrix overflowed".into()));
    }
    Ok(phi)
}

/// Truncated Peano–Baker series `I + sum_{n=1..order} P_n(t1)` where
/// `P_n(t) = int_{t0}^{t} gen(s) P_{n-1}(s) ds` and `P_0 = I`.
///
/// Each level is integrated cumulatively on `panels` uniform panels using
/// Simpson's rule at panel ends and a three-point rule at panel midpoints,
/// so every level keeps fourth-order accuracy.
pub fn peano_baker<F>(gen: F, t0: f64, t1: f64, order: usize, panels: usize) -> Result<Matrix>
where
    F: Fn(f64) -> Matrix,
{
    if !(t1 >= t0) || panels == 0 {
        return Err(Error::domain("need t1 >= t0 and at least one panel"));
    }
    let n = checked_generator(&gen, t0)?.nrows();
    let identity = Matrix::identity(n, n);
    if order == 0 || t1 == t0 {
        return Ok(identity);
    }
    // nodes at panel ends and midpoints
    let nodes = 2 * panels + 1;
    let eta = (t1 - t0) / (2 * panels) as f64;
    let gens = (0..nodes)
        .map(|k| checked_generator(&gen, t0 + k as f64 * eta))
        .collect::<Result<Vec<_>>>()?;

    let mut previous: Vec<Matrix> = vec![identity.clone(); nodes];
    let mut total = identity;
    for _level in 1..=order {
        let integrand: Vec<Matrix> = gens.iter().zip(&previous).map(|(g, p)| g * p).collect();
        let mut current = vec![Matrix::zeros(n, n); nodes];
        for panel in 0..panels {
            let (a, m, b) = (2 * panel, 2 * panel + 1, 2 * panel + 2);
            let start = current[a].clone();
            current[m] = &start
                + (&integrand[a] * 5.0 + &integrand[m] * 8.0 - &integrand[b]) * (eta / 12.0);
            current[b] =
                &start + (&integrand[a] + &integrand[m] * 4.0 + &integrand[b]) * (eta / 3.0);
        }
        total += &current[nodes - 1];
        previous = current;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftCheck {
    pub lhs: Matrix,
    pub rhs: Matrix,
    pub max_abs_diff: f64,
}

/// Compares the transition matrix of `gen` with `e^{-c (t1 - t0)}` times the
/// transition matrix of `gen + c I`.
pub fn shifted_transition_check<F>(gen: F, c: f64, t0: f64, t1: f64, steps: usize) -> Result<ShiftCheck>
where
    F: Fn(f64) -> Matrix,
{
    let lhs = transition_matrix_ode(&gen, t0, t1, steps)?;
    let shifted = transition_matrix_ode(
        |t| {
            let mut g = gen(t);
            for i in 0..g.nrows().min(g.ncols()) {
                g[(i, i)] += c;
            }
            g
        },
        t0,
        t1,
        steps,
    )?;
    let rhs = shifted * (-c * (t1 - t0)).exp();
    let max_abs_diff = (&lhs - &rhs).amax();
    Ok(ShiftCheck { lhs, rhs, max_abs_diff })
}
