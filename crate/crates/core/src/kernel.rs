//! Communication weights: bounded, positive, nonincreasing, Lipschitz
//! functions of inter-agent distance.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Family {
    Constant,
    /// `kappa / (1 + r^2)^s`
    Algebraic { s: f64 },
    /// `kappa * exp(-r / ell)`
    Exponential { ell: f64 },
    /// Piecewise-linear through `(r_k, value_k)`, constant outside.
    Tabulated { table: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommKernel {
    kappa: f64,
    family: Family,
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::construction(format!("kernel peak {kappa} must be positive and finite")));
    }
    Ok(())
}

impl CommKernel {
    pub fn constant(kappa: f64) -> Result<Self> {
        check_kappa(kappa)?;
        Ok(Self { kappa, family: Family::Constant })
    }

    pub fn algebraic(kappa: f64, s: f64) -> Result<Self> {
        check_kappa(kappa)?;
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::construction(format!("algebraic exponent {s} must be >= 0")));
        }
        Ok(Self { kappa, family: Family::Algebraic { s } })
    }

    pub fn exponential(kappa: f64, ell: f64) -> Result<Self> {
        check_kappa(kappa)?;
        if !(ell.is_finite() && ell > 0.0) {
            return Err(Error::construction(format!("exponential length {ell} must be > 0")));
        }
        Ok(Self { kappa, family: Family::Exponential { ell } })
    }

    /// Breakpoints must have strictly increasing `r >= 0` and positive,
    /// nonincreasing values. The peak is the first value.
    pub fn tabulated(table: Vec<(f64, f64)>) -> Result<Self> {
        let Some(&(r0, v0)) = table.first() else {
            return Err(Error::construction("tabulated kernel needs at least one breakpoint"));
        };
        if !(r0.is_finite() && r0 >= 0.0) {
            return Err(Error::construction(format!("first breakpoint r = {r0} must be >= 0")));
        }
        for &(r, v) in &table {
            if !(r.is_finite() && v.is_finite() && v > 0.0) {
                return Err(Error::construction(format!("breakpoint ({r}, {v}) must be finite with positive value")));
            }
        }
        for pair in table.windows(2) {
            let ((ra, va), (rb, vb)) = (pair[0], pair[1]);
            if rb <= ra {
                return Err(Error::construction(format!("breakpoints not increasing at r = {rb}")));
            }
            if vb > va {
                return Err(Error::construction(format!("kernel increases between r = {ra} and r = {rb}")));
            }
        }
        check_kappa(v0)?;
        Ok(Self { kappa: v0, family: Family::Tabulated { table } })
    }

    /// `eval(0)`, the upper bound of the kernel.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::domain(format!("kernel argument {r} must be finite and >= 0")));
        }
        Ok(self.eval_unchecked(r))
    }

    /// Evaluation for distances already known to be finite and nonnegative.
    #[inline]
    pub(crate) fn eval_unchecked(&self, r: f64) -> f64 {
        match &self.family {
            Family::Constant => self.kappa,
            Family::Algebraic { s } => self.kappa / (1.0 + r * r).powf(*s),
            Family::Exponential { ell } => self.kappa * (-r / ell).exp(),
            Family::Tabulated { table } => interpolate(table, r),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::Constant => "constant",
            Family::Algebraic { .. } => "algebraic",
            Family::Exponential { .. } => "exponential",
            Family::Tabulated { .. } => "tabulated",
        }
    }
}

fn interpolate(table: &[(f64, f64)], r: f64) -> f64 {
    let first = table[0];
    let last = table[table.len() - 1];
    if r <= first.0 {
        return first.1;
    }
    if r >= last.0 {
        return last.1;
    }
    // first index with breakpoint beyond r; 1 <= idx < len
    let idx = table.partition_point(|&(rk, _)| rk <= r);
    let (ra, va) = table[idx - 1];
    let (rb, vb) = table[idx];
    let w = (r - ra) / (rb - ra);
    // convex combination keeps the value inside [vb, va]
    (va * (1.0 - w) + vb * w).clamp(vb, va)
}
