use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use super::SolverReport;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxQnConfig {
    /// Outer quasi-Newton iterations.
    pub max_iterations: usize,
    /// Correction pairs kept for the inverse Hessian approximation.
    pub memory: usize,
    /// Stop once the projected gradient's infinity norm falls below this.
    pub gradient_tolerance: f64,
    pub max_backtracks: usize,
}

impl Default for BoxQnConfig {
    fn default() -> Self {
        Self {
            max_iterations: 3,
            memory: 8,
            gradient_tolerance: 1e-10,
            max_backtracks: 40,
        }
    }
}

impl BoxQnConfig {
    pub fn with_iterations(max_iterations: usize) -> Self {
        Self {
            max_iterations,
            ..Self::default()
        }
    }
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, &l), &h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(l, h);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((&xi, &gi), (&l, &h))| ((xi - gi).clamp(l, h) - xi).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes a smooth objective over the box `lo ≤ x ≤ hi` with a
/// limited-memory quasi-Newton method. The search direction comes from the
/// L-BFGS two-loop recursion on the variables that are not held at a bound,
/// and the step is a backtracking search along the projected path.
///
/// `objective(x, grad)` returns the value and writes the gradient. `x0` is
/// projected onto the box before the first evaluation.
pub fn box_qn_minimize<F>(
    mut objective: F,
    lo: &[f64],
    hi: &[f64],
    x0: &[f64],
    cfg: &BoxQnConfig,
) -> Result<(Vec<f64>, SolverReport)>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    Error::check_len("lower bounds", n, lo.len())?;
    Error::check_len("upper bounds", n, hi.len())?;
    if let Some(index) = (0..n).find(|&i| lo[i] > hi[i]) {
        return Err(Error::BoundInversion { index });
    }
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let mut g = vec![0.0; n];
    let mut fx = objective(&x, &mut g);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("objective at the starting point"));
    }

    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut pg = projected_gradient_norm(&x, &g, lo, hi);
    let mut iterations = 0;
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];

    while iterations < cfg.max_iterations && pg > cfg.gradient_tolerance {
        iterations += 1;
        // Variables pinned at a bound by the gradient stay fixed this iteration.
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
            .collect();
        let mut d: Vec<f64> = g
            .iter()
            .zip(&free)
            .map(|(&gi, &f)| if f { gi } else { 0.0 })
            .collect();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
        for (di, &f) in d.iter_mut().zip(&free) {
            *di = if f { -*di } else { 0.0 };
        }
        if dot(&d, &g) >= 0.0 {
            pairs.clear();
            for i in 0..n {
                d[i] = if free[i] { -g[i] } else { 0.0 };
            }
        }
        let mut step = if pairs.is_empty() {
            let norm = dot(&d, &d).sqrt();
            if norm > 0.0 {
                (1.0 / norm).min(1.0)
            } else {
                1.0
            }
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            for i in 0..n {
                trial[i] = x[i] + step * d[i];
            }
            project(&mut trial, lo, hi);
            let ft = objective(&trial, &mut g_trial);
            let decrease: f64 = g
                .iter()
                .zip(trial.iter().zip(&x))
                .map(|(gi, (t, xi))| gi * (t - xi))
                .sum();
            if ft.is_finite() && ft <= fx + 1e-4 * decrease && g_trial.iter().all(|v| v.is_finite())
            {
                accepted = (ft <= fx).then_some(ft);
                break;
            }
            step *= 0.5;
        }
        let Some(f_new) = accepted else {
            break;
        };
        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_trial.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        core::mem::swap(&mut x, &mut trial);
        core::mem::swap(&mut g, &mut g_trial);
        let prev = fx;
        fx = f_new;
        pg = projected_gradient_norm(&x, &g, lo, hi);
        if prev - fx <= f64::EPSILON * fx.abs().max(f64::MIN_POSITIVE)
            && pg > cfg.gradient_tolerance
        {
            // No measurable progress left at double precision.
            break;
        }
    }
    Ok((
        x,
        SolverReport {
            iterations,
            objective: fx,
            converged: pg <= cfg.gradient_tolerance,
            gradient_norm: pg,
        },
    ))
}
