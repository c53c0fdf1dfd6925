//! Parameter grids and one-dimensional search.

use crate::error::{Error, Result};

/// Inclusive arithmetic range. The stop value is included when `step`
/// divides the span (up to rounding).
pub fn range_inclusive(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite() && start.is_finite() && stop.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad range {start}:{stop}:{step}")));
    }
    if stop < start {
        return Err(Error::InvalidArgument(format!("range stop {stop} is below start {start}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    // Index-based generation avoids accumulating rounding error.
    Ok((0..count).map(|k| round_grid(start + k as f64 * step)).collect())
}

fn round_grid(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

/// Parses `start:stop:step` (or a single value) into a grid.
pub fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad number '{s}' in range '{spec}'")))
    };
    match parts.as_slice() {
        [v] => Ok(vec![num(v)?]),
        [a, b, c] => range_inclusive(num(a)?, num(b)?, num(c)?),
        _ => Err(Error::InvalidArgument(format!("expected start:stop:step, got '{spec}'"))),
    }
}

/// Index of the smallest value; ties resolve to the lowest index.
pub fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some(b) if values[b] <= *v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Golden-section search for a minimum of `f` on `[lo, hi]`.
pub fn golden_section(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    while hi - lo > tol {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    if fa <= fb {
        (a, fa)
    } else {
        (b, fb)
    }
}

/// Dense grid search over `grid` followed by golden-section refinement in the
/// neighbouring cells. The refined point is only kept if it does not lose to
/// the best grid point, so the result is never worse than the grid minimum.
pub fn grid_then_refine(mut f: impl FnMut(f64) -> f64, grid: &[f64], tol: f64) -> Result<(f64, f64)> {
    let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let i = argmin(&values).ok_or(Error::EmptyGrid)?;
    let lo = if i > 0 { grid[i - 1] } else { grid[i] };
    let hi = if i + 1 < grid.len() { grid[i + 1] } else { grid[i] };
    if hi - lo <= tol {
        return Ok((grid[i], values[i]));
    }
    let (x, fx) = golden_section(&mut f, lo, hi, tol);
    if fx < values[i] {
        Ok((x, fx))
    } else {
        Ok((grid[i], values[i]))
    }
}
