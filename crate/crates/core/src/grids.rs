//! Evaluation grids on (0, L) and grid-based essential suprema.
//!
//! Essential suprema are estimated as grid maxima followed by a local
//! refinement pass around the running maximizer. All weight families served
//! by this crate are piecewise continuous, so the grid maximum is a
//! consistent estimator; this is a documented restriction, not a theorem.

use crate::error::{CoreError, Result};
use crate::real::Real;
use crate::weights::Domain;

pub const DEFAULT_ESUP_TOL: f64 = 1e-6;
pub const DEFAULT_OUTER_N: usize = 2048;
pub const DEFAULT_INNER_N: usize = 512;

/// Logarithmic grids span [l_eff * SPAN_EPS, l_eff * (1 - SPAN_EPS)].
const SPAN_EPS: f64 = 1e-8;

/// Open-edge supremum refinement descends to l_eff * EDGE_FLOOR_FACTOR.
pub const EDGE_FLOOR_FACTOR: f64 = 1e-54;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridMode {
    Linear,
    Logarithmic,
    Hybrid,
}

#[derive(Clone, Debug)]
pub struct Grid<F> {
    points: Vec<F>,
    mode: GridMode,
    l_eff: F,
    domain_infinite: bool,
}

impl<F: Real> Grid<F> {
    pub fn points(&self) -> &[F] {
        &self.points
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }

    pub fn l_eff(&self) -> F {
        self.l_eff
    }

    pub fn domain_infinite(&self) -> bool {
        self.domain_infinite
    }

    pub fn min(&self) -> F {
        self.points[0]
    }

    pub fn max(&self) -> F {
        *self.points.last().unwrap()
    }

    /// Points strictly inside (a, b).
    pub fn window(&self, a: F, b: F) -> &[F] {
        let lo = self.points.partition_point(|&t| t <= a);
        let hi = self.points.partition_point(|&t| t < b);
        &self.points[lo..hi]
    }
}

pub fn build_grid<F: Real>(domain: &Domain<F>, n: usize, mode: GridMode) -> Result<Grid<F>> {
    if n < 8 {
        return Err(CoreError::BadCount(n));
    }
    let l = domain.l_eff();
    let eps = F::of(SPAN_EPS);
    let lo = l * eps;
    let hi = l * (F::one() - eps);
    let mut points = Vec::with_capacity(n);
    match mode {
        GridMode::Linear => {
            // n equispaced interior points: l * i / (n + 1).
            let step = l / F::from_usize(n + 1).unwrap();
            for i in 1..=n {
                points.push(step * F::from_usize(i).unwrap());
            }
        }
        GridMode::Logarithmic => {
            let ratio = (hi / lo).powf(F::one() / F::from_usize(n - 1).unwrap());
            let mut x = lo;
            for _ in 0..n {
                points.push(x);
                x = x * ratio;
            }
            *points.last_mut().unwrap() = hi;
        }
        GridMode::Hybrid => {
            // Log-dense near 0 on the lower half, reflected log-dense near L
            // on the upper half.
            let half = n / 2;
            let mid = l * F::of(0.5);
            let ratio = (mid / lo).powf(F::one() / F::from_usize(half).unwrap());
            let mut x = lo;
            for _ in 0..half {
                points.push(x);
                x = x * ratio;
            }
            let rest = n - half;
            let gap_ratio = ((l - hi) / mid).powf(F::one() / F::from_usize(rest).unwrap());
            let mut gap = mid;
            for _ in 0..rest {
                points.push(l - gap);
                gap = gap * gap_ratio;
            }
            points.sort_by(|a, b| a.partial_cmp(b).unwrap());
            points.dedup();
        }
    }
    Ok(Grid {
        points,
        mode,
        l_eff: l,
        domain_infinite: domain.is_infinite(),
    })
}

/// Inserts 2*depth points geometrically bracketing `around`, dedups, and
/// keeps the result strictly increasing.
pub fn refine<F: Real>(grid: &Grid<F>, around: F, depth: usize) -> Grid<F> {
    let mut points = grid.points.clone();
    let mut fac = F::of(0.5);
    for _ in 0..depth {
        let lo = around * (F::one() - fac);
        let hi = around * (F::one() + fac);
        if lo > F::zero() {
            points.push(lo);
        }
        if hi < grid.l_eff {
            points.push(hi);
        }
        fac = fac * F::of(0.5);
    }
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup();
    Grid {
        points,
        mode: grid.mode,
        l_eff: grid.l_eff,
        domain_infinite: grid.domain_infinite,
    }
}

/// Grid maximum of `f` over the window (a, b), then a refinement pass that
/// inserts points around the running maximizer until the relative change
/// drops below `tol`. Returns +inf as soon as any evaluation is +inf;
/// NaN evaluations are skipped.
pub fn esup_on<F: Real>(f: impl Fn(F) -> F, window: (F, F), grid: &Grid<F>, tol: F) -> Result<F> {
    let (a, b) = window;
    let pts = grid.window(a, b);
    if pts.is_empty() {
        return Err(CoreError::EmptyWindow(a.to_f64_lossy(), b.to_f64_lossy()));
    }
    let mut best = F::neg_infinity();
    let mut best_t = pts[0];
    for &t in pts {
        let v = f(t);
        if v == F::infinity() {
            return Ok(v);
        }
        if v.is_nan() {
            continue;
        }
        if v > best {
            best = v;
            best_t = t;
        }
    }
    if best == F::neg_infinity() {
        // Every evaluation was NaN.
        return Err(CoreError::NonFinite("esup integrand".into()));
    }
    let grid_best = best;

    // Refinement: bracket the maximizer between its window neighbours and
    // keep inserting probes. Open edges at 0 descend geometrically down to
    // l_eff * 1e-54, inside the range where the cumulative caches are exact,
    // so suprema approached at the left edge are probed reproducibly.
    let floor = grid.l_eff * F::of(EDGE_FLOOR_FACTOR);
    let mut lo_nb = a;
    let mut hi_nb = b.min(grid.l_eff);
    for &t in pts {
        if t < best_t && t > lo_nb {
            lo_nb = t;
        }
        if t > best_t && t < hi_nb {
            hi_nb = t;
        }
    }
    let max_iter = 600;
    let mut cur = best;
    let mut cur_t = best_t;
    let mut lo = lo_nb;
    let mut hi = hi_nb;
    for _ in 0..max_iter {
        let mut candidates = Vec::with_capacity(2);
        // Probe below. An open left edge is descended geometrically down to
        // the floor; otherwise the bracket is narrowed.
        if lo > F::zero() {
            let m = geo_mid(lo, cur_t);
            if m > lo && m < cur_t {
                candidates.push(m);
            }
        } else {
            let m = cur_t * F::of(0.1);
            if m >= floor {
                candidates.push(m);
            }
        }
        // Probe above.
        let m = geo_mid(cur_t, hi);
        if m > cur_t && m < hi {
            candidates.push(m);
        }
        if candidates.is_empty() {
            break;
        }
        for t in candidates {
            let v = f(t);
            if v == F::infinity() {
                return Ok(v);
            }
            if v.is_nan() {
                continue;
            }
            if v > cur {
                if t < cur_t {
                    hi = cur_t;
                } else {
                    lo = cur_t;
                }
                cur = v;
                cur_t = t;
            } else if t < cur_t && t > lo {
                lo = t;
            } else if t > cur_t && t < hi {
                hi = t;
            }
        }
        if lo > F::zero() {
            // Interior maximizer: stop once the bracket is tight.
            if hi - lo <= tol * cur_t {
                break;
            }
        } else if cur_t <= floor {
            break;
        }
    }
    // A maximizer pinned at the descent floor whose value kept growing far
    // beyond anything seen on the grid marks a supremum that does not
    // stabilize: report it as infinite. Growth slower than the detection
    // factor (e.g. 1/log divergence) is reported at floor resolution.
    if cur_t <= floor * F::of(100.0) && cur > grid_best * F::of(50.0) {
        return Ok(F::infinity());
    }
    Ok(cur)
}

fn geo_mid<F: Real>(a: F, b: F) -> F {
    if a > F::zero() && b / a > F::of(4.0) {
        (a * b).sqrt()
    } else {
        (a + b) * F::of(0.5)
    }
}

/// Cheap inner esup: max over the supplied points inside the window plus a
/// fixed number of geometric refinement probes around the maximizer.
pub fn esup_quick<F: Real>(f: impl Fn(F) -> F, window: (F, F), pts: &[F]) -> F {
    let (a, b) = window;
    let mut best = F::neg_infinity();
    let mut best_t = F::nan();
    for &t in pts {
        if t <= a || t >= b {
            continue;
        }
        let v = f(t);
        if v == F::infinity() {
            return v;
        }
        if v > best {
            best = v;
            best_t = t;
        }
    }
    if !best_t.is_nan() {
        let mut lo = a.max(best_t * F::of(0.25));
        let mut hi = b;
        let mut t = best_t;
        for _ in 0..16 {
            let cl = geo_mid(lo.max(F::min_positive_value()), t);
            let ch = geo_mid(t, hi);
            for c in [cl, ch] {
                if c <= a || c >= b {
                    continue;
                }
                let v = f(c);
                if v == F::infinity() {
                    return v;
                }
                if v > best {
                    best = v;
                    if c < t {
                        hi = t;
                    } else {
                        lo = t;
                    }
                    t = c;
                }
            }
        }
    }
    if best == F::neg_infinity() {
        F::zero()
    } else {
        best
    }
}
