//! The discrete layer: strongly monotone sequence equivalences, the Bennett
//! characterization of discrete Hardy constants, localized constants on
//! covering intervals, the fully discretized constants C_{i,j}, and the
//! block-form inequalities whose optimal constants recover the embedding
//! constant.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::covering::CoveringSequence;
use crate::error::{CoreError, Result};
use crate::functionals::{Functionals, ParamTriple};
use crate::grids::{esup_quick, Grid};
use crate::oracle::TestFunction;
use crate::quad::gl8;
use crate::real::Real;

/// Finite sequence indexed first_index ..= first_index + len - 1.
#[derive(Clone, Debug, PartialEq)]
pub struct RealSeq<F> {
    pub first_index: isize,
    pub values: Vec<F>,
}

impl<F: Real> RealSeq<F> {
    pub fn new(first_index: isize, values: Vec<F>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite("sequence entry".into()));
        }
        Ok(RealSeq {
            first_index,
            values,
        })
    }

    pub fn from_values(values: Vec<F>) -> Result<Self> {
        Self::new(0, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Monotonicity<F> {
    /// Consecutive ratios bounded below by rho > 1.
    Increasing {
        rho: F,
    },
    /// Consecutive ratios bounded above by rho < 1.
    Decreasing {
        rho: F,
    },
    Neither,
}

/// Classifies a positive sequence by its extremal consecutive ratio.
pub fn is_strongly_monotone<F: Real>(seq: &RealSeq<F>) -> Result<Monotonicity<F>> {
    if seq.values.iter().any(|&v| !(v > F::zero())) {
        return Err(CoreError::NonPositive);
    }
    if seq.len() < 2 {
        return Ok(Monotonicity::Neither);
    }
    let mut inf_ratio = F::infinity();
    let mut sup_ratio = F::zero();
    for w in seq.values.windows(2) {
        let r = w[1] / w[0];
        inf_ratio = inf_ratio.min(r);
        sup_ratio = sup_ratio.max(r);
    }
    if inf_ratio > F::one() {
        Ok(Monotonicity::Increasing { rho: inf_ratio })
    } else if sup_ratio < F::one() {
        Ok(Monotonicity::Decreasing { rho: sup_ratio })
    } else {
        Ok(Monotonicity::Neither)
    }
}

/// The five sum/sup equivalences for strongly monotone coefficient
/// sequences.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EquivalenceForm {
    /// sum rho_k (sum_{i>=k} a_i)^p ~ sum rho_k a_k^p, rho increasing.
    IncreasingSumSum,
    /// sum rho_k (sup_{i>=k} a_i)^p ~ sum rho_k a_k^p, rho increasing.
    IncreasingSumSup,
    /// sup rho_k (sum_{i>=k} a_i)^p ~ sup rho_k a_k^p, rho increasing.
    IncreasingSupSum,
    /// sum rho_k (sum_{i<=k} a_i)^p ~ sum rho_k a_k^p, rho decreasing.
    DecreasingSumSum,
    /// sup rho_k (sum_{i<=k} a_i)^p ~ sup rho_k a_k^p, rho decreasing.
    DecreasingSupSum,
}

#[derive(Clone, Debug)]
pub struct DiscreteReport<F> {
    pub lhs: F,
    pub rhs: F,
    /// lhs / rhs; 1 by convention when both sides vanish.
    pub ratio: F,
}

pub fn strong_monotone_equivalence<F: Real>(
    rho: &RealSeq<F>,
    a: &RealSeq<F>,
    p: F,
    which: EquivalenceForm,
) -> Result<DiscreteReport<F>> {
    if rho.len() != a.len() || rho.is_empty() {
        return Err(CoreError::OutOfScope(
            "coefficient and weight sequences must have equal positive length".into(),
        ));
    }
    if a.values.iter().any(|&v| v < F::zero()) {
        return Err(CoreError::NonPositive);
    }
    let mono = is_strongly_monotone(rho)?;
    let needs_increasing = matches!(
        which,
        EquivalenceForm::IncreasingSumSum
            | EquivalenceForm::IncreasingSumSup
            | EquivalenceForm::IncreasingSupSum
    );
    match (&mono, needs_increasing) {
        (Monotonicity::Increasing { .. }, true) | (Monotonicity::Decreasing { .. }, false) => {}
        _ => return Err(CoreError::WrongMonotonicity),
    }
    let n = a.len();
    // Cumulative inner aggregates.
    let inner: Vec<F> = match which {
        EquivalenceForm::IncreasingSumSum | EquivalenceForm::IncreasingSupSum => {
            let mut acc = F::zero();
            let mut out = vec![F::zero(); n];
            for i in (0..n).rev() {
                acc = acc + a.values[i];
                out[i] = acc;
            }
            out
        }
        EquivalenceForm::IncreasingSumSup => {
            let mut acc = F::zero();
            let mut out = vec![F::zero(); n];
            for i in (0..n).rev() {
                acc = acc.max(a.values[i]);
                out[i] = acc;
            }
            out
        }
        EquivalenceForm::DecreasingSumSum | EquivalenceForm::DecreasingSupSum => {
            let mut acc = F::zero();
            let mut out = vec![F::zero(); n];
            for i in 0..n {
                acc = acc + a.values[i];
                out[i] = acc;
            }
            out
        }
    };
    let sup_form = matches!(
        which,
        EquivalenceForm::IncreasingSupSum | EquivalenceForm::DecreasingSupSum
    );
    let mut lhs = F::zero();
    let mut rhs = F::zero();
    for k in 0..n {
        let l = rho.values[k] * inner[k].powf(p);
        let r = rho.values[k] * a.values[k].powf(p);
        if sup_form {
            lhs = lhs.max(l);
            rhs = rhs.max(r);
        } else {
            lhs = lhs + l;
            rhs = rhs + r;
        }
    }
    let ratio = if rhs > F::zero() {
        lhs / rhs
    } else if lhs == F::zero() {
        F::one()
    } else {
        F::infinity()
    };
    Ok(DiscreteReport { lhs, rhs, ratio })
}

/// Bennett's closed form for the optimal constant in the weighted discrete
/// Hardy inequality, for p <= q.
pub fn discrete_hardy_d<F: Real>(
    a: &RealSeq<F>,
    b: &RealSeq<F>,
    params: &ParamTriple<F>,
) -> Result<F> {
    let ParamTriple { p, q, r } = *params;
    if p > q {
        return Err(CoreError::OutOfScope(format!(
            "Bennett form needs p <= q, got p = {p}, q = {q}"
        )));
    }
    if a.len() != b.len() || a.is_empty() {
        return Err(CoreError::OutOfScope(
            "sequences must have equal positive length".into(),
        ));
    }
    let n = a.len();
    let mut tail_a = vec![F::zero(); n];
    let mut acc = F::zero();
    for i in (0..n).rev() {
        acc = acc + a.values[i];
        tail_a[i] = acc;
    }
    let mut best = F::zero();
    if p <= r.min(q) {
        for k in 0..n {
            let v = tail_a[k].powf(F::one() / q) * b.values[k].powf(F::one() / r);
            best = best.max(v);
        }
        Ok(best)
    } else if r < p {
        let e_b = p / (p - r);
        let e_out = (p - r) / (p * r);
        let mut head_b = F::zero();
        for k in 0..n {
            head_b = head_b + b.values[k].powf(e_b);
            let v = tail_a[k].powf(F::one() / q) * head_b.powf(e_out);
            best = best.max(v);
        }
        Ok(best)
    } else {
        Err(CoreError::OutOfScope(format!(
            "parameters p = {p}, q = {q}, r = {r} fit neither Bennett branch"
        )))
    }
}

/// Budget for the multiplicative coordinate-ascent optimizers.
#[derive(Clone, Copy, Debug)]
pub struct AscentBudget {
    pub restarts: usize,
    pub sweeps: usize,
    pub seed: u64,
}

impl Default for AscentBudget {
    fn default() -> Self {
        AscentBudget {
            restarts: 32,
            sweeps: 60,
            seed: 0,
        }
    }
}

const ASCENT_FACTORS: [f64; 4] = [2.0, 0.5, 1.1, 1.0 / 1.1];

/// Generic multiplicative coordinate ascent over nonnegative coordinate
/// vectors, maximizing `objective`. Restarts are independent and run
/// concurrently; the merge takes the maximum with ties broken by restart
/// index, so the result is deterministic for a fixed seed.
pub(crate) fn coordinate_ascent<F: Real>(
    dim: usize,
    budget: &AscentBudget,
    objective: &(impl Fn(&[F]) -> F + Sync + ?Sized),
) -> (F, Vec<F>) {
    use rayon::prelude::*;
    let one_restart = |restart: usize| -> (F, Vec<F>) {
        let mut rng = ChaCha8Rng::seed_from_u64(budget.seed.wrapping_add(restart as u64));
        let mut x: Vec<F> = (0..dim)
            .map(|_| F::of(10f64.powf(rng.gen_range(-3.0..3.0))))
            .collect();
        let mut val = objective(&x);
        if !val.is_finite() {
            val = F::zero();
        }
        for _ in 0..budget.sweeps {
            let mut improved = false;
            for j in 0..dim {
                for f in ASCENT_FACTORS {
                    let saved = x[j];
                    x[j] = saved * F::of(f);
                    let v = objective(&x);
                    if v.is_finite() && v > val {
                        val = v;
                        improved = true;
                    } else {
                        x[j] = saved;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        (val, x)
    };
    let results: Vec<(F, Vec<F>)> = (0..budget.restarts.max(1))
        .into_par_iter()
        .map(one_restart)
        .collect();
    let mut best_val = F::zero();
    let mut best_x = vec![F::one(); dim];
    for (val, x) in results {
        if val > best_val {
            best_val = val;
            best_x = x;
        }
    }
    (best_val, best_x)
}

/// Lower bound on the defining supremum of the discrete Hardy constant by
/// random restarts plus coordinate ascent; `trials` caps the restarts.
pub fn discrete_hardy_bruteforce<F: Real>(
    a: &RealSeq<F>,
    b: &RealSeq<F>,
    params: &ParamTriple<F>,
    trials: usize,
) -> Result<F> {
    if a.len() != b.len() || a.is_empty() {
        return Err(CoreError::OutOfScope(
            "sequences must have equal positive length".into(),
        ));
    }
    if trials == 0 {
        return Ok(F::zero());
    }
    let ParamTriple { p, q, r } = *params;
    let n = a.len();
    let av = a.values.clone();
    let bv = b.values.clone();
    let objective = move |x: &[F]| {
        // (sum_k (sum_{i<=k} x_i^r b_i)^{q/r} a_k)^{1/q} / (sum x_k^p)^{1/p}
        let mut denom = F::zero();
        for &xi in x {
            denom = denom + xi.powf(p);
        }
        if !(denom > F::zero()) {
            return F::zero();
        }
        let mut num = F::zero();
        let mut inner = F::zero();
        for k in 0..n {
            inner = inner + x[k].powf(r) * bv[k];
            num = num + inner.powf(q / r) * av[k];
        }
        num.powf(F::one() / q) / denom.powf(F::one() / p)
    };
    let budget = AscentBudget {
        restarts: trials,
        sweeps: 200,
        seed: 1,
    };
    let (best, _) = coordinate_ascent(n, &budget, &objective);
    Ok(best)
}

/// The localized Hardy constant over one covering interval, via the
/// classical closed forms: an essential supremum for r >= 1, an integral
/// form for r < 1.
pub fn local_b<F: Real>(interval: (F, F), fx: &Functionals<F>, grid: &Grid<F>) -> Result<F> {
    let (lo, hi) = interval;
    if !(hi > lo) {
        return Ok(F::zero());
    }
    let hi_eff = hi.min(fx.l_eff() * (F::one() - F::of(1e-12)));
    let ParamTriple { p, r, .. } = fx.params;
    let d_lo = fx.prim_delta(lo.max(F::zero()));
    let inv_p = F::one() / p;
    if r >= F::one() {
        let val = esup_quick(
            |t| {
                (fx.prim_delta(t) - d_lo).max(F::zero()).powf(F::one() / r) * fx.phi(t).powf(-inv_p)
            },
            (lo, hi_eff),
            grid.window(lo, hi_eff),
        );
        Ok(val)
    } else {
        let e_in = r / (F::one() - r);
        let e_phi = -(r / (p * (F::one() - r)));
        let integrand = |t: F| {
            (fx.prim_delta(t) - d_lo).max(F::zero()).powf(e_in)
                * fx.ws.delta.eval(t)
                * fx.phi(t).powf(e_phi)
        };
        let val = panel_integral(&integrand, lo, hi_eff, grid);
        Ok(val.powf((F::one() - r) / r))
    }
}

/// Composite Gauss integral over (lo, hi) using grid points as panel
/// boundaries (plus a geometric opening when lo = 0).
fn panel_integral<F: Real>(f: &impl Fn(F) -> F, lo: F, hi: F, grid: &Grid<F>) -> F {
    let mut bounds: Vec<F> = Vec::new();
    let lo_eff = if lo > F::zero() {
        lo
    } else {
        // Geometric opening toward 0.
        let base = hi * F::of(1e-12);
        let mut x = base;
        while x < hi * F::of(0.5) {
            bounds.push(x);
            x = x * F::of(10.0);
        }
        base * F::of(0.1)
    };
    bounds.push(lo_eff.max(F::zero()));
    bounds.extend(grid.window(lo_eff, hi).iter().copied());
    bounds.push(hi);
    bounds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    bounds.dedup();
    let mut acc = F::zero();
    for w in bounds.windows(2) {
        acc = acc + gl8(f, w[0], w[1]);
    }
    acc
}

/// Lower bound on the defining supremum of the localized constant over step
/// functions supported in the interval.
pub fn local_b_bruteforce<F: Real>(
    interval: (F, F),
    fx: &Functionals<F>,
    trials: usize,
) -> Result<F> {
    if trials == 0 {
        return Ok(F::zero());
    }
    let (lo, hi) = interval;
    let hi_eff = hi.min(fx.l_eff() * (F::one() - F::of(1e-9)));
    if !(hi_eff > lo) {
        return Ok(F::zero());
    }
    let pieces = 12usize;
    // Geometric breakpoints inside the interval.
    let lo_eff = if lo > F::zero() {
        lo
    } else {
        hi_eff * F::of(1e-8)
    };
    let ratio = (hi_eff / lo_eff).powf(F::one() / F::from_usize(pieces).unwrap());
    let mut bps = Vec::with_capacity(pieces + 1);
    let mut x = lo_eff;
    for _ in 0..=pieces {
        bps.push(x);
        x = x * ratio;
    }
    *bps.last_mut().unwrap() = hi_eff;
    let ParamTriple { p, r, .. } = fx.params;
    // Per-piece masses of phi^{1/p} for the denominator.
    let inv_p = F::one() / p;
    let phi_mass: Vec<F> = bps
        .windows(2)
        .map(|w| gl8(&|t| fx.phi(t).powf(inv_p), w[0], w[1]))
        .collect();
    let d_lo = fx.prim_delta(lo.max(F::zero()));
    let bps2 = bps.clone();
    let objective = move |c: &[F]| {
        let mut denom = F::zero();
        for (j, &cj) in c.iter().enumerate() {
            denom = denom + cj * phi_mass[j];
        }
        if !(denom > F::zero()) {
            return F::zero();
        }
        // tail(s) = ∫_s^{hi} h with h = step(c).
        let tail = |s: F| {
            let mut acc = F::zero();
            for (j, &cj) in c.iter().enumerate() {
                let (a, b) = (bps2[j], bps2[j + 1]);
                if s < b {
                    acc = acc + cj * (b - s.max(a));
                }
            }
            acc
        };
        let mut num = F::zero();
        for jw in bps2.windows(2) {
            num = num + gl8(&|s: F| tail(s).powf(r) * fx.ws.delta.eval(s), jw[0], jw[1]);
        }
        // The opening (lo, lo_eff) contributes with tail ~ full mass.
        if lo < bps2[0] {
            let full = tail(bps2[0]);
            num = num + full.powf(r) * (fx.prim_delta(bps2[0]) - d_lo).max(F::zero());
        }
        num.powf(F::one() / r) / denom
    };
    let budget = AscentBudget {
        restarts: trials,
        sweeps: 40,
        seed: 7,
    };
    let (best, _) = coordinate_ascent(pieces, &budget, &objective);
    Ok(best)
}

/// Labels of the discretized constants of the main discretization theorem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CijLabel {
    C11,
    C12,
    C13,
    C14,
    C15,
    C16,
    C21,
    C22,
    C31,
    C32,
    C33,
    C34,
    C41,
}

impl CijLabel {
    pub fn name(&self) -> &'static str {
        match self {
            CijLabel::C11 => "C11",
            CijLabel::C12 => "C12",
            CijLabel::C13 => "C13",
            CijLabel::C14 => "C14",
            CijLabel::C15 => "C15",
            CijLabel::C16 => "C16",
            CijLabel::C21 => "C21",
            CijLabel::C22 => "C22",
            CijLabel::C31 => "C31",
            CijLabel::C32 => "C32",
            CijLabel::C33 => "C33",
            CijLabel::C34 => "C34",
            CijLabel::C41 => "C41",
        }
    }

    /// The four constants whose sum characterizes C in each case.
    pub fn for_case(case: crate::functionals::Case) -> &'static [CijLabel] {
        use crate::functionals::Case;
        match case {
            Case::I => &[CijLabel::C11, CijLabel::C12, CijLabel::C31, CijLabel::C41],
            Case::II => &[CijLabel::C12, CijLabel::C13, CijLabel::C32, CijLabel::C41],
            Case::III => &[CijLabel::C11, CijLabel::C12, CijLabel::C33, CijLabel::C41],
            Case::IV => &[CijLabel::C12, CijLabel::C13, CijLabel::C34, CijLabel::C41],
            Case::V => &[CijLabel::C14, CijLabel::C15, CijLabel::C31, CijLabel::C41],
            Case::VI => &[CijLabel::C15, CijLabel::C16, CijLabel::C32, CijLabel::C41],
            Case::VII => &[CijLabel::C15, CijLabel::C16, CijLabel::C34, CijLabel::C41],
        }
    }
}

/// Evaluates one discretized constant over the covering sequence.
pub fn compute_cij<F: Real>(
    cs: &CoveringSequence<F>,
    fx: &Functionals<F>,
    grid: &Grid<F>,
    which: CijLabel,
) -> Result<F> {
    let ParamTriple { p, q, r } = fx.params;
    let one = F::one();
    match which {
        CijLabel::C33 => {
            if !(r >= one && r < p) {
                return Err(CoreError::OutOfScope(
                    "C33 is defined for 1 <= r < p <= q".into(),
                ));
            }
        }
        CijLabel::C13 | CijLabel::C32 => {
            if !(r < one) {
                return Err(CoreError::OutOfScope("defined for r < 1".into()));
            }
        }
        CijLabel::C16 => {
            if !(r < one && q < one) {
                return Err(CoreError::OutOfScope(
                    "C16 is defined for q < 1, r < 1".into(),
                ));
            }
        }
        CijLabel::C34 => {
            if !(r < one && r < p) {
                return Err(CoreError::OutOfScope(
                    "C34 is defined for r < min(1, p)".into(),
                ));
            }
        }
        CijLabel::C14 | CijLabel::C15 => {
            if !(q < one) {
                return Err(CoreError::OutOfScope("defined for q < 1".into()));
            }
        }
        CijLabel::C22 if !(r < p) => {
            return Err(CoreError::OutOfScope("C22 is defined for r < p".into()));
        }
        _ => {}
    }
    let idx = cs.interval_indices();
    if idx.is_empty() {
        return Err(CoreError::EmptyCovering);
    }
    let m_hi = *idx.last().unwrap();
    let inv_p = F::one() / p;
    let inv_q = F::one() / q;
    let inv_r = F::one() / r;
    let l_top = fx.l_eff() * (one - F::of(1e-12));

    // Interval-clipped helpers.
    let clip = |x: F| x.min(l_top);
    let mut best = F::zero();

    // Sums over i <= k for C22/C33/C34 are accumulated while scanning.
    let mut c22_acc = F::zero();
    let mut c33_acc = F::zero();
    let mut c34_acc = F::zero();

    for &k in &idx {
        let (lo_raw, hi_raw) = cs.interval(k);
        let lo = lo_raw.max(F::zero());
        let hi = clip(hi_raw);
        if !(hi > lo) {
            continue;
        }
        let d_lo = fx.prim_delta(lo);
        let window_pts = grid.window(lo, hi);
        let tail_dw_between = |t: F| (fx.tail_dw(t) - fx.tail_dw(hi)).max(F::zero());

        let val = match which {
            CijLabel::C11 => esup_quick(
                |t| {
                    let inner = esup_quick(
                        |s| {
                            (fx.prim_delta(s) - d_lo).max(F::zero()).powf(inv_r)
                                * fx.phi(s).powf(-inv_p)
                        },
                        (lo, t),
                        window_pts,
                    );
                    tail_dw_between(t).powf(inv_q) * inner
                },
                (lo, hi),
                window_pts,
            ),
            CijLabel::C12 => esup_quick(
                |t| {
                    let inner = panel_integral(
                        &|s: F| {
                            let qr = q / r;
                            fx.prim_delta(s).powf(-qr)
                                * fx.ws.w.eval(s)
                                * (fx.prim_delta(s) - d_lo).max(F::zero()).powf(qr)
                        },
                        lo,
                        t,
                        grid,
                    );
                    inner.powf(inv_q) * fx.phi(t).powf(-inv_p)
                },
                (lo, hi),
                window_pts,
            ),
            CijLabel::C13 => {
                let e_in = r / (one - r);
                let e_phi = -(r / (p * (one - r)));
                esup_quick(
                    |t| {
                        let inner = panel_integral(
                            &|s: F| {
                                (fx.prim_delta(s) - d_lo).max(F::zero()).powf(e_in)
                                    * fx.ws.delta.eval(s)
                                    * fx.phi(s).powf(e_phi)
                            },
                            lo,
                            t,
                            grid,
                        );
                        tail_dw_between(t).powf(inv_q) * inner.powf((one - r) / r)
                    },
                    (lo, hi),
                    window_pts,
                )
            }
            CijLabel::C14 => {
                let e_w = q / (one - q);
                let e_s = q / (r * (one - q));
                let e_phi = -(q / (p * (one - q)));
                let integrand = |t: F| {
                    let sup_s = esup_quick(
                        |s| {
                            ((fx.prim_delta(s) - d_lo).max(F::zero()).ln() * e_s
                                + fx.phi(s).ln() * e_phi)
                                .exp()
                        },
                        (lo, t),
                        window_pts,
                    );
                    tail_dw_between(t).powf(e_w)
                        * fx.ws.w.eval(t)
                        * fx.prim_delta(t).powf(-(q / r))
                        * sup_s
                };
                panel_integral(&integrand, lo, hi, grid).powf((one - q) / q)
            }
            CijLabel::C15 => {
                let e_acc = q / (one - q);
                let e_phi = -(q / (p * (one - q)));
                let qr = q / r;
                let base = |s: F| {
                    fx.prim_delta(s).powf(-qr)
                        * fx.ws.w.eval(s)
                        * (fx.prim_delta(s) - d_lo).max(F::zero()).powf(qr)
                };
                let integrand = |t: F| {
                    let head = panel_integral(&base, lo, t, grid);
                    head.powf(e_acc) * base(t) * (fx.phi(t).ln() * e_phi).exp()
                };
                panel_integral(&integrand, lo, hi, grid).powf((one - q) / q)
            }
            CijLabel::C16 => {
                let e_w = q / (one - q);
                let e_in = r / (one - r);
                let e_phi_in = -(r / (p * (one - r)));
                let e_mid = q * (one - r) / (r * (one - q));
                let inner_cum = |t: F| {
                    panel_integral(
                        &|s: F| {
                            (fx.prim_delta(s) - d_lo).max(F::zero()).powf(e_in)
                                * fx.ws.delta.eval(s)
                                * fx.phi(s).powf(e_phi_in)
                        },
                        lo,
                        t,
                        grid,
                    )
                };
                let integrand = |t: F| {
                    tail_dw_between(t).powf(e_w)
                        * fx.prim_delta(t).powf(-(q / r))
                        * fx.ws.w.eval(t)
                        * inner_cum(t).powf(e_mid)
                };
                panel_integral(&integrand, lo, hi, grid).powf((one - q) / q)
            }
            CijLabel::C21 => {
                if k == m_hi && !cs.upper_truncated {
                    continue;
                }
                let dd = (fx.prim_delta(hi) - d_lo).max(F::zero());
                fx.tail_dw(hi).powf(inv_q) * dd.powf(inv_r) * fx.phi(hi).powf(-inv_p)
            }
            CijLabel::C22 => {
                let dd = (fx.prim_delta(hi) - d_lo).max(F::zero());
                c22_acc = c22_acc + dd.powf(p / (p - r)) * fx.phi(hi).powf(-(r / (p - r)));
                if k == m_hi && !cs.upper_truncated {
                    continue;
                }
                fx.tail_dw(hi).powf(inv_q) * c22_acc.powf((p - r) / (p * r))
            }
            CijLabel::C31 => {
                if k == m_hi && !cs.upper_truncated {
                    continue;
                }
                let at = |t: F| {
                    (fx.prim_delta(t) - d_lo).max(F::zero()).powf(inv_r) * fx.phi(t).powf(-inv_p)
                };
                // The esup over the open interval includes the continuous
                // limit at the right endpoint.
                let inner = esup_quick(at, (lo, hi), window_pts).max(at(hi));
                fx.tail_dw(hi).powf(inv_q) * inner
            }
            CijLabel::C32 => {
                if k == m_hi && !cs.upper_truncated {
                    continue;
                }
                let e_in = r / (one - r);
                let e_phi = -(r / (p * (one - r)));
                let inner = panel_integral(
                    &|t: F| {
                        (fx.prim_delta(t) - d_lo).max(F::zero()).powf(e_in)
                            * fx.ws.delta.eval(t)
                            * fx.phi(t).powf(e_phi)
                    },
                    lo,
                    hi,
                    grid,
                );
                fx.tail_dw(hi).powf(inv_q) * inner.powf((one - r) / r)
            }
            CijLabel::C33 => {
                let at = |t: F| {
                    ((fx.prim_delta(t) - d_lo).max(F::zero()).ln() * (p / (p - r))
                        - fx.phi(t).ln() * (r / (p - r)))
                        .exp()
                };
                let term = esup_quick(at, (lo, hi), window_pts).max(at(hi));
                c33_acc = c33_acc + term;
                if k == m_hi && !cs.upper_truncated {
                    continue;
                }
                fx.tail_dw(hi).powf(inv_q) * c33_acc.powf((p - r) / (p * r))
            }
            CijLabel::C34 => {
                let e_in = r / (one - r);
                let e_phi = -(r / (p * (one - r)));
                let inner = panel_integral(
                    &|t: F| {
                        (fx.prim_delta(t) - d_lo).max(F::zero()).powf(e_in)
                            * fx.ws.delta.eval(t)
                            * fx.phi(t).powf(e_phi)
                    },
                    lo,
                    hi,
                    grid,
                );
                c34_acc = c34_acc + inner.powf(p * (one - r) / (p - r));
                if k == m_hi && !cs.upper_truncated {
                    continue;
                }
                fx.tail_dw(hi).powf(inv_q) * c34_acc.powf((p - r) / (p * r))
            }
            CijLabel::C41 => {
                if k == m_hi && !cs.upper_truncated {
                    continue;
                }
                (fx.prim_w(hi) - fx.prim_w(lo)).max(F::zero()).powf(inv_q) * fx.phi(hi).powf(-inv_p)
            }
        };
        if val == F::infinity() {
            return Ok(F::infinity());
        }
        if val.is_finite() && val > best {
            best = val;
        }
    }
    Ok(best)
}

/// Left sides of the four block-form inequalities plus the shared right
/// side, for a step test function. Sums over truncated covering ends cover
/// the grid-visible terms only; when the terms nearest a truncated end
/// carry more than 1% of a sum, that sum is named in `convergence_flags`.
#[derive(Clone, Debug)]
pub struct DiscretizedForms<F> {
    pub m1: F,
    pub m2: F,
    pub m3: F,
    pub m4: F,
    pub rhs: F,
    pub convergence_flags: Vec<&'static str>,
}

pub fn discretized_forms<F: Real>(
    h: &TestFunction<F>,
    cs: &CoveringSequence<F>,
    fx: &Functionals<F>,
    grid: &Grid<F>,
) -> Result<DiscretizedForms<F>> {
    let ParamTriple { p, q, r } = fx.params;
    let one = F::one();
    let idx = cs.interval_indices();
    if idx.is_empty() {
        return Err(CoreError::EmptyCovering);
    }
    let m_hi = *idx.last().unwrap();
    let l_top = fx.l_eff() * (one - F::of(1e-12));
    let inv_p = F::one() / p;
    let qr = q / r;

    // Shared right side: (sum_k (∫ phi^{1/p} h)^p)^{1/p}.
    let mut rhs_terms = Vec::with_capacity(idx.len());
    for &k in &idx {
        let (lo_raw, hi_raw) = cs.interval(k);
        let lo = lo_raw.max(F::zero());
        let hi = hi_raw.min(l_top);
        if !(hi > lo) {
            rhs_terms.push(F::zero());
            continue;
        }
        let piece = h.integrate_against(&|t: F| fx.phi(t).powf(inv_p), lo, hi);
        rhs_terms.push(piece.powf(p));
    }
    let rhs_acc = rhs_terms.iter().fold(F::zero(), |a, &b| a + b);
    let rhs = rhs_acc.powf(inv_p);

    // M1: inner windows (x_{k-1}, x_k) with the global Delta in the kernel.
    let mut m1_terms = Vec::with_capacity(idx.len());
    for &k in &idx {
        let (lo_raw, hi_raw) = cs.interval(k);
        let lo = lo_raw.max(F::zero());
        let hi = hi_raw.min(l_top);
        if !(hi > lo) {
            m1_terms.push(F::zero());
            continue;
        }
        let inner = |t: F| {
            let kern = panel_integral(
                &|s: F| h.tail_between(s, hi).powf(r) * fx.ws.delta.eval(s),
                lo,
                t,
                grid,
            );
            (kern / fx.prim_delta(t)).powf(qr) * fx.ws.w.eval(t)
        };
        m1_terms.push(panel_integral(&inner, lo, hi, grid));
    }
    let m1_acc = m1_terms.iter().fold(F::zero(), |a, &b| a + b);
    let m1 = m1_acc.powf(F::one() / q);

    // Window integrals shared by M2/M3.
    let mut window_kern = Vec::new(); // ∫_{x_{i-1}}^{x_i} (∫_s^{x_i} h)^r delta(s) ds
    let mut window_delta = Vec::new(); // ∫_{x_{i-1}}^{x_i} delta
    let mut window_h = Vec::new(); // ∫_{x_{i-1}}^{x_i} h  (for M3/M4 block sums)
    let mut window_w = Vec::new(); // ∫_{x_{i-1}}^{x_i} w
    for &k in &idx {
        let (lo_raw, hi_raw) = cs.interval(k);
        let lo = lo_raw.max(F::zero());
        let hi = hi_raw.min(l_top);
        if !(hi > lo) {
            window_kern.push(F::zero());
            window_delta.push(F::zero());
            window_h.push(F::zero());
            window_w.push(F::zero());
            continue;
        }
        window_kern.push(panel_integral(
            &|s: F| h.tail_between(s, hi).powf(r) * fx.ws.delta.eval(s),
            lo,
            hi,
            grid,
        ));
        window_delta.push((fx.prim_delta(hi) - fx.prim_delta(lo)).max(F::zero()));
        window_h.push(h.tail_between(lo, hi));
        window_w.push((fx.prim_w(hi) - fx.prim_w(lo)).max(F::zero()));
    }
    let n_int = idx.len();

    // M2: (sum_{k<=M-1} (sum_{i<=k} kern_i)^{q/r} ∫_{x_k}^{x_{k+1}} dw)^{1/q}.
    let mut m2_terms = Vec::new();
    let mut kern_head = F::zero();
    for (pos, &k) in idx.iter().enumerate() {
        if k == m_hi && !cs.upper_truncated {
            break;
        }
        if pos + 1 >= n_int {
            break;
        }
        kern_head = kern_head + window_kern[pos];
        let (lo_next_raw, hi_next_raw) = cs.interval(idx[pos + 1]);
        let lo_next = lo_next_raw.max(F::zero());
        let hi_next = hi_next_raw.min(l_top);
        let dw = (fx.tail_dw(lo_next) - fx.tail_dw(hi_next)).max(F::zero());
        m2_terms.push(kern_head.powf(qr) * dw);
    }
    let m2 = m2_terms
        .iter()
        .fold(F::zero(), |a, &b| a + b)
        .powf(F::one() / q);

    // M3: blocks of h with window delta masses.
    let mut m3_terms = Vec::new();
    for (pos_k, &k) in idx.iter().enumerate() {
        if k == m_hi && !cs.upper_truncated {
            break;
        }
        if pos_k + 1 >= n_int {
            break;
        }
        let mut inner_sum = F::zero();
        for pos_i in 0..=pos_k {
            // sum_{j=i}^{k} ∫_{x_j}^{x_{j+1}} h: contiguous block of h mass.
            let mut block = F::zero();
            for wh in window_h.iter().take(pos_k + 2).skip(pos_i + 1) {
                block = block + *wh;
            }
            inner_sum = inner_sum + block.powf(r) * window_delta[pos_i];
        }
        let (lo_next_raw, hi_next_raw) = cs.interval(idx[pos_k + 1]);
        let lo_next = lo_next_raw.max(F::zero());
        let hi_next = hi_next_raw.min(l_top);
        let dw = (fx.tail_dw(lo_next) - fx.tail_dw(hi_next)).max(F::zero());
        m3_terms.push(inner_sum.powf(qr) * dw);
    }
    let m3 = m3_terms
        .iter()
        .fold(F::zero(), |a, &b| a + b)
        .powf(F::one() / q);

    // M4: tail blocks of h against window w masses.
    let mut m4_terms = Vec::new();
    for (pos_k, &k) in idx.iter().enumerate() {
        if k == m_hi && !cs.upper_truncated {
            break;
        }
        let mut tail_block = F::zero();
        for wh in window_h.iter().skip(pos_k + 1) {
            tail_block = tail_block + *wh;
        }
        m4_terms.push(tail_block.powf(q) * window_w[pos_k]);
    }
    let m4 = m4_terms
        .iter()
        .fold(F::zero(), |a, &b| a + b)
        .powf(F::one() / q);

    let mut convergence_flags = Vec::new();
    for (name, terms) in [
        ("rhs", &rhs_terms),
        ("M1", &m1_terms),
        ("M2", &m2_terms),
        ("M3", &m3_terms),
        ("M4", &m4_terms),
    ] {
        if truncated_edge_share_exceeds(terms, cs, F::of(0.01)) {
            convergence_flags.push(name);
        }
    }

    for (name, v) in [("M1", m1), ("M2", m2), ("M3", m3), ("M4", m4), ("rhs", rhs)] {
        if !v.is_finite() {
            return Err(CoreError::NonFinite(format!("discretized form {name}")));
        }
    }
    Ok(DiscretizedForms {
        m1,
        m2,
        m3,
        m4,
        rhs,
        convergence_flags,
    })
}

/// True when the three terms nearest a truncated covering end carry more
/// than `level` of the total: the truncated sum has not visibly converged.
fn truncated_edge_share_exceeds<F: Real>(terms: &[F], cs: &CoveringSequence<F>, level: F) -> bool {
    let total = terms.iter().fold(F::zero(), |a, &b| a + b);
    if !(total > F::zero()) {
        return false;
    }
    let edge_sum = |it: &mut dyn Iterator<Item = &F>| it.take(3).fold(F::zero(), |a, &b| a + b);
    if cs.lower_truncated && edge_sum(&mut terms.iter()) > level * total {
        return true;
    }
    if cs.upper_truncated && edge_sum(&mut terms.iter().rev()) > level * total {
        return true;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covering::build_covering_sequence;
    use crate::functionals::default_grids;
    use crate::weights::unit_weights;

    fn triple(p: f64, q: f64, r: f64) -> ParamTriple<f64> {
        ParamTriple::new(p, q, r).unwrap()
    }

    #[test]
    fn monotonicity_classification() {
        let inc = RealSeq::from_values(vec![1.0, 2.0, 4.0, 8.0]).unwrap();
        assert_eq!(
            is_strongly_monotone(&inc).unwrap(),
            Monotonicity::Increasing { rho: 2.0 }
        );
        let flat = RealSeq::from_values(vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(is_strongly_monotone(&flat).unwrap(), Monotonicity::Neither);
        let dec = RealSeq::from_values(vec![8.0, 4.0, 2.0, 1.0]).unwrap();
        assert_eq!(
            is_strongly_monotone(&dec).unwrap(),
            Monotonicity::Decreasing { rho: 0.5 }
        );
        let bad = RealSeq::from_values(vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            is_strongly_monotone(&bad),
            Err(CoreError::NonPositive)
        ));
    }

    #[test]
    fn sum_sum_equivalence_hand_value() {
        // rho = {1,2,4}, a = {1,1,1}, p = 1: lhs = 1*3 + 2*2 + 4*1 = 11,
        // rhs = 7.
        let rho: RealSeq<f64> = RealSeq::from_values(vec![1.0, 2.0, 4.0]).unwrap();
        let a = RealSeq::from_values(vec![1.0, 1.0, 1.0]).unwrap();
        let rep =
            strong_monotone_equivalence(&rho, &a, 1.0, EquivalenceForm::IncreasingSumSum).unwrap();
        assert!((rep.lhs - 11.0).abs() < 1e-12);
        assert!((rep.rhs - 7.0).abs() < 1e-12);
        assert!((rep.ratio - 11.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn zero_coefficients_ratio_one() {
        let rho = RealSeq::from_values(vec![1.0, 2.0, 4.0]).unwrap();
        let a = RealSeq::from_values(vec![0.0, 0.0, 0.0]).unwrap();
        let rep =
            strong_monotone_equivalence(&rho, &a, 2.0, EquivalenceForm::IncreasingSupSum).unwrap();
        assert_eq!(rep.ratio, 1.0);
    }

    #[test]
    fn flat_weights_rejected() {
        let rho = RealSeq::from_values(vec![1.0, 1.0, 1.0]).unwrap();
        let a = RealSeq::from_values(vec![1.0, 2.0, 3.0]).unwrap();
        let r = strong_monotone_equivalence(&rho, &a, 1.0, EquivalenceForm::IncreasingSumSum);
        assert!(matches!(r, Err(CoreError::WrongMonotonicity)));
    }

    #[test]
    fn bennett_two_term_value() {
        // p = q = r = 1, a = {1,1}, b = {2,1}:
        // D = max{b_1 (a_1 + a_2), b_2 a_2} = max{4, 1} = 4.
        let a = RealSeq::from_values(vec![1.0, 1.0]).unwrap();
        let b = RealSeq::from_values(vec![2.0, 1.0]).unwrap();
        let d = discrete_hardy_d(&a, &b, &triple(1.0, 1.0, 1.0)).unwrap();
        assert!((d - 4.0).abs() < 1e-12);
    }

    #[test]
    fn bennett_zero_a() {
        let a = RealSeq::from_values(vec![0.0, 0.0]).unwrap();
        let b = RealSeq::from_values(vec![2.0, 1.0]).unwrap();
        let d = discrete_hardy_d(&a, &b, &triple(1.0, 1.0, 1.0)).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn bennett_scaling_in_b() {
        let a = RealSeq::from_values(vec![1.0, 0.5, 2.0]).unwrap();
        let b = RealSeq::from_values(vec![2.0, 1.0, 0.25]).unwrap();
        let params = triple(1.0, 2.0, 1.5);
        let d = discrete_hardy_d(&a, &b, &params).unwrap();
        let b4 = RealSeq::from_values(b.values.iter().map(|x| 16.0 * x).collect()).unwrap();
        let d4 = discrete_hardy_d(&a, &b4, &params).unwrap();
        let expect = d * 16.0f64.powf(1.0 / 1.5);
        assert!(crate::real::rel_gap(d4, expect) < 1e-12);
    }

    #[test]
    fn bruteforce_recovers_two_term_value() {
        let a = RealSeq::from_values(vec![1.0, 1.0]).unwrap();
        let b = RealSeq::from_values(vec![2.0, 1.0]).unwrap();
        let got = discrete_hardy_bruteforce(&a, &b, &triple(1.0, 1.0, 1.0), 16).unwrap();
        assert!((got - 4.0).abs() < 0.04, "got {got}");
        // Zero trials return the trivial lower bound.
        let z = discrete_hardy_bruteforce(&a, &b, &triple(1.0, 1.0, 1.0), 0).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn single_term_bruteforce_is_exact() {
        // One coordinate: ratio = a_1^{1/q} b_1^{1/r}, scale invariant.
        let a = RealSeq::from_values(vec![3.0]).unwrap();
        let b = RealSeq::from_values(vec![0.7]).unwrap();
        let params = triple(1.0, 2.0, 1.0);
        let exact = 3.0f64.powf(0.5) * 0.7;
        let got = discrete_hardy_bruteforce(&a, &b, &params, 4).unwrap();
        assert!(crate::real::rel_gap(got, exact) < 1e-9, "{got} vs {exact}");
    }

    #[test]
    fn local_b_unit_weights_whole_interval() {
        // r >= 1 branch on (0, 1) with unit weights and p = q = r = 1:
        // esup_t t / (t (1 - ln t)) = 1 approached at t -> 1.
        let ws = unit_weights(1.0).unwrap();
        let fx = Functionals::new(triple(1.0, 1.0, 1.0), ws.clone()).unwrap();
        let (outer, _) = default_grids(&ws).unwrap();
        let v = local_b((0.0, 1.0), &fx, &outer).unwrap();
        assert!((v - 1.0).abs() < 1e-3, "got {v}");
        // Degenerate interval.
        let z = local_b((0.4, 0.4), &fx, &outer).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn local_b_scaling_in_delta() {
        let ws = unit_weights(1.0).unwrap();
        let scaled = crate::weights::WeightSet::new(
            ws.u.clone(),
            ws.delta.scaled(5.0).unwrap(),
            ws.v.clone(),
            ws.w.clone(),
        )
        .unwrap();
        let params = triple(1.0, 1.0, 1.0);
        let fx = Functionals::new(params, ws.clone()).unwrap();
        let fx2 = Functionals::new(params, scaled).unwrap();
        let (outer, _) = default_grids(&ws).unwrap();
        let v1 = local_b((0.1, 0.9), &fx, &outer).unwrap();
        let v2 = local_b((0.1, 0.9), &fx2, &outer).unwrap();
        assert!(
            crate::real::rel_gap(v2, 5.0 * v1) < 1e-9,
            "{v2} vs {}",
            5.0 * v1
        );
    }

    #[test]
    fn c41_close_to_b1_for_unit_weights() {
        let ws = unit_weights(1.0).unwrap();
        let params = triple(1.0, 1.0, 1.0);
        let fx = Functionals::new(params, ws.clone()).unwrap();
        let (outer, inner) = default_grids(&ws).unwrap();
        let cs =
            build_covering_sequence(&|t: f64| fx.phi(t), &|t: f64| fx.prim_u(t), 109.0, &outer)
                .unwrap();
        let c41 = compute_cij(&cs, &fx, &outer, CijLabel::C41).unwrap();
        let b1 = fx.compute_b(1, &outer, &inner).unwrap();
        // C41 <= B1, and B1 is controlled by C41 + C12 + C31.
        assert!(c41 <= b1 * 1.0001, "C41 = {c41} must stay below B1 = {b1}");
        let c12 = compute_cij(&cs, &fx, &outer, CijLabel::C12).unwrap();
        let c31 = compute_cij(&cs, &fx, &outer, CijLabel::C31).unwrap();
        let sum = c41 + c12 + c31;
        assert!(
            b1 <= 10.0 * sum,
            "B1 = {b1} must be bounded by C41 + C12 + C31 = {sum}"
        );
    }

    #[test]
    fn c33_out_of_scope_for_small_r() {
        let ws = unit_weights(1.0).unwrap();
        let params = triple(1.0, 1.0, 1.0);
        let fx = Functionals::new(params, ws.clone()).unwrap();
        let (outer, _) = default_grids(&ws).unwrap();
        let cs =
            build_covering_sequence(&|t: f64| fx.phi(t), &|t: f64| fx.prim_u(t), 109.0, &outer)
                .unwrap();
        let r = compute_cij(&cs, &fx, &outer, CijLabel::C33);
        assert!(matches!(r, Err(CoreError::OutOfScope(_))));
    }

    #[test]
    fn discretized_forms_zero_function() {
        let ws = unit_weights(1.0).unwrap();
        let params = triple(1.0, 1.0, 1.0);
        let fx = Functionals::new(params, ws.clone()).unwrap();
        let (outer, _) = default_grids(&ws).unwrap();
        let cs =
            build_covering_sequence(&|t: f64| fx.phi(t), &|t: f64| fx.prim_u(t), 109.0, &outer)
                .unwrap();
        let h = TestFunction::new(vec![0.2, 0.8], vec![0.0]).unwrap();
        let f = discretized_forms(&h, &cs, &fx, &outer).unwrap();
        assert_eq!((f.m1, f.m2, f.m3, f.m4, f.rhs), (0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn discretized_forms_scale_linearly() {
        let ws = unit_weights(1.0).unwrap();
        let params = triple(1.0, 1.0, 1.0);
        let fx = Functionals::new(params, ws.clone()).unwrap();
        let (outer, _) = default_grids(&ws).unwrap();
        let cs =
            build_covering_sequence(&|t: f64| fx.phi(t), &|t: f64| fx.prim_u(t), 109.0, &outer)
                .unwrap();
        let h = TestFunction::new(vec![0.1, 0.4, 0.9], vec![1.0, 0.3]).unwrap();
        let f1 = discretized_forms(&h, &cs, &fx, &outer).unwrap();
        let h3 = h.scaled(3.0).unwrap();
        let f3 = discretized_forms(&h3, &cs, &fx, &outer).unwrap();
        for (a, b) in [
            (f1.m1, f3.m1),
            (f1.m2, f3.m2),
            (f1.m3, f3.m3),
            (f1.m4, f3.m4),
            (f1.rhs, f3.rhs),
        ] {
            if a == 0.0 {
                assert_eq!(b, 0.0);
            } else {
                assert!(crate::real::rel_gap(3.0 * a, b) < 1e-9, "{a} {b}");
            }
        }
    }
}
