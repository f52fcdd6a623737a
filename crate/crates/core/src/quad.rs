//! Adaptive quadrature and cumulative-integral caches.
//!
//! The adaptive rule is a 15-point Gauss–Kronrod scheme with global
//! worst-segment-first refinement. Integrals that touch the origin are
//! evaluated in log coordinates so that power singularities turn into
//! exponential decay.

use crate::error::{CoreError, Result};
use crate::real::Real;

// 15-point Kronrod abscissae (positive half) and weights, 7-point Gauss weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_17,
    0.207_784_955_007_898_27,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_69,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_95,
    0.417_959_183_673_469_4,
];

// 8-point Gauss–Legendre rule on [-1, 1].
const XGL8: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_328_99,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const WGL8: [f64; 4] = [
    0.362_683_783_378_361_98,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// 8-point Gauss–Legendre estimate of `∫_a^b f`.
pub fn gl8<F: Real>(f: &(impl Fn(F) -> F + ?Sized), a: F, b: F) -> F {
    if b <= a {
        return F::zero();
    }
    let half = F::of(0.5);
    let c = half * (a + b);
    let h = half * (b - a);
    let mut acc = F::zero();
    for i in 0..4 {
        let x = F::of(XGL8[i]) * h;
        let w = F::of(WGL8[i]);
        acc = acc + w * (f(c - x) + f(c + x));
    }
    acc * h
}

struct Gk15Result<F> {
    value: F,
    error: F,
    nonfinite_at: Option<F>,
}

fn gk15<F: Real>(f: &(impl Fn(F) -> F + ?Sized), a: F, b: F) -> Gk15Result<F> {
    let half = F::of(0.5);
    let center = half * (a + b);
    let hlen = half * (b - a);
    let fc = f(center);
    if !fc.is_finite() {
        return Gk15Result {
            value: F::zero(),
            error: F::infinity(),
            nonfinite_at: Some(center),
        };
    }
    let mut fv = [F::zero(); 15];
    fv[7] = fc;
    let mut kron = F::of(WGK[7]) * fc;
    // The embedded 7-point Gauss rule uses the center node too.
    let mut gauss = F::of(WG[3]) * fc;
    let mut resabs = kron.abs();
    for i in 0..7 {
        let x = F::of(XGK[i]) * hlen;
        let f1 = f(center - x);
        let f2 = f(center + x);
        if !f1.is_finite() {
            return Gk15Result {
                value: F::zero(),
                error: F::infinity(),
                nonfinite_at: Some(center - x),
            };
        }
        if !f2.is_finite() {
            return Gk15Result {
                value: F::zero(),
                error: F::infinity(),
                nonfinite_at: Some(center + x),
            };
        }
        fv[i] = f1;
        fv[14 - i] = f2;
        let w = F::of(WGK[i]);
        kron = kron + w * (f1 + f2);
        resabs = resabs + w * (f1.abs() + f2.abs());
        if i % 2 == 1 {
            gauss = gauss + F::of(WG[i / 2]) * (f1 + f2);
        }
    }
    let mean = kron * half;
    let mut resasc = F::of(WGK[7]) * (fc - mean).abs();
    for i in 0..7 {
        let w = F::of(WGK[i]);
        resasc = resasc + w * ((fv[i] - mean).abs() + (fv[14 - i] - mean).abs());
    }
    let value = kron * hlen;
    resabs = resabs * hlen.abs();
    resasc = resasc * hlen.abs();
    let mut err = ((kron - gauss) * hlen).abs();
    if resasc != F::zero() && err != F::zero() {
        let scale = (F::of(200.0) * err / resasc).powf(F::of(1.5));
        err = if scale < F::one() {
            resasc * scale
        } else {
            resasc
        };
    }
    let floor = F::of(50.0) * F::epsilon() * resabs;
    if floor > err {
        err = floor;
    }
    Gk15Result {
        value,
        error: err,
        nonfinite_at: None,
    }
}

#[derive(Clone, Debug)]
pub struct QuadOpts<F> {
    /// Target relative error of the whole integral.
    pub rel_tol: F,
    /// Refinement budget: number of bisections across all segments.
    pub max_panels: usize,
    /// Interior points where the integrand is allowed to be non-smooth or
    /// singular; the initial segmentation splits there.
    pub split_points: Vec<F>,
}

impl<F: Real> Default for QuadOpts<F> {
    fn default() -> Self {
        QuadOpts {
            rel_tol: F::of(1e-9),
            max_panels: 4000,
            split_points: Vec::new(),
        }
    }
}

struct Segment<F> {
    a: F,
    b: F,
    value: F,
    error: F,
}

/// Adaptive estimate of `∫_a^b f` with relative tolerance `opts.rel_tol`.
///
/// `a == 0` is handled by a log substitution on the leading segment, so
/// integrable power singularities at the origin converge quickly while
/// non-integrable ones are reported as `QuadratureFailure`.
pub fn integrate<F: Real>(f: impl Fn(F) -> F, a: F, b: F, opts: &QuadOpts<F>) -> Result<F> {
    if !(a >= F::zero() && b > a) {
        return Err(CoreError::QuadratureFailure(format!(
            "bad interval ({a}, {b})"
        )));
    }
    let mut cuts: Vec<F> = opts
        .split_points
        .iter()
        .copied()
        .filter(|&s| s > a && s < b)
        .collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();

    let mut total = F::zero();
    let mut lo = a;
    let mut first = true;
    let mut bounds = cuts;
    bounds.push(b);
    for hi in bounds {
        let piece = if first && a == F::zero() {
            integrate_log_origin(&f, hi, opts)?
        } else {
            adaptive_segment(&f, lo, hi, opts, false)?
        };
        total = total + piece;
        lo = hi;
        first = false;
    }
    Ok(total)
}

/// `∫_0^c f` via `s = e^x`: integrates `f(e^x) e^x` on a truncated ray.
fn integrate_log_origin<F: Real>(f: &impl Fn(F) -> F, c: F, opts: &QuadOpts<F>) -> Result<F> {
    let g = |x: F| {
        let s = x.exp();
        f(s) * s
    };
    let x_hi = c.ln();
    // Keep e^{x_lo} inside the normal range of the scalar type.
    let x_floor = F::min_positive_value().ln() + F::of(40.0);
    let mut span = F::of(140.0);
    loop {
        let x_lo = (x_hi - span).max(x_floor);
        let g_lo = g(x_lo);
        if !g_lo.is_finite() {
            return Err(CoreError::QuadratureFailure(
                "integrand diverges near 0".into(),
            ));
        }
        let est = adaptive_segment(&g, x_lo, x_hi, opts, true)?;
        // Decay rate of g toward -inf decides whether the truncated tail matters.
        let probe = g(x_lo + F::of(5.0));
        let tail = if probe > g_lo && g_lo >= F::zero() && probe > F::zero() {
            let rate = (probe / g_lo).ln() / F::of(5.0);
            if rate > F::of(1e-4) {
                g_lo / rate
            } else {
                F::infinity()
            }
        } else if g_lo == F::zero() {
            F::zero()
        } else {
            F::infinity()
        };
        let bound = opts.rel_tol * est.abs().max(F::of(1e-290));
        if tail <= bound {
            return Ok(est);
        }
        if x_lo <= x_floor {
            return Err(CoreError::QuadratureFailure(
                "integrand not integrable near 0 within scalar range".into(),
            ));
        }
        span = span * F::of(4.0);
    }
}

fn adaptive_segment<F: Real>(
    f: &impl Fn(F) -> F,
    a: F,
    b: F,
    opts: &QuadOpts<F>,
    origin_transformed: bool,
) -> Result<F> {
    if b <= a {
        return Ok(F::zero());
    }
    let first = gk15(f, a, b);
    if let Some(t) = first.nonfinite_at {
        return Err(nonfinite_error(t, origin_transformed));
    }
    let mut segs = vec![Segment {
        a,
        b,
        value: first.value,
        error: first.error,
    }];
    let mut splits = 0usize;
    loop {
        let mut total = F::zero();
        let mut err = F::zero();
        for s in &segs {
            total = total + s.value;
            err = err + s.error;
        }
        let target = opts.rel_tol * total.abs().max(F::of(1e-290));
        if err <= target {
            return Ok(total);
        }
        if splits >= opts.max_panels {
            return Err(CoreError::QuadratureFailure(format!(
                "budget of {} bisections exhausted (err {err} > target {target})",
                opts.max_panels
            )));
        }
        // Bisect the worst segment.
        let (idx, _) = segs
            .iter()
            .enumerate()
            .max_by(|(_, x), (_, y)| x.error.partial_cmp(&y.error).unwrap())
            .unwrap();
        let seg = segs.swap_remove(idx);
        let mid = F::of(0.5) * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // Interval no longer splittable in this precision; keep it.
            segs.push(seg);
            return Ok(segs.iter().fold(F::zero(), |acc, s| acc + s.value));
        }
        for (lo, hi) in [(seg.a, mid), (mid, seg.b)] {
            let r = gk15(f, lo, hi);
            if let Some(t) = r.nonfinite_at {
                return Err(nonfinite_error(t, origin_transformed));
            }
            segs.push(Segment {
                a: lo,
                b: hi,
                value: r.value,
                error: r.error,
            });
        }
        splits += 1;
    }
}

fn nonfinite_error<F: Real>(t: F, origin_transformed: bool) -> CoreError {
    if origin_transformed {
        CoreError::QuadratureFailure("integrand diverges near 0".into())
    } else {
        CoreError::NonFiniteIntegrand(t.to_f64_lossy())
    }
}

/// Cached cumulative integral of a fixed positive integrand over `(0, hi)`.
///
/// Panel boundaries follow a geometric ladder from `lo` to `hi` merged with
/// caller-supplied split points; each panel carries an 8-point Gauss value.
/// The mass below `lo` is estimated by power extrapolation from the two
/// lowest panels; when that extrapolation does not converge the cache is
/// flagged `lower_divergent`. Point queries add a local Gauss correction
/// from the nearest boundary, so no interpolation error is introduced.
pub struct Cumulative<F: Real> {
    f: Box<dyn Fn(F) -> F + Send + Sync>,
    bounds: Vec<F>,
    below: Vec<F>,
    above: Vec<F>,
    head: F,
    head_exponent: F,
    /// Fitted local power model f ~ c s^{-gamma} near the floor, used to
    /// extend tail queries below `bounds[0]`.
    tail_model: Option<(F, F)>,
    pub lower_divergent: bool,
}

impl<F: Real> Cumulative<F> {
    pub fn build(
        f: impl Fn(F) -> F + Send + Sync + 'static,
        lo: F,
        hi: F,
        splits: &[F],
    ) -> Result<Self> {
        assert!(
            lo > F::zero() && hi > lo,
            "cumulative cache needs 0 < lo < hi"
        );
        // Raise the floor while the integrand there is outside the safely
        // representable range; the fitted power model serves queries below.
        let mut lo = lo;
        let huge = F::of(1e250);
        while lo < hi * F::of(1e-8) {
            let v = f(lo);
            if v.is_finite() && v.abs() < huge {
                break;
            }
            lo = lo * F::of(1e6);
        }
        let ratio = F::of(10.0).powf(F::of(0.125));
        let mut bounds = Vec::new();
        let mut x = lo;
        while x < hi {
            bounds.push(x);
            x = x * ratio;
        }
        bounds.push(hi);
        for &s in splits {
            if s > lo && s < hi {
                bounds.push(s);
            }
        }
        bounds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bounds.dedup_by(|a, b| crate::real::rel_gap(*a, *b) < F::of(1e-14));

        let n = bounds.len();
        let mut panel = vec![F::zero(); n - 1];
        for i in 0..n - 1 {
            let v = gl8(&f, bounds[i], bounds[i + 1]);
            if !v.is_finite() {
                return Err(CoreError::NonFinite("cumulative panel".into()));
            }
            panel[i] = v;
        }
        // Power extrapolation of the mass below `lo`, and a local power
        // model of the integrand there for sub-floor tail queries.
        let mut tail_model = None;
        let (head, head_exponent, lower_divergent) = if n >= 3 && panel[1] > F::zero() {
            let zeta = panel[0] / panel[1];
            if zeta > F::zero() && zeta.is_finite() {
                // panel_i ~ g^{i (1 - gamma)} for f ~ c s^{-gamma}.
                let g = bounds[1] / bounds[0];
                let gamma = F::one() + zeta.ln() / g.ln();
                let c = if (gamma - F::one()).abs() < F::of(1e-6) {
                    panel[0] / g.ln()
                } else {
                    let e = F::one() - gamma;
                    panel[0] * e / (bounds[1].powf(e) - bounds[0].powf(e))
                };
                if c.is_finite() && c > F::zero() {
                    tail_model = Some((c, gamma));
                }
            }
            if !zeta.is_finite() || zeta >= F::of(0.995) {
                (F::zero(), F::one(), true)
            } else if zeta <= F::zero() {
                (F::zero(), F::one(), false)
            } else {
                let g = bounds[1] / bounds[0];
                let bp = -(zeta.ln()) / g.ln();
                (panel[0] * zeta / (F::one() - zeta), bp, false)
            }
        } else {
            (F::zero(), F::one(), false)
        };

        let mut below = vec![F::zero(); n];
        below[0] = head;
        for i in 0..n - 1 {
            below[i + 1] = below[i] + panel[i];
        }
        let mut above = vec![F::zero(); n];
        for i in (0..n - 1).rev() {
            above[i] = above[i + 1] + panel[i];
        }
        Ok(Cumulative {
            f: Box::new(f),
            bounds,
            below,
            above,
            head,
            head_exponent,
            tail_model,
            lower_divergent,
        })
    }

    /// `∫_x^{b0} c s^{-gamma} ds` for the fitted sub-floor model.
    fn model_mass_between(&self, x: F, b0: F) -> F {
        let Some((c, gamma)) = self.tail_model else {
            return F::zero();
        };
        let one = F::one();
        if (gamma - one).abs() < F::of(1e-6) {
            c * (b0 / x).ln()
        } else {
            let e = one - gamma;
            c * (b0.powf(e) - x.powf(e)) / e
        }
    }

    fn locate(&self, x: F) -> usize {
        // Largest i with bounds[i] <= x.
        match self.bounds.binary_search_by(|b| b.partial_cmp(&x).unwrap()) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }

    /// `∫_0^x f` (extrapolated mass below the cache floor included).
    /// Divergent lower ends honestly evaluate to +inf.
    pub fn from_zero(&self, x: F) -> F {
        if self.lower_divergent {
            return F::infinity();
        }
        if x <= self.bounds[0] {
            if self.head == F::zero() {
                return F::zero();
            }
            return self.head * (x / self.bounds[0]).powf(self.head_exponent);
        }
        let last = *self.bounds.last().unwrap();
        if x >= last {
            return *self.below.last().unwrap();
        }
        let i = self.locate(x);
        self.below[i] + gl8(self.f.as_ref(), self.bounds[i], x)
    }

    /// `∫_x^{hi} f` where `hi` is the cache ceiling. Below the cache floor
    /// the fitted power model extends the tail, so quantities probed at very
    /// small t (open-edge supremum refinement) stay meaningful.
    pub fn tail(&self, x: F) -> F {
        if x <= self.bounds[0] {
            return self.above[0] + self.model_mass_between(x, self.bounds[0]);
        }
        let last = *self.bounds.last().unwrap();
        if x >= last {
            return F::zero();
        }
        let i = self.locate(x);
        self.above[i + 1] + gl8(self.f.as_ref(), x, self.bounds[i + 1])
    }

    pub fn total(&self) -> F {
        *self.below.last().unwrap()
    }

    pub fn ceiling(&self) -> F {
        *self.bounds.last().unwrap()
    }

    /// Share of the total mass sitting above `from`; a truncation diagnostic.
    pub fn upper_share(&self, from: F) -> F {
        let t = self.total();
        if t <= F::zero() {
            return F::zero();
        }
        self.tail(from) / t
    }
}
