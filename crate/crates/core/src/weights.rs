//! Weight functions on (0, L), their primitives, and admissibility checks.
//!
//! Four spec families are supported: pure powers, power-log weights,
//! piecewise constants, and tabulated samples with linear interpolation.
//! Powers, piecewise and tabulated weights have closed-form primitives;
//! power-log primitives are served from a cumulative quadrature cache built
//! at construction time.

use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::grids::Grid;
use crate::quad::Cumulative;
use crate::real::Real;

/// Interval length: finite, or infinite with a computational truncation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Length<F> {
    Finite(F),
    Infinite { trunc: F },
}

pub const DEFAULT_TRUNC: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain<F> {
    pub length: Length<F>,
}

impl<F: Real> Domain<F> {
    pub fn finite(l: F) -> Result<Self> {
        if !(l > F::zero() && l.is_finite()) {
            return Err(CoreError::InadmissibleSpec(format!(
                "domain length must be positive and finite, got {l}"
            )));
        }
        Ok(Domain {
            length: Length::Finite(l),
        })
    }

    pub fn infinite() -> Self {
        Domain {
            length: Length::Infinite {
                trunc: F::of(DEFAULT_TRUNC),
            },
        }
    }

    pub fn infinite_truncated(trunc: F) -> Result<Self> {
        if !(trunc > F::zero() && trunc.is_finite()) {
            return Err(CoreError::InadmissibleSpec(format!(
                "truncation must be positive and finite, got {trunc}"
            )));
        }
        Ok(Domain {
            length: Length::Infinite { trunc },
        })
    }

    /// Effective right endpoint for computation: min(L, L_trunc).
    pub fn l_eff(&self) -> F {
        match self.length {
            Length::Finite(l) => l,
            Length::Infinite { trunc } => trunc,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self.length, Length::Infinite { .. })
    }

    /// Same domain with the truncation scaled by `factor`; identity for
    /// finite domains. Used by the truncation-stability diagnostic.
    pub fn with_trunc_scaled(&self, factor: F) -> Self {
        match self.length {
            Length::Finite(l) => Domain {
                length: Length::Finite(l),
            },
            Length::Infinite { trunc } => Domain {
                length: Length::Infinite {
                    trunc: trunc * factor,
                },
            },
        }
    }
}

/// Description of a weight on (0, L).
#[derive(Clone, Debug)]
pub enum WeightSpec<F> {
    /// t^alpha with alpha > -1.
    Power { alpha: F },
    /// t^alpha (1 + |log t|)^beta with alpha > -1.
    PowerLog { alpha: F, beta: F },
    /// Constant values between interior breakpoints: values[i] holds on
    /// (breakpoints[i-1], breakpoints[i]) with the outer pieces extending
    /// to 0 and L, so values.len() == breakpoints.len() + 1.
    Piecewise { breakpoints: Vec<F>, values: Vec<F> },
    /// Samples (t_i, v_i), linearly interpolated, constant beyond the ends.
    Table { points: Vec<(F, F)> },
}

#[derive(Clone)]
pub struct Weight<F: Real> {
    spec: WeightSpec<F>,
    domain: Domain<F>,
    amp: F,
    primitive_cache: Option<Arc<Cumulative<F>>>,
    primitive_divergent: bool,
}

impl<F: Real> std::fmt::Debug for Weight<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Weight")
            .field("spec", &self.spec)
            .field("amp", &self.amp)
            .finish()
    }
}

pub fn make_weight<F: Real>(spec: WeightSpec<F>, domain: Domain<F>) -> Result<Weight<F>> {
    match &spec {
        WeightSpec::Power { alpha } | WeightSpec::PowerLog { alpha, .. } => {
            if !(*alpha > F::of(-1.0)) {
                return Err(CoreError::InadmissibleSpec(format!(
                    "power exponent must exceed -1 for an integrable primitive, got {alpha}"
                )));
            }
        }
        WeightSpec::Piecewise {
            breakpoints,
            values,
        } => {
            if values.len() != breakpoints.len() + 1 {
                return Err(CoreError::InadmissibleSpec(
                    "piecewise weight needs values.len() == breakpoints.len() + 1".into(),
                ));
            }
            if !strictly_increasing_within(breakpoints, domain.l_eff()) {
                return Err(CoreError::InadmissibleSpec(
                    "piecewise breakpoints must be strictly increasing inside (0, L)".into(),
                ));
            }
            if values.iter().any(|v| !(*v > F::zero()) || !v.is_finite()) {
                return Err(CoreError::InadmissibleSpec(
                    "piecewise values must be positive and finite".into(),
                ));
            }
        }
        WeightSpec::Table { points } => {
            if points.len() < 2 {
                return Err(CoreError::InadmissibleSpec(
                    "tabulated weight needs at least two samples".into(),
                ));
            }
            let ts: Vec<F> = points.iter().map(|p| p.0).collect();
            if !strictly_increasing_within(&ts, domain.l_eff()) {
                return Err(CoreError::InadmissibleSpec(
                    "table abscissae must be strictly increasing inside (0, L)".into(),
                ));
            }
            if points
                .iter()
                .any(|p| !(p.1 > F::zero()) || !p.1.is_finite())
            {
                return Err(CoreError::InadmissibleSpec(
                    "table values must be positive and finite".into(),
                ));
            }
        }
    }
    make_weight_unchecked(spec, domain)
}

/// Constructs without admissibility validation, for diagnostic use by
/// `check_admissible`. Divergent primitives evaluate to +inf.
pub fn make_weight_unchecked<F: Real>(spec: WeightSpec<F>, domain: Domain<F>) -> Result<Weight<F>> {
    let mut primitive_divergent = false;
    let primitive_cache = match &spec {
        WeightSpec::Power { alpha } => {
            if !(*alpha > F::of(-1.0)) {
                primitive_divergent = true;
            }
            None
        }
        WeightSpec::PowerLog { alpha, beta } => {
            if !(*alpha > F::of(-1.0)) {
                primitive_divergent = true;
                None
            } else {
                let (alpha, beta) = (*alpha, *beta);
                let eval = move |t: F| t.powf(alpha) * (F::one() + t.ln().abs()).powf(beta);
                let hi = domain.l_eff();
                let lo = hi * F::of(1e-60);
                let one = if hi > F::one() {
                    vec![F::one()]
                } else {
                    vec![]
                };
                let cache = Cumulative::build(eval, lo, hi, &one)?;
                primitive_divergent = cache.lower_divergent;
                Some(Arc::new(cache))
            }
        }
        _ => None,
    };
    Ok(Weight {
        spec,
        domain,
        amp: F::one(),
        primitive_cache,
        primitive_divergent,
    })
}

fn strictly_increasing_within<F: Real>(xs: &[F], l_eff: F) -> bool {
    xs.windows(2).all(|w| w[0] < w[1]) && xs.iter().all(|&x| x > F::zero() && x < l_eff)
}

impl<F: Real> Weight<F> {
    pub fn domain(&self) -> &Domain<F> {
        &self.domain
    }

    pub fn spec(&self) -> &WeightSpec<F> {
        &self.spec
    }

    pub fn amplitude(&self) -> F {
        self.amp
    }

    /// Same weight transplanted onto another domain (caches rebuilt).
    pub fn with_domain(&self, domain: Domain<F>) -> Result<Weight<F>> {
        let mut w = make_weight(self.spec.clone(), domain)?;
        w.amp = self.amp;
        Ok(w)
    }

    /// Weight multiplied by a positive constant.
    pub fn scaled(&self, c: F) -> Result<Weight<F>> {
        if !(c > F::zero()) || !c.is_finite() {
            return Err(CoreError::InadmissibleSpec(format!(
                "scale factor must be positive and finite, got {c}"
            )));
        }
        let mut w = self.clone();
        w.amp = w.amp * c;
        Ok(w)
    }

    pub fn eval(&self, t: F) -> F {
        let base = match &self.spec {
            WeightSpec::Power { alpha } => t.powf(*alpha),
            WeightSpec::PowerLog { alpha, beta } => {
                t.powf(*alpha) * (F::one() + t.ln().abs()).powf(*beta)
            }
            WeightSpec::Piecewise {
                breakpoints,
                values,
            } => {
                let idx = breakpoints.partition_point(|&b| b < t);
                values[idx]
            }
            WeightSpec::Table { points } => {
                if t <= points[0].0 {
                    points[0].1
                } else if t >= points[points.len() - 1].0 {
                    points[points.len() - 1].1
                } else {
                    let idx = points.partition_point(|p| p.0 < t);
                    let (t0, v0) = points[idx - 1];
                    let (t1, v1) = points[idx];
                    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
                }
            }
        };
        self.amp * base
    }

    /// `∫_0^t` of the weight; closed form for every family except power-log,
    /// which is served from the construction-time cache.
    pub fn primitive(&self, t: F) -> F {
        if self.primitive_divergent {
            return F::infinity();
        }
        let base = match &self.spec {
            WeightSpec::Power { alpha } => {
                let e = *alpha + F::one();
                t.powf(e) / e
            }
            WeightSpec::PowerLog { .. } => self.primitive_cache.as_ref().unwrap().from_zero(t),
            WeightSpec::Piecewise {
                breakpoints,
                values,
            } => {
                let mut acc = F::zero();
                let mut lo = F::zero();
                let mut out = None;
                for (i, &b) in breakpoints.iter().enumerate() {
                    if t <= b {
                        out = Some(acc + values[i] * (t - lo));
                        break;
                    }
                    acc = acc + values[i] * (b - lo);
                    lo = b;
                }
                out.unwrap_or_else(|| acc + values[values.len() - 1] * (t - lo))
            }
            WeightSpec::Table { points } => {
                let (t0, v0) = points[0];
                if t <= t0 {
                    v0 * t
                } else {
                    let mut acc = v0 * t0;
                    let mut out = None;
                    for w in points.windows(2) {
                        let (ta, va) = w[0];
                        let (tb, vb) = w[1];
                        if t <= tb {
                            let vt = va + (vb - va) * (t - ta) / (tb - ta);
                            out = Some(acc + (va + vt) * (t - ta) * F::of(0.5));
                            break;
                        }
                        acc = acc + (va + vb) * (tb - ta) * F::of(0.5);
                    }
                    out.unwrap_or_else(|| {
                        let (tn, vn) = points[points.len() - 1];
                        acc + vn * (t - tn)
                    })
                }
            }
        };
        self.amp * base
    }

    /// Breakpoints where evaluation is non-smooth; quadrature splits there.
    pub fn kinks(&self) -> Vec<F> {
        match &self.spec {
            WeightSpec::Power { .. } => vec![],
            WeightSpec::PowerLog { .. } => vec![F::one()],
            WeightSpec::Piecewise { breakpoints, .. } => breakpoints.clone(),
            WeightSpec::Table { points } => points.iter().map(|p| p.0).collect(),
        }
    }
}

/// The four weights of the reduced inequality, sharing one domain.
#[derive(Clone, Debug)]
pub struct WeightSet<F: Real> {
    pub u: Weight<F>,
    pub delta: Weight<F>,
    pub v: Weight<F>,
    pub w: Weight<F>,
}

impl<F: Real> WeightSet<F> {
    pub fn new(u: Weight<F>, delta: Weight<F>, v: Weight<F>, w: Weight<F>) -> Result<Self> {
        let d = *u.domain();
        for other in [delta.domain(), v.domain(), w.domain()] {
            if *other != d {
                return Err(CoreError::InadmissibleSpec(
                    "all four weights must share one domain".into(),
                ));
            }
        }
        Ok(WeightSet { u, delta, v, w })
    }

    pub fn domain(&self) -> &Domain<F> {
        self.u.domain()
    }

    /// All weight kinks merged, for quadrature splitting.
    pub fn kinks(&self) -> Vec<F> {
        let mut ks: Vec<F> = self
            .u
            .kinks()
            .into_iter()
            .chain(self.delta.kinks())
            .chain(self.v.kinks())
            .chain(self.w.kinks())
            .collect();
        ks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ks.dedup();
        ks
    }

    pub fn with_domain(&self, domain: Domain<F>) -> Result<Self> {
        Ok(WeightSet {
            u: self.u.with_domain(domain)?,
            delta: self.delta.with_domain(domain)?,
            v: self.v.with_domain(domain)?,
            w: self.w.with_domain(domain)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct AdmissibilityIssue {
    pub weight: &'static str,
    pub at: f64,
    pub what: String,
}

#[derive(Clone, Debug, Default)]
pub struct AdmissibilityReport {
    pub issues: Vec<AdmissibilityIssue>,
}

impl AdmissibilityReport {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Checks positivity of all four weights and finiteness of their primitives
/// at every grid point and at each weight's own breakpoints, where
/// tabulated zeros sit exactly. Failures are reported, not raised.
pub fn check_admissible<F: Real>(ws: &WeightSet<F>, grid: &Grid<F>) -> AdmissibilityReport {
    let mut report = AdmissibilityReport::default();
    let named: [(&'static str, &Weight<F>); 4] = [
        ("u", &ws.u),
        ("delta", &ws.delta),
        ("v", &ws.v),
        ("w", &ws.w),
    ];
    for (name, w) in named {
        let mut probes = grid.points().to_vec();
        probes.extend(w.kinks());
        for &t in &probes {
            let val = w.eval(t);
            if !(val > F::zero()) || !val.is_finite() {
                report.issues.push(AdmissibilityIssue {
                    weight: name,
                    at: t.to_f64_lossy(),
                    what: format!("value {val} not positive"),
                });
            }
            let prim = w.primitive(t);
            if !prim.is_finite() || prim < F::zero() {
                report.issues.push(AdmissibilityIssue {
                    weight: name,
                    at: t.to_f64_lossy(),
                    what: format!("primitive {prim} not finite"),
                });
            }
        }
    }
    report
}

/// Convenience constructor: four unit weights on (0, l).
pub fn unit_weights<F: Real>(l: F) -> Result<WeightSet<F>> {
    let d = Domain::finite(l)?;
    let mk = || make_weight(WeightSpec::Power { alpha: F::zero() }, d);
    WeightSet::new(mk()?, mk()?, mk()?, mk()?)
}
