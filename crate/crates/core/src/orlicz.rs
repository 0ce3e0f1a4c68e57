//! Growth-function calculus.
//!
//! A [`GrowthFunction`] is the scalar nonlinearity `g` of the operator. It is
//! strictly increasing with `g(0) = 0`, and its growth indices
//!
//! ```text
//! i_g = inf t g'(t) / g(t),    s_g = sup t g'(t) / g(t)
//! ```
//!
//! sandwich it between two powers. [`OrliczG`] wraps the antiderivative
//! `G(t) = ∫₀ᵗ g` together with a lookup table used to bracket `G⁻¹`, the
//! Young conjugate `G*` and the Sobolev companion `S(t) = G(t) (G(t)/t)^(-1/n)`.
//!
//! Inclusion chain implied by the index sandwich (documentation only):
//! `L^{1+s_g} ⊂ L^G ⊂ L^{1+i_g} ⊂ L^1` on bounded sets.

use std::sync::Arc;

use crate::error::{check_finite, Error, Result};

/// Default sampling of the index estimator: 4096 log-spaced points on `[1e-8, 1e8]`.
pub const INDEX_SAMPLES: usize = 4096;
pub const INDEX_RANGE: (f64, f64) = (1e-8, 1e8);

/// Default lookup table for `G` and `G⁻¹`.
pub const CACHE_NODES: usize = 2048;
pub const CACHE_RANGE: (f64, f64) = (1e-12, 1e12);

/// What to do with tabulated data whose lower index falls below one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IndexPolicy {
    #[default]
    Reject,
    Warn,
}

#[derive(Debug, Clone)]
pub enum GrowthKind {
    /// `g(t) = t^{p-1}`.
    Power { p: f64 },
    /// `g(t) = (mu + t²)^{(p-2)/2} t`.
    RegularizedPower { p: f64, mu: f64 },
    /// Monotone interpolation of sampled `(t, g(t))` pairs.
    Tabulated(Arc<Table>),
}

/// Sampled growth function, interpolated by a monotone cubic in `(ln t, ln g)`
/// and extended by power laws past both ends.
#[derive(Debug, Clone)]
pub struct Table {
    log_t: Vec<f64>,
    log_g: Vec<f64>,
    slope: Vec<f64>,
    /// `G` at each node.
    cumulative: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GrowthFunction {
    kind: GrowthKind,
    ig: f64,
    sg: f64,
}

impl GrowthFunction {
    pub fn power(p: f64) -> Result<Self> {
        check_finite("p", p)?;
        if p < 2.0 {
            return Err(Error::Domain(format!(
                "power growth needs p >= 2 (lower index p-1 >= 1), got {p}"
            )));
        }
        Ok(Self {
            kind: GrowthKind::Power { p },
            ig: p - 1.0,
            sg: p - 1.0,
        })
    }

    pub fn regularized_power(p: f64, mu: f64) -> Result<Self> {
        check_finite("p", p)?;
        check_finite("mu", mu)?;
        if p < 2.0 || mu < 0.0 {
            return Err(Error::Domain(format!(
                "regularized power needs p >= 2 and mu >= 0, got p={p}, mu={mu}"
            )));
        }
        // t g'/g = (mu + (p-1) t²) / (mu + t²) sweeps [1, p-1] when mu > 0.
        let ig = if mu > 0.0 { 1.0 } else { p - 1.0 };
        Ok(Self {
            kind: GrowthKind::RegularizedPower { p, mu },
            ig,
            sg: p - 1.0,
        })
    }

    pub fn tabulated(nodes: &[f64], values: &[f64], policy: IndexPolicy) -> Result<Self> {
        if nodes.len() != values.len() {
            return Err(Error::Shape(format!(
                "{} nodes but {} values",
                nodes.len(),
                values.len()
            )));
        }
        if nodes.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "tabulated growth needs at least 3 nodes, got {}",
                nodes.len()
            )));
        }
        for w in nodes.windows(2) {
            if !(w[0] > 0.0 && w[1] > w[0] && w[1].is_finite()) {
                return Err(Error::Data(
                    "tabulated nodes must be positive and strictly increasing".into(),
                ));
            }
        }
        for w in values.windows(2) {
            if !(w[0] > 0.0 && w[1] > w[0] && w[1].is_finite()) {
                return Err(Error::Data(
                    "tabulated values must be positive and strictly increasing".into(),
                ));
            }
        }
        let table = Table::build(nodes, values);
        let mut gf = Self {
            kind: GrowthKind::Tabulated(Arc::new(table)),
            ig: 1.0,
            sg: 1.0,
        };
        let (ig, sg) = gf.estimate_indices(INDEX_SAMPLES)?;
        if ig < 1.0 {
            match policy {
                IndexPolicy::Reject => {
                    return Err(Error::Data(format!(
                        "tabulated growth has lower index {ig:.4} < 1"
                    )))
                }
                IndexPolicy::Warn => {
                    log::warn!("tabulated growth has lower index {ig:.4} < 1");
                }
            }
        }
        gf.ig = ig;
        gf.sg = sg;
        Ok(gf)
    }

    /// Parses two-column `t g(t)` text; `#` starts a comment.
    pub fn from_table_text(text: &str, policy: IndexPolicy) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split_whitespace().map(str::parse::<f64>);
            match (cols.next(), cols.next(), cols.next()) {
                (Some(Ok(t)), Some(Ok(g)), None) => {
                    nodes.push(t);
                    values.push(g);
                }
                _ => {
                    return Err(Error::Parse(format!(
                        "line {}: expected two numeric columns",
                        lineno + 1
                    )))
                }
            }
        }
        Self::tabulated(&nodes, &values, policy)
    }

    pub fn kind(&self) -> &GrowthKind {
        &self.kind
    }

    /// Lower growth index `i_g`.
    pub fn ig(&self) -> f64 {
        self.ig
    }

    /// Upper growth index `s_g`.
    pub fn sg(&self) -> f64 {
        self.sg
    }

    /// `g(t)`, checked.
    pub fn eval(&self, t: f64) -> Result<f64> {
        check_arg(t)?;
        Ok(self.g(t))
    }

    /// `g(t)` for `t >= 0`, unchecked.
    pub fn g(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            GrowthKind::Power { p } => pow_fast(t, p - 1.0),
            GrowthKind::RegularizedPower { p, mu } => pow_fast(mu + t * t, 0.5 * (p - 2.0)) * t,
            GrowthKind::Tabulated(tab) => tab.value(t),
        }
    }

    /// `g'(t)` for `t > 0`.
    pub fn dg(&self, t: f64) -> f64 {
        match &self.kind {
            GrowthKind::Power { p } => {
                if *p == 2.0 {
                    1.0
                } else if t <= 0.0 {
                    0.0
                } else {
                    (p - 1.0) * pow_fast(t, p - 2.0)
                }
            }
            GrowthKind::RegularizedPower { p, mu } => {
                let s = mu + t * t;
                pow_fast(s, 0.5 * (p - 4.0)) * (mu + (p - 1.0) * t * t)
            }
            GrowthKind::Tabulated(tab) => {
                if t <= 0.0 {
                    0.0
                } else {
                    tab.value(t) / t * tab.log_slope(t)
                }
            }
        }
    }

    /// The kernel `g(t)/t`, extended to `t = 0` by its limit.
    pub fn kernel(&self, t: f64) -> f64 {
        match &self.kind {
            GrowthKind::Power { p } => {
                if *p == 2.0 {
                    1.0
                } else if t <= 0.0 {
                    0.0
                } else {
                    pow_fast(t, p - 2.0)
                }
            }
            GrowthKind::RegularizedPower { p, mu } => pow_fast(mu + t * t, 0.5 * (p - 2.0)),
            GrowthKind::Tabulated(tab) => {
                if t <= 0.0 {
                    // the power-law extension below the first node fixes the limit
                    let q = tab.slope[0];
                    if q > 1.0 {
                        0.0
                    } else {
                        (tab.log_g[0] - tab.log_t[0]).exp()
                    }
                } else {
                    tab.value(t) / t
                }
            }
        }
    }

    /// `t g'(t) / g(t)`.
    pub fn index_ratio(&self, t: f64) -> f64 {
        match &self.kind {
            GrowthKind::Power { p } => p - 1.0,
            GrowthKind::RegularizedPower { p, mu } => {
                let t2 = t * t;
                (mu + (p - 1.0) * t2) / (mu + t2)
            }
            GrowthKind::Tabulated(tab) => tab.log_slope(t),
        }
    }

    /// `G(t) = ∫₀ᵗ g` for `t >= 0`, unchecked.
    pub fn primitive(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            GrowthKind::Power { p } => {
                if *p == 2.0 {
                    0.5 * t * t
                } else {
                    pow_fast(t, *p) / p
                }
            }
            GrowthKind::RegularizedPower { p, mu } => {
                if *mu == 0.0 {
                    pow_fast(t, *p) / p
                } else {
                    // ((mu + t²)^{p/2} - mu^{p/2}) / p without cancellation
                    mu.powf(0.5 * p) * (0.5 * p * (t * t / mu).ln_1p()).exp_m1() / p
                }
            }
            GrowthKind::Tabulated(tab) => tab.primitive(t),
        }
    }

    /// Infimum and supremum of `t g'(t)/g(t)` over `samples` log-spaced points
    /// on `[1e-8, 1e8]`.
    pub fn estimate_indices(&self, samples: usize) -> Result<(f64, f64)> {
        if samples < 16 {
            return Err(Error::InsufficientData(format!(
                "index estimation needs at least 16 samples, got {samples}"
            )));
        }
        if let GrowthKind::Tabulated(tab) = &self.kind {
            if tab.log_t.len() < 3 {
                return Err(Error::InsufficientData("fewer than 3 table nodes".into()));
            }
        }
        let (lo, hi) = INDEX_RANGE;
        let (a, b) = (lo.ln(), hi.ln());
        let mut inf = f64::INFINITY;
        let mut sup = f64::NEG_INFINITY;
        for k in 0..samples {
            let t = (a + (b - a) * k as f64 / (samples - 1) as f64).exp();
            let r = self.index_ratio(t);
            inf = inf.min(r);
            sup = sup.max(r);
        }
        Ok((inf, sup))
    }

    /// Solves `g(t) = s` by bracketing and safeguarded Newton.
    pub fn inverse(&self, s: f64) -> Result<f64> {
        check_arg(s)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        let (mut lo, mut hi) = (1.0_f64, 1.0_f64);
        while self.g(lo) > s {
            lo *= 0.5;
            if lo < 1e-300 {
                return Err(Error::Range(format!("g⁻¹({s}) below representable range")));
            }
        }
        while self.g(hi) < s {
            hi *= 2.0;
            if !hi.is_finite() || hi > 1e300 {
                return Err(Error::Range(format!("g⁻¹({s}) above representable range")));
            }
        }
        Ok(newton_bisect(|t| (self.g(t) - s, self.dg(t)), lo, hi))
    }
}

/// `G` together with its lookup table.
#[derive(Debug, Clone)]
pub struct OrliczG {
    growth: GrowthFunction,
    cache_t: Vec<f64>,
    cache_big_g: Vec<f64>,
}

impl OrliczG {
    pub fn new(growth: GrowthFunction) -> Self {
        Self::with_cache(growth, CACHE_NODES, CACHE_RANGE.0, CACHE_RANGE.1)
            .expect("default cache parameters are valid")
    }

    pub fn with_cache(growth: GrowthFunction, nodes: usize, t_lo: f64, t_hi: f64) -> Result<Self> {
        if nodes < 2 || !(t_lo > 0.0 && t_hi > t_lo && t_hi.is_finite()) {
            return Err(Error::Domain(format!(
                "bad cache parameters: {nodes} nodes on [{t_lo}, {t_hi}]"
            )));
        }
        let (a, b) = (t_lo.ln(), t_hi.ln());
        let cache_t: Vec<f64> = (0..nodes)
            .map(|k| (a + (b - a) * k as f64 / (nodes - 1) as f64).exp())
            .collect();
        let cache_big_g = cache_t.iter().map(|&t| growth.primitive(t)).collect();
        Ok(Self {
            growth,
            cache_t,
            cache_big_g,
        })
    }

    pub fn growth(&self) -> &GrowthFunction {
        &self.growth
    }

    /// `G(t)`, checked.
    pub fn eval(&self, t: f64) -> Result<f64> {
        check_arg(t)?;
        Ok(self.growth.primitive(t))
    }

    /// `G(t)` unchecked.
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        self.growth.primitive(t)
    }

    /// `G⁻¹(s)`: bracketed from the table, refined by Newton. Outside the
    /// table the closed-form kinds fall back to their explicit inverse.
    pub fn inverse(&self, s: f64) -> Result<f64> {
        check_arg(s)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        let first = self.cache_big_g[0];
        let last = *self.cache_big_g.last().unwrap();
        if s < first || s > last {
            return match self.growth.kind() {
                GrowthKind::Power { p } => Ok((p * s).powf(1.0 / p)),
                GrowthKind::RegularizedPower { p, mu } => Ok(regularized_inverse(*p, *mu, s)),
                GrowthKind::Tabulated(_) => Err(Error::Range(format!(
                    "G⁻¹({s:e}) outside the tabulated range [{first:e}, {last:e}]"
                ))),
            };
        }
        let k = self.cache_big_g.partition_point(|&v| v < s);
        if self.cache_big_g.get(k) == Some(&s) {
            return Ok(self.cache_t[k]);
        }
        let (lo, hi) = (self.cache_t[k - 1], self.cache_t[k]);
        Ok(newton_bisect(
            |t| (self.growth.primitive(t) - s, self.growth.g(t)),
            lo,
            hi,
        ))
    }

    /// `G*(s) = s g⁻¹(s) - G(g⁻¹(s))`.
    pub fn young_conjugate(&self, s: f64) -> Result<f64> {
        check_arg(s)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        let t = self.growth.inverse(s)?;
        Ok((s * t - self.growth.primitive(t)).max(0.0))
    }

    /// `S(t) = G(t) (G(t)/t)^{-1/n}`.
    pub fn sobolev(&self, t: f64, n: usize) -> Result<f64> {
        check_finite("t", t)?;
        if t <= 0.0 {
            return Err(Error::Domain(format!("S needs t > 0, got {t}")));
        }
        if n < 2 {
            return Err(Error::Domain(format!("dimension must be >= 2, got {n}")));
        }
        Ok(sobolev_unchecked(&self.growth, t, n))
    }

    /// `S⁻¹(s)` by geometric bisection.
    pub fn sobolev_inverse(&self, s: f64, n: usize) -> Result<f64> {
        check_arg(s)?;
        if n < 2 {
            return Err(Error::Domain(format!("dimension must be >= 2, got {n}")));
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        let (mut lo, mut hi) = (1.0_f64, 1.0_f64);
        while sobolev_unchecked(&self.growth, lo, n) > s {
            lo *= 0.5;
            if lo < 1e-300 {
                return Err(Error::Range(format!("S⁻¹({s:e}) underflows")));
            }
        }
        while sobolev_unchecked(&self.growth, hi, n) < s {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::Range(format!("S⁻¹({s:e}) overflows")));
            }
        }
        for _ in 0..200 {
            if hi - lo <= 1e-15 * hi {
                break;
            }
            let mid = (lo * hi).sqrt();
            if sobolev_unchecked(&self.growth, mid, n) < s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

fn sobolev_unchecked(growth: &GrowthFunction, t: f64, n: usize) -> f64 {
    let big_g = growth.primitive(t);
    big_g * (big_g / t).powf(-1.0 / n as f64)
}

fn check_arg(t: f64) -> Result<()> {
    check_finite("argument", t)?;
    if t < 0.0 {
        return Err(Error::Domain(format!("argument must be >= 0, got {t}")));
    }
    Ok(())
}

#[inline]
fn pow_fast(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if e == 1.0 {
        x
    } else if e == 2.0 {
        x * x
    } else if e == 0.5 {
        x.sqrt()
    } else if e.fract() == 0.0 && e.abs() <= 16.0 {
        x.powi(e as i32)
    } else {
        x.powf(e)
    }
}

fn regularized_inverse(p: f64, mu: f64, s: f64) -> f64 {
    if mu == 0.0 {
        return (p * s).powf(1.0 / p);
    }
    // t² = (mu^{p/2} + p s)^{2/p} - mu
    let a = mu.powf(0.5 * p);
    (mu * ((2.0 / p) * (p * s / a).ln_1p()).exp_m1()).sqrt()
}

/// Root of an increasing function on `[lo, hi]` given `(f, f')`.
fn newton_bisect(f: impl Fn(f64) -> (f64, f64), mut lo: f64, mut hi: f64) -> f64 {
    let mut t = (lo * hi).sqrt();
    for _ in 0..200 {
        let (v, d) = f(t);
        if v == 0.0 {
            return t;
        }
        if v < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if hi - lo <= 1e-15 * hi {
            return t;
        }
        let newton = if d > 0.0 { t - v / d } else { f64::NAN };
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - t).abs() <= 4.0 * f64::EPSILON * t {
            return next;
        }
        t = next;
    }
    t
}

impl Table {
    fn build(nodes: &[f64], values: &[f64]) -> Self {
        let log_t: Vec<f64> = nodes.iter().map(|t| t.ln()).collect();
        let log_g: Vec<f64> = values.iter().map(|g| g.ln()).collect();
        let slope = pchip_slopes(&log_t, &log_g);
        let mut table = Self {
            log_t,
            log_g,
            slope,
            cumulative: Vec::new(),
        };
        let mut cumulative = Vec::with_capacity(nodes.len());
        let t0 = nodes[0];
        let q0 = table.slope[0];
        cumulative.push(values[0] * t0 / (q0 + 1.0));
        for k in 1..nodes.len() {
            let piece = table.integrate_segment(k - 1, nodes[k - 1], nodes[k]);
            cumulative.push(cumulative[k - 1] + piece);
        }
        table.cumulative = cumulative;
        table
    }

    fn segment(&self, s: f64) -> usize {
        let k = self.log_t.partition_point(|&x| x <= s);
        k.clamp(1, self.log_t.len() - 1) - 1
    }

    /// `(ln g, d ln g / d ln t)` at `s = ln t`.
    fn eval_log(&self, s: f64) -> (f64, f64) {
        let last = self.log_t.len() - 1;
        if s <= self.log_t[0] {
            return (
                self.log_g[0] + self.slope[0] * (s - self.log_t[0]),
                self.slope[0],
            );
        }
        if s >= self.log_t[last] {
            return (
                self.log_g[last] + self.slope[last] * (s - self.log_t[last]),
                self.slope[last],
            );
        }
        let k = self.segment(s);
        let h = self.log_t[k + 1] - self.log_t[k];
        let x = (s - self.log_t[k]) / h;
        let (y0, y1) = (self.log_g[k], self.log_g[k + 1]);
        let (d0, d1) = (self.slope[k] * h, self.slope[k + 1] * h);
        let x2 = x * x;
        let x3 = x2 * x;
        let v = (2.0 * x3 - 3.0 * x2 + 1.0) * y0
            + (x3 - 2.0 * x2 + x) * d0
            + (-2.0 * x3 + 3.0 * x2) * y1
            + (x3 - x2) * d1;
        let dv = (6.0 * x2 - 6.0 * x) * y0
            + (3.0 * x2 - 4.0 * x + 1.0) * d0
            + (-6.0 * x2 + 6.0 * x) * y1
            + (3.0 * x2 - 2.0 * x) * d1;
        (v, dv / h)
    }

    fn value(&self, t: f64) -> f64 {
        self.eval_log(t.ln()).0.exp()
    }

    fn log_slope(&self, t: f64) -> f64 {
        self.eval_log(t.ln()).1
    }

    fn integrate_segment(&self, _k: usize, a: f64, b: f64) -> f64 {
        // ∫ g(t) dt = ∫ g(e^s) e^s ds
        let f = |s: f64| (self.eval_log(s).0 + s).exp();
        adaptive_simpson(&f, a.ln(), b.ln(), 1e-12)
    }

    fn primitive(&self, t: f64) -> f64 {
        let last = self.log_t.len() - 1;
        let s = t.ln();
        if s <= self.log_t[0] {
            let q = self.slope[0];
            return self.cumulative[0] * ((q + 1.0) * (s - self.log_t[0])).exp();
        }
        if s >= self.log_t[last] {
            let q = self.slope[last];
            let t_n = self.log_t[last].exp();
            let g_n = self.log_g[last].exp();
            return self.cumulative[last]
                + g_n * t_n / (q + 1.0) * ((q + 1.0) * (s - self.log_t[last])).exp_m1();
        }
        let k = self.segment(s);
        self.cumulative[k] + self.integrate_segment(k, self.log_t[k].exp(), t)
    }
}

/// Fritsch–Carlson monotone slopes.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
    } else {
        d[0] = end(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    }
    d
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let err = left + right - whole;
        if depth == 0 || err.abs() <= 15.0 * tol {
            left + right + err / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb) = (f(a), f(b));
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let tol = (rel_tol * whole.abs()).max(f64::MIN_POSITIVE);
    recurse(f, a, b, fa, fm, fb, whole, tol, 40)
}
