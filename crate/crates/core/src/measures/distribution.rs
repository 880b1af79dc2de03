use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64 as C64;

use super::MeasureError;

/// Piecewise-linear density given on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    lambda: Vec<f64>,
    density: Vec<f64>,
    /// Integral of the piecewise-linear interpolant over the whole grid.
    native_mass: f64,
}

impl TabulatedDensity {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, MeasureError> {
        if points.len() < 2 {
            return Err(MeasureError::InvalidTable("at least two grid points required".into()));
        }
        let (lambda, density): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
        if lambda.iter().chain(&density).any(|v| !v.is_finite()) {
            return Err(MeasureError::InvalidTable("non-finite entry".into()));
        }
        if lambda.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MeasureError::InvalidTable("grid must be strictly increasing".into()));
        }
        if density.iter().any(|&p| p < 0.0) {
            return Err(MeasureError::InvalidTable("negative density".into()));
        }
        let native_mass = (0..lambda.len() - 1)
            .map(|i| 0.5 * (density[i] + density[i + 1]) * (lambda[i + 1] - lambda[i]))
            .sum::<f64>();
        if native_mass <= 0.0 {
            return Err(MeasureError::EmptySupport);
        }
        Ok(Self { lambda, density, native_mass })
    }

    pub fn grid(&self) -> &[f64] {
        &self.lambda
    }

    pub fn values(&self) -> &[f64] {
        &self.density
    }

    fn raw(&self, x: f64) -> f64 {
        let g = &self.lambda;
        if x < g[0] || x > g[g.len() - 1] {
            return 0.0;
        }
        let i = g.partition_point(|&v| v <= x).clamp(1, g.len() - 1) - 1;
        let s = (x - g[i]) / (g[i + 1] - g[i]);
        self.density[i] * (1.0 - s) + self.density[i + 1] * s
    }

    /// Unnormalized integral of the interpolant over `(-inf, x]`.
    fn raw_cumulative(&self, x: f64) -> f64 {
        let g = &self.lambda;
        let mut acc = 0.0;
        for i in 0..g.len() - 1 {
            if x <= g[i] {
                break;
            }
            let hi = x.min(g[i + 1]);
            acc += 0.5 * (self.density[i] + self.raw(hi)) * (hi - g[i]);
        }
        acc
    }

    /// Inverse of `raw_cumulative` for a target unnormalized mass.
    fn raw_quantile(&self, target: f64) -> f64 {
        let g = &self.lambda;
        let mut acc = 0.0;
        for i in 0..g.len() - 1 {
            let h = g[i + 1] - g[i];
            let (p0, p1) = (self.density[i], self.density[i + 1]);
            let piece = 0.5 * (p0 + p1) * h;
            if acc + piece >= target || i == g.len() - 2 {
                let need = (target - acc).clamp(0.0, piece);
                // p0 s + (p1 - p0) s^2 / (2h) = need, s in [0, h]
                let a = 0.5 * (p1 - p0) / h;
                let s = if a.abs() < 1e-300 {
                    if p0 > 0.0 { need / p0 } else { 0.0 }
                } else {
                    let disc = (p0 * p0 + 4.0 * a * need).max(0.0);
                    2.0 * need / (p0 + disc.sqrt())
                };
                return g[i] + s.clamp(0.0, h);
            }
            acc += piece;
        }
        g[g.len() - 1]
    }
}

/// Disorder distribution families. All are centered at zero; a nonzero mean
/// belongs in the disorder-free Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Gaussian { sigma: f64 },
    Cauchy { theta: f64 },
    Semicircle { w: f64 },
    Uniform { v: f64 },
    Tabulated(TabulatedDensity),
}

/// A one-dimensional probability measure for a single disorder parameter,
/// optionally restricted to a hard window `[lo, hi]` and renormalized there.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderDistribution {
    family: Family,
    cutoff: Option<(f64, f64)>,
    /// Native probability mass inside the cutoff window (1 when uncut).
    mass: f64,
}

fn positive(name: &str, v: f64) -> Result<f64, MeasureError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(MeasureError::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

impl DisorderDistribution {
    fn uncut(family: Family) -> Self {
        Self { family, cutoff: None, mass: 1.0 }
    }

    pub fn gaussian(sigma: f64) -> Result<Self, MeasureError> {
        Ok(Self::uncut(Family::Gaussian { sigma: positive("sigma", sigma)? }))
    }

    pub fn cauchy(theta: f64) -> Result<Self, MeasureError> {
        Ok(Self::uncut(Family::Cauchy { theta: positive("theta", theta)? }))
    }

    pub fn semicircle(w: f64) -> Result<Self, MeasureError> {
        Ok(Self::uncut(Family::Semicircle { w: positive("w", w)? }))
    }

    pub fn uniform(v: f64) -> Result<Self, MeasureError> {
        Ok(Self::uncut(Family::Uniform { v: positive("v", v)? }))
    }

    pub fn tabulated(points: Vec<(f64, f64)>) -> Result<Self, MeasureError> {
        let table = TabulatedDensity::new(points)?;
        let mass = table.native_mass;
        Ok(Self { family: Family::Tabulated(table), cutoff: None, mass })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn cutoff(&self) -> Option<(f64, f64)> {
        self.cutoff
    }

    /// The cutoff, unless it contains the whole native support (in which case
    /// the distribution is unchanged by it).
    pub fn effective_cutoff(&self) -> Option<(f64, f64)> {
        let (a, b) = self.native_support();
        self.cutoff.filter(|&(lo, hi)| lo > a || hi < b)
    }

    /// Native probability mass inside the cutoff window (1 when uncut).
    pub fn native_window_mass(&self) -> f64 {
        match self.family {
            Family::Tabulated(_) if self.cutoff.is_none() => 1.0,
            Family::Tabulated(ref t) => self.mass / t.native_mass,
            _ => self.mass,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::Gaussian { .. } => "gaussian",
            Family::Cauchy { .. } => "cauchy",
            Family::Semicircle { .. } => "semicircle",
            Family::Uniform { .. } => "uniform",
            Family::Tabulated(_) => "tabulated",
        }
    }

    pub fn native_support(&self) -> (f64, f64) {
        match &self.family {
            Family::Gaussian { .. } | Family::Cauchy { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Family::Semicircle { w } => (-w, *w),
            Family::Uniform { v } => (-v, *v),
            Family::Tabulated(t) => (t.lambda[0], t.lambda[t.lambda.len() - 1]),
        }
    }

    /// Support after the cutoff.
    pub fn support(&self) -> (f64, f64) {
        let (a, b) = self.native_support();
        match self.cutoff {
            Some((lo, hi)) => (a.max(lo), b.min(hi)),
            None => (a, b),
        }
    }

    pub fn has_bounded_support(&self) -> bool {
        let (a, b) = self.support();
        a.is_finite() && b.is_finite()
    }

    /// True when the recurrence coefficients do not exist (heavy tails, no cutoff).
    pub fn moments_undefined(&self) -> bool {
        matches!(self.family, Family::Cauchy { .. }) && self.cutoff.is_none()
    }

    fn native_pdf(&self, x: f64) -> f64 {
        match &self.family {
            Family::Gaussian { sigma } => {
                let z = x / sigma;
                (-0.5 * z * z).exp() / ((2.0 * PI).sqrt() * sigma)
            }
            Family::Cauchy { theta } => theta / (PI * (x * x + theta * theta)),
            Family::Semicircle { w } => {
                if x.abs() >= *w {
                    0.0
                } else {
                    2.0 / (PI * w * w) * (w * w - x * x).sqrt()
                }
            }
            Family::Uniform { v } => {
                if x.abs() > *v {
                    0.0
                } else {
                    0.5 / v
                }
            }
            Family::Tabulated(t) => t.raw(x),
        }
    }

    /// Native lower-tail probability `P(X <= x)` (unnormalized for tables).
    fn native_cdf(&self, x: f64) -> f64 {
        match &self.family {
            Family::Gaussian { sigma } => 0.5 * libm::erfc(-x / (sigma * SQRT_2)),
            Family::Cauchy { theta } => 0.5 + (x / theta).atan() / PI,
            Family::Semicircle { w } => {
                let s = (x / w).clamp(-1.0, 1.0);
                0.5 + (s * (1.0 - s * s).sqrt() + s.asin()) / PI
            }
            Family::Uniform { v } => ((x + v) / (2.0 * v)).clamp(0.0, 1.0),
            Family::Tabulated(t) => t.raw_cumulative(x),
        }
    }

    /// Native mass of `[lo, hi]`, using the upper tail for windows right of
    /// the origin so far-tail windows do not cancel catastrophically.
    fn native_mass_between(&self, lo: f64, hi: f64) -> f64 {
        match &self.family {
            Family::Gaussian { sigma } if lo > 0.0 => {
                0.5 * (libm::erfc(lo / (sigma * SQRT_2)) - libm::erfc(hi / (sigma * SQRT_2)))
            }
            Family::Cauchy { theta } => ((hi / theta).atan() - (lo / theta).atan()) / PI,
            _ => self.native_cdf(hi) - self.native_cdf(lo),
        }
    }

    /// Normalized density, zero outside the (cut) support.
    pub fn density(&self, x: f64) -> f64 {
        if let Some((lo, hi)) = self.cutoff {
            if x < lo || x > hi {
                return 0.0;
            }
        }
        self.native_pdf(x) / self.mass
    }

    /// Normalized cumulative distribution of the (cut) measure.
    pub fn cdf(&self, x: f64) -> f64 {
        let (a, b) = self.support();
        if x <= a {
            return 0.0;
        }
        if x >= b {
            return 1.0;
        }
        (self.native_mass_between(a, x) / self.mass).clamp(0.0, 1.0)
    }

    /// Quantile function of the (cut) measure.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let (a, b) = self.support();
        match &self.family {
            Family::Cauchy { theta } => {
                let fa = if a.is_finite() { (a / theta).atan() } else { -PI / 2.0 };
                let fb = if b.is_finite() { (b / theta).atan() } else { PI / 2.0 };
                (theta * (fa + u * (fb - fa)).tan()).clamp(a, b)
            }
            Family::Uniform { .. } => a + u * (b - a),
            Family::Tabulated(t) => {
                let base = t.raw_cumulative(a);
                t.raw_quantile(base + u * self.mass).clamp(a, b)
            }
            Family::Gaussian { sigma } => {
                // bracket on a finite interval; 40 sigma covers every double
                let lo = if a.is_finite() { a } else { -40.0 * sigma };
                let hi = if b.is_finite() { b } else { 40.0 * sigma };
                self.bisect_quantile(u, lo, hi)
            }
            Family::Semicircle { .. } => self.bisect_quantile(u, a, b),
        }
    }

    fn bisect_quantile(&self, u: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Exact moment `E[X^m]` of an uncut closed-form family.
    pub fn moment(&self, m: u32) -> Result<f64, MeasureError> {
        if self.effective_cutoff().is_some() {
            return Err(MeasureError::RequiresUncut);
        }
        if m % 2 == 1 {
            return match self.family {
                Family::Cauchy { .. } | Family::Tabulated(_) => Err(MeasureError::UnsupportedFamily(self.family_name())),
                _ => Ok(0.0),
            };
        }
        let j = m / 2;
        match self.family {
            Family::Gaussian { sigma } => {
                let dfact: f64 = (1..=j).map(|i| (2 * i - 1) as f64).product();
                Ok(dfact * sigma.powi(m as i32))
            }
            Family::Uniform { v } => Ok(v.powi(m as i32) / (m as f64 + 1.0)),
            Family::Semicircle { w } => {
                // Catalan(j) (w/2)^(2j)
                let mut catalan = 1.0;
                for i in 0..j {
                    catalan *= 2.0 * (2 * i + 1) as f64 / (i + 2) as f64;
                }
                Ok(catalan * (0.5 * w).powi(m as i32))
            }
            _ => Err(MeasureError::UnsupportedFamily(self.family_name())),
        }
    }
}

/// Restricts the measure to `[lo, hi]` and renormalizes it to unit mass.
///
/// Applying a cutoff to an already-cut distribution intersects the windows.
pub fn apply_cutoff(dist: &DisorderDistribution, lo: f64, hi: f64) -> Result<DisorderDistribution, MeasureError> {
    if !(lo < hi) || lo.is_nan() || hi.is_nan() {
        return Err(MeasureError::InvalidParameter(format!("cutoff requires lo < hi, got [{lo}, {hi}]")));
    }
    let (lo, hi) = match dist.cutoff {
        Some((a, b)) => (lo.max(a), hi.min(b)),
        None => (lo, hi),
    };
    if !(lo < hi) {
        return Err(MeasureError::EmptySupport);
    }
    let (a, b) = dist.native_support();
    let (ea, eb) = (lo.max(a), hi.min(b));
    if !(ea < eb) {
        return Err(MeasureError::EmptySupport);
    }
    let mass = dist.native_mass_between(ea, eb);
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(MeasureError::EmptySupport);
    }
    Ok(DisorderDistribution { family: dist.family.clone(), cutoff: Some((lo, hi)), mass })
}

/// `E[exp(i t X)]` in closed form for the four named (uncut) families.
pub fn characteristic_function(dist: &DisorderDistribution, t: f64) -> Result<C64, MeasureError> {
    if dist.effective_cutoff().is_some() {
        return Err(MeasureError::RequiresUncut);
    }
    if t == 0.0 {
        return Ok(C64::new(1.0, 0.0));
    }
    let value = match dist.family {
        Family::Gaussian { sigma } => (-0.5 * sigma * sigma * t * t).exp(),
        Family::Cauchy { theta } => (-theta * t.abs()).exp(),
        Family::Semicircle { w } => bessel_ratio(w * t),
        Family::Uniform { v } => sinc(v * t),
        Family::Tabulated(_) => return Err(MeasureError::UnsupportedFamily("tabulated")),
    };
    Ok(C64::new(value, 0.0))
}

/// `2 J1(x) / x`, continuous through `x = 0`.
pub fn bessel_ratio(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 8.0 + x2 * x2 / 192.0
    } else {
        2.0 * libm::j1(x) / x
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn families() -> Vec<DisorderDistribution> {
        vec![
            DisorderDistribution::gaussian(1.3).unwrap(),
            DisorderDistribution::cauchy(0.7).unwrap(),
            DisorderDistribution::semicircle(2.0).unwrap(),
            DisorderDistribution::uniform(0.5).unwrap(),
            DisorderDistribution::tabulated(vec![(-1.0, 0.0), (0.0, 2.0), (2.0, 1.0)]).unwrap(),
        ]
    }

    /// Composite midpoint integral of the density over the (cut) support.
    fn brute_mass(d: &DisorderDistribution) -> f64 {
        let (a, b) = d.support();
        let (a, b) = (a.max(-2000.0), b.min(2000.0));
        let n = 2_000_000;
        let h = (b - a) / n as f64;
        (0..n).map(|i| d.density(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
    }

    #[test]
    fn cut_densities_are_renormalized() {
        for d in families() {
            let cut = apply_cutoff(&d, -0.8, 0.9).unwrap();
            let m = brute_mass(&cut);
            assert!((m - 1.0).abs() < 1e-6, "{}: {m}", d.family_name());
            // closed-form window mass is exact
            assert!((cut.cdf(0.9) - 1.0).abs() < 1e-12);
            assert_eq!(cut.cdf(-0.8), 0.0);
        }
    }

    #[test]
    fn uniform_cutoff_at_native_support_is_identity() {
        let u = DisorderDistribution::uniform(1.5).unwrap();
        let cut = apply_cutoff(&u, -1.5, 1.5).unwrap();
        assert!((cut.mass - 1.0).abs() < 1e-15);
        assert!(cut.effective_cutoff().is_none());
        assert_eq!(cut.density(0.3), u.density(0.3));
    }

    #[test]
    fn empty_window_is_rejected() {
        let s = DisorderDistribution::semicircle(1.0).unwrap();
        assert!(matches!(apply_cutoff(&s, 2.0, 3.0), Err(MeasureError::EmptySupport)));
        assert!(matches!(apply_cutoff(&s, 1.0, 0.0), Err(MeasureError::InvalidParameter(_))));
        let g = DisorderDistribution::gaussian(1.0).unwrap();
        // representable but zero mass in double precision
        assert!(matches!(apply_cutoff(&g, 60.0, 61.0), Err(MeasureError::EmptySupport)));
        // deep but nonzero tail window is fine thanks to the upper-tail formula
        assert!(apply_cutoff(&g, 20.0, 21.0).is_ok());
    }

    #[test]
    fn quantile_inverts_cdf() {
        for d in families() {
            let d = apply_cutoff(&d, -0.9, 1.7).unwrap();
            for u in [0.01, 0.2, 0.5, 0.77, 0.99] {
                let x = d.quantile(u);
                assert!((d.cdf(x) - u).abs() < 1e-9, "{} u={u}", d.family_name());
            }
        }
    }

    #[test]
    fn characteristic_function_values() {
        let g = DisorderDistribution::gaussian(2.0).unwrap();
        assert_eq!(characteristic_function(&g, 0.0).unwrap(), C64::new(1.0, 0.0));
        let c = DisorderDistribution::cauchy(1.0).unwrap();
        assert!((characteristic_function(&c, 2.0).unwrap().re - (-2.0f64).exp()).abs() < 1e-15);
        let s = DisorderDistribution::semicircle(1.0).unwrap();
        assert!((characteristic_function(&s, 1e-9).unwrap().re - 1.0).abs() < 1e-15);
        assert!((characteristic_function(&s, 1e-3).unwrap().re - 1.0).abs() < 1e-6);
        let t = DisorderDistribution::tabulated(vec![(0.0, 1.0), (1.0, 1.0)]).unwrap();
        assert!(matches!(characteristic_function(&t, 1.0), Err(MeasureError::UnsupportedFamily(_))));
        let cut = apply_cutoff(&g, -1.0, 1.0).unwrap();
        assert!(matches!(characteristic_function(&cut, 1.0), Err(MeasureError::RequiresUncut)));
    }

    #[test]
    fn bessel_ratio_is_continuous_at_series_switch() {
        let a = bessel_ratio(0.99999e-4);
        let b = bessel_ratio(1.00001e-4);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn closed_form_moments_match_quadrature() {
        for d in [
            DisorderDistribution::gaussian(1.3).unwrap(),
            DisorderDistribution::semicircle(2.0).unwrap(),
            DisorderDistribution::uniform(0.5).unwrap(),
        ] {
            let (a, b) = d.support();
            let (a, b) = (a.max(-20.0), b.min(20.0));
            let n = 400_000;
            let h = (b - a) / n as f64;
            for m in [0u32, 2, 4, 6] {
                let brute: f64 = (0..n)
                    .map(|i| {
                        let x = a + (i as f64 + 0.5) * h;
                        x.powi(m as i32) * d.density(x)
                    })
                    .sum::<f64>()
                    * h;
                let exact = d.moment(m).unwrap();
                assert!((brute - exact).abs() < 1e-6 * exact.max(1.0), "{} m={m}", d.family_name());
            }
        }
    }

    #[test]
    fn invalid_tables_rejected() {
        assert!(DisorderDistribution::tabulated(vec![(0.0, 1.0)]).is_err());
        assert!(DisorderDistribution::tabulated(vec![(0.0, 1.0), (0.0, 1.0)]).is_err());
        assert!(DisorderDistribution::tabulated(vec![(0.0, -1.0), (1.0, 1.0)]).is_err());
        assert!(DisorderDistribution::gaussian(0.0).is_err());
    }
}
