//! Penalty families `p_λ(t)`, `t = |β_j| ≥ 0`, with derivatives, local
//! quadratic approximation weights and exact scalar thresholding.
//!
//! SCAD has no closed-form value in its usual definition (it is given by
//! its derivative); integrating that derivative from zero yields a quadratic
//! spline with knots at `λ` and `aλ` and a plateau of `(a+1)λ²/2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SCAD_A: f64 = 3.7;

/// Coefficients smaller than this in magnitude are treated as exact zeros
/// when forming quadratic approximation weights.
pub const DEFAULT_ZERO_CLAMP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum PenaltyFamily {
    /// `λ t`
    L1,
    /// `λ t²`
    L2,
    /// Bridge penalty `λ t^q`, `0 < q < 2`.
    Lq { q: f64 },
    /// `λ² − (t − λ)² 1(t < λ)`
    Hard,
    /// Smoothly clipped absolute deviation with shape `a > 2`.
    Scad { a: f64 },
}

impl PenaltyFamily {
    pub fn scad() -> Self {
        Self::Scad { a: DEFAULT_SCAD_A }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::L1 => "l1",
            Self::L2 => "l2",
            Self::Lq { .. } => "lq",
            Self::Hard => "hard",
            Self::Scad { .. } => "scad",
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Self::Lq { q } if !(q > 0.0 && q < 2.0) => {
                Err(Error::Domain(format!("Lq exponent {q} outside (0, 2)")))
            }
            Self::Scad { a } if !(a > 2.0 && a.is_finite()) => {
                Err(Error::Domain(format!("SCAD shape a = {a} must exceed 2")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    #[serde(flatten)]
    pub family: PenaltyFamily,
    pub lambda: f64,
}

impl PenaltySpec {
    pub fn new(family: PenaltyFamily, lambda: f64) -> Result<Self> {
        family.validate()?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!("lambda = {lambda} must be finite and ≥ 0")));
        }
        Ok(Self { family, lambda })
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.family, lambda)
    }

    /// `p_λ(t)`.
    pub fn value(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("penalty argument {t} must be ≥ 0")));
        }
        Ok(self.eval(t))
    }

    /// `p_λ(t)` without the domain check; `t` must be nonnegative.
    pub(crate) fn eval(&self, t: f64) -> f64 {
        let lam = self.lambda;
        match self.family {
            PenaltyFamily::L1 => lam * t,
            PenaltyFamily::L2 => lam * t * t,
            PenaltyFamily::Lq { q } => {
                if t == 0.0 {
                    0.0
                } else {
                    lam * t.powf(q)
                }
            }
            PenaltyFamily::Hard => {
                if t < lam {
                    lam * lam - (t - lam) * (t - lam)
                } else {
                    lam * lam
                }
            }
            PenaltyFamily::Scad { a } => {
                if t <= lam {
                    lam * t
                } else if t <= a * lam {
                    (2.0 * a * lam * t - t * t - lam * lam) / (2.0 * (a - 1.0))
                } else {
                    0.5 * (a + 1.0) * lam * lam
                }
            }
        }
    }

    /// `p'_λ(t)` for `t > 0`; the value at `0+` is the right limit.
    pub fn derivative(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("penalty derivative needs t > 0, got {t}")));
        }
        Ok(self.eval_derivative(t))
    }

    fn eval_derivative(&self, t: f64) -> f64 {
        let lam = self.lambda;
        match self.family {
            PenaltyFamily::L1 => lam,
            PenaltyFamily::L2 => 2.0 * lam * t,
            PenaltyFamily::Lq { q } => q * lam * t.powf(q - 1.0),
            PenaltyFamily::Hard => 2.0 * (lam - t).max(0.0),
            PenaltyFamily::Scad { a } => {
                if t <= lam {
                    lam
                } else {
                    (a * lam - t).max(0.0) / (a - 1.0)
                }
            }
        }
    }

    /// `p'_λ(|β|)/|β|`, the diagonal entry of the local quadratic
    /// approximation. Fails with [`Error::BelowThreshold`] when `|β|` is
    /// below [`DEFAULT_ZERO_CLAMP`].
    pub fn lqa_weight(&self, beta: f64) -> Result<f64> {
        self.lqa_weight_with(beta, DEFAULT_ZERO_CLAMP)
    }

    pub fn lqa_weight_with(&self, beta: f64, zero_clamp: f64) -> Result<f64> {
        if !beta.is_finite() {
            return Err(Error::NonFinite("coefficient".into()));
        }
        let t = beta.abs();
        if t < zero_clamp {
            return Err(Error::BelowThreshold(t));
        }
        Ok(self.eval_derivative(t) / t)
    }

    /// Exact global minimizer of `½ h (z − γ)² + p_λ(|γ|)` over `γ`.
    ///
    /// Continuous in `z` for L1, L2, Lq (`q ≥ 1`) and SCAD with
    /// `h > 1/(a−1)`. Hard thresholding jumps from `0` to `z` where the two
    /// candidate objectives cross, which at `h = 1` is `|z| = √2 λ`.
    pub fn threshold(&self, z: f64, h: f64) -> Result<f64> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Domain(format!("curvature h = {h} must be positive")));
        }
        if !z.is_finite() {
            return Err(Error::NonFinite("threshold argument".into()));
        }
        Ok(self.threshold_unchecked(z, h))
    }

    pub(crate) fn threshold_unchecked(&self, z: f64, h: f64) -> f64 {
        let lam = self.lambda;
        if lam == 0.0 || z == 0.0 {
            return z;
        }
        let u = z.abs();
        let mag = match self.family {
            PenaltyFamily::L1 => (u - lam / h).max(0.0),
            PenaltyFamily::L2 => h * u / (h + 2.0 * lam),
            PenaltyFamily::Lq { q } => self.lq_magnitude(u, h, q),
            PenaltyFamily::Hard => self.best_of(u, h, &self.hard_candidates(u, h)),
            PenaltyFamily::Scad { a } => self.best_of(u, h, &self.scad_candidates(u, h, a)),
        };
        mag.copysign(z)
    }

    fn objective(&self, u: f64, h: f64, g: f64) -> f64 {
        0.5 * h * (u - g) * (u - g) + self.eval(g)
    }

    /// Smallest-magnitude candidate attaining the minimum objective.
    fn best_of(&self, u: f64, h: f64, candidates: &[f64]) -> f64 {
        let mut best = 0.0;
        let mut best_val = self.objective(u, h, 0.0);
        for &g in candidates {
            let val = self.objective(u, h, g);
            if val < best_val || (val == best_val && g < best) {
                best = g;
                best_val = val;
            }
        }
        best
    }

    fn hard_candidates(&self, u: f64, h: f64) -> Vec<f64> {
        let lam = self.lambda;
        let mut c = vec![u.max(lam)];
        // f is convex on [0, λ) only when h > 2
        if h > 2.0 {
            let g = (h * u - 2.0 * lam) / (h - 2.0);
            if g > 0.0 && g < lam {
                c.push(g);
            }
        }
        c
    }

    fn scad_candidates(&self, u: f64, h: f64, a: f64) -> Vec<f64> {
        let lam = self.lambda;
        let mut c = vec![(u - lam / h).clamp(0.0, lam)];
        let curv = h * (a - 1.0) - 1.0;
        if curv > 0.0 {
            let g = (h * (a - 1.0) * u - a * lam) / curv;
            c.push(g.clamp(lam, a * lam));
        } else {
            c.push(lam);
            c.push(a * lam);
        }
        c.push(u.max(a * lam));
        c
    }

    fn lq_magnitude(&self, u: f64, h: f64, q: f64) -> f64 {
        let lam = self.lambda;
        if q == 1.0 {
            return (u - lam / h).max(0.0);
        }
        // stationarity: φ(γ) = h(γ − u) + qλγ^{q−1} = 0 on (0, u]
        let phi = |g: f64| h * (g - u) + q * lam * g.powf(q - 1.0);
        if q > 1.0 {
            // φ is increasing with φ(0+) < 0 < φ(u): unique root
            return bisect_root(phi, 0.0, u);
        }
        // q < 1: φ is convex with its minimum at g*
        let g_star = (q * (1.0 - q) * lam / h).powf(1.0 / (2.0 - q));
        if g_star >= u || phi(g_star) >= 0.0 {
            return 0.0;
        }
        let root = bisect_root(phi, g_star, u);
        if self.objective(u, h, root) < self.objective(u, h, 0.0) {
            root
        } else {
            0.0
        }
    }
}

/// Root of an increasing function with `f(lo) < 0 ≤ f(hi)`.
fn bisect_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scad(lambda: f64) -> PenaltySpec {
        PenaltySpec::new(PenaltyFamily::scad(), lambda).unwrap()
    }

    fn all_families() -> Vec<PenaltyFamily> {
        vec![
            PenaltyFamily::L1,
            PenaltyFamily::L2,
            PenaltyFamily::Lq { q: 0.5 },
            PenaltyFamily::Lq { q: 1.5 },
            PenaltyFamily::Hard,
            PenaltyFamily::scad(),
        ]
    }

    #[test]
    fn values() {
        assert_eq!(scad(1.3).value(0.0).unwrap(), 0.0);
        assert_relative_eq!(scad(1.0).value(5.0).unwrap(), 2.35, epsilon = 1e-14);
        let hard = PenaltySpec::new(PenaltyFamily::Hard, 1.0).unwrap();
        assert_eq!(hard.value(0.0).unwrap(), 0.0);
        assert_eq!(hard.value(1.0).unwrap(), 1.0);
        assert_eq!(hard.value(7.5).unwrap(), 1.0);
        assert!(hard.value(-1.0).is_err());
    }

    #[test]
    fn scad_value_matches_integrated_derivative() {
        let pen = scad(1.0);
        // trapezoid rule on p' over [0, t]
        for &t in &[0.3, 1.0, 2.0, 3.7, 5.0] {
            let steps = 200_000;
            let dt = t / steps as f64;
            let mut acc = 0.0;
            for k in 0..steps {
                let a = (k as f64 * dt).max(1e-300);
                let b = (k + 1) as f64 * dt;
                acc += 0.5 * dt * (pen.derivative(a).unwrap() + pen.derivative(b).unwrap());
            }
            assert_relative_eq!(pen.value(t).unwrap(), acc, epsilon = 1e-6);
        }
    }

    #[test]
    fn scad_derivative_regions() {
        let pen = scad(1.0);
        assert_eq!(pen.derivative(0.5).unwrap(), 1.0);
        assert_relative_eq!(pen.derivative(2.0).unwrap(), 1.7 / 2.7, epsilon = 1e-15);
        assert_relative_eq!(pen.derivative(2.0).unwrap(), 0.6296, epsilon = 1e-4);
        assert_eq!(pen.derivative(4.0).unwrap(), 0.0);
        assert!(pen.derivative(0.0).is_err());
    }

    #[test]
    fn lqa_weights() {
        let l1 = PenaltySpec::new(PenaltyFamily::L1, 2.0).unwrap();
        assert_eq!(l1.lqa_weight(0.5).unwrap(), 4.0);
        assert_eq!(l1.lqa_weight(-0.5).unwrap(), 4.0);
        assert_eq!(scad(1.0).lqa_weight(5.0).unwrap(), 0.0);
        assert_relative_eq!(scad(1.0).lqa_weight(2.0).unwrap(), 0.3148, epsilon = 1e-4);
        assert!(matches!(l1.lqa_weight(1e-9), Err(Error::BelowThreshold(_))));
    }

    #[test]
    fn thresholds() {
        for fam in all_families() {
            let pen = PenaltySpec::new(fam, 0.0).unwrap();
            assert_eq!(pen.threshold(1.3, 2.0).unwrap(), 1.3);
        }
        let s = scad(1.0);
        assert_relative_eq!(s.threshold(1.5, 1.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(s.threshold(3.0, 1.0).unwrap(), 2.588_235_294_117_647, epsilon = 1e-12);
        assert_eq!(s.threshold(5.0, 1.0).unwrap(), 5.0);
        let hard = PenaltySpec::new(PenaltyFamily::Hard, 1.0).unwrap();
        assert_eq!(hard.threshold(0.5, 1.0).unwrap(), 0.0);
        assert_eq!(hard.threshold(2.0, 1.0).unwrap(), 2.0);
        assert!(s.threshold(1.0, 0.0).is_err());
        assert!(s.threshold(1.0, -1.0).is_err());
    }

    #[test]
    fn scad_good_penalty_properties() {
        let lam = 0.8;
        let pen = scad(lam);
        let a = DEFAULT_SCAD_A;
        let mut prev = pen.threshold(-6.0, 1.0).unwrap();
        let mut z = -6.0;
        while z <= 6.0 {
            let g = pen.threshold(z, 1.0).unwrap();
            if z.abs() > a * lam {
                assert_eq!(g, z);
            }
            if z.abs() <= lam {
                assert_eq!(g, 0.0);
            }
            assert!((g - prev).abs() < 5e-3, "jump at z = {z}");
            prev = g;
            z += 1e-3;
        }
    }

    #[test]
    fn monotone_and_concave_values() {
        for fam in [PenaltyFamily::L1, PenaltyFamily::Lq { q: 0.7 }, PenaltyFamily::scad()] {
            let pen = PenaltySpec::new(fam, 1.1).unwrap();
            let grid: Vec<f64> = (0..=10_000).map(|k| k as f64 * 1e-3).collect();
            let vals: Vec<f64> = grid.iter().map(|&t| pen.value(t).unwrap()).collect();
            assert_eq!(vals[0], 0.0);
            assert!(vals.windows(2).all(|w| w[1] >= w[0]));
            if matches!(fam, PenaltyFamily::Scad { .. }) {
                assert!(vals.windows(3).all(|w| w[2] - 2.0 * w[1] + w[0] <= 1e-12));
            }
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        for fam in all_families() {
            let lam = 0.9;
            let pen = PenaltySpec::new(fam, lam).unwrap();
            let a = DEFAULT_SCAD_A;
            let mut t = 0.05;
            while t < 6.0 {
                let near_kink = [lam, a * lam].iter().any(|k| (t - k).abs() < 1e-3);
                if !near_kink {
                    let e = 1e-6;
                    let fd = (pen.value(t + e).unwrap() - pen.value(t - e).unwrap()) / (2.0 * e);
                    let d = pen.derivative(t).unwrap();
                    assert!(
                        (fd - d).abs() <= 1e-6 * d.abs().max(1.0),
                        "{fam:?} t={t}: fd={fd} d={d}"
                    );
                }
                t += 0.0137;
            }
        }
    }

    #[test]
    fn nonsparse_families_never_zero() {
        for fam in [PenaltyFamily::L2, PenaltyFamily::Lq { q: 1.4 }] {
            let pen = PenaltySpec::new(fam, 5.0).unwrap();
            assert!(pen.threshold(0.01, 1.0).unwrap() > 0.0);
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(PenaltySpec::new(PenaltyFamily::Scad { a: 2.0 }, 1.0).is_err());
        assert!(PenaltySpec::new(PenaltyFamily::Lq { q: 2.0 }, 1.0).is_err());
        assert!(PenaltySpec::new(PenaltyFamily::Lq { q: 0.0 }, 1.0).is_err());
        assert!(PenaltySpec::new(PenaltyFamily::L1, -1.0).is_err());
    }

    #[test]
    fn serde_shape() {
        let s = serde_json::to_string(&scad(0.5)).unwrap();
        assert_eq!(s, r#"{"family":"scad","a":3.7,"lambda":0.5}"#);
        let back: PenaltySpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, scad(0.5));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn family() -> impl Strategy<Value = PenaltyFamily> {
            prop_oneof![
                Just(PenaltyFamily::L1),
                Just(PenaltyFamily::L2),
                (0.1f64..1.9).prop_map(|q| PenaltyFamily::Lq { q }),
                Just(PenaltyFamily::Hard),
                (2.1f64..6.0).prop_map(|a| PenaltyFamily::Scad { a }),
            ]
        }

        proptest! {
            #[test]
            fn odd_symmetry(fam in family(), z in -10.0f64..10.0, h in 0.1f64..10.0, lam in 0.0f64..3.0) {
                let pen = PenaltySpec::new(fam, lam).unwrap();
                prop_assert_eq!(pen.threshold(-z, h).unwrap(), -pen.threshold(z, h).unwrap());
            }

            #[test]
            fn threshold_never_worse_than_zero_or_z(fam in family(), z in -10.0f64..10.0, h in 0.1f64..10.0, lam in 0.0f64..3.0) {
                let pen = PenaltySpec::new(fam, lam).unwrap();
                let g = pen.threshold(z, h).unwrap();
                let f = |x: f64| 0.5 * h * (z - x).powi(2) + pen.value(x.abs()).unwrap();
                prop_assert!(f(g) <= f(0.0) + 1e-12);
                prop_assert!(f(g) <= f(z) + 1e-12);
            }
        }
    }
}
