//! Stationary covariance kernels and their smooth periodic extensions.

mod bessel;

pub use bessel::{bessel_k, gamma};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel family with its family-specific shape parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Isotropic Matérn kernel in the Euclidean norm with smoothness `nu`.
    Matern { nu: f64 },
    /// `sigma2 * exp(-||t||_p / lambda)`; `p = 1` makes it separable.
    SeparableExponential { p_norm: f64 },
}

/// A validated stationary covariance function `C(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceModel {
    family: Family,
    sigma2: f64,
    lambda: f64,
    // Precomputed 2^(1-nu) / Gamma(nu) and sqrt(2 nu) / lambda for Matérn.
    matern_norm: f64,
    matern_scale: f64,
}

impl CovarianceModel {
    pub fn new(family: Family, sigma2: f64, lambda: f64) -> Result<Self> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("sigma2", sigma2)?;
        positive("lambda", lambda)?;
        let (matern_norm, matern_scale) = match family {
            Family::Matern { nu } => {
                positive("nu", nu)?;
                ((1.0 - nu) * std::f64::consts::LN_2 - gamma(nu).ln(), (2.0 * nu).sqrt() / lambda)
            }
            Family::SeparableExponential { p_norm } => {
                positive("p_norm", p_norm)?;
                (0.0, 0.0)
            }
        };
        Ok(Self {
            family,
            sigma2,
            lambda,
            matern_norm,
            matern_scale,
        })
    }

    pub fn matern(sigma2: f64, lambda: f64, nu: f64) -> Result<Self> {
        Self::new(Family::Matern { nu }, sigma2, lambda)
    }

    pub fn exponential(sigma2: f64, lambda: f64, p_norm: f64) -> Result<Self> {
        Self::new(Family::SeparableExponential { p_norm }, sigma2, lambda)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Matérn smoothness, if this is a Matérn kernel.
    pub fn nu(&self) -> Option<f64> {
        match self.family {
            Family::Matern { nu } => Some(nu),
            Family::SeparableExponential { .. } => None,
        }
    }

    /// Evaluates `C(t)`. Fails only for non-finite displacements.
    pub fn eval(&self, t: &[f64]) -> Result<f64> {
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite displacement {t:?}")));
        }
        Ok(self.eval_unchecked(t))
    }

    /// `C(t)` without the finiteness check; callers guarantee finite input.
    pub(crate) fn eval_unchecked(&self, t: &[f64]) -> f64 {
        match self.family {
            Family::Matern { nu } => {
                let r = t.iter().map(|v| v * v).sum::<f64>().sqrt();
                self.matern_radial(nu, r)
            }
            Family::SeparableExponential { p_norm } => {
                let norm = if p_norm == 1.0 {
                    t.iter().map(|v| v.abs()).sum::<f64>()
                } else {
                    t.iter().map(|v| v.abs().powf(p_norm)).sum::<f64>().powf(1.0 / p_norm)
                };
                self.sigma2 * (-norm / self.lambda).exp()
            }
        }
    }

    fn matern_radial(&self, nu: f64, r: f64) -> f64 {
        if r == 0.0 {
            return self.sigma2;
        }
        let z = self.matern_scale * r;
        let k = bessel_k(nu, z);
        if k == 0.0 {
            return 0.0;
        }
        if !k.is_finite() {
            // z so small that K_nu overflows: C is indistinguishable from C(0).
            return self.sigma2;
        }
        let log_c = self.matern_norm + nu * z.ln() + k.ln();
        (self.sigma2 * log_c.exp()).min(self.sigma2)
    }
}

/// Smooth cutoff `phi`: 1 on `[-1, 1]`, 0 outside `[-kappa, kappa]`,
/// built from `eta(x) = exp(-1/x)` for `x > 0`.
pub fn cutoff_phi(t: f64, kappa: f64) -> f64 {
    debug_assert!(kappa > 1.0);
    let a = t.abs();
    if a <= 1.0 {
        return 1.0;
    }
    if a >= kappa {
        return 0.0;
    }
    let width = kappa - 1.0;
    let up = eta((kappa - a) / width);
    let down = eta((a - 1.0) / width);
    up / (up + down)
}

fn eta(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// Half-period `ell` and cutoff radius `kappa = 2 ell - 1` of a smooth periodisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodisationParams {
    ell: f64,
    kappa: f64,
}

impl PeriodisationParams {
    /// Builds the parameters for padding `j` on a grid of resolution `m`: `ell = 1 + j/m`.
    pub fn from_padding(j: usize, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("grid resolution must be positive".into()));
        }
        Self::new(1.0 + j as f64 / m as f64)
    }

    pub fn new(ell: f64) -> Result<Self> {
        if !(ell.is_finite() && ell > 1.0) {
            return Err(Error::InvalidParameter(format!("half-period must exceed 1, got {ell}")));
        }
        let kappa = 2.0 * ell - 1.0;
        // Shifted copies sit at sup-norm distance >= 2 ell - 1 = kappa from [-1,1]^d,
        // where the sup-norm cutoff vanishes, so C_ext = C there; and for
        // ||x||_inf <= ell only |n_i| <= 1 reach the support since 3 ell > kappa.
        assert!(kappa >= ell && 3.0 * ell > kappa);
        Ok(Self { ell, kappa })
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

/// Evaluates the `2 ell`-periodic extension `sum_n (C phi_kappa)(x + 2 ell n)`.
///
/// The lattice sum is restricted to `n in {-1, 0, 1}^d`, which is exact for
/// `||x||_inf <= ell`; points outside are first wrapped into that cell.
pub fn periodic_eval(model: &CovarianceModel, params: &PeriodisationParams, x: &[f64]) -> f64 {
    let d = x.len();
    let period = 2.0 * params.ell;
    let wrapped: Vec<f64> = x
        .iter()
        .map(|&v| v - period * (v / period).round())
        .collect();
    let mut shifted = vec![0.0; d];
    let mut total = 0.0;
    let combos = 3usize.pow(d as u32);
    for code in 0..combos {
        let mut c = code;
        for (i, s) in shifted.iter_mut().enumerate() {
            let n = (c % 3) as f64 - 1.0;
            c /= 3;
            *s = wrapped[i] + period * n;
        }
        let sup = shifted.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let weight = cutoff_phi(sup, params.kappa);
        if weight > 0.0 {
            total += model.eval_unchecked(&shifted) * weight;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn variance_at_origin() {
        let m = CovarianceModel::matern(1.0, 0.1, 1.5).unwrap();
        assert_eq!(m.eval(&[0.0, 0.0]).unwrap(), 1.0);
        let e = CovarianceModel::exponential(2.5, 0.1, 1.0).unwrap();
        assert_eq!(e.eval(&[0.0]).unwrap(), 2.5);
    }

    #[test]
    fn exponential_direct_substitution() {
        let e = CovarianceModel::exponential(1.0, 0.1, 1.0).unwrap();
        let v = e.eval(&[0.1, 0.0]).unwrap();
        assert!((v - (-1.0_f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn matern_half_is_exponential() {
        let m = CovarianceModel::matern(1.0, 0.2, 0.5).unwrap();
        let v = m.eval(&[0.2, 0.0]).unwrap();
        assert!((v - (-1.0_f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn matern_three_halves_closed_form() {
        let m = CovarianceModel::matern(2.0, 0.1, 1.5).unwrap();
        let v = m.eval(&[0.1, 0.0]).unwrap();
        let s3 = 3.0_f64.sqrt();
        let want = 2.0 * (1.0 + s3) * (-s3).exp();
        assert!((v - want).abs() < 1e-14, "{v} vs {want}");
    }

    #[test]
    fn matern_five_halves_closed_form() {
        let m = CovarianceModel::matern(1.0, 0.3, 2.5).unwrap();
        for &r in &[0.01, 0.1, 0.45, 1.2] {
            let a = 5.0_f64.sqrt() * r / 0.3;
            let want = (1.0 + a + a * a / 3.0) * (-a).exp();
            assert!((m.eval(&[r]).unwrap() - want).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(CovarianceModel::matern(0.0, 0.1, 1.0).is_err());
        assert!(CovarianceModel::matern(1.0, -0.1, 1.0).is_err());
        assert!(CovarianceModel::matern(1.0, 0.1, 0.0).is_err());
        assert!(CovarianceModel::exponential(1.0, 0.1, f64::NAN).is_err());
    }

    #[test]
    fn non_finite_displacement_is_domain_error() {
        let e = CovarianceModel::exponential(1.0, 0.1, 1.0).unwrap();
        assert!(matches!(e.eval(&[f64::INFINITY]), Err(Error::Domain(_))));
    }

    #[test]
    fn cutoff_values() {
        assert_eq!(cutoff_phi(0.5, 3.0), 1.0);
        assert_eq!(cutoff_phi(1.0, 3.0), 1.0);
        assert_eq!(cutoff_phi(3.0, 3.0), 0.0);
        assert_eq!(cutoff_phi(-4.0, 3.0), 0.0);
        assert!((cutoff_phi(2.0, 3.0) - 0.5).abs() < 1e-15);
        assert!((cutoff_phi(-2.0, 3.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cutoff_is_monotone_in_magnitude() {
        let mut prev = 1.0;
        for i in 0..=400 {
            let t = i as f64 * 0.01;
            let v = cutoff_phi(t, 3.5);
            assert!((0.0..=1.0).contains(&v));
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn periodic_extension_examples() {
        let e = CovarianceModel::exponential(1.0, 0.1, 1.0).unwrap();
        let p = PeriodisationParams::new(2.0).unwrap();
        assert_eq!(p.kappa(), 3.0);
        assert_eq!(periodic_eval(&e, &p, &[0.0]), 1.0);
        assert!((periodic_eval(&e, &p, &[0.5]) - (-5.0_f64).exp()).abs() < 1e-15);
        let a = periodic_eval(&e, &p, &[2.0]);
        let b = periodic_eval(&e, &p, &[-2.0]);
        assert_eq!(a, b);
    }

    #[test]
    fn periodic_extension_matches_full_lattice_sum() {
        // Oracle: explicit lattice sum over |n| <= 4 in each direction.
        let m = CovarianceModel::matern(1.0, 0.4, 1.5).unwrap();
        let p = PeriodisationParams::from_padding(3, 4).unwrap();
        let period = 2.0 * p.ell();
        for &(x, y) in &[(0.3, -1.6), (1.75, 1.75), (-0.2, 0.9), (1.1, 0.0)] {
            let mut want = 0.0;
            for n1 in -4..=4 {
                for n2 in -4..=4 {
                    let s = [x + period * n1 as f64, y + period * n2 as f64];
                    let sup = s[0].abs().max(s[1].abs());
                    want += m.eval(&s).unwrap() * cutoff_phi(sup, p.kappa());
                }
            }
            let got = periodic_eval(&m, &p, &[x, y]);
            assert!((got - want).abs() < 1e-14, "({x},{y}): {got} vs {want}");
        }
    }

    #[test]
    fn periodisation_rejects_unit_half_period() {
        assert!(PeriodisationParams::from_padding(0, 8).is_err());
        assert!(PeriodisationParams::from_padding(1, 0).is_err());
    }

    proptest! {
        #[test]
        fn kernels_are_even(x in -3.0f64..3.0, y in -3.0f64..3.0, nu in 0.2f64..4.0) {
            let m = CovarianceModel::matern(1.3, 0.25, nu).unwrap();
            let e = CovarianceModel::exponential(0.7, 0.25, 1.0).unwrap();
            prop_assert!((m.eval(&[x, y]).unwrap() - m.eval(&[-x, -y]).unwrap()).abs() < 1e-14);
            prop_assert!((e.eval(&[x, y]).unwrap() - e.eval(&[-x, -y]).unwrap()).abs() < 1e-14);
        }

        #[test]
        fn extension_is_periodic(x in -2.0f64..2.0, y in -2.0f64..2.0, j in 1usize..16) {
            let m = CovarianceModel::matern(1.0, 0.3, 1.5).unwrap();
            let p = PeriodisationParams::from_padding(j, 8).unwrap();
            let period = 2.0 * p.ell();
            let base = periodic_eval(&m, &p, &[x, y]);
            prop_assert!((base - periodic_eval(&m, &p, &[x + period, y])).abs() < 1e-12);
            prop_assert!((base - periodic_eval(&m, &p, &[x, y + period])).abs() < 1e-12);
        }

        #[test]
        fn extension_agrees_on_unit_box(x in -1.0f64..=1.0, y in -1.0f64..=1.0, j in 1usize..16) {
            let m = CovarianceModel::matern(1.0, 0.3, 2.5).unwrap();
            let p = PeriodisationParams::from_padding(j, 8).unwrap();
            prop_assert!((periodic_eval(&m, &p, &[x, y]) - m.eval(&[x, y]).unwrap()).abs() < 1e-12);
        }
    }
}
