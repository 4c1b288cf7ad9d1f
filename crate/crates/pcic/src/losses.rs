//! Built-in loss and score evaluators: quadratic/location, the
//! classification triple (Brier, misclassification, spherical), and the
//! regression losses. All are pure and total on their stated domains.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quadratic form (x - theta)' A (x - theta) for a symmetric PD matrix A.
pub fn quadratic_loss(x: &[f64], theta: &[f64], a: &DMatrix<f64>) -> Result<f64> {
    let d = x.len();
    if theta.len() != d || a.nrows() != d || a.ncols() != d {
        return Err(Error::Dimension(format!(
            "quadratic loss: x has {d} components, theta {}, A is {}x{}",
            theta.len(),
            a.nrows(),
            a.ncols()
        )));
    }
    let mut acc = 0.0;
    for j in 0..d {
        let rj = x[j] - theta[j];
        for l in 0..d {
            acc += rj * a[(j, l)] * (x[l] - theta[l]);
        }
    }
    Ok(acc)
}

/// Location-model score -(beta/2) ||x - theta||^2.
pub fn location_score(x: &[f64], theta: &[f64], beta: f64) -> f64 {
    let sq: f64 = x
        .iter()
        .zip(theta)
        .map(|(xi, ti)| (xi - ti) * (xi - ti))
        .sum();
    -(beta / 2.0) * sq
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassificationLoss {
    Brier,
    Misclass,
    Spherical,
}

/// Classification losses on a binary label `x` and predicted probability `p`.
///
/// The misclassification loss returns 0 at the tie p = 1/2 exactly; MCMC
/// draws can produce p arbitrarily close to 1/2, so the tie case is pinned.
pub fn classification_loss(kind: ClassificationLoss, x: f64, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!(
            "classification loss: probability {p} outside [0, 1]"
        )));
    }
    Ok(match kind {
        ClassificationLoss::Brier => (x - p) * (x - p),
        ClassificationLoss::Misclass => {
            if (x == 1.0 && p > 0.5) || (x == 0.0 && p < 0.5) {
                -1.0
            } else {
                0.0
            }
        }
        ClassificationLoss::Spherical => {
            // denominator sqrt(p^2 + (1-p)^2) >= 1/sqrt(2) on [0, 1],
            // so no clamping of p is needed before dividing
            let denom = (p * p + (1.0 - p) * (1.0 - p)).sqrt();
            -(x * p + (1.0 - x) * (1.0 - p)) / denom
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionLoss {
    L2,
    ScaledL1,
}

/// Regression losses |y - b0 - x b1|^2 and |y - b0 - x b1| / sigma.
pub fn regression_loss(
    kind: RegressionLoss,
    y: f64,
    x: f64,
    beta0: f64,
    beta1: f64,
    sigma: f64,
) -> Result<f64> {
    let resid = (y - beta0 - x * beta1).abs();
    Ok(match kind {
        RegressionLoss::L2 => resid * resid,
        RegressionLoss::ScaledL1 => {
            if sigma <= 0.0 {
                return Err(Error::Domain(format!(
                    "scaled l1 loss: sigma must be positive, got {sigma}"
                )));
            }
            resid / sigma
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    #[test]
    fn quadratic_vanishes_at_theta() {
        let a = dmatrix![1.0, 0.2; 0.2, 2.0];
        assert_eq!(quadratic_loss(&[0.3, -1.0], &[0.3, -1.0], &a).unwrap(), 0.0);
    }

    #[test]
    fn quadratic_hand_value_and_a_linearity() {
        let a1 = dmatrix![1.0];
        assert_eq!(quadratic_loss(&[3.0], &[1.0], &a1).unwrap(), 4.0);
        let a2 = dmatrix![2.0, 0.0; 0.0, 2.0];
        let i2 = dmatrix![1.0, 0.0; 0.0, 1.0];
        let x = [0.7, -0.4];
        let t = [0.1, 0.5];
        let v1 = quadratic_loss(&x, &t, &i2).unwrap();
        let v2 = quadratic_loss(&x, &t, &a2).unwrap();
        assert!((v2 - 2.0 * v1).abs() < 1e-15);
    }

    #[test]
    fn quadratic_rejects_dimension_mismatch() {
        let a = dmatrix![1.0];
        assert!(quadratic_loss(&[1.0, 2.0], &[0.0, 0.0], &a).is_err());
        assert!(quadratic_loss(&[1.0], &[0.0, 0.0], &a).is_err());
    }

    #[test]
    fn location_score_hand_values() {
        assert_eq!(location_score(&[1.0], &[1.0], 2.0), 0.0);
        assert_eq!(location_score(&[1.0], &[0.0], 2.0), -1.0);
    }

    #[test]
    fn location_score_matches_identity_quadratic() {
        let i3 = DMatrix::identity(3, 3);
        let x = [0.4, -0.2, 1.1];
        let t = [1.0, 0.0, -0.3];
        let beta = 0.7;
        let q = quadratic_loss(&x, &t, &i3).unwrap();
        assert!((location_score(&x, &t, beta) + beta / 2.0 * q).abs() < 1e-15);
    }

    #[test]
    fn brier_and_spherical_hand_values() {
        assert_eq!(
            classification_loss(ClassificationLoss::Brier, 1.0, 1.0).unwrap(),
            0.0
        );
        assert_eq!(
            classification_loss(ClassificationLoss::Spherical, 1.0, 1.0).unwrap(),
            -1.0
        );
        let half = classification_loss(ClassificationLoss::Spherical, 1.0, 0.5).unwrap();
        assert!((half + 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn misclass_tie_goes_to_zero() {
        let m = |x, p| classification_loss(ClassificationLoss::Misclass, x, p).unwrap();
        assert_eq!(m(1.0, 0.7), -1.0);
        assert_eq!(m(1.0, 0.3), 0.0);
        assert_eq!(m(1.0, 0.5), 0.0);
        assert_eq!(m(0.0, 0.5), 0.0);
        assert_eq!(m(0.0, 0.3), -1.0);
    }

    #[test]
    fn probability_domain_is_enforced() {
        assert!(classification_loss(ClassificationLoss::Brier, 1.0, 1.2).is_err());
        assert!(classification_loss(ClassificationLoss::Brier, 1.0, -0.1).is_err());
    }

    #[test]
    fn regression_hand_values() {
        let on_line = regression_loss(RegressionLoss::L2, 1.0, 1.0, 0.0, 1.0, 2.0).unwrap();
        assert_eq!(on_line, 0.0);
        assert_eq!(
            regression_loss(RegressionLoss::L2, 2.0, 1.0, 0.0, 1.0, 2.0).unwrap(),
            1.0
        );
        assert_eq!(
            regression_loss(RegressionLoss::ScaledL1, 2.0, 1.0, 0.0, 1.0, 2.0).unwrap(),
            0.5
        );
        assert!(regression_loss(RegressionLoss::ScaledL1, 2.0, 1.0, 0.0, 1.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn classification_ranges(x in 0u8..2, p in 0.0f64..=1.0) {
            let x = f64::from(x);
            let b = classification_loss(ClassificationLoss::Brier, x, p).unwrap();
            prop_assert!((0.0..=1.0).contains(&b));
            let m = classification_loss(ClassificationLoss::Misclass, x, p).unwrap();
            prop_assert!(m == 0.0 || m == -1.0);
            let s = classification_loss(ClassificationLoss::Spherical, x, p).unwrap();
            prop_assert!((-1.0..=0.0).contains(&s));
        }

        #[test]
        fn quadratic_is_symmetric_in_x_and_theta(
            x0 in -5.0f64..5.0, x1 in -5.0f64..5.0,
            t0 in -5.0f64..5.0, t1 in -5.0f64..5.0,
        ) {
            let a = dmatrix![2.0, 0.3; 0.3, 1.0];
            let fwd = quadratic_loss(&[x0, x1], &[t0, t1], &a).unwrap();
            let rev = quadratic_loss(&[t0, t1], &[x0, x1], &a).unwrap();
            prop_assert!((fwd - rev).abs() <= 1e-12 * fwd.abs().max(1.0));
        }
    }
}
