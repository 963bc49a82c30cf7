use crate::error::{Error, Result};

pub fn mae_loss(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// d(MAE)/d(pred): ±1/n, and 0 where pred equals truth.
pub fn mae_grad(pred: &[f64], truth: &[f64]) -> Result<Vec<f64>> {
    check(pred, truth)?;
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            if p > t {
                1.0 / n
            } else if p < t {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect())
}

fn check(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::InsufficientData("MAE of an empty batch".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(mae_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae_loss(&[1.0, -1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(mae_grad(&[1.0, 0.0, -3.0], &[0.0, 0.0, 0.0]).unwrap(), vec![1.0 / 3.0, 0.0, -1.0 / 3.0]);
        assert!(matches!(mae_loss(&[1.0], &[]), Err(Error::LengthMismatch { .. })));
    }

    proptest! {
        #[test]
        fn gradient_matches_differences(
            pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..10)
        ) {
            let (pred, truth): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assume!(pred.iter().zip(&truth).all(|(p, t)| (p - t).abs() > 1e-3));
            let g = mae_grad(&pred, &truth).unwrap();
            let h = 1e-6;
            for i in 0..pred.len() {
                let mut up = pred.clone();
                up[i] += h;
                let mut dn = pred.clone();
                dn[i] -= h;
                let fd = (mae_loss(&up, &truth).unwrap() - mae_loss(&dn, &truth).unwrap()) / (2.0 * h);
                prop_assert!((fd - g[i]).abs() < 1e-8);
            }
        }
    }
}
