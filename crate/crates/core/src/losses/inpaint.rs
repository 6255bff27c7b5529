use ndarray::{Array3, ArrayView2, ArrayView3, Zip};
use serde::{Deserialize, Serialize};

use super::LossError;

/// Which elements the squared error is averaged over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    /// Every C·H·W element.
    Full,
    /// Only elements under the mask, in every band.
    #[default]
    Masked,
}

fn check(pred: &ArrayView3<f64>, target: &ArrayView3<f64>, mask: &ArrayView2<bool>) -> Result<(), LossError> {
    let (_, h, w) = pred.dim();
    if pred.dim() != target.dim() || mask.dim() != (h, w) {
        return Err(LossError::ShapeMismatch(format!(
            "pred {:?}, target {:?}, mask {:?}",
            pred.dim(),
            target.dim(),
            mask.dim()
        )));
    }
    Ok(())
}

/// Mean squared reconstruction error over `region`.
pub fn inpaint_loss(
    pred: ArrayView3<f64>,
    target: ArrayView3<f64>,
    mask: ArrayView2<bool>,
    region: Region,
) -> Result<f64, LossError> {
    inpaint_loss_with_grad(pred, target, mask, region).map(|(l, _)| l)
}

/// Loss and its gradient with respect to `pred`.
pub fn inpaint_loss_with_grad(
    pred: ArrayView3<f64>,
    target: ArrayView3<f64>,
    mask: ArrayView2<bool>,
    region: Region,
) -> Result<(f64, Array3<f64>), LossError> {
    check(&pred, &target, &mask)?;
    let bands = pred.dim().0;
    let count = match region {
        Region::Full => pred.len(),
        Region::Masked => bands * mask.iter().filter(|&&m| m).count(),
    };
    if count == 0 {
        return Err(LossError::EmptyMask);
    }
    let mut grad = Array3::<f64>::zeros(pred.raw_dim());
    let mut sum = 0.0;
    for b in 0..bands {
        Zip::from(grad.index_axis_mut(ndarray::Axis(0), b))
            .and(pred.index_axis(ndarray::Axis(0), b))
            .and(target.index_axis(ndarray::Axis(0), b))
            .and(&mask)
            .for_each(|g, &p, &t, &m| {
                if region == Region::Full || m {
                    let d = p - t;
                    sum += d * d;
                    *g = 2.0 * d / count as f64;
                }
            });
    }
    Ok((sum / count as f64, grad))
}
