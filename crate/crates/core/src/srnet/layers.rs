use super::tensor::Tensor4;
use crate::error::{Error, Result};

pub fn relu_forward(x: &Tensor4) -> Tensor4 {
    Tensor4 {
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
        ..*x
    }
}

/// Gradient through ReLU; the subgradient at 0 is 0.
pub fn relu_backward(x: &Tensor4, grad_out: &Tensor4) -> Tensor4 {
    assert_eq!(x.shape(), grad_out.shape());
    Tensor4 {
        data: x
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
            .collect(),
        ..*x
    }
}

fn check(pred: &Tensor4, target: &Tensor4) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::InvalidInput(format!(
            "L1 loss shape mismatch {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    Ok(())
}

/// Mean absolute error over every element.
pub fn l1_loss_forward(pred: &Tensor4, target: &Tensor4) -> Result<f64> {
    check(pred, target)?;
    let total: f64 = pred.data.iter().zip(&target.data).map(|(p, t)| (p - t).abs()).sum();
    Ok(total / pred.data.len() as f64)
}

/// `sign(pred − target) / count`, with sign(0) = 0.
pub fn l1_loss_backward(pred: &Tensor4, target: &Tensor4) -> Result<Tensor4> {
    check(pred, target)?;
    let scale = 1.0 / pred.data.len() as f64;
    Ok(Tensor4 {
        data: pred
            .data
            .iter()
            .zip(&target.data)
            .map(|(p, t)| {
                let d = p - t;
                if d > 0.0 {
                    scale
                } else if d < 0.0 {
                    -scale
                } else {
                    0.0
                }
            })
            .collect(),
        ..*pred
    })
}
