use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Plain SGD: `w ← w − lr·g` for every trainable tensor, then clears the
/// gradients. A trainable tensor without a gradient is a usage error and
/// leaves every parameter untouched.
pub fn sgd_step<'a, T: Scalar>(params: impl IntoIterator<Item = &'a mut Tensor<T>>, lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    let params: Vec<&mut Tensor<T>> = params.into_iter().filter(|p| p.requires_grad()).collect();
    if params.iter().any(|p| p.grad().is_none()) {
        return Err(Error::Usage("sgd_step called on a parameter with no gradient".into()));
    }
    let lr = T::lit(lr);
    for p in params {
        let g = p.grad().expect("checked above").to_vec();
        p.data_mut().iter_mut().zip(&g).for_each(|(w, &g)| *w = *w - lr * g);
        p.zero_grad();
    }
    Ok(())
}
