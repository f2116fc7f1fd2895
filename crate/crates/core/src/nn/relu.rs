use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `max(0, x)` elementwise.
pub fn relu_forward(input: &Tensor) -> Result<Tensor> {
    input.map(|v| v.max(0.0))
}

/// Passes the gradient where the cached input is strictly positive; the
/// derivative at exactly zero is taken as 0.
pub fn relu_backward(grad: &Tensor, cached_input: &Tensor) -> Result<Tensor> {
    if grad.shape() != cached_input.shape() {
        return Err(Error::Shape(format!("{} vs {}", grad.shape(), cached_input.shape())));
    }
    grad.zip_map(cached_input, |g, x| if x > 0.0 { g } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn vec3(v: [f64; 3]) -> Tensor {
        Tensor::from_vec(Shape::new(1, 1, 3, 1).unwrap(), v.to_vec()).unwrap()
    }

    #[test]
    fn forward_clamps_negatives() {
        assert_eq!(relu_forward(&vec3([-1.0, 0.0, 2.0])).unwrap().data(), &[0.0, 0.0, 2.0]);
        let pos = vec3([0.5, 1.0, 7.0]);
        assert_eq!(relu_forward(&pos).unwrap(), pos);
    }

    #[test]
    fn backward_masks() {
        let x = vec3([-3.0, 0.0, 5.0]);
        let g = vec3([1.5, 2.0, 4.0]);
        assert_eq!(relu_backward(&g, &x).unwrap().data(), &[0.0, 0.0, 4.0]);
    }
}
