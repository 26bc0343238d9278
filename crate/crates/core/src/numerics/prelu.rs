/// Parametric rectifier: `x` for `x > 0`, `slope * x` otherwise.
#[inline]
pub fn prelu_scalar(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Derivative with respect to `x`; at exactly zero this is the negative-side slope.
#[inline]
pub fn prelu_derivative(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

/// Elementwise PReLU, returning the activations and their derivatives.
pub fn prelu(x: &[f64], slope: f64) -> (Vec<f64>, Vec<f64>) {
    x.iter()
        .map(|&v| (prelu_scalar(v, slope), prelu_derivative(v, slope)))
        .unzip()
}
