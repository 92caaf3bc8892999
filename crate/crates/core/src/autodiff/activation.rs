use crate::scalar::Scalar;

/// Elementwise nonlinearities offered to child-model layers.
///
/// Declaration order is the controller's logit order and must not change.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActivationKind {
    Sigmoid,
    Tanh,
    Relu,
    Linear,
    Softplus,
    LeakyRelu,
    Relu6,
    Elu,
}

pub const LEAKY_RELU_SLOPE: f64 = 0.2;
pub const ELU_ALPHA: f64 = 1.0;

impl ActivationKind {
    pub const ALL: [ActivationKind; 8] = [
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
        ActivationKind::Relu,
        ActivationKind::Linear,
        ActivationKind::Softplus,
        ActivationKind::LeakyRelu,
        ActivationKind::Relu6,
        ActivationKind::Elu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Relu => "relu",
            ActivationKind::Linear => "linear",
            ActivationKind::Softplus => "softplus",
            ActivationKind::LeakyRelu => "leaky_relu",
            ActivationKind::Relu6 => "relu6",
            ActivationKind::Elu => "elu",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn apply<T: Scalar>(self, x: T) -> T {
        let zero = T::zero();
        match self {
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Relu => x.max(zero),
            ActivationKind::Linear => x,
            ActivationKind::Softplus => softplus(x),
            ActivationKind::LeakyRelu => {
                if x > zero {
                    x
                } else {
                    x * T::lit(LEAKY_RELU_SLOPE)
                }
            }
            ActivationKind::Relu6 => x.max(zero).min(T::lit(6.0)),
            ActivationKind::Elu => {
                if x > zero {
                    x
                } else {
                    T::lit(ELU_ALPHA) * x.exp_m1()
                }
            }
        }
    }

    /// Derivative at `x` given the forward output `y`. Kinks take the
    /// left-hand slope.
    pub fn derivative<T: Scalar>(self, x: T, y: T) -> T {
        let zero = T::zero();
        let one = T::one();
        match self {
            ActivationKind::Sigmoid => y * (one - y),
            ActivationKind::Tanh => one - y * y,
            ActivationKind::Relu => {
                if x > zero {
                    one
                } else {
                    zero
                }
            }
            ActivationKind::Linear => one,
            ActivationKind::Softplus => sigmoid(x),
            ActivationKind::LeakyRelu => {
                if x > zero {
                    one
                } else {
                    T::lit(LEAKY_RELU_SLOPE)
                }
            }
            ActivationKind::Relu6 => {
                if x > zero && x <= T::lit(6.0) {
                    one
                } else {
                    zero
                }
            }
            ActivationKind::Elu => {
                if x > zero {
                    one
                } else {
                    y + T::lit(ELU_ALPHA)
                }
            }
        }
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow for large `x`.
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu6_clamps() {
        assert_eq!(ActivationKind::Relu6.apply(7.0_f64), 6.0);
        assert_eq!(ActivationKind::Relu6.apply(-1.0_f64), 0.0);
        assert_eq!(ActivationKind::Relu6.apply(3.5_f64), 3.5);
    }

    #[test]
    fn linear_is_identity() {
        for x in [-3.0_f64, -0.1, 0.0, 2.5, 1e6] {
            assert_eq!(ActivationKind::Linear.apply(x), x);
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-4;
        for kind in ActivationKind::ALL {
            for x in [-2.0_f64, -0.5, 0.3, 2.0] {
                let numeric = (kind.apply(x + h) - kind.apply(x - h)) / (2.0 * h);
                let analytic = kind.derivative(x, kind.apply(x));
                let rel = (numeric - analytic).abs() / analytic.abs().max(numeric.abs()).max(1e-12);
                assert!(
                    rel < 1e-4 || (numeric - analytic).abs() < 1e-10,
                    "{:?} at {x}: {analytic} vs {numeric}",
                    kind
                );
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for kind in ActivationKind::ALL {
            assert_eq!(ActivationKind::from_name(kind.name()), Some(kind));
        }
        assert_eq!(ActivationKind::from_name("swish"), None);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(1000.0_f64) - 1000.0).abs() < 1e-9);
        assert!(softplus(-1000.0_f64) >= 0.0);
    }
}
