//! Stochastic baseline optimizers.
//!
//! Every method follows the same contract: given the current parameters and
//! a gradient oracle for the current mini-batch, update the parameters in
//! place. Weight decay is part of the objective, not of the optimizer.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("learning rate must be positive and finite, got {0}")]
    LearningRate(f64),
    #[error("momentum must lie in [0, 1), got {0}")]
    Momentum(f64),
    #[error("dampening must lie in [0, 1), got {0}")]
    Dampening(f64),
    #[error("adagrad epsilon must be positive, got {0}")]
    Epsilon(f64),
    #[error("length mismatch: state has {state}, params {params}, gradient {grad}")]
    Length { state: usize, params: usize, grad: usize },
    #[error("unknown baseline method `{0}`")]
    UnknownMethod(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    SgdMomentum,
    Nag,
    AdaGrad,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::SgdMomentum, Method::Nag, Method::AdaGrad];

    pub fn name(self) -> &'static str {
        match self {
            Method::SgdMomentum => "sgd",
            Method::Nag => "nag",
            Method::AdaGrad => "adagrad",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = BaselineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sgd" | "sgd_momentum" => Ok(Method::SgdMomentum),
            "nag" => Ok(Method::Nag),
            "adagrad" => Ok(Method::AdaGrad),
            other => Err(BaselineError::UnknownMethod(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    pub method: Method,
    pub lr: f64,
    /// Ignored by AdaGrad.
    pub momentum: f64,
    /// Scales the gradient entering the velocity by `1 - dampening`.
    /// Zero gives the heavy-ball rule; `dampening == momentum` keeps an
    /// exponential average of gradients, the Torch7 `optim.sgd` default.
    pub dampening: f64,
    pub adagrad_epsilon: f64,
}

impl BaselineConfig {
    pub const DEFAULT_MOMENTUM: f64 = 0.9;
    pub const DEFAULT_ADAGRAD_EPSILON: f64 = 1e-10;

    pub fn new(method: Method, lr: f64) -> Self {
        Self {
            method,
            lr,
            momentum: Self::DEFAULT_MOMENTUM,
            dampening: 0.0,
            adagrad_epsilon: Self::DEFAULT_ADAGRAD_EPSILON,
        }
    }

    pub fn with_momentum(mut self, momentum: f64) -> Self {
        self.momentum = momentum;
        self
    }

    pub fn with_dampening(mut self, dampening: f64) -> Self {
        self.dampening = dampening;
        self
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(BaselineError::LearningRate(self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(BaselineError::Momentum(self.momentum));
        }
        if !(0.0..1.0).contains(&self.dampening) {
            return Err(BaselineError::Dampening(self.dampening));
        }
        if !(self.adagrad_epsilon.is_finite() && self.adagrad_epsilon > 0.0) {
            return Err(BaselineError::Epsilon(self.adagrad_epsilon));
        }
        Ok(())
    }
}

/// Per-method optimizer memory.
#[derive(Debug, Clone, PartialEq)]
pub enum BaselineState {
    /// Heavy-ball or Nesterov velocity.
    Velocity(Vec<f64>),
    /// AdaGrad running sum of squared gradients.
    Accumulator(Vec<f64>),
}

impl BaselineState {
    /// Zero state of the right kind for `method` on `n` parameters.
    pub fn reset(method: Method, n: usize) -> Self {
        match method {
            Method::SgdMomentum | Method::Nag => BaselineState::Velocity(vec![0.0; n]),
            Method::AdaGrad => BaselineState::Accumulator(vec![0.0; n]),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            BaselineState::Velocity(v) | BaselineState::Accumulator(v) => v,
        }
    }
}

/// A baseline optimizer: configuration plus its mutable state.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    config: BaselineConfig,
    state: BaselineState,
}

impl Baseline {
    pub fn new(config: BaselineConfig, n: usize) -> Result<Self, BaselineError> {
        config.validate()?;
        Ok(Self {
            config,
            state: BaselineState::reset(config.method, n),
        })
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }

    pub fn state(&self) -> &BaselineState {
        &self.state
    }

    pub fn reset(&mut self) {
        self.state = BaselineState::reset(self.config.method, self.state.as_slice().len());
    }

    /// One update of `params`. `grad_at` returns the mini-batch gradient at
    /// the point it is given; NAG calls it at the look-ahead point.
    pub fn step<F, E>(&mut self, params: &mut [f64], mut grad_at: F) -> Result<(), E>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>, E>,
        E: From<BaselineError>,
    {
        let n = self.state.as_slice().len();
        let BaselineConfig {
            lr,
            momentum: mu,
            dampening,
            adagrad_epsilon: eps,
            ..
        } = self.config;
        let gain = lr * (1.0 - dampening);
        let check = |params: usize, grad: usize| {
            if params != n || grad != n {
                Err(BaselineError::Length { state: n, params, grad })
            } else {
                Ok(())
            }
        };

        match (&mut self.state, self.config.method) {
            (BaselineState::Velocity(v), Method::SgdMomentum) => {
                let g = grad_at(params)?;
                check(params.len(), g.len())?;
                for ((x, v), g) in params.iter_mut().zip(v.iter_mut()).zip(&g) {
                    *v = mu * *v - gain * g;
                    *x += *v;
                }
            }
            (BaselineState::Velocity(v), Method::Nag) => {
                check(params.len(), n)?;
                let lookahead: Vec<f64> = params.iter().zip(v.iter()).map(|(x, v)| x + mu * v).collect();
                let g = grad_at(&lookahead)?;
                check(params.len(), g.len())?;
                for ((x, v), g) in params.iter_mut().zip(v.iter_mut()).zip(&g) {
                    *v = mu * *v - gain * g;
                    *x += *v;
                }
            }
            (BaselineState::Accumulator(acc), Method::AdaGrad) => {
                let g = grad_at(params)?;
                check(params.len(), g.len())?;
                for ((x, a), g) in params.iter_mut().zip(acc.iter_mut()).zip(&g) {
                    *a += g * g;
                    *x -= lr * g / (a.sqrt() + eps);
                }
            }
            _ => unreachable!("state kind always matches the configured method"),
        }
        Ok(())
    }
}
