use std::fmt;

use selfsim::construct::ConstructError;
use selfsim::dynamics::DynamicsError;
use selfsim::groundstate::GroundStateError;
use selfsim::model::ModelError;
use selfsim::ode::OdeError;
use selfsim::specfun::SpecError;
use selfsim::spectral::SpectralError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Validation,
    Numerical,
    Regime,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Validation => 2,
            Kind::Numerical => 3,
            Kind::Regime => 4,
        }
    }
}

/// An error tagged with the module and operation that raised it.
#[derive(Debug, Clone)]
pub struct CliError {
    pub kind: Kind,
    pub module: &'static str,
    pub op: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(kind: Kind, module: &'static str, op: &'static str, message: impl Into<String>) -> Self {
        Self { kind, module, op, message: message.into() }
    }

    pub fn validation(module: &'static str, op: &'static str, message: impl Into<String>) -> Self {
        Self::new(Kind::Validation, module, op, message)
    }

    pub fn numerical(module: &'static str, op: &'static str, message: impl Into<String>) -> Self {
        Self::new(Kind::Numerical, module, op, message)
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::numerical("cli", "io", format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{} {}] {}", self.module, self.op, self.message)
    }
}

impl std::error::Error for CliError {}

/// How a library error maps onto an exit status.
pub trait Classify: fmt::Display {
    fn kind(&self) -> Kind;
}

impl Classify for ModelError {
    fn kind(&self) -> Kind {
        Kind::Validation
    }
}

impl Classify for OdeError {
    fn kind(&self) -> Kind {
        Kind::Numerical
    }
}

impl Classify for GroundStateError {
    fn kind(&self) -> Kind {
        match self {
            GroundStateError::RangeTooShort(_) => Kind::Validation,
            _ => Kind::Numerical,
        }
    }
}

impl Classify for ConstructError {
    fn kind(&self) -> Kind {
        match self {
            ConstructError::Invalid(_) | ConstructError::OutsideRegime { .. } => Kind::Validation,
            _ => Kind::Numerical,
        }
    }
}

impl Classify for SpecError {
    fn kind(&self) -> Kind {
        Kind::Numerical
    }
}

impl Classify for SpectralError {
    fn kind(&self) -> Kind {
        match self {
            SpectralError::Invalid(_) | SpectralError::TooMany { .. } => Kind::Validation,
            _ => Kind::Numerical,
        }
    }
}

impl Classify for DynamicsError {
    fn kind(&self) -> Kind {
        match self {
            DynamicsError::Invalid(_) => Kind::Validation,
            DynamicsError::OutsideTube { .. } => Kind::Regime,
            _ => Kind::Numerical,
        }
    }
}

/// `map_err` adapter: `.map_err(lift("construct", "scan"))`.
pub fn lift<E: Classify>(module: &'static str, op: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::new(e.kind(), module, op, e.to_string())
}
