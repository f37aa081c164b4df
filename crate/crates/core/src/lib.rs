pub mod construct;
pub mod dynamics;
pub mod extended;
pub mod groundstate;
pub mod model;
pub mod ode;
pub mod real;
pub mod specfun;
pub mod spectral;
pub mod tridiag;
pub mod verify;

pub use model::ModelParams;
pub use real::Real;

pub type RadialFunction = ode::RadialFunction<f64>;
pub type RadialGrid = ode::RadialGrid<f64>;
