//! Validated end enclosures, end covers and boundary covers for autonomous
//! polynomial ODE initial value problems with box initial sets.

pub mod interval;
pub mod matrix;
pub mod field;
pub mod stepper;
pub mod complexity;
pub mod scaffold;
pub mod problem;
pub mod cover;
pub mod oracle;
