//! Dense networks, optimizer, and sampling helpers.

pub mod adam;
pub mod mlp;
pub mod sampling;

pub use adam::AdamState;
pub use mlp::{ForwardTrace, LayerSlot, MlpSpec, OutputActivation, ParamVector};
pub use sampling::{gaussian_log_pdf, gaussian_pdf, sample_unit_direction};
