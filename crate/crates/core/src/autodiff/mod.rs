//! Reverse-mode differentiation over vector-valued nodes, MLP encoders and
//! the Adam updater.

mod adam;
mod encoder;
mod mlp;
mod tape;

pub use adam::AdamState;
pub use encoder::{Encoder, EncoderConfig};
pub use mlp::{Activation, BoundMlp, Mlp};
pub use tape::{Tape, Var};

pub(crate) use mlp::check_input;
