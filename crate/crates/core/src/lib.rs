pub mod error;
pub mod field;
pub mod spectral;
pub mod interp;
pub mod transport;
pub mod variants;
pub mod metrics;
pub mod optimizer;
pub mod synth;
pub mod io;
pub mod pipeline;
