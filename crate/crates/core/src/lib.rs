pub mod angle;
pub mod cluster;
pub mod driver;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod loewner;
pub mod oracle;
pub mod sampler;
pub mod sim;
pub mod slit_map;

pub use error::{AleError, Result};
