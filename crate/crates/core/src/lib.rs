//! Multispectral demosaicing toolkit: the mosaicing operator, classical and
//! variational baselines, perspective-equivariant self-supervised training,
//! and spectral image metrics.

pub mod autodiff;
mod binio;
pub mod cube;
pub mod dataio;
pub mod error;
pub mod geometry;
pub mod interp;
pub mod losses;
pub mod metrics;
pub mod msfa;
pub mod rng;
pub mod variational;

pub use cube::{Mosaic, SpectralCube, ValidityMask};
pub use error::{Error, Result};
pub use msfa::{MosaicOperator, MsfaPattern};
pub use rng::Rng;
