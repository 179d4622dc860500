pub mod approx;
pub mod entropy;
pub mod gibbs;
pub mod error;
pub mod fixtures;
pub mod qmat;
pub mod quad;
pub mod relent;
pub mod spectra;

pub use entropy::EntropyValue;
pub use error::{QsepError, Result};
pub use qmat::{DensityOp, DimSig, Partition, SpectralDecomp};
pub use spectra::{FAWitness, HamiltonianSpec, SpectrumFamily, TailClass, Verdict};
