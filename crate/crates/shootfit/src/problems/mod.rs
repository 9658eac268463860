//! Bundled experiments: the synthetic spiral system and the
//! cascaded-tanks benchmark (plus a dataset-free surrogate).

pub mod spiral;
pub mod surrogate;
pub mod tanks;

pub use spiral::{gen_spiral, spiral_rhs, SpiralField, SpiralSpec, SPIRAL_A};
pub use surrogate::{gen_surrogate, surrogate_input, SurrogateData, SurrogateSpec};
pub use tanks::{load_tanks, ControlSignal, TanksDataset, TanksField, TanksSpec, TANKS_PERIOD};
