//! NeuralCut: a tripartite graph network that imitates the lookahead cut
//! selector.

pub mod diagnostics;
pub mod io;
pub mod loss;
pub mod model;
pub mod params;
pub mod policy;
pub mod tape;
pub mod train;

pub use policy::NeuralCutPolicy;
