pub mod bundled;
pub mod cli;
pub mod cone;
pub mod continuous;
pub mod discrete;
pub mod export;
pub mod linalg;
pub mod net;
pub mod netfile;
pub mod policy;
pub mod rational;
pub mod stationary;
pub mod sweep;
