pub mod cli;
pub mod condmodel;
pub mod eval;
pub mod games;
pub mod model;
pub mod numerics;
pub mod training;
