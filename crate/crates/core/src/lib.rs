pub mod catalog;
pub mod darkstates;
pub mod jumptime;
pub mod linalg;
pub mod model;
pub mod walltime;
pub mod phase_space;
pub mod trajectories;
pub mod cli;
