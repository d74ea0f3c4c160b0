pub mod algebra;
pub mod apply;
pub mod blockmat;
pub mod construct;
pub mod error;
pub mod generate;
pub mod io;
pub mod lowrank;
pub mod solve;
pub mod tree;
pub mod tss;
