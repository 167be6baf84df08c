pub mod controller;
pub mod grasp;
pub mod harness;
pub mod perception;
pub mod plant;
pub mod protocol;
pub mod session;
