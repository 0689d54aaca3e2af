//! Gate-level synthesis, verification and resource accounting for constant-depth
//! carry-save modular arithmetic on 2D nearest-neighbor modular architectures.

pub mod arith;
pub mod comm;
pub mod estimate;
pub mod export;
pub mod formulas;
pub mod hier;
pub mod model;
pub mod modexp;
pub mod mult;
pub mod oracle;
pub mod sim;
pub mod verify;

pub use hier::{HierCircuit, Placement};
pub use model::{Circuit, CircuitBuilder, Gate, GateKind, ParityExpr, ResourceReport};
