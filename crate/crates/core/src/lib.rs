//! Simulation toolkit for a three-mode optomechanical system in which two
//! linearly coupled cavities share a dispersive coupling to one mechanical
//! resonator. A weak drive on the first cavity, tuned to a level-selective
//! resonance, turns the cavity decay into an engineered dissipation channel
//! that traps the resonator in a low Fock-number mixed state.
//!
//! The crate is organized bottom-up:
//!
//! - [`fock`]: truncated Fock-space operator primitives (ladder operators,
//!   tensor products, dissipators, density matrices);
//! - [`model`]: system parameters and every model-specific scalar or operator
//!   builder (series functions, effective coupling strengths, phase factors,
//!   the full three-mode Hamiltonian, the polaron transformation);
//! - [`lindblad`]: Liouvillian assembly, time evolution, dense steady states,
//!   and the exact birth-death chain solution of the engineered master
//!   equation;
//! - [`selectivity`]: root solving for the selective drive detuning and the
//!   audit of the scheme's validity conditions;
//! - [`observables`]: everything measured on the stationary state — phonon
//!   populations, Wigner function, non-Gaussianity, g²(0).
//!
//! All frequencies and rates are dimensionless multiples of the single-photon
//! optomechanical coupling, which is taken as the unit of frequency
//! throughout.

pub mod fock;
pub mod lindblad;
pub mod model;
pub mod observables;
pub mod selectivity;

pub use num_complex::Complex64 as C64;
