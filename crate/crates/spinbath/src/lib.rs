//! Stochastic-limit dynamics of dissipative spin lattices.
//!
//! `spinbath` builds, verifies and runs the Markovian open-system dynamics
//! that a weakly coupled thermal boson bath induces on a finite Ising-type
//! spin lattice:
//!
//! * [`lattice`]: the coupling graph, flip channels R = (site,
//!   neighbourhood) and their energies E(R).
//! * [`operator`]: sparse flip operators D, G, F and their algebra.
//! * [`bath`]: spectral density, Bose occupation and the channel
//!   susceptibilities (rates plus Lamb shifts).
//! * [`generator`]: the quantum Markovian generator assembled from the
//!   channels, its structure maps and Ito table, with numerical checks of
//!   the defining operator identities.
//! * [`dynamics`]: master-equation integration, steady states and quantum
//!   trajectory unravelings.
//! * [`classical`]: the induced classical jump process on spin
//!   configurations, with kinetic Monte Carlo for large lattices.
//! * [`verify`]: the identity suite behind the `verify` CLI command.
//! * [`config`] / [`runner`]: declarative run configuration and command
//!   dispatch used by the thin `spinbath` binary.
//!
//! Every major capability has a runnable example under `examples/`.

pub mod bath;
pub mod classical;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod generator;
pub mod lattice;
pub mod operator;
pub mod runner;
pub mod verify;

pub use bath::{bose_occupation, ito_coefficients, BathModel, SpectralDensity, Susceptibility};
pub use error::{Error, Result};
pub use generator::{ito_table, kappa, theta, theta_zero, GeneratorBundle};
pub use lattice::{classify_channel, Channel, CouplingGraph, SignClass, SpinConfiguration};
pub use operator::{algebra, AlgebraKind, ApplyOutcome, BasisAction, LocalOperator, Pauli};
