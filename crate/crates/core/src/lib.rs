//! Cusp-winding multifractal spectra of free Fuchsian groups with parabolic
//! elements.
//!
//! The crate codes limit points with the Bowen–Series map, builds the induced
//! countable Markov shift, evaluates its weighted pressure with a transfer
//! operator, solves for the free energy and Legendre transforms it into the
//! dimension spectrum.

pub mod coding;
pub mod config;
pub mod fuchsian;
pub mod gdms;
pub mod induced;
pub mod mobius;
pub mod spectrum;

pub use config::{load_config, parse_config, preset, preset_config, ConfigError, RunConfig};
pub use fuchsian::{build_group, Arc, GroupDescription, GroupError, GroupPresentation, Horocircle, Symbol};
pub use coding::{code_point, Block, BlockWord, CodingError};
pub use gdms::{FreeEnergyCurve, FreeEnergyPoint, GdmsError, GdmsSystem, PressureMode, PressureResult, RootOptions, TransferOperator};
pub use induced::{InducedLetter, ShiftWord};
pub use mobius::{BoundaryPoint, DerivativeMetric, MobiusError, MobiusMap, PlanePoint};
pub use spectrum::{legendre, spectrum, EndpointSlopes, SpectrumCurve, SpectrumError, SpectrumPoint};
