//! Frequency coherence of heterogeneous swing networks.
//!
//! The crate simulates the swing dynamics of a power network (with DC or
//! sinusoidal line flows) next to its first-order *blended* reduction
//! `M_b ω̇_b = f_b(ω_b) + ξ_b`, and evaluates closed-form upper bounds on the
//! coherence error `max_i |ω_i − ω_b|`.
//!
//! Layout:
//!
//! * [`grid`]: topology, Laplacian/incidence, spectra, Kron reduction.
//! * [`nodal`]: nodal frequency-response functions and their sector bounds.
//! * [`signals`]: piecewise disturbance profiles and their rate statistics.
//! * [`engine`]: ODE integration of the swing and blended models, traces.
//! * [`certify`]: steady states, bound certificates, trajectory verification.
//! * [`parallel`]: data-parallel map with a sequential fallback.

pub mod certify;
pub mod engine;
pub mod grid;
mod linalg;
pub mod nodal;
pub mod parallel;
pub mod signals;

pub use certify::{BoundCertificate, CertificateKind, CertifyError, SteadyState, TransformedFrame};
pub use engine::{EngineError, FlowModel, IntegratorConfig, Method, Trajectory};
pub use grid::{GridError, PowerNetwork, SpectralSummary};
pub use nodal::{NodalError, ResponseFunction, SectorBounds};
pub use signals::{DisturbanceProfile, SignalError, Term};
