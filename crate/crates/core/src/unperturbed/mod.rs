//! Unperturbed system y' = (A/x + rho B) y: conditions, bases and weights.

pub mod asymptotic;
pub mod context;
pub mod series;
pub mod weights;

pub use asymptotic::AsymptoticBasis;
pub use context::{separatrix_set, sector_ordering, validation_report, ContextSpec, SectorSpec, SpectralContext, ValidationReport};
pub use series::SeriesBasis;
pub use weights::{backward_w, forward_w, log_weight, log_weights, weight_w0, weight_wk};
pub mod basis;
pub use basis::{BasisDiagnostics, Psi0Sample, UnperturbedBasis};
