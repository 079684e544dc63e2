//! Reference contexts and potentials shared by the unit tests.

use crate::linalg::{c, CMatrix, ZERO};
use crate::unperturbed::{ContextSpec, SectorSpec, SpectralContext, UnperturbedBasis};

pub fn spec2() -> ContextSpec {
    let a = CMatrix::from_row_slice(2, 2, &[ZERO, c(1.5, 0.0), c(0.375, 0.0), ZERO]);
    ContextSpec::from_parts(&a, &[c(1.0, 0.0), c(-1.0, 0.0)], SectorSpec { theta_min: -1.2, theta_max: 1.2 })
}

pub fn spec3() -> ContextSpec {
    let (s, t, u) = (c(0.4, 0.0), c(0.3, 0.0), c(-0.27, 0.0));
    let a = CMatrix::from_row_slice(3, 3, &[ZERO, s, t, s, ZERO, u, t, u, ZERO]);
    let b = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, -1.0)];
    ContextSpec::from_parts(&a, &b, SectorSpec { theta_min: -std::f64::consts::FRAC_PI_4, theta_max: 0.5f64.atan() })
}

pub fn ctx2() -> SpectralContext {
    SpectralContext::validate(&spec2()).unwrap().0
}

pub fn ctx3() -> SpectralContext {
    SpectralContext::validate(&spec3()).unwrap().0
}

pub fn basis2() -> UnperturbedBasis {
    UnperturbedBasis::build(&ctx2()).unwrap()
}

pub fn basis3() -> UnperturbedBasis {
    UnperturbedBasis::build(&ctx3()).unwrap()
}
