#![allow(dead_code)]

use std::path::PathBuf;

use weyl_tensor::linalg::C64;
use weyl_tensor::potential::{load_potential, Potential, PotentialSpec};
use weyl_tensor::unperturbed::{ContextSpec, SpectralContext, UnperturbedBasis};

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn context_spec(n: usize) -> ContextSpec {
    let text = std::fs::read_to_string(data(&format!("context{n}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn basis(n: usize) -> UnperturbedBasis {
    let (ctx, _) = SpectralContext::validate(&context_spec(n)).unwrap();
    UnperturbedBasis::build(&ctx).unwrap()
}

pub fn potential(name: &str, n: usize) -> Potential {
    let text = std::fs::read_to_string(data(&format!("{name}.json"))).unwrap();
    let spec: PotentialSpec = serde_json::from_str(&text).unwrap();
    load_potential(&spec, n).unwrap()
}

pub fn geometric(a: f64, b: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| a * (b / a).powf(i as f64 / (count - 1) as f64)).collect()
}

/// Two interior sample points of each reference sector.
pub fn rho_for(n: usize) -> Vec<C64> {
    match n {
        2 => vec![C64::new(2.0, 0.8), C64::new(1.5, -1.5)],
        3 => vec![C64::new(3.0, -0.4), C64::new(2.0, 0.3)],
        _ => vec![C64::from_polar(2.0, 1.2), C64::from_polar(3.0, 1.45)],
    }
}

/// Prints one verdict line and returns the verdict.
pub fn verdict(id: usize, name: &str, pass: bool, detail: &str) -> bool {
    println!("criterion {id} [{name}]: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    pass
}
