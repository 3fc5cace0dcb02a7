//! Structured weighting for ensembles of ordered, low-variance base learners.
//!
//! The crate is organised around the pipeline it implements:
//!
//! * [`weights`] builds weighting laws (uniform, Fibonacci, geometric, polynomial,
//!   sub-exponential, Zipf), validates them against the admissible weighting
//!   constraints and projects arbitrary vectors onto the monotone simplex.
//! * [`dictionary`] fits complexity-ordered dictionaries of base learners
//!   (Gaussian kernel ridge, cubic regression splines, Chebyshev polynomials,
//!   random Fourier features) and orthogonalizes them in empirical `L²`.
//! * [`spectral`] expands targets and learners in an orthonormal basis and
//!   computes the approximation / variance / smoothing decomposition of the
//!   ensemble risk.
//! * [`optimizer`] solves for optimal structured weights with a Frank–Wolfe
//!   method over the monotone simplex, checks dominance conditions and sweeps
//!   geometric laws on a synthetic sequence model.
//! * [`experiment`] runs the Monte Carlo simulation protocol end to end and
//!   writes CSV/SVG outputs.

pub mod dictionary;
pub mod domain;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod optimizer;
pub mod quadrature;
pub mod rng;
pub mod spectral;
pub mod weights;

pub use dictionary::{
    build_dictionary, fit, orthogonalize, Dataset, Dictionary, DictionaryFamily, DictionaryParams,
    FittedLearner, LearnerSpec, TargetId,
};
pub use domain::Interval;
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, ExperimentResult, Scheme, Target};
pub use optimizer::{
    solve_weights, QpProblem, SequenceModel, SolveDiagnostics, SolveOptions,
};
pub use quadrature::Quadrature;
pub use spectral::{BasisKind, DecompositionReport, OrthoBasis, SpectralExpansion};
pub use weights::{
    make_weights, AdmissibilityConstraints, AdmissibilityReport, Orientation, WeightLawSpec,
    WeightVector,
};

/// Library version, echoed into run provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
