//! Ablations, dimension reduction, and perturbation checks.

pub mod ablation;
pub mod bound;
pub mod perturb;
pub mod reduce;
pub mod stability;

pub use ablation::{
    bandwidth_ablation, dimensionality_ablation, kernel_ablation, representation_ablation,
    AblationMode, AblationReport, BandwidthReference,
};
pub use bound::{check_gaussian_bound, check_perturbation_bound, BoundCheck, GaussianBoundCheck};
pub use perturb::{
    paired_perturbation_test, perturb, PairedPerturbationResult, PerturbationKind,
    PerturbationSpec, SignalScale,
};
pub use reduce::{reduce, Pca, ReducerMethod, ReducerSpec};
pub use stability::{stability_analysis, StabilityReport};
