//! Feedback vaccination laws and their stability certificates.

pub mod certificate;
pub mod class_law;
pub mod field_law;

pub use certificate::{
    find_certified_constants, growth_bound, riccati_kappa, riccati_with_retry,
    stability_conditions, GainSuprema, RiccatiSolution, StabilityVerdict,
};
pub use class_law::{
    feedback_matrices, lie_f, ode_feedback, saturate_nonneg, switch_off, ClassFeedback, OdeGains,
};
pub use field_law::{
    g_func, g_profile, h_func, h_profile, pide_feedback, pide_normal_form,
    pide_normal_form_inverse, positive_gain_design, FieldFeedback, NormalForm, PideGains,
};
