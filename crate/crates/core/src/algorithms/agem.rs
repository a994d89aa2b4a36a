use crate::numerics::{dot, ParamVector};

/// A-GEM projection: leaves `g` alone unless it conflicts with `g_ref`, in
/// which case the conflicting component is removed.
pub fn agem_project(g: &[f64], g_ref: &[f64]) -> ParamVector {
    let d = dot(g, g_ref);
    let mut out = ParamVector::from_vec(g.to_vec());
    if d >= 0.0 {
        return out;
    }
    let rr = dot(g_ref, g_ref);
    out.axpy(-d / rr, g_ref);
    out
}
