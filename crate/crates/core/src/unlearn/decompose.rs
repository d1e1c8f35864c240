use crate::error::{Error, Result};
use crate::nn::GradVector;
use crate::scalar::Scalar;
use crate::unlearn::sharpness::DEGENERATE_NORM;

/// Split of the forget gradient into its component along the causal
/// direction and the orthogonal remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientDecomposition<S> {
    pub g_f: GradVector<S>,
    pub g_causal: GradVector<S>,
    pub g_proj: GradVector<S>,
    pub g_bias: GradVector<S>,
}

/// Projects `g_f` onto `g_causal`:
/// `g_proj = (<g_f, g_causal> / |g_causal|^2) g_causal`, `g_bias = g_f - g_proj`.
///
/// When `|g_causal|` is below the degenerate threshold the projection is zero
/// and `g_bias = g_f`. `g_bias` is always the computed difference
/// `g_f - g_proj`, so adding the parts back recovers `g_f` up to one rounding
/// of the sum.
pub fn decompose<S: Scalar>(
    g_f: &GradVector<S>,
    g_causal: &GradVector<S>,
) -> Result<GradientDecomposition<S>> {
    if g_f.len() != g_causal.len() {
        return Err(Error::DimensionMismatch {
            what: "causal gradient",
            expected: g_f.len(),
            got: g_causal.len(),
        });
    }
    let causal_sq = g_causal.dot(g_causal);
    let (g_proj, g_bias) = if !(causal_sq.sqrt() >= S::of(DEGENERATE_NORM)) {
        (GradVector::zeros(g_f.len()), g_f.clone())
    } else {
        let coef = g_f.dot(g_causal) / causal_sq;
        let (proj, bias): (Vec<S>, Vec<S>) = g_f
            .values
            .iter()
            .zip(&g_causal.values)
            .map(|(&g, &c)| {
                let p = coef * c;
                (p, g - p)
            })
            .unzip();
        (GradVector::new(proj), GradVector::new(bias))
    };
    Ok(GradientDecomposition {
        g_f: g_f.clone(),
        g_causal: g_causal.clone(),
        g_proj,
        g_bias,
    })
}
