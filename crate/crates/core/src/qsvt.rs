//! Polynomial eigenvalue transformation of block-encoded Hermitian operators.
//!
//! The transform is evaluated directly on the spectrum; the phase sequence that a
//! circuit would use is not synthesized. Output subnormalization, ancillas, error and
//! query counts follow the transformation theorem's contract.

use serde::Serialize;

use crate::blockenc::{BlockEnc, ResourceLedger, BASE_QUERIES, CONTROLLED_QUERIES, GATE_GROUPS};
use crate::error::{Error, Result};
use crate::poly::{Bounds, Poly};

/// Slack on the `|P| <= 1/2` precondition covering the certified bound's own tolerance.
const SUP_SLACK: f64 = 1e-8;

/// Encoding of `P(A / alpha)` with `alpha = 1`, `a + 2` ancillas and error
/// `4 d sqrt(eps / alpha)`. Uses the input `d` times plus one controlled use.
pub fn transform(e: &BlockEnc, p: &Poly) -> Result<BlockEnc> {
    let sup = p.certified_sup();
    if sup > 0.5 + SUP_SLACK {
        return Err(Error::SupNorm { sup });
    }
    let block = e.block();
    let op = block.apply_spectral(|x| p.eval(x))?;
    let d = p.degree() as u64;
    let groups = d * (e.ancillas() as u64 + 1);
    let mut ledger = ResourceLedger::new();
    ledger
        .merge_scaled(e.ledger(), d)
        .record(BASE_QUERIES, d)
        .record(CONTROLLED_QUERIES, u64::from(d > 0))
        .record(GATE_GROUPS, groups)
        .lemma("qsvt")
        .add_depth(groups);
    let eps = 4.0 * d as f64 * (e.eps() / e.alpha()).sqrt();
    BlockEnc::new(op, 1.0, e.ancillas() + 2, eps, ledger)
}

/// The diagonal encodings of `f`, `f'/P` and `f''/Q` at the grid points.
#[derive(Debug, Clone)]
pub struct MFamily {
    pub m: BlockEnc,
    pub m1: BlockEnc,
    pub m2: BlockEnc,
    /// Normalizer of the first derivative, `P = 2 * sup |f'|` over `[-1, 1]`.
    pub p_norm: f64,
    /// Normalizer of the second derivative, `Q = 2 * sup |f''|` over `[-1, 1]`.
    pub q_norm: f64,
    /// `f'` vanishes identically and `m1` is the zero matrix.
    pub m1_degenerate: bool,
    /// `f''` vanishes identically and `m2` is the zero matrix.
    pub m2_degenerate: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Normalizers {
    pub p_norm: f64,
    pub q_norm: f64,
}

/// Derivative normalizers making `f'/P` and `f''/Q` admissible transform polynomials.
pub fn normalizers(bounds: &Bounds) -> Normalizers {
    let pick = |sup: f64| if sup > 0.0 { 2.0 * sup } else { 1.0 };
    Normalizers { p_norm: pick(bounds.d1_sup), q_norm: pick(bounds.d2_sup) }
}

/// Builds `M`, `M1`, `M2` from an encoding of `diag(x)` with `alpha = 1`.
/// `f` must already satisfy `|f| <= 1/2` on `[-1, 1]`.
pub fn build_m_family(f: &Poly, grid_enc: &BlockEnc, bounds: &Bounds) -> Result<MFamily> {
    if (grid_enc.alpha() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "grid encoding must have alpha = 1, got {}",
            grid_enc.alpha()
        )));
    }
    let norms = normalizers(bounds);
    let d1 = f.derivative(1);
    let d2 = f.derivative(2);
    Ok(MFamily {
        m: transform(grid_enc, f)?,
        m1: transform(grid_enc, &d1.scale(1.0 / norms.p_norm))?,
        m2: transform(grid_enc, &d2.scale(1.0 / norms.q_norm))?,
        p_norm: norms.p_norm,
        q_norm: norms.q_norm,
        m1_degenerate: d1.is_zero(),
        m2_degenerate: d2.is_zero(),
    })
}
