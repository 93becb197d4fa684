//! Simulated block encodings and the lemma calculus that composes them.
//!
//! A [`BlockEnc`] stores the encoded operator `A` exactly, together with its
//! subnormalization `alpha` (the unitary holds `A / alpha` in its top-left block),
//! the ancilla count, an error bound `eps` and a [`ResourceLedger`]. Each lemma is a
//! free function returning a new encoding; nothing is mutated in place.

mod ledger;
mod operator;

pub use ledger::{ResourceLedger, BASE_QUERIES, CONTROLLED_QUERIES, GATE_GROUPS, STATE_PREP};
pub use operator::{hadamard_matrix, Operator, DENSE_LIMIT};

use crate::error::{Error, Result};

/// Slack allowed when checking `‖op‖ ≤ alpha + eps` against floating rounding.
const NORM_SLACK: f64 = 1e-9;
/// Accuracy used when amplification is chosen by [`normalize_subnormalization`].
pub const DEFAULT_AMPLIFICATION_EPS: f64 = 1e-10;

pub(crate) fn log2_exact(n: usize) -> Result<u32> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    Ok(n.trailing_zeros())
}

fn ceil_log2(m: usize) -> u32 {
    if m <= 1 {
        0
    } else {
        usize::BITS - (m - 1).leading_zeros()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// An `(alpha, a, eps)` block encoding of `op`.
#[derive(Debug, Clone)]
pub struct BlockEnc {
    op: Operator,
    alpha: f64,
    ancillas: u32,
    eps: f64,
    ledger: ResourceLedger,
}

impl BlockEnc {
    /// Validates the power-of-two dimension and the norm bound `‖op‖ ≤ alpha + eps`.
    pub fn new(op: Operator, alpha: f64, ancillas: u32, eps: f64, ledger: ResourceLedger) -> Result<Self> {
        log2_exact(op.dim())?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("subnormalization must be positive, got {alpha}")));
        }
        if !(eps >= 0.0) {
            return Err(Error::InvalidParameter(format!("error bound must be nonnegative, got {eps}")));
        }
        let bound = alpha + eps;
        let tol = NORM_SLACK * bound.max(1.0);
        if op.norm_upper_bound() > bound + tol {
            let norm = op.spectral_norm();
            if norm > bound + tol {
                return Err(Error::NormBound { norm, bound });
            }
        }
        Ok(Self { op, alpha, ancillas, eps, ledger })
    }

    /// A unitary encodes itself with `alpha = 1` and no ancillas.
    pub fn unitary(op: Operator, depth: u64) -> Result<Self> {
        let mut ledger = ResourceLedger::new();
        ledger.record(GATE_GROUPS, depth).add_depth(depth);
        Self::new(op, 1.0, 0, 0.0, ledger)
    }

    /// `σ_z ⊗ I` holds the identity in its top-left block.
    pub fn identity(n: usize) -> Result<Self> {
        let mut ledger = ResourceLedger::new();
        ledger.record(GATE_GROUPS, 1).add_depth(1);
        Self::new(Operator::identity(n), 1.0, 1, 0.0, ledger)
    }

    /// Encoding of the zero matrix (an `X` on a single ancilla).
    pub fn zero(n: usize) -> Result<Self> {
        let mut ledger = ResourceLedger::new();
        ledger.record(GATE_GROUPS, 1).add_depth(1);
        Self::new(Operator::Diagonal(vec![0.0; n]), 1.0, 1, 0.0, ledger)
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn ancillas(&self) -> u32 {
        self.ancillas
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn ledger(&self) -> &ResourceLedger {
        &self.ledger
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn qubits(&self) -> u32 {
        self.op.dim().trailing_zeros()
    }

    /// The block actually stored in the unitary, `op / alpha`.
    pub fn block(&self) -> Operator {
        self.op.scale(1.0 / self.alpha)
    }

    /// Same unitary, re-expressed with `alpha = 1`.
    pub fn unit_view(&self) -> BlockEnc {
        BlockEnc {
            op: self.block(),
            alpha: 1.0,
            ancillas: self.ancillas,
            eps: self.eps / self.alpha,
            ledger: self.ledger.clone(),
        }
    }

    /// Replaces the ledger (used to attach externally accounted costs).
    pub fn with_ledger(mut self, ledger: ResourceLedger) -> Self {
        self.ledger = ledger;
        self
    }
}

/// A state-preparation circuit and the state it produces from `|0…0⟩`.
///
/// When built from a block encoding applied to a state, the vector includes the
/// garbage branch explicitly: the first half is the ancilla-`|0⟩` component.
#[derive(Debug, Clone)]
pub struct StatePrep {
    amplitudes: Vec<f64>,
    ledger: ResourceLedger,
}

impl StatePrep {
    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn ledger(&self) -> &ResourceLedger {
        &self.ledger
    }

    /// Embeds the state in the ancilla-`|0⟩` half of a space twice as large.
    pub fn with_flag_qubit(&self) -> StatePrep {
        let mut amplitudes = self.amplitudes.clone();
        amplitudes.resize(2 * self.amplitudes.len(), 0.0);
        StatePrep { amplitudes, ledger: self.ledger.clone() }
    }

    /// Prepares `1/2 |0⟩|0⟩(Φ1 + Φ2) + 1/2 |1⟩|1⟩(Φ1 - Φ2)` from two preparations of equal
    /// dimension: a Hadamard, the two controlled preparations, a Hadamard and a CNOT.
    ///
    /// Layout is `(flag ⊗ Φ) ⊗ kept`, with the kept qubit as the trailing (least
    /// significant) index so that [`density_encode`] can trace out everything before it.
    pub fn overlap_state(p1: &StatePrep, p2: &StatePrep) -> Result<StatePrep> {
        if p1.dim() != p2.dim() {
            return Err(Error::DimensionMismatch(format!("states of dimension {} and {}", p1.dim(), p2.dim())));
        }
        let d = p1.dim();
        let mut amplitudes = vec![0.0; 4 * d];
        for (i, (a, b)) in p1.amplitudes.iter().zip(&p2.amplitudes).enumerate() {
            amplitudes[2 * i] = 0.5 * (a + b);
            amplitudes[2 * (d + i) + 1] = 0.5 * (a - b);
        }
        let mut ledger = ResourceLedger::sequential([&p1.ledger, &p2.ledger]);
        ledger.record(CONTROLLED_QUERIES, 2).record(GATE_GROUPS, 3).lemma("overlap_state").add_depth(3);
        Ok(StatePrep { amplitudes, ledger })
    }

    pub fn inner(&self, other: &StatePrep) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!("states of dimension {} and {}", self.dim(), other.dim())));
        }
        Ok(self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a * b).sum())
    }
}

/// Amplitude encoding of a unit vector of power-of-two length; depth `log2 N`.
pub fn encode_state(amplitudes: &[f64]) -> Result<StatePrep> {
    let qubits = log2_exact(amplitudes.len())?;
    let norm = amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroState);
    }
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized(norm));
    }
    let mut ledger = ResourceLedger::new();
    ledger.record(STATE_PREP, 1).add_depth(qubits as u64);
    Ok(StatePrep { amplitudes: amplitudes.to_vec(), ledger })
}

/// Applies the unitary of a diagonal encoding to `|0⟩|ψ⟩`, returning the full output
/// state `|0⟩ (A/α)|ψ⟩ + |1⟩ sqrt(I - (A/α)^2)|ψ⟩` of the Hermitian dilation.
pub fn apply_block(e: &BlockEnc, prep: &StatePrep) -> Result<StatePrep> {
    if e.dim() != prep.dim() {
        return Err(Error::DimensionMismatch(format!(
            "encoding of dimension {} applied to a state of dimension {}",
            e.dim(),
            prep.dim()
        )));
    }
    let block = e.block();
    let diag = block
        .as_diagonal()
        .ok_or_else(|| Error::InvalidParameter("apply_block needs a diagonal encoding".into()))?;
    let mut amplitudes: Vec<f64> = diag.iter().zip(&prep.amplitudes).map(|(d, p)| d * p).collect();
    amplitudes.extend(
        diag.iter()
            .zip(&prep.amplitudes)
            .map(|(d, p)| (1.0 - d * d).max(0.0).sqrt() * p),
    );
    let mut ledger = ResourceLedger::sequential([&prep.ledger, &e.ledger]);
    ledger.record(BASE_QUERIES, 1);
    Ok(StatePrep { amplitudes, ledger })
}

/// Diagonal block encoding `diag(ψ_0, …, ψ_{N-1})` from a state preparation, with
/// `log2 N + 3` ancillas and a single controlled query to the preparation.
pub fn diag_from_state(prep: &StatePrep) -> Result<BlockEnc> {
    let qubits = log2_exact(prep.dim())?;
    let mut ledger = ResourceLedger::new();
    ledger
        .merge(&prep.ledger)
        .record(CONTROLLED_QUERIES, 1)
        .record(GATE_GROUPS, qubits as u64)
        .lemma("diag_from_state")
        .add_depth(qubits as u64);
    BlockEnc::new(Operator::Diagonal(prep.amplitudes.clone()), 1.0, qubits + 3, 0.0, ledger)
}

/// Diagonal encoding of column `col` of the encoded block: the encoding applied to
/// `|0⟩|col⟩` prepares the (subnormalized) column as its flagged branch, which then
/// feeds [`diag_from_state`]. The result is `diag(A e_col)` at the input's `alpha`.
pub fn diag_from_column(e: &BlockEnc, col: usize) -> Result<BlockEnc> {
    let n = e.dim();
    if col >= n {
        return Err(Error::IndexOutOfRange { index: col + 1, dim: n });
    }
    let qubits = log2_exact(n)?;
    let mut ledger = ResourceLedger::new();
    ledger
        .merge(&e.ledger)
        .record(CONTROLLED_QUERIES, 1)
        .record(GATE_GROUPS, qubits as u64)
        .lemma("diag_from_state")
        .add_depth(qubits as u64);
    BlockEnc::new(Operator::Diagonal(e.op.column(col)), e.alpha, e.ancillas + qubits + 3, e.eps, ledger)
}

/// Encoding of `A1 A2` with `alpha = α1 α2` and `eps = α1 ε2 + α2 ε1`.
pub fn product(e1: &BlockEnc, e2: &BlockEnc) -> Result<BlockEnc> {
    let op = e1.op.mul(&e2.op)?;
    let mut ledger = ResourceLedger::sequential([&e1.ledger, &e2.ledger]);
    ledger.record(BASE_QUERIES, 2).record(GATE_GROUPS, 1).lemma("product").add_depth(1);
    BlockEnc::new(
        op,
        e1.alpha * e2.alpha,
        e1.ancillas + e2.ancillas,
        e1.alpha * e2.eps + e2.alpha * e1.eps,
        ledger,
    )
}

/// Encoding of `(Σ sᵢ Aᵢ) / m` for encodings sharing one subnormalization.
pub fn lcu(encodings: &[&BlockEnc], signs: &[Sign]) -> Result<BlockEnc> {
    let first = encodings.first().ok_or(Error::EmptyCombination)?;
    if signs.len() != encodings.len() {
        return Err(Error::InvalidParameter(format!(
            "{} signs for {} encodings",
            signs.len(),
            encodings.len()
        )));
    }
    let alpha = first.alpha;
    for e in encodings {
        if (e.alpha - alpha).abs() > 1e-12 * alpha.max(1.0) {
            return Err(Error::UnequalAlpha(alpha, e.alpha));
        }
    }
    let m = encodings.len();
    let mut op = first.op.scale(signs[0].value() / m as f64);
    for (e, s) in encodings.iter().zip(signs).skip(1) {
        op = op.add(&e.op.scale(s.value() / m as f64))?;
    }
    let select = ceil_log2(m);
    let mut ledger = ResourceLedger::sequential(encodings.iter().map(|e| &e.ledger));
    ledger
        .record(BASE_QUERIES, m as u64)
        .record(CONTROLLED_QUERIES, m as u64)
        .record(GATE_GROUPS, 2 * select as u64)
        .lemma("lcu")
        .add_depth(2 * select as u64);
    let ancillas = encodings.iter().map(|e| e.ancillas).max().unwrap_or(0) + select;
    let eps = encodings.iter().map(|e| e.eps).fold(0.0, f64::max);
    BlockEnc::new(op, alpha, ancillas, eps, ledger)
}

/// Encoding of `A / p` for `p > 1`: an `R_Y` rotation with `cos(θ/2) = 1/p`, tensored
/// with the identity and multiplied in.
pub fn scale_down(e: &BlockEnc, p: f64) -> Result<BlockEnc> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("scale factor must exceed 1, got {p}")));
    }
    let mut ledger = e.ledger.clone();
    ledger.record(BASE_QUERIES, 1).record(GATE_GROUPS, 3).lemma("scale").add_depth(3);
    BlockEnc::new(e.op.scale(1.0 / p), e.alpha, e.ancillas + 1, e.eps / p, ledger)
}

/// Number of uses of the input in uniform singular-value amplification:
/// `m = ceil((γ/δ) ln(γ/ε))`.
pub fn amplification_rounds(gamma: f64, delta: f64, eps_amp: f64) -> u64 {
    ((gamma / delta) * (gamma / eps_amp).ln()).ceil() as u64
}

/// Uniform singular-value amplification by `gamma`. The operator is multiplied by `gamma`
/// exactly; the phase sequence itself is not synthesized.
pub fn amplify(e: &BlockEnc, gamma: f64, delta: f64, eps_amp: f64) -> Result<BlockEnc> {
    if !(gamma > 1.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma must exceed 1, got {gamma}")));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1/2), got {delta}")));
    }
    if !(eps_amp > 0.0 && eps_amp < 0.5) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, 1/2), got {eps_amp}")));
    }
    let max_sv = e.op.spectral_norm() / e.alpha;
    let bound = (1.0 - delta) / gamma;
    if max_sv > bound * (1.0 + 1e-12) {
        return Err(Error::AmplificationPrecondition { max_sv, bound });
    }
    let m = amplification_rounds(gamma, delta, eps_amp);
    let mut ledger = ResourceLedger::new();
    ledger
        .merge_scaled(&e.ledger, m)
        .record(BASE_QUERIES, m)
        .record(GATE_GROUPS, 3 * m)
        .lemma("amplify")
        .add_depth(3 * m);
    let op_norm = max_sv * e.alpha;
    let eps = gamma * e.eps + gamma * op_norm * eps_amp;
    BlockEnc::new(e.op.scale(gamma), e.alpha, e.ancillas + 1, eps, ledger)
}

/// Encoding of `A1 ⊗ A2`, run in parallel with an O(1) layer of swaps.
pub fn tensor(e1: &BlockEnc, e2: &BlockEnc) -> Result<BlockEnc> {
    let op = e1.op.kron(&e2.op)?;
    let mut ledger = ResourceLedger::parallel([&e1.ledger, &e2.ledger]);
    ledger.record(BASE_QUERIES, 2).record(GATE_GROUPS, 1).lemma("tensor").add_depth(1);
    BlockEnc::new(
        op,
        e1.alpha * e2.alpha,
        e1.ancillas + e2.ancillas,
        e1.alpha * e2.eps + e2.alpha * e1.eps,
        ledger,
    )
}

/// Encoding of `|j-1⟩⟨j-1|` (1-based `j`) through the density-matrix lemma.
pub fn projector(j: usize, n: usize) -> Result<BlockEnc> {
    range_projector(j, j, n)
}

/// Encoding of `Σ_{j=start}^{end} |j-1⟩⟨j-1|` (1-based, inclusive); a comparator
/// circuit of depth `log2 N` flags the range.
pub fn range_projector(start: usize, end: usize, n: usize) -> Result<BlockEnc> {
    let qubits = log2_exact(n)?;
    for idx in [start, end] {
        if idx == 0 || idx > n {
            return Err(Error::IndexOutOfRange { index: idx, dim: n });
        }
    }
    if start > end {
        return Err(Error::InvalidParameter(format!("empty range {start}..={end}")));
    }
    let diag = (1..=n).map(|j| if (start..=end).contains(&j) { 1.0 } else { 0.0 }).collect();
    let mut ledger = ResourceLedger::new();
    ledger
        .record(STATE_PREP, 2)
        .record(GATE_GROUPS, qubits as u64)
        .lemma("projector")
        .add_depth(qubits as u64);
    BlockEnc::new(Operator::Diagonal(diag), 1.0, qubits, 0.0, ledger)
}

/// Encoding of `ρ = Tr_A |Φ⟩⟨Φ|` where the state is ordered `A ⊗ B` with `A` of dimension
/// `traced_dim` (the leading factor). Uses the preparation and its inverse once each.
pub fn density_encode(prep: &StatePrep, traced_dim: usize) -> Result<BlockEnc> {
    let total = prep.dim();
    let traced_qubits = log2_exact(traced_dim)?;
    if total % traced_dim != 0 {
        return Err(Error::DimensionMismatch(format!(
            "traced dimension {traced_dim} does not divide state dimension {total}"
        )));
    }
    let kept = total / traced_dim;
    let kept_qubits = log2_exact(kept)?;
    let amp = &prep.amplitudes;
    let mut rho = nalgebra::DMatrix::<f64>::zeros(kept, kept);
    for a in 0..traced_dim {
        let row = &amp[a * kept..(a + 1) * kept];
        for (i, &x) in row.iter().enumerate().filter(|(_, &x)| x != 0.0) {
            for (j, &y) in row.iter().enumerate() {
                rho[(i, j)] += x * y;
            }
        }
    }
    let off_diag = (0..kept).any(|i| (0..kept).any(|j| i != j && rho[(i, j)] != 0.0));
    let op = if off_diag {
        Operator::Dense(rho)
    } else {
        Operator::Diagonal((0..kept).map(|i| rho[(i, i)]).collect())
    };
    let mut ledger = ResourceLedger::new();
    ledger
        .merge_scaled(&prep.ledger, 2)
        .record(GATE_GROUPS, kept_qubits as u64)
        .lemma("density_matrix")
        .add_depth(1);
    BlockEnc::new(op, 1.0, traced_qubits + kept_qubits, 0.0, ledger)
}

/// The Hadamard layer `H^{⊗ log2 n}` as a self-encoding unitary of depth 1.
pub fn hadamard_layer(n: usize) -> Result<BlockEnc> {
    log2_exact(n)?;
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge(n));
    }
    BlockEnc::unitary(Operator::Dense(hadamard_matrix(n)), 1)
}

/// Cyclic shift `S|i⟩ = |i-1 mod n⟩`, i.e. `S[i][i+1 mod n] = 1`; an incrementer of depth `log2 n`.
pub fn cyclic_shift(n: usize) -> Result<BlockEnc> {
    let qubits = log2_exact(n)?;
    let mut row = vec![0.0; n];
    row[1 % n] += 1.0;
    BlockEnc::unitary(Operator::Circulant(row), qubits.max(1) as u64)
}

/// Shift-difference circulant `L = S - I` (`L[i][i] = -1`, `L[i][i+1 mod n] = +1`),
/// built as `lcu([S, I], (+, -))`, so it carries subnormalization 2.
pub fn shift_difference(n: usize) -> Result<BlockEnc> {
    let half = lcu(&[&cyclic_shift(n)?, &BlockEnc::identity(n)?], &[Sign::Plus, Sign::Minus])?;
    Ok(BlockEnc { op: half.op.scale(2.0), alpha: 2.0, eps: 2.0 * half.eps, ..half })
}

/// Chooses `scale_down` or `amplify` so that an encoding whose operator carries a spurious
/// factor `1 / natural_alpha` ends up normalized to `target_alpha`: the operator is
/// multiplied by `natural_alpha / target_alpha`.
pub fn normalize_subnormalization(
    e: &BlockEnc,
    natural_alpha: f64,
    target_alpha: f64,
    eps_amp: f64,
) -> Result<BlockEnc> {
    if !(natural_alpha > 0.0 && target_alpha > 0.0) {
        return Err(Error::InvalidParameter("subnormalizations must be positive".into()));
    }
    let factor = natural_alpha / target_alpha;
    if (factor - 1.0).abs() <= 1e-15 {
        Ok(e.clone())
    } else if factor < 1.0 {
        scale_down(e, 1.0 / factor)
    } else {
        let headroom = 1.0 - factor * e.op.spectral_norm() / e.alpha;
        if headroom <= 0.0 {
            return Err(Error::AmplificationPrecondition {
                max_sv: e.op.spectral_norm() / e.alpha,
                bound: 1.0 / factor,
            });
        }
        amplify(e, factor, headroom.min(0.25), eps_amp)
    }
}
