//! Measurement layer: largest-eigenvalue estimation, amplitude estimation and the
//! overlap gadget. Estimators return the exact value perturbed by seeded noise bounded
//! by the configured accuracy, and charge the query cost of the corresponding
//! quantum routine to the ledger.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blockenc::{
    density_encode, lcu, log2_exact, scale_down, BlockEnc, Operator, ResourceLedger, Sign, StatePrep,
};
use crate::error::{Error, Result};

pub const EIGEN_QUERIES: &str = "eigenvalue_estimation_queries";
pub const AMPLITUDE_QUERIES: &str = "amplitude_estimation_queries";

/// Default threshold below which the top two eigenvalues count as degenerate.
pub const DEFAULT_GAP_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    Exact,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorConfig {
    pub eps: f64,
    pub seed: u64,
    pub noise: NoiseMode,
    pub gap_threshold: f64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl EstimatorConfig {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidParameter(format!("accuracy must lie in (0, 1), got {eps}")));
        }
        Ok(Self { eps, seed: 0, noise: NoiseMode::Exact, gap_threshold: DEFAULT_GAP_THRESHOLD })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise(mut self, noise: NoiseMode) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    /// Independent configuration for a numbered sub-estimate.
    pub fn fork(&self, stream: u64) -> Self {
        Self { seed: splitmix64(self.seed ^ splitmix64(stream)), ..*self }
    }

    /// Seeded draw from `[-eps, eps]`, or 0 in exact mode.
    pub fn noise_draw(&self) -> f64 {
        match self.noise {
            NoiseMode::Exact => 0.0,
            NoiseMode::Uniform => ChaCha8Rng::seed_from_u64(self.seed).random_range(-self.eps..=self.eps),
        }
    }
}

/// Result of largest-eigenvalue estimation.
#[derive(Debug, Clone)]
pub struct EigenEstimate {
    pub estimate: f64,
    pub exact: f64,
    /// Second largest eigenvalue (equal to `exact` for a 1x1 operator).
    pub second: f64,
    pub gap_flag: bool,
    pub ledger: ResourceLedger,
}

/// Number of uses of the input encoding: `ceil((1/eps)(log2 N + log2(1/eps)))`.
pub fn eigen_query_count(n: usize, eps: f64) -> u64 {
    let log_n = (n as f64).log2();
    ((1.0 / eps) * (log_n + (1.0 / eps).log2())).ceil() as u64
}

fn top_two(op: &Operator) -> Result<(f64, f64, f64)> {
    let ev = match op {
        Operator::Diagonal(d) => {
            let mut v = d.clone();
            v.sort_by(f64::total_cmp);
            v
        }
        _ => op.symmetric_eigenvalues()?,
    };
    let n = ev.len();
    let top = ev[n - 1];
    let second = if n > 1 { ev[n - 2] } else { top };
    Ok((ev[0], second, top))
}

/// Estimates the largest eigenvalue of the encoded positive-semidefinite operator
/// `op` to additive accuracy `cfg.eps`.
pub fn largest_eigenvalue(e: &BlockEnc, cfg: &EstimatorConfig) -> Result<EigenEstimate> {
    if !e.op().is_symmetric(1e-12) {
        return Err(Error::NotHermitian);
    }
    let (min, second, top) = top_two(e.op())?;
    if min < -(e.eps() + 1e-12) {
        return Err(Error::NotPositiveSemidefinite(min));
    }
    let uses = eigen_query_count(e.dim(), cfg.eps);
    let mut ledger = ResourceLedger::new();
    ledger.merge_scaled(e.ledger(), uses).record(EIGEN_QUERIES, uses);
    Ok(EigenEstimate {
        estimate: top + cfg.noise_draw(),
        exact: top,
        second,
        gap_flag: top - second < cfg.gap_threshold,
        ledger,
    })
}

/// Two-by-two diagonal encoding of `diag(w/4, -w/4)` with `w = ⟨Φ1, Φ2⟩`, obtained by
/// block-encoding the reduced state of the flag qubit and subtracting `I/2`.
pub fn overlap_gadget(p1: &StatePrep, p2: &StatePrep) -> Result<BlockEnc> {
    let state = StatePrep::overlap_state(p1, p2)?;
    log2_exact(state.dim())?;
    let rho = density_encode(&state, state.dim() / 2)?;
    let half = scale_down(&BlockEnc::identity(2)?, 2.0)?;
    lcu(&[&rho, &half], &[Sign::Plus, Sign::Minus])
}

#[derive(Debug, Clone)]
pub struct AmplitudeEstimate {
    pub estimate: f64,
    pub exact: f64,
    pub ledger: ResourceLedger,
}

/// Estimates the amplitude of the flagged `|0…0⟩` branch after applying the encoding's
/// unitary to `|0…0⟩`, i.e. the `(0, 0)` entry of `op / alpha`, using `ceil(1/eps)` uses.
pub fn amplitude_estimate(e: &BlockEnc, cfg: &EstimatorConfig) -> Result<AmplitudeEstimate> {
    let exact = e.op().entry(0, 0) / e.alpha();
    let uses = (1.0 / cfg.eps).ceil() as u64;
    let mut ledger = ResourceLedger::new();
    ledger.merge_scaled(e.ledger(), uses).record(AMPLITUDE_QUERIES, uses);
    Ok(AmplitudeEstimate { estimate: exact + cfg.noise_draw(), exact, ledger })
}
