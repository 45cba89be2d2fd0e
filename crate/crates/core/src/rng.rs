//! Seeded randomness.
//!
//! Two flavours are used. Problem generation draws sequentially from a
//! ChaCha8 stream keyed by `(seed, stream)`. Oracle noise is counter based:
//! every scalar is drawn from its own ChaCha8 instance keyed by its
//! [`TapePosition`], so any entry can be replayed in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::math;

/// Stream identifiers, one per independent use of a seed.
pub mod streams {
    pub const QUADRATIC_BASIS: u64 = 1;
    pub const QUADRATIC_MINIMIZER: u64 = 2;
    pub const LOGISTIC_FEATURES: u64 = 3;
    pub const LOGISTIC_TRUTH: u64 = 4;
    pub const LOGISTIC_LABELS: u64 = 5;
    pub const INITIAL_POINT: u64 = 6;
    pub const BIAS_DIRECTION: u64 = 7;
    pub const GRADIENT_NOISE: u64 = 8;
    pub const FUNCTION_NOISE: u64 = 9;
    pub const POWER_START: u64 = 10;
}

/// Address of one scalar draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TapePosition {
    pub seed: u64,
    pub stream: u64,
    pub index: u64,
    pub component: u64,
}

impl TapePosition {
    pub fn new(seed: u64, stream: u64, index: u64, component: u64) -> Self {
        TapePosition {
            seed,
            stream,
            index,
            component,
        }
    }

    fn key(&self) -> [u8; 32] {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.stream.to_le_bytes());
        key[16..24].copy_from_slice(&self.index.to_le_bytes());
        key[24..32].copy_from_slice(&self.component.to_le_bytes());
        key
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key())
    }
}

/// Sequential generator for `(seed, stream)`.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    TapePosition::new(seed, stream, u64::MAX, u64::MAX).rng()
}

pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Student-t draw with `dof` degrees of freedom at `pos`, as `Z / sqrt(V / k)`.
///
/// Panics if `dof` is not positive and finite; callers validate it first.
pub fn sample_student_t(pos: TapePosition, dof: f64) -> f64 {
    let mut rng = pos.rng();
    let z: f64 = StandardNormal.sample(&mut rng);
    let chi = ChiSquared::new(dof).expect("degrees of freedom must be positive");
    let v: f64 = chi.sample(&mut rng);
    z / math::sqrt(v / dof)
}
