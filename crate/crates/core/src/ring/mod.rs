//! Ring topology mathematics: neighbour weights, ring ordering, the mixing
//! matrix spectrum and the retention schedule.

mod order;
mod schedule;
mod spectral;
mod weights;

pub use order::{cosine, has_improving_move, ring_cost, similarity_matrix, two_opt, RingOrder, TWO_OPT_TOL};
pub use schedule::GammaSchedule;
pub use spectral::{calibrated_retention, coverage_check, MixingMatrix, SpectralComparison, Spectrum};
pub use weights::{
    blend, blend_into, fib_weights, gate_and_interpolate, BlendWeights, FibWeights, GateConfig, GossipWeights, PHI,
};
