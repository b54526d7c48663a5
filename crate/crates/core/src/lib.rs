//! Heartbeat-based symmetric key generation.
//!
//! Two devices worn on the same body observe the same heartbeat through
//! noisy piezo-style sensors and derive a shared 256-bit key from it:
//!
//! 1. [`signalgen`] — synthetic heartbeat traces with ground truth;
//! 2. [`ipi`] — smoothing, peak detection, interval extraction;
//! 3. [`quantizer`] — quantile quantization into Gray-coded bits;
//! 4. [`reconcile`] — compressive-sensing correction of bit mismatches,
//!    with a Reed-Solomon code-offset baseline;
//! 5. [`protocol`] — the authenticated pairing session;
//! 6. [`analysis`] — attack simulations, benchmarks, and randomness tests.

pub mod analysis;
pub mod ipi;
pub mod protocol;
pub mod quantizer;
pub mod reconcile;
pub mod rng;
pub mod signalgen;
pub mod stats;
