//! Sparse weighted temporal fusion (SWTF) for video activity recognition.
//!
//! The crate is organised bottom-up:
//!
//! * [`dataio`] reads and writes snippet directories (binary PPM frames plus
//!   `annotations.json`), normalizes and resizes frames, augments snippets and
//!   generates the synthetic motion dataset.
//! * [`swtf`] plans segments, samples one frame per segment, estimates dense
//!   optical flow between consecutive samples and turns the weighted flow sum
//!   into a fusion map that is multiplied into every frame.
//! * [`roialign`] crops per-subject features from backbone feature maps.
//! * [`net`] holds the tensor substrate, every layer with its exact backward
//!   pass, and the small classifier built from them.
//! * [`optim`] is Adam with coupled L2 decay and the step schedule.
//! * [`pipeline`] ties everything into training, evaluation, checkpointing,
//!   visualization dumps, gradient checks and the flow-cost benchmark.

// Negated float comparisons are deliberate: they reject NaN.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::type_complexity
)]

pub mod dataio;
pub mod error;
pub mod net;
pub mod optim;
pub mod pipeline;
pub mod roialign;
pub mod swtf;
pub(crate) mod util;

pub use dataio::{BoundingBox, Frame, RawFrame, Snippet, SynthSpec};
pub use error::{Error, Result};
pub use net::{BaseNet, NetConfig, Scalar, Tensor};
pub use optim::{Adam, AdamConfig, LrSchedule};
pub use pipeline::{Checkpoint, MetricsReport, RunConfig};
pub use roialign::RoiConfig;
pub use swtf::{FlowField, FusionConfig, FusionMap, SampledIndices, SegmentPlan};
