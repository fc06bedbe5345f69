//! Command-line tools and network service around the `knitpad` library:
//! single-sample classification, latency benchmarking, an HTTP API and a
//! websocket stream that turns pointer strokes into predictions.

pub mod bench;
pub mod classify;
pub mod cli;
pub mod server;
pub mod stream;

pub use bench::{bench_latency, BenchReport, MIN_TRIALS};
pub use classify::{ClassifyRequest, ClassifyResponse, Classifier, Latency, PointerEvent};
pub use server::{router, ModelInfo};
pub use stream::{ServerMessage, SessionConfig, StreamSession};
