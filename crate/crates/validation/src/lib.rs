//! Holds the long-running acceptance suite (`cargo test -p vista-validation
//! --test acceptance`). Kept apart from `vista-core` so its Monte Carlo
//! batches run after the core unit and integration tests.
