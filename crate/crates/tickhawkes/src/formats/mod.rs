//! On-disk formats.

mod binary;
pub mod dataset;
pub mod events;
pub mod fit;
pub mod model;
pub mod quotes;

pub use dataset::{export_dataset_csv, load_dataset, save_dataset};
pub use events::{read_events, write_events, LoadedEvents};
pub use fit::{read_fit, write_fit, FitFile};
pub use model::{load_model, save_model};
pub use quotes::{read_prices, read_quotes, write_prices, write_quotes, QuoteStream, SkippedRecord};
