//! On-disk formats. Every binary format is little-endian and starts with a
//! four-byte magic and a `u16` version.

mod bin;
pub mod features;
pub mod models;
pub mod predictions;
pub mod text;

pub use features::{decode_features, encode_features, load_features, save_features};
pub use models::{
    decode_deeplda, decode_forest, decode_regression, encode_deeplda, encode_forest, encode_regression, Artifact,
};
pub use predictions::{format_predictions, format_report_csv, format_report_table, parse_predictions};
pub use text::{format_relevance, format_split, load_relevance, load_split, parse_relevance, parse_split};
pub use text::{save_relevance, save_split};

pub(crate) use bin::{read_file, write_file};
