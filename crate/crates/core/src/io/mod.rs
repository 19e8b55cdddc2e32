//! File formats and the external head wire protocol.

pub mod head_spec;
pub mod json;
pub mod npy;
pub mod protocol;

pub use head_spec::{build_head, load_head, HeadSpec, LayerSpec};
pub use json::{read_json, to_canonical_json, write_json};
pub use npy::{read_labels, read_matrix, read_npy, read_vector, write_labels, write_matrix, write_vector};
pub use protocol::{ExternalHead, HeadSession};
