//! Exact discrete information measures over finite alphabets. All values are in bits.

mod joint;
mod measures;
mod multi;

pub use joint::{Axis, Joint2, Joint3, Labels, SUM_TOL, ZERO_CELL};
pub use measures::{cond_mutual_info, entropy, mutual_info, CLIP_TOL};
pub use multi::JointN;
