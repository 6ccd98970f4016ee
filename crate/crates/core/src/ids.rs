use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$m:meta])* $name:ident, $inner:ty, $prefix:literal) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub $inner);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(
    /// A host or switch.
    NodeId, u32, "n"
);
id_type!(
    /// A directed link.
    LinkId, u32, "l"
);
id_type!(
    /// A transport-level flow as seen by switches. Multipath subflows get
    /// their own id; see [`FlowId::subflow`].
    FlowId, u64, "f"
);

impl FlowId {
    const SUBFLOW_BITS: u32 = 8;

    /// Id of subflow `k` of parent flow `parent`. Subflow 0 of a flow is the
    /// id used by single-path transfers.
    pub fn subflow(parent: u64, k: usize) -> FlowId {
        debug_assert!(k < (1 << Self::SUBFLOW_BITS));
        FlowId((parent << Self::SUBFLOW_BITS) | k as u64)
    }

    pub fn parent(self) -> u64 {
        self.0 >> Self::SUBFLOW_BITS
    }

    pub fn subflow_index(self) -> usize {
        (self.0 & ((1 << Self::SUBFLOW_BITS) - 1)) as usize
    }
}
