//! Camera-driven traversal: frustum culling, projected-size priority under a
//! point budget, load/unload planning, a payload cache and the queues that
//! connect the traverser to its consumer.

mod agent;
mod cache;
mod camera;
mod dispatch;
mod plan;

pub use agent::TraversalAgent;
pub use cache::{CacheEvent, LoadTicket, NodeCache, NodePayload, NodeReader, Residency, ResidencyKind};
pub use camera::{aabb_visible, extract_frustum, node_priority, CameraState, Frustum, Plane, ViewBasis};
pub use dispatch::{Action, Dispatcher, Mailbox};
pub use plan::{plan_traversal, select_nodes, Selected, TraversalConfig, TraversalPlan};
