//! A data-fabric engine over a simulated distributed system.
//!
//! Datasets and metadata live as vertices of a directed hypergraph whose
//! hyperedges record integration, navigation, provenance and federated
//! relationships. Around that store the crate provides schema matching,
//! transformation algebra with information-loss accounting, metadata-driven
//! navigation, provenance tracing, policy evaluation with differential
//! privacy, data partitioning, a federated-learning simulator and a
//! deterministic replication simulator.
//!
//! Every heuristic ships with a brute-force counterpart usable at desk scale
//! so that results can be checked against an exact answer.

pub mod cli;
pub mod fedsim;
pub mod governance;
pub mod hypergraph;
pub mod linalg;
pub mod navigate;
pub mod partition;
pub mod provenance;
pub mod schema;
pub mod sim;
pub mod store;
pub mod transform;
pub mod vectorize;

pub use hypergraph::{EdgeId, EdgeLabel, Hyperedge, Hypergraph, Vertex, VertexId, VertexKind, VertexSet};
pub use schema::{Attribute, AttributeKind, AttributeMapping, Schema, SimilarityTable};

