//! The assembled fabric: datasets, metadata, hypergraph, transformations,
//! policies and the node system, with the four well-formedness conditions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::governance::{evaluate_request, Decision, Policy, PolicyError, Scope, UserContext};
use crate::hypergraph::{EdgeId, EdgeLabel, GraphError, Hyperedge, Hypergraph, Vertex, VertexId, VertexKind};
use crate::navigate::{self, HyperPath, NavError, RecordSource, StepWeight};
use crate::partition::{CostModel, NodeId, PartitionError};
use crate::provenance::{self, HistoryEntry, MetadataRecord, ProvenanceError, Trace};
use crate::schema::SimilarityTable;
use crate::sim::{all_pairs_shortest, LinkMatrix, NodeSpec, SimError, Simulator};
use crate::transform::{self, DiscreteDataset, Integration, TransformError, Transformation, Value};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("name `{0}` is used twice")]
    DuplicateName(String),
    #[error("`{0}` is not a dataset")]
    NotDataset(String),
    #[error("`{0}` is not a metadata vertex")]
    NotMetadata(String),
    #[error("transformation `{0}` is not registered")]
    UnknownTransformation(String),
    #[error("mutation rejected: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Rejected(Vec<Violation>),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Provenance(#[from] ProvenanceError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Nav(#[from] NavError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Consistency,
    Connectivity,
    Compliance,
    Distributivity,
}

impl Condition {
    pub fn numeral(self) -> &'static str {
        match self {
            Condition::Consistency => "i",
            Condition::Connectivity => "ii",
            Condition::Compliance => "iii",
            Condition::Distributivity => "iv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub condition: Condition,
    pub element: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}) {:?} `{}`: {}",
            self.condition.numeral(),
            self.condition,
            self.element,
            self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
struct DatasetEntry {
    data: DiscreteDataset,
    properties: BTreeMap<String, Value>,
    compute: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct EdgeSpec {
    name: String,
    tail: Vec<String>,
    head: Vec<String>,
    label: EdgeLabel,
    weight: f64,
    realizes: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
struct MetaSpec {
    dataset: String,
    attrs: BTreeSet<String>,
    history: Vec<HistoryEntry>,
}

/// Collects named fabric elements; [`build`](Self::build) resolves names
/// and checks referential integrity.
#[derive(Debug, Clone, Default)]
pub struct FabricBuilder {
    vertices: Vec<(String, VertexKind)>,
    datasets: BTreeMap<String, DatasetEntry>,
    metadata: BTreeMap<String, MetaSpec>,
    edges: Vec<EdgeSpec>,
    transformations: BTreeMap<String, Transformation>,
    policies: Vec<Policy>,
    similarity: SimilarityTable,
    nodes: Vec<(String, Vec<String>)>,
    links: Vec<(String, String, f64)>,
    analytics: BTreeMap<String, f64>,
}

impl FabricBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn add_vertex(&mut self, name: &str, kind: VertexKind) -> Result<(), StoreError> {
        if self.vertices.iter().any(|(n, _)| n == name) {
            return Err(StoreError::DuplicateName(name.to_owned()));
        }
        self.vertices.push((name.to_owned(), kind));
        Ok(())
    }

    pub fn dataset(&mut self, name: &str, data: DiscreteDataset) -> Result<&mut Self, StoreError> {
        self.dataset_with(name, data, BTreeMap::new(), None)
    }

    /// A dataset with request-level properties and an explicit compute cost
    /// (default: its record count).
    pub fn dataset_with(
        &mut self,
        name: &str,
        data: DiscreteDataset,
        properties: BTreeMap<String, Value>,
        compute: Option<f64>,
    ) -> Result<&mut Self, StoreError> {
        self.add_vertex(name, VertexKind::Dataset)?;
        self.datasets.insert(
            name.to_owned(),
            DatasetEntry {
                data,
                properties,
                compute,
            },
        );
        Ok(self)
    }

    pub fn model(&mut self, name: &str) -> Result<&mut Self, StoreError> {
        self.add_vertex(name, VertexKind::Model)?;
        Ok(self)
    }

    pub fn metadata(
        &mut self,
        name: &str,
        dataset: &str,
        attrs: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<&mut Self, StoreError> {
        self.add_vertex(name, VertexKind::Metadata)?;
        self.metadata.insert(
            name.to_owned(),
            MetaSpec {
                dataset: dataset.to_owned(),
                attrs: attrs.into_iter().map(Into::into).collect(),
                history: Vec::new(),
            },
        );
        Ok(self)
    }

    /// Appends a history entry without checking registration; `validate`
    /// reports unregistered ids.
    pub fn history(&mut self, meta: &str, transform_id: &str, at: f64) -> Result<&mut Self, StoreError> {
        let m = self
            .metadata
            .get_mut(meta)
            .ok_or_else(|| StoreError::NotMetadata(meta.to_owned()))?;
        m.history.push(HistoryEntry {
            transform_id: transform_id.to_owned(),
            applied_at: at,
        });
        Ok(self)
    }

    pub fn edge(
        &mut self,
        name: &str,
        tail: &[&str],
        head: &[&str],
        label: EdgeLabel,
        weight: f64,
    ) -> Result<&mut Self, StoreError> {
        self.edge_realizing(name, tail, head, label, weight, None)
    }

    /// An edge that realizes the named transformation in the graph.
    pub fn edge_realizing(
        &mut self,
        name: &str,
        tail: &[&str],
        head: &[&str],
        label: EdgeLabel,
        weight: f64,
        realizes: Option<&str>,
    ) -> Result<&mut Self, StoreError> {
        if self.edges.iter().any(|e| e.name == name) {
            return Err(StoreError::DuplicateName(name.to_owned()));
        }
        let own = |xs: &[&str]| xs.iter().map(|s| (*s).to_owned()).collect();
        self.edges.push(EdgeSpec {
            name: name.to_owned(),
            tail: own(tail),
            head: own(head),
            label,
            weight,
            realizes: realizes.map(str::to_owned),
        });
        Ok(self)
    }

    pub fn transformation(&mut self, t: Transformation) -> Result<&mut Self, StoreError> {
        if self.transformations.contains_key(&t.id) {
            return Err(StoreError::DuplicateName(t.id.clone()));
        }
        self.transformations.insert(t.id.clone(), t);
        Ok(self)
    }

    pub fn policy(&mut self, p: Policy) -> Result<&mut Self, StoreError> {
        if self.policies.iter().any(|q| q.id == p.id) {
            return Err(StoreError::DuplicateName(p.id));
        }
        self.policies.push(p);
        Ok(self)
    }

    pub fn similarity(&mut self, table: SimilarityTable) -> &mut Self {
        self.similarity = table;
        self
    }

    pub fn node(&mut self, name: &str, hosted: &[&str]) -> Result<&mut Self, StoreError> {
        if self.nodes.iter().any(|(n, _)| n == name) {
            return Err(StoreError::DuplicateName(name.to_owned()));
        }
        self.nodes.push((name.to_owned(), hosted.iter().map(|s| (*s).to_owned()).collect()));
        Ok(self)
    }

    pub fn link(&mut self, a: &str, b: &str, weight: f64) -> &mut Self {
        self.links.push((a.to_owned(), b.to_owned(), weight));
        self
    }

    /// Analytics load placed on a node.
    pub fn analytics(&mut self, node: &str, cost: f64) -> &mut Self {
        self.analytics.insert(node.to_owned(), cost);
        self
    }

    /// Applies a registered transformation to `source`, adding the derived
    /// dataset, its metadata with the application recorded, and a
    /// provenance edge `({source, meta}, {derived})` realizing it. The
    /// derived dataset is hosted wherever `source` is.
    pub fn derive(&mut self, source: &str, transform_id: &str, derived: &str, meta: &str, at: f64) -> Result<&mut Self, StoreError> {
        let t = self
            .transformations
            .get(transform_id)
            .ok_or_else(|| StoreError::UnknownTransformation(transform_id.to_owned()))?;
        let src = self
            .datasets
            .get(source)
            .ok_or_else(|| StoreError::NotDataset(source.to_owned()))?;
        let data = t.apply(&src.data)?;
        self.dataset(derived, data)?;
        self.metadata(meta, derived, std::iter::empty::<String>())?;
        self.history(meta, transform_id, at)?;
        let name = format!("derive:{derived}");
        self.edge_realizing(&name, &[source, meta], &[derived], EdgeLabel::Provenance, 1.0, Some(transform_id))?;
        for (_, hosted) in self.nodes.iter_mut() {
            if hosted.iter().any(|h| h == source) {
                hosted.push(derived.to_owned());
            }
        }
        Ok(self)
    }

    /// Registers `second ∘ first` if needed and records it on `meta`.
    pub fn record_composite(&mut self, meta: &str, first: &str, second: &str, at: f64) -> Result<&mut Self, StoreError> {
        let get = |id: &str| {
            self.transformations
                .get(id)
                .ok_or_else(|| StoreError::UnknownTransformation(id.to_owned()))
        };
        let c = transform::compose(get(first)?, get(second)?)?;
        let id = c.id.clone();
        self.transformations.entry(id.clone()).or_insert(c);
        self.history(meta, &id, at)
    }

    pub fn build(&self) -> Result<Fabric, StoreError> {
        let index: BTreeMap<&str, VertexId> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, (n, _))| (n.as_str(), VertexId(i)))
            .collect();
        let resolve = |name: &str| index.get(name).copied().ok_or_else(|| StoreError::UnknownName(name.to_owned()));
        let names: Vec<(&str, VertexKind)> = self.vertices.iter().map(|(n, k)| (n.as_str(), *k)).collect();
        let vertices: Vec<Vertex> = Hypergraph::vertices_from(&names);

        let mut edges = Vec::with_capacity(self.edges.len());
        let mut edge_names = Vec::with_capacity(self.edges.len());
        let mut realizes = BTreeMap::new();
        for (i, e) in self.edges.iter().enumerate() {
            let tail = e.tail.iter().map(|n| resolve(n)).collect::<Result<Vec<_>, _>>()?;
            let head = e.head.iter().map(|n| resolve(n)).collect::<Result<Vec<_>, _>>()?;
            edges.push(Hyperedge::new(i, tail, head, e.label, e.weight));
            edge_names.push(e.name.clone());
            if let Some(t) = &e.realizes {
                realizes.insert(EdgeId(i), t.clone());
            }
        }
        let graph = Hypergraph::construct(vertices, edges, false)?;

        let dataset_id = |name: &str| -> Result<VertexId, StoreError> {
            let v = resolve(name)?;
            if self.datasets.contains_key(name) {
                Ok(v)
            } else {
                Err(StoreError::NotDataset(name.to_owned()))
            }
        };
        let mut datasets = BTreeMap::new();
        for (name, entry) in &self.datasets {
            datasets.insert(resolve(name)?, entry.clone());
        }
        let mut metadata = BTreeMap::new();
        for (name, m) in &self.metadata {
            let mut rec = MetadataRecord::new(dataset_id(&m.dataset)?, m.attrs.iter().cloned());
            rec.history = m.history.clone();
            metadata.insert(resolve(name)?, rec);
        }
        let mut nodes = Vec::with_capacity(self.nodes.len());
        let mut node_names = Vec::with_capacity(self.nodes.len());
        for (i, (name, hosted)) in self.nodes.iter().enumerate() {
            nodes.push(NodeSpec {
                id: i,
                hosted: hosted.iter().map(|h| dataset_id(h)).collect::<Result<_, _>>()?,
                up: true,
            });
            node_names.push(name.clone());
        }
        let node_id = |name: &str| {
            node_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| StoreError::UnknownName(name.to_owned()))
        };
        let mut link_list = Vec::with_capacity(self.links.len());
        for (a, b, w) in &self.links {
            link_list.push((node_id(a)?, node_id(b)?, *w));
        }
        let links = LinkMatrix::from_links(nodes.len(), &link_list)?;
        let mut analytics = BTreeMap::new();
        for (n, &c) in &self.analytics {
            analytics.insert(node_id(n)?, c);
        }
        for t in realizes.values() {
            if !self.transformations.contains_key(t) {
                return Err(StoreError::UnknownTransformation(t.clone()));
            }
        }
        Ok(Fabric {
            graph,
            edge_names,
            realizes,
            datasets,
            metadata,
            transformations: self.transformations.clone(),
            policies: self.policies.clone(),
            similarity: self.similarity.clone(),
            nodes,
            node_names,
            links,
            analytics,
            builder: self.clone(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Fabric {
    graph: Hypergraph,
    edge_names: Vec<String>,
    realizes: BTreeMap<EdgeId, String>,
    datasets: BTreeMap<VertexId, DatasetEntry>,
    metadata: BTreeMap<VertexId, MetadataRecord>,
    transformations: BTreeMap<String, Transformation>,
    policies: Vec<Policy>,
    similarity: SimilarityTable,
    nodes: Vec<NodeSpec>,
    node_names: Vec<String>,
    links: LinkMatrix,
    analytics: BTreeMap<NodeId, f64>,
    builder: FabricBuilder,
}

impl RecordSource for Fabric {
    fn dataset(&self, v: VertexId) -> Option<&DiscreteDataset> {
        self.datasets.get(&v).map(|e| &e.data)
    }
}

impl Fabric {
    pub fn builder() -> FabricBuilder {
        FabricBuilder::new()
    }

    pub fn graph(&self) -> &Hypergraph {
        &self.graph
    }

    pub fn vertex_id(&self, name: &str) -> Result<VertexId, StoreError> {
        self.graph
            .vertex_by_name(name)
            .ok_or_else(|| StoreError::UnknownName(name.to_owned()))
    }

    pub fn name_of(&self, v: VertexId) -> &str {
        self.graph.vertex(v).map_or("?", |x| x.name.as_str())
    }

    pub fn edge_name(&self, e: EdgeId) -> &str {
        self.edge_names.get(e.0).map_or("?", String::as_str)
    }

    pub fn dataset_named(&self, name: &str) -> Result<&DiscreteDataset, StoreError> {
        let v = self.vertex_id(name)?;
        self.dataset(v).ok_or_else(|| StoreError::NotDataset(name.to_owned()))
    }

    pub fn dataset_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.datasets.keys().copied()
    }

    /// Metadata records keyed by their metadata vertex.
    pub fn metadata(&self) -> &BTreeMap<VertexId, MetadataRecord> {
        &self.metadata
    }

    pub fn metadata_records(&self) -> Vec<MetadataRecord> {
        self.metadata.values().cloned().collect()
    }

    pub fn transformations(&self) -> &BTreeMap<String, Transformation> {
        &self.transformations
    }

    pub fn policies(&self) -> &[Policy] {
        &self.policies
    }

    pub fn similarity(&self) -> &SimilarityTable {
        &self.similarity
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn node_names(&self) -> &[String] {
        &self.node_names
    }

    pub fn links(&self) -> &LinkMatrix {
        &self.links
    }

    /// Transformation realized by each edge that declares one.
    pub fn realizations(&self) -> &BTreeMap<EdgeId, String> {
        &self.realizes
    }

    /// Attribute names per vertex: the schema for datasets, the attribute
    /// set for metadata, empty for models.
    pub fn attribute_sets(&self) -> Vec<BTreeSet<String>> {
        self.graph
            .vertices()
            .iter()
            .map(|v| {
                if let Some(d) = self.datasets.get(&v.id) {
                    d.data.schema().names().map(str::to_owned).collect()
                } else if let Some(m) = self.metadata.get(&v.id) {
                    m.attrs.clone()
                } else {
                    BTreeSet::new()
                }
            })
            .collect()
    }

    /// Request-level properties of a dataset plus its `name`.
    pub fn request_data(&self, v: VertexId) -> Result<BTreeMap<String, Value>, StoreError> {
        let entry = self
            .datasets
            .get(&v)
            .ok_or_else(|| StoreError::NotDataset(self.name_of(v).to_owned()))?;
        let mut data = entry.properties.clone();
        data.insert("name".into(), Value::Cat(self.name_of(v).to_owned()));
        Ok(data)
    }

    /// Conditions (i)–(iv), with connectivity checked in the undirected
    /// expansion.
    pub fn validate(&self) -> Vec<Violation> {
        self.validate_with(false)
    }

    /// With `strict`, connectivity requires a directed path from some
    /// metadata vertex to each dataset.
    pub fn validate_with(&self, strict: bool) -> Vec<Violation> {
        let mut out = Vec::new();
        let violation = |condition, element: &str, detail: String| Violation {
            condition,
            element: element.to_owned(),
            detail,
        };

        for (&mv, m) in &self.metadata {
            if let Err(e) = m.check(&self.transformations) {
                out.push(violation(Condition::Consistency, self.name_of(mv), e.to_string()));
            }
        }
        for (e, t) in &self.realizes {
            if !self.transformations.contains_key(t) {
                out.push(violation(Condition::Consistency, self.edge_name(*e), format!("realizes unregistered `{t}`")));
            }
        }

        let mut reached = BTreeSet::new();
        for v in self.graph.vertices().iter().filter(|v| v.kind == VertexKind::Metadata) {
            if strict {
                reached.extend(self.graph.directed_reach(v.id));
            } else {
                reached.extend(self.graph.undirected_reach(v.id));
            }
        }
        for &d in self.datasets.keys() {
            if !reached.contains(&d) {
                let how = if strict { "directed" } else { "undirected" };
                out.push(violation(Condition::Connectivity, self.name_of(d), format!("no {how} path from any metadata vertex")));
            }
        }

        let mut known: BTreeSet<&str> = BTreeSet::from(["name"]);
        for e in self.datasets.values() {
            known.extend(e.properties.keys().map(String::as_str));
        }
        for p in &self.policies {
            for f in p.predicate.fields() {
                if f.scope == Scope::Data && !known.contains(f.name.as_str()) {
                    out.push(violation(
                        Condition::Compliance,
                        &p.id,
                        format!("`data.{}` is not a property of any dataset", f.name),
                    ));
                }
            }
        }

        let hosted: BTreeSet<VertexId> = self.nodes.iter().flat_map(|n| n.hosted.iter().copied()).collect();
        for &d in self.datasets.keys() {
            if !hosted.contains(&d) {
                out.push(violation(Condition::Distributivity, self.name_of(d), "hosted on no node".into()));
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// For every composite transformation recorded on a dataset's metadata,
    /// checks that edges realizing its components form a hyperpath ending at
    /// that dataset, each head meeting the next tail.
    pub fn functorial_consistency(&self) -> bool {
        let by_transform = |id: &str| -> Vec<&Hyperedge> {
            self.realizes
                .iter()
                .filter(|(_, t)| t.as_str() == id)
                .filter_map(|(e, _)| self.graph.edge(*e))
                .collect()
        };
        for m in self.metadata.values() {
            for h in &m.history {
                let Some(t) = self.transformations.get(&h.transform_id) else {
                    return false;
                };
                let parts = t.components();
                if parts.len() < 2 {
                    continue;
                }
                let mut frontier: Vec<&Hyperedge> = by_transform(parts[parts.len() - 1])
                    .into_iter()
                    .filter(|e| e.head.contains(&m.dataset_ref))
                    .collect();
                for c in parts[..parts.len() - 1].iter().rev() {
                    frontier = by_transform(c)
                        .into_iter()
                        .filter(|e| frontier.iter().any(|next| e.head.iter().any(|v| next.tail.contains(v))))
                        .collect();
                }
                if frontier.is_empty() {
                    return false;
                }
            }
        }
        true
    }

    pub fn trace(&self, dataset: &str) -> Result<Trace, StoreError> {
        let v = self.vertex_id(dataset)?;
        Ok(provenance::trace(v, &self.metadata_records(), &self.graph, &self.transformations)?)
    }

    pub fn navigate<W: StepWeight + ?Sized>(&self, from: &str, to: &str, w: &W) -> Result<Option<HyperPath>, StoreError> {
        let (s, t) = (self.vertex_id(from)?, self.vertex_id(to)?);
        Ok(navigate::shortest_path(&self.graph, s, t, w)?)
    }

    pub fn evaluate(&self, dataset: &str, user: &UserContext) -> Result<Decision, StoreError> {
        let data = self.request_data(self.vertex_id(dataset)?)?;
        Ok(evaluate_request(&data, user, &self.policies)?)
    }

    /// Partition cost model: compute per dataset, communication from shared
    /// hyperedges, link latency from shortest node distances, analytics per
    /// node.
    pub fn cost_model(&self) -> Result<CostModel, StoreError> {
        let compute = self
            .datasets
            .iter()
            .map(|(&v, e)| (v, e.compute.unwrap_or(e.data.len() as f64)))
            .collect();
        let mut m = CostModel::from_hypergraph(&self.graph, compute)?;
        if !self.links.is_empty() {
            let d = all_pairs_shortest(&self.links);
            if d.iter().flatten().all(|x| x.is_finite()) {
                m = m.with_link(d)?;
            }
        }
        for (&n, &c) in &self.analytics {
            m = m.with_analytics(n, c)?;
        }
        Ok(m)
    }

    pub fn simulator(&self, gossip_period: u64, seed: u64) -> Result<Simulator, StoreError> {
        Ok(Simulator::new(self.nodes.clone(), self.links.clone(), gossip_period, seed)?)
    }

    fn commit(&mut self, next: FabricBuilder) -> Result<(), StoreError> {
        let candidate = next.build()?;
        let violations = candidate.validate();
        if !violations.is_empty() {
            return Err(StoreError::Rejected(violations));
        }
        *self = candidate;
        Ok(())
    }

    /// Records an application of a registered transformation; rejected if
    /// the result would not validate.
    pub fn record(&mut self, meta: &str, transform_id: &str, at: f64) -> Result<(), StoreError> {
        let mv = self.vertex_id(meta)?;
        let m = self.metadata.get(&mv).ok_or_else(|| StoreError::NotMetadata(meta.to_owned()))?;
        let t = self
            .transformations
            .get(transform_id)
            .ok_or_else(|| StoreError::UnknownTransformation(transform_id.to_owned()))?;
        provenance::record(m, t, at, &self.transformations)?;
        let mut next = self.builder.clone();
        next.history(meta, transform_id, at)?;
        self.commit(next)
    }

    pub fn register(&mut self, t: Transformation) -> Result<(), StoreError> {
        let mut next = self.builder.clone();
        next.transformation(t)?;
        self.commit(next)
    }

    pub fn add_policy(&mut self, p: Policy) -> Result<(), StoreError> {
        let mut next = self.builder.clone();
        next.policy(p)?;
        self.commit(next)
    }

    /// Integrates `right` into `left` and stores the unified dataset as
    /// `into`, with metadata `meta` recording the chosen transformation at
    /// `at` and an integration edge `({left, right, meta}, {into})`. The
    /// unified dataset is hosted wherever `left` is.
    pub fn integrate(
        &mut self,
        left: &str,
        right: &str,
        into: &str,
        meta: &str,
        at: f64,
        lambda: f64,
        theta: f64,
    ) -> Result<Integration, StoreError> {
        let result = self.integration(left, right, lambda, theta)?;
        let mut next = self.builder.clone();
        next.dataset(into, result.unified.clone())?;
        next.metadata(meta, into, result.unified.schema().names().map(str::to_owned))?;
        next.history(meta, &result.transformation.id, at)?;
        next.edge(&format!("integrate:{into}"), &[left, right, meta], &[into], EdgeLabel::Integration, 1.0)?;
        for (_, hosted) in next.nodes.iter_mut() {
            if hosted.iter().any(|h| h == left) {
                hosted.push(into.to_owned());
            }
        }
        self.commit(next)?;
        Ok(result)
    }

    /// The integration of `right` into `left` without storing it.
    pub fn integration(&self, left: &str, right: &str, lambda: f64, theta: f64) -> Result<Integration, StoreError> {
        let di = self.dataset_named(left)?;
        let dj = self.dataset_named(right)?;
        let candidates: Vec<Transformation> = self.transformations.values().cloned().collect();
        Ok(transform::integrate(di, dj, &candidates, &self.similarity, lambda, theta)?)
    }
}
