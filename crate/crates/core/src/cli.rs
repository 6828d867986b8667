//! Command-line front end and the fabric description file.
//!
//! [`dispatch`] never prints; it returns the exit status and both output
//! streams so the binary and the tests share one code path.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::fedsim::{self, LocalShard};
use crate::governance::{dp_aggregate, Aggregate, Policy, UserContext};
use crate::hypergraph::EdgeLabel;
use crate::navigate::{resolve_query, EdgeWeight, HyperPath, Query, SimilarityWeight, StepWeight, UnitWeight};
use crate::partition::{self, Assignment, CostModel};
use crate::schema::{self, Attribute, AttributeKind, Schema, SimilarityTable};
use crate::sim::{self, Mode};
use crate::store::{Fabric, FabricBuilder, StoreError};
use crate::transform::{self, CostClass, DiscreteDataset, Step, Transformation, Value};

/// Status for success.
pub const EXIT_OK: i32 = 0;
/// Status for a domain outcome such as no path, a denial or violations.
pub const EXIT_DOMAIN: i32 = 1;
/// Status for unreadable or inconsistent input.
pub const EXIT_INPUT: i32 = 2;

// ---------------------------------------------------------------- file --

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FabricFile {
    #[serde(default)]
    pub similarity: SimilaritySection,
    #[serde(default)]
    pub datasets: Vec<DatasetDecl>,
    #[serde(default)]
    pub models: Vec<String>,
    #[serde(default)]
    pub metadata: Vec<MetadataDecl>,
    #[serde(default)]
    pub transformations: Vec<TransformationDecl>,
    #[serde(default)]
    pub hyperedges: Vec<EdgeDecl>,
    #[serde(default)]
    pub policies: Vec<PolicyDecl>,
    #[serde(default)]
    pub nodes: Vec<NodeDecl>,
    #[serde(default)]
    pub links: Vec<LinkDecl>,
    pub fedsim: Option<FedsimSection>,
    pub simulate: Option<SimulateSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilaritySection {
    #[serde(default)]
    pub default_sim: f64,
    #[serde(default = "one")]
    pub default_weight: f64,
    #[serde(default)]
    pub pairs: Vec<SimPair>,
    #[serde(default)]
    pub weights: Vec<WeightPair>,
}

impl Default for SimilaritySection {
    fn default() -> Self {
        Self {
            default_sim: 0.0,
            default_weight: 1.0,
            pairs: Vec::new(),
            weights: Vec::new(),
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimPair {
    pub a: String,
    pub b: String,
    pub sim: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightPair {
    pub a: String,
    pub b: String,
    pub weight: f64,
}

/// `"name"` (numeric), `"name:kind"`, or `{ name, kind }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrDecl {
    Short(String),
    Full { name: String, kind: AttributeKind },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetDecl {
    pub name: String,
    pub schema: Vec<AttrDecl>,
    #[serde(default)]
    pub records: Vec<Vec<Value>>,
    #[serde(default)]
    pub binning: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub properties: BTreeMap<String, Value>,
    pub compute: Option<f64>,
}

/// A timestamp: a nonnegative number or a `YYYY-MM-DD` date, read as days
/// since 1970-01-01.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Stamp {
    Number(f64),
    Date(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryDecl {
    pub transform: String,
    pub at: Stamp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetadataDecl {
    pub name: String,
    pub dataset: String,
    #[serde(default)]
    pub attrs: Vec<String>,
    #[serde(default)]
    pub history: Vec<HistoryDecl>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformationDecl {
    pub id: String,
    /// Dataset whose schema is the source domain.
    pub source: Option<String>,
    /// Explicit source domain, used when `source` is absent.
    pub schema: Option<Vec<AttrDecl>>,
    #[serde(default)]
    pub steps: Vec<Step>,
    /// Ids of earlier transformations, first applied first.
    pub compose: Option<Vec<String>>,
    #[serde(default = "linear")]
    pub cost: CostClass,
}

fn linear() -> CostClass {
    CostClass::Linear
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDecl {
    pub name: String,
    pub tail: Vec<String>,
    pub head: Vec<String>,
    pub label: EdgeLabel,
    #[serde(default = "one")]
    pub weight: f64,
    pub realizes: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDecl {
    pub id: String,
    pub predicate: String,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDecl {
    pub name: String,
    #[serde(default)]
    pub hosted: Vec<String>,
    pub analytics: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDecl {
    pub a: String,
    pub b: String,
    #[serde(default = "one")]
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedsimSection {
    /// Datasets used as client shards.
    pub shards: Vec<String>,
    pub features: Vec<String>,
    pub target: String,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "one_usize")]
    pub local_steps: usize,
    /// Defaults to the largest admissible rate.
    pub eta: Option<f64>,
}

fn default_rounds() -> usize {
    100
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default = "one_u64")]
    pub gossip_period: u64,
    #[serde(default = "async_mode")]
    pub mode: Mode,
    /// Defaults to hop diameter × largest link weight + gossip period.
    pub bound: Option<f64>,
    #[serde(default)]
    pub script: String,
}

fn one_u64() -> u64 {
    1
}

fn async_mode() -> Mode {
    Mode::AsyncGossip
}

/// Input problem with the place it was found.
#[derive(Debug, Clone, PartialEq)]
pub struct InputError {
    pub location: String,
    pub message: String,
}

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl std::error::Error for InputError {}

fn at(location: impl Into<String>) -> impl Fn(&dyn std::fmt::Display) -> InputError {
    let location = location.into();
    move |e| InputError {
        location: location.clone(),
        message: e.to_string(),
    }
}

/// Days from 1970-01-01 to a proleptic Gregorian date.
fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn parse_date(s: &str) -> Option<f64> {
    let mut it = s.splitn(3, '-');
    let y: i64 = it.next()?.parse().ok()?;
    let m: i64 = it.next()?.parse().ok()?;
    let d: i64 = it.next()?.parse().ok()?;
    let days_in = [31, if y % 4 == 0 && (y % 100 != 0 || y % 400 == 0) { 29 } else { 28 }, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
    if !(1..=12).contains(&m) || d < 1 || d > days_in[(m - 1) as usize] {
        return None;
    }
    Some(days_from_civil(y, m, d) as f64)
}

impl Stamp {
    pub fn value(&self) -> Option<f64> {
        match self {
            Stamp::Number(x) => Some(*x),
            Stamp::Date(s) => parse_date(s),
        }
    }
}

fn attribute(decl: &AttrDecl) -> Result<Attribute, String> {
    let (name, kind) = match decl {
        AttrDecl::Full { name, kind } => (name.clone(), *kind),
        AttrDecl::Short(s) => match s.split_once(':') {
            None => (s.clone(), AttributeKind::Numeric),
            Some((n, k)) => {
                let kind = match k {
                    "numeric" => AttributeKind::Numeric,
                    "categorical" => AttributeKind::Categorical,
                    "temporal" => AttributeKind::Temporal,
                    "text" => AttributeKind::Text,
                    other => return Err(format!("unknown attribute kind `{other}`")),
                };
                (n.to_owned(), kind)
            }
        },
    };
    Attribute::new(name, kind).map_err(|e| e.to_string())
}

fn schema_of(decls: &[AttrDecl], location: &str) -> Result<Schema, InputError> {
    let attrs = decls
        .iter()
        .enumerate()
        .map(|(i, d)| attribute(d).map_err(|m| at(format!("{location}[{i}]"))(&m)))
        .collect::<Result<Vec<_>, _>>()?;
    Schema::new(attrs).map_err(|e| at(location)(&e))
}

impl FabricFile {
    pub fn parse(text: &str) -> Result<Self, InputError> {
        toml::from_str(text).map_err(|e| {
            let location = match e.span() {
                Some(span) => {
                    let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                    format!("line {line}")
                }
                None => "fabric file".to_owned(),
            };
            InputError {
                location,
                message: e.message().to_owned(),
            }
        })
    }

    pub fn similarity_table(&self) -> Result<SimilarityTable, InputError> {
        let s = &self.similarity;
        let mut t = SimilarityTable::with_defaults(s.default_sim, s.default_weight).map_err(|e| at("similarity")(&e))?;
        for (i, p) in s.pairs.iter().enumerate() {
            t.set_sim(&p.a, &p.b, p.sim).map_err(|e| at(format!("similarity.pairs[{i}]"))(&e))?;
        }
        for (i, p) in s.weights.iter().enumerate() {
            t.set_weight(&p.a, &p.b, p.weight)
                .map_err(|e| at(format!("similarity.weights[{i}]"))(&e))?;
        }
        Ok(t)
    }

    /// Assembles the fabric, checking references across sections.
    pub fn to_fabric(&self) -> Result<Fabric, InputError> {
        let mut b = FabricBuilder::new();
        let store = |loc: String| move |e: StoreError| at(loc.clone())(&e);
        b.similarity(self.similarity_table()?);

        let mut schemas: BTreeMap<&str, Schema> = BTreeMap::new();
        for d in &self.datasets {
            let loc = format!("datasets[{}]", d.name);
            let schema = schema_of(&d.schema, &format!("{loc}.schema"))?;
            schemas.insert(&d.name, schema.clone());
            let data = DiscreteDataset::new(schema, d.records.clone(), d.binning.clone())
                .map_err(|e| at(format!("{loc}.records"))(&e))?;
            b.dataset_with(&d.name, data, d.properties.clone(), d.compute)
                .map_err(store(loc))?;
        }
        for m in &self.models {
            b.model(m).map_err(store(format!("models[{m}]")))?;
        }
        for m in &self.metadata {
            let loc = format!("metadata[{}]", m.name);
            b.metadata(&m.name, &m.dataset, m.attrs.iter().cloned())
                .map_err(store(loc.clone()))?;
            for (i, h) in m.history.iter().enumerate() {
                let t = h
                    .at
                    .value()
                    .ok_or_else(|| at(format!("{loc}.history[{i}].at"))(&"expected a number or YYYY-MM-DD"))?;
                b.history(&m.name, &h.transform, t).map_err(store(loc.clone()))?;
            }
        }
        let mut registered: BTreeMap<String, Transformation> = BTreeMap::new();
        for t in &self.transformations {
            let loc = format!("transformations[{}]", t.id);
            let built = if let Some(parts) = &t.compose {
                let mut acc: Option<Transformation> = None;
                for p in parts {
                    let next = registered
                        .get(p)
                        .ok_or_else(|| at(format!("{loc}.compose"))(&format!("`{p}` is not defined earlier")))?;
                    acc = Some(match acc {
                        None => next.clone(),
                        Some(a) => transform::compose(&a, next).map_err(|e| at(format!("{loc}.compose"))(&e))?,
                    });
                }
                let mut c = acc.ok_or_else(|| at(format!("{loc}.compose"))(&"empty composition"))?;
                c.id = t.id.clone();
                c
            } else {
                let source = match (&t.source, &t.schema) {
                    (Some(d), _) => schemas
                        .get(d.as_str())
                        .cloned()
                        .ok_or_else(|| at(format!("{loc}.source"))(&format!("unknown dataset `{d}`")))?,
                    (None, Some(s)) => schema_of(s, &format!("{loc}.schema"))?,
                    (None, None) => return Err(at(loc)(&"needs `source` or `schema`")),
                };
                Transformation::pipeline(&t.id, source, t.steps.clone(), t.cost).map_err(|e| at(format!("{loc}.steps"))(&e))?
            };
            registered.insert(t.id.clone(), built.clone());
            b.transformation(built).map_err(store(loc))?;
        }
        let vertices: BTreeSet<&str> = self
            .datasets
            .iter()
            .map(|d| d.name.as_str())
            .chain(self.models.iter().map(String::as_str))
            .chain(self.metadata.iter().map(|m| m.name.as_str()))
            .collect();
        let datasets: BTreeSet<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        let nodes: BTreeSet<&str> = self.nodes.iter().map(|n| n.name.as_str()).collect();
        let check = |known: &BTreeSet<&str>, what: &str, names: &[String], loc: String| -> Result<(), InputError> {
            match names.iter().find(|n| !known.contains(n.as_str())) {
                Some(n) => Err(at(loc)(&format!("unknown {what} `{n}`"))),
                None => Ok(()),
            }
        };
        for m in &self.metadata {
            check(&datasets, "dataset", std::slice::from_ref(&m.dataset), format!("metadata[{}].dataset", m.name))?;
        }
        for e in &self.hyperedges {
            check(&vertices, "vertex", &e.tail, format!("hyperedges[{}].tail", e.name))?;
            check(&vertices, "vertex", &e.head, format!("hyperedges[{}].head", e.name))?;
        }
        for n in &self.nodes {
            check(&datasets, "dataset", &n.hosted, format!("nodes[{}].hosted", n.name))?;
        }
        for (i, l) in self.links.iter().enumerate() {
            check(&nodes, "node", &[l.a.clone(), l.b.clone()], format!("links[{i}]"))?;
        }
        for e in &self.hyperedges {
            let tail: Vec<&str> = e.tail.iter().map(String::as_str).collect();
            let head: Vec<&str> = e.head.iter().map(String::as_str).collect();
            b.edge_realizing(&e.name, &tail, &head, e.label, e.weight, e.realizes.as_deref())
                .map_err(store(format!("hyperedges[{}]", e.name)))?;
        }
        for p in &self.policies {
            let loc = format!("policies[{}].predicate", p.id);
            let mut policy = Policy::parse(&p.id, &p.predicate).map_err(|e| at(loc.clone())(&e))?;
            if let Some(r) = &p.reason {
                policy = policy.with_reason(r);
            }
            b.policy(policy).map_err(store(loc))?;
        }
        for n in &self.nodes {
            let hosted: Vec<&str> = n.hosted.iter().map(String::as_str).collect();
            b.node(&n.name, &hosted).map_err(store(format!("nodes[{}]", n.name)))?;
            if let Some(c) = n.analytics {
                b.analytics(&n.name, c);
            }
        }
        for l in &self.links {
            b.link(&l.a, &l.b, l.weight);
        }
        b.build().map_err(|e| {
            let location = match &e {
                StoreError::UnknownName(_) | StoreError::NotDataset(_) | StoreError::NotMetadata(_) => "references",
                StoreError::Graph(_) => "hyperedges",
                StoreError::Sim(_) => "links",
                StoreError::UnknownTransformation(_) => "hyperedges.realizes",
                _ => "fabric",
            };
            at(location)(&e)
        })
    }
}

pub fn load_fabric(text: &str) -> Result<(FabricFile, Fabric), InputError> {
    let file = FabricFile::parse(text)?;
    let fabric = file.to_fabric()?;
    Ok((file, fabric))
}

// ------------------------------------------------------------- command --

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum OutputMode {
    #[default]
    Text,
    Structured,
}

#[derive(Debug, Parser)]
#[command(name = "datafabric", version, about = "Hypergraph data-fabric engine")]
pub struct RunConfig {
    /// Fabric description file.
    #[arg(long, global = true)]
    pub fabric: Option<PathBuf>,
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = OutputMode::Text)]
    pub output: OutputMode,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightKind {
    Unit,
    Edge,
    Similarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PartitionMethod {
    Spectral,
    BruteForce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMode {
    Sync,
    Async,
}

#[derive(Debug, Args)]
pub struct Pair {
    #[arg(long)]
    pub left: String,
    #[arg(long)]
    pub right: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the four well-formedness conditions.
    Validate {
        /// Require directed metadata → dataset paths.
        #[arg(long)]
        strict: bool,
    },
    /// Schema distance between two datasets.
    Distance(Pair),
    /// Attribute mapping from the smaller schema into the larger.
    Match {
        #[command(flatten)]
        pair: Pair,
        #[arg(long)]
        greedy: bool,
    },
    /// Integrate `right` into `left`.
    Integrate {
        #[command(flatten)]
        pair: Pair,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
    },
    /// Shortest hyperpath, or datasets matching a query.
    Navigate {
        #[arg(long)]
        from: String,
        #[arg(long, required_unless_present = "query")]
        to: Option<String>,
        /// Predicate over record attributes, e.g. `data.price > 10`.
        #[arg(long, conflicts_with = "to")]
        query: Option<String>,
        #[arg(long, value_enum, default_value_t = WeightKind::Unit)]
        weight: WeightKind,
    },
    /// Transformations recorded for a dataset and its ancestors.
    Trace {
        #[arg(long)]
        dataset: String,
    },
    /// Assign datasets to nodes.
    Partition {
        #[arg(long, value_enum, default_value_t = PartitionMethod::Spectral)]
        method: PartitionMethod,
        /// Number of clusters; defaults to the node count.
        #[arg(long)]
        k: Option<usize>,
        /// Rebalance so no node load exceeds this.
        #[arg(long)]
        cap: Option<f64>,
    },
    /// Policy operations.
    Policy {
        #[command(subcommand)]
        action: PolicyCommand,
    },
    /// Federated averaging over the configured shards.
    Fedsim {
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        local_steps: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
        /// Print the federated loss after every round.
        #[arg(long)]
        trace: bool,
    },
    /// Run a replication workload on the node system.
    Simulate {
        /// Workload file; defaults to the fabric's `simulate.script`.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<SimMode>,
        #[arg(long)]
        bound: Option<f64>,
        #[arg(long)]
        gossip_period: Option<u64>,
    },
    /// Differentially private sum or mean of a numeric column.
    DpAggregate {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        attribute: String,
        #[arg(long, value_enum, default_value_t = AggregateKind::Mean)]
        aggregate: AggregateKind,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 1.0)]
        sensitivity: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregateKind {
    Sum,
    Mean,
}

#[derive(Debug, Subcommand)]
pub enum PolicyCommand {
    /// Evaluate all policies for a user request on a dataset.
    Eval {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        user: String,
        #[arg(long)]
        role: String,
        #[arg(long, default_value_t = 0)]
        clearance: u64,
        #[arg(long, default_value_t = 0.0)]
        at: f64,
    },
}

/// Exit status and captured output of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

enum Failure {
    Input(String),
    Domain(String),
}

impl From<InputError> for Failure {
    fn from(e: InputError) -> Self {
        Failure::Input(e.to_string())
    }
}

fn classify(e: StoreError) -> Failure {
    match e {
        StoreError::UnknownName(_) | StoreError::NotDataset(_) | StoreError::NotMetadata(_) | StoreError::UnknownTransformation(_) => {
            Failure::Input(e.to_string())
        }
        other => Failure::Domain(other.to_string()),
    }
}

fn domain(e: impl std::fmt::Display) -> Failure {
    Failure::Domain(e.to_string())
}

fn input(e: impl std::fmt::Display) -> Failure {
    Failure::Input(e.to_string())
}

/// Text rendering of a number, identical to its structured form.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        serde_json::to_string(&x).expect("finite")
    } else if x > 0.0 {
        "inf".into()
    } else if x < 0.0 {
        "-inf".into()
    } else {
        "nan".into()
    }
}

struct Report {
    json: Json,
    text: String,
    code: i32,
}

impl Report {
    fn ok(json: Json, text: String) -> Self {
        Self { json, text, code: EXIT_OK }
    }
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn dispatch<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cfg = match RunConfig::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                Outcome {
                    code: EXIT_INPUT,
                    stdout: String::new(),
                    stderr: rendered,
                }
            } else {
                Outcome {
                    code: EXIT_OK,
                    stdout: rendered,
                    stderr: String::new(),
                }
            };
        }
    };
    match run(&cfg) {
        Ok(r) => {
            let stdout = match cfg.output {
                OutputMode::Text => r.text,
                OutputMode::Structured => {
                    let mut s = serde_json::to_string_pretty(&r.json).expect("json");
                    s.push('\n');
                    s
                }
            };
            Outcome {
                code: r.code,
                stdout,
                stderr: String::new(),
            }
        }
        Err(Failure::Input(m)) => Outcome {
            code: EXIT_INPUT,
            stdout: String::new(),
            stderr: format!("error: {m}\n"),
        },
        Err(Failure::Domain(m)) => Outcome {
            code: EXIT_DOMAIN,
            stdout: String::new(),
            stderr: format!("error: {m}\n"),
        },
    }
}

fn run(cfg: &RunConfig) -> Result<Report, Failure> {
    let path = cfg
        .fabric
        .as_ref()
        .ok_or_else(|| Failure::Input("--fabric PATH is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let (file, fabric) = load_fabric(&text)?;
    match &cfg.command {
        Command::Validate { strict } => cmd_validate(&fabric, *strict),
        Command::Distance(p) => cmd_distance(&fabric, p),
        Command::Match { pair, greedy } => cmd_match(&fabric, pair, *greedy),
        Command::Integrate { pair, lambda, theta } => cmd_integrate(&fabric, pair, *lambda, *theta),
        Command::Navigate { from, to, query, weight } => cmd_navigate(&fabric, from, to.as_deref(), query.as_deref(), *weight),
        Command::Trace { dataset } => cmd_trace(&fabric, dataset),
        Command::Partition { method, k, cap } => cmd_partition(&fabric, *method, *k, *cap, cfg.seed),
        Command::Policy {
            action: PolicyCommand::Eval {
                dataset,
                user,
                role,
                clearance,
                at,
            },
        } => cmd_policy(&fabric, dataset, user, role, *clearance, *at),
        Command::Fedsim {
            rounds,
            local_steps,
            eta,
            trace,
        } => cmd_fedsim(&file, &fabric, *rounds, *local_steps, *eta, *trace, cfg.seed),
        Command::Simulate {
            script,
            mode,
            bound,
            gossip_period,
        } => cmd_simulate(&file, &fabric, script.as_ref(), *mode, *bound, *gossip_period, cfg.seed),
        Command::DpAggregate {
            dataset,
            attribute,
            aggregate,
            epsilon,
            sensitivity,
        } => cmd_dp(&fabric, dataset, attribute, *aggregate, *epsilon, *sensitivity, cfg.seed),
    }
}

fn cmd_validate(f: &Fabric, strict: bool) -> Result<Report, Failure> {
    let v = f.validate_with(strict);
    let mut text = String::new();
    if v.is_empty() {
        text.push_str("valid: all four conditions hold\n");
    }
    for x in &v {
        text.push_str(&format!("{x}\n"));
    }
    let code = if v.is_empty() { EXIT_OK } else { EXIT_DOMAIN };
    Ok(Report {
        json: json!({ "valid": v.is_empty(), "violations": v }),
        text,
        code,
    })
}

fn cmd_distance(f: &Fabric, p: &Pair) -> Result<Report, Failure> {
    let a = f.dataset_named(&p.left).map_err(classify)?;
    let b = f.dataset_named(&p.right).map_err(classify)?;
    let d = schema::schema_distance(a.schema(), b.schema(), f.similarity());
    Ok(Report::ok(
        json!({ "left": p.left, "right": p.right, "distance": d }),
        format!("{}\n", num(d)),
    ))
}

fn cmd_match(f: &Fabric, p: &Pair, greedy: bool) -> Result<Report, Failure> {
    let a = f.dataset_named(&p.left).map_err(classify)?.schema();
    let b = f.dataset_named(&p.right).map_err(classify)?.schema();
    let (src, dst, from, to) = if a.len() <= b.len() {
        (a, b, &p.left, &p.right)
    } else {
        (b, a, &p.right, &p.left)
    };
    let m = if greedy {
        schema::match_schemas_greedy(src, dst, f.similarity())
    } else {
        schema::match_schemas_exact(src, dst, f.similarity())
    }
    .map_err(domain)?;
    let mut text = format!("{from} -> {to} score {}\n", num(m.score));
    for pr in &m.pairs {
        text.push_str(&format!("  {} -> {} ({})\n", pr.source, pr.target, num(pr.sim)));
    }
    Ok(Report::ok(
        json!({ "source": from, "target": to, "method": if greedy { "greedy" } else { "exact" }, "pairs": m.pairs, "score": m.score }),
        text,
    ))
}

fn cmd_integrate(f: &Fabric, p: &Pair, lambda: f64, theta: f64) -> Result<Report, Failure> {
    let r = f.integration(&p.left, &p.right, lambda, theta).map_err(classify)?;
    let names: Vec<&str> = r.unified.schema().names().collect();
    let text = format!(
        "transformation {}\nobjective {}\nunified schema {{{}}}\nrecords {}\n",
        r.transformation.id,
        num(r.objective),
        names.join(", "),
        r.unified.len()
    );
    Ok(Report::ok(
        json!({
            "transformation": r.transformation.id,
            "objective": r.objective,
            "mapping": r.mapping,
            "unified_schema": names,
            "records": r.unified.len(),
        }),
        text,
    ))
}

fn weight_for(f: &Fabric, kind: WeightKind) -> Box<dyn StepWeight> {
    match kind {
        WeightKind::Unit => Box::new(UnitWeight),
        WeightKind::Edge => Box::new(EdgeWeight),
        WeightKind::Similarity => Box::new(SimilarityWeight::new(f.attribute_sets())),
    }
}

fn path_json(f: &Fabric, p: &HyperPath) -> Json {
    json!({
        "edges": p.edges.iter().map(|e| f.edge_name(*e)).collect::<Vec<_>>(),
        "vertices": p.vertices.iter().map(|v| f.name_of(*v)).collect::<Vec<_>>(),
        "cost": p.cost,
    })
}

fn path_text(f: &Fabric, p: &HyperPath) -> String {
    let mut s = f.name_of(p.vertices[0]).to_owned();
    for (e, v) in p.edges.iter().zip(&p.vertices[1..]) {
        s.push_str(&format!(" -[{}]-> {}", f.edge_name(*e), f.name_of(*v)));
    }
    s
}

fn cmd_navigate(f: &Fabric, from: &str, to: Option<&str>, query: Option<&str>, kind: WeightKind) -> Result<Report, Failure> {
    let w = weight_for(f, kind);
    if let Some(q) = query {
        let anchor = f.vertex_id(from).map_err(classify)?;
        let q = Query::parse(q, anchor).map_err(input)?;
        let hits = resolve_query(f.graph(), &q, f, w.as_ref()).map_err(domain)?;
        let mut text = String::new();
        for (v, p) in &hits {
            text.push_str(&format!("{} cost {} hops {}: {}\n", f.name_of(*v), num(p.cost), p.len(), path_text(f, p)));
        }
        let json = json!({
            "from": from,
            "matches": hits.iter().map(|(v, p)| json!({ "dataset": f.name_of(*v), "path": path_json(f, p) })).collect::<Vec<_>>(),
        });
        if hits.is_empty() {
            return Ok(Report {
                json,
                text: "no matching dataset reachable\n".into(),
                code: EXIT_DOMAIN,
            });
        }
        return Ok(Report::ok(json, text));
    }
    let to = to.expect("clap requires --to without --query");
    match f.navigate(from, to, w.as_ref()).map_err(classify)? {
        Some(p) => Ok(Report::ok(
            json!({ "from": from, "to": to, "path": path_json(f, &p) }),
            format!("cost {}\nhops {}\n{}\n", num(p.cost), p.len(), path_text(f, &p)),
        )),
        None => Ok(Report {
            json: json!({ "from": from, "to": to, "path": null }),
            text: format!("no path from {from} to {to}\n"),
            code: EXIT_DOMAIN,
        }),
    }
}

fn cmd_trace(f: &Fabric, dataset: &str) -> Result<Report, Failure> {
    let t = f.trace(dataset).map_err(classify)?;
    let ancestors: Vec<&str> = t.ancestors.iter().map(|v| f.name_of(*v)).collect();
    let edges: Vec<&str> = t.edges.iter().map(|e| f.edge_name(*e)).collect();
    let transforms: Vec<&str> = t.transforms.iter().map(String::as_str).collect();
    let text = format!(
        "transformations {{{}}}\nancestors {{{}}}\nedges [{}]\n",
        transforms.join(", "),
        ancestors.join(", "),
        edges.join(", ")
    );
    Ok(Report::ok(
        json!({ "dataset": dataset, "transformations": transforms, "ancestors": ancestors, "edges": edges }),
        text,
    ))
}

fn assignment_report(f: &Fabric, a: &Assignment, m: &CostModel, nodes: usize, method: &str) -> Result<Report, Failure> {
    let objective = partition::objective(a, m).map_err(domain)?;
    let loads = partition::load(a, m, nodes).map_err(domain)?;
    let mut text = format!("method {method}\nobjective {}\n", num(objective));
    // Oracle comparison only where exhaustive search is feasible.
    let optimum = partition::brute_force_partition(nodes, m).ok().map(|(_, o)| o);
    if let Some(o) = optimum {
        text.push_str(&format!("optimum {}\ngap {}\n", num(o), num(objective - o)));
    }
    let mut assigned = BTreeMap::new();
    for (d, n) in &a.0 {
        let node = f.node_names()[*n].clone();
        text.push_str(&format!("{} -> {}\n", f.name_of(*d), node));
        assigned.insert(f.name_of(*d).to_owned(), node);
    }
    let mut load_map = BTreeMap::new();
    for (n, l) in loads.iter().enumerate() {
        text.push_str(&format!("load {} {}\n", f.node_names()[n], num(*l)));
        load_map.insert(f.node_names()[n].clone(), *l);
    }
    Ok(Report::ok(
        json!({
            "method": method,
            "objective": objective,
            "optimum": optimum,
            "gap": optimum.map(|o| objective - o),
            "assignment": assigned,
            "loads": load_map,
        }),
        text,
    ))
}

fn cmd_partition(f: &Fabric, method: PartitionMethod, k: Option<usize>, cap: Option<f64>, seed: u64) -> Result<Report, Failure> {
    let nodes = f.nodes().len();
    if nodes == 0 {
        return Err(Failure::Input("the fabric declares no nodes".into()));
    }
    let m = f.cost_model().map_err(classify)?;
    let (mut a, name) = match method {
        PartitionMethod::Spectral => (
            partition::spectral_partition(f.graph(), k.unwrap_or(nodes).min(nodes), &m, seed).map_err(domain)?,
            "spectral",
        ),
        PartitionMethod::BruteForce => (partition::brute_force_partition(nodes, &m).map_err(domain)?.0, "brute-force"),
    };
    if let Some(c) = cap {
        a = partition::rebalance(&a, &m, nodes, c).map_err(domain)?;
    }
    assignment_report(f, &a, &m, nodes, name)
}

fn cmd_policy(f: &Fabric, dataset: &str, user: &str, role: &str, clearance: u64, at: f64) -> Result<Report, Failure> {
    let u = UserContext::new(user, role, clearance, at).map_err(input)?;
    let d = f.evaluate(dataset, &u).map_err(classify)?;
    let mut text = format!("{}\n", if d.granted { "grant" } else { "deny" });
    for x in &d.failing {
        text.push_str(&format!("  failed {}{}\n", x.policy, x.reason.as_ref().map(|r| format!(": {r}")).unwrap_or_default()));
    }
    Ok(Report {
        code: if d.granted { EXIT_OK } else { EXIT_DOMAIN },
        json: json!({ "dataset": dataset, "granted": d.granted, "failing": d.failing }),
        text,
    })
}

fn shard_of(f: &Fabric, name: &str, features: &[String], target: &str) -> Result<LocalShard, Failure> {
    let d = f.dataset_named(name).map_err(classify)?;
    let column = |a: &str| {
        d.numeric_column(a)
            .ok_or_else(|| Failure::Input(format!("fedsim: `{a}` is not a complete numeric column of `{name}`")))
    };
    let cols = features.iter().map(|a| column(a)).collect::<Result<Vec<_>, _>>()?;
    let y = column(target)?;
    let x = (0..d.len()).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    LocalShard::new(x, y).map_err(input)
}

fn cmd_fedsim(
    file: &FabricFile,
    f: &Fabric,
    rounds: Option<usize>,
    local_steps: Option<usize>,
    eta: Option<f64>,
    trace: bool,
    seed: u64,
) -> Result<Report, Failure> {
    let cfg = file
        .fedsim
        .as_ref()
        .ok_or_else(|| Failure::Input("the fabric has no [fedsim] section".into()))?;
    let shards = cfg
        .shards
        .iter()
        .map(|s| shard_of(f, s, &cfg.features, &cfg.target))
        .collect::<Result<Vec<_>, _>>()?;
    let rounds = rounds.unwrap_or(cfg.rounds);
    let local_steps = local_steps.unwrap_or(cfg.local_steps);
    let eta = match eta.or(cfg.eta) {
        Some(e) => e,
        None => fedsim::max_learning_rate(&shards).map_err(domain)?,
    };
    let r = fedsim::train(&shards, rounds, local_steps, eta, seed).map_err(domain)?;
    let final_loss = r.loss_trace.last().copied().unwrap_or(r.initial_loss);
    let optimum = fedsim::least_squares(&shards)
        .and_then(|m| fedsim::federated_loss(&shards, &m))
        .ok();
    let mut drift = Vec::new();
    for (i, s) in shards.iter().enumerate().skip(1) {
        let rep = fedsim::drift_detect(shards[0].targets(), s.targets(), fedsim::DEFAULT_ALPHA).map_err(domain)?;
        drift.push(json!({ "a": cfg.shards[0], "b": cfg.shards[i], "statistic": rep.statistic, "threshold": rep.threshold, "drifted": rep.drifted }));
    }
    let mut text = format!(
        "rounds {rounds}\neta {}\ninitial loss {}\nfinal loss {}\n",
        num(eta),
        num(r.initial_loss),
        num(final_loss)
    );
    if let Some(o) = optimum {
        text.push_str(&format!("optimal loss {}\n", num(o)));
    }
    text.push_str(&format!("theta [{}]\n", r.model.theta.iter().map(|x| num(*x)).collect::<Vec<_>>().join(", ")));
    text.push_str(&format!("floats exchanged {}\n", r.floats_exchanged));
    for d in &drift {
        text.push_str(&format!(
            "drift {} vs {}: D={} threshold {} {}\n",
            d["a"].as_str().unwrap_or(""),
            d["b"].as_str().unwrap_or(""),
            num(d["statistic"].as_f64().unwrap_or(f64::NAN)),
            num(d["threshold"].as_f64().unwrap_or(f64::NAN)),
            if d["drifted"].as_bool() == Some(true) { "drifted" } else { "stable" }
        ));
    }
    if trace {
        for (k, l) in r.loss_trace.iter().enumerate() {
            text.push_str(&format!("loss {} {}\n", k + 1, num(*l)));
        }
    }
    Ok(Report::ok(
        json!({
            "rounds": rounds, "local_steps": local_steps, "eta": eta,
            "initial_loss": r.initial_loss, "final_loss": final_loss, "optimal_loss": optimum,
            "theta": r.model.theta, "floats_exchanged": r.floats_exchanged, "loss_trace": r.loss_trace,
            "drift": drift,
        }),
        text,
    ))
}

fn cmd_simulate(
    file: &FabricFile,
    f: &Fabric,
    script: Option<&PathBuf>,
    mode: Option<SimMode>,
    bound: Option<f64>,
    gossip_period: Option<u64>,
    seed: u64,
) -> Result<Report, Failure> {
    let section = file.simulate.clone();
    let text = match script {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?,
        None => section
            .as_ref()
            .map(|s| s.script.clone())
            .ok_or_else(|| Failure::Input("no --script and no [simulate] section".into()))?,
    };
    let commands = sim::parse_script(&text).map_err(input)?;
    let period = gossip_period.or(section.as_ref().map(|s| s.gossip_period)).unwrap_or(1);
    let mode = match mode {
        Some(SimMode::Sync) => Mode::SyncAll,
        Some(SimMode::Async) => Mode::AsyncGossip,
        None => section.as_ref().map_or(Mode::AsyncGossip, |s| s.mode),
    };
    let mut s = f.simulator(period, seed).map_err(input)?;
    let l = bound
        .or(section.as_ref().and_then(|s| s.bound))
        .unwrap_or_else(|| s.async_latency_bound());
    let m = sim::measure_cal(&mut s, &commands, mode, l).map_err(domain)?;
    let log: Vec<&str> = s.event_log().lines().collect();
    let mut out = s.event_log().to_owned();
    out.push_str(&format!(
        "C {}\nA {}\nL {}\n{}\n",
        num(m.c),
        num(m.a),
        num(m.l),
        if m.pass { "pass" } else { "fail" }
    ));
    Ok(Report {
        code: if m.pass { EXIT_OK } else { EXIT_DOMAIN },
        json: json!({ "log": log, "c": m.c, "a": if m.a.is_finite() { json!(m.a) } else { json!("inf") }, "l": m.l, "pass": m.pass }),
        text: out,
    })
}

fn cmd_dp(
    f: &Fabric,
    dataset: &str,
    attribute: &str,
    kind: AggregateKind,
    epsilon: f64,
    sensitivity: f64,
    seed: u64,
) -> Result<Report, Failure> {
    let d = f.dataset_named(dataset).map_err(classify)?;
    let values = d
        .numeric_column(attribute)
        .ok_or_else(|| Failure::Input(format!("`{attribute}` is not a complete numeric column of `{dataset}`")))?;
    let agg = match kind {
        AggregateKind::Sum => Aggregate::Sum,
        AggregateKind::Mean => Aggregate::Mean,
    };
    let noisy = dp_aggregate(&values, agg, epsilon, sensitivity, seed).map_err(input)?;
    Ok(Report::ok(
        json!({ "dataset": dataset, "attribute": attribute, "aggregate": agg, "epsilon": epsilon, "sensitivity": sensitivity, "value": noisy }),
        format!("{}\n", num(noisy)),
    ))
}

/// Names of every dataset in the fabric, for diagnostics.
pub fn dataset_names(f: &Fabric) -> BTreeSet<String> {
    f.dataset_vertices().map(|v| f.name_of(v).to_owned()).collect()
}
