//! Stream-workflow application model: services, external sources and
//! percentage-weighted edges forming a DAG.

mod generator;

pub use generator::{generate, GeneratorParams, Size, Structure};

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Current version of the workflow file layout.
pub const WORKFLOW_FORMAT_VERSION: u32 = 1;

const PERCENT_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ServiceIdx(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceIdx(pub usize);

impl fmt::Display for ServiceIdx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

impl fmt::Display for SourceIdx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ex{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mobility {
    Movable,
    Unmovable,
}

/// How an emitter routes its output to its children.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataMode {
    /// Every child receives the full stream.
    Replica,
    /// The stream is split according to edge percentages.
    Partition,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Service<T> {
    pub id: String,
    /// Compute demand per MB of input (MI/MB).
    pub mi_per_mb: T,
    /// Output-to-input proportion.
    pub gamma: T,
    pub mobility: Mobility,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pinned_cloud: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalSource {
    pub id: String,
    /// Output rate in whole `min_dp_unit`s per second.
    pub rate_units: u64,
    /// Cloud where the source's data lands.
    pub location_cloud: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Edge<T> {
    /// External source id or service id.
    pub from: String,
    /// Destination service id.
    pub to: String,
    /// Fraction of the origin's output routed along this edge, in (0, 1].
    pub percent: T,
    pub mode: DataMode,
}

/// Serialized form of a workflow. Use [`validate`] to check it and
/// [`StreamWorkflow::try_from`] to build the indexed model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct WorkflowDocument<T> {
    pub format_version: u32,
    #[serde(default)]
    pub name: String,
    /// Minimum stream quantum (MB).
    pub min_dp_unit: T,
    /// Minimum per-VM processing rate (MB/s).
    pub unit_dp_rate: T,
    pub services: Vec<Service<T>>,
    pub sources: Vec<ExternalSource>,
    pub edges: Vec<Edge<T>>,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum Violation {
    #[error("unsupported format_version {0}")]
    FormatVersion(u32),
    #[error("min_dp_unit and unit_dp_rate must be > 0")]
    NonPositiveUnit,
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("service `{0}`: mi_per_mb must be > 0")]
    MiPerMb(String),
    #[error("service `{0}`: gamma must lie in [0, 1]")]
    Gamma(String),
    #[error("service `{0}`: unmovable service needs a pinned_cloud")]
    MissingPin(String),
    #[error("edge {index}: unknown endpoint `{id}`")]
    UnknownEndpoint { index: usize, id: String },
    #[error("edge {index}: percent must lie in (0, 1]")]
    PercentRange { index: usize },
    #[error("edge {index}: replica edge must carry 100%")]
    ReplicaPercent { index: usize },
    #[error("`{0}` mixes replica and partition outgoing edges")]
    MixedModes(String),
    #[error("`{id}`: partition percents sum {sum_percent:.0}% ≠ 100%")]
    PartitionSum { id: String, sum_percent: f64 },
    #[error("cycle detected among services {0:?}")]
    Cycle(Vec<String>),
}

/// Checks every structural invariant of a workflow document. Returns an
/// empty list iff the document is well formed.
pub fn validate<T: Scalar>(doc: &WorkflowDocument<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    if doc.format_version != WORKFLOW_FORMAT_VERSION {
        out.push(Violation::FormatVersion(doc.format_version));
    }
    if !(doc.min_dp_unit > T::zero()) || !(doc.unit_dp_rate > T::zero()) {
        out.push(Violation::NonPositiveUnit);
    }

    let mut seen = HashSet::new();
    for id in doc
        .services
        .iter()
        .map(|s| &s.id)
        .chain(doc.sources.iter().map(|s| &s.id))
    {
        if !seen.insert(id.as_str()) {
            out.push(Violation::DuplicateId(id.clone()));
        }
    }

    for s in &doc.services {
        if !(s.mi_per_mb > T::zero()) {
            out.push(Violation::MiPerMb(s.id.clone()));
        }
        if !(s.gamma >= T::zero() && s.gamma <= T::one()) {
            out.push(Violation::Gamma(s.id.clone()));
        }
        if s.mobility == Mobility::Unmovable && s.pinned_cloud.is_none() {
            out.push(Violation::MissingPin(s.id.clone()));
        }
    }

    let service_ids: HashMap<&str, usize> = doc
        .services
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let source_ids: HashSet<&str> = doc.sources.iter().map(|s| s.id.as_str()).collect();

    // Outgoing edges grouped by emitter, in first-seen order.
    let mut outgoing: Vec<(&str, Vec<usize>)> = Vec::new();
    let mut internal = Vec::new();
    for (index, e) in doc.edges.iter().enumerate() {
        let from_ok = service_ids.contains_key(e.from.as_str()) || source_ids.contains(e.from.as_str());
        if !from_ok {
            out.push(Violation::UnknownEndpoint { index, id: e.from.clone() });
        }
        if !service_ids.contains_key(e.to.as_str()) {
            out.push(Violation::UnknownEndpoint { index, id: e.to.clone() });
        }
        if !(e.percent > T::zero() && e.percent <= T::one() + T::lit(PERCENT_EPS)) {
            out.push(Violation::PercentRange { index });
        } else if e.mode == DataMode::Replica && (e.percent - T::one()).abs() > T::lit(PERCENT_EPS) {
            out.push(Violation::ReplicaPercent { index });
        }
        match outgoing.iter_mut().find(|(id, _)| *id == e.from) {
            Some((_, v)) => v.push(index),
            None => outgoing.push((e.from.as_str(), vec![index])),
        }
        if let (Some(&a), Some(&b)) = (service_ids.get(e.from.as_str()), service_ids.get(e.to.as_str())) {
            internal.push((a, b));
        }
    }

    for (id, edges) in &outgoing {
        let first = doc.edges[edges[0]].mode;
        if edges.iter().any(|&i| doc.edges[i].mode != first) {
            out.push(Violation::MixedModes(id.to_string()));
            continue;
        }
        if first == DataMode::Partition {
            let sum: f64 = edges.iter().map(|&i| doc.edges[i].percent.as_f64()).sum();
            if (sum - 1.0).abs() > PERCENT_EPS {
                out.push(Violation::PartitionSum {
                    id: id.to_string(),
                    sum_percent: sum * 100.0,
                });
            }
        }
    }

    let (_, leftover) = kahn(doc.services.len(), &internal);
    if !leftover.is_empty() {
        out.push(Violation::Cycle(
            leftover.into_iter().map(|i| doc.services[i].id.clone()).collect(),
        ));
    }
    out
}

/// Kahn's algorithm with lowest-index-first tie breaking. Returns the
/// topological order and the nodes left over (non-empty iff cyclic).
fn kahn(n: usize, edges: &[(usize, usize)]) -> (Vec<usize>, Vec<usize>) {
    let mut indeg = vec![0usize; n];
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        indeg[b] += 1;
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &w in &adj[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                ready.insert(w);
            }
        }
    }
    let leftover = (0..n).filter(|&i| indeg[i] > 0).collect();
    (order, leftover)
}

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("invalid workflow: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("unknown service `{0}`")]
    UnknownService(String),
    #[error("unknown source `{0}`")]
    UnknownSource(String),
    #[error("workflow parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// A validated, indexed stream workflow. Immutable once built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "WorkflowDocument<T>", into = "WorkflowDocument<T>")]
pub struct StreamWorkflow<T> {
    doc: WorkflowDocument<T>,
    topo: Vec<ServiceIdx>,
    /// Per service: internal parents with edge percent.
    parents: Vec<Vec<(ServiceIdx, T)>>,
    /// Per service: internal children with edge percent.
    children: Vec<Vec<(ServiceIdx, T)>>,
    /// Per service: feeding external sources with edge percent.
    source_inputs: Vec<Vec<(SourceIdx, T)>>,
    /// Per source: directly fed services with edge percent.
    source_outputs: Vec<Vec<(ServiceIdx, T)>>,
    service_by_id: HashMap<String, ServiceIdx>,
    source_by_id: HashMap<String, SourceIdx>,
}

impl<T: Scalar> TryFrom<WorkflowDocument<T>> for StreamWorkflow<T> {
    type Error = WorkflowError;

    fn try_from(doc: WorkflowDocument<T>) -> Result<Self, Self::Error> {
        let violations = validate(&doc);
        if !violations.is_empty() {
            return Err(WorkflowError::Invalid(violations));
        }
        let n = doc.services.len();
        let service_by_id: HashMap<String, ServiceIdx> = doc
            .services
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), ServiceIdx(i)))
            .collect();
        let source_by_id: HashMap<String, SourceIdx> = doc
            .sources
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), SourceIdx(i)))
            .collect();

        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut source_inputs = vec![Vec::new(); n];
        let mut source_outputs = vec![Vec::new(); doc.sources.len()];
        let mut internal = Vec::new();
        for e in &doc.edges {
            let to = service_by_id[&e.to];
            if let Some(&from) = service_by_id.get(&e.from) {
                parents[to.0].push((from, e.percent));
                children[from.0].push((to, e.percent));
                internal.push((from.0, to.0));
            } else {
                let src = source_by_id[&e.from];
                source_inputs[to.0].push((src, e.percent));
                source_outputs[src.0].push((to, e.percent));
            }
        }
        let (order, _) = kahn(n, &internal);
        Ok(Self {
            topo: order.into_iter().map(ServiceIdx).collect(),
            parents,
            children,
            source_inputs,
            source_outputs,
            service_by_id,
            source_by_id,
            doc,
        })
    }
}

impl<T: Scalar> From<StreamWorkflow<T>> for WorkflowDocument<T> {
    fn from(w: StreamWorkflow<T>) -> Self {
        w.doc
    }
}

impl<T: Scalar> StreamWorkflow<T> {
    pub fn from_json(text: &str) -> Result<Self, WorkflowError> {
        let doc: WorkflowDocument<T> = serde_json::from_str(text)?;
        Self::try_from(doc)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, WorkflowError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("workflow serializes")
    }

    pub fn document(&self) -> &WorkflowDocument<T> {
        &self.doc
    }

    pub fn name(&self) -> &str {
        &self.doc.name
    }

    pub fn min_dp_unit(&self) -> T {
        self.doc.min_dp_unit
    }

    pub fn unit_dp_rate(&self) -> T {
        self.doc.unit_dp_rate
    }

    pub fn services(&self) -> &[Service<T>] {
        &self.doc.services
    }

    pub fn service(&self, s: ServiceIdx) -> &Service<T> {
        &self.doc.services[s.0]
    }

    pub fn sources(&self) -> &[ExternalSource] {
        &self.doc.sources
    }

    pub fn source(&self, p: SourceIdx) -> &ExternalSource {
        &self.doc.sources[p.0]
    }

    pub fn service_count(&self) -> usize {
        self.doc.services.len()
    }

    pub fn service_ids(&self) -> impl Iterator<Item = ServiceIdx> {
        (0..self.doc.services.len()).map(ServiceIdx)
    }

    pub fn service_idx(&self, id: &str) -> Result<ServiceIdx, WorkflowError> {
        self.service_by_id
            .get(id)
            .copied()
            .ok_or_else(|| WorkflowError::UnknownService(id.to_string()))
    }

    pub fn source_idx(&self, id: &str) -> Result<SourceIdx, WorkflowError> {
        self.source_by_id
            .get(id)
            .copied()
            .ok_or_else(|| WorkflowError::UnknownSource(id.to_string()))
    }

    /// Services in a deterministic topological order.
    pub fn topo_order(&self) -> &[ServiceIdx] {
        &self.topo
    }

    pub fn parents(&self, s: ServiceIdx) -> &[(ServiceIdx, T)] {
        &self.parents[s.0]
    }

    pub fn children(&self, s: ServiceIdx) -> &[(ServiceIdx, T)] {
        &self.children[s.0]
    }

    pub fn source_inputs(&self, s: ServiceIdx) -> &[(SourceIdx, T)] {
        &self.source_inputs[s.0]
    }

    pub fn source_outputs(&self, p: SourceIdx) -> &[(ServiceIdx, T)] {
        &self.source_outputs[p.0]
    }

    /// Default source rates recorded in the document, in units per second.
    pub fn default_source_units(&self) -> Vec<u64> {
        self.doc.sources.iter().map(|s| s.rate_units).collect()
    }

    /// Rate in MB/s for a count of `min_dp_unit`s per second.
    pub fn units_to_rate(&self, units: u64) -> T {
        T::from_count(units) * self.doc.min_dp_unit
    }

    /// External input rate of a service (MB/s) under the given source rates:
    /// the sum over its source edges of source rate times edge percent.
    pub fn lambda_with(&self, s: ServiceIdx, source_units: &[u64]) -> T {
        self.source_inputs[s.0]
            .iter()
            .map(|&(p, pct)| self.units_to_rate(source_units[p.0]) * pct)
            .sum()
    }

    /// External input rate of a service under the document's source rates.
    pub fn lambda_of(&self, id: &str) -> Result<T, WorkflowError> {
        let s = self.service_idx(id)?;
        Ok(self.lambda_with(s, &self.default_source_units()))
    }

    /// Services reachable from a source, in topological order with the
    /// directly fed services preferred whenever several are ready.
    pub fn downstream_of(&self, p: SourceIdx) -> Vec<ServiceIdx> {
        let direct: HashSet<usize> = self.source_outputs[p.0].iter().map(|(s, _)| s.0).collect();
        let mut reach = HashSet::new();
        let mut queue: VecDeque<usize> = direct.iter().copied().collect();
        while let Some(v) = queue.pop_front() {
            if reach.insert(v) {
                queue.extend(self.children[v].iter().map(|(c, _)| c.0));
            }
        }
        let mut indeg: HashMap<usize, usize> = reach.iter().map(|&v| (v, 0)).collect();
        for &v in &reach {
            for (c, _) in &self.children[v] {
                *indeg.get_mut(&c.0).expect("child is reachable") += 1;
            }
        }
        // (indirect flag, index): direct services sort first.
        let key = |v: usize| (!direct.contains(&v), v);
        let mut ready: BTreeSet<(bool, usize)> = indeg
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&v, _)| key(v))
            .collect();
        let mut out = Vec::with_capacity(reach.len());
        while let Some((_, v)) = ready.pop_first() {
            out.push(ServiceIdx(v));
            for (c, _) in &self.children[v] {
                let d = indeg.get_mut(&c.0).expect("child is reachable");
                *d -= 1;
                if *d == 0 {
                    ready.insert(key(c.0));
                }
            }
        }
        out
    }

    /// Number of outgoing service edges (stream dependencies) of a service.
    pub fn out_degree(&self, s: ServiceIdx) -> usize {
        self.children[s.0].len()
    }
}
