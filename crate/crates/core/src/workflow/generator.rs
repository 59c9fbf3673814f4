//! Deterministic synthetic stream workflows shaped after the Montage,
//! Inspiral, Epigenomics and CyberShake scientific workflow structures.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    DataMode, Edge, ExternalSource, Mobility, Service, StreamWorkflow, WorkflowDocument,
    WORKFLOW_FORMAT_VERSION,
};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    Montage,
    Inspiral,
    Epigenomics,
    CyberShake,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Size {
    Small,
    Medium,
    Large,
}

impl Structure {
    pub const ALL: [Structure; 4] = [
        Structure::Montage,
        Structure::Inspiral,
        Structure::Epigenomics,
        Structure::CyberShake,
    ];

    pub fn node_count(self, size: Size) -> usize {
        use Size::*;
        use Structure::*;
        match (self, size) {
            (Montage, Small) => 25,
            (Montage, Medium) => 50,
            (Montage, Large) => 100,
            (Inspiral, Small) => 30,
            (Inspiral, Medium) => 50,
            (Inspiral, Large) => 100,
            (Epigenomics, Small) => 24,
            (Epigenomics, Medium) => 46,
            (Epigenomics, Large) => 100,
            (CyberShake, Small) => 30,
            (CyberShake, Medium) => 50,
            (CyberShake, Large) => 100,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Structure::Montage => "Montage",
            Structure::Inspiral => "Inspiral",
            Structure::Epigenomics => "Epigenomics",
            Structure::CyberShake => "CyberShake",
        }
    }

    pub fn workflow_name(self, size: Size) -> String {
        format!("{}_{}", self.label(), self.node_count(size))
    }
}

impl Size {
    pub const ALL: [Size; 3] = [Size::Small, Size::Medium, Size::Large];
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label().to_lowercase())
    }
}

impl FromStr for Structure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "montage" => Ok(Structure::Montage),
            "inspiral" => Ok(Structure::Inspiral),
            "epigenomics" => Ok(Structure::Epigenomics),
            "cybershake" => Ok(Structure::CyberShake),
            other => Err(format!("unknown structure `{other}`")),
        }
    }
}

impl fmt::Display for Size {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Size::Small => "small",
            Size::Medium => "medium",
            Size::Large => "large",
        })
    }
}

impl FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(Size::Small),
            "medium" => Ok(Size::Medium),
            "large" => Ok(Size::Large),
            other => Err(format!("unknown size `{other}`")),
        }
    }
}

/// Ranges the per-service parameters are drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GeneratorParams<T> {
    pub mi_per_mb: (T, T),
    pub gamma: (T, T),
    pub unmovable_fraction: f64,
    pub source_rate_units: u64,
    pub min_dp_unit: T,
    pub unit_dp_rate: T,
}

impl<T: Scalar> Default for GeneratorParams<T> {
    fn default() -> Self {
        Self {
            mi_per_mb: (T::lit(1348.0), T::lit(2674.0)),
            gamma: (T::lit(0.01), T::lit(0.50)),
            unmovable_fraction: 0.5,
            source_rate_units: 5,
            min_dp_unit: T::one(),
            unit_dp_rate: T::one(),
        }
    }
}

#[derive(Default)]
struct Skeleton {
    names: Vec<String>,
    edges: Vec<(usize, usize)>,
    /// One entry per external source: the services it feeds.
    sources: Vec<Vec<usize>>,
}

impl Skeleton {
    fn node(&mut self, name: String) -> usize {
        self.names.push(name);
        self.names.len() - 1
    }

    fn link(&mut self, a: usize, b: usize) {
        self.edges.push((a, b));
    }

    /// Inserts relay nodes on existing service edges until `total` nodes.
    fn pad_to(&mut self, total: usize) {
        let mut k = 0;
        while self.names.len() < total {
            let i = (self.edges.len() / 2 + k * 7) % self.edges.len();
            let (a, b) = self.edges[i];
            let r = self.node(format!("relay_{k}"));
            self.edges[i] = (a, r);
            self.edges.push((r, b));
            k += 1;
        }
    }
}

/// Splits `total` into `parts` near-equal positive shares.
fn split(total: usize, parts: usize) -> Vec<usize> {
    (0..parts)
        .map(|i| total / parts + usize::from(i < total % parts))
        .collect()
}

fn montage(total: usize) -> Skeleton {
    let mut k = Skeleton::default();
    let p = ((total.saturating_sub(5)) / 4).max(2);
    let d = total.saturating_sub(5 + 2 * p).max(1);
    let proj: Vec<_> = (0..p).map(|i| k.node(format!("mProjectPP_{i}"))).collect();
    let diff: Vec<_> = (0..d).map(|i| k.node(format!("mDiffFit_{i}"))).collect();
    for (i, &df) in diff.iter().enumerate() {
        let a = i % p;
        let b = (a + 1 + i / p) % p;
        let b = if b == a { (a + 1) % p } else { b };
        k.link(proj[a], df);
        k.link(proj[b], df);
    }
    let concat = k.node("mConcatFit".into());
    for &df in &diff {
        k.link(df, concat);
    }
    let bg_model = k.node("mBgModel".into());
    k.link(concat, bg_model);
    let bg: Vec<_> = (0..p).map(|i| k.node(format!("mBackground_{i}"))).collect();
    for i in 0..p {
        k.link(proj[i], bg[i]);
        k.link(bg_model, bg[i]);
    }
    let imgtbl = k.node("mImgtbl".into());
    for &b in &bg {
        k.link(b, imgtbl);
    }
    let add = k.node("mAdd".into());
    k.link(imgtbl, add);
    let shrink = k.node("mShrink".into());
    k.link(add, shrink);
    k.sources = proj.iter().map(|&s| vec![s]).collect();
    k
}

fn inspiral(total: usize) -> Skeleton {
    let g0 = ((total as f64 / 12.0).round() as usize).max(1);
    let groups = [g0, g0 + 1, g0.saturating_sub(1), g0 + 2]
        .into_iter()
        .filter(|&g| g >= 1 && total >= 6 * g)
        .find(|&g| (total - 2 * g) % 4 == 0)
        .unwrap_or(g0);
    let branches = (total.saturating_sub(2 * groups) / 4).max(groups);
    let mut k = Skeleton::default();
    let mut n = 0;
    for (j, b) in split(branches, groups).into_iter().enumerate() {
        let mut feeds = Vec::new();
        let mut first = Vec::new();
        for _ in 0..b {
            let t = k.node(format!("TmpltBank_{n}"));
            let i = k.node(format!("Inspiral_{n}"));
            k.link(t, i);
            feeds.extend([t, i]);
            first.push(i);
            n += 1;
        }
        let thinca = k.node(format!("Thinca_{j}"));
        for &i in &first {
            k.link(i, thinca);
        }
        let thinca2 = k.node(format!("Thinca2_{j}"));
        for m in 0..b {
            let t = k.node(format!("TrigBank_{j}_{m}"));
            let i = k.node(format!("Inspiral2_{j}_{m}"));
            k.link(thinca, t);
            k.link(t, i);
            k.link(i, thinca2);
        }
        k.sources.push(feeds);
    }
    k.pad_to(total);
    k
}

fn epigenomics(total: usize) -> Skeleton {
    let lanes = ((total as f64 / 25.0).round() as usize).max(1);
    let chains = (total.saturating_sub(3 + 2 * lanes) / 4).max(lanes);
    let mut k = Skeleton::default();
    let mut lane_merges = Vec::new();
    let mut n = 0;
    for (l, m) in split(chains, lanes).into_iter().enumerate() {
        let split_node = k.node(format!("fastQSplit_{l}"));
        let merge = k.node(format!("mapMerge_{l}"));
        for _ in 0..m {
            let f = k.node(format!("filterContams_{n}"));
            let s = k.node(format!("sol2sanger_{n}"));
            let q = k.node(format!("fastq2bfq_{n}"));
            let p = k.node(format!("map_{n}"));
            k.link(split_node, f);
            k.link(f, s);
            k.link(s, q);
            k.link(q, p);
            k.link(p, merge);
            n += 1;
        }
        k.sources.push(vec![split_node]);
        lane_merges.push(merge);
    }
    let global = k.node("mapMerge".into());
    for &m in &lane_merges {
        k.link(m, global);
    }
    let index = k.node("maqIndex".into());
    k.link(global, index);
    let pileup = k.node("pileup".into());
    k.link(index, pileup);
    k.pad_to(total);
    k
}

fn cybershake(total: usize) -> Skeleton {
    let mut e = ((total as f64 / 25.0).round() as usize).max(2);
    if (total.saturating_sub(2 + e)) % 2 == 1 {
        e += 1;
    }
    let seis = (total.saturating_sub(2 + e) / 2).max(e);
    let mut k = Skeleton::default();
    let extract: Vec<_> = (0..e).map(|i| k.node(format!("ExtractSGT_{i}"))).collect();
    let zip_seis = k.node("ZipSeis".into());
    let zip_psa = k.node("ZipPSA".into());
    let mut n = 0;
    for (i, count) in split(seis, e).into_iter().enumerate() {
        for _ in 0..count {
            let s = k.node(format!("SeismogramSynthesis_{n}"));
            let p = k.node(format!("PeakValCalcOkaya_{n}"));
            k.link(extract[i], s);
            k.link(s, p);
            k.link(s, zip_seis);
            k.link(p, zip_psa);
            n += 1;
        }
    }
    k.sources = extract.iter().map(|&x| vec![x]).collect();
    k.pad_to(total);
    k
}

/// Builds a synthetic workflow with the structure's node count for `size`.
/// Per-service parameters are drawn uniformly from `params`; exactly
/// `round(n * unmovable_fraction)` services are unmovable, pinned to the
/// location of a feeding source when they have one. Deterministic per seed.
pub fn generate<T: Scalar>(
    structure: Structure,
    size: Size,
    clouds: &[String],
    params: &GeneratorParams<T>,
    seed: u64,
) -> StreamWorkflow<T> {
    assert!(!clouds.is_empty(), "at least one cloud is required");
    let total = structure.node_count(size);
    let skel = match structure {
        Structure::Montage => montage(total),
        Structure::Inspiral => inspiral(total),
        Structure::Epigenomics => epigenomics(total),
        Structure::CyberShake => cybershake(total),
    };
    debug_assert_eq!(skel.names.len(), total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = skel.names.len();

    let sources: Vec<ExternalSource> = (0..skel.sources.len())
        .map(|i| ExternalSource {
            id: format!("ex_{i}"),
            rate_units: params.source_rate_units,
            location_cloud: clouds[rng.gen_range(0..clouds.len())].clone(),
        })
        .collect();
    let mut feeder: Vec<Option<usize>> = vec![None; n];
    for (p, fed) in skel.sources.iter().enumerate() {
        for &s in fed {
            feeder[s].get_or_insert(p);
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let unmovable_count = (n as f64 * params.unmovable_fraction).round() as usize;
    let mut unmovable = vec![false; n];
    for &i in order.iter().take(unmovable_count) {
        unmovable[i] = true;
    }

    let sample = |rng: &mut ChaCha8Rng, (lo, hi): (T, T)| -> T {
        let (lo, hi) = (lo.as_f64(), hi.as_f64());
        T::lit(if hi > lo { rng.gen_range(lo..=hi) } else { lo })
    };
    let services = (0..n)
        .map(|i| {
            let mi_per_mb = sample(&mut rng, params.mi_per_mb);
            let gamma = sample(&mut rng, params.gamma);
            let pinned_cloud = unmovable[i].then(|| match feeder[i] {
                Some(p) => sources[p].location_cloud.clone(),
                None => clouds[rng.gen_range(0..clouds.len())].clone(),
            });
            Service {
                id: skel.names[i].clone(),
                mi_per_mb,
                gamma,
                mobility: if unmovable[i] { Mobility::Unmovable } else { Mobility::Movable },
                pinned_cloud,
            }
        })
        .collect();

    let replica = |from: String, to: usize| Edge {
        from,
        to: skel.names[to].clone(),
        percent: T::one(),
        mode: DataMode::Replica,
    };
    let mut edges: Vec<Edge<T>> = Vec::new();
    for (p, fed) in skel.sources.iter().enumerate() {
        edges.extend(fed.iter().map(|&s| replica(sources[p].id.clone(), s)));
    }
    edges.extend(skel.edges.iter().map(|&(a, b)| replica(skel.names[a].clone(), b)));

    let doc = WorkflowDocument {
        format_version: WORKFLOW_FORMAT_VERSION,
        name: structure.workflow_name(size),
        min_dp_unit: params.min_dp_unit,
        unit_dp_rate: params.unit_dp_rate,
        services,
        sources,
        edges,
    };
    StreamWorkflow::try_from(doc).expect("generated workflows are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clouds() -> Vec<String> {
        vec!["amazon".into(), "google".into(), "azure".into()]
    }

    #[test]
    fn node_counts_match_named_workflows() {
        for s in Structure::ALL {
            for z in Size::ALL {
                let w = generate::<f64>(s, z, &clouds(), &GeneratorParams::default(), 7);
                assert_eq!(w.service_count(), s.node_count(z), "{}", s.workflow_name(z));
                assert_eq!(w.name(), s.workflow_name(z));
                let unmovable = w.services().iter().filter(|x| x.mobility == Mobility::Unmovable).count();
                assert_eq!(unmovable, (w.service_count() as f64 * 0.5).round() as usize);
                // Every service receives data.
                for sv in w.service_ids() {
                    assert!(
                        !w.parents(sv).is_empty() || !w.source_inputs(sv).is_empty(),
                        "{} has no input",
                        w.service(sv).id
                    );
                }
            }
        }
        assert_eq!(Structure::Montage.node_count(Size::Small), 25);
        assert_eq!(Structure::Epigenomics.node_count(Size::Medium), 46);
    }

    #[test]
    fn parameters_lie_in_ranges() {
        let w = generate::<f64>(Structure::CyberShake, Size::Large, &clouds(), &GeneratorParams::default(), 3);
        for s in w.services() {
            assert!((1348.0..=2674.0).contains(&s.mi_per_mb));
            assert!((0.01..=0.5).contains(&s.gamma));
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let p = GeneratorParams::<f64>::default();
        let a = generate(Structure::Inspiral, Size::Medium, &clouds(), &p, 11).to_json();
        let b = generate(Structure::Inspiral, Size::Medium, &clouds(), &p, 11).to_json();
        let c = generate(Structure::Inspiral, Size::Medium, &clouds(), &p, 12).to_json();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn parse_names() {
        assert_eq!("CyberShake".parse::<Structure>().unwrap(), Structure::CyberShake);
        assert_eq!("large".parse::<Size>().unwrap(), Size::Large);
        assert!("huge".parse::<Size>().is_err());
    }
}
