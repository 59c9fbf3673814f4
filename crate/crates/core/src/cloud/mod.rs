//! Multicloud system model: clouds, VM offers, provisioned instances and
//! the inter-cloud latency / bandwidth / transfer-cost matrices.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub const CATALOG_FORMAT_VERSION: u32 = 1;

const DEFAULT_CATALOG: &str = include_str!("../../catalog/multicloud-default.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CloudIdx(pub usize);

impl fmt::Display for CloudIdx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// A VM offer of one cloud, identified by cloud and position in its list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OfferRef {
    pub cloud: CloudIdx,
    pub offer: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstanceId(pub u64);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct VmOffer<T> {
    pub name: String,
    /// Compute rating (MIPS).
    pub mips: T,
    /// Price in cents per second.
    pub price: T,
    /// Boot delay in whole seconds.
    pub boot_time: u32,
    /// Set when the price was not published and was filled in.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub interpolated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Cloud<T> {
    pub id: String,
    pub offers: Vec<VmOffer<T>>,
}

/// A provisioned VM. Usable from `ready_at` onwards; billed from
/// `provisioned_at`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VmInstance {
    pub id: InstanceId,
    pub offer: OfferRef,
    pub provisioned_at: u64,
    pub ready_at: u64,
}

impl VmInstance {
    pub fn cloud(&self) -> CloudIdx {
        self.offer.cloud
    }

    pub fn is_ready(&self, now: u64) -> bool {
        now >= self.ready_at
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Span<T> {
    pub min: T,
    pub max: T,
}

impl<T: Scalar> Span<T> {
    pub fn new(min: T, max: T) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.min && x <= self.max
    }

    fn sample(&self, rng: &mut impl Rng) -> T {
        let (lo, hi) = (self.min.as_f64(), self.max.as_f64());
        if hi > lo {
            T::lit(rng.gen_range(lo..=hi)).max(self.min).min(self.max)
        } else {
            self.min
        }
    }
}

/// Value ranges for sampled network matrices. Intra-cloud entries use the
/// ingress ranges and carry no transfer cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NetworkRanges<T> {
    pub ingress_bandwidth: Span<T>,
    pub ingress_latency: Span<T>,
    pub egress_bandwidth: Span<T>,
    pub egress_latency: Span<T>,
    pub egress_transfer_cost: Span<T>,
}

impl<T: Scalar> Default for NetworkRanges<T> {
    fn default() -> Self {
        let s = |a, b| Span::new(T::lit(a), T::lit(b));
        Self {
            ingress_bandwidth: s(615.0, 926.0),
            ingress_latency: s(0.00064, 0.00086),
            egress_bandwidth: s(122.0, 218.0),
            egress_latency: s(0.021, 0.031),
            egress_transfer_cost: s(0.013, 0.019),
        }
    }
}

impl<T: Scalar> NetworkRanges<T> {
    fn check(&self) -> Result<(), CatalogError> {
        for (name, span) in [
            ("ingress_bandwidth", &self.ingress_bandwidth),
            ("ingress_latency", &self.ingress_latency),
            ("egress_bandwidth", &self.egress_bandwidth),
            ("egress_latency", &self.egress_latency),
            ("egress_transfer_cost", &self.egress_transfer_cost),
        ] {
            if !(span.min <= span.max) {
                return Err(CatalogError::InvertedRange(name));
            }
        }
        Ok(())
    }
}

/// Square cloud-by-cloud matrices: latency (s), bandwidth (MB/s) and
/// transfer cost (cents/MB).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NetworkMatrices<T> {
    pub latency: Vec<Vec<T>>,
    pub bandwidth: Vec<Vec<T>>,
    pub transfer_cost: Vec<Vec<T>>,
}

/// Samples network matrices for `clouds` clouds. Symmetric; deterministic
/// per seed.
pub fn sample_network<T: Scalar>(
    clouds: usize,
    ranges: &NetworkRanges<T>,
    seed: u64,
) -> Result<NetworkMatrices<T>, CatalogError> {
    ranges.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = NetworkMatrices {
        latency: vec![vec![T::zero(); clouds]; clouds],
        bandwidth: vec![vec![T::zero(); clouds]; clouds],
        transfer_cost: vec![vec![T::zero(); clouds]; clouds],
    };
    for i in 0..clouds {
        for j in i..clouds {
            let (bw, lat, cost) = if i == j {
                (
                    ranges.ingress_bandwidth.sample(&mut rng),
                    ranges.ingress_latency.sample(&mut rng),
                    T::zero(),
                )
            } else {
                (
                    ranges.egress_bandwidth.sample(&mut rng),
                    ranges.egress_latency.sample(&mut rng),
                    ranges.egress_transfer_cost.sample(&mut rng),
                )
            };
            for (a, b) in [(i, j), (j, i)] {
                m.bandwidth[a][b] = bw;
                m.latency[a][b] = lat;
                m.transfer_cost[a][b] = cost;
            }
        }
    }
    Ok(m)
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog not found: {0}")]
    NotFound(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("catalog schema violation: {0}")]
    Schema(#[from] toml::de::Error),
    #[error("unsupported catalog format_version {0}")]
    FormatVersion(u32),
    #[error("catalog has no clouds")]
    NoClouds,
    #[error("duplicate cloud id `{0}`")]
    DuplicateCloud(String),
    #[error("cloud `{0}`: cloud must have ≥1 offer")]
    EmptyCloud(String),
    #[error("cloud `{cloud}`, offer `{offer}`: {field} must be > 0")]
    BadOffer {
        cloud: String,
        offer: String,
        field: &'static str,
    },
    #[error("network matrix `{0}` must be {1}x{1}")]
    MatrixShape(&'static str, usize),
    #[error("network matrix `{0}`: diagonal must be 0")]
    NonZeroDiagonal(&'static str),
    #[error("network matrix `{0}`: entries must be ≥ 0")]
    Negative(&'static str),
    #[error("network matrix `bandwidth`: entries must be > 0")]
    NonPositiveBandwidth,
    #[error("range `{0}`: min > max")]
    InvertedRange(&'static str),
    #[error("network needs either inline matrices or a sampling seed")]
    MissingNetwork,
    #[error("boot-time range min > max")]
    BootRange,
    #[error("unknown cloud `{0}`")]
    UnknownCloud(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct OfferDocument<T> {
    name: String,
    mips: T,
    price: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boot_time: Option<u32>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    interpolated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct CloudDocument<T> {
    id: String,
    offers: Vec<OfferDocument<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootSampling {
    pub seed: u64,
    /// Inclusive range in seconds.
    pub range: (u32, u32),
}

impl Default for BootSampling {
    fn default() -> Self {
        Self { seed: 0, range: (30, 100) }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct NetworkDocument<T> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ranges: Option<NetworkRanges<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    latency: Option<Vec<Vec<T>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bandwidth: Option<Vec<Vec<T>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transfer_cost: Option<Vec<Vec<T>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct CatalogDocument<T> {
    format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boot: Option<BootSampling>,
    network: NetworkDocument<T>,
    clouds: Vec<CloudDocument<T>>,
}

/// The validated multicloud catalog. Immutable after loading.
#[derive(Clone, Debug, PartialEq)]
pub struct CloudCatalog<T> {
    clouds: Vec<Cloud<T>>,
    network: NetworkMatrices<T>,
    ranges: NetworkRanges<T>,
    network_seed: Option<u64>,
    boot: Option<BootSampling>,
}

impl<T: Scalar> CloudCatalog<T> {
    /// The shipped three-cloud catalog (Amazon EC2, Google Compute Engine,
    /// Microsoft Azure; 40 offers).
    pub fn default_catalog() -> Self {
        Self::from_toml(DEFAULT_CATALOG).expect("shipped catalog is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CatalogError::NotFound(path.display().to_string()),
            _ => CatalogError::Io(e),
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, CatalogError> {
        let doc: CatalogDocument<T> = toml::from_str(text)?;
        Self::from_document(doc)
    }

    fn from_document(doc: CatalogDocument<T>) -> Result<Self, CatalogError> {
        if doc.format_version != CATALOG_FORMAT_VERSION {
            return Err(CatalogError::FormatVersion(doc.format_version));
        }
        if doc.clouds.is_empty() {
            return Err(CatalogError::NoClouds);
        }
        let boot_spec = doc.boot;
        let sampling = boot_spec.unwrap_or_default();
        if sampling.range.0 > sampling.range.1 {
            return Err(CatalogError::BootRange);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
        let mut clouds = Vec::with_capacity(doc.clouds.len());
        for c in doc.clouds {
            if clouds.iter().any(|x: &Cloud<T>| x.id == c.id) {
                return Err(CatalogError::DuplicateCloud(c.id));
            }
            if c.offers.is_empty() {
                return Err(CatalogError::EmptyCloud(c.id));
            }
            let mut offers = Vec::with_capacity(c.offers.len());
            for o in c.offers {
                let drawn = rng.gen_range(sampling.range.0..=sampling.range.1);
                let bad = |field| CatalogError::BadOffer {
                    cloud: c.id.clone(),
                    offer: o.name.clone(),
                    field,
                };
                if !(o.mips > T::zero()) {
                    return Err(bad("mips"));
                }
                if !(o.price > T::zero()) {
                    return Err(bad("price"));
                }
                offers.push(VmOffer {
                    boot_time: o.boot_time.unwrap_or(drawn),
                    name: o.name,
                    mips: o.mips,
                    price: o.price,
                    interpolated: o.interpolated,
                });
            }
            clouds.push(Cloud { id: c.id, offers });
        }

        let n = clouds.len();
        let ranges = doc.network.ranges.unwrap_or_default();
        ranges.check()?;
        let network = match (doc.network.latency, doc.network.bandwidth, doc.network.transfer_cost) {
            (Some(latency), Some(bandwidth), Some(transfer_cost)) => NetworkMatrices {
                latency,
                bandwidth,
                transfer_cost,
            },
            _ => match doc.network.seed {
                Some(seed) => sample_network(n, &ranges, seed)?,
                None => return Err(CatalogError::MissingNetwork),
            },
        };
        check_matrices(&network, n)?;
        Ok(Self {
            clouds,
            network,
            ranges,
            network_seed: doc.network.seed,
            boot: boot_spec,
        })
    }

    /// Serializes the resolved catalog: explicit boot times and inline
    /// matrices, with the sampling seeds kept for provenance.
    pub fn to_toml(&self) -> String {
        let doc = CatalogDocument {
            format_version: CATALOG_FORMAT_VERSION,
            boot: self.boot,
            network: NetworkDocument {
                seed: self.network_seed,
                ranges: Some(self.ranges.clone()),
                latency: Some(self.network.latency.clone()),
                bandwidth: Some(self.network.bandwidth.clone()),
                transfer_cost: Some(self.network.transfer_cost.clone()),
            },
            clouds: self
                .clouds
                .iter()
                .map(|c| CloudDocument {
                    id: c.id.clone(),
                    offers: c
                        .offers
                        .iter()
                        .map(|o| OfferDocument {
                            name: o.name.clone(),
                            mips: o.mips,
                            price: o.price,
                            boot_time: Some(o.boot_time),
                            interpolated: o.interpolated,
                        })
                        .collect(),
                })
                .collect(),
        };
        toml::to_string(&doc).expect("catalog serializes")
    }

    pub fn clouds(&self) -> &[Cloud<T>] {
        &self.clouds
    }

    pub fn cloud(&self, c: CloudIdx) -> &Cloud<T> {
        &self.clouds[c.0]
    }

    pub fn cloud_count(&self) -> usize {
        self.clouds.len()
    }

    pub fn cloud_ids(&self) -> Vec<String> {
        self.clouds.iter().map(|c| c.id.clone()).collect()
    }

    pub fn cloud_idx(&self, id: &str) -> Result<CloudIdx, CatalogError> {
        self.clouds
            .iter()
            .position(|c| c.id == id)
            .map(CloudIdx)
            .ok_or_else(|| CatalogError::UnknownCloud(id.to_string()))
    }

    pub fn offer(&self, r: OfferRef) -> &VmOffer<T> {
        &self.clouds[r.cloud.0].offers[r.offer]
    }

    /// Every offer of every cloud, in catalog order.
    pub fn all_offers(&self) -> impl Iterator<Item = OfferRef> + '_ {
        self.clouds.iter().enumerate().flat_map(|(c, cloud)| {
            (0..cloud.offers.len()).map(move |offer| OfferRef { cloud: CloudIdx(c), offer })
        })
    }

    pub fn offers_in(&self, c: CloudIdx) -> impl Iterator<Item = OfferRef> + '_ {
        (0..self.clouds[c.0].offers.len()).map(move |offer| OfferRef { cloud: c, offer })
    }

    pub fn find_offer(&self, name: &str) -> Option<OfferRef> {
        self.all_offers().find(|&r| self.offer(r).name == name)
    }

    pub fn latency(&self, a: CloudIdx, b: CloudIdx) -> T {
        self.network.latency[a.0][b.0]
    }

    pub fn bandwidth(&self, a: CloudIdx, b: CloudIdx) -> T {
        self.network.bandwidth[a.0][b.0]
    }

    pub fn transfer_cost(&self, a: CloudIdx, b: CloudIdx) -> T {
        self.network.transfer_cost[a.0][b.0]
    }

    pub fn network(&self) -> &NetworkMatrices<T> {
        &self.network
    }

    pub fn ranges(&self) -> &NetworkRanges<T> {
        &self.ranges
    }

    pub fn network_seed(&self) -> Option<u64> {
        self.network_seed
    }

    pub fn max_boot_time(&self) -> u32 {
        self.clouds
            .iter()
            .flat_map(|c| c.offers.iter().map(|o| o.boot_time))
            .max()
            .unwrap_or(0)
    }

    /// Returns a copy with the given network matrices.
    pub fn with_network(&self, network: NetworkMatrices<T>) -> Result<Self, CatalogError> {
        check_matrices(&network, self.clouds.len())?;
        Ok(Self {
            network,
            network_seed: None,
            ..self.clone()
        })
    }
}

fn check_matrices<T: Scalar>(m: &NetworkMatrices<T>, n: usize) -> Result<(), CatalogError> {
    for (name, mat) in [
        ("latency", &m.latency),
        ("bandwidth", &m.bandwidth),
        ("transfer_cost", &m.transfer_cost),
    ] {
        if mat.len() != n || mat.iter().any(|r| r.len() != n) {
            return Err(CatalogError::MatrixShape(name, n));
        }
        if mat.iter().flatten().any(|&x| !(x >= T::zero())) {
            return Err(CatalogError::Negative(name));
        }
    }
    if (0..n).any(|i| m.transfer_cost[i][i] != T::zero()) {
        return Err(CatalogError::NonZeroDiagonal("transfer_cost"));
    }
    if m.bandwidth.iter().flatten().any(|&x| !(x > T::zero())) {
        return Err(CatalogError::NonPositiveBandwidth);
    }
    Ok(())
}
