//! Grouped hierarchy structure, aligned death/exposure/rate panels, and
//! summing matrices.
//!
//! A grouped hierarchy crosses one or two attributes (say sex and region).
//! Every node is identified by a [`GroupKey`] giving, per attribute, either a
//! concrete value or the marginal total. Nodes are kept in a canonical order
//! so matrix layouts and file formats are stable:
//!
//! 1. the all-total top node,
//! 2. attribute-1 marginal groups in declaration order,
//! 3. attribute-2 marginal groups in declaration order,
//! 4. bottom (fully specified) keys, attribute-1 outer, attribute-2 inner.
//!
//! Summing matrices map the m_K bottom series to all m series. In counts
//! mode entries are 0/1; in rates mode each aggregation row carries the
//! exposure share of every bottom descendant relative to the row's node, so
//! the row maps bottom rates to the node's rate and its nonzero weights sum
//! to one.

use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("hierarchy supports 1 or 2 grouping attributes, got {0}")]
    AttributeCount(usize),
    #[error("attribute {name:?} declares no values")]
    EmptyDomain { name: String },
    #[error("attribute {name:?} repeats value {value:?}")]
    DuplicateValue { name: String, value: String },
    #[error("expected exposures for {expected} bottom nodes or {all} total nodes, got {got}")]
    ExposureLength { expected: usize, all: usize, got: usize },
    #[error("node {node} has nonpositive exposure {value} at {time}")]
    NonpositiveExposure { node: String, time: i64, value: f64 },
    #[error(
        "node {node} exposure {supplied} does not match its child sum {derived} at {time} \
         (relative tolerance 1e-9)"
    )]
    IncoherentExposure { node: String, time: i64, supplied: f64, derived: f64 },
    #[error("node {node} has negative deaths {value} at {time}")]
    NegativeDeaths { node: String, time: i64, value: f64 },
    #[error("node {node} has a non-finite {field} at {time}")]
    NonFinite { node: String, time: i64, field: &'static str },
    #[error("expected {expected} bottom series, got {got}")]
    BottomCount { expected: usize, got: usize },
    #[error("series for node {node} has length {got}, time axis has {expected}")]
    MisalignedPanel { node: String, expected: usize, got: usize },
}

/// Per-attribute coordinates of one node; `None` is the marginal total over
/// that attribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupKey {
    pub values: Vec<Option<String>>,
}

impl GroupKey {
    pub fn is_top(&self) -> bool {
        self.values.iter().all(|v| v.is_none())
    }

    pub fn is_bottom(&self) -> bool {
        self.values.iter().all(|v| v.is_some())
    }

    /// Human-readable label: attribute values joined by `*`, totals as `T`.
    pub fn label(&self) -> String {
        self.values
            .iter()
            .map(|v| v.as_deref().unwrap_or("T"))
            .collect::<Vec<_>>()
            .join("*")
    }
}

/// The node set of a grouped hierarchy in canonical order, with per-node
/// level ids and precomputed bottom-descendant lists.
#[derive(Debug, Clone)]
pub struct GroupedHierarchy {
    attr_names: Vec<String>,
    attr_domains: Vec<Vec<String>>,
    keys: Vec<GroupKey>,
    levels: Vec<usize>,
    level_names: Vec<String>,
    /// Bottom-relative column indices covered by each node.
    descendants: Vec<Vec<usize>>,
    index: BTreeMap<GroupKey, usize>,
    m: usize,
    m_k: usize,
}

impl GroupedHierarchy {
    /// Total number of series (all levels).
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of bottom-level series.
    pub fn m_k(&self) -> usize {
        self.m_k
    }

    /// First canonical index of the bottom block.
    pub fn bottom_start(&self) -> usize {
        self.m - self.m_k
    }

    pub fn keys(&self) -> &[GroupKey] {
        &self.keys
    }

    pub fn key(&self, node: usize) -> &GroupKey {
        &self.keys[node]
    }

    pub fn attr_names(&self) -> &[String] {
        &self.attr_names
    }

    pub fn attr_domains(&self) -> &[Vec<String>] {
        &self.attr_domains
    }

    /// Level id of a node: 0 = top, then one level per attribute margin in
    /// declaration order, last = bottom.
    pub fn level_of(&self, node: usize) -> usize {
        self.levels[node]
    }

    pub fn level_names(&self) -> &[String] {
        &self.level_names
    }

    pub fn index_of(&self, key: &GroupKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    /// Bottom-relative indices of the bottom series aggregated by `node`.
    pub fn descendants(&self, node: usize) -> &[usize] {
        &self.descendants[node]
    }
}

/// Builds the canonical node set for the given attributes.
///
/// Each attribute is a `(name, values)` pair; values keep declaration order.
pub fn build_hierarchy(
    attributes: &[(String, Vec<String>)],
) -> Result<GroupedHierarchy, HierarchyError> {
    let n_attr = attributes.len();
    if n_attr == 0 || n_attr > 2 {
        return Err(HierarchyError::AttributeCount(n_attr));
    }
    for (name, values) in attributes {
        if values.is_empty() {
            return Err(HierarchyError::EmptyDomain { name: name.clone() });
        }
        let mut seen = std::collections::BTreeSet::new();
        for v in values {
            if !seen.insert(v) {
                return Err(HierarchyError::DuplicateValue {
                    name: name.clone(),
                    value: v.clone(),
                });
            }
        }
    }

    let attr_names: Vec<String> = attributes.iter().map(|(n, _)| n.clone()).collect();
    let attr_domains: Vec<Vec<String>> = attributes.iter().map(|(_, v)| v.clone()).collect();

    let mut keys = Vec::new();
    let mut levels = Vec::new();
    keys.push(GroupKey { values: vec![None; n_attr] });
    levels.push(0);
    if n_attr == 1 {
        for v in &attr_domains[0] {
            keys.push(GroupKey { values: vec![Some(v.clone())] });
            levels.push(1);
        }
    } else {
        for v in &attr_domains[0] {
            keys.push(GroupKey { values: vec![Some(v.clone()), None] });
            levels.push(1);
        }
        for v in &attr_domains[1] {
            keys.push(GroupKey { values: vec![None, Some(v.clone())] });
            levels.push(2);
        }
        for v1 in &attr_domains[0] {
            for v2 in &attr_domains[1] {
                keys.push(GroupKey { values: vec![Some(v1.clone()), Some(v2.clone())] });
                levels.push(3);
            }
        }
    }

    let m = keys.len();
    let m_k: usize = attr_domains.iter().map(|d| d.len()).product();
    let bottom_start = m - m_k;

    let level_names = if n_attr == 1 {
        vec!["total".to_string(), attr_names[0].clone()]
    } else {
        vec![
            "total".to_string(),
            attr_names[0].clone(),
            attr_names[1].clone(),
            format!("{} x {}", attr_names[0], attr_names[1]),
        ]
    };

    let descendants: Vec<Vec<usize>> = keys
        .iter()
        .map(|key| {
            (0..m_k)
                .filter(|&j| {
                    let bottom = &keys[bottom_start + j];
                    key.values
                        .iter()
                        .zip(&bottom.values)
                        .all(|(kv, bv)| kv.is_none() || kv == bv)
                })
                .collect()
        })
        .collect();

    let index: BTreeMap<GroupKey, usize> =
        keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();

    Ok(GroupedHierarchy {
        attr_names,
        attr_domains,
        keys,
        levels,
        level_names,
        descendants,
        index,
        m,
        m_k,
    })
}

/// Mode tag of a summing matrix: plain 0/1 count aggregation, or
/// exposure-ratio weights generated from the exposures at one time point
/// (an observed year or a forecast step).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SMode {
    Counts,
    Rates { time: i64 },
}

/// m x m_K matrix mapping bottom series to every series in the hierarchy.
#[derive(Debug, Clone)]
pub struct SummingMatrix {
    pub mode: SMode,
    pub matrix: DMatrix<f64>,
}

impl SummingMatrix {
    pub fn m(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn m_k(&self) -> usize {
        self.matrix.ncols()
    }
}

/// 0/1 summing matrix: row i has a one in every bottom column the node
/// aggregates; the bottom block is the identity.
pub fn summing_matrix_counts(h: &GroupedHierarchy) -> SummingMatrix {
    let mut matrix = DMatrix::zeros(h.m(), h.m_k());
    for i in 0..h.m() {
        for &j in h.descendants(i) {
            matrix[(i, j)] = 1.0;
        }
    }
    SummingMatrix { mode: SMode::Counts, matrix }
}

/// Exposure-weighted summing matrix at one time point.
///
/// `exposures` holds either the m_K bottom exposures in canonical bottom
/// order (parent exposures are derived by summation) or all m node exposures
/// in canonical order (parent values are validated against their child sums
/// to relative tolerance 1e-9). `time` only labels the matrix and error
/// messages.
pub fn summing_matrix_rates(
    h: &GroupedHierarchy,
    exposures: &[f64],
    time: i64,
) -> Result<SummingMatrix, HierarchyError> {
    let (m, m_k) = (h.m(), h.m_k());
    let bottom: &[f64] = if exposures.len() == m_k {
        exposures
    } else if exposures.len() == m {
        &exposures[h.bottom_start()..]
    } else {
        return Err(HierarchyError::ExposureLength { expected: m_k, all: m, got: exposures.len() });
    };

    for (j, &e) in bottom.iter().enumerate() {
        let node = h.key(h.bottom_start() + j).label();
        if !e.is_finite() {
            return Err(HierarchyError::NonFinite { node, time, field: "exposure" });
        }
        if e <= 0.0 {
            return Err(HierarchyError::NonpositiveExposure { node, time, value: e });
        }
    }

    let node_exposure: Vec<f64> = (0..m)
        .map(|i| h.descendants(i).iter().map(|&j| bottom[j]).sum::<f64>())
        .collect();

    if exposures.len() == m {
        for i in 0..m {
            let supplied = exposures[i];
            let derived = node_exposure[i];
            if !supplied.is_finite() {
                return Err(HierarchyError::NonFinite {
                    node: h.key(i).label(),
                    time,
                    field: "exposure",
                });
            }
            if (supplied - derived).abs() > 1e-9 * derived.abs() {
                return Err(HierarchyError::IncoherentExposure {
                    node: h.key(i).label(),
                    time,
                    supplied,
                    derived,
                });
            }
        }
    }

    let mut matrix = DMatrix::zeros(m, m_k);
    for i in 0..m {
        for &j in h.descendants(i) {
            matrix[(i, j)] = bottom[j] / node_exposure[i];
        }
    }
    Ok(SummingMatrix { mode: SMode::Rates { time }, matrix })
}

/// Time-aligned panel of deaths, exposures, and rates for every node.
///
/// Construct through [`aggregate_panel`]; parents are always recomputed from
/// their bottom series, so the panel is coherent by construction.
#[derive(Debug, Clone)]
pub struct PanelSeries {
    hierarchy: GroupedHierarchy,
    years: Vec<i64>,
    deaths: Vec<Vec<f64>>,
    exposures: Vec<Vec<f64>>,
    rates: Vec<Vec<f64>>,
}

impl PanelSeries {
    pub fn hierarchy(&self) -> &GroupedHierarchy {
        &self.hierarchy
    }

    /// Length of the common time axis.
    pub fn n(&self) -> usize {
        self.years.len()
    }

    pub fn m(&self) -> usize {
        self.hierarchy.m()
    }

    pub fn years(&self) -> &[i64] {
        &self.years
    }

    pub fn rate_series(&self, node: usize) -> &[f64] {
        &self.rates[node]
    }

    pub fn exposure_series(&self, node: usize) -> &[f64] {
        &self.exposures[node]
    }

    pub fn deaths_series(&self, node: usize) -> &[f64] {
        &self.deaths[node]
    }

    /// All m rates at time index `t` (0-based), canonical node order.
    pub fn rates_at(&self, t: usize) -> DVector<f64> {
        DVector::from_iterator(self.m(), self.rates.iter().map(|r| r[t]))
    }

    /// Bottom exposures at time index `t` (0-based), canonical bottom order.
    pub fn bottom_exposures_at(&self, t: usize) -> Vec<f64> {
        let start = self.hierarchy.bottom_start();
        (start..self.m()).map(|i| self.exposures[i][t]).collect()
    }

    /// The first `n` time points of the panel.
    pub fn restrict_prefix(&self, n: usize) -> PanelSeries {
        assert!(n <= self.n());
        PanelSeries {
            hierarchy: self.hierarchy.clone(),
            years: self.years[..n].to_vec(),
            deaths: self.deaths.iter().map(|s| s[..n].to_vec()).collect(),
            exposures: self.exposures.iter().map(|s| s[..n].to_vec()).collect(),
            rates: self.rates.iter().map(|s| s[..n].to_vec()).collect(),
        }
    }
}

/// Builds the full panel from bottom-level deaths and exposures.
///
/// Deaths and exposures are summed upward; every rate is the ratio of the
/// node's summed deaths to its summed exposures (rates are never averaged
/// directly). Zero deaths are legal; zero or negative exposure is an error.
pub fn aggregate_panel(
    h: &GroupedHierarchy,
    years: &[i64],
    bottom_deaths: &[Vec<f64>],
    bottom_exposures: &[Vec<f64>],
) -> Result<PanelSeries, HierarchyError> {
    let m_k = h.m_k();
    if bottom_deaths.len() != m_k {
        return Err(HierarchyError::BottomCount { expected: m_k, got: bottom_deaths.len() });
    }
    if bottom_exposures.len() != m_k {
        return Err(HierarchyError::BottomCount { expected: m_k, got: bottom_exposures.len() });
    }
    let n = years.len();
    for j in 0..m_k {
        let node = || h.key(h.bottom_start() + j).label();
        if bottom_deaths[j].len() != n {
            return Err(HierarchyError::MisalignedPanel {
                node: node(),
                expected: n,
                got: bottom_deaths[j].len(),
            });
        }
        if bottom_exposures[j].len() != n {
            return Err(HierarchyError::MisalignedPanel {
                node: node(),
                expected: n,
                got: bottom_exposures[j].len(),
            });
        }
        for t in 0..n {
            let (d, e) = (bottom_deaths[j][t], bottom_exposures[j][t]);
            if !d.is_finite() {
                return Err(HierarchyError::NonFinite { node: node(), time: years[t], field: "deaths" });
            }
            if !e.is_finite() {
                return Err(HierarchyError::NonFinite {
                    node: node(),
                    time: years[t],
                    field: "exposure",
                });
            }
            if d < 0.0 {
                return Err(HierarchyError::NegativeDeaths { node: node(), time: years[t], value: d });
            }
            if e <= 0.0 {
                return Err(HierarchyError::NonpositiveExposure {
                    node: node(),
                    time: years[t],
                    value: e,
                });
            }
        }
    }

    let m = h.m();
    let mut deaths = vec![vec![0.0; n]; m];
    let mut exposures = vec![vec![0.0; n]; m];
    let mut rates = vec![vec![0.0; n]; m];
    for i in 0..m {
        for t in 0..n {
            let mut d = 0.0;
            let mut e = 0.0;
            for &j in h.descendants(i) {
                d += bottom_deaths[j][t];
                e += bottom_exposures[j][t];
            }
            deaths[i][t] = d;
            exposures[i][t] = e;
            rates[i][t] = d / e;
        }
    }

    Ok(PanelSeries { hierarchy: h.clone(), years: years.to_vec(), deaths, exposures, rates })
}
