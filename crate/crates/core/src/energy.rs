//! Pixel-labeling energy: motion-appearance and prediction unaries with a
//! contrast-sensitive Potts pairwise term, minimized by an exact binary cut
//! or by alpha expansion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::FgBgGmm;
use crate::maxflow::{min_cut, FlowNetwork, Side};
use crate::model::{Color, GridAdjacency, LabelMap, MotionMask, RgbImage, ScoreMap, BACKGROUND};

/// Scores are clamped to this before taking the log.
pub const SCORE_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseParams {
    pub lambda: f64,
    pub gamma: f64,
    /// Chebyshev half-width of the motion-boundary band.
    pub boundary_band: usize,
}

impl Default for PairwiseParams {
    fn default() -> Self {
        Self { lambda: 10.0, gamma: 0.5, boundary_band: 2 }
    }
}

impl PairwiseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidValue(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidValue(format!("gamma must be positive, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Pixels close to a motion-segment edge, where the smoothness term is
/// switched off between pairs that both lie inside.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryBand {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BoundaryBand {
    /// Band of all pixels within Chebyshev distance `half_width` of a mask
    /// boundary pixel (a pixel with a 4-neighbor of the opposite value).
    pub fn from_mask(mask: &MotionMask, half_width: usize) -> Self {
        let (w, h) = (mask.width(), mask.height());
        let grid = GridAdjacency::new(w, h);
        let boundary: Vec<bool> = (0..w * h)
            .map(|i| grid.neighbors(i).any(|j| mask.values()[j] != mask.values()[i]))
            .collect();
        // separable dilation with a (2r+1)^2 square
        let r = half_width;
        let mut rows = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let lo = x.saturating_sub(r);
                let hi = (x + r).min(w - 1);
                rows[y * w + x] = (lo..=hi).any(|xx| boundary[y * w + xx]);
            }
        }
        let mut data = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let lo = y.saturating_sub(r);
                let hi = (y + r).min(h - 1);
                data[y * w + x] = (lo..=hi).any(|yy| rows[yy * w + x]);
            }
        }
        Self { width: w, height: h, data }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch("band size".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn contains(&self, index: usize) -> bool {
        self.data[index]
    }
}

/// Potts weight between neighboring pixels `i` and `j` (given as `(x, y)`):
/// `λ (1 − Δ) exp(−γ‖z_i − z_j‖²) / dist(i, j)`.
pub fn potts_weight(
    zi: &Color,
    zj: &Color,
    i: (usize, usize),
    j: (usize, usize),
    band: &BoundaryBand,
    params: &PairwiseParams,
) -> f64 {
    let w = band.width;
    if band.contains(i.1 * w + i.0) && band.contains(j.1 * w + j.0) {
        return 0.0;
    }
    let dx = i.0 as f64 - j.0 as f64;
    let dy = i.1 as f64 - j.1 as f64;
    let dist = (dx * dx + dy * dy).sqrt();
    let contrast: f64 = (0..3).map(|c| (zi[c] - zj[c]).powi(2)).sum();
    params.lambda * (-params.gamma * contrast).exp() / dist
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Potts energy over an arbitrary graph.
///
/// Labels inside the model are positions in `labels`; `unary[node * n + k]`
/// is the cost of node taking `labels[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PottsGraph {
    labels: Vec<u8>,
    node_count: usize,
    unary: Vec<f64>,
    edges: Vec<WeightedEdge>,
}

impl PottsGraph {
    /// `labels` must be strictly increasing.
    pub fn new(labels: Vec<u8>, node_count: usize, unary: Vec<f64>, edges: Vec<WeightedEdge>) -> Result<Self> {
        if labels.is_empty() || !labels.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidValue("labels must be nonempty and strictly increasing".into()));
        }
        if unary.len() != node_count * labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} unary costs for {node_count} nodes x {} labels",
                unary.len(),
                labels.len()
            )));
        }
        if let Some(u) = unary.iter().find(|u| !u.is_finite()) {
            return Err(Error::InvalidValue(format!("non-finite unary cost {u}")));
        }
        for e in &edges {
            if e.a == e.b || e.a >= node_count || e.b >= node_count {
                return Err(Error::InvalidValue(format!("bad edge {}-{}", e.a, e.b)));
            }
            if !(e.weight >= 0.0 && e.weight.is_finite()) {
                return Err(Error::InvalidValue(format!("pairwise weight {} must be nonnegative", e.weight)));
            }
        }
        Ok(Self { labels, node_count, unary, edges })
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[WeightedEdge] {
        &self.edges
    }

    pub fn unary(&self, node: usize, slot: usize) -> f64 {
        self.unary[node * self.labels.len() + slot]
    }

    fn slot_of(&self, label: u8) -> Option<usize> {
        self.labels.binary_search(&label).ok()
    }

    /// Energy of an assignment given as label slots.
    pub fn energy_slots(&self, slots: &[usize]) -> f64 {
        let unary: f64 = slots.iter().enumerate().map(|(i, &k)| self.unary(i, k)).sum();
        let pairwise: f64 = self
            .edges
            .iter()
            .filter(|e| slots[e.a] != slots[e.b])
            .map(|e| e.weight)
            .sum();
        unary + pairwise
    }

    /// Energy of an assignment given as label values.
    pub fn energy(&self, labels: &[u8]) -> Result<f64> {
        let slots = self.to_slots(labels)?;
        Ok(self.energy_slots(&slots))
    }

    pub fn to_slots(&self, labels: &[u8]) -> Result<Vec<usize>> {
        if labels.len() != self.node_count {
            return Err(Error::DimensionMismatch("labeling length".into()));
        }
        labels
            .iter()
            .map(|&l| self.slot_of(l).ok_or(Error::LabelNotAllowed(l)))
            .collect()
    }

    fn to_labels(&self, slots: &[usize]) -> Vec<u8> {
        slots.iter().map(|&k| self.labels[k]).collect()
    }

    /// Per-node argmin of the unary costs (ties to the smallest label).
    pub fn unary_argmin(&self) -> Vec<u8> {
        let n = self.labels.len();
        let slots: Vec<usize> = (0..self.node_count)
            .map(|i| {
                let row = &self.unary[i * n..(i + 1) * n];
                (1..n).fold(0, |best, k| if row[k] < row[best] { k } else { best })
            })
            .collect();
        self.to_labels(&slots)
    }

    /// Exact minimizer for a two-label model.
    pub fn minimize_binary(&self) -> Result<Vec<u8>> {
        if self.labels.len() != 2 {
            return Err(Error::WrongLabelCount(self.labels.len()));
        }
        // source side = slot 0, sink side = slot 1
        let mut net = FlowNetwork::new(self.node_count);
        for i in 0..self.node_count {
            let (c0, c1) = (self.unary(i, 0), self.unary(i, 1));
            let base = c0.min(c1);
            net.add_terminal(i, c1 - base, c0 - base);
        }
        for e in &self.edges {
            if e.weight > 0.0 {
                net.add_edge(e.a, e.b, e.weight, e.weight);
            }
        }
        let cut = min_cut(&net);
        let slots: Vec<usize> = cut.sides.iter().map(|s| usize::from(*s == Side::Sink)).collect();
        Ok(self.to_labels(&slots))
    }

    /// Best expansion move toward `alpha` from `current`. Returns the new
    /// assignment (in slots).
    fn expansion_move(&self, current: &[usize], alpha: usize) -> Vec<usize> {
        // x = 0 keeps the current label (source side), x = 1 switches to alpha
        let n = self.node_count;
        let mut cost0 = vec![0.0; n];
        let mut cost1 = vec![0.0; n];
        for i in 0..n {
            cost0[i] = self.unary(i, current[i]);
            cost1[i] = self.unary(i, alpha);
        }
        let mut pair_caps = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            let (ci, cj) = (current[e.a], current[e.b]);
            let w = e.weight;
            let pen = |p: usize, q: usize| if p != q { w } else { 0.0 };
            let (a, b, c, d) = (pen(ci, cj), pen(ci, alpha), pen(alpha, cj), 0.0);
            // E(xi,xj) = A + (C−A) xi + (D−C) xj + (B+C−A−D)(1−xi) xj
            cost0[e.a] += a;
            cost1[e.a] += c;
            cost1[e.b] += d - c;
            let cap = (b + c - a - d).max(0.0);
            if cap > 0.0 {
                pair_caps.push((e.a, e.b, cap));
            }
        }
        let mut net = FlowNetwork::new(n);
        for i in 0..n {
            let base = cost0[i].min(cost1[i]);
            net.add_terminal(i, cost1[i] - base, cost0[i] - base);
        }
        for (a, b, cap) in pair_caps {
            net.add_edge(a, b, cap, 0.0);
        }
        let cut = min_cut(&net);
        current
            .iter()
            .zip(&cut.sides)
            .map(|(&c, s)| if *s == Side::Sink { alpha } else { c })
            .collect()
    }

    /// Alpha expansion from `init`. Returns the final labeling and the
    /// energy after every accepted move (entry 0 is the initial energy).
    pub fn minimize_expansion_traced(&self, init: &[u8], sweeps: usize) -> Result<(Vec<u8>, Vec<f64>)> {
        if self.labels.len() < 2 {
            return Err(Error::WrongLabelCount(self.labels.len()));
        }
        let mut current = self.to_slots(init)?;
        let mut energy = self.energy_slots(&current);
        let mut trace = vec![energy];
        for _ in 0..sweeps {
            let mut improved = false;
            for alpha in 0..self.labels.len() {
                let proposal = self.expansion_move(&current, alpha);
                let e = self.energy_slots(&proposal);
                if e < energy {
                    current = proposal;
                    energy = e;
                    trace.push(e);
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        Ok((self.to_labels(&current), trace))
    }

    pub fn minimize_expansion(&self, init: &[u8], sweeps: usize) -> Result<Vec<u8>> {
        self.minimize_expansion_traced(init, sweeps).map(|(x, _)| x)
    }
}

/// Default number of full expansion sweeps.
pub const DEFAULT_SWEEPS: usize = 10;

/// Energy on the pixel grid of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    width: usize,
    height: usize,
    graph: PottsGraph,
}

impl EnergyModel {
    pub fn from_graph(width: usize, height: usize, graph: PottsGraph) -> Result<Self> {
        if graph.node_count() != width * height {
            return Err(Error::DimensionMismatch("graph nodes vs grid size".into()));
        }
        Ok(Self { width, height, graph })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn graph(&self) -> &PottsGraph {
        &self.graph
    }

    pub fn labels(&self) -> &[u8] {
        self.graph.labels()
    }

    fn wrap(&self, data: Vec<u8>) -> LabelMap {
        LabelMap::new(self.width, self.height, data).expect("labeling matches grid")
    }

    pub fn unary_argmin(&self) -> LabelMap {
        self.wrap(self.graph.unary_argmin())
    }
}

/// Assembles the energy for one frame.
///
/// `allowed` holds the permitted label values and must contain background.
/// Unary of label `l` at pixel `i`: NLL of the background mixture for
/// `l = 0`, of the foreground mixture otherwise, plus `alpha · (−ln p_i^l)`.
pub fn build_energy(
    img: &RgbImage,
    gmms: &FgBgGmm,
    scores: &ScoreMap,
    allowed: &[u8],
    alpha: f64,
    params: &PairwiseParams,
    band: &BoundaryBand,
) -> Result<EnergyModel> {
    let (w, h) = (img.width(), img.height());
    if scores.width() != w || scores.height() != h || band.width != w || band.height != h {
        return Err(Error::DimensionMismatch(format!(
            "image {w}x{h}, scores {}x{}, band {}x{}",
            scores.width(),
            scores.height(),
            band.width,
            band.height
        )));
    }
    let mut labels = allowed.to_vec();
    labels.sort_unstable();
    labels.dedup();
    if labels.first() != Some(&BACKGROUND) {
        return Err(Error::InvalidValue("allowed labels must include background".into()));
    }
    if let Some(&l) = labels.iter().find(|&&l| l as usize >= scores.channels()) {
        return Err(Error::DimensionMismatch(format!(
            "label {l} has no score channel ({} channels)",
            scores.channels()
        )));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidValue(format!("alpha must be nonnegative, got {alpha}")));
    }
    params.validate()?;

    let n = labels.len();
    let mut unary = Vec::with_capacity(w * h * n);
    for (i, z) in img.pixels().iter().enumerate() {
        let bg = gmms.background.nll(z);
        let fg = gmms.foreground.nll(z);
        for &l in &labels {
            let motion = if l == BACKGROUND { bg } else { fg };
            let p = f64::from(scores.score(i, l)).max(SCORE_CLAMP);
            unary.push(motion - alpha * p.ln());
        }
    }
    let grid = GridAdjacency::new(w, h);
    let px = img.pixels();
    let edges = grid
        .edges()
        .map(|(a, b)| WeightedEdge {
            a,
            b,
            weight: potts_weight(&px[a], &px[b], (a % w, a / w), (b % w, b / w), band, params),
        })
        .collect();
    EnergyModel::from_graph(w, h, PottsGraph::new(labels, w * h, unary, edges)?)
}

/// `Σ_i unary(i, x_i) + Σ_(i,j) w_ij [x_i ≠ x_j]`.
pub fn total_energy(model: &EnergyModel, x: &LabelMap) -> Result<f64> {
    if x.width() != model.width || x.height() != model.height {
        return Err(Error::DimensionMismatch("labeling vs model".into()));
    }
    model.graph.energy(x.labels())
}

/// Exact global minimizer of a two-label model.
pub fn minimize_binary(model: &EnergyModel) -> Result<LabelMap> {
    Ok(model.wrap(model.graph.minimize_binary()?))
}

/// Alpha expansion with labels swept in ascending order.
pub fn minimize_expansion(model: &EnergyModel, init: &LabelMap, sweeps: usize) -> Result<LabelMap> {
    if init.width() != model.width || init.height() != model.height {
        return Err(Error::DimensionMismatch("init vs model".into()));
    }
    Ok(model.wrap(model.graph.minimize_expansion(init.labels(), sweeps)?))
}
