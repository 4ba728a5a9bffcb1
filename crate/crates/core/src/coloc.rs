//! Video co-localization: color models seeded from predictions, a binary
//! cut over SLIC superpixels, and the box around the largest connected
//! foreground component.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::energy::{PairwiseParams, PottsGraph, WeightedEdge};
use crate::error::{Error, Result};
use crate::gmm::{fit_pair, FgBgGmm, WeightedPixelSample};
use crate::model::{Color, GridAdjacency, LabelMap, RgbImage, ScoreMap, BACKGROUND};

/// Inclusive pixel box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BoundingBox {
    pub fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Result<Self> {
        if x_min > x_max || y_min > y_max {
            return Err(Error::InvalidValue(format!("empty box ({x_min},{y_min},{x_max},{y_max})")));
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    pub fn area(&self) -> usize {
        (self.x_max - self.x_min + 1) * (self.y_max - self.y_min + 1)
    }
}

/// Foreground probability threshold for seeding color models (strict).
pub const SEED_THRESHOLD: f32 = 0.5;
pub const DEFAULT_SUPERPIXELS: usize = 1000;
pub const DEFAULT_COMPACTNESS: f64 = 10.0;
const SLIC_ITERATIONS: usize = 10;
/// Colors are compared on a 0–100 scale inside SLIC.
const SLIC_COLOR_SCALE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Superpixel {
    pub mean_color: Color,
    /// `(x, y)` centroid.
    pub centroid: (f64, f64),
    pub pixel_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelMap {
    width: usize,
    height: usize,
    ids: Vec<usize>,
    cells: Vec<Superpixel>,
}

impl SuperpixelMap {
    /// Builds statistics for a given id map. Ids must be `0..S` with every
    /// id used.
    pub fn from_ids(img: &RgbImage, ids: Vec<usize>) -> Result<Self> {
        if ids.len() != img.len() {
            return Err(Error::DimensionMismatch("superpixel ids vs image".into()));
        }
        let count = ids.iter().max().map_or(0, |m| m + 1);
        let mut sums = vec![([0.0; 3], 0.0, 0.0, 0usize); count];
        let w = img.width();
        for (i, (&id, z)) in ids.iter().zip(img.pixels()).enumerate() {
            let s = &mut sums[id];
            for c in 0..3 {
                s.0[c] += z[c];
            }
            s.1 += (i % w) as f64;
            s.2 += (i / w) as f64;
            s.3 += 1;
        }
        if let Some(empty) = sums.iter().position(|s| s.3 == 0) {
            return Err(Error::InvalidValue(format!("superpixel id {empty} is unused")));
        }
        let cells = sums
            .into_iter()
            .map(|(c, x, y, n)| {
                let n_f = n as f64;
                Superpixel { mean_color: c.map(|v| v / n_f), centroid: (x / n_f, y / n_f), pixel_count: n }
            })
            .collect();
        Ok(Self { width: img.width(), height: img.height(), ids, cells })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn cells(&self) -> &[Superpixel] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Adjacent superpixel pairs `(a < b)` with their shared boundary
    /// length in pixel edges.
    pub fn adjacency(&self) -> BTreeMap<(usize, usize), usize> {
        let mut out = BTreeMap::new();
        for (i, j) in GridAdjacency::new(self.width, self.height).edges() {
            let (a, b) = (self.ids[i], self.ids[j]);
            if a != b {
                *out.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        out
    }
}

/// Relabels 4-connected components of `ids`, returning the new ids and the
/// size of each component.
fn connected_components(width: usize, height: usize, ids: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let grid = GridAdjacency::new(width, height);
    let mut out = vec![usize::MAX; ids.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..ids.len() {
        if out[start] != usize::MAX {
            continue;
        }
        let label = sizes.len();
        let mut size = 0;
        out[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            for j in grid.neighbors(i) {
                if out[j] == usize::MAX && ids[j] == ids[start] {
                    out[j] = label;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    (out, sizes)
}

/// SLIC superpixels: k-means in joint (color, position) space restricted to
/// a `2S x 2S` window around each center, followed by connectivity
/// enforcement that merges small fragments into their largest neighbor.
pub fn slic_superpixels(img: &RgbImage, target_count: usize, compactness: f64) -> Result<SuperpixelMap> {
    if target_count == 0 {
        return Err(Error::InvalidValue("superpixel count must be positive".into()));
    }
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    if n == 0 {
        return Err(Error::DimensionMismatch("empty image".into()));
    }
    let target = target_count.min(n);
    let step = ((n as f64) / target as f64).sqrt().max(1.0);
    let ny = (((target * h) as f64 / w as f64).sqrt().round() as usize).clamp(1, h);
    let nx = ((target as f64 / ny as f64).round() as usize).clamp(1, w);
    let (cell_w, cell_h) = (w as f64 / nx as f64, h as f64 / ny as f64);

    // centers: (scaled color, x, y)
    let px = img.pixels();
    let scaled = |z: &Color| z.map(|v| v * SLIC_COLOR_SCALE);
    let mut centers: Vec<([f64; 3], f64, f64)> = Vec::with_capacity(nx * ny);
    for gy in 0..ny {
        for gx in 0..nx {
            let (x, y) = ((gx as f64 + 0.5) * cell_w - 0.5, (gy as f64 + 0.5) * cell_h - 0.5);
            let (ix, iy) = ((x.round() as usize).min(w - 1), (y.round() as usize).min(h - 1));
            centers.push((scaled(&px[iy * w + ix]), x, y));
        }
    }
    // start from the grid cells so every pixel has a label
    let mut labels: Vec<usize> = (0..n)
        .map(|i| {
            let gx = (((i % w) as f64 / cell_w) as usize).min(nx - 1);
            let gy = (((i / w) as f64 / cell_h) as usize).min(ny - 1);
            gy * nx + gx
        })
        .collect();

    let spatial = compactness / step;
    let mut dist = vec![f64::INFINITY; n];
    for _ in 0..SLIC_ITERATIONS {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (k, (c, cx, cy)) in centers.iter().enumerate() {
            let x0 = (cx - 2.0 * step).floor().max(0.0) as usize;
            let x1 = ((cx + 2.0 * step).ceil() as usize).min(w - 1);
            let y0 = (cy - 2.0 * step).floor().max(0.0) as usize;
            let y1 = ((cy + 2.0 * step).ceil() as usize).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = y * w + x;
                    let z = scaled(&px[i]);
                    let dc: f64 = (0..3).map(|ch| (z[ch] - c[ch]).powi(2)).sum();
                    let ds = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    let d = dc + ds * spatial * spatial;
                    if d < dist[i] {
                        dist[i] = d;
                        labels[i] = k;
                    }
                }
            }
        }
        let mut sums = vec![([0.0; 3], 0.0, 0.0, 0usize); centers.len()];
        for (i, &k) in labels.iter().enumerate() {
            let z = scaled(&px[i]);
            let s = &mut sums[k];
            for ch in 0..3 {
                s.0[ch] += z[ch];
            }
            s.1 += (i % w) as f64;
            s.2 += (i / w) as f64;
            s.3 += 1;
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s.3 > 0 {
                let m = s.3 as f64;
                *c = (s.0.map(|v| v / m), s.1 / m, s.2 / m);
            }
        }
    }

    // connectivity: fragments below a quarter of the nominal size are
    // merged into their largest neighbor; the threshold grows while the
    // count is still above twice the target
    let (mut comp, mut sizes) = connected_components(w, h, &labels);
    let mut min_size = ((n as f64 / centers.len() as f64) / 4.0).floor().max(1.0) as usize;
    loop {
        while merge_small(w, h, &mut comp, &mut sizes, min_size) {}
        if sizes.len() <= 2 * target {
            break;
        }
        min_size *= 2;
    }
    SuperpixelMap::from_ids(img, comp)
}

/// Merges every component smaller than `min_size` into the neighbor with
/// the most pixels (longest shared boundary, then lowest id, on ties).
/// Returns whether anything changed.
fn merge_small(w: usize, h: usize, comp: &mut Vec<usize>, sizes: &mut Vec<usize>, min_size: usize) -> bool {
    if sizes.len() < 2 {
        return false;
    }
    let mut contacts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (i, j) in GridAdjacency::new(w, h).edges() {
        let (a, b) = (comp[i], comp[j]);
        if a != b {
            *contacts.entry((a, b)).or_insert(0) += 1;
            *contacts.entry((b, a)).or_insert(0) += 1;
        }
    }
    let mut parent: Vec<usize> = (0..sizes.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut order: Vec<usize> = (0..sizes.len()).filter(|&c| sizes[c] < min_size).collect();
    order.sort_by_key(|&c| (sizes[c], c));
    let mut changed = false;
    for c in order {
        let best = contacts
            .range((c, 0)..=(c, usize::MAX))
            .map(|(&(_, other), &len)| (other, len))
            .max_by(|p, q| sizes[p.0].cmp(&sizes[q.0]).then(p.1.cmp(&q.1)).then(q.0.cmp(&p.0)));
        if let Some((t, _)) = best {
            let (rc, rt) = (find(&mut parent, c), find(&mut parent, t));
            if rc != rt {
                parent[rc] = rt;
                changed = true;
            }
        }
    }
    if changed {
        for v in comp.iter_mut() {
            *v = find(&mut parent, *v);
        }
        (*comp, *sizes) = connected_components(w, h, comp);
    }
    changed
}

/// Fits color models from pixels confidently predicted as `category`
/// (foreground) and as background, over all frames.
pub fn seed_gmms_from_scores(
    frames: &[(&RgbImage, &ScoreMap)],
    category: u8,
    components: usize,
    seed: u64,
) -> Result<FgBgGmm> {
    if frames.is_empty() {
        return Err(Error::InvalidValue("no frames".into()));
    }
    if category == BACKGROUND {
        return Err(Error::InvalidValue("category may not be background".into()));
    }
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for (img, scores) in frames {
        if img.width() != scores.width() || img.height() != scores.height() {
            return Err(Error::DimensionMismatch("image vs scores".into()));
        }
        if category as usize >= scores.channels() {
            return Err(Error::DimensionMismatch(format!("no score channel for category {category}")));
        }
        for (i, z) in img.pixels().iter().enumerate() {
            if scores.score(i, category) > SEED_THRESHOLD {
                fg.push(WeightedPixelSample::new(*z, 1.0));
            } else if scores.score(i, BACKGROUND) > SEED_THRESHOLD {
                bg.push(WeightedPixelSample::new(*z, 1.0));
            }
        }
    }
    fit_pair(&fg, &bg, components, seed)
}

/// Superpixel graph energy: per-superpixel unaries scaled by pixel count,
/// contrast-sensitive Potts between adjacent superpixels scaled by their
/// shared boundary length. Label 0 = background, 1 = object.
pub fn superpixel_energy(sp: &SuperpixelMap, gmms: &FgBgGmm, p: &PairwiseParams) -> Result<PottsGraph> {
    p.validate()?;
    let mut unary = Vec::with_capacity(sp.len() * 2);
    for cell in sp.cells() {
        let n = cell.pixel_count as f64;
        unary.push(n * gmms.background.nll(&cell.mean_color));
        unary.push(n * gmms.foreground.nll(&cell.mean_color));
    }
    let edges = sp
        .adjacency()
        .into_iter()
        .map(|((a, b), shared)| {
            let (ca, cb) = (&sp.cells()[a], &sp.cells()[b]);
            let contrast: f64 = (0..3).map(|c| (ca.mean_color[c] - cb.mean_color[c]).powi(2)).sum();
            let dist = ((ca.centroid.0 - cb.centroid.0).powi(2) + (ca.centroid.1 - cb.centroid.1).powi(2)).sqrt();
            let weight = p.lambda * (-p.gamma * contrast).exp() / dist.max(f64::MIN_POSITIVE) * shared as f64;
            WeightedEdge { a, b, weight }
        })
        .collect();
    PottsGraph::new(vec![0, 1], sp.len(), unary, edges)
}

/// Binary object/background segmentation of one frame over superpixels,
/// projected back to pixels (1 = object).
pub fn coloc_segment(img: &RgbImage, sp: &SuperpixelMap, gmms: &FgBgGmm, p: &PairwiseParams) -> Result<LabelMap> {
    if img.width() != sp.width || img.height() != sp.height {
        return Err(Error::DimensionMismatch("image vs superpixels".into()));
    }
    let graph = superpixel_energy(sp, gmms, p)?;
    let cell_labels = graph.minimize_binary()?;
    let data = sp.ids.iter().map(|&id| cell_labels[id]).collect();
    LabelMap::new(img.width(), img.height(), data)
}

/// Tight box around the largest 4-connected non-background component
/// (earliest in scan order on ties), or `None` without foreground.
pub fn largest_component_box(x: &LabelMap) -> Option<BoundingBox> {
    let (w, h) = (x.width(), x.height());
    let grid = GridAdjacency::new(w, h);
    let fg: Vec<bool> = x.labels().iter().map(|&l| l != BACKGROUND).collect();
    let mut seen = vec![false; fg.len()];
    let mut best: Option<(usize, BoundingBox)> = None;
    let mut queue = VecDeque::new();
    for start in 0..fg.len() {
        if !fg[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut size = 0;
        let mut bb = BoundingBox { x_min: w, y_min: h, x_max: 0, y_max: 0 };
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (px, py) = (i % w, i / w);
            bb.x_min = bb.x_min.min(px);
            bb.x_max = bb.x_max.max(px);
            bb.y_min = bb.y_min.min(py);
            bb.y_max = bb.y_max.max(py);
            for j in grid.neighbors(i) {
                if fg[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if best.is_none_or(|(s, _)| size > s) {
            best = Some((size, bb));
        }
    }
    best.map(|(_, b)| b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColocParams {
    pub superpixels: usize,
    pub compactness: f64,
    pub pairwise: PairwiseParams,
    pub gmm_components: usize,
    pub seed: u64,
}

impl Default for ColocParams {
    fn default() -> Self {
        Self {
            superpixels: DEFAULT_SUPERPIXELS,
            compactness: DEFAULT_COMPACTNESS,
            pairwise: PairwiseParams::default(),
            gmm_components: crate::gmm::DEFAULT_COMPONENTS,
            seed: 0,
        }
    }
}

/// Boxes for every frame of a shot: one color-model pair from all frames'
/// predictions, then an independent cut per frame.
pub fn colocalize_shot(
    images: &[RgbImage],
    scores: &[ScoreMap],
    category: u8,
    params: &ColocParams,
) -> Result<Vec<Option<BoundingBox>>> {
    if images.len() != scores.len() {
        return Err(Error::DimensionMismatch("images vs scores".into()));
    }
    let pairs: Vec<(&RgbImage, &ScoreMap)> = images.iter().zip(scores).collect();
    let gmms = seed_gmms_from_scores(&pairs, category, params.gmm_components, params.seed)?;
    crate::par::try_map_range(images.len(), |t| {
        let sp = slic_superpixels(&images[t], params.superpixels, params.compactness)?;
        let seg = coloc_segment(&images[t], &sp, &gmms, &params.pairwise)?;
        Ok(largest_component_box(&seg))
    })
}
