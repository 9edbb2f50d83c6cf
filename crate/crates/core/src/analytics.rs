//! Mask statistics: coverage, patch inventory, spatial distribution and
//! confusion counts.

use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::ChangeMask;

/// Which neighbours of a pixel count as connected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    /// N, S, E and W neighbours.
    Four,
    /// All eight neighbours.
    #[default]
    Eight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_row: usize,
    pub min_col: usize,
    pub max_row: usize,
    pub max_col: usize,
}

/// Connected components of the changed pixels of a binary mask.
///
/// Component ids run from 1 to `num_components` in raster-scan order of each
/// component's first pixel; 0 marks background. Per-component vectors are
/// indexed by `id - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLabeling {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub num_components: usize,
    pub areas: Vec<usize>,
    pub centroids: Vec<(f64, f64)>,
    pub bounding_boxes: Vec<BoundingBox>,
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        // slot 0 is background and never joined
        Self { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

pub fn label_components(m: &ChangeMask, connectivity: Connectivity) -> Result<ComponentLabeling> {
    m.require_binary()?;
    let (w, h) = (m.width(), m.height());
    let src = m.labels();
    let mut provisional = vec![0u32; w * h];
    let mut sets = DisjointSet::new();

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if src[i] == 0 {
                continue;
            }
            // already-visited neighbours: W, NW, N, NE
            let mut neighbours = [0u32; 4];
            if x > 0 {
                neighbours[0] = provisional[i - 1];
            }
            if y > 0 {
                neighbours[1] = provisional[i - w];
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        neighbours[2] = provisional[i - w - 1];
                    }
                    if x + 1 < w {
                        neighbours[3] = provisional[i - w + 1];
                    }
                }
            }
            let mut current = 0;
            for &n in neighbours.iter().filter(|&&n| n != 0) {
                if current == 0 {
                    current = n;
                } else {
                    sets.union(current, n);
                }
            }
            provisional[i] = if current == 0 { sets.make() } else { current };
        }
    }

    let mut remap = vec![0u32; sets.parent.len()];
    let mut labels = vec![0u32; w * h];
    let mut areas: Vec<usize> = Vec::new();
    let mut sums: Vec<(f64, f64)> = Vec::new();
    let mut boxes: Vec<BoundingBox> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if provisional[i] == 0 {
                continue;
            }
            let root = sets.find(provisional[i]) as usize;
            if remap[root] == 0 {
                areas.push(0);
                sums.push((0.0, 0.0));
                boxes.push(BoundingBox {
                    min_row: y,
                    min_col: x,
                    max_row: y,
                    max_col: x,
                });
                remap[root] = areas.len() as u32;
            }
            let id = remap[root];
            labels[i] = id;
            let k = id as usize - 1;
            areas[k] += 1;
            sums[k].0 += y as f64;
            sums[k].1 += x as f64;
            let b = &mut boxes[k];
            b.min_row = b.min_row.min(y);
            b.min_col = b.min_col.min(x);
            b.max_row = b.max_row.max(y);
            b.max_col = b.max_col.max(x);
        }
    }

    let centroids = sums
        .iter()
        .zip(&areas)
        .map(|(&(r, c), &a)| (r / a as f64, c / a as f64))
        .collect();
    Ok(ComponentLabeling {
        width: w,
        height: h,
        labels,
        num_components: areas.len(),
        areas,
        centroids,
        bounding_boxes: boxes,
    })
}

/// One cell of the 3×3 compass partition of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridCell {
    Northwest,
    North,
    Northeast,
    West,
    Center,
    East,
    Southwest,
    South,
    Southeast,
}

impl GridCell {
    /// Northwest to southeast, row by row.
    pub const ALL: [GridCell; 9] = [
        GridCell::Northwest,
        GridCell::North,
        GridCell::Northeast,
        GridCell::West,
        GridCell::Center,
        GridCell::East,
        GridCell::Southwest,
        GridCell::South,
        GridCell::Southeast,
    ];

    pub fn from_row_col(row: usize, col: usize) -> GridCell {
        Self::ALL[row * 3 + col]
    }

    pub fn row_col(self) -> (usize, usize) {
        let i = self as usize;
        (i / 3, i % 3)
    }

    pub fn name(self) -> &'static str {
        match self {
            GridCell::Northwest => "northwest",
            GridCell::North => "north",
            GridCell::Northeast => "northeast",
            GridCell::West => "west",
            GridCell::Center => "center",
            GridCell::East => "east",
            GridCell::Southwest => "southwest",
            GridCell::South => "south",
            GridCell::Southeast => "southeast",
        }
    }
}

impl fmt::Display for GridCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Index of the grid band holding coordinate `i` along an axis of length `n`.
/// The first two bands have `n / 3` pixels; the last takes the remainder.
fn band(i: usize, n: usize) -> usize {
    let size = n / 3;
    if size == 0 {
        // fewer than 3 pixels: one band per pixel
        return i.min(2);
    }
    (i / size).min(2)
}

/// Tolerance for treating grid cells as tied for the largest share of change.
pub const DOMINANCE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskStats {
    pub change_percent: f64,
    pub changed_pixels: usize,
    pub total_pixels: usize,
    pub num_patches: usize,
    pub largest_patch_percent: f64,
    pub largest_patch_cell: Option<GridCell>,
    pub mean_patch_area_px: f64,
    /// Share of changed pixels per cell, `[row][col]` from the north-west.
    pub grid_fractions: [[f64; 3]; 3],
    pub dominant_cells: Vec<GridCell>,
}

impl MaskStats {
    pub fn fraction(&self, cell: GridCell) -> f64 {
        let (r, c) = cell.row_col();
        self.grid_fractions[r][c]
    }
}

/// Coverage as a percentage with a single rounding step.
pub fn percent(count: usize, total: usize) -> f64 {
    (100 * count) as f64 / total as f64
}

pub fn compute_stats(m: &ChangeMask) -> Result<MaskStats> {
    compute_stats_with(m, Connectivity::Eight)
}

pub fn compute_stats_with(m: &ChangeMask, connectivity: Connectivity) -> Result<MaskStats> {
    let comps = label_components(m, connectivity)?;
    let (w, h) = (m.width(), m.height());
    let total = w * h;
    let changed: usize = comps.areas.iter().sum();

    let mut cell_counts = [[0usize; 3]; 3];
    for y in 0..h {
        let row = band(y, h);
        for x in 0..w {
            if m.get(x, y) != 0 {
                cell_counts[row][band(x, w)] += 1;
            }
        }
    }
    let mut grid_fractions = [[0.0; 3]; 3];
    let mut dominant_cells = Vec::new();
    if changed > 0 {
        for r in 0..3 {
            for c in 0..3 {
                grid_fractions[r][c] = cell_counts[r][c] as f64 / changed as f64;
            }
        }
        let max = grid_fractions.iter().flatten().copied().fold(0.0, f64::max);
        dominant_cells = GridCell::ALL
            .iter()
            .copied()
            .filter(|cell| {
                let (r, c) = cell.row_col();
                max - grid_fractions[r][c] <= DOMINANCE_TOLERANCE
            })
            .collect();
    }

    // first component wins ties, so the result follows scan order
    let largest = comps
        .areas
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, usize)>, (k, &a)| match best {
            Some((_, ba)) if ba >= a => best,
            _ => Some((k, a)),
        });
    let (largest_patch_percent, largest_patch_cell) = match largest {
        Some((k, area)) => {
            let (cr, cc) = comps.centroids[k];
            let cell = GridCell::from_row_col(band(cr.round() as usize, h), band(cc.round() as usize, w));
            (percent(area, total), Some(cell))
        }
        None => (0.0, None),
    };

    let mean_patch_area_px = if comps.num_components == 0 {
        0.0
    } else {
        changed as f64 / comps.num_components as f64
    };

    Ok(MaskStats {
        change_percent: percent(changed, total),
        changed_pixels: changed,
        total_pixels: total,
        num_patches: comps.num_components,
        largest_patch_percent,
        largest_patch_cell,
        mean_patch_area_px,
        grid_fractions,
        dominant_cells,
    })
}

/// Per-pixel confusion counts with change as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: ConfusionCounts) {
        *self = *self + o;
    }
}

pub fn compare_masks(gt: &ChangeMask, pred: &ChangeMask) -> Result<ConfusionCounts> {
    if gt.shape() != pred.shape() {
        return Err(Error::DimensionMismatch {
            left: gt.shape(),
            right: pred.shape(),
        });
    }
    gt.require_binary()?;
    pred.require_binary()?;
    let mut c = ConfusionCounts::default();
    for (&g, &p) in gt.labels().iter().zip(pred.labels()) {
        match (g, p) {
            (1, 1) => c.tp += 1,
            (0, 1) => c.fp += 1,
            (1, 0) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    Ok(c)
}
