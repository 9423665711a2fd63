//! Discretized environment: square cells, world/grid coordinate mapping and
//! 8-connected adjacency.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Neighbor offsets in the fixed order used for every tie-break in the crate.
pub const NEIGHBOR_OFFSETS: [(i32, i32); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// A point in world space, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        WorldPoint { x, y }
    }

    pub fn distance(self, other: WorldPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Column `i`, row `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridCoord {
    pub i: i32,
    pub j: i32,
}

impl GridCoord {
    pub const fn new(i: i32, j: i32) -> Self {
        GridCoord { i, j }
    }

    pub fn offset(self, di: i32, dj: i32) -> GridCoord {
        GridCoord::new(self.i + di, self.j + dj)
    }

    pub fn chebyshev(self, other: GridCoord) -> i32 {
        (self.i - other.i).abs().max((self.j - other.j).abs())
    }

    /// True when `other` is one of the 8 surrounding cells.
    pub fn is_adjacent(self, other: GridCoord) -> bool {
        self.chebyshev(other) == 1
    }
}

impl fmt::Display for GridCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.i, self.j)
    }
}

/// Axis-aligned rectangle in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl Rect {
    pub const fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Rect {
            xmin,
            ymin,
            xmax,
            ymax,
        }
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }
}

impl Serialize for Rect {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.xmin, self.ymin, self.xmax, self.ymax].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Rect {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [xmin, ymin, xmax, ymax] = <[f64; 4]>::deserialize(d)?;
        Ok(Rect::new(xmin, ymin, xmax, ymax))
    }
}

/// Scene file contents: world bounds, cell size and rectangular obstacles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub bounds: Rect,
    #[serde(default = "default_cell_size")]
    pub cell_size: f64,
    #[serde(default)]
    pub obstacles: Vec<Rect>,
}

fn default_cell_size() -> f64 {
    0.4
}

impl Scene {
    pub fn load(path: impl AsRef<Path>) -> Result<Scene> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }

    pub fn discretize(&self) -> Result<GridEnvironment> {
        GridEnvironment::discretize(&self.obstacles, self.bounds, self.cell_size)
    }
}

/// Regular square-cell discretization of the world with per-cell passability.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEnvironment {
    width: i32,
    height: i32,
    cell_size: f64,
    origin: WorldPoint,
    free: Vec<bool>,
}

impl GridEnvironment {
    /// All-free grid of the given size.
    pub fn empty(width: i32, height: i32, cell_size: f64) -> Result<Self> {
        Self::from_passability(width, height, cell_size, WorldPoint::default(), vec![true; (width.max(0) * height.max(0)) as usize])
    }

    /// Builds a grid from a row-major passability vector (`true` = free).
    pub fn from_passability(
        width: i32,
        height: i32,
        cell_size: f64,
        origin: WorldPoint,
        free: Vec<bool>,
    ) -> Result<Self> {
        if width < 1 || height < 1 {
            return Err(Error::invalid(format!("grid must be at least 1x1, got {width}x{height}")));
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::invalid(format!("cell size must be positive, got {cell_size}")));
        }
        if !origin.is_finite() {
            return Err(Error::invalid("grid origin must be finite"));
        }
        if free.len() != (width * height) as usize {
            return Err(Error::invalid(format!(
                "passability has {} entries, expected {}",
                free.len(),
                width * height
            )));
        }
        Ok(GridEnvironment {
            width,
            height,
            cell_size,
            origin,
            free,
        })
    }

    /// Parses an ASCII map, top row first: `#` is an obstacle, anything else is free.
    pub fn from_ascii(rows: &[&str], cell_size: f64) -> Result<Self> {
        let height = rows.len() as i32;
        let width = rows.first().map_or(0, |r| r.chars().count()) as i32;
        let mut free = vec![true; (width.max(0) * height.max(0)) as usize];
        for (row_from_top, line) in rows.iter().enumerate() {
            if line.chars().count() as i32 != width {
                return Err(Error::invalid("ragged ascii map"));
            }
            let j = height - 1 - row_from_top as i32;
            for (i, ch) in line.chars().enumerate() {
                free[(j * width + i as i32) as usize] = ch != '#';
            }
        }
        Self::from_passability(width, height, cell_size, WorldPoint::default(), free)
    }

    /// Marks a cell obstacle iff its open interior meets the open interior of
    /// any obstacle rectangle.
    pub fn discretize(obstacles: &[Rect], bounds: Rect, cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::invalid(format!("cell size must be positive, got {cell_size}")));
        }
        let (w, h) = (bounds.width(), bounds.height());
        if !(w.is_finite() && h.is_finite()) || w < cell_size * (1.0 - 1e-9) || h < cell_size * (1.0 - 1e-9) {
            return Err(Error::invalid(format!(
                "bounds {w}x{h} m are smaller than one {cell_size} m cell"
            )));
        }
        let width = cells_spanning(w, cell_size);
        let height = cells_spanning(h, cell_size);
        let origin = WorldPoint::new(bounds.xmin, bounds.ymin);
        let eps = cell_size * 1e-9;

        let mut free = vec![true; (width * height) as usize];
        for rect in obstacles {
            if !(rect.xmax > rect.xmin && rect.ymax > rect.ymin) {
                continue;
            }
            // Only cells whose span can overlap the rectangle.
            let i0 = (((rect.xmin - origin.x) / cell_size).floor() as i32 - 1).max(0);
            let i1 = (((rect.xmax - origin.x) / cell_size).ceil() as i32 + 1).min(width);
            let j0 = (((rect.ymin - origin.y) / cell_size).floor() as i32 - 1).max(0);
            let j1 = (((rect.ymax - origin.y) / cell_size).ceil() as i32 + 1).min(height);
            for j in j0..j1 {
                let y0 = origin.y + j as f64 * cell_size;
                let y1 = y0 + cell_size;
                if !(y0 < rect.ymax - eps && rect.ymin < y1 - eps) {
                    continue;
                }
                for i in i0..i1 {
                    let x0 = origin.x + i as f64 * cell_size;
                    let x1 = x0 + cell_size;
                    if x0 < rect.xmax - eps && rect.xmin < x1 - eps {
                        free[(j * width + i) as usize] = false;
                    }
                }
            }
        }
        Self::from_passability(width, height, cell_size, origin, free)
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> WorldPoint {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    pub fn in_bounds(&self, c: GridCoord) -> bool {
        c.i >= 0 && c.j >= 0 && c.i < self.width && c.j < self.height
    }

    /// Row-major index of an in-bounds cell.
    pub fn index(&self, c: GridCoord) -> usize {
        debug_assert!(self.in_bounds(c), "{c} outside {}x{}", self.width, self.height);
        (c.j * self.width + c.i) as usize
    }

    pub fn coord(&self, index: usize) -> GridCoord {
        let index = index as i32;
        GridCoord::new(index % self.width, index / self.width)
    }

    /// False for obstacles and out-of-bounds cells.
    pub fn is_free(&self, c: GridCoord) -> bool {
        self.in_bounds(c) && self.free[self.index(c)]
    }

    pub fn passability(&self) -> &[bool] {
        &self.free
    }

    /// All cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = GridCoord> + '_ {
        (0..self.len()).map(|k| self.coord(k))
    }

    pub fn free_cells(&self) -> impl Iterator<Item = GridCoord> + '_ {
        self.cells().filter(|&c| self.is_free(c))
    }

    pub fn obstacle_cells(&self) -> impl Iterator<Item = GridCoord> + '_ {
        self.cells().filter(|&c| !self.is_free(c))
    }

    pub fn world_to_grid(&self, p: WorldPoint) -> Result<GridCoord> {
        let c = self.world_to_grid_unchecked(p);
        if p.is_finite() && self.in_bounds(c) {
            Ok(c)
        } else {
            Err(Error::OutOfRange(format!(
                "point ({}, {}) lies outside the {}x{} grid",
                p.x, p.y, self.width, self.height
            )))
        }
    }

    fn world_to_grid_unchecked(&self, p: WorldPoint) -> GridCoord {
        let fi = ((p.x - self.origin.x) / self.cell_size).floor();
        let fj = ((p.y - self.origin.y) / self.cell_size).floor();
        GridCoord::new(fi.clamp(i32::MIN as f64, i32::MAX as f64) as i32, fj.clamp(i32::MIN as f64, i32::MAX as f64) as i32)
    }

    /// Cell center in world coordinates.
    pub fn grid_to_world(&self, c: GridCoord) -> Result<WorldPoint> {
        if !self.in_bounds(c) {
            return Err(Error::OutOfRange(format!(
                "cell {c} outside the {}x{} grid",
                self.width, self.height
            )));
        }
        Ok(self.center(c))
    }

    /// Cell center without a bounds check.
    pub fn center(&self, c: GridCoord) -> WorldPoint {
        WorldPoint::new(
            self.origin.x + (c.i as f64 + 0.5) * self.cell_size,
            self.origin.y + (c.j as f64 + 0.5) * self.cell_size,
        )
    }

    /// Free in-bounds cells among the 8 surrounding ones, in [`NEIGHBOR_OFFSETS`] order.
    pub fn neighbors8(&self, c: GridCoord) -> Result<Vec<GridCoord>> {
        if !self.in_bounds(c) {
            return Err(Error::OutOfRange(format!("cell {c} outside grid")));
        }
        if !self.is_free(c) {
            return Err(Error::invalid(format!("cell {c} is an obstacle")));
        }
        Ok(self.free_neighbors(c).collect())
    }

    /// Unchecked variant of [`neighbors8`](Self::neighbors8) for hot loops.
    pub fn free_neighbors(&self, c: GridCoord) -> impl Iterator<Item = GridCoord> + '_ {
        NEIGHBOR_OFFSETS
            .iter()
            .map(move |&(di, dj)| c.offset(di, dj))
            .filter(move |&n| self.is_free(n))
    }

    /// Nearest free cell to `p` by center distance; ties go to the lower row-major index.
    pub fn nearest_free_cell(&self, p: WorldPoint) -> Option<GridCoord> {
        let mut best: Option<(f64, GridCoord)> = None;
        for c in self.free_cells() {
            let d = self.center(c).distance(p);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, c));
            }
        }
        best.map(|(_, c)| c)
    }

    /// Nearest free cell to a cell; returns the cell itself when free.
    pub fn snap_to_free(&self, c: GridCoord) -> Option<GridCoord> {
        if self.is_free(c) {
            Some(c)
        } else {
            self.nearest_free_cell(self.center(c))
        }
    }

    /// Labels 8-connected components of free cells; obstacles get `None`.
    pub fn components(&self) -> Vec<Option<u32>> {
        let mut label = vec![None; self.len()];
        let mut next = 0u32;
        let mut stack = Vec::new();
        for start in 0..self.len() {
            if !self.free[start] || label[start].is_some() {
                continue;
            }
            label[start] = Some(next);
            stack.push(self.coord(start));
            while let Some(c) = stack.pop() {
                for n in self.free_neighbors(c) {
                    let k = self.index(n);
                    if label[k].is_none() {
                        label[k] = Some(next);
                        stack.push(n);
                    }
                }
            }
            next += 1;
        }
        label
    }
}

fn cells_spanning(extent: f64, cell_size: f64) -> i32 {
    let n = extent / cell_size;
    let rounded = n.round();
    if (n - rounded).abs() < 1e-9 {
        rounded as i32
    } else {
        n.ceil() as i32
    }
}
