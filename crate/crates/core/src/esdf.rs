//! Full-grid Euclidean distance field rebuilt from scratch by breadth-first
//! propagation. Used as the reference cost for the direct point-cloud
//! distance queries.

use std::collections::VecDeque;

use crate::geometry::{Aabb, Vec3};

const NONE: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub struct GridEsdf {
    origin: Vec3,
    resolution: f64,
    dims: [usize; 3],
    /// Index of the nearest obstacle cell, or `NONE`.
    nearest: Vec<u32>,
    distance: Vec<f64>,
}

impl GridEsdf {
    /// Rasterizes `points` into `bounds` at `resolution` and propagates
    /// nearest-obstacle sites over the 6-neighbourhood.
    pub fn build(points: &[Vec3], bounds: &Aabb, resolution: f64) -> Self {
        let size = bounds.size();
        let dims = [
            (size.x / resolution).ceil().max(1.0) as usize,
            (size.y / resolution).ceil().max(1.0) as usize,
            (size.z / resolution).ceil().max(1.0) as usize,
        ];
        let n = dims[0] * dims[1] * dims[2];
        let mut grid = Self {
            origin: bounds.min(),
            resolution,
            dims,
            nearest: vec![NONE; n],
            distance: vec![f64::INFINITY; n],
        };
        let mut queue = VecDeque::new();
        for p in points {
            if let Some(c) = grid.cell_of(p) {
                let i = grid.index(c);
                if grid.nearest[i] == NONE {
                    grid.nearest[i] = i as u32;
                    grid.distance[i] = 0.0;
                    queue.push_back(i);
                }
            }
        }
        let (nx, ny) = (dims[0], dims[1]);
        while let Some(i) = queue.pop_front() {
            let site = grid.nearest[i] as usize;
            let c = grid.coords(i);
            let sc = grid.coords(site);
            for (axis, step) in [(0, -1i64), (0, 1), (1, -1), (1, 1), (2, -1), (2, 1)] {
                let v = c[axis] as i64 + step;
                if v < 0 || v >= dims[axis] as i64 {
                    continue;
                }
                let j = match axis {
                    0 => (i as i64 + step) as usize,
                    1 => (i as i64 + step * nx as i64) as usize,
                    _ => (i as i64 + step * (nx * ny) as i64) as usize,
                };
                let cj = grid.coords(j);
                let d = resolution
                    * (0..3)
                        .map(|k| (cj[k] as f64 - sc[k] as f64).powi(2))
                        .sum::<f64>()
                        .sqrt();
                if d < grid.distance[j] {
                    grid.distance[j] = d;
                    grid.nearest[j] = site as u32;
                    queue.push_back(j);
                }
            }
        }
        grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cell_count(&self) -> usize {
        self.nearest.len()
    }

    fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    fn coords(&self, i: usize) -> [usize; 3] {
        let (nx, ny) = (self.dims[0], self.dims[1]);
        [i % nx, (i / nx) % ny, i / (nx * ny)]
    }

    fn cell_of(&self, p: &Vec3) -> Option<[usize; 3]> {
        let rel = (p - self.origin) / self.resolution;
        let mut c = [0; 3];
        for k in 0..3 {
            let f = rel[k].floor();
            if !(f >= 0.0) {
                return None;
            }
            // Points on the far face belong to the last cell.
            c[k] = (f as usize).min(self.dims[k] - 1);
            if f as usize > self.dims[k] {
                return None;
            }
        }
        Some(c)
    }

    /// Distance stored at the cell holding `p`; `None` outside the grid,
    /// infinity when the grid holds no obstacle.
    pub fn distance(&self, p: &Vec3) -> Option<f64> {
        self.cell_of(p).map(|c| self.distance[self.index(c)])
    }
}
