//! Fixed Cartesian background grid for the fluid fields.
//!
//! All fluid quantities live at cell centers of a uniform grid covering the
//! box domain; bilinear interpolation between cell centers is the only
//! reconstruction used anywhere.

/// Uniform cell-centered grid over the rectangular box `[x0, x0+nx·dx] × …`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub x0: f64,
    pub y0: f64,
}

impl Grid {
    /// Grid covering `[-half, half]²` with the given spacing.
    pub fn centered(half_extent: f64, dx: f64) -> Self {
        let n = (2.0 * half_extent / dx).round() as usize;
        Grid {
            nx: n,
            ny: n,
            dx,
            x0: -half_extent,
            y0: -half_extent,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dx
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, c: usize) -> (usize, usize) {
        (c % self.nx, c / self.nx)
    }

    /// Center of cell `(i, j)`.
    #[inline]
    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.x0 + (i as f64 + 0.5) * self.dx,
            self.y0 + (j as f64 + 0.5) * self.dx,
        ]
    }

    pub fn center_of(&self, c: usize) -> [f64; 2] {
        let (i, j) = self.coords(c);
        self.center(i, j)
    }

    /// Bilinear stencil of a physical point over the cell-center lattice:
    /// the four surrounding centers (clamped to the grid) with their weights.
    pub fn bilinear(&self, p: [f64; 2]) -> [(usize, f64); 4] {
        let fx = (p[0] - self.x0) / self.dx - 0.5;
        let fy = (p[1] - self.y0) / self.dx - 0.5;
        let i0 = fx.floor().clamp(0.0, (self.nx - 2) as f64) as usize;
        let j0 = fy.floor().clamp(0.0, (self.ny - 2) as f64) as usize;
        let tx = (fx - i0 as f64).clamp(0.0, 1.0);
        let ty = (fy - j0 as f64).clamp(0.0, 1.0);
        [
            (self.index(i0, j0), (1.0 - tx) * (1.0 - ty)),
            (self.index(i0 + 1, j0), tx * (1.0 - ty)),
            (self.index(i0, j0 + 1), (1.0 - tx) * ty),
            (self.index(i0 + 1, j0 + 1), tx * ty),
        ]
    }

    /// Evaluates a scalar cell field at a physical point.
    pub fn sample(&self, field: &[f64], p: [f64; 2]) -> f64 {
        self.bilinear(p)
            .iter()
            .map(|&(c, w)| w * field[c])
            .sum()
    }

    /// Evaluates a two-component cell field at a physical point.
    pub fn sample_vec(&self, field: &[[f64; 2]], p: [f64; 2]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for &(c, w) in self.bilinear(p).iter() {
            out[0] += w * field[c][0];
            out[1] += w * field[c][1];
        }
        out
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0
            && p[0] <= self.x0 + self.nx as f64 * self.dx
            && p[1] >= self.y0
            && p[1] <= self.y0 + self.ny as f64 * self.dx
    }
}
