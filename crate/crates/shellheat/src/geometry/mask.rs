//! Cell labeling of the box domain and the interface marker list.
//!
//! Cells are classified by a point-in-closed-curve test at their centers;
//! geometric volume errors of order one cell are accepted throughout. The
//! outermost cell ring is the rigid wall.

use super::InterfaceCurve;
use crate::grid::Grid;
use crate::{Error, Result};
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellLabel {
    Fluid1,
    Fluid2,
    Wall,
}

/// Interface sample point tied to the background grid.
#[derive(Clone, Debug)]
pub struct Marker {
    /// Index of the parameter node this marker tracks.
    pub node: usize,
    /// Physical position (deformed interface point).
    pub pos: [f64; 2],
    /// Bilinear stencil over cell centers.
    pub stencil: [(usize, f64); 4],
    /// Unit deformed normal.
    pub normal: [f64; 2],
    /// Arc-length quadrature weight of this marker on the deformed curve.
    pub arc_weight: f64,
}

/// Fluid-domain decomposition on the background grid.
#[derive(Clone, Debug)]
pub struct DomainMask {
    pub grid: Grid,
    pub labels: Vec<CellLabel>,
    pub markers: Vec<Marker>,
}

impl DomainMask {
    pub fn cells_with(&self, label: CellLabel) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&c| self.labels[c] == label)
            .collect()
    }

    pub fn is_fluid(&self, c: usize) -> bool {
        matches!(self.labels[c], CellLabel::Fluid1 | CellLabel::Fluid2)
    }

    pub fn volume(&self, label: CellLabel) -> f64 {
        self.labels.iter().filter(|&&l| l == label).count() as f64 * self.grid.cell_volume()
    }

    /// One character per cell, rows top to bottom; handy for debugging runs.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for j in (0..self.grid.ny).rev() {
            for i in 0..self.grid.nx {
                out.push(match self.labels[self.grid.index(i, j)] {
                    CellLabel::Fluid1 => '1',
                    CellLabel::Fluid2 => '2',
                    CellLabel::Wall => 'W',
                });
            }
            out.push('\n');
        }
        out
    }
}

/// Even-odd ray-crossing test against the closed polyline.
pub fn point_in_curve(points: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = points.len();
    let mut inside = false;
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let t = (p[1] - a[1]) / (b[1] - a[1]);
            let x = a[0] + t * (b[0] - a[0]);
            if x > p[0] {
                inside = !inside;
            }
        }
    }
    inside
}

/// Labels every cell and attaches one marker per parameter node.
///
/// `parallel` switches the cell classification loop between rayon and a
/// plain sequential pass; both orderings write disjoint cells, so the result
/// is identical.
pub fn build_masks(interface: &InterfaceCurve, grid: &Grid, parallel: bool) -> Result<DomainMask> {
    if !interface.injective {
        return Err(Error::Degeneracy(
            super::DegeneracyStatus::SelfIntersect,
            f64::NAN,
        ));
    }
    // The interface must stay strictly inside the non-wall interior.
    let inner_min = [grid.x0 + 1.5 * grid.dx, grid.y0 + 1.5 * grid.dx];
    let inner_max = [
        grid.x0 + (grid.nx as f64 - 1.5) * grid.dx,
        grid.y0 + (grid.ny as f64 - 1.5) * grid.dx,
    ];
    for p in &interface.points {
        if p[0] <= inner_min[0] || p[0] >= inner_max[0] || p[1] <= inner_min[1] || p[1] >= inner_max[1]
        {
            return Err(Error::Degeneracy(
                super::DegeneracyStatus::CollarHit,
                f64::NAN,
            ));
        }
    }

    let classify = |c: usize| -> CellLabel {
        let (i, j) = grid.coords(c);
        if i == 0 || j == 0 || i == grid.nx - 1 || j == grid.ny - 1 {
            return CellLabel::Wall;
        }
        if point_in_curve(&interface.points, grid.center(i, j)) {
            CellLabel::Fluid2
        } else {
            CellLabel::Fluid1
        }
    };
    let labels: Vec<CellLabel> = if parallel {
        (0..grid.cell_count()).into_par_iter().map(classify).collect()
    } else {
        (0..grid.cell_count()).map(classify).collect()
    };

    let n = interface.points.len();
    let markers = (0..n)
        .map(|j| {
            let pos = interface.points[j];
            let nrm = interface.normals[j];
            let len = (nrm[0] * nrm[0] + nrm[1] * nrm[1]).sqrt();
            let prev = interface.points[(j + n - 1) % n];
            let next = interface.points[(j + 1) % n];
            let seg = |a: [f64; 2], b: [f64; 2]| ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            Marker {
                node: j,
                pos,
                stencil: grid.bilinear(pos),
                normal: [nrm[0] / len, nrm[1] / len],
                arc_weight: 0.5 * (seg(prev, pos) + seg(pos, next)),
            }
        })
        .collect();

    Ok(DomainMask {
        grid: grid.clone(),
        labels,
        markers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_reference, deform_interface, SurfaceSpec};

    fn mask_for(radius_eta: f64) -> DomainMask {
        let s = build_reference(&SurfaceSpec::Circle { r: 1.0 }, 64).unwrap();
        let c = deform_interface(&s, &vec![radius_eta; 64]);
        build_masks(&c, &Grid::centered(3.0, 0.25), false).unwrap()
    }

    #[test]
    fn labels_partition_and_center_cells() {
        let m = mask_for(0.5);
        // every cell carries exactly one label (enum makes that structural);
        // check the two spot values
        let g = &m.grid;
        let center = g.bilinear([0.0, 0.0])[0].0;
        assert_eq!(m.labels[center], CellLabel::Fluid2);
        let far = g.bilinear([2.8, 0.0])[0].0;
        assert!(matches!(m.labels[far], CellLabel::Fluid1 | CellLabel::Wall));
        let far_in = g.bilinear([2.4, 0.0])[0].0;
        assert_eq!(m.labels[far_in], CellLabel::Fluid1);
    }

    /// Independent winding-angle oracle.
    fn winding_inside(points: &[[f64; 2]], p: [f64; 2]) -> bool {
        let n = points.len();
        let mut angle = 0.0;
        for i in 0..n {
            let a = points[i];
            let b = points[(i + 1) % n];
            let v0 = [a[0] - p[0], a[1] - p[1]];
            let v1 = [b[0] - p[0], b[1] - p[1]];
            angle += (v0[0] * v1[1] - v0[1] * v1[0]).atan2(v0[0] * v1[0] + v0[1] * v1[1]);
        }
        angle.abs() > std::f64::consts::PI
    }

    #[test]
    fn crossing_test_agrees_with_winding_oracle() {
        let s = build_reference(&SurfaceSpec::Circle { r: 1.0 }, 48).unwrap();
        let eta: Vec<f64> = s
            .gamma
            .nodes()
            .iter()
            .map(|x| 0.3 * (2.0 * x[0]).cos() - 0.1 * (3.0 * x[0]).sin())
            .collect();
        let c = deform_interface(&s, &eta);
        let g = Grid::centered(3.0, 0.25);
        let m = build_masks(&c, &g, false).unwrap();
        for cell in 0..g.cell_count() {
            if m.labels[cell] == CellLabel::Wall {
                continue;
            }
            let inside = winding_inside(&c.points, g.center_of(cell));
            assert_eq!(inside, m.labels[cell] == CellLabel::Fluid2, "cell {cell}");
        }
    }

    #[test]
    fn enclosed_area_close_to_exact() {
        let m = mask_for(0.0); // unit circle
        let area = m.volume(CellLabel::Fluid2);
        let perimeter = std::f64::consts::TAU;
        assert!((area - std::f64::consts::PI).abs() < 2.0 * 0.25 * perimeter);
    }

    #[test]
    fn interface_touching_wall_is_an_error() {
        let s = build_reference(&SurfaceSpec::Circle { r: 1.0 }, 64).unwrap();
        let c = deform_interface(&s, &vec![1.9; 64]);
        assert!(build_masks(&c, &Grid::centered(3.0, 0.25), false).is_err());
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let s = build_reference(&SurfaceSpec::Circle { r: 1.0 }, 32).unwrap();
        let c = deform_interface(&s, &vec![0.2; 32]);
        let g = Grid::centered(3.0, 0.25);
        let a = build_masks(&c, &g, false).unwrap();
        let b = build_masks(&c, &g, true).unwrap();
        assert_eq!(a.labels, b.labels);
    }
}
