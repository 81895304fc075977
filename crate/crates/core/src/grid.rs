//! Cell-centered rectangular mesh with homogeneous Neumann closure.
//!
//! Cells are stored row-major, `index = j * nx + i`, with cell `(i, j)`
//! centered at `((i + 1/2) hx, (j + 1/2) hy)`. Boundary conditions are
//! realized with mirror ghost cells, so every boundary face carries zero
//! flux and the discrete operators below sum to zero over the domain.

use crate::error::{Error, Result};

/// Membership rule for the control or observation subdomain.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskSpec {
    Whole,
    /// Closed rectangle `[x0, x1] x [y0, y1]`; a cell belongs to it when its
    /// center does.
    Rect {
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
    },
    Cells(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    hx: f64,
    hy: f64,
    mask_c: Vec<bool>,
    mask_d: Vec<bool>,
}

/// Cell-centered scalar values on a grid of known dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl Grid {
    /// Builds a validated grid. The control and observation subdomains may
    /// overlap arbitrarily.
    pub fn new(
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
        mask_c: MaskSpec,
        mask_d: MaskSpec,
    ) -> Result<Grid> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidGrid(format!(
                "cell counts must be positive (nx = {nx}, ny = {ny})"
            )));
        }
        if !(lx > 0.0 && lx.is_finite() && ly > 0.0 && ly.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "side lengths must be positive and finite (lx = {lx}, ly = {ly})"
            )));
        }
        let hx = lx / nx as f64;
        let hy = ly / ny as f64;
        let rasterize = |spec: MaskSpec, name: &'static str| -> Result<Vec<bool>> {
            let mask = match spec {
                MaskSpec::Whole => vec![true; nx * ny],
                MaskSpec::Rect { x0, x1, y0, y1 } => {
                    let mut mask = Vec::with_capacity(nx * ny);
                    for j in 0..ny {
                        let y = (j as f64 + 0.5) * hy;
                        for i in 0..nx {
                            let x = (i as f64 + 0.5) * hx;
                            mask.push(x >= x0 && x <= x1 && y >= y0 && y <= y1);
                        }
                    }
                    mask
                }
                MaskSpec::Cells(cells) => {
                    if cells.len() != nx * ny {
                        return Err(Error::ShapeMismatch(format!(
                            "{name} mask has {} entries, grid has {} cells",
                            cells.len(),
                            nx * ny
                        )));
                    }
                    cells
                }
            };
            if !mask.iter().any(|&m| m) {
                return Err(Error::EmptyMask(name));
            }
            Ok(mask)
        };
        let mask_c = rasterize(mask_c, "control")?;
        let mask_d = rasterize(mask_d, "observation")?;
        Ok(Grid {
            nx,
            ny,
            lx,
            ly,
            hx,
            hy,
            mask_c,
            mask_d,
        })
    }

    /// Grid whose control and observation subdomains are the whole domain.
    pub fn uniform(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Grid> {
        Grid::new(nx, ny, lx, ly, MaskSpec::Whole, MaskSpec::Whole)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_center(&self, idx: usize) -> (f64, f64) {
        let (i, j) = (idx % self.nx, idx / self.nx);
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }

    pub fn control_mask(&self) -> &[bool] {
        &self.mask_c
    }

    pub fn observation_mask(&self) -> &[bool] {
        &self.mask_d
    }

    pub fn zeros(&self) -> ScalarField {
        self.constant(0.0)
    }

    pub fn constant(&self, value: f64) -> ScalarField {
        ScalarField {
            nx: self.nx,
            ny: self.ny,
            values: vec![value; self.n_cells()],
        }
    }

    /// Samples `f(x, y)` at cell centers.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let values = (0..self.n_cells())
            .map(|idx| {
                let (x, y) = self.cell_center(idx);
                f(x, y)
            })
            .collect();
        ScalarField {
            nx: self.nx,
            ny: self.ny,
            values,
        }
    }

    pub fn field(&self, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != self.n_cells() {
            return Err(Error::ShapeMismatch(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                self.n_cells()
            )));
        }
        Ok(ScalarField {
            nx: self.nx,
            ny: self.ny,
            values,
        })
    }

    pub fn check(&self, field: &ScalarField) -> Result<()> {
        if field.nx != self.nx || field.ny != self.ny {
            return Err(Error::ShapeMismatch(format!(
                "field is {}x{}, grid is {}x{}",
                field.nx, field.ny, self.nx, self.ny
            )));
        }
        Ok(())
    }

    /// Visits every interior face once as `(here, across, 1/h^2)`, x-faces
    /// first, in a fixed order.
    fn for_each_face(&self, mut visit: impl FnMut(usize, usize, f64)) {
        let cx = 1.0 / (self.hx * self.hx);
        let cy = 1.0 / (self.hy * self.hy);
        for j in 0..self.ny {
            for i in 0..self.nx.saturating_sub(1) {
                let p = self.index(i, j);
                visit(p, p + 1, cx);
            }
        }
        for j in 0..self.ny.saturating_sub(1) {
            for i in 0..self.nx {
                let p = self.index(i, j);
                visit(p, p + self.nx, cy);
            }
        }
    }

    /// Sum of face coefficients `1/h^2` over the existing neighbors of each
    /// cell: the diagonal of `-laplacian`.
    pub fn laplacian_diagonal(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.n_cells()];
        self.for_each_face(|p, q, c| {
            diag[p] += c;
            diag[q] += c;
        });
        diag
    }

    /// Five-point Laplacian with zero-flux boundary faces, written into `out`.
    pub fn laplacian_into(&self, field: &[f64], out: &mut [f64]) {
        debug_assert_eq!(field.len(), self.n_cells());
        debug_assert_eq!(out.len(), self.n_cells());
        let (nx, ny) = (self.nx, self.ny);
        let cx = 1.0 / (self.hx * self.hx);
        let cy = 1.0 / (self.hy * self.hy);
        for j in 0..ny {
            for i in 0..nx {
                let p = j * nx + i;
                let here = field[p];
                let mut acc = 0.0;
                if i > 0 {
                    acc += cx * (field[p - 1] - here);
                }
                if i + 1 < nx {
                    acc += cx * (field[p + 1] - here);
                }
                if j > 0 {
                    acc += cy * (field[p - nx] - here);
                }
                if j + 1 < ny {
                    acc += cy * (field[p + nx] - here);
                }
                out[p] = acc;
            }
        }
    }

    pub fn laplacian(&self, field: &ScalarField) -> Result<ScalarField> {
        self.check(field)?;
        let mut out = self.zeros();
        self.laplacian_into(&field.values, &mut out.values);
        Ok(out)
    }

    /// Discrete `div(u grad v)` in face-flux form with the arithmetic mean of
    /// `u` on each face. Boundary faces carry no flux, so the cell sum of the
    /// result telescopes to zero.
    pub fn chemotaxis_divergence(&self, u: &ScalarField, v: &ScalarField) -> Result<ScalarField> {
        self.check(u)?;
        self.check(v)?;
        let mut out = self.zeros();
        self.chemotaxis_divergence_into(&u.values, &v.values, &mut out.values);
        Ok(out)
    }

    pub fn chemotaxis_divergence_into(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        self.for_each_face(|p, q, c| {
            let flux = c * 0.5 * (u[p] + u[q]) * (v[q] - v[p]);
            out[p] += flux;
            out[q] -= flux;
        });
    }

    /// Transpose of `U -> chemotaxis_divergence(U, v)` applied to `lambda`:
    /// the discrete `-grad(lambda) . grad(v)`.
    ///
    /// The map `V -> chemotaxis_divergence(u, V)` is symmetric, so its
    /// transpose is `chemotaxis_divergence(u, .)` itself.
    pub fn chemotaxis_divergence_transpose_u(
        &self,
        v: &ScalarField,
        lambda: &ScalarField,
    ) -> Result<ScalarField> {
        self.check(v)?;
        self.check(lambda)?;
        let mut out = self.zeros();
        let (v, lambda) = (&v.values, &lambda.values);
        let o = &mut out.values;
        self.for_each_face(|p, q, c| {
            let w = c * 0.5 * (v[q] - v[p]) * (lambda[p] - lambda[q]);
            o[p] += w;
            o[q] += w;
        });
        Ok(out)
    }

    /// `hx * hy * sum` over the cells selected by `mask` (all cells when `None`).
    pub fn integrate(&self, field: &ScalarField, mask: Option<&[bool]>) -> Result<f64> {
        self.check(field)?;
        let sum = match mask {
            None => field.values.iter().sum::<f64>(),
            Some(mask) => {
                if mask.len() != self.n_cells() {
                    return Err(Error::ShapeMismatch(format!(
                        "mask has {} entries, grid has {} cells",
                        mask.len(),
                        self.n_cells()
                    )));
                }
                field
                    .values
                    .iter()
                    .zip(mask)
                    .filter(|(_, &m)| m)
                    .map(|(x, _)| x)
                    .sum::<f64>()
            }
        };
        Ok(self.cell_area() * sum)
    }

    /// Discrete L2 inner product `hx * hy * sum(a * b)`.
    pub fn inner(&self, a: &ScalarField, b: &ScalarField) -> f64 {
        self.cell_area() * dot(&a.values, &b.values)
    }
}

impl ScalarField {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn scaled(&self, s: f64) -> ScalarField {
        self.map(|x| s * x)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            nx: self.nx,
            ny: self.ny,
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    /// `max |self - other|`.
    pub fn max_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
