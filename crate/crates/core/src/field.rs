//! Field storage: scalar, vector and complex node data bound to a [`Grid`].
//!
//! Values are stored for every node of the embedding lattice (row-major,
//! exterior nodes hold zero) so index arithmetic never branches; only entries
//! under the mask are meaningful.  All constructors keep a shared handle to
//! the grid, which lets operators check at run time that their operands live
//! on the same discretization.

use num_complex::Complex64;
use std::sync::Arc;

use crate::domain::Point2;
use crate::grid::Grid;

macro_rules! field_common {
    ($name:ident, $elem:ty, $zero:expr) => {
        #[derive(Clone)]
        pub struct $name {
            pub grid: Arc<Grid>,
            pub data: Vec<$elem>,
        }

        impl std::fmt::Debug for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(
                    f,
                    "{}({}x{}, h = {})",
                    stringify!($name),
                    self.grid.nx,
                    self.grid.ny,
                    self.grid.h
                )
            }
        }

        impl $name {
            #[must_use]
            pub fn zeros(grid: &Arc<Grid>) -> Self {
                Self { grid: grid.clone(), data: vec![$zero; grid.nx * grid.ny] }
            }

            /// Fills mask nodes from `f`; exterior nodes stay zero.
            #[must_use]
            pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(Point2) -> $elem) -> Self {
                let mut out = Self::zeros(grid);
                for &k in &grid.interior {
                    out.data[k as usize] = f(grid.pos_of(k as usize));
                }
                out
            }

            /// Fills every lattice node from `f`, collar included.  Useful for
            /// boundary data that must be interpolable across the mask edge.
            #[must_use]
            pub fn from_fn_all(grid: &Arc<Grid>, f: impl Fn(Point2) -> $elem) -> Self {
                let mut out = Self::zeros(grid);
                for k in 0..out.data.len() {
                    out.data[k] = f(grid.pos_of(k));
                }
                out
            }

            #[inline]
            #[must_use]
            pub fn at(&self, i: usize, j: usize) -> $elem {
                self.data[self.grid.idx(i, j)]
            }

            pub fn same_grid(&self, other: &$name) -> bool {
                Arc::ptr_eq(&self.grid, &other.grid)
                    || (self.grid.nx == other.grid.nx
                        && self.grid.ny == other.grid.ny
                        && self.grid.h == other.grid.h)
            }

            /// Bilinear interpolation at an arbitrary interior point.
            #[must_use]
            pub fn bilinear(&self, p: Point2) -> $elem {
                match self.grid.bilinear_stencil(p) {
                    Some((ks, ws)) => {
                        let mut acc = $zero;
                        for t in 0..4 {
                            acc = acc + self.data[ks[t]] * ws[t];
                        }
                        acc
                    }
                    None => $zero,
                }
            }
        }
    };
}

field_common!(ScalarField, f64, 0.0f64);
field_common!(ComplexField, Complex64, Complex64::new(0.0, 0.0));

impl ScalarField {
    /// Maximum of `|f|` over the mask.
    #[must_use]
    pub fn max_abs(&self) -> f64 {
        self.grid
            .interior
            .iter()
            .map(|&k| self.data[k as usize].abs())
            .fold(0.0, f64::max)
    }

    /// Minimum over the mask.
    #[must_use]
    pub fn min_in_mask(&self) -> f64 {
        self.grid
            .interior
            .iter()
            .map(|&k| self.data[k as usize])
            .fold(f64::INFINITY, f64::min)
    }

    /// Area integral with the grid's cut-cell weights.
    #[must_use]
    pub fn integral(&self) -> f64 {
        self.grid
            .interior
            .iter()
            .map(|&k| self.data[k as usize] * self.grid.quad_w[k as usize])
            .sum()
    }

    /// True when every masked value is finite.
    #[must_use]
    pub fn is_finite_in_mask(&self) -> bool {
        self.grid.interior.iter().all(|&k| self.data[k as usize].is_finite())
    }
}

impl ComplexField {
    /// Minimum modulus over the mask.
    #[must_use]
    pub fn min_abs(&self) -> f64 {
        self.grid
            .interior
            .iter()
            .map(|&k| self.data[k as usize].norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Maximum modulus over the mask.
    #[must_use]
    pub fn max_abs(&self) -> f64 {
        self.grid
            .interior
            .iter()
            .map(|&k| self.data[k as usize].norm())
            .fold(0.0, f64::max)
    }

    #[must_use]
    pub fn is_finite_in_mask(&self) -> bool {
        self.grid.interior.iter().all(|&k| {
            let z = self.data[k as usize];
            z.re.is_finite() && z.im.is_finite()
        })
    }
}

/// Node-based vector field (two scalar components).
#[derive(Clone)]
pub struct VectorField {
    pub grid: Arc<Grid>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl VectorField {
    #[must_use]
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self {
            grid: grid.clone(),
            x: vec![0.0; grid.nx * grid.ny],
            y: vec![0.0; grid.nx * grid.ny],
        }
    }

    #[must_use]
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(Point2) -> (f64, f64)) -> Self {
        let mut out = Self::zeros(grid);
        for &k in &grid.interior {
            let (vx, vy) = f(grid.pos_of(k as usize));
            out.x[k as usize] = vx;
            out.y[k as usize] = vy;
        }
        out
    }

    /// Maximum pointwise magnitude over the mask.
    #[must_use]
    pub fn max_norm(&self) -> f64 {
        self.grid
            .interior
            .iter()
            .map(|&k| self.x[k as usize].hypot(self.y[k as usize]))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use crate::grid::build_grid;

    #[test]
    fn from_fn_only_touches_mask() {
        let g = build_grid(&DomainSpec::disk(1.0), 32).unwrap();
        let f = ScalarField::from_fn(&g, |_| 1.0);
        let total: f64 = f.data.iter().sum();
        assert_eq!(total as usize, g.n_interior());
    }

    #[test]
    fn bilinear_reproduces_linear_functions() {
        let g = build_grid(&DomainSpec::rectangle(1.0, 1.0), 32).unwrap();
        let f = ScalarField::from_fn_all(&g, |p| 2.0 * p.x - 3.0 * p.y + 0.25);
        let p = Point2::new(0.1037, -0.2213);
        let exact = 2.0 * p.x - 3.0 * p.y + 0.25;
        assert!((f.bilinear(p) - exact).abs() < 1e-12);
    }

    #[test]
    fn integral_of_one_is_area() {
        let g = build_grid(&DomainSpec::disk(1.0), 64).unwrap();
        let f = ScalarField::from_fn(&g, |_| 1.0);
        assert!((f.integral() - std::f64::consts::PI).abs() < 3e-3);
    }
}
