//! Graded tensor-product grids on the box `(-L, L)^D` and multilinear
//! finite-element assembly on them.

mod assembly;
mod data;
mod export;
mod trace;

use crate::{Error, Point, Result};

pub use assembly::{
    assemble_boundary_mass, assemble_loads, assemble_mass, assemble_stiffness, assemble_system,
    assemble_unit_matrices, AssemblyOptions, Loads,
};
pub use data::{smoothstep_cutoff, AdmissibilityReport, ProblemData};
pub use export::{write_mesh_json, write_point_cloud_csv, write_trace_csv};
pub use trace::{boundary_hhalf_norm, boundary_l2_norm, boundary_trace, BoundaryTrace, TraceSegment};

/// Half width of the computational box `(-3, 3)^d`.
pub const DEFAULT_HALF_WIDTH: f64 = 3.0;

/// Box geometry and which axes are graded around the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometrySpec<const D: usize> {
    pub half_width: f64,
    /// Radius (or half thickness) of the small feature the grading resolves.
    pub defect_radius: f64,
    pub periodic: [bool; D],
    pub graded: [bool; D],
}

impl<const D: usize> GeometrySpec<D> {
    /// Every axis graded around `B_eps`, no periodicity.
    pub fn ball(defect_radius: f64) -> Self {
        Self {
            half_width: DEFAULT_HALF_WIDTH,
            defect_radius,
            periodic: [false; D],
            graded: [true; D],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.half_width <= 2.0 {
            return Err(Error::invalid(format!(
                "half width must exceed 2 so that B_2 fits inside the box, got {}",
                self.half_width
            )));
        }
        if !(self.defect_radius > 0.0 && self.defect_radius <= 1.0) {
            return Err(Error::invalid(format!(
                "defect radius must lie in (0, 1], got {}",
                self.defect_radius
            )));
        }
        Ok(())
    }
}

impl GeometrySpec<2> {
    /// Layer `|x2| < eps`: periodic uniform `x1`, graded `x2`.
    pub fn layer(defect_radius: f64) -> Self {
        Self {
            half_width: DEFAULT_HALF_WIDTH,
            defect_radius,
            periodic: [true, false],
            graded: [false, true],
        }
    }
}

/// Resolution controls for [`build_grid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridBudget {
    /// Cells across `[-eps, eps]` on graded axes.
    pub n_defect: usize,
    /// Cells across the whole axis at bulk resolution.
    pub n_bulk: usize,
    /// Maximal ratio of adjacent cell widths.
    pub growth: f64,
    pub max_cells_per_axis: usize,
}

impl Default for GridBudget {
    fn default() -> Self {
        Self {
            n_defect: 10,
            n_bulk: 60,
            growth: 1.3,
            max_cells_per_axis: 400,
        }
    }
}

impl GridBudget {
    pub fn validate(&self) -> Result<()> {
        if self.n_defect < 4 {
            return Err(Error::invalid(format!("n_defect must be at least 4, got {}", self.n_defect)));
        }
        if self.n_bulk < 8 {
            return Err(Error::invalid(format!("n_bulk must be at least 8, got {}", self.n_bulk)));
        }
        if !(self.growth > 1.0 && self.growth <= 2.0) {
            return Err(Error::invalid(format!("growth must lie in (1, 2], got {}", self.growth)));
        }
        Ok(())
    }
}

/// Node coordinates of one graded axis, symmetric about 0.
pub fn graded_axis(half_width: f64, eps: f64, budget: &GridBudget) -> Result<Vec<f64>> {
    budget.validate()?;
    let l = half_width;
    let h_bulk = 2.0 * l / budget.n_bulk as f64;
    let h_in = 2.0 * eps / budget.n_defect as f64;
    if eps >= 1.0 || h_in >= h_bulk {
        return uniform_axis(half_width, budget.n_bulk, budget.max_cells_per_axis);
    }
    // Outward widths from eps to L: geometric growth capped at the bulk width.
    let span = l - eps;
    let mut widths = Vec::new();
    let mut total = 0.0;
    let mut w = h_in;
    loop {
        w *= budget.growth;
        if w >= h_bulk || total >= span {
            break;
        }
        widths.push(w);
        total += w;
    }
    if total < span {
        let n_b = ((span - total) / h_bulk).ceil() as usize;
        widths.extend(std::iter::repeat_n(h_bulk, n_b));
        total += n_b as f64 * h_bulk;
    }
    let required = budget.n_defect + 2 * widths.len();
    if required > budget.max_cells_per_axis {
        return Err(Error::InfeasibleGrid {
            required,
            budget: budget.max_cells_per_axis,
        });
    }
    let s = span / total;
    let mut right = Vec::with_capacity(widths.len());
    let n = budget.n_defect;
    let inner: Vec<f64> = (0..=n).map(|i| -eps + i as f64 * h_in).collect();
    let mut x = eps;
    for w in &widths {
        x += w * s;
        right.push(x);
    }
    *right.last_mut().expect("at least one outer cell") = l;
    let mut axis: Vec<f64> = right.iter().rev().map(|v| -v).collect();
    axis.extend(inner.iter().map(|v| if v.abs() < 1e-15 * eps { 0.0 } else { *v }));
    axis.extend(right);
    // Enforce exact symmetry.
    let m = axis.len();
    for i in 0..m / 2 {
        let v = 0.5 * (axis[m - 1 - i] - axis[i]);
        axis[i] = -v;
        axis[m - 1 - i] = v;
    }
    Ok(axis)
}

/// `n` equal cells on `[-L, L]`.
pub fn uniform_axis(half_width: f64, n: usize, max_cells: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("an axis needs at least one cell"));
    }
    if n > max_cells {
        return Err(Error::InfeasibleGrid {
            required: n,
            budget: max_cells,
        });
    }
    let mut axis: Vec<f64> = (0..=n)
        .map(|i| -half_width + 2.0 * half_width * i as f64 / n as f64)
        .collect();
    axis[n] = half_width;
    if n % 2 == 0 {
        axis[n / 2] = 0.0;
    }
    Ok(axis)
}

/// Tensor-product grid with optional periodic identification per axis.
///
/// Degrees of freedom are numbered with axis 0 running fastest. On a periodic
/// axis the last node is identified with the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<const D: usize> {
    axes: [Vec<f64>; D],
    periodic: [bool; D],
    half_width: f64,
}

impl<const D: usize> Grid<D> {
    pub fn from_axes(axes: [Vec<f64>; D], periodic: [bool; D]) -> Result<Self> {
        let mut half_width = None;
        for (a, axis) in axes.iter().enumerate() {
            if axis.len() < 2 {
                return Err(Error::invalid(format!("axis {a} needs at least two nodes")));
            }
            if axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::invalid(format!("axis {a} is not strictly increasing")));
            }
            let hw = axis[axis.len() - 1];
            if (axis[0] + hw).abs() > 1e-12 * hw {
                return Err(Error::invalid(format!("axis {a} is not centred at the origin")));
            }
            match half_width {
                None => half_width = Some(hw),
                Some(h) if (h - hw).abs() > 1e-12 * h => {
                    return Err(Error::invalid("all axes must share one half width"));
                }
                _ => {}
            }
            if periodic[a] && axis.len() < 3 {
                return Err(Error::invalid(format!("periodic axis {a} needs at least two cells")));
            }
        }
        Ok(Self {
            axes,
            periodic,
            half_width: half_width.expect("D >= 1"),
        })
    }

    /// `n` uniform cells per axis.
    pub fn uniform(n: usize, half_width: f64, periodic: [bool; D]) -> Result<Self> {
        let axis = uniform_axis(half_width, n, usize::MAX)?;
        Self::from_axes(std::array::from_fn(|_| axis.clone()), periodic)
    }

    pub fn axis(&self, a: usize) -> &[f64] {
        &self.axes[a]
    }

    pub fn periodic(&self) -> [bool; D] {
        self.periodic
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn cells_on_axis(&self, a: usize) -> usize {
        self.axes[a].len() - 1
    }

    pub fn dofs_on_axis(&self, a: usize) -> usize {
        if self.periodic[a] {
            self.cells_on_axis(a)
        } else {
            self.axes[a].len()
        }
    }

    pub fn n_cells(&self) -> usize {
        (0..D).map(|a| self.cells_on_axis(a)).product()
    }

    pub fn n_dofs(&self) -> usize {
        (0..D).map(|a| self.dofs_on_axis(a)).product()
    }

    /// DOF of the node with per-axis indices `idx` (periodic wrap applied).
    pub fn dof(&self, idx: [usize; D]) -> usize {
        let mut dof = 0;
        let mut stride = 1;
        for a in 0..D {
            let n = self.dofs_on_axis(a);
            let i = if self.periodic[a] { idx[a] % n } else { idx[a] };
            dof += i * stride;
            stride *= n;
        }
        dof
    }

    /// Per-axis node indices of a DOF (the representative node on periodic axes).
    pub fn dof_index(&self, mut dof: usize) -> [usize; D] {
        std::array::from_fn(|a| {
            let n = self.dofs_on_axis(a);
            let i = dof % n;
            dof /= n;
            i
        })
    }

    pub fn node(&self, idx: [usize; D]) -> Point<D> {
        Point::<D>::from_fn(|a, _| self.axes[a][idx[a]])
    }

    pub fn dof_point(&self, dof: usize) -> Point<D> {
        self.node(self.dof_index(dof))
    }

    /// Lower-corner node indices of cell number `c` (axis 0 fastest).
    pub fn cell_index(&self, mut c: usize) -> [usize; D] {
        std::array::from_fn(|a| {
            let n = self.cells_on_axis(a);
            let i = c % n;
            c /= n;
            i
        })
    }

    pub fn cell_bounds(&self, idx: [usize; D]) -> (Point<D>, Point<D>) {
        (
            Point::<D>::from_fn(|a, _| self.axes[a][idx[a]]),
            Point::<D>::from_fn(|a, _| self.axes[a][idx[a] + 1]),
        )
    }

    /// The `2^D` DOFs of a cell, local node `k` having bit `a` set for the upper side on axis `a`.
    pub fn cell_dofs(&self, idx: [usize; D]) -> Vec<usize> {
        (0..1usize << D)
            .map(|k| self.dof(std::array::from_fn(|a| idx[a] + ((k >> a) & 1))))
            .collect()
    }

    /// Interpolates a function at the DOF nodes.
    pub fn interpolate(&self, f: impl Fn(&Point<D>) -> f64) -> Vec<f64> {
        (0..self.n_dofs()).map(|i| f(&self.dof_point(i))).collect()
    }

    pub fn min_width(&self) -> f64 {
        self.axes
            .iter()
            .flat_map(|ax| ax.windows(2).map(|w| w[1] - w[0]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_width(&self) -> f64 {
        self.axes
            .iter()
            .flat_map(|ax| ax.windows(2).map(|w| w[1] - w[0]))
            .fold(0.0, f64::max)
    }

    /// Largest ratio between adjacent cell widths over all axes.
    pub fn max_growth(&self) -> f64 {
        let mut worst: f64 = 1.0;
        for ax in &self.axes {
            let widths: Vec<f64> = ax.windows(2).map(|w| w[1] - w[0]).collect();
            for w in widths.windows(2) {
                worst = worst.max(w[1] / w[0]).max(w[0] / w[1]);
            }
        }
        worst
    }

    /// Number of cells of axis `a` lying inside `[lo, hi]`.
    pub fn cells_within(&self, a: usize, lo: f64, hi: f64) -> usize {
        let tol = 1e-12 * self.half_width;
        self.axes[a]
            .windows(2)
            .filter(|w| w[0] >= lo - tol && w[1] <= hi + tol)
            .count()
    }
}

/// Builds the grid for `spec`: graded axes resolve `[-eps, eps]`, the rest are uniform.
pub fn build_grid<const D: usize>(spec: &GeometrySpec<D>, budget: &GridBudget) -> Result<Grid<D>> {
    spec.validate()?;
    budget.validate()?;
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(D);
    for a in 0..D {
        let axis = if spec.graded[a] {
            graded_axis(spec.half_width, spec.defect_radius, budget)?
        } else {
            uniform_axis(spec.half_width, budget.n_bulk, budget.max_cells_per_axis)?
        };
        axes.push(axis);
    }
    let axes: [Vec<f64>; D] = axes.try_into().expect("one axis per dimension");
    Grid::from_axes(axes, spec.periodic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_dimensional_example() {
        let budget = GridBudget {
            n_defect: 10,
            n_bulk: 60,
            ..GridBudget::default()
        };
        let g = build_grid(&GeometrySpec::<1>::ball(0.1), &budget).unwrap();
        assert!(g.cells_within(0, -0.1, 0.1) >= 10);
        assert!(g.n_cells() <= 120);
        assert!(g.max_growth() <= 1.3 + 1e-9);
        assert_eq!(g.axis(0)[0], -3.0);
        assert_eq!(*g.axis(0).last().unwrap(), 3.0);
    }

    #[test]
    fn uniform_when_grading_disabled() {
        let g = build_grid(&GeometrySpec::<2>::ball(1.0), &GridBudget::default()).unwrap();
        assert!(g.max_growth() < 1.0 + 1e-9);
        assert_eq!(g.cells_on_axis(0), 60);
    }

    #[test]
    fn tiny_defect_fits_budget() {
        let g = build_grid(&GeometrySpec::<2>::ball(1e-3), &GridBudget::default()).unwrap();
        assert!(g.cells_on_axis(0) <= 400);
        assert!(g.cells_within(1, -1e-3, 1e-3) >= 10);
        assert!(g.max_growth() <= 1.3 + 1e-9);
    }

    #[test]
    fn infeasible_budget_reports_requirement() {
        let budget = GridBudget {
            n_defect: 40,
            n_bulk: 300,
            max_cells_per_axis: 100,
            ..GridBudget::default()
        };
        match build_grid(&GeometrySpec::<2>::ball(1e-3), &budget) {
            Err(Error::InfeasibleGrid { required, budget }) => {
                assert!(required > budget);
                assert_eq!(budget, 100);
            }
            other => panic!("expected infeasible grid, got {other:?}"),
        }
    }

    #[test]
    fn periodic_dofs_wrap() {
        let g = build_grid(&GeometrySpec::layer(0.1), &GridBudget::default()).unwrap();
        let nx = g.cells_on_axis(0);
        assert_eq!(g.dofs_on_axis(0), nx);
        assert_eq!(g.dof([nx, 3]), g.dof([0, 3]));
        assert_eq!(g.n_dofs(), nx * g.axis(1).len());
        assert_eq!(g.dof_index(g.dof([5, 7])), [5, 7]);
    }

    proptest! {
        #[test]
        fn graded_axes_are_symmetric_and_bounded(e in 1e-4f64..0.9, nd in 4usize..20, nb in 8usize..120) {
            let budget = GridBudget { n_defect: nd, n_bulk: nb, growth: 1.3, max_cells_per_axis: 10_000 };
            let ax = graded_axis(3.0, e, &budget).unwrap();
            let m = ax.len();
            for i in 0..m {
                prop_assert!((ax[i] + ax[m - 1 - i]).abs() < 1e-12);
            }
            let g = Grid::<1>::from_axes([ax], [false]).unwrap();
            prop_assert!(g.max_growth() <= 1.3 + 1e-9);
            let h_bulk = 6.0 / nb as f64;
            if 2.0 * e / (nd as f64) < h_bulk {
                prop_assert!(g.cells_within(0, -e, e) >= nd);
            }
        }
    }
}
