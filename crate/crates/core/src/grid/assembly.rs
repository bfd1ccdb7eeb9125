use rayon::prelude::*;

use super::data::ProblemData;
use super::Grid;
use crate::linalg::SparseMatrix;
use crate::xform::{CoefficientField, Interface};
use crate::{Error, Point, Result, Tensor};

/// Quadrature controls for matrix assembly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    /// Cells cut by a declared coefficient interface are split into
    /// `subcells^D` pieces, each with its own tensor Gauss rule.
    pub subcells: usize,
    /// On cut cells, replace the sampled conductivity by one effective tensor:
    /// harmonic mean across the interface, arithmetic mean along it.
    pub laminate: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            subcells: 4,
            laminate: true,
        }
    }
}

const CELLS_PER_TASK: usize = 512;

/// Gauss-Legendre nodes and weights on `[0, 1]`.
fn gauss_unit(n: usize) -> Vec<(f64, f64)> {
    let sym: &[(f64, f64)] = match n {
        1 => &[(0.0, 2.0)],
        2 => &[(0.577_350_269_189_625_8, 1.0)],
        3 => &[(0.0, 0.888_888_888_888_888_9), (0.774_596_669_241_483_4, 0.555_555_555_555_555_6)],
        4 => &[
            (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
            (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
        ],
        _ => panic!("unsupported Gauss order {n}"),
    };
    let mut out = Vec::new();
    for &(x, w) in sym {
        if x == 0.0 {
            out.push((0.5, 0.5 * w));
        } else {
            out.push((0.5 - 0.5 * x, 0.5 * w));
            out.push((0.5 + 0.5 * x, 0.5 * w));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Tensor rule on the reference cell, optionally composite, with the
/// multilinear shape functions tabulated at its points.
struct RefRule<const D: usize> {
    points: Vec<Point<D>>,
    weights: Vec<f64>,
    /// `phi[q][k]`.
    phi: Vec<Vec<f64>>,
    /// Reference gradients `dphi[q][k]`.
    dphi: Vec<Vec<Point<D>>>,
}

impl<const D: usize> RefRule<D> {
    fn new(order: usize, subcells: usize) -> Self {
        let base = gauss_unit(order);
        let s = subcells.max(1);
        let line: Vec<(f64, f64)> = (0..s)
            .flat_map(|j| base.iter().map(move |&(x, w)| ((j as f64 + x) / s as f64, w / s as f64)))
            .collect();
        let per_axis = line.len();
        let total = per_axis.pow(D as u32);
        let mut points = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        for mut q in 0..total {
            let mut p = Point::<D>::zeros();
            let mut w = 1.0;
            for a in 0..D {
                let (x, wx) = line[q % per_axis];
                q /= per_axis;
                p[a] = x;
                w *= wx;
            }
            points.push(p);
            weights.push(w);
        }
        let nloc = 1usize << D;
        let phi = points
            .iter()
            .map(|p| (0..nloc).map(|k| shape(k, p)).collect())
            .collect();
        let dphi = points
            .iter()
            .map(|p| (0..nloc).map(|k| shape_grad(k, p)).collect())
            .collect();
        Self {
            points,
            weights,
            phi,
            dphi,
        }
    }
}

fn shape<const D: usize>(k: usize, xi: &Point<D>) -> f64 {
    (0..D)
        .map(|a| if (k >> a) & 1 == 1 { xi[a] } else { 1.0 - xi[a] })
        .product()
}

fn shape_grad<const D: usize>(k: usize, xi: &Point<D>) -> Point<D> {
    Point::<D>::from_fn(|a, _| {
        let mut g = if (k >> a) & 1 == 1 { 1.0 } else { -1.0 };
        for b in 0..D {
            if b != a {
                g *= if (k >> b) & 1 == 1 { xi[b] } else { 1.0 - xi[b] };
            }
        }
        g
    })
}

type Triplets = Vec<(usize, usize, f64)>;

/// Assembles stiffness `K` and density-weighted mass `M` in one sweep.
pub fn assemble_system<const D: usize>(
    grid: &Grid<D>,
    coeff: &CoefficientField<D>,
    opts: &AssemblyOptions,
) -> Result<(SparseMatrix, SparseMatrix)> {
    let plain = RefRule::<D>::new(2, 1);
    let refined = RefRule::<D>::new(2, opts.subcells.max(1));
    let nloc = 1usize << D;
    let n_cells = grid.n_cells();
    let chunks: Vec<(Triplets, Triplets)> = (0..n_cells.div_ceil(CELLS_PER_TASK))
        .into_par_iter()
        .map(|chunk| -> Result<(Triplets, Triplets)> {
            let start = chunk * CELLS_PER_TASK;
            let end = (start + CELLS_PER_TASK).min(n_cells);
            let mut kt = Vec::with_capacity((end - start) * nloc * nloc);
            let mut mt = Vec::with_capacity((end - start) * nloc * nloc);
            let mut kloc = vec![0.0; nloc * nloc];
            let mut mloc = vec![0.0; nloc * nloc];
            let mut grads = vec![Point::<D>::zeros(); nloc];
            for c in start..end {
                let idx = grid.cell_index(c);
                let (lo, hi) = grid.cell_bounds(idx);
                let h = hi - lo;
                let vol: f64 = h.iter().product();
                let cut = coeff.interfaces().iter().find(|i| i.cuts(&lo, &hi));
                let rule = if opts.subcells > 1 && cut.is_some() {
                    &refined
                } else {
                    &plain
                };
                let normal = cut
                    .filter(|_| opts.laminate)
                    .and_then(|i| interface_normal(i, &(lo + h * 0.5)));
                kloc.iter_mut().for_each(|v| *v = 0.0);
                mloc.iter_mut().for_each(|v| *v = 0.0);
                let mut tau = Tensor::<D>::zeros();
                for (q, xi) in rule.points.iter().enumerate() {
                    let x = lo + h.component_mul(xi);
                    let (rho, a) = coeff.sample_checked(&x).map_err(|e| locate(e, idx))?;
                    let w = rule.weights[q] * vol;
                    if let Some(frame) = &normal {
                        tau += to_tau(&(frame.transpose() * a * frame)) * rule.weights[q];
                    }
                    for k in 0..nloc {
                        grads[k] = rule.dphi[q][k].component_div(&h);
                    }
                    for i in 0..nloc {
                        let agi = a * grads[i];
                        for j in i..nloc {
                            if normal.is_none() {
                                kloc[i * nloc + j] += w * agi.dot(&grads[j]);
                            }
                            mloc[i * nloc + j] += w * rho * rule.phi[q][i] * rule.phi[q][j];
                        }
                    }
                }
                if let Some(frame) = &normal {
                    let a = frame * from_tau(&tau) * frame.transpose();
                    for (q, &wq) in plain.weights.iter().enumerate() {
                        let w = wq * vol;
                        for k in 0..nloc {
                            grads[k] = plain.dphi[q][k].component_div(&h);
                        }
                        for i in 0..nloc {
                            let agi = a * grads[i];
                            for j in i..nloc {
                                kloc[i * nloc + j] += w * agi.dot(&grads[j]);
                            }
                        }
                    }
                }
                let dofs = grid.cell_dofs(idx);
                for i in 0..nloc {
                    for j in 0..nloc {
                        let (p, r) = if i <= j { (i, j) } else { (j, i) };
                        kt.push((dofs[i], dofs[j], kloc[p * nloc + r]));
                        mt.push((dofs[i], dofs[j], mloc[p * nloc + r]));
                    }
                }
            }
            Ok((kt, mt))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = grid.n_dofs();
    let mut kt = Vec::with_capacity(n_cells * nloc * nloc);
    let mut mt = Vec::with_capacity(n_cells * nloc * nloc);
    for (k, m) in chunks {
        kt.extend(k);
        mt.extend(m);
    }
    Ok((SparseMatrix::from_triplets(n, kt)?, SparseMatrix::from_triplets(n, mt)?))
}

/// Orthonormal frame whose first column is the interface normal near `x`.
fn interface_normal<const D: usize>(interface: &Interface, x: &Point<D>) -> Option<Tensor<D>> {
    let n = match *interface {
        Interface::Sphere(_) => {
            let r = x.norm();
            if r == 0.0 {
                return None;
            }
            x / r
        }
        Interface::Slab { axis, .. } => Point::<D>::from_fn(|a, _| if a == axis { 1.0 } else { 0.0 }),
    };
    // Householder reflection sending e1 to n; its columns are orthonormal.
    let mut v = n.clone();
    v[0] -= 1.0;
    let vv = v.dot(&v);
    if vv < 1e-30 {
        return Some(Tensor::<D>::identity());
    }
    Some(Tensor::<D>::identity() - v * v.transpose() * (2.0 / vv))
}

/// Map whose arithmetic average over a laminate gives the exact effective tensor.
/// Index 0 is the normal direction.
fn to_tau<const D: usize>(a: &Tensor<D>) -> Tensor<D> {
    let ann = a[(0, 0)];
    Tensor::<D>::from_fn(|i, j| match (i, j) {
        (0, 0) => -1.0 / ann,
        (0, _) | (_, 0) => a[(i, j)] / ann,
        _ => a[(i, j)] - a[(i, 0)] * a[(0, j)] / ann,
    })
}

fn from_tau<const D: usize>(t: &Tensor<D>) -> Tensor<D> {
    let ann = -1.0 / t[(0, 0)];
    Tensor::<D>::from_fn(|i, j| match (i, j) {
        (0, 0) => ann,
        (0, _) | (_, 0) => t[(i, j)] * ann,
        _ => t[(i, j)] + t[(i, 0)] * t[(0, j)] * ann,
    })
}

fn locate<const D: usize>(e: Error, idx: [usize; D]) -> Error {
    match e {
        Error::NonSpdTensor { location } => Error::NonSpdTensor {
            location: format!("cell {idx:?}, {location}"),
        },
        Error::NonPositiveDensity { location, value } => Error::NonPositiveDensity {
            location: format!("cell {idx:?}, {location}"),
            value,
        },
        other => other,
    }
}

/// `K_ij = int A grad phi_j . grad phi_i`.
pub fn assemble_stiffness<const D: usize>(
    grid: &Grid<D>,
    coeff: &CoefficientField<D>,
    opts: &AssemblyOptions,
) -> Result<SparseMatrix> {
    assemble_system(grid, coeff, opts).map(|(k, _)| k)
}

/// `M_ij = int rho phi_j phi_i`.
pub fn assemble_mass<const D: usize>(
    grid: &Grid<D>,
    coeff: &CoefficientField<D>,
    opts: &AssemblyOptions,
) -> Result<SparseMatrix> {
    assemble_system(grid, coeff, opts).map(|(_, m)| m)
}

/// Unit-coefficient `(K_1, M_1)`, used for discrete `H^1` norms.
pub fn assemble_unit_matrices<const D: usize>(grid: &Grid<D>) -> Result<(SparseMatrix, SparseMatrix)> {
    assemble_system(grid, &CoefficientField::homogeneous(), &AssemblyOptions { subcells: 1, laminate: false })
}

/// Visits every boundary facet quadrature point: `(cell, local xi, physical x, weight)`.
fn for_each_boundary_point<const D: usize>(
    grid: &Grid<D>,
    order: usize,
    mut visit: impl FnMut([usize; D], &Point<D>, &Point<D>, f64),
) {
    let line = gauss_unit(order);
    let per = line.len();
    for a in 0..D {
        if grid.periodic()[a] {
            continue;
        }
        for side in 0..2 {
            let fixed = if side == 0 { 0 } else { grid.cells_on_axis(a) - 1 };
            for c in 0..grid.n_cells() {
                let idx = grid.cell_index(c);
                if idx[a] != fixed {
                    continue;
                }
                let (lo, hi) = grid.cell_bounds(idx);
                let h = hi - lo;
                let n_pts = per.pow(D as u32 - 1);
                for mut q in 0..n_pts {
                    let mut xi = Point::<D>::zeros();
                    let mut w = 1.0;
                    for b in 0..D {
                        if b == a {
                            xi[b] = side as f64;
                        } else {
                            let (x, wx) = line[q % per];
                            q /= per;
                            xi[b] = x;
                            w *= wx * h[b];
                        }
                    }
                    let x = lo + h.component_mul(&xi);
                    visit(idx, &xi, &x, w);
                }
            }
        }
    }
}

/// Consistent mass matrix of the boundary `int_{dOmega} phi_j phi_i`.
pub fn assemble_boundary_mass<const D: usize>(grid: &Grid<D>) -> Result<SparseMatrix> {
    let nloc = 1usize << D;
    let mut t = Vec::new();
    for_each_boundary_point(grid, 2, |idx, xi, _x, w| {
        let dofs = grid.cell_dofs(idx);
        let phi: Vec<f64> = (0..nloc).map(|k| shape(k, xi)).collect();
        for i in 0..nloc {
            for j in 0..nloc {
                let v = w * phi[i] * phi[j];
                if v != 0.0 {
                    t.push((dofs[i], dofs[j], v));
                }
            }
        }
    });
    SparseMatrix::from_triplets(grid.n_dofs(), t)
}

/// Volume load `int f phi_i` and Neumann load `int_{dOmega} g phi_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Loads {
    pub volume: Vec<f64>,
    pub boundary: Vec<f64>,
}

impl Loads {
    pub fn total(&self) -> Vec<f64> {
        self.volume.iter().zip(&self.boundary).map(|(a, b)| a + b).collect()
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            volume: vec![0.0; n],
            boundary: vec![0.0; n],
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            volume: self.volume.iter().map(|v| v * s).collect(),
            boundary: self.boundary.iter().map(|v| v * s).collect(),
        }
    }
}

/// Load vectors with a 4-point Gauss rule per axis (the data are smooth away from the cutoff ramp).
pub fn assemble_loads<const D: usize>(grid: &Grid<D>, data: &ProblemData<D>) -> Result<Loads> {
    let n = grid.n_dofs();
    let nloc = 1usize << D;
    let rule = RefRule::<D>::new(4, 1);
    let n_cells = grid.n_cells();
    let partial: Vec<Vec<(usize, f64)>> = (0..n_cells.div_ceil(CELLS_PER_TASK))
        .into_par_iter()
        .map(|chunk| {
            let start = chunk * CELLS_PER_TASK;
            let end = (start + CELLS_PER_TASK).min(n_cells);
            let mut out = Vec::with_capacity((end - start) * nloc);
            for c in start..end {
                let idx = grid.cell_index(c);
                let (lo, hi) = grid.cell_bounds(idx);
                let h = hi - lo;
                let vol: f64 = h.iter().product();
                let mut loc = vec![0.0; nloc];
                for (q, xi) in rule.points.iter().enumerate() {
                    let x = lo + h.component_mul(xi);
                    let fx = data.f(&x);
                    for k in 0..nloc {
                        loc[k] += rule.weights[q] * vol * fx * rule.phi[q][k];
                    }
                }
                for (k, dof) in grid.cell_dofs(idx).into_iter().enumerate() {
                    out.push((dof, loc[k]));
                }
            }
            out
        })
        .collect();
    let mut volume = vec![0.0; n];
    for (dof, v) in partial.into_iter().flatten() {
        volume[dof] += v;
    }
    let mut boundary = vec![0.0; n];
    for_each_boundary_point(grid, 4, |idx, xi, x, w| {
        let gx = data.g(x);
        for (k, dof) in grid.cell_dofs(idx).into_iter().enumerate() {
            boundary[dof] += w * gx * shape(k, xi);
        }
    });
    if volume.iter().chain(&boundary).any(|v| !v.is_finite()) {
        return Err(Error::invalid("problem data produced non-finite load entries"));
    }
    Ok(Loads { volume, boundary })
}

#[cfg(test)]
mod tests {
    use super::super::{build_grid, GeometrySpec, GridBudget};
    use super::*;
    use crate::xform::{CloakParams, InclusionMaterial};
    use crate::Tensor;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn grid2(n: usize) -> Grid<2> {
        Grid::uniform(n, 3.0, [false, false]).unwrap()
    }

    #[test]
    fn gauss_rules_integrate_polynomials() {
        for n in 1..=4 {
            let r = gauss_unit(n);
            let exact_deg = 2 * n - 1;
            for p in 0..=exact_deg {
                let s: f64 = r.iter().map(|(x, w)| w * x.powi(p as i32)).sum();
                assert_relative_eq!(s, 1.0 / (p as f64 + 1.0), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn kernel_and_area() {
        let g = grid2(12);
        let (k, m) = assemble_system(&g, &CoefficientField::homogeneous(), &AssemblyOptions::default()).unwrap();
        assert!(k.row_sums().iter().all(|v| v.abs() < 1e-12));
        assert!(k.max_asymmetry() == 0.0);
        let ones = vec![1.0; g.n_dofs()];
        assert_relative_eq!(m.quad_form(&ones), 36.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_functions_have_exact_energy() {
        let g = build_grid(&GeometrySpec::<2>::ball(0.2), &GridBudget::default()).unwrap();
        let aniso = Tensor::<2>::new(2.0, 0.3, 0.3, 1.0);
        let field = CoefficientField::custom(Arc::new(|_| 1.0), Arc::new(move |_| aniso));
        let k = assemble_stiffness(&g, &field, &AssemblyOptions::default()).unwrap();
        let u = g.interpolate(|x| 0.5 * x[0] - 2.0 * x[1]);
        let grad = nalgebra::Vector2::new(0.5, -2.0);
        assert_relative_eq!(k.quad_form(&u), 36.0 * grad.dot(&(aniso * grad)), epsilon = 1e-10);
    }

    #[test]
    fn defect_mass_matches_exact_integral() {
        // int rho = 36 - pi eps^2 + pi eta for the small inclusion.
        let p = CloakParams::new(0.1, 2).unwrap();
        let m = InclusionMaterial::<2>::isotropic(1.0, 1.0).unwrap();
        let field = CoefficientField::defect(&p, &m).unwrap();
        let g = build_grid(&GeometrySpec::<2>::ball(0.1), &GridBudget { n_defect: 20, ..GridBudget::default() }).unwrap();
        let mass = assemble_mass(&g, &field, &AssemblyOptions { subcells: 8, laminate: false }).unwrap();
        let ones = vec![1.0; g.n_dofs()];
        assert_relative_eq!(mass.quad_form(&ones), 36.0 - PI * 0.01 + PI, max_relative = 2e-4);
    }

    #[test]
    fn periodic_axis_preserves_x1_independent_fields() {
        let g = build_grid(&GeometrySpec::layer(0.1), &GridBudget::default()).unwrap();
        let m = InclusionMaterial::<2>::isotropic(1.0, 1.0).unwrap();
        let field = CoefficientField::layered_cloak(0.1, &m).unwrap();
        let k = assemble_stiffness(&g, &field, &AssemblyOptions::default()).unwrap();
        let u = g.interpolate(|x| (x[1] * 0.7).sin() + x[1] * x[1]);
        let ku = k.matvec(&u);
        let nx = g.dofs_on_axis(0);
        for j in 0..g.dofs_on_axis(1) {
            let first = ku[g.dof([0, j])];
            for i in 1..nx {
                assert!((ku[g.dof([i, j])] - first).abs() <= 1e-12 * (1.0 + first.abs()));
            }
        }
    }

    #[test]
    fn non_spd_cell_is_named() {
        let g = grid2(4);
        let bad = CoefficientField::custom(Arc::new(|_| 1.0), Arc::new(|x: &Point<2>| {
            if x[0] > 2.0 { -Tensor::<2>::identity() } else { Tensor::<2>::identity() }
        }));
        match assemble_stiffness(&g, &bad, &AssemblyOptions::default()) {
            Err(Error::NonSpdTensor { location }) => assert!(location.starts_with("cell [3,")),
            other => panic!("expected a non-SPD error, got {other:?}"),
        }
    }

    #[test]
    fn tau_round_trips() {
        let a = Tensor::<3>::new(2.0, 0.3, -0.1, 0.3, 1.5, 0.2, -0.1, 0.2, 0.7);
        assert!((from_tau(&to_tau(&a)) - a).amax() < 1e-14);
    }

    #[test]
    fn laminate_cell_gets_series_and_parallel_means() {
        // One cell [-1, 1]^2 with a slab |x2| < 1/2 of conductivity 4 in a medium of conductivity 1.
        let g = Grid::<2>::uniform(1, 1.0, [false, false]).unwrap();
        let slab = CoefficientField::custom(
            Arc::new(|_| 1.0),
            Arc::new(|x: &Point<2>| Tensor::<2>::identity() * if x[1].abs() < 0.5 { 4.0 } else { 1.0 }),
        )
        .with_interfaces(vec![Interface::Slab { axis: 1, offset: 0.5 }]);
        let k = assemble_stiffness(&g, &slab, &AssemblyOptions::default()).unwrap();
        let (along, across) = (0.5 * 4.0 + 0.5 * 1.0, 1.0 / (0.5 / 4.0 + 0.5 / 1.0));
        let effective = CoefficientField::custom(
            Arc::new(|_| 1.0),
            Arc::new(move |_: &Point<2>| Tensor::<2>::new(along, 0.0, 0.0, across)),
        );
        let k_eff = assemble_stiffness(&g, &effective, &AssemblyOptions::default()).unwrap();
        let v = [0.3, -1.0, 2.0, 0.5];
        assert!((k.quad_form(&v) - k_eff.quad_form(&v)).abs() < 1e-12);
    }

    #[test]
    fn boundary_mass_measures_perimeter() {
        let g = grid2(7);
        let mb = assemble_boundary_mass(&g).unwrap();
        let ones = vec![1.0; g.n_dofs()];
        assert_relative_eq!(mb.quad_form(&ones), 24.0, epsilon = 1e-12);
        let g1 = Grid::<1>::uniform(5, 3.0, [false]).unwrap();
        let mb1 = assemble_boundary_mass(&g1).unwrap();
        assert_relative_eq!(mb1.quad_form(&[1.0; 6]), 2.0, epsilon = 1e-14);
    }
}
