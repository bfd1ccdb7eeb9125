use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::Grid;
use crate::{Error, Result};

/// One connected piece of the boundary sampled at grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSegment {
    /// Arclength of each sample from the segment start.
    pub s: Vec<f64>,
    pub values: Vec<f64>,
    /// Quadrature weights (trapezoid along arclength; `1` for isolated points).
    pub weights: Vec<f64>,
    pub length: f64,
    /// Closed curves wrap from the last sample back to `s = 0`.
    pub closed: bool,
}

/// Boundary values of a grid function, ordered by arclength.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    pub segments: Vec<TraceSegment>,
}

impl BoundaryTrace {
    /// Pointwise difference of two traces taken on the same grid.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        if self.segments.len() != other.segments.len()
            || self
                .segments
                .iter()
                .zip(&other.segments)
                .any(|(a, b)| a.s.len() != b.s.len() || a.s.iter().zip(&b.s).any(|(p, q)| (p - q).abs() > 1e-12))
        {
            return Err(Error::invalid("traces were sampled at different boundary points"));
        }
        Ok(Self {
            segments: self
                .segments
                .iter()
                .zip(&other.segments)
                .map(|(a, b)| TraceSegment {
                    values: a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect(),
                    ..a.clone()
                })
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Measure of the boundary.
    pub fn measure(&self) -> f64 {
        self.segments.iter().map(|s| s.weights.iter().sum::<f64>()).sum()
    }

    /// Weighted mean of the trace over the boundary.
    pub fn mean(&self) -> f64 {
        let m = self.measure();
        if m == 0.0 {
            return 0.0;
        }
        self.segments
            .iter()
            .flat_map(|s| s.values.iter().zip(&s.weights).map(|(v, w)| v * w))
            .sum::<f64>()
            / m
    }

    /// Values of this trace at the arclength positions of `template`, by
    /// periodic linear interpolation along each closed segment.
    pub fn resample_like(&self, template: &Self) -> Result<Self> {
        if self.segments.len() != template.segments.len() {
            return Err(Error::invalid("traces have different numbers of boundary segments"));
        }
        let mut segments = Vec::with_capacity(self.segments.len());
        for (src, dst) in self.segments.iter().zip(&template.segments) {
            if !src.closed || !dst.closed || (src.length - dst.length).abs() > 1e-9 * dst.length {
                return Err(Error::invalid("resampling needs closed boundary curves of equal length"));
            }
            segments.push(TraceSegment {
                values: dst.s.iter().map(|&s| periodic_interp(src, s)).collect(),
                ..dst.clone()
            });
        }
        Ok(Self { segments })
    }

    /// Copy with a constant subtracted from every value.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            segments: self
                .segments
                .iter()
                .map(|s| TraceSegment {
                    values: s.values.iter().map(|v| v - c).collect(),
                    ..s.clone()
                })
                .collect(),
        }
    }
}

fn polyline(
    grid: &Grid<2>,
    u: &[f64],
    nodes: Vec<[usize; 2]>,
    closed: bool,
) -> TraceSegment {
    let pts: Vec<_> = nodes.iter().map(|&n| grid.node(n)).collect();
    let values: Vec<f64> = nodes.iter().map(|&n| u[grid.dof(n)]).collect();
    let m = pts.len();
    let mut s = Vec::with_capacity(m);
    let mut acc = 0.0;
    let mut seg_len = Vec::with_capacity(m);
    for i in 0..m {
        s.push(acc);
        let next = if i + 1 < m {
            Some(pts[i + 1])
        } else if closed {
            None
        } else {
            Some(pts[i])
        };
        let l = match next {
            Some(p) => (p - pts[i]).norm(),
            // Closing edge: on a periodic line the wrap goes to the identified node.
            None => closing_length(grid, &nodes, &pts),
        };
        seg_len.push(l);
        acc += l;
    }
    let length = if closed { acc } else { acc - seg_len[m - 1] };
    let weights = (0..m)
        .map(|i| {
            let before = if i > 0 {
                seg_len[i - 1]
            } else if closed {
                seg_len[m - 1]
            } else {
                0.0
            };
            let after = if i + 1 < m || closed { seg_len[i] } else { 0.0 };
            0.5 * (before + after)
        })
        .collect();
    TraceSegment {
        s,
        values,
        weights,
        length,
        closed,
    }
}

fn closing_length(grid: &Grid<2>, nodes: &[[usize; 2]], pts: &[crate::Point<2>]) -> f64 {
    let last = nodes[nodes.len() - 1];
    let first = nodes[0];
    if first[0] == 0 && first[1] == 0 && !grid.periodic()[0] && !grid.periodic()[1] {
        (pts[0] - pts[pts.len() - 1]).norm()
    } else {
        // Periodic line: the closing edge is the last cell of the periodic axis.
        let a = if grid.periodic()[0] { 0 } else { 1 };
        let ax = grid.axis(a);
        ax[last[a] + 1] - ax[last[a]]
    }
}

/// Samples `u` at the boundary nodes.
///
/// * `D = 1`: two isolated points `x = -L` and `x = L`.
/// * `D = 2`: the perimeter as one closed curve traversed counter-clockwise from
///   `(-L, -L)`, or for one periodic axis the two closed lines of the other axis.
/// * `D = 3`: all boundary nodes as one unordered segment with lumped face weights.
pub fn boundary_trace<const D: usize>(grid: &Grid<D>, u: &[f64]) -> Result<BoundaryTrace> {
    if u.len() != grid.n_dofs() {
        return Err(Error::DimensionMismatch {
            expected: grid.n_dofs(),
            got: u.len(),
        });
    }
    match D {
        1 => {
            if grid.periodic()[0] {
                return Err(Error::invalid("a periodic 1D grid has no boundary"));
            }
            let n = grid.axis(0).len() - 1;
            let point = |i: usize| TraceSegment {
                s: vec![0.0],
                values: vec![u[i]],
                weights: vec![1.0],
                length: 0.0,
                closed: false,
            };
            Ok(BoundaryTrace {
                segments: vec![point(0), point(n)],
            })
        }
        2 => {
            let g2 = Grid::<2>::from_axes(
                [grid.axis(0).to_vec(), grid.axis(1).to_vec()],
                [grid.periodic()[0], grid.periodic()[1]],
            )?;
            trace_2d(&g2, u)
        }
        _ => {
            let mb = super::assemble_boundary_mass(grid)?;
            let lumped = mb.row_sums();
            let mut s = Vec::new();
            let mut values = Vec::new();
            let mut weights = Vec::new();
            for (i, w) in lumped.iter().enumerate() {
                if *w > 0.0 {
                    s.push(s.len() as f64);
                    values.push(u[i]);
                    weights.push(*w);
                }
            }
            if s.is_empty() {
                return Err(Error::invalid("grid has no boundary"));
            }
            Ok(BoundaryTrace {
                segments: vec![TraceSegment {
                    length: weights.iter().sum(),
                    s,
                    values,
                    weights,
                    closed: false,
                }],
            })
        }
    }
}

fn trace_2d(grid: &Grid<2>, u: &[f64]) -> Result<BoundaryTrace> {
    let nx = grid.axis(0).len() - 1;
    let ny = grid.axis(1).len() - 1;
    match grid.periodic() {
        [false, false] => {
            let mut nodes = Vec::with_capacity(2 * (nx + ny));
            nodes.extend((0..nx).map(|i| [i, 0]));
            nodes.extend((0..ny).map(|j| [nx, j]));
            nodes.extend((1..=nx).rev().map(|i| [i, ny]));
            nodes.extend((1..=ny).rev().map(|j| [0, j]));
            Ok(BoundaryTrace {
                segments: vec![polyline(grid, u, nodes, true)],
            })
        }
        [true, false] => Ok(BoundaryTrace {
            segments: vec![
                polyline(grid, u, (0..nx).map(|i| [i, 0]).collect(), true),
                polyline(grid, u, (0..nx).map(|i| [i, ny]).collect(), true),
            ],
        }),
        [false, true] => Ok(BoundaryTrace {
            segments: vec![
                polyline(grid, u, (0..ny).map(|j| [0, j]).collect(), true),
                polyline(grid, u, (0..ny).map(|j| [nx, j]).collect(), true),
            ],
        }),
        [true, true] => Err(Error::invalid("a doubly periodic grid has no boundary")),
    }
}

/// `sqrt(sum_i w_i u_i^2)`: trapezoid rule along arclength.
pub fn boundary_l2_norm(trace: &BoundaryTrace) -> f64 {
    trace
        .segments
        .iter()
        .flat_map(|s| s.values.iter().zip(&s.weights).map(|(v, w)| w * v * v))
        .sum::<f64>()
        .sqrt()
}

/// Fourier `H^{1/2}` norm on closed boundary curves.
///
/// Each closed segment of length `L` is resampled to `N = 2^k` uniform points
/// by periodic linear interpolation; with `g_k = N^{-1} sum_j g(s_j) e^{-2 pi i jk/N}`
/// the squared norm is `L sum_k (1 + |kappa_k|) |g_k|^2`, `kappa_k = 2 pi k / L`.
pub fn boundary_hhalf_norm(trace: &BoundaryTrace) -> Result<f64> {
    let mut total = 0.0;
    for seg in &trace.segments {
        if !seg.closed {
            return Err(Error::invalid(
                "the H^1/2 boundary norm needs closed boundary curves (d = 2)",
            ));
        }
        let m = seg.s.len();
        if m < 8 {
            return Err(Error::invalid(format!(
                "H^1/2 resampling needs at least 8 boundary nodes, got {m}"
            )));
        }
        let n = (2 * m).next_power_of_two().max(64);
        let l = seg.length;
        let mut buf: Vec<Complex<f64>> = (0..n)
            .map(|j| Complex::new(periodic_interp(seg, l * j as f64 / n as f64), 0.0))
            .collect();
        let mut planner = FftPlanner::<f64>::new();
        planner.plan_fft_forward(n).process(&mut buf);
        let mut sum = 0.0;
        for (k, c) in buf.iter().enumerate() {
            let freq = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            let kappa = 2.0 * std::f64::consts::PI * freq / l;
            sum += (1.0 + kappa.abs()) * (c / n as f64).norm_sqr();
        }
        total += l * sum;
    }
    Ok(total.sqrt())
}

fn periodic_interp(seg: &TraceSegment, s: f64) -> f64 {
    let m = seg.s.len();
    let i = match seg.s.binary_search_by(|v| v.total_cmp(&s)) {
        Ok(i) => return seg.values[i],
        Err(i) => i - 1,
    };
    let (s0, v0) = (seg.s[i], seg.values[i]);
    let (s1, v1) = if i + 1 < m {
        (seg.s[i + 1], seg.values[i + 1])
    } else {
        (seg.length, seg.values[0])
    };
    v0 + (v1 - v0) * (s - s0) / (s1 - s0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GeometrySpec, GridBudget};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn constant_trace_norms() {
        let g = build_grid(&GeometrySpec::<2>::ball(0.1), &GridBudget::default()).unwrap();
        let u = vec![2.5; g.n_dofs()];
        let t = boundary_trace(&g, &u).unwrap();
        assert_relative_eq!(t.segments[0].length, 24.0, epsilon = 1e-12);
        assert!(t.segments[0].values.iter().all(|&v| v == 2.5));
        assert_relative_eq!(boundary_l2_norm(&t), 2.5 * 24f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(boundary_hhalf_norm(&t).unwrap(), 2.5 * 24f64.sqrt(), epsilon = 1e-12);
        let zero = boundary_trace(&g, &vec![0.0; g.n_dofs()]).unwrap();
        assert_eq!(boundary_l2_norm(&zero), 0.0);
        assert_eq!(boundary_hhalf_norm(&zero).unwrap(), 0.0);
    }

    #[test]
    fn coordinate_trace_is_sawtooth() {
        let g = Grid::<2>::uniform(6, 3.0, [false, false]).unwrap();
        let u = g.interpolate(|x| x[0]);
        let t = boundary_trace(&g, &u).unwrap();
        let seg = &t.segments[0];
        assert_eq!(seg.s.len(), 24);
        for (s, v) in seg.s.iter().zip(&seg.values) {
            let expected = if *s <= 6.0 {
                -3.0 + s
            } else if *s <= 12.0 {
                3.0
            } else if *s <= 18.0 {
                3.0 - (s - 12.0)
            } else {
                -3.0
            };
            assert_relative_eq!(*v, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_mode_hhalf() {
        let g = Grid::<2>::uniform(64, 3.0, [false, false]).unwrap();
        let mut t = boundary_trace(&g, &vec![0.0; g.n_dofs()]).unwrap();
        let seg = &mut t.segments[0];
        for (s, v) in seg.s.iter().zip(seg.values.iter_mut()) {
            *v = (2.0 * PI * s / 24.0).cos();
        }
        let expected = 12.0 * (1.0 + 2.0 * PI / 24.0);
        assert_relative_eq!(boundary_hhalf_norm(&t).unwrap().powi(2), expected, max_relative = 1e-3);
    }

    #[test]
    fn layered_trace_has_two_periodic_lines() {
        let g = build_grid(&GeometrySpec::layer(0.1), &GridBudget::default()).unwrap();
        let u = g.interpolate(|x| x[1]);
        let t = boundary_trace(&g, &u).unwrap();
        assert_eq!(t.segments.len(), 2);
        assert_relative_eq!(t.segments[0].length, 6.0, epsilon = 1e-12);
        assert!(t.segments[0].values.iter().all(|&v| v == -3.0));
        assert!(t.segments[1].values.iter().all(|&v| v == 3.0));
        assert_relative_eq!(boundary_l2_norm(&t), (9.0f64 * 12.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn too_few_nodes_for_hhalf() {
        let g = Grid::<2>::uniform(1, 3.0, [false, false]).unwrap();
        let t = boundary_trace(&g, &[0.0; 4]).unwrap();
        assert!(boundary_hhalf_norm(&t).is_err());
    }

    #[test]
    fn one_and_three_dimensional_traces() {
        let g1 = Grid::<1>::uniform(10, 3.0, [false]).unwrap();
        let t1 = boundary_trace(&g1, &g1.interpolate(|x| x[0])).unwrap();
        assert_relative_eq!(boundary_l2_norm(&t1), 18f64.sqrt(), epsilon = 1e-14);
        let g3 = Grid::<3>::uniform(4, 3.0, [false; 3]).unwrap();
        let t3 = boundary_trace(&g3, &vec![1.0; g3.n_dofs()]).unwrap();
        assert_relative_eq!(t3.measure(), 216.0, epsilon = 1e-10);
    }
}
