//! Domains, grids, the initial datum and its `a`-level set Γ₀.
//!
//! Two domain shapes are supported: a ball in `R^N` reduced to its radial
//! coordinate, and a 2-D square box. In both cases the initial datum is the
//! radial bump `u₀(r) = c0 (1 - (r/R0)²)³` for `r < R0`, zero beyond, which is
//! C² across `r = R0`.

use crate::error::{Error, Result};

/// Surface measure of the unit sphere `S^{N-1}`.
pub fn unit_sphere_area(dim: usize) -> f64 {
    use std::f64::consts::PI;
    // Γ(N/2) for integer N
    let gamma_half = if dim % 2 == 0 {
        (1..dim / 2).map(|k| k as f64).product::<f64>()
    } else {
        let k = (dim - 1) / 2;
        let mut g = PI.sqrt();
        for j in 0..k {
            g *= j as f64 + 0.5;
        }
        g
    };
    2.0 * PI.powf(dim as f64 / 2.0) / gamma_half
}

/// Cell-centred radial grid on `[0, R]` in dimension `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    pub dim: usize,
    pub radius: f64,
    pub faces: Vec<f64>,
    pub centers: Vec<f64>,
    pub volumes: Vec<f64>,
    pub face_areas: Vec<f64>,
}

impl RadialGrid {
    pub const MIN_CELLS: usize = 16;

    pub fn new(dim: usize, radius: f64, cells: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::param("grid.N", "spatial dimension must be >= 2"));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::param("grid.R", "must be positive"));
        }
        if cells < Self::MIN_CELLS {
            return Err(Error::param("grid.Nr", format!("need at least {} cells", Self::MIN_CELLS)));
        }
        let omega = unit_sphere_area(dim);
        let n = dim as i32;
        let faces: Vec<f64> = (0..=cells)
            .map(|j| radius * j as f64 / cells as f64)
            .collect();
        let centers = faces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let volumes = faces
            .windows(2)
            .map(|w| omega * (w[1].powi(n) - w[0].powi(n)) / dim as f64)
            .collect();
        let face_areas = faces.iter().map(|r| omega * r.powi(n - 1)).collect();
        Ok(RadialGrid {
            dim,
            radius,
            faces,
            centers,
            volumes,
            face_areas,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.radius / self.centers.len() as f64
    }
}

/// Uniform square-celled grid on `[0, Lx] × [0, Ly]`, row-major in x.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianGrid2D {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
}

impl CartesianGrid2D {
    pub const MIN_CELLS: usize = 16;

    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx < Self::MIN_CELLS || ny < Self::MIN_CELLS {
            return Err(Error::param("grid.Nx", format!("need at least {} cells per axis", Self::MIN_CELLS)));
        }
        if !(lx > 0.0 && ly > 0.0) {
            return Err(Error::param("grid.R", "box lengths must be positive"));
        }
        let h = lx / nx as f64;
        if ((ly / ny as f64) - h).abs() > 1e-12 * h {
            return Err(Error::param("grid.Ny", "cells must be square (Lx/Nx = Ly/Ny)"));
        }
        Ok(CartesianGrid2D { lx, ly, nx, ny, h })
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn center(&self, idx: usize) -> [f64; 2] {
        let (i, j) = (idx % self.nx, idx / self.nx);
        [(i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h]
    }
}

/// Transmissibility between two cells: face area over centre distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub lo: usize,
    pub hi: usize,
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Radial(RadialGrid),
    Cartesian(CartesianGrid2D),
}

impl Grid {
    pub fn len(&self) -> usize {
        match self {
            Grid::Radial(g) => g.centers.len(),
            Grid::Cartesian(g) => g.nx * g.ny,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            Grid::Radial(g) => g.dim,
            Grid::Cartesian(_) => 2,
        }
    }

    pub fn spacing(&self) -> f64 {
        match self {
            Grid::Radial(g) => g.spacing(),
            Grid::Cartesian(g) => g.h,
        }
    }

    pub fn volume(&self, i: usize) -> f64 {
        match self {
            Grid::Radial(g) => g.volumes[i],
            Grid::Cartesian(g) => g.h * g.h,
        }
    }

    pub fn volumes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.volume(i)).collect()
    }

    /// `|Ω|` from the closed form, not from the cells.
    pub fn domain_measure(&self) -> f64 {
        match self {
            Grid::Radial(g) => unit_sphere_area(g.dim) * g.radius.powi(g.dim as i32) / g.dim as f64,
            Grid::Cartesian(g) => g.lx * g.ly,
        }
    }

    /// Interior faces; boundary faces carry no flux and are omitted.
    pub fn faces(&self) -> Vec<Face> {
        match self {
            Grid::Radial(g) => (0..g.centers.len() - 1)
                .map(|i| Face {
                    lo: i,
                    hi: i + 1,
                    coeff: g.face_areas[i + 1] / (g.centers[i + 1] - g.centers[i]),
                })
                .collect(),
            Grid::Cartesian(g) => {
                let mut out = Vec::with_capacity(2 * g.nx * g.ny);
                for j in 0..g.ny {
                    for i in 0..g.nx {
                        let k = g.index(i, j);
                        if i + 1 < g.nx {
                            out.push(Face { lo: k, hi: k + 1, coeff: 1.0 });
                        }
                        if j + 1 < g.ny {
                            out.push(Face { lo: k, hi: k + g.nx, coeff: 1.0 });
                        }
                    }
                }
                out
            }
        }
    }

    /// `d_eff` such that the explicit diffusion update of any cell has total
    /// off-diagonal weight at most `2 d_eff / h²`. Exactly 1 on the radial
    /// 2-D grid and 2 on the box; `N/2` (the innermost cell) for radial `N > 2`.
    pub fn effective_dim(&self) -> f64 {
        match self {
            Grid::Radial(g) => {
                let h = g.spacing();
                let n = g.centers.len();
                (0..n)
                    .map(|i| {
                        let mut w = 0.0;
                        if i > 0 {
                            w += g.face_areas[i] / (g.centers[i] - g.centers[i - 1]);
                        }
                        if i + 1 < n {
                            w += g.face_areas[i + 1] / (g.centers[i + 1] - g.centers[i]);
                        }
                        0.5 * h * h * w / g.volumes[i]
                    })
                    .fold(0.0, f64::max)
            }
            Grid::Cartesian(_) => 2.0,
        }
    }

    /// Distance from the profile centre to each cell centre.
    pub fn radii(&self, profile: &InitialProfile) -> Vec<f64> {
        match self {
            Grid::Radial(g) => g.centers.clone(),
            Grid::Cartesian(g) => (0..g.nx * g.ny)
                .map(|k| {
                    let c = g.center(k);
                    (c[0] - profile.center[0]).hypot(c[1] - profile.center[1])
                })
                .collect(),
        }
    }

    /// Largest radius around the profile centre that stays inside Ω.
    pub fn inner_radius(&self, profile: &InitialProfile) -> f64 {
        match self {
            Grid::Radial(g) => g.radius,
            Grid::Cartesian(g) => {
                let [cx, cy] = profile.center;
                cx.min(cy).min(g.lx - cx).min(g.ly - cy)
            }
        }
    }
}

/// Cell values of a density on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field(pub Vec<f64>);

impl Field {
    pub fn zeros(n: usize) -> Self {
        Field(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mass(&self, grid: &Grid) -> f64 {
        self.0.iter().enumerate().map(|(i, u)| grid.volume(i) * u).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// The radial bump `c0 (1 - (r/R0)²)³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialProfile {
    pub c0: f64,
    pub r_support: f64,
    /// Centre in Cartesian mode; ignored by the radial grid.
    pub center: [f64; 2],
}

impl InitialProfile {
    pub fn radial(c0: f64, r_support: f64) -> Self {
        InitialProfile {
            c0,
            r_support,
            center: [0.0, 0.0],
        }
    }

    pub fn centered(c0: f64, r_support: f64, center: [f64; 2]) -> Self {
        InitialProfile {
            c0,
            r_support,
            center,
        }
    }

    /// Checks `c0 > a`, `R0 > 0` and that the support stays inside Ω.
    pub fn validate(&self, a: f64, grid: &Grid) -> Result<()> {
        if !(self.c0 > a) {
            return Err(Error::Profile(format!(
                "peak c0 = {} must exceed a = {a} for Γ₀ to be a regular level set",
                self.c0
            )));
        }
        if !(self.r_support > 0.0) {
            return Err(Error::Profile("support radius R0 must be positive".into()));
        }
        let room = grid.inner_radius(self);
        if !(self.r_support < room) {
            return Err(Error::Profile(format!(
                "support radius R0 = {} must be below the domain radius {room}",
                self.r_support
            )));
        }
        Ok(())
    }

    pub fn value(&self, r: f64) -> f64 {
        if r >= self.r_support {
            return 0.0;
        }
        let s = 1.0 - (r / self.r_support).powi(2);
        self.c0 * s * s * s
    }

    /// `du₀/dr`.
    pub fn radial_derivative(&self, r: f64) -> f64 {
        if r >= self.r_support {
            return 0.0;
        }
        let r0sq = self.r_support * self.r_support;
        let s = 1.0 - r * r / r0sq;
        -6.0 * self.c0 * s * s * r / r0sq
    }

    /// `d²u₀/dr²`.
    pub fn second_derivative(&self, r: f64) -> f64 {
        if r >= self.r_support {
            return 0.0;
        }
        let r0sq = self.r_support * self.r_support;
        let s = 1.0 - r * r / r0sq;
        self.c0 * (-6.0 * s * s / r0sq + 24.0 * r * r * s / (r0sq * r0sq))
    }

    /// `|∇u₀|`.
    pub fn grad_norm(&self, r: f64) -> f64 {
        self.radial_derivative(r).abs()
    }

    /// `Δu₀ = u₀'' + (N-1) u₀'/r`, with the limit `N u₀''(0)` at the centre.
    pub fn laplacian(&self, r: f64, dim: usize) -> f64 {
        if r == 0.0 {
            return dim as f64 * self.second_derivative(0.0);
        }
        self.second_derivative(r) + (dim as f64 - 1.0) * self.radial_derivative(r) / r
    }

    /// Radius of `{u₀ = level}` for `0 < level < c0`.
    pub fn level_radius(&self, level: f64) -> Result<f64> {
        if !(level < self.c0) || !(level > 0.0) {
            return Err(Error::NoCrossing { level });
        }
        Ok(self.r_support * (1.0 - (level / self.c0).cbrt()).sqrt())
    }
}

pub fn build_u0(grid: &Grid, profile: &InitialProfile, a: f64) -> Result<Field> {
    profile.validate(a, grid)?;
    Ok(Field(
        grid.radii(profile).into_iter().map(|r| profile.value(r)).collect(),
    ))
}

pub type Segment = [[f64; 2]; 2];

/// The initial interface Γ₀ = {u₀ = a}.
#[derive(Debug, Clone, PartialEq)]
pub enum Gamma0 {
    Radius(f64),
    Contour(Vec<Segment>),
}

/// Radial mode: closed-form radius. Box mode: marching squares on the
/// sampled u₀ at level `a`.
pub fn gamma0_locate(grid: &Grid, profile: &InitialProfile, a: f64) -> Result<Gamma0> {
    if profile.c0 <= a {
        return Err(Error::NoCrossing { level: a });
    }
    match grid {
        Grid::Radial(_) => Ok(Gamma0::Radius(profile.level_radius(a)?)),
        Grid::Cartesian(g) => {
            let u0 = build_u0(grid, profile, a)?;
            let segs = marching_squares(g, &u0.0, a);
            if segs.is_empty() {
                return Err(Error::NoCrossing { level: a });
            }
            Ok(Gamma0::Contour(segs))
        }
    }
}

/// Level-set segments of cell-centred values.
pub fn marching_squares(g: &CartesianGrid2D, values: &[f64], level: f64) -> Vec<Segment> {
    let mut out = Vec::new();
    let pos = |i: usize, j: usize| [(i as f64 + 0.5) * g.h, (j as f64 + 0.5) * g.h];
    let lerp = |p: [f64; 2], q: [f64; 2], vp: f64, vq: f64| {
        let t = (level - vp) / (vq - vp);
        [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
    };
    for j in 0..g.ny - 1 {
        for i in 0..g.nx - 1 {
            let (pbl, pbr, ptr, ptl) = (pos(i, j), pos(i + 1, j), pos(i + 1, j + 1), pos(i, j + 1));
            let vbl = values[g.index(i, j)];
            let vbr = values[g.index(i + 1, j)];
            let vtr = values[g.index(i + 1, j + 1)];
            let vtl = values[g.index(i, j + 1)];
            let case = (vbl > level) as u8
                | ((vbr > level) as u8) << 1
                | ((vtr > level) as u8) << 2
                | ((vtl > level) as u8) << 3;
            if case == 0 || case == 15 {
                continue;
            }
            let bottom = || lerp(pbl, pbr, vbl, vbr);
            let right = || lerp(pbr, ptr, vbr, vtr);
            let top = || lerp(ptl, ptr, vtl, vtr);
            let left = || lerp(pbl, ptl, vbl, vtl);
            let center_above = 0.25 * (vbl + vbr + vtr + vtl) > level;
            match case {
                1 | 14 => out.push([left(), bottom()]),
                2 | 13 => out.push([bottom(), right()]),
                3 | 12 => out.push([left(), right()]),
                4 | 11 => out.push([right(), top()]),
                6 | 9 => out.push([bottom(), top()]),
                7 | 8 => out.push([left(), top()]),
                5 => {
                    if center_above {
                        out.push([left(), top()]);
                        out.push([bottom(), right()]);
                    } else {
                        out.push([left(), bottom()]);
                        out.push([right(), top()]);
                    }
                }
                10 => {
                    if center_above {
                        out.push([left(), bottom()]);
                        out.push([right(), top()]);
                    } else {
                        out.push([bottom(), right()]);
                        out.push([left(), top()]);
                    }
                }
                _ => unreachable!(),
            }
        }
    }
    out
}

fn point_segment_distance(p: [f64; 2], s: &Segment) -> f64 {
    let [a, b] = *s;
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - t * d[0]).hypot(p[1] - a[1] - t * d[1])
}

/// A position in whichever coordinates the grid uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Point {
    Radius(f64),
    Plane([f64; 2]),
}

/// Signed distance to Γ₀: positive outside (where `u₀ < a`), negative inside.
pub fn dist_to_gamma0(gamma0: &Gamma0, profile: &InitialProfile, a: f64, x: Point) -> f64 {
    match (gamma0, x) {
        (Gamma0::Radius(r0), Point::Radius(r)) => r - r0,
        (Gamma0::Radius(r0), Point::Plane(p)) => {
            (p[0] - profile.center[0]).hypot(p[1] - profile.center[1]) - r0
        }
        (Gamma0::Contour(segs), Point::Plane(p)) => {
            let d = segs
                .iter()
                .map(|s| point_segment_distance(p, s))
                .fold(f64::INFINITY, f64::min);
            let r = (p[0] - profile.center[0]).hypot(p[1] - profile.center[1]);
            if profile.value(r) > a {
                -d
            } else {
                d
            }
        }
        (Gamma0::Contour(_), Point::Radius(r)) => {
            // a contour only arises on the box; treat r as a distance from its centre
            dist_to_gamma0(gamma0, profile, a, Point::Plane([profile.center[0] + r, profile.center[1]]))
        }
    }
}

/// Signed distance of every cell centre to Γ₀.
pub fn cell_distances(grid: &Grid, gamma0: &Gamma0, profile: &InitialProfile, a: f64) -> Vec<f64> {
    match grid {
        Grid::Radial(g) => g
            .centers
            .iter()
            .map(|&r| dist_to_gamma0(gamma0, profile, a, Point::Radius(r)))
            .collect(),
        Grid::Cartesian(g) => (0..g.nx * g.ny)
            .map(|k| dist_to_gamma0(gamma0, profile, a, Point::Plane(g.center(k))))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// Ω₀⁽¹⁾ beyond the band (enclosed by Γ₀).
    Inside,
    /// Ω₀⁽⁰⁾ beyond the band.
    Outside,
    /// Within `half_width` of Γ₀.
    Band,
}

pub fn classify_region(signed_dist: f64, half_width: f64) -> Region {
    if signed_dist.abs() < half_width {
        Region::Band
    } else if signed_dist < 0.0 {
        Region::Inside
    } else {
        Region::Outside
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_profile() -> InitialProfile {
        InitialProfile::radial(0.8, 0.5)
    }

    #[test]
    fn sphere_areas() {
        use std::f64::consts::PI;
        assert!((unit_sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-13);
        assert!((unit_sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn volumes_sum_to_domain() {
        for dim in [2, 3, 5] {
            let g = Grid::Radial(RadialGrid::new(dim, 1.0, 300).unwrap());
            let sum: f64 = g.volumes().iter().sum();
            assert!((sum - g.domain_measure()).abs() < 1e-12 * g.domain_measure());
        }
        let b = Grid::Cartesian(CartesianGrid2D::new(2.0, 1.0, 64, 32).unwrap());
        let sum: f64 = b.volumes().iter().sum();
        assert!((sum - 2.0).abs() < 1e-12);
    }

    #[test]
    fn effective_dimension() {
        let g2 = Grid::Radial(RadialGrid::new(2, 1.0, 256).unwrap());
        assert!((g2.effective_dim() - 1.0).abs() < 1e-12);
        let g3 = Grid::Radial(RadialGrid::new(3, 1.0, 256).unwrap());
        assert!((g3.effective_dim() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn grid_validation() {
        assert!(RadialGrid::new(1, 1.0, 64).is_err());
        assert!(RadialGrid::new(2, 1.0, 8).is_err());
        assert!(CartesianGrid2D::new(2.0, 1.0, 64, 64).is_err());
    }

    #[test]
    fn profile_values() {
        let p = default_profile();
        assert_eq!(p.value(0.0), 0.8);
        assert_eq!(p.value(0.5), 0.0);
        assert_eq!(p.radial_derivative(0.5), 0.0);
        assert_eq!(p.second_derivative(0.5), 0.0);
        // one-sided limits at the support edge vanish too
        assert!(p.radial_derivative(0.5 - 1e-9).abs() < 1e-12);
        assert!(p.second_derivative(0.5 - 1e-6).abs() < 1e-3);
    }

    #[test]
    fn gamma0_radius_default() {
        let p = default_profile();
        let r0 = p.level_radius(0.3).unwrap();
        assert!((r0 - 0.2641).abs() < 1e-4);
        // bisection oracle on u₀(r) = a
        let (mut lo, mut hi) = (0.0, 0.5);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if p.value(mid) > 0.3 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((r0 - lo).abs() < 1e-12);
        assert!(p.radial_derivative(r0) < 0.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = default_profile();
        let h = 1e-5;
        for k in 1..50 {
            let r = 0.49 * k as f64 / 50.0;
            let d1 = (p.value(r + h) - p.value(r - h)) / (2.0 * h);
            let d2 = (p.value(r + h) - 2.0 * p.value(r) + p.value(r - h)) / (h * h);
            assert!((d1 - p.radial_derivative(r)).abs() < 1e-8);
            assert!((d2 - p.second_derivative(r)).abs() < 1e-4);
        }
    }

    #[test]
    fn discrete_laplacian_of_sampled_u0_is_second_order() {
        // flux-form radial Laplacian of the sampled field vs the analytic one
        let p = default_profile();
        let err = |n: usize| {
            let g = RadialGrid::new(2, 1.0, n).unwrap();
            let u: Vec<f64> = g.centers.iter().map(|&r| p.value(r)).collect();
            let grid = Grid::Radial(g.clone());
            let mut lap = vec![0.0; n];
            for f in grid.faces() {
                let flux = f.coeff * (u[f.hi] - u[f.lo]);
                lap[f.lo] += flux;
                lap[f.hi] -= flux;
            }
            (1..n / 3)
                .map(|i| (lap[i] / g.volumes[i] - p.laplacian(g.centers[i], 2)).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(256), err(512));
        assert!(e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn build_u0_rejects_bad_profiles() {
        let g = Grid::Radial(RadialGrid::new(2, 1.0, 64).unwrap());
        assert!(build_u0(&g, &InitialProfile::radial(0.3, 0.5), 0.3).is_err());
        assert!(build_u0(&g, &InitialProfile::radial(0.8, 1.0), 0.3).is_err());
        let u0 = build_u0(&g, &default_profile(), 0.3).unwrap();
        assert!(u0.min() >= 0.0 && u0.max() <= 0.8);
        assert!(matches!(
            gamma0_locate(&g, &InitialProfile::radial(0.3, 0.5), 0.3),
            Err(Error::NoCrossing { .. })
        ));
    }

    #[test]
    fn radial_distance_sign() {
        let p = default_profile();
        let g0 = Gamma0::Radius(p.level_radius(0.3).unwrap());
        let Gamma0::Radius(r0) = g0 else { unreachable!() };
        assert_eq!(dist_to_gamma0(&g0, &p, 0.3, Point::Radius(r0)), 0.0);
        let d = dist_to_gamma0(&g0, &p, 0.3, Point::Radius(r0 + 0.1));
        assert!((d - 0.1).abs() < 1e-15);
        assert!(dist_to_gamma0(&g0, &p, 0.3, Point::Radius(0.0)) < 0.0);
    }

    fn box_setup(n: usize) -> (Grid, InitialProfile) {
        let g = CartesianGrid2D::new(2.0, 2.0, n, n).unwrap();
        (Grid::Cartesian(g), InitialProfile::centered(0.8, 0.5, [1.0, 1.0]))
    }

    #[test]
    fn contour_vertices_sit_on_the_circle() {
        let (g, p) = box_setup(128);
        let r0 = p.level_radius(0.3).unwrap();
        let Gamma0::Contour(segs) = gamma0_locate(&g, &p, 0.3).unwrap() else {
            panic!("expected contour")
        };
        assert!(segs.len() > 20);
        let h = g.spacing();
        for s in &segs {
            for v in s {
                let r = (v[0] - 1.0).hypot(v[1] - 1.0);
                assert!((r - r0).abs() < h, "{r} vs {r0}");
            }
        }
    }

    #[test]
    fn contour_distance_matches_refined_contour() {
        let (g, p) = box_setup(64);
        let (fine, _) = box_setup(640);
        let coarse = gamma0_locate(&g, &p, 0.3).unwrap();
        let refined = gamma0_locate(&fine, &p, 0.3).unwrap();
        let h = g.spacing();
        let Grid::Cartesian(cg) = &g else { unreachable!() };
        for k in (0..cg.nx * cg.ny).step_by(37) {
            let x = Point::Plane(cg.center(k));
            let d1 = dist_to_gamma0(&coarse, &p, 0.3, x);
            let d2 = dist_to_gamma0(&refined, &p, 0.3, x);
            assert!((d1 - d2).abs() < h);
        }
    }

    #[test]
    fn regions_partition_cells() {
        let g = Grid::Radial(RadialGrid::new(2, 1.0, 128).unwrap());
        let p = default_profile();
        let g0 = gamma0_locate(&g, &p, 0.3).unwrap();
        let d = cell_distances(&g, &g0, &p, 0.3);
        let mut counts = [0usize; 3];
        for &x in &d {
            match classify_region(x, 0.05) {
                Region::Inside => counts[0] += 1,
                Region::Outside => counts[1] += 1,
                Region::Band => counts[2] += 1,
            }
        }
        assert_eq!(counts.iter().sum::<usize>(), 128);
        assert!(counts.iter().all(|&c| c > 0));
    }
}
