use crate::geometry::{Pose, Vec2};

pub const EGO_SIDE: usize = 80;
pub const EGO_WINDOW: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Accumulate {
    Max,
    Add,
}

/// Agent-centered value grid. The agent sits at the center of cell
/// `(side/2, side/2)`; +x is the agent heading.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoGrid {
    pub side: usize,
    pub cell: f64,
    values: Vec<f64>,
    fov: Vec<bool>,
}

impl Default for EgoGrid {
    fn default() -> Self {
        Self::new(EGO_SIDE, EGO_WINDOW)
    }
}

impl EgoGrid {
    /// A zero grid with an empty field-of-view mask.
    pub fn new(side: usize, window: f64) -> Self {
        assert!(side >= 2, "grid side must be at least 2");
        Self {
            side,
            cell: window / side as f64,
            values: vec![0.0; side * side],
            fov: vec![false; side * side],
        }
    }

    /// Same geometry, zero values, empty mask.
    pub fn blank_like(&self) -> Self {
        Self {
            side: self.side,
            cell: self.cell,
            values: vec![0.0; self.values.len()],
            fov: vec![false; self.fov.len()],
        }
    }

    pub fn center(&self) -> usize {
        self.side / 2
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn fov_mask(&self) -> &[bool] {
        &self.fov
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.side + ix]
    }

    pub fn set(&mut self, ix: usize, iy: usize, v: f64) {
        let i = iy * self.side + ix;
        self.values[i] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Egocentric metric coordinates of a cell center.
    pub fn cell_center(&self, ix: usize, iy: usize) -> Vec2 {
        let c = self.center() as f64;
        Vec2::new((ix as f64 - c) * self.cell, (iy as f64 - c) * self.cell)
    }

    /// Continuous cell coordinates of an egocentric point.
    pub fn continuous(&self, p: Vec2) -> (f64, f64) {
        let c = self.center() as f64;
        (p.x / self.cell + c, p.y / self.cell + c)
    }

    pub fn mask_all(&mut self) {
        self.fov.fill(true);
    }

    /// Marks cells inside the sensor wedge with apex `apex` (egocentric),
    /// so that splats near the wedge boundary are not lost, the apex is
    /// pulled back by one cell diagonal.
    pub fn add_wedge(&mut self, apex: &Pose, fov: f64, range: f64) {
        let h = Vec2::from_angle(apex.theta);
        let back = self.cell * std::f64::consts::SQRT_2;
        let origin = apex.position() - h * back;
        let cos_half = (fov * 0.5).min(std::f64::consts::PI).cos();
        let reach = range + 2.0 * back;
        let reach2 = reach * reach;
        for iy in 0..self.side {
            for ix in 0..self.side {
                let v = self.cell_center(ix, iy) - origin;
                let n2 = v.dot(v);
                if n2 > reach2 {
                    continue;
                }
                let d = v.dot(h);
                // d >= |v| cos(half), without a square root when d and cos agree in sign
                let inside = if cos_half >= 0.0 {
                    d >= 0.0 && d * d >= n2 * cos_half * cos_half
                } else {
                    d >= 0.0 || d * d <= n2 * cos_half * cos_half
                };
                if inside {
                    self.fov[iy * self.side + ix] = true;
                }
            }
        }
    }

    /// The four cells around an egocentric point with their bilinear
    /// weights, or `None` if the point lies outside the window.
    pub fn bilinear_weights(&self, p: Vec2) -> Option<[((usize, usize), f64); 4]> {
        let (fx, fy) = self.continuous(p);
        let hi = (self.side - 1) as f64;
        if !(0.0..=hi).contains(&fx) || !(0.0..=hi).contains(&fy) {
            return None;
        }
        let x0 = (fx.floor() as usize).min(self.side - 2);
        let y0 = (fy.floor() as usize).min(self.side - 2);
        let ax = fx - x0 as f64;
        let ay = fy - y0 as f64;
        Some([
            ((x0, y0), (1.0 - ax) * (1.0 - ay)),
            ((x0 + 1, y0), ax * (1.0 - ay)),
            ((x0, y0 + 1), (1.0 - ax) * ay),
            ((x0 + 1, y0 + 1), ax * ay),
        ])
    }

    /// Deposits `value` at an egocentric point. Returns false when the point
    /// is outside the window or its nearest cell is outside the FOV mask.
    pub fn splat_point(&mut self, p: Vec2, value: f64, mode: Accumulate) -> bool {
        let Some(w) = self.bilinear_weights(p) else {
            return false;
        };
        let (fx, fy) = self.continuous(p);
        let near = (fy.round() as usize) * self.side + fx.round() as usize;
        if !self.fov[near] {
            return false;
        }
        for ((x, y), wt) in w {
            let i = y * self.side + x;
            if wt <= 0.0 || !self.fov[i] {
                continue;
            }
            match mode {
                Accumulate::Max => self.values[i] = self.values[i].max(wt * value),
                Accumulate::Add => self.values[i] += wt * value,
            }
        }
        true
    }

    /// Bilinear read; zero outside the window.
    pub fn sample(&self, p: Vec2) -> f64 {
        match self.bilinear_weights(p) {
            Some(w) => w.iter().map(|&((x, y), wt)| wt * self.get(x, y)).sum(),
            None => 0.0,
        }
    }

    /// 3x3 max filter, then 3x3 box blur (zero padded), then re-mask.
    pub fn smooth(&mut self) {
        let n = self.side;
        let mut tmp = vec![0.0; n * n];
        // separable max
        for y in 0..n {
            for x in 0..n {
                let lo = x.saturating_sub(1);
                let hi = (x + 1).min(n - 1);
                tmp[y * n + x] = self.values[y * n + lo..=y * n + hi].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
        }
        for y in 0..n {
            let lo = y.saturating_sub(1);
            let hi = (y + 1).min(n - 1);
            for x in 0..n {
                let mut m = f64::NEG_INFINITY;
                for yy in lo..=hi {
                    m = m.max(tmp[yy * n + x]);
                }
                self.values[y * n + x] = m;
            }
        }
        // separable box sum
        for y in 0..n {
            for x in 0..n {
                let lo = x.saturating_sub(1);
                let hi = (x + 1).min(n - 1);
                tmp[y * n + x] = self.values[y * n + lo..=y * n + hi].iter().sum();
            }
        }
        for y in 0..n {
            let lo = y.saturating_sub(1);
            let hi = (y + 1).min(n - 1);
            for x in 0..n {
                let mut s = 0.0;
                for yy in lo..=hi {
                    s += tmp[yy * n + x];
                }
                self.values[y * n + x] = s / 9.0;
            }
        }
        self.apply_mask();
    }

    pub fn apply_mask(&mut self) {
        for (v, &m) in self.values.iter_mut().zip(&self.fov) {
            if !m {
                *v = 0.0;
            }
        }
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.values {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Cellwise maximum with another grid of the same geometry; masks are
    /// united.
    pub fn max_with(&mut self, other: &EgoGrid) {
        assert_eq!(self.side, other.side);
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a = a.max(b);
        }
        for (a, &b) in self.fov.iter_mut().zip(&other.fov) {
            *a |= b;
        }
    }

    pub fn scaled(&self, k: f64) -> EgoGrid {
        let mut g = self.clone();
        for v in &mut g.values {
            *v *= k;
        }
        g
    }

    /// Cellwise `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &EgoGrid, b: f64) -> EgoGrid {
        assert_eq!(self.side, other.side);
        let mut g = self.clone();
        for (v, &o) in g.values.iter_mut().zip(&other.values) {
            *v = a * *v + b * o;
        }
        for (m, &o) in g.fov.iter_mut().zip(&other.fov) {
            *m |= o;
        }
        g
    }
}

/// Log-sum-exp over the non-zero terms `gamma^tau * g_tau` of each cell.
/// A cell with no non-zero term stays exactly 0; with one term the result
/// is that term exactly. Output clamped to `[0, 1]`.
pub fn aggregate(grids: &[(usize, EgoGrid)], gamma: f64, beta: f64) -> EgoGrid {
    assert!(!grids.is_empty(), "aggregate needs at least one grid");
    let mut out = grids[0].1.blank_like();
    for (_, g) in grids {
        for (a, &b) in out.fov.iter_mut().zip(&g.fov) {
            *a |= b;
        }
    }
    let discounts: Vec<f64> = grids.iter().map(|(tau, _)| gamma.powi(*tau as i32)).collect();
    let mut terms = Vec::with_capacity(grids.len());
    for i in 0..out.values.len() {
        terms.clear();
        for ((_, g), &d) in grids.iter().zip(&discounts) {
            let t = d * g.values[i];
            if t != 0.0 {
                terms.push(t);
            }
        }
        out.values[i] = match terms.len() {
            0 => 0.0,
            1 => terms[0],
            _ => lse(&terms, beta),
        }
        .clamp(0.0, 1.0);
    }
    out
}

/// Numerically stable `(1/beta) ln sum exp(beta x)`.
pub fn lse(xs: &[f64], beta: f64) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = xs.iter().map(|&x| (beta * (x - m)).exp()).sum();
    m + s.ln() / beta
}

/// Hard uncertainty gate: zero the grid when `sigma_a > theta`.
pub fn gate(v_img: &EgoGrid, sigma_a: f64, theta: f64) -> EgoGrid {
    if sigma_a > theta {
        let mut g = v_img.clone();
        g.values.fill(0.0);
        g
    } else {
        v_img.clone()
    }
}
