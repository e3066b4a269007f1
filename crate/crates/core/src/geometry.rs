//! Axis-aligned state boxes and planar region descriptions.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in state space. Periodic axes (headings) wrap to
/// `[lower, upper)` and never count as "outside".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default)]
    pub periodic: Vec<bool>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = lower.len();
        Self::with_periodic(lower, upper, vec![false; n])
    }

    pub fn with_periodic(lower: Vec<f64>, upper: Vec<f64>, periodic: Vec<bool>) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() != periodic.len() || lower.is_empty() {
            return Err(Error::Dimension(format!(
                "box bounds have lengths {}/{}/{}",
                lower.len(),
                upper.len(),
                periodic.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "axis {i}: invalid bounds [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self {
            lower,
            upper,
            periodic,
        })
    }

    /// Planar `[x0, x1] x [y0, y1]` box with a periodic heading axis `[-pi, pi)`.
    pub fn planar_with_heading(x: (f64, f64), y: (f64, f64)) -> Self {
        Self {
            lower: vec![x.0, y.0, -PI],
            upper: vec![x.1, y.1, PI],
            periodic: vec![false, false, true],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_periodic(&self, axis: usize) -> bool {
        self.periodic.get(axis).copied().unwrap_or(false)
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.extent(a)).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && (0..self.dim()).all(|a| {
                self.is_periodic(a) || (x[a] >= self.lower[a] && x[a] <= self.upper[a])
            })
    }

    /// Wraps periodic coordinates into `[lower, upper)`.
    pub fn wrap(&self, x: &mut [f64]) {
        for (a, xa) in x.iter_mut().enumerate() {
            if self.is_periodic(a) {
                *xa = wrap_into(*xa, self.lower[a], self.upper[a]);
            }
        }
    }

    /// Signed difference `a - b` along `axis`, taking the short way round on
    /// periodic axes.
    pub fn axis_diff(&self, axis: usize, a: f64, b: f64) -> f64 {
        let d = a - b;
        if self.is_periodic(axis) {
            let period = self.extent(axis);
            d - period * (d / period).round()
        } else {
            d
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim())
            .map(|a| {
                if self.is_periodic(a) {
                    // half-open for periodic axes
                    self.lower[a] + rng.gen::<f64>() * self.extent(a)
                } else {
                    rng.gen_range(self.lower[a]..=self.upper[a])
                }
            })
            .collect()
    }
}

pub(crate) fn wrap_into(x: f64, lo: f64, hi: f64) -> f64 {
    if x >= lo && x < hi {
        return x;
    }
    let period = hi - lo;
    let mut r = (x - lo).rem_euclid(period) + lo;
    if r >= hi {
        r -= period;
    }
    r
}

/// Primitive planar shapes. Boundaries belong to the shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Ball { center: [f64; 2], radius: f64 },
    Rect { lower: [f64; 2], upper: [f64; 2] },
}

impl Shape {
    fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Shape::Ball { center, radius } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                dx * dx + dy * dy <= radius * radius
            }
            Shape::Rect { lower, upper } => {
                p[0] >= lower[0] && p[0] <= upper[0] && p[1] >= lower[1] && p[1] <= upper[1]
            }
        }
    }

    fn area(&self) -> f64 {
        match self {
            Shape::Ball { radius, .. } => PI * radius * radius,
            Shape::Rect { lower, upper } => (upper[0] - lower[0]) * (upper[1] - lower[1]),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Shape::Ball { radius, center } => {
                if !(*radius > 0.0 && radius.is_finite()) || !center.iter().all(|c| c.is_finite())
                {
                    return Err(Error::Config(format!("ball needs radius > 0, got {radius}")));
                }
            }
            Shape::Rect { lower, upper } => {
                if !(lower[0] < upper[0] && lower[1] < upper[1]) {
                    return Err(Error::Config(format!(
                        "empty rectangle {lower:?}..{upper:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A union of planar shapes, tested on two state coordinates (`dims`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub shapes: Vec<Shape>,
    #[serde(default = "default_planar_dims")]
    pub dims: [usize; 2],
}

pub(crate) fn default_planar_dims() -> [usize; 2] {
    [0, 1]
}

impl Region {
    pub fn ball(center: [f64; 2], radius: f64) -> Self {
        Self {
            shapes: vec![Shape::Ball { center, radius }],
            dims: default_planar_dims(),
        }
    }

    pub fn rect(lower: [f64; 2], upper: [f64; 2]) -> Self {
        Self {
            shapes: vec![Shape::Rect { lower, upper }],
            dims: default_planar_dims(),
        }
    }

    pub fn union(mut self, other: Region) -> Self {
        self.shapes.extend(other.shapes);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.shapes.is_empty() {
            return Err(Error::Config("region has no shapes".into()));
        }
        self.shapes.iter().try_for_each(Shape::validate)
    }

    pub fn planar(&self, x: &[f64]) -> [f64; 2] {
        [x[self.dims[0]], x[self.dims[1]]]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let p = self.planar(x);
        self.shapes.iter().any(|s| s.contains(p))
    }

    /// Grows every shape by `margin` (balls get a larger radius, rectangles
    /// are padded on all sides).
    pub fn inflate(&self, margin: f64) -> Region {
        let shapes = self
            .shapes
            .iter()
            .map(|s| match s {
                Shape::Ball { center, radius } => Shape::Ball {
                    center: *center,
                    radius: radius + margin,
                },
                Shape::Rect { lower, upper } => Shape::Rect {
                    lower: [lower[0] - margin, lower[1] - margin],
                    upper: [upper[0] + margin, upper[1] + margin],
                },
            })
            .collect();
        Region {
            shapes,
            dims: self.dims,
        }
    }

    /// Area of the union, assuming the shapes do not overlap.
    pub fn planar_area(&self) -> f64 {
        self.shapes.iter().map(Shape::area).sum()
    }

    /// Planar center of the first shape; used as a steering reference.
    pub fn anchor(&self) -> [f64; 2] {
        match &self.shapes[0] {
            Shape::Ball { center, .. } => *center,
            Shape::Rect { lower, upper } => {
                [(lower[0] + upper[0]) / 2.0, (lower[1] + upper[1]) / 2.0]
            }
        }
    }

    /// Radius of the first shape (half-diagonal for rectangles).
    pub fn reach(&self) -> f64 {
        match &self.shapes[0] {
            Shape::Ball { radius, .. } => *radius,
            Shape::Rect { lower, upper } => {
                0.5 * ((upper[0] - lower[0]).powi(2) + (upper[1] - lower[1]).powi(2)).sqrt()
            }
        }
    }

    pub fn intersects_box(&self, domain: &BoxDomain) -> bool {
        let [a, b] = self.dims;
        self.shapes.iter().any(|s| {
            let (lo, hi) = match s {
                Shape::Ball { center, radius } => (
                    [center[0] - radius, center[1] - radius],
                    [center[0] + radius, center[1] + radius],
                ),
                Shape::Rect { lower, upper } => (*lower, *upper),
            };
            lo[0] <= domain.upper[a]
                && hi[0] >= domain.lower[a]
                && lo[1] <= domain.upper[b]
                && hi[1] >= domain.lower[b]
        })
    }

    /// Conservative disjointness test between two regions (exact for balls).
    pub fn disjoint_from(&self, other: &Region) -> bool {
        self.shapes.iter().all(|s| {
            other.shapes.iter().all(|t| match (s, t) {
                (
                    Shape::Ball {
                        center: c1,
                        radius: r1,
                    },
                    Shape::Ball {
                        center: c2,
                        radius: r2,
                    },
                ) => ((c1[0] - c2[0]).powi(2) + (c1[1] - c2[1]).powi(2)).sqrt() > r1 + r2,
                _ => {
                    let (l1, u1) = bounds_of(s);
                    let (l2, u2) = bounds_of(t);
                    u1[0] < l2[0] || u2[0] < l1[0] || u1[1] < l2[1] || u2[1] < l1[1]
                }
            })
        })
    }
}

fn bounds_of(s: &Shape) -> ([f64; 2], [f64; 2]) {
    match s {
        Shape::Ball { center, radius } => (
            [center[0] - radius, center[1] - radius],
            [center[0] + radius, center[1] + radius],
        ),
        Shape::Rect { lower, upper } => (*lower, *upper),
    }
}
