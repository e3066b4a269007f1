//! Traversability maps `b(x) >= 0` and region measures `Trav(A)`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::basis::QuadratureGrid;
use crate::error::{Error, Result};
use crate::geometry::{default_planar_dims, BoxDomain, Region};

/// One Gaussian bump `height * exp(-|p - center|^2 / (2 width^2))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hill {
    pub height: f64,
    pub center: [f64; 2],
    pub width: f64,
}

/// Regular planar grid of samples. Row `j` holds `y = y0 + j dy`, column `i`
/// holds `x = x0 + i dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `ny * nx`.
    pub values: Vec<f64>,
}

impl Raster {
    pub fn new(x0: f64, y0: f64, dx: f64, dy: f64, nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 || !(dx > 0.0 && dy > 0.0) || values.len() != nx * ny {
            return Err(Error::Config(format!(
                "raster {nx}x{ny} with spacing ({dx}, {dy}) and {} values",
                values.len()
            )));
        }
        Ok(Self { x0, y0, dx, dy, nx, ny, values })
    }

    /// Samples `f` at every node.
    pub fn sample<F: Fn(f64, f64) -> f64>(
        x0: f64,
        y0: f64,
        dx: f64,
        dy: f64,
        nx: usize,
        ny: usize,
        f: F,
    ) -> Result<Self> {
        let values = (0..ny)
            .flat_map(|j| (0..nx).map(move |i| (i, j)))
            .map(|(i, j)| f(x0 + i as f64 * dx, y0 + j as f64 * dy))
            .collect();
        Self::new(x0, y0, dx, dy, nx, ny, values)
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    /// Bilinear interpolation; queries outside the extent take the nearest
    /// edge value.
    pub fn interpolate(&self, x: f64, y: f64) -> f64 {
        let (i0, tx) = cell(x, self.x0, self.dx, self.nx);
        let (j0, ty) = cell(y, self.y0, self.dy, self.ny);
        let i1 = (i0 + 1).min(self.nx - 1);
        let j1 = (j0 + 1).min(self.ny - 1);
        let a = self.at(i0, j0) * (1.0 - tx) + self.at(i1, j0) * tx;
        let b = self.at(i0, j1) * (1.0 - tx) + self.at(i1, j1) * tx;
        a * (1.0 - ty) + b * ty
    }

    /// Min-max rescaling to `[0, 1]`. A constant raster becomes all zeros.
    pub fn normalized(&self) -> Self {
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let values = self
            .values
            .iter()
            .map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
            .collect();
        Self { values, ..self.clone() }
    }

    /// `trav-raster v1 x0 y0 dx dy nx ny`, then `ny` lines of `nx` values.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "trav-raster v1 {} {} {} {} {} {}\n",
            self.x0, self.y0, self.dx, self.dy, self.nx, self.ny
        );
        for j in 0..self.ny {
            for i in 0..self.nx {
                if i > 0 {
                    s.push(' ');
                }
                write!(s, "{}", self.at(i, j)).unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            what: "trav-raster",
            line,
            message,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, head) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        let fields: Vec<&str> = head.split_whitespace().collect();
        if fields.len() != 8 || fields[0] != "trav-raster" || fields[1] != "v1" {
            return Err(err(1, format!("bad header '{head}'")));
        }
        let num = |k: usize| {
            fields[k]
                .parse::<f64>()
                .map_err(|e| err(1, format!("field {k}: {e}")))
        };
        let int = |k: usize| {
            fields[k]
                .parse::<usize>()
                .map_err(|e| err(1, format!("field {k}: {e}")))
        };
        let (x0, y0, dx, dy, nx, ny) = (num(2)?, num(3)?, num(4)?, num(5)?, int(6)?, int(7)?);
        let mut values = Vec::with_capacity(nx * ny);
        let mut rows = 0;
        for (i, line) in lines {
            let row = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| err(i + 1, e.to_string()))?;
            if row.len() != nx {
                return Err(err(i + 1, format!("{} values, expected {nx}", row.len())));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(err(i + 1, format!("non-finite sample {v}")));
            }
            values.extend(row);
            rows += 1;
        }
        if rows != ny {
            return Err(err(rows + 2, format!("{rows} rows, expected {ny}")));
        }
        Self::new(x0, y0, dx, dy, nx, ny, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_bytes(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text)
    }
}

fn cell(x: f64, x0: f64, dx: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let s = ((x - x0) / dx).clamp(0.0, (n - 1) as f64);
    let i = (s.floor() as usize).min(n - 2);
    (i, s - i as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TerrainKind {
    /// `base_offset + sum of hills`.
    Analytic { base_offset: f64, hills: Vec<Hill> },
    /// Bilinear raster plus `base_offset`.
    Raster { base_offset: f64, raster: Raster },
    /// `1_{Xu} / lambda(Xu)` with `lambda` the state-space volume of `Xu`.
    BinaryObstacle { region: Region, measure: f64 },
}

/// Scalar field over two planar state coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TraversabilityMap {
    pub kind: TerrainKind,
    pub planar_dims: [usize; 2],
}

impl TraversabilityMap {
    pub fn analytic(base_offset: f64, hills: Vec<Hill>) -> Result<Self> {
        if !(base_offset >= 0.0 && base_offset.is_finite()) {
            return Err(Error::Config(format!("base_offset must be >= 0, got {base_offset}")));
        }
        if let Some(h) = hills
            .iter()
            .find(|h| !(h.height >= 0.0 && h.width > 0.0 && h.height.is_finite()))
        {
            return Err(Error::Config(format!("hill needs height >= 0 and width > 0: {h:?}")));
        }
        Ok(Self {
            kind: TerrainKind::Analytic { base_offset, hills },
            planar_dims: default_planar_dims(),
        })
    }

    pub fn raster(raster: Raster, base_offset: f64) -> Result<Self> {
        if let Some(v) = raster.values.iter().find(|v| **v < 0.0) {
            return Err(Error::Config(format!("raster has negative sample {v}")));
        }
        if !(base_offset >= 0.0) {
            return Err(Error::Config(format!("base_offset must be >= 0, got {base_offset}")));
        }
        Ok(Self {
            kind: TerrainKind::Raster { base_offset, raster },
            planar_dims: default_planar_dims(),
        })
    }

    /// Normalized obstacle indicator. The region's planar area is multiplied
    /// by the extent of every other domain axis.
    pub fn binary_obstacle(region: Region, domain: &BoxDomain) -> Result<Self> {
        region.validate()?;
        let transverse: f64 = (0..domain.dim())
            .filter(|a| !region.dims.contains(a))
            .map(|a| domain.extent(a))
            .product();
        let measure = region.planar_area() * transverse;
        Ok(Self {
            planar_dims: region.dims,
            kind: TerrainKind::BinaryObstacle { region, measure },
        })
    }

    /// Three hills: a tall one north-west of the obstacle, a broad one to the
    /// east and a low one near the south-west target.
    pub fn hills_a() -> Self {
        Self::analytic(
            0.05,
            vec![
                Hill { height: 1.5, center: [2.0, 6.5], width: 1.2 },
                Hill { height: 1.0, center: [6.5, 3.5], width: 1.5 },
                Hill { height: 0.8, center: [0.5, 2.5], width: 1.0 },
            ],
        )
        .expect("valid preset")
    }

    /// A ridge of five hills running west to east across the northern half.
    pub fn hills_b() -> Self {
        Self::analytic(
            0.05,
            vec![
                Hill { height: 1.0, center: [0.0, 5.0], width: 0.9 },
                Hill { height: 1.2, center: [1.75, 5.5], width: 0.9 },
                Hill { height: 1.4, center: [3.5, 6.0], width: 0.9 },
                Hill { height: 1.2, center: [5.25, 6.5], width: 0.9 },
                Hill { height: 1.0, center: [7.0, 7.0], width: 0.9 },
            ],
        )
        .expect("valid preset")
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "hills-A" => Ok(Self::hills_a()),
            "hills-B" => Ok(Self::hills_b()),
            "flat" => Self::analytic(1.0, Vec::new()),
            other => Err(Error::Config(format!("unknown terrain preset '{other}'"))),
        }
    }

    /// `b(x)`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let p = [x[self.planar_dims[0]], x[self.planar_dims[1]]];
        match &self.kind {
            TerrainKind::Analytic { base_offset, hills } => {
                base_offset
                    + hills
                        .iter()
                        .map(|h| {
                            let dx = p[0] - h.center[0];
                            let dy = p[1] - h.center[1];
                            h.height * (-(dx * dx + dy * dy) / (2.0 * h.width * h.width)).exp()
                        })
                        .sum::<f64>()
            }
            TerrainKind::Raster { base_offset, raster } => base_offset + raster.interpolate(p[0], p[1]),
            TerrainKind::BinaryObstacle { region, measure } => {
                if region.contains(x) {
                    1.0 / measure
                } else {
                    0.0
                }
            }
        }
    }

    /// Multiplies the field by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        let kind = match &self.kind {
            TerrainKind::Analytic { base_offset, hills } => TerrainKind::Analytic {
                base_offset: base_offset * c,
                hills: hills
                    .iter()
                    .map(|h| Hill { height: h.height * c, ..h.clone() })
                    .collect(),
            },
            TerrainKind::Raster { base_offset, raster } => TerrainKind::Raster {
                base_offset: base_offset * c,
                raster: Raster {
                    values: raster.values.iter().map(|v| v * c).collect(),
                    ..raster.clone()
                },
            },
            TerrainKind::BinaryObstacle { region, measure } => TerrainKind::BinaryObstacle {
                region: region.clone(),
                measure: measure / c,
            },
        };
        Self { kind, planar_dims: self.planar_dims }
    }

    /// Samples `b` on a planar lattice (other coordinates zero).
    pub fn to_raster(&self, x0: f64, y0: f64, dx: f64, dy: f64, nx: usize, ny: usize, dim: usize) -> Result<Raster> {
        Raster::sample(x0, y0, dx, dy, nx, ny, |x, y| {
            let mut s = vec![0.0; dim];
            s[self.planar_dims[0]] = x;
            s[self.planar_dims[1]] = y;
            self.eval(&s)
        })
    }
}

/// Characteristic function of a region (boundary included).
pub fn indicator(region: &Region) -> impl Fn(&[f64]) -> f64 + Sync + '_ {
    move |x| if region.contains(x) { 1.0 } else { 0.0 }
}

/// `Trav(A)` by quadrature over the grid nodes lying in `A`.
pub fn trav_measure(map: &TraversabilityMap, region: &Region, grid: &QuadratureGrid) -> Result<f64> {
    let hits = (0..grid.len()).filter(|&i| region.contains(grid.node(i))).count();
    if hits == 0 {
        return Err(Error::Measurement(
            "region contains no quadrature node; refine the grid".into(),
        ));
    }
    Ok(grid.integrate(|x| if region.contains(x) { map.eval(x) } else { 0.0 }))
}
