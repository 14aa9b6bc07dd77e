//! Arena geometry: surface zones, the hill and pit bumps, walls and the open
//! edge.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SimError, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Surface {
    Wood,
    Paper,
    Foam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Bottom,
    Top,
    Left,
    Right,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Bottom, Edge::Top, Edge::Left, Edge::Right];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub surface: Surface,
    /// Vertices in order (either orientation), implicitly closed.
    pub polygon: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: [f64; 2],
    pub radius: f64,
    /// Hill height, or pit depth; always positive.
    pub height: f64,
}

impl Bump {
    fn contains(&self, p: Vec2) -> bool {
        (p - Vec2::from(self.center)).norm() < self.radius
    }

    /// `height · cos²(π r / 2R)` inside the radius, else 0.
    fn profile(&self, p: Vec2) -> f64 {
        let r = (p - Vec2::from(self.center)).norm();
        if r >= self.radius {
            return 0.0;
        }
        let c = (PI * r / (2.0 * self.radius)).cos();
        self.height * c * c
    }

    fn profile_gradient(&self, p: Vec2) -> Vec2 {
        let d = p - Vec2::from(self.center);
        let r = d.norm();
        if r >= self.radius || r == 0.0 {
            return Vec2::ZERO;
        }
        let dh_dr = -self.height * PI / (2.0 * self.radius) * (PI * r / self.radius).sin();
        d * (dh_dr / r)
    }

    /// Steepest slope (rise over run) of the profile.
    pub fn max_slope(&self) -> f64 {
        self.height * PI / (2.0 * self.radius)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaSpec {
    pub width: f64,
    pub depth: f64,
    pub open_edge: Edge,
    pub zones: Vec<Zone>,
    pub hill: Bump,
    pub pit: Bump,
    pub friction: BTreeMap<Surface, f64>,
}

impl Default for ArenaSpec {
    /// Two tables, 1.80 m × 1.20 m: wood on the left, a paper strip, and
    /// foam on the right carrying the hill (top) and the pit (bottom). The
    /// bottom edge has no wall.
    fn default() -> Self {
        let rect = |x0: f64, x1: f64| vec![[x0, 0.0], [x1, 0.0], [x1, 1.2], [x0, 1.2]];
        ArenaSpec {
            width: 1.8,
            depth: 1.2,
            open_edge: Edge::Bottom,
            zones: vec![
                Zone { surface: Surface::Wood, polygon: rect(0.0, 0.6) },
                Zone { surface: Surface::Paper, polygon: rect(0.6, 1.1) },
                Zone { surface: Surface::Foam, polygon: rect(1.1, 1.8) },
            ],
            hill: Bump { center: [1.45, 0.85], radius: 0.15, height: 0.03 },
            pit: Bump { center: [1.45, 0.35], radius: 0.15, height: 0.03 },
            friction: BTreeMap::from([(Surface::Wood, 1.0), (Surface::Paper, 0.75), (Surface::Foam, 0.6)]),
        }
    }
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    0.5 * twice.abs()
}

fn point_in_polygon(p: Vec2, poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (poly[i][0], poly[i][1]);
        let (xj, yj) = (poly[j][0], poly[j][1]);
        if (yi > p.y) != (yj > p.y) && p.x < (xj - xi) * (p.y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

impl ArenaSpec {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let arena: ArenaSpec = toml::from_str(text).map_err(|e| SimError::ArenaFile(e.to_string()))?;
        arena.validate()?;
        Ok(arena)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("arena serializes")
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::ArenaFile(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.depth
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(self.width / 2.0, self.depth / 2.0)
    }

    pub fn pit_center(&self) -> Vec2 {
        Vec2::from(self.pit.center)
    }

    pub fn in_pit(&self, p: Vec2) -> bool {
        self.pit.contains(p)
    }

    pub fn surface_at(&self, p: Vec2) -> Surface {
        self.zones
            .iter()
            .find(|z| point_in_polygon(p, &z.polygon))
            .or_else(|| {
                // boundary points: nearest zone by clamped lookup
                let q = Vec2::new(p.x.clamp(1e-9, self.width - 1e-9), p.y.clamp(1e-9, self.depth - 1e-9));
                self.zones.iter().find(|z| point_in_polygon(q, &z.polygon))
            })
            .map(|z| z.surface)
            .unwrap_or(Surface::Wood)
    }

    pub fn friction_at(&self, p: Vec2) -> f64 {
        self.friction.get(&self.surface_at(p)).copied().unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidArena(m));
        if !(self.width > 0.0 && self.depth > 0.0) {
            return bad("arena dimensions must be positive".into());
        }
        if self.zones.is_empty() {
            return bad("no zones".into());
        }
        for (i, z) in self.zones.iter().enumerate() {
            if z.polygon.len() < 3 {
                return bad(format!("zone {i} has fewer than 3 vertices"));
            }
            if z.polygon.iter().any(|v| !self.contains(Vec2::from(*v))) {
                return bad(format!("zone {i} leaves the arena"));
            }
        }
        let total: f64 = self.zones.iter().map(|z| polygon_area(&z.polygon)).sum();
        if (total - self.width * self.depth).abs() > 1e-9 {
            return bad(format!("zones cover {total} m², arena is {} m²", self.width * self.depth));
        }
        // interior sample points must fall in exactly one zone
        let (nx, ny) = (97, 61);
        for i in 0..nx {
            for j in 0..ny {
                let p = Vec2::new(
                    (i as f64 + 0.5) * self.width / nx as f64,
                    (j as f64 + 0.5) * self.depth / ny as f64,
                );
                let hits = self.zones.iter().filter(|z| point_in_polygon(p, &z.polygon)).count();
                if hits != 1 {
                    return bad(format!("point ({:.3}, {:.3}) lies in {hits} zones", p.x, p.y));
                }
            }
        }
        for (name, b) in [("hill", &self.hill), ("pit", &self.pit)] {
            if !(b.radius > 0.0 && b.height > 0.0) {
                return bad(format!("{name} radius and height must be positive"));
            }
            let c = Vec2::from(b.center);
            if self.surface_at(c) != Surface::Foam {
                return bad(format!("{name} must sit on foam"));
            }
            if !(c.x - b.radius >= 0.0 && c.x + b.radius <= self.width && c.y - b.radius >= 0.0 && c.y + b.radius <= self.depth) {
                return bad(format!("{name} extends past the arena"));
            }
        }
        if (Vec2::from(self.hill.center) - Vec2::from(self.pit.center)).norm() < self.hill.radius + self.pit.radius {
            return bad("hill and pit overlap".into());
        }
        // hill toward the closed side opposite the open edge, pit toward the open edge
        let toward_open = |p: [f64; 2]| match self.open_edge {
            Edge::Bottom => -p[1],
            Edge::Top => p[1],
            Edge::Left => -p[0],
            Edge::Right => p[0],
        };
        if toward_open(self.pit.center) <= toward_open(self.hill.center) {
            return bad("pit must lie nearer the open edge than the hill".into());
        }
        for s in [Surface::Wood, Surface::Paper, Surface::Foam] {
            match self.friction.get(&s) {
                Some(f) if *f > 0.0 && *f <= 1.0 => {}
                _ => return bad(format!("friction for {s:?} must be in (0, 1]")),
            }
        }
        Ok(())
    }

    pub fn terrain_height(&self, p: Vec2) -> Result<f64, SimError> {
        if !self.contains(p) {
            return Err(SimError::OutsideArena { x: p.x, y: p.y });
        }
        Ok(self.hill.profile(p) - self.pit.profile(p))
    }

    pub fn terrain_gradient(&self, p: Vec2) -> Result<Vec2, SimError> {
        if !self.contains(p) {
            return Err(SimError::OutsideArena { x: p.x, y: p.y });
        }
        Ok(self.hill.profile_gradient(p) - self.pit.profile_gradient(p))
    }

    /// Gradient without the bounds check, zero outside the arena.
    pub(crate) fn slope_or_flat(&self, p: Vec2) -> Vec2 {
        self.terrain_gradient(p).unwrap_or(Vec2::ZERO)
    }

    /// Signed distance past the open edge (positive = beyond it).
    pub fn beyond_open_edge(&self, p: Vec2) -> f64 {
        match self.open_edge {
            Edge::Bottom => -p.y,
            Edge::Top => p.y - self.depth,
            Edge::Left => -p.x,
            Edge::Right => p.x - self.width,
        }
    }

    /// Distance from the open edge line, measured inward.
    pub fn distance_to_open_edge(&self, p: Vec2) -> f64 {
        -self.beyond_open_edge(p)
    }

    /// Outward unit normal of an edge.
    pub fn edge_normal(edge: Edge) -> Vec2 {
        match edge {
            Edge::Bottom => Vec2::new(0.0, -1.0),
            Edge::Top => Vec2::new(0.0, 1.0),
            Edge::Left => Vec2::new(-1.0, 0.0),
            Edge::Right => Vec2::new(1.0, 0.0),
        }
    }

    /// Endpoints of the open edge line.
    pub fn open_edge_segment(&self) -> (Vec2, Vec2) {
        let (w, d) = (self.width, self.depth);
        match self.open_edge {
            Edge::Bottom => (Vec2::new(0.0, 0.0), Vec2::new(w, 0.0)),
            Edge::Top => (Vec2::new(0.0, d), Vec2::new(w, d)),
            Edge::Left => (Vec2::new(0.0, 0.0), Vec2::new(0.0, d)),
            Edge::Right => (Vec2::new(w, 0.0), Vec2::new(w, d)),
        }
    }
}
