//! Point-obstacle environments.
//!
//! Obstacles are bare points in the NED world frame with a shared clearance
//! radius. Maps come from CSV files or from seeded scene generators, and the
//! closed loop only ever sees the `k` points nearest to the vehicle.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::vehicle::Vec3;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleMap {
    pub points: Vec<Vec3>,
    /// Clearance radius in m.
    pub epsilon: f64,
}

impl ObstacleMap {
    pub fn new(points: Vec<Vec3>, epsilon: f64) -> Self {
        Self { points, epsilon }
    }

    pub fn empty(epsilon: f64) -> Self {
        Self::new(Vec::new(), epsilon)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `min(k, N)` points closest to `x`, closest first.
    ///
    /// Equidistant points keep their original relative order.
    pub fn k_nearest(&self, x: &Vec3, k: usize) -> ObstacleMap {
        let mut keyed: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| ((p - x).norm_squared(), i))
            .collect();
        let by_distance =
            |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let k = k.min(keyed.len());
        if k < keyed.len() && k > 0 {
            keyed.select_nth_unstable_by(k - 1, by_distance);
        }
        keyed.truncate(k);
        keyed.sort_unstable_by(by_distance);
        ObstacleMap {
            points: keyed.into_iter().map(|(_, i)| self.points[i]).collect(),
            epsilon: self.epsilon,
        }
    }

    /// Closest obstacle to `x`, if any.
    pub fn nearest(&self, x: &Vec3) -> Option<Vec3> {
        self.k_nearest(x, 1).points.first().copied()
    }
}

/// Parse the obstacle CSV format: one `x,y,z` row per point, `#` comments.
pub fn parse_obstacles(text: &str, epsilon: f64, path: &Path) -> Result<ObstacleMap> {
    let mut points = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        if fields.len() != 3 {
            return Err(err(format!(
                "expected 3 fields `x,y,z`, found {}",
                fields.len()
            )));
        }
        let mut xyz = [0.0; 3];
        for (slot, field) in xyz.iter_mut().zip(&fields) {
            *slot = field
                .parse::<f64>()
                .map_err(|e| err(format!("bad coordinate {field:?}: {e}")))?;
            if !slot.is_finite() {
                return Err(err(format!("non-finite coordinate {field:?}")));
            }
        }
        points.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
    }
    Ok(ObstacleMap::new(points, epsilon))
}

pub fn load_obstacles(path: impl AsRef<Path>, epsilon: f64) -> Result<ObstacleMap> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let map = parse_obstacles(&text, epsilon, path)?;
    if map.is_empty() {
        log::warn!("{} contains no obstacles", path.display());
    }
    Ok(map)
}

pub fn write_obstacles(map: &ObstacleMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("# x,y,z (m, NED)\n");
    for p in &map.points {
        out.push_str(&format!("{},{},{}\n", p.x, p.y, p.z));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Bounds {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    fn extent(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keepout {
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "path")]
pub enum SceneKind {
    Corridor,
    Forest,
    RandomBox,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub generator: SceneKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub count: usize,
    pub bounds: Bounds,
    /// Corridors only: close the far end with a wall.
    #[serde(default = "default_true")]
    pub dead_end: bool,
    /// Horizontal disc (over the full height) kept free of generated points.
    #[serde(default)]
    pub keepout: Option<Keepout>,
}

fn default_true() -> bool {
    true
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !(self.bounds.extent(i) > 0.0) {
                return Err(Error::Scenario(format!(
                    "scene bounds degenerate along axis {i}"
                )));
            }
        }
        Ok(())
    }
}

fn in_keepout(keepout: &Option<Keepout>, p: &Vec3) -> bool {
    keepout.is_some_and(|k| {
        let dx = p.x - k.center[0];
        let dy = p.y - k.center[1];
        (dx * dx + dy * dy).sqrt() < k.radius
    })
}

/// Build the obstacle map described by `scene`. Deterministic in the seed.
pub fn generate_scene(scene: &SceneSpec, epsilon: f64) -> Result<ObstacleMap> {
    scene.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    let points = match &scene.generator {
        SceneKind::File(path) => return load_obstacles(path, epsilon),
        SceneKind::RandomBox => random_box(&mut rng, scene),
        SceneKind::Corridor => corridor(&mut rng, scene),
        SceneKind::Forest => forest(&mut rng, scene),
    };
    Ok(ObstacleMap::new(points, epsilon))
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn random_box(rng: &mut ChaCha8Rng, scene: &SceneSpec) -> Vec<Vec3> {
    let b = &scene.bounds;
    let mut points = Vec::with_capacity(scene.count);
    while points.len() < scene.count {
        let p = Vec3::new(
            uniform(rng, b.min[0], b.max[0]),
            uniform(rng, b.min[1], b.max[1]),
            uniform(rng, b.min[2], b.max[2]),
        );
        if !in_keepout(&scene.keepout, &p) {
            points.push(p);
        }
    }
    points
}

/// Hallway along +x between the two y faces of the bounds.
///
/// Side walls take half of the points, pillars a third, the dead-end cap the
/// remainder. Pillars are 0.4 m square columns spaced 2–3 m apart, standing
/// against alternating walls and reaching the full height of the box.
fn corridor(rng: &mut ChaCha8Rng, scene: &SceneSpec) -> Vec<Vec3> {
    let b = &scene.bounds;
    let length = b.extent(0);
    let cap_x = b.min[0] + 0.9 * length;
    let far_x = if scene.dead_end { cap_x } else { b.max[0] };

    let n_cap = if scene.dead_end { scene.count / 6 } else { 0 };
    let n_pillars = scene.count / 3;
    let n_walls = scene.count - n_cap - n_pillars;

    let mut points = Vec::with_capacity(scene.count);
    for i in 0..n_walls {
        let y = if i % 2 == 0 { b.min[1] } else { b.max[1] };
        points.push(Vec3::new(
            uniform(rng, b.min[0], far_x),
            y,
            uniform(rng, b.min[2], b.max[2]),
        ));
    }
    for _ in 0..n_cap {
        points.push(Vec3::new(
            cap_x,
            uniform(rng, b.min[1], b.max[1]),
            uniform(rng, b.min[2], b.max[2]),
        ));
    }

    let mut centers = Vec::new();
    let mut px = b.min[0] + 3.0;
    let mut side = 0;
    while px < far_x - 2.0 {
        let y = if side % 2 == 0 {
            b.min[1] + 0.2
        } else {
            b.max[1] - 0.2
        };
        centers.push((px, y));
        px += uniform(rng, 2.0, 3.0);
        side += 1;
    }
    if !centers.is_empty() {
        for i in 0..n_pillars {
            let (cx, cy) = centers[i % centers.len()];
            let p = Vec3::new(
                (cx + uniform(rng, -0.2, 0.2)).clamp(b.min[0], b.max[0]),
                (cy + uniform(rng, -0.2, 0.2)).clamp(b.min[1], b.max[1]),
                uniform(rng, b.min[2], b.max[2]),
            );
            points.push(p);
        }
    } else {
        // too short for pillars; give the points to the walls
        for i in 0..n_pillars {
            let y = if i % 2 == 0 { b.min[1] } else { b.max[1] };
            points.push(Vec3::new(
                uniform(rng, b.min[0], far_x),
                y,
                uniform(rng, b.min[2], b.max[2]),
            ));
        }
    }
    points.retain(|p| !in_keepout(&scene.keepout, p));
    points
}

/// Vertical trunks: columns of points spaced 0.2 m apart over the box height.
fn forest(rng: &mut ChaCha8Rng, scene: &SceneSpec) -> Vec<Vec3> {
    let b = &scene.bounds;
    let per_trunk = ((b.extent(2) / 0.2).floor() as usize + 1).max(1);
    let trunks = scene.count.div_ceil(per_trunk);
    let mut points = Vec::with_capacity(scene.count);
    let mut placed = 0;
    let mut attempts = 0;
    while placed < trunks && attempts < 100 * trunks.max(1) {
        attempts += 1;
        let base = Vec3::new(
            uniform(rng, b.min[0], b.max[0]),
            uniform(rng, b.min[1], b.max[1]),
            b.max[2],
        );
        if in_keepout(&scene.keepout, &base) {
            continue;
        }
        placed += 1;
        for j in 0..per_trunk {
            if points.len() == scene.count {
                break;
            }
            let z = (b.max[2] - 0.2 * j as f64).max(b.min[2]);
            points.push(Vec3::new(base.x, base.y, z));
        }
    }
    points
}
