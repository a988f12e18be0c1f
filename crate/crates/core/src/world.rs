//! Toroidal 2D world shared by all models.
//!
//! Agents perform a random-turn walk: each tick the heading changes by a
//! uniform angle in `[-max_turn, +max_turn]` and the agent advances
//! `step_length` cells, wrapping around both edges.

use serde::{Deserialize, Serialize};

use crate::params::{ParamError, ParamSpec, ParamValue};
use crate::rng::{unit, Purpose, RngFactory, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub width: u32,
    pub height: u32,
    pub encounter_radius: f64,
    pub step_length: f64,
    /// Maximum heading change per tick, in degrees.
    pub max_turn_deg: f64,
    pub population_size: usize,
}

impl WorldConfig {
    pub fn with_population(population_size: usize) -> Self {
        Self { population_size, ..Self::default() }
    }

    pub fn param_specs() -> Vec<ParamSpec> {
        vec![
            ParamSpec::integer("world.width", 1.0, 10_000.0, "World width (cells)"),
            ParamSpec::integer("world.height", 1.0, 10_000.0, "World height (cells)"),
            ParamSpec::real("world.encounter_radius", 0.0, 1_000.0, false, "Encounter radius (cells)"),
            ParamSpec::real("world.step_length", 1e-9, 1_000.0, false, "Step length (cells/tick)"),
            ParamSpec::real("world.max_turn", 0.0, 180.0, false, "Maximum turn per tick (degrees)"),
            ParamSpec::integer("population_size", 1.0, 1_000_000.0, "Population size"),
        ]
    }

    /// Apply a `world.*` or `population_size` entry. Returns `false` if the
    /// path is not a world parameter. Values must already be validated.
    pub fn apply(&mut self, path: &str, value: &ParamValue) -> Result<bool, ParamError> {
        let Some(v) = value.as_f64() else {
            return Ok(false);
        };
        match path {
            "world.width" => self.width = v as u32,
            "world.height" => self.height = v as u32,
            "world.encounter_radius" => self.encounter_radius = v,
            "world.step_length" => self.step_length = v,
            "world.max_turn" => self.max_turn_deg = v,
            "population_size" => self.population_size = v as usize,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn value(&self, path: &str) -> Option<ParamValue> {
        let v = match path {
            "world.width" => self.width as f64,
            "world.height" => self.height as f64,
            "world.encounter_radius" => self.encounter_radius,
            "world.step_length" => self.step_length,
            "world.max_turn" => self.max_turn_deg,
            "population_size" => self.population_size as f64,
            _ => return None,
        };
        Some(ParamValue::Number(v))
    }

    pub fn torus(&self) -> Torus {
        Torus::new(self.width as f64, self.height as f64)
    }
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            width: 40,
            height: 40,
            encounter_radius: 1.0,
            step_length: 1.0,
            max_turn_deg: 45.0,
            population_size: 100,
        }
    }
}

/// Torus geometry: wrapping and shortest-path distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Torus {
    pub width: f64,
    pub height: f64,
}

impl Torus {
    pub fn new(width: f64, height: f64) -> Self {
        assert!(width > 0.0 && height > 0.0, "torus dimensions must be positive");
        Self { width, height }
    }

    pub fn wrap(&self, x: f64, y: f64) -> (f64, f64) {
        (wrap_axis(x, self.width), wrap_axis(y, self.height))
    }

    /// Shortest displacement along each axis.
    pub fn delta(&self, a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
        let dx = (a.0 - b.0).abs();
        let dy = (a.1 - b.1).abs();
        (dx.min(self.width - dx), dy.min(self.height - dy))
    }

    pub fn distance_sq(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        let (dx, dy) = self.delta(a, b);
        dx * dx + dy * dy
    }

    pub fn distance(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        self.distance_sq(a, b).sqrt()
    }
}

fn wrap_axis(v: f64, extent: f64) -> f64 {
    let w = v.rem_euclid(extent);
    // rem_euclid can round up to `extent` for tiny negative inputs
    if w >= extent {
        0.0
    } else {
        w
    }
}

/// Position and heading of one agent, with its private motion stream.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentCore {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    /// Radians.
    pub heading: f64,
    motion: SimRng,
}

impl AgentCore {
    /// Place agent `id` uniformly at random with a uniform heading.
    pub fn spawn(id: u32, torus: &Torus, rngs: &RngFactory) -> Self {
        let mut motion = rngs.stream(Purpose::Motion, id as u64);
        let x = unit(&mut motion) * torus.width;
        let y = unit(&mut motion) * torus.height;
        let heading = unit(&mut motion) * std::f64::consts::TAU;
        let (x, y) = torus.wrap(x, y);
        Self { id, x, y, heading, motion }
    }

    pub fn at(id: u32, x: f64, y: f64, heading: f64, rngs: &RngFactory) -> Self {
        Self { id, x, y, heading, motion: rngs.stream(Purpose::Motion, id as u64) }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    /// One random-walk step.
    pub fn step(&mut self, torus: &Torus, step_length: f64, max_turn_rad: f64) {
        let turn = (2.0 * unit(&mut self.motion) - 1.0) * max_turn_rad;
        self.heading = (self.heading + turn).rem_euclid(std::f64::consts::TAU);
        let x = self.x + step_length * libm::cos(self.heading);
        let y = self.y + step_length * libm::sin(self.heading);
        (self.x, self.y) = torus.wrap(x, y);
    }
}

/// Advance every agent by one step.
pub fn step_world<'a>(agents: impl IntoIterator<Item = &'a mut AgentCore>, config: &WorldConfig) {
    let torus = config.torus();
    let max_turn = config.max_turn_deg.to_radians();
    for agent in agents {
        agent.step(&torus, config.step_length, max_turn);
    }
}

/// All unordered pairs `(i, j)`, `i < j`, of indices into `positions` whose
/// torus distance is at most `radius`, sorted lexicographically.
pub fn encounters(positions: &[(f64, f64)], torus: &Torus, radius: f64) -> Vec<(usize, usize)> {
    let n = positions.len();
    if n < 2 {
        return Vec::new();
    }
    let cells_x = if radius > 0.0 { (torus.width / radius).floor() as usize } else { 0 };
    let cells_y = if radius > 0.0 { (torus.height / radius).floor() as usize } else { 0 };
    // Fewer than 3 cells per axis means neighbouring cells alias each other;
    // a direct scan is both simpler and correct there.
    if cells_x < 3 || cells_y < 3 || n < 32 {
        return scan_pairs(positions, torus, radius);
    }
    let cell_w = torus.width / cells_x as f64;
    let cell_h = torus.height / cells_y as f64;
    let cell_of = |p: (f64, f64)| {
        let cx = ((p.0 / cell_w) as usize).min(cells_x - 1);
        let cy = ((p.1 / cell_h) as usize).min(cells_y - 1);
        (cx, cy)
    };
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); cells_x * cells_y];
    for (i, p) in positions.iter().enumerate() {
        let (cx, cy) = cell_of(*p);
        buckets[cy * cells_x + cx].push(i);
    }
    let r2 = radius * radius;
    let mut pairs = Vec::new();
    for (i, p) in positions.iter().enumerate() {
        let (cx, cy) = cell_of(*p);
        for oy in [cells_y - 1, 0, 1] {
            for ox in [cells_x - 1, 0, 1] {
                let nx = (cx + ox) % cells_x;
                let ny = (cy + oy) % cells_y;
                for &j in &buckets[ny * cells_x + nx] {
                    if j > i && torus.distance_sq(*p, positions[j]) <= r2 {
                        pairs.push((i, j));
                    }
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Indices of agents within `radius` of `centre`, ascending.
pub fn within_radius(positions: &[(f64, f64)], torus: &Torus, centre: (f64, f64), radius: f64) -> Vec<usize> {
    let r2 = radius * radius;
    positions
        .iter()
        .enumerate()
        .filter(|(_, p)| torus.distance_sq(**p, centre) <= r2)
        .map(|(i, _)| i)
        .collect()
}

fn scan_pairs(positions: &[(f64, f64)], torus: &Torus, radius: f64) -> Vec<(usize, usize)> {
    let r2 = radius * radius;
    let mut pairs = Vec::new();
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            if torus.distance_sq(positions[i], positions[j]) <= r2 {
                pairs.push((i, j));
            }
        }
    }
    pairs
}
