//! Device deployment, neighborhoods, and event placement.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Devices scattered over a `width x length` rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub width: f64,
    pub length: f64,
    pub density: f64,
    pub positions: Vec<Point>,
}

impl Deployment {
    /// Builds a deployment from explicit positions.
    pub fn from_positions(width: f64, length: f64, positions: Vec<Point>) -> Self {
        let density = positions.len() as f64 / (width * length);
        Deployment {
            width,
            length,
            density,
            positions,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Homogeneous Poisson point process on the rectangle.
pub fn deploy<R: Rng + ?Sized>(width: f64, length: f64, density: f64, rng: &mut R) -> Deployment {
    let mean = width * length * density;
    let count = if mean > 0.0 {
        Poisson::new(mean)
            .map(|p| p.sample(rng) as usize)
            .unwrap_or(0)
    } else {
        0
    };
    let positions = (0..count)
        .map(|_| Point::new(rng.random::<f64>() * width, rng.random::<f64>() * length))
        .collect();
    Deployment {
        width,
        length,
        density,
        positions,
    }
}

/// Symmetric neighbor lists in compressed form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Adjacency {
    pub fn neighbors(&self, device: usize) -> &[u32] {
        &self.targets[self.offsets[device]..self.offsets[device + 1]]
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn degree(&self, device: usize) -> usize {
        self.offsets[device + 1] - self.offsets[device]
    }

    fn from_lists(lists: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut targets = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        offsets.push(0);
        for mut list in lists {
            list.sort_unstable();
            targets.extend_from_slice(&list);
            offsets.push(targets.len());
        }
        Adjacency { offsets, targets }
    }
}

/// Devices within `r_c` of each other (inclusive) are neighbors. Uses a
/// uniform grid with cell side `r_c` so only the 3x3 surrounding cells are
/// scanned.
pub fn neighbors(dep: &Deployment, r_c: f64) -> Adjacency {
    let n = dep.len();
    if n == 0 {
        return Adjacency::from_lists(Vec::new());
    }
    let cols = ((dep.width / r_c).ceil() as usize).max(1);
    let rows = ((dep.length / r_c).ceil() as usize).max(1);
    let cell_of = |p: &Point| {
        let cx = ((p.x / r_c) as usize).min(cols - 1);
        let cy = ((p.y / r_c) as usize).min(rows - 1);
        (cx, cy)
    };

    // counting sort of devices by cell
    let mut cell_start = vec![0usize; cols * rows + 1];
    for p in &dep.positions {
        let (cx, cy) = cell_of(p);
        cell_start[cy * cols + cx + 1] += 1;
    }
    for i in 1..cell_start.len() {
        cell_start[i] += cell_start[i - 1];
    }
    let mut fill = cell_start.clone();
    let mut by_cell = vec![0u32; n];
    for (i, p) in dep.positions.iter().enumerate() {
        let (cx, cy) = cell_of(p);
        let c = cy * cols + cx;
        by_cell[fill[c]] = i as u32;
        fill[c] += 1;
    }

    let r2 = r_c * r_c;
    let lists = dep
        .positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (cx, cy) = cell_of(p);
            let mut list = Vec::new();
            for ny in cy.saturating_sub(1)..=(cy + 1).min(rows - 1) {
                for nx in cx.saturating_sub(1)..=(cx + 1).min(cols - 1) {
                    let c = ny * cols + nx;
                    for &j in &by_cell[cell_start[c]..cell_start[c + 1]] {
                        if j as usize == i {
                            continue;
                        }
                        let q = &dep.positions[j as usize];
                        let (dx, dy) = (p.x - q.x, p.y - q.y);
                        if dx * dx + dy * dy <= r2 {
                            list.push(j);
                        }
                    }
                }
            }
            list
        })
        .collect();
    Adjacency::from_lists(lists)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventSite {
    pub position: Point,
    pub trigger_radius: f64,
}

/// An abnormal event and the devices it triggers.
#[derive(Debug, Clone, PartialEq)]
pub struct EventPlacement {
    pub site: EventSite,
    /// Triggered device indices, ascending.
    pub critical: Vec<u32>,
}

impl EventPlacement {
    /// Number of critical messages, which is also the true state.
    pub fn n_a(&self) -> u32 {
        self.critical.len() as u32
    }
}

/// Drops an event uniformly on the rectangle; every device within
/// `trigger_radius` (inclusive) gets a critical message.
pub fn place_event<R: Rng + ?Sized>(
    dep: &Deployment,
    trigger_radius: f64,
    rng: &mut R,
) -> Result<EventPlacement> {
    if dep.is_empty() {
        return Err(Error::RunRejected("deployment has no devices".into()));
    }
    let position = Point::new(
        rng.random::<f64>() * dep.width,
        rng.random::<f64>() * dep.length,
    );
    Ok(event_at(dep, position, trigger_radius))
}

/// Event at a fixed site.
pub fn event_at(dep: &Deployment, position: Point, trigger_radius: f64) -> EventPlacement {
    let critical = dep
        .positions
        .iter()
        .enumerate()
        .filter(|(_, p)| p.distance(&position) <= trigger_radius)
        .map(|(i, _)| i as u32)
        .collect();
    EventPlacement {
        site: EventSite {
            position,
            trigger_radius,
        },
        critical,
    }
}

/// Writes `id,x,y,role` rows for every device.
pub fn write_snapshot_csv<W: Write>(
    dep: &Deployment,
    event: &EventPlacement,
    roles: impl Fn(usize) -> &'static str,
    mut out: W,
) -> io::Result<()> {
    writeln!(out, "id,x,y,role")?;
    for (i, p) in dep.positions.iter().enumerate() {
        let role = if event.critical.binary_search(&(i as u32)).is_ok() {
            "critical"
        } else {
            roles(i)
        };
        writeln!(out, "{i},{:.4},{:.4},{role}", p.x, p.y)?;
    }
    Ok(())
}
