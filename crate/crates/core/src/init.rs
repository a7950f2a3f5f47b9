//! Initial trajectories: stationary, straight-line interpolation, and a base
//! path found by A* on an occupancy grid.

use alloc::collections::BinaryHeap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::geometry::PosedShape;
use crate::kinematics::{BASE_THETA_JOINT, BASE_X_JOINT, BASE_Y_JOINT};
use crate::math::{atan2, cos, floor, hypot, sin, Vec3, PI};
use crate::model::{KinematicTree, Shape};
use crate::trajopt::Trajectory;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InitStrategy {
    Stationary,
    Interpolated,
    AStar,
}

impl InitStrategy {
    pub const ALL: [InitStrategy; 3] = [InitStrategy::Stationary, InitStrategy::Interpolated, InitStrategy::AStar];

    pub fn as_str(self) -> &'static str {
        match self {
            InitStrategy::Stationary => "stationary",
            InitStrategy::Interpolated => "interpolated",
            InitStrategy::AStar => "astar",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "stationary" => Some(InitStrategy::Stationary),
            "interpolated" => Some(InitStrategy::Interpolated),
            "astar" | "a*" => Some(InitStrategy::AStar),
            _ => None,
        }
    }
}

/// Every waypoint equals `q_init`.
pub fn stationary_init(names: Vec<String>, q_init: &[f64], steps: usize) -> Result<Trajectory> {
    let rows = vec![q_init.to_vec(); steps];
    Trajectory::new(names, &rows)
}

/// Waypoint `t` is `q_init + t / (T - 1) * (q_goal - q_init)`.
pub fn interpolated_init(names: Vec<String>, q_init: &[f64], q_goal: &[f64], steps: usize) -> Result<Trajectory> {
    if q_init.len() != q_goal.len() {
        return Err(Error::DimensionMismatch { expected: q_init.len(), actual: q_goal.len() });
    }
    if steps < 2 {
        return Err(Error::InvalidArgument("at least two waypoints are required".into()));
    }
    let rows: Vec<Vec<f64>> = (0..steps)
        .map(|t| {
            if t == steps - 1 {
                return q_goal.to_vec();
            }
            let s = t as f64 / (steps - 1) as f64;
            q_init.iter().zip(q_goal).map(|(a, b)| a + s * (b - a)).collect()
        })
        .collect();
    Trajectory::new(names, &rows)
}

/// Ground-plane occupancy grid. Cell `(ix, iy)` covers
/// `[origin + i * res, origin + (i + 1) * res)` on each axis.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMap {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: (f64, f64),
    pub inflation: f64,
    occupied: Vec<bool>,
}

pub type Cell = (usize, usize);

impl GridMap {
    pub fn empty(width: usize, height: usize, resolution: f64, origin: (f64, f64)) -> Result<Self> {
        if !(resolution > 0.0) || width == 0 || height == 0 {
            return Err(Error::InvalidArgument("grid needs a positive resolution and size".into()));
        }
        Ok(GridMap { width, height, resolution, origin, inflation: 0.0, occupied: vec![false; width * height] })
    }

    pub fn index(&self, c: Cell) -> usize {
        c.1 * self.width + c.0
    }

    pub fn is_occupied(&self, c: Cell) -> bool {
        self.occupied[self.index(c)]
    }

    pub fn set_occupied(&mut self, c: Cell, v: bool) {
        let i = self.index(c);
        self.occupied[i] = v;
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|o| **o).count()
    }

    pub fn cell_center(&self, c: Cell) -> (f64, f64) {
        (self.origin.0 + (c.0 as f64 + 0.5) * self.resolution, self.origin.1 + (c.1 as f64 + 0.5) * self.resolution)
    }

    /// The cell containing a world point, if it lies on the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<Cell> {
        let fx = floor((x - self.origin.0) / self.resolution);
        let fy = floor((y - self.origin.1) / self.resolution);
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            None
        } else {
            Some((fx as usize, fy as usize))
        }
    }

    pub fn is_free_point(&self, x: f64, y: f64) -> bool {
        self.cell_of(x, y).is_some_and(|c| !self.is_occupied(c))
    }

    /// Nearest free cell by ring search (row-major within a ring).
    pub fn nearest_free(&self, c: Cell) -> Option<Cell> {
        if !self.is_occupied(c) {
            return Some(c);
        }
        let max_r = self.width.max(self.height);
        for r in 1..max_r as isize {
            let mut best: Option<(f64, Cell)> = None;
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs() != r && dy.abs() != r {
                        continue;
                    }
                    let (x, y) = (c.0 as isize + dx, c.1 as isize + dy);
                    if x < 0 || y < 0 || x >= self.width as isize || y >= self.height as isize {
                        continue;
                    }
                    let cell = (x as usize, y as usize);
                    if self.is_occupied(cell) {
                        continue;
                    }
                    let d = ((dx * dx + dy * dy) as f64, cell);
                    if best.is_none_or(|b| d.0 < b.0) {
                        best = Some(d);
                    }
                }
            }
            if let Some((_, cell)) = best {
                return Some(cell);
            }
        }
        None
    }

    /// Is the straight segment between two world points free of occupied cells?
    pub fn line_of_sight(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        let len = hypot(b.0 - a.0, b.1 - a.1);
        let n = (len / (0.25 * self.resolution)) as usize + 1;
        (0..=n).all(|k| {
            let s = k as f64 / n as f64;
            self.is_free_point(a.0 + s * (b.0 - a.0), a.1 + s * (b.1 - a.1))
        })
    }
}

/// Ground-plane footprint of a shape.
enum Footprint {
    Disk { center: (f64, f64), radius: f64 },
    Stadium { a: (f64, f64), b: (f64, f64), radius: f64 },
    Polygon(Vec<(f64, f64)>),
}

fn footprint(shape: &PosedShape) -> Footprint {
    let p = shape.pose.translation;
    match shape.shape {
        Shape::Sphere { radius } => Footprint::Disk { center: (p.x, p.y), radius },
        Shape::Capsule { radius, half_length } => {
            let a = shape.pose.transform_point(Vec3::Z * -half_length);
            let b = shape.pose.transform_point(Vec3::Z * half_length);
            Footprint::Stadium { a: (a.x, a.y), b: (b.x, b.y), radius }
        }
        Shape::Box { half_extents: h } => {
            let mut pts = Vec::with_capacity(8);
            for sx in [-1.0, 1.0] {
                for sy in [-1.0, 1.0] {
                    for sz in [-1.0, 1.0] {
                        let c = shape.pose.transform_point(Vec3::new(sx * h.x, sy * h.y, sz * h.z));
                        pts.push((c.x, c.y));
                    }
                }
            }
            Footprint::Polygon(convex_hull(pts))
        }
    }
}

/// Counter-clockwise convex hull (monotone chain).
fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let s = if len2 > 0.0 { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    hypot(p.0 - (a.0 + s * dx), p.1 - (a.1 + s * dy))
}

impl Footprint {
    /// Distance from a ground point to the footprint (zero inside).
    fn distance(&self, p: (f64, f64)) -> f64 {
        match self {
            Footprint::Disk { center, radius } => (hypot(p.0 - center.0, p.1 - center.1) - radius).max(0.0),
            Footprint::Stadium { a, b, radius } => (point_segment_distance(p, *a, *b) - radius).max(0.0),
            Footprint::Polygon(hull) => {
                let n = hull.len();
                if n == 1 {
                    return hypot(p.0 - hull[0].0, p.1 - hull[0].1);
                }
                let inside = n >= 3
                    && (0..n).all(|i| {
                        let (a, b) = (hull[i], hull[(i + 1) % n]);
                        (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= 0.0
                    });
                if inside {
                    return 0.0;
                }
                (0..n).map(|i| point_segment_distance(p, hull[i], hull[(i + 1) % n])).fold(f64::INFINITY, f64::min)
            }
        }
    }
}

/// Marks every cell whose center lies within `inflation` of some obstacle's
/// ground-plane footprint.
pub fn rasterize_environment(
    shapes: &[PosedShape],
    width: usize,
    height: usize,
    resolution: f64,
    origin: (f64, f64),
    inflation: f64,
) -> Result<GridMap> {
    let mut grid = GridMap::empty(width, height, resolution, origin)?;
    grid.inflation = inflation;
    for shape in shapes {
        let fp = footprint(shape);
        let (lo, hi) = shape.aabb(inflation + resolution);
        let x0 = floor((lo.x - origin.0) / resolution).max(0.0) as usize;
        let y0 = floor((lo.y - origin.1) / resolution).max(0.0) as usize;
        let x1 = (floor((hi.x - origin.0) / resolution).max(-1.0) + 1.0).min(width as f64) as usize;
        let y1 = (floor((hi.y - origin.1) / resolution).max(-1.0) + 1.0).min(height as f64) as usize;
        for iy in y0..y1 {
            for ix in x0..x1 {
                if grid.is_occupied((ix, iy)) {
                    continue;
                }
                if fp.distance(grid.cell_center((ix, iy))) <= inflation {
                    grid.set_occupied((ix, iy), true);
                }
            }
        }
    }
    Ok(grid)
}

#[derive(Clone, Copy, Debug)]
struct Open {
    f: f64,
    h: f64,
    index: usize,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Open {}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Open {
    // reversed: the heap pops the smallest f, then smallest h, then lowest index
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then(other.h.total_cmp(&self.h)).then(other.index.cmp(&self.index))
    }
}

const SQRT2: f64 = core::f64::consts::SQRT_2;

fn octile(a: Cell, b: Cell) -> f64 {
    let dx = a.0.abs_diff(b.0) as f64;
    let dy = a.1.abs_diff(b.1) as f64;
    let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
    hi - lo + SQRT2 * lo
}

/// 8-connected neighbors of `c` with their step cost; diagonal moves may not
/// cut the corner of an occupied cell.
pub fn neighbors(grid: &GridMap, c: Cell) -> impl Iterator<Item = (Cell, f64)> + '_ {
    const DIRS: [(isize, isize); 8] = [(0, -1), (-1, 0), (1, 0), (0, 1), (-1, -1), (1, -1), (-1, 1), (1, 1)];
    DIRS.iter().filter_map(move |&(dx, dy)| {
        let (x, y) = (c.0 as isize + dx, c.1 as isize + dy);
        if x < 0 || y < 0 || x >= grid.width as isize || y >= grid.height as isize {
            return None;
        }
        let n = (x as usize, y as usize);
        if grid.is_occupied(n) {
            return None;
        }
        if dx != 0 && dy != 0 {
            if grid.is_occupied((x as usize, c.1)) || grid.is_occupied((c.0, y as usize)) {
                return None;
            }
            Some((n, SQRT2))
        } else {
            Some((n, 1.0))
        }
    })
}

/// Shortest 8-connected path and its cost.
pub fn astar_path(grid: &GridMap, start: Cell, goal: Cell) -> Result<(Vec<Cell>, f64)> {
    for c in [start, goal] {
        if c.0 >= grid.width || c.1 >= grid.height {
            return Err(Error::InvalidArgument("cell outside the grid".into()));
        }
        if grid.is_occupied(c) {
            return Err(Error::InvalidArgument("start and goal cells must be free".into()));
        }
    }
    let n = grid.width * grid.height;
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let si = grid.index(start);
    g[si] = 0.0;
    let h0 = octile(start, goal);
    open.push(Open { f: h0, h: h0, index: si });
    let gi = grid.index(goal);
    while let Some(Open { index, .. }) = open.pop() {
        if closed[index] {
            continue;
        }
        closed[index] = true;
        if index == gi {
            let mut path = vec![goal];
            let mut cur = index;
            while cur != si {
                cur = parent[cur];
                path.push((cur % grid.width, cur / grid.width));
            }
            path.reverse();
            return Ok((path, g[gi]));
        }
        let c = (index % grid.width, index / grid.width);
        for (nb, cost) in neighbors(grid, c) {
            let ni = grid.index(nb);
            if closed[ni] {
                continue;
            }
            let cand = g[index] + cost;
            if cand < g[ni] {
                g[ni] = cand;
                parent[ni] = index;
                let h = octile(nb, goal);
                open.push(Open { f: cand + h, h, index: ni });
            }
        }
    }
    Err(Error::NoPath)
}

/// Base coordinates of a chain with a virtual planar base.
pub fn base_dofs(tree: &KinematicTree) -> Result<[usize; 3]> {
    let get = |name: &str| tree.dof_index_by_name(name).ok_or_else(|| Error::UnknownJoint(name.into()));
    Ok([get(BASE_X_JOINT)?, get(BASE_Y_JOINT)?, get(BASE_THETA_JOINT)?])
}

/// Planar base path from `start` to `goal` through free cells: A* on the
/// grid, then shortcut by line of sight. Endpoints are the exact inputs.
pub fn base_path(grid: &GridMap, start: (f64, f64), goal: (f64, f64)) -> Result<Vec<(f64, f64)>> {
    let cell = |p: (f64, f64)| {
        grid.cell_of(p.0, p.1)
            .and_then(|c| grid.nearest_free(c))
            .ok_or_else(|| Error::InvalidArgument("base position off the grid".into()))
    };
    let (sc, gc) = (cell(start)?, cell(goal)?);
    let (cells, _) = astar_path(grid, sc, gc)?;
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(cells.len() + 2);
    pts.push(start);
    pts.extend(cells.iter().skip(1).take(cells.len().saturating_sub(2)).map(|&c| grid.cell_center(c)));
    pts.push(goal);
    // shortcut: from each kept point jump to the farthest visible point
    let mut out = vec![pts[0]];
    let mut i = 0;
    while i < pts.len() - 1 {
        let mut j = pts.len() - 1;
        while j > i + 1 && !grid.line_of_sight(pts[i], pts[j]) {
            j -= 1;
        }
        out.push(pts[j]);
        i = j;
    }
    Ok(out)
}

/// `count` points spaced uniformly by arc length along a polyline.
pub fn resample_polyline(pts: &[(f64, f64)], count: usize) -> Vec<(f64, f64)> {
    let mut cum = vec![0.0];
    for w in pts.windows(2) {
        let l = hypot(w[1].0 - w[0].0, w[1].1 - w[0].1);
        cum.push(cum.last().unwrap() + l);
    }
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        if k == count - 1 {
            out.push(*pts.last().unwrap());
            break;
        }
        let s = total * k as f64 / (count - 1) as f64;
        while seg + 1 < pts.len() - 1 && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let u = if len > 0.0 { ((s - cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (pts[seg], pts[(seg + 1).min(pts.len() - 1)]);
        out.push((a.0 + u * (b.0 - a.0), a.1 + u * (b.1 - a.1)));
    }
    out
}

/// Base (x, y) follows the grid path resampled by arc length; yaw and all
/// other coordinates are interpolated linearly toward `q_goal`.
pub fn astar_init(tree: &KinematicTree, grid: &GridMap, q_init: &[f64], q_goal: &[f64], steps: usize) -> Result<Trajectory> {
    let mut traj = interpolated_init(tree.dof_names(), q_init, q_goal, steps)?;
    let [bx, by, _] = base_dofs(tree)?;
    let path = base_path(grid, (q_init[bx], q_init[by]), (q_goal[bx], q_goal[by]))?;
    let pts = resample_polyline(&path, steps);
    for (t, p) in pts.iter().enumerate() {
        let row = traj.row_mut(t);
        row[bx] = p.0;
        row[by] = p.1;
    }
    Ok(traj)
}

/// Standoff base pose facing `center` at distance `radius`. Candidate angles
/// are swept from the direction of `from` alternately clockwise and
/// counter-clockwise in `samples` steps per turn; the first accepted wins.
pub fn base_goal_seed(
    center: (f64, f64),
    radius: f64,
    from: (f64, f64),
    samples: usize,
    mut accept: impl FnMut(f64, f64, f64) -> bool,
) -> Option<(f64, f64, f64)> {
    let a0 = atan2(from.1 - center.1, from.0 - center.0);
    let step = 2.0 * PI / samples.max(1) as f64;
    for k in 0..samples.max(1) {
        let off = if k % 2 == 1 { (k / 2 + 1) as f64 } else { -((k / 2) as f64) };
        let a = a0 + off * step;
        let (x, y) = (center.0 + radius * cos(a), center.1 + radius * sin(a));
        let yaw = atan2(center.1 - y, center.0 - x);
        if accept(x, y, yaw) {
            return Some((x, y, yaw));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Transform;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| alloc::format!("j{i}")).collect()
    }

    #[test]
    fn stationary_rows() {
        let t = stationary_init(names(3), &[1.0, 2.0, 3.0], 5).unwrap();
        assert_eq!(t.len(), 5);
        assert!(t.rows().all(|r| r == [1.0, 2.0, 3.0]));
        assert_eq!(stationary_init(names(1), &[0.0], 2).unwrap().len(), 2);
    }

    #[test]
    fn interpolation_steps() {
        let t = interpolated_init(names(1), &[0.0], &[1.0], 11).unwrap();
        for k in 0..11 {
            assert!((t.row(k)[0] - 0.1 * k as f64).abs() < 1e-15);
        }
        assert_eq!(t.last(), &[1.0]);
        assert!(interpolated_init(names(1), &[0.0], &[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn unit_box_rasterizes_to_block() {
        let b = PosedShape::new(Shape::Box { half_extents: Vec3::new(0.5, 0.5, 0.5) }, Transform::IDENTITY);
        let g = rasterize_environment(&[b], 100, 100, 0.1, (-5.0, -5.0), 0.0).unwrap();
        assert_eq!(g.occupied_count(), 100);
        assert!(g.is_occupied((45, 45)) && g.is_occupied((54, 54)));
        assert!(!g.is_occupied((44, 50)) && !g.is_occupied((55, 50)));
        let e = rasterize_environment(&[], 10, 10, 0.1, (0.0, 0.0), 0.3).unwrap();
        assert_eq!(e.occupied_count(), 0);
    }

    #[test]
    fn diagonal_path_cost() {
        let g = GridMap::empty(5, 5, 1.0, (0.0, 0.0)).unwrap();
        let (path, cost) = astar_path(&g, (0, 0), (4, 4)).unwrap();
        assert!((cost - 4.0 * SQRT2).abs() < 1e-12);
        assert_eq!(path.len(), 5);
    }

    #[test]
    fn enclosed_goal_has_no_path() {
        let mut g = GridMap::empty(5, 5, 1.0, (0.0, 0.0)).unwrap();
        for c in [(1, 1), (2, 1), (3, 1), (1, 2), (3, 2), (1, 3), (2, 3), (3, 3)] {
            g.set_occupied(c, true);
        }
        assert_eq!(astar_path(&g, (0, 0), (2, 2)).unwrap_err(), Error::NoPath);
    }

    #[test]
    fn no_corner_cutting() {
        let mut g = GridMap::empty(2, 2, 1.0, (0.0, 0.0)).unwrap();
        g.set_occupied((1, 0), true);
        g.set_occupied((0, 1), true);
        assert_eq!(astar_path(&g, (0, 0), (1, 1)).unwrap_err(), Error::NoPath);
    }

    #[test]
    fn resampling_is_uniform() {
        let pts = resample_polyline(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)], 5);
        let expect = [(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (1.0, 0.5), (1.0, 1.0)];
        for (a, b) in pts.iter().zip(expect.iter()) {
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn goal_seed_faces_center() {
        let (x, y, yaw) = base_goal_seed((1.0, 0.0), 0.8, (-2.0, 0.0), 36, |_, _, _| true).unwrap();
        assert!((x - 0.2).abs() < 1e-12 && y.abs() < 1e-12 && yaw.abs() < 1e-12);
        let (_, y, _) = base_goal_seed((1.0, 0.0), 0.8, (-2.0, 0.0), 36, |_, y, _| y > 0.1).unwrap();
        assert!(y > 0.1);
    }
}
