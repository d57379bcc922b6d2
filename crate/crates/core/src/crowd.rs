//! Pedestrian simulation on the walkable ground grid.
//!
//! Every tick each pedestrian gets its own unit-cost field built from the
//! static edge/obstacle discomfort plus the discomfort and crowding caused
//! by everybody else, then descends the potential of its destination. A
//! pedestrian never sees its own footprint, so it does not slow or repel
//! itself.
//!
//! Crosswalk cells with a red pedestrian light carry infinite cost. A
//! pedestrian for whom that leaves no route follows the ungated potential
//! up to the curb and waits there, since stepping into a gated crosswalk is
//! refused.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::eikonal::{gradient_stencil, sample_gradient, solve_eikonal_until, EikonalError, ScalarField};
use crate::geometry::morph::{self, Connectivity};
use crate::geometry::{BevGrid, GridSpec};
use crate::polygon::{self, Point2};
use crate::raster::{Mask, Raster};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrowdError {
    #[error("no origin/destination pairs in the walkable world")]
    EmptyPool,
    #[error("pedestrian {0} has had no usable gradient for {1} steps")]
    Stuck(u64, u32),
    #[error("invalid crowd parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Eikonal(#[from] EikonalError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrowdParams {
    /// Weight of path length in the unit cost.
    pub alpha: f64,
    /// Weight of travel time.
    pub beta: f64,
    /// Weight of discomfort.
    pub gamma: f64,
    pub dt: f64,
    pub arrival_eps: f64,
    /// Expected spawns per second.
    pub spawn_rate: f64,
    pub max_pedestrians: usize,
    pub v_max_ped: f64,
    pub v_min: f64,
    pub k_d: f64,
    pub r_influence: f64,
    pub r_density: f64,
    pub w_edge: f64,
    pub w_obs: f64,
    pub w_ped: f64,
    /// Range of preferred walking speeds drawn at spawn.
    pub preferred_speed: (f64, f64),
    pub stuck_limit: u32,
}

impl Default for CrowdParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 2.0,
            dt: 0.1,
            arrival_eps: 0.5,
            spawn_rate: 0.5,
            max_pedestrians: 10,
            v_max_ped: 1.4,
            v_min: 0.2,
            k_d: 0.8,
            r_influence: 2.0,
            r_density: 1.0,
            w_edge: 0.5,
            w_obs: 1.0,
            w_ped: 1.0,
            preferred_speed: (1.1, 1.4),
            stuck_limit: 10,
        }
    }
}

impl CrowdParams {
    pub fn validate(&self, cell_size: f64) -> Result<(), CrowdError> {
        let bad = |m: String| Err(CrowdError::InvalidParams(m));
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("spawn_rate", self.spawn_rate),
            ("w_edge", self.w_edge),
            ("w_obs", self.w_obs),
            ("w_ped", self.w_ped),
            ("k_d", self.k_d),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.arrival_eps < cell_size {
            return bad(format!("arrival_eps {} is below the cell size {cell_size}", self.arrival_eps));
        }
        if !(self.v_min > 0.0 && self.v_min <= self.v_max_ped) {
            return bad(format!("need 0 < v_min <= v_max_ped, got {} and {}", self.v_min, self.v_max_ped));
        }
        let (lo, hi) = self.preferred_speed;
        if !(0.5 <= lo && lo <= hi && hi <= 2.0) {
            return bad(format!("preferred speeds must lie in [0.5, 2.0], got [{lo}, {hi}]"));
        }
        if self.r_influence <= 0.0 || self.r_density <= 0.0 {
            return bad("influence and density radii must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PedState {
    Walking,
    WaitingAtCrosswalk,
    Arrived,
}

impl PedState {
    pub fn as_str(self) -> &'static str {
        match self {
            PedState::Walking => "walking",
            PedState::WaitingAtCrosswalk => "waiting",
            PedState::Arrived => "arrived",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pedestrian {
    pub id: u64,
    pub position: Point2,
    pub origin: Point2,
    pub destination: Point2,
    pub preferred_speed: f64,
    pub state: PedState,
    /// Crosswalk the pedestrian is standing in; exempt from its gate.
    pub inside_crosswalk: Option<usize>,
    pub stuck_ticks: u32,
}

impl Pedestrian {
    pub fn new(id: u64, origin: Point2, destination: Point2, preferred_speed: f64) -> Self {
        Self {
            id,
            position: origin,
            origin,
            destination,
            preferred_speed,
            state: PedState::Walking,
            inside_crosswalk: None,
            stuck_ticks: 0,
        }
    }
}

/// Crosswalk polygons on the grid and which of them are closed to
/// pedestrians this tick.
#[derive(Debug, Clone, Default)]
pub struct Gates {
    pub polygons: Vec<Vec<Point2>>,
    pub cells: Vec<Mask>,
    pub closed: Vec<bool>,
}

impl Gates {
    pub fn new(spec: &GridSpec, polygons: Vec<Vec<Point2>>) -> Self {
        let cells = polygons
            .iter()
            .map(|poly| {
                let mut m = Raster::filled(spec.cols, spec.rows, false);
                for (i, j) in crate::geometry::rasterize_convex(spec, poly) {
                    m.set(i, j, true);
                }
                m
            })
            .collect();
        let closed = vec![false; polygons.len()];
        Self { polygons, cells, closed }
    }

    pub fn none(spec: &GridSpec) -> Self {
        Self::new(spec, Vec::new())
    }

    /// Crosswalk containing `p`, either by polygon or by grid cell.
    pub fn crosswalk_at(&self, spec: &GridSpec, p: &Point2) -> Option<usize> {
        let cell = spec.cell_of(p);
        (0..self.polygons.len()).find(|&k| {
            polygon::convex_contains(&self.polygons[k], p, 0.0) || cell.is_some_and(|(i, j)| *self.cells[k].get(i, j))
        })
    }

    /// Union of closed crosswalk cells, skipping `exempt`.
    pub fn gated_mask(&self, spec: &GridSpec, exempt: Option<usize>) -> Mask {
        let mut m = Raster::filled(spec.cols, spec.rows, false);
        for (k, cells) in self.cells.iter().enumerate() {
            if self.closed[k] && Some(k) != exempt {
                for (a, b) in m.data_mut().iter_mut().zip(cells.data()) {
                    *a |= *b;
                }
            }
        }
        m
    }

    fn blocks(&self, spec: &GridSpec, p: &Point2, exempt: Option<usize>) -> bool {
        self.crosswalk_at(spec, p).is_some_and(|k| self.closed[k] && Some(k) != exempt)
    }
}

/// Origin/destination candidates and the admissible pairs among them.
#[derive(Debug, Clone, PartialEq)]
pub struct OdPool {
    pub entries: Vec<Point2>,
    pub pairs: Vec<(usize, usize)>,
}

/// Pool of walkable cells on the edge of the camera view (one per
/// contiguous run) plus the walkable cell farthest from the camera in each
/// connected region. Pairs never cross regions. Cells in `excluded` (for
/// example crosswalks) are never used.
pub fn build_od_pool(bev: &BevGrid, excluded: &Mask) -> Result<OdPool, CrowdError> {
    let spec = bev.spec;
    let usable = |i: usize, j: usize| bev.is_walkable(i, j) && !*excluded.get(i, j);
    let edge = Raster::from_fn(spec.cols, spec.rows, |i, j| usable(i, j) && *bev.frustum_edge.get(i, j));
    let (runs, n) = morph::label_components(&edge, Connectivity::Eight);
    let mut members: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (i, j, &k) in runs.iter_xy() {
        if k >= 0 {
            members[k as usize].push((i, j));
        }
    }
    let mut cells: Vec<(usize, usize)> = Vec::new();
    for run in members {
        let pts: Vec<Point2> = run.iter().map(|&(i, j)| spec.center(i, j)).collect();
        let c = polygon::centroid(&pts).expect("non-empty run");
        // member nearest the run centroid, smallest index on ties
        let best = run
            .iter()
            .min_by(|a, b| {
                let da = (spec.center(a.0, a.1) - c).norm_squared();
                let db = (spec.center(b.0, b.1) - c).norm_squared();
                da.total_cmp(&db).then(spec.index(a.0, a.1).cmp(&spec.index(b.0, b.1)))
            })
            .copied()
            .expect("non-empty run");
        cells.push(best);
    }
    let regions = bev.region.data().iter().copied().max().unwrap_or(-1) + 1;
    for r in 0..regions {
        let mut far: Option<((usize, usize), f64)> = None;
        for j in 0..spec.rows {
            for i in 0..spec.cols {
                if *bev.region.get(i, j) == r && usable(i, j) {
                    let d = spec.center(i, j).norm();
                    if far.is_none_or(|(_, fd)| d > fd) {
                        far = Some(((i, j), d));
                    }
                }
            }
        }
        if let Some((c, _)) = far {
            if !cells.contains(&c) {
                cells.push(c);
            }
        }
    }
    cells.sort_by_key(|&(i, j)| spec.index(i, j));
    let entries: Vec<Point2> = cells.iter().map(|&(i, j)| spec.center(i, j)).collect();
    let mut pairs = Vec::new();
    for (a, &(ai, aj)) in cells.iter().enumerate() {
        for (b, &(bi, bj)) in cells.iter().enumerate() {
            if a != b && *bev.region.get(ai, aj) == *bev.region.get(bi, bj) {
                pairs.push((a, b));
            }
        }
    }
    if pairs.is_empty() {
        return Err(CrowdError::EmptyPool);
    }
    Ok(OdPool { entries, pairs })
}

/// Linear falloff kernel with support `r_influence`.
#[inline]
pub fn kernel(r: f64, r_influence: f64) -> f64 {
    (1.0 - r / r_influence).max(0.0)
}

/// Distance from every cell center to the nearest cell where `target` holds,
/// limited to `radius` (farther cells get `+inf`).
fn distance_to(spec: &GridSpec, target: &Mask, radius: f64) -> Raster<f64> {
    let reach = (radius / spec.cell_size).ceil() as i64;
    let cs = spec.cell_size;
    Raster::from_fn(spec.cols, spec.rows, |i, j| {
        let mut best = f64::INFINITY;
        for dj in -reach..=reach {
            for di in -reach..=reach {
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                // outside the grid counts as a target (nothing walkable there)
                let hit = target.try_get(ni, nj).copied().unwrap_or(true);
                if hit {
                    best = best.min(cs * ((di * di + dj * dj) as f64).sqrt());
                }
            }
        }
        best
    })
}

/// Edge and obstacle discomfort; independent of the pedestrians.
pub fn static_discomfort(bev: &BevGrid, params: &CrowdParams) -> ScalarField {
    let spec = bev.spec;
    let blocked = bev.walkable.map(|w| !w);
    let d_edge = distance_to(&spec, &blocked, params.r_influence);
    let d_obs = if bev.obstacle.count() > 0 {
        distance_to(&spec, &bev.obstacle, params.r_influence)
    } else {
        Raster::filled(spec.cols, spec.rows, f64::INFINITY)
    };
    ScalarField::from_fn(spec, |i, j| {
        params.w_edge * kernel(*d_edge.get(i, j), params.r_influence)
            + params.w_obs * kernel(*d_obs.get(i, j), params.r_influence)
    })
}

/// Adds `weight * f(distance)` around `p` for cells within `radius`.
fn stamp(field: &mut ScalarField, p: &Point2, radius: f64, mut f: impl FnMut(f64) -> f64) {
    let spec = field.spec;
    let (fx, fy) = spec.continuous(p);
    let reach = (radius / spec.cell_size).ceil() as i64 + 1;
    let (ci, cj) = (fx.round() as i64, fy.round() as i64);
    for j in (cj - reach).max(0)..=(cj + reach).min(spec.rows as i64 - 1) {
        for i in (ci - reach).max(0)..=(ci + reach).min(spec.cols as i64 - 1) {
            let r = (spec.center(i as usize, j as usize) - p).norm();
            if r <= radius {
                let v = field.values.get_mut(i as usize, j as usize);
                *v += f(r);
            }
        }
    }
}

/// Discomfort: static edge/obstacle terms plus one kernel per listed
/// pedestrian; gated cells are `+inf`.
pub fn compute_discomfort(base: &ScalarField, others: &[Point2], gated: &Mask, params: &CrowdParams) -> ScalarField {
    let mut g = base.clone();
    for p in others {
        stamp(&mut g, p, params.r_influence, |r| params.w_ped * kernel(r, params.r_influence));
    }
    for (v, &closed) in g.values.data_mut().iter_mut().zip(gated.data()) {
        if closed {
            *v = f64::INFINITY;
        }
    }
    g
}

/// Speed from crowd density (pedestrians per square meter).
#[inline]
pub fn speed_from_density(density: f64, params: &CrowdParams) -> f64 {
    (params.v_max_ped / (1.0 + params.k_d * density)).clamp(params.v_min, params.v_max_ped)
}

/// Speed field from the density of the listed pedestrians within
/// `r_density` of each cell center.
pub fn compute_speed(spec: &GridSpec, others: &[Point2], params: &CrowdParams) -> ScalarField {
    let area = PI * params.r_density * params.r_density;
    let mut count = ScalarField::filled(*spec, 0.0);
    for p in others {
        stamp(&mut count, p, params.r_density, |_| 1.0);
    }
    ScalarField::from_fn(*spec, |i, j| speed_from_density(count.get(i, j) / area, params))
}

/// Unit cost `alpha + (beta + gamma * G) / V` on walkable cells, `+inf` on
/// blocked, obstacle and gated cells.
pub fn unit_cost(bev: &BevGrid, v: &ScalarField, g: &ScalarField, gated: &Mask, params: &CrowdParams) -> ScalarField {
    ScalarField::from_fn(bev.spec, |i, j| {
        if !bev.is_walkable(i, j) || *gated.get(i, j) {
            return f64::INFINITY;
        }
        let gv = g.get(i, j);
        if !gv.is_finite() {
            return f64::INFINITY;
        }
        let weighted = if params.gamma == 0.0 { 0.0 } else { params.gamma * gv };
        params.alpha + (params.beta + weighted) / v.get(i, j)
    })
}

/// Center of the walkable cell of `region` nearest `p`; ties go to the
/// smallest cell index.
pub fn nearest_walkable(bev: &BevGrid, p: &Point2, region: Option<i32>) -> Option<Point2> {
    let spec = bev.spec;
    let (fx, fy) = spec.continuous(p);
    let (ci, cj) = (fx.round() as i64, fy.round() as i64);
    let mut reach = 2i64;
    let limit = spec.cols.max(spec.rows) as i64;
    loop {
        let mut best: Option<(f64, usize)> = None;
        for j in (cj - reach).max(0)..=(cj + reach).min(spec.rows as i64 - 1) {
            for i in (ci - reach).max(0)..=(ci + reach).min(spec.cols as i64 - 1) {
                let (i, j) = (i as usize, j as usize);
                if !bev.is_walkable(i, j) || region.is_some_and(|r| *bev.region.get(i, j) != r) {
                    continue;
                }
                let d = (spec.center(i, j) - p).norm_squared();
                let idx = spec.index(i, j);
                if best.is_none_or(|(bd, bi)| d < bd || (d == bd && idx < bi)) {
                    best = Some((d, idx));
                }
            }
        }
        // a hit at distance r is final once the square reaches past r
        if let Some((d, idx)) = best {
            if d.sqrt() <= (reach as f64 - 0.5) * spec.cell_size || reach >= limit {
                let (i, j) = spec.cell_of_index(idx);
                return Some(spec.center(i, j));
            }
        }
        if reach >= limit {
            return None;
        }
        reach *= 2;
    }
}

fn walkable_at(bev: &BevGrid, p: &Point2) -> bool {
    bev.walkable_cell(p).is_some()
}

/// Tries to start a new pedestrian. Draws one uniform pair from the pool;
/// the spawn goes ahead only when no pedestrian stands in the origin cell
/// or any of its 8 neighbors.
pub fn spawn<R: Rng>(
    pool: &OdPool,
    spec: &GridSpec,
    pedestrians: &[Pedestrian],
    next_id: u64,
    params: &CrowdParams,
    rng: &mut R,
) -> Option<Pedestrian> {
    if pool.pairs.is_empty() {
        return None;
    }
    let (o, d) = pool.pairs[rng.gen_range(0..pool.pairs.len())];
    let (lo, hi) = params.preferred_speed;
    let speed = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    let origin = pool.entries[o];
    let (oi, oj) = spec.cell_of(&origin)?;
    let occupied = pedestrians.iter().any(|p| {
        spec.cell_of(&p.position)
            .is_some_and(|(pi, pj)| (pi as i64 - oi as i64).abs() <= 1 && (pj as i64 - oj as i64).abs() <= 1)
    });
    (!occupied).then(|| Pedestrian::new(next_id, origin, pool.entries[d], speed))
}

/// Fields one pedestrian sees this tick.
pub struct PedFields {
    pub speed: ScalarField,
    pub discomfort: ScalarField,
    pub cost: ScalarField,
    pub phi: ScalarField,
    /// Potential ignoring gates; present only when the gated one leaves the
    /// pedestrian without a route.
    pub phi_open: Option<ScalarField>,
}

fn target_cell(bev: &BevGrid, p: &Point2) -> Option<(usize, usize)> {
    bev.spec.cell_of(p)
}

/// Builds the speed, discomfort, cost and potential fields of pedestrian
/// `k`, treating every other pedestrian as part of the environment.
pub fn fields_for(
    bev: &BevGrid,
    base: &ScalarField,
    pedestrians: &[Pedestrian],
    k: usize,
    gates: &Gates,
    params: &CrowdParams,
    full: bool,
) -> Result<PedFields, CrowdError> {
    let me = &pedestrians[k];
    let others: Vec<Point2> =
        pedestrians.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, p)| p.position).collect();
    let spec = bev.spec;
    let gated = gates.gated_mask(&spec, me.inside_crosswalk);
    let speed = compute_speed(&spec, &others, params);
    let discomfort = compute_discomfort(base, &others, &gated, params);
    let cost = unit_cost(bev, &speed, &discomfort, &gated, params);
    let required = if full { Vec::new() } else { gradient_stencil(&spec, &me.position) };
    let solve = |cost: &ScalarField| -> Result<ScalarField, CrowdError> {
        match target_cell(bev, &me.destination) {
            Some(t) if cost.get(t.0, t.1).is_finite() => Ok(solve_eikonal_until(cost, &[t], &required)?),
            _ => Ok(ScalarField::filled(spec, f64::INFINITY)),
        }
    };
    let phi = solve(&cost)?;
    let phi_open = if phi.at(&me.position).is_finite() || gated.count() == 0 {
        None
    } else {
        let none = Raster::filled(spec.cols, spec.rows, false);
        let open_g = compute_discomfort(base, &others, &none, params);
        Some(solve(&unit_cost(bev, &speed, &open_g, &none, params))?)
    };
    Ok(PedFields { speed, discomfort, cost, phi, phi_open })
}

/// Moves one pedestrian given its fields. Returns an error when the
/// pedestrian has been without a gradient for too long.
pub fn step_pedestrian(
    bev: &BevGrid,
    ped: &mut Pedestrian,
    fields: &PedFields,
    gates: &Gates,
    params: &CrowdParams,
) -> Result<(), CrowdError> {
    if ped.state == PedState::Arrived {
        return Ok(());
    }
    let spec = bev.spec;
    if (ped.position - ped.destination).norm() < params.arrival_eps {
        ped.state = PedState::Arrived;
        return Ok(());
    }
    let phi = fields.phi_open.as_ref().unwrap_or(&fields.phi);
    let grad = match sample_gradient(phi, &ped.position) {
        Ok(g) if g.norm() > 1e-12 && g.x.is_finite() && g.y.is_finite() => g,
        _ => {
            ped.stuck_ticks += 1;
            if ped.stuck_ticks >= params.stuck_limit {
                return Err(CrowdError::Stuck(ped.id, ped.stuck_ticks));
            }
            return Ok(());
        }
    };
    ped.stuck_ticks = 0;
    let speed = fields.speed.at(&ped.position).min(ped.preferred_speed);
    let mut next = ped.position - grad / grad.norm() * speed * params.dt;
    if !walkable_at(bev, &next) {
        let region = bev.region_of(&ped.position);
        next = nearest_walkable(bev, &next, region).unwrap_or(ped.position);
    }
    let here = gates.crosswalk_at(&spec, &ped.position);
    if gates.blocks(&spec, &next, here) {
        ped.state = PedState::WaitingAtCrosswalk;
    } else {
        ped.position = next;
        ped.state = PedState::Walking;
        ped.inside_crosswalk = gates.crosswalk_at(&spec, &next);
    }
    if (ped.position - ped.destination).norm() < params.arrival_eps {
        ped.state = PedState::Arrived;
    }
    Ok(())
}

/// One crowd tick: builds every pedestrian's fields (in parallel) and moves
/// all pedestrians against the same snapshot. Arrived pedestrians keep
/// their final state here; the caller removes them after emitting them.
pub fn step_crowd(
    bev: &BevGrid,
    base: &ScalarField,
    pedestrians: &mut [Pedestrian],
    gates: &Gates,
    params: &CrowdParams,
) -> Result<(), CrowdError> {
    let snapshot: &[Pedestrian] = pedestrians;
    let fields: Vec<Result<PedFields, CrowdError>> =
        (0..snapshot.len()).into_par_iter().map(|k| fields_for(bev, base, snapshot, k, gates, params, false)).collect();
    let fields: Vec<PedFields> = fields.into_iter().collect::<Result<_, _>>()?;
    for (ped, f) in pedestrians.iter_mut().zip(&fields) {
        step_pedestrian(bev, ped, f, gates, params)?;
    }
    Ok(())
}
