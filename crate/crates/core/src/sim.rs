//! Joint crowd and traffic simulation over a reconstructed scene.

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::crowd::{self, CrowdError, CrowdParams, Gates, OdPool, PedFields, PedState, Pedestrian};
use crate::eikonal::ScalarField;
use crate::geometry::{self, BevGrid, BevParams, GeometryError, GroundFrame, SceneClass};
use crate::polygon::Point2;
use crate::raster::Raster;
use crate::scene::{Crosswalk, GroundPlane, Label, Lane, SceneDescription, DEFAULT_MAX_GROUND_TILT};
use crate::trace::{AgentKind, AgentState, Trace, TraceRow};
use crate::traffic::{self, Car, CarState, LightState, TrafficLightSchedule, TrafficParams};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("crowd: {0}")]
    Crowd(#[from] CrowdError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub crowd: CrowdParams,
    pub traffic: TrafficParams,
    pub bev: BevParams,
    pub duration_s: f64,
    pub seed: u64,
    pub max_ground_tilt: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            crowd: CrowdParams::default(),
            traffic: TrafficParams::default(),
            bev: BevParams::default(),
            duration_s: 30.0,
            seed: 0,
            max_ground_tilt: DEFAULT_MAX_GROUND_TILT,
        }
    }
}

impl SimConfig {
    pub fn ticks(&self) -> u64 {
        (self.duration_s / self.crowd.dt).round().max(0.0) as u64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return Err(SimError::Config(format!("duration must be >= 0, got {}", self.duration_s)));
        }
        if self.bev.cell_size.is_nan() || self.bev.cell_size <= 0.0 {
            return Err(SimError::Config(format!("cell size must be > 0, got {}", self.bev.cell_size)));
        }
        self.crowd.validate(self.bev.cell_size)?;
        let t = &self.traffic;
        if !(t.v_max > 0.0 && t.accel > 0.0 && t.min_gap >= 0.0 && t.car_length > 0.0 && t.spawn_rate >= 0.0) {
            return Err(SimError::Config("traffic parameters must be positive".into()));
        }
        Ok(())
    }
}

/// Everything static the simulation needs: the walkable grid, lanes,
/// crosswalks and the origin/destination pool.
#[derive(Debug, Clone)]
pub struct World {
    pub plane: Option<GroundPlane>,
    pub class: SceneClass,
    pub bev: BevGrid,
    pub lanes: Vec<Lane>,
    pub crosswalks: Vec<Crosswalk>,
    pub schedule: TrafficLightSchedule,
    pub pool: OdPool,
    pub static_discomfort: ScalarField,
    gate_template: Gates,
}

/// Margin between a derived stop line and the crosswalk edge.
const STOP_LINE_MARGIN: f64 = 1.5;

impl World {
    /// Reconstructs the ground, the walkable grid and the lanes of a scene.
    pub fn from_scene(scene: &SceneDescription, config: &SimConfig) -> Result<Self, SimError> {
        let plane = geometry::reconstruct_plane(scene, config.max_ground_tilt)?;
        let class = geometry::classify_scene(&scene.labels, scene.drivable_threshold);
        let bev = geometry::build_bev(&scene.labels, &plane, &scene.intrinsics, &config.bev, class)?;
        let mut crosswalks = scene.crosswalks.clone();
        let lanes = match class {
            SceneClass::PedestrianOnly => {
                if !scene.lanes.is_empty() {
                    warn!("scene is pedestrian-only; ignoring {} lane(s)", scene.lanes.len());
                }
                for cw in &mut crosswalks {
                    cw.stop_lines.clear();
                }
                Vec::new()
            }
            SceneClass::Mixed if scene.lanes.is_empty() => {
                let lanes = traffic::derive_lanes(&drivable_points(scene, &plane, config.bev.max_range));
                info!("derived {} lane(s) from the drivable region", lanes.len());
                lanes
            }
            SceneClass::Mixed => scene.lanes.clone(),
        };
        for cw in &mut crosswalks {
            let extra = traffic::derive_stop_lines(&lanes, cw, STOP_LINE_MARGIN);
            cw.stop_lines.extend(extra);
        }
        Self::assemble(Some(plane), class, bev, lanes, crosswalks, &config.crowd)
    }

    /// World over an explicit grid, e.g. a synthetic corridor.
    pub fn from_bev(
        bev: BevGrid,
        lanes: Vec<Lane>,
        crosswalks: Vec<Crosswalk>,
        params: &CrowdParams,
    ) -> Result<Self, SimError> {
        Self::assemble(None, SceneClass::PedestrianOnly, bev, lanes, crosswalks, params)
    }

    fn assemble(
        plane: Option<GroundPlane>,
        class: SceneClass,
        bev: BevGrid,
        lanes: Vec<Lane>,
        crosswalks: Vec<Crosswalk>,
        params: &CrowdParams,
    ) -> Result<Self, SimError> {
        let gate_template = Gates::new(&bev.spec, crosswalks.iter().map(|c| c.polygon.clone()).collect());
        let mut excluded = Raster::filled(bev.spec.cols, bev.spec.rows, false);
        for cells in &gate_template.cells {
            for (e, c) in excluded.data_mut().iter_mut().zip(cells.data()) {
                *e |= *c;
            }
        }
        let pool = crowd::build_od_pool(&bev, &excluded)?;
        let static_discomfort = crowd::static_discomfort(&bev, params);
        let schedule = TrafficLightSchedule::from_crosswalks(&crosswalks);
        Ok(Self { plane, class, bev, lanes, crosswalks, schedule, pool, static_discomfort, gate_template })
    }

    /// Gates with their open/closed state at `time_s`.
    pub fn gates_at(&self, time_s: f64) -> Gates {
        let mut g = self.gate_template.clone();
        for (k, closed) in g.closed.iter_mut().enumerate() {
            *closed = traffic::light_state(&self.schedule, k, time_s) == LightState::GreenForCars;
        }
        g
    }
}

/// Ground points of road and crosswalk pixels within `max_range`.
fn drivable_points(scene: &SceneDescription, plane: &GroundPlane, max_range: f64) -> Vec<Point2> {
    let frame = GroundFrame::new(*plane, &scene.intrinsics);
    scene
        .labels
        .iter_xy()
        .filter(|(_, _, l)| matches!(l, Label::Road | Label::Crosswalk))
        .filter_map(|(c, r, _)| {
            let (x, y) = scene.intrinsics.pixel_center(c, r);
            frame.pixel_to_ground(x, y).ok()
        })
        .filter(|p| p.norm() <= max_range)
        .collect()
}

/// Simulation state between ticks.
pub struct Simulation {
    pub world: World,
    pub config: SimConfig,
    pub pedestrians: Vec<Pedestrian>,
    pub cars: Vec<Vec<Car>>,
    pub tick: u64,
    next_ped: u64,
    next_car: u64,
    ped_rng: ChaCha8Rng,
    car_rng: ChaCha8Rng,
}

impl Simulation {
    pub fn new(world: World, config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let ped_rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut car_rng = ChaCha8Rng::seed_from_u64(config.seed);
        car_rng.set_stream(1);
        let cars = vec![Vec::new(); world.lanes.len()];
        Ok(Self { world, config, pedestrians: Vec::new(), cars, tick: 0, next_ped: 0, next_car: 0, ped_rng, car_rng })
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.config.crowd.dt
    }

    /// Places a pedestrian directly, bypassing the spawn draw.
    pub fn add_pedestrian(&mut self, origin: Point2, destination: Point2, preferred_speed: f64) -> u64 {
        let id = self.next_ped;
        self.next_ped += 1;
        self.pedestrians.push(Pedestrian::new(id, origin, destination, preferred_speed));
        id
    }

    /// Runs one tick and returns its trace rows.
    pub fn step(&mut self) -> Result<Vec<TraceRow>, SimError> {
        let t = self.time();
        let dt = self.config.crowd.dt;
        let cp = self.config.crowd;
        let gates = self.world.gates_at(t);

        let draw: f64 = self.ped_rng.gen();
        if draw < cp.spawn_rate * dt && self.pedestrians.len() < cp.max_pedestrians {
            if let Some(p) = crowd::spawn(
                &self.world.pool,
                &self.world.bev.spec,
                &self.pedestrians,
                self.next_ped,
                &cp,
                &mut self.ped_rng,
            ) {
                self.next_ped += 1;
                self.pedestrians.push(p);
            }
        }
        for lane in 0..self.cars.len() {
            if let Some(car) =
                traffic::spawn_car(lane, &self.cars[lane], self.next_car, &self.config.traffic, dt, &mut self.car_rng)
            {
                self.next_car += 1;
                self.cars[lane].push(car);
            }
        }

        crowd::step_crowd(&self.world.bev, &self.world.static_discomfort, &mut self.pedestrians, &gates, &cp)?;
        traffic::step_cars(&mut self.cars, &self.world.schedule, &self.world.crosswalks, &self.config.traffic, t, dt);
        traffic::despawn_cars(&mut self.cars, &self.world.lanes);

        let mut rows = Vec::new();
        for p in &self.pedestrians {
            let state = match p.state {
                PedState::Walking => AgentState::Walking,
                PedState::WaitingAtCrosswalk => AgentState::Waiting,
                PedState::Arrived => AgentState::Arrived,
            };
            rows.push(TraceRow {
                tick: self.tick,
                id: p.id,
                kind: AgentKind::Pedestrian,
                x: p.position.x,
                y: p.position.y,
                state,
                lane: None,
            });
        }
        let mut car_rows = Vec::new();
        for (k, cars) in self.cars.iter().enumerate() {
            for c in cars {
                let pos = self.world.lanes[k].point_at(c.s);
                let state = match c.state() {
                    CarState::Driving => AgentState::Driving,
                    CarState::Stopped => AgentState::Stopped,
                };
                car_rows.push(TraceRow {
                    tick: self.tick,
                    id: c.id,
                    kind: AgentKind::Car,
                    x: pos.x,
                    y: pos.y,
                    state,
                    lane: Some(k),
                });
            }
        }
        rows.sort_by_key(|r| r.id);
        car_rows.sort_by_key(|r| r.id);
        rows.extend(car_rows);
        self.pedestrians.retain(|p| p.state != PedState::Arrived);
        self.tick += 1;
        Ok(rows)
    }

    /// Full (not early-terminated) fields of every current pedestrian, as
    /// they would be built for the next tick.
    pub fn pedestrian_fields(&self) -> Result<Vec<(u64, PedFields)>, SimError> {
        let gates = self.world.gates_at(self.time());
        let mut out = Vec::new();
        for k in 0..self.pedestrians.len() {
            let f = crowd::fields_for(
                &self.world.bev,
                &self.world.static_discomfort,
                &self.pedestrians,
                k,
                &gates,
                &self.config.crowd,
                true,
            )?;
            out.push((self.pedestrians[k].id, f));
        }
        Ok(out)
    }
}

/// Runs `config.ticks()` ticks, calling `observe` before each one.
pub fn simulate_world_with<E: From<SimError>>(
    world: World,
    config: &SimConfig,
    mut observe: impl FnMut(&Simulation) -> Result<(), E>,
) -> Result<Trace, E> {
    let mut sim = Simulation::new(world, *config)?;
    let mut trace = Trace::default();
    for _ in 0..config.ticks() {
        observe(&sim)?;
        trace.rows.extend(sim.step()?);
    }
    Ok(trace)
}

pub fn simulate_world(world: World, config: &SimConfig) -> Result<Trace, SimError> {
    simulate_world_with(world, config, |_| Ok::<(), SimError>(()))
}

/// Reconstructs the scene and runs the joint simulation.
pub fn simulate(scene: &SceneDescription, config: &SimConfig) -> Result<Trace, SimError> {
    config.validate()?;
    let world = World::from_scene(scene, config)?;
    simulate_world(world, config)
}
