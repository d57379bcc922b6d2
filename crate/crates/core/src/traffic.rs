//! Lane-following cars with crosswalk lights.
//!
//! Each car looks at the car ahead in its lane and at the next stop line
//! with a red light, brakes when either is within its stopping distance
//! plus a safety gap, and otherwise accelerates toward the speed limit.

use rand::Rng;

use crate::geometry::{rasterize_convex, GridSpec};
use crate::polygon::Point2;
use crate::raster::{Mask, Raster};
use crate::scene::{Crosswalk, Lane, LightCycle, StopLine};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficParams {
    pub v_max: f64,
    /// Magnitude of both acceleration and braking.
    pub accel: f64,
    /// Minimum gap kept to the car ahead and to stop lines.
    pub min_gap: f64,
    pub car_length: f64,
    /// Expected car arrivals per lane per second.
    pub spawn_rate: f64,
}

impl Default for TrafficParams {
    fn default() -> Self {
        Self { v_max: 8.0, accel: 2.5, min_gap: 2.0, car_length: 4.5, spawn_rate: 0.15 }
    }
}

impl TrafficParams {
    #[inline]
    pub fn braking_distance(&self, v: f64) -> f64 {
        v * v / (2.0 * self.accel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LightState {
    GreenForCars,
    GreenForPeds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CarState {
    Driving,
    Stopped,
}

impl CarState {
    pub fn as_str(self) -> &'static str {
        match self {
            CarState::Driving => "driving",
            CarState::Stopped => "stopped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Car {
    pub id: u64,
    pub lane: usize,
    /// Arc length of the front bumper along the lane.
    pub s: f64,
    pub v: f64,
    pub length: f64,
}

impl Car {
    pub fn state(&self) -> CarState {
        if self.v > 0.0 {
            CarState::Driving
        } else {
            CarState::Stopped
        }
    }
}

/// Light cycle per crosswalk; `None` means the crosswalk has no light and
/// is always open to cars.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrafficLightSchedule {
    pub cycles: Vec<Option<LightCycle>>,
}

impl TrafficLightSchedule {
    pub fn from_crosswalks(crosswalks: &[Crosswalk]) -> Self {
        Self { cycles: crosswalks.iter().map(|c| c.schedule).collect() }
    }
}

/// Square wave: cars have green for the first `green_for_cars_s` of every
/// period (shifted by the offset), pedestrians for the rest.
pub fn light_state(schedule: &TrafficLightSchedule, crosswalk: usize, time_s: f64) -> LightState {
    let Some(Some(cycle)) = schedule.cycles.get(crosswalk) else { return LightState::GreenForCars };
    let phase = (time_s - cycle.offset_s).rem_euclid(cycle.period());
    if phase < cycle.green_for_cars_s {
        LightState::GreenForCars
    } else {
        LightState::GreenForPeds
    }
}

/// Cells of every crosswalk that pedestrians may not enter at `time_s`.
pub fn gate_pedestrians(
    spec: &GridSpec,
    crosswalks: &[Crosswalk],
    schedule: &TrafficLightSchedule,
    time_s: f64,
) -> Mask {
    let mut m = Raster::filled(spec.cols, spec.rows, false);
    for (k, cw) in crosswalks.iter().enumerate() {
        if light_state(schedule, k, time_s) == LightState::GreenForCars {
            for (i, j) in rasterize_convex(spec, &cw.polygon) {
                m.set(i, j, true);
            }
        }
    }
    m
}

/// Nearest stop line ahead of `s` on `lane`: `(crosswalk, stop_arc)`.
fn next_stop(lane: usize, s: f64, crosswalks: &[Crosswalk]) -> Option<(usize, f64)> {
    crosswalks
        .iter()
        .enumerate()
        .filter_map(|(k, cw)| cw.stop_arc(lane).map(|a| (k, a)))
        .filter(|&(_, a)| a - s > 0.0)
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
}

/// Advances every car by one step. `lanes[k]` holds the cars of lane `k`,
/// leader first. Leaders are read as they were at the start of the step.
pub fn step_cars(
    lanes: &mut [Vec<Car>],
    schedule: &TrafficLightSchedule,
    crosswalks: &[Crosswalk],
    params: &TrafficParams,
    time_s: f64,
    dt: f64,
) {
    for cars in lanes.iter_mut() {
        let before: Vec<Car> = cars.clone();
        for (idx, car) in cars.iter_mut().enumerate() {
            let v = car.v;
            let reach = params.braking_distance(v) + params.min_gap;
            let stop = next_stop(car.lane, car.s, crosswalks);
            let red = stop.is_some_and(|(k, _)| light_state(schedule, k, time_s) == LightState::GreenForPeds);
            let d_cross = stop.map(|(_, a)| a - car.s);
            let d_car = (idx > 0).then(|| before[idx - 1].s - before[idx - 1].length - car.s);
            let brake_for_light = red && d_cross.is_some_and(|d| 0.0 < d && d < reach);
            let brake_for_car = d_car.is_some_and(|d| 0.0 < d && d < reach);
            if brake_for_light || brake_for_car {
                car.v = (v - params.accel * dt).max(0.0);
            } else if d_car.is_some_and(|d| d <= 0.0) {
                // already touching the car ahead
                car.v = 0.0;
            } else if v < params.v_max && !red {
                // accelerate only if the faster car would still be outside
                // its braking envelope behind the leader next step
                let faster = (v + params.accel * dt).min(params.v_max);
                let room = d_car.is_none_or(|d| d - faster * dt >= params.braking_distance(faster) + params.min_gap);
                if room {
                    car.v = faster;
                }
            }
            car.s += car.v * dt;
        }
    }
}

/// Gap a new car needs at the lane start: room for itself plus the minimum
/// gap, and enough to stop behind a standing car from full speed.
pub fn spawn_clearance(params: &TrafficParams) -> f64 {
    (params.car_length + params.min_gap).max(params.braking_distance(params.v_max) + params.min_gap)
}

/// Possibly starts a car at the beginning of `lane`.
pub fn spawn_car<R: Rng>(
    lane: usize,
    cars: &[Car],
    next_id: u64,
    params: &TrafficParams,
    dt: f64,
    rng: &mut R,
) -> Option<Car> {
    let draw: f64 = rng.gen();
    if draw >= params.spawn_rate * dt {
        return None;
    }
    let clear = cars.last().is_none_or(|last| last.s - last.length >= spawn_clearance(params));
    clear.then_some(Car { id: next_id, lane, s: 0.0, v: params.v_max, length: params.car_length })
}

/// Drops cars that have driven past the end of their lane.
pub fn despawn_cars(lanes: &mut [Vec<Car>], geometry: &[Lane]) {
    for (cars, lane) in lanes.iter_mut().zip(geometry) {
        let end = lane.length();
        cars.retain(|c| c.s <= end);
    }
}

pub const LANE_SPACING: f64 = 3.5;

/// Straight lanes along the principal axis of the drivable points, spaced
/// [`LANE_SPACING`] apart; lanes left of the axis run backwards.
pub fn derive_lanes(drivable: &[Point2]) -> Vec<Lane> {
    if drivable.len() < 2 {
        return Vec::new();
    }
    let n = drivable.len() as f64;
    let mean = drivable.iter().fold(Point2::zeros(), |a, p| a + p) / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in drivable {
        let d = p - mean;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let mut axis = Point2::new(angle.cos(), angle.sin());
    // prefer lanes that point away from the camera
    if axis.y < 0.0 || (axis.y == 0.0 && axis.x < 0.0) {
        axis = -axis;
    }
    let normal = Point2::new(axis.y, -axis.x);
    let (mut a0, mut a1, mut n0, mut n1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in drivable {
        let d = p - mean;
        a0 = a0.min(d.dot(&axis));
        a1 = a1.max(d.dot(&axis));
        n0 = n0.min(d.dot(&normal));
        n1 = n1.max(d.dot(&normal));
    }
    let width = n1 - n0;
    let count = ((width / LANE_SPACING).round() as usize).max(1);
    let center = (n0 + n1) / 2.0;
    (0..count)
        .filter_map(|k| {
            let off = center + (k as f64 - (count as f64 - 1.0) / 2.0) * LANE_SPACING;
            let start = mean + axis * a0 + normal * off;
            let end = mean + axis * a1 + normal * off;
            if (end - start).norm() < 1e-6 {
                return None;
            }
            // normal points right of the axis; right-hand lanes run forward
            let pts = if off >= center { vec![start, end] } else { vec![end, start] };
            Some(Lane::new(pts, LANE_SPACING))
        })
        .collect()
}

/// Stop arc placed `margin` before where the lane enters the crosswalk.
pub fn derive_stop_lines(lanes: &[Lane], crosswalk: &Crosswalk, margin: f64) -> Vec<StopLine> {
    lanes
        .iter()
        .enumerate()
        .filter(|(k, _)| crosswalk.stop_arc(*k).is_none())
        .filter_map(|(k, lane)| {
            lane.interval_inside(&crosswalk.polygon).map(|(s0, _)| StopLine { lane: k, arc: (s0 - margin).max(0.0) })
        })
        .collect()
}
