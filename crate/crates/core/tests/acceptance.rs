//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6, PI};
use std::time::{Duration, Instant};

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use curbside::compositing::{self, AgentProxy, RenderParams, Renderer};
use curbside::crowd::{CrowdParams, PedState};
use curbside::eikonal::{solve_eikonal, ScalarField};
use curbside::geometry::{fit_ground_plane, BevGrid, GridSpec, PlaneSample};
use curbside::polygon::{self, Point2};
use curbside::raster::{rgb_f32_to_8, Raster};
use curbside::scene::{
    CameraIntrinsics, Crosswalk, GroundPlane, Label, LightCycle, Lighting, LightingMode, SceneDescription, StopLine,
};
use curbside::sim::{self, SimConfig, Simulation, World};
use curbside::synth;
use curbside::trace::{AgentKind, Trace};
use curbside::traffic::{self, light_state, Car, LightState, TrafficLightSchedule, TrafficParams};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(elapsed: Duration, budget_s: f64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < budget_s, || format!("took {:.2} s, budget {budget_s} s", elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------- eikonal

/// Graph shortest path with edge weight `length * (c_u + c_v) / 2`.
fn dijkstra(cost: &[f64], cols: usize, rows: usize, cs: f64, targets: &[(usize, usize)], eight: bool) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; cols * rows];
    let mut heap = BinaryHeap::new();
    for &(i, j) in targets {
        dist[j * cols + i] = 0.0;
        heap.push(Reverse((0u64, j * cols + i)));
    }
    let mut steps: Vec<(i64, i64, f64)> = vec![(1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0)];
    if eight {
        let d = 2f64.sqrt();
        steps.extend([(1, 1, d), (1, -1, d), (-1, 1, d), (-1, -1, d)]);
    }
    while let Some(Reverse((bits, u))) = heap.pop() {
        let du = f64::from_bits(bits);
        if du > dist[u] {
            continue;
        }
        let (ui, uj) = ((u % cols) as i64, (u / cols) as i64);
        for &(di, dj, len) in &steps {
            let (vi, vj) = (ui + di, uj + dj);
            if vi < 0 || vj < 0 || vi >= cols as i64 || vj >= rows as i64 {
                continue;
            }
            let v = vj as usize * cols + vi as usize;
            if !cost[v].is_finite() {
                continue;
            }
            let nd = du + cs * len * (cost[u] + cost[v]) / 2.0;
            if nd < dist[v] {
                dist[v] = nd;
                // non-negative floats order like their bit patterns
                heap.push(Reverse((nd.to_bits(), v)));
            }
        }
    }
    dist
}

fn acceptance_eikonal() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 32;
    let cs = 0.25;
    let spec = GridSpec { cols: n, rows: n, cell_size: cs, origin: Point2::zeros() };
    let mut worst_slack = f64::INFINITY;
    let mut reachable_cells = 0usize;
    for trial in 0..50 {
        let cost: Vec<f64> =
            (0..n * n).map(|_| if rng.gen_bool(0.1) { f64::INFINITY } else { rng.gen_range(0.5..=4.0) }).collect();
        let c_max = cost.iter().copied().filter(|c| c.is_finite()).fold(0.0, f64::max);
        let finite: Vec<usize> = (0..n * n).filter(|&k| cost[k].is_finite()).collect();
        let t = finite[rng.gen_range(0..finite.len())];
        let targets = [(t % n, t / n)];
        let field = ScalarField::from_fn(spec, |i, j| cost[j * n + i]);
        let phi = solve_eikonal(&field, &targets).map_err(|e| format!("trial {trial}: {e}"))?;
        let d4 = dijkstra(&cost, n, n, cs, &targets, false);
        let d8 = dijkstra(&cost, n, n, cs, &targets, true);
        let tol = 2.0 * cs * c_max;
        for k in 0..n * n {
            let f = phi.get(k % n, k / n);
            check(f.is_finite() == d4[k].is_finite(), || format!("trial {trial} cell {k}: reachability differs"))?;
            if !d4[k].is_finite() {
                continue;
            }
            reachable_cells += 1;
            check(d8[k] - tol <= f && f <= d4[k] + tol, || {
                format!("trial {trial} cell {k}: phi {f} outside [{} , {}]", d8[k] - tol, d4[k] + tol)
            })?;
            worst_slack = worst_slack.min((f - (d8[k] - tol)).min(d4[k] + tol - f));
        }
    }

    let m = 101;
    let spec = GridSpec { cols: m, rows: m, cell_size: cs, origin: Point2::zeros() };
    let phi = solve_eikonal(&ScalarField::filled(spec, 1.0), &[(50, 50)]).map_err(|e| e.to_string())?;
    let mut max_err: f64 = 0.0;
    for j in 0..m {
        for i in 0..m {
            let euclid = cs * ((i as f64 - 50.0).powi(2) + (j as f64 - 50.0).powi(2)).sqrt();
            max_err = max_err.max((phi.get(i, j) - euclid).abs());
        }
    }
    check(max_err <= 2.0 * cs, || format!("uniform-cost error {max_err} > {}", 2.0 * cs))?;
    within_budget(start.elapsed(), 5.0)?;
    Ok(format!(
        "50 grids, {reachable_cells} reachable cells bracketed (min slack {worst_slack:.3}); Euclidean max error {max_err:.3} m; {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- plane fit

fn random_plane(rng: &mut ChaCha8Rng) -> GroundPlane {
    let height = rng.gen_range(1.0..3.0);
    let pitch = rng.gen_range(5f64..40.0).to_radians();
    let roll = rng.gen_range(-10f64..10.0).to_radians();
    // downward normal of a level camera is +Y; pitching down tilts it toward +Z
    let rot =
        Rotation3::from_axis_angle(&Vector3::z_axis(), roll) * Rotation3::from_axis_angle(&Vector3::x_axis(), pitch);
    let n = rot * Vector3::y();
    GroundPlane::new(n.x / height, n.y / height, n.z / height)
}

fn plane_samples(
    plane: &GroundPlane,
    cam: &CameraIntrinsics,
    count: usize,
    noise: Option<f64>,
    rng: &mut ChaCha8Rng,
) -> Vec<PlaneSample> {
    let f = cam.focal_length_px;
    let (hw, hh) = (cam.width_px as f64 / 2.0, cam.height_px as f64 / 2.0);
    let normal = noise.map(|s| Normal::new(0.0, s).unwrap());
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = rng.gen_range(-hw..hw);
        let y = rng.gen_range(-hh..hh);
        let inv = plane.a / f * x + plane.b / f * y + plane.c;
        if inv < 1.0 / 40.0 {
            continue;
        }
        let mut z = 1.0 / inv;
        if let Some(n) = &normal {
            z *= 1.0 + n.sample(rng);
        }
        out.push(PlaneSample { x_px: x, y_px: y, depth_m: z });
    }
    out
}

fn acceptance_plane_fit() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let cam = CameraIntrinsics { focal_length_px: 300.0, width_px: 320, height_px: 240 };
    let (mut worst_clean, mut worst_noisy): (f64, f64) = (0.0, 0.0);
    for trial in 0..100 {
        let plane = random_plane(&mut rng);
        let truth = plane.coefficients();
        let rel = |p: &GroundPlane| (p.coefficients() - truth).norm() / truth.norm();
        let clean = plane_samples(&plane, &cam, 200, None, &mut rng);
        let fit = fit_ground_plane(&clean, &cam).map_err(|e| format!("trial {trial}: {e}"))?;
        worst_clean = worst_clean.max(rel(&fit));
        let noisy = plane_samples(&plane, &cam, 200, Some(0.02), &mut rng);
        let fit = fit_ground_plane(&noisy, &cam).map_err(|e| format!("trial {trial}: {e}"))?;
        worst_noisy = worst_noisy.max(rel(&fit));
    }
    check(worst_clean <= 1e-9, || format!("noiseless relative error {worst_clean:e}"))?;
    check(worst_noisy <= 0.02, || format!("noisy relative error {worst_noisy}"))?;
    within_budget(start.elapsed(), 1.0)?;
    Ok(format!(
        "100 planes: noiseless {worst_clean:.1e}, 2% noise {:.3}%; {:.2} s",
        worst_noisy * 100.0,
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- crowd

fn acceptance_walkability() -> Outcome {
    let start = Instant::now();
    let mut positions = 0usize;
    let mut off_grid = Vec::new();
    let (mut close_frames, mut frames) = (0usize, 0usize);
    for (name, recipe) in synth::bundled() {
        let scene = recipe.build();
        for seed in 0..3u64 {
            let cfg = SimConfig { duration_s: 60.0, seed, ..Default::default() };
            let world = World::from_scene(&scene, &cfg).map_err(|e| format!("{name}: {e}"))?;
            let bev = world.bev.clone();
            let trace = sim::simulate_world(world, &cfg).map_err(|e| format!("{name} seed {seed}: {e}"))?;
            let mut by_tick: BTreeMap<u64, Vec<Point2>> = BTreeMap::new();
            for r in trace.rows.iter().filter(|r| r.kind == AgentKind::Pedestrian) {
                positions += 1;
                let p = r.position();
                let ok = bev.spec.cell_of(&p).is_some_and(|(i, j)| *bev.walkable.get(i, j) && !*bev.obstacle.get(i, j));
                if !ok {
                    off_grid
                        .push(format!("{name} seed {seed} tick {} ped {} at ({:.2}, {:.2})", r.tick, r.id, p.x, p.y));
                }
                by_tick.entry(r.tick).or_default().push(p);
            }
            frames += cfg.ticks() as usize;
            for ps in by_tick.values() {
                let close = (0..ps.len()).any(|a| (a + 1..ps.len()).any(|b| (ps[a] - ps[b]).norm() < 0.3));
                close_frames += close as usize;
            }
        }
    }
    check(off_grid.is_empty(), || {
        format!("{} positions off the walkable grid, first: {}", off_grid.len(), off_grid[0])
    })?;
    check(positions > 0, || "no pedestrians were simulated".into())?;
    let frac = close_frames as f64 / frames as f64;
    check(frac < 0.05, || format!("{:.2}% of frames have a pair closer than 0.3 m", frac * 100.0))?;
    within_budget(start.elapsed(), 60.0)?;
    Ok(format!(
        "15 runs, {positions} positions all walkable; close-pair frames {:.2}%; {:.1} s",
        frac * 100.0,
        start.elapsed().as_secs_f64()
    ))
}

fn acceptance_corridor() -> Outcome {
    let cs = 0.25;
    // walls on the long sides, open ends on the grid border
    let spec = GridSpec::covering(Point2::new(-1.0, -0.5), Point2::new(21.0, 3.5), cs, 0);
    let walkable = Raster::from_fn(spec.cols, spec.rows, |i, j| (0.0..=3.0).contains(&spec.center(i, j).y));
    let bev = BevGrid::from_masks(spec, walkable, Raster::filled(spec.cols, spec.rows, false));
    let crowd =
        CrowdParams { dt: 0.1, spawn_rate: 0.0, v_max_ped: 1.4, preferred_speed: (1.4, 1.4), ..Default::default() };
    let cfg = SimConfig { crowd, duration_s: 60.0, ..Default::default() };
    let world = World::from_bev(bev, vec![], vec![], &crowd).map_err(|e| e.to_string())?;
    let mut sim = Simulation::new(world, cfg).map_err(|e| e.to_string())?;
    sim.add_pedestrian(Point2::new(0.0, 1.5), Point2::new(20.0, 1.5), 1.4);
    for tick in 1..=600u64 {
        sim.step().map_err(|e| e.to_string())?;
        if sim.pedestrians.iter().all(|p| p.state == PedState::Arrived) || sim.pedestrians.is_empty() {
            check((140..=180).contains(&tick), || format!("arrived after {tick} ticks"))?;
            return Ok(format!("arrived after {tick} ticks (window 140..=180, straight-line {:.0})", 20.0 / 1.4 / 0.1));
        }
    }
    Err("pedestrian never arrived".into())
}

// ---------------------------------------------------------------- traffic

fn crossing(stop_arc: f64, cycle: LightCycle) -> Crosswalk {
    let y0 = stop_arc + 1.5;
    Crosswalk {
        polygon: vec![
            Point2::new(-2.0, y0),
            Point2::new(2.0, y0),
            Point2::new(2.0, y0 + 3.0),
            Point2::new(-2.0, y0 + 3.0),
        ],
        stop_lines: vec![StopLine { lane: 0, arc: stop_arc }],
        schedule: Some(cycle),
    }
}

fn acceptance_traffic() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut ticks = 0usize;
    let mut guarded = 0usize;
    while ticks < 10_000 {
        let params = TrafficParams {
            v_max: rng.gen_range(6.0..14.0),
            accel: rng.gen_range(2.0..4.0),
            min_gap: rng.gen_range(1.0..3.0),
            spawn_rate: rng.gen_range(0.1..0.6),
            ..Default::default()
        };
        let dt = (params.min_gap / (2.0 * params.v_max)).min(0.1);
        let length = rng.gen_range(80.0..150.0);
        let stop_arc = rng.gen_range(30.0..length - 20.0);
        let cycle = LightCycle {
            green_for_cars_s: rng.gen_range(3.0..20.0),
            green_for_peds_s: rng.gen_range(3.0..20.0),
            offset_s: rng.gen_range(0.0..20.0),
        };
        let lanes_geo = vec![curbside::scene::Lane::new(vec![Point2::new(0.0, 0.0), Point2::new(0.0, length)], 3.5)];
        let crosswalks = vec![crossing(stop_arc, cycle)];
        let schedule = TrafficLightSchedule::from_crosswalks(&crosswalks);
        let mut lanes: Vec<Vec<Car>> = vec![vec![]];
        let mut next_id = 0;
        // cars that had room to stop when the current red phase began
        let mut committed: BTreeMap<u64, bool> = BTreeMap::new();
        let mut was_red = false;
        for k in 0..400u64 {
            let t = k as f64 * dt;
            if let Some(car) = traffic::spawn_car(0, &lanes[0], next_id, &params, dt, &mut rng) {
                lanes[0].push(car);
                next_id += 1;
            }
            let red = light_state(&schedule, 0, t) == LightState::GreenForPeds;
            if red && !was_red {
                committed.clear();
            }
            was_red = red;
            if red {
                for c in &lanes[0] {
                    committed.entry(c.id).or_insert(c.s + params.braking_distance(c.v) + params.min_gap <= stop_arc);
                }
            }
            traffic::step_cars(&mut lanes, &schedule, &crosswalks, &params, t, dt);
            traffic::despawn_cars(&mut lanes, &lanes_geo);
            ticks += 1;
            for c in &lanes[0] {
                check((0.0..=params.v_max).contains(&c.v), || format!("speed {} outside [0, {}]", c.v, params.v_max))?;
                if red && committed.get(&c.id) == Some(&true) {
                    guarded += 1;
                    check(c.s <= stop_arc + 1e-9, || {
                        format!("car {} ran the red light: s {:.3} > stop arc {stop_arc:.3}", c.id, c.s)
                    })?;
                }
            }
            for w in lanes[0].windows(2) {
                let gap = w[0].s - w[0].length - w[1].s;
                check(gap >= 0.0, || format!("negative bumper gap {gap}"))?;
            }
        }
    }

    // deceleration onset against the kinematic threshold
    let mut worst_onset: f64 = 0.0;
    for _ in 0..50 {
        let params =
            TrafficParams { v_max: rng.gen_range(6.0..14.0), accel: rng.gen_range(2.0..4.0), ..Default::default() };
        let dt = 0.05;
        let stop_arc = 120.0;
        // red from the start and for the whole run
        let cycle = LightCycle { green_for_cars_s: 1e-3, green_for_peds_s: 1000.0, offset_s: -1.0 };
        let crosswalks = vec![crossing(stop_arc, cycle)];
        let schedule = TrafficLightSchedule::from_crosswalks(&crosswalks);
        let mut lanes = vec![vec![Car { id: 0, lane: 0, s: 0.0, v: params.v_max, length: params.car_length }]];
        let threshold = params.braking_distance(params.v_max) + params.min_gap;
        let mut onset = None;
        for k in 0..2000 {
            let before = lanes[0][0];
            traffic::step_cars(&mut lanes, &schedule, &crosswalks, &params, k as f64 * dt, dt);
            if lanes[0][0].v < before.v {
                onset = Some(stop_arc - before.s);
                break;
            }
        }
        let d = onset.ok_or("car never decelerated")?;
        let err = threshold - d;
        check((0.0..=params.v_max * dt).contains(&err), || {
            format!("onset at {d:.3} m from the line, threshold {threshold:.3}, step {:.3}", params.v_max * dt)
        })?;
        worst_onset = worst_onset.max(err / (params.v_max * dt));
    }
    Ok(format!(
        "{ticks} ticks, {guarded} guarded red-light samples, no gaps below zero; onset within {:.2} of a tick",
        worst_onset
    ))
}

fn acceptance_crosswalk() -> Outcome {
    let scene = synth::crosswalk().build();
    let cw = &scene.crosswalks[0];
    let schedule = TrafficLightSchedule::from_crosswalks(&scene.crosswalks);
    let mut crossings = 0usize;
    let mut waits = 0usize;
    let mut guarded = 0usize;
    let params = TrafficParams::default();
    for seed in 0..2u64 {
        let cfg = SimConfig { duration_s: 60.0, seed, ..Default::default() };
        let dt = cfg.crowd.dt;
        let trace = sim::simulate(&scene, &cfg).map_err(|e| e.to_string())?;
        let mut tracks: BTreeMap<(AgentKind, u64), Vec<&curbside::trace::TraceRow>> = BTreeMap::new();
        for r in &trace.rows {
            tracks.entry(r.agent()).or_default().push(r);
            waits += (r.state == curbside::trace::AgentState::Waiting) as usize;
        }
        for ((kind, id), rows) in &tracks {
            match kind {
                AgentKind::Pedestrian => {
                    // a visit lasts until the pedestrian is a full grid cell clear of the
                    // polygon, so brushing along its edge is not a fresh entry
                    let mut on = polygon::contains(&cw.polygon, &rows[0].position());
                    for r in &rows[1..] {
                        let p = r.position();
                        if !on && polygon::contains(&cw.polygon, &p) {
                            on = true;
                            crossings += 1;
                            let t = r.tick as f64 * dt;
                            check(light_state(&schedule, 0, t) == LightState::GreenForPeds, || {
                                format!("seed {seed}: pedestrian {id} entered at tick {} against the light", r.tick)
                            })?;
                        } else if on && distance_to_polygon(&cw.polygon, &p) > cfg.bev.cell_size {
                            on = false;
                        }
                    }
                }
                AgentKind::Car => {
                    let lane_idx = rows[0].lane.ok_or("car row without lane")?;
                    let lane = &scene.lanes[lane_idx];
                    let stop = cw.stop_arc(lane_idx).ok_or("lane without stop line")?;
                    let mut eligible = false;
                    let mut prev_s: Option<f64> = None;
                    let mut prev_red = false;
                    for r in rows {
                        let s = lane.project(&r.position());
                        let red = light_state(&schedule, 0, r.tick as f64 * dt) == LightState::GreenForPeds;
                        if red && !prev_red {
                            // state at the start of the first red step; new cars start at arc 0
                            let start = prev_s.unwrap_or(0.0);
                            eligible = start + params.braking_distance(params.v_max) + params.min_gap <= stop;
                        }
                        if red && eligible {
                            guarded += 1;
                            check(s <= stop + 1e-6, || {
                                format!("seed {seed}: car {id} at arc {s:.3} past stop {stop} during pedestrian green")
                            })?;
                        }
                        prev_red = red;
                        prev_s = Some(s);
                    }
                }
            }
        }
    }
    check(crossings > 0, || "no pedestrian crossed".into())?;
    Ok(format!("{crossings} crosswalk entries all on pedestrian green, {waits} waiting rows; {guarded} car samples held at the line"))
}

fn distance_to_polygon(poly: &[Point2], p: &Point2) -> f64 {
    if polygon::contains(poly, p) {
        return 0.0;
    }
    (0..poly.len())
        .map(|k| {
            let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
            let t = ((p - a).dot(&(b - a)) / (b - a).norm_squared()).clamp(0.0, 1.0);
            (a + (b - a) * t - p).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------- compositing

fn acceptance_compositing() -> Outcome {
    // empty traces reproduce the background exactly
    for (name, recipe) in synth::bundled() {
        let scene = recipe.build();
        let mut bad = None;
        compositing::render_video(&scene, &Trace::default(), 4, &RenderParams::default(), |k, _, fb| {
            if rgb_f32_to_8(&fb.f_final) != scene.background && bad.is_none() {
                bad = Some(k);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
        check(bad.is_none(), || format!("{name}: empty frame {bad:?} differs from the background"))?;
    }

    let (mut frames, mut full_matte, mut object_px, mut occluded_px, mut double_px) =
        (0, 0usize, 0usize, 0usize, 0usize);
    for name in ["crosswalk", "courtyard", "plaza"] {
        let recipe = synth::bundled().into_iter().find(|(n, _)| *n == name).unwrap().1;
        let poles = recipe.poles.clone();
        let scene = recipe.build();
        let renderer = Renderer::new(&scene, &RenderParams::default()).map_err(|e| e.to_string())?;
        let cfg = SimConfig { duration_s: 15.0, seed: 4, ..Default::default() };
        let trace = sim::simulate(&scene, &cfg).map_err(|e| e.to_string())?;
        let tracks = compositing::agent_tracks(&trace, &scene.lanes).map_err(|e| e.to_string())?;
        let mut proxy_sets: Vec<Vec<AgentProxy>> =
            (0..cfg.ticks()).step_by(3).map(|t| compositing::proxies_at(&tracks, t)).collect();
        // a pedestrian behind each pole, and one standing in an existing shadow
        for pole in &poles {
            proxy_sets.push(vec![AgentProxy::pedestrian(
                pole.position + Point2::new(0.0, 1.2),
                Point2::new(1.0, 0.0),
                [0.9, 0.2, 0.2],
            )]);
        }
        if let Some(p) = existing_shadow_point(&scene, &renderer) {
            proxy_sets.push(vec![AgentProxy::pedestrian(p, Point2::new(0.0, 1.0), [0.2, 0.9, 0.2])]);
        }
        let b = renderer.background();
        let d_bg = renderer.background_depth();
        let s = renderer.shadow_factor();
        for proxies in &proxy_sets {
            let fb = renderer.render(proxies);
            frames += 1;
            for i in 0..fb.f_final.data().len() {
                let (ms, mo) = (fb.m_s.data()[i], fb.m_o.data()[i]);
                check(!(ms && mo), || format!("{name}: pixel {i} in both masks"))?;
                let (bi, ws, fin) = (b.data()[i], fb.f_ws.data()[i], fb.f_final.data()[i]);
                if mo {
                    object_px += 1;
                    let d = fb.f_depth.data()[i];
                    let want = if d <= d_bg.data()[i] { ws } else { bi };
                    occluded_px += (d > d_bg.data()[i]) as usize;
                    check(fin == want, || format!("{name}: object pixel {i} took the wrong source"))?;
                    continue;
                }
                let m = fb.matte.data()[i];
                if m == 1.0 {
                    full_matte += 1;
                    let want = [0, 1, 2].map(|c| bi[c] * s[c]);
                    check(ws == want && fin == want, || {
                        format!("{name}: full-matte pixel {i} is {fin:?}, want {want:?}")
                    })?;
                }
                if scene.shadow_mask.data()[i] {
                    double_px += ms as usize;
                    check(fin == bi, || format!("{name}: existing-shadow pixel {i} changed"))?;
                }
                if m == 0.0 {
                    check(fin == bi, || format!("{name}: untouched pixel {i} differs from the background"))?;
                }
            }
        }
    }
    check(occluded_px > 0, || "no occluded object pixels exercised".into())?;
    check(double_px > 0, || "no double-shadow pixels exercised".into())?;
    check(full_matte > 0, || "no full-matte pixels exercised".into())?;
    Ok(format!(
        "{frames} frames: {object_px} object px ({occluded_px} occluded), {full_matte} full-matte px, {double_px} double-shadow px"
    ))
}

/// A ground point inside the scene's detected shadow, away from its edges.
fn existing_shadow_point(scene: &SceneDescription, renderer: &Renderer) -> Option<Point2> {
    let (w, h) = scene.shadow_mask.dims();
    let inside = |x: usize, y: usize| {
        (x >= 20 && y >= 20 && x + 20 < w && y + 20 < h)
            && [(0, 0), (20, 0), (0, 20)]
                .iter()
                .all(|&(dx, dy)| *scene.shadow_mask.get(x - dx, y - dy) && *scene.shadow_mask.get(x + dx, y + dy))
    };
    let (x, y, _) = scene.shadow_mask.iter_xy().find(|&(x, y, _)| inside(x, y))?;
    let (px, py) = scene.intrinsics.pixel_center(x, y);
    renderer.frame().pixel_to_ground(px, py).ok()
}

fn overhead_scene(lighting: Lighting) -> (SceneDescription, GroundPlane) {
    let cam = CameraIntrinsics { focal_length_px: 600.0, width_px: 320, height_px: 240 };
    let plane = GroundPlane::new(0.0, 0.0, 1.0 / 30.0);
    let scene = SceneDescription {
        intrinsics: cam,
        labels: Raster::filled(320, 240, Label::Sidewalk),
        depth: Raster::filled(320, 240, 30.0),
        lighting,
        shadow_mask: Raster::filled(320, 240, false),
        lanes: vec![],
        crosswalks: vec![],
        background: Raster::filled(320, 240, [140, 140, 135]),
        drivable_threshold: 0.05,
        wall_depth_m: None,
    };
    (scene, plane)
}

fn acceptance_shadow_geometry() -> Outcome {
    let cell = 0.25;
    let proxy = AgentProxy::pedestrian(Point2::zeros(), Point2::new(0.0, 1.0), [0.6, 0.6, 0.6]);
    let mut worst: f64 = 0.0;
    let mut samples = 0;
    for el in [FRAC_PI_6, FRAC_PI_4, PI / 3.0] {
        for k in 0..36 {
            let az = k as f64 * PI / 18.0;
            let lighting = Lighting {
                mode: LightingMode::Directional,
                sun_azimuth: az,
                sun_elevation: el,
                directional_intensity: 0.7,
                ambient_intensity: 0.3,
            };
            let (scene, plane) = overhead_scene(lighting);
            let renderer = Renderer::with_plane(&scene, plane, &RenderParams::default()).map_err(|e| e.to_string())?;
            let fb = renderer.render(&[proxy]);
            let pts: Vec<Point2> = fb
                .m_s
                .data()
                .iter()
                .zip(renderer.receivers().points.data())
                .filter(|(m, _)| **m)
                .filter_map(|(_, p)| p.map(|p| Point2::new(p.x, p.y)))
                .collect();
            let sun = Point2::new(az.cos(), az.sin());
            let c = polygon::centroid(&pts).ok_or_else(|| format!("az {k}0 deg el {el:.2}: no shadow pixels"))?;
            check((c - proxy.center).dot(&sun) < 0.0, || format!("az {az:.2} el {el:.2}: centroid on the sun side"))?;
            let u = -sun;
            let reach = pts.iter().map(|p| (p - proxy.center).dot(&u)).fold(f64::NEG_INFINITY, f64::max);
            let support = (u.dot(&proxy.heading).abs() * proxy.length + u.dot(&proxy.side()).abs() * proxy.width) / 2.0;
            let want = proxy.height / el.tan() + support;
            let err = (reach - want).abs();
            check(err <= 2.0 * cell, || format!("az {az:.2} el {el:.2}: extent {reach:.3} vs {want:.3}"))?;
            worst = worst.max(err);
            samples += 1;
        }
    }
    // zenith: the shadow stays under the box
    let lighting = Lighting {
        mode: LightingMode::Directional,
        sun_azimuth: 0.0,
        sun_elevation: FRAC_PI_2,
        directional_intensity: 0.7,
        ambient_intensity: 0.3,
    };
    let (scene, plane) = overhead_scene(lighting);
    let renderer = Renderer::with_plane(&scene, plane, &RenderParams::default()).map_err(|e| e.to_string())?;
    let fb = renderer.render(&[proxy]);
    let reach = 0.25 + 2.0 * cell;
    for (i, p) in renderer.receivers().points.data().iter().enumerate() {
        let Some(p) = p else { continue };
        let in_footprint = p.x.abs() <= 0.25 && p.y.abs() <= 0.25;
        if fb.m_s.data()[i] {
            check(p.x.abs() <= reach && p.y.abs() <= reach, || format!("zenith shadow at ({:.2}, {:.2})", p.x, p.y))?;
        }
        if in_footprint {
            check(fb.m_s.data()[i] || fb.m_o.data()[i], || "footprint pixel neither shadowed nor covered".into())?;
        }
    }
    Ok(format!(
        "{samples} sun directions: centroids opposite the sun, worst extent error {worst:.3} m; zenith contained"
    ))
}

// ---------------------------------------------------------------- determinism

fn acceptance_determinism() -> Outcome {
    let scene = synth::crosswalk().build();
    let cfg = SimConfig { duration_s: 10.0, seed: 9, ..Default::default() };
    let params = RenderParams { ticks_per_frame: 2, ..Default::default() };
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    for d in &dirs {
        let trace = sim::simulate(&scene, &cfg).map_err(|e| e.to_string())?;
        trace.write_file(&d.path().join("traces.csv")).map_err(|e| e.to_string())?;
        compositing::write_frames(&scene, &trace, cfg.ticks(), &params, &d.path().join("frames"))
            .map_err(|e| e.to_string())?;
    }
    let read = |p: std::path::PathBuf| std::fs::read(&p).map_err(|e| format!("{}: {e}", p.display()));
    check(read(dirs[0].path().join("traces.csv"))? == read(dirs[1].path().join("traces.csv"))?, || {
        "trace CSVs differ".into()
    })?;
    let mut names: Vec<_> = std::fs::read_dir(dirs[0].path().join("frames"))
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    check(names.len() == 50, || format!("expected 50 frames, found {}", names.len()))?;
    for n in &names {
        let a = read(dirs[0].path().join("frames").join(n))?;
        let b = read(dirs[1].path().join("frames").join(n))?;
        check(a == b, || format!("frame {n:?} differs"))?;
    }
    Ok(format!("trace and {} frames byte-identical", names.len()))
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("eikonal oracle", acceptance_eikonal),
        ("plane-fit recovery", acceptance_plane_fit),
        ("crowd walkability", acceptance_walkability),
        ("corridor travel time", acceptance_corridor),
        ("traffic safety", acceptance_traffic),
        ("crosswalk scenario", acceptance_crosswalk),
        ("compositing identities", acceptance_compositing),
        ("shadow geometry", acceptance_shadow_geometry),
        ("determinism", acceptance_determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name} [{secs:.1}s]: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name} [{secs:.1}s]: {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
