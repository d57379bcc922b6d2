//! Frame-by-frame rendering of a trace over a scene.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use super::{
    composite_final, composite_shadow, extract_masks, rasterize_layers, refine_background_depth, shadow_color_factor,
    AgentProxy, CompositingError, FrameBuffers, Receivers, BLUR_SIGMA_DIFFUSE, BLUR_SIGMA_DIRECTIONAL,
};
use crate::geometry::{build_shadow_occluder, reconstruct_plane, GroundFrame, OccluderParams, ShadowOccluder};
use crate::polygon::Point2;
use crate::raster::{encode_ppm, rgb8_to_f32, rgb_f32_to_8, Mask, Rgb, RgbImage};
use crate::scene::{
    CameraIntrinsics, DepthRaster, GroundPlane, Lane, Lighting, LightingMode, SceneDescription, DEFAULT_MAX_GROUND_TILT,
};
use crate::trace::{AgentKind, Trace};

/// Half-width of the heading smoothing window, in samples.
const HEADING_HALF_WINDOW: usize = 2;

const PEDESTRIAN_PALETTE: [Rgb; 6] = [
    [0.85, 0.25, 0.20],
    [0.20, 0.45, 0.85],
    [0.95, 0.75, 0.20],
    [0.30, 0.70, 0.35],
    [0.65, 0.35, 0.75],
    [0.95, 0.55, 0.65],
];
const CAR_PALETTE: [Rgb; 4] = [[0.75, 0.10, 0.10], [0.15, 0.20, 0.55], [0.80, 0.80, 0.82], [0.12, 0.12, 0.14]];

#[derive(Debug, Clone, PartialEq)]
pub struct RenderParams {
    /// Render every n-th tick.
    pub ticks_per_frame: u64,
    /// Matte blur; `None` picks the default for the lighting mode.
    pub blur_sigma: Option<f64>,
    pub occluder: OccluderParams,
    pub max_ground_tilt: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            ticks_per_frame: 1,
            blur_sigma: None,
            occluder: OccluderParams::default(),
            max_ground_tilt: DEFAULT_MAX_GROUND_TILT,
        }
    }
}

/// Per-scene state shared by every frame.
#[derive(Debug, Clone)]
pub struct Renderer {
    intrinsics: CameraIntrinsics,
    plane: GroundPlane,
    frame: GroundFrame,
    lighting: Lighting,
    occluder: Option<ShadowOccluder>,
    receivers: Receivers,
    background: RgbImage,
    d_bg: DepthRaster,
    shadow_factor: Rgb,
    existing_shadow: Mask,
    blur_sigma: f64,
}

impl Renderer {
    pub fn new(scene: &SceneDescription, params: &RenderParams) -> Result<Self, CompositingError> {
        let plane = reconstruct_plane(scene, params.max_ground_tilt)?;
        Self::with_plane(scene, plane, params)
    }

    /// Uses a known plane instead of fitting one to the depth raster.
    pub fn with_plane(
        scene: &SceneDescription,
        plane: GroundPlane,
        params: &RenderParams,
    ) -> Result<Self, CompositingError> {
        let intrinsics = scene.intrinsics;
        let frame = GroundFrame::new(plane, &intrinsics);
        let occluder = match scene.lighting.mode {
            LightingMode::Directional => {
                let limit = params.occluder.height;
                for (_, _, height) in [AgentProxy::PEDESTRIAN_SIZE, AgentProxy::CAR_SIZE] {
                    if height >= limit {
                        return Err(CompositingError::ProxyTooTall { height, limit });
                    }
                }
                Some(build_shadow_occluder(&scene.shadow_mask, &plane, &intrinsics, &scene.lighting, &params.occluder)?)
            }
            LightingMode::Diffuse => None,
        };
        let background = rgb8_to_f32(&scene.background);
        let blur_sigma = params.blur_sigma.unwrap_or(match scene.lighting.mode {
            LightingMode::Directional => BLUR_SIGMA_DIRECTIONAL,
            LightingMode::Diffuse => BLUR_SIGMA_DIFFUSE,
        });
        Ok(Self {
            intrinsics,
            plane,
            frame,
            lighting: scene.lighting,
            occluder,
            receivers: Receivers::from_scene(scene, &frame),
            shadow_factor: shadow_color_factor(&background, &scene.shadow_mask, &scene.labels),
            d_bg: refine_background_depth(&scene.depth, &scene.labels, &plane, &intrinsics),
            background,
            existing_shadow: scene.shadow_mask.clone(),
            blur_sigma,
        })
    }

    pub fn plane(&self) -> &GroundPlane {
        &self.plane
    }

    pub fn frame(&self) -> &GroundFrame {
        &self.frame
    }

    pub fn background(&self) -> &RgbImage {
        &self.background
    }

    pub fn background_depth(&self) -> &DepthRaster {
        &self.d_bg
    }

    pub fn shadow_factor(&self) -> Rgb {
        self.shadow_factor
    }

    pub fn receivers(&self) -> &Receivers {
        &self.receivers
    }

    pub fn render(&self, proxies: &[AgentProxy]) -> FrameBuffers {
        let layers = rasterize_layers(
            proxies,
            &self.frame,
            &self.intrinsics,
            &self.lighting,
            self.occluder.as_ref(),
            &self.receivers,
        );
        let (m_s, m_o) = extract_masks(&layers.f_rgb, &layers.f_depth, &layers.reference);
        let shadow = composite_shadow(
            &self.background,
            &layers.f_rgb,
            &m_s,
            &m_o,
            self.shadow_factor,
            &self.existing_shadow,
            self.blur_sigma,
        );
        let f_final = composite_final(&shadow.f_ws, &layers.f_depth, &self.d_bg, &self.background);
        FrameBuffers {
            f_rgb: layers.f_rgb,
            f_depth: layers.f_depth,
            m_s,
            m_o,
            matte: shadow.matte,
            f_ws: shadow.f_ws,
            f_final,
        }
    }
}

/// Consecutive poses of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub kind: AgentKind,
    pub id: u64,
    pub first_tick: u64,
    pub positions: Vec<Point2>,
    pub headings: Vec<Point2>,
}

impl Track {
    pub fn pose_at(&self, tick: u64) -> Option<(Point2, Point2)> {
        let k = usize::try_from(tick.checked_sub(self.first_tick)?).ok()?;
        Some((*self.positions.get(k)?, self.headings[k]))
    }

    pub fn proxy_at(&self, tick: u64) -> Option<AgentProxy> {
        let (p, heading) = self.pose_at(tick)?;
        Some(match self.kind {
            AgentKind::Pedestrian => AgentProxy::pedestrian(p, heading, PEDESTRIAN_PALETTE[(self.id % 6) as usize]),
            AgentKind::Car => AgentProxy::car(p, heading, CAR_PALETTE[(self.id % 4) as usize]),
        })
    }
}

/// Headings from a centered moving average of the displacement; samples
/// without motion reuse the nearest earlier heading.
fn smoothed_headings(positions: &[Point2]) -> Vec<Point2> {
    let n = positions.len();
    let mut out: Vec<Option<Point2>> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(HEADING_HALF_WINDOW);
            let hi = (i + HEADING_HALF_WINDOW).min(n - 1);
            let d = positions[hi] - positions[lo];
            (d.norm() > 1e-6).then(|| d.normalize())
        })
        .collect();
    let first = out.iter().flatten().next().copied().unwrap_or(Point2::new(0.0, 1.0));
    let mut last = first;
    for h in out.iter_mut() {
        match h {
            Some(v) => last = *v,
            None => *h = Some(last),
        }
    }
    out.into_iter().map(|h| h.unwrap_or(first)).collect()
}

/// Groups trace rows per agent. Cars with a lane take the lane direction as
/// heading; everything else uses the smoothed path direction.
pub fn agent_tracks(trace: &Trace, lanes: &[Lane]) -> Result<Vec<Track>, CompositingError> {
    type Sample = (u64, Point2, Option<usize>);
    let mut groups: BTreeMap<(AgentKind, u64), Vec<Sample>> = BTreeMap::new();
    for r in &trace.rows {
        groups.entry((r.kind, r.id)).or_default().push((r.tick, r.position(), r.lane));
    }
    let mut tracks = Vec::with_capacity(groups.len());
    for ((kind, id), mut rows) in groups {
        rows.sort_by_key(|r| r.0);
        rows.dedup_by_key(|r| r.0);
        for w in rows.windows(2) {
            if w[1].0 != w[0].0 + 1 {
                return Err(CompositingError::TraceGap { kind: kind.as_str(), id, tick: w[0].0 + 1 });
            }
        }
        let positions: Vec<Point2> = rows.iter().map(|r| r.1).collect();
        let mut headings = smoothed_headings(&positions);
        if kind == AgentKind::Car {
            for (h, (_, p, lane)) in headings.iter_mut().zip(&rows) {
                if let Some(l) = *lane {
                    let lane = lanes.get(l).ok_or(CompositingError::UnknownLane(l, lanes.len()))?;
                    *h = lane.direction_at(lane.project(p));
                }
            }
        }
        tracks.push(Track { kind, id, first_tick: rows[0].0, positions, headings });
    }
    Ok(tracks)
}

pub fn proxies_at(tracks: &[Track], tick: u64) -> Vec<AgentProxy> {
    tracks.iter().filter_map(|t| t.proxy_at(tick)).collect()
}

fn frame_ticks(tick_count: u64, params: &RenderParams) -> Vec<u64> {
    (0..tick_count).step_by(params.ticks_per_frame.max(1) as usize).collect()
}

/// Renders ticks `0, n, 2n, ...` below `tick_count` and hands each frame to
/// `sink` in order, together with its frame index and tick.
pub fn render_video(
    scene: &SceneDescription,
    trace: &Trace,
    tick_count: u64,
    params: &RenderParams,
    mut sink: impl FnMut(usize, u64, FrameBuffers) -> Result<(), CompositingError>,
) -> Result<usize, CompositingError> {
    let renderer = Renderer::new(scene, params)?;
    let tracks = agent_tracks(trace, &scene.lanes)?;
    let ticks = frame_ticks(tick_count, params);
    for (k, &t) in ticks.iter().enumerate() {
        sink(k, t, renderer.render(&proxies_at(&tracks, t)))?;
    }
    Ok(ticks.len())
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.ppm")
}

/// Renders frames in parallel and writes them as `frame_%06d.ppm` into
/// `out_dir`. Returns the number of frames.
pub fn write_frames(
    scene: &SceneDescription,
    trace: &Trace,
    tick_count: u64,
    params: &RenderParams,
    out_dir: &Path,
) -> Result<usize, CompositingError> {
    std::fs::create_dir_all(out_dir)?;
    let renderer = Renderer::new(scene, params)?;
    let tracks = agent_tracks(trace, &scene.lanes)?;
    let ticks = frame_ticks(tick_count, params);
    ticks.par_iter().enumerate().try_for_each(|(k, &t)| -> Result<(), CompositingError> {
        let frame = renderer.render(&proxies_at(&tracks, t));
        std::fs::write(out_dir.join(frame_file_name(k)), encode_ppm(&rgb_f32_to_8(&frame.f_final)))?;
        Ok(())
    })?;
    Ok(ticks.len())
}
