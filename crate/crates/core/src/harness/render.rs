use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::HarnessError;
use crate::mapping::{CellState, OccupancyGrid};
use crate::planner::{run_episode_observed, LogRecord, PlanStep, StepObserver, StepRecord};
use crate::scene::{Observation, Scene};
use crate::geometry::Pose;
use crate::value::EgoGrid;
use crate::world_model::build_model;

/// Binary greyscale PGM.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<(), HarnessError> {
    assert_eq!(pixels.len(), width * height);
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(pixels)?;
    w.flush()?;
    Ok(())
}

pub fn write_png_rgb(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<(), HarnessError> {
    assert_eq!(rgb.len(), 3 * width * height);
    let w = BufWriter::new(fs::File::create(path)?);
    let mut enc = png::Encoder::new(w, width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(rgb)?;
    writer.finish()?;
    Ok(())
}

/// Unknown 128, free 255, occupied 0; row 0 is the top (max y).
pub fn occupancy_pixels(grid: &OccupancyGrid) -> Vec<u8> {
    let mut px = Vec::with_capacity(grid.width * grid.height);
    for row in 0..grid.height {
        let y = grid.height - 1 - row;
        for x in 0..grid.width {
            px.push(match grid.state((x, y)) {
                CellState::Unknown => 128,
                CellState::Free => 255,
                CellState::Occupied => 0,
            });
        }
    }
    px
}

/// Values scaled by the grid maximum; row 0 is the top (max ego y).
pub fn ego_pixels(g: &EgoGrid) -> Vec<u8> {
    let m = g.max();
    let scale = if m > 0.0 { 255.0 / m } else { 0.0 };
    let mut px = Vec::with_capacity(g.side * g.side);
    for row in 0..g.side {
        let y = g.side - 1 - row;
        for x in 0..g.side {
            px.push((g.get(x, y) * scale).round().clamp(0.0, 255.0) as u8);
        }
    }
    px
}

/// Blue -> cyan -> yellow -> red.
pub fn false_color(v: u8) -> [u8; 3] {
    let t = v as f64 / 255.0;
    let stops = [(0.0, [20.0, 20.0, 90.0]), (0.33, [0.0, 190.0, 220.0]), (0.66, [250.0, 220.0, 40.0]), (1.0, [210.0, 30.0, 20.0])];
    for w in stops.windows(2) {
        let ((t0, c0), (t1, c1)) = (w[0], w[1]);
        if t <= t1 {
            let a = (t - t0) / (t1 - t0);
            return [0, 1, 2].map(|i| (c0[i] + a * (c1[i] - c0[i])).round() as u8);
        }
    }
    [210, 30, 20]
}

fn upscale_rgb(px: &[u8], side: usize, k: usize) -> Vec<u8> {
    let n = side * k;
    let mut out = Vec::with_capacity(3 * n * n);
    for row in 0..n {
        for col in 0..n {
            out.extend_from_slice(&false_color(px[(row / k) * side + col / k]));
        }
    }
    out
}

/// Top-down RGB drawing of the scene with a trajectory.
pub fn scene_pixels(scene: &Scene, path: &[Pose], px_per_m: f64) -> (usize, usize, Vec<u8>) {
    let w = (scene.width * px_per_m).ceil() as usize + 1;
    let h = (scene.height * px_per_m).ceil() as usize + 1;
    let mut rgb = vec![245u8; 3 * w * h];
    let mut put = |x: f64, y: f64, c: [u8; 3]| {
        let (ix, iy) = ((x * px_per_m).round() as i64, (y * px_per_m).round() as i64);
        if ix >= 0 && iy >= 0 && (ix as usize) < w && (iy as usize) < h {
            let i = 3 * ((h - 1 - iy as usize) * w + ix as usize);
            rgb[i..i + 3].copy_from_slice(&c);
        }
    };
    let step = 0.5 / px_per_m;
    let line = |a: crate::geometry::Vec2, b: crate::geometry::Vec2, c: [u8; 3], put: &mut dyn FnMut(f64, f64, [u8; 3])| {
        let n = (a.distance(b) / step).ceil().max(1.0) as usize;
        for k in 0..=n {
            let p = a + (b - a) * (k as f64 / n as f64);
            put(p.x, p.y, c);
        }
    };
    for wall in &scene.walls {
        let c = if wall.deceptive { [150, 150, 150] } else { [0, 0, 0] };
        line(wall.a, wall.b, c, &mut put);
    }
    for l in &scene.landmarks {
        let n = 32;
        for k in 0..n {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            let b = std::f64::consts::TAU * (k + 1) as f64 / n as f64;
            let p = |t: f64| l.position + crate::geometry::Vec2::from_angle(t) * l.radius;
            line(p(a), p(b), [200, 40, 160], &mut put);
        }
    }
    for seg in path.windows(2) {
        line(seg[0].position(), seg[1].position(), [30, 110, 230], &mut put);
    }
    (w, h, rgb)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSummary {
    pub steps: usize,
    pub files: Vec<PathBuf>,
}

struct Recorder<'a> {
    out: &'a Path,
    expected: &'a [StepRecord],
    files: Vec<PathBuf>,
    error: Option<HarnessError>,
}

impl Recorder<'_> {
    fn record(&mut self, step: usize, map: &OccupancyGrid, plan: &PlanStep) -> Result<(), HarnessError> {
        if let Some(exp) = self.expected.get(step) {
            if exp.chosen_id != plan.chosen.id {
                return Err(HarnessError::Replay(format!(
                    "step {step}: log chose {} but replay chose {}",
                    exp.chosen_id, plan.chosen.id
                )));
            }
        }
        let p = self.out.join(format!("map_{step:03}.pgm"));
        write_pgm(&p, map.width, map.height, &occupancy_pixels(map))?;
        self.files.push(p);
        for (name, g) in [("vimg", &plan.maps.v_img), ("vprior", &plan.maps.v_prior), ("fused", &plan.maps.fused)] {
            let px = ego_pixels(g);
            let p = self.out.join(format!("{name}_{step:03}.pgm"));
            write_pgm(&p, g.side, g.side, &px)?;
            self.files.push(p);
            let p = self.out.join(format!("{name}_{step:03}.png"));
            write_png_rgb(&p, 4 * g.side, 4 * g.side, &upscale_rgb(&px, g.side, 4))?;
            self.files.push(p);
        }
        Ok(())
    }
}

impl StepObserver for Recorder<'_> {
    fn on_step(&mut self, step: usize, _obs: &Observation, map: &OccupancyGrid, plan: &PlanStep) {
        if self.error.is_none() {
            if let Err(e) = self.record(step, map, plan) {
                self.error = Some(e);
            }
        }
    }
}

/// Replays a JSONL episode log and writes per-step occupancy and value maps
/// plus a trajectory overview into `out`.
pub fn render_log(log: &Path, out: &Path) -> Result<RenderSummary, HarnessError> {
    let reader = BufReader::new(fs::File::open(log)?);
    let mut header = None;
    let mut steps = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LogRecord>(&line)? {
            h @ LogRecord::Header { .. } => header = Some(h),
            LogRecord::Step(s) => steps.push(s),
            LogRecord::End { .. } => {}
        }
    }
    let Some(LogRecord::Header {
        episode,
        planner,
        model,
        sim,
        seeds,
    }) = header
    else {
        return Err(HarnessError::Replay("log has no header record".into()));
    };
    let m = build_model(&model, &episode.scene, planner.sensor)
        .ok_or_else(|| HarnessError::Replay("log was produced by a model that cannot be rebuilt".into()))?;
    fs::create_dir_all(out)?;
    let mut rec = Recorder {
        out,
        expected: &steps,
        files: Vec::new(),
        error: None,
    };
    let run = run_episode_observed(&episode, m.as_ref(), &planner, &sim, seeds, None, &mut rec)?;
    if let Some(e) = rec.error {
        return Err(e);
    }
    if run.steps != steps.len() {
        return Err(HarnessError::Replay(format!(
            "log has {} steps but replay ran {}",
            steps.len(),
            run.steps
        )));
    }
    let (w, h, rgb) = scene_pixels(&episode.scene, &run.trajectory, 20.0);
    let p = out.join("trajectory.png");
    write_png_rgb(&p, w, h, &rgb)?;
    let mut files = rec.files;
    files.push(p);
    Ok(RenderSummary { steps: run.steps, files })
}
