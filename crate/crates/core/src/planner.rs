//! Score-level fusion of the base frontier planner with imagined value and
//! the language prior, plus the receding-horizon episode loop.

use std::collections::VecDeque;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Action, PlatformLimits, Pose, Vec2};
use crate::mapping::{base_score, candidates, BaseScoreParams, CandidateConfig, CandidateTrajectory, OccupancyGrid, MAP_RESOLUTION};
use crate::scene::{self, Episode, MotionNoise, Observation, SceneError, SensorConfig};
use crate::value::{self, Alignment, CueWeights, EgoGrid, FusionParams};
use crate::world_model::{derive_seed, ModelSpec, RolloutRequest, WorldModel};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("invalid planner config: {0}")]
    Config(String),
    #[error("log write failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("log serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueMode {
    /// Rollouts, imagined value and prior are computed and fused.
    #[default]
    Enabled,
    /// The base planner alone: no rollouts, no value maps.
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopParams {
    /// Fused-map peak must lie within this distance of the agent.
    pub r_stop: f64,
    /// A goal-token ray must be closer than this.
    pub goal_depth: f64,
}

impl Default for StopParams {
    fn default() -> Self {
        Self {
            r_stop: 1.5,
            goal_depth: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub fusion: FusionParams,
    pub cues: CueWeights,
    pub candidates: CandidateConfig,
    pub base: BaseScoreParams,
    pub stop: StopParams,
    pub limits: PlatformLimits,
    pub sensor: SensorConfig,
    /// Observations handed to the world model as context.
    pub context_len: usize,
    pub decode_stride: usize,
    /// Candidate-expansion layers; 1 is single-step ranking.
    pub expansion_depth: usize,
    /// Candidates kept per layer when `expansion_depth > 1`.
    pub beam_width: usize,
    /// Score every candidate against one shared imagined map (the cellwise
    /// max over candidates) instead of its own.
    pub shared_value_map: bool,
    pub value_mode: ValueMode,
    pub map_resolution: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            fusion: FusionParams::default(),
            cues: CueWeights::default(),
            candidates: CandidateConfig::default(),
            base: BaseScoreParams::default(),
            stop: StopParams::default(),
            limits: PlatformLimits::default(),
            sensor: SensorConfig::default(),
            context_len: 4,
            decode_stride: 1,
            expansion_depth: 1,
            beam_width: 3,
            shared_value_map: false,
            value_mode: ValueMode::Enabled,
            map_resolution: MAP_RESOLUTION,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let err = |m: String| Err(PlannerError::Config(m));
        if let Err(e) = self.fusion.validate() {
            return err(e.to_string());
        }
        if let Err(e) = self.cues.validate() {
            return err(e.to_string());
        }
        if self.candidates.k == 0 || self.candidates.horizon == 0 {
            return err("k and horizon must be positive".into());
        }
        if self.context_len == 0 || self.decode_stride == 0 || self.expansion_depth == 0 {
            return err("context_len, decode_stride and expansion_depth must be positive".into());
        }
        if !self.limits.is_valid() {
            return err("platform limits must be positive".into());
        }
        if !(self.map_resolution > 0.0) {
            return err("map_resolution must be positive".into());
        }
        Ok(())
    }
}

mod opt_score {
    //! Non-finite scores (an unarmed STOP) serialize as `null`.
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedScore {
    pub candidate_id: usize,
    #[serde(with = "opt_score")]
    pub base: f64,
    pub img: f64,
    pub prior: f64,
    #[serde(with = "opt_score")]
    pub fused: f64,
    pub gated: bool,
    pub sigma_a: f64,
    /// Whether a rollout was requested for this candidate.
    pub imagined: bool,
}

/// Value maps of one planning step, egocentric at the planning pose.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMaps {
    /// Cellwise max of the gated per-candidate `V_img`.
    pub v_img: EgoGrid,
    pub v_prior: EgoGrid,
    /// `lambda1 * v_img + lambda2 * v_prior`.
    pub fused: EgoGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanStep {
    pub chosen: CandidateTrajectory,
    pub all_scores: Vec<FusedScore>,
    pub executed_action: Action,
    pub stop_issued: bool,
    pub stop_armed: bool,
    pub maps: StepMaps,
}

/// What the planner knows at one step.
pub struct PlanState<'a> {
    pub map: &'a OccupancyGrid,
    pub odom: Pose,
    /// Recent observations, oldest first; the last is the live one.
    pub history: &'a [Observation],
    pub instruction: &'a [String],
    pub align: &'a Alignment,
}

/// Index of the maximum of `xs`, first index on ties.
pub fn argmax(xs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in xs.iter().enumerate() {
        match best {
            Some(b) if x <= xs[b] => {}
            _ if x.is_nan() => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Arms STOP when (a) the fused map peaks within `r_stop` of the agent and
/// (b) the live observation shows a goal-token ray closer than
/// `goal_depth`. An all-zero fused map carries no evidence against (a).
pub fn stop_rule(fused: &EgoGrid, obs: &Observation, align: &Alignment, params: &StopParams) -> bool {
    let goal_close = obs
        .depth
        .iter()
        .zip(&obs.semantic)
        .any(|(&d, &s)| align.is_goal(s) && d < params.goal_depth);
    if !goal_close {
        return false;
    }
    match peak_cell(fused) {
        None => true,
        Some((x, y)) => fused.cell_center(x, y).norm() <= params.r_stop,
    }
}

/// The maximal cell of a grid, ties toward the agent then row-major; `None`
/// when the grid is all zero.
pub fn peak_cell(g: &EgoGrid) -> Option<(usize, usize)> {
    let m = g.max();
    if m <= 0.0 {
        return None;
    }
    let mut best: Option<((usize, usize), f64)> = None;
    for y in 0..g.side {
        for x in 0..g.side {
            if g.get(x, y) == m {
                let d = g.cell_center(x, y).norm();
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some(((x, y), d));
                }
            }
        }
    }
    best.map(|(c, _)| c)
}

struct Scored {
    score: FusedScore,
    v_img: Option<EgoGrid>,
}

/// Scores one non-STOP candidate: rollout, imagined value, gate, path
/// sampling of both maps.
#[allow(clippy::too_many_arguments)]
fn score_candidate(
    state: &PlanState<'_>,
    model: &dyn WorldModel,
    cfg: &PlannerConfig,
    cand: &CandidateTrajectory,
    agent: &Pose,
    v_prior: &EgoGrid,
    template: &EgoGrid,
    seed: u64,
) -> Scored {
    let f = &cfg.fusion;
    let req = RolloutRequest {
        context: state.history,
        instruction: state.instruction,
        poses: &cand.poses,
        decode_stride: cfg.decode_stride,
    };
    let rollout = model.rollout(&req, seed);
    let v = value::imagination_value(&rollout, agent, state.align, &cfg.sensor, &cfg.cues, f, template);
    let gated = rollout.sigma_a > f.theta;
    let g = value::gate(&v, rollout.sigma_a, f.theta);
    let img = value::sample_path(&g, agent, &cand.poses, f.gamma);
    let prior = value::sample_path(v_prior, &state.odom, &cand.poses, f.gamma);
    Scored {
        score: FusedScore {
            candidate_id: cand.id,
            base: 0.0,
            img,
            prior,
            fused: 0.0,
            gated,
            sigma_a: rollout.sigma_a,
            imagined: true,
        },
        v_img: Some(g),
    }
}

fn finish(score: &mut FusedScore, base: f64, f: &FusionParams) {
    score.base = base;
    score.fused = base + f.lambda1 * score.img + f.lambda2 * score.prior;
}

/// One Imagine-Score-Fuse-Act step.
pub fn one_step_plan(
    state: &PlanState<'_>,
    model: &dyn WorldModel,
    cfg: &PlannerConfig,
    noise_seed: u64,
    step: usize,
) -> PlanStep {
    let f = &cfg.fusion;
    let template = EgoGrid::default();
    let obs = state.history.last().expect("history holds the live observation");
    let cands = candidates(state.map, &state.odom, &cfg.candidates, &cfg.limits, &cfg.base);
    let enabled = cfg.value_mode == ValueMode::Enabled;

    let v_prior = if enabled {
        value::prior_map(obs, state.align, &template, &cfg.sensor, f.t_prior, value::Column::from_params(f))
    } else {
        template.blank_like()
    };

    let mut scored: Vec<Scored> = cands
        .iter()
        .map(|c| {
            if enabled && !c.is_stop() {
                let seed = derive_seed(noise_seed, step as u64, c.id as u64);
                score_candidate(state, model, cfg, c, &state.odom, &v_prior, &template, seed)
            } else {
                Scored {
                    score: FusedScore {
                        candidate_id: c.id,
                        base: 0.0,
                        img: 0.0,
                        prior: 0.0,
                        fused: 0.0,
                        gated: false,
                        sigma_a: 0.0,
                        imagined: false,
                    },
                    v_img: None,
                }
            }
        })
        .collect();

    let mut v_img = template.blank_like();
    for s in &scored {
        if let Some(g) = &s.v_img {
            v_img.max_with(g);
        }
    }
    if enabled && cfg.shared_value_map {
        for (s, c) in scored.iter_mut().zip(&cands) {
            if s.v_img.is_some() {
                s.score.img = value::sample_path(&v_img, &state.odom, &c.poses, f.gamma);
            }
        }
    }
    let fused_map = v_img.combine(f.lambda1, &v_prior, f.lambda2);
    let stop_armed = stop_rule(&fused_map, obs, state.align, &cfg.stop);

    for (s, c) in scored.iter_mut().zip(&cands) {
        finish(&mut s.score, base_score(c, &cfg.base, stop_armed), f);
    }
    let all_scores: Vec<FusedScore> = scored.into_iter().map(|s| s.score).collect();

    let chosen_idx = if cfg.expansion_depth > 1 && enabled {
        expand(state, model, cfg, &cands, &all_scores, &v_prior, noise_seed, step)
    } else {
        argmax(&all_scores.iter().map(|s| s.fused).collect::<Vec<_>>())
    };

    let chosen = match chosen_idx {
        Some(i) if all_scores[i].fused.is_finite() => cands[i].clone(),
        // defensive STOP: nothing scoreable
        _ => CandidateTrajectory {
            id: cands.len(),
            kind: crate::mapping::CandidateKind::Stop,
            actions: vec![Action::stop()],
            poses: vec![state.odom],
            target_frontier: None,
            path_cost: 0.0,
        },
    };
    PlanStep {
        executed_action: chosen.actions[0],
        stop_issued: chosen.is_stop(),
        chosen,
        all_scores,
        stop_armed,
        maps: StepMaps {
            v_img,
            v_prior,
            fused: fused_map,
        },
    }
}

/// Beam-style multi-layer expansion. A layer-1 STOP that wins outright is
/// kept; otherwise each beam candidate is extended from its end pose on the
/// same map and chains are compared by discounted cumulative fused score.
#[allow(clippy::too_many_arguments)]
fn expand(
    state: &PlanState<'_>,
    model: &dyn WorldModel,
    cfg: &PlannerConfig,
    cands: &[CandidateTrajectory],
    first: &[FusedScore],
    v_prior: &EgoGrid,
    noise_seed: u64,
    step: usize,
) -> Option<usize> {
    let fused: Vec<f64> = first.iter().map(|s| s.fused).collect();
    let best = argmax(&fused)?;
    if cands[best].is_stop() {
        return Some(best);
    }
    let template = EgoGrid::default();
    let discount = cfg.fusion.gamma.powi(cfg.candidates.horizon as i32);
    // (root index, end pose, cumulative score, layer discount)
    let mut order: Vec<usize> = (0..cands.len()).filter(|&i| !cands[i].is_stop() && fused[i].is_finite()).collect();
    order.sort_by(|&a, &b| fused[b].total_cmp(&fused[a]).then(a.cmp(&b)));
    let mut beam: Vec<(usize, Pose, f64, f64)> = order
        .into_iter()
        .take(cfg.beam_width.max(1))
        .map(|i| (i, *cands[i].poses.last().expect("non-empty"), fused[i], discount))
        .collect();
    let mut counter = 0u64;
    for _layer in 1..cfg.expansion_depth {
        let mut next = Vec::new();
        for &(root, end, acc, disc) in &beam {
            let children = candidates(state.map, &end, &cfg.candidates, &cfg.limits, &cfg.base);
            for c in children.iter().filter(|c| !c.is_stop()) {
                counter += 1;
                let seed = derive_seed(noise_seed, step as u64, 1_000_000 + counter);
                let mut s = score_candidate(state, model, cfg, c, &end, v_prior, &template, seed).score;
                finish(&mut s, base_score(c, &cfg.base, false), &cfg.fusion);
                next.push((root, *c.poses.last().expect("non-empty"), acc + disc * s.fused, disc * discount));
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
        next.truncate(cfg.beam_width.max(1));
        beam = next;
    }
    beam.first().map(|b| b.0)
}

/// Seeds pinned per episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSeeds {
    pub motion: u64,
    pub noise: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub motion_noise: MotionNoise,
    /// Noise of the odometry estimate of each executed step.
    pub odom_noise: MotionNoise,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            motion_noise: MotionNoise::default(),
            odom_noise: MotionNoise::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRun {
    pub final_pose: Pose,
    /// Summed executed displacement.
    pub tl: f64,
    pub stopped: bool,
    pub steps: usize,
    pub collisions: usize,
    /// Ground-truth poses, start first.
    pub trajectory: Vec<Pose>,
    /// Chosen candidate id per step.
    pub chosen: Vec<usize>,
    /// Candidate scorings that were gated, and that were imagined.
    pub gated: usize,
    pub imagined: usize,
}

/// One line of the per-step log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub pose: Pose,
    pub odom: Pose,
    pub chosen_id: usize,
    pub action: Action,
    pub scores: Vec<FusedScore>,
    pub stop_armed: bool,
    pub stop_issued: bool,
    pub collision: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogRecord {
    Header {
        episode: Box<Episode>,
        planner: Box<PlannerConfig>,
        model: ModelSpec,
        sim: SimConfig,
        seeds: EpisodeSeeds,
    },
    Step(StepRecord),
    End {
        run: EpisodeRun,
    },
}

/// Hooks for observers of the episode loop (renderers, tests).
pub trait StepObserver {
    fn on_step(&mut self, _step: usize, _obs: &Observation, _map: &OccupancyGrid, _plan: &PlanStep) {}
}

impl StepObserver for () {}

/// Runs `sense -> update map -> plan -> act` until STOP or `max_steps`.
pub fn run_episode(
    episode: &Episode,
    model: &dyn WorldModel,
    cfg: &PlannerConfig,
    sim: &SimConfig,
    seeds: EpisodeSeeds,
    log: Option<&mut dyn Write>,
) -> Result<EpisodeRun, PlannerError> {
    run_episode_observed(episode, model, cfg, sim, seeds, log, &mut ())
}

pub fn run_episode_observed(
    episode: &Episode,
    model: &dyn WorldModel,
    cfg: &PlannerConfig,
    sim: &SimConfig,
    seeds: EpisodeSeeds,
    mut log: Option<&mut dyn Write>,
    observer: &mut dyn StepObserver,
) -> Result<EpisodeRun, PlannerError> {
    cfg.validate()?;
    episode.validate()?;
    let scene = &episode.scene;
    let align = Alignment::new(scene, &episode.instruction);
    if let Some(w) = log.as_deref_mut() {
        let header = LogRecord::Header {
            episode: Box::new(episode.clone()),
            planner: Box::new(cfg.clone()),
            model: model.spec(),
            sim: *sim,
            seeds,
        };
        serde_json::to_writer(&mut *w, &header)?;
        w.write_all(b"\n")?;
    }

    let mut motion_rng = ChaCha8Rng::seed_from_u64(seeds.motion);
    let mut odom_rng = ChaCha8Rng::seed_from_u64(seeds.motion ^ 0x6F64_6F6D);
    let mut gt = episode.start;
    let mut odom = episode.start;
    let reach = cfg.sensor.d_max + 1.0;
    let mut map = OccupancyGrid::centered(cfg.map_resolution, episode.start.position(), reach);
    let mut history: VecDeque<Observation> = VecDeque::with_capacity(cfg.context_len);
    let mut run = EpisodeRun {
        final_pose: gt,
        tl: 0.0,
        stopped: false,
        steps: 0,
        collisions: 0,
        trajectory: vec![gt],
        chosen: Vec::new(),
        gated: 0,
        imagined: 0,
    };

    for step in 0..episode.max_steps {
        let mut obs = scene::sense(scene, &gt, &cfg.sensor)?;
        obs.odom = odom;
        map.update(&obs, &cfg.sensor);
        if history.len() == cfg.context_len {
            history.pop_front();
        }
        history.push_back(obs);
        let hist = history.make_contiguous();
        let state = PlanState {
            map: &map,
            odom,
            history: hist,
            instruction: &episode.instruction,
            align: &align,
        };
        let plan = one_step_plan(&state, model, cfg, seeds.noise, step);
        observer.on_step(step, hist.last().expect("pushed"), &map, &plan);
        run.steps = step + 1;
        run.chosen.push(plan.chosen.id);
        run.gated += plan.all_scores.iter().filter(|s| s.gated).count();
        run.imagined += plan.all_scores.iter().filter(|s| s.imagined).count();

        let mut collision = false;
        if plan.stop_issued {
            run.stopped = true;
        } else {
            let out = scene::step(scene, &gt, &plan.executed_action, &sim.motion_noise, &mut motion_rng);
            let rel = gt.relative(&out.pose);
            let measured = sim.odom_noise.perturb(&Action::new(rel.x, rel.y, rel.theta, 1.0), &mut odom_rng);
            odom = odom.compose(&Pose::new(measured.dx, measured.dy, measured.dtheta));
            gt = out.pose;
            collision = out.collided;
            run.tl += out.displacement;
            run.collisions += usize::from(out.collided);
            run.trajectory.push(gt);
        }

        if let Some(w) = log.as_deref_mut() {
            let rec = LogRecord::Step(StepRecord {
                step,
                pose: gt,
                odom,
                chosen_id: plan.chosen.id,
                action: plan.executed_action,
                scores: plan.all_scores.clone(),
                stop_armed: plan.stop_armed,
                stop_issued: plan.stop_issued,
                collision,
            });
            serde_json::to_writer(&mut *w, &rec)?;
            w.write_all(b"\n")?;
        }
        if run.stopped {
            break;
        }
    }
    run.final_pose = gt;
    if let Some(w) = log {
        serde_json::to_writer(&mut *w, &LogRecord::End { run: run.clone() })?;
        w.write_all(b"\n")?;
    }
    Ok(run)
}

/// Ego distance helper for tests and tools.
pub fn ego_distance(agent: &Pose, p: Vec2) -> f64 {
    agent.inverse_transform_point(p).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::mapping::{CandidateKind, CellState};
    use crate::scene::{sense, Landmark, Scene, Semantic, Wall};
    use crate::world_model::{OracleWorldModel, Rollout};

    fn room_scene() -> Scene {
        let mut s = Scene::empty(12.0, 8.0);
        s.walls.push(Wall::new(Vec2::new(6.0, 0.0), Vec2::new(6.0, 3.0)));
        s.walls.push(Wall::new(Vec2::new(6.0, 4.2), Vec2::new(6.0, 8.0)));
        s.landmarks.push(Landmark {
            label: "tv".into(),
            position: Vec2::new(10.0, 6.0),
            radius: 0.3,
        });
        s.landmarks.push(Landmark {
            label: "chair".into(),
            position: Vec2::new(2.0, 1.0),
            radius: 0.3,
        });
        s
    }

    fn episode(start: Pose, max_steps: usize) -> Episode {
        Episode {
            id: "t".into(),
            scene: room_scene(),
            start,
            instruction: vec!["chair".into(), "tv".into()],
            goal_position: Vec2::new(10.0, 6.0),
            goal_label: "tv".into(),
            success_radius: 3.0,
            max_steps,
        }
    }

    fn no_noise() -> SimConfig {
        SimConfig {
            motion_noise: MotionNoise::NONE,
            odom_noise: MotionNoise::NONE,
        }
    }

    const SEEDS: EpisodeSeeds = EpisodeSeeds { motion: 1, noise: 2 };

    #[test]
    fn argmax_ties_pick_first() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), Some(0));
        assert_eq!(argmax(&[]), None);
    }

    fn obs_with_goal_at(depth: f64) -> Observation {
        let mut semantic = vec![Semantic::Wall; 8];
        semantic[3] = Semantic::Landmark(0);
        let mut d = vec![5.0; 8];
        d[3] = depth;
        Observation {
            depth: d,
            semantic,
            pose_gt: Pose::default(),
            odom: Pose::default(),
        }
    }

    fn align() -> Alignment {
        Alignment::new(&room_scene(), &["chair".into(), "tv".into()])
    }

    #[test]
    fn stop_rule_examples() {
        let mut fused = EgoGrid::default();
        fused.mask_all();
        fused.set(46, 40, 0.9); // 0.9 m ahead
        let p = StopParams::default();
        assert!(stop_rule(&fused, &obs_with_goal_at(1.0), &align(), &p));
        assert!(!stop_rule(&fused, &obs_with_goal_at(5.0), &align(), &p));
        let mut far = EgoGrid::default();
        far.mask_all();
        far.set(70, 40, 0.9);
        assert!(!stop_rule(&far, &obs_with_goal_at(1.0), &align(), &p));
        // never observed the goal token
        let mut o = obs_with_goal_at(1.0);
        o.semantic[3] = Semantic::Wall;
        assert!(!stop_rule(&fused, &o, &align(), &p));
    }

    #[test]
    fn fused_scores_are_linear() {
        let ep = episode(Pose::new(2.0, 4.0, 0.0), 5);
        let model = OracleWorldModel::new(&ep.scene, SensorConfig::default());
        let cfg = PlannerConfig::default();
        let obs = sense(&ep.scene, &ep.start, &cfg.sensor).unwrap();
        let mut map = OccupancyGrid::centered(0.15, ep.start.position(), 13.0);
        map.update(&obs, &cfg.sensor);
        let align = Alignment::new(&ep.scene, &ep.instruction);
        let hist = [obs];
        let state = PlanState {
            map: &map,
            odom: ep.start,
            history: &hist,
            instruction: &ep.instruction,
            align: &align,
        };
        let plan = one_step_plan(&state, &model, &cfg, 7, 0);
        let f = &cfg.fusion;
        for s in &plan.all_scores {
            let expect = s.base + f.lambda1 * s.img + f.lambda2 * s.prior;
            if expect.is_finite() {
                assert!((s.fused - expect).abs() <= 1e-12);
            }
            if s.gated {
                assert_eq!(s.img, 0.0);
            }
        }
        assert_eq!(plan.executed_action, plan.chosen.actions[0]);
        let best = plan.all_scores.iter().map(|s| s.fused).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(plan.all_scores[plan.chosen.id].fused, best);
    }

    #[test]
    fn zero_lambdas_match_base_argmax() {
        let ep = episode(Pose::new(2.0, 4.0, 0.3), 5);
        let model = OracleWorldModel::new(&ep.scene, SensorConfig::default());
        let mut cfg = PlannerConfig::default();
        cfg.fusion.lambda1 = 0.0;
        cfg.fusion.lambda2 = 0.0;
        let obs = sense(&ep.scene, &ep.start, &cfg.sensor).unwrap();
        let mut map = OccupancyGrid::centered(0.15, ep.start.position(), 13.0);
        map.update(&obs, &cfg.sensor);
        let align = Alignment::new(&ep.scene, &ep.instruction);
        let hist = [obs];
        let state = PlanState {
            map: &map,
            odom: ep.start,
            history: &hist,
            instruction: &ep.instruction,
            align: &align,
        };
        let plan = one_step_plan(&state, &model, &cfg, 7, 0);
        let bases: Vec<f64> = plan.all_scores.iter().map(|s| s.base).collect();
        assert_eq!(Some(plan.chosen.id), argmax(&bases));
    }

    #[test]
    fn modes_share_first_step_candidates() {
        let ep = episode(Pose::new(2.0, 4.0, 0.3), 5);
        let model = OracleWorldModel::new(&ep.scene, SensorConfig::default());
        let obs = sense(&ep.scene, &ep.start, &SensorConfig::default()).unwrap();
        let mut map = OccupancyGrid::centered(0.15, ep.start.position(), 13.0);
        map.update(&obs, &SensorConfig::default());
        let align = Alignment::new(&ep.scene, &ep.instruction);
        let hist = [obs];
        let state = PlanState {
            map: &map,
            odom: ep.start,
            history: &hist,
            instruction: &ep.instruction,
            align: &align,
        };
        let plan_with = |l1: f64, l2: f64, mode: ValueMode| {
            let mut cfg = PlannerConfig::default();
            cfg.fusion.lambda1 = l1;
            cfg.fusion.lambda2 = l2;
            cfg.value_mode = mode;
            one_step_plan(&state, &model, &cfg, 7, 0)
        };
        let ids = |p: &PlanStep| p.all_scores.iter().map(|s| s.candidate_id).collect::<Vec<_>>();
        let bases = |p: &PlanStep| p.all_scores.iter().map(|s| s.base.to_bits()).collect::<Vec<_>>();
        let reference = plan_with(1.0, 0.5, ValueMode::Enabled);
        for (l1, l2) in [(0.0, 0.0), (0.0, 0.5), (1.0, 0.0)] {
            let p = plan_with(l1, l2, ValueMode::Enabled);
            assert_eq!(ids(&p), ids(&reference));
            assert_eq!(bases(&p), bases(&reference));
        }
        assert_eq!(ids(&plan_with(1.0, 0.5, ValueMode::Disabled)), ids(&reference));
    }

    /// Always-uncertain stub model.
    struct Hopeless;
    impl WorldModel for Hopeless {
        fn rollout(&self, _req: &RolloutRequest<'_>, _seed: u64) -> Rollout {
            Rollout {
                frames: Vec::new(),
                sigma_a: 1.0,
                raw_uncertainty: 1.0,
            }
        }
    }

    #[test]
    fn all_gated_equals_base_only() {
        let ep = episode(Pose::new(2.0, 4.0, 0.0), 20);
        let mut cfg = PlannerConfig::default();
        cfg.fusion.lambda2 = 0.0;
        cfg.fusion.theta = 0.5;
        let a = run_episode(&ep, &Hopeless, &cfg, &no_noise(), SEEDS, None).unwrap();
        cfg.fusion.lambda1 = 0.0;
        let b = run_episode(&ep, &Hopeless, &cfg, &no_noise(), SEEDS, None).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.gated, a.imagined);
    }

    #[test]
    fn near_goal_episode_stops_quickly() {
        let ep = episode(Pose::new(8.6, 6.0, 0.0), 10);
        let model = OracleWorldModel::new(&ep.scene, SensorConfig::default());
        let run = run_episode(&ep, &model, &PlannerConfig::default(), &no_noise(), SEEDS, None).unwrap();
        assert!(run.stopped);
        assert!(run.steps <= 3, "{}", run.steps);
        assert!(run.final_pose.position().distance(ep.goal_position) <= 3.0);
    }

    #[test]
    fn timeout_without_stop() {
        let ep = episode(Pose::new(1.0, 4.0, std::f64::consts::PI), 2);
        let model = OracleWorldModel::new(&ep.scene, SensorConfig::default());
        let run = run_episode(&ep, &model, &PlannerConfig::default(), &no_noise(), SEEDS, None).unwrap();
        assert!(!run.stopped);
        assert_eq!(run.steps, 2);
    }

    #[test]
    fn logs_are_byte_identical() {
        let ep = episode(Pose::new(2.0, 4.0, 0.0), 12);
        let model = OracleWorldModel::new(&ep.scene, SensorConfig::default());
        let cfg = PlannerConfig::default();
        let sim = SimConfig::default();
        let mut a = Vec::new();
        let mut b = Vec::new();
        run_episode(&ep, &model, &cfg, &sim, SEEDS, Some(&mut a)).unwrap();
        run_episode(&ep, &model, &cfg, &sim, SEEDS, Some(&mut b)).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(matches!(serde_json::from_str(lines[0]).unwrap(), LogRecord::Header { .. }));
        assert!(matches!(serde_json::from_str(lines.last().unwrap()).unwrap(), LogRecord::End { .. }));
        for l in &lines[1..lines.len() - 1] {
            let LogRecord::Step(r) = serde_json::from_str(l).unwrap() else {
                panic!("expected step record");
            };
            // receding horizon: one action per step
            assert_eq!(r.scores.len() <= cfg.candidates.k, true);
        }
    }

    #[test]
    fn ridge_candidate_is_preferred() {
        // Two corridors, the goal landmark at the end of the upper one.
        let mut s = Scene::empty(14.0, 10.0);
        s.walls.push(Wall::new(Vec2::new(3.0, 5.0), Vec2::new(13.0, 5.0)));
        s.walls.push(Wall::new(Vec2::new(3.0, 6.5), Vec2::new(13.0, 6.5)));
        s.walls.push(Wall::new(Vec2::new(3.0, 3.5), Vec2::new(13.0, 3.5)));
        s.landmarks.push(Landmark {
            label: "tv".into(),
            position: Vec2::new(9.0, 5.75),
            radius: 0.3,
        });
        let ins = vec!["tv".to_string()];
        let align = Alignment::new(&s, &ins);
        let model = OracleWorldModel::new(&s, SensorConfig::default());
        let mut cfg = PlannerConfig::default();
        cfg.fusion.lambda2 = 0.0;
        cfg.base = BaseScoreParams {
            w_size: 0.0,
            w_dist: 0.0,
            b_rot: -10.0,
            stop_bonus: 1000.0,
        };
        // Hand-built map: a free box whose east side opens onto both
        // corridors, giving two mirror-image frontiers.
        let odom = Pose::new(2.0, 5.0, 0.0);
        let mut map = OccupancyGrid::centered(0.15, odom.position(), 13.0);
        for y in 0..map.height {
            for x in 0..map.width {
                let p = map.cell_center((x, y));
                let in_box = (0.5..=3.01).contains(&p.x) && (3.6..=6.4).contains(&p.y);
                let mouth = p.x > 3.01 && p.x < 4.0 && ((5.1..6.4).contains(&p.y) || (3.6..4.9).contains(&p.y));
                if in_box {
                    map.set_state((x, y), CellState::Free);
                } else if !mouth {
                    map.set_state((x, y), CellState::Occupied);
                }
            }
        }
        let obs = sense(&s, &odom, &cfg.sensor).unwrap();
        let hist = [obs];
        let state = PlanState {
            map: &map,
            odom,
            history: &hist,
            instruction: &ins,
            align: &align,
        };
        let plan = one_step_plan(&state, &model, &cfg, 3, 0);
        assert_eq!(plan.chosen.kind, CandidateKind::Frontier);
        let end = plan.chosen.poses.last().unwrap();
        let scores: Vec<_> = plan.all_scores.iter().map(|s| (s.candidate_id, s.img)).collect();
        assert!(end.y > 5.0, "chose {end:?}; scores {scores:?}");
        cfg.fusion.lambda1 = 0.0;
        let plain = one_step_plan(&state, &model, &cfg, 3, 0);
        assert!(plain.chosen.poses.last().unwrap().y < 5.0);
    }
}
