use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ModelKind, SuiteConfig, SuiteSpec};
use super::metrics::{episode_result, Aggregates, EpisodeResult, InvalidReason};
use super::HarnessError;
use crate::mapping::{candidates, OccupancyGrid};
use crate::planner::{run_episode, EpisodeSeeds};
use crate::scene::{generate_episode, generate_scene, sense, Episode, EpisodeDocument, GeodesicField, SCHEMA_VERSION};
use crate::world_model::{
    calibrate_sigma, derive_seed, CalibrationTable, NoisyOracle, OracleWorldModel, RolloutRequest, WorldModel,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Episode document path relative to the suite directory.
    pub file: String,
    pub scene_seed: u64,
    pub episode_seed: u64,
    pub motion_seed: u64,
    pub noise_seed: u64,
}

impl ManifestEntry {
    pub fn seeds(&self) -> EpisodeSeeds {
        EpisodeSeeds {
            motion: self.motion_seed,
            noise: self.noise_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub name: String,
    pub seed: u64,
    pub spec: SuiteSpec,
    pub episodes: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub manifest: Manifest,
    pub episodes: Vec<Episode>,
}

/// Generates `n` episodes, each in its own scene. Scene or episode
/// generation failures are retried with fresh derived seeds.
pub fn generate_suite(spec: &SuiteSpec, seed: u64, n: usize) -> Result<Suite, HarnessError> {
    if n == 0 {
        return Err(HarnessError::EmptySuite);
    }
    let mut entries = Vec::with_capacity(n);
    let mut episodes = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("ep_{i:04}");
        let mut made = None;
        for attempt in 0..spec.max_attempts.max(1) as u64 {
            let scene_seed = derive_seed(seed, 1 + 16 * attempt, i as u64);
            let episode_seed = derive_seed(seed, 2 + 16 * attempt, i as u64);
            let Ok(scene) = generate_scene(&spec.generator, scene_seed) else {
                continue;
            };
            if let Ok(ep) = generate_episode(&scene, &spec.episodes, episode_seed, &id) {
                made = Some((ep, scene_seed, episode_seed));
                break;
            }
        }
        let (ep, scene_seed, episode_seed) =
            made.ok_or_else(|| HarnessError::Generation(format!("episode {id}: no valid scene after retries")))?;
        entries.push(ManifestEntry {
            file: format!("episodes/{id}.json"),
            id,
            scene_seed,
            episode_seed,
            motion_seed: derive_seed(seed, 3, i as u64),
            noise_seed: derive_seed(seed, 4, i as u64),
        });
        episodes.push(ep);
    }
    Ok(Suite {
        manifest: Manifest {
            version: SCHEMA_VERSION,
            name: spec.name.clone(),
            seed,
            spec: spec.clone(),
            episodes: entries,
        },
        episodes,
    })
}

pub fn write_suite(suite: &Suite, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir.join("episodes"))?;
    for (entry, ep) in suite.manifest.episodes.iter().zip(&suite.episodes) {
        let doc = EpisodeDocument::new(ep.clone());
        fs::write(dir.join(&entry.file), serde_json::to_string_pretty(&doc)?)?;
    }
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&suite.manifest)?)?;
    Ok(())
}

pub fn load_suite(dir: &Path) -> Result<Suite, HarnessError> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    if manifest.version != SCHEMA_VERSION {
        return Err(HarnessError::Manifest(format!("unsupported version {}", manifest.version)));
    }
    if manifest.episodes.is_empty() {
        return Err(HarnessError::EmptySuite);
    }
    let mut episodes = Vec::with_capacity(manifest.episodes.len());
    for e in &manifest.episodes {
        let text = fs::read_to_string(dir.join(&e.file))?;
        let ep = EpisodeDocument::from_json(&text)?;
        if ep.id != e.id {
            return Err(HarnessError::Manifest(format!("{} holds episode {}", e.file, ep.id)));
        }
        episodes.push(ep);
    }
    Ok(Suite { manifest, episodes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvalidEpisode {
    pub id: String,
    pub reason: InvalidReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub rows: Vec<EpisodeResult>,
    pub invalid: Vec<InvalidEpisode>,
    pub aggregates: Aggregates,
    pub config_hash: String,
    pub provenance: String,
}

impl SuiteReport {
    /// Digest of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("report serializes")))
    }

    pub fn verify(&self) -> Result<(), HarnessError> {
        if Aggregates::from_rows(&self.rows) != self.aggregates {
            return Err(HarnessError::AggregateMismatch);
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let r: SuiteReport = serde_json::from_str(&fs::read_to_string(path)?)?;
        r.verify()?;
        Ok(r)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub parallel: bool,
    /// Write one JSONL log per episode here.
    pub log_dir: Option<PathBuf>,
}

/// Percentile table from rollouts of every candidate at the start pose of
/// the first `cfg.model.calibration_episodes` episodes.
pub fn calibrate(suite: &Suite, cfg: &SuiteConfig) -> Result<Option<CalibrationTable>, HarnessError> {
    let n = cfg.model.calibration_episodes.min(suite.episodes.len());
    let pairs: Vec<(&Episode, u64)> = suite
        .episodes
        .iter()
        .zip(&suite.manifest.episodes)
        .take(n)
        .map(|(ep, e)| (ep, e.noise_seed))
        .collect();
    calibrate_episodes(&pairs, cfg)
}

/// Calibration table from the start-pose candidate rollouts of each
/// `(episode, noise_seed)` pair. `None` unless the model is noisy.
pub fn calibrate_episodes(episodes: &[(&Episode, u64)], cfg: &SuiteConfig) -> Result<Option<CalibrationTable>, HarnessError> {
    if cfg.model.kind != ModelKind::Noisy || episodes.is_empty() {
        return Ok(None);
    }
    let p = &cfg.planner;
    let mut tables = Vec::with_capacity(episodes.len());
    for &(ep, noise_seed) in episodes {
        let model = NoisyOracle::new(&ep.scene, p.sensor, cfg.model.noise);
        let obs = sense(&ep.scene, &ep.start, &p.sensor)?;
        let mut map = OccupancyGrid::centered(p.map_resolution, ep.start.position(), p.sensor.d_max + 1.0);
        map.update(&obs, &p.sensor);
        let cands = candidates(&map, &ep.start, &p.candidates, &p.limits, &p.base);
        let ctx = [obs];
        let reqs: Vec<(RolloutRequest<'_>, u64)> = cands
            .iter()
            .filter(|c| !c.is_stop())
            .map(|c| {
                (
                    RolloutRequest {
                        context: &ctx,
                        instruction: &ep.instruction,
                        poses: &c.poses,
                        decode_stride: p.decode_stride,
                    },
                    derive_seed(noise_seed, u64::MAX, c.id as u64),
                )
            })
            .collect();
        if reqs.is_empty() {
            continue;
        }
        tables.push(calibrate_sigma(&model, &reqs).map_err(|e| HarnessError::Generation(e.to_string()))?);
    }
    if tables.is_empty() {
        return Ok(None);
    }
    Ok(Some(CalibrationTable::merge(&tables).map_err(|e| HarnessError::Generation(e.to_string()))?))
}

fn run_one(
    ep: &Episode,
    entry: &ManifestEntry,
    cfg: &SuiteConfig,
    table: Option<&CalibrationTable>,
    log_dir: Option<&Path>,
) -> Result<EpisodeResult, InvalidReason> {
    let fail = |e: &dyn std::fmt::Display| InvalidReason::Failed(e.to_string());
    match log_dir {
        Some(dir) => {
            let f = fs::File::create(dir.join(format!("{}.jsonl", ep.id))).map_err(|e| fail(&e))?;
            let mut w = BufWriter::new(f);
            let r = run_scored_episode(ep, entry.seeds(), cfg, table, Some(&mut w));
            std::io::Write::flush(&mut w).map_err(|e| fail(&e))?;
            r
        }
        None => run_scored_episode(ep, entry.seeds(), cfg, table, None),
    }
}

/// Runs one episode under `cfg` and scores it against the ground-truth
/// geodesic. `table` calibrates the noisy model's uncertainty.
pub fn run_scored_episode(
    ep: &Episode,
    seeds: EpisodeSeeds,
    cfg: &SuiteConfig,
    table: Option<&CalibrationTable>,
    log: Option<&mut dyn std::io::Write>,
) -> Result<EpisodeResult, InvalidReason> {
    let field = GeodesicField::new(&ep.scene, ep.goal_position);
    if !field.distance(ep.start.position()).is_finite() {
        return Err(InvalidReason::DisconnectedGoal);
    }
    let model: Box<dyn WorldModel + '_> = match cfg.model.kind {
        ModelKind::Oracle => Box::new(OracleWorldModel::new(&ep.scene, cfg.planner.sensor)),
        ModelKind::Noisy => {
            let m = NoisyOracle::new(&ep.scene, cfg.planner.sensor, cfg.model.noise);
            Box::new(match table {
                Some(t) => m.with_calibration(t.clone()),
                None => m,
            })
        }
    };
    let run = run_episode(ep, model.as_ref(), &cfg.planner, &cfg.sim, seeds, log)
        .map_err(|e| InvalidReason::Failed(e.to_string()))?;
    episode_result(ep, &field, &run, seeds.motion)
}

pub fn run_suite(suite: &Suite, cfg: &SuiteConfig, opts: &RunOptions) -> Result<SuiteReport, HarnessError> {
    if suite.episodes.is_empty() {
        return Err(HarnessError::EmptySuite);
    }
    cfg.planner.validate()?;
    if let Some(dir) = &opts.log_dir {
        fs::create_dir_all(dir)?;
    }
    let table = calibrate(suite, cfg)?;
    let log_dir = opts.log_dir.as_deref();
    let job = |(ep, entry): (&Episode, &ManifestEntry)| run_one(ep, entry, cfg, table.as_ref(), log_dir);
    let pairs: Vec<(&Episode, &ManifestEntry)> = suite.episodes.iter().zip(&suite.manifest.episodes).collect();
    let results: Vec<Result<EpisodeResult, InvalidReason>> = if opts.parallel {
        pairs.into_par_iter().map(job).collect()
    } else {
        pairs.into_iter().map(job).collect()
    };

    let mut rows = Vec::new();
    let mut invalid = Vec::new();
    for (r, e) in results.into_iter().zip(&suite.manifest.episodes) {
        match r {
            Ok(row) => rows.push(row),
            Err(reason) => invalid.push(InvalidEpisode { id: e.id.clone(), reason }),
        }
    }
    let config_hash = cfg.hash();
    let manifest_hash = hex::encode(Sha256::digest(serde_json::to_vec(&suite.manifest)?));
    Ok(SuiteReport {
        suite: suite.manifest.name.clone(),
        aggregates: Aggregates::from_rows(&rows),
        rows,
        invalid,
        provenance: format!(
            "navfuse {} suite={} manifest={} config={}",
            env!("CARGO_PKG_VERSION"),
            suite.manifest.name,
            &manifest_hash[..12],
            &config_hash[..12]
        ),
        config_hash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> SuiteSpec {
        let mut s = SuiteSpec::standard();
        s.episodes.max_steps = 8;
        s
    }

    #[test]
    fn generation_is_deterministic_and_round_trips() {
        let a = generate_suite(&tiny_spec(), 5, 3).unwrap();
        let b = generate_suite(&tiny_spec(), 5, 3).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        write_suite(&a, dir.path()).unwrap();
        assert_eq!(load_suite(dir.path()).unwrap(), a);
        assert!(matches!(generate_suite(&tiny_spec(), 5, 0), Err(HarnessError::EmptySuite)));
    }

    #[test]
    fn report_verifies_and_detects_tampering() {
        let suite = generate_suite(&tiny_spec(), 9, 2).unwrap();
        let mut cfg = SuiteConfig::reference();
        cfg.model.calibration_episodes = 2;
        let r = run_suite(&suite, &cfg, &RunOptions::default()).unwrap();
        assert_eq!(r.rows.len() + r.invalid.len(), 2);
        r.verify().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        r.save(&path).unwrap();
        assert_eq!(SuiteReport::load(&path).unwrap().hash(), r.hash());
        let mut bad = r.clone();
        bad.aggregates.sr += 0.5;
        assert!(matches!(bad.verify(), Err(HarnessError::AggregateMismatch)));
        let again = run_suite(&suite, &cfg, &RunOptions::default()).unwrap();
        assert_eq!(again.hash(), r.hash());
    }
}
