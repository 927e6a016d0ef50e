//! Deterministic synthetic-scenario generator: scripted agents with linear
//! motion, occlusion events with per-frame severity profiles, contaminated
//! embeddings during partial occlusion, and ground truth emitted alongside
//! the observations.
//!
//! Randomness comes from a single ChaCha8 stream seeded by the scenario, with
//! a fixed draw order (frames ascending, agents in listed order), so
//! generation is bit-identical across runs and platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::appearance::normalize;
use crate::error::{Error, Result};
use crate::metrics::{EvalFrame, GtBox};
use crate::types::{BoundingBox, Detection, FrameObservations};

/// Velocity override taking effect at a given frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VelocityChange {
    pub frame: u64,
    pub vx: f64,
    pub vy: f64,
}

/// One occlusion episode: per-frame severities starting at `start`, with an
/// optional occluder whose appearance contaminates the emitted embeddings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OcclusionEvent {
    pub start: u64,
    pub severities: Vec<f64>,
    #[serde(default)]
    pub occluder: Option<u64>,
}

impl OcclusionEvent {
    fn end(&self) -> u64 {
        self.start + self.severities.len() as u64 - 1
    }
}

/// A scripted identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentSpec {
    pub identity: u64,
    pub initial_box: BoundingBox,
    pub velocity: (f64, f64),
    #[serde(default)]
    pub velocity_changes: Vec<VelocityChange>,
    /// The identity's true appearance direction; normalized at validation.
    pub anchor: Vec<f64>,
    #[serde(default)]
    pub events: Vec<OcclusionEvent>,
    #[serde(default = "default_first_frame")]
    pub first_frame: u64,
    /// Inclusive; defaults to the scenario duration.
    #[serde(default)]
    pub last_frame: Option<u64>,
}

fn default_first_frame() -> u64 {
    1
}

/// Observation noise model. During partial occlusion the emitted embedding is
/// `v * anchor + (1 - v) * occluder_anchor`, and detections vanish entirely
/// once visibility drops below `drop_threshold`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Std of the additive center jitter, in pixels. Draws are clamped to
    /// six sigmas so emitted boxes never stray further than that.
    #[serde(default)]
    pub box_jitter_std: f64,
    /// Std of per-component additive embedding noise.
    #[serde(default)]
    pub embedding_noise_std: f64,
    /// Std of additive occlusion-score noise (degradation knob); scores stay
    /// clamped to [0,1].
    #[serde(default)]
    pub score_noise_std: f64,
    /// Visibility below this emits no detection and no ground-truth row.
    #[serde(default = "default_drop_threshold")]
    pub drop_threshold: f64,
}

fn default_drop_threshold() -> f64 {
    0.1
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            box_jitter_std: 0.0,
            embedding_noise_std: 0.0,
            score_noise_std: 0.0,
            drop_threshold: default_drop_threshold(),
        }
    }
}

/// A complete simulation script.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub duration: u64,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub agents: Vec<AgentSpec>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.duration < 1 {
            return Err(Error::invalid("scenario duration must be >= 1"));
        }
        let n = &self.noise;
        if n.box_jitter_std < 0.0 || n.embedding_noise_std < 0.0 || n.score_noise_std < 0.0 {
            return Err(Error::invalid("noise stds must be >= 0"));
        }
        if !(0.0..=1.0).contains(&n.drop_threshold) {
            return Err(Error::invalid("drop threshold outside [0,1]"));
        }
        let mut ids: Vec<u64> = self.agents.iter().map(|a| a.identity).collect();
        ids.sort_unstable();
        let unique = {
            let mut v = ids.clone();
            v.dedup();
            v.len()
        };
        if unique != self.agents.len() {
            return Err(Error::invalid("agent identities must be unique"));
        }
        let dim = self.agents.first().map(|a| a.anchor.len()).unwrap_or(0);
        for a in &self.agents {
            if a.anchor.len() != dim {
                return Err(Error::invalid("all anchors must share one dimension"));
            }
            normalize(&a.anchor)
                .map_err(|_| Error::invalid(format!("agent {} anchor is zero", a.identity)))?;
            BoundingBox::new(
                a.initial_box.left,
                a.initial_box.top,
                a.initial_box.right,
                a.initial_box.bottom,
            )?;
            if a.first_frame < 1 {
                return Err(Error::invalid("first_frame must be >= 1"));
            }
            let last = a.last_frame.unwrap_or(self.duration);
            if last > self.duration || last < a.first_frame {
                return Err(Error::invalid(format!(
                    "agent {} active range [{}, {last}] invalid for duration {}",
                    a.identity, a.first_frame, self.duration
                )));
            }
            let mut sorted = a.events.clone();
            sorted.sort_by_key(|e| e.start);
            for e in &sorted {
                if e.severities.is_empty() {
                    return Err(Error::invalid("occlusion event with empty profile"));
                }
                if e.severities.iter().any(|s| !(0.0..=1.0).contains(s)) {
                    return Err(Error::invalid("severity outside [0,1]"));
                }
                if let Some(occ) = e.occluder {
                    if occ == a.identity || !ids.binary_search(&occ).is_ok() {
                        return Err(Error::invalid(format!(
                            "agent {} event names unknown occluder {occ}",
                            a.identity
                        )));
                    }
                }
            }
            for w in sorted.windows(2) {
                if w[1].start <= w[0].end() {
                    return Err(Error::invalid(format!(
                        "agent {} has overlapping occlusion events",
                        a.identity
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }
}

/// Box of an agent at a frame, integrating velocity changes.
fn agent_box(agent: &AgentSpec, frame: u64) -> BoundingBox {
    let (mut x, mut y) = (0.0, 0.0);
    let (mut vx, mut vy) = agent.velocity;
    for f in agent.first_frame..frame {
        for ch in &agent.velocity_changes {
            // A change at frame k alters the motion from k-1 to k.
            if ch.frame == f + 1 {
                vx = ch.vx;
                vy = ch.vy;
            }
        }
        x += vx;
        y += vy;
    }
    agent.initial_box.translated(x, y)
}

fn severity_at(agent: &AgentSpec, frame: u64) -> (f64, Option<u64>) {
    for e in &agent.events {
        if frame >= e.start && frame <= e.end() {
            return (e.severities[(frame - e.start) as usize], e.occluder);
        }
    }
    (0.0, None)
}

/// Runs the script: per frame, the emitted observations and the matching
/// ground truth. Deterministic under the scenario seed.
pub fn generate(scenario: &Scenario) -> Result<(Vec<FrameObservations>, Vec<EvalFrame>)> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let noise = &scenario.noise;
    let jitter = gaussian(noise.box_jitter_std)?;
    let emb_noise = gaussian(noise.embedding_noise_std)?;
    let score_noise = gaussian(noise.score_noise_std)?;
    let clamp6 = 6.0 * noise.box_jitter_std;

    let anchors: std::collections::BTreeMap<u64, Vec<f64>> = scenario
        .agents
        .iter()
        .map(|a| (a.identity, normalize(&a.anchor).expect("validated anchor")))
        .collect();

    let mut observations = Vec::with_capacity(scenario.duration as usize);
    let mut ground_truth = Vec::with_capacity(scenario.duration as usize);

    for frame in 1..=scenario.duration {
        let mut dets = Vec::new();
        let mut gts = Vec::new();
        for agent in &scenario.agents {
            let last = agent.last_frame.unwrap_or(scenario.duration);
            if frame < agent.first_frame || frame > last {
                continue;
            }
            let bbox = agent_box(agent, frame);
            let (severity, occluder) = severity_at(agent, frame);
            let visibility = 1.0 - severity;
            if visibility < noise.drop_threshold {
                continue; // full occlusion: nothing emitted, nothing annotated
            }
            gts.push(GtBox {
                identity: agent.identity,
                bbox,
                visibility,
            });

            let dx = draw_clamped(&mut rng, &jitter, clamp6);
            let dy = draw_clamped(&mut rng, &jitter, clamp6);
            let det_box = bbox.translated(dx, dy);

            let anchor = &anchors[&agent.identity];
            let mut emb: Vec<f64> = match occluder.and_then(|id| anchors.get(&id)) {
                Some(occ_anchor) if severity > 0.0 => anchor
                    .iter()
                    .zip(occ_anchor)
                    .map(|(a, o)| visibility * a + (1.0 - visibility) * o)
                    .collect(),
                _ => anchor.clone(),
            };
            if let Some(n) = &emb_noise {
                for c in emb.iter_mut() {
                    *c += n.sample(&mut rng);
                }
            }
            let emb = normalize(&emb)
                .map_err(|_| Error::Numerical("embedding noise annihilated a blend".into()))?;

            let mut score = visibility;
            if let Some(n) = &score_noise {
                score = (score + n.sample(&mut rng)).clamp(0.0, 1.0);
            }

            dets.push(Detection::new(frame, det_box, 1.0, emb, score)?);
        }
        observations.push(FrameObservations::new(frame, dets)?);
        ground_truth.push(EvalFrame::new(frame, gts, Vec::new())?);
    }
    Ok((observations, ground_truth))
}

fn gaussian(std: f64) -> Result<Option<Normal<f64>>> {
    if std == 0.0 {
        Ok(None)
    } else {
        Ok(Some(Normal::new(0.0, std).map_err(|e| {
            Error::invalid(format!("bad noise std: {e}"))
        })?))
    }
}

fn draw_clamped(rng: &mut ChaCha8Rng, dist: &Option<Normal<f64>>, limit: f64) -> f64 {
    match dist {
        None => 0.0,
        Some(d) => d.sample(rng).clamp(-limit, limit),
    }
}

/// The canonical two-agent crossing used by the end-to-end gauntlet. Agent 1
/// trails agent 2 under a long shallow partial occlusion that drags its
/// short-term appearance toward the occluder, then goes fully dark for
/// exactly 8 frames while changing course, and reappears clean. Frozen seed
/// and zero noise keep it bit-reproducible.
pub fn adversarial_crossing() -> Scenario {
    let omega: f64 = 150.0_f64.to_radians();
    let anchor_a = vec![1.0, 0.0, 0.0, 0.0];
    let anchor_b = vec![omega.cos(), omega.sin(), 0.0, 0.0];

    let mut severities = vec![0.3, 0.45];
    severities.extend(std::iter::repeat_n(0.52, 47));

    let mut crossing = vec![0.65, 0.8];
    crossing.extend(std::iter::repeat_n(0.9, 8));
    crossing.extend([0.08, 0.05, 0.0, 0.0, 0.0]);
    debug_assert_eq!(crossing.len(), 15);

    Scenario {
        seed: 20240,
        duration: 80,
        noise: NoiseSpec {
            box_jitter_std: 0.0,
            embedding_noise_std: 0.0,
            score_noise_std: 0.0,
            drop_threshold: 0.12,
        },
        agents: vec![
            AgentSpec {
                identity: 1,
                initial_box: BoundingBox {
                    left: 80.0,
                    top: 260.0,
                    right: 120.0,
                    bottom: 340.0,
                },
                velocity: (3.0, 0.0),
                velocity_changes: vec![VelocityChange {
                    frame: 57,
                    vx: 3.0,
                    vy: 3.5,
                }],
                anchor: anchor_a,
                events: vec![
                    OcclusionEvent {
                        start: 6,
                        severities,
                        occluder: Some(2),
                    },
                    OcclusionEvent {
                        start: 55,
                        severities: crossing,
                        occluder: Some(2),
                    },
                ],
                first_frame: 1,
                last_frame: None,
            },
            AgentSpec {
                identity: 2,
                initial_box: BoundingBox {
                    left: 86.0,
                    top: 252.0,
                    right: 134.0,
                    bottom: 340.0,
                },
                velocity: (3.0, 0.0),
                velocity_changes: Vec::new(),
                anchor: anchor_b,
                events: Vec::new(),
                first_frame: 1,
                last_frame: None,
            },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::appearance::cosine_distance;

    fn linear_agent(identity: u64) -> AgentSpec {
        AgentSpec {
            identity,
            initial_box: BoundingBox {
                left: 50.0,
                top: 100.0,
                right: 90.0,
                bottom: 180.0,
            },
            velocity: (4.0, 1.0),
            velocity_changes: Vec::new(),
            anchor: vec![1.0, 0.0, 0.0],
            events: Vec::new(),
            first_frame: 1,
            last_frame: None,
        }
    }

    fn plain_scenario() -> Scenario {
        Scenario {
            seed: 9,
            duration: 30,
            noise: NoiseSpec::default(),
            agents: vec![linear_agent(1)],
        }
    }

    #[test]
    fn noiseless_agent_follows_exact_path() {
        let (obs, gt) = generate(&plain_scenario()).unwrap();
        assert_eq!(obs.len(), 30);
        for (i, fo) in obs.iter().enumerate() {
            let f = (i + 1) as f64;
            assert_eq!(fo.detections.len(), 1);
            let d = &fo.detections[0];
            assert_eq!(d.bbox.left, 50.0 + 4.0 * (f - 1.0));
            assert_eq!(d.bbox.top, 100.0 + (f - 1.0));
            assert_eq!(d.occlusion_score, 1.0);
            assert_eq!(gt[i].gt[0].bbox, d.bbox);
        }
    }

    #[test]
    fn full_occlusion_emits_nothing() {
        let mut sc = plain_scenario();
        sc.agents[0].events = vec![OcclusionEvent {
            start: 20,
            severities: vec![1.0; 10],
            occluder: None,
        }];
        let (obs, gt) = generate(&sc).unwrap();
        for f in 20..30u64 {
            assert!(obs[(f - 1) as usize].detections.is_empty(), "frame {f}");
            assert!(gt[(f - 1) as usize].gt.is_empty(), "frame {f}");
        }
        assert_eq!(obs[18].detections.len(), 1);
    }

    #[test]
    fn contaminated_embeddings_drift_from_anchor() {
        let mut sc = plain_scenario();
        sc.agents.push(AgentSpec {
            identity: 2,
            anchor: vec![0.0, 1.0, 0.0],
            ..linear_agent(2)
        });
        sc.agents[0].events = vec![OcclusionEvent {
            start: 10,
            severities: vec![0.6; 5],
            occluder: Some(2),
        }];
        let (obs, _) = generate(&sc).unwrap();
        let clean = &obs[0].detections[0].embedding;
        let contaminated = &obs[10].detections[0].embedding;
        let anchor = vec![1.0, 0.0, 0.0];
        let d_clean = cosine_distance(clean, &anchor).unwrap();
        let d_cont = cosine_distance(contaminated, &anchor).unwrap();
        assert!(d_cont > d_clean);
        // Blend is analytic: 0.4*a + 0.6*o.
        let expected = cosine_distance(&[0.4, 0.6, 0.0], &anchor).unwrap();
        assert!((d_cont - expected).abs() < 1e-12);
        // Scores mirror ground-truth visibility exactly.
        assert_eq!(obs[10].detections[0].occlusion_score, 0.4);
    }

    #[test]
    fn generation_is_deterministic() {
        let mut sc = plain_scenario();
        sc.noise.box_jitter_std = 1.5;
        sc.noise.embedding_noise_std = 0.05;
        let (a_obs, _) = generate(&sc).unwrap();
        let (b_obs, _) = generate(&sc).unwrap();
        for (a, b) in a_obs.iter().zip(&b_obs) {
            assert_eq!(a.detections.len(), b.detections.len());
            for (x, y) in a.detections.iter().zip(&b.detections) {
                assert_eq!(x.bbox, y.bbox);
                assert_eq!(x.embedding, y.embedding);
            }
        }
    }

    #[test]
    fn jitter_never_exceeds_six_sigma() {
        let mut sc = plain_scenario();
        sc.duration = 300;
        sc.noise.box_jitter_std = 2.0;
        let (obs, gt) = generate(&sc).unwrap();
        let bound = 6.0 * 2.0 + 1e-12;
        for (fo, ef) in obs.iter().zip(&gt) {
            let d = &fo.detections[0].bbox;
            let g = &ef.gt[0].bbox;
            for (a, b) in [
                (d.left, g.left),
                (d.top, g.top),
                (d.right, g.right),
                (d.bottom, g.bottom),
            ] {
                assert!((a - b).abs() <= bound);
            }
        }
    }

    #[test]
    fn validation_rejects_malformed_scenarios() {
        let mut sc = plain_scenario();
        sc.duration = 0;
        assert!(generate(&sc).is_err());

        let mut sc = plain_scenario();
        sc.agents.push(linear_agent(1)); // duplicate identity
        assert!(generate(&sc).is_err());

        let mut sc = plain_scenario();
        sc.agents[0].events = vec![
            OcclusionEvent {
                start: 5,
                severities: vec![0.5; 10],
                occluder: None,
            },
            OcclusionEvent {
                start: 8,
                severities: vec![0.5; 3],
                occluder: None,
            },
        ];
        assert!(generate(&sc).is_err());

        let mut sc = plain_scenario();
        sc.agents[0].events = vec![OcclusionEvent {
            start: 5,
            severities: vec![1.5],
            occluder: None,
        }];
        assert!(generate(&sc).is_err());

        let mut sc = plain_scenario();
        sc.agents[0].events = vec![OcclusionEvent {
            start: 5,
            severities: vec![0.5],
            occluder: Some(99),
        }];
        assert!(generate(&sc).is_err());
    }

    #[test]
    fn adversarial_crossing_pins_its_shape() {
        let sc = adversarial_crossing();
        sc.validate().unwrap();
        let (obs, gt) = generate(&sc).unwrap();
        // Two identities overall.
        let mut ids: Vec<u64> = gt.iter().flat_map(|f| f.gt.iter().map(|g| g.identity)).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids, vec![1, 2]);
        // Agent 1 emits nothing in exactly 8 frames, and observation counts
        // agree with the ground truth everywhere.
        let missing_a = (1..=sc.duration)
            .filter(|f| {
                !gt[(*f - 1) as usize]
                    .gt
                    .iter()
                    .any(|g| g.identity == 1)
            })
            .count();
        assert_eq!(missing_a, 8);
        for (fo, ef) in obs.iter().zip(&gt) {
            assert_eq!(fo.detections.len(), ef.gt.len());
        }
        // The crossing event spans 15 frames.
        assert_eq!(sc.agents[0].events[1].severities.len(), 15);
    }

    #[test]
    fn toml_round_trip() {
        let sc = adversarial_crossing();
        let text = sc.to_toml_string().unwrap();
        let back = Scenario::from_toml_str(&text).unwrap();
        let (a, _) = generate(&sc).unwrap();
        let (b, _) = generate(&back).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.detections.len(), y.detections.len());
            for (dx, dy) in x.detections.iter().zip(&y.detections) {
                assert_eq!(dx.bbox, dy.bbox);
                assert_eq!(dx.embedding, dy.embedding);
                assert_eq!(dx.occlusion_score, dy.occlusion_score);
            }
        }
    }
}
