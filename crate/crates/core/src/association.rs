//! Two-stage track-detection association and track lifecycle management.
//!
//! Stage one matches every live track against the frame's detections under a
//! fused cost: cosine distance over SHORT-term embeddings, gate-normalized
//! Mahalanobis distance, and predicted-box IOU. Stage two retries the
//! leftovers with the LONG-term embedding alone (Mahalanobis acting purely as
//! a feasibility gate), which is what re-associates a track that went dark
//! under full occlusion and reappeared with its clean appearance.

use crate::appearance::{self, UpdateParams};
use crate::assignment::{solve_assignment, CostMatrix};
use crate::error::{Error, Result};
use crate::motion::{gate, KalmanFilter, Measurement, CHI2_GATE_95_4DOF};
use crate::types::{
    BoundingBox, Detection, EmbeddingPair, FrameObservations, Track, TrackStatus,
};

/// Which track embedding stage two compares against detections. `Short` is an
/// ablation that collapses the dual-embedding design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage2Embedding {
    Long,
    Short,
}

/// All association tunables.
#[derive(Debug, Clone)]
pub struct AssociationParams {
    /// Appearance-vs-geometry weight in the stage-one fusion.
    pub gamma: f64,
    /// Cosine-vs-Mahalanobis weight inside the appearance term.
    pub lambda: f64,
    /// Maximum acceptable stage-one fused cost.
    pub stage1_threshold: f64,
    /// Maximum acceptable stage-two cost.
    pub stage2_cos_threshold: f64,
    /// Squared-Mahalanobis feasibility gate for both stages.
    pub chi2_gate: f64,
    /// Frames an unmatched track survives before retirement.
    pub keep_alive: u32,
    /// Consecutive matched frames (including birth) before a new track is
    /// confirmed. 1 disables the probation.
    pub tentative_confirm: u32,
    /// Embedding used by stage two.
    pub stage2_embedding: Stage2Embedding,
    /// Optional weight mixing normalized Mahalanobis into the stage-two cost;
    /// 0 keeps the gate-only reading.
    pub stage2_motion_weight: f64,
    /// Embedding update rules.
    pub update: UpdateParams,
}

impl Default for AssociationParams {
    fn default() -> Self {
        Self {
            gamma: 0.8,
            lambda: 0.9,
            stage1_threshold: 0.7,
            stage2_cos_threshold: 0.3,
            chi2_gate: CHI2_GATE_95_4DOF,
            keep_alive: 30,
            tentative_confirm: 2,
            stage2_embedding: Stage2Embedding::Long,
            stage2_motion_weight: 0.0,
            update: UpdateParams::default(),
        }
    }
}

impl AssociationParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma", self.gamma), ("lambda", self.lambda)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0,1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.stage2_motion_weight) {
            return Err(Error::Config(format!(
                "stage2_motion_weight = {} outside [0,1]",
                self.stage2_motion_weight
            )));
        }
        if self.stage1_threshold < 0.0 || self.stage2_cos_threshold < 0.0 {
            return Err(Error::Config("stage thresholds must be >= 0".into()));
        }
        if self.chi2_gate <= 0.0 {
            return Err(Error::Config("chi2 gate must be positive".into()));
        }
        if self.tentative_confirm == 0 {
            return Err(Error::Config(
                "tentative_confirm must be >= 1 (1 disables probation)".into(),
            ));
        }
        self.update.validate().map_err(|e| match e {
            Error::InvalidInput(m) => Error::Config(m),
            other => other,
        })
    }
}

/// Stage-one fusion of the three distances.
pub fn fused_cost(d_cos: f64, d_mah_normalized: f64, d_iou: f64, p: &AssociationParams) -> f64 {
    p.gamma * (p.lambda * d_cos + (1.0 - p.lambda) * d_mah_normalized)
        + (1.0 - p.gamma) * (1.0 - d_iou)
}

/// A finished track's id with its per-frame output boxes.
pub type TrackHistory = (u64, Vec<(u64, BoundingBox)>);

/// Per-frame snapshot of a matched or newly created track.
#[derive(Debug, Clone)]
pub struct TrackOutput {
    pub id: u64,
    pub bbox: BoundingBox,
    pub status: TrackStatus,
}

/// Everything that happened in one association step.
#[derive(Debug, Clone)]
pub struct FrameResult {
    pub frame: u64,
    /// (track id, detection index) pairs, both sides injective.
    pub matches: Vec<(u64, usize)>,
    pub new_track_ids: Vec<u64>,
    pub retired_track_ids: Vec<u64>,
    pub outputs: Vec<TrackOutput>,
}

/// Online tracker: owns the track set and processes frames in order.
#[derive(Debug)]
pub struct Tracker {
    params: AssociationParams,
    kf: KalmanFilter,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<u64>,
}

struct StageOutcome {
    /// (track index, detection index)
    matches: Vec<(usize, usize)>,
    unmatched_tracks: Vec<usize>,
    unmatched_detections: Vec<usize>,
}

impl Tracker {
    pub fn new(params: AssociationParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            kf: KalmanFilter::default(),
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    pub fn params(&self) -> &AssociationParams {
        &self.params
    }

    /// Every track ever confirmed, including retired ones.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Histories of confirmed tracks, for results output.
    pub fn confirmed_histories(&self) -> Vec<(u64, &[(u64, BoundingBox)])> {
        self.tracks
            .iter()
            .filter(|t| t.status != TrackStatus::Tentative)
            .map(|t| (t.id, t.history.as_slice()))
            .collect()
    }

    /// Processes one frame. Frames must arrive in strictly increasing order.
    pub fn step(&mut self, obs: &FrameObservations) -> Result<FrameResult> {
        if let Some(last) = self.last_frame {
            if obs.frame <= last {
                return Err(Error::invalid(format!(
                    "frame {} arrived after frame {last}",
                    obs.frame
                )));
            }
        }
        self.last_frame = Some(obs.frame);

        // Detections the motion model can represent; degenerate boxes are
        // ignored by association entirely.
        let usable: Vec<usize> = (0..obs.detections.len())
            .filter(|&i| Measurement::from_box(&obs.detections[i].bbox).is_ok())
            .collect();

        // 1. Predict every live track.
        let live: Vec<usize> = (0..self.tracks.len())
            .filter(|&i| self.tracks[i].status != TrackStatus::Retired)
            .collect();
        for &i in &live {
            self.tracks[i].motion = self.kf.predict(&self.tracks[i].motion);
        }

        // 2./3. Two association stages.
        let stage1 = self.stage_one(&live, &usable, obs);
        let leftover_tracks: Vec<usize> = stage1.unmatched_tracks.clone();
        let leftover_dets: Vec<usize> = stage1.unmatched_detections.clone();
        let stage2 = self.stage_two(&leftover_tracks, &leftover_dets, obs);

        let mut all_matches = stage1.matches;
        all_matches.extend(stage2.matches.iter().copied());
        all_matches.sort_by_key(|&(t, _)| self.tracks[t].id);

        let mut result = FrameResult {
            frame: obs.frame,
            matches: Vec::new(),
            new_track_ids: Vec::new(),
            retired_track_ids: Vec::new(),
            outputs: Vec::new(),
        };

        // 4. Apply matches: motion update, embedding updates, lifecycle.
        let mut matched_tracks = vec![false; self.tracks.len()];
        for &(ti, di) in &all_matches {
            matched_tracks[ti] = true;
            let det = &obs.detections[di];
            let m = Measurement::from_box(&det.bbox)?;
            let track = &mut self.tracks[ti];
            track.motion = self.kf.update(&track.motion, &m)?;
            track.embeddings.short = appearance::update_short(
                &track.embeddings.short,
                &det.embedding,
                det.occlusion_score,
                &self.params.update,
            )?;
            track.embeddings.long = appearance::update_long(
                &track.embeddings.long,
                &det.embedding,
                det.occlusion_score,
                &self.params.update,
            )?;
            track.frames_since_update = 0;
            track.consecutive_matches += 1;
            let confirmed = track.status == TrackStatus::Tentative
                && track.consecutive_matches >= self.params.tentative_confirm;
            if confirmed || track.status == TrackStatus::Dormant {
                track.status = TrackStatus::Active;
            }
            let out_box = track.motion.to_box();
            track.history.push((obs.frame, out_box));
            result.matches.push((track.id, di));
            result.outputs.push(TrackOutput {
                id: track.id,
                bbox: out_box,
                status: track.status,
            });
        }

        // 5. Unmatched detections found new tentative tracks.
        let matched_dets: Vec<usize> = all_matches.iter().map(|&(_, d)| d).collect();
        for &di in &usable {
            if matched_dets.contains(&di) {
                continue;
            }
            let det = &obs.detections[di];
            let id = self.spawn_track(det)?;
            result.new_track_ids.push(id);
            let track = self.tracks.last().unwrap();
            result.outputs.push(TrackOutput {
                id,
                bbox: track.motion.to_box(),
                status: track.status,
            });
        }

        // 6. Unmatched tracks age; tentative ones drop immediately.
        let mut dropped: Vec<usize> = Vec::new();
        for &ti in &live {
            if matched_tracks[ti] {
                continue;
            }
            let track = &mut self.tracks[ti];
            track.consecutive_matches = 0;
            track.frames_since_update += 1;
            match track.status {
                TrackStatus::Tentative => {
                    result.retired_track_ids.push(track.id);
                    dropped.push(ti);
                }
                _ => {
                    if track.frames_since_update > self.params.keep_alive {
                        track.status = TrackStatus::Retired;
                        result.retired_track_ids.push(track.id);
                    } else {
                        track.status = TrackStatus::Dormant;
                    }
                }
            }
        }
        // Never-confirmed tracks leave no trace in the track set.
        for ti in dropped.into_iter().rev() {
            self.tracks.remove(ti);
        }

        Ok(result)
    }

    fn spawn_track(&mut self, det: &Detection) -> Result<u64> {
        let m = Measurement::from_box(&det.bbox)?;
        let unit = appearance::normalize(&det.embedding)?;
        let id = self.next_id;
        self.next_id += 1;
        let status = if self.params.tentative_confirm <= 1 {
            TrackStatus::Active
        } else {
            TrackStatus::Tentative
        };
        let motion = self.kf.initiate(&m);
        let first_box = motion.to_box();
        self.tracks.push(Track {
            id,
            motion,
            embeddings: EmbeddingPair {
                long: unit.clone(),
                short: unit,
            },
            frames_since_update: 0,
            status,
            history: vec![(det.frame, first_box)],
            consecutive_matches: 1,
        });
        Ok(id)
    }

    /// Fused-cost association over short-term embeddings.
    fn stage_one(
        &self,
        track_indices: &[usize],
        det_indices: &[usize],
        obs: &FrameObservations,
    ) -> StageOutcome {
        let mut matrix = CostMatrix::new(track_indices.len(), det_indices.len());
        for (r, &ti) in track_indices.iter().enumerate() {
            let track = &self.tracks[ti];
            let predicted_box = track.motion.to_box();
            for (c, &di) in det_indices.iter().enumerate() {
                let det = &obs.detections[di];
                let Some(d_mah_norm) = self.gated_motion_distance(track, det) else {
                    continue;
                };
                let Ok(d_cos) = appearance::cosine_distance(&track.embeddings.short, &det.embedding)
                else {
                    continue;
                };
                let d_iou = crate::types::iou(&predicted_box, &det.bbox);
                matrix.set(r, c, fused_cost(d_cos, d_mah_norm, d_iou, &self.params));
            }
        }
        self.run_stage(&matrix, self.params.stage1_threshold, track_indices, det_indices)
    }

    /// Long-term-embedding rescue pass over stage-one leftovers.
    fn stage_two(
        &self,
        track_indices: &[usize],
        det_indices: &[usize],
        obs: &FrameObservations,
    ) -> StageOutcome {
        let w = self.params.stage2_motion_weight;
        let mut matrix = CostMatrix::new(track_indices.len(), det_indices.len());
        for (r, &ti) in track_indices.iter().enumerate() {
            let track = &self.tracks[ti];
            let embedding = match self.params.stage2_embedding {
                Stage2Embedding::Long => &track.embeddings.long,
                Stage2Embedding::Short => &track.embeddings.short,
            };
            for (c, &di) in det_indices.iter().enumerate() {
                let det = &obs.detections[di];
                let Some(d_mah_norm) = self.gated_motion_distance(track, det) else {
                    continue;
                };
                let Ok(d_cos) = appearance::cosine_distance(embedding, &det.embedding) else {
                    continue;
                };
                matrix.set(r, c, (1.0 - w) * d_cos + w * d_mah_norm);
            }
        }
        self.run_stage(&matrix, self.params.stage2_cos_threshold, track_indices, det_indices)
    }

    /// Gate-normalized Mahalanobis distance, or None outside the gate.
    fn gated_motion_distance(&self, track: &Track, det: &Detection) -> Option<f64> {
        let m = Measurement::from_box(&det.bbox).ok()?;
        let d = self.kf.mahalanobis(&track.motion, &m).ok()?;
        if !gate(d, self.params.chi2_gate) {
            return None;
        }
        Some((d / self.params.chi2_gate).min(1.0))
    }

    /// Runs a whole sequence through the tracker, feeding empty frames for
    /// any gaps between 1 and the last observed frame so dormancy counts in
    /// real frames. Returns confirmed track histories sorted by id.
    pub fn track_sequence(
        obs: &[FrameObservations],
        params: AssociationParams,
    ) -> Result<Vec<TrackHistory>> {
        let mut tracker = Tracker::new(params)?;
        let last = obs.iter().map(|f| f.frame).max().unwrap_or(0);
        let mut by_frame: std::collections::BTreeMap<u64, &FrameObservations> =
            std::collections::BTreeMap::new();
        for fo in obs {
            if by_frame.insert(fo.frame, fo).is_some() {
                return Err(Error::invalid(format!("duplicate frame {}", fo.frame)));
            }
        }
        for frame in 1..=last {
            match by_frame.get(&frame) {
                Some(fo) => tracker.step(fo)?,
                None => tracker.step(&FrameObservations {
                    frame,
                    detections: Vec::new(),
                })?,
            };
        }
        Ok(tracker
            .confirmed_histories()
            .into_iter()
            .map(|(id, h)| (id, h.to_vec()))
            .collect())
    }

    fn run_stage(
        &self,
        matrix: &CostMatrix,
        threshold: f64,
        track_indices: &[usize],
        det_indices: &[usize],
    ) -> StageOutcome {
        let matching = solve_assignment(matrix, threshold);
        let matches: Vec<(usize, usize)> = matching
            .pairs
            .iter()
            .map(|&(r, c)| (track_indices[r], det_indices[c]))
            .collect();
        let unmatched_tracks = matching
            .unmatched_rows(track_indices.len())
            .into_iter()
            .map(|r| track_indices[r])
            .collect();
        let unmatched_detections = matching
            .unmatched_cols(det_indices.len())
            .into_iter()
            .map(|c| det_indices[c])
            .collect();
        StageOutcome {
            matches,
            unmatched_tracks,
            unmatched_detections,
        }
    }
}
