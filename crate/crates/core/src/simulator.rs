//! Parametric typist and gaze simulator driven by `HumanParams`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::{Key, KeyboardLayout, BACKSPACE};
use crate::phrases::DEFAULT_PHRASES;
use crate::types::{Fixation, HumanParams, KeypressLog, Scanpath, TapEvent};

pub const THETA_RANGE: (f64, f64) = (0.2, 0.8);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub theta: HumanParams,
    /// Draw a fresh θ per user from `THETA_RANGE` instead of using `theta`.
    pub sample_theta: bool,
    pub phrase_set: Vec<String>,
    pub seed: u64,
    pub trials_per_user: usize,
    pub fitts_a: f64,
    pub fitts_b: f64,
    pub base_encode_ms: f64,
    pub sigma0: f64,
    pub proofread_base_p: f64,
    pub detect_p: f64,
    pub proofread_ms: f64,
    pub read_ms: f64,
    /// Mean and sd of how long before a tap the gaze leaves for the next target.
    pub gaze_departure_ms: (f64, f64),
    pub foveal_radius_px: f64,
    /// Landing error sd = (0.5 + e_k) * (base + frac * saccade amplitude).
    pub landing_error: (f64, f64),
    /// Relative sd of the motor time per tap.
    pub iki_noise: f64,
    pub min_fixation_ms: f64,
    /// Systematic sampling of proofreading: each word boundary still proofreads with
    /// probability p, but the count per trial is nearly fixed.
    pub stratified_proofreading: bool,
    pub layout: KeyboardLayout,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            theta: HumanParams::default(),
            sample_theta: false,
            phrase_set: DEFAULT_PHRASES.iter().map(|s| s.to_string()).collect(),
            seed: 0,
            trials_per_user: 5,
            fitts_a: 100.0,
            fitts_b: 150.0,
            base_encode_ms: 150.0,
            sigma0: 26.0,
            proofread_base_p: 0.15,
            detect_p: 0.9,
            proofread_ms: 1000.0,
            read_ms: 800.0,
            gaze_departure_ms: (100.0, 50.0),
            foveal_radius_px: 250.0,
            landing_error: (6.0, 0.05),
            iki_noise: 0.15,
            min_fixation_ms: 60.0,
            stratified_proofreading: true,
            layout: KeyboardLayout::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::invalid("simulator config", m.to_string()));
        self.theta.validate()?;
        self.layout.validate()?;
        if !(0.0..=1.0).contains(&self.proofread_base_p) || !(0.0..=1.0).contains(&self.detect_p) {
            return bad("probabilities must lie in [0,1]");
        }
        if !(self.fitts_b > 0.0) {
            return bad("fitts_b must be positive");
        }
        if !(self.sigma0 > 0.0) {
            return bad("sigma0 must be positive");
        }
        if self.fitts_a < 0.0 || self.base_encode_ms < 0.0 || self.proofread_ms < 0.0 || self.read_ms < 0.0 {
            return bad("times must be non-negative");
        }
        if self.trials_per_user == 0 {
            return bad("trials_per_user must be at least 1");
        }
        Ok(())
    }

    pub fn proofread_p(&self, theta: &HumanParams) -> f64 {
        (self.proofread_base_p + (1.0 - theta.lambda) * 0.5).clamp(0.0, 1.0)
    }
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one (user, trial) cell; `trial = u64::MAX` is reserved for the user's θ draw.
pub fn derive_seed(seed: u64, user: u64, trial: u64) -> u64 {
    mix(mix(mix(seed) ^ user) ^ trial)
}

pub fn user_id(user: usize) -> String {
    format!("u{user:04}")
}

pub fn trial_id(user: usize, trial: usize) -> String {
    format!("u{user:04}_t{trial:03}")
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    if sd > 0.0 {
        Normal::new(mean, sd).expect("finite sd").sample(rng)
    } else {
        mean
    }
}

struct Trial<'a> {
    cfg: &'a SimConfig,
    theta: HumanParams,
    rng: &'a mut ChaCha8Rng,
    taps: Vec<TapEvent>,
    fixations: Vec<Fixation>,
    buffer: Vec<char>,
    /// Time of the last tap, or when the hand becomes free to start.
    last_tap: f64,
    /// Earliest time the finger may start the next movement.
    finger_free: f64,
    finger: (f64, f64),
    /// The gaze stays put (reading or proofreading) until this time.
    gaze_busy_until: f64,
}

impl Trial<'_> {
    fn gaze(&self) -> (f64, f64) {
        let f = self.fixations.last().expect("trial starts with a fixation");
        (f.x, f.y)
    }

    fn encode_ms(&self) -> f64 {
        self.cfg.base_encode_ms * (0.5 + self.theta.e_k)
    }

    fn clamp_screen(&self, x: f64, y: f64) -> (f64, f64) {
        let g = &self.cfg.layout.screen;
        (x.clamp(0.0, g.width), y.clamp(0.0, g.height))
    }

    /// Starts a new fixation at `at`, keeping the previous one at least `min_fixation_ms` long.
    fn fixate(&mut self, x: f64, y: f64, at: f64) {
        let prev = self.fixations.last().expect("trial starts with a fixation").onset_ms;
        let onset = at.max(prev + self.cfg.min_fixation_ms);
        let (x, y) = self.clamp_screen(x, y);
        self.fixations.push(Fixation { x, y, duration_ms: 0.0, onset_ms: onset });
    }

    fn guide_to(&mut self, key: &Key) {
        let (cx, cy) = key.center();
        let (gx, gy) = self.gaze();
        let amp = (cx - gx).hypot(cy - gy);
        if amp <= self.cfg.foveal_radius_px {
            return;
        }
        let sd = (0.5 + self.theta.e_k) * (self.cfg.landing_error.0 + self.cfg.landing_error.1 * amp);
        let (jx, jy) = (normal(self.rng, 0.0, sd), normal(self.rng, 0.0, sd));
        let g = &self.cfg.layout.screen;
        let y = (cy + jy).clamp(g.keyboard_min_y, g.keyboard_max_y);
        let (mu, sdc) = self.cfg.gaze_departure_ms;
        let lead = normal(self.rng, mu, sdc).max(0.0);
        let at = (self.last_tap - lead).max(self.gaze_busy_until);
        self.fixate(cx + jx, y, at);
    }

    fn tap(&mut self, key: &Key) {
        self.guide_to(key);
        let (cx, cy) = key.center();
        let dist = (cx - self.finger.0).hypot(cy - self.finger.1);
        let mt = self.cfg.fitts_a + self.cfg.fitts_b * (1.0 + dist / key.w.min(key.h)).log2();
        let base = self.encode_ms() + mt;
        let dur = (base * (1.0 + normal(self.rng, 0.0, self.cfg.iki_noise))).max(0.4 * base).max(40.0);
        let start = self.last_tap.max(self.finger_free);
        let gaze_onset = self.fixations.last().expect("fixation").onset_ms;
        let time = (start + dur).max(gaze_onset + 1.0);
        let sd = self.cfg.sigma0 * (0.5 + self.theta.f_k);
        let (nx, ny) = (normal(self.rng, 0.0, sd), normal(self.rng, 0.0, sd));
        let (x, y) = self.clamp_screen(cx + nx, cy + ny);
        self.taps.push(TapEvent { x, y, time_ms: time });
        self.last_tap = time;
        self.finger_free = time;
        self.finger = (cx, cy);
        if let Some(hit) = self.cfg.layout.key_at(x, y) {
            if hit.label == BACKSPACE {
                self.buffer.pop();
            } else if let Some(c) = hit.char() {
                self.buffer.push(c);
            }
        }
    }

    fn proofread(&mut self) {
        let (mu, sdc) = self.cfg.gaze_departure_ms;
        let lead = normal(self.rng, mu, sdc).max(0.0);
        let x = 60.0 + 18.0 * self.buffer.len() as f64 + normal(self.rng, 0.0, 20.0);
        let y = 200.0 + normal(self.rng, 0.0, 40.0);
        let y = y.clamp(10.0, self.cfg.layout.screen.text_area_max_y - 10.0);
        self.fixate(x.min(self.cfg.layout.screen.width - 20.0), y, self.last_tap - lead);
        let dur = self.cfg.proofread_ms * (0.5 + self.theta.e_k) * normal(self.rng, 0.0, 0.2).exp();
        let end = self.fixations.last().expect("fixation").onset_ms + dur;
        self.finger_free = self.finger_free.max(end);
        self.gaze_busy_until = end;
    }
}

fn first_mismatch(buffer: &[char], target: &[char]) -> Option<usize> {
    let common = buffer.iter().zip(target).take_while(|(a, b)| a == b).count();
    (common < buffer.len()).then_some(common)
}

/// Simulates one transcription of `sentence` and the gaze that accompanies it.
pub fn simulate_trial(
    cfg: &SimConfig,
    theta: &HumanParams,
    sentence: &str,
    rng: &mut ChaCha8Rng,
    trial_id: &str,
    user_id: &str,
) -> Result<(KeypressLog, Scanpath)> {
    theta.validate()?;
    let target: Vec<char> = sentence.chars().collect();
    if target.is_empty() {
        return Err(CoreError::invalid("sentence", "empty"));
    }
    let keys: Vec<&Key> = target
        .iter()
        .map(|&c| cfg.layout.key_for_char(c).ok_or(CoreError::UntypeableChar(c)))
        .collect::<Result<_>>()?;
    let backspace = cfg.layout.key(BACKSPACE).ok_or_else(|| CoreError::invalid("layout", "no backspace"))?;

    let read = cfg.read_ms * (0.5 + theta.e_k);
    let (kx, ky) = cfg.layout.key(crate::geometry::SPACE).expect("validated layout").center();
    let mut t = Trial {
        cfg,
        theta: *theta,
        rng,
        taps: Vec::new(),
        fixations: vec![Fixation { x: kx, y: ky, duration_ms: 0.0, onset_ms: 0.0 }],
        buffer: Vec::new(),
        last_tap: read,
        finger_free: read,
        finger: (kx, ky),
        gaze_busy_until: read,
    };
    let p_proof = cfg.proofread_p(theta);
    let max_taps = 4 * target.len() + 20;
    let mut phase: f64 = t.rng.random();
    let mut pos = 0;
    while pos < target.len() && t.taps.len() < max_taps {
        t.tap(keys[pos]);
        pos = t.buffer.len();
        let boundary = pos > 0 && (pos >= target.len() || target[pos - 1] == ' ');
        if !boundary {
            continue;
        }
        let check = if cfg.stratified_proofreading {
            phase += p_proof;
            let fire = phase >= 1.0;
            phase -= phase.floor();
            fire
        } else {
            t.rng.random::<f64>() < p_proof
        };
        if !check {
            continue;
        }
        t.proofread();
        if first_mismatch(&t.buffer, &target).is_some() && t.rng.random::<f64>() < cfg.detect_p {
            // backspace until the buffer is a clean prefix again; stray taps can add errors
            let mut guard = 0;
            while first_mismatch(&t.buffer, &target).is_some() && guard < 2 * target.len() {
                t.tap(backspace);
                guard += 1;
            }
        }
        pos = t.buffer.len();
    }

    let end = t.last_tap.max(t.finger_free) + 150.0;
    let n = t.fixations.len();
    for i in 0..n {
        let next = if i + 1 < n { t.fixations[i + 1].onset_ms } else { end.max(t.fixations[i].onset_ms + cfg.min_fixation_ms) };
        t.fixations[i].duration_ms = next - t.fixations[i].onset_ms;
    }
    let log = KeypressLog {
        trial_id: trial_id.to_string(),
        user_id: user_id.to_string(),
        reference_text: sentence.to_string(),
        taps: t.taps,
    };
    Ok((log, Scanpath { trial_id: trial_id.to_string(), fixations: t.fixations }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimTrial {
    pub log: KeypressLog,
    pub scanpath: Scanpath,
    pub theta: HumanParams,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct SimDataset {
    /// Sorted by (user, trial).
    pub trials: Vec<SimTrial>,
    pub thetas: BTreeMap<String, HumanParams>,
}

pub fn user_theta(cfg: &SimConfig, user: usize) -> HumanParams {
    if !cfg.sample_theta {
        return cfg.theta;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, user as u64, u64::MAX));
    let (lo, hi) = THETA_RANGE;
    HumanParams::from_array([0; 3].map(|_| rng.random_range(lo..=hi)))
}

/// One trial of one user, reproducible in isolation from `(cfg.seed, user, trial)`.
pub fn simulate_user_trial(cfg: &SimConfig, user: usize, trial: usize) -> Result<SimTrial> {
    if cfg.phrase_set.is_empty() {
        return Err(CoreError::invalid("simulator config", "empty phrase set"));
    }
    let theta = user_theta(cfg, user);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, user as u64, trial as u64));
    let sentence = &cfg.phrase_set[rng.random_range(0..cfg.phrase_set.len())];
    let (log, scanpath) = simulate_trial(cfg, &theta, sentence, &mut rng, &trial_id(user, trial), &user_id(user))?;
    Ok(SimTrial { log, scanpath, theta })
}

pub fn simulate_dataset(cfg: &SimConfig, n_users: usize) -> Result<SimDataset> {
    if n_users == 0 {
        return Err(CoreError::invalid("simulator config", "n_users must be at least 1"));
    }
    cfg.validate()?;
    let mut ds = SimDataset::default();
    for u in 0..n_users {
        ds.thetas.insert(user_id(u), user_theta(cfg, u));
        for k in 0..cfg.trials_per_user {
            ds.trials.push(simulate_user_trial(cfg, u, k)?);
        }
    }
    Ok(ds)
}
