use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};
use typegaze_core::io::{read_keylogs, read_scanpaths, write_keylogs, write_scanpaths};
use typegaze_core::metrics::{gaze_shifts, gaze_on_keyboard_ratio, gaze_stats, mean_fixation_duration, proofreading_rate};
use typegaze_core::simulator::{simulate_dataset, simulate_trial, simulate_user_trial, SimConfig};
use typegaze_core::typing::{backspace_count, compute_typing_metrics, decode_text, error_rate, interkey_intervals};
use typegaze_core::{region_of, HumanParams, KeypressLog, Region, TapEvent};

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman correlation and its two-sided p-value from the t approximation.
fn spearman(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    let rho = sxy / (sxx * syy).sqrt();
    let t = rho * ((n - 2.0) / (1.0 - rho * rho)).sqrt();
    let p = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, n - 2.0).unwrap().cdf(t.abs()));
    (rho, p)
}

/// One trial per grid value of a single parameter, the others held at 0.5.
fn sweep(component: usize, n: usize, measure: impl Fn(&KeypressLog, &typegaze_core::Scanpath) -> f64) -> (Vec<f64>, Vec<f64>) {
    let cfg = SimConfig::default();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..n {
        let mut arr = [0.5; 3];
        arr[component] = 0.2 + 0.6 * i as f64 / (n - 1) as f64;
        let theta = HumanParams::from_array(arr);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
        let sentence = &cfg.phrase_set[i % cfg.phrase_set.len()];
        let (log, s) = simulate_trial(&cfg, &theta, sentence, &mut rng, &format!("t{i}"), "u").unwrap();
        xs.push(arr[component]);
        ys.push(measure(&log, &s));
    }
    (xs, ys)
}

#[test]
fn same_seed_same_dataset() {
    let cfg = SimConfig { sample_theta: true, seed: 11, ..Default::default() };
    let a = simulate_dataset(&cfg, 4).unwrap();
    let b = simulate_dataset(&cfg, 4).unwrap();
    assert_eq!(a, b);
    let c = simulate_dataset(&SimConfig { seed: 12, ..cfg }, 4).unwrap();
    assert_ne!(a, c);
}

#[test]
fn noiseless_motor_transcribes_exactly() {
    let cfg = SimConfig { sigma0: 1e-6, ..Default::default() };
    let theta = HumanParams::new(0.5, 0.0, 0.5).unwrap();
    for (i, sentence) in cfg.phrase_set.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let (log, _) = simulate_trial(&cfg, &theta, sentence, &mut rng, "t", "u").unwrap();
        assert_eq!(&decode_text(&log, &cfg.layout), sentence);
        assert_eq!(backspace_count(&log, &cfg.layout), 0);
    }
}

#[test]
fn no_proofreading_keeps_gaze_on_keyboard() {
    let cfg = SimConfig { proofread_base_p: 0.0, ..Default::default() };
    let theta = HumanParams::new(0.5, 0.5, 1.0).unwrap();
    for i in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let (_, s) = simulate_trial(&cfg, &theta, &cfg.phrase_set[i as usize], &mut rng, "t", "u").unwrap();
        assert!(s.fixations.iter().all(|f| region_of(f.x, f.y, &cfg.layout.screen) != Region::Text));
        assert_eq!(gaze_on_keyboard_ratio(&s, &cfg.layout.screen).unwrap(), 1.0);
    }
}

#[test]
fn reference_user_trial_is_valid() {
    let cfg = SimConfig { theta: HumanParams::new(0.396, 0.298, 0.414).unwrap(), ..Default::default() };
    let t = simulate_user_trial(&cfg, 0, 0).unwrap();
    t.log.validate(&cfg.layout.screen).unwrap();
    t.scanpath.validate(&cfg.layout.screen).unwrap();
    assert!(!t.scanpath.is_empty());
    let m = compute_typing_metrics(&t.log, &cfg.layout).unwrap();
    assert!(m.wpm > 0.0 && m.mean_iki_ms > 0.0);
}

#[test]
fn dataset_shape_invariants_and_round_trip() {
    let cfg = SimConfig { sample_theta: true, seed: 3, ..Default::default() };
    let ds = simulate_dataset(&cfg, 60).unwrap();
    assert_eq!(ds.trials.len(), 300);
    assert_eq!(ds.thetas.len(), 60);
    let geom = &cfg.layout.screen;
    for t in &ds.trials {
        assert_eq!(t.log.trial_id, t.scanpath.trial_id);
        t.log.validate(geom).unwrap();
        t.scanpath.validate(&cfg.layout.screen).unwrap();
        assert!(t.log.taps.windows(2).all(|w| w[0].time_ms <= w[1].time_ms));
        assert!(t.log.taps.iter().all(|p| p.x >= 0.0 && p.x <= geom.width && p.y >= 0.0 && p.y <= geom.height));
        for f in &t.scanpath.fixations {
            assert!(f.duration_ms > 0.0);
        }
        let arr = t.theta.to_array();
        assert!(arr.iter().all(|v| (0.2..=0.8).contains(v)));
    }
    let dir = tempfile::tempdir().unwrap();
    let (kp, sp) = (dir.path().join("k.jsonl"), dir.path().join("s.jsonl"));
    let logs: Vec<_> = ds.trials.iter().map(|t| t.log.clone()).collect();
    let paths: Vec<_> = ds.trials.iter().map(|t| t.scanpath.clone()).collect();
    write_keylogs(&kp, &logs).unwrap();
    write_scanpaths(&sp, &paths).unwrap();
    assert_eq!(read_keylogs(&kp).unwrap(), logs);
    assert_eq!(read_scanpaths(&sp).unwrap(), paths);
}

#[test]
fn encoding_slows_fixations() {
    let (x, y) = sweep(0, 240, |_, s| mean_fixation_duration(s).unwrap());
    let (rho, p) = spearman(&x, &y);
    assert!(rho > 0.0 && p < 0.01, "rho {rho} p {p}");
}

#[test]
fn finger_noise_raises_typos() {
    let layout = SimConfig::default().layout;
    let (x, y) = sweep(1, 240, |log, _| backspace_count(log, &layout) as f64 / log.taps.len() as f64);
    let (rho, p) = spearman(&x, &y);
    assert!(rho > 0.0 && p < 0.01, "rho {rho} p {p}");
}

#[test]
fn trust_reduces_proofreading() {
    let geom = SimConfig::default().layout.screen;
    let (x, y) = sweep(2, 240, |_, s| proofreading_rate(s, &geom).unwrap());
    let (rho, p) = spearman(&x, &y);
    assert!(rho < 0.0 && p < 0.01, "rho {rho} p {p}");
}

#[test]
fn error_rate_trend_over_finger_noise() {
    // 50 users with f_k on a grid, grouped into five blocks of ten
    let cfg = SimConfig::default();
    let mut block = vec![0.0; 5];
    for u in 0..50 {
        let f = 0.2 + 0.6 * u as f64 / 49.0;
        let c = SimConfig { theta: HumanParams::new(0.5, f, 0.5).unwrap(), seed: 77, trials_per_user: 20, ..cfg.clone() };
        for t in 0..c.trials_per_user {
            let tr = simulate_user_trial(&c, u, t).unwrap();
            let typed = decode_text(&tr.log, &c.layout);
            block[u / 10] += error_rate(&typed, &tr.log.reference_text);
        }
    }
    assert!(block.windows(2).all(|w| w[0] <= w[1]), "{block:?}");
}

#[test]
fn mid_theta_stays_in_reported_envelope() {
    let cfg = SimConfig { seed: 5, ..Default::default() };
    let ds = simulate_dataset(&cfg, 60).unwrap();
    let paths: Vec<_> = ds.trials.iter().map(|t| t.scanpath.clone()).collect();
    let stats: Vec<_> = paths.iter().map(|s| gaze_stats(s, &cfg.layout.screen).unwrap()).collect();
    let mean = |f: &dyn Fn(&typegaze_core::metrics::GazeStats) -> f64| stats.iter().map(f).sum::<f64>() / stats.len() as f64;
    // mean ± one reported sd
    let ratio = mean(&|g| g.keyboard_ratio);
    let shifts = mean(&|g| g.gaze_shifts);
    let count = mean(&|g| g.fixation_count);
    assert!((0.29..=0.97).contains(&ratio), "{ratio}");
    assert!((1.41..=6.21).contains(&shifts), "{shifts}");
    assert!((10.79..=31.71).contains(&count), "{count}");
    let direct: f64 = paths.iter().map(|s| gaze_shifts(s, &cfg.layout.screen) as f64).sum::<f64>() / 300.0;
    assert!((shifts - direct).abs() < 1e-9);
}

#[test]
fn interval_resummation() {
    let cfg = SimConfig { seed: 9, ..Default::default() };
    let t = (0..50).map(|i| simulate_user_trial(&cfg, i, 0).unwrap()).find(|t| t.log.taps.len() >= 21).unwrap();
    let mut log = t.log.clone();
    log.taps.truncate(21);
    let ivs = interkey_intervals(&log).values;
    assert_eq!(ivs.len(), 20);
    let direct: f64 = log.taps.windows(2).map(|w| w[1].time_ms - w[0].time_ms).sum::<f64>() / 20.0;
    let m = compute_typing_metrics(&log, &cfg.layout).unwrap();
    assert!((m.mean_iki_ms - direct).abs() < 1e-9);
    assert!((direct * 20.0 - (log.taps[20].time_ms - log.taps[0].time_ms)).abs() < 1e-6);
}

/// Textbook recursive edit distance.
fn slow_levenshtein(a: &[char], b: &[char]) -> usize {
    match (a.split_last(), b.split_last()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = slow_levenshtein(ra, rb) + usize::from(x != y);
            sub.min(slow_levenshtein(ra, b) + 1).min(slow_levenshtein(a, rb) + 1)
        }
    }
}

#[test]
fn two_corrections_are_counted() {
    let cfg = SimConfig::default();
    let layout = &cfg.layout;
    let tap = |label: &str, t: f64| {
        let (x, y) = layout.key(label).unwrap().center();
        TapEvent { x, y, time_ms: t }
    };
    // types "cst", erases two, then "at s"
    let seq = ["c", "s", "t", "backspace", "backspace", "a", "t", "space", "s"];
    let taps = seq.iter().enumerate().map(|(i, l)| tap(l, i as f64 * 300.0)).collect();
    let log = KeypressLog { trial_id: "t".into(), user_id: "u".into(), reference_text: "cat sat".into(), taps };
    let m = compute_typing_metrics(&log, layout).unwrap();
    assert_eq!(m.backspace_count, 2.0);
    let typed: Vec<char> = decode_text(&log, layout).chars().collect();
    assert_eq!(typed.iter().collect::<String>(), "cat s");
    let oracle = slow_levenshtein(&typed, &"cat sat".chars().collect::<Vec<_>>()) as f64 / 7.0;
    assert!((m.error_rate - oracle).abs() < 1e-12);
}
