//! Scratch harness for tuning runs (ignored by default; run manually).

use advloop_core::attack::AttackConfig;
use advloop_core::metrics::{evaluate, EvalPoint};
use advloop_core::perception::{train, DetectorConfig, LossWeights, TrainConfig};
use advloop_core::render::{gen_dataset, RenderParams};
use advloop_core::scene::{rect_track, RectTrackParams};
use std::time::Instant;

#[test]
#[ignore]
fn tune_training() {
    let track = rect_track(RectTrackParams::default()).unwrap();
    let render = RenderParams::default();
    let n: usize = std::env::var("TUNE_N").map(|v| v.parse().unwrap()).unwrap_or(400);
    let epochs: usize = std::env::var("TUNE_EPOCHS").map(|v| v.parse().unwrap()).unwrap_or(10);
    let lr: f64 = std::env::var("TUNE_LR").map(|v| v.parse().unwrap()).unwrap_or(0.02);

    let t0 = Instant::now();
    let (train_set, test_set) = gen_dataset(&track, n, 0.7, 42, &render).unwrap();
    println!("dataset: {} train / {} test in {:?}", train_set.len(), test_set.len(), t0.elapsed());
    let objs: usize = train_set.iter().map(|f| f.labels.len()).sum();
    println!("labeled objects in train: {} (avg {:.2}/frame)", objs, objs as f64 / train_set.len() as f64);
    let mut per_class = [0usize; 4];
    for f in &train_set {
        for c in &f.labels.classes {
            per_class[c.class_id()] += 1;
        }
    }
    println!("class counts: vehicle={} stop={} light={} intersection={}", per_class[0], per_class[1], per_class[2], per_class[3]);

    let t1 = Instant::now();
    let tc = TrainConfig {
        epochs,
        learning_rate: lr,
        batch_size: 32,
        momentum: 0.9,
        seed: 7,
    };
    let (theta, curve) = train(DetectorConfig::default(), &train_set, &tc, &LossWeights::default()).unwrap();
    println!("trained {} epochs in {:?}", epochs, t1.elapsed());
    for (i, l) in curve.iter().enumerate() {
        println!("  epoch {:>2}: loss {:.4}", i, l);
    }

    let t2 = Instant::now();
    let point = EvalPoint::default();
    let clean = evaluate(&theta, &test_set, &AttackConfig::default(), &LossWeights::default(), &point).unwrap();
    println!(
        "clean eval in {:?}: P = {:.3}  R = {:.3}  (TP {} FP {} FN {})",
        t2.elapsed(),
        clean.precision(),
        clean.recall(),
        clean.true_positives,
        clean.false_positives,
        clean.false_negatives
    );

    // diagnostics: per-cell stats on a few test frames
    use advloop_core::perception::forward;
    let mut pos_obj = vec![];
    let mut neg_obj = vec![];
    let mut cious = vec![];
    let mut confs = vec![];
    for f in test_set.iter().take(60) {
        let raw = forward(&theta, &f.image).unwrap();
        let grid = raw.grid;
        let mut assigned = vec![None; grid * grid];
        for (i, b) in f.labels.boxes.iter().enumerate() {
            let gx = ((b.cx * grid as f64) as usize).min(grid - 1);
            let gy = ((b.cy * grid as f64) as usize).min(grid - 1);
            if assigned[gy * grid + gx].is_none() {
                assigned[gy * grid + gx] = Some(i);
            }
        }
        for (cell, a) in assigned.iter().enumerate() {
            let sig = 1.0 / (1.0 + (-raw.cells[cell].obj_logit).exp());
            match a {
                Some(gi) => {
                    pos_obj.push(sig);
                    let c = advloop_core::perception::ciou(&raw.box_at(cell), &f.labels.boxes[*gi]).unwrap();
                    cious.push(c);
                    let m = raw.cells[cell].cls_logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = raw.cells[cell].cls_logits.iter().map(|&v| (v - m).exp()).sum();
                    confs.push(sig * (1.0 / z));
                }
                None => neg_obj.push(sig),
            }
        }
    }
    let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len().max(1) as f64;
    pos_obj.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!(
        "assigned cells: {}  mean sigma(obj) pos = {:.3} (p10 {:.3} p90 {:.3}) | neg = {:.3}",
        pos_obj.len(),
        mean(&pos_obj),
        pos_obj[pos_obj.len() / 10],
        pos_obj[pos_obj.len() * 9 / 10],
        mean(&neg_obj)
    );
    println!("mean CIoU on assigned cells = {:.3}  mean conf upper bound = {:.3}", mean(&cious), mean(&confs));
}
