// End-to-end dry run of the phantom filtering pipeline (not a test).
use std::time::Instant;

use finta::latent::{filter, select_threshold, ReferenceProvenance, ReferenceSet, Verdict};
use finta::nn::train::{train, TrainConfig};
use finta::nn::{AutoencoderModel, ModelConfig, Normalization};
use finta::phantom::{generate, split, PhantomConfig, LABEL_PLAUSIBLE};
use finta::streamline::Tractogram;

fn main() {
    let t0 = Instant::now();
    // a fifth of the default phantom keeps this example in the minutes
    // range; raise per-bundle counts and epochs for a full-scale run
    let phantom = generate(&PhantomConfig {
        streamlines_per_bundle: 220,
        ..PhantomConfig::default()
    })
    .unwrap();
    eprintln!("[{:7.1}s] phantom: {} streamlines", t0.elapsed().as_secs_f64(), phantom.tractogram.len());

    let resampled = phantom.tractogram.resample(256).unwrap();
    let (pool, test) = split(&resampled, 0.8, 42).unwrap();
    let (train_t, val_t) = split(&pool, 0.9, 43).unwrap();
    let anchor = train_t.first_endpoint_centroid();
    let train_t = train_t.align_endpoints(&anchor);
    let val_t = val_t.align_endpoints(&anchor);
    let test_t = test.align_endpoints(&anchor);
    eprintln!(
        "[{:7.1}s] prepared: train {} val {} test {}",
        t0.elapsed().as_secs_f64(), train_t.len(), val_t.len(), test_t.len()
    );

    let mut model = AutoencoderModel::<f32>::init(ModelConfig::default()).unwrap();
    model.norm = Normalization::fit(&train_t.streamlines, anchor);
    let cfg = TrainConfig { max_epochs: 8, patience: 4, seed: 7, ..TrainConfig::default() };
    let t_train = Instant::now();
    let (model, report) = train(model, &train_t.streamlines, &val_t.streamlines, &cfg).unwrap();
    for e in &report.epochs {
        eprintln!("  epoch {:2}: train {:.6e}  val {:.6e}", e.epoch, e.train_loss, e.val_loss);
    }
    eprintln!(
        "[{:7.1}s] trained {} epochs in {:.1}s (best {})",
        t0.elapsed().as_secs_f64(), report.epochs.len(), t_train.elapsed().as_secs_f64(), report.best_epoch
    );

    // reference = training-pool plausibles; negatives for ROC = implausibles
    let pool_aligned = pool.align_endpoints(&anchor);
    let labels = pool_aligned.labels.as_ref().unwrap();
    let pos_idx: Vec<usize> = (0..pool_aligned.len()).filter(|&i| labels[i] == LABEL_PLAUSIBLE).collect();
    let neg_idx: Vec<usize> = (0..pool_aligned.len()).filter(|&i| labels[i] != LABEL_PLAUSIBLE).collect();
    let pos_tract = pool_aligned.select(&pos_idx);
    let neg_tract = pool_aligned.select(&neg_idx);
    let pos_lat = model.encode_batch(&pos_tract.streamlines).unwrap();
    let reference = ReferenceSet::build(
        &pos_lat,
        &vec![LABEL_PLAUSIBLE.to_string(); pos_lat.len()],
        ReferenceProvenance { model_id: model.id(), source: "train plausibles".into() },
    )
    .unwrap();
    let pos_d: Vec<f64> = (0..pos_lat.len())
        .map(|i| reference.nearest_excluding(&pos_lat[i], i).unwrap().1)
        .collect();
    let neg_lat = model.encode_batch(&neg_tract.streamlines).unwrap();
    let neg_d: Vec<f64> = neg_lat.iter().map(|z| reference.nearest(z).unwrap().1).collect();
    let th = select_threshold(&pos_d, &neg_d).unwrap();
    eprintln!("[{:7.1}s] threshold {:.4} (pos median ~{:.4}, neg median ~{:.4})",
        t0.elapsed().as_secs_f64(), th.value, median(&pos_d), median(&neg_d));

    let t_f = Instant::now();
    let decisions = filter(&model, &reference, &test_t, &th).unwrap();
    eprintln!("filter test split ({}) in {:.2}s", test_t.len(), t_f.elapsed().as_secs_f64());
    let truth: Vec<bool> = test_t.labels.as_ref().unwrap().iter().map(|l| l == LABEL_PLAUSIBLE).collect();
    let pred: Vec<bool> = decisions.iter().map(|d| d.verdict == Verdict::Positive).collect();
    let r = finta::metrics::evaluate(&pred, &truth, &group_opts(&test_t)).unwrap();
    eprintln!(
        "acc {:.4}  sens {:.4}  prec {:.4}  f1 {:.4}  vgw {:.3}  sr {:.3}",
        r.macro_measures.accuracy, r.macro_measures.sensitivity, r.macro_measures.precision,
        r.macro_measures.f1, r.vgw_rate, r.success_rate
    );
    // binary (plausible-as-positive) view
    let c = finta::metrics::confusion(&pred, &truth).unwrap();
    let acc = (c.true_positive + c.true_negative) as f64 / c.total() as f64;
    let sens = c.true_positive as f64 / (c.true_positive + c.false_negative) as f64;
    let prec = c.true_positive as f64 / (c.true_positive + c.false_positive) as f64;
    let f1 = 2.0 * prec * sens / (prec + sens);
    eprintln!("binary: acc {acc:.4} sens {sens:.4} prec {prec:.4} f1 {f1:.4}  (tp {} fp {} tn {} fn {})",
        c.true_positive, c.false_positive, c.true_negative, c.false_negative);
    eprintln!("[{:7.1}s] done", t0.elapsed().as_secs_f64());
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s[s.len() / 2]
}

fn group_opts(t: &Tractogram) -> Vec<Option<String>> {
    let labels = t.labels.as_ref().unwrap();
    t.group_ids
        .as_ref()
        .unwrap()
        .iter()
        .zip(labels)
        .map(|(g, l)| if l == LABEL_PLAUSIBLE { Some(g.clone()) } else { None })
        .collect()
}
