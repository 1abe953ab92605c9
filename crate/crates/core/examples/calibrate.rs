//! Scratch calibration harness (not part of the test suite): trains the
//! visual and non-visual models on generated corpora across seeds and prints
//! the AUC gaps the acceptance thresholds depend on.

use vbpr::dataset::split_leave_one_out;
use vbpr::evaluator::{evaluate, ModelScorer, PopularityScorer, RandomScorer};
use vbpr::models::PopularityTable;
use vbpr::synthgen::{generate, SynthConfig};
use vbpr::trainer::{train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let visual_weight: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.7);
    let lr: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.05);
    let lambda: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.01);
    let epochs: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(40);
    let gain: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(4.0);
    let cold_exposure: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(0.08);
    let factors: usize = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(20);
    let lambda_beta: f64 = args.get(8).map(|s| s.parse().unwrap()).unwrap_or(lambda);

    println!("w={visual_weight} lr={lr} lambda={lambda} epochs={epochs} gain={gain} expo={cold_exposure} factors={factors}");
    let mut gaps_all = Vec::new();
    let mut gaps_cold = Vec::new();
    for seed in 0..5u64 {
        let cfg = SynthConfig {
            visual_weight,
            affinity_gain: gain,
            cold_exposure,
            seed,
            ..SynthConfig::default()
        };
        let out = generate(&cfg).unwrap();
        let split = split_leave_one_out(&out.interactions, seed).unwrap();
        let features = out.features.bind(&out.interactions);

        let table = PopularityTable::from_split(&split, out.interactions.item_count());
        let under5 = table.counts().iter().filter(|&&c| c < 5).count();
        let cold_tests = (0..out.interactions.user_count())
            .filter(|&u| (table.count(split.test_item(u).unwrap()) as usize) < 5)
            .count();

        let t0 = std::time::Instant::now();
        let mut vb_cfg = TrainConfig::new(factors / 2 + factors % 2, factors / 2);
        vb_cfg.learning_rate = lr;
        vb_cfg.lambda_theta = lambda;
        vb_cfg.lambda_beta = lambda_beta;
        vb_cfg.lambda_embed = 0.0;
        vb_cfg.epochs = epochs;
        vb_cfg.seed = seed;
        let (vb_params, vb_log) = train(&out.interactions, &split, Some(&features), &vb_cfg).unwrap();
        let vb_time = t0.elapsed().as_secs_f64();

        let mut mf_cfg = vb_cfg.clone();
        mf_cfg.latent_dim = factors;
        mf_cfg.visual_dim = 0;
        let (mf_params, mf_log) = train(&out.interactions, &split, None, &mf_cfg).unwrap();

        let vb = evaluate(&ModelScorer::new(&vb_params, Some(&features)), &out.interactions, &split, 5);
        let mf = evaluate(&ModelScorer::new(&mf_params, None), &out.interactions, &split, 5);
        let mp = evaluate(&PopularityScorer(PopularityTable::from_split(&split, out.interactions.item_count())), &out.interactions, &split, 5);
        let rnd = evaluate(&RandomScorer(seed), &out.interactions, &split, 5);

        println!(
            "seed {seed}: under5={under5} coldtests={cold_tests} | vbpr all={:.4} cold={:.4} (best ep {} val {:.4}, {vb_time:.1}s) | bprmf all={:.4} cold={:.4} (best ep {}) | mp all={:.4} cold={:.4} | rand all={:.4}",
            vb.auc_all, vb.auc_cold.unwrap_or(f64::NAN), vb_log.best_epoch, vb_log.best_val_auc,
            mf.auc_all, mf.auc_cold.unwrap_or(f64::NAN), mf_log.best_epoch,
            mp.auc_all, mp.auc_cold.unwrap_or(f64::NAN),
            rnd.auc_all,
        );
        gaps_all.push(vb.auc_all - mf.auc_all);
        gaps_cold.push(vb.auc_cold.unwrap_or(f64::NAN) - mf.auc_cold.unwrap_or(f64::NAN));
    }
    gaps_all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    gaps_cold.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!("median gap all={:.4} cold={:.4}", gaps_all[2], gaps_cold[2]);
}
