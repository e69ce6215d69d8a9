use gcnas::data::{generate_sbm, Split};
use gcnas::ga::repair;
use gcnas::harness::{
    sample_unique_masks, scheme_for_method, train_and_partition, ExperimentConfig,
    PartitionMethod,
};
use gcnas::stats::{kendall_tau, spearman_rho};
use gcnas::supernet::{derive_sub_supernets, evaluate_subnet, retrain_from_scratch, PreparedData};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn main() -> gcnas::Result<()> {
  for (sup_ep, bs) in [(25usize, 8usize), (40, 4), (25, 4)] {
    println!("== supernet epochs {sup_ep} batch {bs}");
    let mut taus_gc = vec![];
    let mut taus_none = vec![];
    for seed in [101u64, 102, 103] {
        let mut cfg = ExperimentConfig::default();
        cfg.supernet.seed = seed;
        cfg.supernet.epochs = sup_ep;
        cfg.supernet.batch_size = bs;
        cfg.partition.method = PartitionMethod::Gc;
        let dataset = generate_sbm(&cfg.data)?;
        let data = PreparedData::new(&dataset, cfg.supernet.hidden_dim);
        let outcome = train_and_partition(&cfg, &data)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x3a5c_93d1);
        let masks = sample_unique_masks(cfg.supernet.layers, 16, &mut rng);
        let mut scratch_cfg = cfg.supernet.clone();
        scratch_cfg.epochs = cfg.protocol.scratch_epochs;
        let truth: Vec<f64> = masks
            .par_iter()
            .map(|m| retrain_from_scratch(m, &data, &scratch_cfg, seed ^ m.fingerprint()).map(|r| r.1))
            .collect::<gcnas::Result<_>>()?;
        for method in [PartitionMethod::Gc, PartitionMethod::None] {
            let scheme = scheme_for_method(&outcome.scheme, method, seed);
            let ft = if scheme.chosen.is_empty() { 0 } else { cfg.partition.sub_supernet_fine_tune_epochs };
            let subs = derive_sub_supernets(&outcome.supernet, &scheme, &data, ft, false, seed ^ 0x5b5)?;
            let est: Vec<f64> = masks
                .par_iter()
                .map(|mask| {
                    let home = repair(mask, &subs).1;
                    evaluate_subnet(&subs[home].params, mask, &data, Split::Test, cfg.protocol.fine_tune_epochs, seed ^ mask.fingerprint() ^ 0xf1e7)
                })
                .collect::<gcnas::Result<_>>()?;
            let tau = kendall_tau(&truth, &est)?;
            let rho = spearman_rho(&truth, &est)?;
            println!("seed {seed} {:>4}: tau {tau:+.3} rho {rho:+.3}", method.name());
            if method == PartitionMethod::Gc { taus_gc.push(tau) } else { taus_none.push(tau) }

        }
    }
    let m = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    println!("mean tau GC {:+.3} vs NONE {:+.3}", m(&taus_gc), m(&taus_none));
  }
    Ok(())
}
