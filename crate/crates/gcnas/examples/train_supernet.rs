//! Train the dense supernet on a synthetic community-detection task and
//! report losses plus weight-inheritance accuracy of a few subnets.
//!
//! ```bash
//! cargo run --release -p gcnas --example train_supernet
//! ```

use gcnas::data::{generate_sbm, SbmParams, Split};
use gcnas::supernet::{
    accuracy, evaluate_subnet, train_supernet, PreparedData, SubnetMask, Supernet, SupernetConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> gcnas::Result<()> {
    let start = std::time::Instant::now();
    let data_params = SbmParams::default();
    let dataset = generate_sbm(&data_params)?;
    let config = SupernetConfig::default();
    let data = PreparedData::new(&dataset, config.hidden_dim);
    println!(
        "dataset: {} graphs, {} nodes each, {} classes",
        dataset.graphs.len(),
        data_params.nodes_per_graph,
        data_params.num_classes
    );

    let mut net = Supernet::init(&config, dataset.d_in())?;
    println!("supernet: L={} d={} params={}", config.layers, config.hidden_dim, net.num_parameters());

    train_supernet(&mut net, &data, &[], &mut |_, _| Ok(()))?;
    println!(
        "trained {} epochs in {:.1?}: loss {:.4} -> {:.4}",
        config.epochs,
        start.elapsed(),
        net.log.epoch_losses.first().unwrap(),
        net.log.epoch_losses.last().unwrap()
    );

    let dense = SubnetMask::all_true(config.layers);
    println!("dense valid accuracy: {:.3}", accuracy(&net, &data, Split::Valid, &dense)?);

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..4 {
        let mask = SubnetMask::random(config.layers, &mut rng);
        let acc = evaluate_subnet(&net, &mask, &data, Split::Valid, 0, 0)?;
        println!("random subnet {i} [{}] inherited-weight accuracy: {acc:.3}", mask.to_bit_string());
    }
    Ok(())
}
