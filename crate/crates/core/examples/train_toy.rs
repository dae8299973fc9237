//! Train the toy encoder through unrolled Sinkhorn, then resume from the
//! checkpoint for a few more epochs.

use regkit::learn::{toy_dataset, train_toy_encoder, TrainConfig};

fn main() -> regkit::Result<()> {
    let samples = toy_dataset(12, 64, 3)?;
    let cfg = TrainConfig { epochs: 5, ..TrainConfig::default() };
    let first = train_toy_encoder(&samples, &cfg, None)?;
    println!("initial loss {:.4}", first.initial_loss);
    for (e, l) in first.loss_history.iter().enumerate() {
        println!("epoch {:>2} loss {l:.4}", e + 1);
    }
    let longer = TrainConfig { epochs: 8, ..cfg };
    let resumed = train_toy_encoder(&samples, &longer, Some(first))?;
    for (e, l) in resumed.loss_history.iter().enumerate().skip(5) {
        println!("epoch {:>2} loss {l:.4} (resumed)", e + 1);
    }
    Ok(())
}
