//! One pass through the hypernetwork backbone with untrained weights:
//! proxies, global embedding, generated implicit function and the gradient
//! of its query-batch loss with respect to every backbone tensor.

use hyperocc::data::{make_query_batch, make_shape, partial_view, ShapeFamily, ShapeSpec, ViewSpec};
use hyperocc::encoder::{backward, encode, extract_proxies, predict, BackboneParams, EncoderArch};
use hyperocc::implicit::param_count;

fn main() -> hyperocc::Result<()> {
    let arch = EncoderArch::default();
    let params = BackboneParams::init(arch.clone(), 0)?;
    println!(
        "backbone: {} tensors, {} scalars; emits {} implicit-function scalars",
        params.tensors().len(),
        params.num_scalars(),
        param_count(&arch.target_arch)
    );

    let complete = make_shape(&ShapeSpec::new(ShapeFamily::Box { extents: [1.0, 0.6, 0.4] }), 4096, 1)?;
    let partial = partial_view(&complete, &ViewSpec::default())?;

    let proxies = extract_proxies(&partial, &params)?;
    println!("{} proxies from {} visible points", proxies.centers.len(), partial.len());
    let e = encode(&partial, &params)?;
    println!("global embedding: {} values, |e| = {:.3}", e.len(), e.iter().map(|v| v * v).sum::<f64>().sqrt());

    let f = predict(&partial, &params)?;
    let batch = make_query_batch(&complete, 1000, 0.02, 0.01, 2)?;
    let labels = batch.labels_f64();
    println!("untrained loss {:.4}", f.bce_loss(&batch.points, &labels));

    let (loss, grad) = backward(&partial, &batch, &params)?;
    println!("backward: loss {loss:.4}, gradient norm {:.4}", grad.l2_norm());
    for t in grad.tensors().iter().take(4) {
        println!("  {:<24} {}x{}", t.name, t.value.rows, t.value.cols);
    }
    Ok(())
}
