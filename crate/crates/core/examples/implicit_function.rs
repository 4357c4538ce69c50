//! An occupancy MLP built by hand: forward pass, input gradients checked
//! against finite differences, and the binary record round trip.

use hyperocc::implicit::{param_count, LayerParams};
use hyperocc::{ImplicitParams, MlpArch, Point3};

/// Six paired leaky units give `logit = 4 - 10 |x|_1`, a solid octahedron.
fn octahedron() -> hyperocc::Result<ImplicitParams> {
    let arch = MlpArch::new(vec![3, 6, 1], 0.2)?;
    let mut w1 = Vec::new();
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            let mut row = [0.0; 3];
            row[axis] = sign;
            w1.extend_from_slice(&row);
        }
    }
    let hidden = LayerParams { weight: w1, bias: vec![0.0; 6], scale: vec![1.0; 6] };
    let out = LayerParams { weight: vec![-12.5; 6], bias: vec![4.0], scale: vec![1.0] };
    ImplicitParams::new(arch, vec![hidden, out])
}

fn main() -> hyperocc::Result<()> {
    let f = octahedron()?;
    println!("{} scalars", param_count(f.arch()));

    for x in [0.0, 0.2, 0.4, 0.6] {
        let p = Point3::new(x, 0.05, -0.03);
        let (c, grad) = f.input_gradient(p);
        let h = 1e-6;
        let nll = |q: Point3| -f.confidence(q).ln();
        let fd_x = (nll(p + Point3::new(h, 0.0, 0.0)) - nll(p - Point3::new(h, 0.0, 0.0))) / (2.0 * h);
        println!("x={x:.1}  g={c:.4}  d(-log g)/dx analytic {:+.5} fd {:+.5}", grad.x, fd_x);
    }

    let mut bytes = Vec::new();
    f.write_to(&mut bytes)?;
    let back = ImplicitParams::read_from(bytes.as_slice())?;
    println!("binary record: {} bytes, round trip equal: {}", bytes.len(), back == f);
    Ok(())
}
