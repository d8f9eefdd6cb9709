//! Reverse-mode gradients of a projected LSTM step checked against central
//! finite differences.

use rnnt_personalize::grad::check::check_gradient;
use rnnt_personalize::grad::Tensor;

fn main() -> anyhow::Result<()> {
    let x = Tensor::matrix(1, 3, vec![0.4, -1.2, 0.7])?;
    let w = Tensor::matrix(3, 8, (0..24).map(|k| ((k * 7 % 11) as f64 - 5.0) / 10.0).collect())?;
    let proj = Tensor::matrix(2, 1, vec![2.5, -1.8])?;

    let check = check_gradient(&[x, w, proj], 1e-6, |t, v| {
        let z = t.matmul(v[0], v[1])?;
        let i = t.slice_cols(z, 0, 2)?;
        let g = t.slice_cols(z, 4, 6)?;
        let o = t.slice_cols(z, 6, 8)?;
        let (i, g, o) = (t.sigmoid(i)?, t.tanh(g)?, t.sigmoid(o)?);
        let c = t.mul(i, g)?;
        let c = t.tanh(c)?;
        let m = t.mul(o, c)?;
        let r = t.matmul(m, v[2])?;
        let sq = t.mul(r, r)?;
        t.sum(sq)
    })?;

    println!("loss {:.6}", check.value);
    for (k, (a, n)) in check.analytic.iter().zip(&check.numeric).enumerate().take(6) {
        println!("  d/dθ[{k}]  analytic {a:+.9}  numeric {n:+.9}");
    }
    println!("relative error over {} inputs: {:.2e}", check.analytic.len(), check.rel_error());
    Ok(())
}
