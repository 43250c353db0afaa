//! Central-difference gradient checks of the autodiff primitives and the
//! full encoder + classifier + reversed discriminator stack.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use strurw::autodiff::{SparseRows, Targets, Tape, Var};
use strurw::gnn::{aggregation_operator, Aggregation, EncoderConfig, ModelConfig, ModelState};
use strurw::graph::LabeledGraph;
use strurw::rng::stream;

pub const H: f64 = 1e-5;
pub const MAX_REL: f64 = 1e-4;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
}

fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = stream(seed, "gradcheck", &[rows as u64, cols as u64]);
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

/// Build `f` on a fresh tape over `inputs`, reduce its output with the fixed
/// functional `Σ_ij l_i y_ij r_j`, and return the largest relative error of
/// the gradient w.r.t. any input entry against central differences.
/// `scale[i]` multiplies the numeric gradient of input `i` (gradient reversal).
pub fn max_error<F>(inputs: &[Array2<f64>], scale: &[f64], f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let forward = |xs: &[Array2<f64>], want_grad: bool| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone()).unwrap()).collect();
        let y = f(&mut tape, &vars);
        let (rows, cols) = tape.value(y).dim();
        let l = tape.leaf(random(1, rows, 11)).unwrap();
        let r = tape.leaf(random(cols, 1, 12)).unwrap();
        let ly = tape.matmul(l, y).unwrap();
        let loss = tape.matmul(ly, r).unwrap();
        let value = tape.scalar(loss);
        let grads = want_grad.then(|| {
            let g = tape.backward(loss).unwrap();
            vars.iter()
                .zip(xs)
                .map(|(&v, x)| g.get(v).cloned().unwrap_or_else(|| Array2::zeros(x.raw_dim())))
                .collect::<Vec<_>>()
        });
        (value, grads)
    };
    let analytic = forward(inputs, true).1.unwrap();
    let mut worst: f64 = 0.0;
    for (i, x) in inputs.iter().enumerate() {
        for idx in 0..x.len() {
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            let mut plus = inputs.to_vec();
            plus[i][[r, c]] += H;
            let mut minus = inputs.to_vec();
            minus[i][[r, c]] -= H;
            let numeric = (forward(&plus, false).0 - forward(&minus, false).0) / (2.0 * H) * scale[i];
            worst = worst.max(rel_err(analytic[i][[r, c]], numeric));
        }
    }
    worst
}

/// Max relative error per primitive.
pub fn primitive_errors() -> Vec<(&'static str, f64)> {
    let a = random(4, 3, 1);
    let b = random(3, 5, 2);
    let c = random(4, 3, 3);
    let bias = random(1, 3, 4);
    let mut out = vec![
        ("matmul", max_error(&[a.clone(), b], &[1.0, 1.0], |t, v| t.matmul(v[0], v[1]).unwrap())),
        ("add", max_error(&[a.clone(), c.clone()], &[1.0, 1.0], |t, v| t.add(v[0], v[1]).unwrap())),
        ("add_bias", max_error(&[a.clone(), bias], &[1.0, 1.0], |t, v| t.add_bias(v[0], v[1]).unwrap())),
        ("relu", max_error(std::slice::from_ref(&a), &[1.0], |t, v| t.relu(v[0]).unwrap())),
        ("scalar_mul", max_error(std::slice::from_ref(&a), &[1.0], |t, v| t.scalar_mul(v[0], -2.5).unwrap())),
        ("concat_rows", max_error(&[a.clone(), c], &[1.0, 1.0], |t, v| t.concat_rows(v[0], v[1]).unwrap())),
        ("sum", max_error(std::slice::from_ref(&a), &[1.0], |t, v| t.sum(v[0]).unwrap())),
    ];
    let index = Arc::new(vec![2, 0, 0, 3, 1]);
    out.push(("gather_rows", max_error(std::slice::from_ref(&a), &[1.0], move |t, v| t.gather_rows(v[0], Arc::clone(&index)).unwrap())));
    // Row 0 <- {1, 2}, row 1 <- {0}, row 2 empty, row 3 <- {0, 1, 2}.
    let op = Arc::new(SparseRows::new(3, vec![0, 2, 3, 3, 6], vec![1, 2, 0, 0, 1, 2], vec![0.3, 0.7, 1.0, 0.2, 0.5, 0.3]).unwrap());
    out.push(("aggregate", max_error(&[random(3, 2, 5)], &[1.0], move |t, v| t.aggregate(v[0], Arc::clone(&op)).unwrap())));
    for alpha in [0.0, 0.5, 1.0] {
        let x = random(3, 2, 6);
        out.push(("grad_reversal", max_error(&[x], &[-alpha], move |t, v| t.grad_reversal(v[0], alpha).unwrap())));
    }

    let logits = random(5, 3, 7);
    let hard = Targets::Classes(vec![0, 2, 1, 1, 0]);
    let weights = [0.5, 2.0, 1.0, 0.1, 1.4];
    let soft = {
        let raw = random(5, 3, 8).mapv(f64::exp);
        let sums = raw.sum_axis(ndarray::Axis(1)).insert_axis(ndarray::Axis(1));
        Targets::Soft(raw / sums)
    };
    out.push(("cross_entropy", max_error(std::slice::from_ref(&logits), &[1.0], |t, v| t.cross_entropy(v[0], &hard, None).unwrap())));
    out.push(("cross_entropy_weighted", max_error(std::slice::from_ref(&logits), &[1.0], |t, v| t.cross_entropy(v[0], &hard, Some(&weights)).unwrap())));
    out.push(("cross_entropy_soft", max_error(&[logits], &[1.0], |t, v| t.cross_entropy(v[0], &soft, None).unwrap())));
    let dom = random(6, 1, 9).mapv(|x| 4.0 * x);
    let targets = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
    out.push(("bce_with_logits", max_error(&[dom], &[1.0], |t, v| t.bce_with_logits(v[0], &targets).unwrap())));
    out
}

fn small_graph() -> LabeledGraph {
    let edges = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (4, 5)];
    let attrs = random(7, 3, 20);
    let labels = vec![Some(0), Some(1), Some(2), Some(0), Some(1), Some(2), Some(0)];
    let g = LabeledGraph::new(7, &edges, attrs, labels, 3).unwrap();
    g.map_edge_weights(|s, r| 0.5 + 0.25 * ((s * 7 + r) % 5) as f64).unwrap()
}

/// Record CE + BCE of the full stack; returns (tape, params, ce, bce).
fn record(model: &ModelState, g: &LabeledGraph, op: &Arc<SparseRows>, alpha: f64) -> (Tape, Vec<Var>, Var, Var) {
    let mut tape = Tape::new();
    let p = model.bind(&mut tape).unwrap();
    let x = tape.leaf(g.attrs().clone()).unwrap();
    let h = model.encode_on(&mut tape, &p, x, op).unwrap();
    let logits = model.classify_on(&mut tape, &p, h).unwrap();
    let ce = tape.cross_entropy(logits, &Targets::Classes(g.known_labels().unwrap()), None).unwrap();
    let d = model.discriminate_on(&mut tape, &p, h, alpha).unwrap();
    let dom: Vec<f64> = (0..g.num_nodes()).map(|v| (v % 2) as f64).collect();
    let bce = tape.bce_with_logits(d, &dom).unwrap();
    (tape, p.vars().to_vec(), ce, bce)
}

/// Two-layer encoder, linear classifier and discriminator behind a reversal
/// of strength 0.7, trained on CE + BCE. The encoder's expected gradient is
/// `dCE - α dBCE`, each term differenced separately.
pub fn full_stack_error(aggregation: Aggregation) -> f64 {
    let g = small_graph();
    let config = ModelConfig {
        encoder: EncoderConfig {
            input_dim: 3,
            layer_dims: vec![4, 3],
            aggregation,
        },
        num_classes: 3,
        discriminator_hidden: 4,
    };
    let model = ModelState::init(config.clone(), 0.01, 5).unwrap();
    let op = aggregation_operator(&g, aggregation);
    let alpha = 0.7;
    let n_enc = 3 * config.encoder.layer_dims.len();
    let n_cls = n_enc + 2;

    let (mut tape, vars, ce, bce) = record(&model, &g, &op, alpha);
    let total = tape.add(ce, bce).unwrap();
    let grads = tape.backward(total).unwrap();
    let losses = |m: &ModelState| {
        let (t, _, ce, bce) = record(m, &g, &op, alpha);
        (t.scalar(ce), t.scalar(bce))
    };

    let mut worst: f64 = 0.0;
    for (i, param) in model.params.iter().enumerate() {
        let analytic = grads.get(vars[i]).cloned().unwrap_or_else(|| Array2::zeros(param.raw_dim()));
        for r in 0..param.nrows() {
            for c in 0..param.ncols() {
                let mut plus = model.clone();
                plus.params[i][[r, c]] += H;
                let mut minus = model.clone();
                minus.params[i][[r, c]] -= H;
                let ((cp, bp), (cm, bm)) = (losses(&plus), losses(&minus));
                let (dce, dbce) = ((cp - cm) / (2.0 * H), (bp - bm) / (2.0 * H));
                let expected = if i < n_enc {
                    dce - alpha * dbce
                } else if i < n_cls {
                    dce
                } else {
                    dbce
                };
                worst = worst.max(rel_err(analytic[[r, c]], expected));
            }
        }
    }
    worst
}
