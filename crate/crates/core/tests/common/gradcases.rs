//! Gradient checks shared by the gradcheck and acceptance targets. Each case
//! records `(name, relative error, tolerance)` rows.

use super::{check_op, flatten, numeric_param_grads, rand_tensor, rel_err, STEP};
use pulsetone::neural::{loss_appearance, loss_estimator, loss_generator, loss_ppg, Generator, GeneratorConfig, Prn, PrnConfig};
use pulsetone::tensor::{BatchNormMode, BatchNormStats, Tape, Tensor, UnaryOp};

pub const OP_TOL: f64 = 1e-4;
pub const LOSS_TOL: f64 = 1e-3;
/// Through whole networks, steps of 1e-4 or 1e-5 cross relu kinks of some of the
/// thousands of pre-activations; 1e-6 does not.
pub const NET_STEP: f64 = 1e-6;

#[derive(Debug, Default)]
pub struct Checks {
    pub rows: Vec<(String, f64, f64)>,
}

impl Checks {
    pub fn check(&mut self, name: &str, err: f64, tol: f64) {
        self.rows.push((name.to_string(), err, tol));
    }

    pub fn failures(&self) -> Vec<String> {
        self.rows
            .iter()
            .filter(|(_, e, t)| !(e < t))
            .map(|(n, e, t)| format!("{n}: {e:.3e} (limit {t:.0e})"))
            .collect()
    }

    pub fn assert_all(&self) {
        let f = self.failures();
        assert!(f.is_empty(), "{f:?}");
    }
}

pub const ALL: &[(&str, fn(&mut Checks))] = &[
    ("elementwise_binary", elementwise_binary),
    ("matmul", matmul),
    ("conv3d_with_and_without_padding", conv3d_with_and_without_padding),
    ("avg_pool3d", avg_pool3d),
    ("relu", relu),
    ("batch_norm_train_and_eval", batch_norm_train_and_eval),
    ("reductions", reductions),
    ("square_sqrt_and_scalar_ops", square_sqrt_and_scalar_ops),
    ("shape_ops", shape_ops),
    ("composite_graph_reuses_nodes", composite_graph_reuses_nodes),
    ("pearson_loss", pearson_loss),
    ("appearance_loss", appearance_loss),
    ("generator_loss_end_to_end", generator_loss_end_to_end),
    ("estimator_loss_end_to_end", estimator_loss_end_to_end),
];

fn t(shape: &[usize], seed: u64) -> Tensor {
    rand_tensor(shape, seed, -1.0, 1.0, 0.05)
}

fn pos(shape: &[usize], seed: u64) -> Tensor {
    rand_tensor(shape, seed, 0.5, 2.0, 0.0)
}

pub fn elementwise_binary(c: &mut Checks) {
    let (a, b) = (t(&[2, 3], 1), t(&[2, 3], 2));
    c.check("add", check_op(&[a.clone(), b.clone()], STEP, |tp, x| tp.add(x[0], x[1]).unwrap()), OP_TOL);
    c.check("sub", check_op(&[a.clone(), b.clone()], STEP, |tp, x| tp.sub(x[0], x[1]).unwrap()), OP_TOL);
    c.check("mul", check_op(&[a, b], STEP, |tp, x| tp.mul(x[0], x[1]).unwrap()), OP_TOL);
}

pub fn matmul(c: &mut Checks) {
    let err = check_op(&[t(&[3, 4], 3), t(&[4, 2], 4)], STEP, |tp, x| tp.matmul(x[0], x[1]).unwrap());
    c.check("matmul", err, OP_TOL);
}

pub fn conv3d_with_and_without_padding(c: &mut Checks) {
    for pad in [[0, 0, 0], [1, 1, 1], [1, 0, 1]] {
        let err = check_op(&[t(&[2, 2, 4, 4, 3], 5), t(&[3, 2, 3, 3, 3], 6)], STEP, |tp, x| {
            tp.conv3d(x[0], x[1], pad).unwrap()
        });
        c.check("conv3d", err, OP_TOL);
    }
}

pub fn avg_pool3d(c: &mut Checks) {
    let err = check_op(&[t(&[1, 2, 2, 4, 4], 7)], STEP, |tp, x| tp.avg_pool3d(x[0], [1, 2, 2]).unwrap());
    c.check("avg_pool3d", err, OP_TOL);
}

pub fn relu(c: &mut Checks) {
    c.check("relu", check_op(&[t(&[4, 5], 8)], STEP, |tp, x| tp.relu(x[0]).unwrap()), OP_TOL);
}

pub fn batch_norm_train_and_eval(c: &mut Checks) {
    let inputs = [t(&[3, 2, 2, 3], 9), t(&[2], 10), t(&[2], 11)];
    let err = check_op(&inputs, STEP, |tp, x| {
        tp.batch_norm(x[0], x[1], x[2], BatchNormMode::Train, None).unwrap().0
    });
    c.check("batch_norm train", err, OP_TOL);
    let stats = BatchNormStats {
        mean: vec![0.1, -0.2],
        var: vec![0.7, 1.3],
    };
    let err = check_op(&inputs, STEP, |tp, x| {
        tp.batch_norm(x[0], x[1], x[2], BatchNormMode::Eval, Some(&stats)).unwrap().0
    });
    c.check("batch_norm eval", err, OP_TOL);
}

pub fn reductions(c: &mut Checks) {
    let x = [t(&[2, 3, 4], 12)];
    c.check("sum", check_op(&x, STEP, |tp, x| tp.sum(x[0]).unwrap()), OP_TOL);
    c.check("mean", check_op(&x, STEP, |tp, x| tp.mean(x[0]).unwrap()), OP_TOL);
    c.check("sum_axes", check_op(&x, STEP, |tp, x| tp.sum_axes(x[0], &[0, 2]).unwrap()), OP_TOL);
    c.check("mean_axes", check_op(&x, STEP, |tp, x| tp.mean_axes(x[0], &[1]).unwrap()), OP_TOL);
}

pub fn square_sqrt_and_scalar_ops(c: &mut Checks) {
    c.check("square", check_op(&[t(&[5], 13)], STEP, |tp, x| tp.square(x[0]).unwrap()), OP_TOL);
    c.check("sqrt", check_op(&[pos(&[5], 14)], STEP, |tp, x| tp.sqrt(x[0]).unwrap()), OP_TOL);
    let ops = [
        UnaryOp::Scale(-1.7),
        UnaryOp::Shift(0.3),
        UnaryOp::Recip,
        UnaryOp::Exp,
        UnaryOp::Ln,
        UnaryOp::Sigmoid,
        UnaryOp::Abs,
    ];
    for op in ops {
        let x = if matches!(op, UnaryOp::Recip | UnaryOp::Ln) { pos(&[6], 15) } else { t(&[6], 15) };
        c.check(&format!("{op:?}"), check_op(&[x], STEP, |tp, x| tp.unary(x[0], op).unwrap()), OP_TOL);
    }
}

pub fn shape_ops(c: &mut Checks) {
    let x = t(&[2, 3, 4], 16);
    c.check("reshape", check_op(&[x.clone()], STEP, |tp, x| tp.reshape(x[0], &[6, 4]).unwrap()), OP_TOL);
    c.check("slice", check_op(&[x.clone()], STEP, |tp, x| tp.slice(x[0], 2, 1, 2).unwrap()), OP_TOL);
    let err = check_op(&[x, t(&[2, 1, 4], 17)], STEP, |tp, x| tp.concat(&[x[0], x[1]], 1).unwrap());
    c.check("concat", err, OP_TOL);
    let err = check_op(&[t(&[3, 1], 18)], STEP, |tp, x| tp.broadcast(x[0], &[2, 3, 4]).unwrap());
    c.check("broadcast", err, OP_TOL);
}

pub fn composite_graph_reuses_nodes(c: &mut Checks) {
    // x feeds several paths; gradients must accumulate.
    let err = check_op(&[t(&[3, 3], 19), t(&[3, 3], 20)], STEP, |tp, x| {
        let m = tp.matmul(x[0], x[1]).unwrap();
        let s = tp.unary(m, UnaryOp::Sigmoid).unwrap();
        let q = tp.mul(s, x[0]).unwrap();
        let r = tp.relu(q).unwrap();
        tp.add(r, x[1]).unwrap()
    });
    c.check("composite", err, OP_TOL);
}

pub fn pearson_loss(c: &mut Checks) {
    let p = t(&[2, 16], 21);
    let err = check_op(&[t(&[2, 16], 22)], STEP, |tp, x| {
        let pc = tp.constant(&p);
        loss_ppg(tp, pc, x[0]).unwrap()
    });
    c.check("loss_ppg", err, OP_TOL);
}

pub fn appearance_loss(c: &mut Checks) {
    // Differences stay at least 0.05 away from the threshold.
    let a = rand_tensor(&[40], 23, 0.0, 1.0, 0.0);
    let mut b = a.clone();
    for (i, v) in b.data_mut().iter_mut().enumerate() {
        *v += if i % 2 == 0 { 0.02 } else { 0.3 } * if i % 3 == 0 { -1.0 } else { 1.0 };
    }
    let err = check_op(&[b], STEP, |tp, x| {
        let ac = tp.constant(&a);
        loss_appearance(tp, ac, x[0], 0.1).unwrap()
    });
    c.check("loss_appearance", err, OP_TOL);
}

fn models() -> (Generator, Prn) {
    let mut g = Generator::new(GeneratorConfig { channels: [2, 3], res_blocks: 1 }, 1);
    // Non-zero output layer so gradients reach every generator parameter.
    let name = g.params.tensors.keys().find(|k| k.starts_with("out") && k.ends_with("conv")).unwrap().clone();
    let shape = g.params.tensors[&name].shape().to_vec();
    g.params.tensors[&name] = rand_tensor(&shape, 30, -0.3, 0.3, 0.0);
    (g, Prn::new(PrnConfig { channels: [2, 2, 2] }, 2))
}

fn clip_batch() -> (Tensor, Tensor, Tensor) {
    let light = rand_tensor(&[2, 3, 8, 8, 8], 31, 0.45, 0.85, 0.0);
    let dark = Tensor::new(light.shape().to_vec(), light.data().iter().map(|v| v - 0.35).collect()).unwrap();
    let pulse = Tensor::new(
        vec![2, 8],
        (0..16).map(|i| (i as f64 * 0.9).sin() + 0.1 * (i / 8) as f64).collect(),
    )
    .unwrap();
    (light, dark, pulse)
}

pub fn generator_loss_end_to_end(c: &mut Checks) {
    let (g, e) = models();
    let (light, dark, pulse) = clip_batch();
    let value = |params: &pulsetone::neural::ParamSet| {
        let g = Generator::from_params(params.clone()).unwrap();
        let mut tape = Tape::new();
        let gb = g.params.bind(&mut tape, true);
        let eb = e.params.bind(&mut tape, false);
        loss_generator(&mut tape, &light, &dark, &pulse, &g, &gb, &e, &eb, 1.0, 0.1).unwrap().3.total
    };
    let mut tape = Tape::new();
    let gb = g.params.bind(&mut tape, true);
    let eb = e.params.bind(&mut tape, false);
    let (loss, ..) = loss_generator(&mut tape, &light, &dark, &pulse, &g, &gb, &e, &eb, 1.0, 0.1).unwrap();
    tape.backward(loss).unwrap();
    let analytic: Vec<f64> = g.params.grads(&tape, &gb).iter().flat_map(|t| t.data().to_vec()).collect();
    // The estimator is bound as constants: nothing reaches it.
    let leaked = e.params.grads(&tape, &eb).iter().flat_map(|t| t.data().to_vec()).fold(0.0, |m: f64, v| m.max(v.abs()));
    c.check("estimator frozen", leaked, f64::MIN_POSITIVE);
    let numeric = flatten(&numeric_param_grads(&g.params, NET_STEP, value));
    c.check("loss_generator", rel_err(&analytic, &numeric), LOSS_TOL);
}

pub fn estimator_loss_end_to_end(c: &mut Checks) {
    let (g, e) = models();
    let (light, _, pulse) = clip_batch();
    let fake = g.infer(&light).unwrap();
    let value = |params: &pulsetone::neural::ParamSet| {
        let e = Prn::from_params(params.clone()).unwrap();
        let mut tape = Tape::new();
        let eb = e.params.bind(&mut tape, true);
        let (l, _) = loss_estimator(&mut tape, &light, &fake, &pulse, &e, &eb).unwrap();
        tape.scalar_value(l)
    };
    let mut tape = Tape::new();
    let eb = e.params.bind(&mut tape, true);
    let (loss, _) = loss_estimator(&mut tape, &light, &fake, &pulse, &e, &eb).unwrap();
    tape.backward(loss).unwrap();
    let analytic: Vec<f64> = e.params.grads(&tape, &eb).iter().flat_map(|t| t.data().to_vec()).collect();
    let numeric = flatten(&numeric_param_grads(&e.params, NET_STEP, value));
    c.check("loss_estimator", rel_err(&analytic, &numeric), LOSS_TOL);
}
