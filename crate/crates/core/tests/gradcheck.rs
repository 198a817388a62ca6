//! Reverse-mode gradients against central finite differences.

mod common;

use common::gradcases::{self, Checks};

fn run(case: fn(&mut Checks)) {
    let mut c = Checks::default();
    case(&mut c);
    c.assert_all();
}

#[test]
fn elementwise_binary() {
    run(gradcases::elementwise_binary);
}

#[test]
fn matmul() {
    run(gradcases::matmul);
}

#[test]
fn conv3d_with_and_without_padding() {
    run(gradcases::conv3d_with_and_without_padding);
}

#[test]
fn avg_pool3d() {
    run(gradcases::avg_pool3d);
}

#[test]
fn relu() {
    run(gradcases::relu);
}

#[test]
fn batch_norm_train_and_eval() {
    run(gradcases::batch_norm_train_and_eval);
}

#[test]
fn reductions() {
    run(gradcases::reductions);
}

#[test]
fn square_sqrt_and_scalar_ops() {
    run(gradcases::square_sqrt_and_scalar_ops);
}

#[test]
fn shape_ops() {
    run(gradcases::shape_ops);
}

#[test]
fn composite_graph_reuses_nodes() {
    run(gradcases::composite_graph_reuses_nodes);
}

#[test]
fn pearson_loss() {
    run(gradcases::pearson_loss);
}

#[test]
fn appearance_loss() {
    run(gradcases::appearance_loss);
}

#[test]
fn generator_loss_end_to_end() {
    run(gradcases::generator_loss_end_to_end);
}

#[test]
fn estimator_loss_end_to_end() {
    run(gradcases::estimator_loss_end_to_end);
}
