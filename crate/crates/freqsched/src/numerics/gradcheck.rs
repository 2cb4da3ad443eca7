//! Central finite-difference verification of backward passes.

use super::param::ParamTree;

/// Verifies the gradients currently stored in `tree.grad` against central
/// differences of `loss`, nudging every parameter coordinate by `±h`.
///
/// Returns the maximum relative error over all coordinates, with the
/// denominator floored to keep finite-difference noise on dead coordinates
/// from registering as disagreement.
pub fn check_tree_gradients(
    tree: &mut ParamTree,
    h: f64,
    loss: impl Fn(&ParamTree) -> f64,
) -> f64 {
    let mut max_err: f64 = 0.0;
    for id in tree.ids() {
        for i in 0..tree.leaf(id).len() {
            let original = tree.leaf(id).values[i];
            tree.leaf_mut(id).values[i] = original + h;
            let plus = loss(tree);
            tree.leaf_mut(id).values[i] = original - h;
            let minus = loss(tree);
            tree.leaf_mut(id).values[i] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let analytic = tree.leaf(id).grad[i];
            let err = (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-5);
            max_err = max_err.max(err);
        }
    }
    max_err
}
