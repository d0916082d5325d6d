use crate::tensor::Tensor;

/// Anything that owns trainable tensors.
///
/// Gradients of a parameter set are stored in a value of the same type, so
/// `collect` and `collect_mut` must visit tensors in the same order.
pub trait Parameters {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>);

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>);

    fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.collect("", &mut out);
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        self.collect_mut(&mut out);
        out
    }

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
