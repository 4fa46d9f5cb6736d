use crate::nn::{Module, Param};
use crate::real::Real;

pub(crate) fn extend_prefixed<'a, T: Real, M: Module<T> + ?Sized>(
    out: &mut Vec<(String, &'a Param<T>)>,
    prefix: &str,
    module: &'a M,
) {
    out.extend(
        module
            .named_params()
            .into_iter()
            .map(|(n, p)| (format!("{prefix}.{n}"), p)),
    );
}

pub(crate) fn extend_prefixed_mut<'a, T: Real, M: Module<T> + ?Sized>(
    out: &mut Vec<(String, &'a mut Param<T>)>,
    prefix: &str,
    module: &'a mut M,
) {
    out.extend(
        module
            .named_params_mut()
            .into_iter()
            .map(|(n, p)| (format!("{prefix}.{n}"), p)),
    );
}
