//! Inputs shared by the benchmarks under `benches/`.

use finslerlab_core::metric::{Structure, TangentSample};
use finslerlab_core::models::{builtin, P0};
use finslerlab_core::ModelDef;

pub fn example() -> ModelDef {
    builtin("matsumoto_example").expect("shipped example parses")
}

pub fn flat() -> ModelDef {
    builtin("euclid_concurrent").expect("shipped flat model parses")
}

pub fn example_p0(model: &ModelDef) -> TangentSample {
    model.sample(&P0.0, &P0.1)
}

pub fn flat_sample(model: &ModelDef) -> TangentSample {
    model.sample(&[0.3, -0.2], &[0.8, 0.6])
}
