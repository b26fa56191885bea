//! Finite-difference verification of every tape primitive.
//!
//! Each primitive is wrapped into a scalar computation (usually a squared
//! distance to a fixed random target) and checked over several seeds.
//! Inputs whose ReLU pre-activations or shrinkage weights land too close to
//! a kink are redrawn.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{grad_check_with_fault, KernelError, Primitive, Tape, Tensor, Var};

/// Minimum distance from a non-differentiable point for accepted inputs.
pub const KINK_MARGIN: f64 = 1e-3;

const SHRINK_LAMBDA: f64 = 0.05;
const MAX_REDRAWS: u64 = 1000;

#[derive(Clone, Debug, Serialize)]
pub struct PrimitiveCheck {
    pub primitive: String,
    pub max_relative_error: f64,
    pub max_abs_error: f64,
    pub seeds: u64,
}

pub(crate) fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::new(shape.to_vec(), data).expect("nonempty shape")
}

struct Case {
    inputs: Vec<Tensor<f64>>,
    target: Tensor<f64>,
    mask: Vec<bool>,
}

fn build(primitive: Primitive, tape: &mut Tape<'_, f64>, v: &[Var], case: &Case) -> Result<Var, KernelError> {
    let target = tape.leaf(case.target.clone());
    let out = match primitive {
        Primitive::MatMul => tape.matmul(v[0], v[1])?,
        Primitive::Transpose => tape.transpose(v[0]),
        Primitive::Relu => tape.relu(v[0]),
        Primitive::Sigmoid => tape.sigmoid(v[0]),
        Primitive::RowSoftmax => tape.row_softmax(v[0]),
        Primitive::Cosine => return tape.cosine(v[0], v[1]),
        Primitive::MaskedMeanRows => tape.masked_mean_rows(v[0], &case.mask)?,
        Primitive::FrobeniusSq => {
            let mask = Tensor::matrix(
                4,
                3,
                (0..12).map(|i| if i % 5 == 0 { 0.0 } else { 1.0 }).collect(),
            )?;
            return tape.frobenius_sq(v[0], v[1], Some(mask));
        }
        Primitive::RowRange => tape.row_range(v[0], 1, 2)?,
        Primitive::Concat => tape.concat(&v[..3])?,
        Primitive::WeightedSum => tape.weighted_sum(v[0], &v[1..])?,
        Primitive::HardShrink => tape.hard_shrink(v[0], SHRINK_LAMBDA)?,
        Primitive::Entropy => {
            let w = tape.row_softmax(v[0]);
            return Ok(tape.entropy(w));
        }
        Primitive::Add => tape.add(v[0], v[1])?,
        Primitive::Scale => tape.scale(v[0], 1.7),
        Primitive::MaskRows => tape.mask_rows(v[0], &case.mask)?,
    };
    tape.frobenius_sq(out, target, None)
}

fn draw_case(primitive: Primitive, rng: &mut ChaCha8Rng) -> Case {
    let r = |rng: &mut ChaCha8Rng, s: &[usize]| random_tensor(rng, s, 1.0);
    let (inputs, target_shape): (Vec<Tensor<f64>>, Vec<usize>) = match primitive {
        Primitive::MatMul => (vec![r(rng, &[3, 4]), r(rng, &[4, 2])], vec![3, 2]),
        Primitive::Transpose => (vec![r(rng, &[3, 4])], vec![4, 3]),
        Primitive::Relu | Primitive::Sigmoid | Primitive::Scale => {
            (vec![random_tensor(rng, &[3, 4], 3.0)], vec![3, 4])
        }
        Primitive::RowSoftmax => (vec![random_tensor(rng, &[3, 5], 2.0)], vec![3, 5]),
        Primitive::Cosine => (vec![r(rng, &[3, 4]), r(rng, &[3, 4])], vec![1, 1]),
        Primitive::MaskedMeanRows => (vec![r(rng, &[5, 3])], vec![1, 3]),
        Primitive::FrobeniusSq => (vec![r(rng, &[4, 3]), r(rng, &[4, 3])], vec![1, 1]),
        Primitive::RowRange => (vec![r(rng, &[5, 3])], vec![2, 3]),
        Primitive::Concat => (
            vec![r(rng, &[1, 1]), r(rng, &[1, 1]), r(rng, &[1, 1])],
            vec![1, 3],
        ),
        Primitive::WeightedSum => (
            vec![r(rng, &[1, 3]), r(rng, &[2, 3]), r(rng, &[2, 3]), r(rng, &[2, 3])],
            vec![2, 3],
        ),
        Primitive::HardShrink => {
            // Positive weights, one of them below the threshold.
            let mut w = random_tensor(rng, &[1, 5], 0.45);
            w.data_mut().iter_mut().for_each(|x| *x += 0.55);
            w.data_mut()[2] = rng.gen_range(0.0..0.03);
            (vec![w], vec![1, 5])
        }
        Primitive::Entropy => (vec![random_tensor(rng, &[1, 6], 2.0)], vec![1, 1]),
        Primitive::Add => (vec![r(rng, &[3, 4]), r(rng, &[3, 4])], vec![3, 4]),
        Primitive::MaskRows => (vec![r(rng, &[5, 3])], vec![5, 3]),
    };
    let target = r(rng, &target_shape);
    let mask = vec![true, false, true, true, false];
    Case { inputs, target, mask }
}

fn acceptable(primitive: Primitive, case: &Case) -> Result<bool, KernelError> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = case.inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    build(primitive, &mut tape, &vars, case)?;
    Ok(tape.relu_margin() > KINK_MARGIN && tape.shrink_margin() > KINK_MARGIN)
}

/// Checks one primitive over `seeds` independent random draws.
pub fn check_primitive(
    primitive: Primitive,
    seeds: u64,
    eps: f64,
    fault: Option<Primitive>,
) -> Result<PrimitiveCheck, KernelError> {
    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9) ^ primitive as u64);
        let mut case = draw_case(primitive, &mut rng);
        let mut redraws = 0;
        while !acceptable(primitive, &case)? && redraws < MAX_REDRAWS {
            case = draw_case(primitive, &mut rng);
            redraws += 1;
        }
        let report = grad_check_with_fault(
            |tape, vars| build(primitive, tape, vars, &case),
            &case.inputs,
            eps,
            fault,
        )?;
        max_rel = max_rel.max(report.max_relative_error);
        max_abs = max_abs.max(report.max_abs_error);
    }
    Ok(PrimitiveCheck {
        primitive: primitive.name().to_string(),
        max_relative_error: max_rel,
        max_abs_error: max_abs,
        seeds,
    })
}

/// Checks every primitive.
pub fn check_all_primitives(
    seeds: u64,
    eps: f64,
    fault: Option<Primitive>,
) -> Result<Vec<PrimitiveCheck>, KernelError> {
    Primitive::ALL
        .into_iter()
        .map(|p| check_primitive(p, seeds, eps, fault))
        .collect()
}
