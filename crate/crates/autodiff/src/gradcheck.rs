//! Central finite-difference checks of the differentiable operations.
//!
//! Each [`Case`] builds a small graph from random inputs. The checker compares
//! the tape's gradient of `sum(out * r)`, for a fixed random `r`, against
//! central differences of the same scalar.

use crate::{ConvVars, LstmVars, Result, Rng, Tape, Var};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

pub struct Input {
    pub data: Vec<f64>,
    pub shape: Vec<usize>,
}

pub fn random_input(rng: &mut Rng, shape: &[usize], scale: f64) -> Input {
    let n = shape.iter().product();
    Input {
        data: (0..n).map(|_| rng.uniform_range(-scale, scale)).collect(),
        shape: shape.to_vec(),
    }
}

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;
type MakeInputs = Box<dyn Fn(&mut Rng) -> Vec<Input>>;

/// One operation under test.
pub struct Case {
    pub name: &'static str,
    build: Build,
    inputs: MakeInputs,
}

fn case(
    name: &'static str,
    build: impl Fn(&mut Tape, &[Var]) -> Result<Var> + 'static,
    inputs: impl Fn(&mut Rng) -> Vec<Input> + 'static,
) -> Case {
    Case {
        name,
        build: Box::new(build),
        inputs: Box::new(inputs),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseOutcome {
    pub name: &'static str,
    pub instances: usize,
    /// Largest norm-wise relative error over instances and inputs.
    pub max_relative_error: f64,
}

impl CaseOutcome {
    pub fn passed(&self) -> bool {
        self.max_relative_error <= TOLERANCE
    }
}

fn projected_loss(build: &Build, inputs: &[Input], proj_seed: u64) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|i| tape.variable(i.data.clone(), &i.shape))
        .collect::<Result<_>>()?;
    let out = build(&mut tape, &vars)?;
    let mut prng = Rng::new(proj_seed);
    let n = tape.value(out).len();
    let r: Vec<f64> = (0..n).map(|_| prng.uniform_range(-1.0, 1.0)).collect();
    let shape = tape.shape(out).to_vec();
    let rv = tape.constant(r, &shape)?;
    let prod = tape.mul(out, rv)?;
    let loss = tape.sum(prod);
    let value = tape.scalar(loss);
    let grads = tape.backward(loss)?;
    let gs = vars
        .iter()
        .zip(inputs)
        .map(|(v, i)| {
            grads
                .get(*v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; i.data.len()])
        })
        .collect();
    Ok((value, gs))
}

impl Case {
    /// Runs `instances` random instances seeded from `seed`.
    pub fn run(&self, instances: u64, seed: u64) -> Result<CaseOutcome> {
        let mut worst = 0.0f64;
        for s in 0..instances {
            let mut rng = Rng::new(seed.wrapping_add(s));
            let mut inputs = (self.inputs)(&mut rng);
            let (_, analytic) = projected_loss(&self.build, &inputs, s)?;
            for k in 0..inputs.len() {
                let mut numeric = vec![0.0; inputs[k].data.len()];
                for i in 0..numeric.len() {
                    let orig = inputs[k].data[i];
                    inputs[k].data[i] = orig + STEP;
                    let (up, _) = projected_loss(&self.build, &inputs, s)?;
                    inputs[k].data[i] = orig - STEP;
                    let (down, _) = projected_loss(&self.build, &inputs, s)?;
                    inputs[k].data[i] = orig;
                    numeric[i] = (up - down) / (2.0 * STEP);
                }
                let diff = analytic[k]
                    .iter()
                    .zip(&numeric)
                    .map(|(a, n)| (a - n).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let na = analytic[k].iter().map(|a| a * a).sum::<f64>().sqrt();
                let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
                let rel = diff / na.max(nn).max(1e-8);
                worst = if rel.is_nan() {
                    f64::INFINITY
                } else {
                    worst.max(rel)
                };
            }
        }
        Ok(CaseOutcome {
            name: self.name,
            instances: instances as usize,
            max_relative_error: worst,
        })
    }
}

/// Every differentiable tape operation, at generic points where the
/// operation is smooth.
pub fn cases() -> Vec<Case> {
    let mut cases = Vec::new();
    cases.push(case(
        "matmul",
        |t, v| t.matmul(v[0], v[1]),
        |r| vec![random_input(r, &[3, 4], 1.0), random_input(r, &[4, 2], 1.0)],
    ));
    cases.push(case(
        "matmul_vec",
        |t, v| t.matmul(v[0], v[1]),
        |r| vec![random_input(r, &[4], 1.0), random_input(r, &[4, 3], 1.0)],
    ));

    cases.push(case(
        "add",
        |t, v| t.add(v[0], v[1]),
        |r| vec![random_input(r, &[2, 3], 1.0), random_input(r, &[2, 3], 1.0)],
    ));
    cases.push(case(
        "mul",
        |t, v| t.mul(v[0], v[1]),
        |r| vec![random_input(r, &[2, 3], 1.0), random_input(r, &[2, 3], 1.0)],
    ));
    cases.push(case(
        "add_row",
        |t, v| t.add_row(v[0], v[1]),
        |r| vec![random_input(r, &[3, 2], 1.0), random_input(r, &[2], 1.0)],
    ));
    cases.push(case(
        "affine",
        |t, v| Ok(t.affine(v[0], -1.7, 0.3)),
        |r| vec![random_input(r, &[5], 1.0)],
    ));
    cases.push(case(
        "tanh",
        |t, v| Ok(t.tanh(v[0])),
        |r| vec![random_input(r, &[6], 2.0)],
    ));
    cases.push(case(
        "sigmoid",
        |t, v| Ok(t.sigmoid(v[0])),
        |r| vec![random_input(r, &[6], 3.0)],
    ));
    cases.push(case(
        "exp",
        |t, v| Ok(t.exp(v[0])),
        |r| vec![random_input(r, &[6], 1.0)],
    ));
    cases.push(case(
        "sum",
        |t, v| Ok(t.sum(v[0])),
        |r| vec![random_input(r, &[2, 2], 1.0)],
    ));
    cases.push(case(
        "mean",
        |t, v| Ok(t.mean(v[0])),
        |r| vec![random_input(r, &[3, 2], 1.0)],
    ));

    cases.push(case(
        "relu",
        |t, v| Ok(t.relu(v[0])),
        |r| {
            let mut i = random_input(r, &[8], 1.0);
            for x in &mut i.data {
                if x.abs() < 0.05 {
                    *x += 0.1f64.copysign(*x);
                }
            }
            vec![i]
        },
    ));

    cases.push(case(
        "scale_rows",
        |t, v| t.scale_rows(v[0], v[1]),
        |r| vec![random_input(r, &[4, 3], 1.0), random_input(r, &[4], 1.0)],
    ));
    cases.push(case(
        "column",
        |t, v| t.column(v[0], 2),
        |r| vec![random_input(r, &[3, 4], 1.0)],
    ));
    cases.push(case(
        "row",
        |t, v| t.row(v[0], 1),
        |r| vec![random_input(r, &[3, 4], 1.0)],
    ));
    cases.push(case(
        "concat_cols",
        |t, v| t.concat_cols(&[v[0], v[1], v[2]]),
        |r| {
            vec![
                random_input(r, &[3, 2], 1.0),
                random_input(r, &[3, 1], 1.0),
                random_input(r, &[3, 4], 1.0),
            ]
        },
    ));
    cases.push(case(
        "gather_rows",
        |t, v| t.gather_rows(v[0], &[2, 0, 2, 3]),
        |r| vec![random_input(r, &[5, 3], 1.0)],
    ));
    cases.push(case(
        "transpose",
        |t, v| t.transpose(v[0]),
        |r| vec![random_input(r, &[2, 5], 1.0)],
    ));
    cases.push(case(
        "reshape",
        |t, v| t.reshape(v[0], &[3, 2]),
        |r| vec![random_input(r, &[6], 1.0)],
    ));

    cases.push(case(
        "log_softmax_last",
        |t, v| t.log_softmax(v[0], 1),
        |r| vec![random_input(r, &[3, 4], 3.0)],
    ));
    cases.push(case(
        "log_softmax_first",
        |t, v| t.log_softmax(v[0], 0),
        |r| vec![random_input(r, &[3, 4], 3.0)],
    ));
    cases.push(case(
        "softmax",
        |t, v| t.softmax(v[0], 0),
        |r| vec![random_input(r, &[5], 2.0)],
    ));

    // The noise stream is re-seeded on every evaluation so the sample is a
    // deterministic function of the logits.
    for tau in [0.5, 0.8, 1.2] {
        cases.push(case(
            "gumbel_softmax",
            move |t, v| {
                let mut rng = Rng::new(7);
                t.gumbel_softmax(v[0], tau, &mut rng, false)
            },
            |r| vec![random_input(r, &[3, 4], 1.0)],
        ));
    }

    for width in [1usize, 3, 5] {
        cases.push(case(
            "conv1d",
            move |t, v| t.conv1d(v[0], v[1], v[2], width),
            move |r| {
                vec![
                    random_input(r, &[4, 3], 1.0),
                    random_input(r, &[width * 3, 2], 1.0),
                    random_input(r, &[2], 1.0),
                ]
            },
        ));
    }
    cases.push(case(
        "conv1d_bank",
        |t, v| {
            let banks = [
                ConvVars {
                    w: v[1],
                    b: v[2],
                    width: 3,
                },
                ConvVars {
                    w: v[3],
                    b: v[4],
                    width: 5,
                },
            ];
            t.conv1d_bank(v[0], &banks)
        },
        |r| {
            vec![
                random_input(r, &[3, 2], 1.0),
                random_input(r, &[6, 2], 1.0),
                random_input(r, &[2], 1.0),
                random_input(r, &[10, 2], 1.0),
                random_input(r, &[2], 1.0),
            ]
        },
    ));

    cases.push(case(
        "max_over_time",
        |t, v| t.max_over_time(v[0]),
        |r| vec![random_input(r, &[5, 3], 1.0)],
    ));
    cases.push(case(
        "max_over_time_masked",
        |t, v| t.max_over_time_masked(v[0], &[true, false, true, true]),
        |r| vec![random_input(r, &[4, 2], 1.0)],
    ));

    for reverse in [false, true] {
        cases.push(case(
            "lstm",
            move |t, v| {
                t.lstm(
                    v[0],
                    LstmVars {
                        wx: v[1],
                        wh: v[2],
                        b: v[3],
                    },
                    reverse,
                )
            },
            |r| {
                vec![
                    random_input(r, &[4, 3], 1.0),
                    random_input(r, &[3, 8], 0.8),
                    random_input(r, &[2, 8], 0.8),
                    random_input(r, &[8], 0.5),
                ]
            },
        ));
    }

    cases.push(case(
        "dropout",
        |t, v| {
            let mut rng = Rng::new(3);
            t.dropout(v[0], 0.3, &mut rng, true)
        },
        |r| vec![random_input(r, &[10], 1.0)],
    ));

    cases.push(case(
        "cross_entropy",
        |t, v| t.cross_entropy(v[0], 1),
        |r| vec![random_input(r, &[3], 2.0)],
    ));
    cases.push(case(
        "binary_cross_entropy",
        |t, v| {
            let p = t.sigmoid(v[0]);
            let p = t.sum(p);
            let p = t.scale(p, 0.5);
            t.binary_cross_entropy(p, 0.15)
        },
        |r| vec![random_input(r, &[2], 2.0)],
    ));
    cases.push(case(
        "transitions",
        |t, v| t.transitions(v[0]),
        |r| vec![random_input(r, &[4, 3], 1.0)],
    ));

    cases.push(case(
        "sparsemax",
        |t, v| t.sparsemax(v[0]),
        |r| {
            // Keep clear of the support boundary, where the map is not differentiable.
            loop {
                let i = random_input(r, &[5], 1.0);
                let p = crate::sparsemax_slice(&i.data);
                let mut sorted = i.data.clone();
                sorted.sort_by(|a, b| b.total_cmp(a));
                let tau = i
                    .data
                    .iter()
                    .zip(&p)
                    .find(|(_, p)| **p > 0.0)
                    .map(|(x, p)| x - p)
                    .unwrap();
                if i.data.iter().all(|x| (x - tau).abs() > 1e-3) {
                    return vec![i];
                }
            }
        },
    ));
    cases
}
