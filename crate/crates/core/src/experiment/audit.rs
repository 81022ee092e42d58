use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{finite_diff_check, ConvSpec, Fault, Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::dsp::FeatureMatrix;
use crate::model::{Architecture, Network, NetworkSpec};
use crate::Result;

/// Output-size chain of the standard network on 300-frame inputs:
/// branch widths after each layer, fusion map, 1x1 conv map, pooled
/// statistics and embedding.
pub const REFERENCE_CHAIN: &str = "296, 288, 270, 270, 512×270, 1500×270, 3000, 512";

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeAudit {
    /// Labeled shapes in forward order.
    pub lines: Vec<String>,
    pub chain: String,
    pub logits: usize,
    pub n_speakers: usize,
}

impl ShapeAudit {
    pub fn matches_reference(&self) -> bool {
        self.chain == REFERENCE_CHAIN && self.logits == self.n_speakers
    }
}

fn dims_str(shape: &[usize]) -> String {
    match shape {
        [n] => n.to_string(),
        [c, t] => format!("{c}×{t}"),
        _ => format!("{shape:?}"),
    }
}

/// Runs the full-width CG-PCNN forward on random `frames`-frame inputs and
/// records every intermediate shape.
pub fn shape_audit(m1: usize, m2: usize, frames: usize, n_speakers: usize) -> Result<ShapeAudit> {
    let spec = NetworkSpec::standard(Architecture::CgPcnn, &[m1, m2], n_speakers);
    let net = Network::build(&spec, 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut input = |m: usize| {
        FeatureMatrix::new(m, frames, (0..m * frames).map(|_| rng.gen_range(-1.0..1.0)).collect())
    };
    let (a, b) = (input(m1)?, input(m2)?);
    let mut g = Graph::new();
    let out = net.forward(&mut g, &a, Some(&b))?;
    let trace = &out.trace;
    let lines = trace
        .entries
        .iter()
        .map(|(label, shape)| format!("{label:<10} {}", dims_str(shape)))
        .collect();
    let mut chain: Vec<String> = (1..=spec.layers.len())
        .map(|l| trace.get(&format!("layer{l}.a")).map_or("?".into(), |s| s[1].to_string()))
        .collect();
    for label in ["fusion", "head.conv", "pool", "fc"] {
        chain.push(trace.get(label).map_or("?".into(), dims_str));
    }
    Ok(ShapeAudit {
        lines,
        chain: chain.join(", "),
        logits: trace.get("logits").map_or(0, |s| s[0]),
        n_speakers,
    })
}

/// Small network for end-to-end gradient checks on 30-frame inputs. Uses
/// kernels (3, 3, 3, 1) with the standard dilations so the receptive span
/// fits.
pub fn gradcheck_spec(architecture: Architecture) -> NetworkSpec {
    let dims: &[usize] = if architecture.branches() == 1 { &[6] } else { &[4, 6] };
    let mut spec = NetworkSpec::standard(architecture, dims, 4).with_widths(8, 12, 6);
    for (l, k) in spec.layers.iter_mut().zip([3, 3, 3, 1]) {
        l.kernel_width = k;
    }
    spec
}

pub const GRADCHECK_FRAMES: usize = 30;
pub const GRADCHECK_EPS: f64 = 1e-5;
pub const GRADCHECK_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckLine {
    pub name: String,
    /// Worst relative error over all seeds.
    pub max_rel_error: f64,
    pub coordinates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckSuite {
    pub lines: Vec<GradCheckLine>,
}

impl GradCheckSuite {
    pub fn max_rel_error(&self) -> f64 {
        self.lines.iter().map(|l| l.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self, threshold: f64) -> bool {
        self.lines.iter().all(|l| l.max_rel_error < threshold)
    }
}

fn random(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()
}

struct Case {
    store: ParamStore,
    ids: Vec<ParamId>,
    probe: Vec<f64>,
}

fn case(seed: u64, shapes: &[&[usize]], probe_len: usize, scale: f64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let ids = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let n = s.iter().product();
            store.add(format!("p{i}"), s.to_vec(), random(&mut rng, n, scale)).expect("unique names")
        })
        .collect();
    let probe = random(&mut rng, probe_len, 1.0);
    Case { store, ids, probe }
}

type Build<'a> = Box<dyn Fn(&mut Graph, &ParamStore, &[ParamId], &[f64]) -> Result<NodeId> + 'a>;

fn primitive_cases(fault: Option<Fault>) -> Vec<(&'static str, Vec<&'static [usize]>, usize, f64, Build<'static>)> {
    let conv = ConvSpec::new(3, 4, 3, 2);
    let with_fault = move |g: &mut Graph| {
        if let Some(f) = fault {
            g.inject_fault(f);
        }
    };
    vec![
        (
            "conv1d",
            vec![&[3, 12], &[4, 3, 3], &[4]],
            32,
            1.0,
            Box::new(move |g, s, p, probe| {
                with_fault(g);
                let (x, w, b) = (g.param(s, p[0]), g.param(s, p[1]), g.param(s, p[2]));
                let y = g.conv1d(x, w, b, &conv)?;
                g.weighted_sum(y, probe.to_vec())
            }),
        ),
        (
            "sigmoid",
            vec![&[3, 7]],
            21,
            3.0,
            Box::new(|g, s, p, probe| {
                let x = g.param(s, p[0]);
                let y = g.sigmoid(x);
                g.weighted_sum(y, probe.to_vec())
            }),
        ),
        (
            "relu",
            vec![&[3, 7]],
            21,
            3.0,
            Box::new(|g, s, p, probe| {
                let x = g.param(s, p[0]);
                let y = g.relu(x);
                g.weighted_sum(y, probe.to_vec())
            }),
        ),
        (
            "mul",
            vec![&[3, 6], &[3, 6]],
            18,
            1.0,
            Box::new(|g, s, p, probe| {
                let (a, b) = (g.param(s, p[0]), g.param(s, p[1]));
                let y = g.mul(a, b)?;
                g.weighted_sum(y, probe.to_vec())
            }),
        ),
        (
            "mean2",
            vec![&[3, 6], &[3, 6]],
            18,
            1.0,
            Box::new(|g, s, p, probe| {
                let (a, b) = (g.param(s, p[0]), g.param(s, p[1]));
                let y = g.mean2(a, b)?;
                g.weighted_sum(y, probe.to_vec())
            }),
        ),
        (
            "concat_rows",
            vec![&[3, 6], &[5, 6]],
            48,
            1.0,
            Box::new(|g, s, p, probe| {
                let (a, b) = (g.param(s, p[0]), g.param(s, p[1]));
                let y = g.concat_rows(a, b)?;
                g.weighted_sum(y, probe.to_vec())
            }),
        ),
        (
            "statistics_pool",
            vec![&[4, 9]],
            8,
            1.0,
            Box::new(|g, s, p, probe| {
                let x = g.param(s, p[0]);
                let y = g.statistics_pool(x)?;
                g.weighted_sum(y, probe.to_vec())
            }),
        ),
        (
            "linear",
            vec![&[6], &[5, 6], &[5]],
            5,
            1.0,
            Box::new(|g, s, p, probe| {
                let (x, w, b) = (g.param(s, p[0]), g.param(s, p[1]), g.param(s, p[2]));
                let y = g.linear(x, w, b)?;
                g.weighted_sum(y, probe.to_vec())
            }),
        ),
        (
            "softmax_cross_entropy",
            vec![&[7]],
            0,
            2.0,
            Box::new(|g, s, p, _| {
                let z = g.param(s, p[0]);
                g.softmax_cross_entropy(z, 3)
            }),
        ),
    ]
}

/// End-to-end check of the shrunken network's loss for one seed.
pub fn end_to_end_check(architecture: Architecture, seed: u64, fault: Option<Fault>) -> Result<(f64, usize)> {
    let spec = gradcheck_spec(architecture);
    let mut net = Network::build(&spec, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    // nonzero biases so bias gradients are exercised away from init
    for p in net.params.iter_mut().filter(|p| p.name.ends_with(".bias")) {
        p.values.iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
    }
    let inputs: Vec<Tensor> = spec
        .input_dims
        .iter()
        .map(|&m| Tensor::matrix(m, GRADCHECK_FRAMES, random(&mut rng, m * GRADCHECK_FRAMES, 1.0)))
        .collect::<Result<_>>()?;
    let label = (seed % spec.n_speakers as u64) as usize;
    let mut store = net.params.clone();
    let report = finite_diff_check(
        &mut store,
        |g, s| {
            if let Some(f) = fault {
                g.inject_fault(f);
            }
            net.params.copy_values_from(s)?;
            let a = g.input(inputs[0].clone());
            let b = inputs.get(1).map(|t| g.input(t.clone()));
            let out = net.forward_nodes(g, a, b)?;
            g.softmax_cross_entropy(out.logits, label)
        },
        GRADCHECK_EPS,
    )?;
    Ok((report.max_rel_error, report.coordinates))
}

/// Finite-difference checks of every primitive and the shrunken CG-PCNN
/// over `seeds`, one line per check.
pub fn gradcheck_suite(seeds: &[u64], fault: Option<Fault>) -> Result<GradCheckSuite> {
    let mut lines = Vec::new();
    for (name, shapes, probe_len, scale, build) in primitive_cases(fault) {
        let mut line = GradCheckLine {
            name: name.to_string(),
            max_rel_error: 0.0,
            coordinates: 0,
        };
        for &seed in seeds {
            let Case { mut store, ids, probe } = case(seed, &shapes, probe_len, scale);
            let report = finite_diff_check(&mut store, |g, s| build(g, s, &ids, &probe), GRADCHECK_EPS)?;
            line.max_rel_error = line.max_rel_error.max(report.max_rel_error);
            line.coordinates += report.coordinates;
        }
        lines.push(line);
    }
    let mut line = GradCheckLine {
        name: "cg-pcnn end-to-end".to_string(),
        max_rel_error: 0.0,
        coordinates: 0,
    };
    for &seed in seeds {
        let (err, n) = end_to_end_check(Architecture::CgPcnn, seed, fault)?;
        line.max_rel_error = line.max_rel_error.max(err);
        line.coordinates += n;
    }
    lines.push(line);
    Ok(GradCheckSuite { lines })
}
