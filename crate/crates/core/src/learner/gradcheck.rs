//! Finite-difference verification of the analytic gradients in 64-bit.

use super::network::{xavier_init, ForwardPass, Network, NetworkSpec};
use crate::error::Result;
use crate::render::Image;
use crate::rng::{derive_stream, RngStream};

pub const GRADCHECK_STEP: f64 = 1e-3;
/// Gradients smaller than this on both sides are compared absolutely.
const GRADIENT_FLOOR: f64 = 1e-7;
const MAX_ATTEMPTS_PER_PROBE: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub layer: usize,
    pub is_bias: bool,
    pub offset: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub probes: Vec<ProbeResult>,
    /// Candidates skipped because `w ± h` changed some ReLU's active set,
    /// where the loss is not differentiable at the scale of `h`.
    pub skipped_kinks: usize,
    pub max_relative_error: f64,
}

impl GradcheckReport {
    /// Probes whose gradient is not exactly zero on both sides.
    pub fn nonzero_probes(&self) -> usize {
        self.probes
            .iter()
            .filter(|p| p.analytic != 0.0 || p.numeric != 0.0)
            .count()
    }

    pub fn layers_covered(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.probes.iter().map(|p| p.layer).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < GRADIENT_FLOOR {
        (a - b).abs() / GRADIENT_FLOOR
    } else {
        (a - b).abs() / scale
    }
}

/// Four flat quadrants split at a random row and column. Piecewise constant
/// inputs give each layer only a handful of distinct pre-activations, so a
/// `±h` perturbation rarely moves one across a ReLU kink, while the edges
/// still distinguish every kernel tap.
fn probe_image(rng: &mut RngStream, spec: &NetworkSpec) -> Image {
    let (w, h) = (spec.input_width, spec.input_height);
    let split_col = 20 + rng.below(w as u64 - 40) as usize;
    let split_row = 10 + rng.below(h as u64 - 20) as usize;
    let tones: Vec<u8> = (0..4).map(|_| rng.below(256) as u8).collect();
    let mut pixels = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            pixels.push(tones[(r >= split_row) as usize * 2 + (c >= split_col) as usize]);
        }
    }
    Image {
        width: w,
        height: h,
        pixels,
    }
}

/// Active-set signature of every hidden layer.
fn relu_pattern(net: &Network<f64>, pass: &ForwardPass<f64>) -> Vec<bool> {
    let hidden = net.layers.len() - 1;
    (0..hidden)
        .flat_map(|i| pass.layer_output(i).iter().map(|&v| v > 0.0).collect::<Vec<_>>())
        .collect()
}

fn loss_and_pattern(
    net: &Network<f64>,
    pass: &mut ForwardPass<f64>,
    images: &[&Image],
    labels: &[f64],
) -> Result<(f64, Vec<bool>)> {
    net.forward_images(pass, images)?;
    let loss = pass
        .predictions()
        .iter()
        .zip(labels)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / labels.len() as f64;
    Ok((loss, relu_pattern(net, pass)))
}

fn param(net: &mut Network<f64>, layer: usize, is_bias: bool, offset: usize) -> &mut f64 {
    let l = &mut net.layers[layer];
    if is_bias {
        &mut l.bias[offset]
    } else {
        &mut l.weight[offset]
    }
}

/// Compares analytic and central-difference gradients for `per_layer`
/// randomly chosen parameters of every layer (biases included), on a small
/// batch of random images with random labels.
pub fn gradcheck(seed: u64, per_layer: usize) -> Result<GradcheckReport> {
    let spec = NetworkSpec::standard();
    let mut rng = derive_stream(seed, 0);
    let mut net: Network<f64> = xavier_init(&spec, &mut rng)?;
    // Small positive biases keep more units alive, so fewer probes land on
    // dead units whose gradient is trivially zero.
    for layer in &mut net.layers {
        for b in &mut layer.bias {
            *b = rng.uniform(0.0, 0.1);
        }
    }
    let images: Vec<Image> = (0..2).map(|_| probe_image(&mut rng, &spec)).collect();
    let refs: Vec<&Image> = images.iter().collect();
    let labels: Vec<f64> = (0..2).map(|_| rng.uniform(-1.0, 1.0)).collect();

    let mut pass = ForwardPass::new();
    net.forward_images(&mut pass, &refs)?;
    let grads = net.backward(&mut pass, &labels)?.1;
    let (_, base_pattern) = loss_and_pattern(&net, &mut pass, &refs, &labels)?;

    let mut probes = Vec::new();
    let mut skipped = 0;
    for li in 0..net.layers.len() {
        let (n_w, n_b) = (net.layers[li].weight.len(), net.layers[li].bias.len());
        let mut taken = 0;
        let mut attempts = 0;
        while taken < per_layer && attempts < MAX_ATTEMPTS_PER_PROBE * per_layer {
            attempts += 1;
            // Roughly one probe in five is a bias.
            let is_bias = rng.below(5) == 0;
            let offset = if is_bias {
                rng.below(n_b as u64) as usize
            } else {
                rng.below(n_w as u64) as usize
            };
            let original = *param(&mut net, li, is_bias, offset);
            *param(&mut net, li, is_bias, offset) = original + GRADCHECK_STEP;
            let (plus, pat_plus) = loss_and_pattern(&net, &mut pass, &refs, &labels)?;
            *param(&mut net, li, is_bias, offset) = original - GRADCHECK_STEP;
            let (minus, pat_minus) = loss_and_pattern(&net, &mut pass, &refs, &labels)?;
            *param(&mut net, li, is_bias, offset) = original;
            if pat_plus != base_pattern || pat_minus != base_pattern {
                skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * GRADCHECK_STEP);
            let g = &grads[li];
            let analytic = if is_bias { g.bias[offset] } else { g.weight[offset] };
            probes.push(ProbeResult {
                layer: li,
                is_bias,
                offset,
                analytic,
                numeric,
                relative_error: relative_error(analytic, numeric),
            });
            taken += 1;
        }
    }
    let max_relative_error = probes.iter().map(|p| p.relative_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        probes,
        skipped_kinks: skipped,
        max_relative_error,
    })
}
