use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::layer::{self, Activation, ConvGeometry, LayerSpec, PoolGeometry};
use super::{NnError, Real, Shape, Tensor};

/// Dropout is active only in training mode.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut dyn RngCore),
}

/// A validated layer stack and its parameters.
///
/// Parameters are stored in declaration order: weights then bias for every
/// conv2d and dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    specs: Vec<LayerSpec>,
    input: Shape,
    /// Output shape of each layer.
    shapes: Vec<Shape>,
    /// Index of each layer's weight tensor in `params`.
    slots: Vec<Option<usize>>,
    params: Vec<Tensor<T>>,
}

/// Activations and routing state kept from a forward pass for backprop.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub batch: usize,
    /// `activations[0]` is the input; `activations[i + 1]` is layer `i`'s output.
    pub activations: Vec<Vec<T>>,
    /// Max-pool argmax per layer (empty for other kinds).
    pub pool_argmax: Vec<Vec<u32>>,
    /// Dropout scale per layer (empty for other kinds).
    pub dropout_masks: Vec<Vec<T>>,
}

impl<T: Real> ForwardPass<T> {
    pub fn output(&self) -> &[T] {
        self.activations.last().expect("at least the input")
    }
}

/// Gradient of the loss handed to [`Network::backward`].
pub enum OutputGrad<T> {
    /// W.r.t. the final layer's activated output.
    Output(Vec<T>),
    /// W.r.t. the final layer's pre-activation (softmax + cross-entropy fused).
    PreActivation(Vec<T>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitScheme {
    /// Uniform in +-sqrt(6 / (fan_in + fan_out)), zero bias.
    GlorotUniform,
    Zeros,
}

impl<T: Real> Network<T> {
    /// Validates that the layers compose over `input` and allocates
    /// zero-valued parameters.
    pub fn new(input: Shape, specs: &[LayerSpec]) -> Result<Self, NnError> {
        if specs.is_empty() {
            return Err(NnError::Shape {
                layer: 0,
                message: "network has no layers".into(),
            });
        }
        if input.size() == 0 {
            return Err(NnError::Shape {
                layer: 0,
                message: "input shape has a zero dimension".into(),
            });
        }
        let mut shapes = Vec::with_capacity(specs.len());
        let mut slots = Vec::with_capacity(specs.len());
        let mut params = Vec::new();
        let mut cur = input;
        for (i, spec) in specs.iter().enumerate() {
            if let Some((w, b)) = spec.param_shapes(cur) {
                slots.push(Some(params.len()));
                params.push(Tensor::zeros(&w));
                params.push(Tensor::zeros(&b));
            } else {
                slots.push(None);
            }
            cur = spec.output_shape(i, cur)?;
            shapes.push(cur);
        }
        Ok(Network {
            specs: specs.to_vec(),
            input,
            shapes,
            slots,
            params,
        })
    }

    pub fn init(&mut self, scheme: InitScheme, rng: &mut dyn RngCore) {
        for (i, spec) in self.specs.iter().enumerate() {
            let Some(slot) = self.slots[i] else { continue };
            let in_shape = self.layer_input_shape(i);
            let (fan_in, fan_out) = match (*spec, in_shape) {
                (
                    LayerSpec::Conv2d {
                        out_channels,
                        kernel_h,
                        kernel_w,
                        ..
                    },
                    Shape::Spatial { c, .. },
                ) => (kernel_h * kernel_w * c, kernel_h * kernel_w * out_channels),
                (LayerSpec::Dense { out_units, .. }, Shape::Flat(n)) => (n, out_units),
                _ => unreachable!("only conv2d and dense carry parameters"),
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in self.params[slot].data_mut() {
                *v = match scheme {
                    InitScheme::GlorotUniform => T::from_f64(rng.random_range(-limit..limit)),
                    InitScheme::Zeros => T::zero(),
                };
            }
            self.params[slot + 1].data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    /// Output shape of every layer, in order.
    pub fn layer_shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn output_size(&self) -> usize {
        self.shapes.last().expect("non-empty").size()
    }

    pub fn output_activation(&self) -> Activation {
        self.specs
            .iter()
            .rev()
            .find(|s| matches!(s, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. }))
            .map(|s| s.activation())
            .unwrap_or(Activation::None)
    }

    fn layer_input_shape(&self, i: usize) -> Shape {
        if i == 0 {
            self.input
        } else {
            self.shapes[i - 1]
        }
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    /// Layer index owning parameter tensor `p`.
    pub fn param_layer(&self, p: usize) -> usize {
        self.slots
            .iter()
            .position(|s| matches!(s, Some(slot) if *slot == p || *slot + 1 == p))
            .expect("parameter index in range")
    }

    /// Copy with every parameter converted to another element type.
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            specs: self.specs.clone(),
            input: self.input,
            shapes: self.shapes.clone(),
            slots: self.slots.clone(),
            params: self.params.iter().map(|p| p.cast()).collect(),
        }
    }

    /// Replaces all parameters; shapes must match.
    pub fn set_params(&mut self, params: Vec<Tensor<T>>) -> Result<(), NnError> {
        if params.len() != self.params.len() || params.iter().zip(&self.params).any(|(a, b)| a.shape() != b.shape()) {
            return Err(NnError::ParamMismatch);
        }
        self.params = params;
        Ok(())
    }

    fn conv_geometry(&self, i: usize) -> ConvGeometry {
        match (self.specs[i], self.layer_input_shape(i)) {
            (
                LayerSpec::Conv2d {
                    out_channels,
                    kernel_h,
                    kernel_w,
                    ..
                },
                Shape::Spatial { h, w, c },
            ) => ConvGeometry {
                h,
                w,
                cin: c,
                kh: kernel_h,
                kw: kernel_w,
                cout: out_channels,
            },
            _ => unreachable!(),
        }
    }

    fn pool_geometry(&self, i: usize) -> PoolGeometry {
        match (self.specs[i], self.layer_input_shape(i)) {
            (LayerSpec::Maxpool2d { pool_h, pool_w, stride }, Shape::Spatial { h, w, c }) => PoolGeometry {
                h,
                w,
                c,
                ph: pool_h,
                pw: pool_w,
                stride,
            },
            _ => unreachable!(),
        }
    }

    /// Runs a batch of `input.len() / input_size` examples.
    pub fn forward(&self, input: &[T], mut mode: Mode<'_>) -> Result<ForwardPass<T>, NnError> {
        let in_size = self.input.size();
        if input.is_empty() || !input.len().is_multiple_of(in_size) {
            return Err(NnError::InputSize {
                expected: in_size,
                found: input.len(),
            });
        }
        let batch = input.len() / in_size;
        let n = self.specs.len();
        let mut activations = Vec::with_capacity(n + 1);
        activations.push(input.to_vec());
        let mut pool_argmax = vec![Vec::new(); n];
        let mut dropout_masks = vec![Vec::new(); n];

        for (i, spec) in self.specs.iter().enumerate() {
            let x = activations.last().expect("non-empty");
            let out = match *spec {
                LayerSpec::Conv2d { activation, .. } => {
                    let slot = self.slots[i].expect("conv has params");
                    layer::conv2d_forward(&self.conv_geometry(i), x, self.params[slot].data(), self.params[slot + 1].data(), activation)
                }
                LayerSpec::Maxpool2d { .. } => {
                    let (out, arg) = layer::maxpool2d_forward(&self.pool_geometry(i), x);
                    pool_argmax[i] = arg;
                    out
                }
                LayerSpec::Flatten => x.clone(),
                LayerSpec::Dense { activation, .. } => {
                    let slot = self.slots[i].expect("dense has params");
                    layer::dense_forward(x, self.layer_input_shape(i).size(), self.params[slot].data(), self.params[slot + 1].data(), activation)
                }
                LayerSpec::Dropout { rate } => match &mut mode {
                    Mode::Eval => x.clone(),
                    Mode::Train(rng) => {
                        let (out, mask) = layer::dropout_forward(x, rate, &mut **rng);
                        dropout_masks[i] = mask;
                        out
                    }
                },
            };
            activations.push(out);
        }
        Ok(ForwardPass {
            batch,
            activations,
            pool_argmax,
            dropout_masks,
        })
    }

    /// Evaluation-mode outputs for a batch.
    pub fn predict(&self, input: &[T]) -> Result<Vec<T>, NnError> {
        Ok(self.forward(input, Mode::Eval)?.activations.pop().expect("output"))
    }

    /// Reverse-mode gradients of the loss w.r.t. every parameter tensor, in
    /// declaration order.
    pub fn backward(&self, pass: &ForwardPass<T>, grad: OutputGrad<T>) -> Vec<Vec<T>> {
        let mut grads: Vec<Vec<T>> = self.params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        let last = self.specs.len() - 1;
        let (mut g, mut pre_activation) = match grad {
            OutputGrad::Output(g) => (g, false),
            OutputGrad::PreActivation(g) => (g, true),
        };

        for i in (0..=last).rev() {
            let x = &pass.activations[i];
            let out = &pass.activations[i + 1];
            let need_dx = i > 0;
            match self.specs[i] {
                LayerSpec::Conv2d { activation, out_channels, .. } => {
                    if !pre_activation {
                        layer::activation_backward(activation, out, &mut g, out_channels);
                    }
                    let slot = self.slots[i].expect("conv has params");
                    let (dw, db, dx) = layer::conv2d_backward(&self.conv_geometry(i), x, self.params[slot].data(), &g, need_dx);
                    grads[slot] = dw;
                    grads[slot + 1] = db;
                    g = dx;
                }
                LayerSpec::Dense { activation, out_units } => {
                    if !pre_activation {
                        layer::activation_backward(activation, out, &mut g, out_units);
                    }
                    let slot = self.slots[i].expect("dense has params");
                    let n_in = self.layer_input_shape(i).size();
                    let (dw, db, dx) = layer::dense_backward(x, n_in, self.params[slot].data(), &g, need_dx);
                    grads[slot] = dw;
                    grads[slot + 1] = db;
                    g = dx;
                }
                LayerSpec::Maxpool2d { .. } => {
                    g = layer::maxpool2d_backward(&self.pool_geometry(i), &pass.pool_argmax[i], &g);
                }
                LayerSpec::Flatten => {}
                LayerSpec::Dropout { .. } => {
                    let mask = &pass.dropout_masks[i];
                    if !mask.is_empty() {
                        g.iter_mut().zip(mask).for_each(|(v, &m)| *v *= m);
                    }
                }
            }
            pre_activation = false;
        }
        grads
    }

    /// First layer (if any) whose output in `pass` contains a non-finite value.
    pub fn first_non_finite_layer(&self, pass: &ForwardPass<T>) -> Option<usize> {
        pass.activations[1..].iter().position(|a| a.iter().any(|v| !v.is_finite()))
    }
}
