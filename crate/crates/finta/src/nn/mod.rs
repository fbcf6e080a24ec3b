//! The fully convolutional streamline autoencoder.
//!
//! The encoder halves the vertex dimension with strided 1D convolutions
//! while widening the feature ladder, a fully connected bottleneck maps the
//! flattened activation to the latent vector, and the decoder mirrors the
//! ladder with nearest-neighbor upsampling followed by stride-1
//! convolutions. A final kernel-1 projection maps the last feature block
//! back to the three coordinate channels. ReLU follows every convolution
//! except the output projection; the bottleneck is linear on both sides.
//!
//! Streamlines enter the network normalized: coordinates are centered at
//! the training-set centroid and scaled by the maximum absolute coordinate
//! after centering. The normalization (plus the endpoint-alignment anchor)
//! is part of the model so a stored model can reproduce its preprocessing.

pub mod adam;
pub mod layers;
pub mod linalg;
pub mod train;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::streamline::{Point3, Streamline};

use layers::{
    conv_to_fc, fc_to_conv, relu_backward, relu_inplace, upsample2_backward, upsample2_forward,
    Conv1d, Fc,
};
use linalg::{Mat, Scalar};

/// How the layer-size ladder is read: as the input length of each layer
/// (six halvings, bottleneck of `input_points / 64` samples) or as the
/// output length (first convolution keeps the length, bottleneck twice as
/// wide).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableInterpretation {
    InputSize,
    OutputSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_points: usize,
    pub input_channels: usize,
    pub latent_dim: usize,
    pub encoder_features: Vec<usize>,
    pub kernel_size: usize,
    pub seed: u64,
    pub table_interpretation: TableInterpretation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_points: 256,
            input_channels: 3,
            latent_dim: 32,
            encoder_features: vec![32, 64, 128, 256, 512, 1024],
            kernel_size: 3,
            seed: 7,
            table_interpretation: TableInterpretation::InputSize,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.latent_dim == 0 || self.input_points < 2 {
            return Err(Error::InvalidConfig(
                "points, channels and latent dimension must be positive".into(),
            ));
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "kernel size must be odd and positive, got {}",
                self.kernel_size
            )));
        }
        if self.encoder_features.is_empty() {
            return Err(Error::InvalidConfig("encoder feature ladder is empty".into()));
        }
        if !self.encoder_features.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig(
                "encoder features must be strictly increasing".into(),
            ));
        }
        let halvings = self.halvings();
        if self.input_points % (1 << halvings) != 0 || self.input_points >> halvings == 0 {
            return Err(Error::InvalidConfig(format!(
                "input_points {} not divisible into {} halvings",
                self.input_points, halvings
            )));
        }
        Ok(())
    }

    fn halvings(&self) -> usize {
        match self.table_interpretation {
            TableInterpretation::InputSize => self.encoder_features.len(),
            TableInterpretation::OutputSize => self.encoder_features.len() - 1,
        }
    }

    /// Vertex count of the innermost activation.
    pub fn bottleneck_len(&self) -> usize {
        self.input_points >> self.halvings()
    }

    /// Flattened width of the bottleneck interface.
    pub fn flat_len(&self) -> usize {
        self.encoder_features.last().unwrap() * self.bottleneck_len()
    }

    fn encoder_strides(&self) -> Vec<usize> {
        let n = self.encoder_features.len();
        match self.table_interpretation {
            TableInterpretation::InputSize => vec![2; n],
            TableInterpretation::OutputSize => {
                let mut s = vec![2; n];
                s[0] = 1;
                s
            }
        }
    }

    fn decoder_upsamples(&self) -> Vec<bool> {
        let n = self.encoder_features.len();
        match self.table_interpretation {
            TableInterpretation::InputSize => vec![true; n],
            TableInterpretation::OutputSize => {
                let mut u = vec![true; n];
                u[0] = false;
                u
            }
        }
    }
}

/// Coordinate preprocessing carried with the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    /// Training-set centroid subtracted from every coordinate.
    pub center: Point3,
    /// Maximum absolute centered coordinate; divides every coordinate.
    pub scale: f64,
    /// Endpoint-alignment anchor used when preparing inputs.
    pub anchor: Point3,
}

impl Default for Normalization {
    fn default() -> Self {
        Self { center: Point3::ZERO, scale: 1.0, anchor: Point3::ZERO }
    }
}

impl Normalization {
    /// Fit center and scale from a prepared (resampled, aligned) training
    /// set.
    pub fn fit(train: &[Streamline], anchor: Point3) -> Self {
        let mut center = Point3::ZERO;
        let mut count = 0usize;
        for s in train {
            for p in s.points() {
                center = center.add(p);
                count += 1;
            }
        }
        if count > 0 {
            center = center.scale(1.0 / count as f64);
        }
        let mut scale = 0.0f64;
        for s in train {
            for p in s.points() {
                let d = p.sub(&center);
                scale = scale.max(d.x.abs()).max(d.y.abs()).max(d.z.abs());
            }
        }
        if scale <= 0.0 {
            scale = 1.0;
        }
        Self { center, scale, anchor: Point3::ZERO }.with_anchor(anchor)
    }

    pub fn with_anchor(mut self, anchor: Point3) -> Self {
        self.anchor = anchor;
        self
    }

    pub fn normalize_point(&self, p: &Point3) -> Point3 {
        Point3::new(
            (p.x - self.center.x) / self.scale,
            (p.y - self.center.y) / self.scale,
            (p.z - self.center.z) / self.scale,
        )
    }

    pub fn denormalize_point(&self, p: &Point3) -> Point3 {
        Point3::new(
            p.x * self.scale + self.center.x,
            p.y * self.scale + self.center.y,
            p.z * self.scale + self.center.z,
        )
    }
}

/// One 32-dimensional (by default) latent embedding of a streamline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentVector {
    pub values: Vec<f64>,
}

impl LatentVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

pub struct DecoderStage<F> {
    pub upsample: bool,
    pub conv: Conv1d<F>,
}

/// Encoder, bottleneck and decoder parameters plus normalization metadata.
pub struct AutoencoderModel<F: Scalar = f32> {
    pub config: ModelConfig,
    pub norm: Normalization,
    pub(crate) encoder: Vec<Conv1d<F>>,
    pub(crate) fc_enc: Fc<F>,
    pub(crate) fc_dec: Fc<F>,
    pub(crate) decoder: Vec<DecoderStage<F>>,
    pub(crate) proj: Conv1d<F>,
}

/// Streamlines encoded per chunk; fixed so results do not depend on the
/// caller's batching.
pub(crate) const ENCODE_CHUNK: usize = 256;

impl<F: Scalar> AutoencoderModel<F> {
    /// Fresh model with fan-in-scaled uniform weights and zero biases,
    /// deterministic in `config.seed`.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let k = config.kernel_size;
        let mut encoder = Vec::new();
        let mut in_ch = config.input_channels;
        for (i, &out_ch) in config.encoder_features.iter().enumerate() {
            encoder.push(Conv1d::new(in_ch, out_ch, k, config.encoder_strides()[i]));
            in_ch = out_ch;
        }
        let flat = config.flat_len();
        let fc_enc = Fc::new(flat, config.latent_dim);
        let fc_dec = Fc::new(config.latent_dim, flat);
        let mut decoder = Vec::new();
        let mut ch = *config.encoder_features.last().unwrap();
        let dec_features: Vec<usize> = {
            // feature ladder mirrored: top feature repeated once, then down
            let mut f: Vec<usize> = config.encoder_features.iter().rev().copied().collect();
            f.insert(0, ch);
            f.truncate(config.encoder_features.len() + 1);
            f
        };
        for (i, up) in config.decoder_upsamples().iter().enumerate() {
            let out_ch = dec_features[i + 1];
            decoder.push(DecoderStage { upsample: *up, conv: Conv1d::new(ch, out_ch, k, 1) });
            ch = out_ch;
        }
        let proj = Conv1d::new(ch, config.input_channels, 1, 1);

        let mut model = Self {
            config,
            norm: Normalization::default(),
            encoder,
            fc_enc,
            fc_dec,
            decoder,
            proj,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed);
        for (fan_in, w) in model.weight_tensors_mut() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in w.iter_mut() {
                let u: f64 = rng.gen::<f64>() * 2.0 - 1.0;
                *v = F::from_f64(u * bound);
            }
        }
        Ok(model)
    }

    /// Weight matrices with their fan-in, in declaration order. Biases stay
    /// zero at initialization.
    fn weight_tensors_mut(&mut self) -> Vec<(usize, &mut [F])> {
        let k = self.config.kernel_size;
        let mut out = Vec::new();
        for conv in &mut self.encoder {
            out.push((conv.in_channels * k, conv.weight.data.as_mut_slice()));
        }
        out.push((self.fc_enc.in_features, self.fc_enc.weight.data.as_mut_slice()));
        out.push((self.fc_dec.in_features, self.fc_dec.weight.data.as_mut_slice()));
        for stage in &mut self.decoder {
            out.push((stage.conv.in_channels * k, stage.conv.weight.data.as_mut_slice()));
        }
        out.push((self.proj.in_channels, self.proj.weight.data.as_mut_slice()));
        out
    }

    /// All parameter tensors (name, dims, data) in declaration order; this
    /// order is the serialization order of the model file.
    pub fn param_tensors(&self) -> Vec<(String, Vec<usize>, &[F])> {
        let k = self.config.kernel_size;
        let mut out: Vec<(String, Vec<usize>, &[F])> = Vec::new();
        for (i, conv) in self.encoder.iter().enumerate() {
            out.push((
                format!("enc{i}.weight"),
                vec![conv.out_channels, conv.in_channels, k],
                &conv.weight.data,
            ));
            out.push((format!("enc{i}.bias"), vec![conv.out_channels], &conv.bias));
        }
        out.push((
            "fc_enc.weight".into(),
            vec![self.fc_enc.out_features, self.fc_enc.in_features],
            &self.fc_enc.weight.data,
        ));
        out.push(("fc_enc.bias".into(), vec![self.fc_enc.out_features], &self.fc_enc.bias));
        out.push((
            "fc_dec.weight".into(),
            vec![self.fc_dec.out_features, self.fc_dec.in_features],
            &self.fc_dec.weight.data,
        ));
        out.push(("fc_dec.bias".into(), vec![self.fc_dec.out_features], &self.fc_dec.bias));
        for (i, stage) in self.decoder.iter().enumerate() {
            out.push((
                format!("dec{i}.weight"),
                vec![stage.conv.out_channels, stage.conv.in_channels, k],
                &stage.conv.weight.data,
            ));
            out.push((format!("dec{i}.bias"), vec![stage.conv.out_channels], &stage.conv.bias));
        }
        out.push((
            "proj.weight".into(),
            vec![self.proj.out_channels, self.proj.in_channels, 1],
            &self.proj.weight.data,
        ));
        out.push(("proj.bias".into(), vec![self.proj.out_channels], &self.proj.bias));
        out
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = Vec::new();
        for conv in &mut self.encoder {
            out.push(&mut conv.weight.data);
            out.push(&mut conv.bias);
        }
        out.push(&mut self.fc_enc.weight.data);
        out.push(&mut self.fc_enc.bias);
        out.push(&mut self.fc_dec.weight.data);
        out.push(&mut self.fc_dec.bias);
        for stage in &mut self.decoder {
            out.push(&mut stage.conv.weight.data);
            out.push(&mut stage.conv.bias);
        }
        out.push(&mut self.proj.weight.data);
        out.push(&mut self.proj.bias);
        out
    }

    pub fn snapshot_params(&self) -> Vec<Vec<F>> {
        self.param_tensors().into_iter().map(|(_, _, d)| d.to_vec()).collect()
    }

    pub fn restore_params(&mut self, snapshot: &[Vec<F>]) {
        let tensors = self.param_tensors_mut();
        assert_eq!(tensors.len(), snapshot.len());
        for (dst, src) in tensors.into_iter().zip(snapshot) {
            dst.copy_from_slice(src);
        }
    }

    /// Short identifier for provenance records.
    pub fn id(&self) -> String {
        format!(
            "ae{}p-{}z-seed{}",
            self.config.input_points, self.config.latent_dim, self.config.seed
        )
    }

    fn check_points(&self, s: &Streamline) -> Result<()> {
        if s.len() != self.config.input_points {
            return Err(Error::ShapeMismatch(format!(
                "streamline has {} points, model expects {}",
                s.len(),
                self.config.input_points
            )));
        }
        Ok(())
    }

    /// Pack streamlines into the normalized channel-major batch matrix.
    pub(crate) fn normalize_batch(&self, batch: &[&Streamline]) -> Mat<F> {
        let len = self.config.input_points;
        let b = batch.len();
        let mut x = Mat::zeros(self.config.input_channels, b * len);
        for (bi, s) in batch.iter().enumerate() {
            for (p, pt) in s.points().iter().enumerate() {
                let n = self.norm.normalize_point(pt);
                x.set(0, bi * len + p, F::from_f64(n.x));
                x.set(1, bi * len + p, F::from_f64(n.y));
                x.set(2, bi * len + p, F::from_f64(n.z));
            }
        }
        x
    }

    /// Latent embedding of one streamline (must be resampled to
    /// `input_points`).
    pub fn encode(&self, s: &Streamline) -> Result<LatentVector> {
        Ok(self.encode_batch(std::slice::from_ref(s))?.pop().unwrap())
    }

    /// Latent embeddings in input order. Chunked internally; results are
    /// independent of the caller's grouping.
    pub fn encode_batch(&self, streamlines: &[Streamline]) -> Result<Vec<LatentVector>> {
        for s in streamlines {
            self.check_points(s)?;
        }
        let mut out = Vec::with_capacity(streamlines.len());
        let mut ws = Workspace::new();
        for chunk in streamlines.chunks(ENCODE_CHUNK) {
            let refs: Vec<&Streamline> = chunk.iter().collect();
            let x = self.normalize_batch(&refs);
            let latent = self.forward_encoder(&x, refs.len(), &mut ws);
            for b in 0..refs.len() {
                let values =
                    (0..self.config.latent_dim).map(|d| latent.at(d, b).to_f64()).collect();
                out.push(LatentVector { values });
            }
        }
        Ok(out)
    }

    /// Decode one latent vector to a world-coordinate streamline.
    pub fn decode(&self, z: &LatentVector) -> Result<Streamline> {
        Ok(self.decode_batch(std::slice::from_ref(z))?.pop().unwrap())
    }

    pub fn decode_batch(&self, latents: &[LatentVector]) -> Result<Vec<Streamline>> {
        for z in latents {
            if z.dim() != self.config.latent_dim {
                return Err(Error::ShapeMismatch(format!(
                    "latent has {} components, model expects {}",
                    z.dim(),
                    self.config.latent_dim
                )));
            }
            if !z.is_finite() {
                return Err(Error::InvalidLatent("non-finite component".into()));
            }
        }
        let len = self.config.input_points;
        let mut out = Vec::with_capacity(latents.len());
        let mut ws = Workspace::new();
        for chunk in latents.chunks(ENCODE_CHUNK) {
            let b = chunk.len();
            let mut z = Mat::zeros(self.config.latent_dim, b);
            for (bi, lv) in chunk.iter().enumerate() {
                for (d, &v) in lv.values.iter().enumerate() {
                    z.set(d, bi, F::from_f64(v));
                }
            }
            let recon = self.forward_decoder(&z, b, &mut ws);
            for bi in 0..b {
                let points: Vec<Point3> = (0..len)
                    .map(|p| {
                        let raw = Point3::new(
                            recon.at(0, bi * len + p).to_f64(),
                            recon.at(1, bi * len + p).to_f64(),
                            recon.at(2, bi * len + p).to_f64(),
                        );
                        self.norm.denormalize_point(&raw)
                    })
                    .collect();
                out.push(Streamline::new(points)?);
            }
        }
        Ok(out)
    }

    /// Mean squared reconstruction error over batch, points and channels,
    /// in normalized coordinates.
    pub fn loss(&self, batch: &[Streamline]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        for s in batch {
            self.check_points(s)?;
        }
        let mut ws = Workspace::new();
        let mut total = 0.0f64;
        let mut count = 0usize;
        for chunk in batch.chunks(ENCODE_CHUNK) {
            let refs: Vec<&Streamline> = chunk.iter().collect();
            let x = self.normalize_batch(&refs);
            self.forward(&x, refs.len(), &mut ws);
            total += sum_squared_diff(&ws.recon, &x);
            count += x.data.len();
        }
        Ok(total / count as f64)
    }

    /// Exact loss gradient for every parameter.
    pub fn gradients(&self, batch: &[Streamline]) -> Result<Gradients<F>> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        for s in batch {
            self.check_points(s)?;
        }
        let refs: Vec<&Streamline> = batch.iter().collect();
        let x = self.normalize_batch(&refs);
        let mut ws = Workspace::new();
        let mut grads = Gradients::zeros_like(self);
        self.forward(&x, refs.len(), &mut ws);
        let scale = F::from_f64(2.0 / x.data.len() as f64);
        let mut d_recon = Mat::zeros(ws.recon.rows, ws.recon.cols);
        for ((d, &r), &t) in d_recon.data.iter_mut().zip(&ws.recon.data).zip(&x.data) {
            *d = (r - t) * scale;
        }
        self.backward(&d_recon, refs.len(), &mut ws, &mut grads);
        Ok(grads)
    }

    /// Encoder-only pass; returns the latent activation (latent_dim x B).
    pub(crate) fn forward_encoder<'w>(
        &self,
        x: &Mat<F>,
        batch: usize,
        ws: &'w mut Workspace<F>,
    ) -> &'w Mat<F> {
        ws.ensure_layers(self.encoder.len(), self.decoder.len());
        let mut len = self.config.input_points;
        ws.enc_lens.clear();
        for (i, conv) in self.encoder.iter().enumerate() {
            ws.enc_lens.push(len);
            let (cols, acts) = (&mut ws.enc_cols, &mut ws.enc_act);
            {
                let src: &Mat<F> = if i == 0 { x } else { &acts[i - 1] };
                conv.im2col(src, batch, len, &mut cols[i]);
            }
            conv.forward(&cols[i], &mut acts[i]);
            relu_inplace(&mut acts[i]);
            len = conv.output_len(len);
        }
        debug_assert_eq!(len, self.config.bottleneck_len());
        conv_to_fc(&ws.enc_act[self.encoder.len() - 1], batch, len, &mut ws.fc_in);
        self.fc_enc.forward(&ws.fc_in, &mut ws.latent);
        &ws.latent
    }

    /// Decoder-only pass from a latent matrix (latent_dim x B); returns the
    /// reconstruction (channels x B*len) in normalized coordinates.
    pub(crate) fn forward_decoder<'w>(
        &self,
        z: &Mat<F>,
        batch: usize,
        ws: &'w mut Workspace<F>,
    ) -> &'w Mat<F> {
        ws.ensure_layers(self.encoder.len(), self.decoder.len());
        let bn = self.config.bottleneck_len();
        self.fc_dec.forward(z, &mut ws.fc_dec_out);
        fc_to_conv(&ws.fc_dec_out, batch, bn, &mut ws.dec_base);
        let mut len = bn;
        ws.dec_lens.clear();
        for (i, stage) in self.decoder.iter().enumerate() {
            ws.dec_lens.push(len);
            {
                let (cols, acts, up_buf, dec_base) =
                    (&mut ws.dec_cols, &mut ws.dec_act, &mut ws.up_buf, &ws.dec_base);
                let src: &Mat<F> = if i == 0 { dec_base } else { &acts[i - 1] };
                if stage.upsample {
                    upsample2_forward(src, batch, len, up_buf);
                    len *= 2;
                    stage.conv.im2col(up_buf, batch, len, &mut cols[i]);
                } else {
                    stage.conv.im2col(src, batch, len, &mut cols[i]);
                }
            }
            stage.conv.forward(&ws.dec_cols[i], &mut ws.dec_act[i]);
            relu_inplace(&mut ws.dec_act[i]);
        }
        debug_assert_eq!(len, self.config.input_points);
        let last = &ws.dec_act[self.decoder.len() - 1];
        self.proj.im2col(last, batch, len, &mut ws.proj_cols);
        self.proj.forward(&ws.proj_cols, &mut ws.recon);
        &ws.recon
    }

    /// Full forward pass caching everything the backward pass needs.
    pub(crate) fn forward(&self, x: &Mat<F>, batch: usize, ws: &mut Workspace<F>) {
        self.forward_encoder(x, batch, ws);
        let z = std::mem::replace(&mut ws.latent, Mat::zeros(0, 0));
        self.forward_decoder(&z, batch, ws);
        ws.latent = z;
    }

    /// Backpropagate a reconstruction-space gradient through the whole
    /// network, filling `grads`. Must follow a [`Self::forward`] call on the
    /// same workspace.
    pub(crate) fn backward(
        &self,
        d_recon: &Mat<F>,
        batch: usize,
        ws: &mut Workspace<F>,
        grads: &mut Gradients<F>,
    ) {
        let out_len = self.config.input_points;
        let bn = self.config.bottleneck_len();

        // output projection
        self.proj.backward(
            d_recon,
            &ws.proj_cols,
            &mut grads.proj.weight,
            &mut grads.proj.bias,
            Some(&mut ws.dcols),
        );
        self.proj.col2im(&ws.dcols, batch, out_len, &mut ws.d_cur);

        // decoder stages in reverse
        for i in (0..self.decoder.len()).rev() {
            let stage = &self.decoder[i];
            relu_backward(&mut ws.d_cur, &ws.dec_act[i]);
            let g = &mut grads.dec[i];
            stage.conv.backward(
                &ws.d_cur,
                &ws.dec_cols[i],
                &mut g.weight,
                &mut g.bias,
                Some(&mut ws.dcols),
            );
            let pre_len = ws.dec_lens[i];
            let conv_len = if stage.upsample { pre_len * 2 } else { pre_len };
            stage.conv.col2im(&ws.dcols, batch, conv_len, &mut ws.d_next);
            if stage.upsample {
                upsample2_backward(&ws.d_next, batch, pre_len, &mut ws.d_cur);
            } else {
                std::mem::swap(&mut ws.d_cur, &mut ws.d_next);
            }
        }

        // bottleneck (linear on both sides)
        conv_to_fc(&ws.d_cur, batch, bn, &mut ws.fc_buf);
        self.fc_dec.backward(
            &ws.fc_buf,
            &ws.latent,
            &mut grads.fc_dec.weight,
            &mut grads.fc_dec.bias,
            Some(&mut ws.d_latent),
        );
        self.fc_enc.backward(
            &ws.d_latent,
            &ws.fc_in,
            &mut grads.fc_enc.weight,
            &mut grads.fc_enc.bias,
            Some(&mut ws.fc_buf),
        );
        fc_to_conv(&ws.fc_buf, batch, bn, &mut ws.d_cur);

        // encoder in reverse; no input gradient needed past the first layer
        for i in (0..self.encoder.len()).rev() {
            let conv = &self.encoder[i];
            relu_backward(&mut ws.d_cur, &ws.enc_act[i]);
            let g = &mut grads.enc[i];
            conv.backward(
                &ws.d_cur,
                &ws.enc_cols[i],
                &mut g.weight,
                &mut g.bias,
                if i > 0 { Some(&mut ws.dcols) } else { None },
            );
            if i > 0 {
                conv.col2im(&ws.dcols, batch, ws.enc_lens[i], &mut ws.d_next);
                std::mem::swap(&mut ws.d_cur, &mut ws.d_next);
            }
        }
    }
}

/// Sum of squared differences accumulated in f64 over fixed chunks, so the
/// result does not depend on worker count.
pub(crate) fn sum_squared_diff<F: Scalar>(a: &Mat<F>, b: &Mat<F>) -> f64 {
    use rayon::prelude::*;
    debug_assert_eq!(a.data.len(), b.data.len());
    let partials: Vec<f64> = a
        .data
        .par_chunks(8192)
        .zip(b.data.par_chunks(8192))
        .map(|(ca, cb)| {
            let mut acc = 0.0f64;
            for (&x, &y) in ca.iter().zip(cb) {
                let d = x.to_f64() - y.to_f64();
                acc += d * d;
            }
            acc
        })
        .collect();
    partials.iter().sum()
}

/// Per-layer weight and bias gradients, mirroring the model layout.
pub struct LayerGrads<F> {
    pub weight: Mat<F>,
    pub bias: Vec<F>,
}

pub struct Gradients<F: Scalar> {
    pub enc: Vec<LayerGrads<F>>,
    pub fc_enc: LayerGrads<F>,
    pub fc_dec: LayerGrads<F>,
    pub dec: Vec<LayerGrads<F>>,
    pub proj: LayerGrads<F>,
}

impl<F: Scalar> Gradients<F> {
    pub fn zeros_like(model: &AutoencoderModel<F>) -> Self {
        let grad_of_conv = |c: &Conv1d<F>| LayerGrads {
            weight: Mat::zeros(c.weight.rows, c.weight.cols),
            bias: vec![F::ZERO; c.bias.len()],
        };
        let grad_of_fc = |f: &Fc<F>| LayerGrads {
            weight: Mat::zeros(f.weight.rows, f.weight.cols),
            bias: vec![F::ZERO; f.bias.len()],
        };
        Self {
            enc: model.encoder.iter().map(grad_of_conv).collect(),
            fc_enc: grad_of_fc(&model.fc_enc),
            fc_dec: grad_of_fc(&model.fc_dec),
            dec: model.decoder.iter().map(|s| grad_of_conv(&s.conv)).collect(),
            proj: grad_of_conv(&model.proj),
        }
    }

    /// Flat slices in the same order as the model's parameter tensors.
    pub fn flat_slices(&self) -> Vec<&[F]> {
        let mut out: Vec<&[F]> = Vec::new();
        for g in &self.enc {
            out.push(&g.weight.data);
            out.push(&g.bias);
        }
        out.push(&self.fc_enc.weight.data);
        out.push(&self.fc_enc.bias);
        out.push(&self.fc_dec.weight.data);
        out.push(&self.fc_dec.bias);
        for g in &self.dec {
            out.push(&g.weight.data);
            out.push(&g.bias);
        }
        out.push(&self.proj.weight.data);
        out.push(&self.proj.bias);
        out
    }
}

/// Reusable buffers for forward/backward passes.
pub struct Workspace<F: Scalar> {
    enc_cols: Vec<Mat<F>>,
    enc_act: Vec<Mat<F>>,
    enc_lens: Vec<usize>,
    fc_in: Mat<F>,
    pub(crate) latent: Mat<F>,
    fc_dec_out: Mat<F>,
    dec_base: Mat<F>,
    dec_cols: Vec<Mat<F>>,
    dec_act: Vec<Mat<F>>,
    dec_lens: Vec<usize>,
    up_buf: Mat<F>,
    proj_cols: Mat<F>,
    pub(crate) recon: Mat<F>,
    d_cur: Mat<F>,
    d_next: Mat<F>,
    dcols: Mat<F>,
    fc_buf: Mat<F>,
    d_latent: Mat<F>,
}

impl<F: Scalar> Workspace<F> {
    pub fn new() -> Self {
        Self {
            enc_cols: Vec::new(),
            enc_act: Vec::new(),
            enc_lens: Vec::new(),
            fc_in: Mat::zeros(0, 0),
            latent: Mat::zeros(0, 0),
            fc_dec_out: Mat::zeros(0, 0),
            dec_base: Mat::zeros(0, 0),
            dec_cols: Vec::new(),
            dec_act: Vec::new(),
            dec_lens: Vec::new(),
            up_buf: Mat::zeros(0, 0),
            proj_cols: Mat::zeros(0, 0),
            recon: Mat::zeros(0, 0),
            d_cur: Mat::zeros(0, 0),
            d_next: Mat::zeros(0, 0),
            dcols: Mat::zeros(0, 0),
            fc_buf: Mat::zeros(0, 0),
            d_latent: Mat::zeros(0, 0),
        }
    }

    fn ensure_layers(&mut self, n_enc: usize, n_dec: usize) {
        self.enc_cols.resize_with(n_enc, || Mat::zeros(0, 0));
        self.enc_act.resize_with(n_enc, || Mat::zeros(0, 0));
        self.dec_cols.resize_with(n_dec, || Mat::zeros(0, 0));
        self.dec_act.resize_with(n_dec, || Mat::zeros(0, 0));
    }
}

impl<F: Scalar> Default for Workspace<F> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::train::{train, TrainConfig};
    use super::*;
    use crate::streamline::Streamline;

    fn tiny_config(seed: u64) -> ModelConfig {
        ModelConfig {
            input_points: 16,
            encoder_features: vec![4, 8],
            latent_dim: 4,
            seed,
            ..ModelConfig::default()
        }
    }

    fn wave(seed: u64, points: usize) -> Streamline {
        let phase = (seed % 17) as f64 * 0.37;
        let amp = 4.0 + (seed % 5) as f64;
        let pts = (0..points)
            .map(|i| {
                let t = i as f64 / (points - 1) as f64;
                Point3::new(
                    40.0 * t + (seed % 7) as f64,
                    amp * (2.0 * t + phase).sin(),
                    2.0 * (3.0 * t + phase).cos(),
                )
            })
            .collect();
        Streamline::new(pts).unwrap()
    }

    fn fitted_model(seed: u64) -> (AutoencoderModel<f64>, Vec<Streamline>) {
        let batch: Vec<Streamline> = (0..6).map(|i| wave(seed + i, 16)).collect();
        let mut model = AutoencoderModel::<f64>::init(tiny_config(seed)).unwrap();
        model.norm = Normalization::fit(&batch, Point3::ZERO);
        (model, batch)
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = AutoencoderModel::<f32>::init(ModelConfig::default()).unwrap();
        let b = AutoencoderModel::<f32>::init(ModelConfig::default()).unwrap();
        assert_eq!(a.snapshot_params(), b.snapshot_params());
        // bottleneck flattens 1024 features x 4 samples under the default
        // ladder interpretation
        assert_eq!(a.config.bottleneck_len(), 4);
        assert_eq!(a.fc_enc.weight.rows, 32);
        assert_eq!(a.fc_enc.weight.cols, 1024 * 4);
        // encoder output lengths halve per layer: 128, 64, 32, 16, 8, 4
        let mut len = 256;
        for conv in &a.encoder {
            len = conv.output_len(len);
        }
        assert_eq!(len, 4);
        let c = AutoencoderModel::<f32>::init(ModelConfig {
            seed: 8,
            ..ModelConfig::default()
        })
        .unwrap();
        assert_ne!(a.snapshot_params(), c.snapshot_params());
    }

    #[test]
    fn output_size_interpretation_flattens_wider() {
        let cfg = ModelConfig {
            table_interpretation: TableInterpretation::OutputSize,
            ..ModelConfig::default()
        };
        let m = AutoencoderModel::<f32>::init(cfg).unwrap();
        assert_eq!(m.config.bottleneck_len(), 8);
        assert_eq!(m.fc_enc.weight.cols, 1024 * 8);
        // first encoder conv keeps length, the rest halve
        assert_eq!(m.encoder[0].stride, 1);
        assert!(m.encoder[1..].iter().all(|c| c.stride == 2));
    }

    #[test]
    fn encode_decode_shapes_and_determinism() {
        let (model, batch) = fitted_model(3);
        let z = model.encode(&batch[0]).unwrap();
        assert_eq!(z.dim(), 4);
        assert!(z.is_finite());
        let again = model.encode(&batch[0]).unwrap();
        assert_eq!(z, again);
        let s = model.decode(&z).unwrap();
        assert_eq!(s.len(), 16);
        let s2 = model.decode(&z).unwrap();
        assert_eq!(s, s2);
        // wrong point count rejected
        assert!(model.encode(&wave(1, 20)).is_err());
    }

    #[test]
    fn batch_encode_matches_single_encode() {
        let (model, batch) = fitted_model(9);
        let all = model.encode_batch(&batch).unwrap();
        for (s, z_batch) in batch.iter().zip(&all) {
            let z_single = model.encode(s).unwrap();
            for (a, b) in z_single.values.iter().zip(&z_batch.values) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn encode_is_translation_sensitive() {
        let (model, batch) = fitted_model(5);
        let shifted = Streamline::new(
            batch[0]
                .points()
                .iter()
                .map(|p| Point3::new(p.x + 50.0, p.y, p.z))
                .collect(),
        )
        .unwrap();
        let z0 = model.encode(&batch[0]).unwrap();
        let z1 = model.encode(&shifted).unwrap();
        let dist: f64 = z0
            .values
            .iter()
            .zip(&z1.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(dist > 1e-6, "translation should move the latent, moved {dist}");
    }

    #[test]
    fn normalization_round_trip() {
        let (model, batch) = fitted_model(7);
        for p in batch[0].points() {
            let back = model.norm.denormalize_point(&model.norm.normalize_point(p));
            assert!((back.x - p.x).abs() < 1e-9);
            assert!((back.y - p.y).abs() < 1e-9);
            assert!((back.z - p.z).abs() < 1e-9);
        }
    }

    #[test]
    fn loss_matches_encode_decode_recomposition() {
        let (model, batch) = fitted_model(11);
        let loss = model.loss(&batch).unwrap();
        assert!(loss.is_finite() && loss >= 0.0);
        // oracle: renormalize the decoded world-space output and recompute
        let mut acc = 0.0;
        let mut count = 0usize;
        for s in &batch {
            let recon = model.decode(&model.encode(s).unwrap()).unwrap();
            for (p, q) in s.points().iter().zip(recon.points()) {
                let pn = model.norm.normalize_point(p);
                let qn = model.norm.normalize_point(q);
                acc += (pn.x - qn.x).powi(2) + (pn.y - qn.y).powi(2) + (pn.z - qn.z).powi(2);
                count += 3;
            }
        }
        let oracle = acc / count as f64;
        assert!((loss - oracle).abs() < 1e-7, "{loss} vs {oracle}");
        // batch order invariance
        let mut rev = batch.clone();
        rev.reverse();
        let loss_rev = model.loss(&rev).unwrap();
        assert!((loss - loss_rev).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        let (model, batch) = fitted_model(13);
        let grads = model.gradients(&batch).unwrap();
        let flat: Vec<Vec<f64>> = grads.flat_slices().iter().map(|s| s.to_vec()).collect();
        let sizes: Vec<usize> = flat.iter().map(|t| t.len()).collect();
        let total: usize = sizes.iter().sum();

        let mut model = model;
        let h = 1e-4;
        let mut state = 0xDEADBEEFu64;
        let mut worst = 0.0f64;
        let mut checked = 0;
        let mut kinked = 0;
        let mut fd_at = |model: &mut AutoencoderModel<f64>, ti: usize, ei: usize, h: f64| {
            let original = model.param_tensors_mut()[ti][ei];
            model.param_tensors_mut()[ti][ei] = original + h;
            let up = model.loss(&batch).unwrap();
            model.param_tensors_mut()[ti][ei] = original - h;
            let down = model.loss(&batch).unwrap();
            model.param_tensors_mut()[ti][ei] = original;
            (up - down) / (2.0 * h)
        };
        while checked < 220 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let pick = (state >> 16) as usize % total;
            let (mut ti, mut ei) = (0usize, pick);
            while ei >= sizes[ti] {
                ei -= sizes[ti];
                ti += 1;
            }
            let fd = fd_at(&mut model, ti, ei, h);
            let fd_half = fd_at(&mut model, ti, ei, h / 2.0);
            let g = flat[ti][ei];
            let denom = fd.abs().max(g.abs());
            if denom < 1e-10 {
                checked += 1;
                continue;
            }
            // a ReLU kink inside the stencil makes the central difference
            // step-size dependent; such samples are not valid derivative
            // estimates at this h
            if (fd - fd_half).abs() / denom > 1e-5 {
                kinked += 1;
                assert!(kinked < 40, "too many kink-adjacent samples");
                continue;
            }
            let rel = (fd - g).abs() / denom;
            worst = worst.max(rel);
            assert!(rel <= 1e-3, "tensor {ti} elem {ei}: fd {fd} vs analytic {g} (rel {rel})");
            checked += 1;
        }
        assert!(checked >= 200);
        assert!(worst <= 1e-3, "worst relative error {worst}");
    }

    #[test]
    fn zero_projection_weights_zero_upstream_gradients() {
        let (mut model, batch) = fitted_model(17);
        model.proj.weight.fill_zero();
        for b in model.proj.bias.iter_mut() {
            *b = 0.0;
        }
        let grads = model.gradients(&batch).unwrap();
        for g in grads.enc.iter().chain(&grads.dec) {
            assert!(g.weight.data.iter().all(|&v| v == 0.0));
            assert!(g.bias.iter().all(|&v| v == 0.0));
        }
        assert!(grads.fc_enc.weight.data.iter().all(|&v| v == 0.0));
        assert!(grads.fc_dec.weight.data.iter().all(|&v| v == 0.0));
        // the projection itself still learns
        assert!(grads.proj.weight.data.iter().any(|&v| v != 0.0));
        assert!(grads.proj.bias.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn projection_bias_gradient_is_scaled_mean_residual() {
        let (model, batch) = fitted_model(19);
        let grads = model.gradients(&batch).unwrap();
        // forward once more to get residuals
        let refs: Vec<&Streamline> = batch.iter().collect();
        let x = model.normalize_batch(&refs);
        let mut ws = Workspace::new();
        model.forward(&x, refs.len(), &mut ws);
        let channels = model.config.input_channels;
        let per_channel = x.data.len() / channels;
        for ch in 0..channels {
            let mut resid = 0.0f64;
            for col in 0..per_channel {
                resid += ws.recon.at(ch, col) - x.at(ch, col);
            }
            let mean = resid / per_channel as f64;
            let expect = 2.0 * mean / channels as f64;
            let got = grads.proj.bias[ch];
            assert!(
                (got - expect).abs() < 1e-9,
                "channel {ch}: got {got}, closed form {expect}"
            );
        }
    }

    #[test]
    fn empty_batch_rejected() {
        let (model, _) = fitted_model(23);
        assert!(matches!(model.loss(&[]), Err(crate::Error::EmptyBatch)));
        assert!(matches!(model.gradients(&[]), Err(crate::Error::EmptyBatch)));
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let train_set: Vec<Streamline> = (0..48).map(|i| wave(i, 16)).collect();
        let val_set: Vec<Streamline> = (100..116).map(|i| wave(i, 16)).collect();
        let mut model = AutoencoderModel::<f64>::init(tiny_config(31)).unwrap();
        model.norm = Normalization::fit(&train_set, Point3::ZERO);
        let cfg = TrainConfig {
            learning_rate: 3e-3,
            weight_decay: 0.0,
            batch_size: 16,
            max_epochs: 40,
            patience: 40,
            seed: 5,
            ..TrainConfig::default()
        };
        let (trained, report) = train(model, &train_set, &val_set, &cfg).unwrap();
        assert!(report.epochs.len() <= 40);
        let first = report.epochs.first().unwrap().val_loss;
        let last = report.best_val_loss;
        assert!(last < first, "val loss should drop: {first} -> {last}");
        // training is deterministic end to end
        let mut model2 = AutoencoderModel::<f64>::init(tiny_config(31)).unwrap();
        model2.norm = Normalization::fit(&train_set, Point3::ZERO);
        let (trained2, report2) = train(model2, &train_set, &val_set, &cfg).unwrap();
        assert_eq!(report, report2);
        assert_eq!(trained.snapshot_params(), trained2.snapshot_params());
    }
}
