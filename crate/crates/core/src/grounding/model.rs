use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::text::Vocabulary;
use super::{GroundingError, Heatmap};
use crate::nn::{
    binary_cross_entropy, binary_cross_entropy_logit_grad, he_uniform, relu, relu_backward,
    sigmoid, upsample_bilinear, upsample_bilinear_backward, upsample_nearest,
    upsample_nearest_backward, Checkpoint, Conv2d, ConvCache, Linear, NnError, Parameters, Tensor,
};
use crate::observation::image_to_tensor;

pub const CHECKPOINT_KIND: &str = "grounding";

/// Output of the decoder is upsampled by this factor back to input size.
const OUTPUT_STRIDE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundingConfig {
    pub width: usize,
    pub height: usize,
    pub embed_dim: usize,
    pub text_dim: usize,
    /// Encoder widths at strides 2, 4 and 8.
    pub channels: [usize; 3],
    pub decoder_channels: usize,
    pub sigma: f64,
    pub seed: u64,
    /// Build the vocabulary with word pairs as extra terms.
    #[serde(default)]
    pub bigrams: bool,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        Self {
            width: 160,
            height: 120,
            embed_dim: 32,
            text_dim: 16,
            channels: [8, 16, 32],
            decoder_channels: 16,
            sigma: super::DEFAULT_SIGMA,
            seed: 0,
            bigrams: true,
        }
    }
}

impl GroundingConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !self.width.is_multiple_of(8)
            || !self.height.is_multiple_of(8)
            || self.width == 0
            || self.height == 0
        {
            return Err(NnError::InvalidConfig(format!(
                "resolution {}x{} must be a positive multiple of 8",
                self.width, self.height
            )));
        }
        if !(self.sigma > 0.0) {
            return Err(NnError::InvalidConfig(format!("sigma {}", self.sigma)));
        }
        Ok(())
    }
}

/// Two-stream encoder-decoder: a conv encoder over the image, a bag-of-words
/// text encoder, fused by tiling the text vector over the bottleneck.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundingModel {
    pub config: GroundingConfig,
    pub vocab: Vocabulary,
    embedding: Tensor,
    text1: Linear,
    text2: Linear,
    e1: Conv2d,
    e2: Conv2d,
    e3: Conv2d,
    e4: Conv2d,
    fuse: Conv2d,
    b2: Conv2d,
    dec1: Conv2d,
    dec2: Conv2d,
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone)]
pub struct GroundingTrace {
    tokens: Vec<usize>,
    bag: Tensor,
    h1: Tensor,
    x: Tensor,
    a1: Tensor,
    c1: ConvCache,
    a2: Tensor,
    c2: ConvCache,
    a3: Tensor,
    c3: ConvCache,
    a4: Tensor,
    c4: ConvCache,
    fin: Tensor,
    cf: ConvCache,
    f: Tensor,
    cb: ConvCache,
    b: Tensor,
    din: Tensor,
    cd1: ConvCache,
    d1: Tensor,
    cd2: ConvCache,
    pub heatmap: Heatmap,
}

fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
    let (h, w) = (a.shape()[1], a.shape()[2]);
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(&[a.shape()[0] + b.shape()[0], h, w], data).expect("matching spatial size")
}

fn split_channels(x: &Tensor, first: usize) -> (Tensor, Tensor) {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let cut = first * h * w;
    (
        Tensor::from_vec(&[first, h, w], x.data()[..cut].to_vec()).expect("shape"),
        Tensor::from_vec(&[c - first, h, w], x.data()[cut..].to_vec()).expect("shape"),
    )
}

impl GroundingModel {
    pub fn new(config: GroundingConfig, vocab: Vocabulary) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let [c1, c2, c3] = config.channels;
        let (e, t, d) = (config.embed_dim, config.text_dim, config.decoder_channels);
        Ok(Self {
            embedding: he_uniform(&mut rng, &[vocab.len(), e], e),
            text1: Linear::new(&mut rng, e, t, true),
            text2: Linear::new(&mut rng, t, t, true),
            e1: Conv2d::new(&mut rng, 3, c1, 3, 2, 1),
            e2: Conv2d::new(&mut rng, c1, c2, 3, 2, 1),
            e3: Conv2d::new(&mut rng, c2, c3, 3, 2, 1),
            e4: Conv2d::new(&mut rng, c3, c3, 3, 1, 1),
            fuse: Conv2d::new(&mut rng, c3 + t, c3, 1, 1, 0),
            b2: Conv2d::new(&mut rng, c3, c3, 3, 1, 1),
            dec1: Conv2d::new(&mut rng, c3 + c2, d, 1, 1, 0),
            dec2: Conv2d::new(&mut rng, d, 1, 3, 1, 1),
            config,
            vocab,
        })
    }

    /// Text vector for an instruction.
    pub fn encode_instruction(&self, text: &str) -> Vec<f64> {
        let tokens = self.vocab.encode(text);
        let (_, _, t) = self.text_forward(&tokens);
        t.into_data()
    }

    fn text_forward(&self, tokens: &[usize]) -> (Tensor, Tensor, Tensor) {
        let e = self.config.embed_dim;
        let mut bag = vec![0.0; e];
        for &tok in tokens {
            for (b, w) in bag.iter_mut().zip(&self.embedding.data()[tok * e..][..e]) {
                *b += w;
            }
        }
        let bag = Tensor::from_vec(&[1, e], bag).expect("shape");
        let h1 = relu(&self.text1.forward(&bag).expect("embed dim"));
        let t = self.text2.forward(&h1).expect("text dim");
        (bag, h1, t)
    }

    fn check_resolution(&self, w: usize, h: usize) -> Result<(), GroundingError> {
        if w != self.config.width || h != self.config.height {
            return Err(GroundingError::ResolutionMismatch {
                got_w: w,
                got_h: h,
                want_w: self.config.width,
                want_h: self.config.height,
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor, tokens: &[usize]) -> Result<GroundingTrace, GroundingError> {
        match x.shape() {
            [3, h, w] => self.check_resolution(*w, *h)?,
            s => return Err(NnError::ShapeMismatch(format!("grounding input {s:?}")).into()),
        }
        let (bag, h1, text) = self.text_forward(tokens);
        let (z1, c1) = self.e1.forward(x)?;
        let a1 = relu(&z1);
        let (z2, c2) = self.e2.forward(&a1)?;
        let a2 = relu(&z2);
        let (z3, c3) = self.e3.forward(&a2)?;
        let a3 = relu(&z3);
        let (z4, c4) = self.e4.forward(&a3)?;
        let a4 = relu(&z4);
        let (bh, bw) = (a4.shape()[1], a4.shape()[2]);
        let mut tiled = Vec::with_capacity(text.len() * bh * bw);
        for v in text.data() {
            tiled.extend(std::iter::repeat_n(*v, bh * bw));
        }
        let fin = concat_channels(&a4, &Tensor::from_vec(&[text.len(), bh, bw], tiled)?);
        let (zf, cf) = self.fuse.forward(&fin)?;
        let f = relu(&zf);
        let (zb, cb) = self.b2.forward(&f)?;
        let b = relu(&zb);
        let din = concat_channels(&upsample_nearest(&b, 2), &a2);
        let (zd, cd1) = self.dec1.forward(&din)?;
        let d1 = relu(&zd);
        let (low, cd2) = self.dec2.forward(&d1)?;
        let logits = upsample_bilinear(&low, OUTPUT_STRIDE);
        let probs = sigmoid(&logits);
        Ok(GroundingTrace {
            tokens: tokens.to_vec(),
            bag,
            h1,
            x: x.clone(),
            a1,
            c1,
            a2,
            c2,
            a3,
            c3,
            a4,
            c4,
            fin,
            cf,
            f,
            cb,
            b,
            din,
            cd1,
            d1,
            cd2,
            heatmap: Heatmap {
                width: self.config.width,
                height: self.config.height,
                data: probs.into_data(),
            },
        })
    }

    /// Parameter gradients given the gradient with respect to the output logits.
    pub fn backward(&self, tr: &GroundingTrace, dlogits: &Tensor) -> Result<Vec<Tensor>, NnError> {
        let [_, c2, c3] = self.config.channels;
        let dlow = upsample_bilinear_backward(dlogits, OUTPUT_STRIDE);
        let (dd1, g_dec2) = self.dec2.backward(&tr.d1, &tr.cd2, &dlow)?;
        let (ddin, g_dec1) = self
            .dec1
            .backward(&tr.din, &tr.cd1, &relu_backward(&tr.d1, &dd1))?;
        let (dup, dskip) = split_channels(&ddin, c3);
        let db = upsample_nearest_backward(&dup, 2);
        let (df, g_b2) = self
            .b2
            .backward(&tr.f, &tr.cb, &relu_backward(&tr.b, &db))?;
        let (dfin, g_fuse) = self
            .fuse
            .backward(&tr.fin, &tr.cf, &relu_backward(&tr.f, &df))?;
        let (da4, dtiled) = split_channels(&dfin, c3);
        let (da3, g_e4) = self
            .e4
            .backward(&tr.a3, &tr.c4, &relu_backward(&tr.a4, &da4))?;
        let (mut da2, g_e3) = self
            .e3
            .backward(&tr.a2, &tr.c3, &relu_backward(&tr.a3, &da3))?;
        debug_assert_eq!(dskip.shape()[0], c2);
        da2.add_assign(&dskip);
        let (da1, g_e2) = self
            .e2
            .backward(&tr.a1, &tr.c2, &relu_backward(&tr.a2, &da2))?;
        let (_, g_e1) = self
            .e1
            .backward(&tr.x, &tr.c1, &relu_backward(&tr.a1, &da1))?;

        let plane = dtiled.shape()[1] * dtiled.shape()[2];
        let dtext: Vec<f64> = dtiled
            .data()
            .chunks_exact(plane)
            .map(|c| c.iter().sum())
            .collect();
        let dtext = Tensor::from_vec(&[1, dtext.len()], dtext)?;
        let (dh1, g_t2) = self.text2.backward(&tr.h1, &dtext)?;
        let (dbag, g_t1) = self.text1.backward(&tr.bag, &relu_backward(&tr.h1, &dh1))?;
        let e = self.config.embed_dim;
        let mut g_emb = self.embedding.zeros_like();
        for &tok in &tr.tokens {
            for (g, d) in g_emb.data_mut()[tok * e..][..e].iter_mut().zip(dbag.data()) {
                *g += d;
            }
        }

        let mut grads = vec![g_emb];
        grads.extend(g_t1.into_vec());
        grads.extend(g_t2.into_vec());
        for g in [g_e1, g_e2, g_e3, g_e4, g_fuse, g_b2, g_dec1, g_dec2] {
            grads.extend(g);
        }
        Ok(grads)
    }

    /// BCE loss against a target heatmap, its parameter gradients, and the trace.
    pub fn loss_and_grads(
        &self,
        x: &Tensor,
        tokens: &[usize],
        target: &Heatmap,
    ) -> Result<(f64, Vec<Tensor>, GroundingTrace), GroundingError> {
        let trace = self.forward(x, tokens)?;
        let loss = binary_cross_entropy(&trace.heatmap.data, &target.data)?;
        let g = binary_cross_entropy_logit_grad(&trace.heatmap.data, &target.data)?;
        let dlogits = Tensor::from_vec(&[1, self.config.height, self.config.width], g)?;
        let grads = self.backward(&trace, &dlogits)?;
        Ok((loss, grads, trace))
    }

    pub fn predict_heatmap(&self, image: &RgbImage, text: &str) -> Result<Heatmap, GroundingError> {
        self.check_resolution(image.width() as usize, image.height() as usize)?;
        let tokens = self.vocab.encode(text);
        Ok(self.forward(&image_to_tensor(image), &tokens)?.heatmap)
    }

    pub fn to_checkpoint_file(&self) -> Checkpoint {
        self.to_checkpoint(
            CHECKPOINT_KIND,
            self.config.seed,
            serde_json::json!({ "model": self.config, "vocab": self.vocab }),
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NnError> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let config: GroundingConfig = serde_json::from_value(ck.config["model"].clone())
            .map_err(|e| NnError::Format(e.to_string()))?;
        let vocab: Vocabulary = serde_json::from_value(ck.config["vocab"].clone())
            .map_err(|e| NnError::Format(e.to_string()))?;
        let mut model = Self::new(config, vocab)?;
        ck.load_into(model.params_mut())?;
        Ok(model)
    }
}

impl Parameters for GroundingModel {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("embedding".to_string(), &self.embedding)];
        for (name, lin) in [("text1", &self.text1), ("text2", &self.text2)] {
            out.push((format!("{name}.weight"), &lin.weight));
            if let Some(b) = &lin.bias {
                out.push((format!("{name}.bias"), b));
            }
        }
        for (name, conv) in [
            ("e1", &self.e1),
            ("e2", &self.e2),
            ("e3", &self.e3),
            ("e4", &self.e4),
            ("fuse", &self.fuse),
            ("b2", &self.b2),
            ("dec1", &self.dec1),
            ("dec2", &self.dec2),
        ] {
            out.push((format!("{name}.weight"), &conv.weight));
            out.push((format!("{name}.bias"), &conv.bias));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embedding];
        out.extend(self.text1.params_mut());
        out.extend(self.text2.params_mut());
        for conv in [
            &mut self.e1,
            &mut self.e2,
            &mut self.e3,
            &mut self.e4,
            &mut self.fuse,
            &mut self.b2,
            &mut self.dec1,
            &mut self.dec2,
        ] {
            out.extend(conv.params_mut());
        }
        out
    }
}
