//! Batch assembly: decode → enhance at native size → resize → augment
//! (train only) → normalize, with deterministic ordering.

use rayon::prelude::*;

use super::transform::{augment, normalize, resize_for_model, AugmentConfig};
use super::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::mixprocessing::{mixprocess, PreprocessConfig};
use crate::rng::substream;
use crate::tensor::Tensor;

/// One mini-batch of normalized images and their labels.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `[B × 3 × S × S]`, already normalized.
    pub images: Tensor,
    pub labels: Vec<usize>,
    /// Manifest indices of the batch members, in batch order.
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct BatchOptions<'a> {
    pub batch_size: usize,
    pub image_size: usize,
    pub preprocess: &'a PreprocessConfig,
    /// Augmentation; only permitted on the train split.
    pub augment: Option<&'a AugmentConfig>,
    /// Shuffle seed for the train split; `None` keeps manifest order.
    pub shuffle_seed: Option<u64>,
    pub epoch: u64,
}

/// Streams batches for one split. Train order reshuffles per epoch from the
/// shuffle seed; val/test always follow manifest order bit-for-bit.
pub fn batches<'a>(
    manifest: &'a DatasetManifest,
    split: Split,
    opts: BatchOptions<'a>,
) -> Result<impl Iterator<Item = Result<Batch>> + 'a> {
    if opts.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".to_string()));
    }
    if opts.augment.is_some() && split != Split::Train {
        return Err(Error::Contract(format!(
            "augmentation is only permitted on the train split, requested on {split}"
        )));
    }
    if let Some(aug) = opts.augment {
        aug.validate()?;
    }
    opts.preprocess.validate()?;
    let mut order = manifest.split_indices(split);
    if split == Split::Train {
        if let Some(seed) = opts.shuffle_seed {
            let mut rng = substream(seed, &[0x5348_5546, opts.epoch]);
            for i in (1..order.len()).rev() {
                let j = rand::Rng::gen_range(&mut rng, 0..=i);
                order.swap(i, j);
            }
        }
    }
    let image_size = opts.image_size;
    let preprocess = opts.preprocess.clone();
    let aug = opts.augment.cloned();
    let epoch = opts.epoch;
    let chunks: Vec<Vec<usize>> = order
        .chunks(opts.batch_size)
        .map(|c| c.to_vec())
        .collect();
    Ok(chunks.into_iter().map(move |chunk| {
        assemble_batch(manifest, &chunk, image_size, &preprocess, aug.as_ref(), epoch)
    }))
}

/// Enhancement → resize → normalize, the inference-time image pipeline.
pub fn prepare_image_for_model(
    img: &ImageBuffer,
    image_size: usize,
    preprocess: &PreprocessConfig,
) -> Result<Tensor> {
    prepare_image(img, image_size, preprocess, None)
}

/// Full single-image pipeline shared by training, evaluation and predict.
pub(crate) fn prepare_image(
    img: &ImageBuffer,
    image_size: usize,
    preprocess: &PreprocessConfig,
    aug: Option<(&AugmentConfig, u64, u64)>,
) -> Result<Tensor> {
    let enhanced = mixprocess(img, preprocess)?;
    let mut resized = resize_for_model(&enhanced, image_size);
    if let Some((cfg, sample_index, epoch)) = aug {
        resized = augment(&resized, cfg, sample_index, epoch);
    }
    normalize(&resized)
}

fn assemble_batch(
    manifest: &DatasetManifest,
    chunk: &[usize],
    image_size: usize,
    preprocess: &PreprocessConfig,
    aug: Option<&AugmentConfig>,
    epoch: u64,
) -> Result<Batch> {
    // decode and enhance in parallel; collect preserves chunk order
    let prepared: Vec<Result<(Tensor, usize)>> = chunk
        .par_iter()
        .map(|&idx| {
            let sample = &manifest.samples[idx];
            let img = ImageBuffer::load(&sample.path)?;
            let tensor = prepare_image(
                &img,
                image_size,
                preprocess,
                aug.map(|a| (a, idx as u64, epoch)),
            )
            .map_err(|e| Error::Input(format!("{}: {e}", sample.path.display())))?;
            Ok((tensor, sample.class_id))
        })
        .collect();

    let per_image = 3 * image_size * image_size;
    let mut data = Vec::with_capacity(chunk.len() * per_image);
    let mut labels = Vec::with_capacity(chunk.len());
    for item in prepared {
        let (tensor, label) = item?;
        data.extend_from_slice(tensor.data());
        labels.push(label);
    }
    Ok(Batch {
        images: Tensor::new(vec![chunk.len(), 3, image_size, image_size], data)?,
        labels,
        indices: chunk.to_vec(),
    })
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Borrowed view of one sample as a `[3×S×S]` tensor.
    pub fn sample(&self, i: usize) -> Tensor {
        let s = self.images.shape();
        let per = s[1] * s[2] * s[3];
        Tensor::new(
            vec![s[1], s[2], s[3]],
            self.images.data()[i * per..(i + 1) * per].to_vec(),
        )
        .expect("batch slice")
    }
}
