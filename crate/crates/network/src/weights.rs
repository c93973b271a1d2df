//! Seeded parameter sets and their on-disk bundle.

use std::fs;
use std::path::Path;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use specvid_core::io::{load_tensor, save_tensor};
use specvid_core::{Error, Result, Scalar, Tensor};

use crate::mdffn::MdffnVariant;
use crate::model::NetworkConfig;

/// Draws tensors from `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform<F: Scalar>(&mut self, shape: &[usize], fan_in: usize) -> Tensor<F> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let rng = &mut self.rng;
        Tensor::from_fn(shape, |_| F::lit(dist.sample(rng)))
    }
}

fn check<F: Scalar>(t: &Tensor<F>, shape: &[usize], name: &str) -> Result<()> {
    if t.shape() != shape {
        return Err(Error::Shape(format!(
            "{name}: expected {shape:?}, got {:?}",
            t.shape()
        )));
    }
    Ok(())
}

/// Parameters of one cross-domain attention layer. `w_q2`, `w_k2`, `w_v2`
/// are only read by the orderings that re-project for the second domain.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights<F> {
    pub w_q: Tensor<F>,
    pub w_k: Tensor<F>,
    pub w_v: Tensor<F>,
    pub w_o: Tensor<F>,
    pub w_q2: Tensor<F>,
    pub w_k2: Tensor<F>,
    pub w_v2: Tensor<F>,
    /// `[tau1, tau2, tau3]`.
    pub temperatures: Tensor<F>,
    /// Depthwise positional filter bank `[C, 3, 3]`.
    pub gconv: Tensor<F>,
}

impl<F: Scalar> AttentionWeights<F> {
    pub fn init(channels: usize, heads: usize, init: &mut Init) -> Self {
        let c = channels;
        let tau = F::lit(((c / heads.max(1)).max(1) as f64).sqrt());
        AttentionWeights {
            w_q: init.uniform(&[c, c], c),
            w_k: init.uniform(&[c, c], c),
            w_v: init.uniform(&[c, c], c),
            w_o: init.uniform(&[c, c], c),
            w_q2: init.uniform(&[c, c], c),
            w_k2: init.uniform(&[c, c], c),
            w_v2: init.uniform(&[c, c], c),
            temperatures: Tensor::filled(&[3], tau),
            gconv: init.uniform(&[c, 3, 3], 9),
        }
    }

    pub fn channels(&self) -> usize {
        self.w_q.shape()[0]
    }

    pub fn tau(&self, stage: usize) -> F {
        self.temperatures.data()[stage]
    }

    pub fn validate(&self, channels: usize) -> Result<()> {
        let c = channels;
        for (name, t) in self.tensors("attention") {
            let want: &[usize] = match name.rsplit('.').next().unwrap_or("") {
                "temperatures" => &[3],
                "gconv" => &[c, 3, 3],
                _ => &[c, c],
            };
            check(t, want, &name)?;
        }
        if !self.temperatures.data().iter().all(|&t| t > F::zero() && t.is_finite()) {
            return Err(Error::Config("attention temperatures must be positive".into()));
        }
        Ok(())
    }

    pub fn tensors(&self, prefix: &str) -> Vec<(String, &Tensor<F>)> {
        vec![
            (format!("{prefix}.w_q"), &self.w_q),
            (format!("{prefix}.w_k"), &self.w_k),
            (format!("{prefix}.w_v"), &self.w_v),
            (format!("{prefix}.w_o"), &self.w_o),
            (format!("{prefix}.w_q2"), &self.w_q2),
            (format!("{prefix}.w_k2"), &self.w_k2),
            (format!("{prefix}.w_v2"), &self.w_v2),
            (format!("{prefix}.temperatures"), &self.temperatures),
            (format!("{prefix}.gconv"), &self.gconv),
        ]
    }

    pub fn tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor<F>)> {
        vec![
            (format!("{prefix}.w_q"), &mut self.w_q),
            (format!("{prefix}.w_k"), &mut self.w_k),
            (format!("{prefix}.w_v"), &mut self.w_v),
            (format!("{prefix}.w_o"), &mut self.w_o),
            (format!("{prefix}.w_q2"), &mut self.w_q2),
            (format!("{prefix}.w_k2"), &mut self.w_k2),
            (format!("{prefix}.w_v2"), &mut self.w_v2),
            (format!("{prefix}.temperatures"), &mut self.temperatures),
            (format!("{prefix}.gconv"), &mut self.gconv),
        ]
    }
}

/// Branch parameters of the feed-forward stage.
#[derive(Debug, Clone, PartialEq)]
pub enum MdffnBranches<F> {
    /// Two heads of `C/2` channels, each expanded to `C`.
    Full {
        expand_spatial: Tensor<F>,
        expand_temporal: Tensor<F>,
        spatial: Tensor<F>,
        temporal: Tensor<F>,
    },
    SpatialOnly {
        expand: Tensor<F>,
        spatial: Tensor<F>,
    },
    TemporalOnly {
        expand: Tensor<F>,
        temporal: Tensor<F>,
    },
    Conv3d {
        expand: Tensor<F>,
        /// `[2C, 2C, 27]`.
        kernel: Tensor<F>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdffnWeights<F> {
    pub norm_scale: Tensor<F>,
    pub norm_shift: Tensor<F>,
    pub branches: MdffnBranches<F>,
    /// `[2C, C]`.
    pub project: Tensor<F>,
    pub project_bias: Tensor<F>,
}

impl<F: Scalar> MdffnWeights<F> {
    pub fn init(channels: usize, variant: MdffnVariant, init: &mut Init) -> Result<Self> {
        let c = channels;
        let branches = match variant {
            MdffnVariant::Full => {
                if c % 2 != 0 {
                    return Err(Error::Config(format!(
                        "the two-branch feed-forward needs an even channel count, got {c}"
                    )));
                }
                MdffnBranches::Full {
                    expand_spatial: init.uniform(&[c / 2, c], c / 2),
                    expand_temporal: init.uniform(&[c / 2, c], c / 2),
                    spatial: init.uniform(&[c, 3, 3], 9),
                    temporal: init.uniform(&[c, 3], 3),
                }
            }
            MdffnVariant::SpatialOnly => MdffnBranches::SpatialOnly {
                expand: init.uniform(&[c, 2 * c], c),
                spatial: init.uniform(&[2 * c, 3, 3], 9),
            },
            MdffnVariant::TemporalOnly => MdffnBranches::TemporalOnly {
                expand: init.uniform(&[c, 2 * c], c),
                temporal: init.uniform(&[2 * c, 3], 3),
            },
            MdffnVariant::RegularConv3d => MdffnBranches::Conv3d {
                expand: init.uniform(&[c, 2 * c], c),
                kernel: init.uniform(&[2 * c, 2 * c, 27], 2 * c * 27),
            },
        };
        Ok(MdffnWeights {
            norm_scale: Tensor::filled(&[c], F::one()),
            norm_shift: Tensor::zeros(&[c]),
            branches,
            project: init.uniform(&[2 * c, c], 2 * c),
            project_bias: Tensor::zeros(&[c]),
        })
    }

    pub fn variant(&self) -> MdffnVariant {
        match self.branches {
            MdffnBranches::Full { .. } => MdffnVariant::Full,
            MdffnBranches::SpatialOnly { .. } => MdffnVariant::SpatialOnly,
            MdffnBranches::TemporalOnly { .. } => MdffnVariant::TemporalOnly,
            MdffnBranches::Conv3d { .. } => MdffnVariant::RegularConv3d,
        }
    }

    pub fn channels(&self) -> usize {
        self.norm_scale.len()
    }

    pub fn tensors(&self, prefix: &str) -> Vec<(String, &Tensor<F>)> {
        let mut out = vec![
            (format!("{prefix}.norm_scale"), &self.norm_scale),
            (format!("{prefix}.norm_shift"), &self.norm_shift),
        ];
        match &self.branches {
            MdffnBranches::Full {
                expand_spatial,
                expand_temporal,
                spatial,
                temporal,
            } => out.extend([
                (format!("{prefix}.expand_spatial"), expand_spatial),
                (format!("{prefix}.expand_temporal"), expand_temporal),
                (format!("{prefix}.spatial"), spatial),
                (format!("{prefix}.temporal"), temporal),
            ]),
            MdffnBranches::SpatialOnly { expand, spatial } => out.extend([
                (format!("{prefix}.expand"), expand),
                (format!("{prefix}.spatial"), spatial),
            ]),
            MdffnBranches::TemporalOnly { expand, temporal } => out.extend([
                (format!("{prefix}.expand"), expand),
                (format!("{prefix}.temporal"), temporal),
            ]),
            MdffnBranches::Conv3d { expand, kernel } => out.extend([
                (format!("{prefix}.expand"), expand),
                (format!("{prefix}.kernel"), kernel),
            ]),
        }
        out.push((format!("{prefix}.project"), &self.project));
        out.push((format!("{prefix}.project_bias"), &self.project_bias));
        out
    }

    pub fn tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor<F>)> {
        let mut out = vec![
            (format!("{prefix}.norm_scale"), &mut self.norm_scale),
            (format!("{prefix}.norm_shift"), &mut self.norm_shift),
        ];
        match &mut self.branches {
            MdffnBranches::Full {
                expand_spatial,
                expand_temporal,
                spatial,
                temporal,
            } => out.extend([
                (format!("{prefix}.expand_spatial"), expand_spatial),
                (format!("{prefix}.expand_temporal"), expand_temporal),
                (format!("{prefix}.spatial"), spatial),
                (format!("{prefix}.temporal"), temporal),
            ]),
            MdffnBranches::SpatialOnly { expand, spatial } => out.extend([
                (format!("{prefix}.expand"), expand),
                (format!("{prefix}.spatial"), spatial),
            ]),
            MdffnBranches::TemporalOnly { expand, temporal } => out.extend([
                (format!("{prefix}.expand"), expand),
                (format!("{prefix}.temporal"), temporal),
            ]),
            MdffnBranches::Conv3d { expand, kernel } => out.extend([
                (format!("{prefix}.expand"), expand),
                (format!("{prefix}.kernel"), kernel),
            ]),
        }
        out.push((format!("{prefix}.project"), &mut self.project));
        out.push((format!("{prefix}.project_bias"), &mut self.project_bias));
        out
    }
}

/// Degradation-perception front end. Both maps start at zero so the
/// weighting is exactly one half everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct MgdpWeights<F> {
    pub diff_weight: Tensor<F>,
    pub diff_bias: Tensor<F>,
    pub feature_weight: Tensor<F>,
    pub feature_bias: Tensor<F>,
}

impl<F: Scalar> MgdpWeights<F> {
    pub fn init(channels: usize, init: &mut Init) -> Self {
        let c = channels;
        MgdpWeights {
            diff_weight: Tensor::zeros(&[c, c]),
            diff_bias: Tensor::zeros(&[c]),
            feature_weight: init.uniform(&[c, c], c),
            feature_bias: Tensor::zeros(&[c]),
        }
    }

    pub fn tensors(&self, prefix: &str) -> Vec<(String, &Tensor<F>)> {
        vec![
            (format!("{prefix}.diff_weight"), &self.diff_weight),
            (format!("{prefix}.diff_bias"), &self.diff_bias),
            (format!("{prefix}.feature_weight"), &self.feature_weight),
            (format!("{prefix}.feature_bias"), &self.feature_bias),
        ]
    }

    pub fn tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor<F>)> {
        vec![
            (format!("{prefix}.diff_weight"), &mut self.diff_weight),
            (format!("{prefix}.diff_bias"), &mut self.diff_bias),
            (format!("{prefix}.feature_weight"), &mut self.feature_weight),
            (format!("{prefix}.feature_bias"), &mut self.feature_bias),
        ]
    }
}

/// Attention plus feed-forward, each behind a residual.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights<F> {
    pub norm_scale: Tensor<F>,
    pub norm_shift: Tensor<F>,
    pub attention: AttentionWeights<F>,
    pub mdffn: MdffnWeights<F>,
}

impl<F: Scalar> BlockWeights<F> {
    pub fn init(channels: usize, heads: usize, variant: MdffnVariant, init: &mut Init) -> Result<Self> {
        Ok(BlockWeights {
            norm_scale: Tensor::filled(&[channels], F::one()),
            norm_shift: Tensor::zeros(&[channels]),
            attention: AttentionWeights::init(channels, heads, init),
            mdffn: MdffnWeights::init(channels, variant, init)?,
        })
    }

    pub fn tensors(&self, prefix: &str) -> Vec<(String, &Tensor<F>)> {
        let mut out = vec![
            (format!("{prefix}.norm_scale"), &self.norm_scale),
            (format!("{prefix}.norm_shift"), &self.norm_shift),
        ];
        out.extend(self.attention.tensors(&format!("{prefix}.attention")));
        out.extend(self.mdffn.tensors(&format!("{prefix}.mdffn")));
        out
    }

    pub fn tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor<F>)> {
        let mut out = vec![
            (format!("{prefix}.norm_scale"), &mut self.norm_scale),
            (format!("{prefix}.norm_shift"), &mut self.norm_shift),
        ];
        out.extend(self.attention.tensors_mut(&format!("{prefix}.attention")));
        out.extend(self.mdffn.tensors_mut(&format!("{prefix}.mdffn")));
        out
    }
}

/// Every parameter of the U-shaped reconstruction network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights<F> {
    pub config: NetworkConfig,
    pub mgdp: MgdpWeights<F>,
    /// `[2C, C]` map from the front-end features to the working width.
    pub embed: Tensor<F>,
    pub embed_bias: Tensor<F>,
    pub encoder: Vec<BlockWeights<F>>,
    /// `[2, 2, C, 2C]`.
    pub down: Tensor<F>,
    pub bottleneck: Vec<BlockWeights<F>>,
    /// `[2, 2, 2C, C]`.
    pub up: Tensor<F>,
    /// `[2C, C]` fusion of the upsampled path with the skip connection.
    pub fuse: Tensor<F>,
    pub decoder: Vec<BlockWeights<F>>,
    pub head: Tensor<F>,
    pub head_bias: Tensor<F>,
}

impl<F: Scalar> NetworkWeights<F> {
    pub fn init(config: &NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        let mut init = Init::new(seed);
        let blocks = |n: usize, ch: usize, init: &mut Init| -> Result<Vec<BlockWeights<F>>> {
            (0..n)
                .map(|_| BlockWeights::init(ch, config.heads, config.mdffn, init))
                .collect()
        };
        let mgdp = MgdpWeights::init(c, &mut init);
        let embed = init.uniform(&[2 * c, c], 2 * c);
        let encoder = blocks(config.depth[0], c, &mut init)?;
        let down = init.uniform(&[2, 2, c, 2 * c], 4 * c);
        let bottleneck = blocks(config.depth[1], 2 * c, &mut init)?;
        let up = init.uniform(&[2, 2, 2 * c, c], 2 * c);
        let fuse = init.uniform(&[2 * c, c], 2 * c);
        let decoder = blocks(config.depth[2], c, &mut init)?;
        let head = init.uniform(&[c, c], c);
        Ok(NetworkWeights {
            config: config.clone(),
            mgdp,
            embed,
            embed_bias: Tensor::zeros(&[c]),
            encoder,
            down,
            bottleneck,
            up,
            fuse,
            decoder,
            head,
            head_bias: Tensor::zeros(&[c]),
        })
    }

    pub fn tensors(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out = self.mgdp.tensors("mgdp");
        out.push(("embed".into(), &self.embed));
        out.push(("embed_bias".into(), &self.embed_bias));
        for (i, b) in self.encoder.iter().enumerate() {
            out.extend(b.tensors(&format!("encoder.{i}")));
        }
        out.push(("down".into(), &self.down));
        for (i, b) in self.bottleneck.iter().enumerate() {
            out.extend(b.tensors(&format!("bottleneck.{i}")));
        }
        out.push(("up".into(), &self.up));
        out.push(("fuse".into(), &self.fuse));
        for (i, b) in self.decoder.iter().enumerate() {
            out.extend(b.tensors(&format!("decoder.{i}")));
        }
        out.push(("head".into(), &self.head));
        out.push(("head_bias".into(), &self.head_bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<F>)> {
        let mut out = self.mgdp.tensors_mut("mgdp");
        out.push(("embed".into(), &mut self.embed));
        out.push(("embed_bias".into(), &mut self.embed_bias));
        for (i, b) in self.encoder.iter_mut().enumerate() {
            out.extend(b.tensors_mut(&format!("encoder.{i}")));
        }
        out.push(("down".into(), &mut self.down));
        for (i, b) in self.bottleneck.iter_mut().enumerate() {
            out.extend(b.tensors_mut(&format!("bottleneck.{i}")));
        }
        out.push(("up".into(), &mut self.up));
        out.push(("fuse".into(), &mut self.fuse));
        for (i, b) in self.decoder.iter_mut().enumerate() {
            out.extend(b.tensors_mut(&format!("decoder.{i}")));
        }
        out.push(("head".into(), &mut self.head));
        out.push(("head_bias".into(), &mut self.head_bias));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    file: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    network: NetworkConfig,
    arrays: Vec<ArrayEntry>,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes one container per array plus a manifest naming each of them.
pub fn save_bundle<F: Scalar>(weights: &NetworkWeights<F>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut arrays = Vec::new();
    for (name, t) in weights.tensors() {
        let file = format!("{name}.scub");
        // Rank-5 arrays never occur; conv kernels are stored flattened.
        save_tensor(t, dir.join(&file))?;
        arrays.push(ArrayEntry {
            name,
            file,
            shape: t.shape().to_vec(),
        });
    }
    let manifest = Manifest {
        network: weights.config.clone(),
        arrays,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| io_err(&path, e))
}

pub fn load_bundle<F: Scalar>(dir: impl AsRef<Path>) -> Result<NetworkWeights<F>> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut weights = NetworkWeights::init(&manifest.network, 0)?;
    let mut slots = weights.tensors_mut();
    if slots.len() != manifest.arrays.len() {
        return Err(Error::Config(format!(
            "{}: lists {} arrays, the network needs {}",
            path.display(),
            manifest.arrays.len(),
            slots.len()
        )));
    }
    for entry in &manifest.arrays {
        let slot = slots
            .iter_mut()
            .find(|(n, _)| *n == entry.name)
            .ok_or_else(|| Error::Config(format!("{}: unknown array {}", path.display(), entry.name)))?;
        if slot.1.shape() != entry.shape.as_slice() {
            return Err(Error::Shape(format!(
                "{}: expected shape {:?}, manifest says {:?}",
                entry.name,
                slot.1.shape(),
                entry.shape
            )));
        }
        *slot.1 = load_tensor(dir.join(&entry.file), &entry.shape)?;
    }
    Ok(weights)
}
