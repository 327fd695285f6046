//! The three-stage model bundle: filling, separation, restoration, and the
//! optional fine-tuned restoration variant, sharing one variable store.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use trident_autograd::{ckpt, Scalar, VarBuilder, VarStore};
use trident_dsp::StftConfig;

use crate::cws_net::CwsTfGridNet;
use crate::gridnet::{NetInit, TfGridNet};
use crate::{GridNetConfig, NetError, Result};

pub const BUNDLE_FORMAT: &str = "trident-bundle";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BundleConfig {
    pub fill: GridNetConfig,
    pub sep: GridNetConfig,
    pub res: GridNetConfig,
    pub with_finetuned: bool,
    pub stft: StftConfig,
}

impl BundleConfig {
    /// The published configuration: small fill, large sep, small restoration
    /// plus its fine-tuned copy.
    pub fn paper() -> Self {
        Self {
            fill: GridNetConfig::preset_s(),
            sep: GridNetConfig::preset_l(),
            res: GridNetConfig::preset_s(),
            with_finetuned: true,
            stft: StftConfig::default(),
        }
    }

    pub fn tiny() -> Self {
        Self {
            fill: GridNetConfig::tiny(),
            sep: GridNetConfig::tiny(),
            res: GridNetConfig::tiny(),
            with_finetuned: false,
            stft: StftConfig::default(),
        }
    }
}

/// Initialization scheme for a whole bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BundleInit {
    /// Training start: random sep, zeroed output projections for the
    /// residual/skip stages so they begin as identity.
    Train,
    /// Every stage acts as the identity map (sep gets passthrough
    /// projections with zeroed path outputs).
    Identity,
    /// Random everywhere, including output projections (gradient probes).
    Random,
}

pub struct ModelBundle<F: Scalar> {
    pub config: BundleConfig,
    pub store: VarStore<F>,
    pub fill: TfGridNet,
    pub sep: TfGridNet,
    pub res: CwsTfGridNet,
    pub res_ft: Option<CwsTfGridNet>,
}

impl<F: Scalar> ModelBundle<F> {
    pub fn new(config: BundleConfig, seed: u64, init: BundleInit) -> Result<Self> {
        let mut store = VarStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (fill_init, sep_init, res_init) = match init {
            BundleInit::Train => (NetInit::ZeroOutput, NetInit::Random, NetInit::ZeroOutput),
            BundleInit::Identity => (NetInit::ZeroOutput, NetInit::Identity, NetInit::ZeroOutput),
            BundleInit::Random => (NetInit::Random, NetInit::Random, NetInit::Random),
        };
        let mut vb = VarBuilder::new(&mut store, &mut rng);
        let fill = {
            let mut scope = vb.scoped("fill");
            TfGridNet::new(&mut scope, config.fill, 2, 2, fill_init)?
        };
        let sep = {
            let mut scope = vb.scoped("sep");
            TfGridNet::new(&mut scope, config.sep, 2, 2, sep_init)?
        };
        let res = {
            let mut scope = vb.scoped("res");
            CwsTfGridNet::new(&mut scope, config.res, res_init)?
        };
        let res_ft = if config.with_finetuned {
            let mut scope = vb.scoped("res_ft");
            Some(CwsTfGridNet::new(&mut scope, config.res, res_init)?)
        } else {
            None
        };
        if init == BundleInit::Identity {
            sep.set_passthrough_projections(&mut store);
        }
        let mut bundle = Self {
            config,
            store,
            fill,
            sep,
            res,
            res_ft,
        };
        if config.with_finetuned {
            bundle.clone_res_into_finetuned();
        }
        Ok(bundle)
    }

    /// Copies the base restoration weights into the fine-tuned variant
    /// (the starting point for joint fine-tuning).
    pub fn clone_res_into_finetuned(&mut self) {
        if self.res_ft.is_none() {
            return;
        }
        let res_ids = self.store.ids_with_prefix("res.");
        for id in res_ids {
            let name = self.store.name(id).to_string();
            let ft_name = format!("res_ft.{}", &name["res.".len()..]);
            if let Some(ft_id) = self.store.find(&ft_name) {
                let v = self.store.value(id).clone();
                self.store.set_value(ft_id, v);
            }
        }
    }

    /// Per-network constructed parameter counts (fill, sep, res, res_ft).
    pub fn param_counts(&self) -> (usize, usize, usize, usize) {
        (
            self.store.num_params_with_prefix("fill."),
            self.store.num_params_with_prefix("sep."),
            self.store.num_params_with_prefix("res."),
            self.store.num_params_with_prefix("res_ft."),
        )
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>, extra: serde_json::Value) -> Result<()> {
        let meta = serde_json::json!({
            "format": BUNDLE_FORMAT,
            "config": self.config,
            "dtype": F::DTYPE,
            "extra": extra,
        });
        let tensors = self.store.export_tensors();
        ckpt::save(path, &meta, &tensors)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let archive = ckpt::load(path)?;
        if archive.meta["format"] != BUNDLE_FORMAT {
            return Err(NetError::InvalidArgument(format!(
                "not a model bundle: format tag {}",
                archive.meta["format"]
            )));
        }
        let config: BundleConfig = serde_json::from_value(archive.meta["config"].clone())
            .map_err(|e| NetError::InvalidArgument(format!("bundle config: {e}")))?;
        let mut bundle = Self::new(config, 0, BundleInit::Train)?;
        for (name, tensor) in &archive.tensors {
            let id = bundle.store.find(name).ok_or_else(|| {
                NetError::InvalidArgument(format!("checkpoint tensor {name} has no slot"))
            })?;
            bundle.store.set_value(id, tensor.mapv(|v| F::f(v)));
        }
        Ok(bundle)
    }
}
