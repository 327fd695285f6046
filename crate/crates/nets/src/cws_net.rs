//! CWS-TF-GridNet: subband split -> TF-GridNet on 3x2 channels -> merge.
//! Fixed to 48 kHz fullband spectrograms (769 bins at the 32 ms window).

use trident_autograd::{Scalar, Tape, VarBuilder, VarStore, T};

use crate::gridnet::{NetInit, TfGridNet};
use crate::{GridNetConfig, NetError, Result};

pub struct CwsTfGridNet {
    pub net: TfGridNet,
}

pub const CWS_CHANNELS: usize = 6; // 3 bands x (re, im)

impl CwsTfGridNet {
    pub fn new<F: Scalar>(
        vb: &mut VarBuilder<'_, F>,
        cfg: GridNetConfig,
        init: NetInit,
    ) -> Result<Self> {
        Ok(Self {
            net: TfGridNet::new(vb, cfg, CWS_CHANNELS, CWS_CHANNELS, init)?,
        })
    }

    /// Forward over a (2, T, F) fullband node at 48 kHz. `F` must split into
    /// three equal bands plus the Nyquist bin.
    pub fn forward<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        store: &VarStore<F>,
        spec: T,
        fs: u32,
    ) -> Result<T> {
        if fs != trident_dsp::FULLBAND_RATE {
            return Err(NetError::UnsupportedRate(
                fs,
                "CWS network processes 48 kHz spectrograms only".into(),
            ));
        }
        let shape = tape.shape(spec).to_vec();
        if shape.len() != 3 || shape[0] != 2 {
            return Err(NetError::ShapeMismatch(format!(
                "expected (2, T, F), got {shape:?}"
            )));
        }
        let f = shape[2];
        if (f - 1) % 3 != 0 {
            return Err(NetError::ShapeMismatch(format!(
                "{f} bins do not split into three equal bands"
            )));
        }
        let third = (f - 1) / 3;
        let top = f - 2 * third; // includes Nyquist

        // split: zero-pad the two lower bands up to the top band's width so
        // they stack on the channel axis
        let b0 = tape.slice_axis(spec, 2, 0, third);
        let b0 = tape.pad_end(b0, 2, top - third);
        let b1 = tape.slice_axis(spec, 2, third, 2 * third);
        let b1 = tape.pad_end(b1, 2, top - third);
        let b2 = tape.slice_axis(spec, 2, 2 * third, f);
        let stacked = tape.concat(&[b0, b1, b2], 0); // (6, T, top)

        let out = self.net.forward(tape, store, stacked); // (6, T, top)

        // merge: peel channel pairs back into frequency ranges
        let o0 = tape.slice_axis(out, 0, 0, 2);
        let o0 = tape.slice_axis(o0, 2, 0, third);
        let o1 = tape.slice_axis(out, 0, 2, 4);
        let o1 = tape.slice_axis(o1, 2, 0, third);
        let o2 = tape.slice_axis(out, 0, 4, 6);
        Ok(tape.concat(&[o0, o1, o2], 2)) // (2, T, F)
    }
}
