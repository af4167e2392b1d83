use std::path::Path;

use super::report::format_float;
use crate::autodiff::LayerKind;
use crate::channel::{apply_channel, ChannelConfig, SignalFrame};
use crate::error::{ensure, Error, Result};
use crate::modem::{encode, BitFrame, Network};
use crate::rng;

/// One tap sequence of a convolution kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisRow {
    pub layer: String,
    pub filter: usize,
    pub channel: usize,
    pub taps: Vec<f64>,
}

/// Kernels of the encoder's last convolution, the layer that synthesizes
/// the I/Q waveform from the hidden feature maps. Row order is filter-major.
pub fn basis_rows(net: &Network) -> Result<Vec<BasisRow>> {
    let layer = net
        .encoder_layers()
        .iter()
        .rev()
        .find(|l| matches!(l.kind, LayerKind::Conv1d { .. }))
        .ok_or_else(|| Error::Unsupported("basis export needs a convolutional encoder".into()))?;
    let kernel = &net.params().get(layer.params()[0]).value;
    let [filters, channels, klen] = kernel.shape() else {
        unreachable!("conv kernels are rank 3")
    };
    let mut rows = Vec::with_capacity(filters * channels);
    for (idx, taps) in kernel.values().chunks(*klen).enumerate() {
        rows.push(BasisRow {
            layer: layer.name.clone(),
            filter: idx / channels,
            channel: idx % channels,
            taps: taps.to_vec(),
        });
    }
    Ok(rows)
}

/// Writes `layer,filter,channel,tap0,...` rows.
pub fn export_basis(net: &Network, path: &Path) -> Result<Vec<BasisRow>> {
    let rows = basis_rows(net)?;
    let klen = rows[0].taps.len();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["layer".to_string(), "filter".into(), "channel".into()];
    header.extend((0..klen).map(|k| format!("tap{k}")));
    w.write_record(&header)?;
    for r in &rows {
        let mut rec = vec![r.layer.clone(), r.filter.to_string(), r.channel.to_string()];
        rec.extend(r.taps.iter().map(|&v| format_float(v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(rows)
}

pub fn read_basis(path: &Path) -> Result<Vec<BasisRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    let bad = |what: &str| Error::Input(format!("{}: malformed basis file ({what})", path.display()));
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        ensure!(rec.len() >= 4, Input, "{}: basis row has no taps", path.display());
        let taps = rec
            .iter()
            .skip(3)
            .map(|v| v.parse::<f64>().map_err(|_| bad("tap value")))
            .collect::<Result<Vec<_>>>()?;
        rows.push(BasisRow {
            layer: rec[0].to_string(),
            filter: rec[1].parse().map_err(|_| bad("filter index"))?,
            channel: rec[2].parse().map_err(|_| bad("channel index"))?,
            taps,
        });
    }
    Ok(rows)
}

/// Encodes one frame, passes it through `cfg` with a stream seeded by
/// `seed`, and writes `sample,tx_i,tx_q,rx_i,rx_q` rows.
pub fn export_signals(
    net: &Network,
    bits: &BitFrame,
    cfg: &ChannelConfig,
    seed: u64,
    path: &Path,
) -> Result<(SignalFrame, SignalFrame)> {
    let tx = encode(net, std::slice::from_ref(bits))?.remove(0);
    let (rx, _) = apply_channel(&tx, cfg, &mut rng::seeded(seed))?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sample", "tx_i", "tx_q", "rx_i", "rx_q"])?;
    for k in 0..tx.len() {
        w.write_record([
            k.to_string(),
            format_float(tx.i()[k]),
            format_float(tx.q()[k]),
            format_float(rx.i()[k]),
            format_float(rx.q()[k]),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok((tx, rx))
}
