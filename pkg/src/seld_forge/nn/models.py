"""Track-wise networks built from the layer library.

Both models share the same two-branch layout: a convolutional front end,
then separate detection and direction branches (projection -> bidirectional
gated recurrence -> per-track heads) coupled by scalar soft-sharing gates
at two stages. The detection head ends in a sigmoid, the direction head in
tanh. The toy model pools time by 4 (two 2x poolings); the ensemble model
is frame-in frame-out.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .layers import AvgPool2D, BiMGU, Conv3x3, Linear, PerTrackLinear, SoftGatePair, elu, elu_grad_from_output, sigmoid


def _branch_layers(prefix: str, d_in: int, proj_dim: int, hidden: int, tracks: int, classes: int):
    return {
        "proj_sed": Linear(f"{prefix}sed.proj", d_in, proj_dim),
        "proj_doa": Linear(f"{prefix}doa.proj", d_in, proj_dim),
        "gate1": SoftGatePair(f"{prefix}gate1"),
        "rnn_sed": BiMGU(f"{prefix}sed.rnn", proj_dim, hidden),
        "rnn_doa": BiMGU(f"{prefix}doa.rnn", proj_dim, hidden),
        "gate2": SoftGatePair(f"{prefix}gate2"),
        "head_sed": PerTrackLinear(f"{prefix}sed.head", 2 * hidden, tracks, classes),
        "head_doa": PerTrackLinear(f"{prefix}doa.head", 2 * hidden, tracks, 3),
    }


class _TwoBranchCore:
    """Shared projection/recurrence/head machinery operating on (T, D)."""

    def __init__(self, prefix: str, d_in: int, proj_dim: int, hidden: int, tracks: int, classes: int):
        self.layers = _branch_layers(prefix, d_in, proj_dim, hidden, tracks, classes)

    def init(self, params, rng):
        for layer in self.layers.values():
            layer.init(params, rng)

    def forward(self, params, seq):
        ly = self.layers
        ps_pre, c_ps = ly["proj_sed"].forward(params, seq)
        pd_pre, c_pd = ly["proj_doa"].forward(params, seq)
        ps = elu(ps_pre)
        pd = elu(pd_pre)
        ps2, pd2, c_g1 = ly["gate1"].forward(params, ps, pd)
        rs, c_rs = ly["rnn_sed"].forward(params, ps2)
        rd, c_rd = ly["rnn_doa"].forward(params, pd2)
        rs2, rd2, c_g2 = ly["gate2"].forward(params, rs, rd)
        sed_logits, c_hs = ly["head_sed"].forward(params, rs2)
        doa_raw, c_hd = ly["head_doa"].forward(params, rd2)
        sed = sigmoid(sed_logits)
        doa = np.tanh(doa_raw)
        cache = (c_ps, c_pd, ps, pd, c_g1, c_rs, c_rd, c_g2, c_hs, c_hd, sed, doa)
        return sed, doa, cache

    def backward(self, params, cache, dsed, ddoa, grads):
        ly = self.layers
        c_ps, c_pd, ps, pd, c_g1, c_rs, c_rd, c_g2, c_hs, c_hd, sed, doa = cache
        dlogits = dsed * sed * (1.0 - sed)
        draw = ddoa * (1.0 - doa * doa)
        drs2 = ly["head_sed"].backward(params, c_hs, dlogits, grads)
        drd2 = ly["head_doa"].backward(params, c_hd, draw, grads)
        drs, drd = ly["gate2"].backward(params, c_g2, drs2, drd2, grads)
        dps2 = ly["rnn_sed"].backward(params, c_rs, drs, grads)
        dpd2 = ly["rnn_doa"].backward(params, c_rd, drd, grads)
        dps, dpd = ly["gate1"].backward(params, c_g1, dps2, dpd2, grads)
        dps_pre = dps * elu_grad_from_output(ps)
        dpd_pre = dpd * elu_grad_from_output(pd)
        dseq = ly["proj_sed"].backward(params, c_ps, dps_pre, grads)
        dseq += ly["proj_doa"].backward(params, c_pd, dpd_pre, grads)
        return dseq


@dataclass
class ToyNetConfig:
    in_channels: int = 7
    conv_channels: tuple = (8, 16)
    dense: bool = False
    proj_dim: int = 32
    hidden: int = 16
    tracks: int = 3
    classes: int = 14
    n_bins: int = 128

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["conv_channels"] = list(self.conv_channels)
        return d

    @staticmethod
    def from_dict(d: dict) -> "ToyNetConfig":
        cfg = ToyNetConfig()
        for k, v in d.items():
            if not hasattr(cfg, k):
                raise ConfigError(f"unknown toy net config key {k!r}")
            setattr(cfg, k, tuple(v) if k == "conv_channels" else v)
        return cfg


class TrackwiseToyNet:
    """Two conv blocks (optionally densely connected), then the two-branch
    core. Input (C, T, B); output frames = T // 4."""

    kind = "toy"

    def __init__(self, cfg: ToyNetConfig):
        self.cfg = cfg
        self.convs = []
        self.dense_convs = []
        c_in = cfg.in_channels
        bins = cfg.n_bins
        for i, c_out in enumerate(cfg.conv_channels):
            self.convs.append(Conv3x3(f"conv{i}", c_in, c_out))
            if cfg.dense:
                self.dense_convs.append(Conv3x3(f"conv{i}d", c_in + c_out, c_out))
            c_in = c_out
            bins //= 2
        self.pool = AvgPool2D(2, 2)
        self.seq_dim = c_in * bins
        self.core = _TwoBranchCore("", self.seq_dim, cfg.proj_dim, cfg.hidden, cfg.tracks, cfg.classes)

    @property
    def time_stride(self) -> int:
        return 2 ** len(self.cfg.conv_channels)

    def init_params(self, seed: int) -> dict:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        params: dict[str, np.ndarray] = {}
        for i, conv in enumerate(self.convs):
            conv.init(params, rng)
            if self.cfg.dense:
                self.dense_convs[i].init(params, rng)
        self.core.init(params, rng)
        return params

    def forward(self, params: dict, x: np.ndarray):
        if x.ndim != 3 or x.shape[0] != self.cfg.in_channels or x.shape[2] != self.cfg.n_bins:
            raise ConfigError(
                f"expected ({self.cfg.in_channels}, T, {self.cfg.n_bins}) input, got {x.shape}"
            )
        h = x
        conv_caches = []
        for i, conv in enumerate(self.convs):
            a_pre, c_conv = conv.forward(params, h)
            a = elu(a_pre)
            if self.cfg.dense:
                stacked = np.concatenate([h, a], axis=0)
                d_pre, c_dense = self.dense_convs[i].forward(params, stacked)
                d = elu(d_pre)
                pooled, c_pool = self.pool.forward(d)
                conv_caches.append((c_conv, a, c_dense, d, c_pool, h.shape[0]))
            else:
                pooled, c_pool = self.pool.forward(a)
                conv_caches.append((c_conv, a, None, None, c_pool, h.shape[0]))
            h = pooled
        c_out, t_out, b_out = h.shape
        seq = h.transpose(1, 0, 2).reshape(t_out, c_out * b_out)
        sed, doa, core_cache = self.core.forward(params, seq)
        return sed, doa, (conv_caches, (c_out, t_out, b_out), core_cache)

    def backward(self, params: dict, cache, dsed: np.ndarray, ddoa: np.ndarray) -> dict:
        conv_caches, (c_out, t_out, b_out), core_cache = cache
        grads = {name: np.zeros_like(val) for name, val in params.items()}
        dseq = self.core.backward(params, core_cache, dsed, ddoa, grads)
        dh = dseq.reshape(t_out, c_out, b_out).transpose(1, 0, 2)
        for i in range(len(self.convs) - 1, -1, -1):
            c_conv, a, c_dense, d, c_pool, c_in = conv_caches[i]
            dpooled = self.pool.backward(c_pool, dh)
            if self.cfg.dense:
                dd_pre = dpooled * elu_grad_from_output(d)
                dstacked = self.dense_convs[i].backward(params, c_dense, dd_pre, grads)
                dh_skip = dstacked[:c_in]
                da = dstacked[c_in:]
            else:
                dh_skip = 0.0
                da = dpooled
            da_pre = da * elu_grad_from_output(a)
            dh = self.convs[i].backward(params, c_conv, da_pre, grads)
            dh += dh_skip
        return grads

    def config_dict(self) -> dict:
        return {"kind": self.kind, **self.cfg.to_dict()}


@dataclass
class EnsembleNetConfig:
    input_dim: int = 102  # N * M * (K + 3)
    conv_channels: int = 32
    feat_pool: int = 4
    proj_dim: int = 64
    hidden: int = 16
    tracks: int = 3
    classes: int = 14

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @staticmethod
    def from_dict(d: dict) -> "EnsembleNetConfig":
        cfg = EnsembleNetConfig()
        for k, v in d.items():
            if not hasattr(cfg, k):
                raise ConfigError(f"unknown ensemble net config key {k!r}")
            setattr(cfg, k, v)
        return cfg


class TrackwiseEnsembleNet:
    """Per-frame realignment model over flattened multi-model predictions.

    Input (T, D) is treated as a 1-channel image for a 3x3 conv over
    (time, feature), pooled along the feature axis only, then fed to the
    same two-branch core as the toy net. No time pooling: frame-in,
    frame-out.
    """

    kind = "ensemble"

    def __init__(self, cfg: EnsembleNetConfig):
        self.cfg = cfg
        self.conv = Conv3x3("conv0", 1, cfg.conv_channels)
        self.pool = AvgPool2D(1, cfg.feat_pool)
        self.seq_dim = cfg.conv_channels * (cfg.input_dim // cfg.feat_pool)
        self.core = _TwoBranchCore("", self.seq_dim, cfg.proj_dim, cfg.hidden, cfg.tracks, cfg.classes)

    @property
    def time_stride(self) -> int:
        return 1

    def init_params(self, seed: int) -> dict:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        params: dict[str, np.ndarray] = {}
        self.conv.init(params, rng)
        self.core.init(params, rng)
        return params

    def forward(self, params: dict, x: np.ndarray):
        if x.ndim != 2 or x.shape[1] != self.cfg.input_dim:
            raise ConfigError(f"expected (T, {self.cfg.input_dim}) input, got {x.shape}")
        a_pre, c_conv = self.conv.forward(params, x[None, :, :])
        a = elu(a_pre)
        pooled, c_pool = self.pool.forward(a)
        c_out, t_out, b_out = pooled.shape
        seq = pooled.transpose(1, 0, 2).reshape(t_out, c_out * b_out)
        sed, doa, core_cache = self.core.forward(params, seq)
        return sed, doa, (c_conv, a, c_pool, (c_out, t_out, b_out), core_cache)

    def backward(self, params: dict, cache, dsed: np.ndarray, ddoa: np.ndarray) -> dict:
        c_conv, a, c_pool, (c_out, t_out, b_out), core_cache = cache
        grads = {name: np.zeros_like(val) for name, val in params.items()}
        dseq = self.core.backward(params, core_cache, dsed, ddoa, grads)
        dpooled = dseq.reshape(t_out, c_out, b_out).transpose(1, 0, 2)
        da = self.pool.backward(c_pool, dpooled)
        da_pre = da * elu_grad_from_output(a)
        self.conv.backward(params, c_conv, da_pre, grads)
        return grads

    def config_dict(self) -> dict:
        return {"kind": self.kind, **self.cfg.to_dict()}


def model_from_config(d: dict):
    """Rebuild a model from a checkpoint's config blob."""
    kind = d.get("kind")
    rest = {k: v for k, v in d.items() if k != "kind"}
    if kind == "toy":
        return TrackwiseToyNet(ToyNetConfig.from_dict(rest))
    if kind == "ensemble":
        return TrackwiseEnsembleNet(EnsembleNetConfig.from_dict(rest))
    raise ConfigError(f"unknown model kind {kind!r}")


def parameter_count(params: dict) -> int:
    return int(sum(np.asarray(v).size for v in params.values()))
