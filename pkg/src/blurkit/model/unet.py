"""Decoupled multi-scale UNet built from reversible column pairs.

Each scale runs a chain of columns (sub-encoder + sub-decoder + kernel
estimator tail). Column j consumes column j-1's decoder features through
learnable scalar couplings, which makes every level equation exactly
invertible:

    encoder   e_i = down(L_i(e_{i-1})) + a_i * d_{i+1}'      (' = previous column)
    decoder   d_i = up(L_i(d_{i+1})) + b_i * e_{i-1}
              d_1 = L_1(d_2) + b_1 * d_1'

Scales interact once per column index: coarse encoders receive pooled,
projected fine encoder features; fine decoders receive upsampled,
projected coarse decoder features. Both crossings are additive with
gains initialized to zero, preserving the identity start.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .. import config as cfgmod
from ..engine import ShapeError, Tensor, no_grad, ops
from .blocks import BlockStack, Conv2d, Downsample, Upsample, image_downscale
from .fke import ALPHA_FLOOR, AlphaUnderflowError, FkeConfig, FourierKernelEstimator
from .module import Module, Parameter


@dataclass
class ModelConfig:
    scales: int = 2
    columns: int = 2  # sub-unets chained per scale
    levels: int = 3
    blocks: list = field(default_factory=lambda: [1, 4, 8])
    channels: list = field(default_factory=lambda: [48, 96, 192])
    alpha_init: float = 1.0
    reversible: bool = True
    block_kind: str = "naf"
    in_channels: int = 3
    init_seed: int = 0
    fke_enabled: bool = True
    fke_sub_resnets: int = 2
    fke_depth: int = 4
    fke_skip: bool = True
    fke_skip_init: float = 1.0
    fke_mode: str = "fourier-mul"

    def __post_init__(self):
        if self.scales < 1 or self.columns < 1:
            raise ValueError("scales and columns must be >= 1")
        if len(self.blocks) != self.levels or len(self.channels) != self.levels:
            raise ValueError("blocks/channels lists must match the level count")
        for i in range(self.levels - 1):
            if self.channels[i + 1] != 2 * self.channels[i]:
                raise ValueError("channels must double per level (down/upsample contract)")

    @property
    def divisor(self) -> int:
        return 2 ** (self.scales - 1 + self.levels - 1)

    def fke_config(self) -> FkeConfig:
        return FkeConfig(
            sub_resnets=self.fke_sub_resnets,
            depth=self.fke_depth,
            channels=self.channels[0],
            alpha_init=self.alpha_init,
            skip=self.fke_skip,
            skip_init=self.fke_skip_init,
            mode=self.fke_mode,
        )

    @classmethod
    def tiny(cls, **overrides) -> "ModelConfig":
        """Desk-scale defaults: trains in minutes on a laptop CPU."""
        kwargs = dict(
            blocks=[1, 1, 2],
            channels=[16, 32, 64],
            fke_sub_resnets=2,
            fke_depth=2,
        )
        kwargs.update(overrides)
        return cls(**kwargs)

    def to_sections(self) -> dict:
        body = {}
        for k, v in asdict(self).items():
            if isinstance(v, list):
                body[k] = ",".join(str(x) for x in v)
            elif isinstance(v, float):
                body[k] = repr(v)
            else:
                body[k] = str(v)
        return {"model": body}

    @classmethod
    def from_sections(cls, sections) -> "ModelConfig":
        body = sections.get("model", {})
        kwargs = {}
        for name, f in cls.__dataclass_fields__.items():
            if name not in body:
                continue
            if name in ("blocks", "channels"):
                kwargs[name] = cfgmod.coerce(body[name], (list, int))
            else:
                kwargs[name] = cfgmod.coerce(body[name], type(getattr(cls(), name)))
        return cls(**kwargs)


def _check_alpha(alpha: Parameter):
    if abs(float(alpha.data)) < ALPHA_FLOOR:
        raise AlphaUnderflowError(f"coupling alpha {float(alpha.data):.3e} below {ALPHA_FLOOR}")


class SubEncoder(Module):
    """Fine-to-coarse half of one column."""

    def __init__(self, cfg: ModelConfig, scale: int, rng, dtype=np.float32):
        c = cfg.channels
        widths = [c[0]] + c[:-1]  # level i processes the previous level's width
        self.levels = [
            BlockStack(cfg.block_kind, widths[i], cfg.blocks[i], rng, dtype)
            for i in range(cfg.levels)
        ]
        self.downs = [Downsample(c[i], rng, dtype) for i in range(cfg.levels - 1)]
        self.cross_alphas = [
            Parameter(np.asarray(cfg.alpha_init, dtype=dtype)) for _ in range(cfg.levels)
        ]
        self.scale_proj = None
        self.scale_gain = None
        if scale > 0:
            self.scale_proj = [Conv2d(rng, c[i], c[i], 1, dtype=dtype) for i in range(cfg.levels)]
            self.scale_gain = [Parameter(np.asarray(0.0, dtype=dtype)) for _ in range(cfg.levels)]

    def _level_out(self, i: int, below: Tensor) -> Tensor:
        t = self.levels[i](below)
        if i > 0:
            t = self.downs[i - 1](t)
        return t

    def _cross_scale(self, i: int, fine_feats) -> Tensor | None:
        if self.scale_proj is None or fine_feats is None:
            return None
        pooled = ops.avg_pool2(fine_feats[i])
        return ops.scale_by(self.scale_proj[i](pooled), self.scale_gain[i])

    def __call__(self, e0: Tensor, cross_d=None, fine_feats=None):
        """e0 is the stem output; cross_d the previous column's decoder
        features (d_2, d_3, d_4), absent for the first column."""
        feats = []
        below = e0
        for i in range(len(self.levels)):
            t = self._level_out(i, below)
            if cross_d is not None:
                t = ops.add(t, ops.scale_by(cross_d[i], self.cross_alphas[i]))
            cs = self._cross_scale(i, fine_feats)
            if cs is not None:
                t = ops.add(t, cs)
            feats.append(t)
            below = t
        return tuple(feats)

    def invert(self, feats, e0: Tensor, fine_feats=None):
        """Recover the previous column's (d_2, d_3, d_4) from this
        column's outputs; exact up to floating-point rounding."""
        with no_grad():
            out = []
            below = e0
            for i in range(len(self.levels)):
                _check_alpha(self.cross_alphas[i])
                t = self._level_out(i, below)
                residual = feats[i].data - t.data
                cs = self._cross_scale(i, fine_feats)
                if cs is not None:
                    residual = residual - cs.data
                out.append(Tensor(residual / self.cross_alphas[i].data))
                below = feats[i]
            return tuple(out)


class SubDecoder(Module):
    """Coarse-to-fine half of one column; level 1 chains to the next column."""

    def __init__(self, cfg: ModelConfig, scale: int, rng, dtype=np.float32):
        c = cfg.channels
        self.levels = [
            BlockStack(cfg.block_kind, c[i], cfg.blocks[i], rng, dtype)
            for i in range(cfg.levels)
        ]  # levels[i] processes width channels[i]
        self.ups = [Upsample(c[i + 1], rng, dtype) for i in range(cfg.levels - 1)]
        self.skip_alphas = [
            Parameter(np.asarray(cfg.alpha_init, dtype=dtype)) for _ in range(cfg.levels - 1)
        ]
        self.cross_alpha = Parameter(np.asarray(cfg.alpha_init, dtype=dtype))
        self.scale_proj = None
        self.scale_gain = None
        if scale + 1 < cfg.scales:
            widths = [c[0]] + c[:-1]
            self.scale_proj = [Conv2d(rng, widths[i], widths[i], 1, dtype=dtype) for i in range(cfg.levels)]
            self.scale_gain = [Parameter(np.asarray(0.0, dtype=dtype)) for _ in range(cfg.levels)]

    def _level_out(self, i: int, above: Tensor) -> Tensor:
        t = self.levels[i](above)
        if i > 0:
            t = self.ups[i - 1](t)
        return t

    def _cross_scale(self, i: int, src: Tensor | None) -> Tensor | None:
        if self.scale_proj is None or src is None:
            return None
        up = ops.upsample_nearest2(src)
        return ops.scale_by(self.scale_proj[i](up), self.scale_gain[i])

    @staticmethod
    def _coarse_src(coarse_d, i: int, n: int):
        # decoder output tuples are ordered (d_n, ..., d_1); the crossing
        # for the feature produced at loop index i sources the coarser
        # scale's feature of the same level
        return coarse_d[n - 1 - i] if coarse_d is not None else None

    def __call__(self, enc_feats, cross_d1: Tensor | None = None, coarse_d=None):
        """Returns the decoder chain ordered (d_levels, ..., d_2, d_1);
        coarse_d is the same-column decoder tuple of the next-coarser
        scale (crossed in additively with zero-init gains)."""
        n = len(self.levels)
        d = enc_feats[-1]  # d_{levels+1} := deepest encoder feature
        out = []
        for i in range(n - 1, -1, -1):
            t = self._level_out(i, d)
            if i > 0:
                t = ops.add(t, ops.scale_by(enc_feats[i - 1], self.skip_alphas[i - 1]))
            elif cross_d1 is not None:
                t = ops.add(t, ops.scale_by(cross_d1, self.cross_alpha))
            cs = self._cross_scale(i, self._coarse_src(coarse_d, i, n))
            if cs is not None:
                t = ops.add(t, cs)
            out.append(t)
            d = t
        return tuple(out)

    def invert_cross(self, d1: Tensor, d2: Tensor, coarse_d=None) -> Tensor:
        """Recover the previous column's d_1 from the level-1 equation."""
        with no_grad():
            n = len(self.levels)
            _check_alpha(self.cross_alpha)
            t = self._level_out(0, d2)
            residual = d1.data - t.data
            cs = self._cross_scale(0, self._coarse_src(coarse_d, 0, n))
            if cs is not None:
                residual = residual - cs.data
            return Tensor(residual / self.cross_alpha.data)

    def invert_levels(self, d_feats, e_top: Tensor, coarse_d=None):
        """Recover the encoder skips (e_1, ..., e_{levels-1}) of the same
        column from the decoder chain, exact up to rounding."""
        with no_grad():
            n = len(self.levels)
            recovered = [None] * (n - 1)
            above = e_top  # d_{n+1}
            for i in range(n - 1, 0, -1):
                _check_alpha(self.skip_alphas[i - 1])
                t = self._level_out(i, above)
                produced = d_feats[n - 1 - i]  # d_{i+1}, output of loop index i
                residual = produced.data - t.data
                cs = self._cross_scale(i, self._coarse_src(coarse_d, i, n))
                if cs is not None:
                    residual = residual - cs.data
                recovered[i - 1] = Tensor(residual / self.skip_alphas[i - 1].data)
                above = produced
            return tuple(recovered)


class ColumnState:
    """Cross-column interface: the decoder chain (ordered d_levels..d_1)
    plus the deepest encoder feature d_{levels+1}."""

    __slots__ = ("dec", "e_top")

    def __init__(self, dec, e_top):
        self.dec = tuple(dec)
        self.e_top = e_top

    def enc_cross(self):
        """Features consumed by the next column's encoder, level order."""
        return list(reversed(self.dec[:-1])) + [self.e_top]

    @property
    def d1(self):
        return self.dec[-1]

    def tensors(self):
        return list(self.dec) + [self.e_top]


class Column(Module):
    """One sub-unet: encoder, decoder, kernel-estimator tail."""

    def __init__(self, cfg: ModelConfig, scale: int, rng, dtype=np.float32):
        self.enc = SubEncoder(cfg, scale, rng, dtype)
        self.dec = SubDecoder(cfg, scale, rng, dtype)
        self.fke = (
            FourierKernelEstimator(cfg.fke_config(), rng, dtype) if cfg.fke_enabled else None
        )
        self.tail = Conv2d(rng, cfg.channels[0], cfg.in_channels, 3, dtype=dtype)

    def tail_forward(self, d1: Tensor, b_n: Tensor, collect_estimates: bool = False,
                     collect_taps: bool = False):
        if self.fke is not None:
            feat, estimate, taps = self.fke(
                d1, collect_estimate=collect_estimates, collect_taps=collect_taps
            )
        else:
            feat, estimate, taps = d1, None, None
        s_hat = ops.add(self.tail(feat), b_n)
        return s_hat, estimate, taps


class DMSUNet(Module):
    """The full model: per-scale stems and a grid of chained columns."""

    def __init__(self, cfg: ModelConfig, dtype=np.float32):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.init_seed))
        self.cfg = cfg
        self.dtype = dtype
        self.stems = [
            Conv2d(rng, cfg.in_channels, cfg.channels[0], 3, dtype=dtype)
            for _ in range(cfg.scales)
        ]
        self.cols = {}
        for n in range(cfg.scales):
            for j in range(cfg.columns):
                self.cols[f"s{n}c{j}"] = Column(cfg, n, rng, dtype)

    def col(self, n: int, j: int) -> Column:
        return self.cols[f"s{n}c{j}"]

    def check_extents(self, x: Tensor):
        h, w = x.shape[-2:]
        d = self.cfg.divisor
        if h % d or w % d:
            raise ShapeError(f"extents {h}x{w} must be divisible by {d}")

    def pyramids(self, x: Tensor):
        return [image_downscale(x, n + 1) for n in range(self.cfg.scales)]

    def run_group(self, j: int, b, e0, state, collect_estimates=False, collect_taps=False,
                  skip_tails: bool = False):
        """Run column index j at every scale.

        ``state`` holds each scale's boundary from column j-1 (None for
        the first column); ``e0`` may be None to recompute the stems
        inside this group's graph. ``skip_tails`` runs only the boundary
        chain (used by the reversible forward, whose tails are rebuilt
        during backprop). Returns (outputs, diagnostics fragment, new
        state).
        """
        cfg = self.cfg
        if e0 is None:
            e0 = [self.stems[n](b[n]) for n in range(cfg.scales)]
        outputs = {}
        diag = {"estimates": {}, "taps": {}}
        enc_feats = []
        for n in range(cfg.scales):
            cross_d = state[n].enc_cross() if state[n] is not None else None
            fine = enc_feats[n - 1] if n > 0 else None
            enc_feats.append(self.col(n, j).enc(e0[n], cross_d, fine))
        dec_feats = [None] * cfg.scales
        for n in range(cfg.scales - 1, -1, -1):
            cross_d1 = state[n].d1 if state[n] is not None else None
            coarse = dec_feats[n + 1] if n + 1 < cfg.scales else None
            dec_feats[n] = self.col(n, j).dec(enc_feats[n], cross_d1, coarse)
        new_state = [None] * cfg.scales
        for n in range(cfg.scales):
            d_tuple = dec_feats[n]
            if not skip_tails:
                s_hat, estimate, taps = self.col(n, j).tail_forward(
                    d_tuple[-1], b[n], collect_estimates=collect_estimates,
                    collect_taps=collect_taps,
                )
                outputs[(n, j)] = s_hat
                if collect_estimates:
                    diag["estimates"][(n, j)] = estimate
                if collect_taps:
                    diag["taps"][(n, j)] = taps
            new_state[n] = ColumnState(d_tuple, enc_feats[n][-1])
        return outputs, diag, new_state

    def recover_group_inputs(self, j: int, boundary, e0, b):
        """Invert column j: from its boundary states recover column
        j-1's boundary states. Runs without grad."""
        cfg = self.cfg
        with no_grad():
            if e0 is None:
                e0 = [self.stems[n](b[n]) for n in range(cfg.scales)]
            coarse_of = lambda n: boundary[n + 1].dec if n + 1 < cfg.scales else None
            enc_rec = []
            for n in range(cfg.scales):
                st = boundary[n]
                col = self.col(n, j)
                skips = col.dec.invert_levels(st.dec, st.e_top, coarse_of(n))
                enc_rec.append(tuple(skips) + (st.e_top,))
            prev = []
            for n in range(cfg.scales):
                st = boundary[n]
                col = self.col(n, j)
                fine = enc_rec[n - 1] if n > 0 else None
                xd = col.enc.invert(enc_rec[n], e0[n], fine)
                xd1 = col.dec.invert_cross(st.dec[-1], st.dec[-2], coarse_of(n))
                prev.append(ColumnState(tuple(reversed(xd[:-1])) + (xd1,), xd[-1]))
            return prev

    def forward(self, x: Tensor, collect_estimates: bool = False, collect_taps: bool = False):
        """Run every column; returns (outputs, diagnostics).

        outputs maps (scale, column) -> restored image at that scale's
        resolution; diagnostics carries kernel estimates and lattice
        taps when requested.
        """
        self.check_extents(x)
        cfg = self.cfg
        b = self.pyramids(x)
        e0 = [self.stems[n](b[n]) for n in range(cfg.scales)]
        state = [None] * cfg.scales
        outputs = {}
        diag = {"estimates": {}, "taps": {}}
        for j in range(cfg.columns):
            outs, frag, state = self.run_group(
                j, b, e0, state, collect_estimates, collect_taps
            )
            outputs.update(outs)
            diag["estimates"].update(frag["estimates"])
            diag["taps"].update(frag["taps"])
        return outputs, diag

    def cross_column_alphas(self):
        """The couplings whose zeroing decouples columns from their
        predecessors: encoder alphas and the decoder level-1 alpha."""
        for key in self.cols:
            col = self.cols[key]
            yield from col.enc.cross_alphas
            yield col.dec.cross_alpha

    def infer(self, x: Tensor):
        """Full-image inference with reflection padding to divisibility."""
        h, w = x.shape[-2:]
        d = self.cfg.divisor
        ph = (-h) % d
        pw = (-w) % d
        arr = x.data
        if ph or pw:
            pads = [(0, 0)] * (arr.ndim - 2) + [(0, ph), (0, pw)]
            arr = np.pad(arr, pads, mode="reflect")
        with no_grad():
            outputs, _ = self.forward(Tensor(arr))
        best = outputs[(0, self.cfg.columns - 1)].data
        return Tensor(np.ascontiguousarray(best[..., :h, :w]))
