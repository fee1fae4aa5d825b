"""Neural product encoder and iterative neural product decoder.

Soft information between decoders is kept in a canonical ``(B, F, rows, cols)``
layout. A column decoder sees, for each of the ``cols`` columns, its F feature
columns laid end to end followed by the matching channel column; a row decoder
does the same per row. A decoder's raw output of length ``F*m`` is split into
F contiguous length-m vectors.

Decoder order within an iteration is column decoder (dimension 2) then row
decoder (dimension 1). With ``t = 1..2I`` indexing the decoders in order:

* ``t = 1`` sees only the channel output;
* ``t = 2`` sees the first decoder's output plus the channel;
* ``3 <= t <= 2I-1`` see ``out[t-1] - soft_in[t-1]`` plus the channel, where
  ``soft_in[t-1]`` is the soft block decoder ``t-1`` received;
* ``t = 2I`` sees only ``out[2I-1]`` and emits one logit per information bit.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .channel import power_normalize
from .classical import ProductCodeParams
from .errors import DimensionError
from .nn import Fcnn, init_weights
from .tensor import Tensor, add, concat, reshape, swapaxes, transpose

Hook = Callable[[int, Optional[Tensor], Optional[Tensor]], None]


@dataclass
class Architecture:
    """Code geometry and network sizes of a 2D ProductAE."""

    k1: int
    k2: int
    n1: int
    n2: int
    iterations: int = 4
    features: int = 3
    enc_layers: int = 7
    enc_width: int = 200
    dec_layers: int = 7
    dec_width: int = 250
    dec_last_layers: int = 9

    def __post_init__(self):
        for name in ("k1", "k2", "n1", "n2", "iterations", "features", "enc_width", "dec_width"):
            if getattr(self, name) <= 0:
                raise DimensionError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("enc_layers", "dec_layers", "dec_last_layers"):
            if getattr(self, name) < 0:
                raise DimensionError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.k1 > self.n1 or self.k2 > self.n2:
            raise DimensionError("component dimensions must satisfy k <= n")

    @property
    def code_params(self) -> ProductCodeParams:
        return ProductCodeParams([(self.n1, self.k1), (self.n2, self.k2)])

    @property
    def n(self) -> int:
        return self.n1 * self.n2

    @property
    def k(self) -> int:
        return self.k1 * self.k2

    @property
    def rate(self) -> Fraction:
        return Fraction(self.k, self.n)

    def to_dict(self) -> dict:
        return asdict(self)


def decoder_layout(arch: Architecture) -> list[dict]:
    """Name, orientation and (input, output, hidden layers) of each of the 2I decoders."""
    I, F = arch.iterations, arch.features
    specs = []
    for t in range(1, 2 * I + 1):
        i = (t + 1) // 2
        hidden = arch.dec_last_layers if i == I else arch.dec_layers
        if t % 2 == 1:
            in_dim = arch.n2 if t == 1 else (F + 1) * arch.n2
            out_dim = F * (arch.k2 if i == I else arch.n2)
            specs.append(dict(name=f"D2^({i})", t=t, column=True, in_dim=in_dim, out_dim=out_dim, hidden=hidden))
        else:
            if t == 2 * I:
                in_dim, out_dim = F * arch.n1, arch.k1
            else:
                in_dim, out_dim = (F + 1) * arch.n1, F * arch.n1
            specs.append(dict(name=f"D1^({i})", t=t, column=False, in_dim=in_dim, out_dim=out_dim, hidden=hidden))
    return specs


class ProductEncoder:
    """Row encoder ``enc1: k1 -> n1`` followed by column encoder ``enc2: k2 -> n2``."""

    def __init__(self, enc1: Fcnn, enc2: Fcnn, normalize: bool = True):
        self.enc1 = enc1
        self.enc2 = enc2
        self.normalize = normalize

    @property
    def k1(self) -> int:
        return self.enc1.input_dim

    @property
    def k2(self) -> int:
        return self.enc2.input_dim

    def encode(self, U) -> Tensor:
        """``(B, k2, k1)`` information bits -> ``(B, n2, n1)`` real codewords."""
        U = U if isinstance(U, Tensor) else Tensor(np.asarray(U, dtype=self.enc1.layers[0].weight.dtype))
        if U.ndim != 3 or U.shape[1:] != (self.k2, self.k1):
            raise DimensionError(f"encoder expects (B, {self.k2}, {self.k1}), got {U.shape}")
        rows = self.enc1(U)                       # (B, k2, n1)
        cols = self.enc2(swapaxes(rows, 1, 2))    # (B, n1, n2)
        c = swapaxes(cols, 1, 2)                  # (B, n2, n1)
        if not self.normalize:
            return c
        B, n2, n1 = c.shape
        return reshape(power_normalize(reshape(c, (B, n2 * n1))), (B, n2, n1))

    def parameters(self) -> list[Tensor]:
        return self.enc1.parameters() + self.enc2.parameters()


def _to_cols(soft: Tensor) -> Tensor:
    B, F, R, C = soft.shape
    return reshape(transpose(soft, (0, 3, 1, 2)), (B, C, F * R))


def _to_rows(soft: Tensor) -> Tensor:
    B, F, R, C = soft.shape
    return reshape(transpose(soft, (0, 2, 1, 3)), (B, R, F * C))


def _from_cols(out: Tensor, F: int) -> Tensor:
    B, C, FM = out.shape
    return transpose(reshape(out, (B, C, F, FM // F)), (0, 2, 3, 1))


def _from_rows(out: Tensor, F: int) -> Tensor:
    B, R, FM = out.shape
    return transpose(reshape(out, (B, R, F, FM // F)), (0, 2, 1, 3))


class ProductDecoder:
    """2I distinct FCNN decoders alternating column and row processing."""

    def __init__(self, arch: Architecture, nets: list[Fcnn]):
        layout = decoder_layout(arch)
        if len(nets) != len(layout):
            raise DimensionError(f"expected {len(layout)} decoder networks, got {len(nets)}")
        for spec, net in zip(layout, nets):
            if (net.input_dim, net.output_dim) != (spec["in_dim"], spec["out_dim"]):
                raise DimensionError(
                    f"{spec['name']} must map {spec['in_dim']} -> {spec['out_dim']}, "
                    f"got {net.input_dim} -> {net.output_dim}"
                )
        self.arch = arch
        self.layout = layout
        self.nets = nets

    @property
    def iterations(self) -> int:
        return self.arch.iterations

    @property
    def features(self) -> int:
        return self.arch.features

    def decode(self, Y, hook: Optional[Hook] = None) -> Tensor:
        """``(B, n2, n1)`` channel output -> ``(B, k2, k1)`` logits.

        ``hook(t, soft, channel)`` is called before decoder ``t`` runs with the soft block
        it receives (canonical layout, or ``None``) and the channel block as laid out for
        its orientation (or ``None``).
        """
        a = self.arch
        Y = Y if isinstance(Y, Tensor) else Tensor(np.asarray(Y, dtype=self.nets[0].layers[0].weight.dtype))
        if Y.ndim != 3 or Y.shape[1:] != (a.n2, a.n1):
            raise DimensionError(f"stage t=1: decoder expects (B, {a.n2}, {a.n1}), got {Y.shape}")
        F = a.features
        last_t = 2 * a.iterations
        Y_cols = swapaxes(Y, 1, 2)
        prev_out: Optional[Tensor] = None
        prev_soft: Optional[Tensor] = None
        for spec, net in zip(self.layout, self.nets):
            t, column = spec["t"], spec["column"]
            if t == 1:
                soft = None
            elif t == 2 or t == last_t:
                soft = prev_out
            else:
                soft = prev_out - prev_soft
            channel = None if t == last_t else (Y_cols if column else Y)
            if hook is not None:
                hook(t, soft, channel)
            parts = []
            if soft is not None:
                parts.append(_to_cols(soft) if column else _to_rows(soft))
            if channel is not None:
                parts.append(channel)
            try:
                x = parts[0] if len(parts) == 1 else concat(parts, axis=-1)
                out = net(x)
            except DimensionError as exc:
                raise DimensionError(f"stage t={t} ({spec['name']}): {exc}") from None
            if t == last_t:
                return out
            prev_out = _from_cols(out, F) if column else _from_rows(out, F)
            prev_soft = soft
        raise AssertionError("unreachable")

    def parameters(self) -> list[Tensor]:
        return [p for net in self.nets for p in net.parameters()]


class ProductAE:
    """Neural product encoder/decoder pair for a 2D ProductAE."""

    def __init__(self, arch: Architecture, encoder: ProductEncoder, decoder: ProductDecoder):
        self.arch = arch
        self.encoder = encoder
        self.decoder = decoder

    @classmethod
    def build(cls, arch: Architecture, seed: int = 0, dtype=np.float64) -> "ProductAE":
        enc1 = Fcnn(arch.k1, arch.n1, arch.enc_layers, arch.enc_width, dtype)
        enc2 = Fcnn(arch.k2, arch.n2, arch.enc_layers, arch.enc_width, dtype)
        nets = [
            Fcnn(s["in_dim"], s["out_dim"], s["hidden"], arch.dec_width, dtype)
            for s in decoder_layout(arch)
        ]
        for idx, net in enumerate([enc1, enc2] + nets):
            init_weights(net, [seed, idx])
        return cls(arch, ProductEncoder(enc1, enc2), ProductDecoder(arch, nets))

    @property
    def dtype(self):
        return self.encoder.enc1.layers[0].weight.dtype

    @property
    def rate(self) -> Fraction:
        return self.arch.rate

    @property
    def message_shape(self) -> tuple[int, int]:
        return (self.arch.k2, self.arch.k1)

    @property
    def codeword_shape(self) -> tuple[int, int]:
        return (self.arch.n2, self.arch.n1)

    def encode(self, U) -> Tensor:
        return self.encoder.encode(U)

    def decode(self, Y, hook: Optional[Hook] = None) -> Tensor:
        return self.decoder.decode(Y, hook)

    def forward(self, U, noise: np.ndarray) -> Tensor:
        """Logits for messages ``U`` sent through the channel with additive ``noise``."""
        c = self.encode(U)
        y = add(c, Tensor(np.asarray(noise, dtype=c.dtype)))
        return self.decode(y)

    def encoder_parameters(self) -> list[Tensor]:
        return self.encoder.parameters()

    def decoder_parameters(self) -> list[Tensor]:
        return self.decoder.parameters()

    def parameters(self) -> list[Tensor]:
        return self.encoder_parameters() + self.decoder_parameters()

    def named_parameters(self) -> dict[str, Tensor]:
        named = {}
        groups = [("enc1", self.encoder.enc1), ("enc2", self.encoder.enc2)]
        groups += [(f"dec{t}", net) for t, net in enumerate(self.decoder.nets, start=1)]
        for prefix, net in groups:
            for j, layer in enumerate(net.layers):
                named[f"{prefix}.{j}.weight"] = layer.weight
                named[f"{prefix}.{j}.bias"] = layer.bias
        return named
