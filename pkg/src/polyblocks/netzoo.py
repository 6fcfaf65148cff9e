"""Architecture descriptors, assembly, and exact parameter accounting.

A descriptor is plain text, one layer per line, shapes validated while
parsing so errors carry line numbers.  The same layer records drive both
:func:`count_params` (pure arithmetic) and :func:`build_network` (an autodiff
Graph), which is what keeps the two in exact agreement.

Networks built here are activation-free stacks of the block zoo plus conv,
batchnorm, pooling and dense layers; stacking blocks multiplies their
polynomial degrees.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import functional as F
from .autodiff import Graph
from .blocks import (
    VECTOR_KINDS,
    ActivationMode,
    BlockSpec,
    block_forward,
    block_param_count,
    init_params,
)
from .errors import ArchError

Array = np.ndarray


@dataclass
class LayerRecord:
    """One parsed layer: kind, raw attributes, resolved shapes and size."""

    kind: str  # conv | bn | pool | dense | head | block
    attrs: dict
    in_shape: tuple
    out_shape: tuple
    params: int
    stage: int
    line: int


@dataclass
class ArchSpec:
    name: str
    input_shape: tuple  # (c, h, w) or (d,)
    layers: list = field(default_factory=list)

    @property
    def stages(self) -> list:
        groups: dict[int, list] = {}
        for rec in self.layers:
            groups.setdefault(rec.stage, []).append(rec)
        return [groups[i] for i in sorted(groups)]

    @property
    def classes(self) -> int:
        return int(self.layers[-1].attrs["classes"])

    @property
    def batch_ok(self) -> bool:
        """Whether the forward accepts [B, d] batches (vector nets only)."""
        if len(self.input_shape) != 1:
            return False
        for rec in self.layers:
            if rec.kind == "block" and rec.attrs["spec"].kind not in VECTOR_KINDS:
                return False
            if rec.kind not in ("block", "dense", "head"):
                return False
        return True


_INT_KEYS = {"k", "out", "stride", "pad", "classes", "channels", "degree", "ratio", "bias"}
_ALLOWED = {
    "input": set(),
    "conv": {"k", "out", "stride", "pad", "bias"},
    "bn": set(),
    "pool": {"kind", "k", "stride", "pad"},
    "dense": {"out", "bias"},
    "head": {"classes", "bias"},
    "block": {"kind", "channels", "degree", "out", "ratio", "mode", "realization", "stride"},
    "stage": set(),
}


def _kv(tokens, line_no: int, allowed: set) -> dict:
    attrs = {}
    for t in tokens:
        if "=" not in t:
            raise ArchError(f"line {line_no}: expected key=value, got {t!r}")
        k, v = t.split("=", 1)
        k = k.lower()
        if k not in allowed:
            raise ArchError(f"line {line_no}: unknown key {k!r}")
        if k in _INT_KEYS:
            try:
                attrs[k] = int(v)
            except ValueError:
                raise ArchError(f"line {line_no}: {k} needs an integer, got {v!r}") from None
        else:
            attrs[k] = v.lower()
    return attrs


def _conv_extent(n: int, k: int, stride: int, pad: int, line_no: int) -> int:
    if k > n + 2 * pad:
        raise ArchError(f"line {line_no}: window {k} larger than padded extent {n + 2 * pad}")
    return (n + 2 * pad - k) // stride + 1


def parse_arch(text: str, name: str = "custom") -> ArchSpec:
    """Parse and shape-check a descriptor; every failure names its line."""
    shape: tuple | None = None
    layers: list[LayerRecord] = []
    stage = 0
    stage_markers = False
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kw = tokens[0].lower()
        if kw not in _ALLOWED:
            raise ArchError(f"line {line_no}: unknown layer kind {kw!r}")
        if layers and layers[-1].kind == "head":
            raise ArchError(f"line {line_no}: layers after the head")
        if kw == "input":
            if shape is not None:
                raise ArchError(f"line {line_no}: duplicate input line")
            if len(tokens) != 2:
                raise ArchError(f"line {line_no}: input takes one shape token")
            try:
                dims = tuple(int(p) for p in tokens[1].lower().split("x"))
            except ValueError:
                raise ArchError(f"line {line_no}: bad input shape {tokens[1]!r}") from None
            if len(dims) not in (1, 3) or min(dims) < 1:
                raise ArchError(f"line {line_no}: input must be d or cxhxw, got {tokens[1]!r}")
            shape = dims
            continue
        if shape is None:
            raise ArchError(f"line {line_no}: the input line must come first")
        if kw == "stage":
            if len(tokens) != 1:
                raise ArchError(f"line {line_no}: stage takes no arguments")
            if stage_markers and not any(r.stage == stage for r in layers):
                raise ArchError(f"line {line_no}: empty stage")
            stage += 1
            stage_markers = True
            continue
        attrs = _kv(tokens[1:], line_no, _ALLOWED[kw])
        rec = _make_record(kw, attrs, shape, stage, line_no)
        layers.append(rec)
        shape = rec.out_shape
    if not layers or layers[-1].kind != "head":
        raise ArchError("descriptor must end with a head layer")
    if stage_markers and not any(r.stage == stage for r in layers):
        raise ArchError("trailing empty stage")
    return ArchSpec(name=name, input_shape=layers[0].in_shape, layers=layers)


def _make_record(kw: str, attrs: dict, shape: tuple, stage: int, line_no: int) -> LayerRecord:
    if kw == "conv":
        if len(shape) != 3:
            raise ArchError(f"line {line_no}: conv needs image input, have {shape}")
        for key in ("k", "out"):
            if key not in attrs:
                raise ArchError(f"line {line_no}: conv requires {key}=")
            if attrs[key] < 1:
                raise ArchError(f"line {line_no}: conv {key}= must be positive")
        c, h, w = shape
        k = attrs["k"]
        stride = attrs.get("stride", 1)
        pad = attrs.get("pad", k // 2)
        bias = attrs.get("bias", 0)
        out = (attrs["out"], _conv_extent(h, k, stride, pad, line_no), _conv_extent(w, k, stride, pad, line_no))
        n = k * k * c * attrs["out"] + (attrs["out"] if bias else 0)
        at = {"k": k, "stride": stride, "pad": pad, "bias": bias, "cin": c, "cout": attrs["out"]}
        return LayerRecord(kw, at, shape, out, n, stage, line_no)
    if kw == "bn":
        if len(shape) != 3:
            raise ArchError(f"line {line_no}: bn needs image input, have {shape}")
        return LayerRecord(kw, {"c": shape[0]}, shape, shape, 2 * shape[0], stage, line_no)
    if kw == "pool":
        if len(shape) != 3:
            raise ArchError(f"line {line_no}: pool needs image input, have {shape}")
        kind = attrs.get("kind")
        c, h, w = shape
        if kind == "global_avg":
            return LayerRecord(kw, {"kind": kind}, shape, (c, 1, 1), 0, stage, line_no)
        if kind == "max":
            k = attrs.get("k", 2)
            stride = attrs.get("stride", k)
            pad = attrs.get("pad", 0)
            if pad >= k:
                raise ArchError(f"line {line_no}: pool pad {pad} must be smaller than window {k}")
            out = (c, _conv_extent(h, k, stride, pad, line_no), _conv_extent(w, k, stride, pad, line_no))
            at = {"kind": kind, "k": k, "stride": stride, "pad": pad}
            return LayerRecord(kw, at, shape, out, 0, stage, line_no)
        raise ArchError(f"line {line_no}: pool kind must be global_avg or max, got {kind!r}")
    if kw == "dense":
        if len(shape) != 1:
            raise ArchError(f"line {line_no}: dense needs vector input, have {shape}")
        if "out" not in attrs:
            raise ArchError(f"line {line_no}: dense requires out=")
        if attrs["out"] < 1:
            raise ArchError(f"line {line_no}: dense out= must be positive")
        bias = attrs.get("bias", 1)
        n = shape[0] * attrs["out"] + (attrs["out"] if bias else 0)
        at = {"in": shape[0], "out": attrs["out"], "bias": bias}
        return LayerRecord(kw, at, shape, (attrs["out"],), n, stage, line_no)
    if kw == "head":
        if "classes" not in attrs:
            raise ArchError(f"line {line_no}: head requires classes=")
        classes = attrs["classes"]
        if classes < 2:
            raise ArchError(f"line {line_no}: head needs at least 2 classes")
        bias = attrs.get("bias", 1)
        n_in = int(np.prod(shape))
        n = n_in * classes + (classes if bias else 0)
        at = {"in": n_in, "classes": classes, "bias": bias}
        return LayerRecord(kw, at, shape, (classes,), n, stage, line_no)
    if kw == "block":
        return _block_record(attrs, shape, stage, line_no)
    raise ArchError(f"line {line_no}: unknown layer kind {kw!r}")


def _block_record(attrs: dict, shape: tuple, stage: int, line_no: int) -> LayerRecord:
    for key in ("kind", "channels"):
        if key not in attrs:
            raise ArchError(f"line {line_no}: block requires {key}=")
    kind = attrs["kind"]
    channels = attrs["channels"]
    stride = attrs.get("stride", 1)
    realization = attrs.get("realization", "dense")
    try:
        mode = ActivationMode.of(attrs.get("mode", "identity"))
    except ValueError:
        raise ArchError(f"line {line_no}: unknown mode {attrs['mode']!r}") from None
    if kind in VECTOR_KINDS:
        if len(shape) != 1:
            raise ArchError(f"line {line_no}: {kind} needs vector input, have {shape}")
        if "degree" not in attrs:
            raise ArchError(f"line {line_no}: {kind} requires degree=")
        if channels != shape[0]:
            raise ArchError(f"line {line_no}: block width {channels} != incoming {shape[0]}")
        try:
            spec = BlockSpec(
                kind=kind, channels=channels, degree=attrs["degree"],
                out=attrs.get("out"), ratio=attrs.get("ratio", 4), mode=mode,
            )
        except ValueError as e:
            raise ArchError(f"line {line_no}: {e}") from None
        out = (spec.o,)
        return LayerRecord("block", {"spec": spec, "stride": 1, "cin": channels},
                           shape, out, block_param_count(spec), stage, line_no)
    if len(shape) != 3:
        raise ArchError(f"line {line_no}: {kind} needs image input, have {shape}")
    c, h, w = shape
    if realization == "dense":
        if stride != 1:
            raise ArchError(f"line {line_no}: dense blocks cannot stride")
        if channels != c:
            raise ArchError(f"line {line_no}: block channels {channels} != incoming {c}")
        try:
            spec = BlockSpec(
                kind=kind, channels=c, spatial=h * w, degree=attrs.get("degree"),
                ratio=attrs.get("ratio", 4), mode=mode,
            )
        except ValueError as e:
            raise ArchError(f"line {line_no}: {e}") from None
        return LayerRecord("block", {"spec": spec, "stride": 1, "cin": c},
                           shape, shape, block_param_count(spec), stage, line_no)
    try:
        spec = BlockSpec(
            kind=kind, channels=channels, degree=attrs.get("degree"),
            ratio=attrs.get("ratio", 16 if kind == "se2" else 4), mode=mode,
            realization=realization,
        )
    except ValueError as e:
        raise ArchError(f"line {line_no}: {e}") from None
    if h % stride or w % stride:
        raise ArchError(f"line {line_no}: stride {stride} does not divide {h}x{w}")
    out = (channels, h // stride, w // stride)
    n = block_param_count(spec, in_channels=c, stride=stride)
    return LayerRecord("block", {"spec": spec, "stride": stride, "cin": c}, shape, out, n, stage, line_no)


def count_params(arch: ArchSpec) -> int:
    """Exact trainable scalar count; equals the built Graph's count."""
    return int(sum(rec.params for rec in arch.layers))


# -- assembly ---------------------------------------------------------------


def _to_rows(x, c: int, hw: int):
    # (c,h,w) feature map -> [hw, c] matrix-block layout
    return F.transpose(F.reshape(x, (c, hw)))


def _from_rows(y, c: int, h: int, w: int):
    return F.reshape(F.transpose(y), (c, h, w))


def _init_layer(rec: LayerRecord, rng: np.random.Generator) -> dict:
    at = rec.attrs
    if rec.kind == "conv":
        w = rng.standard_normal((at["cout"], at["cin"], at["k"], at["k"]))
        out = {"w": w / np.sqrt(at["k"] * at["k"] * at["cin"])}
        if at["bias"]:
            out["b"] = np.zeros(at["cout"])
        return out
    if rec.kind == "bn":
        return {"g": np.ones(at["c"]), "b": np.zeros(at["c"])}
    if rec.kind == "pool":
        return {}
    if rec.kind in ("dense", "head"):
        n_in = at["in"]
        n_out = at["out"] if rec.kind == "dense" else at["classes"]
        out = {"w": rng.standard_normal((n_in, n_out)) / np.sqrt(n_in)}
        if at["bias"]:
            out["b"] = np.zeros(n_out)
        return out
    spec: BlockSpec = at["spec"]
    if spec.realization == "dense":
        return init_params(spec, rng)
    k = 3 if spec.realization == "conv3x3" else 1
    cin, c = at["cin"], spec.channels
    out = {
        "conv1": rng.standard_normal((c, cin, k, k)) / np.sqrt(k * k * cin),
        "bn1g": np.ones(c), "bn1b": np.zeros(c),
        "conv2": rng.standard_normal((c, c, k, k)) / np.sqrt(k * k * c),
        "bn2g": np.ones(c), "bn2b": np.zeros(c),
    }
    if at["stride"] != 1 or cin != c:
        out["down"] = rng.standard_normal((c, cin, 1, 1)) / np.sqrt(cin)
        out["dbng"] = np.ones(c)
        out["dbnb"] = np.zeros(c)
    if spec.kind == "se2":
        out["gate1"] = rng.standard_normal((c, spec.bottleneck)) / np.sqrt(c)
        out["gate2"] = np.zeros((spec.bottleneck, c))
    return out


def _layer_forward(rec: LayerRecord, x, p: dict):
    at = rec.attrs
    if rec.kind == "conv":
        y = F.conv2d(x, p["w"], stride=at["stride"], pad=at["pad"])
        if at["bias"]:
            y = F.add(y, F.reshape(p["b"], (at["cout"], 1, 1)))
        return y
    if rec.kind == "bn":
        return F.batchnorm(x, p["g"], p["b"])
    if rec.kind == "pool":
        c, h, w = rec.in_shape
        if at["kind"] == "global_avg":
            pooled = F.global_avg_pool(_to_rows(x, c, h * w))
            return F.reshape(F.transpose(pooled), (c, 1, 1))
        return F.maxpool2d(x, at["k"], stride=at["stride"], pad=at["pad"])
    if rec.kind == "dense":
        y = F.matmul(x, p["w"])
        return F.add(y, p["b"]) if at["bias"] else y
    if rec.kind == "head":
        if len(rec.in_shape) > 1:
            x = F.reshape(x, (at["in"],))
        y = F.matmul(x, p["w"])
        return F.add(y, p["b"]) if at["bias"] else y
    spec: BlockSpec = at["spec"]
    if spec.realization == "dense":
        if spec.kind in VECTOR_KINDS or len(rec.in_shape) == 1:
            return block_forward(spec, x, p)
        c, h, w = rec.in_shape
        y = block_forward(spec, _to_rows(x, c, h * w), p)
        return _from_rows(y, c, h, w)
    return _conv_block_forward(rec, x, p)


def _conv_block_forward(rec: LayerRecord, x, p: dict):
    at = rec.attrs
    spec: BlockSpec = at["spec"]
    k = 3 if spec.realization == "conv3x3" else 1
    c = spec.channels
    y = F.conv2d(x, p["conv1"], stride=at["stride"], pad=k // 2)
    y = F.batchnorm(y, p["bn1g"], p["bn1b"])
    y = F.conv2d(y, p["conv2"], stride=1, pad=k // 2)
    y = F.batchnorm(y, p["bn2g"], p["bn2b"])
    if spec.kind == "se2":
        _, h, w = rec.out_shape
        gate = F.matmul(F.matmul(F.global_avg_pool(_to_rows(y, c, h * w)), p["gate1"]), p["gate2"])
        y = F.mul(y, F.reshape(F.transpose(gate), (c, 1, 1)))
    if "down" in p:
        skip = F.batchnorm(F.conv2d(x, p["down"], stride=at["stride"], pad=0), p["dbng"], p["dbnb"])
    else:
        skip = x
    return F.add(y, skip)


def build_network(arch: ArchSpec, seed: int = 0) -> Graph:
    """Assemble a Graph mapping an input sample to class logits.

    Parameters are drawn deterministically from the seed, in layer order.
    Vector nets (see :meth:`ArchSpec.batch_ok`) also accept [B, d] batches.
    """
    rng = np.random.default_rng(seed)
    params: dict[str, Array] = {}
    prefixes: list[tuple[LayerRecord, str]] = []
    for idx, rec in enumerate(arch.layers):
        prefix = f"l{idx}."
        for name, value in _init_layer(rec, rng).items():
            params[prefix + name] = value
        prefixes.append((rec, prefix))

    def build_fn(x, pmap):
        for rec, prefix in prefixes:
            sub = {name[len(prefix):]: v for name, v in pmap.items() if name.startswith(prefix)}
            x = _layer_forward(rec, x, sub)
        return x

    g = Graph(build_fn, params, input_shape=arch.input_shape)
    g.batch_ok = arch.batch_ok  # vector nets run whole [B, d] batches at once
    return g


def randomize_params(graph: Graph, seed: int = 0, scale: float = 1.0) -> Graph:
    """Overwrite every parameter with unit-scale noise (degree probes train nothing)."""
    rng = np.random.default_rng(seed)
    for name in graph.params:
        graph.params[name] = scale * rng.standard_normal(graph.params[name].shape)
    return graph


# -- builtin descriptors ----------------------------------------------------


def _resnet_text(kind: str, per_stage: tuple, classes: int, stem: str, ratio: int = 16) -> str:
    lines = []
    if stem == "cifar":
        lines += ["input 3x32x32", "conv k=3 out=64", "bn"]
    else:
        lines += ["input 3x224x224", "conv k=7 out=64 stride=2 pad=3", "bn",
                  "pool kind=max k=3 stride=2 pad=1"]
    extra = f" ratio={ratio}" if kind == "se2" else ""
    for i, (channels, blocks) in enumerate(zip((64, 128, 256, 512), per_stage)):
        lines.append("stage")
        for j in range(blocks):
            stride = 2 if (i > 0 and j == 0) else 1
            lines.append(
                f"block kind={kind} channels={channels} stride={stride} realization=conv3x3{extra}"
            )
    lines += ["pool kind=global_avg", f"head classes={classes}"]
    return "\n".join(lines) + "\n"


BUILTINS: dict[str, str] = {
    "resnet18-cifar100": _resnet_text("residual1", (2, 2, 2, 2), 100, "cifar"),
    "resnet18-cifar10": _resnet_text("residual1", (2, 2, 2, 2), 10, "cifar"),
    "resnet34-cifar100": _resnet_text("residual1", (3, 4, 6, 3), 100, "cifar"),
    "resnet34-cifar10": _resnet_text("residual1", (3, 4, 6, 3), 10, "cifar"),
    "senet18-cifar100": _resnet_text("se2", (2, 2, 2, 2), 100, "cifar"),
    "senet18-cifar10": _resnet_text("se2", (2, 2, 2, 2), 10, "cifar"),
    "resnet18-imagenet": _resnet_text("residual1", (2, 2, 2, 2), 1000, "imagenet"),
}


def builtin_names() -> list:
    return sorted(BUILTINS)


def resolve_arch(name_or_text: str) -> ArchSpec:
    """Accept a builtin name or raw descriptor text."""
    if name_or_text in BUILTINS:
        return parse_arch(BUILTINS[name_or_text], name=name_or_text)
    if "\n" not in name_or_text:
        raise ArchError(
            f"unknown architecture {name_or_text!r}; builtins: {', '.join(builtin_names())}"
        )
    return parse_arch(name_or_text)
