"""Model parameter vectors: flat layout, packing, and (de)serialization.

Two architectures are supported.  ``const-matern`` is a constant mean with
an ARD Matern-3/2 kernel on the raw inputs.  ``mlp8-matern`` feeds the
inputs through one tanh layer of width 8 shared by mean and kernel: the
mean is linear in the features, the kernel is Matern-3/2 on the features
with one lengthscale per feature.

Positive quantities (amplitude, lengthscales, noise variance) are stored
in log space so the flat vector is unconstrained.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InputError, ParameterError, ParseError

CONST_MATERN = "const-matern"
MLP_MATERN = "mlp8-matern"
ARCHITECTURES = (CONST_MATERN, MLP_MATERN)

HIDDEN_WIDTH = 8

MODEL_FORMAT = "prebo-model"
MODEL_VERSION = 1


def param_layout(architecture, dim):
    """Ordered (name, shape) blocks making up the flat vector."""
    if dim < 1:
        raise InputError(f"dim must be >= 1, got {dim}")
    h = HIDDEN_WIDTH
    if architecture == CONST_MATERN:
        return [
            ("mean_const", (1,)),
            ("log_amplitude", (1,)),
            ("log_lengthscales", (dim,)),
            ("log_noise", (1,)),
        ]
    if architecture == MLP_MATERN:
        return [
            ("feature_weights", (h, dim)),
            ("feature_biases", (h,)),
            ("mean_weights", (h,)),
            ("mean_const", (1,)),
            ("log_amplitude", (1,)),
            ("log_lengthscales", (h,)),
            ("log_noise", (1,)),
        ]
    raise InputError(f"unknown architecture {architecture!r}; known: {ARCHITECTURES}")


def layout_size(architecture, dim):
    return sum(int(np.prod(shape)) for _, shape in param_layout(architecture, dim))


def block_slices(architecture, dim):
    """Flat-vector slice of each named block, in layout order."""
    slices = {}
    offset = 0
    for name, shape in param_layout(architecture, dim):
        size = int(np.prod(shape))
        slices[name] = slice(offset, offset + size)
        offset += size
    return slices


@dataclass(frozen=True, eq=False)
class GpParams:
    """Immutable flat parameter vector tagged with its architecture."""

    architecture: str
    dim: int
    theta: np.ndarray
    kernel: str = field(default="matern32")

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float).reshape(-1)
        expected = layout_size(self.architecture, self.dim)
        if theta.shape[0] != expected:
            raise ParameterError(
                f"theta has length {theta.shape[0]}, expected {expected} "
                f"for {self.architecture} with dim={self.dim}"
            )
        if not np.all(np.isfinite(theta)):
            raise ParameterError("theta contains non-finite entries")
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)

    # -- block access ----------------------------------------------------

    def blocks(self):
        """Dict of named views into the flat vector (read-only)."""
        out = {}
        offset = 0
        for name, shape in param_layout(self.architecture, self.dim):
            size = int(np.prod(shape))
            out[name] = self.theta[offset:offset + size].reshape(shape)
            offset += size
        return out

    def block(self, name):
        return self.blocks()[name]

    @property
    def mean_const(self) -> float:
        return float(self.block("mean_const")[0])

    @property
    def amplitude(self) -> float:
        return float(np.exp(self.block("log_amplitude")[0]))

    @property
    def lengthscales(self) -> np.ndarray:
        return np.exp(self.block("log_lengthscales"))

    @property
    def noise_variance(self) -> float:
        return float(np.exp(self.block("log_noise")[0]))

    @property
    def kernel_input_dim(self) -> int:
        return HIDDEN_WIDTH if self.architecture == MLP_MATERN else self.dim

    def with_theta(self, theta) -> "GpParams":
        return GpParams(self.architecture, self.dim, theta, self.kernel)

    def replace_block(self, name, values) -> "GpParams":
        theta = self.theta.copy()
        offset = 0
        for bname, shape in param_layout(self.architecture, self.dim):
            size = int(np.prod(shape))
            if bname == name:
                vals = np.asarray(values, dtype=float).reshape(-1)
                if vals.shape[0] != size:
                    raise ParameterError(f"block {name!r} expects {size} values")
                theta[offset:offset + size] = vals
                return self.with_theta(theta)
            offset += size
        raise ParameterError(f"no block named {name!r} in {self.architecture}")


def pack(architecture, dim, kernel="matern32", **block_values) -> GpParams:
    """Assemble a GpParams from named blocks; missing blocks default to 0."""
    pieces = []
    for name, shape in param_layout(architecture, dim):
        size = int(np.prod(shape))
        if name in block_values:
            vals = np.asarray(block_values.pop(name), dtype=float).reshape(-1)
            if vals.shape[0] != size:
                raise ParameterError(f"block {name!r} expects {size} values, got {vals.shape[0]}")
        else:
            vals = np.zeros(size)
        pieces.append(vals)
    if block_values:
        raise ParameterError(f"unknown blocks for {architecture}: {sorted(block_values)}")
    return GpParams(architecture, dim, np.concatenate(pieces), kernel)


def random_params(architecture, dim, rng, y_mean=0.0, kernel="matern32") -> GpParams:
    """Draw a seeded initialization.

    Log-amplitude, log-lengthscales and log-noise are uniform on (-1, 1);
    every neural-net weight block is uniform on +/- 1/sqrt(fan_in); the
    constant mean is set to the supplied sample mean of the outputs.
    """
    blocks = {}
    h = HIDDEN_WIDTH
    if architecture == MLP_MATERN:
        s_in = 1.0 / np.sqrt(dim)
        blocks["feature_weights"] = rng.uniform(-s_in, s_in, size=(h, dim))
        blocks["feature_biases"] = rng.uniform(-s_in, s_in, size=h)
        blocks["mean_weights"] = rng.uniform(-1.0 / np.sqrt(h), 1.0 / np.sqrt(h), size=h)
    n_ls = h if architecture == MLP_MATERN else dim
    blocks["mean_const"] = [float(y_mean)]
    blocks["log_amplitude"] = rng.uniform(-1.0, 1.0, size=1)
    blocks["log_lengthscales"] = rng.uniform(-1.0, 1.0, size=n_ls)
    blocks["log_noise"] = rng.uniform(-1.0, 1.0, size=1)
    return pack(architecture, dim, kernel=kernel, **blocks)


# -- model document ------------------------------------------------------

def to_document(params: GpParams) -> dict:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "architecture": params.architecture,
        "kernel": params.kernel,
        "dim": params.dim,
        "params": {name: [float(v) for v in block.reshape(-1)]
                   for name, block in params.blocks().items()},
    }
    return doc


def from_document(doc, source="<document>") -> GpParams:
    def fail(msg):
        raise ParseError(f"{source}: {msg}")

    if not isinstance(doc, dict):
        fail("model document must be a mapping")
    if doc.get("format") != MODEL_FORMAT:
        fail(f"field 'format' must be {MODEL_FORMAT!r}, got {doc.get('format')!r}")
    if doc.get("version") != MODEL_VERSION:
        fail(f"unsupported model document version {doc.get('version')!r}")
    arch = doc.get("architecture")
    if arch not in ARCHITECTURES:
        fail(f"field 'architecture' must be one of {ARCHITECTURES}, got {arch!r}")
    dim = doc.get("dim")
    if not isinstance(dim, int) or dim < 1:
        fail(f"field 'dim' must be a positive integer, got {dim!r}")
    raw = doc.get("params")
    if not isinstance(raw, dict):
        fail("field 'params' must be a mapping of block name to number list")
    blocks = {}
    for name, shape in param_layout(arch, dim):
        if name not in raw:
            fail(f"params missing block {name!r}")
        vals = raw[name]
        if not isinstance(vals, list) or len(vals) != int(np.prod(shape)):
            fail(f"params block {name!r} must be a list of {int(np.prod(shape))} numbers")
        blocks[name] = vals
    kernel = doc.get("kernel", "matern32")
    try:
        return pack(arch, dim, kernel=kernel, **blocks)
    except (ParameterError, InputError) as exc:
        fail(str(exc))


def save_model(params: GpParams, path):
    with open(path, "w") as fh:
        json.dump(to_document(params), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> GpParams:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    return from_document(doc, source=str(path))
