"""Fully connected tanh surrogate u(x, t) for the nondimensional oil temperature.

Two evaluation routes share one parameter layout:

* :func:`forward` builds the network on an autodiff :class:`~thermopinn.autodiff.Tape`
  (scalar, slow, exact reference).
* :func:`predict` and the batched kernels in :mod:`thermopinn._kernels`
  evaluate many points at once (used for training and prediction).

Flat layout: for each layer, the weight matrix ``(n_out, n_in)`` row-major,
then its bias vector.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .autodiff import DiffNode, Tape, tanh

DEFAULT_LAYERS = (2, 32, 32, 32, 1)

_CHECKPOINT_TAG = "# thermopinn checkpoint v1"


def _validate_sizes(layer_sizes):
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 3 or sizes[0] != 2 or sizes[-1] != 1 or min(sizes) < 1:
        raise ValueError(
            f"layer_sizes must be [2, hidden..., 1] with at least one hidden layer, got {list(layer_sizes)}"
        )
    return sizes


def n_params(layer_sizes) -> int:
    sizes = _validate_sizes(layer_sizes)
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


@dataclass
class MlpParams:
    layer_sizes: tuple
    weights: list
    biases: list

    def __post_init__(self):
        self.layer_sizes = _validate_sizes(self.layer_sizes)
        pairs = list(zip(self.layer_sizes[:-1], self.layer_sizes[1:]))
        if len(self.weights) != len(pairs) or len(self.biases) != len(pairs):
            raise ValueError("number of weight/bias arrays does not match layer_sizes")
        for (n_in, n_out), W, b in zip(pairs, self.weights, self.biases):
            if np.shape(W) != (n_out, n_in) or np.shape(b) != (n_out,):
                raise ValueError(
                    f"layer shape mismatch: expected W{(n_out, n_in)}, b{(n_out,)}, "
                    f"got W{np.shape(W)}, b{np.shape(b)}"
                )

    @property
    def size(self) -> int:
        return n_params(self.layer_sizes)

    def flatten(self) -> np.ndarray:
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(np.asarray(W, dtype=float).ravel())
            parts.append(np.asarray(b, dtype=float))
        return np.concatenate(parts)

    @classmethod
    def unflatten(cls, layer_sizes, vector) -> MlpParams:
        sizes = _validate_sizes(layer_sizes)
        vector = np.asarray(vector)
        if vector.ndim != 1 or vector.shape[0] != n_params(sizes):
            raise ValueError(f"expected a flat vector of length {n_params(sizes)}, got shape {vector.shape}")
        weights, biases = [], []
        pos = 0
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            weights.append(vector[pos : pos + n_in * n_out].reshape(n_out, n_in).copy())
            pos += n_in * n_out
            biases.append(vector[pos : pos + n_out].copy())
            pos += n_out
        return cls(sizes, weights, biases)

    def as_inputs(self, tape: Tape) -> MlpParams:
        """Same parameters as named tape inputs ``W{l}[i,j]`` / ``b{l}[i]`` for differentiation."""
        weights, biases = [], []
        for li, (W, b) in enumerate(zip(self.weights, self.biases)):
            Wn = np.empty(np.shape(W), dtype=object)
            for (i, j), v in np.ndenumerate(np.asarray(W, dtype=float)):
                Wn[i, j] = tape.input(f"W{li}[{i},{j}]", v)
            bn = np.empty(np.shape(b), dtype=object)
            for i, v in enumerate(np.asarray(b, dtype=float)):
                bn[i] = tape.input(f"b{li}[{i}]", v)
            weights.append(Wn)
            biases.append(bn)
        return MlpParams(self.layer_sizes, weights, biases)

    def input_names(self) -> list[str]:
        names = []
        for li, (n_in, n_out) in enumerate(zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
            names += [f"W{li}[{i},{j}]" for i in range(n_out) for j in range(n_in)]
            names += [f"b{li}[{i}]" for i in range(n_out)]
        return names


def init_mlp(layer_sizes=DEFAULT_LAYERS, seed: int = 0) -> MlpParams:
    """Glorot-uniform weights and zero biases, reproducible from ``seed``."""
    sizes = _validate_sizes(layer_sizes)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-limit, limit, size=(n_out, n_in)))
        biases.append(np.zeros(n_out))
    return MlpParams(sizes, weights, biases)


def forward(params: MlpParams, x, t):
    """Network output at scaled coordinates ``(x, t)`` as a tape node.

    ``x`` and ``t`` may be DiffNodes (kept as differentiable inputs) or
    numbers, in which case a fresh tape with inputs ``"x"`` and ``"t"`` is
    created. Parameters may be plain arrays (constants) or the result of
    :meth:`MlpParams.as_inputs`.
    """
    if not isinstance(x, DiffNode) and not isinstance(t, DiffNode):
        tape = _find_tape(params) or Tape()
        x = tape.input("x", float(x))
        t = tape.input("t", float(t))
    for c, label in ((x, "x"), (t, "t")):
        v = c.value if isinstance(c, DiffNode) else c
        if v is not None and not 0.0 <= float(v) <= 1.0:
            warnings.warn(f"{label}={float(v):g} outside the nondimensional domain [0, 1]", stacklevel=2)
    a = [x, t]
    last = len(params.weights) - 1
    for li, (W, b) in enumerate(zip(params.weights, params.biases)):
        # plain Python scalars: numpy scalars would not defer to DiffNode operators
        W = np.asarray(W).tolist()
        z = []
        for i, bi in enumerate(np.asarray(b).tolist()):
            acc = bi
            for j in range(len(a)):
                acc = acc + W[i][j] * a[j]
            z.append(acc)
        a = z if li == last else [tanh(v) for v in z]
    return a[0]


def _find_tape(params):
    for W in params.weights:
        for v in np.ravel(W):
            if isinstance(v, DiffNode):
                return v.tape
    return None


def predict(params: MlpParams | np.ndarray, x, t, layer_sizes=None) -> np.ndarray:
    """Batched network output (nondimensional) at arrays of scaled coordinates."""
    theta, sizes = _flat(params, layer_sizes)
    X = np.column_stack([np.ravel(x), np.ravel(t)]).astype(float)
    return _kernels.mlp_value(theta, sizes, X).reshape(np.shape(x))


def _flat(params, layer_sizes):
    if isinstance(params, MlpParams):
        return params.flatten(), params.layer_sizes
    if layer_sizes is None:
        raise ValueError("layer_sizes required with a flat parameter vector")
    return np.asarray(params, dtype=float), _validate_sizes(layer_sizes)


# checkpoints ---------------------------------------------------------------
#
# Layout:
#   # thermopinn checkpoint v1
#   # layer_sizes: 2 32 32 32 1
#   # columns: <name> [<name> ...]
#   one row per flat parameter index, values printed with 17 significant digits


def save_vectors(path, layer_sizes, columns: dict) -> None:
    sizes = _validate_sizes(layer_sizes)
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    if data.shape[0] != n_params(sizes):
        raise ValueError("vector length does not match layer_sizes")
    lines = [
        _CHECKPOINT_TAG,
        "# layer_sizes: " + " ".join(str(s) for s in sizes),
        "# columns: " + " ".join(names),
    ]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in data]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_vectors(path) -> tuple[tuple, dict]:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0].strip() != _CHECKPOINT_TAG:
        raise ValueError(f"{path}: not a thermopinn checkpoint")
    sizes, names, rows = None, None, []
    for lineno, line in enumerate(text[1:], start=2):
        if line.startswith("# layer_sizes:"):
            sizes = _validate_sizes(line.split(":", 1)[1].split())
        elif line.startswith("# columns:"):
            names = line.split(":", 1)[1].split()
        elif line.strip() and not line.startswith("#"):
            try:
                rows.append([float(v) for v in line.split()])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if sizes is None or names is None:
        raise ValueError(f"{path}: missing layer_sizes or columns header")
    data = np.array(rows, dtype=float).reshape(-1, len(names))
    if data.shape[0] != n_params(sizes):
        raise ValueError(f"{path}: {data.shape[0]} rows, expected {n_params(sizes)}")
    return sizes, {k: data[:, i].copy() for i, k in enumerate(names)}


def save_params(path, params: MlpParams) -> None:
    save_vectors(path, params.layer_sizes, {"theta": params.flatten()})


def load_params(path) -> MlpParams:
    sizes, cols = load_vectors(path)
    if "theta" not in cols:
        raise ValueError(f"{path}: no 'theta' column")
    return MlpParams.unflatten(sizes, cols["theta"])
