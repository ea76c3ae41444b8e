"""Single-hidden-layer tanh RNN: parameters, noise streams and forward passes.

All sequence arrays are time-major. A single sequence has shape ``(T, dim)``;
a batch of equal-length sequences has shape ``(T, n, dim)``. Every forward
pass accepts either layout and returns a :class:`PassTrace` in the same one.

Weight matrices follow the column-vector convention of the model
``x_t = tanh(A u_t + R x_{t-1})``, ``y_t = B x_t``: ``A`` is
``(hidden, input)``, ``R`` is ``(hidden, hidden)`` and ``B`` is
``(output, hidden)``. With decorrelation enabled the recurrent and output
weights read the transformed state ``x*_t = D x_t`` instead of ``x_t``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, ContractError, DataError

NODE = "node"
WEIGHT = "weight"


class Dims(NamedTuple):
    input_size: int
    hidden_size: int
    output_size: int


def as_dims(dims) -> Dims:
    try:
        d = Dims(*(int(v) for v in dims))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"dims must be three integers, got {dims!r}") from exc
    if min(d) <= 0:
        raise ConfigurationError(f"all dimensions must be positive, got {tuple(d)}")
    return d


@dataclass
class RnnParams:
    """Learnable state of the network.

    ``D`` is ``None`` unless decorrelation is enabled. ``leak`` is the RFLO
    time constant tau; ``None`` means the plain (non-leaky) update.
    """

    A: np.ndarray
    R: np.ndarray
    B: np.ndarray
    D: np.ndarray | None = None
    leak: float | None = None

    def __post_init__(self):
        H, I = np.shape(self.A)
        if np.shape(self.R) != (H, H):
            raise ContractError(f"R must be {(H, H)}, got {np.shape(self.R)}")
        if np.ndim(self.B) != 2 or np.shape(self.B)[1] != H:
            raise ContractError(f"B must have {H} columns, got {np.shape(self.B)}")
        if self.D is not None and np.shape(self.D) != (H, H):
            raise ContractError(f"D must be {(H, H)}, got {np.shape(self.D)}")
        if self.leak is not None and self.leak < 1:
            raise ConfigurationError(f"leak time constant must be >= 1, got {self.leak}")

    @property
    def dims(self) -> Dims:
        return Dims(self.A.shape[1], self.A.shape[0], self.B.shape[0])

    @property
    def decorrelated(self) -> bool:
        return self.D is not None

    @property
    def dtype(self):
        return self.A.dtype

    def matrices(self) -> dict[str, np.ndarray]:
        out = {"A": self.A, "R": self.R, "B": self.B}
        if self.D is not None:
            out["D"] = self.D
        return out

    def copy(self) -> RnnParams:
        return replace(
            self,
            A=self.A.copy(),
            R=self.R.copy(),
            B=self.B.copy(),
            D=None if self.D is None else self.D.copy(),
        )

    def all_finite(self) -> bool:
        return all(np.isfinite(m).all() for m in self.matrices().values())


@dataclass
class PassTrace:
    """Per-timestep record of one forward pass.

    ``alpha`` holds the full argument of tanh (including injected node noise
    for a noisy pass) and ``beta`` the output pre-activation, which is also
    the output since the readout is linear.
    """

    alpha: np.ndarray
    x: np.ndarray
    x_star: np.ndarray | None
    beta: np.ndarray
    x0: np.ndarray
    x_star0: np.ndarray | None = None

    @property
    def y(self) -> np.ndarray:
        return self.beta

    def __len__(self) -> int:
        return self.alpha.shape[0]

    @property
    def states(self) -> np.ndarray:
        """States read by ``R`` and ``B``: ``x*_t`` if decorrelated, else ``x_t``."""
        return self.x if self.x_star is None else self.x_star

    @property
    def prev_states(self) -> np.ndarray:
        """Recurrent presynaptic activity at each step, i.e. ``states`` shifted by one."""
        first = self.x0 if self.x_star0 is None else self.x_star0
        return np.concatenate([first[None], self.states[:-1]], axis=0)


@dataclass
class NoiseStream:
    """Gaussian perturbations, one independent draw per timestep.

    Node kind: ``xi`` is ``(T, [n,] H)`` and ``nu`` is ``(T, [n,] O)``.
    Weight kind: ``xi``, ``nu`` and ``zeta`` are stacked copies shaped like
    ``A``, ``R`` and ``B`` respectively, one per timestep.
    """

    kind: str
    sigma2: float
    xi: np.ndarray
    nu: np.ndarray
    zeta: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.kind not in (NODE, WEIGHT):
            raise ContractError(f"unknown noise kind {self.kind!r}")
        if not self.sigma2 > 0:
            raise ConfigurationError(f"sigma2 must be positive, got {self.sigma2}")
        if self.kind == WEIGHT and self.zeta is None:
            raise ContractError("weight noise needs a zeta (output weight) component")

    def __len__(self) -> int:
        return self.xi.shape[0]

    @classmethod
    def zeros_like_node(cls, trace: PassTrace, sigma2: float = 1.0) -> NoiseStream:
        return cls(NODE, sigma2, np.zeros_like(trace.alpha), np.zeros_like(trace.beta))


def init_params(
    dims,
    seed=None,
    scheme: str = "uniform",
    decorrelation: bool = False,
    leak: float | None = None,
    dtype=np.float64,
) -> RnnParams:
    """Draw fresh parameters scaled by ``1/sqrt(fan_in)``.

    ``scheme="uniform"`` samples from ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``,
    ``scheme="gaussian"`` from ``N(0, 1/fan_in)``. ``D`` starts at identity.
    """
    I, H, O = as_dims(dims)
    rng = np.random.default_rng(seed)

    def draw(rows, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        if scheme in ("uniform", "uniform-scaled"):
            w = rng.uniform(-bound, bound, size=(rows, fan_in))
        elif scheme in ("gaussian", "gaussian-scaled"):
            w = rng.normal(0.0, bound, size=(rows, fan_in))
        else:
            raise ConfigurationError(f"unknown init scheme {scheme!r}")
        return w.astype(dtype)

    A = draw(H, I)
    R = draw(H, H)
    B = draw(O, H)
    D = np.eye(H, dtype=dtype) if decorrelation else None
    return RnnParams(A, R, B, D, leak)


def _check_inputs(params: RnnParams, inputs, x0):
    u = np.asarray(inputs)
    if u.ndim not in (2, 3):
        raise ContractError(f"inputs must be (T, I) or (T, n, I), got shape {u.shape}")
    if u.shape[0] < 1:
        raise ContractError("input sequence must contain at least one step")
    if u.shape[-1] != params.dims.input_size:
        raise ContractError(f"input size {u.shape[-1]} != {params.dims.input_size}")
    if not np.isfinite(u).all():
        raise DataError("inputs contain NaN or Inf")
    u = u.astype(params.dtype, copy=False)
    lead = u.shape[1:-1]
    H = params.dims.hidden_size
    if x0 is None:
        x0 = np.zeros(lead + (H,), dtype=params.dtype)
    else:
        x0 = np.broadcast_to(np.asarray(x0, dtype=params.dtype), lead + (H,)).copy()
    return u, x0


def _run(params: RnnParams, u, x0, node: NoiseStream | None = None, weight: NoiseStream | None = None):
    A, R, B, D = params.A, params.R, params.B, params.D
    T = u.shape[0]
    drive = u @ A.T
    if node is not None:
        drive = drive + node.xi
    if weight is not None:
        drive = drive + np.einsum("...hi,...i->...h", weight.xi, u)

    keep = None if params.leak is None else 1.0 - 1.0 / params.leak
    gain = None if params.leak is None else 1.0 / params.leak

    alpha = np.empty(drive.shape, dtype=params.dtype)
    xs = np.empty_like(alpha)
    xstar = None if D is None else np.empty_like(alpha)

    x = x0
    s = x0 if D is None else x0 @ D.T
    s0 = None if D is None else s
    for t in range(T):
        a = drive[t] + s @ R.T
        if weight is not None:
            a = a + np.einsum("...hk,...k->...h", weight.nu[t], s)
        h = np.tanh(a)
        x = h if keep is None else gain * h + keep * x
        alpha[t] = a
        xs[t] = x
        if D is not None:
            s = x @ D.T
            xstar[t] = s
        else:
            s = x

    out_states = xs if D is None else xstar
    beta = out_states @ B.T
    if node is not None:
        beta = beta + node.nu
    if weight is not None:
        beta = beta + np.einsum("...oh,...h->...o", weight.zeta, out_states)
    return PassTrace(alpha=alpha, x=xs, x_star=xstar, beta=beta, x0=x0, x_star0=s0)


def forward_clean(params: RnnParams, inputs, x0=None) -> PassTrace:
    """Noise-free pass. ``x0`` defaults to the zero state."""
    u, x0 = _check_inputs(params, inputs, x0)
    return _run(params, u, x0)


def _check_noise(noise: NoiseStream, kind: str, u: np.ndarray, params: RnnParams):
    if noise.kind != kind:
        raise ContractError(f"expected {kind} noise, got {noise.kind}")
    if len(noise) != u.shape[0]:
        raise ContractError(f"noise length {len(noise)} != input length {u.shape[0]}")
    lead = u.shape[:-1]
    I, H, O = params.dims
    if kind == NODE:
        expected = {"xi": lead + (H,), "nu": lead + (O,)}
    else:
        expected = {"xi": lead + (H, I), "nu": lead + (H, H), "zeta": lead + (O, H)}
    for name, shape in expected.items():
        got = np.shape(getattr(noise, name))
        if got != shape:
            raise ContractError(f"noise component {name} has shape {got}, expected {shape}")


def forward_node_noisy(params: RnnParams, inputs, noise: NoiseStream, x0=None) -> PassTrace:
    """Pass with ``xi_t`` added to the hidden pre-activation and ``nu_t`` to the output.

    The noisy state feeds back through ``R``, so perturbations propagate.
    """
    u, x0 = _check_inputs(params, inputs, x0)
    _check_noise(noise, NODE, u, params)
    return _run(params, u, x0, node=noise)


def forward_weight_noisy(params: RnnParams, inputs, noise: NoiseStream, x0=None) -> PassTrace:
    """Pass with ``A + xi_t``, ``R + nu_t`` and ``B + zeta_t`` at every step."""
    u, x0 = _check_inputs(params, inputs, x0)
    _check_noise(noise, WEIGHT, u, params)
    return _run(params, u, x0, weight=noise)


def sample_noise(kind: str, dims, T: int, sigma2: float, rng, batch: int | None = None,
                 dtype=np.float64) -> NoiseStream:
    """Draw i.i.d. ``N(0, sigma2)`` perturbations for ``T`` steps (and ``batch`` sequences)."""
    if not sigma2 > 0:
        raise ConfigurationError(f"sigma2 must be positive, got {sigma2}")
    if T < 1:
        raise ConfigurationError(f"T must be >= 1, got {T}")
    I, H, O = as_dims(dims)
    rng = np.random.default_rng(rng)
    lead = (T,) if batch is None else (T, batch)
    std = np.sqrt(sigma2)

    def draw(*shape):
        return std * rng.standard_normal(lead + shape, dtype=dtype)

    if kind == NODE:
        return NoiseStream(NODE, sigma2, draw(H), draw(O))
    if kind == WEIGHT:
        return NoiseStream(WEIGHT, sigma2, draw(H, I), draw(H, H), draw(O, H))
    raise ConfigurationError(f"unknown noise kind {kind!r}")


def apply_updates(params: RnnParams, updates, eta: float, epsilon: float = 0.0) -> RnnParams:
    """Return ``W - eta * dW`` for A, R, B and ``D - epsilon * dD`` when both exist.

    Results keep the parameters' dtype whatever the precision of the updates.
    """
    if eta < 0 or epsilon < 0:
        raise ConfigurationError("learning rates must be non-negative")
    new = {}
    for name in ("A", "R", "B"):
        w = getattr(params, name)
        dw = getattr(updates, "d" + name)
        if dw is None:
            new[name] = w.copy()
            continue
        if dw.shape != w.shape:
            raise ContractError(f"d{name} shape {dw.shape} != {w.shape}")
        new[name] = (w - eta * dw).astype(w.dtype, copy=False)
    D = params.D
    if D is not None:
        dD = updates.dD
        if dD is None:
            D = D.copy()
        else:
            if dD.shape != D.shape:
                raise ContractError(f"dD shape {dD.shape} != {D.shape}")
            D = (D - epsilon * dD).astype(D.dtype, copy=False)
    return RnnParams(new["A"], new["R"], new["B"], D, params.leak)


def save_params(params: RnnParams, path) -> Path:
    """Write a self-describing ``.npz`` checkpoint (row-major, exact dtype)."""
    path = Path(path)
    meta = {
        "dims": list(params.dims),
        "decorrelation": params.decorrelated,
        "leak": params.leak,
        "dtype": str(params.dtype),
    }
    arrays = {k: np.ascontiguousarray(v) for k, v in params.matrices().items()}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)
    return path


def load_params(path) -> RnnParams:
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        D = z["D"] if meta["decorrelation"] else None
        params = RnnParams(z["A"], z["R"], z["B"], D, meta["leak"])
    if list(params.dims) != meta["dims"]:
        raise DataError(f"checkpoint dims {meta['dims']} disagree with stored matrices")
    return params
