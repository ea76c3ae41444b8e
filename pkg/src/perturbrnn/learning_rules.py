"""Weight-update rules: BPTT, node/weight/activity-based perturbation, decorrelation, RFLO, Adam.

Every rule returns an :class:`UpdateSet` holding *descent* directions, i.e.
the caller applies ``W <- W - eta * dW``. Batched traces (``(T, n, dim)``)
produce the mean update over the ``n`` sequences.

Presynaptic pairing follows the matrix shapes: the input weights pair the
postsynaptic signal with ``u_t``, the recurrent weights with the previous
recurrent state and the output weights with the current state. When the
network is decorrelated the recurrent/output presynaptic states are
``x*_t = D x_t``, since that is what ``R`` and ``B`` actually read.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError, DegenerateNoiseError, InstabilityError
from .metrics import step_losses
from .rnn_core import NODE, WEIGHT, NoiseStream, PassTrace, RnnParams

DELTA_LOSS = "delta_loss"
RAW_LOSS = "raw_loss"
PER_LAYER = "per_layer"
JOINT = "joint"


@dataclass
class UpdateSet:
    dA: np.ndarray
    dR: np.ndarray
    dB: np.ndarray
    dD: np.ndarray | None = None

    @classmethod
    def zeros_like(cls, params: RnnParams) -> UpdateSet:
        return cls(
            np.zeros_like(params.A),
            np.zeros_like(params.R),
            np.zeros_like(params.B),
            None if params.D is None else np.zeros_like(params.D),
        )

    def items(self):
        for name in ("dA", "dR", "dB", "dD"):
            value = getattr(self, name)
            if value is not None:
                yield name, value

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for _, v in self.items())

    def is_zero(self) -> bool:
        return all(not np.any(v) for _, v in self.items())

    def check_finite(self, rule: str) -> UpdateSet:
        if not self.all_finite():
            raise InstabilityError(f"{rule} produced a non-finite update")
        return self


# ---------------------------------------------------------------------------
# helpers


def _batched(a):
    """View ``(T, d)`` as ``(T, 1, d)``; leave ``(T, n, d)`` alone."""
    a = np.asarray(a)
    return a[:, None] if a.ndim == 2 else a


def _outer_sum(weights, post, pre):
    """``sum_{t,n} w[t,n] * post[t,n] pre[t,n]^T`` as a single matrix product."""
    P, Q = post.shape[-1], pre.shape[-1]
    lhs = (weights[..., None] * post).reshape(-1, P)
    return lhs.T @ pre.reshape(-1, Q)


def _trace_arrays(trace: PassTrace):
    return (
        _batched(trace.alpha),
        _batched(trace.states),
        _batched(trace.prev_states),
        _batched(trace.y),
    )


def _check_lengths(*seqs):
    lengths = {np.shape(s)[0] for s in seqs if s is not None}
    if len(lengths) != 1:
        raise ContractError(f"sequence lengths disagree: {sorted(lengths)}")
    (T,) = lengths
    if T < 1:
        raise ContractError("sequences must have at least one step")
    return T


def _loss_difference(clean: PassTrace, noisy: PassTrace, targets, mask):
    tgt = _batched(targets)
    ell = step_losses(_batched(clean.y), tgt, mask)
    ell_noisy = step_losses(_batched(noisy.y), tgt, mask)
    return ell, ell_noisy - ell


# ---------------------------------------------------------------------------
# backpropagation through time


def bptt_gradients(params: RnnParams, trace: PassTrace, inputs, targets, mask=None,
                   with_dD: bool = False) -> UpdateSet:
    """Exact gradient of ``L = (1/T) sum_t ||y_t - y*_t||^2`` by reverse-time accumulation.

    Handles the decorrelated wiring and the leaky state. The gradient with
    respect to ``D`` is only returned when ``with_dD`` is set; training never
    uses it because ``D`` follows its own unsupervised rule.
    """
    T = _check_lengths(trace.alpha, inputs, targets)
    u = _batched(inputs).astype(params.dtype, copy=False)
    alpha, S, S_prev, y = _trace_arrays(trace)
    x = _batched(trace.x)
    tgt = _batched(targets)
    if y.shape != tgt.shape:
        raise ContractError(f"output shape {y.shape} != target shape {tgt.shape}")
    n = y.shape[1]

    err = (2.0 / (T * n)) * (y - tgt)
    if mask is not None:
        m = np.asarray(mask, dtype=err.dtype)
        err = err * (m[:, None, None] if m.ndim == 1 else m[..., None])

    R, B, D = params.R, params.B, params.D
    gain = 1.0 if params.leak is None else 1.0 / params.leak
    keep = 0.0 if params.leak is None else 1.0 - 1.0 / params.leak
    dtanh = 1.0 - np.tanh(alpha) ** 2

    g_out = err @ B
    d_alpha = np.empty_like(alpha)
    gD = np.zeros_like(D) if (with_dD and D is not None) else None
    carry_s = np.zeros_like(g_out[0])
    carry_x = np.zeros_like(g_out[0])
    for t in range(T - 1, -1, -1):
        gs = g_out[t] + carry_s
        gx = gs if D is None else gs @ D
        if keep:
            gx = gx + carry_x
        da = gx * (gain * dtanh[t])
        d_alpha[t] = da
        if gD is not None:
            gD += gs.T @ x[t]
        carry_s = da @ R
        carry_x = keep * gx
    if gD is not None:
        gD += carry_s.T @ _batched(trace.x0[None])[0]

    flat = d_alpha.reshape(-1, d_alpha.shape[-1])
    out = UpdateSet(
        dA=flat.T @ u.reshape(-1, u.shape[-1]),
        dR=flat.T @ S_prev.reshape(-1, S_prev.shape[-1]),
        dB=err.reshape(-1, err.shape[-1]).T @ S.reshape(-1, S.shape[-1]),
        dD=gD,
    )
    return out.check_finite("bptt_gradients")


# ---------------------------------------------------------------------------
# node perturbation


def _node_terms(clean, noisy, noise, inputs, targets, sigma2):
    if noise.kind != NODE:
        raise ContractError(f"node perturbation needs node noise, got {noise.kind}")
    _check_lengths(clean.alpha, noisy.alpha, noise.xi, inputs, targets)
    if not sigma2 > 0:
        raise ConfigurationError(f"sigma2 must be positive, got {sigma2}")
    return _batched(noise.xi), _batched(noise.nu), _batched(inputs)


def np_local_update(clean: PassTrace, noisy: PassTrace, noise: NoiseStream, inputs, targets,
                    sigma2: float, mask=None) -> UpdateSet:
    """Node perturbation with a per-timestep reward ``dl_t = l~_t - l_t``."""
    xi, nu, u = _node_terms(clean, noisy, noise, inputs, targets, sigma2)
    _, dl = _loss_difference(clean, noisy, targets, mask)
    return _np_from_weights(clean, xi, nu, u, dl, sigma2).check_finite("np_local_update")


def np_global_update(clean: PassTrace, noisy: PassTrace, noise: NoiseStream, inputs, targets,
                     sigma2: float, mask=None) -> UpdateSet:
    """Node perturbation driven by the sequence-level loss change ``L~ - L``."""
    xi, nu, u = _node_terms(clean, noisy, noise, inputs, targets, sigma2)
    _, dl = _loss_difference(clean, noisy, targets, mask)
    dL = np.broadcast_to(dl.mean(axis=0), dl.shape)
    return _np_from_weights(clean, xi, nu, u, dL, sigma2).check_finite("np_global_update")


def _np_from_weights(clean, xi, nu, u, w, sigma2):
    _, S, S_prev, _ = _trace_arrays(clean)
    scale = 1.0 / (sigma2 * xi.shape[1])
    return UpdateSet(
        dA=scale * _outer_sum(w, xi, u),
        dR=scale * _outer_sum(w, xi, S_prev),
        dB=scale * _outer_sum(w, nu, S),
    )


# ---------------------------------------------------------------------------
# weight perturbation


def _weight_terms(clean, noisy, noise, inputs, targets, sigma2):
    if noise.kind != WEIGHT:
        raise ContractError(f"weight perturbation needs weight noise, got {noise.kind}")
    _check_lengths(clean.alpha, noisy.alpha, noise.xi, inputs, targets)
    if not sigma2 > 0:
        raise ConfigurationError(f"sigma2 must be positive, got {sigma2}")
    lead = 2 if np.ndim(inputs) == 2 else 3
    if noise.xi.ndim != lead + 1:
        raise ContractError("weight noise batch layout does not match the inputs")


def _wp_from_weights(noise, w, sigma2, batched):
    xi, nu, zeta = noise.xi, noise.nu, noise.zeta
    if not batched:
        xi, nu, zeta = xi[:, None], nu[:, None], zeta[:, None]
    scale = 1.0 / (sigma2 * w.shape[1])
    axes = ([0, 1], [0, 1])
    return UpdateSet(
        dA=scale * np.tensordot(w, xi, axes=axes),
        dR=scale * np.tensordot(w, nu, axes=axes),
        dB=scale * np.tensordot(w, zeta, axes=axes),
    )


def wp_local_update(clean: PassTrace, noisy: PassTrace, noise: NoiseStream, inputs, targets,
                    sigma2: float, mask=None) -> UpdateSet:
    """Weight perturbation with per-timestep reward: ``dW = s^-2 sum_t dl_t noise_t``."""
    _weight_terms(clean, noisy, noise, inputs, targets, sigma2)
    _, dl = _loss_difference(clean, noisy, targets, mask)
    out = _wp_from_weights(noise, dl, sigma2, np.ndim(inputs) == 3)
    return out.check_finite("wp_local_update")


def wp_global_update(clean: PassTrace, noisy: PassTrace, noise: NoiseStream, inputs, targets,
                     sigma2: float, mask=None) -> UpdateSet:
    """Weight perturbation with one sequence-level ``L~ - L`` times the summed noise."""
    _weight_terms(clean, noisy, noise, inputs, targets, sigma2)
    _, dl = _loss_difference(clean, noisy, targets, mask)
    dL = np.broadcast_to(dl.mean(axis=0), dl.shape)
    out = _wp_from_weights(noise, dL, sigma2, np.ndim(inputs) == 3)
    return out.check_finite("wp_global_update")


# ---------------------------------------------------------------------------
# activity-based node perturbation


def anp_update(clean: PassTrace, noisy: PassTrace, inputs, targets, N: int | None = None,
               reward: str = DELTA_LOSS, mask=None, norm: str = PER_LAYER) -> UpdateSet:
    """Activity-based node perturbation through time.

    Uses only the measured pre-activation differences between the two
    passes; the noise itself is never read. ``N`` defaults to the number of
    hidden plus output units. ``reward="raw_loss"`` uses the clean step loss
    instead of the loss difference.

    ``norm="per_layer"`` divides the hidden and output differences by their
    own squared norms. ``norm="joint"`` divides both by the squared norm of
    the concatenated difference, which keeps the hidden and output updates
    on the same scale.
    """
    _check_lengths(clean.alpha, noisy.alpha, inputs, targets)
    alpha, S, S_prev, _ = _trace_arrays(clean)
    u = _batched(inputs)
    d_alpha = _batched(noisy.alpha) - alpha
    d_beta = _batched(noisy.beta) - _batched(clean.beta)
    if N is None:
        N = d_alpha.shape[-1] + d_beta.shape[-1]

    norm_a = np.sum(d_alpha ** 2, axis=-1)
    norm_b = np.sum(d_beta ** 2, axis=-1)
    if np.any(norm_a == 0) or np.any(norm_b == 0):
        raise DegenerateNoiseError("clean and noisy pre-activations coincide at some step")

    ell, dl = _loss_difference(clean, noisy, targets, mask)
    if reward == DELTA_LOSS:
        r = dl
    elif reward == RAW_LOSS:
        r = ell
    else:
        raise ConfigurationError(f"unknown ANP reward {reward!r}")

    if norm == JOINT:
        norm_a = norm_b = norm_a + norm_b
    elif norm != PER_LAYER:
        raise ConfigurationError(f"unknown ANP norm {norm!r}")
    scale = N / d_alpha.shape[1]
    wa = r / norm_a
    wb = r / norm_b
    out = UpdateSet(
        dA=scale * _outer_sum(wa, d_alpha, u),
        dR=scale * _outer_sum(wa, d_alpha, S_prev),
        dB=scale * _outer_sum(wb, d_beta, S),
    )
    return out.check_finite("anp_update")


# ---------------------------------------------------------------------------
# decorrelation


def decorrelation_update(x_star, D) -> np.ndarray:
    """``mean_t (x*_t x*_t^T - diag(x*_t^2)) D``, averaged over every step and sequence."""
    D = np.asarray(D)
    X = np.asarray(x_star)
    if X.shape[-1] != D.shape[0] or D.shape[0] != D.shape[1]:
        raise ContractError(f"states of size {X.shape[-1]} do not fit D of shape {D.shape}")
    X = X.reshape(-1, X.shape[-1])
    C = X.T @ X / X.shape[0]
    np.fill_diagonal(C, 0.0)
    return C @ D


# ---------------------------------------------------------------------------
# RFLO


@dataclass
class RfloState:
    """Fixed random feedback plus the eligibility traces of the last sequence."""

    feedback: np.ndarray
    tau: float = 10.0
    p: np.ndarray | None = None
    q: np.ndarray | None = None

    def __post_init__(self):
        if self.tau < 1:
            raise ConfigurationError(f"RFLO time constant must be >= 1, got {self.tau}")

    @classmethod
    def create(cls, params: RnnParams, tau: float = 10.0, seed=None) -> RfloState:
        _, H, O = params.dims
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(H)
        fb = rng.uniform(-bound, bound, size=(H, O)).astype(params.dtype)
        return cls(feedback=fb, tau=tau)


def rflo_update(params: RnnParams, trace: PassTrace, inputs, targets, state: RfloState,
                mask=None) -> UpdateSet:
    """Random-feedback local online rule with leaky eligibility traces.

    The traces restart from zero with each sequence, matching the zero
    initial state; their final values are left on ``state``.
    """
    if state.tau < 1:
        raise ConfigurationError(f"RFLO time constant must be >= 1, got {state.tau}")
    if params.leak != state.tau:
        raise ContractError(f"trace leak {params.leak} differs from RFLO tau {state.tau}")
    if params.decorrelated:
        raise ContractError("RFLO is defined for the plain (non-decorrelated) network")
    T = _check_lengths(trace.alpha, inputs, targets)
    alpha, S, S_prev, y = _trace_arrays(trace)
    u = _batched(inputs)
    err = y - _batched(targets)
    if mask is not None:
        m = np.asarray(mask, dtype=err.dtype)
        err = err * (m[:, None, None] if m.ndim == 1 else m[..., None])
    n, H = alpha.shape[1], alpha.shape[2]
    I = u.shape[-1]
    gain = 1.0 / state.tau
    keep = 1.0 - gain
    fprime = 1.0 - np.tanh(alpha) ** 2

    p = np.zeros((n, H, H), dtype=alpha.dtype)
    q = np.zeros((n, H, I), dtype=alpha.dtype)
    dA = np.zeros_like(params.A)
    dR = np.zeros_like(params.R)
    for t in range(T):
        post = gain * fprime[t][:, :, None]
        p = keep * p + post * S_prev[t][:, None, :]
        q = keep * q + post * u[t][:, None, :]
        fb = (err[t] @ state.feedback.T)[:, :, None]
        dR += np.sum(fb * p, axis=0)
        dA += np.sum(fb * q, axis=0)
    dB = err.reshape(-1, err.shape[-1]).T @ S.reshape(-1, H)
    state.p, state.q = p, q
    return UpdateSet(dA / n, dR / n, dB / n).check_finite("rflo_update")


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, grads: UpdateSet, eta: float):
    """One Adam step. Returns ``(deltas, new_state)``; apply deltas with unit learning rate.

    Only the forward weights (A, R, B) go through Adam; ``dD`` is ignored.
    """
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    m, v, deltas = {}, {}, {}
    for name in ("dA", "dR", "dB"):
        g = getattr(grads, name)
        m_prev = state.m.get(name)
        v_prev = state.v.get(name)
        if m_prev is None:
            m_prev = np.zeros_like(g)
            v_prev = np.zeros_like(g)
        elif m_prev.shape != g.shape:
            raise ContractError(f"Adam moment shape {m_prev.shape} != gradient {g.shape}")
        m[name] = b1 * m_prev + (1.0 - b1) * g
        v[name] = b2 * v_prev + (1.0 - b2) * g * g
        m_hat = m[name] / (1.0 - b1 ** t)
        v_hat = v[name] / (1.0 - b2 ** t)
        deltas[name] = eta * m_hat / (np.sqrt(v_hat) + state.eps_hat)
    new_state = AdamState(b1, b2, state.eps_hat, t, m, v)
    return UpdateSet(deltas["dA"], deltas["dR"], deltas["dB"]), new_state
