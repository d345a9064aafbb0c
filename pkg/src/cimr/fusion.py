"""Joint multi-head attention over text, visual and context tokens.

Every token attends over the concatenation of all three modalities, so each
modality both queries and is queried by the others. A learned tag vector per
modality is added to its tokens first; the output is ``X + attn(X) @ W_O``.
Forward and exact backward passes are written out in numpy, and
:func:`check_gradients` verifies the backward pass against central differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .encoders import CONTEXT, D_MODEL, MODALITIES, TEXT, VISUAL, FeatureSeq
from .errors import DimMismatch, EmptyFusionInput

HEADS = 4

PARAM_NAMES = ("W_Q", "W_K", "W_V", "W_O", "modality_tags")


@dataclass(frozen=True, eq=False)
class AttentionParams:
    W_Q: np.ndarray
    W_K: np.ndarray
    W_V: np.ndarray
    W_O: np.ndarray
    modality_tags: np.ndarray  # (3, d), rows ordered text, visual, context
    heads: int = HEADS
    param_seed: int = 0

    def __post_init__(self):
        d = self.W_Q.shape[0]
        for name in ("W_Q", "W_K", "W_V", "W_O"):
            if getattr(self, name).shape != (d, d):
                raise DimMismatch(f"{name} must be {d}x{d}")
        if self.modality_tags.shape != (3, d):
            raise DimMismatch(f"modality_tags must be 3x{d}")
        if d % self.heads:
            raise DimMismatch(f"d={d} is not divisible by {self.heads} heads")

    @property
    def dim(self) -> int:
        return self.W_Q.shape[0]

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    @classmethod
    def from_seed(cls, param_seed: int = 0, dim: int = D_MODEL, heads: int = HEADS):
        rng = np.random.default_rng(param_seed)
        bound = 1.0 / np.sqrt(dim)
        mats = [rng.uniform(-bound, bound, size=(dim, dim)) for _ in range(4)]
        tags = rng.uniform(-bound, bound, size=(3, dim))
        return cls(*mats, tags, heads=heads, param_seed=param_seed)

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def with_arrays(self, **arrays) -> "AttentionParams":
        merged = {**self.as_dict(), **arrays}
        return AttentionParams(**merged, heads=self.heads, param_seed=self.param_seed)


@lru_cache(maxsize=8)
def default_attention_params(param_seed: int = 0) -> AttentionParams:
    return AttentionParams.from_seed(param_seed)


@dataclass(frozen=True, eq=False)
class FusedFeatures:
    vectors: np.ndarray  # (n, d)
    pooled: np.ndarray  # (d,)
    attention: np.ndarray  # (heads, n, n), rows sum to 1


@dataclass(frozen=True, eq=False)
class _Cache:
    X: np.ndarray
    tag_index: np.ndarray
    Q: np.ndarray  # (H, n, dh)
    K: np.ndarray
    V: np.ndarray
    A: np.ndarray  # (H, n, n)
    O: np.ndarray  # (n, d), heads concatenated


def _as_array(seq) -> np.ndarray:
    return seq.vectors if isinstance(seq, FeatureSeq) else np.asarray(seq, dtype=np.float64)


def _stack(f_t, f_v, f_c, d):
    blocks, tags = [], []
    for k, seq in enumerate((f_t, f_v, f_c)):
        a = _as_array(seq)
        if a.size == 0:
            a = a.reshape(0, d)
        if a.ndim != 2 or a.shape[1] != d:
            raise DimMismatch(f"{MODALITIES[k]} features have shape {a.shape}, expected (n, {d})")
        blocks.append(a)
        tags.append(np.full(a.shape[0], k))
    X0 = np.concatenate(blocks, axis=0)
    if X0.shape[0] == 0:
        raise EmptyFusionInput("fusion needs at least one token")
    return X0, np.concatenate(tags)


def softmax(S: np.ndarray) -> np.ndarray:
    S = S - S.max(axis=-1, keepdims=True)
    E = np.exp(S)
    return E / E.sum(axis=-1, keepdims=True)


def _split(M, heads):
    n, d = M.shape
    return M.reshape(n, heads, d // heads).transpose(1, 0, 2)


def _merge(M):
    h, n, dh = M.shape
    return M.transpose(1, 0, 2).reshape(n, h * dh)


def _forward(f_t, f_v, f_c, params: AttentionParams):
    X0, tag_index = _stack(f_t, f_v, f_c, params.dim)
    X = X0 + params.modality_tags[tag_index]
    H = params.heads
    Q, K, V = (_split(X @ W, H) for W in (params.W_Q, params.W_K, params.W_V))
    A = softmax(Q @ K.transpose(0, 2, 1) / np.sqrt(params.head_dim))
    O = _merge(A @ V)
    Y = X + O @ params.W_O
    return Y, _Cache(X, tag_index, Q, K, V, A, O)


def fuse(f_t, f_v, f_c, params: AttentionParams) -> FusedFeatures:
    """Fuse the three modality sequences; output order follows input order."""
    Y, cache = _forward(f_t, f_v, f_c, params)
    return FusedFeatures(Y, Y.mean(axis=0), cache.A)


def fuse_backward(f_t, f_v, f_c, params: AttentionParams, grad_vectors=None, grad_pooled=None):
    """Gradients of ``sum(grad_vectors * Y) + grad_pooled @ pooled``.

    Returns a dict with keys ``f_t``, ``f_v``, ``f_c`` and every name in
    :data:`PARAM_NAMES`.
    """
    Y, c = _forward(f_t, f_v, f_c, params)
    n, d = Y.shape
    G = np.zeros_like(Y)
    if grad_vectors is not None:
        grad_vectors = np.asarray(grad_vectors, dtype=np.float64)
        if grad_vectors.shape != Y.shape:
            raise DimMismatch(f"upstream gradient {grad_vectors.shape} vs output {Y.shape}")
        G = G + grad_vectors
    if grad_pooled is not None:
        grad_pooled = np.asarray(grad_pooled, dtype=np.float64)
        if grad_pooled.shape != (d,):
            raise DimMismatch(f"pooled gradient {grad_pooled.shape} vs ({d},)")
        G = G + grad_pooled[None, :] / n

    H, dh = params.heads, params.head_dim
    dW_O = c.O.T @ G
    dO = _split(G @ params.W_O.T, H)
    dA = dO @ c.V.transpose(0, 2, 1)
    dV = c.A.transpose(0, 2, 1) @ dO
    dS = c.A * (dA - (dA * c.A).sum(axis=-1, keepdims=True)) / np.sqrt(dh)
    dQ = _merge(dS @ c.K)
    dK = _merge(dS.transpose(0, 2, 1) @ c.Q)
    dV = _merge(dV)

    dX = G + dQ @ params.W_Q.T + dK @ params.W_K.T + dV @ params.W_V.T
    dtags = np.zeros_like(params.modality_tags)
    np.add.at(dtags, c.tag_index, dX)

    out = {
        "W_Q": c.X.T @ dQ,
        "W_K": c.X.T @ dK,
        "W_V": c.X.T @ dV,
        "W_O": dW_O,
        "modality_tags": dtags,
    }
    for k, key in enumerate(("f_t", "f_v", "f_c")):
        out[key] = dX[c.tag_index == k]
    return out


# --------------------------------------------------------------------------
# Finite-difference verification


def _objective(inputs, params, G, Gp):
    Y, _ = _forward(inputs["f_t"], inputs["f_v"], inputs["f_c"], params)
    return float(np.sum(G * Y) + Gp @ Y.mean(axis=0))


def _perturbed(inputs, params, name, delta):
    if name in inputs:
        new = dict(inputs)
        new[name] = inputs[name] + delta
        return new, params
    return inputs, params.with_arrays(**{name: getattr(params, name) + delta})


def _rel(a, b) -> float:
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(a - b)) / scale)


def relative_errors(inputs, params, G, Gp, rng, step=1e-5, n_coords=8, n_dirs=3) -> dict:
    """Per-tensor relative error between analytic and central-difference gradients.

    For each tensor a sample of coordinates and a few random directions are
    checked; the error is the max-norm of the difference over the max-norm of
    the two gradient samples.
    """
    grads = fuse_backward(inputs["f_t"], inputs["f_v"], inputs["f_c"], params, G, Gp)
    errs = {}
    for name, grad in grads.items():
        if grad.size == 0:
            continue
        base = inputs[name] if name in inputs else getattr(params, name)
        analytic, numeric = [], []
        coords = rng.choice(base.size, size=min(n_coords, base.size), replace=False)
        directions = []
        for i in coords:
            e = np.zeros(base.size)
            e[i] = 1.0
            directions.append(e.reshape(base.shape))
        directions += [rng.standard_normal(base.shape) for _ in range(n_dirs)]
        for u in directions:
            plus = _objective(*_perturbed(inputs, params, name, step * u), G, Gp)
            minus = _objective(*_perturbed(inputs, params, name, -step * u), G, Gp)
            numeric.append((plus - minus) / (2 * step))
            analytic.append(float(np.sum(grad * u)))
        errs[name] = _rel(np.array(analytic), np.array(numeric))
    return errs


def random_instance(seed: int, token_counts, dim: int = D_MODEL):
    rng = np.random.default_rng(seed)
    params = AttentionParams.from_seed(int(rng.integers(2**32)), dim=dim)
    inputs = {key: rng.uniform(-1.0, 1.0, size=(n, dim))
              for key, n in zip(("f_t", "f_v", "f_c"), token_counts)}
    n = sum(token_counts)
    G = rng.standard_normal((n, dim))
    Gp = rng.standard_normal(dim)
    return inputs, params, G, Gp, rng


def check_gradients(seed: int, token_counts=(1, 1, 1), step: float = 1e-5) -> float:
    """Max relative error of :func:`fuse_backward` vs central differences."""
    if sum(token_counts) < 1:
        raise EmptyFusionInput("token_counts must total at least 1")
    inputs, params, G, Gp, rng = random_instance(seed, token_counts)
    return max(relative_errors(inputs, params, G, Gp, rng, step=step).values())


def gradcheck_suite(seed: int = 0, instances: int = 100, max_tokens: int = 6) -> list[tuple]:
    """Run ``instances`` random checks with 1..max_tokens tokens split over modalities.

    Returns ``(instance_seed, token_counts, max_rel_error)`` per instance.
    """
    rng = np.random.default_rng(seed)
    results = []
    for _ in range(instances):
        total = int(rng.integers(1, max_tokens + 1))
        counts = tuple(int(x) for x in rng.multinomial(total, [1 / 3] * 3))
        inst_seed = int(rng.integers(2**32))
        results.append((inst_seed, counts, check_gradients(inst_seed, counts)))
    return results


__all__ = [
    "AttentionParams", "FusedFeatures", "fuse", "fuse_backward", "check_gradients",
    "gradcheck_suite", "default_attention_params", "softmax", "TEXT", "VISUAL", "CONTEXT",
]
