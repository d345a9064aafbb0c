"""Training-free hash-embedding encoders for text, observations and context."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .context import ContextState
from .mapsim import GRID, Observation, SLOT_DIM, validate_cells

D_MODEL = 64
VOCAB = 4096
VISUAL_IN = 2 * SLOT_DIM + 2

TEXT, VISUAL, CONTEXT = "text", "visual", "context"
MODALITIES = (TEXT, VISUAL, CONTEXT)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFF_FFFF_FFFF_FFFF


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


@lru_cache(maxsize=65536)
def token_row(token: str) -> int:
    return fnv1a_64(token.encode("utf-8")) % VOCAB


@dataclass(frozen=True, eq=False)
class FeatureSeq:
    modality: str
    vectors: np.ndarray  # (n, D_MODEL) float64

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        v = np.asarray(self.vectors, dtype=np.float64).reshape(-1, D_MODEL)
        object.__setattr__(self, "vectors", v)

    def __len__(self):
        return self.vectors.shape[0]

    def __eq__(self, other):
        if not isinstance(other, FeatureSeq):
            return NotImplemented
        return self.modality == other.modality and np.array_equal(self.vectors, other.vectors)


@dataclass(frozen=True, eq=False)
class EncoderParams:
    embedding_table: np.ndarray
    visual_projection: np.ndarray
    param_seed: int = 42

    @classmethod
    def from_seed(cls, param_seed: int = 42) -> "EncoderParams":
        """Uniform(-0.1, 0.1) entries from numpy's PCG64 generator."""
        rng = np.random.default_rng(param_seed)
        table = rng.uniform(-0.1, 0.1, size=(VOCAB, D_MODEL))
        proj = rng.uniform(-0.1, 0.1, size=(VISUAL_IN, D_MODEL))
        for a in (table, proj):
            a.setflags(write=False)
        return cls(table, proj, param_seed)


@lru_cache(maxsize=8)
def default_encoder_params(param_seed: int = 42) -> EncoderParams:
    return EncoderParams.from_seed(param_seed)


def tokenize(text: str) -> list[str]:
    return text.lower().split()


def encode_text(instruction: str, params: EncoderParams, modality: str = TEXT) -> FeatureSeq:
    rows = [token_row(t) for t in tokenize(instruction)]
    return FeatureSeq(modality, params.embedding_table[rows])


def encode_visual(obs: Observation, params: EncoderParams) -> FeatureSeq:
    """One vector per occupied cell (row-major) plus a trailing global mean vector."""
    cells = obs.cells
    validate_cells(cells)
    occupied = np.argwhere(cells.any(axis=(-1, -2)))
    feats = np.empty((len(occupied), VISUAL_IN))
    feats[:, :2 * SLOT_DIM] = cells[occupied[:, 0], occupied[:, 1]].reshape(-1, 2 * SLOT_DIM)
    feats[:, -2:] = occupied / (GRID - 1)
    vecs = feats @ params.visual_projection
    pooled = vecs.mean(axis=0) if len(vecs) else np.zeros(D_MODEL)
    return FeatureSeq(VISUAL, np.vstack([vecs, pooled[None, :]]))


def encode_context(ctx: ContextState, params: EncoderParams) -> FeatureSeq:
    return encode_text(ctx.canonical_text(), params, modality=CONTEXT)
