"""Synthetic embedding world that stands in for frozen image and text encoders.

Real encoders map images and class names into a shared unit sphere; here
each class is a random unit direction, images are noisy draws around it,
and the class-name embedding is a separately perturbed copy of the same
direction.  Novel classes live between random pairs of base classes so
they are related to, but distinct from, anything seen in training.

A small frozen two-layer head turns prompt context vectors into an
additive correction on the class-name embedding.  With zero context the
head contributes nothing, so the text feature degenerates to the raw
class embedding; that identity anchors several tests.
"""

from dataclasses import dataclass

import numpy as np

from fedprompt import autograd as ag
from fedprompt.autograd import DiffNode
from fedprompt.errors import ConfigError, DimensionError
from fedprompt.seeding import rng_for

UNIT_NORM_ATOL = 1e-9
LOAD_NORM_ATOL = 1e-6


@dataclass(frozen=True)
class WorldConfig:
    # default noise levels calibrated so the zero-context baseline sits
    # around 50% on base classes with ample trained headroom above it
    d: int = 32
    n_base: int = 60
    n_new: int = 20
    sigma_img: float = 0.25
    sigma_text: float = 0.2
    interp_lo: float = 0.3
    interp_hi: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError(f"d must be positive, got {self.d}")
        if self.n_base < 2:
            raise ConfigError(f"n_base must be at least 2, got {self.n_base}")
        if self.n_new < 0:
            raise ConfigError(f"n_new must be non-negative, got {self.n_new}")
        if self.sigma_img < 0 or self.sigma_text < 0:
            raise ConfigError("noise scales must be non-negative")
        if not (0.0 <= self.interp_lo <= self.interp_hi <= 1.0):
            raise ConfigError(
                f"interpolation range [{self.interp_lo}, {self.interp_hi}] "
                "must be ordered and inside [0, 1]"
            )

    @property
    def n_classes(self) -> int:
        return self.n_base + self.n_new


@dataclass(frozen=True)
class FrozenTextHead:
    """Frozen two-layer correction head applied to pooled context."""

    W1: np.ndarray
    W2: np.ndarray


@dataclass(frozen=True)
class SyntheticWorld:
    cfg: WorldConfig
    base_centers: np.ndarray  # [n_base, d], unit rows
    new_centers: np.ndarray  # [n_new, d], unit rows
    class_embeddings: np.ndarray  # [n_base + n_new, d], unit rows
    head: FrozenTextHead

    @property
    def base_ids(self) -> range:
        return range(self.cfg.n_base)

    @property
    def new_ids(self) -> range:
        return range(self.cfg.n_base, self.cfg.n_classes)

    def center(self, class_id: int) -> np.ndarray:
        n_base = self.cfg.n_base
        if 0 <= class_id < n_base:
            return self.base_centers[class_id]
        if class_id < self.cfg.n_classes:
            return self.new_centers[class_id - n_base]
        raise IndexError(f"class id {class_id} out of range")

    def class_embedding(self, class_id: int) -> np.ndarray:
        """Class-name embedding as a [1, d] row."""
        if not 0 <= class_id < self.cfg.n_classes:
            raise IndexError(f"class id {class_id} out of range")
        return self.class_embeddings[class_id : class_id + 1]


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.sqrt((x * x).sum(axis=1, keepdims=True))
    return x / np.maximum(norms, 1e-8)


def build_world(cfg: WorldConfig) -> SyntheticWorld:
    """Materialize the world for cfg.seed.

    Draw order is fixed and part of the format: base centers, then per
    novel class a parent pair and mixing weight, then every class-name
    embedding in class id order, then the two head matrices.  Zero noise
    scales skip both the draw and the renormalization, so the embeddings
    reproduce the centers bitwise.
    """
    rng = rng_for(cfg.seed, "world")
    base = _unit_rows(rng.standard_normal((cfg.n_base, cfg.d)))

    new_rows = []
    for _ in range(cfg.n_new):
        a, b = rng.choice(cfg.n_base, size=2, replace=False)
        lam = rng.uniform(cfg.interp_lo, cfg.interp_hi)
        new_rows.append(lam * base[a] + (1.0 - lam) * base[b])
    new = _unit_rows(np.stack(new_rows)) if new_rows else np.empty((0, cfg.d))

    centers = np.concatenate([base, new], axis=0)
    if cfg.sigma_text == 0.0:
        emb = centers.copy()
    else:
        emb = np.empty_like(centers)
        for c in range(cfg.n_classes):
            noisy = centers[c] + cfg.sigma_text * rng.standard_normal(cfg.d)
            emb[c] = _unit_rows(noisy[None, :])[0]

    head = FrozenTextHead(
        W1=rng.standard_normal((cfg.d, cfg.d)) / np.sqrt(cfg.d),
        W2=rng.standard_normal((cfg.d, cfg.d)) / np.sqrt(cfg.d),
    )
    return SyntheticWorld(cfg, base, new, emb, head)


def sample_image(world: SyntheticWorld, class_id: int, rng: np.random.Generator) -> np.ndarray:
    """One unit-norm image embedding for the given class."""
    center = world.center(class_id)
    if world.cfg.sigma_img == 0.0:
        return center.copy()
    noisy = center + world.cfg.sigma_img * rng.standard_normal(world.cfg.d)
    return _unit_rows(noisy[None, :])[0]


def text_feature(head: FrozenTextHead, class_emb: np.ndarray, ctx: DiffNode) -> DiffNode:
    """Classifier weight for one class given its prompt context.

    Pools the context vectors, pushes them through the frozen head, adds
    the result to the class-name embedding, and renormalizes.  Returns a
    [1, d] graph node so gradients flow back into the context.
    """
    d = class_emb.shape[-1]
    if ctx.shape[-1] != d:
        raise DimensionError(f"context width {ctx.shape} does not match embedding ({d})")
    pooled = ag.mean_rows(ctx)
    corr = ag.matmul(ag.gelu(ag.matmul(pooled, ag.constant(head.W1))), ag.constant(head.W2))
    return ag.l2_normalize(ag.add(ag.constant(class_emb.reshape(1, d)), corr))


def load_embeddings(arrays: dict[str, np.ndarray], cfg: WorldConfig) -> SyntheticWorld:
    """Rebuild a world from stored tensors.

    Expects the five tensors written by the world container.  Center and
    embedding rows are renormalized if any has drifted from unit norm by
    more than 1e-6; exactly stored rows pass through bitwise.
    """
    required = {
        "base_centers": (cfg.n_base, cfg.d),
        "new_centers": (cfg.n_new, cfg.d),
        "class_embeddings": (cfg.n_classes, cfg.d),
        "head_W1": (cfg.d, cfg.d),
        "head_W2": (cfg.d, cfg.d),
    }
    got = {}
    for name, shape in required.items():
        if name not in arrays:
            raise ConfigError(f"embeddings are missing tensor {name!r}")
        arr = np.asarray(arrays[name], dtype=np.float64)
        if arr.shape != shape:
            raise DimensionError(f"tensor {name!r} has shape {arr.shape}, expected {shape}")
        got[name] = arr

    def maybe_renorm(x):
        if x.size == 0:
            return x
        norms = np.sqrt((x * x).sum(axis=1))
        return x if np.allclose(norms, 1.0, rtol=0, atol=LOAD_NORM_ATOL) else _unit_rows(x)

    return SyntheticWorld(
        cfg,
        maybe_renorm(got["base_centers"]),
        maybe_renorm(got["new_centers"]),
        maybe_renorm(got["class_embeddings"]),
        FrozenTextHead(got["head_W1"], got["head_W2"]),
    )


def world_arrays(world: SyntheticWorld) -> dict[str, np.ndarray]:
    """Tensors to persist, inverse of load_embeddings."""
    return {
        "base_centers": world.base_centers,
        "new_centers": world.new_centers,
        "class_embeddings": world.class_embeddings,
        "head_W1": world.head.W1,
        "head_W2": world.head.W2,
    }
