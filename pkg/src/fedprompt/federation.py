"""Federated optimization of the prompt translator.

Each round, participating clients copy the current global parameters,
run a few epochs of local SGD on their own class subset, and send the
resulting parameters back; the server replaces the global model with the
uniform coordinatewise mean.  Clients hold disjoint classes, so locally
the task is a small closed-set classification problem over each client's
own label space.

Everything here is deterministic: client selection, batch shuffling and
the aggregation order are all fixed functions of the master seed, and
aggregation always sums in ascending client id order so the result does
not depend on arrival order.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from fedprompt import autograd as ag
from fedprompt.autograd import ParameterSet
from fedprompt.errors import ConfigError, ContractError, SchemaError
from fedprompt.partition import FewShotSet
from fedprompt.seeding import rng_for
from fedprompt.translator import TranslatorConfig, translate_one
from fedprompt.world import SyntheticWorld, text_feature


@dataclass(frozen=True)
class OptimizerConfig:
    # temperature only shapes the training loss; accuracy is argmax and
    # does not see it.  The default keeps the softmax soft enough that
    # few-shot fitting pulls class features toward their sample means
    # instead of stalling at the first separating margin.
    lr0: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-5
    batch_size: int = 32
    temperature: float = 0.5

    def __post_init__(self):
        if self.lr0 < 0:
            raise ConfigError(f"lr0 must be non-negative, got {self.lr0}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")


def cosine_lr(lr0: float, t: int, total_rounds: int) -> float:
    """Cosine-annealed learning rate for round t of total_rounds.

    Round indices are zero based; t equal to total_rounds is allowed and
    gives exactly zero, anything beyond is a contract error.
    """
    if total_rounds < 1:
        raise ConfigError(f"total_rounds must be positive, got {total_rounds}")
    if not 0 <= t <= total_rounds:
        raise ContractError(f"round index {t} outside [0, {total_rounds}]")
    return lr0 * 0.5 * (1.0 + np.cos(np.pi * t / total_rounds))


def sgd_step(
    params: ParameterSet, velocity: dict[str, np.ndarray], lr: float, cfg: OptimizerConfig
) -> None:
    """One in-place SGD step with momentum and coupled weight decay.

    The decay term joins the gradient before the momentum update:
    v <- momentum * v + (grad + weight_decay * theta), theta <- theta - lr * v.
    Raises if any parameter is missing its gradient.
    """
    for name, p in params.items():
        if p.grad is None:
            raise ContractError(f"parameter {name!r} has no gradient; run backward first")
        g = p.grad.data + cfg.weight_decay * p.value.data
        velocity[name] = cfg.momentum * velocity[name] + g
        p.set_value(p.value.data - lr * velocity[name])


@dataclass
class ClientUpdate:
    client_id: int
    params: ParameterSet
    n_samples: int
    mean_loss: float


def class_logits(
    params: ParameterSet,
    trans_cfg: TranslatorConfig,
    world: SyntheticWorld,
    class_ids,
    images: np.ndarray,
    temperature: float,
) -> ag.DiffNode:
    """Cosine-similarity logits of unit images against per-class features."""
    feats = []
    for class_id in class_ids:
        emb = world.class_embedding(class_id)
        # the class name is a single embedding row; longer kv windows tile it
        kv = np.repeat(emb, trans_cfg.kv_len, axis=0)
        ctx = translate_one(params, trans_cfg, ag.constant(kv))
        feats.append(text_feature(world.head, emb, ctx))
    feat_matrix = ag.concat_rows(feats)
    return ag.scale(ag.matmul(ag.constant(images), ag.transpose(feat_matrix)), 1.0 / temperature)


def local_update(
    global_params: ParameterSet,
    world: SyntheticWorld,
    dataset: FewShotSet,
    opt_cfg: OptimizerConfig,
    trans_cfg: TranslatorConfig,
    epochs: int,
    lr: float,
    rng: np.random.Generator,
    client_id: int,
) -> ClientUpdate:
    """Local epochs of SGD starting from a copy of the global parameters.

    The velocity starts at zero each call, batches are drawn from a
    seeded shuffle per epoch, and global_params is never touched.
    Returns the updated copy together with the mean per-batch loss.
    """
    if epochs < 1:
        raise ConfigError(f"epochs must be positive, got {epochs}")
    params = global_params.copy()
    velocity = {name: np.zeros(p.shape) for name, p in params.items()}
    losses = []
    for _ in range(epochs):
        order = rng.permutation(len(dataset))
        for start in range(0, len(order), opt_cfg.batch_size):
            batch = order[start : start + opt_cfg.batch_size]
            logits = class_logits(
                params,
                trans_cfg,
                world,
                dataset.class_ids,
                dataset.images[batch],
                opt_cfg.temperature,
            )
            loss = ag.cross_entropy(logits, dataset.labels[batch])
            ag.backward(loss)
            sgd_step(params, velocity, lr, opt_cfg)
            losses.append(loss.value.item())
    return ClientUpdate(client_id, params, len(dataset), float(np.mean(losses)))


def select_clients(n_clients: int, fraction: float, seed: int, t: int) -> list[int]:
    """Ids participating in round t, sorted ascending.

    At least one client always participates; the count is
    max(1, round(fraction * n_clients)).
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"fraction must be in (0, 1], got {fraction}")
    if n_clients < 1:
        raise ConfigError(f"n_clients must be positive, got {n_clients}")
    count = max(1, round(fraction * n_clients))
    picked = rng_for(seed, "select", t).choice(n_clients, size=count, replace=False)
    return sorted(int(c) for c in picked)


def fedavg(updates: list[ClientUpdate]) -> ParameterSet:
    """Uniform coordinatewise mean of client parameters.

    Updates are re-sorted by client id before accumulation, so the
    result never depends on arrival order.  The mean is computed
    incrementally, m += (x_i - m) / i; unlike a sum-then-divide this
    keeps a crucial identity exact in floating point: aggregating any
    number of bitwise-identical updates returns those values unchanged,
    because every increment is exactly zero.
    """
    if not updates:
        raise ContractError("fedavg needs at least one update")
    ordered = sorted(updates, key=lambda u: u.client_id)
    ids = [u.client_id for u in ordered]
    if len(set(ids)) != len(ids):
        raise ContractError(f"duplicate client ids in aggregation: {ids}")
    schema_owner = ordered[0].params
    for u in ordered[1:]:
        try:
            schema_owner.check_same_schema(u.params)
        except SchemaError as err:
            raise SchemaError(
                f"clients {ordered[0].client_id} and {u.client_id} disagree: {err}"
            ) from None
    mean = ordered[0].params.flatten().numpy()
    for i, u in enumerate(ordered[1:], start=2):
        mean += (u.params.flatten().data - mean) / i
    return schema_owner.unflatten(ag.Tensor(mean))


@dataclass
class RoundLog:
    """What happened in one federated round."""

    round: int
    lr: float
    selected: list[int]
    client_loss: dict[int, float] = field(default_factory=dict)

    def to_json_line(self) -> str:
        payload = {
            "round": self.round,
            "lr": self.lr,
            "selected": self.selected,
            "client_loss": {str(k): v for k, v in self.client_loss.items()},
        }
        return json.dumps(payload, sort_keys=True)

    @staticmethod
    def from_json_line(line: str) -> "RoundLog":
        payload = json.loads(line)
        return RoundLog(
            round=payload["round"],
            lr=payload["lr"],
            selected=list(payload["selected"]),
            client_loss={int(k): v for k, v in payload["client_loss"].items()},
        )


def run_training(
    world: SyntheticWorld,
    datasets: dict[int, FewShotSet],
    opt_cfg: OptimizerConfig,
    trans_cfg: TranslatorConfig,
    init_params: ParameterSet,
    total_rounds: int,
    epochs_per_round: int,
    fraction: float,
    seed: int,
    on_round=None,
) -> tuple[ParameterSet, list[RoundLog]]:
    """Full federated run; returns final parameters and per-round logs.

    Per round t: the learning rate is cosine_lr(lr0, t, total_rounds),
    participants come from the (seed, "select", t) stream, and each
    participant's batch shuffling uses the (seed, "local", t, client)
    stream.  A manual loop with the same derivations reproduces the run
    bitwise.  on_round, if given, is called with (aggregated params,
    RoundLog) after each aggregation; it must not mutate the params.
    """
    if total_rounds < 1:
        raise ConfigError(f"total_rounds must be positive, got {total_rounds}")
    n_clients = len(datasets)
    if sorted(datasets) != list(range(n_clients)):
        raise ConfigError("datasets must be keyed by contiguous client ids starting at 0")
    params = init_params.copy()
    logs = []
    for t in range(total_rounds):
        lr = cosine_lr(opt_cfg.lr0, t, total_rounds)
        selected = select_clients(n_clients, fraction, seed, t)
        updates = []
        for client_id in selected:
            update = local_update(
                params,
                world,
                datasets[client_id],
                opt_cfg,
                trans_cfg,
                epochs_per_round,
                lr,
                rng_for(seed, "local", t, client_id),
                client_id,
            )
            updates.append(update)
        params = fedavg(updates)
        log = RoundLog(t, lr, selected, {u.client_id: u.mean_loss for u in updates})
        logs.append(log)
        if on_round is not None:
            on_round(params, log)
    return params, logs
