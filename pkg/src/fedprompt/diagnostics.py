"""Built-in correctness probes behind the gradcheck and selftest commands.

These run the same checks the test suite pins down, but packaged so a
deployed install can prove itself healthy without pytest present.
"""

import os
import tempfile
import time
from dataclasses import replace
from decimal import Decimal

import numpy as np

from fedprompt import autograd as ag
from fedprompt.autograd import ParameterSet, grad_check
from fedprompt.container import load_checkpoint, save_checkpoint
from fedprompt.evaluation import class_features
from fedprompt.federation import ClientUpdate, class_logits, fedavg
from fedprompt.reporting import (
    compare_to_reference,
    fixture_results,
    fmt2,
    round2,
    summarize,
)
from fedprompt.seeding import rng_for
from fedprompt.translator import TranslatorConfig, init_translator_params, translate_one
from fedprompt.world import FrozenTextHead, WorldConfig, build_world

GRADCHECK_TOLERANCE = 1e-6


def randomized_translator_params(cfg: TranslatorConfig, seed: int, std: float = 0.05) -> ParameterSet:
    """Init params with the zero-started tensors filled in.

    W_o and ffn_out are zero at init, which silences the gradient paths
    running through them; Gaussian values turn every path back on so a
    gradient check exercises the whole block.
    """
    params = init_translator_params(cfg, seed)
    rng = rng_for(seed, "gradcheck")
    for name in ("W_o", "ffn_out"):
        p = params[name]
        p.set_value(rng.normal(0.0, std, p.shape))
    return params


# Probe instance for the composite check, frozen after a conditioning
# scan.  Central differences at h=1e-5 carry an absolute noise floor
# around 1e-11, so the instance must keep every live gradient
# coordinate well above ~1e-5 or the comparison measures roundoff, not
# correctness.  The seed maximizes the smallest nonzero gradient, the
# frozen head is doubled so prompt-path gradients stay strong, and the
# temperature is 1.0 because the production value saturates softmax
# and buries the differences in cancellation.  A wrong gradient rule
# still fails by orders of magnitude on any instance.
GRADCHECK_SEED = 703
GRADCHECK_HEAD_SCALE = 2.0
GRADCHECK_RAND_STD = 1.0


def composite_grad_check(h: float = 1e-5) -> tuple[float, int, float]:
    """Gradient check of the full training loss on a small instance.

    Covers the whole composite: context generation, the frozen text
    head, cosine scoring, and cross-entropy, at width 16 with 4 context
    vectors and 4 heads over a 2-image batch.  With a single key row
    the attention weights are constant, so the query/key projections
    and the first layer norm legitimately carry exact zero gradients;
    wider-key coverage lives in the unit tests.

    Returns (max relative error over every scalar, scalar count,
    elapsed seconds).
    """
    seed = GRADCHECK_SEED
    # noise levels pinned so recalibrating the production defaults
    # cannot shift the probe instance the seed scan conditioned
    wcfg = WorldConfig(d=16, n_base=2, n_new=1, sigma_img=0.1, sigma_text=0.05, seed=seed)
    world = build_world(wcfg)
    world = replace(
        world,
        head=FrozenTextHead(
            GRADCHECK_HEAD_SCALE * world.head.W1, GRADCHECK_HEAD_SCALE * world.head.W2
        ),
    )
    tcfg = TranslatorConfig(d_model=16, n_ctx=4, n_heads=4, ffn_mult=1, kv_len=1)
    params = randomized_translator_params(tcfg, seed, std=GRADCHECK_RAND_STD)

    rng = rng_for(seed, "gradcheck", "batch")
    images = np.stack(
        [
            world.center(0) + 0.1 * rng.normal(size=16),
            world.center(1) + 0.1 * rng.normal(size=16),
        ]
    )
    images /= np.linalg.norm(images, axis=1, keepdims=True)
    labels = np.array([0, 1])

    def loss_fn():
        logits = class_logits(params, tcfg, world, list(world.base_ids), images, 1.0)
        return ag.cross_entropy(logits, labels)

    start = time.perf_counter()
    err = grad_check(loss_fn, params, h=h)
    elapsed = time.perf_counter() - start
    return err, params.n_scalars(), elapsed


class CheckResult:
    def __init__(self, name: str, passed: bool, detail: str):
        self.name = name
        self.passed = passed
        self.detail = detail


def _check_fixture_tables() -> CheckResult:
    summary = summarize(fixture_results())
    table = compare_to_reference(summary)
    got = (
        fmt2(summary.base_avg),
        fmt2(summary.new_avg),
        fmt2(summary.gap_avg, signed=True),
        fmt2(table.overall["delta_base"], signed=True),
        fmt2(table.overall["delta_new"], signed=True),
    )
    want = ("74.58", "76.00", "+1.43", "+0.11", "-0.23")
    return CheckResult(
        "reference-tables", got == want, f"averages and deltas {' '.join(got)}"
    )


def _check_zero_context_identity() -> CheckResult:
    wcfg = WorldConfig(seed=5)
    world = build_world(wcfg)
    tcfg = TranslatorConfig(d_model=wcfg.d)
    ids = list(world.base_ids) + list(world.new_ids)
    feats = class_features(None, world, tcfg, ids)
    diff = float(np.abs(feats - world.class_embeddings).max())
    return CheckResult("zero-context-identity", diff <= 1e-12, f"max |diff| = {diff:.2e}")


def _check_identical_keys() -> CheckResult:
    tcfg1 = TranslatorConfig(d_model=16, n_ctx=4, n_heads=4, ffn_mult=2, kv_len=1)
    tcfg3 = TranslatorConfig(d_model=16, n_ctx=4, n_heads=4, ffn_mult=2, kv_len=3)
    params = randomized_translator_params(tcfg1, seed=7)
    row = rng_for(7, "selftest", "kv").normal(size=(1, 16))
    one = translate_one(params, tcfg1, ag.constant(row)).value.data
    tiled = translate_one(params, tcfg3, ag.constant(np.repeat(row, 3, axis=0))).value.data
    diff = float(np.abs(one - tiled).max())
    return CheckResult("identical-keys", diff <= 1e-12, f"max |diff| = {diff:.2e}")


def _check_fedavg_identity() -> CheckResult:
    tcfg = TranslatorConfig(d_model=16, n_ctx=4, n_heads=4, ffn_mult=2)
    params = randomized_translator_params(tcfg, seed=3)
    updates = [ClientUpdate(i, params.copy(), 8, 0.0) for i in range(3)]
    merged = fedavg(updates)
    same = np.array_equal(merged.flatten().data, params.flatten().data)
    return CheckResult("fedavg-identity", same, "3 identical updates, bitwise")


def _check_container_round_trip() -> CheckResult:
    tcfg = TranslatorConfig(d_model=16, n_ctx=4, n_heads=4, ffn_mult=2)
    params = randomized_translator_params(tcfg, seed=9)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "probe.ftpg")
        save_checkpoint(path, params, "probe=1\n")
        loaded, echo = load_checkpoint(path)
    same = (
        np.array_equal(loaded.flatten().data, params.flatten().data) and echo == "probe=1\n"
    )
    return CheckResult("container-round-trip", same, "checkpoint save/load, bitwise")


def _check_rounding_convention() -> CheckResult:
    up = round2(Decimal("1.425")) == Decimal("1.43")
    down = round2(Decimal("-0.335")) == Decimal("-0.34")
    return CheckResult("half-up-rounding", up and down, "ties away from zero at 2 decimals")


def run_selftest() -> list[CheckResult]:
    return [
        _check_fixture_tables(),
        _check_rounding_convention(),
        _check_zero_context_identity(),
        _check_identical_keys(),
        _check_fedavg_identity(),
        _check_container_round_trip(),
    ]
