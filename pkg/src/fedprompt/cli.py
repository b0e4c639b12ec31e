"""Command line front end.

Six subcommands cover the full experiment cycle: make-world samples and
stores a synthetic embedding world, train runs the federated loop and
checkpoints every round, eval scores a checkpoint on base and new
classes, report writes the reference comparison tables and charts, and
gradcheck/selftest are built-in health probes.

Exit codes: 0 on success, 1 for configuration and contract errors, 2
for I/O and file format errors.
"""

import argparse
import os
import sys

import numpy as np

from fedprompt.config import (
    KEYS,
    apply_overrides,
    build_config,
    canonical_text,
    extract_round,
    load_config,
    parse_config_text,
    with_round_marker,
)
from fedprompt.container import (
    load_checkpoint,
    load_embeddings_file,
    save_checkpoint,
    save_embeddings,
)
from fedprompt.diagnostics import (
    GRADCHECK_TOLERANCE,
    composite_grad_check,
    run_selftest,
)
from fedprompt.errors import ContractError, FormatError
from fedprompt.evaluation import evaluate_both_splits
from fedprompt.federation import run_training
from fedprompt.partition import build_client_dataset, partition_classes
from fedprompt.reporting import (
    compare_to_reference,
    dec,
    eval_result_json,
    fixture_results,
    fmt2,
    overall_text,
    summarize,
    summary_csv,
    summary_json,
    comparison_csv,
)
from fedprompt.charts import emit_charts
from fedprompt.translator import init_translator_params, translator_schema
from fedprompt.world import build_world, load_embeddings, world_arrays

# generated from the key registry so this listing cannot drift from
# what the parser accepts
_KEY_LINES = "\n".join(
    f"  {name:<32} {key.default!s:<10} {key.doc}" for name, key in sorted(KEYS.items())
)

USAGE = f"""\
usage: fedprompt <command> [options]

commands:
  make-world   sample a synthetic embedding world and save it
  train        run federated training and checkpoint every round
  eval         score a checkpoint on base and new classes
  report       write the reference comparison tables and charts
  gradcheck    verify analytic gradients against central differences
  selftest     run the built-in correctness probes

config keys (for --config files and --set KEY=VALUE, with defaults):
{_KEY_LINES}

run 'fedprompt <command> --help' for command options
"""


class _Parser(argparse.ArgumentParser):
    """Argparse that reports bad usage as a config error (exit code 1)."""

    def error(self, message):
        raise ContractError(f"{self.prog}: {message}")


def _parser(command: str, description: str) -> _Parser:
    return _Parser(prog=f"fedprompt {command}", description=description)


def _add_config_options(p: _Parser):
    p.add_argument("--config", metavar="PATH", help="key=value config file")
    p.add_argument(
        "--set",
        action="append",
        default=[],
        dest="overrides",
        metavar="KEY=VALUE",
        help="override one config key; repeatable, applied after the file",
    )


def _world_for(cfg, world_path):
    """The experiment's world: loaded from a stored file, or rebuilt."""
    if world_path is None:
        return build_world(cfg.world)
    arrays, _ = load_embeddings_file(world_path)
    return load_embeddings(arrays, cfg.world)


def _cmd_make_world(args) -> int:
    p = _parser("make-world", "Sample the synthetic embedding world and save it.")
    _add_config_options(p)
    p.add_argument("--out", default="world.ftpe", metavar="PATH")
    a = p.parse_args(args)
    cfg = load_config(a.config, a.overrides)
    world = build_world(cfg.world)
    save_embeddings(a.out, world_arrays(world), canonical_text(cfg))
    print(
        f"wrote {a.out}: {cfg.world.n_base} base + {cfg.world.n_new} new classes, "
        f"d={cfg.world.d}, seed={cfg.master_seed}"
    )
    return 0


def _cmd_train(args) -> int:
    p = _parser("train", "Run federated training; checkpoint after every round.")
    _add_config_options(p)
    p.add_argument("--world", metavar="PATH", help="stored world file; default rebuilds from config")
    p.add_argument("--checkpoint", default="model.ftpg", metavar="PATH")
    p.add_argument("--log", default="train_log.jsonl", metavar="PATH")
    a = p.parse_args(args)
    cfg = load_config(a.config, a.overrides)
    world = _world_for(cfg, a.world)
    blocks = partition_classes(
        cfg.world.n_base, cfg.n_clients, cfg.classes_per_client, cfg.master_seed
    )
    datasets = {
        cid: build_client_dataset(world, block, cfg.shots, cfg.master_seed, cid)
        for cid, block in enumerate(blocks)
    }
    init = init_translator_params(cfg.translator, cfg.master_seed)
    echo = canonical_text(cfg)

    with open(a.log, "w", encoding="utf-8") as log_file:

        def on_round(params, log):
            # the marker counts completed rounds, so the final file reads rounds=T
            save_checkpoint(a.checkpoint, params, with_round_marker(echo, log.round + 1))
            log_file.write(log.to_json_line() + "\n")
            log_file.flush()
            loss = float(np.mean(list(log.client_loss.values())))
            print(
                f"round {log.round}: lr={log.lr:.6f} "
                f"clients={len(log.selected)} loss={loss:.4f}"
            )

        run_training(
            world,
            datasets,
            cfg.optimizer,
            cfg.translator,
            init,
            cfg.rounds,
            cfg.local_epochs,
            cfg.fraction,
            cfg.master_seed,
            on_round=on_round,
        )
    print(f"saved {a.checkpoint} after {cfg.rounds} rounds; log in {a.log}")
    return 0


def _cmd_eval(args) -> int:
    p = _parser("eval", "Score a checkpoint on the base and new splits.")
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.add_argument("--world", metavar="PATH", help="stored world file; default rebuilds from config")
    p.add_argument("--out", default="eval.json", metavar="PATH")
    p.add_argument(
        "--set",
        action="append",
        default=[],
        dest="overrides",
        metavar="KEY=VALUE",
        help="override keys from the checkpoint's embedded config",
    )
    a = p.parse_args(args)
    params, echo = load_checkpoint(a.checkpoint)
    values = parse_config_text(echo, source=f"{a.checkpoint} config")
    cfg = build_config(apply_overrides(values, a.overrides))
    expected = tuple(sorted(translator_schema(cfg.translator)))
    if params.schema() != expected:
        raise ContractError(
            f"checkpoint tensors do not match the configured model: "
            f"{params.schema()} vs {expected}"
        )
    world = _world_for(cfg, a.world)
    result = evaluate_both_splits(
        params, world, cfg.translator, cfg.n_test, cfg.optimizer.temperature, cfg.master_seed
    )
    baseline = evaluate_both_splits(
        None, world, cfg.translator, cfg.n_test, cfg.optimizer.temperature, cfg.master_seed
    )
    with open(a.out, "w", encoding="utf-8") as f:
        f.write(eval_result_json(result, baseline))
    completed = extract_round(echo)
    if completed is not None:
        print(f"checkpoint after round {completed}")
    print(
        f"base {fmt2(dec(result.base_acc))}  new {fmt2(dec(result.new_acc))}  "
        f"gap {fmt2(dec(result.gap), signed=True)}"
    )
    print(
        f"zero-context baseline: base {fmt2(dec(baseline.base_acc))}  "
        f"new {fmt2(dec(baseline.new_acc))}"
    )
    print(f"wrote {a.out}")
    return 0


def _cmd_report(args) -> int:
    p = _parser("report", "Write the reference comparison tables and charts.")
    _add_config_options(p)
    p.add_argument("--out-dir", metavar="DIR", help="default: the configured report_dir")
    a = p.parse_args(args)
    cfg = load_config(a.config, a.overrides)
    out_dir = a.out_dir if a.out_dir is not None else cfg.report_dir
    summary = summarize(fixture_results())
    table = compare_to_reference(summary)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, text in [
        ("summary.csv", summary_csv(summary)),
        ("summary.json", summary_json(summary)),
        ("comparison.csv", comparison_csv(table)),
    ]:
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        written.append(path)
    written.extend(emit_charts(summary, out_dir))
    print(overall_text(table))
    print(f"wrote {len(written)} files to {out_dir}")
    return 0


def _cmd_gradcheck(args) -> int:
    p = _parser("gradcheck", "Check analytic gradients against central differences.")
    p.parse_args(args)
    err, n_scalars, elapsed = composite_grad_check()
    print(f"checked {n_scalars} scalars in {elapsed:.2f}s")
    print(f"max relative error {err:.3e} (tolerance {GRADCHECK_TOLERANCE:.0e})")
    if err < GRADCHECK_TOLERANCE:
        print("PASS")
        return 0
    print("FAIL")
    return 1


def _cmd_selftest(args) -> int:
    p = _parser("selftest", "Run the built-in correctness probes.")
    p.parse_args(args)
    results = run_selftest()
    for r in results:
        print(f"{'ok' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    passed = sum(r.passed for r in results)
    print(f"selftest: {passed}/{len(results)} passed")
    return 0 if passed == len(results) else 1


COMMANDS = {
    "make-world": _cmd_make_world,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "report": _cmd_report,
    "gradcheck": _cmd_gradcheck,
    "selftest": _cmd_selftest,
}


def _dispatch(argv) -> int:
    if not argv:
        sys.stderr.write(USAGE)
        return 1
    if argv[0] in ("-h", "--help"):
        sys.stdout.write(USAGE)
        return 0
    if argv[0] not in COMMANDS:
        sys.stderr.write(f"unknown command {argv[0]!r}\n\n{USAGE}")
        return 1
    return COMMANDS[argv[0]](argv[1:])


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        return _dispatch(argv)
    except SystemExit as e:  # argparse --help
        return int(e.code or 0)
    except ContractError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FormatError as e:
        print(f"format error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
