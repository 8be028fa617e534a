#!/usr/bin/env python3
"""Example evaluator plugin emitting ``score.json``.

Invoked as ``example_evaluator.py <solver_dir>`` with a scratch working
directory. The solver is a parameter file somewhere under the snapshot; the
error is a quadratic bowl (sum of squared parameters), synthesized into ten
per-example-count errors whose mean is the headline metric. Exit 0 means the
candidate was scored; any defect in the snapshot exits nonzero so the engine
marks the solver invalid. No code is shared with the engine.
"""

import json
import sys
from pathlib import Path

PARAMS_FILE_NAME = "params.json"


def quadratic_bowl(params: dict) -> float:
    return sum(float(v) ** 2 for v in params.values())


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: example_evaluator.py <solver_dir>", file=sys.stderr)
        return 1
    solver_dir = Path(argv[0])
    candidates = sorted(solver_dir.rglob(PARAMS_FILE_NAME))
    if not candidates:
        print(f"no {PARAMS_FILE_NAME} under {solver_dir}", file=sys.stderr)
        return 2
    try:
        params = json.loads(candidates[0].read_text(encoding="utf-8"))
        error_mean = quadratic_bowl(params)
    except (ValueError, TypeError) as exc:
        print(f"malformed solver parameters: {exc}", file=sys.stderr)
        return 2

    per_metric = {f"e_{k}": error_mean for k in range(1, 11)}
    per_metric["mean_d1_d4"] = error_mean
    payload = {
        "error_mean": error_mean,
        "per_metric": per_metric,
        "log": f"quadratic bowl over {sorted(params)} -> {error_mean!r}",
        "tag": "QuadraticBowl",
    }
    Path("score.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
