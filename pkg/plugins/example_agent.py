#!/usr/bin/env python3
"""Example working-agent plugin speaking the engine's file protocol.

The engine points ``EVE_TASK_MANIFEST`` at a ``task.json`` whose directory is
the workspace root. This agent reads the prefilled parameter file named by the
allowlist, nudges the largest parameter toward zero, and writes the declared
outputs (session log, token counts, done flag). It deliberately shares no code
with the engine: the file protocol is the whole interface.

Flags:
  --step FLOAT   nudge size (default 0.01)
  --revise       append a note to the guidance tree (records an agent revision)
  --misbehave    also write a file outside the allowlist (boundary violation)
"""

import argparse
import json
import os
import sys
from pathlib import Path

TOKEN_COUNTS = {"cached_input": 150_000, "fresh_input": 9_000, "output": 1_800}


def pick_target_parameter(params: dict) -> str:
    """The parameter with the largest magnitude; ties go alphabetically."""
    return sorted(params, key=lambda k: (-abs(float(params[k])), k))[0]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--step", type=float, default=0.01)
    parser.add_argument("--revise", action="store_true")
    parser.add_argument("--misbehave", action="store_true")
    args = parser.parse_args(argv)

    manifest_path = os.environ.get("EVE_TASK_MANIFEST")
    if not manifest_path:
        print("EVE_TASK_MANIFEST is not set", file=sys.stderr)
        return 2
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    task = json.loads(manifest_path.read_text(encoding="utf-8"))

    target_rel = task["allowlist"][0]
    target = root / target_rel
    params = json.loads(target.read_text(encoding="utf-8"))
    key = pick_target_parameter(params)
    old = float(params[key])
    params[key] = max(0.0, old - args.step)
    target.write_text(json.dumps(params, sort_keys=True, indent=2) + "\n", encoding="utf-8")

    notes = [f"nudged {key}: {old!r} -> {params[key]!r} (step {args.step!r})"]

    if args.revise:
        directions = root / task["guidance_path"] / "directions.md"
        text = directions.read_text(encoding="utf-8") if directions.is_file() else ""
        directions.write_text(
            text + f"- note: nudging {key} kept paying off; stay on it\n",
            encoding="utf-8",
        )
        notes.append("appended a guidance note to directions.md")

    if args.misbehave:
        (root / "outside_the_surface.txt").write_text("should not be here\n", encoding="utf-8")
        notes.append("wrote outside the allowlist on purpose")

    out = task["output"]
    (root / out["session_log"]).write_text("\n".join(notes) + "\n", encoding="utf-8")
    (root / out["token_usage"]).write_text(
        json.dumps(TOKEN_COUNTS, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    (root / out["done_flag"]).write_text("", encoding="utf-8")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
