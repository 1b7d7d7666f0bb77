"""Regenerate the expected analyze reports of the shipped corpus.

    python3 scripts/regenerate_fixtures.py [--check]

With ``--check`` nothing is written; the script exits 1 when a fixture is
stale.
"""

import argparse
import json
import sys
from pathlib import Path

from cqa import cli
from cqa import report as rp

ROOT = Path(__file__).resolve().parents[1]
CORPUS = ROOT / "corpus"

# document -> (point, extra CLI flags)
CASES = {
    "example71.json": ("origin", ["--truncate", "6"]),
    "example72.json": ("origin", ["--truncate", "6"]),
    "circle.json": ("p", []),
    "affine.json": ("p", []),
    "dependence.json": ("p", []),
    "unconstrained.json": ("p", []),
}


def fixture_path(name):
    return CORPUS / "expected" / name.replace(".json", ".report.json")


def build(name):
    point, extra = CASES[name]
    args = cli.build_parser().parse_args(["analyze", str(CORPUS / name), "--point", point, "--seed", "42", *extra])
    doc = cli._load(args.file)
    return cli.run_analyze(doc, cli.analyze_params(doc, args))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--check", action="store_true")
    args = ap.parse_args(argv)
    stale = 0
    for name in CASES:
        report = build(name)
        path = fixture_path(name)
        if args.check:
            same = path.exists() and rp.digest(json.loads(path.read_text())) == rp.digest(report)
            stale += not same
            print(f"{name:22s} {'ok' if same else 'STALE'}")
        else:
            path.parent.mkdir(exist_ok=True)
            rp.write_atomic(path, rp.dumps(report))
            print(f"{name:22s} -> {path.relative_to(ROOT)}  sha256={rp.digest(report)[:16]}")
    return 1 if stale else 0


if __name__ == "__main__":
    sys.exit(main())
