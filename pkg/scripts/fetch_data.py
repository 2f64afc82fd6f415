#!/usr/bin/env python3
"""Fetch the Adult and COMPAS raw files and write the prepared recipe tables.

Raw files land in ``data/raw`` and prepared tables (one column per schema
block) in ``data/prepared``.  Sources are tried in order:

1. files already present in ``data/raw``;
2. a local wheel of the ``responsibly`` package (``--wheel``), which bundles
   both datasets, or one fetched with ``pip download`` (``--pip``);
3. the original download URLs.

Usage::

    python scripts/fetch_data.py            # URLs
    python scripts/fetch_data.py --pip      # via the package index
    python scripts/fetch_data.py --wheel responsibly-0.1.2-py3-none-any.whl
"""

from __future__ import annotations

import argparse
import hashlib
import subprocess
import sys
import tempfile
import urllib.request
import zipfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent

FILES = {
    "adult.data": (
        "https://archive.ics.uci.edu/ml/machine-learning-databases/adult/adult.data",
        "responsibly/dataset/adult/adult.data",
    ),
    "adult.test": (
        "https://archive.ics.uci.edu/ml/machine-learning-databases/adult/adult.test",
        "responsibly/dataset/adult/adult.test",
    ),
    "compas-scores-two-years.csv": (
        "https://raw.githubusercontent.com/propublica/compas-analysis/master/compas-scores-two-years.csv",
        "responsibly/dataset/compas/compas-scores-two-years.csv",
    ),
}


def from_wheel(wheel: Path, raw: Path) -> None:
    with zipfile.ZipFile(wheel) as zf:
        for name, (_, member) in FILES.items():
            if not (raw / name).exists():
                (raw / name).write_bytes(zf.read(member))


def pip_wheel(dest: Path) -> Path:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "--only-binary=:all:",
         "-d", str(dest), "responsibly==0.1.2"],
        check=True,
    )
    return next(dest.glob("responsibly-*.whl"))


def from_urls(raw: Path) -> None:
    for name, (url, _) in FILES.items():
        target = raw / name
        if not target.exists():
            print(f"downloading {url}")
            with urllib.request.urlopen(url, timeout=60) as resp:
                target.write_bytes(resp.read())


def prepare(raw: Path, prepared: Path) -> None:
    sys.path.insert(0, str(ROOT / "src"))
    from maxent_debias.datasets import prepare_adult, prepare_compas_small

    prepared.mkdir(parents=True, exist_ok=True)
    adult = prepare_adult(raw / "adult.data", raw / "adult.test")
    adult.to_csv(prepared / "adult.csv", index=False, lineterminator="\n")
    compas = prepare_compas_small(raw / "compas-scores-two-years.csv")
    compas.to_csv(prepared / "compas_small.csv", index=False, lineterminator="\n")
    print(f"prepared adult ({len(adult)} rows) and compas_small ({len(compas)} rows) in {prepared}")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--dest", type=Path, default=ROOT / "data", help="data directory (default: <repo>/data)")
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--wheel", type=Path, help="local responsibly wheel to extract from")
    src.add_argument("--pip", action="store_true", help="obtain the responsibly wheel with pip download")
    args = ap.parse_args()

    raw = args.dest / "raw"
    raw.mkdir(parents=True, exist_ok=True)
    if not all((raw / n).exists() for n in FILES):
        if args.wheel:
            from_wheel(args.wheel, raw)
        elif args.pip:
            with tempfile.TemporaryDirectory() as tmp:
                from_wheel(pip_wheel(Path(tmp)), raw)
        else:
            from_urls(raw)
    for name in FILES:
        digest = hashlib.sha256((raw / name).read_bytes()).hexdigest()
        print(f"{name}  sha256={digest}")
    prepare(raw, args.dest / "prepared")
    return 0


if __name__ == "__main__":
    sys.exit(main())
