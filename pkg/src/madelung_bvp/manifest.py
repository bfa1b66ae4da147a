"""Output directories, JSON serialization and the run manifest."""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import os
import platform
import sys
from pathlib import Path
from typing import Any

import numpy as np
import scipy

OUT_ENV = "MADELUNG_BVP_OUT"
DEFAULT_OUT = "madelung_bvp_out"


def output_dir(flag: str | None, subcommand: str) -> tuple[Path, str]:
    """--out flag, else $MADELUNG_BVP_OUT, else ./madelung_bvp_out/<subcommand>."""
    if flag:
        return Path(flag), "flag"
    env = os.environ.get(OUT_ENV)
    if env:
        return Path(env), "env"
    return Path(DEFAULT_OUT) / subcommand, "default"


def jsonable(obj: Any) -> Any:
    """Plain JSON types; floats keep Python's shortest round-trip repr, non-finite become strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else repr(f)
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj: Any) -> Path:
    path = Path(path)
    path.write_text(dumps(obj))
    return path


def sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def utc_now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat()


def versions() -> dict:
    from . import __version__, kernels
    return {"artifact": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "kernel_backend": kernels.BACKEND, "platform": sys.platform}


class RunManifest:
    """Collects outputs of one CLI run; ``finalize`` writes manifest.json last."""

    def __init__(self, out: Path, subcommand: str, argv: list[str]):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.subcommand = subcommand
        self.argv = list(argv)
        self.started = utc_now()
        self.files: list[Path] = []
        self.sections: dict[str, Any] = {}

    def path(self, name: str) -> Path:
        p = self.out / name
        self.files.append(p)
        return p

    def json(self, name: str, obj: Any) -> Path:
        return write_json(self.path(name), obj)

    def finalize(self, exit_code: int) -> Path:
        entries = [{"path": p.name, "sha256": sha256(p), "bytes": p.stat().st_size}
                   for p in sorted(set(self.files)) if p.exists()]
        body = {"subcommand": self.subcommand, "argv": self.argv, "exit_code": exit_code,
                "versions": versions(), "timestamps": {"started": self.started, "finished": utc_now()},
                "files": entries, **self.sections}
        return write_json(self.out / "manifest.json", body)
