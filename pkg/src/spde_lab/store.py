"""Append-only run store.

Layout::

    <root>/index.json
    <root>/runs/<id>/manifest.json
    <root>/runs/<id>/series.csv        (ensemble runs)
    <root>/runs/<id>/thresholds.json
    <root>/runs/<id>/report.md

The run id hashes the config hash, seed, code version and artifact hashes,
never the wall clock, so storing identical content twice yields the same id
and leaves the existing directory untouched.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .ensemble import series_from_csv


class IntegrityError(RuntimeError):
    def __init__(self, path, message: str):
        super().__init__(f"{path}: {message}")
        self.path = str(path)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def module_versions() -> dict:
    """Content hash of every source module of the package (first 12 hex digits)."""
    pkg = Path(__file__).resolve().parent
    out = {}
    for src in sorted(pkg.rglob("*.py")):
        out[str(src.relative_to(pkg)).replace(os.sep, "/")] = sha256_bytes(src.read_bytes())[:12]
    return out


def code_version() -> str:
    from . import __version__

    blob = json.dumps(module_versions(), sort_keys=True).encode()
    return f"{__version__}+{sha256_bytes(blob)[:12]}"


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    manifest: dict
    artifacts: dict  # name -> path relative to the run directory
    summary: dict = field(default_factory=dict)


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class RunStore:
    def __init__(self, root):
        self.root = Path(root)
        self.runs = self.root / "runs"
        self.index_path = self.root / "index.json"

    # ------------------------------------------------------------ index

    def _index(self) -> dict:
        if not self.index_path.exists():
            return {"runs": {}}
        return json.loads(self.index_path.read_text(encoding="utf-8"))

    def run_dir(self, run_id: str) -> Path:
        return self.runs / run_id

    # ------------------------------------------------------------ writing

    def store_run(
        self,
        config_hash: str,
        seed: int,
        artifacts: dict,
        summary: Optional[dict] = None,
        extra_manifest: Optional[dict] = None,
    ) -> str:
        """Write ``artifacts`` (name -> str/bytes) as a new run and return its id."""
        blobs = {name: (data.encode() if isinstance(data, str) else bytes(data)) for name, data in artifacts.items()}
        hashes = {name: sha256_bytes(b) for name, b in sorted(blobs.items())}
        version = code_version()
        ident = json.dumps({"config": config_hash, "seed": seed, "code": version, "artifacts": hashes}, sort_keys=True)
        run_id = sha256_bytes(ident.encode())[:16]
        rdir = self.run_dir(run_id)
        if rdir.exists():
            self.load(run_id)  # raises if the existing copy is damaged
            return run_id
        manifest = {
            "run_id": run_id,
            "config_hash": config_hash,
            "seed": seed,
            "code_version": version,
            "module_versions": module_versions(),
            "wall_clock": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "artifacts": hashes,
            "summary": summary or {},
        }
        if extra_manifest:
            manifest.update(extra_manifest)
        tmp = Path(tempfile.mkdtemp(dir=self._ensure_runs(), prefix=f".{run_id}."))
        for name, data in blobs.items():
            (tmp / name).write_bytes(data)
        (tmp / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
        os.replace(tmp, rdir)

        index = self._index()
        index["runs"][run_id] = {"config_hash": config_hash, "seed": seed, "code_version": version}
        _atomic_write(self.index_path, json.dumps(index, indent=2, sort_keys=True).encode())
        return run_id

    def _ensure_runs(self) -> Path:
        self.runs.mkdir(parents=True, exist_ok=True)
        return self.runs

    # ------------------------------------------------------------ reading

    def load(self, run_id: str) -> RunRecord:
        rdir = self.run_dir(run_id)
        mpath = rdir / "manifest.json"
        if not mpath.exists():
            raise IntegrityError(mpath, "manifest missing")
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
        for name, digest in manifest.get("artifacts", {}).items():
            apath = rdir / name
            if not apath.exists():
                raise IntegrityError(apath, "artifact missing")
            if sha256_bytes(apath.read_bytes()) != digest:
                raise IntegrityError(apath, "artifact hash does not match the manifest")
        return RunRecord(run_id, manifest, {n: n for n in manifest.get("artifacts", {})}, manifest.get("summary", {}))

    def find_by_config_hash(self, config_hash: str) -> list[RunRecord]:
        ids = sorted(rid for rid, meta in self._index()["runs"].items() if meta["config_hash"] == config_hash)
        return [self.load(rid) for rid in ids]

    def read_artifact(self, run_id: str, name: str) -> str:
        rec = self.load(run_id)
        if name not in rec.artifacts:
            raise IntegrityError(self.run_dir(run_id) / name, "not an artifact of this run")
        return (self.run_dir(run_id) / name).read_text(encoding="utf-8")

    # ------------------------------------------------------------ comparison

    def diff_runs(self, id_a: str, id_b: str, n_sigma: float = 1.0) -> dict:
        """Per functional: max |estimate_a - estimate_b| and whether it exceeds ``n_sigma`` combined stderrs."""
        a = series_from_csv(self.read_artifact(id_a, "series.csv"))
        b = series_from_csv(self.read_artifact(id_b, "series.csv"))
        return diff_series(a, b, n_sigma)


@dataclass(frozen=True)
class DiffRow:
    max_deviation: float
    combined_stderr: float  # at the point of maximal deviation
    worst_z: float
    flagged: bool


def diff_series(a: dict, b: dict, n_sigma: float = 1.0) -> dict:
    out = {}
    for name in sorted(set(a) & set(b)):
        ta, ea, sa = a[name]
        tb, eb, sb = b[name]
        if len(ta) != len(tb) or not np.allclose(ta, tb, rtol=0, atol=1e-12):
            raise ValueError(f"series {name!r} are on different time grids")
        dev = np.abs(ea - eb)
        comb = np.sqrt(np.nan_to_num(sa) ** 2 + np.nan_to_num(sb) ** 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(comb > 0, dev / comb, np.where(dev > 0, np.inf, 0.0))
        i = int(np.argmax(dev)) if len(dev) else 0
        out[name] = DiffRow(
            float(dev[i]) if len(dev) else 0.0,
            float(comb[i]) if len(dev) else 0.0,
            float(np.max(z)) if len(z) else 0.0,
            bool(np.any(z > n_sigma)),
        )
    return out
